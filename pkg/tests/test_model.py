import numpy as np
import pytest
from sklearn.base import clone

from commrep import autodiff as ad
from commrep import model as cm
from commrep.datasets import TrainingSet
from commrep.errors import ConfigurationError
from commrep.nn import DenseNetwork, Layer, Parameter
from commrep.rng import seeded_rng, split_streams

from helpers import assert_grads_close, finite_difference_grads


def _linear_encoder(w, name="enc"):
    w = np.asarray(w, dtype=float)
    return DenseNetwork([Layer(Parameter(f"{name}.W", w),
                               Parameter(f"{name}.b", np.zeros(w.shape[1])), "linear")],
                        name=name)


def _toy_model(rng, obs_dims=(3,), latents=(2,), q_dims=(1,), a_dims=(1,),
               enc_hidden=(6,), dec_hidden=(6,), filter_init=-2.0):
    return cm.build_model(obs_dims, latents, q_dims, a_dims, enc_hidden,
                          dec_hidden, rng, filter_init)


def test_encode_identity_like():
    enc = _linear_encoder(np.eye(3))
    bank = cm.EncoderBank([enc])
    tape = ad.Tape()
    obs = np.array([[0.1, -2.0, 3.0]])
    mu = cm.encode(tape, bank, obs)
    assert np.allclose(mu.value, obs)


def test_encode_two_encoders_ordering():
    e1 = _linear_encoder(np.array([[1.0, 0.0], [0.0, 1.0]]), "e1")   # 2 -> 2
    e2 = _linear_encoder(np.array([[2.0]]), "e2")                     # 1 -> 1
    bank = cm.EncoderBank([e1, e2])
    tape = ad.Tape()
    mu = cm.encode(tape, bank, np.array([[5.0, 6.0, 7.0]]))
    assert mu.value.shape == (1, 3)
    assert np.allclose(mu.value, [[5.0, 6.0, 14.0]])


def test_encode_matches_recomputation():
    rng = seeded_rng(0)
    model = _toy_model(rng, obs_dims=(2, 2), latents=(2, 1))
    tape = ad.Tape()
    obs = rng.standard_normal((4, 4))
    mu = cm.encode(tape, model.encoders, obs)
    manual = np.concatenate([
        model.encoders.networks[0].forward_plain(obs[:, :2]),
        model.encoders.networks[1].forward_plain(obs[:, 2:]),
    ], axis=1)
    assert np.max(np.abs(mu.value - manual)) < 1e-12


def test_encode_rejects_wrong_width():
    model = _toy_model(seeded_rng(0))
    with pytest.raises(ConfigurationError):
        cm.encode(ad.Tape(), model.encoders, np.zeros((1, 5)))


def test_filtered_latent_fully_transmitting():
    model = _toy_model(seeded_rng(1), filter_init=-30.0)
    tape = ad.Tape()
    mu = np.array([[0.4, -0.7]])
    z = cm.filtered_latent(tape, model.filters, 0, mu, seeded_rng(2))
    assert np.max(np.abs(z.value - mu)) < 1e-12


def test_filtered_latent_noise_scale():
    model = _toy_model(seeded_rng(1))
    model.filters.log_sigma[0].value = np.array([5.0, -30.0])
    rng = seeded_rng(3)
    tape = ad.Tape()
    z = cm.filtered_latent(tape, model.filters, 0, np.zeros((10000, 2)), rng)
    assert abs(z.value[:, 0].std() - np.exp(5.0)) < 0.05 * np.exp(5.0)
    assert np.max(np.abs(z.value[:, 1])) < 1e-12


def test_filtered_latent_gradient_matches_fd():
    model = _toy_model(seeded_rng(4))
    ls = model.filters.log_sigma[0]
    mu = seeded_rng(5).standard_normal((6, 2))

    def loss_fn():
        tape = ad.Tape()
        z = cm.filtered_latent(tape, model.filters, 0, mu, seeded_rng(7))
        return float(ad.mean(tape, ad.mul(tape, z, z)).value)

    tape = ad.Tape()
    z = cm.filtered_latent(tape, model.filters, 0, mu, seeded_rng(7))
    loss = ad.mean(tape, ad.mul(tape, z, z))
    analytic = ad.backward(tape, loss)
    numeric = finite_difference_grads(loss_fn, [ls])
    assert_grads_close(analytic, numeric, rel=1e-4)


def test_answer_zero_weight_decoder_returns_bias():
    dec = DenseNetwork([Layer(Parameter("W", np.zeros((3, 2))),
                              Parameter("b", np.array([1.5, -2.5])), "linear")])
    bank = cm.DecoderBank([dec], (1,), (2,))
    tape = ad.Tape()
    out = cm.answer(tape, bank, 0, np.zeros((4, 2)), np.ones((4, 1)))
    assert np.allclose(out.value, [[1.5, -2.5]] * 4)


def test_answer_constant_question():
    rng = seeded_rng(8)
    model = _toy_model(rng, q_dims=(0,), a_dims=(2,))
    tape = ad.Tape()
    z = rng.standard_normal((3, 2))
    out = cm.answer(tape, model.decoders, 0, z, np.zeros((3, 0)))
    assert np.allclose(out.value, model.decoders.networks[0].forward_plain(z), atol=1e-12)


def test_prediction_loss_cases():
    tape = ad.Tape()
    a = np.array([[1.0, 1.0]])
    assert float(cm.prediction_loss(tape, ad.leaf(tape, Parameter("x", a)), a).value) == 0.0
    tape = ad.Tape()
    node = ad.leaf(tape, Parameter("x", a))
    loss = cm.prediction_loss(tape, node, np.zeros((1, 2)))
    assert float(loss.value) == pytest.approx(1.0)
    # batch averaging: per-sample component means 0 and 2 average to 1
    tape = ad.Tape()
    node = ad.leaf(tape, Parameter("x", np.array([[0.0], [2.0]])))
    loss = cm.prediction_loss(tape, node, np.array([[0.0], [np.sqrt(2.0) + 2.0 - np.sqrt(2.0) - 2.0]]))
    # simpler: predictions (0, 2) against targets (0, 0) -> squared errors 0 and 4 -> mean 2
    assert float(loss.value) == pytest.approx(2.0)


def test_prediction_loss_masked():
    tape = ad.Tape()
    pred = ad.leaf(tape, Parameter("p", np.array([[1.0, 5.0], [3.0, 7.0]])))
    target = np.zeros((2, 2))
    mask = np.array([[1.0, 0.0], [1.0, 0.0]])
    loss = cm.prediction_loss(tape, pred, target, mask)
    assert float(loss.value) == pytest.approx((1.0 + 9.0) / 2.0)


def test_communication_loss_values_and_gradient():
    model = _toy_model(seeded_rng(9), q_dims=(1, 1), a_dims=(1, 1))
    for p in model.filters.log_sigma:
        p.value = np.zeros(2)
    tape = ad.Tape()
    assert float(cm.communication_loss(tape, model.filters).value) == 0.0
    for p in model.filters.log_sigma:
        p.value = np.ones(2)
    tape = ad.Tape()
    loss = cm.communication_loss(tape, model.filters)
    assert float(loss.value) == pytest.approx(-4.0)
    grads = ad.backward(tape, ad.total(tape, loss))
    for p in model.filters.log_sigma:
        assert np.allclose(grads[p], -1.0)


def _toy_batch(model, rng, n=8):
    obs = rng.standard_normal((n, sum(model.encoders.input_dims)))
    questions = [rng.standard_normal((n, q)) for q in model.decoders.question_dims]
    targets = [rng.standard_normal((n, a)) for a in model.decoders.answer_dims]
    return obs, questions, targets


def test_total_loss_reduces_to_regression_when_comm_weight_zero():
    rng = seeded_rng(10)
    model = _toy_model(rng, q_dims=(1, 2), a_dims=(1, 1), filter_init=-30.0)
    obs, questions, targets = _toy_batch(model, rng)
    weights = cm.LossWeights(1.0, 0.0)
    tape = ad.Tape()
    loss, per_decoder, _ = cm.total_loss(tape, model, obs, questions, targets, None,
                                         weights, 0.0, seeded_rng(1))
    plain = cm.predict_plain(model, obs, questions)
    expected = sum(np.mean((p - t) ** 2) for p, t in zip(plain, targets))
    assert float(loss.value) == pytest.approx(expected, abs=1e-9)


def test_total_loss_zero_noise_equivalence():
    rng = seeded_rng(11)
    model = _toy_model(rng, q_dims=(1, 2), a_dims=(1, 1), filter_init=-30.0)
    k, l = 2, 2
    obs, questions, targets = _toy_batch(model, rng)
    weights = cm.LossWeights(1.0, 0.7)
    tape = ad.Tape()
    loss, _, comm = cm.total_loss(tape, model, obs, questions, targets, None,
                                  weights, 0.7, seeded_rng(1))
    assert comm == pytest.approx(30.0 * k * l)
    plain = cm.predict_plain(model, obs, questions)
    expected = sum(np.mean((p - t) ** 2) for p, t in zip(plain, targets))
    assert float(loss.value) == pytest.approx(expected + 0.7 * 30.0 * k * l, abs=1e-9)


def test_total_loss_pure_comm_drives_log_sigma_up():
    from commrep.optim import AdamState, adam_step
    rng = seeded_rng(12)
    model = _toy_model(rng)
    obs, questions, targets = _toy_batch(model, rng)
    weights = cm.LossWeights(0.0, 1.0)
    state = AdamState()
    filters = model.filters.parameters()
    previous = model.filters.matrix.copy()
    for step in range(5):
        tape = ad.Tape()
        mu = cm.encode(tape, model.encoders, obs)  # irrelevant under w_pred = 0
        loss = ad.scale(tape, cm.communication_loss(tape, model.filters), 1.0)
        grads = ad.backward(tape, loss, params=filters)
        adam_step(state, filters, grads)
        current = model.filters.matrix
        assert np.all(current > previous)
        previous = current.copy()


def test_total_loss_gradients_match_finite_differences():
    rng = seeded_rng(13)
    model = _toy_model(rng, obs_dims=(3,), latents=(4,), q_dims=(1, 1), a_dims=(1, 2),
                       enc_hidden=(5,), dec_hidden=(4,))
    obs, questions, targets = _toy_batch(model, rng, n=5)
    weights = cm.LossWeights(1.0, 0.3)

    def loss_fn():
        tape = ad.Tape()
        loss, _, _ = cm.total_loss(tape, model, obs, questions, targets, None,
                                   weights, 0.3, seeded_rng(99))
        return float(loss.value)

    tape = ad.Tape()
    loss, _, _ = cm.total_loss(tape, model, obs, questions, targets, None,
                               weights, 0.3, seeded_rng(99))
    analytic = ad.backward(tape, loss, params=model.parameters())
    numeric = finite_difference_grads(loss_fn, model.parameters())
    assert_grads_close(analytic, numeric, rel=1e-4)


def test_filter_values_are_sample_independent():
    rng = seeded_rng(14)
    model = _toy_model(rng)
    obs1, q1, t1 = _toy_batch(model, rng)
    obs2, q2, t2 = _toy_batch(model, rng)
    tape = ad.Tape()
    c1 = float(cm.communication_loss(tape, model.filters).value)
    tape = ad.Tape()
    c2 = float(cm.communication_loss(tape, model.filters).value)
    assert c1 == c2
    for p in model.filters.log_sigma:
        assert p.value.shape == (model.encoders.total_latent,)


def test_monotone_blocking():
    # more noise on a latent never shrinks that latent's contribution to the
    # spread of the prediction loss (over noise resamples, frozen networks)
    rng = seeded_rng(15)
    model = _toy_model(rng, q_dims=(1,), a_dims=(1,), filter_init=-30.0)
    obs, questions, targets = _toy_batch(model, rng, n=50)

    def loss_variance(log_sigma_value, n_resamples=1000):
        model.filters.log_sigma[0].value = np.array([log_sigma_value, -30.0])
        noise = seeded_rng(1234)
        vals = np.empty(n_resamples)
        for r in range(n_resamples):
            tape = ad.Tape()
            mu = cm.encode(tape, model.encoders, obs)
            z = cm.filtered_latent(tape, model.filters, 0, mu, noise)
            a = cm.answer(tape, model.decoders, 0, z, questions[0])
            vals[r] = float(cm.prediction_loss(tape, a, targets[0]).value)
        var = vals.var()
        return var, var * np.sqrt(2.0 / n_resamples)

    lo_var, lo_se = loss_variance(-1.0)
    hi_var, hi_se = loss_variance(1.0)
    assert hi_var >= lo_var - 2.0 * (lo_se + hi_se)


def test_multi_encoder_locality():
    rng = seeded_rng(16)
    model = _toy_model(rng, obs_dims=(2, 2), latents=(2, 2), q_dims=(1,), a_dims=(1,))
    # block all of encoder 2's latents, transmit encoder 1's
    model.filters.log_sigma[0].value = np.array([-30.0, -30.0, 30.0, 30.0])
    enc1_params = model.encoders.networks[0].parameters()

    def grads_for(x2_fill):
        obs = np.concatenate([np.full((6, 2), 0.3), np.full((6, 2), x2_fill)], axis=1)
        questions = [np.full((6, 1), 0.1)]
        targets = [np.full((6, 1), 0.5)]
        tape = ad.Tape()
        loss, _, _ = cm.total_loss(tape, model, obs, questions, targets, None,
                                   cm.LossWeights(1.0, 0.0), 0.0, seeded_rng(77))
        return ad.backward(tape, loss, params=enc1_params)

    g_a = grads_for(0.0)
    g_b = grads_for(5.0)
    for p in enc1_params:
        assert np.max(np.abs(g_a[p] - g_b[p])) < 1e-9


def test_transmitted_set_thresholding():
    record = cm.TransmittanceRecord(0, np.array([[2.0, 2.0, 2.0],
                                                 [-3.0, 1.0, -0.5]]), np.ones(3))
    assert cm.transmitted_set(record, 0) == set()
    assert cm.transmitted_set(record, 1) == {0, 2}


def test_latent_scan_constant_and_identity():
    const_enc = _linear_encoder(np.zeros((1, 1)))
    model = cm.CommModel(cm.EncoderBank([const_enc]), cm.FilterBank.build(1, 1),
                         cm.DecoderBank([_linear_encoder(np.eye(1), "d")], (0,), (1,)))
    grid = {"x": np.linspace(-1, 1, 7)}
    gen = lambda g: g["x"][:, None]
    scan = cm.latent_scan(lambda obs: cm.encode_plain(model, obs), grid, gen)
    assert np.allclose(scan["mu"], 0.0)

    ident = _linear_encoder(np.eye(1))
    model2 = cm.CommModel(cm.EncoderBank([ident]), cm.FilterBank.build(1, 1),
                          cm.DecoderBank([_linear_encoder(np.eye(1), "d")], (0,), (1,)))
    scan2 = cm.latent_scan(lambda obs: cm.encode_plain(model2, obs), grid, gen)
    assert np.all(np.diff(scan2["mu"][:, 0]) > 0)


# ---------------------------------------------------------------------------
# training behaviour


def _linear_target_dataset(n, rng):
    x = rng.uniform(-1.0, 1.0, size=(n, 1))
    return TrainingSet(x, [np.zeros((n, 0))], [2.0 * x], (1,))


def test_train_converges_on_linear_target():
    rng = seeded_rng(17)
    ds = _linear_target_dataset(2000, rng)
    est = cm.CommunicationNet(observation_dims=(1,), question_dims=(0,),
                              answer_dims=(1,), latent_dims=(1,),
                              encoder_hidden=(8,), decoder_hidden=(8,),
                              comm_weight=1e-4, n_steps=5000, batch_size=64,
                              eval_interval=1000, random_state=0)
    est.fit_dataset(ds)
    pred = est.predict_decoder(0, ds.observations)
    mse = float(np.mean((pred - ds.answers[0]) ** 2))
    assert mse < 1e-4


def test_train_blocks_irrelevant_latent():
    rng = seeded_rng(18)
    n = 4000
    obs = rng.uniform(-1.0, 1.0, size=(n, 2))
    target = obs[:, :1]  # brute-force check below: depends on column 0 only
    assert np.std(target - obs[:, :1]) == 0.0
    perturbed = target.copy()
    ds = TrainingSet(obs, [np.zeros((n, 0))], [target], (2,))
    est = cm.CommunicationNet(observation_dims=(2,), question_dims=(0,),
                              answer_dims=(1,), latent_dims=(2,),
                              encoder_hidden=(16,), decoder_hidden=(16,),
                              comm_weight=5e-3, n_steps=8000, batch_size=128,
                              eval_interval=1000, random_state=1)
    est.fit_dataset(ds)
    sets = est.transmitted_sets()
    assert len(sets[0]) == 1
    record = est.history_.final_record
    t = record.t[0]
    assert (t < 0).sum() == 1 and (t > 0).sum() == 1


def test_train_deterministic():
    rng = seeded_rng(19)
    ds = _linear_target_dataset(500, rng)

    def run():
        est = cm.CommunicationNet(observation_dims=(1,), question_dims=(0,),
                                  answer_dims=(1,), latent_dims=(1,),
                                  encoder_hidden=(8,), decoder_hidden=(8,),
                                  n_steps=500, batch_size=32, eval_interval=100,
                                  random_state=7)
        est.fit_dataset(ds)
        return est.history_.losses[-1]["total_loss"]

    assert run() == run()


def test_estimator_fit_xy_and_sklearn_protocol():
    rng = seeded_rng(20)
    n = 300
    obs = rng.uniform(-1, 1, size=(n, 2))
    q = rng.uniform(-1, 1, size=(n, 1))
    y = (obs[:, :1] + q)
    X = np.concatenate([obs, q], axis=1)
    est = cm.CommunicationNet(observation_dims=(2,), question_dims=(1,),
                              answer_dims=(1,), latent_dims=(2,),
                              encoder_hidden=(8,), decoder_hidden=(8,),
                              n_steps=300, batch_size=32, eval_interval=100,
                              random_state=3)
    cloned = clone(est)  # parameters survive sklearn cloning
    assert cloned.get_params() == est.get_params()
    est.fit(X, y)
    mu = est.transform(X)
    assert mu.shape == (n, 2)
    assert np.array_equal(est.transform(obs), mu)
    pred = est.predict(X)
    assert pred.shape == (n, 1)


def test_estimator_rejects_mismatched_dataset():
    ds = _linear_target_dataset(50, seeded_rng(21))
    est = cm.CommunicationNet(observation_dims=(2,), question_dims=(0,),
                              answer_dims=(1,), latent_dims=(1,))
    with pytest.raises(ConfigurationError):
        est.fit_dataset(ds)


def test_reconstruction_decoder_flag():
    rng = seeded_rng(22)
    ds = _linear_target_dataset(400, rng)
    est = cm.CommunicationNet(observation_dims=(1,), question_dims=(0,),
                              answer_dims=(1,), latent_dims=(1,),
                              encoder_hidden=(8,), decoder_hidden=(8,),
                              reconstruction_weight=0.5, n_steps=300,
                              batch_size=32, eval_interval=100, random_state=5)
    est.fit_dataset(ds)
    # the extra head exists internally but is not part of the public answers
    assert est.model_.n_decoders == 2
    assert est.predict(ds.observations).shape == (400, 1)
    assert len(est.transmitted_sets()) == 1
    assert len(est.transmitted_sets(include_reconstruction=True)) == 2
