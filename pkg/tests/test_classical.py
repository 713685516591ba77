import math

import numpy as np
import pytest

from commrep.classical import (
    ExperimentConstants,
    ParameterRanges,
    ParticlePairSystem,
    ballistic_landing_distance,
    collision_reference_series,
    coulomb_k_eff,
    coulomb_reference_series,
    coulomb_shot_angle,
    coulomb_shot_v0,
    elastic_collision_velocity,
    lob_shot_angle,
    observation_batch,
    sample_dataset,
    shot_orbit_min_miss,
    _coulomb_series_batch,
)
from commrep.errors import ConfigurationError, DataGenerationError
from commrep.rng import seeded_rng

CONSTS = ExperimentConstants()


def test_elastic_equal_masses_full_transfer():
    assert elastic_collision_velocity(2.0, 3.0, 2.0) == pytest.approx(3.0)


def test_elastic_immovable_wall():
    assert elastic_collision_velocity(1.0, 1.0, 1e9) < 1e-8


def test_elastic_conservation_laws():
    m_in, v_in, m_t = 1.0, 2.0, 3.0
    v_t = elastic_collision_velocity(m_in, v_in, m_t)
    assert v_t == pytest.approx(1.0)
    # recover the incoming particle's final velocity from momentum conservation
    v_in_after = v_in - (m_t / m_in) * v_t
    p_before = m_in * v_in
    p_after = m_in * v_in_after + m_t * v_t
    ke_before = 0.5 * m_in * v_in ** 2
    ke_after = 0.5 * m_in * v_in_after ** 2 + 0.5 * m_t * v_t ** 2
    assert p_after == pytest.approx(p_before, abs=1e-12)
    assert ke_after == pytest.approx(ke_before, abs=1e-12)


def test_collision_series_is_linear():
    sys = ParticlePairSystem(3.3, 7.1, 0.4, 0.6)
    xs = collision_reference_series(sys, CONSTS, 0)
    assert np.allclose(np.diff(xs, n=2), 0.0, atol=1e-14)


def test_collision_series_monotone_in_mass():
    light = collision_reference_series(ParticlePairSystem(2.0, 1.0, 0.5, 0.5), CONSTS, 0)
    heavy = collision_reference_series(ParticlePairSystem(4.0, 1.0, 0.5, 0.5), CONSTS, 0)
    assert np.all(heavy < light)


def test_collision_series_hand_values():
    consts = ExperimentConstants(dt=1.0)
    sys = ParticlePairSystem(5.0, 1.0, 0.5, 0.5)
    xs = collision_reference_series(sys, consts, 0)
    assert np.allclose(xs, np.arange(1, 11) / 3.0)


def test_coulomb_series_zero_charge_stays_put():
    sys = ParticlePairSystem(2.0, 2.0, 0.0, 0.5)
    xs = coulomb_reference_series(sys, CONSTS, 0)
    assert np.allclose(xs, 0.0)


def test_coulomb_series_repulsion_monotone():
    sys = ParticlePairSystem(2.0, 2.0, 0.8, 0.5)
    xs = coulomb_reference_series(sys, CONSTS, 0)
    # the particle is pushed away from the reference charge placed at +d0
    assert np.all(np.diff(xs) < 0)


def test_coulomb_series_step_halving_converges():
    sys = ParticlePairSystem(1.5, 1.0, 1.0, 0.5)
    coarse = coulomb_reference_series(sys, CONSTS, 0, substeps=16)
    fine = coulomb_reference_series(sys, CONSTS, 0, substeps=32)
    rel = np.max(np.abs(coarse - fine) / np.maximum(np.abs(fine), 1e-12))
    assert rel < 1e-6


def test_coulomb_series_rk4_order():
    sys = ParticlePairSystem(1.5, 1.0, 1.0, 0.5)
    ref = coulomb_reference_series(sys, CONSTS, 0, substeps=512)
    e1 = np.max(np.abs(coulomb_reference_series(sys, CONSTS, 0, substeps=4) - ref))
    e2 = np.max(np.abs(coulomb_reference_series(sys, CONSTS, 0, substeps=8) - ref))
    order = math.log2(e1 / e2)
    assert order >= 3.5


def test_coulomb_series_attractive_collapse_rejected():
    consts = ExperimentConstants(dt=0.3)
    series, ok = _coulomb_series_batch(np.array([1.0]), np.array([-1.0]), consts)
    assert not ok[0]
    sys = ParticlePairSystem(1.0, 1.0, -1.0, 0.5)
    with pytest.raises(DataGenerationError):
        coulomb_reference_series(sys, consts, 0)


def test_lob_shot_minimum_speed_gives_pi_over_4():
    sys = ParticlePairSystem(1.0, 1.0, 0.5, 0.5)
    v = math.sqrt(CONSTS.g * CONSTS.d_hole)  # equal masses: v_after == v
    assert lob_shot_angle(sys, CONSTS, 0, v) == pytest.approx(math.pi / 4)


def test_lob_shot_double_energy_gives_pi_over_12():
    sys = ParticlePairSystem(1.0, 1.0, 0.5, 0.5)
    v = math.sqrt(2.0 * CONSTS.g * CONSTS.d_hole)
    assert lob_shot_angle(sys, CONSTS, 0, v) == pytest.approx(math.pi / 12)


def test_lob_shot_too_slow_rejected():
    sys = ParticlePairSystem(1.0, 1.0, 0.5, 0.5)
    with pytest.raises(DataGenerationError):
        lob_shot_angle(sys, CONSTS, 0, 0.5 * math.sqrt(CONSTS.g * CONSTS.d_hole))


def test_lob_shot_ballistic_oracle():
    rng = seeded_rng(21)
    for _ in range(100):
        m = rng.uniform(1.0, 10.0)
        sys = ParticlePairSystem(m, 1.0, 0.5, 0.5)
        alpha_target = rng.uniform(0.05, math.pi / 4)
        v_after = math.sqrt(CONSTS.g * CONSTS.d_hole / math.sin(2 * alpha_target))
        v = v_after * (CONSTS.m_fix + m) / (2 * CONSTS.m_fix)
        alpha = lob_shot_angle(sys, CONSTS, 0, v)
        landing = ballistic_landing_distance(CONSTS, v_after, alpha)
        assert abs(landing - CONSTS.d_hole) < 1e-3 * CONSTS.d_hole


def test_coulomb_shot_algebraic_identity():
    rng = seeded_rng(3)
    for _ in range(100):
        k = rng.uniform(0.01, 2.0)
        phi = rng.uniform(0.01, math.pi / 4)
        v0 = coulomb_shot_v0(CONSTS, k, phi)
        lhs = v0 ** 2 * math.cos(phi) * math.sin(phi)
        assert lhs == pytest.approx((math.sqrt(2) - 1) * k / CONSTS.d0, rel=1e-12)


def test_coulomb_shot_speed_minimized_at_pi_over_4():
    k = 0.7
    v_min = coulomb_shot_v0(CONSTS, k, math.pi / 4)
    for phi in np.linspace(0.05, math.pi / 4 - 1e-6, 25):
        assert coulomb_shot_v0(CONSTS, k, phi) > v_min


def test_coulomb_shot_invalid_radicand():
    with pytest.raises(DataGenerationError):
        coulomb_shot_v0(CONSTS, -0.5, 0.3)


def test_coulomb_shot_angle_round_trip():
    rng = seeded_rng(17)
    for _ in range(100):
        k = rng.uniform(0.01, 2.0)
        phi = rng.uniform(0.05, math.pi / 4)
        v0 = coulomb_shot_v0(CONSTS, k, phi)
        assert coulomb_shot_angle(CONSTS, k, v0) == pytest.approx(phi, abs=1e-8)


def test_coulomb_shot_angle_monotone_bisection_bracket():
    k = 0.4
    phis = np.linspace(0.02, math.pi / 4, 40)
    v0s = np.array([coulomb_shot_v0(CONSTS, k, p) for p in phis])
    assert np.all(np.diff(v0s) < 0)


def test_coulomb_shot_doubling_k_moves_angle_toward_pi_over_4():
    k = 0.3
    v0 = coulomb_shot_v0(CONSTS, k, 0.15)
    phi_lo = coulomb_shot_angle(CONSTS, k, v0)
    phi_hi = coulomb_shot_angle(CONSTS, 2 * k, v0)
    assert phi_hi > phi_lo
    assert phi_hi <= math.pi / 4 + 1e-12


def test_coulomb_shot_orbit_oracle():
    rng = seeded_rng(29)
    k = rng.uniform(0.02, 1.5, size=100)
    phi = rng.uniform(0.05, math.pi / 4, size=100)
    v0 = np.array([coulomb_shot_v0(CONSTS, ki, pi_) for ki, pi_ in zip(k, phi)])
    miss = shot_orbit_min_miss(CONSTS, k, phi, v0)
    assert np.max(miss) < 0.01 * math.sqrt(2) * CONSTS.d0


def test_sample_dataset_shapes_and_ranges():
    ds = sample_dataset(CONSTS, 1000, seeded_rng(5))
    assert ds.observations.shape == (1000, 40)
    assert ds.observation_dims == (40,)
    assert ds.question_dims == (1, 1, 1, 1)
    assert np.all(np.isfinite(ds.observations))
    for a in ds.answers:
        assert np.all(np.isfinite(a))
        assert np.all(a > 0)
        assert np.all(a <= math.pi / 4 + 1e-12)
    for q in ds.questions:
        assert np.all(np.isfinite(q))
        assert np.all(q > 0)


def test_sample_dataset_dual_split():
    ds = sample_dataset(CONSTS, 10, seeded_rng(5), encoder_split="dual")
    assert ds.observation_dims == (20, 20)


def test_sample_dataset_deterministic():
    a = sample_dataset(CONSTS, 50, seeded_rng(123))
    b = sample_dataset(CONSTS, 50, seeded_rng(123))
    assert np.array_equal(a.observations, b.observations)
    for qa, qb in zip(a.questions, b.questions):
        assert np.array_equal(qa, qb)


def test_charge_range_must_exclude_zero():
    with pytest.raises(ConfigurationError):
        ParameterRanges(charge=(0.0, 0.0))
    with pytest.raises(ConfigurationError):
        ParameterRanges(charge=(-0.5, 0.5))


def test_lob_answers_independent_of_charges():
    a = ParticlePairSystem(4.0, 6.0, 0.2, 0.9)
    b = ParticlePairSystem(4.0, 6.0, 0.7, 0.3)
    for i in (0, 1):
        assert lob_shot_angle(a, CONSTS, i, 15.0) == pytest.approx(
            lob_shot_angle(b, CONSTS, i, 15.0), abs=1e-12)


def test_interaction_answers_depend_only_on_charge_product():
    a = ParticlePairSystem(4.0, 6.0, 0.4, 0.6)
    b = ParticlePairSystem(4.0, 6.0, 0.8, 0.3)  # same product
    for i in (0, 1):
        ka, kb = coulomb_k_eff(CONSTS, a, i), coulomb_k_eff(CONSTS, b, i)
        assert ka == pytest.approx(kb, abs=1e-15)
        v0 = coulomb_shot_v0(CONSTS, ka, 0.4)
        assert coulomb_shot_angle(CONSTS, ka, v0) == pytest.approx(
            coulomb_shot_angle(CONSTS, kb, v0), abs=1e-9)


def test_observation_batch_matches_single():
    sys = ParticlePairSystem(2.5, 7.0, 0.3, 0.8)
    from commrep.classical import observation_for_system
    single = observation_for_system(sys, CONSTS)
    batch = observation_batch([2.5], [7.0], [0.3], [0.8], CONSTS)
    assert np.allclose(single, batch[0], atol=1e-12)
