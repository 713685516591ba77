import numpy as np, time, sys
from commrep.classical import ExperimentConstants, sample_dataset
from commrep.model import CommunicationNet
from commrep.rng import seeded_rng

CONSTS = ExperimentConstants()
ds = sample_dataset(CONSTS, 30000, seeded_rng(99))
train, test = ds.split(0.1, seeded_rng(100))

def pattern_matches(sets):
    if [len(s) for s in sets] != [1, 1, 2, 2]: return False
    a, = sets[0]; b, = sets[1]
    if a == b: return False
    rest = set(range(3)) - {a, b}
    if not rest: return False
    c, = rest
    return sets[2] == {a, c} and sets[3] == {b, c}

def trial(seed, w_comm, anneal=0.2, steps=30000, decay=(0.6, 0.85)):
    est = CommunicationNet(observation_dims=(40,), question_dims=(1,1,1,1),
        answer_dims=(1,1,1,1), latent_dims=(3,), encoder_hidden=(64,64),
        decoder_hidden=(64,64), comm_weight=w_comm, comm_anneal_frac=anneal,
        n_steps=steps, batch_size=256, eval_interval=5000,
        lr_decay_at=decay, random_state=seed)
    est.fit_dataset(train)
    sets = [set(s) for s in est.transmitted_sets()]
    r2 = []
    for i in range(4):
        pred = est.predict_decoder(i, test.observations, test.questions[i])
        r2.append(1 - np.mean((pred - test.answers[i])**2)/np.var(test.answers[i]))
    return pattern_matches(sets), [sorted(s) for s in sets], [round(float(r),3) for r in r2]

for w, anneal in [(4e-3, 0.2), (8e-3, 0.2), (4e-3, 0.5)]:
    hits = 0
    for seed in (1, 2, 3, 4):
        t0 = time.time()
        ok, sets, r2 = trial(seed, w, anneal)
        hits += ok
        print(f"w={w} ann={anneal} seed={seed}: match={ok} sets={sets} R2={r2} ({time.time()-t0:.0f}s)", flush=True)
    print(f"== w={w} ann={anneal}: {hits}/4", flush=True)
