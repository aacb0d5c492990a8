import sys, time
sys.path.insert(0, "/root/pkg/tests")
import numpy as np
from ganprivacy.attacks import dmia_blackbox
from ganprivacy.data import load_dataset, make_split, build_attack_pool
from ganprivacy.models import replay_generator, get_preset
from ganprivacy.trainers import TrainConfig

digits = load_dataset("digits")
split = make_split(digits, 0.10, seed=7)
pool = build_attack_pool(digits, split)
gen = replay_generator(digits.images[split.train_idx])

for disc, epochs, n_syn, B in [("appendix1-discriminator-a", 300, 96, 32),
                               ("appendix1-discriminator-a", 400, 96, 32)]:
    cfg = TrainConfig(trainer="gan", generator=get_preset("desk-generator"),
                      discriminator=get_preset(disc), batch_size=B, epochs=epochs,
                      eval_every=epochs, eval_samples=32, seed=13)
    t0=time.time()
    r = dmia_blackbox(gen, pool, cfg, n_synthetic=n_syn)
    print(f"{disc} e{epochs} n{n_syn}: acc={r.accuracy:.3f} ({time.time()-t0:.0f}s)", flush=True)

noise_bank = np.random.default_rng(11).random((256, 28, 28, 1)).astype(np.float32)
ngen = replay_generator(noise_bank)
cfg = TrainConfig(trainer="gan", generator=get_preset("desk-generator"),
                  discriminator=get_preset("appendix1-discriminator-a"), batch_size=32,
                  epochs=300, eval_every=300, eval_samples=32, seed=13)
t0=time.time()
r = dmia_blackbox(ngen, pool, cfg, n_synthetic=96)
print(f"noise-target e300: acc={r.accuracy:.3f} ({time.time()-t0:.0f}s)", flush=True)
