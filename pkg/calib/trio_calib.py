import sys, time
sys.path.insert(0, "/root/pkg/tests")
import numpy as np
from ganprivacy.data import load_dataset, make_split
from ganprivacy.models import get_preset
from ganprivacy.trainers import TrainConfig, train_gan
from ganprivacy.metrics import ScoreSet, TAG_TRAIN, TAG_HOLDOUT, estimate_densities, bhattacharyya_hist

digits = load_dataset("digits")
split = make_split(digits, 0.10, seed=7)

def snapshot_metrics(snap):
    tr, ho = snap["train"], snap["holdout"]
    scores = np.concatenate([tr, ho]); is_m = np.concatenate([np.ones(len(tr),bool), np.zeros(len(ho),bool)])
    order = np.lexsort((np.arange(len(scores)), -scores))
    mia = is_m[order[:len(tr)]].mean()
    ss = ScoreSet(scores=scores, tags=np.array(["train"]*len(tr)+["holdout"]*len(ho),dtype=object))
    pair = estimate_densities(ss, TAG_TRAIN, TAG_HOLDOUT, bins=100)
    return mia, bhattacharyya_hist(pair), 0.5*np.abs(pair.p1-pair.p0).sum(), tr.mean()-ho.mean()

for preset in ["appendix1-discriminator-a", "appendix1-discriminator-b", "appendix1-discriminator-c"]:
    cfg = TrainConfig(trainer="gan", generator=get_preset("desk-generator"),
                      discriminator=get_preset(preset), batch_size=32,
                      epochs=500, eval_every=50, eval_samples=64, seed=3)
    t0=time.time()
    bundle = train_gan(cfg, digits, split)
    print(f"== {preset} ({time.time()-t0:.0f}s)")
    for ep in sorted(bundle.snapshots):
        mia, rho, tvd, gap = snapshot_metrics(bundle.snapshots[ep])
        print(f"  ep{ep:4d}: MIA={mia:.3f} rho={rho:.3f} TVD={tvd:.3f} gap={gap:+.3f}")
    sys.stdout.flush()
