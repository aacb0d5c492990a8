"""Generate the shipped desk-scale preset configs."""
import yaml
from pathlib import Path

ROOT = Path("/root/pkg/configs")

def base(run_id, dataset, subsample, out="runs"):
    return {
        "schema_version": 1,
        "run_id": run_id,
        "seed": 3,
        "dataset": {"source": dataset, "subsample": subsample},
        "split": {"train_fraction": 0.10, "seed": 7},
        "output_dir": out,
    }

def trainer(kind, epochs, lam=0.0, k=None):
    t = {"kind": kind, "batch_size": 32, "epochs": epochs, "eval_every": 50,
         "seed": 3, "optimizer": {"name": "adam", "lr": 0.0002, "beta1": 0.5}}
    if lam:
        t["lambda"] = lam
    if k is not None:
        t["k"] = k
    return t

def evaluation(enabled, n_samples=1024):
    return {"enabled": enabled, "classifier": "desk-classifier", "classifier_epochs": 25,
            "n_samples": n_samples, "memorization_samples": 2000, "seed": 11}

# ---- digits (offline desk-scale; used by the acceptance suite) ----
DIGITS_EPOCHS = 500
table1 = {
    "table1-very-strong": "appendix1-discriminator-a",
    "table1-strong": "appendix1-discriminator-b",
    "table1-mild": "appendix1-discriminator-c",
}
for run_id, disc in table1.items():
    cfg = base(run_id + "-digits", "digits", None)
    cfg["model"] = {"generator": "desk-generator", "discriminator": disc}
    cfg["trainer"] = trainer("gan", DIGITS_EPOCHS)
    cfg["attack"] = {"bins": 100}
    cfg["evaluation"] = evaluation(False)
    (ROOT / "digits" / f"{run_id}.yaml").write_text(yaml.safe_dump(cfg, sort_keys=False))

table2 = [
    ("table2-gan", "gan", 0.0, "appendix3-discriminator-mnist", None),
    ("table2-megan", "megan", 0.0, "appendix2-discriminator", None),
    ("table2-mimgan-l10", "mimgan", 10.0, "appendix3-discriminator-mnist", "desk-adversary"),
    ("table2-mimgan-l20", "mimgan", 20.0, "appendix3-discriminator-mnist", "desk-adversary"),
    ("table2-mimgan-l100", "mimgan", 100.0, "appendix3-discriminator-mnist", "desk-adversary"),
]
for run_id, kind, lam, disc, adv in table2:
    cfg = base(run_id + "-digits", "digits", None)
    cfg["model"] = {"generator": "desk-generator", "discriminator": disc}
    if adv:
        cfg["model"]["adversary"] = adv
    cfg["trainer"] = trainer(kind, DIGITS_EPOCHS, lam)
    cfg["attack"] = {"bins": 100}
    cfg["evaluation"] = evaluation(True)
    (ROOT / "digits" / f"{run_id}.yaml").write_text(yaml.safe_dump(cfg, sort_keys=False))

# ---- mnist / fashion-mnist (require the cached corpus; desk-scale subsample) ----
for dataset, dirname in [("mnist", "mnist"), ("fashion-mnist", "fashion-mnist")]:
    rows = table2 if dataset == "fashion-mnist" else list(table2) + [
        ("table1-very-strong", "gan", 0.0, "appendix1-discriminator-a", None),
        ("table1-strong", "gan", 0.0, "appendix1-discriminator-b", None),
        ("table1-mild", "gan", 0.0, "appendix1-discriminator-c", None),
    ]
    for run_id, kind, lam, disc, adv in rows:
        cfg = base(f"{run_id}-{dataset}", dataset, 10000)
        gen_preset = "appendix2-generator" if kind == "megan" else (
            "appendix3-generator" if kind == "mimgan" else "appendix1-generator")
        cfg["model"] = {"generator": gen_preset, "discriminator": disc}
        if adv:
            cfg["model"]["adversary"] = "appendix3-adversary"
        if dataset == "fashion-mnist" and kind in ("gan", "mimgan"):
            cfg["model"]["discriminator"] = "appendix3-discriminator-fashion"
        cfg["trainer"] = trainer(kind, 300)
        cfg["attack"] = {"bins": 100}
        cfg["evaluation"] = {"enabled": True, "classifier": "appendix4-classifier",
                             "classifier_epochs": 10, "n_samples": 10000,
                             "memorization_samples": 2000, "seed": 11}
        (ROOT / dirname / f"{run_id}.yaml").write_text(yaml.safe_dump(cfg, sort_keys=False))

print("configs written:", sorted(p.relative_to(ROOT).as_posix() for p in ROOT.rglob("*.yaml")))
