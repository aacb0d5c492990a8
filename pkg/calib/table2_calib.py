import sys, time, json
sys.path.insert(0, "/root/pkg/tests")
from pathlib import Path
from ganprivacy.experiment import run_experiment

out = Path("/root/pkg/calib/table2_runs")
for name in ["table2-megan", "table2-mimgan-l10", "table2-mimgan-l100", "table2-gan"]:
    t0 = time.time()
    run_dir = run_experiment(Path("/root/pkg/configs/digits") / f"{name}.yaml", output_dir=out, force=True)
    report = json.loads((run_dir / "report.json").read_text())
    print(f"== {name} ({time.time()-t0:.0f}s): MIA={report['mia_whitebox']:.3f} "
          f"rho_tr_te={report['rho_tr_te']:.3f} tvd={report['tvd']:.3f} gap={report['gap']:+.3f} "
          f"m={report['memorization']} gan_test={report['gan_test']} gan_train={report['gan_train']}")
    sys.stdout.flush()
