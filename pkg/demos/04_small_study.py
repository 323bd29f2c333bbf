"""
A small replicated study
========================

Repeats the pipeline over seeds in every scenario and writes the CSV files
a box plot would be drawn from. Five replications keep this quick; the
command-line ``experiment`` subcommand runs the full-size version.
"""

import sys
from pathlib import Path

from proxswitch import harness
from proxswitch.config import load_scenario

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_study")

for sc in range(1, 7):
    res = harness.run_experiment(load_scenario(None, sc), reps=5, n_train=1000, n_test=5000, base_seed=0)
    harness.write_experiment(res, out / f"scenario{sc}")
    med = {r["regime"]: r["median"] for r in res.summary_rows()}
    print(f"scenario {sc}: " + "  ".join(f"{k} {v:.3f}" for k, v in med.items()))

print("CSV files under", out.resolve())
