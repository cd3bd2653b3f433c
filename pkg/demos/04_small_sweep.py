# # A small benchmark sweep
#
# Every strategy on four customers for three weeks, under perfect and
# persistence forecasts. The same thing runs from the shell as
#
#     hemsbench simulate --customers 4 --days 21 --out sweep-demo
#     hemsbench rank --out sweep-demo

import csv
import tempfile
from pathlib import Path

from hemsbench import config
from hemsbench.experiment import run_experiment

cfg = config.load_config(cohort={"n": 4, "days": 21}, pfa={"epochs": 20})
out = Path(tempfile.mkdtemp(prefix="hemsbench-"))
res = run_experiment(cfg, out)
print(f"{len(res.rows)} cells, {len(res.failed)} failed -> {out}")

# Savings per strategy, cohort median.

with open(out / "rankings.csv", newline="") as fh:
    for row in csv.DictReader(fh):
        print(f"{row['strategy']:>9}  perfect ${float(row['median_savings_perfect']):7.2f}  "
              f"persistence ${float(row['median_savings_persistence']):7.2f}  "
              f"SOH {float(row['median_soh_20']):5.1f} %")

# Daily solve time is measured separately because it depends on the machine.

for t in res.timings[:7]:
    print(f"{t['customer']} {t['strategy']:>9} {1000 * t['median_s']:8.3f} ms")
