# # One day, four ways to run a home battery
#
# A 4 kWp rooftop with a 6.5 kWh battery on a time-of-use tariff. We run the
# rule-based strategies, the optimiser and the dynamic program over the same
# sunny day and compare what each one pays.

# ## Setup

import numpy as np

from hemsbench import SystemConfig, TouTariff
from hemsbench.battery import NONLINEAR, replay_schedule
from hemsbench.dp import dp_schedule
from hemsbench.economics import annual_cost, baseline_cost
from hemsbench.heuristics import scm_schedule, toua_schedule
from hemsbench.milp import rolling_horizon

tariff = TouTariff()
cfg = SystemConfig.for_pv(4.0)
print(cfg.battery)

# A day with a clear-sky PV arc and an evening demand bump.

rng = np.random.default_rng(1)
hours = (np.arange(48) + 0.5) / 2
pv = np.where((hours > 6) & (hours < 18), 4.0 * np.sin(np.pi * (hours - 6) / 12), 0.0)
demand = 0.4 + 0.8 * rng.random(48)
demand[34:42] += 1.5

print(f"PV {pv.sum() / 2:.1f} kWh, demand {demand.sum() / 2:.1f} kWh")

# Import prices by slot (c/kWh): off-peak overnight, peak in the morning and
# early evening, shoulder in between.

print(tariff.rates_for(48).reshape(6, 8))

# ## Schedules

schedules = {
    "SCM": scm_schedule(demand, pv, cfg),
    "ToUA": toua_schedule(demand, pv, cfg, tariff=tariff),
    "MILP": rolling_horizon(demand, pv, tariff, cfg),
    "DP": dp_schedule(demand, pv, tariff, cfg, NONLINEAR),
}

base = baseline_cost(demand, tariff)
print(f"{'no PV, no battery':>18}: ${base:.2f}")
for name, s in schedules.items():
    print(f"{name:>18}: ${annual_cost(s, tariff):.2f}")

# The bill includes the $1.551 daily supply charge, so the differences are
# the interesting part.

# ## Does the plan survive a realistic battery?
#
# The optimiser plans with a constant 91 % efficiency. Replaying its battery
# powers through the power-dependent efficiency curves shows where the plan
# would have run the battery past empty. The DP plans with the curves and
# stays inside the limits.

for name in ("MILP", "DP"):
    r = replay_schedule(schedules[name], cfg.battery, NONLINEAR)
    first = r.violations[0] if r.violations else None
    print(f"{name}: {len(r.violations)} violating slots", "" if first is None else f"(first at slot {first.slot}, {first.soc:.3f} kWh)")

# ## Stored energy through the day

for name, s in schedules.items():
    print(f"{name:>5}", " ".join(f"{e:4.1f}" for e in s.soc[::4]))
