# # What a strategy does to the battery and to the payback
#
# One synthetic customer, one year. We age the battery under two schedules
# and turn the bill savings into levelised savings and an internal rate of
# return.

from hemsbench import TouTariff
from hemsbench.data import synth_cohort
from hemsbench.degradation import AgingParams, simulate_aging
from hemsbench.dp import dp_schedule
from hemsbench.economics import CostParams, economics_record
from hemsbench.heuristics import scm_schedule

tariff = TouTariff()
(customer,) = synth_cohort(1, seed=11)
cfg = customer.system()
d, p = customer.demand.values, customer.pv.values
print(customer.id, customer.profile, f"{customer.pv_kwp:g} kWp", cfg.battery.name)

# The DP year takes a few seconds: 365 backward passes over a 101 x 43 grid.

schedules = {"scm": scm_schedule(d, p, cfg), "dp": dp_schedule(d, p, tariff, cfg)}

# ## Aging
#
# Calendar aging runs regardless; every monotone SOC swing adds cyclic aging
# that grows with its depth. End of life is 80 % of rated capacity.

params = AgingParams()
for name, s in schedules.items():
    a = simulate_aging(s, cfg.battery, params)
    print(f"{name:>4}: SOH after 20 y {a.soh_report:5.1f} %, end of life after {a.ebl:4.1f} y, "
          f"{a.fec:5.1f} full cycles/y, mean depth {a.mean_doc:.2f}")

# ## Money

costs = CostParams()
for name, s in schedules.items():
    rec = economics_record(customer.id, name, "perfect", s, d, customer.pv_kwp, tariff, costs)
    print(f"{name:>4}: bill ${rec['annual_cost']:8.2f}  saves ${rec['savings']:7.2f}/y  "
          f"levelised ${rec['levelized_savings']:7.2f}/y  IRR {100 * rec['irr']:5.2f} %")
