# # Learning a battery policy from the optimiser
#
# The optimiser needs forecasts and a solver at run time. A small neural
# network can imitate it from sliding windows of recent PV, demand, prices
# and stored energy. Here one customer's network learns from 60 days of
# optimal schedules and then runs on its own.

import numpy as np

from hemsbench import TouTariff
from hemsbench.data import synth_cohort
from hemsbench.economics import annual_cost
from hemsbench.milp import rolling_horizon
from hemsbench.pfa import (PolicyArch, build_training_set, cluster_customers, execute_policy,
                           train_policy)

tariff = TouTariff()
cohort = synth_cohort(6, seed=3, days=60)
customer = cohort[0]
cfg = customer.system()
d, p = customer.demand.values, customer.pv.values

teacher = rolling_horizon(d, p, tariff, cfg)
samples = build_training_set(teacher, d, p, tariff, window=48)
print(f"{len(samples)} samples with {samples.X.shape[1]} inputs ({samples.skipped} slots skipped)")

policy = train_policy(samples, PolicyArch(epochs=40), seed=0, y_scale=cfg.battery.max_power)
print(f"train MSE {policy.train_mse:.3f}, validation MSE {policy.val_mse:.3f} kW^2")

# The rollout clamps every proposal to what the battery can actually do.

run = execute_policy(policy, d, p, tariff, cfg)
print(f"optimiser ${annual_cost(teacher, tariff):.2f}  network ${annual_cost(run, tariff):.2f}  "
      f"over {customer.days} days")

# ## Sharing policies across similar households
#
# Customers are grouped by the shape of their average day, starting from
# five generic load shapes.

model = cluster_customers({r.id: r.demand.values for r in cohort})
for k, name in enumerate(model.names):
    print(f"{name:>26}: {model.members(k)}")
print("k-means iterations:", model.iterations)
print(np.round(model.centroids.max(axis=0), 4))
