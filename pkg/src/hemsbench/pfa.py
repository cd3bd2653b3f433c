"""Policy function approximation: neural battery policies learned from a teacher.

A small feed-forward network maps windows of recent PV, demand, tariff and
stored energy to the battery power for the current slot. It is fitted to the
schedule of an optimiser (the MILP by default) and run closed-loop behind a
control filter that keeps every step feasible.

Per-customer policies are trained on that customer's own history. For the
cluster variant, customers are grouped by their average daily load shape,
one recurrent policy per member is trained (its inputs also include its own
past outputs) and the member whose policy best predicts the others becomes
the cluster's representative.

Training uses mini-batch gradient descent with Adam step sizes.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .battery import BatterySpec, clamp_power
from .core import SLOTS_PER_DAY, Schedule, SystemConfig, TouTariff, balance_grid
from .data import PROFILE_NAMES, load_profiles

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    pass


# ------------------------------------------------------------------ features

@dataclass(frozen=True)
class TrainingSet:
    X: np.ndarray
    y: np.ndarray  # net battery power, kW, positive while charging
    window: int
    recurrent: bool
    skipped: int = 0

    def __len__(self) -> int:
        return self.y.size


def _features(pv, demand, rates, soc_end, power, t: int, W: int, recurrent: bool) -> np.ndarray:
    """Feature vector for slot ``t``.

    PV, demand and tariff windows end at the current slot (``t-W+1..t``);
    stored energy and past battery power are the values at the end of slots
    ``t-W..t-1``.
    """
    parts = [pv[t - W + 1:t + 1], demand[t - W + 1:t + 1], rates[t - W + 1:t + 1],
             soc_end[t - W:t]]
    if recurrent:
        parts.append(power[t - W:t])
    return np.concatenate(parts)


def _feature_matrix(pv, demand, rates, soc_end, power, W: int, recurrent: bool) -> np.ndarray:
    n = pv.size
    from numpy.lib.stride_tricks import sliding_window_view as win

    rows = n - W
    blocks = [win(pv, W)[1:rows + 1], win(demand, W)[1:rows + 1], win(rates, W)[1:rows + 1],
              win(soc_end, W)[:rows]]
    if recurrent:
        blocks.append(win(power, W)[:rows])
    return np.hstack(blocks)


def build_training_set(teacher: Schedule, demand, pv, tariff: TouTariff = TouTariff(), *,
                       window: int = SLOTS_PER_DAY, recurrent: bool = False) -> TrainingSet:
    """Sliding-window samples from a teacher schedule.

    The first ``window`` slots lack a full history and are skipped; the
    count is reported on the result.
    """
    d = np.asarray(demand, float)
    p = np.asarray(pv, float)
    n = len(teacher)
    if d.shape != (n,) or p.shape != (n,):
        raise ValueError("demand and pv must match the schedule length")
    if n <= window:
        return TrainingSet(np.zeros((0, 4 * window + window * recurrent)), np.zeros(0),
                           window, recurrent, skipped=n)
    rates = tariff.rates_for(n)
    X = _feature_matrix(p, d, rates, teacher.soc, teacher.battery_power, window, recurrent)
    y = teacher.battery_power[window:]
    return TrainingSet(np.ascontiguousarray(X), y.copy(), window, recurrent, skipped=window)


# ------------------------------------------------------------------ network

@dataclass(frozen=True)
class PolicyArch:
    hidden: int = 32
    epochs: int = 60
    batch: int = 256
    lr: float = 3e-3
    l2: float = 1e-5
    val_fraction: float = 0.2


@dataclass(frozen=True)
class NeuralPolicy:
    """One-hidden-layer tanh network with input standardisation built in."""

    W1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    x_mean: np.ndarray
    x_std: np.ndarray
    y_scale: float
    window: int
    recurrent: bool = False
    train_mse: float = np.nan
    val_mse: float = np.nan
    meta: Mapping = field(default_factory=dict)

    @property
    def n_inputs(self) -> int:
        return self.x_mean.size

    @property
    def hidden(self) -> int:
        return self.b1.size

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, float)
        single = X.ndim == 1
        Z = (np.atleast_2d(X) - self.x_mean) / self.x_std
        out = (np.tanh(Z @ self.W1.T + self.b1) @ self.w2 + self.b2) * self.y_scale
        return out[0] if single else out

    def mse(self, samples: TrainingSet) -> float:
        if len(samples) == 0:
            return np.nan
        return float(np.mean((self.predict(samples.X) - samples.y) ** 2))

    # serialisation: a JSON header line followed by the flat weights as text
    def save(self, path: str | Path) -> None:
        header = {"format": "hemsbench-policy", "version": FORMAT_VERSION,
                  "n_inputs": self.n_inputs, "hidden": self.hidden, "window": self.window,
                  "recurrent": self.recurrent, "y_scale": self.y_scale, "b2": self.b2,
                  "train_mse": self.train_mse, "val_mse": self.val_mse, "meta": dict(self.meta)}
        arrays = [self.W1.ravel(), self.b1, self.w2, self.x_mean, self.x_std]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for a in arrays:
                fh.write(" ".join(repr(float(v)) for v in a) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "NeuralPolicy":
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        h = json.loads(lines[0])
        if h.get("format") != "hemsbench-policy" or h.get("version") != FORMAT_VERSION:
            raise ValueError(f"{path}: not a version-{FORMAT_VERSION} policy file")
        arr = [np.array([float(v) for v in ln.split()]) for ln in lines[1:6]]
        n, k = h["n_inputs"], h["hidden"]
        return cls(arr[0].reshape(k, n), arr[1], arr[2], float(h["b2"]), arr[3], arr[4],
                   float(h["y_scale"]), int(h["window"]), bool(h["recurrent"]),
                   float(h["train_mse"]), float(h["val_mse"]), h.get("meta", {}))


def _init(n_in: int, hidden: int, rng: np.random.Generator):
    W1 = rng.normal(0.0, 1.0 / np.sqrt(n_in), (hidden, n_in))
    w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden), hidden)
    return [W1, np.zeros(hidden), w2, np.zeros(1)]


def train_policy(samples: TrainingSet, arch: PolicyArch = PolicyArch(), seed: int = 0, *,
                 y_scale: float | None = None, min_samples: int = 1000,
                 rollout_check=None) -> NeuralPolicy:
    """Fit a policy to ``samples`` by mean-squared error.

    The last ``arch.val_fraction`` of the (time-ordered) samples is held out
    for validation. ``rollout_check``, if given, is called with a candidate
    policy after every epoch and must return a closed-loop error; the
    weights with the lowest such error are kept. Without it the weights with
    the lowest validation MSE are kept.
    """
    if len(samples) < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {len(samples)}")
    rng = np.random.default_rng(seed)
    X, y = samples.X, samples.y
    n_val = int(round(arch.val_fraction * len(y)))
    n_tr = len(y) - n_val
    Xtr, ytr = X[:n_tr], y[:n_tr]
    mean = Xtr.mean(axis=0)
    std = Xtr.std(axis=0)
    std = np.where(std > 1e-6, std, 1.0)
    scale = float(y_scale) if y_scale else max(float(np.max(np.abs(ytr))), 1e-6)
    Ztr = (Xtr - mean) / std
    ttr = ytr / scale

    params = _init(X.shape[1], arch.hidden, rng)
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    b1_, b2_, eps = 0.9, 0.999, 1e-8
    step = 0

    def make(ps, tr_mse=np.nan, val_mse=np.nan):
        return NeuralPolicy(ps[0].copy(), ps[1].copy(), ps[2].copy(), float(ps[3][0]), mean, std,
                            scale, samples.window, samples.recurrent, tr_mse, val_mse)

    best, best_score = None, np.inf
    for epoch in range(arch.epochs):
        perm = rng.permutation(n_tr)
        for start in range(0, n_tr, arch.batch):
            idx = perm[start:start + arch.batch]
            Z, t = Ztr[idx], ttr[idx]
            W1, bb1, w2, bb2 = params
            H = np.tanh(Z @ W1.T + bb1)
            err = H @ w2 + bb2[0] - t
            g_out = 2.0 * err / idx.size
            gw2 = H.T @ g_out + arch.l2 * w2
            gb2 = np.array([g_out.sum()])
            gH = np.outer(g_out, w2) * (1.0 - H ** 2)
            gW1 = gH.T @ Z + arch.l2 * W1
            gb1 = gH.sum(axis=0)
            step += 1
            for i, g in enumerate((gW1, gb1, gw2, gb2)):
                m[i] = b1_ * m[i] + (1 - b1_) * g
                v[i] = b2_ * v[i] + (1 - b2_) * g * g
                mh = m[i] / (1 - b1_ ** step)
                vh = v[i] / (1 - b2_ ** step)
                params[i] = params[i] - arch.lr * mh / (np.sqrt(vh) + eps)
        cand = make(params)
        tr = float(np.mean((cand.predict(Xtr) - ytr) ** 2))
        if not np.isfinite(tr):
            raise TrainingError(f"training diverged at epoch {epoch} (loss {tr}); "
                                f"lr={arch.lr}, batch={arch.batch}")
        val = float(np.mean((cand.predict(X[n_tr:]) - y[n_tr:]) ** 2)) if n_val else tr
        score = rollout_check(cand) if rollout_check is not None else val
        if score < best_score:
            best_score = score
            best = make(params, tr, val)
    assert best is not None
    return best


# ------------------------------------------------------------------ execution

def control_filter(soc: float, p_proposed: float, dt: float, spec: BatterySpec) -> float:
    """Clamp a proposed battery power to what the battery can deliver this slot."""
    return clamp_power(soc, p_proposed, dt, spec)


def execute_policy(policy: NeuralPolicy, demand, pv, tariff: TouTariff, cfg: SystemConfig, *,
                   demand_fc=None, pv_fc=None, e0: float | None = None) -> Schedule:
    """Closed-loop rollout of ``policy``.

    The current slot's PV and demand inputs come from the forecasts when
    given (the actuals otherwise); past slots always use the actuals. Before
    a full window of history exists the first slots are repeated as history,
    with the starting energy and zero battery power.
    """
    d = np.asarray(demand, float)
    p = np.asarray(pv, float)
    dfc = d if demand_fc is None else np.asarray(demand_fc, float)
    pfc = p if pv_fc is None else np.asarray(pv_fc, float)
    n = d.size
    W = policy.window
    spec, dt = cfg.battery, cfg.dt
    e0 = cfg.initial_soc if e0 is None else float(e0)
    rates = tariff.rates_for(n + W, start_slot=-W % SLOTS_PER_DAY)
    pad = lambda a: np.concatenate([np.resize(a, W), a])  # noqa: E731
    # history arrays are shifted by W so that slot t lives at index t + W
    ph, dh = pad(p), pad(d)
    soc_h = np.concatenate([np.full(W, e0), np.zeros(n)])
    pow_h = np.zeros(n + W)
    eta = spec.efficiency
    chg, dis, soc = np.zeros(n), np.zeros(n), np.zeros(n)
    e = e0
    for t in range(n):
        i = t + W
        cur_p, cur_d = ph[i], dh[i]
        ph[i], dh[i] = pfc[t], dfc[t]
        x = _features(ph, dh, rates, soc_h, pow_h, i, W, policy.recurrent)
        ph[i], dh[i] = cur_p, cur_d
        u = control_filter(e, float(policy.predict(x)), dt, spec)
        if u > 0:
            chg[t] = u
            e = min(e + dt * eta * u, spec.e_max)
        elif u < 0:
            dis[t] = -u
            e = max(e + dt * u / eta, spec.e_min)
        soc[t] = e
        soc_h[i] = e
        pow_h[i] = u
    imp, exp = balance_grid(d, p, chg, dis)
    return Schedule(imp, exp, chg, dis, soc, e0, dt)


def rollout_error(policy: NeuralPolicy, teacher: Schedule, demand, pv, tariff: TouTariff,
                  cfg: SystemConfig) -> float:
    """Mean squared gap between a closed-loop rollout and the teacher's powers."""
    run = execute_policy(policy, demand, pv, tariff, cfg, e0=teacher.initial_soc)
    return float(np.mean((run.battery_power - teacher.battery_power) ** 2))


# ------------------------------------------------------------------ clustering

def average_day(demand) -> np.ndarray:
    """Mean daily shape of a demand series, normalised to unit sum."""
    prof = np.asarray(demand, float).reshape(-1, SLOTS_PER_DAY).mean(axis=0)
    total = prof.sum()
    if total <= 0:
        raise ValueError("demand has no energy")
    return prof / total


@dataclass(frozen=True)
class ClusterModel:
    centroids: np.ndarray  # 48 x K, columns sum to 1
    generic: np.ndarray  # the starting generic shapes
    names: tuple[str, ...]
    labels: Mapping[str, int]
    representatives: Mapping[int, str] = field(default_factory=dict)
    iterations: int = 0

    def members(self, k: int) -> list[str]:
        return sorted(c for c, lab in self.labels.items() if lab == k)

    def with_representatives(self, reps: Mapping[int, str]) -> "ClusterModel":
        return ClusterModel(self.centroids, self.generic, self.names, self.labels, dict(reps),
                            self.iterations)


def _nearest(profiles: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = ((profiles[:, :, None] - centroids[None, :, :]) ** 2).sum(axis=1)
    lab = np.argmin(d2, axis=1)
    return lab, np.sqrt(d2[np.arange(lab.size), lab])


def cluster_customers(demands: Mapping[str, np.ndarray], centroids: np.ndarray | None = None, *,
                      names: Sequence[str] = PROFILE_NAMES, refine: bool = True,
                      max_iter: int = 100) -> ClusterModel:
    """Group customers by average daily load shape.

    Every customer first goes to the nearest generic shape; with ``refine``
    the centroids then move by ordinary k-means iterations until the labels
    stop changing. A cluster that empties keeps its previous centroid.
    """
    if not demands:
        raise ValueError("empty cohort")
    ids = sorted(demands)
    P = np.array([average_day(demands[c]) for c in ids])
    C0 = load_profiles() if centroids is None else np.asarray(centroids, float)
    C0 = C0 / C0.sum(axis=0)
    C = C0.copy()
    lab, _ = _nearest(P, C)
    it = 0
    while refine and it < max_iter:
        it += 1
        for k in range(C.shape[1]):
            if np.any(lab == k):
                C[:, k] = P[lab == k].mean(axis=0)
        new, _ = _nearest(P, C)
        if np.array_equal(new, lab):
            break
        lab = new
    return ClusterModel(C, C0, tuple(names), {c: int(k) for c, k in zip(ids, lab)}, {}, it)


def assign_new_customer(model: ClusterModel, profile=None, label: str | None = None) -> int:
    """Cluster for a new customer, from a demand sample or a stated load style."""
    if label is not None:
        try:
            return model.names.index(label)
        except ValueError:
            raise ValueError(f"unknown load profile label {label!r}") from None
    if profile is None:
        raise ValueError("need a demand profile or a label")
    prof = np.asarray(profile, float)
    if prof.size % SLOTS_PER_DAY:
        raise ValueError("demand sample must cover whole days")
    lab, _ = _nearest(average_day(prof)[None, :], model.centroids)
    return int(lab[0])


@dataclass(frozen=True)
class Representative:
    customer: str
    policy: NeuralPolicy
    scores: Mapping[str, float]  # mean cross-member MSE per candidate


def select_representative(policies: Mapping[str, NeuralPolicy],
                          held_out: Mapping[str, TrainingSet]) -> Representative:
    """Pick the member policy that best predicts the other members.

    Each candidate is scored by its mean MSE on every other member's samples;
    the lowest score wins and ties go to the smallest customer id.
    """
    ids = sorted(policies)
    if not ids:
        raise ValueError("no candidate policies")
    if len(ids) == 1:
        warnings.warn(f"singleton cluster: using the policy of {ids[0]}", stacklevel=2)
        return Representative(ids[0], policies[ids[0]], {ids[0]: np.nan})
    scores = {}
    for c in ids:
        others = [held_out[o] for o in ids if o != c]
        scores[c] = float(np.mean([policies[c].mse(s) for s in others]))
    best = min(ids, key=lambda c: (scores[c], c))
    return Representative(best, policies[best], scores)
