"""Online display-ad heuristics with free disposal.

Every rule follows the same outline: an arriving impression goes to the
advertiser maximizing ``w_ij - beta_j`` (if that margin is nonnegative),
a full advertiser throws away its least valuable impression, and
``beta_j`` is recomputed from the kept set.  The rules differ only in how
``beta_j`` summarizes the kept set.

The pure-Python :func:`assign_impression` is the readable reference; runs
go through the compiled stream in :mod:`spl.kernels`.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .instance import DaInstance, da_to_plp, normalize
from .ptas import _stream, sample_size, shrink_factor, train

RULES = tuple(kernels.RULE_NAMES)
SCHEDULES = ("linear", "exponential")


@dataclass
class AdvertiserState:
    """Kept weights are stored in non-increasing order."""

    id: str
    demand: int
    kept: list = field(default_factory=list)
    beta: float = 0.0

    def __post_init__(self):
        if self.demand < 1:
            raise ValueError("demand must be a positive integer")
        self.kept = sorted(self.kept, reverse=True)


def beta_greedy(state: AdvertiserState) -> float:
    """Weight that would be discarded next: the minimum kept once full, else 0."""
    if len(state.kept) < state.demand:
        return 0.0
    return float(state.kept[-1])


def beta_avg(state: AdvertiserState) -> float:
    return float(sum(state.kept)) / state.demand


def beta_exp(state: AdvertiserState) -> float:
    """Geometrically weighted average of the kept weights (missing ones count as 0)."""
    n = state.demand
    rho = 1.0 + 1.0 / n
    num = sum(w * rho**k for k, w in enumerate(state.kept))
    return num / (n * (rho**n - 1.0))


BETA_RULES = {"greedy": beta_greedy, "pd_avg": beta_avg, "pd_exp": beta_exp}


def assign_impression(states: Sequence[AdvertiserState], edges, rule: str) -> dict:
    """Offer one impression to ``states`` and update them in place.

    ``edges`` is a sequence of ``(advertiser index, weight)``.  Returns a
    decision with the chosen index (or ``None``), its margin, and the
    evicted weight if any.
    """
    beta_fn = BETA_RULES[rule]
    best, best_margin, best_w = None, 0.0, 0.0
    for j, w in edges:
        mg = w - states[j].beta
        if mg < 0:
            continue
        if best is None or mg > best_margin or (mg == best_margin and j < best):
            best, best_margin, best_w = j, mg, w
    if best is None:
        return {"advertiser": None, "margin": 0.0, "evicted": None, "kept": False}
    st = states[best]
    evicted = None
    kept = True
    if len(st.kept) == st.demand:
        if best_w <= st.kept[-1]:
            evicted, kept = best_w, False
        else:
            evicted = st.kept.pop()
    if kept:
        # insert after equal weights: descending list, so bisect on negated keys
        pos = bisect.bisect_right([-w for w in st.kept], -best_w)
        st.kept.insert(pos, best_w)
        st.beta = beta_fn(st)
    return {"advertiser": best, "margin": best_margin, "evicted": evicted, "kept": kept}


@dataclass
class Allocation:
    """Integral DA allocation after free disposal."""

    assigned: np.ndarray  # impression -> advertiser index, -1 if none
    weight: np.ndarray  # weight of the kept edge, 0 if none
    v: np.ndarray  # per-advertiser value
    beta: np.ndarray
    z: np.ndarray
    evictions: int
    algorithm: str = ""
    advertiser_ids: tuple = ()
    impression_ids: tuple = ()

    @property
    def value(self) -> float:
        return float(self.v.sum())

    @property
    def unassigned(self) -> int:
        return int((self.assigned < 0).sum())

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "value": self.value,
            "v": {a: float(x) for a, x in zip(self.advertiser_ids, self.v)},
            "unassigned": self.unassigned,
            "evictions": int(self.evictions),
            "beta": {a: float(x) for a, x in zip(self.advertiser_ids, self.beta)},
            "assignment": {
                self.impression_ids[i]: self.advertiser_ids[j]
                for i, j in enumerate(self.assigned.tolist())
                if j >= 0
            },
        }


def _allocation(da: DaInstance, res, name: str) -> Allocation:
    assigned, bimp, buf, cnt, beta, z, evictions = res
    weight = np.zeros(da.n_impressions)
    kept = bimp >= 0
    weight[bimp[kept]] = buf[kept]
    v = np.bincount(assigned[assigned >= 0], weights=weight[assigned >= 0], minlength=da.n_advertisers)
    return Allocation(
        assigned=assigned, weight=weight, v=v, beta=beta, z=z, evictions=int(evictions),
        algorithm=name, advertiser_ids=da.advertiser_ids, impression_ids=da.impression_ids,
    )


def _check_order(da: DaInstance, order) -> np.ndarray:
    order = np.asarray(order, dtype=np.int64)
    n = da.n_impressions
    if order.shape != (n,) or not np.array_equal(np.sort(order), np.arange(n)):
        raise ValueError("order must be a permutation of the impressions")
    return order


def run_online(da: DaInstance, order, rule: str) -> Allocation:
    """Run GREEDY, PD_AVG or PD_EXP over ``order``."""
    if rule not in kernels.RULE_NAMES:
        raise ValueError(f"unknown rule {rule!r}; expected one of {RULES}")
    order = _check_order(da, order)
    res = _stream(da, order, kernels.RULE_NAMES[rule], np.ones(order.size, dtype=np.int8))
    return _allocation(da, res, rule)


def hybrid_alpha(n_post: int, schedule: str = "linear", half_life: Optional[float] = None) -> np.ndarray:
    """Weight on the learned prices for each post-training impression.

    Linear runs from 1 at the first to 0 at the last.  The exponential
    variant halves every ``half_life`` impressions (default ``n_post / 8``)
    and is forced to 0 at the last impression.
    """
    if schedule not in SCHEDULES:
        raise ValueError(f"schedule must be one of {SCHEDULES}")
    if n_post <= 0:
        return np.zeros(0)
    if n_post == 1:
        return np.ones(1)
    k = np.arange(n_post, dtype=np.float64)
    if schedule == "linear":
        return 1.0 - k / (n_post - 1)
    h = n_post / 8.0 if half_life is None else float(half_life)
    if h <= 0:
        raise ValueError("half_life must be positive")
    a = np.power(0.5, k / h)
    a[-1] = 0.0
    return a


def learned_prices(da: DaInstance, order, eps: float, seed: Optional[int], shrink: bool = False) -> np.ndarray:
    """Sample prices converted to per-impression units (``beta_j / n(j)``)."""
    plp = normalize(da_to_plp(da))
    f = 1.0
    if shrink:
        f = shrink_factor(eps)
        plp = normalize(plp.scale_capacity(1.0 / f))
    prices = train(plp, order, eps, seed)
    return prices.beta * f / da.demand


def run_hybrid(
    da: DaInstance,
    order,
    eps: float,
    seed: Optional[int] = 0,
    schedule: str = "linear",
    half_life: Optional[float] = None,
) -> Allocation:
    """PD_AVG on the training prefix, then a blend drifting from learned prices to PD_AVG."""
    order = _check_order(da, order)
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    s = sample_size(da.n_impressions, eps)
    if s < 1:
        raise ValueError(f"sample is empty: floor({eps} * {da.n_impressions}) < 1")
    fixed = learned_prices(da, order, eps, seed)
    alpha = np.zeros(order.size)
    alpha[s:] = hybrid_alpha(order.size - s, schedule, half_life)
    res = _stream(da, order, kernels.RULE_AVG, np.ones(order.size, dtype=np.int8), alpha, fixed)
    return _allocation(da, res, "hybrid")


def run_dualbase(
    da: DaInstance,
    order,
    eps: float,
    seed: Optional[int] = 0,
    training_policy: str = "skip",
    shrink: bool = False,
) -> Allocation:
    """DualBase on a DA instance, keeping the top ``n(j)`` per advertiser.

    Post-sample impressions face the fixed learned prices; the sample is
    skipped or, with ``training_policy='online'``, assigned by PD_AVG.
    """
    if training_policy not in ("skip", "online"):
        raise ValueError("training_policy must be 'skip' or 'online'")
    order = _check_order(da, order)
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    s = sample_size(da.n_impressions, eps)
    if s < 1:
        raise ValueError(f"sample is empty: floor({eps} * {da.n_impressions}) < 1")
    fixed = learned_prices(da, order, eps, seed, shrink)
    offer = np.ones(order.size, dtype=np.int8)
    if training_policy == "skip":
        offer[:s] = 0
    alpha = np.ones(order.size)
    alpha[:s] = 0.0
    res = _stream(da, order, kernels.RULE_AVG, offer, alpha, fixed)
    return _allocation(da, res, "dualbase")


def kept_sets(alloc: Allocation, n_advertisers: int) -> list:
    """Kept weights per advertiser, each sorted non-increasing."""
    out = [[] for _ in range(n_advertisers)]
    for i, j in enumerate(alloc.assigned.tolist()):
        if j >= 0:
            out[j].append(float(alloc.weight[i]))
    return [sorted(k, reverse=True) for k in out]


__all__ = [
    "AdvertiserState", "Allocation", "BETA_RULES", "RULES", "SCHEDULES",
    "assign_impression", "beta_avg", "beta_exp", "beta_greedy", "hybrid_alpha",
    "kept_sets", "learned_prices", "run_dualbase", "run_hybrid", "run_online",
]
