"""Training-based primal-dual allocation (DualBase).

Observe the first ``floor(eps * n)`` agents, price each resource with the
optimal dual of that sample LP at capacity ``eps``, then give every later
agent its maximum-gain option whenever that gain is nonnegative.  Prices
are posted, not updated, and capacities are measured afterwards rather
than enforced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from . import kernels
from .instance import DaInstance, PlpInstance, log_factor, normalize
from .lp import DualPrices, solve_reduced_dual

PERTURB_DELTA = 1e-9
TRAINING_POLICIES = ("skip", "online")


def sample_size(n: int, eps: float) -> int:
    """``floor(eps * n)``, guarded against ``0.1 * 30 = 3.0000000000000004``-style noise."""
    return int(math.floor(eps * n + 1e-9))


def shrink_factor(eps: float) -> float:
    """Capacity overshoot allowed for a good sample: ``1 + 3 (eps + eps^2)``."""
    return 1.0 + 3.0 * (eps + eps * eps)


def perturbed_weights(inst: PlpInstance, seed: Optional[int], delta: float = PERTURB_DELTA) -> np.ndarray:
    """``w * (1 + u * delta)`` with ``u ~ U[0, 1)`` drawn per option from ``seed``."""
    if seed is None:
        return inst.weight.copy()
    u = np.random.default_rng(seed).random(inst.n_options)
    return inst.weight * (1.0 + u * delta)


def gain(prices: DualPrices, weight: float, usage: Mapping[str, float]) -> float:
    """``weight - sum_j beta_j * usage_j``.

    >>> p = DualPrices([2.0, 0.0], ("r0", "r1"))
    >>> gain(p, 5.0, {"r0": 1.0, "r1": 3.0})
    3.0
    """
    index = {r: j for j, r in enumerate(prices.resource_ids)}
    g = float(weight)
    for rid, a in usage.items():
        if rid not in index:
            raise KeyError(f"no price for resource {rid!r}")
        g -= prices.beta[index[rid]] * a
    return g


def gains(prices: DualPrices, inst: PlpInstance, weights: Optional[np.ndarray] = None) -> np.ndarray:
    """Gain of every option of ``inst`` (vectorized :func:`gain`)."""
    if tuple(prices.resource_ids) != inst.resource_ids:
        raise ValueError("prices and instance use different resources")
    w = inst.weight if weights is None else weights
    owner = np.repeat(np.arange(inst.n_options), np.diff(inst.usage_ptr))
    cost = np.bincount(owner, weights=prices.beta[inst.usage_res] * inst.usage_val, minlength=inst.n_options)
    return w - cost


def best_options(inst: PlpInstance, g: np.ndarray) -> np.ndarray:
    """Per agent, the first option of maximum gain if that gain is >= 0, else -1."""
    n = inst.n_agents
    choice = np.full(n, -1, dtype=np.int64)
    counts = np.diff(inst.agent_ptr)
    nonempty = np.flatnonzero(counts > 0)
    if nonempty.size == 0:
        return choice
    starts = inst.agent_ptr[nonempty]
    gmax = np.maximum.reduceat(g, starts)
    full_max = np.full(n, -np.inf)
    full_max[nonempty] = gmax
    idx = np.arange(inst.n_options)
    hit = np.where(g == full_max[inst.option_agent], idx, inst.n_options)
    first = np.minimum.reduceat(hit, starts)
    ok = gmax >= 0.0
    choice[nonempty[ok]] = first[ok]
    return choice


# ---------------------------------------------------------------------------


def train(inst: PlpInstance, order, eps: float, seed: Optional[int] = 0) -> DualPrices:
    """Prices from the reduced dual on the first ``floor(eps * n)`` agents of ``order``.

    Weights are perturbed (relative 1e-9, seeded) before solving so that the
    learned prices do not sit exactly on ties.
    """
    if not inst.is_normalized:
        raise ValueError("train expects a normalized instance (all capacities 1)")
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    order = np.asarray(order, dtype=np.int64)
    s = sample_size(inst.n_agents, eps)
    if s < 1:
        raise ValueError(f"sample is empty: floor({eps} * {inst.n_agents}) < 1")
    pert = inst.replace(weight=perturbed_weights(inst, seed))
    prices = solve_reduced_dual(pert.subset(order[:s]), eps)
    prices.perturb_seed = seed
    return prices


@dataclass
class PlpAllocation:
    """One option (or none) per agent; usage is measured, not enforced."""

    choice: np.ndarray
    value: float
    usage: np.ndarray
    capacity: np.ndarray
    z: np.ndarray
    resource_ids: tuple = ()
    sample_value: float = 0.0

    @property
    def violation(self) -> float:
        """``max_j usage_j / c_j`` (0 for no resources)."""
        if self.usage.size == 0:
            return 0.0
        return float((self.usage / self.capacity).max())

    @property
    def selected(self) -> int:
        return int((self.choice >= 0).sum())

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "sample_value": self.sample_value,
            "selected": self.selected,
            "violation": self.violation,
            "utilization": {
                r: float(u / c) for r, u, c in zip(self.resource_ids, self.usage, self.capacity)
            },
        }


def _usage_of(inst: PlpInstance, choice: np.ndarray) -> np.ndarray:
    x = np.zeros(inst.n_options)
    x[choice[choice >= 0]] = 1.0
    owner = np.repeat(np.arange(inst.n_options), np.diff(inst.usage_ptr))
    return np.bincount(inst.usage_res, weights=inst.usage_val * x[owner], minlength=inst.n_resources)


def plp_as_da(inst: PlpInstance) -> DaInstance:
    """Recover the b-matching view of a PLP whose options each use one resource uniformly.

    Raises ``ValueError`` when ``inst`` is not of that shape.
    """
    per_opt = np.diff(inst.usage_ptr)
    if np.any(per_opt != 1):
        raise ValueError("instance is not a b-matching: some option uses != 1 resource")
    demand = np.zeros(inst.n_resources, dtype=np.int64)
    for j in range(inst.n_resources):
        vals = inst.usage_val[inst.usage_res == j]
        if vals.size == 0:
            d = inst.capacity[j]
        else:
            if np.any(vals != vals[0]) or vals[0] <= 0:
                raise ValueError("instance is not a b-matching: unequal usage on a resource")
            d = inst.capacity[j] / vals[0]
        if abs(d - round(d)) > 1e-9 or round(d) < 1:
            raise ValueError("instance is not a b-matching: non-integral demand")
        demand[j] = int(round(d))
    if np.any(inst.weight <= 0):
        raise ValueError("b-matching view needs positive weights")
    return DaInstance(
        advertiser_ids=inst.resource_ids,
        demand=demand,
        impression_ids=inst.agent_ids,
        edge_ptr=inst.agent_ptr,
        edge_adv=inst.usage_res,
        edge_weight=inst.weight,
    )


def allocate_remaining(
    prices: DualPrices,
    inst: PlpInstance,
    order,
    eps: float,
    training_policy: str = "skip",
) -> PlpAllocation:
    """Post prices to every agent after the sample prefix of ``order``.

    ``training_policy='skip'`` leaves the sampled agents unassigned;
    ``'online'`` assigns them with PD_AVG (b-matching instances only).
    """
    if training_policy not in TRAINING_POLICIES:
        raise ValueError(f"training_policy must be one of {TRAINING_POLICIES}")
    order = np.asarray(order, dtype=np.int64)
    s = sample_size(inst.n_agents, eps)
    w_pert = perturbed_weights(inst, prices.perturb_seed)
    g = gains(prices, inst, w_pert)
    best = best_options(inst, g)
    rest = order[s:]
    choice = np.full(inst.n_agents, -1, dtype=np.int64)
    choice[rest] = best[rest]
    z = np.zeros(inst.n_agents)
    picked = rest[best[rest] >= 0]
    z[picked] = g[best[picked]]

    sample_value = 0.0
    if training_policy == "online" and s > 0:
        da = plp_as_da(inst)
        offer = np.zeros(order.size, dtype=np.int8)
        offer[:s] = 1
        res = _stream(da, order, kernels.RULE_AVG, offer)
        assigned = res[0]
        for i in order[:s]:
            j = assigned[i]
            if j >= 0:
                lo, hi = inst.agent_ptr[i], inst.agent_ptr[i + 1]
                k = lo + int(np.flatnonzero(inst.usage_res[lo:hi] == j)[0])
                choice[i] = k
                z[i] = res[5][i]
                sample_value += float(inst.weight[k])

    sel = choice[choice >= 0]
    value = float(inst.weight[sel].sum())
    return PlpAllocation(
        choice=choice,
        value=value,
        usage=_usage_of(inst, choice),
        capacity=inst.capacity.copy(),
        z=z,
        resource_ids=inst.resource_ids,
        sample_value=sample_value,
    )


def _stream(da: DaInstance, order, rule: int, offer, alpha=None, fixed_beta=None):
    n = da.n_impressions
    order = np.asarray(order, dtype=np.int64)
    if alpha is None:
        alpha = np.zeros(order.size)
    if fixed_beta is None:
        fixed_beta = np.zeros(da.n_advertisers)
    deg = np.bincount(da.edge_adv, minlength=da.n_advertisers)
    room = np.minimum(da.demand, deg)
    buf_off = np.concatenate([[0], np.cumsum(room)]).astype(np.int64)
    return kernels.stream(
        da.edge_ptr, da.edge_adv, da.edge_weight, da.demand.astype(np.int64), order,
        int(rule), np.asarray(alpha, dtype=np.float64), np.asarray(fixed_beta, dtype=np.float64),
        np.asarray(offer, dtype=np.int8), buf_off,
    )


def run_dualbase(
    inst: PlpInstance,
    order,
    eps: float,
    seed: Optional[int] = 0,
    training_policy: str = "skip",
    shrink: bool = False,
) -> tuple:
    """Normalize, optionally shrink capacities, train and allocate.

    With ``shrink`` the prices are learned (and gains evaluated) on
    capacities divided by :func:`shrink_factor`; usage in the returned
    allocation is still reported against the original capacities.
    Returns ``(prices, allocation)``.
    """
    base = normalize(inst)
    work = base
    if shrink:
        work = normalize(base.scale_capacity(1.0 / shrink_factor(eps)))
    prices = train(work, order, eps, seed)
    alloc = allocate_remaining(prices, work, order, eps, training_policy)
    if shrink:
        alloc.usage = _usage_of(base, alloc.choice)
        alloc.capacity = base.capacity.copy()
    return prices, alloc


# ---------------------------------------------------------------------------
# Sample diagnostics
# ---------------------------------------------------------------------------


@dataclass
class SampleDiagnostics:
    W: float
    W_S: float
    C: np.ndarray
    C_S: np.ndarray
    r: np.ndarray
    t: float
    r_threshold: np.ndarray
    t_threshold: float
    rj_bad: np.ndarray
    t_bad: bool
    resource_ids: tuple = ()
    selected: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def any_bad(self) -> bool:
        return bool(self.t_bad or self.rj_bad.any())

    def to_dict(self) -> dict:
        return {
            "W": self.W,
            "W_S": self.W_S,
            "t": self.t,
            "t_threshold": self.t_threshold,
            "t_bad": bool(self.t_bad),
            "selected": self.selected,
            "resources": {
                rid: {
                    "C": float(self.C[j]),
                    "C_S": float(self.C_S[j]),
                    "r": float(self.r[j]),
                    "threshold": float(self.r_threshold[j]),
                    "bad": bool(self.rj_bad[j]),
                }
                for j, rid in enumerate(self.resource_ids)
            },
            "any_bad": self.any_bad,
        }


def diagnose_sample(inst: PlpInstance, order, eps: float, prices: DualPrices) -> SampleDiagnostics:
    """Deviation of the sample's share of the max-gain options from its expectation.

    The max-gain options are taken over the whole instance at the given
    prices; a sample is flagged when its weight or per-resource usage
    deviates from ``eps`` times the total by at least the concentration
    threshold.  A zero deviation is never flagged.
    """
    if not inst.is_normalized:
        raise ValueError("diagnose_sample expects a normalized instance")
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    order = np.asarray(order, dtype=np.int64)
    n, m = inst.n_agents, inst.n_resources
    s = sample_size(n, eps)
    g = gains(prices, inst, perturbed_weights(inst, prices.perturb_seed))
    best = best_options(inst, g)
    in_sample = np.zeros(n, dtype=bool)
    in_sample[order[:s]] = True

    x = np.zeros(inst.n_options)
    x[best[best >= 0]] = 1.0
    xs = np.zeros(inst.n_options)
    sb = best[in_sample & (best >= 0)]
    xs[sb] = 1.0
    owner = np.repeat(np.arange(inst.n_options), np.diff(inst.usage_ptr))
    C = np.bincount(inst.usage_res, weights=inst.usage_val * x[owner], minlength=m)
    C_S = np.bincount(inst.usage_res, weights=inst.usage_val * xs[owner], minlength=m)
    W = math.fsum(inst.weight[best[best >= 0]])
    W_S = math.fsum(inst.weight[sb])
    r = np.abs(C_S - eps * C)
    t = abs(W_S - eps * W)

    q = max(inst.q, 1)
    L = log_factor(m, max(n, 1), q)
    a_max = float(inst.usage_val.max()) if inst.usage_val.size else 0.0
    w_max = float(inst.weight.max()) if inst.n_options else 0.0
    r_thr = L * a_max + np.sqrt(C) * 2.0 * math.sqrt(eps * L * a_max)
    t_thr = L * w_max + math.sqrt(W) * 2.0 * math.sqrt(eps * L * w_max)
    rj_bad = (r >= r_thr) & (r > 0)
    t_bad = bool(t >= t_thr and t > 0)
    return SampleDiagnostics(
        W=W, W_S=W_S, C=C, C_S=C_S, r=r, t=t, r_threshold=r_thr, t_threshold=t_thr,
        rj_bad=rj_bad, t_bad=t_bad, resource_ids=inst.resource_ids,
        selected=int((best >= 0).sum()),
    )


def run_record(prices: DualPrices, alloc: PlpAllocation, diag: Optional[SampleDiagnostics] = None) -> dict:
    """JSON-ready summary of one DualBase run."""
    out = {"prices": prices.to_dict(), "allocation": alloc.to_dict()}
    if diag is not None:
        out["diagnostics"] = {
            "W": diag.W,
            "W_S": diag.W_S,
            "t_bad": bool(diag.t_bad),
            "rj_bad": int(diag.rj_bad.sum()),
            "any_bad": diag.any_bad,
        }
    return out


__all__ = [
    "DualPrices", "PERTURB_DELTA", "PlpAllocation", "SampleDiagnostics",
    "allocate_remaining", "best_options", "diagnose_sample", "gain", "gains",
    "perturbed_weights", "plp_as_da", "run_dualbase", "run_record", "sample_size",
    "shrink_factor", "train",
]
