"""Ideal offline fair allocations and the fairness distance f(x).

Each advertiser walks down its impressions in order of preference,
becoming interested in one more impression per step until it has
received ``n(j)`` impressions' worth of mass or has run out.  Every
impression is split among its interested advertisers by a sharing
policy.  The result is the shortest fair allocation under that policy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .instance import DaInstance

SAT_TOL = 1e-9
POLICIES = tuple(kernels.POLICY_NAMES)


@dataclass(frozen=True)
class SharingPolicy:
    kind: str = "equal"

    def __post_init__(self):
        if self.kind not in kernels.POLICY_NAMES:
            raise ValueError(f"unknown sharing policy {self.kind!r}; expected one of {POLICIES}")

    @property
    def code(self) -> int:
        return kernels.POLICY_NAMES[self.kind]

    def shares(self, advertisers, weights) -> np.ndarray:
        """Fractions given to ``advertisers`` (indices) with edge ``weights``."""
        return share(self.kind, advertisers, weights)


def share(kind: str, advertisers, weights) -> np.ndarray:
    """Split one impression among the interested ``advertisers``.

    >>> share("equal", [0, 1], [3.0, 1.0]).tolist()
    [0.5, 0.5]
    >>> share("proportional", [0, 1], [3.0, 1.0]).tolist()
    [0.75, 0.25]
    >>> share("stable_matching", [4, 2], [5.0, 5.0]).tolist()
    [0.0, 1.0]
    """
    members = np.asarray(advertisers, dtype=np.int64)
    w = np.asarray(weights, dtype=np.float64)
    out = np.zeros(members.size)
    if members.size:
        kernels._share(kernels.POLICY_NAMES[kind], members, w, members.size, out)
    return out


def preference_order(da: DaInstance) -> tuple:
    """Each advertiser's edges by non-increasing weight, ties by impression index.

    Returns ``(pref_ptr, pref_edge)`` in CSR form over advertisers.
    """
    edge_imp = da.edge_impression
    # lexsort: last key is primary
    idx = np.lexsort((edge_imp, -da.edge_weight, da.edge_adv))
    counts = np.bincount(da.edge_adv, minlength=da.n_advertisers)
    ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return ptr, idx.astype(np.int64)


@dataclass
class FairAllocation:
    x: np.ndarray  # fraction per edge
    prefix: np.ndarray  # p(j)
    mass: np.ndarray  # sum_i x_ij
    v: np.ndarray  # sum_i w_ij x_ij
    interested: np.ndarray  # per edge
    policy: str
    advances: int
    advertiser_ids: tuple = ()
    impression_ids: tuple = ()

    @property
    def value(self) -> float:
        return float(self.v.sum())

    def to_dict(self, da: DaInstance) -> dict:
        imp = da.edge_impression
        entries = [
            {"impression": da.impression_ids[imp[e]], "advertiser": da.advertiser_ids[da.edge_adv[e]], "x": float(self.x[e])}
            for e in np.flatnonzero(self.x > 0)
        ]
        return {
            "policy": self.policy,
            "value": self.value,
            "x": entries,
            "prefix": {a: int(p) for a, p in zip(da.advertiser_ids, self.prefix)},
            "mass": {a: float(s) for a, s in zip(da.advertiser_ids, self.mass)},
            "v": {a: float(s) for a, s in zip(da.advertiser_ids, self.v)},
        }


def compute_fair(da: DaInstance, policy="equal", order=None) -> FairAllocation:
    """Shortest fair allocation under ``policy``.

    ``order`` is the advertiser processing order inside each round-robin
    pass (default: by index).
    """
    pol = policy if isinstance(policy, SharingPolicy) else SharingPolicy(policy)
    m = da.n_advertisers
    proc = np.arange(m, dtype=np.int64) if order is None else np.asarray(order, dtype=np.int64)
    if proc.shape != (m,) or not np.array_equal(np.sort(proc), np.arange(m)):
        raise ValueError("order must be a permutation of the advertisers")
    ptr, pref = preference_order(da)
    edge_imp = da.edge_impression
    x, p, advances = kernels.fair(
        ptr, pref, da.edge_ptr, da.edge_adv, da.edge_weight, edge_imp,
        da.demand.astype(np.float64), pol.code, proc, SAT_TOL,
    )
    interested = np.zeros(da.edge_adv.size, dtype=bool)
    for j in range(m):
        interested[pref[ptr[j]:ptr[j] + p[j]]] = True
    return FairAllocation(
        x=x,
        prefix=p,
        mass=edge_sums(da, x),
        v=advertiser_values(x, da),
        interested=interested,
        policy=pol.kind,
        advances=int(advances),
        advertiser_ids=da.advertiser_ids,
        impression_ids=da.impression_ids,
    )


# ---------------------------------------------------------------------------
# values and the fairness metric


def edge_sums(da: DaInstance, x) -> np.ndarray:
    return np.bincount(da.edge_adv, weights=np.asarray(x, dtype=np.float64), minlength=da.n_advertisers)


def advertiser_values(x, da: DaInstance) -> np.ndarray:
    """``v_j(x) = sum_i w_ij x_ij`` for every advertiser; ``x`` is per edge."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != da.edge_weight.shape:
        raise ValueError("x must give one fraction per edge")
    return np.bincount(da.edge_adv, weights=da.edge_weight * x, minlength=da.n_advertisers)


def advertiser_value(x, da: DaInstance, j: int) -> float:
    return float(advertiser_values(x, da)[j])


def total_value(x, da: DaInstance) -> float:
    return float(advertiser_values(x, da).sum())


def fairness_from_values(v, v_star) -> float:
    """``sum_j |V*/V * v_j - v*_j|``; an allocation of value 0 scores ``V*``."""
    v = np.asarray(v, dtype=np.float64)
    v_star = np.asarray(v_star, dtype=np.float64)
    V = v.sum()
    V_star = v_star.sum()
    if V <= 0:
        return float(np.abs(v_star).sum())
    return float(np.abs(V_star / V * v - v_star).sum())


def fairness_metric(x, x_star, da: DaInstance) -> float:
    """Fairness distance of ``x`` from the ideal ``x_star`` (both per edge)."""
    return fairness_from_values(advertiser_values(x, da), advertiser_values(x_star, da))


def integral_x(da: DaInstance, assigned) -> np.ndarray:
    """Per-edge 0/1 vector from an impression -> advertiser map (-1 for none)."""
    assigned = np.asarray(assigned, dtype=np.int64)
    x = np.zeros(da.edge_adv.size)
    imp = da.edge_impression
    x[assigned[imp] == da.edge_adv] = 1.0
    return x


# ---------------------------------------------------------------------------
# fairness checker


@dataclass
class FairCheck:
    prefix_ok: bool
    policy_ok: bool
    satisfied_ok: bool
    max_policy_error: float
    unsatisfied: tuple

    @property
    def passed(self) -> bool:
        return self.prefix_ok and self.policy_ok and self.satisfied_ok


def check_fair(da: DaInstance, x, interested, policy="equal", tol: float = 1e-9) -> FairCheck:
    """Test the three conditions for ``x`` to be fair under ``policy``.

    ``interested`` marks, per edge, whether the advertiser is interested
    in that impression.  The interested set must be a prefix of the
    advertiser's weight order (equal weights may be taken in any order),
    ``x`` must equal the policy's split of every impression among its
    interested advertisers, and each advertiser must be interested in
    all its impressions or receive at least ``n(j)``.
    """
    pol = policy if isinstance(policy, SharingPolicy) else SharingPolicy(policy)
    x = np.asarray(x, dtype=np.float64)
    interested = np.asarray(interested, dtype=bool)
    if x.shape != da.edge_weight.shape or interested.shape != x.shape:
        raise ValueError("x and interested must be per-edge arrays")

    prefix_ok = True
    for j in range(da.n_advertisers):
        sel = da.edge_adv == j
        w_in = da.edge_weight[sel & interested]
        w_out = da.edge_weight[sel & ~interested]
        if w_in.size and w_out.size and w_in.min() < w_out.max():
            prefix_ok = False
            break

    err = 0.0
    for i in range(da.n_impressions):
        lo, hi = da.edge_ptr[i], da.edge_ptr[i + 1]
        want = np.zeros(hi - lo)
        mask = interested[lo:hi]
        if mask.any():
            want[mask] = pol.shares(da.edge_adv[lo:hi][mask], da.edge_weight[lo:hi][mask])
        if hi > lo:
            err = max(err, float(np.abs(x[lo:hi] - want).max()))

    mass = edge_sums(da, x)
    unsat = []
    for j in range(da.n_advertisers):
        sel = da.edge_adv == j
        if not interested[sel].all() and mass[j] < da.demand[j] - tol:
            unsat.append(da.advertiser_ids[j])
    return FairCheck(
        prefix_ok=prefix_ok,
        policy_ok=err <= tol,
        satisfied_ok=not unsat,
        max_policy_error=err,
        unsatisfied=tuple(unsat),
    )


# ---------------------------------------------------------------------------
# worked instances


def two_by_two() -> DaInstance:
    """Two impressions, two unit-demand advertisers with weights 100/10 and 4/6."""
    return DaInstance.from_records(
        [("a", 1), ("b", 1)],
        [("1", [("a", 100.0), ("b", 4.0)]), ("2", [("a", 10.0), ("b", 6.0)])],
    )


def sharing_gap_instance(K: int, eps: Optional[float] = None) -> DaInstance:
    """``K^2`` unit-demand advertisers all wanting one special impression.

    Advertiser 0 values the special impression at ``K``, everyone else at 1.
    Advertiser ``j`` also values its own private impression at ``eps``
    (default ``1 / (2 K^2)``).
    """
    if K < 2:
        raise ValueError("K must be at least 2")
    n_adv = K * K
    e = 1.0 / (2.0 * n_adv) if eps is None else float(eps)
    if not 0.0 < e < 1.0 / n_adv:
        raise ValueError("eps must lie in (0, 1/K^2)")
    width = len(str(n_adv - 1))
    ids = [f"a{j:0{width}d}" for j in range(n_adv)]
    advertisers = [(a, 1) for a in ids]
    impressions = [("special", [(ids[0], float(K))] + [(a, 1.0) for a in ids[1:]])]
    impressions += [(f"p{j:0{width}d}", [(ids[j], e)]) for j in range(n_adv)]
    return DaInstance.from_records(advertisers, impressions)


__all__ = [
    "FairAllocation", "FairCheck", "POLICIES", "SAT_TOL", "SharingPolicy",
    "advertiser_value", "advertiser_values", "check_fair", "compute_fair",
    "edge_sums", "fairness_from_values", "fairness_metric", "integral_x",
    "preference_order", "share", "sharing_gap_instance", "total_value", "two_by_two",
]
