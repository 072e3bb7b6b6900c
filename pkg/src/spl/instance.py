"""Packing instances: data model, conversion, generators and JSON I/O.

A :class:`PlpInstance` stores its options in flat CSR-style arrays so the
numeric kernels can walk them without touching Python objects:

* options of agent ``i`` are ``agent_ptr[i]:agent_ptr[i + 1]``;
* usage of option ``k`` is ``usage_res[usage_ptr[k]:usage_ptr[k + 1]]``
  (resource indices) with values ``usage_val[...]``.

:class:`DaInstance` is the display-ad special case: advertisers with
integer demands and impressions with weighted eligibility edges.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


class InstanceError(ValueError):
    """Invalid instance data or a malformed instance file."""

    def __init__(self, message: str, *, line: int | None = None, text: str | None = None):
        self.line = line
        self.text = text
        if line is not None:
            message = f"line {line}: {message}"
            if text is not None:
                message = f"{message}\n    {text.rstrip()}"
        super().__init__(message)


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _check_ptr(ptr: np.ndarray, length: int, total: int, what: str) -> None:
    if ptr.ndim != 1 or ptr.shape[0] != length + 1:
        raise InstanceError(f"{what} pointer has wrong length")
    if ptr[0] != 0 or ptr[-1] != total or np.any(np.diff(ptr) < 0):
        raise InstanceError(f"{what} pointer is not a valid offset array")


@dataclass(frozen=True, eq=False)
class PlpInstance:
    """General packing instance (resources, agents, mutually exclusive options)."""

    resource_ids: tuple
    capacity: np.ndarray
    agent_ids: tuple
    agent_ptr: np.ndarray
    option_ids: tuple
    weight: np.ndarray
    usage_ptr: np.ndarray
    usage_res: np.ndarray
    usage_val: np.ndarray

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "resource_ids", tuple(str(r) for r in self.resource_ids))
        set_(self, "agent_ids", tuple(str(a) for a in self.agent_ids))
        set_(self, "option_ids", tuple(str(o) for o in self.option_ids))
        set_(self, "capacity", _frozen(self.capacity, np.float64).reshape(-1))
        set_(self, "agent_ptr", _frozen(self.agent_ptr, np.int64).reshape(-1))
        set_(self, "weight", _frozen(self.weight, np.float64).reshape(-1))
        set_(self, "usage_ptr", _frozen(self.usage_ptr, np.int64).reshape(-1))
        set_(self, "usage_res", _frozen(self.usage_res, np.int64).reshape(-1))
        set_(self, "usage_val", _frozen(self.usage_val, np.float64).reshape(-1))
        self._validate()

    def _validate(self) -> None:
        m, n, k = len(self.resource_ids), len(self.agent_ids), len(self.option_ids)
        if len(set(self.resource_ids)) != m:
            raise InstanceError("duplicate resource id")
        if len(set(self.agent_ids)) != n:
            raise InstanceError("duplicate agent id")
        if self.capacity.shape[0] != m:
            raise InstanceError("capacity length differs from resource count")
        if not np.all(np.isfinite(self.capacity)) or np.any(self.capacity <= 0):
            bad = int(np.argmin(np.where(np.isfinite(self.capacity), self.capacity, -np.inf)))
            raise InstanceError(
                f"resource {self.resource_ids[bad]!r}: capacity must be positive and finite"
            )
        _check_ptr(self.agent_ptr, n, k, "agent")
        if self.weight.shape[0] != k:
            raise InstanceError("weight length differs from option count")
        if not np.all(np.isfinite(self.weight)) or np.any(self.weight < 0):
            raise InstanceError("option weights must be nonnegative and finite")
        _check_ptr(self.usage_ptr, k, self.usage_res.shape[0], "usage")
        if self.usage_val.shape != self.usage_res.shape:
            raise InstanceError("usage value/resource arrays differ in length")
        if self.usage_res.size and (self.usage_res.min() < 0 or self.usage_res.max() >= m):
            raise InstanceError("usage references an unknown resource")
        if not np.all(np.isfinite(self.usage_val)) or np.any(self.usage_val < 0):
            raise InstanceError("usage values must be nonnegative and finite")
        for i in range(n):
            lo, hi = self.agent_ptr[i], self.agent_ptr[i + 1]
            ids = self.option_ids[lo:hi]
            if len(set(ids)) != len(ids):
                raise InstanceError(f"agent {self.agent_ids[i]!r}: duplicate option id")
        # one usage entry per (option, resource)
        if self.usage_res.size:
            owner = np.repeat(np.arange(k), np.diff(self.usage_ptr))
            pairs = owner * max(m, 1) + self.usage_res
            if np.unique(pairs).size != pairs.size:
                raise InstanceError("an option lists the same resource twice")

    # -- shape -----------------------------------------------------------
    @property
    def n_resources(self) -> int:
        return len(self.resource_ids)

    @property
    def n_agents(self) -> int:
        return len(self.agent_ids)

    @property
    def n_options(self) -> int:
        return len(self.option_ids)

    @property
    def q(self) -> int:
        """Largest option count of any agent (0 for an empty instance)."""
        if self.n_agents == 0:
            return 0
        return int(np.diff(self.agent_ptr).max())

    @cached_property
    def option_agent(self) -> np.ndarray:
        """Agent index owning each option."""
        arr = np.repeat(np.arange(self.n_agents, dtype=np.int64), np.diff(self.agent_ptr))
        arr.setflags(write=False)
        return arr

    def usage_dense(self) -> np.ndarray:
        """Dense ``(n_options, n_resources)`` usage matrix."""
        dense = np.zeros((self.n_options, self.n_resources))
        owner = np.repeat(np.arange(self.n_options), np.diff(self.usage_ptr))
        dense[owner, self.usage_res] = self.usage_val
        return dense

    def option_usage(self, k: int) -> dict:
        lo, hi = self.usage_ptr[k], self.usage_ptr[k + 1]
        return {
            self.resource_ids[r]: float(v)
            for r, v in zip(self.usage_res[lo:hi], self.usage_val[lo:hi])
        }

    @property
    def is_normalized(self) -> bool:
        return bool(np.all(self.capacity == 1.0))

    # -- derived instances ---------------------------------------------------
    def replace(self, **changes) -> "PlpInstance":
        fields_ = {
            name: getattr(self, name)
            for name in (
                "resource_ids", "capacity", "agent_ids", "agent_ptr", "option_ids",
                "weight", "usage_ptr", "usage_res", "usage_val",
            )
        }
        fields_.update(changes)
        return PlpInstance(**fields_)

    def subset(self, agents: Sequence[int]) -> "PlpInstance":
        """Instance restricted to ``agents`` (in the given order), same resources."""
        agents = np.asarray(agents, dtype=np.int64)
        if agents.size == 0:
            return self.replace(
                agent_ids=(), agent_ptr=[0], option_ids=(), weight=[],
                usage_ptr=[0], usage_res=[], usage_val=[],
            )
        counts = np.diff(self.agent_ptr)[agents]
        opts = np.concatenate(
            [np.arange(self.agent_ptr[i], self.agent_ptr[i + 1]) for i in agents]
        ).astype(np.int64)
        ucounts = np.diff(self.usage_ptr)[opts]
        if ucounts.sum():
            uidx = np.concatenate(
                [np.arange(self.usage_ptr[k], self.usage_ptr[k + 1]) for k in opts]
            ).astype(np.int64)
        else:
            uidx = np.zeros(0, dtype=np.int64)
        return PlpInstance(
            resource_ids=self.resource_ids,
            capacity=self.capacity,
            agent_ids=tuple(self.agent_ids[i] for i in agents),
            agent_ptr=np.concatenate([[0], np.cumsum(counts)]),
            option_ids=tuple(self.option_ids[k] for k in opts),
            weight=self.weight[opts],
            usage_ptr=np.concatenate([[0], np.cumsum(ucounts)]),
            usage_res=self.usage_res[uidx],
            usage_val=self.usage_val[uidx],
        )

    def scale_capacity(self, factor: float) -> "PlpInstance":
        return self.replace(capacity=self.capacity * factor)

    def scale_weights(self, factor: float) -> "PlpInstance":
        return self.replace(weight=self.weight * factor)

    # -- records -------------------------------------------------------------
    @classmethod
    def from_records(cls, resources: Iterable, agents: Iterable) -> "PlpInstance":
        """Build from ``[(rid, cap), ...]`` and ``[(aid, [(oid, w, {rid: a}), ...]), ...]``."""
        resources = list(resources)
        rids = [str(r) for r, _ in resources]
        index = {r: j for j, r in enumerate(rids)}
        agent_ids, agent_ptr, option_ids, weight = [], [0], [], []
        usage_ptr, usage_res, usage_val = [0], [], []
        for aid, options in agents:
            agent_ids.append(str(aid))
            for oid, w, usage in options:
                option_ids.append(str(oid))
                weight.append(w)
                for rid, a in usage.items():
                    if str(rid) not in index:
                        raise InstanceError(
                            f"agent {aid!r} option {oid!r}: unknown resource {rid!r}"
                        )
                    usage_res.append(index[str(rid)])
                    usage_val.append(a)
                usage_ptr.append(len(usage_res))
            agent_ptr.append(len(option_ids))
        return cls(
            resource_ids=tuple(rids),
            capacity=[c for _, c in resources],
            agent_ids=tuple(agent_ids),
            agent_ptr=agent_ptr,
            option_ids=tuple(option_ids),
            weight=weight,
            usage_ptr=usage_ptr,
            usage_res=np.array(usage_res, dtype=np.int64),
            usage_val=np.array(usage_val, dtype=np.float64),
        )

    def to_dict(self) -> dict:
        agents = []
        for i, aid in enumerate(self.agent_ids):
            opts = []
            for k in range(self.agent_ptr[i], self.agent_ptr[i + 1]):
                opts.append(
                    {
                        "id": self.option_ids[k],
                        "weight": float(self.weight[k]),
                        "usage": self.option_usage(k),
                    }
                )
            agents.append({"id": aid, "options": opts})
        return {
            "resources": [
                {"id": r, "capacity": float(c)}
                for r, c in zip(self.resource_ids, self.capacity)
            ],
            "agents": agents,
        }

    def __eq__(self, other):
        if not isinstance(other, PlpInstance):
            return NotImplemented
        return (
            self.resource_ids == other.resource_ids
            and self.agent_ids == other.agent_ids
            and self.option_ids == other.option_ids
            and all(
                np.array_equal(getattr(self, a), getattr(other, a))
                for a in ("capacity", "agent_ptr", "weight", "usage_ptr", "usage_res", "usage_val")
            )
        )

    __hash__ = None

    def __repr__(self):
        return (
            f"PlpInstance(m={self.n_resources}, n={self.n_agents}, "
            f"options={self.n_options}, q={self.q})"
        )


@dataclass(frozen=True, eq=False)
class DaInstance:
    """Display-ad instance: advertisers with demands, impressions with weighted edges."""

    advertiser_ids: tuple
    demand: np.ndarray
    impression_ids: tuple
    edge_ptr: np.ndarray
    edge_adv: np.ndarray
    edge_weight: np.ndarray

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "advertiser_ids", tuple(str(a) for a in self.advertiser_ids))
        set_(self, "impression_ids", tuple(str(i) for i in self.impression_ids))
        demand = np.asarray(self.demand)
        if demand.size and not np.all(np.isfinite(demand.astype(np.float64))):
            raise InstanceError("demands must be finite")
        if demand.size and np.any(demand.astype(np.float64) != np.round(demand.astype(np.float64))):
            raise InstanceError("demands must be integers")
        set_(self, "demand", _frozen(demand, np.int64).reshape(-1))
        set_(self, "edge_ptr", _frozen(self.edge_ptr, np.int64).reshape(-1))
        set_(self, "edge_adv", _frozen(self.edge_adv, np.int64).reshape(-1))
        set_(self, "edge_weight", _frozen(self.edge_weight, np.float64).reshape(-1))
        self._validate()

    def _validate(self) -> None:
        m, n = len(self.advertiser_ids), len(self.impression_ids)
        if len(set(self.advertiser_ids)) != m:
            raise InstanceError("duplicate advertiser id")
        if len(set(self.impression_ids)) != n:
            raise InstanceError("duplicate impression id")
        if self.demand.shape[0] != m:
            raise InstanceError("demand length differs from advertiser count")
        if np.any(self.demand <= 0):
            bad = int(np.argmin(self.demand))
            raise InstanceError(f"advertiser {self.advertiser_ids[bad]!r}: demand must be positive")
        _check_ptr(self.edge_ptr, n, self.edge_adv.shape[0], "edge")
        if self.edge_weight.shape != self.edge_adv.shape:
            raise InstanceError("edge weight/advertiser arrays differ in length")
        if self.edge_adv.size and (self.edge_adv.min() < 0 or self.edge_adv.max() >= m):
            raise InstanceError("edge references an unknown advertiser")
        if not np.all(np.isfinite(self.edge_weight)) or np.any(self.edge_weight <= 0):
            raise InstanceError("edge weights must be positive and finite")
        if self.edge_adv.size:
            owner = np.repeat(np.arange(n), np.diff(self.edge_ptr))
            pairs = owner * m + self.edge_adv
            order = np.argsort(pairs, kind="stable")
            same = np.flatnonzero(np.diff(pairs[order]) == 0)
            if same.size:
                dup = int(owner[order[same[0]]])
                raise InstanceError(f"impression {self.impression_ids[dup]!r}: duplicate advertiser edge")

    @property
    def n_advertisers(self) -> int:
        return len(self.advertiser_ids)

    @property
    def n_impressions(self) -> int:
        return len(self.impression_ids)

    @property
    def n_edges(self) -> int:
        return int(self.edge_adv.shape[0])

    @cached_property
    def edge_impression(self) -> np.ndarray:
        arr = np.repeat(np.arange(self.n_impressions, dtype=np.int64), np.diff(self.edge_ptr))
        arr.setflags(write=False)
        return arr

    def weight_matrix(self) -> np.ndarray:
        """Dense ``(n_impressions, n_advertisers)`` weights, 0 where no edge."""
        w = np.zeros((self.n_impressions, self.n_advertisers))
        w[self.edge_impression, self.edge_adv] = self.edge_weight
        return w

    def scale_weights(self, factor: float) -> "DaInstance":
        return DaInstance(
            self.advertiser_ids, self.demand, self.impression_ids,
            self.edge_ptr, self.edge_adv, self.edge_weight * factor,
        )

    @classmethod
    def from_records(cls, advertisers: Iterable, impressions: Iterable) -> "DaInstance":
        """Build from ``[(aid, demand), ...]`` and ``[(iid, [(aid, w), ...]), ...]``."""
        advertisers = list(advertisers)
        aids = [str(a) for a, _ in advertisers]
        index = {a: j for j, a in enumerate(aids)}
        imp_ids, ptr, adv, wts = [], [0], [], []
        for iid, edges in impressions:
            imp_ids.append(str(iid))
            for aid, w in edges:
                if str(aid) not in index:
                    raise InstanceError(f"impression {iid!r}: unknown advertiser {aid!r}")
                adv.append(index[str(aid)])
                wts.append(w)
            ptr.append(len(adv))
        return cls(
            advertiser_ids=tuple(aids),
            demand=[d for _, d in advertisers],
            impression_ids=tuple(imp_ids),
            edge_ptr=ptr,
            edge_adv=np.array(adv, dtype=np.int64),
            edge_weight=np.array(wts, dtype=np.float64),
        )

    def to_dict(self) -> dict:
        impressions = []
        for i, iid in enumerate(self.impression_ids):
            lo, hi = self.edge_ptr[i], self.edge_ptr[i + 1]
            impressions.append(
                {
                    "id": iid,
                    "edges": [
                        {"advertiser": self.advertiser_ids[a], "weight": float(w)}
                        for a, w in zip(self.edge_adv[lo:hi], self.edge_weight[lo:hi])
                    ],
                }
            )
        return {
            "advertisers": [
                {"id": a, "demand": int(d)} for a, d in zip(self.advertiser_ids, self.demand)
            ],
            "impressions": impressions,
        }

    def __eq__(self, other):
        if not isinstance(other, DaInstance):
            return NotImplemented
        return (
            self.advertiser_ids == other.advertiser_ids
            and self.impression_ids == other.impression_ids
            and all(
                np.array_equal(getattr(self, a), getattr(other, a))
                for a in ("demand", "edge_ptr", "edge_adv", "edge_weight")
            )
        )

    __hash__ = None

    def __repr__(self):
        return (
            f"DaInstance(advertisers={self.n_advertisers}, "
            f"impressions={self.n_impressions}, edges={self.n_edges})"
        )


@dataclass(frozen=True)
class LowerBoundParams:
    T: int
    draws: int = 0
    seed: int = 0

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 2:
            raise InstanceError("T must be an integer >= 2")
        if int(self.draws) != self.draws or self.draws < 0:
            raise InstanceError("draws must be a nonnegative integer")

    @property
    def capacity(self) -> int:
        return lower_bound_capacity(self.T)


def lower_bound_capacity(T: int) -> int:
    return max(1, math.ceil(3 * T * math.log(T)))


# -- transformations -----------------------------------------------------------


def normalize(inst: PlpInstance) -> PlpInstance:
    """Rescale usage so every capacity is 1; weights are untouched."""
    if inst.is_normalized:
        return inst
    return inst.replace(
        capacity=np.ones(inst.n_resources),
        usage_val=inst.usage_val / inst.capacity[inst.usage_res],
    )


def da_to_plp(da: DaInstance) -> PlpInstance:
    """One resource per advertiser (capacity n(j)), one unit-usage option per edge."""
    return PlpInstance(
        resource_ids=da.advertiser_ids,
        capacity=da.demand.astype(np.float64),
        agent_ids=da.impression_ids,
        agent_ptr=da.edge_ptr,
        option_ids=tuple(da.advertiser_ids[a] for a in da.edge_adv),
        weight=da.edge_weight,
        usage_ptr=np.arange(da.n_edges + 1, dtype=np.int64),
        usage_res=da.edge_adv,
        usage_val=np.ones(da.n_edges),
    )


# -- generators ------------------------------------------------------------------


def generate_synthetic(
    m: int,
    n: int,
    demand_range: tuple = (1, 10),
    density: float = 0.3,
    mu: float = 0.0,
    sigma: float = 1.0,
    seed: int = 0,
) -> DaInstance:
    """Random display-ad instance with log-normal edge weights.

    Each impression is eligible for each advertiser independently with
    probability ``density``; impressions that come out with no edge are
    redrawn.  Demands are uniform integers in ``demand_range`` (inclusive).
    """
    m, n = int(m), int(n)
    lo, hi = (int(v) for v in demand_range)
    if m < 1 or n < 1:
        raise InstanceError("m and n must be >= 1")
    if not 0.0 < density <= 1.0:
        raise InstanceError("density must lie in (0, 1]")
    if not sigma > 0 or not math.isfinite(sigma) or not math.isfinite(mu):
        raise InstanceError("log-normal parameters must be finite with sigma > 0")
    if lo < 1 or hi < lo:
        raise InstanceError("demand range must satisfy 1 <= lo <= hi")

    rng = np.random.default_rng(seed)
    demand = rng.integers(lo, hi + 1, size=m)
    mask = rng.random((n, m)) < density
    empty = np.flatnonzero(~mask.any(axis=1))
    while empty.size:
        mask[empty] = rng.random((empty.size, m)) < density
        empty = empty[~mask[empty].any(axis=1)]
    counts = mask.sum(axis=1)
    _, adv = np.nonzero(mask)
    weights = rng.lognormal(mu, sigma, size=adv.size)
    width = len(str(max(m, n) - 1))
    return DaInstance(
        advertiser_ids=tuple(f"a{j:0{width}d}" for j in range(m)),
        demand=demand,
        impression_ids=tuple(f"i{i:0{width}d}" for i in range(n)),
        edge_ptr=np.concatenate([[0], np.cumsum(counts)]),
        edge_adv=adv,
        edge_weight=weights,
    )


def lower_bound_type_probabilities(T: int) -> np.ndarray:
    """Type ``i`` has probability proportional to ``T**(-2i)``, normalized exactly."""
    raw = float(T) ** (-2.0 * np.arange(T))
    return raw / raw.sum()


def lower_bound_type_values(T: int) -> np.ndarray:
    return float(T) ** (2.0 * np.arange(T))


def generate_lower_bound(params: LowerBoundParams) -> PlpInstance:
    """Single-resource instance from the unknown-horizon lower-bound family."""
    T = int(params.T)
    rng = np.random.default_rng(params.seed)
    types = rng.choice(T, size=int(params.draws), p=lower_bound_type_probabilities(T))
    values = lower_bound_type_values(T)
    d = int(params.draws)
    width = len(str(max(d - 1, 0)))
    return PlpInstance(
        resource_ids=("r0",),
        capacity=[float(params.capacity)],
        agent_ids=tuple(f"a{k:0{width}d}" for k in range(d)),
        agent_ptr=np.arange(d + 1),
        option_ids=tuple(f"t{t}" for t in types),
        weight=values[types],
        usage_ptr=np.arange(d + 1),
        usage_res=np.zeros(d, dtype=np.int64),
        usage_val=np.ones(d),
    )


# -- size hypotheses for DualBase ---------------------------------------------


@dataclass(frozen=True)
class HypothesisReport:
    w_ratio: float
    w_bound: float
    a_ratio: float
    a_bound: float
    w_ok: bool
    a_ok: bool

    @property
    def passed(self) -> bool:
        return self.w_ok and self.a_ok

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("w_ratio", "w_bound", "a_ratio", "a_bound", "w_ok", "a_ok")}
        out["passed"] = self.passed
        return out


def log_factor(m: int, n: int, q: int) -> float:
    """``(m + 1) * (ln n + ln q)``, the common factor of the sampling bounds."""
    return (m + 1) * (math.log(n) + math.log(q))


def check_theorem1_hypotheses(inst: PlpInstance, eps: float, opt_value: float) -> HypothesisReport:
    """Small-bids conditions under which the training-based algorithm is (1-O(eps))-competitive.

    Usage is measured relative to capacity, so normalized and raw instances
    give the same answer.
    """
    if inst.n_agents == 0 or inst.n_options == 0:
        raise InstanceError("hypothesis check needs a nonempty instance")
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if not opt_value > 0:
        raise ValueError("opt_value must be positive")
    # n = q = 1 makes the log factor vanish; floor it at 1 so the bound stays finite
    L = max(log_factor(inst.n_resources, inst.n_agents, inst.q), 1.0)
    w_bound = eps / L
    a_bound = eps**3 / L
    w_ratio = float(inst.weight.max()) / opt_value
    if inst.usage_val.size:
        a_ratio = float((inst.usage_val / inst.capacity[inst.usage_res]).max())
    else:
        a_ratio = 0.0
    return HypothesisReport(w_ratio, w_bound, a_ratio, a_bound, w_ratio <= w_bound, a_ratio <= a_bound)


# -- JSON ---------------------------------------------------------------------------

_PLP_TOP = {"resources", "agents"}
_DA_TOP = {"advertisers", "impressions"}


def _expect_keys(obj, required: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise InstanceError(f"{where}: expected an object")
    keys = set(obj)
    unknown = keys - required
    if unknown:
        raise InstanceError(f"{where}: unknown field(s) {sorted(unknown)}")
    missing = required - keys
    if missing:
        raise InstanceError(f"{where}: missing field(s) {sorted(missing)}")


def _number(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise InstanceError(f"{where}: expected a number")
    return float(v)


def _string(v, where: str) -> str:
    if not isinstance(v, str):
        raise InstanceError(f"{where}: expected a string")
    return v


def _list(v, where: str) -> list:
    if not isinstance(v, list):
        raise InstanceError(f"{where}: expected a list")
    return v


def from_dict(data: Mapping) -> PlpInstance | DaInstance:
    """Validate a decoded JSON document and build the instance it describes."""
    if not isinstance(data, dict):
        raise InstanceError("top level: expected an object")
    keys = set(data)
    if keys & _PLP_TOP and not keys & _DA_TOP:
        _expect_keys(data, _PLP_TOP, "top level")
        resources = []
        for j, r in enumerate(_list(data["resources"], "resources")):
            where = f"resources[{j}]"
            _expect_keys(r, {"id", "capacity"}, where)
            resources.append((_string(r["id"], where + ".id"), _number(r["capacity"], where + ".capacity")))
        agents = []
        for i, a in enumerate(_list(data["agents"], "agents")):
            where = f"agents[{i}]"
            _expect_keys(a, {"id", "options"}, where)
            opts = []
            for k, o in enumerate(_list(a["options"], where + ".options")):
                ow = f"{where}.options[{k}]"
                _expect_keys(o, {"id", "weight", "usage"}, ow)
                usage = o["usage"]
                if not isinstance(usage, dict):
                    raise InstanceError(f"{ow}.usage: expected an object")
                opts.append(
                    (
                        _string(o["id"], ow + ".id"),
                        _number(o["weight"], ow + ".weight"),
                        {rid: _number(v, f"{ow}.usage[{rid!r}]") for rid, v in usage.items()},
                    )
                )
            agents.append((_string(a["id"], where + ".id"), opts))
        return PlpInstance.from_records(resources, agents)
    if keys & _DA_TOP and not keys & _PLP_TOP:
        _expect_keys(data, _DA_TOP, "top level")
        advertisers = []
        for j, a in enumerate(_list(data["advertisers"], "advertisers")):
            where = f"advertisers[{j}]"
            _expect_keys(a, {"id", "demand"}, where)
            d = a["demand"]
            if isinstance(d, bool) or not isinstance(d, int):
                if not (isinstance(d, float) and d.is_integer()):
                    raise InstanceError(f"{where}.demand: expected an integer")
            advertisers.append((_string(a["id"], where + ".id"), int(d)))
        impressions = []
        for i, imp in enumerate(_list(data["impressions"], "impressions")):
            where = f"impressions[{i}]"
            _expect_keys(imp, {"id", "edges"}, where)
            edges = []
            for k, e in enumerate(_list(imp["edges"], where + ".edges")):
                ew = f"{where}.edges[{k}]"
                _expect_keys(e, {"advertiser", "weight"}, ew)
                edges.append((_string(e["advertiser"], ew + ".advertiser"), _number(e["weight"], ew + ".weight")))
            impressions.append((_string(imp["id"], where + ".id"), edges))
        return DaInstance.from_records(advertisers, impressions)
    raise InstanceError(
        "top level: expected either 'resources'/'agents' or 'advertisers'/'impressions'"
    )


def dumps(inst: PlpInstance | DaInstance) -> str:
    return json.dumps(inst.to_dict(), indent=1, ensure_ascii=False) + "\n"


def loads(text: str) -> PlpInstance | DaInstance:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        lines = text.splitlines()
        line = lines[exc.lineno - 1] if 0 < exc.lineno <= len(lines) else None
        raise InstanceError(f"malformed JSON: {exc.msg} (column {exc.colno})", line=exc.lineno, text=line) from None
    return from_dict(data)


def save(inst: PlpInstance | DaInstance, path) -> None:
    Path(path).write_text(dumps(inst), encoding="utf-8")


def load(path) -> PlpInstance | DaInstance:
    return loads(Path(path).read_text(encoding="utf-8"))


def as_plp(inst: PlpInstance | DaInstance) -> PlpInstance:
    return da_to_plp(inst) if isinstance(inst, DaInstance) else inst


__all__ = [
    "DaInstance", "HypothesisReport", "InstanceError", "LowerBoundParams", "PlpInstance",
    "as_plp", "check_theorem1_hypotheses", "da_to_plp", "dumps", "from_dict",
    "generate_lower_bound", "generate_synthetic", "load", "loads", "log_factor",
    "lower_bound_capacity", "lower_bound_type_probabilities", "lower_bound_type_values",
    "normalize", "save",
]
