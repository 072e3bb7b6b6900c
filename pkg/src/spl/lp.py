"""Dense revised simplex for the packing LP and its dual.

Primal::

    max  sum_io w_io x_io
    s.t. sum_o x_io        <= 1     for every agent i
         sum_io a_ioj x_io <= c_j   for every resource j
         x >= 0

Dual::

    min  sum_j c_j beta_j + sum_i z_i
    s.t. z_i + sum_j beta_j a_ioj >= w_io,   beta, z >= 0

The per-agent rows are generalized upper bounds (GUB): every basis holds a
*key* variable for each agent, and only an ``m x m`` working basis over the
resource rows is ever factorized.  The working basis is dense and small; the
expensive part is pricing, which lives in :mod:`spl.kernels`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .instance import PlpInstance

TOL = 1e-7

_PIVOT_TOL = 1e-9
_REFRESH_EVERY = 256
_DEGENERATE_STREAK = 50
_PARTIAL_WANT = 64


class LpError(RuntimeError):
    """The simplex failed to converge (iteration limit or numerical breakdown)."""


@dataclass
class LpSolution:
    """Primal/dual pair; ``x`` is aligned with the instance's options."""

    x: np.ndarray
    beta: np.ndarray
    z: np.ndarray
    objective: float
    dual_objective: float
    iterations: int = 0
    resource_ids: tuple = ()
    agent_ids: tuple = ()

    def beta_map(self) -> dict:
        return {r: float(b) for r, b in zip(self.resource_ids, self.beta)}

    def z_map(self) -> dict:
        return {a: float(v) for a, v in zip(self.agent_ids, self.z)}

    def x_map(self, inst: PlpInstance) -> dict:
        """``{(agent id, option id): value}`` for nonzero entries."""
        out = {}
        for k in np.flatnonzero(self.x):
            out[(inst.agent_ids[inst.option_agent[k]], inst.option_ids[k])] = float(self.x[k])
        return out

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "dual_objective": self.dual_objective,
            "iterations": self.iterations,
            "beta": self.beta_map(),
        }


@dataclass
class DualPrices:
    """Per-resource prices learned on a sample."""

    beta: np.ndarray
    resource_ids: tuple
    epsilon: float = 1.0
    sample_size: int = 0
    perturb_seed: Optional[int] = None

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if not np.all(np.isfinite(self.beta)) or np.any(self.beta < 0):
            raise ValueError("prices must be nonnegative and finite")
        if self.beta.shape != (len(self.resource_ids),):
            raise ValueError("price vector does not match resource ids")

    def as_map(self) -> dict:
        return {r: float(b) for r, b in zip(self.resource_ids, self.beta)}

    def to_dict(self) -> dict:
        return {
            "beta": self.as_map(),
            "epsilon": self.epsilon,
            "sample_size": self.sample_size,
            "perturb_seed": self.perturb_seed,
        }


# ---------------------------------------------------------------------------
# GUB simplex
# ---------------------------------------------------------------------------


class _Gub:
    """Simplex state over an augmented variable layout.

    Group ``i`` holds agent ``i``'s options followed by its row slack; the
    resource-row slacks come last (indices ``nv .. nv + m - 1``).
    """

    def __init__(self, inst: PlpInstance):
        n, m, K = inst.n_agents, inst.n_resources, inst.n_options
        counts = np.diff(inst.agent_ptr) + 1
        self.g_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        nv = K + n
        self.n, self.m, self.nv = n, m, nv
        self.group = np.repeat(np.arange(n, dtype=np.int64), counts)
        slack = self.g_ptr[1:] - 1
        is_opt = np.ones(nv, dtype=bool)
        is_opt[slack] = False
        self.orig = np.full(nv, -1, dtype=np.int64)
        self.orig[is_opt] = np.arange(K)
        self.opt_pos = np.flatnonzero(is_opt)
        self.w = np.zeros(nv)
        self.w[is_opt] = inst.weight
        ucounts = np.zeros(nv, dtype=np.int64)
        ucounts[is_opt] = np.diff(inst.usage_ptr)
        self.uptr = np.concatenate([[0], np.cumsum(ucounts)]).astype(np.int64)
        self.ures = inst.usage_res.astype(np.int64)
        self.uval = inst.usage_val.astype(np.float64)
        self.uowner = np.repeat(np.arange(nv, dtype=np.int64), ucounts)
        self.cap = inst.capacity.astype(np.float64)

        self.key = slack.copy()
        self.nonkey = np.arange(nv, nv + m, dtype=np.int64)
        self.basic = np.zeros(nv + m, dtype=bool)
        self.basic[self.key] = True
        self.basic[self.nonkey] = True
        self.B = np.eye(m)
        self.cbar = self.cap.copy()
        wmax = float(self.w.max()) if nv else 0.0
        self.opt_tol = 1e-10 * max(1.0, wmax)
        self.iterations = 0

    # -- columns -----------------------------------------------------------
    def usage(self, v: int) -> np.ndarray:
        col = np.zeros(self.m)
        if v >= self.nv:
            col[v - self.nv] = 1.0
        else:
            lo, hi = self.uptr[v], self.uptr[v + 1]
            np.add.at(col, self.ures[lo:hi], self.uval[lo:hi])
        return col

    def reduced_col(self, v: int) -> np.ndarray:
        if v >= self.nv:
            return self.usage(v)
        return self.usage(v) - self.usage(self.key[self.group[v]])

    def group_of(self, v: int) -> int:
        return -1 if v >= self.nv else int(self.group[v])

    def refresh_cbar(self) -> None:
        self.cbar = self.cap.copy()
        for k in self.key:
            lo, hi = self.uptr[k], self.uptr[k + 1]
            np.subtract.at(self.cbar, self.ures[lo:hi], self.uval[lo:hi])

    def refresh_columns(self, slots) -> None:
        for r in slots:
            self.B[:, r] = self.reduced_col(int(self.nonkey[r]))

    def slots_in_group(self, g: int) -> np.ndarray:
        nk = self.nonkey
        mask = nk < self.nv
        return np.flatnonzero(mask & (self.group[np.where(mask, nk, 0)] == g))

    # -- primal/dual values ---------------------------------------------------
    def nonkey_values(self) -> np.ndarray:
        if self.m == 0:
            return np.zeros(0)
        return np.linalg.solve(self.B, self.cbar)

    def prices(self) -> np.ndarray:
        if self.m == 0:
            return np.zeros(0)
        cd = np.zeros(self.m)
        for r, v in enumerate(self.nonkey):
            if v < self.nv:
                cd[r] = self.w[v] - self.w[self.key[self.group[v]]]
        return np.linalg.solve(self.B.T, cd)

    # -- main loop ------------------------------------------------------------
    def run(self, max_iter: int) -> None:
        start = 0
        degenerate = 0
        bland = False
        price = kernels.price
        while True:
            if self.iterations >= max_iter:
                raise LpError(f"simplex did not converge in {max_iter} iterations")
            if self.iterations and self.iterations % _REFRESH_EVERY == 0:
                self.refresh_cbar()
            xN = self.nonkey_values()
            beta = self.prices()

            if self.n:
                if bland:
                    v, d, _ = price(
                        self.g_ptr, self.w, self.uptr, self.ures, self.uval, self.uowner,
                        self.group, self.key, self.basic, beta, 0, 1, self.opt_tol, True,
                    )
                else:
                    v, d, start = price(
                        self.g_ptr, self.w, self.uptr, self.ures, self.uval, self.uowner,
                        self.group, self.key, self.basic, beta, start, _PARTIAL_WANT,
                        self.opt_tol, False,
                    )
                v = int(v)
            else:
                v, d = -1, self.opt_tol
            # resource slacks: reduced cost is -beta_j
            for j in range(self.m):
                t = self.nv + j
                if self.basic[t] or -beta[j] <= self.opt_tol:
                    continue
                if bland:
                    if v == -1:
                        v, d = t, -beta[j]
                    break
                if -beta[j] > d:
                    v, d = t, -beta[j]
            if v == -1:
                return

            col = np.linalg.solve(self.B, self.reduced_col(v)) if self.m else np.zeros(0)
            leave = self.ratio_test(v, col, xN)
            if leave is None:
                raise LpError("unbounded direction in a packing LP")
            theta, kind, where = leave
            degenerate = degenerate + 1 if theta <= 1e-12 else 0
            bland = degenerate >= _DEGENERATE_STREAK
            self.pivot(v, col, kind, where)
            self.iterations += 1

    def ratio_test(self, v: int, col: np.ndarray, xN: np.ndarray):
        best = None  # (ratio, variable index, kind, where)
        gv = self.group_of(v)
        rates: dict = {}
        for r in range(self.m):
            u = int(self.nonkey[r])
            if u < self.nv:
                g = int(self.group[u])
                rates[g] = rates.get(g, 0.0) + col[r]
            if col[r] > _PIVOT_TOL:
                cand = (max(xN[r], 0.0) / col[r], u, "slot", r)
                best = _better(best, cand)
        if gv >= 0:
            rates[gv] = rates.get(gv, 0.0) - 1.0
        for g, rate in rates.items():
            if rate < -_PIVOT_TOL:
                val = 1.0 - sum(xN[r] for r in self.slots_in_group(g))
                cand = (max(val, 0.0) / -rate, int(self.key[g]), "key", g)
                best = _better(best, cand)
        if best is None:
            return None
        return best[0], best[2], best[3]

    def pivot(self, v: int, col: np.ndarray, kind: str, where: int) -> None:
        gv = self.group_of(v)
        if kind == "slot":
            r = where
            self.basic[self.nonkey[r]] = False
            self.nonkey[r] = v
            self.basic[v] = True
            self.refresh_columns([r])
            return
        h = where
        old = int(self.key[h])
        self.basic[old] = False
        self.basic[v] = True
        if gv == h:
            self.key[h] = v
            self._swap_key_usage(old, v)
            self.refresh_columns(self.slots_in_group(h))
            return
        slots = self.slots_in_group(h)
        # any basic member of the group can take over as key
        r = int(slots[np.argmax(np.abs(col[slots]))])
        u = int(self.nonkey[r])
        self.key[h] = u
        self._swap_key_usage(old, u)
        self.nonkey[r] = v
        self.refresh_columns(self.slots_in_group(h))
        self.refresh_columns([r])
        if gv >= 0:
            self.refresh_columns(self.slots_in_group(gv))

    def _swap_key_usage(self, old: int, new: int) -> None:
        self.cbar += self.usage(old) - self.usage(new)

    # -- extraction -------------------------------------------------------------
    def solution(self) -> tuple:
        self.refresh_cbar()
        xN = self.nonkey_values()
        beta = self.prices()
        xa = np.zeros(self.nv)
        xa[self.key] = 1.0
        for r, u in enumerate(self.nonkey):
            if u < self.nv:
                xa[u] = xN[r]
                xa[self.key[self.group[u]]] -= xN[r]
        cost = np.bincount(self.uowner, weights=beta[self.ures] * self.uval, minlength=self.nv)
        z = self.w[self.key] - cost[self.key]
        x = xa[self.opt_pos]
        return x, beta, z


def _better(best, cand):
    if best is None:
        return cand
    ratio, idx = cand[0], cand[1]
    scale = max(1.0, abs(best[0]))
    if ratio < best[0] - 1e-12 * scale:
        return cand
    if ratio <= best[0] + 1e-12 * scale and idx < best[1]:
        return cand
    return best


def _clean(a: np.ndarray, tol: float) -> np.ndarray:
    a = np.where(np.abs(a) <= tol, 0.0, a)
    return np.maximum(a, 0.0)


def solve_primal(inst: PlpInstance, max_iter: Optional[int] = None) -> LpSolution:
    """Optimal primal and dual solutions of the packing LP.

    The returned pair is a basic (vertex) solution.  Values within 1e-12 of
    zero are snapped to zero and dual values are clipped at zero.
    """
    g = _Gub(inst)
    if max_iter is None:
        max_iter = 50 * (inst.n_agents + inst.n_resources) + 1000
    g.run(max_iter)
    x, beta, z = g.solution()
    scale_x = 1e-12 * max(1.0, float(inst.capacity.max()) if inst.n_resources else 1.0)
    scale_w = 1e-12 * max(1.0, float(inst.weight.max()) if inst.n_options else 1.0)
    x = np.minimum(_clean(x, scale_x), 1.0)
    beta = _clean(beta, scale_w)
    z = _clean(z, scale_w)
    obj = float(inst.weight @ x)
    dual = float(inst.capacity @ beta + z.sum())
    return LpSolution(
        x=x, beta=beta, z=z, objective=obj, dual_objective=dual, iterations=g.iterations,
        resource_ids=inst.resource_ids, agent_ids=inst.agent_ids,
    )


def solve_reduced_dual(sample: PlpInstance, eps: float) -> DualPrices:
    """Prices of the sample LP with every capacity scaled to ``eps``.

    Scaling the right-hand side to ``eps`` is the same as weighting each
    ``beta_j`` by ``eps`` in the dual objective.  An empty sample prices
    everything at zero.
    """
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    if sample.n_agents == 0:
        return DualPrices(np.zeros(sample.n_resources), sample.resource_ids, eps, 0)
    sol = solve_primal(sample.scale_capacity(eps))
    return DualPrices(sol.beta, sample.resource_ids, eps, sample.n_agents)


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


@dataclass
class DualityReport:
    gap: float
    primal_violation: float
    dual_violation: float
    slackness: float
    tol: float
    thresholds: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return (
            self.gap <= self.thresholds["gap"]
            and self.primal_violation <= self.thresholds["primal"]
            and self.dual_violation <= self.thresholds["dual"]
            and self.slackness <= self.thresholds["slackness"]
        )

    def to_dict(self) -> dict:
        return {
            "gap": self.gap,
            "primal_violation": self.primal_violation,
            "dual_violation": self.dual_violation,
            "slackness": self.slackness,
            "tol": self.tol,
            "passed": self.passed,
        }


def verify_duality(inst: PlpInstance, sol: LpSolution, tol: float = TOL) -> DualityReport:
    """Residuals of a primal/dual pair.

    Thresholds mix absolute and relative tolerance: ``tol * (1 + scale)``
    with the objective, capacity or weight magnitude as scale.
    """
    if sol.x.shape != (inst.n_options,) or sol.beta.shape != (inst.n_resources,) or sol.z.shape != (inst.n_agents,):
        raise ValueError("solution shape does not match the instance")
    x, beta, z = sol.x, sol.beta, sol.z
    agent_sum = np.bincount(inst.option_agent, weights=x, minlength=inst.n_agents)
    owner = np.repeat(np.arange(inst.n_options), np.diff(inst.usage_ptr))
    use = np.bincount(inst.usage_res, weights=inst.usage_val * x[owner], minlength=inst.n_resources)
    priced = np.bincount(owner, weights=beta[inst.usage_res] * inst.usage_val, minlength=inst.n_options)

    primal = 0.0
    if x.size:
        primal = max(primal, float(-x.min()))
    if agent_sum.size:
        primal = max(primal, float((agent_sum - 1.0).max()))
    if use.size:
        primal = max(primal, float((use - inst.capacity).max()))
    dual = 0.0
    if beta.size:
        dual = max(dual, float(-beta.min()))
    if z.size:
        dual = max(dual, float(-z.min()))
    slack_io = z[inst.option_agent] + priced - inst.weight if x.size else np.zeros(0)
    if slack_io.size:
        dual = max(dual, float(-slack_io.min()))
    cs = 0.0
    if x.size:
        cs = max(cs, float(np.abs(x * slack_io).max()))
    if beta.size:
        cs = max(cs, float(np.abs(beta * (inst.capacity - use)).max()))
    if z.size:
        cs = max(cs, float(np.abs(z * (1.0 - agent_sum)).max()))
    p_obj = float(inst.weight @ x)
    d_obj = float(inst.capacity @ beta + z.sum())
    gap = abs(p_obj - d_obj)
    wscale = float(inst.weight.max()) if inst.n_options else 0.0
    cscale = float(inst.capacity.max()) if inst.n_resources else 0.0
    thresholds = {
        "gap": tol * (1.0 + abs(p_obj)),
        "primal": tol * (1.0 + cscale),
        "dual": tol * (1.0 + wscale),
        "slackness": tol * (1.0 + wscale * max(1.0, cscale)),
    }
    return DualityReport(gap, primal, dual, cs, tol, thresholds)


# ---------------------------------------------------------------------------
# Text dump
# ---------------------------------------------------------------------------


def _num(v: float) -> str:
    return repr(float(v))


def dump_lp(inst: PlpInstance) -> str:
    """CPLEX LP text of the primal.

    Variable ``x_<i>_<k>`` is option ``k`` (position within the agent) of
    agent ``i``; rows ``agent_<i>`` and ``res_<j>`` follow instance order.
    The original ids are listed in comment lines at the top.
    """
    lines = ["\\ packing LP written by spl"]
    for j, r in enumerate(inst.resource_ids):
        lines.append(f"\\ res_{j} = {r}")
    for i, a in enumerate(inst.agent_ids):
        lo, hi = inst.agent_ptr[i], inst.agent_ptr[i + 1]
        opts = ", ".join(f"x_{i}_{k - lo}={inst.option_ids[k]}" for k in range(lo, hi))
        lines.append(f"\\ agent_{i} = {a}: {opts}")

    def var(k):
        i = inst.option_agent[k]
        return f"x_{i}_{k - inst.agent_ptr[i]}"

    terms = [f"{_num(inst.weight[k])} {var(k)}" for k in range(inst.n_options)]
    lines.append("Maximize")
    lines.append(" obj: " + (" + ".join(terms) if terms else "0"))
    lines.append("Subject To")
    for i in range(inst.n_agents):
        lo, hi = inst.agent_ptr[i], inst.agent_ptr[i + 1]
        if hi > lo:
            lines.append(f" agent_{i}: " + " + ".join(var(k) for k in range(lo, hi)) + " <= 1")
    rows: list = [[] for _ in range(inst.n_resources)]
    for k in range(inst.n_options):
        for p in range(inst.usage_ptr[k], inst.usage_ptr[k + 1]):
            rows[inst.usage_res[p]].append(f"{_num(inst.usage_val[p])} {var(k)}")
    for j, row in enumerate(rows):
        if row:
            lines.append(f" res_{j}: " + " + ".join(row) + f" <= {_num(inst.capacity[j])}")
    lines.append("End")
    return "\n".join(lines) + "\n"


__all__ = [
    "DualPrices", "DualityReport", "LpError", "LpSolution", "TOL",
    "dump_lp", "solve_primal", "solve_reduced_dual", "verify_duality",
]
