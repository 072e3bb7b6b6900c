"""Experiment harness: paired random orders, normalized tables, studies.

Per trial every online algorithm consumes the same permutation.  The
offline references (the LP optimum and the equal-share fair allocation)
are order-independent and computed once per instance.  Efficiency is
scaled so the LP optimum scores 100; fairness so the fair allocation
scores 0 and the least fair algorithm of the trial scores 100.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import fairness as fair_mod
from . import online
from .instance import (
    DaInstance,
    check_theorem1_hypotheses,
    da_to_plp,
    generate_synthetic,
    log_factor,
    lower_bound_capacity,
    lower_bound_type_probabilities,
    lower_bound_type_values,
    normalize,
)
from .lp import solve_primal, verify_duality
from .ptas import run_dualbase as ptas_dualbase

ONLINE = ("greedy", "pd_avg", "pd_exp", "hybrid", "dualbase")
OFFLINE = ("fair", "lp_weight")
ALGORITHMS = ONLINE + OFFLINE
CSV_HEADER = ["algorithm", "trial", "value", "eff_norm", "fairness_raw", "fairness_norm", "seed", "wall_ms"]


def parse_algorithms(spec) -> list:
    """Accept ``"greedy,pd_avg"`` or an iterable; names are case-insensitive."""
    names = spec.split(",") if isinstance(spec, str) else list(spec)
    out = []
    for name in names:
        key = name.strip().lower()
        if not key:
            continue
        if key not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {name!r}; expected some of {', '.join(ALGORITHMS)}")
        if key not in out:
            out.append(key)
    if not out:
        raise ValueError("no algorithms given")
    return out


def trial_seed(master: int, trial: int) -> int:
    """Seed of trial ``trial``: first word of ``SeedSequence([master, trial])``."""
    return int(np.random.SeedSequence([int(master), int(trial)]).generate_state(1, np.uint64)[0])


def random_order(n: int, seed: int) -> np.ndarray:
    """Uniform permutation of ``range(n)``, deterministic per seed."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    return np.random.default_rng(seed).permutation(n)


@dataclass
class RunReport:
    algorithm: str
    trial: int
    value: float
    eff_norm: float = 0.0
    fairness_raw: float = 0.0
    fairness_norm: float = 0.0
    seed: int = 0
    wall_ms: float = 0.0
    v: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    def row(self) -> list:
        return [
            self.algorithm, self.trial, repr(float(self.value)), repr(float(self.eff_norm)),
            repr(float(self.fairness_raw)), repr(float(self.fairness_norm)), self.seed,
            repr(float(self.wall_ms)),
        ]


@dataclass
class Summary:
    algorithm: str
    trials: int
    eff_mean: float
    eff_std: float
    fair_mean: float
    fair_std: float
    value_mean: float
    fairness_raw_mean: float


@dataclass
class ExperimentResult:
    reports: list
    lp_value: float
    fair_value: float
    algorithms: list
    lp_gap: float = 0.0  # |primal - dual| / (1 + |primal|) of the reference LP

    def rows(self, algorithm: str) -> list:
        return [r for r in self.reports if r.algorithm == algorithm]

    def summary(self) -> dict:
        out = {}
        for a in self.algorithms:
            rs = self.rows(a)
            eff = np.array([r.eff_norm for r in rs])
            fn = np.array([r.fairness_norm for r in rs])
            out[a] = Summary(
                algorithm=a,
                trials=len(rs),
                eff_mean=float(eff.mean()),
                eff_std=float(eff.std()),
                fair_mean=float(fn.mean()),
                fair_std=float(fn.std()),
                value_mean=float(np.mean([r.value for r in rs])),
                fairness_raw_mean=float(np.mean([r.fairness_raw for r in rs])),
            )
        return out

    def table(self) -> str:
        lines = [f"{'algorithm':<10} {'eff':>8} {'±':>6} {'fair':>8} {'±':>6}"]
        for s in self.summary().values():
            lines.append(f"{s.algorithm:<10} {s.eff_mean:8.2f} {s.eff_std:6.2f} {s.fair_mean:8.2f} {s.fair_std:6.2f}")
        return "\n".join(lines)


def lp_weight(da: DaInstance):
    """LP optimum of the b-matching, the per-advertiser values of its solution
    and the relative duality gap of the solve."""
    plp = da_to_plp(da)
    sol = solve_primal(plp)
    x = np.asarray(sol.x, dtype=np.float64)
    gap = verify_duality(plp, sol).gap / (1.0 + abs(sol.objective))
    return sol.objective, fair_mod.advertiser_values(np.clip(x, 0.0, 1.0), da), gap


def _normalize_fairness(reports: Sequence[RunReport]) -> None:
    raw = [r.fairness_raw for r in reports]
    lo = next((r.fairness_raw for r in reports if r.algorithm == "fair"), 0.0)
    hi = max(raw) if raw else 0.0
    for r in reports:
        r.fairness_norm = 0.0 if hi <= lo else 100.0 * (r.fairness_raw - lo) / (hi - lo)


def run_experiment(
    da: DaInstance,
    algorithms=ALGORITHMS,
    trials: int = 1,
    eps: float = 0.01,
    seed: int = 0,
    *,
    jobs: int = 1,
    fair_policy: str = "equal",
    training_policy: str = "skip",
    shrink: bool = False,
    hybrid_schedule: str = "linear",
    timing: bool = False,
    log=None,
) -> ExperimentResult:
    """Run every algorithm over ``trials`` shared random orders.

    ``wall_ms`` stays 0 unless ``timing`` is set, so outputs are
    reproducible byte for byte.
    """
    algos = parse_algorithms(algorithms)
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    clock = time.perf_counter

    t0 = clock()
    lp_value, lp_v, lp_gap = lp_weight(da)
    lp_ms = (clock() - t0) * 1e3
    t0 = clock()
    star = fair_mod.compute_fair(da, fair_policy)
    fair_ms = (clock() - t0) * 1e3
    v_star = star.v

    def one_trial(t: int) -> list:
        s = trial_seed(seed, t)
        order = random_order(da.n_impressions, s)
        out = []
        for a in algos:
            t1 = clock()
            if a == "lp_weight":
                value, v, ms = lp_value, lp_v, lp_ms
            elif a == "fair":
                value, v, ms = star.value, v_star, fair_ms
            else:
                if a == "hybrid":
                    alloc = online.run_hybrid(da, order, eps, s, hybrid_schedule)
                elif a == "dualbase":
                    alloc = online.run_dualbase(da, order, eps, s, training_policy, shrink)
                else:
                    alloc = online.run_online(da, order, a)
                value, v = alloc.value, alloc.v
                ms = (clock() - t1) * 1e3
            out.append(
                RunReport(
                    algorithm=a,
                    trial=t,
                    value=float(value),
                    eff_norm=100.0 if a == "lp_weight" or lp_value <= 0 else 100.0 * value / lp_value,
                    fairness_raw=fair_mod.fairness_from_values(v, v_star),
                    seed=s,
                    wall_ms=ms if timing else 0.0,
                    v=np.asarray(v, dtype=np.float64),
                )
            )
        _normalize_fairness(out)
        if log is not None:
            log(f"trial {t} seed {s}: " + " ".join(f"{r.algorithm}={r.eff_norm:.2f}" for r in out))
        return out

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_trial = list(pool.map(one_trial, range(trials)))
    else:
        per_trial = [one_trial(t) for t in range(trials)]
    reports = [r for rows in per_trial for r in rows]
    return ExperimentResult(
        reports=reports, lp_value=lp_value, fair_value=star.value, algorithms=algos, lp_gap=lp_gap
    )


# ---------------------------------------------------------------------------
# CSV


def write_csv(reports: Iterable[RunReport], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in reports:
        w.writerow(r.row())


def emit_csv(reports: Iterable[RunReport], path) -> None:
    """Write one row per (algorithm, trial); floats use ``repr`` so they round-trip."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        write_csv(reports, fh)


def read_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {rd.fieldnames}")
        return [
            RunReport(
                algorithm=row["algorithm"],
                trial=int(row["trial"]),
                value=float(row["value"]),
                eff_norm=float(row["eff_norm"]),
                fairness_raw=float(row["fairness_raw"]),
                fairness_norm=float(row["fairness_norm"]),
                seed=int(row["seed"]),
                wall_ms=float(row["wall_ms"]),
            )
            for row in rd
        ]


# ---------------------------------------------------------------------------
# DualBase convergence


def conforming_demand(m: int, n: int, eps: float, q: Optional[int] = None) -> int:
    """Smallest integral demand meeting the usage hypothesis ``1/n(j) <= eps^3 / L``."""
    q = m if q is None else q
    return int(math.ceil(log_factor(m, n, q) / eps**3))


def conforming_instance(m: int, n: int, eps: float, seed: int, density: float = 0.3, sigma: float = 0.25) -> DaInstance:
    """Synthetic DA instance whose demands satisfy the usage hypothesis at ``eps``.

    Low weight spread (``sigma``) keeps ``w_max / OPT`` small; whether the
    weight hypothesis holds still depends on ``n`` and is checked by callers.
    """
    d = conforming_demand(m, n, eps)
    return generate_synthetic(m, n, demand_range=(d, 2 * d), density=density, sigma=sigma, seed=seed)


@dataclass
class ConvergencePoint:
    eps: float
    n: int
    ratios: list
    hypotheses_passed: list

    @property
    def mean(self) -> float:
        return float(np.mean(self.ratios))

    @property
    def std(self) -> float:
        return float(np.std(self.ratios))

    @property
    def successes(self) -> int:
        return len(self.ratios)


def dualbase_ratio(da: DaInstance, eps: float, seed: int, shrink: bool = True, training_policy: str = "skip"):
    """DualBase value over the LP optimum, plus the hypothesis report at ``eps``."""
    plp = normalize(da_to_plp(da))
    opt = solve_primal(plp).objective
    order = random_order(plp.n_agents, seed)
    _, alloc = ptas_dualbase(plp, order, eps, seed, training_policy, shrink)
    hyp = check_theorem1_hypotheses(plp, eps, opt)
    return alloc.value / opt, hyp, alloc


def ptas_convergence_study(
    gen_params: dict,
    eps_grid: Sequence[float],
    trials: int,
    seed: int = 0,
    sizes: Optional[Sequence[int]] = None,
    shrink: bool = True,
) -> list:
    """Mean DualBase competitive ratio per ``(eps, n)``.

    ``gen_params`` is passed to :func:`generate_synthetic` (``n`` is taken
    from ``sizes`` when given).  Trial ``t`` uses generator and order seed
    ``trial_seed(seed, t)``.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    sizes = [gen_params["n"]] if sizes is None else list(sizes)
    out = []
    for eps in eps_grid:
        for n in sizes:
            ratios, hyps = [], []
            for t in range(trials):
                s = trial_seed(seed, t)
                params = dict(gen_params, n=n, seed=s)
                da = generate_synthetic(**params)
                r, hyp, _ = dualbase_ratio(da, eps, s, shrink)
                ratios.append(r)
                hyps.append(hyp.passed)
            out.append(ConvergencePoint(eps=float(eps), n=int(n), ratios=ratios, hypotheses_passed=hyps))
    return out


# ---------------------------------------------------------------------------
# Lower-bound demonstration


@dataclass
class LowerBoundReport:
    T: int
    capacity: int
    draw_counts: list
    ratios: dict  # threshold type k -> mean ratio per draw count
    reps: int
    exact: list = field(default_factory=list)

    @property
    def worst_case(self) -> dict:
        """Per threshold, the smallest mean ratio over the draw counts."""
        return {k: min(r) for k, r in self.ratios.items()}

    @property
    def minimax(self) -> float:
        """The best committed threshold's worst case."""
        return max(self.worst_case.values())

    @property
    def best_threshold(self) -> int:
        wc = self.worst_case
        return max(wc, key=lambda k: (wc[k], -k))

    @property
    def accept_all(self) -> float:
        return self.worst_case[0]

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "capacity": self.capacity,
            "draw_counts": self.draw_counts,
            "reps": self.reps,
            "exact": self.exact,
            "ratios": {f"accept_ge_type_{k}": r for k, r in self.ratios.items()},
            "worst_case": {f"accept_ge_type_{k}": v for k, v in self.worst_case.items()},
            "accept_all_worst_case": self.accept_all,
            "minimax": self.minimax,
            "best_threshold": self.best_threshold,
        }


def lower_bound_draw_counts(T: int) -> list:
    return [int(math.ceil(6 * T * math.log(T) * float(T) ** (2 * j))) for j in range(T)]


ENUMERATION_LIMIT = 200_000


def _compositions(d: int, T: int) -> np.ndarray:
    """All count vectors of length ``T`` summing to ``d``."""
    if T == 1:
        return np.array([[d]], dtype=np.int64)
    rows = []
    for first in range(d + 1):
        rest = _compositions(d - first, T - 1)
        rows.append(np.hstack([np.full((rest.shape[0], 1), first, dtype=np.int64), rest]))
    return np.vstack(rows)


def _expected_ratios(counts: np.ndarray, values: np.ndarray, cap: int) -> np.ndarray:
    """Expected threshold/hindsight ratio given the type counts, one column per threshold.

    Arrival order is uniform given the counts, so a threshold-``k`` strategy
    keeps ``min(cap, N_k)`` draws whose mean value is that of all draws of
    type ``>= k``.
    """
    R, T = counts.shape
    opt = np.zeros(R)
    left = np.full(R, cap, dtype=np.int64)
    for t in range(T - 1, -1, -1):
        take = np.minimum(left, counts[:, t])
        opt += take * values[t]
        left -= take
    out = np.zeros((R, T))
    for k in range(T):
        n_k = counts[:, k:].sum(axis=1)
        s_k = (counts[:, k:] * values[k:]).sum(axis=1)
        got = np.where(n_k > 0, np.minimum(cap, n_k) * s_k / np.maximum(n_k, 1), 0.0)
        out[:, k] = got / opt
    return out


def lower_bound_demo(T: int, seed: int = 0, reps: int = 20_000) -> LowerBoundReport:
    """Fixed thresholds versus hindsight on the single-resource hard instance.

    For each draw count and threshold ``k`` the committed strategy accepts
    every arriving agent of type ``>= k`` while capacity lasts; hindsight
    keeps the ``capacity`` most valuable draws.  The expected ratio is
    computed exactly when the number of possible type-count vectors is at
    most ``ENUMERATION_LIMIT``, otherwise averaged over ``reps`` sampled
    count vectors (each contributing its exact conditional expectation).
    """
    if T not in (2, 3, 4):
        raise ValueError("T must be 2, 3 or 4")
    if reps < 1:
        raise ValueError("reps must be at least 1")
    cap = lower_bound_capacity(T)
    probs = lower_bound_type_probabilities(T)
    values = np.asarray(lower_bound_type_values(T), dtype=np.float64)
    counts_list = lower_bound_draw_counts(T)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), T]))
    table = np.zeros((T, len(counts_list)))
    exact = []
    logp = np.log(probs)
    for c, d in enumerate(counts_list):
        if math.comb(d + T - 1, T - 1) <= ENUMERATION_LIMIT:
            comp = _compositions(d, T)
            lf = np.concatenate([[0.0], np.cumsum(np.log(np.arange(1, d + 1)))])
            w = np.exp(lf[d] - lf[comp].sum(axis=1) + (comp * logp).sum(axis=1))
            table[:, c] = w @ _expected_ratios(comp, values, cap)
            exact.append(True)
        else:
            comp = rng.multinomial(d, probs, size=reps)
            table[:, c] = _expected_ratios(comp, values, cap).mean(axis=0)
            exact.append(False)
    ratios = {k: table[k].tolist() for k in range(T)}
    return LowerBoundReport(T=T, capacity=cap, draw_counts=counts_list, ratios=ratios, reps=reps, exact=exact)


__all__ = [
    "ALGORITHMS", "CSV_HEADER", "ConvergencePoint", "ExperimentResult", "LowerBoundReport",
    "RunReport", "Summary", "conforming_demand", "conforming_instance", "dualbase_ratio",
    "emit_csv", "lower_bound_demo", "lower_bound_draw_counts", "lp_weight", "parse_algorithms",
    "ptas_convergence_study", "random_order", "read_csv", "run_experiment", "trial_seed",
    "write_csv",
]
