import io
import math

import numpy as np
import pytest

from spl import bench
from spl.bench import (
    CSV_HEADER,
    RunReport,
    emit_csv,
    lower_bound_demo,
    lower_bound_draw_counts,
    parse_algorithms,
    ptas_convergence_study,
    random_order,
    read_csv,
    run_experiment,
    trial_seed,
    write_csv,
)
from spl.fairness import two_by_two
from spl.instance import DaInstance, LowerBoundParams, generate_lower_bound, generate_synthetic


@pytest.fixture(scope="module")
def small_da():
    return generate_synthetic(5, 300, demand_range=(5, 20), density=0.4, seed=3)


@pytest.fixture(scope="module")
def small_result(small_da):
    return run_experiment(small_da, bench.ALGORITHMS, trials=3, eps=0.05, seed=7)


# -- orders and seeds ------------------------------------------------------------


def test_random_order_basics():
    assert random_order(1, 99).tolist() == [0]
    assert np.array_equal(random_order(50, 4), random_order(50, 4))
    assert sorted(random_order(50, 4).tolist()) == list(range(50))
    with pytest.raises(ValueError):
        random_order(-1, 0)


def test_random_order_uniform_positions():
    seeds = 100_000
    counts = np.zeros((5, 5))
    for s in range(seeds):
        counts[np.arange(5), random_order(5, s)] += 1
    sigma = math.sqrt(seeds * 0.2 * 0.8)
    assert np.all(np.abs(counts - seeds / 5) <= 3 * sigma + 1)


def test_trial_seed_splitting():
    assert trial_seed(0, 0) == trial_seed(0, 0)
    assert len({trial_seed(7, t) for t in range(100)}) == 100
    assert trial_seed(1, 0) != trial_seed(0, 1)


def test_parse_algorithms():
    assert parse_algorithms("GREEDY, pd_avg,greedy") == ["greedy", "pd_avg"]
    with pytest.raises(ValueError):
        parse_algorithms("greedy,magic")
    with pytest.raises(ValueError):
        parse_algorithms(",")


# -- experiments -----------------------------------------------------------------


def test_reference_rows(small_result):
    for r in small_result.rows("lp_weight"):
        assert r.eff_norm == 100.0
    for r in small_result.rows("fair"):
        assert r.fairness_raw == 0.0 and r.fairness_norm == 0.0


def test_fairness_normalization_worst_is_100(small_result):
    for t in range(3):
        rows = [r for r in small_result.reports if r.trial == t]
        assert max(r.fairness_norm for r in rows) == pytest.approx(100.0)
        assert min(r.fairness_norm for r in rows) == 0.0


def test_efficiency_bounded_by_lp(small_da):
    res = run_experiment(small_da, bench.ALGORITHMS, trials=3, eps=0.05, seed=1, shrink=True)
    assert all(r.eff_norm <= 100.0 + 1e-7 for r in res.reports)


def test_paired_orders(small_result):
    for t in range(3):
        assert len({r.seed for r in small_result.reports if r.trial == t}) == 1


def test_summary_matches_csv(small_result, tmp_path):
    path = tmp_path / "bench.csv"
    emit_csv(small_result.reports, path)
    rows = read_csv(path)
    for algo, s in small_result.summary().items():
        eff = [r.eff_norm for r in rows if r.algorithm == algo]
        assert s.eff_mean == pytest.approx(float(np.mean(eff)), rel=1e-12)
        assert s.trials == len(eff) == 3


def test_jobs_do_not_change_results(small_da):
    a = run_experiment(small_da, "greedy,pd_exp,dualbase", trials=4, eps=0.05, seed=2, jobs=1)
    b = run_experiment(small_da, "greedy,pd_exp,dualbase", trials=4, eps=0.05, seed=2, jobs=4)
    fa, fb = io.StringIO(), io.StringIO()
    write_csv(a.reports, fa)
    write_csv(b.reports, fb)
    assert fa.getvalue() == fb.getvalue()


def test_uncontended_single_advertiser_all_100():
    da = DaInstance.from_records([("a", 200)], [(f"i{k}", [("a", 3.0)]) for k in range(100)])
    res = run_experiment(da, "greedy,pd_avg,pd_exp,dualbase,lp_weight", trials=2, eps=0.1, seed=0,
                         training_policy="online")
    assert all(r.eff_norm == pytest.approx(100.0) for r in res.reports)


def test_skip_policy_forgoes_the_sample():
    da = DaInstance.from_records([("a", 200)], [(f"i{k}", [("a", 3.0)]) for k in range(100)])
    res = run_experiment(da, "dualbase", trials=1, eps=0.1, seed=0)
    assert res.reports[0].eff_norm == pytest.approx(90.0)


def test_experiment_validation(small_da):
    with pytest.raises(ValueError):
        run_experiment(small_da, "greedy", trials=0)
    with pytest.raises(ValueError):
        run_experiment(small_da, "greedy", eps=1.0)


def test_timing_off_by_default(small_result):
    assert all(r.wall_ms == 0.0 for r in small_result.reports)


# -- CSV -------------------------------------------------------------------------


def test_csv_shape_and_round_trip(tmp_path):
    reports = [RunReport(a, t, value=0.1 * (t + 1) + k, eff_norm=1 / 3, seed=t) for k, a in enumerate(("greedy", "pd_avg")) for t in range(3)]
    path = tmp_path / "r.csv"
    emit_csv(reports, path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER) and len(lines) == 7
    back = read_csv(path)
    assert [r.value for r in back] == [r.value for r in reports]
    assert [r.row() for r in back] == [r.row() for r in reports]
    assert all(r.eff_norm == 1 / 3 for r in back)


def test_csv_empty(tmp_path):
    path = tmp_path / "e.csv"
    emit_csv([], path)
    assert path.read_text() == ",".join(CSV_HEADER) + "\n"


# -- convergence -----------------------------------------------------------------


def test_convergence_validation():
    with pytest.raises(ValueError):
        ptas_convergence_study(dict(m=2, n=100), [0.1], trials=0)


def test_convergence_degrades_near_one():
    params = dict(m=3, n=400, demand_range=(20, 60), density=0.5, sigma=0.5)
    lo, hi = ptas_convergence_study(params, [0.05, 0.9], trials=3, seed=1)
    assert hi.mean < lo.mean and hi.mean < 0.2


def test_conforming_demand_meets_usage_hypothesis():
    d = bench.conforming_demand(10, 20000, 0.1)
    L = 11 * (math.log(20000) + math.log(10))
    assert 1 / d <= 0.1**3 / L < 1 / (d - 1)


# -- lower bound -----------------------------------------------------------------


def _t2_exact():
    """Independent binomial computation for T = 2 (values 1 and 4, capacity 5)."""
    cap, p1 = 5, 0.2
    worst = {0: 1.0, 1: 1.0}
    for d in lower_bound_draw_counts(2):
        exp = {0: 0.0, 1: 0.0}
        for n1 in range(d + 1):
            pr = math.comb(d, n1) * p1**n1 * (1 - p1) ** (d - n1)
            n0 = d - n1
            top = min(cap, n1)
            opt = 4 * top + min(cap - top, n0)
            all_ = cap * (4 * n1 + n0) / d
            exp[0] += pr * all_ / opt
            exp[1] += pr * 4 * top / opt
        for k in exp:
            worst[k] = min(worst[k], exp[k])
    return worst


def test_lower_bound_t2_exact():
    rep = lower_bound_demo(2)
    assert rep.draw_counts == [9, 34]
    assert all(rep.exact)
    ref = _t2_exact()
    assert rep.worst_case[0] == pytest.approx(ref[0], rel=1e-12)
    assert rep.worst_case[1] == pytest.approx(ref[1], rel=1e-12)
    assert rep.minimax == pytest.approx(max(ref.values()), rel=1e-12)


def test_accept_all_below_one_at_large_count():
    rep = lower_bound_demo(2)
    assert rep.ratios[0][-1] < 1.0


def test_hindsight_opt_near_capacity_times_top_value():
    T, j = 3, 2
    d = lower_bound_draw_counts(T)[j]
    inst = generate_lower_bound(LowerBoundParams(T=T, draws=d, seed=0))
    cap = int(inst.capacity[0])
    opt = np.sort(inst.weight)[::-1][:cap].sum()
    assert opt == pytest.approx(cap * T ** (2 * j), rel=0.01)


def test_lower_bound_degrades_with_t():
    assert lower_bound_demo(4, reps=2000).minimax < lower_bound_demo(2).minimax


def test_lower_bound_validation():
    with pytest.raises(ValueError):
        lower_bound_demo(5)
    with pytest.raises(ValueError):
        lower_bound_demo(2, reps=0)


def test_lower_bound_deterministic():
    a, b = lower_bound_demo(3, seed=4, reps=500), lower_bound_demo(3, seed=4, reps=500)
    assert a.to_dict() == b.to_dict()
