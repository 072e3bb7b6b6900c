import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_da
from oracles import fair_reference
from spl.fairness import (
    POLICIES,
    SharingPolicy,
    advertiser_value,
    check_fair,
    compute_fair,
    fairness_from_values,
    fairness_metric,
    integral_x,
    share,
    sharing_gap_instance,
    total_value,
    two_by_two,
)
from spl.instance import DaInstance, da_to_plp, generate_synthetic
from spl.lp import solve_primal


def test_two_by_two_equal_is_integral_106():
    da = two_by_two()
    fa = compute_fair(da, "equal")
    assert fa.value == 106.0
    # edges in order: (1,a) (1,b) (2,a) (2,b)
    assert fa.x.tolist() == [1.0, 0.0, 0.0, 1.0]
    assert check_fair(da, fa.x, fa.interested, "equal").passed


def test_all_half_allocation_is_fair_with_value_60():
    da = two_by_two()
    x = np.full(4, 0.5)
    assert total_value(x, da) == 60.0
    assert check_fair(da, x, np.ones(4, dtype=bool), "equal").passed


def test_one_impression_two_advertisers_split():
    da = DaInstance.from_records([("a", 1), ("b", 1)], [("i", [("a", 3.0), ("b", 2.0)])])
    fa = compute_fair(da, "equal")
    assert fa.x.tolist() == [0.5, 0.5]
    assert fa.prefix.tolist() == [1, 1]


def test_proportional_share_on_gap_instance():
    K = 4
    fa = compute_fair(sharing_gap_instance(K), "proportional")
    assert fa.x[0] == pytest.approx(K / (K + K * K - 1), rel=1e-12)


@pytest.mark.parametrize("policy", POLICIES)
def test_matches_reference_implementation(policy, rng):
    for _ in range(25):
        da = random_da(rng, 4, 12)
        fa = compute_fair(da, policy)
        x, p = fair_reference(da, policy)
        assert np.allclose(fa.x, x, atol=1e-12)
        assert fa.prefix.tolist() == p.tolist()


@pytest.mark.parametrize("policy", POLICIES)
def test_output_satisfies_definition(policy, rng):
    for _ in range(25):
        da = random_da(rng, 5, 15, integer=True)
        fa = compute_fair(da, policy)
        chk = check_fair(da, fa.x, fa.interested, policy)
        assert chk.passed, chk
        sums = np.bincount(da.edge_impression, weights=fa.x, minlength=da.n_impressions)
        assert np.all(sums <= 1 + 1e-12)
        assert fa.advances <= da.n_edges


@pytest.mark.parametrize("policy", ["equal", "proportional"])
def test_processing_order_invariance(policy, rng):
    for _ in range(5):
        da = random_da(rng, 5, 15)
        base = compute_fair(da, policy)
        for _ in range(10):
            other = compute_fair(da, policy, order=rng.permutation(5))
            assert other.prefix.tolist() == base.prefix.tolist()
            assert np.allclose(other.x, base.x, atol=1e-12)


@pytest.mark.parametrize("policy", POLICIES)
def test_adding_an_advertiser_never_raises_other_shares(policy, rng):
    for _ in range(200):
        k = int(rng.integers(1, 6))
        members = rng.permutation(10)[: k + 1]
        weights = rng.integers(1, 5, size=k + 1).astype(float)
        before = share(policy, members[:k], weights[:k])
        after = share(policy, members, weights)
        assert np.all(after[:k] <= before + 1e-15)


def test_share_doc_examples():
    assert share("equal", [0, 1, 2], [1, 1, 1]).tolist() == pytest.approx([1 / 3] * 3)
    assert share("stable_matching", [3, 1], [2.0, 2.0]).tolist() == [0.0, 1.0]
    with pytest.raises(ValueError):
        SharingPolicy("max_min")


def test_stable_matching_half_of_optimum(rng):
    for _ in range(30):
        da = random_da(rng, 4, 15)
        opt = solve_primal(da_to_plp(da)).objective
        assert compute_fair(da, "stable_matching").value >= 0.5 * opt - 1e-9


def test_stable_matching_reassigns_to_new_top():
    # a reaches impression 1 first; b (higher weight) takes it over later
    da = DaInstance.from_records(
        [("a", 1), ("b", 2)],
        [("1", [("a", 5.0), ("b", 9.0)]), ("2", [("a", 1.0)]), ("3", [("b", 10.0)])],
    )
    fa = compute_fair(da, "stable_matching")
    assert check_fair(da, fa.x, fa.interested, "stable_matching").passed
    assert fa.x.tolist() == [0.0, 1.0, 1.0, 1.0]


# -- values and metric -----------------------------------------------------------


def test_value_helpers():
    da = two_by_two()
    x = np.array([1.0, 0.0, 0.0, 0.0])
    assert advertiser_value(x, da, 0) == 100.0
    assert total_value(np.zeros(4), da) == 0.0


def test_metric_examples():
    assert fairness_from_values([5, 5], [10, 10]) == 0.0
    assert fairness_from_values([10, 0], [10, 10]) == 20.0
    assert fairness_from_values([0, 0], [3, 4]) == 7.0
    da = two_by_two()
    fa = compute_fair(da)
    assert fairness_metric(fa.x, fa.x, da) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
def test_metric_scale_invariant(seed, c):
    da = generate_synthetic(4, 20, seed=seed)
    rng = np.random.default_rng(seed)
    x = rng.random(da.n_edges)
    x_star = compute_fair(da).x
    assert fairness_metric(c * x, x_star, da) == pytest.approx(fairness_metric(x, x_star, da), rel=1e-9, abs=1e-9)


def test_integral_x():
    da = two_by_two()
    assert integral_x(da, [0, 1]).tolist() == [1.0, 0.0, 0.0, 1.0]
    assert integral_x(da, [-1, -1]).sum() == 0


def test_check_fair_flags_problems():
    da = two_by_two()
    # interested in the worse impression only: not a prefix
    assert not check_fair(da, np.array([0, 0, 1.0, 1.0]), np.array([False, False, True, True])).prefix_ok
    # wrong split
    assert not check_fair(da, np.array([1.0, 0, 0, 1.0]), np.ones(4, dtype=bool)).policy_ok
    # nobody interested and nothing received
    assert not check_fair(da, np.zeros(4), np.zeros(4, dtype=bool)).satisfied_ok


def test_fair_json():
    da = two_by_two()
    d = compute_fair(da).to_dict(da)
    assert d["value"] == 106.0 and d["prefix"] == {"a": 1, "b": 1}
    assert {(e["impression"], e["advertiser"]) for e in d["x"]} == {("1", "a"), ("2", "b")}


def test_gap_instance_validation():
    with pytest.raises(ValueError):
        sharing_gap_instance(1)
    with pytest.raises(ValueError):
        sharing_gap_instance(3, eps=0.5)
