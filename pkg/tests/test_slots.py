import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from instances import brute_force_vcg, distinct_score_slot_instance, staircase_rule, step_rule
from vm_auctions._validation import InvariantError
from vm_auctions.slots import (
    AllocationRule,
    GeneralizedGSPV1Auction,
    GeneralizedGSPV2Auction,
    GSPAuction,
    HybridGSPAuction,
    SlotAssignment,
    SlotAuctionInstance,
    critical_bid,
    critical_price,
    generalized_gsp_v1,
    generalized_gsp_v1_slots,
    generalized_gsp_v2,
    gsp,
    highest_bid_wins,
    hybrid_gsp,
    slot_level,
    slot_outcome_space,
    slot_rule,
)

BASE = SlotAuctionInstance((1.0, 0.5), (1, 1, 1), (10, 6, 4))

seeds = st.integers(0, 2**32 - 1)


class TestInstance:
    def test_alpha_must_descend(self):
        with pytest.raises(ValueError, match="alpha not strictly descending"):
            SlotAuctionInstance((0.5, 1.0), (1, 1), (1, 2))

    def test_alpha_in_unit_interval(self):
        with pytest.raises(ValueError):
            SlotAuctionInstance((1.5,), (1,), (1,))

    def test_more_slots_than_bidders(self):
        with pytest.raises(ValueError):
            SlotAuctionInstance((1.0, 0.5), (1,), (1,))

    def test_beta_positive(self):
        with pytest.raises(ValueError):
            SlotAuctionInstance((1.0,), (0, 1), (1, 1))

    def test_invariant_check_catches_overcharge(self):
        bad = SlotAssignment((0, None, None), (11.0, 0.0, 0.0), (11.0, 0.0, 0.0))
        with pytest.raises(InvariantError):
            bad.check_invariants(BASE)


class TestGSP:
    def test_three_bidders(self):
        res = gsp(BASE)
        assert res.slot_of == (0, 1, None)
        assert res.per_click_price == (6.0, 4.0, 0.0)
        assert res.expected_payment == (6.0, 2.0, 0.0)

    def test_single_bidder(self):
        res = gsp(SlotAuctionInstance((1.0,), (1.0,), (5.0,)))
        assert res.per_click_price == (0.0,)

    def test_ad_effects_change_ranking(self):
        res = gsp(SlotAuctionInstance((1.0,), (2, 1), (3, 10)))
        assert res.slot_of == (None, 0)
        assert res.per_click_price[1] == 6.0

    def test_ties_favor_lower_index(self):
        res = gsp(SlotAuctionInstance((1.0,), (1, 1), (5, 5)))
        assert res.slot_of == (0, None)
        assert res.per_click_price[0] == 5.0

    def test_estimator(self):
        est = GSPAuction((1.0, 0.5)).fit([10, 6, 4])
        assert est.slot_of_ == (0, 1, None)
        assert est.expected_payment_.tolist() == [6.0, 2.0, 0.0]
        assert type(est.payment([10, 6, 4], est.slot_of_, 0)) is float


class TestV1:
    def test_paper_example(self):
        V = [[3, 3, 1], [0.5, 1, 1], [2, 1, 0], [0.5, 0.5, 0.5]]
        result = generalized_gsp_v1(V)
        assert result.outcome == 0
        assert result.payments == (0.0, 0.0, 1.0, 0.0)

    def test_matches_gsp(self):
        assignment, _ = generalized_gsp_v1_slots(BASE)
        assert assignment.slot_of == (0, 1, None)
        assert assignment.expected_payment == pytest.approx((6, 2, 0), abs=1e-12)

    def test_all_zero(self):
        assert generalized_gsp_v1(np.zeros((3, 2))).payments == (0.0, 0.0, 0.0)

    def test_estimator_matches_gsp(self):
        est = GeneralizedGSPV1Auction((1.0, 0.5))
        assert est.allocate([10, 6, 4]) == (0, 1, None)
        assert est.payment([10, 6, 4], (0, 1, None), 1) == pytest.approx(2.0)


class TestCriticalPrice:
    def test_second_price(self):
        rule = AllocationRule.from_profile(highest_bid_wins, [7, 4], 0)
        assert critical_price(rule, 7) == pytest.approx(4.0, abs=1e-8)

    def test_constant_rule(self):
        assert critical_price(AllocationRule(lambda b: 0.5, 10.0), 3.0) == 0.0

    def test_gsp_second_slot(self):
        rule = slot_rule(BASE, 1)
        assert critical_price(rule, 6.0) == pytest.approx(2.0, abs=1e-8)
        assert critical_bid(rule, 6.0) == pytest.approx(4.0, abs=1e-8)

    def test_non_monotone_rejected(self):
        rule = AllocationRule(lambda b: 1.0 if 2 <= b <= 3 else 0.0, 5.0)
        with pytest.raises(ValueError, match="allocation rule not monotone"):
            critical_price(rule, 2.5)

    def test_type_grid_picks_next_point(self):
        rule = AllocationRule(step_rule(2.3), 10.0)
        assert critical_price(rule, 5.0, type_grid=[0, 1, 2, 3, 4, 5]) == 3.0

    def test_open_threshold(self):
        rule = AllocationRule(step_rule(2.3, closed=False), 10.0)
        assert critical_price(rule, 5.0) == pytest.approx(2.3, abs=1e-8)

    def test_staircase_levels(self):
        rule = AllocationRule(staircase_rule([1.0, 2.0], [0.3, 0.9]), 10.0)
        assert critical_price(rule, 1.5) == pytest.approx(0.3, abs=1e-8)
        assert critical_price(rule, 2.5) == pytest.approx(1.8, abs=1e-8)


class TestV2:
    def test_slots_match_gsp(self):
        res = generalized_gsp_v2(BASE)
        assert res.slot_of == (0, 1, None)
        assert res.per_click_price == pytest.approx((6, 4, 0), abs=1e-8)

    def test_single_item_rule(self):
        res = generalized_gsp_v2(None, allocation=highest_bid_wins, bids=[7, 4])
        assert res.payments == pytest.approx((4, 0), abs=1e-8)
        assert res.allocation == (1.0, 0.0)

    def test_constant_rule_pays_nothing(self):
        res = generalized_gsp_v2(None, allocation=lambda b: np.full(len(b), 0.5), bids=[3, 1])
        assert res.payments == (0.0, 0.0)

    def test_estimator(self):
        est = GeneralizedGSPV2Auction((1.0, 0.5))
        assert est.payment([10, 6, 4], (0, 1, None), 0) == pytest.approx(6.0, abs=1e-8)


class TestHybrid:
    def test_vcg_end(self):
        assert hybrid_gsp(BASE, 1.0).expected_payment == pytest.approx((5, 2, 0), abs=1e-9)

    def test_lexi_end(self):
        res = hybrid_gsp(BASE, math.inf)
        assert res.per_click_price == pytest.approx((6, 4, 0), abs=1e-9)

    def test_single_bidder(self):
        assert hybrid_gsp(SlotAuctionInstance((1.0,), (1,), (3,)), 2.0).expected_payment == (0.0,)

    def test_estimator(self):
        est = HybridGSPAuction((1.0, 0.5), alpha=1.0).fit([10, 6, 4])
        assert est.expected_payment_ == pytest.approx([5, 2, 0])


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_gsp_per_click_consistency(seed):
    inst = distinct_score_slot_instance(np.random.default_rng(seed))
    res = gsp(inst)
    for i, s in enumerate(res.slot_of):
        if s is not None:
            assert res.expected_payment[i] == res.per_click_price[i] * inst.alpha[s] * inst.beta[i]


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_gsp_allocation_monotone_in_own_bid(seed):
    inst = distinct_score_slot_instance(np.random.default_rng(seed))
    grid = np.linspace(0, 2 * max(inst.bids), 200)
    for i in range(inst.n_bidders):
        levels = [slot_level(inst, i, b) for b in grid]
        assert all(b >= a for a, b in zip(levels, levels[1:]))


@settings(max_examples=30, deadline=None)
@given(seeds, st.sampled_from([1.0, 2.0, 5.0, math.inf]))
def test_assortative_maximizes_every_norm(seed, alpha):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    m = int(rng.integers(1, min(3, n) + 1))
    inst = SlotAuctionInstance(
        tuple(sorted(rng.uniform(0.1, 1.0, m), reverse=True)),
        tuple(rng.uniform(0.5, 1.5, n)),
        tuple(rng.uniform(0.1, 1.0, n)),
    )
    V, outcomes = slot_outcome_space(inst)
    order = tuple(int(i) for i in np.argsort(-inst.scores, kind="stable")[:m])
    a = outcomes.index(order)
    if math.isinf(alpha):
        key = [tuple(sorted(V[:, o], reverse=True)) for o in range(V.shape[1])]
        assert key[a] == max(key)
    else:
        norms = (V**alpha).sum(axis=0)
        assert norms[a] >= norms.max() * (1 - 1e-12)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_hybrid_endpoints(seed):
    inst = distinct_score_slot_instance(np.random.default_rng(seed), max_n=5)
    V, outcomes = slot_outcome_space(inst)
    best, vcg = brute_force_vcg(V)
    assert hybrid_gsp(inst, 1.0).expected_payment == pytest.approx(vcg, abs=1e-9)
    assert hybrid_gsp(inst, math.inf).expected_payment == pytest.approx(
        gsp(inst).expected_payment, abs=1e-9
    )


def test_v2_matches_gsp_on_ties_free_instances():
    rng = np.random.default_rng(3)
    for _ in range(20):
        inst = distinct_score_slot_instance(rng)
        assert generalized_gsp_v2(inst).per_click_price == pytest.approx(
            gsp(inst).per_click_price, abs=1e-8
        )


def test_matching_space_size():
    V, outcomes = slot_outcome_space(BASE)
    assert len(outcomes) == len(list(itertools.permutations(range(3), 2)))
    assert V.shape == (3, 6)
