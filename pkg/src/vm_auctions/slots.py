"""Separable sponsored-search position auctions.

An ad i shown in slot j is clicked with probability alpha[j] * beta[i]. GSP
ranks ads by score beta[i] * bid[i] and charges the minimum bid that keeps
the slot. The generalized variants recover the same prices from the
lexicographic welfare auction (V1) or from critical-bid search on the
quasilinear-optimal allocation (V2); the hybrid variant prices the
assortative assignment with L-alpha externality payments.
"""

import functools
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import InvariantError, check_slot_effects, check_vector, parse_alpha
from .general import (
    AuctionResult,
    _round_up_to_grid,
    lexi_allocate,
    lexi_payments,
    lp_payments,
)

N_PROBE = 1024
CRITICAL_TOL = 1e-9
LEVEL_TOL = 1e-12


@dataclass(frozen=True)
class SlotAuctionInstance:
    alpha: tuple
    beta: tuple
    bids: tuple
    types: Optional[tuple] = None

    def __post_init__(self):
        alpha = check_slot_effects(self.alpha)
        beta = check_vector(self.beta, "beta", positive=True)
        bids = check_vector(self.bids, "bids")
        if beta.size != bids.size:
            raise ValueError("beta and bids must have one entry per bidder")
        if alpha.size > bids.size:
            raise ValueError("more slots than bidders")
        object.__setattr__(self, "alpha", tuple(float(x) for x in alpha))
        object.__setattr__(self, "beta", tuple(float(x) for x in beta))
        object.__setattr__(self, "bids", tuple(float(x) for x in bids))
        if self.types is not None:
            types = check_vector(self.types, "types")
            if types.size != bids.size:
                raise ValueError("types must have one entry per bidder")
            object.__setattr__(self, "types", tuple(float(x) for x in types))

    @property
    def n_bidders(self):
        return len(self.bids)

    @property
    def n_slots(self):
        return len(self.alpha)

    @property
    def scores(self):
        return np.asarray(self.beta) * np.asarray(self.bids)

    def with_bids(self, bids):
        return SlotAuctionInstance(self.alpha, self.beta, tuple(bids), self.types)

    def true_types(self):
        return self.types if self.types is not None else self.bids


@dataclass(frozen=True)
class SlotAssignment:
    """Slot per bidder (None when unassigned), per-click and expected prices."""

    slot_of: tuple
    per_click_price: tuple
    expected_payment: tuple

    def check_invariants(self, instance, tol=1e-9):
        taken = [s for s in self.slot_of if s is not None]
        if len(taken) != len(set(taken)):
            raise InvariantError("assignment is not a matching")
        for i, s in enumerate(self.slot_of):
            price = self.per_click_price[i]
            if s is None:
                if price != 0 or self.expected_payment[i] != 0:
                    raise InvariantError(f"unassigned bidder {i} is charged")
                continue
            if price > instance.bids[i] * (1 + tol) + tol:
                raise InvariantError(f"bidder {i} charged above its bid")
            expected = price * instance.alpha[s] * instance.beta[i]
            if abs(expected - self.expected_payment[i]) > tol * max(1.0, expected):
                raise InvariantError(f"bidder {i}: expected payment != per-click price x clicks")
        return self


@dataclass(frozen=True)
class AllocationRule:
    """Allocation level of one bidder as a function of its own bid."""

    evaluator: Callable[[float], float]
    b_max: float

    def __call__(self, b):
        return self.evaluator(b)

    @classmethod
    def from_profile(cls, allocation, bids, bidder, b_max=None):
        """Fix the other bids; vary bidder's bid through ``allocation(bids)[bidder]``."""
        base = np.array(bids, dtype=float)

        def level(z):
            trial = base.copy()
            trial[bidder] = z
            return float(allocation(trial)[bidder])

        if b_max is None:
            b_max = 10.0 * max(float(base.max()), 1e-12)
        return cls(level, float(b_max))


def rank_bidders(scores):
    """Bidder indices by descending score; ties keep the lower index first."""
    return np.argsort(-np.asarray(scores, dtype=float), kind="stable")


def gsp(instance):
    """Generalized second price auction."""
    scores = instance.scores
    order = rank_bidders(scores)
    n, m = instance.n_bidders, instance.n_slots
    slot_of = [None] * n
    price = [0.0] * n
    pay = [0.0] * n
    for j in range(m):
        i = int(order[j])
        slot_of[i] = j
        if j + 1 < n:
            price[i] = float(scores[order[j + 1]] / instance.beta[i])
        pay[i] = price[i] * instance.alpha[j] * instance.beta[i]
    return SlotAssignment(tuple(slot_of), tuple(price), tuple(pay))


# -- matching outcome space ----------------------------------------------


def slot_outcome_space(instance, use_types=False):
    """Every full assignment of slots to distinct bidders, with values.

    Outcome o is a tuple giving the bidder in each slot. Bidder i's value at
    o is alpha[j] * beta[i] * x[i] when i holds slot j, where x is the bid
    vector (or the true types with ``use_types``), and 0 otherwise.
    """
    n, m = instance.n_bidders, instance.n_slots
    per_click = np.asarray(instance.true_types() if use_types else instance.bids)
    outcomes = list(itertools.permutations(range(n), m))
    V = np.zeros((n, len(outcomes)))
    alpha = np.asarray(instance.alpha)
    beta = np.asarray(instance.beta)
    for o, assignment in enumerate(outcomes):
        idx = np.asarray(assignment)
        V[idx, o] = alpha * beta[idx] * per_click[idx]
    return V, outcomes


def assortative_outcome(instance, outcomes):
    return outcomes.index(tuple(int(i) for i in rank_bidders(instance.scores)[: instance.n_slots]))


def assignment_from_payments(instance, assignment, payments):
    """Per-click prices from total payments on a matching outcome."""
    n = instance.n_bidders
    slot_of = [None] * n
    for j, i in enumerate(assignment):
        slot_of[i] = j
    price = [0.0] * n
    pay = [0.0] * n
    for i in range(n):
        if slot_of[i] is None:
            if payments[i] > 1e-9:
                raise InvariantError(f"unassigned bidder {i} has payment {payments[i]}")
            continue
        pay[i] = float(payments[i])
        price[i] = pay[i] / (instance.alpha[slot_of[i]] * instance.beta[i])
        # keep expected = per-click x clicks exact after the division
        pay[i] = price[i] * instance.alpha[slot_of[i]] * instance.beta[i]
    return SlotAssignment(tuple(slot_of), tuple(price), tuple(pay))


def generalized_gsp_v1(values, type_grid=None):
    """GSP defined as the welfare-maximizing auction for value maximizers."""
    outcome, trace = lexi_allocate(values)
    return AuctionResult(outcome, lexi_payments(values, outcome, type_grid), trace)


def generalized_gsp_v1_slots(instance):
    """Generalized GSP V1 run on the matching outcome space of a slot instance."""
    V, outcomes = slot_outcome_space(instance)
    result = generalized_gsp_v1(V)
    return assignment_from_payments(instance, outcomes[result.outcome], result.payments), result


def hybrid_gsp(instance, alpha):
    """Assortative assignment priced for alpha-hybrid bidders.

    alpha=1 gives VCG slot prices and alpha=inf gives GSP prices.
    """
    alpha = parse_alpha(alpha)
    V, outcomes = slot_outcome_space(instance)
    chosen = assortative_outcome(instance, outcomes)
    payments = lp_payments(V, alpha, chosen)
    return assignment_from_payments(instance, outcomes[chosen], payments)


# -- single-parameter critical pricing -----------------------------------


def _scan_monotone(rule, points):
    """First grid point where the allocation level drops, or None."""
    prev = None
    levels = []
    for z in points:
        x = rule(float(z))
        if prev is not None and x < prev - LEVEL_TOL:
            return float(z), levels
        levels.append(x)
        prev = x
    return None, levels


def critical_bid(rule, bid, n_probe=N_PROBE, tol=CRITICAL_TOL):
    """Infimum bid achieving the same allocation level as ``bid``.

    A coarse probe grid on [0, b_max] checks monotonicity and brackets the
    jump to the target level; bisection then narrows it to ``tol``. The
    upper end of the final bracket is returned, so it always achieves the
    target level.
    """
    bid = float(bid)
    target = rule(bid)
    b_max = max(rule.b_max, bid)
    points = np.unique(np.append(np.linspace(0.0, b_max, n_probe), bid))
    violation, levels = _scan_monotone(rule, points)
    if violation is not None:
        raise ValueError(f"allocation rule not monotone (level drops at bid {violation})")
    levels = np.asarray(levels)
    k = int(np.argmax(levels >= target - LEVEL_TOL))
    if k == 0:
        return 0.0
    lo, hi = float(points[k - 1]), float(points[k])
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if rule(mid) >= target - LEVEL_TOL:
            hi = mid
        else:
            lo = mid
    return hi


def critical_price(rule, bid, type_grid=None, n_probe=N_PROBE, tol=CRITICAL_TOL):
    """Total payment: critical bid times the allocation level at ``bid``."""
    x = rule(float(bid))
    if x <= 0:
        return 0.0
    b_low = critical_bid(rule, bid, n_probe, tol)
    if type_grid is not None:
        b_low = _round_up_to_grid(b_low, type_grid)
    return b_low * x


def slot_level(instance, bidder, bid):
    """Click share alpha[j] * beta[i] bidder gets when bidding ``bid``."""
    scores = instance.scores
    s = instance.beta[bidder] * bid
    others = np.delete(scores, bidder)
    idx = np.delete(np.arange(instance.n_bidders), bidder)
    rank = int(np.sum(others > s) + np.sum((others == s) & (idx < bidder)))
    if rank >= instance.n_slots:
        return 0.0
    return instance.alpha[rank] * instance.beta[bidder]


def slot_rule(instance, bidder, b_max=None):
    if b_max is None:
        b_max = 10.0 * max(max(instance.bids), 1e-12)
    return AllocationRule(lambda z: slot_level(instance, bidder, z), float(b_max))


def generalized_gsp_v2(instance, allocation=None, bids=None, type_grid=None, b_max=None):
    """Quasilinear-optimal allocation with critical-bid prices.

    With a :class:`SlotAuctionInstance` the allocation is the assortative
    one and a :class:`SlotAssignment` is returned. Otherwise pass an
    ``allocation`` callable mapping a bid vector to allocation levels and
    the ``bids``; the result is an :class:`AuctionResult` with no outcome
    index and the allocation levels attached.
    """
    if isinstance(instance, SlotAuctionInstance):
        n = instance.n_bidders
        assignment = gsp(instance)
        pays = []
        for i in range(n):
            rule = slot_rule(instance, i, b_max)
            pays.append(critical_price(rule, instance.bids[i], type_grid))
        chosen = [None] * instance.n_slots
        for i, s in enumerate(assignment.slot_of):
            if s is not None:
                chosen[s] = i
        return assignment_from_payments(instance, tuple(chosen), pays)
    if allocation is None or bids is None:
        raise ValueError("explicit allocation rules need both allocation and bids")
    bids = np.asarray(bids, dtype=float)
    levels = np.asarray(allocation(bids), dtype=float)
    pays = [
        critical_price(AllocationRule.from_profile(allocation, bids, i, b_max), bids[i], type_grid)
        for i in range(bids.size)
    ]
    return AuctionResult(None, pays, allocation=tuple(float(x) for x in levels))


def highest_bid_wins(bids):
    """Single-item allocation: the highest bid (lowest index on ties) gets 1."""
    x = np.zeros(len(bids))
    x[int(np.argmax(bids))] = 1.0
    return x


# -- estimator-style wrappers --------------------------------------------


class SlotMechanism(BaseEstimator):
    """Slot effects and ad effects are parameters; ``fit`` takes per-click bids."""

    domain = "single"

    def __init__(self, slot_effects=(1.0,), ad_effects=None):
        self.slot_effects = slot_effects
        self.ad_effects = ad_effects

    def _instance(self, bids):
        bids = np.asarray(bids, dtype=float)
        beta = np.ones(bids.size) if self.ad_effects is None else self.ad_effects
        return SlotAuctionInstance(tuple(self.slot_effects), tuple(beta), tuple(bids))

    def fit(self, X, y=None):
        instance = self._instance(X)
        self.result_ = self._run(instance)
        self.result_.check_invariants(instance)
        self.slot_of_ = self.result_.slot_of
        self.per_click_price_ = np.asarray(self.result_.per_click_price)
        self.expected_payment_ = np.asarray(self.result_.expected_payment)
        return self

    def predict(self, X):
        return self.allocate(X)

    def run(self, X):
        return self.fit(X).result_

    def allocate(self, bids):
        bids = np.asarray(bids, dtype=float)
        beta = np.ones(bids.size) if self.ad_effects is None else np.asarray(self.ad_effects)
        order = rank_bidders(beta * bids)
        slot_of = [None] * bids.size
        for j in range(len(self.slot_effects)):
            slot_of[int(order[j])] = j
        return tuple(slot_of)

    def payment(self, bids, outcome, bidder):
        return self._run(self._instance(bids)).expected_payment[bidder]

    def realized_value(self, true_type, outcome, bidder):
        s = outcome[bidder]
        if s is None:
            return 0.0
        beta = 1.0 if self.ad_effects is None else self.ad_effects[bidder]
        return float(self.slot_effects[s] * beta * true_type)

    def truthful_report(self, true_type):
        return float(true_type)

    def tie_margin(self, bids, outcome=None):
        bids = np.asarray(bids, dtype=float)
        beta = np.ones(bids.size) if self.ad_effects is None else np.asarray(self.ad_effects)
        s = np.sort(beta * bids)[::-1][: len(self.slot_effects) + 1]
        if s.size < 2:
            return math.inf
        return float(np.min(s[:-1] - s[1:]))


class GSPAuction(SlotMechanism):
    def _run(self, instance):
        return gsp(instance)

    def payment(self, bids, outcome, bidder):
        s = outcome[bidder]
        if s is None:
            return 0.0
        bids = np.asarray(bids, dtype=float)
        beta = np.ones(bids.size) if self.ad_effects is None else np.asarray(self.ad_effects)
        scores = beta * bids
        order = rank_bidders(scores)
        nxt = scores[order[s + 1]] if s + 1 < bids.size else 0.0
        return float(nxt / beta[bidder] * self.slot_effects[s] * beta[bidder])


class GeneralizedGSPV2Auction(SlotMechanism):
    def __init__(self, slot_effects=(1.0,), ad_effects=None, type_grid=None):
        super().__init__(slot_effects, ad_effects)
        self.type_grid = type_grid

    def _run(self, instance):
        return generalized_gsp_v2(instance, type_grid=self.type_grid)

    def payment(self, bids, outcome, bidder):
        instance = self._instance(bids)
        return critical_price(slot_rule(instance, bidder), instance.bids[bidder], self.type_grid)


class HybridGSPAuction(SlotMechanism):
    def __init__(self, slot_effects=(1.0,), ad_effects=None, alpha=math.inf):
        super().__init__(slot_effects, ad_effects)
        self.alpha = alpha

    def _run(self, instance):
        return hybrid_gsp(instance, self.alpha)


@functools.lru_cache(maxsize=4096)
def _v1_assignment(instance):
    return generalized_gsp_v1_slots(instance)[0]


class GeneralizedGSPV1Auction(SlotMechanism):
    """Lexicographic welfare auction over the matching outcome space."""

    def _run(self, instance):
        # instances are frozen and hashable; incentive checks repeat profiles
        return _v1_assignment(instance)

    def allocate(self, bids):
        return self._run(self._instance(bids)).slot_of
