"""When ROI constraints make profit-minded bidders act like value maximizers.

A bidder whose outcome values are far enough apart never trades down to a
worse outcome once an ROI constraint caps what it pays. The per-bidder
separation test below checks that for general valuations; for slot
auctions, :func:`native_min_gamma` gives the smallest ROI above which no
super-quasi-linear bidder gains by misreporting under GSP, given the bids.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._validation import InvariantError, check_gamma, check_slot_effects, check_valuations
from .slots import rank_bidders


class LemmaHypothesisError(ValueError):
    """Two bidders share a score, so the per-auction bound does not apply."""


@dataclass(frozen=True)
class SeparationCheck:
    """Per-bidder verdicts; ``witness[i]`` is (o, o') on failure, else None."""

    gamma: float
    passed: tuple
    witness: tuple

    def __post_init__(self):
        if len(self.passed) != len(self.witness):
            raise InvariantError("one verdict and one witness per bidder")

    @property
    def all_passed(self):
        return all(self.passed)


def separation_condition(values, gamma):
    """Check v(o) * gamma / (gamma + 1) >= v(o') whenever v(o) > v(o').

    Pairs are scanned with o in outcome order, then o' in outcome order; the
    first failing pair is the bidder's witness.
    """
    V = check_valuations(values)
    gamma = check_gamma(gamma)
    shrink = gamma / (gamma + 1.0)
    passed, witness = [], []
    for row in V:
        bad = None
        for o in range(row.size):
            cap = row[o] * shrink
            hit = np.flatnonzero((row < row[o]) & (row > cap))
            if hit.size:
                bad = (o, int(hit[0]))
                break
        passed.append(bad is None)
        witness.append(bad)
    return SeparationCheck(gamma, tuple(passed), tuple(witness))


def _lemma_terms(alpha, sorted_scores):
    a = np.append(np.asarray(alpha, dtype=float), 0.0)
    s = np.zeros(len(alpha) + 2)
    k = min(sorted_scores.size, s.size)
    s[:k] = sorted_scores[:k]
    terms = []
    for i in range(len(alpha)):
        # zero-indexed: slot i, next slot i + 1; scores of bidders i + 1 and i + 2
        if s[i + 1] == 0:
            continue
        gap = a[i] - a[i + 1]
        terms.append(a[i] / gap - a[i + 1] / gap * s[i + 2] / s[i + 1])
    return terms


def native_min_gamma(instance):
    """Smallest gamma the per-auction bound needs; the bound holds iff gamma > it.

    Bidders are sorted by score. The slot effect past the last slot is 0,
    the score of a missing bidder is 0, and terms whose denominator score is
    0 are skipped. With no terms left the result is 0.
    """
    scores = np.asarray(instance.scores, dtype=float)
    if np.unique(scores).size != scores.size:
        raise LemmaHypothesisError("Lemma hypothesis violated: tied scores")
    ordered = scores[rank_bidders(scores)]
    terms = _lemma_terms(instance.alpha, ordered)
    return float(max(terms)) if terms else 0.0


def lemma_condition(instance, gamma):
    return native_min_gamma(instance) < check_gamma(gamma)


def corollary_slot_condition(alpha, gamma):
    """alpha[i + 1] <= gamma / (gamma + 1) * alpha[i] for every slot, last one against 0."""
    a = np.append(check_slot_effects(alpha), 0.0)
    gamma = float(gamma)
    if math.isinf(gamma):
        return bool((a[1:] <= a[:-1]).all())
    shrink = check_gamma(gamma) / (gamma + 1.0)
    return bool((a[1:] <= shrink * a[:-1]).all())


@dataclass(frozen=True)
class RobustnessReport:
    """gamma-curve over a dataset.

    ``per_auction_gamma_star`` is None for auctions excluded by tied scores.
    Fractions are taken over the included auctions.
    """

    per_auction_gamma_star: tuple
    curve: tuple
    excluded_count: int
    dataset_size: int
    ids: Optional[tuple] = field(default=None)

    def __post_init__(self):
        fracs = [f for _, f in self.curve]
        if any(not 0.0 <= f <= 1.0 for f in fracs):
            raise InvariantError("curve fraction outside [0, 1]")
        if any(b < a for a, b in zip(fracs, fracs[1:])):
            raise InvariantError("gamma curve not monotone")
        if len(self.per_auction_gamma_star) != self.dataset_size:
            raise InvariantError("one gamma* entry per auction")


def _gamma_star_or_none(instance):
    try:
        return native_min_gamma(instance)
    except LemmaHypothesisError:
        return None


def gamma_curve(dataset, gammas, ids=None, executor=None):
    """Fraction of auctions whose bound holds (gamma* < gamma) at each gamma."""
    dataset = list(dataset)
    if not dataset:
        raise ValueError("empty dataset")
    gammas = [float(g) for g in gammas]
    if any(b < a for a, b in zip(gammas, gammas[1:])):
        raise ValueError("gammas must be sorted ascending")
    mapper = map if executor is None else executor.map
    stars = tuple(mapper(_gamma_star_or_none, dataset))
    included = np.array([s for s in stars if s is not None], dtype=float)
    curve = []
    for g in gammas:
        frac = float((included < g).sum() / included.size) if included.size else 0.0
        curve.append((g, frac))
    return RobustnessReport(
        stars,
        tuple(curve),
        len(stars) - included.size,
        len(stars),
        tuple(ids) if ids is not None else None,
    )
