"""Brute-force incentive and monotonicity checks.

A mechanism is probed through four methods: ``allocate(bids)``,
``payment(bids, outcome, bidder)``, ``realized_value(true, outcome, bidder)``
and ``tie_margin(bids)``. Estimators in :mod:`vm_auctions.general` and
:mod:`vm_auctions.slots` provide them.

The check is a falsifier, not a proof: it enumerates a finite set of
misreports and reports the best one under the bidder's preference.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Bundle, Ordering, prefer
from .slots import _scan_monotone

DEFAULT_EPS = 1e-6
DEFAULT_STEP = 0.05


@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    step: float

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("grid step must be positive")
        if self.lo > self.hi:
            raise ValueError("grid lo must not exceed hi")

    def points(self):
        n = int(math.floor((self.hi - self.lo) / self.step + 1e-9)) + 1
        # rounding keeps k * step on decimal grid values (3.0, not 3.0000000000000004)
        return np.round(self.lo + self.step * np.arange(n), 12)

    @classmethod
    def covering(cls, max_value, step=DEFAULT_STEP):
        """Default grid [0, 2 * max_value]."""
        return cls(0.0, max(2.0 * float(max_value), step), step)


@dataclass(frozen=True)
class DeviationReport:
    bidder: int
    truthful_bundle: Bundle
    best_bundle: Bundle
    best_bid: object
    profitable: bool
    tie_excluded: int
    failed_points: int = 0
    n_points: int = 0


def _replace_report(bids, bidder, report):
    out = np.array(bids, dtype=float, copy=True)
    out[bidder] = report
    return out


def candidate_reports(mechanism, baseline, grid):
    """Misreports probed for one bidder.

    Single-parameter mechanisms get every grid bid. General mechanisms get
    uniform rescalings of the baseline row (its maximum moved onto each grid
    point) and every single-outcome perturbation of it.
    """
    points = grid.points()
    if mechanism.domain == "single":
        for g in points:
            yield float(g)
        return
    row = np.asarray(baseline, dtype=float)
    top = row.max()
    if top > 0:
        for g in points:
            yield row * (g / top)
    for o in range(row.size):
        for g in points:
            dev = row.copy()
            dev[o] = g
            yield dev


def _snap(bundle, ref, eps):
    v = ref.value if abs(bundle.value - ref.value) <= eps else bundle.value
    p = ref.payment if abs(bundle.payment - ref.payment) <= eps else bundle.payment
    return Bundle(v, p)


def realized_bundle(mechanism, true_values, bids, bidder, outcome=None):
    """Bundle the bidder gets under ``bids`` valued at its true values."""
    if outcome is None:
        outcome = mechanism.allocate(bids)
    value = mechanism.realized_value(true_values, outcome, bidder)
    payment = max(float(mechanism.payment(bids, outcome, bidder)), 0.0)
    return Bundle(value, payment)


def best_response(mechanism, model, true_values, bids, bidder, grid=None, eps=DEFAULT_EPS):
    """Best misreport of one bidder against fixed other bids.

    ``bids`` holds the full report profile; the bidder's entry is the
    baseline (truthful) report. A probe is tie-excluded when the
    mechanism's deciding comparison is within ``eps`` there, and value or
    payment differences within ``eps`` of the baseline bundle count as
    equal. Probes on which the mechanism raises are counted and skipped.
    """
    bids = np.asarray(bids, dtype=float)
    if grid is None:
        grid = GridSpec.covering(bids.max())
    truth = realized_bundle(mechanism, true_values, bids, bidder)
    baseline = bids[bidder].copy() if bids.ndim > 1 else float(bids[bidder])
    best, best_key, best_bid = truth, truth, baseline
    excluded = failed = n = 0
    truth_tied = mechanism.tie_margin(bids) < eps
    for report in candidate_reports(mechanism, baseline, grid):
        n += 1
        if truth_tied:
            excluded += 1
            continue
        profile = _replace_report(bids, bidder, report)
        try:
            outcome = mechanism.allocate(profile)
            if mechanism.tie_margin(profile, outcome) < eps:
                excluded += 1
                continue
            bundle = realized_bundle(mechanism, true_values, profile, bidder, outcome)
        except (ValueError, ArithmeticError):
            failed += 1
            continue
        key = _snap(bundle, truth, eps)
        if prefer(model, key, best_key) is Ordering.A_BETTER:
            best, best_key = bundle, key
            best_bid = report.copy() if isinstance(report, np.ndarray) else report
    profitable = best is not truth and prefer(model, best_key, truth) is Ordering.A_BETTER
    if isinstance(best_bid, np.ndarray):
        best_bid = tuple(float(x) for x in best_bid)
    return DeviationReport(bidder, truth, best, best_bid, profitable, excluded, failed, n)


def replay(mechanism, true_values, bids, bidder, report):
    """Bundle obtained when ``bidder`` submits ``report`` against ``bids``."""
    if mechanism.domain == "general":
        report = np.asarray(report, dtype=float)
    profile = _replace_report(bids, bidder, report)
    return realized_bundle(mechanism, true_values, profile, bidder)


def dsic_ae_check(mechanism, model, true_values, bids=None, grid=None, eps=DEFAULT_EPS):
    """Run :func:`best_response` for every bidder.

    ``true_values`` is the type profile (a matrix for general mechanisms, a
    per-click type vector for slot mechanisms); ``bids`` defaults to it.
    The check passes iff no report is profitable.
    """
    true_values = np.asarray(true_values, dtype=float)
    bids = true_values if bids is None else np.asarray(bids, dtype=float)
    if grid is None:
        grid = GridSpec.covering(bids.max())
    return [
        best_response(mechanism, model, true_values[i], bids, i, grid, eps)
        for i in range(bids.shape[0])
    ]


def passed(reports):
    return not any(r.profitable for r in reports)


def monotone_check(rule, grid):
    """Whether allocation levels never drop along the grid, and where they first do."""
    violation, _ = _scan_monotone(rule, grid.points())
    return violation is None, violation


def report_rows(reports, instance_id: Optional[str] = None):
    """Flatten reports into CSV-ready dict rows (grid order, bidder order)."""
    rows = []
    for r in reports:
        bid = r.best_bid
        rows.append(
            {
                "instance": instance_id or "",
                "bidder": r.bidder,
                "truthful_value": repr(r.truthful_bundle.value),
                "truthful_payment": repr(r.truthful_bundle.payment),
                "best_value": repr(r.best_bundle.value),
                "best_payment": repr(r.best_bundle.payment),
                "best_bid": " ".join(repr(float(x)) for x in np.atleast_1d(bid)),
                "profitable": int(r.profitable),
                "tie_excluded": r.tie_excluded,
                "failed_points": r.failed_points,
                "n_points": r.n_points,
            }
        )
    return rows
