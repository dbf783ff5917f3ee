"""Welfare-style auctions over an explicit finite outcome space.

Values are a bidders x outcomes matrix. Four mechanisms live here:

* the lexicographic welfare auction, which picks the outcome whose
  descending-sorted value vector is lexicographically largest and charges
  each bidder the largest value among the bidders it displaces;
* the L-alpha welfare auction with L-alpha externality payments, which
  reduces to VCG at alpha=1 and to the lexicographic auction at alpha=inf;
* L-alpha affine maximizers (bidder weights plus outcome offsets);
* the virtual-welfare auction, which runs the lexicographic auction on
  per-bidder monotone transforms of the values and maps prices back.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq
from sklearn.base import BaseEstimator

from ._validation import check_valuations, check_vector, parse_alpha

NEGATIVE_SUM_TOL = 1e-12
ROOT_TOL = 1e-12


@dataclass(frozen=True)
class LexiRound:
    bidder: int
    value: float
    surviving: tuple


@dataclass(frozen=True)
class LexiTrace:
    rounds: tuple

    def __post_init__(self):
        prev = None
        for r in self.rounds:
            if not r.surviving:
                raise ValueError("surviving outcome set must be non-empty")
            if prev is not None and not set(r.surviving) <= set(prev):
                raise ValueError("surviving outcome sets must be nested")
            prev = r.surviving


@dataclass(frozen=True)
class AuctionResult:
    """Chosen outcome, per-bidder total payments and an optional trace.

    Single-parameter mechanisms without an outcome index leave ``outcome``
    as None and report allocation levels instead.
    """

    outcome: Optional[int]
    payments: tuple
    trace: Optional[LexiTrace] = None
    allocation: Optional[tuple] = None

    def __post_init__(self):
        pays = tuple(float(p) for p in self.payments)
        if any(not math.isfinite(p) or p < 0 for p in pays):
            raise ValueError("payments must be finite and >= 0")
        object.__setattr__(self, "payments", pays)


@dataclass(frozen=True)
class AffineParams:
    w: tuple
    z: tuple
    alpha: float = 1.0

    def __post_init__(self):
        w = check_vector(self.w, "w", positive=True)
        z = check_vector(self.z, "z")
        object.__setattr__(self, "w", tuple(float(x) for x in w))
        object.__setattr__(self, "z", tuple(float(x) for x in z))
        object.__setattr__(self, "alpha", parse_alpha(self.alpha))

    @classmethod
    def neutral(cls, n_bidders, n_outcomes, alpha=1.0):
        return cls((1.0,) * n_bidders, (0.0,) * n_outcomes, alpha)


@dataclass(frozen=True)
class VirtualValueFn:
    """Strictly increasing, continuous map applied to one bidder's values."""

    forward: Callable[[float], float]
    inverse: Optional[Callable[[float], float]] = None
    lo: float = 0.0
    hi: float = math.inf
    name: str = ""

    def __call__(self, x):
        return self.forward(x)


def identity_phi():
    return VirtualValueFn(lambda x: x, lambda y: y, name="identity")


def square_phi():
    return VirtualValueFn(lambda x: x * x, math.sqrt, name="square")


def log1p_phi(with_inverse=True):
    return VirtualValueFn(math.log1p, math.expm1 if with_inverse else None, name="log1p")


def scaled_phi(c):
    return VirtualValueFn(lambda x: c * x, lambda y: y / c, name=f"scaled({c})")


PHI_PRESETS = {"identity": identity_phi, "square": square_phi, "log1p": log1p_phi}


# -- lexicographic core --------------------------------------------------


def _sorted_columns(V):
    order = np.argsort(-V, axis=0, kind="stable")
    return order, np.take_along_axis(V, order, axis=0)


def _leximax(V):
    """Index of the leximax column of V (lowest index among ties)."""
    if V.shape[1] == 1:
        return 0
    # Python list comparison is lexicographic and fast on small matrices
    cols = np.sort(V, axis=0)[::-1].T.tolist()
    best = 0
    for o in range(1, len(cols)):
        if cols[o] > cols[best]:
            best = o
    return best


def lexi_allocate(values):
    """Lexicographic welfare outcome and the round-by-round trace.

    Round r keeps the outcomes whose r-th largest bidder value is maximal
    among the outcomes that survived round r-1; the bidder recorded for the
    round is the one holding that value in the chosen outcome (lower index
    first when bidders tie).
    """
    V = check_valuations(values)
    n, k = V.shape
    order, S = _sorted_columns(V)
    alive = np.arange(k)
    kept = []
    for r in range(n):
        vals = S[r, alive]
        best = vals.max()
        alive = alive[vals == best]
        kept.append((float(best), tuple(int(o) for o in alive)))
    chosen = int(alive[0])
    winners = order[:, chosen]
    trace = LexiTrace(
        tuple(LexiRound(int(winners[r]), val, surv) for r, (val, surv) in enumerate(kept))
    )
    return chosen, trace


def _check_lexi_optimal(V, chosen):
    if not 0 <= chosen < V.shape[1]:
        raise ValueError(f"chosen outcome {chosen} out of range")
    best = _leximax(V)
    if chosen != best:
        a = np.sort(V[:, chosen])[::-1]
        b = np.sort(V[:, best])[::-1]
        if not np.array_equal(a, b):
            raise ValueError("chosen outcome does not match lexi_allocate")


def _round_up_to_grid(p, type_grid):
    """Smallest grid type strictly above p; p within 1e-9 of a type snaps to it."""
    grid = np.sort(np.asarray(type_grid, dtype=float))
    near = np.abs(grid - p) <= 1e-9
    if near.any():
        p = float(grid[near][0])
    above = grid[grid > p]
    if above.size == 0:
        raise ValueError("type grid has no type above the critical value")
    return float(above[0])


def _displaced_max(W, minus, chosen):
    others_minus = W[:, minus]
    others_star = W[:, chosen]
    changed = others_minus != others_star
    return float(others_minus[changed].max()) if changed.any() else 0.0


def _lexi_payment(V, chosen, i):
    if V.shape[0] == 1:
        return 0.0
    W = np.delete(V, i, axis=0)
    minus = _leximax(W)
    if minus == chosen:
        return 0.0
    return _displaced_max(W, minus, chosen)


def lexi_payments(values, chosen, type_grid=None):
    """Externality payments of the lexicographic welfare auction.

    Bidder i pays the largest value, at the outcome chosen without i, among
    the other bidders whose value differs between that outcome and
    ``chosen``; zero when nobody's value changes.
    """
    V = check_valuations(values)
    chosen = int(chosen)
    _check_lexi_optimal(V, chosen)
    pays = [_lexi_payment(V, chosen, i) for i in range(V.shape[0])]
    if type_grid is not None:
        pays = [_round_up_to_grid(p, type_grid) if p > 0 else 0.0 for p in pays]
    return tuple(pays)


# -- L-alpha welfare -----------------------------------------------------


def _power_scores(V, alpha, scale):
    if alpha == 1.0:
        return V.sum(axis=0) / scale
    return ((V / scale) ** alpha).sum(axis=0)


def _lp_argmax(V, alpha):
    scale = float(V.max())
    if scale == 0:
        return 0
    return int(np.argmax(_power_scores(V, alpha, scale)))


def lp_allocate(values, alpha):
    """Outcome maximizing the L-alpha norm of bidder values."""
    V = check_valuations(values)
    alpha = parse_alpha(alpha)
    if math.isinf(alpha):
        return lexi_allocate(V)[0]
    return _lp_argmax(V, alpha)


def _lp_payment(V, alpha, chosen, i, scale):
    if V.shape[0] == 1 or scale == 0:
        return 0.0
    W = np.delete(V, i, axis=0)
    minus = _lp_argmax(W, alpha)
    if minus == chosen:
        return 0.0
    a = W[:, minus] / scale
    b = W[:, chosen] / scale
    s = float(np.sum(a**alpha - b**alpha)) if alpha != 1.0 else float(np.sum(a - b))
    if s < 0:
        if s < -NEGATIVE_SUM_TOL:
            raise ValueError("payment formula produced negative externality")
        return 0.0
    return float(scale * s ** (1.0 / alpha))


def _check_lp_optimal(V, alpha, chosen):
    if not 0 <= chosen < V.shape[1]:
        raise ValueError(f"chosen outcome {chosen} out of range")
    scale = V.max()
    if scale == 0:
        return
    scores = _power_scores(V, alpha, scale)
    if scores[chosen] < scores.max() * (1 - 1e-12):
        raise ValueError("chosen outcome does not maximize the L-alpha welfare")


def lp_payments(values, alpha, chosen):
    """L-alpha externality payments.

    p_i = (sum over j != i of b_j(o_-i)**alpha - b_j(o*)**alpha) ** (1/alpha),
    where o_-i is the L-alpha optimum without bidder i. alpha=inf uses the
    lexicographic payments.
    """
    V = check_valuations(values)
    alpha = parse_alpha(alpha)
    chosen = int(chosen)
    if math.isinf(alpha):
        return lexi_payments(V, chosen)
    _check_lp_optimal(V, alpha, chosen)
    scale = V.max()
    return tuple(_lp_payment(V, alpha, chosen, i, scale) for i in range(V.shape[0]))


# -- affine maximizers ---------------------------------------------------


def _affine_matrix(V, params):
    w = np.asarray(params.w)
    z = np.asarray(params.z)
    if w.size != V.shape[0]:
        raise ValueError("one weight per bidder required")
    if z.size != V.shape[1]:
        raise ValueError("one offset per outcome required")
    # row 0 carries the outcome offsets as a bidder that is never removed
    return np.vstack([z[None, :], w[:, None] * V])


def lp_affine_allocate(values, params):
    """Maximize (z(o)**alpha + sum_i (w_i b_i(o))**alpha) ** (1/alpha)."""
    V = check_valuations(values)
    U = _affine_matrix(V, params)
    if math.isinf(params.alpha):
        return _leximax(U)
    return _lp_argmax(U, params.alpha)


def lp_affine_payments(values, params, chosen):
    """Weighted externality payments making the affine maximizer truthful.

    The offsets act as a fixed extra bidder; bidder i's externality is
    measured in weighted units and divided by w_i.
    """
    V = check_valuations(values)
    U = _affine_matrix(V, params)
    chosen = int(chosen)
    alpha = params.alpha
    w = params.w
    pays = []
    for i in range(V.shape[0]):
        W = np.delete(U, i + 1, axis=0)
        if math.isinf(alpha):
            minus = _leximax(W)
            p = 0.0 if minus == chosen else _displaced_max(W, minus, chosen)
        else:
            scale = U.max()
            if scale == 0:
                p = 0.0
            else:
                minus = _lp_argmax(W, alpha)
                if minus == chosen:
                    p = 0.0
                else:
                    a, b = W[:, minus] / scale, W[:, chosen] / scale
                    s = float(np.sum(a**alpha - b**alpha))
                    if s < -NEGATIVE_SUM_TOL:
                        raise ValueError("payment formula produced negative externality")
                    p = float(scale * max(s, 0.0) ** (1.0 / alpha))
        pays.append(p / w[i])
    return tuple(pays)


# -- virtual welfare -----------------------------------------------------


def _phi_range(fn):
    y_lo = fn.forward(fn.lo)
    y_hi = fn.forward(fn.hi) if math.isfinite(fn.hi) else math.inf
    return y_lo, y_hi


def invert_virtual(fn, y):
    """Argument x with fn(x) = y; closed form if available, else root finding."""
    y = float(y)
    y_lo, y_hi = _phi_range(fn)
    if y < y_lo - 1e-12 or y > y_hi + 1e-12 or math.isnan(y):
        raise ValueError(f"virtual price not invertible: {y} outside [{y_lo}, {y_hi}]")
    if fn.inverse is not None:
        return min(max(float(fn.inverse(y)), fn.lo), fn.hi)
    lo = fn.lo
    hi = fn.hi
    if math.isinf(hi):
        hi = max(1.0, lo + 1.0)
        while fn.forward(hi) < y:
            hi = lo + 2.0 * (hi - lo)
            if hi > 1e300:
                raise ValueError("virtual price not invertible: range bracket failed")
    if fn.forward(lo) >= y:
        return lo
    root = brentq(lambda x: fn.forward(x) - y, lo, hi, xtol=ROOT_TOL, rtol=4 * np.finfo(float).eps)
    return float(root)


def virtual_values(values, phis):
    return _virtual_matrix(check_valuations(values), phis)


def _virtual_matrix(V, phis):
    if len(phis) != V.shape[0]:
        raise ValueError("one virtual value function per bidder required")
    T = np.empty_like(V)
    for i, fn in enumerate(phis):
        row = V[i]
        if (row < fn.lo).any() or (row > fn.hi).any():
            raise ValueError(f"values of bidder {i} lie outside its virtual value domain")
        T[i] = [fn.forward(float(x)) for x in row]
    return T


def virtual_welfare_run(values, phis):
    """Lexicographic auction on virtual values, prices mapped back through phi^-1."""
    T = virtual_values(values, phis)
    outcome, trace = lexi_allocate(T)
    virtual_prices = lexi_payments(T, outcome)
    pays = tuple(invert_virtual(fn, pi) for fn, pi in zip(phis, virtual_prices))
    return AuctionResult(outcome, pays, trace)


# -- tie margins used by the incentive checker ---------------------------


def lexi_margin(V, chosen=None):
    """Smallest gap at which another outcome loses the lexicographic comparison.

    Outcomes with an identical value column are indistinguishable to every
    bidder and are ignored; a different column with the same sorted vector
    is an exact tie (margin 0).
    """
    if chosen is None:
        chosen = _leximax(V)
    k = V.shape[1]
    if k == 1:
        return math.inf
    S = -np.sort(-V, axis=0)
    same_col = (V == V[:, [chosen]]).all(axis=0)
    diff = S[:, [chosen]] - S
    margin = math.inf
    for o in range(k):
        if same_col[o]:
            continue
        nz = np.flatnonzero(diff[:, o])
        if nz.size == 0:
            return 0.0
        margin = min(margin, float(diff[nz[0], o]))
    return margin


def lp_margin(V, alpha, chosen=None):
    """Gap, in value units, between the best and runner-up L-alpha norms."""
    scale = V.max()
    k = V.shape[1]
    if k == 1 or scale == 0:
        return math.inf
    if chosen is None:
        chosen = _lp_argmax(V, alpha)
    norms = _power_scores(V, alpha, scale) ** (1.0 / alpha) * scale
    same_col = (V == V[:, [chosen]]).all(axis=0)
    rest = norms[~same_col]
    if rest.size == 0:
        return math.inf
    return float(norms[chosen] - rest.max())


# -- estimator-style wrappers --------------------------------------------


class GeneralMechanism(BaseEstimator):
    """Common surface: ``fit(X)`` on a bid matrix, fitted ``result_``.

    ``allocate``/``payment``/``tie_margin`` work on raw reports without
    refitting so the incentive checker can probe deviations cheaply.
    """

    domain = "general"

    def fit(self, X, y=None):
        X = check_valuations(X, name="X")
        self.result_ = self._run(X)
        self.outcome_ = self.result_.outcome
        self.payments_ = np.asarray(self.result_.payments)
        self.n_bidders_, self.n_outcomes_ = X.shape
        return self

    def predict(self, X):
        return self.allocate(check_valuations(X, name="X"))

    def run(self, X):
        return self.fit(X).result_

    def realized_value(self, true_values, outcome, bidder):
        return float(true_values[outcome])

    def truthful_report(self, true_values):
        return np.asarray(true_values, dtype=float)


class LexiWelfareAuction(GeneralMechanism):
    """Lexicographic welfare auction (the L-infinity limit of VCG)."""

    def __init__(self, type_grid=None):
        self.type_grid = type_grid

    def _run(self, X):
        outcome, trace = lexi_allocate(X)
        return AuctionResult(outcome, lexi_payments(X, outcome, self.type_grid), trace)

    def allocate(self, X):
        return _leximax(X)

    def payment(self, X, outcome, bidder):
        p = _lexi_payment(X, outcome, bidder)
        if self.type_grid is not None and p > 0:
            p = _round_up_to_grid(p, self.type_grid)
        return p

    def tie_margin(self, X, outcome=None):
        return lexi_margin(X, outcome)


class LpWelfareAuction(GeneralMechanism):
    """L-alpha welfare auction with L-alpha externality payments."""

    def __init__(self, alpha=1.0):
        self.alpha = alpha

    def _run(self, X):
        alpha = parse_alpha(self.alpha)
        outcome = lp_allocate(X, alpha)
        trace = lexi_allocate(X)[1] if math.isinf(alpha) else None
        return AuctionResult(outcome, lp_payments(X, alpha, outcome), trace)

    def _profile(self, X):
        # powers of one report profile, shared by allocate, payment and tie_margin
        key = (X.shape, X.tobytes(), self.alpha)
        cached = getattr(self, "_profile_cache", None)
        if cached is None or cached[0] != key:
            alpha = parse_alpha(self.alpha)
            scale = float(X.max())
            P = X / scale if scale > 0 else np.zeros_like(X)
            if alpha != 1.0:
                P = P**alpha
            cached = (key, alpha, scale, P, P.sum(axis=0))
            self._profile_cache = cached
        return cached[1:]

    def allocate(self, X):
        alpha, scale, _, totals = self._profile(X)
        if math.isinf(alpha):
            return _leximax(X)
        return 0 if scale == 0 else int(np.argmax(totals))

    def payment(self, X, outcome, bidder):
        alpha, scale, P, totals = self._profile(X)
        if math.isinf(alpha):
            return _lexi_payment(X, outcome, bidder)
        if X.shape[0] == 1 or scale == 0:
            return 0.0
        # summed afresh: totals minus a row leaves rounding residue on ties,
        # which the 1/alpha root would blow up
        others = np.delete(P, bidder, axis=0).sum(axis=0)
        minus = int(np.argmax(others))
        if minus == outcome:
            return 0.0
        ext = float(others[minus] - others[outcome])
        if ext < 0:
            if ext < -NEGATIVE_SUM_TOL:
                raise ValueError("payment formula produced negative externality")
            return 0.0
        return float(scale * ext ** (1.0 / alpha))

    def tie_margin(self, X, outcome=None):
        alpha, scale, _, totals = self._profile(X)
        if math.isinf(alpha):
            return lexi_margin(X, outcome)
        if X.shape[1] == 1 or scale == 0:
            return math.inf
        if outcome is None:
            outcome = int(np.argmax(totals))
        norms = totals ** (1.0 / alpha) * scale
        rest = norms[~(X == X[:, [outcome]]).all(axis=0)]
        return math.inf if rest.size == 0 else float(norms[outcome] - rest.max())


class LpAffineMaximizer(GeneralMechanism):
    def __init__(self, weights=None, offsets=None, alpha=1.0):
        self.weights = weights
        self.offsets = offsets
        self.alpha = alpha

    def _params(self, X):
        n, k = X.shape
        w = (1.0,) * n if self.weights is None else self.weights
        z = (0.0,) * k if self.offsets is None else self.offsets
        return AffineParams(w, z, self.alpha)

    def _run(self, X):
        params = self._params(X)
        outcome = lp_affine_allocate(X, params)
        return AuctionResult(outcome, lp_affine_payments(X, params, outcome))

    def allocate(self, X):
        return lp_affine_allocate(X, self._params(X))

    def payment(self, X, outcome, bidder):
        return lp_affine_payments(X, self._params(X), outcome)[bidder]

    def tie_margin(self, X, outcome=None):
        params = self._params(X)
        U = _affine_matrix(X, params)
        if math.isinf(params.alpha):
            return lexi_margin(U)
        return lp_margin(U, params.alpha)


class VirtualWelfareAuction(GeneralMechanism):
    """Lexicographic welfare on per-bidder virtual values."""

    def __init__(self, phis=None):
        self.phis = phis

    def _phis(self, X):
        if self.phis is None:
            return [identity_phi()] * X.shape[0]
        return self.phis

    def _run(self, X):
        return virtual_welfare_run(X, self._phis(X))

    def _transformed(self, X):
        # the checker probes allocate, payment and tie_margin on one profile
        key = (X.shape, X.tobytes())
        cached = getattr(self, "_virtual_cache", None)
        if cached is None or cached[0] != key:
            cached = (key, _virtual_matrix(np.asarray(X, dtype=float), self._phis(X)))
            self._virtual_cache = cached
        return cached[1]

    def allocate(self, X):
        return _leximax(self._transformed(X))

    def payment(self, X, outcome, bidder):
        phis = self._phis(X)
        return invert_virtual(phis[bidder], _lexi_payment(self._transformed(X), outcome, bidder))

    def tie_margin(self, X, outcome=None):
        return lexi_margin(self._transformed(X), outcome)
