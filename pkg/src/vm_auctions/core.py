"""Bidder preferences over (value, payment) bundles.

Every mechanism and the incentive checker compare bundles through
:func:`prefer`. Quasilinear and alpha-hybrid bidders rank bundles by a
utility; value maximizers rank feasible bundles by value first and
payment second, and rank every infeasible bundle below every feasible one.
"""

import enum
import math
from dataclasses import dataclass, field

from ._validation import check_gamma, parse_alpha

# Alpha at or above which AlphaHybrid compares bundles by the alpha -> inf
# limit ordering instead of evaluating v**alpha - p**alpha.
LIMIT_ALPHA = 64.0


class Ordering(enum.Enum):
    A_BETTER = 1
    TIE = 0
    B_BETTER = -1


def _sign(x):
    if x > 0:
        return Ordering.A_BETTER
    if x < 0:
        return Ordering.B_BETTER
    return Ordering.TIE


@dataclass(frozen=True)
class Bundle:
    """Value received and total payment made by one bidder."""

    value: float
    payment: float

    def __post_init__(self):
        for name in ("value", "payment"):
            x = float(getattr(self, name))
            if not math.isfinite(x) or x < 0:
                raise ValueError(f"bundle {name} must be finite and >= 0, got {x}")
            object.__setattr__(self, name, x)


@dataclass(frozen=True)
class OutcomeSpace:
    """Ordered, labelled outcomes; the label at position k has index k."""

    outcomes: tuple

    def __post_init__(self):
        labels = tuple(self.outcomes)
        if not labels:
            raise ValueError("outcome space must be non-empty")
        if len(set(labels)) != len(labels):
            raise ValueError("outcome labels must be unique")
        object.__setattr__(self, "outcomes", labels)

    def __len__(self):
        return len(self.outcomes)

    def label(self, index):
        return self.outcomes[index]

    def index(self, label):
        return self.outcomes.index(label)

    @classmethod
    def default(cls, k):
        return cls(tuple(f"o{j + 1}" for j in range(k)))


@dataclass(frozen=True)
class SingleParamType:
    """Per-unit value t; value at allocation level x is t * x."""

    t: float

    def __post_init__(self):
        t = float(self.t)
        if not math.isfinite(t) or t < 0:
            raise ValueError("type must be finite and >= 0")
        object.__setattr__(self, "t", t)

    def value(self, x):
        return self.t * x


def roi_reduced_value(v, gamma):
    """Value of the simple value maximizer equivalent to an ROI-gamma bidder."""
    return v / (1.0 + check_gamma(gamma))


def _value_max_order(a, fa, b, fb):
    if fa != fb:
        return Ordering.A_BETTER if fa else Ordering.B_BETTER
    if fa:
        if a.value != b.value:
            return _sign(a.value - b.value)
        return _sign(b.payment - a.payment)
    # both infeasible: deterministic fallback, cheaper first
    if a.payment != b.payment:
        return _sign(b.payment - a.payment)
    return _sign(a.value - b.value)


class PreferenceModel:
    """Base class; subclasses define ``feasible`` and ``compare``."""

    def feasible(self, bundle):
        return True

    def compare(self, a, b):
        raise NotImplementedError


@dataclass(frozen=True)
class Quasilinear(PreferenceModel):
    def compare(self, a, b):
        return _sign((a.value - a.payment) - (b.value - b.payment))


@dataclass(frozen=True)
class SimpleValueMax(PreferenceModel):
    def feasible(self, bundle):
        return bundle.payment <= bundle.value

    def compare(self, a, b):
        return _value_max_order(a, self.feasible(a), b, self.feasible(b))


@dataclass(frozen=True)
class RoiValueMax(PreferenceModel):
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "gamma", check_gamma(self.gamma))

    def feasible(self, bundle):
        return bundle.payment <= roi_reduced_value(bundle.value, self.gamma)

    def compare(self, a, b):
        return _value_max_order(a, self.feasible(a), b, self.feasible(b))


@dataclass(frozen=True)
class AlphaHybrid(PreferenceModel):
    """Utility v**alpha - p**alpha; alpha=1 is quasilinear."""

    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", parse_alpha(self.alpha))

    def compare(self, a, b):
        if self.alpha >= LIMIT_ALPHA:
            return _limit_hybrid_order(a, b)
        if self.alpha == 1.0:
            return _sign((a.value - a.payment) - (b.value - b.payment))
        return _hybrid_utility_order(a, b, self.alpha)


@dataclass(frozen=True)
class RoiConstrained(PreferenceModel):
    """Any base preference restricted to bundles meeting an ROI of gamma.

    Bundles violating ``p <= v / (1 + gamma)`` (or the base model's own
    constraint) rank below all feasible bundles.
    """

    base: PreferenceModel = field(default_factory=Quasilinear)
    gamma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "gamma", check_gamma(self.gamma))

    def feasible(self, bundle):
        return self.base.feasible(bundle) and bundle.payment <= roi_reduced_value(
            bundle.value, self.gamma
        )

    def compare(self, a, b):
        fa, fb = self.feasible(a), self.feasible(b)
        if fa and fb:
            return self.base.compare(a, b)
        return _value_max_order(a, fa, b, fb)


def _hybrid_utility_order(a, b, alpha):
    # dividing by the largest amount keeps powers inside [0, 1]: no overflow
    # for big amounts, and no underflow to a spurious tie for tiny ones
    scale = max(a.value, a.payment, b.value, b.payment)
    if scale == 0:
        return Ordering.TIE
    ua = (a.value / scale) ** alpha - (a.payment / scale) ** alpha
    ub = (b.value / scale) ** alpha - (b.payment / scale) ** alpha
    return _sign(ua - ub)


def _limit_hybrid_order(a, b):
    # sign class of the utility first: v > p beats v == p beats v < p
    ca = _sign(a.value - a.payment).value
    cb = _sign(b.value - b.payment).value
    if ca != cb:
        return _sign(ca - cb)
    if ca > 0:
        if a.value != b.value:
            return _sign(a.value - b.value)
        return _sign(b.payment - a.payment)
    if ca < 0:
        if a.payment != b.payment:
            return _sign(b.payment - a.payment)
        return _sign(a.value - b.value)
    return Ordering.TIE


def feasible(model, bundle):
    """True iff the bundle meets the model's spending constraint."""
    return model.feasible(bundle)


def prefer(model, a, b):
    """Compare two bundles under ``model``; exact equality is a tie."""
    return model.compare(a, b)


def preference_from_name(name, *, gamma=1.0, alpha=2.0):
    """Build a model from a CLI-style name."""
    name = name.lower()
    if name in ("quasilinear", "ql"):
        return Quasilinear()
    if name in ("simple-vm", "simple"):
        return SimpleValueMax()
    if name in ("roi-vm", "roi"):
        return RoiValueMax(gamma)
    if name == "hybrid":
        return AlphaHybrid(alpha)
    if name == "hybrid-roi":
        return RoiConstrained(AlphaHybrid(alpha), gamma)
    if name == "quasilinear-roi":
        return RoiConstrained(Quasilinear(), gamma)
    raise ValueError(f"unknown preference model {name!r}")
