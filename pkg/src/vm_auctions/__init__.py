"""Truthful auctions for value-maximizing bidders.

Value maximizers want as much value as they can get subject to paying no
more than it is worth (or no more than an ROI target allows). This package
provides mechanisms that are truthful for them, a brute-force misreport
checker, and tools to measure when ROI-constrained bidders behave like
value maximizers.
"""

from ._validation import InvariantError
from .core import (
    AlphaHybrid,
    Bundle,
    Ordering,
    OutcomeSpace,
    PreferenceModel,
    Quasilinear,
    RoiConstrained,
    RoiValueMax,
    SimpleValueMax,
    SingleParamType,
    feasible,
    prefer,
    preference_from_name,
    roi_reduced_value,
)
from .general import (
    AffineParams,
    AuctionResult,
    LexiTrace,
    LexiWelfareAuction,
    LpAffineMaximizer,
    LpWelfareAuction,
    VirtualValueFn,
    VirtualWelfareAuction,
    invert_virtual,
    lexi_allocate,
    lexi_payments,
    lp_affine_allocate,
    lp_affine_payments,
    lp_allocate,
    lp_payments,
    virtual_welfare_run,
)
from .io import InstanceError, InstanceFile, generate, parse_instance, serialize
from .robustness import (
    RobustnessReport,
    SeparationCheck,
    corollary_slot_condition,
    gamma_curve,
    native_min_gamma,
    separation_condition,
)
from .slots import (
    AllocationRule,
    GeneralizedGSPV1Auction,
    GeneralizedGSPV2Auction,
    GSPAuction,
    HybridGSPAuction,
    SlotAssignment,
    SlotAuctionInstance,
    critical_price,
    generalized_gsp_v1,
    generalized_gsp_v2,
    gsp,
    hybrid_gsp,
)
from .verification import DeviationReport, GridSpec, best_response, dsic_ae_check, monotone_check

__version__ = "0.1.0"
