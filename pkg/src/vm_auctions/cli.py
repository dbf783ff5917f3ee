"""Command line entry point: ``vm-auctions {run,price,verify,robustness,generate}``.

Exit codes: 0 ok, 1 usage, 2 bad input, 3 profitable deviation found,
4 internal invariant breach. The resolved run configuration is echoed as
one JSON line on stderr.
"""

import argparse
import csv
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import io as vio
from ._validation import InvariantError, parse_alpha
from .core import preference_from_name, roi_reduced_value
from .general import (
    PHI_PRESETS,
    LexiWelfareAuction,
    LpAffineMaximizer,
    LpWelfareAuction,
    VirtualWelfareAuction,
    lexi_payments,
    lp_affine_payments,
    lp_payments,
)
from .robustness import gamma_curve
from .slots import (
    GeneralizedGSPV1Auction,
    GeneralizedGSPV2Auction,
    GSPAuction,
    HybridGSPAuction,
    generalized_gsp_v1_slots,
)
from .verification import DEFAULT_EPS, DEFAULT_STEP, GridSpec, dsic_ae_check, passed, report_rows

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_DEVIATION, EXIT_INVARIANT = 0, 1, 2, 3, 4

GENERAL_MECHANISMS = ("lexi", "lp", "lp-affine", "virtual")
SLOT_MECHANISMS = ("gsp", "ggsp-v2", "hybrid-gsp")
MECHANISMS = GENERAL_MECHANISMS + ("ggsp-v1",) + SLOT_MECHANISMS
MODELS = ("quasilinear", "simple-vm", "roi-vm", "hybrid", "hybrid-roi", "quasilinear-roi")
ROI_MODELS = ("roi-vm", "hybrid-roi", "quasilinear-roi")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class RunConfig:
    command: str = ""
    mechanism: Optional[str] = None
    model: Optional[str] = None
    alpha_param: object = 1.0
    gamma: float = 1.0
    weights: Optional[list] = None
    offsets: Optional[list] = None
    phi: str = "identity"
    grid_lo: Optional[float] = None
    grid_hi: Optional[float] = None
    grid_step: float = DEFAULT_STEP
    eps: float = DEFAULT_EPS
    seed: Optional[int] = None
    instance: Optional[str] = None
    dataset: Optional[str] = None
    gammas: Optional[str] = None
    preset: Optional[str] = None
    count: Optional[int] = None
    outcome: Optional[str] = None
    out: Optional[str] = None
    per_auction: Optional[str] = None
    trace: bool = False
    threads: int = 1


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser():
    p = _Parser(prog="vm-auctions", description="Auctions for value-maximizing bidders.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output file (default stdout where applicable)")

    def mech(sp, choices):
        sp.add_argument("--mechanism", choices=choices)
        sp.add_argument("--instance", help="instance JSON file")
        sp.add_argument("--alpha", dest="alpha_param", help="L-alpha exponent, or inf")
        sp.add_argument("--weights", type=_float_list, help="comma-separated bidder weights")
        sp.add_argument("--offsets", type=_float_list, help="comma-separated outcome offsets")
        sp.add_argument("--phi", choices=sorted(PHI_PRESETS), help="virtual value map for every bidder")

    run = sub.add_parser("run", help="run a mechanism and print the result as JSON")
    common(run)
    mech(run, MECHANISMS)
    run.add_argument("--trace", action="store_true", help="include the lexicographic trace")

    price = sub.add_parser("price", help="payments at a given outcome, or critical per-click prices")
    common(price)
    mech(price, MECHANISMS)
    price.add_argument("--outcome", help="outcome label (general instances)")

    ver = sub.add_parser("verify", help="brute-force search for profitable misreports")
    common(ver)
    mech(ver, MECHANISMS)
    ver.add_argument("--model", choices=MODELS)
    ver.add_argument("--gamma", type=float)
    ver.add_argument("--grid-lo", type=float)
    ver.add_argument("--grid-hi", type=float)
    ver.add_argument("--grid-step", type=float)
    ver.add_argument("--eps", type=float)

    rob = sub.add_parser("robustness", help="gamma-curve of a slot dataset")
    common(rob)
    rob.add_argument("--dataset", help="JSON Lines dataset")
    rob.add_argument("--gammas", help="lo:hi:step, hi inclusive")
    rob.add_argument("--per-auction", help="also write id,gamma_star CSV here")

    gen = sub.add_parser("generate", help="write a synthetic dataset as JSON Lines")
    common(gen)
    gen.add_argument("--preset", choices=vio.PRESETS)
    gen.add_argument("--count", type=int)
    return p


def resolve_config(args):
    cfg = RunConfig(command=args.command)
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            data = json.load(fh)
        names = {f.name for f in dataclasses.fields(RunConfig)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = dataclasses.replace(cfg, **data)
    for f in dataclasses.fields(RunConfig):
        val = getattr(args, f.name, None)
        if val is not None and f.name not in ("command",):
            if f.name == "trace" and not val:
                continue
            setattr(cfg, f.name, val)
    threads = os.environ.get("VM_AUCTIONS_THREADS")
    cfg.threads = max(1, int(threads)) if threads else (os.cpu_count() or 1)
    return cfg


def _require(cfg, *names):
    for name in names:
        if getattr(cfg, name) is None:
            raise UsageError(f"{cfg.command}: --{name.replace('_', '-')} is required")


def _read_instance(path):
    with open(path, encoding="utf-8") as fh:
        return vio.parse_instance(fh.read())


def make_mechanism(cfg, inst):
    """Estimator for ``cfg.mechanism`` suited to the instance kind."""
    name = cfg.mechanism
    if inst.kind == "slot":
        a, b = inst.alpha, inst.beta
        if name == "gsp":
            return GSPAuction(a, b)
        if name == "ggsp-v1":
            return GeneralizedGSPV1Auction(a, b)
        if name == "ggsp-v2":
            return GeneralizedGSPV2Auction(a, b)
        if name == "hybrid-gsp":
            return HybridGSPAuction(a, b, parse_alpha(cfg.alpha_param))
        raise ValueError(f"mechanism {name} needs a general instance")
    if name in SLOT_MECHANISMS:
        raise ValueError(f"mechanism {name} needs a slot instance")
    if name in ("lexi", "ggsp-v1"):
        return LexiWelfareAuction()
    if name == "lp":
        return LpWelfareAuction(parse_alpha(cfg.alpha_param))
    if name == "lp-affine":
        return LpAffineMaximizer(cfg.weights, cfg.offsets, parse_alpha(cfg.alpha_param))
    n = len(inst.values)
    return VirtualWelfareAuction([PHI_PRESETS[cfg.phi]()] * n)


def _nums(xs):
    return [vio.clean_number(x) for x in xs]


def _emit(cfg, text, stdout):
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text + "\n")
    else:
        stdout.write(text + "\n")


def _dump(obj):
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def cmd_run(cfg, stdout):
    _require(cfg, "mechanism", "instance")
    inst = _read_instance(cfg.instance)
    mech = make_mechanism(cfg, inst)
    if inst.kind == "general":
        result = mech.run(inst.value_matrix())
        out = {"outcome": inst.outcomes[result.outcome], "payments": _nums(result.payments)}
        if cfg.trace and result.trace is not None:
            out["trace"] = [
                {"bidder": r.bidder, "value": vio.clean_number(r.value),
                 "surviving": [inst.outcomes[o] for o in r.surviving]}
                for r in result.trace.rounds
            ]
    else:
        res = mech.run(np.asarray(inst.bids))
        out = {
            "outcome": list(res.slot_of),
            "payments": _nums(res.expected_payment),
            "per_click_price": _nums(res.per_click_price),
        }
        if cfg.trace and cfg.mechanism == "ggsp-v1":
            _, lexi = generalized_gsp_v1_slots(inst.slot_instance())
            out["trace"] = [{"bidder": r.bidder, "value": r.value} for r in lexi.trace.rounds]
    _emit(cfg, _dump(out), stdout)
    return EXIT_OK


def _payments_at(cfg, mech, X, chosen):
    # these entry points reject outcomes the mechanism would not choose
    if isinstance(mech, LexiWelfareAuction):
        return lexi_payments(X, chosen)
    if isinstance(mech, LpWelfareAuction):
        return lp_payments(X, parse_alpha(cfg.alpha_param), chosen)
    if isinstance(mech, LpAffineMaximizer):
        return lp_affine_payments(X, mech._params(X), chosen)
    if chosen != mech.allocate(X):
        raise ValueError("outcome is not the mechanism's choice")
    return mech.run(X).payments


def cmd_price(cfg, stdout):
    _require(cfg, "instance")
    inst = _read_instance(cfg.instance)
    if inst.kind == "slot":
        # critical per-click prices of the quasilinear-optimal allocation
        res = GeneralizedGSPV2Auction(inst.alpha, inst.beta).run(np.asarray(inst.bids))
        out = {"outcome": list(res.slot_of), "per_click_price": _nums(res.per_click_price),
               "payments": _nums(res.expected_payment)}
        _emit(cfg, _dump(out), stdout)
        return EXIT_OK
    _require(cfg, "mechanism")
    mech = make_mechanism(cfg, inst)
    X = inst.value_matrix()
    if cfg.outcome is None:
        result = mech.run(X)
        chosen, pays = result.outcome, result.payments
    else:
        if cfg.outcome not in inst.outcomes:
            raise ValueError(f"unknown outcome {cfg.outcome!r}")
        chosen = inst.outcome_space().index(cfg.outcome)
        pays = _payments_at(cfg, mech, X, chosen)
    _emit(cfg, _dump({"outcome": inst.outcomes[chosen], "payments": _nums(pays)}), stdout)
    return EXIT_OK


def verification_inputs(cfg, inst):
    """(true types, reports) for the verifier.

    Slot instances with explicit types report their stored bids. Otherwise
    bidders report their true values, reduced by 1 + gamma for ROI models.
    """
    roi = cfg.model in ROI_MODELS
    if inst.kind == "slot":
        if inst.types is not None:
            return np.asarray(inst.types), np.asarray(inst.bids)
        truth = np.asarray(inst.bids)
    else:
        truth = inst.value_matrix()
    bids = roi_reduced_value(truth, cfg.gamma) if roi else truth
    return truth, bids


def cmd_verify(cfg, stdout):
    _require(cfg, "mechanism", "model", "instance")
    inst = _read_instance(cfg.instance)
    mech = make_mechanism(cfg, inst)
    model = preference_from_name(cfg.model, gamma=cfg.gamma, alpha=parse_alpha(cfg.alpha_param))
    truth, bids = verification_inputs(cfg, inst)
    top = float(np.max(bids))
    lo = 0.0 if cfg.grid_lo is None else cfg.grid_lo
    hi = max(2.0 * top, cfg.grid_step) if cfg.grid_hi is None else cfg.grid_hi
    grid = GridSpec(lo, hi, cfg.grid_step)
    reports = dsic_ae_check(mech, model, truth, bids, grid, cfg.eps)
    rows = report_rows(reports, inst.id)
    fh = open(cfg.out, "w", encoding="utf-8", newline="") if cfg.out else stdout
    try:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if cfg.out:
            fh.close()
    return EXIT_OK if passed(reports) else EXIT_DEVIATION


def cmd_robustness(cfg, stdout):
    _require(cfg, "dataset", "gammas")
    gammas = vio.parse_gamma_grid(cfg.gammas)
    items = vio.read_dataset(cfg.dataset)
    if any(it.kind != "slot" for it in items):
        raise ValueError("robustness needs a dataset of slot instances")
    ids = [it.id or f"#{k:06d}" for k, it in enumerate(items)]
    instances = [it.slot_instance() for it in items]
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            report = gamma_curve(instances, gammas, ids, executor=pool)
    else:
        report = gamma_curve(instances, gammas, ids)
    fh = open(cfg.out, "w", encoding="utf-8", newline="") if cfg.out else stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gamma", "fraction", "excluded_count"])
        for g, f in report.curve:
            w.writerow([repr(g), repr(f), report.excluded_count])
    finally:
        if cfg.out:
            fh.close()
    if cfg.per_auction:
        with open(cfg.per_auction, "w", encoding="utf-8", newline="") as ph:
            w = csv.writer(ph, lineterminator="\n")
            w.writerow(["id", "gamma_star"])
            for ident, star in sorted(zip(ids, report.per_auction_gamma_star)):
                w.writerow([ident, "" if star is None else repr(star)])
    return EXIT_OK


def cmd_generate(cfg, stdout):
    _require(cfg, "preset", "count")
    seed = 0 if cfg.seed is None else cfg.seed
    data = vio.generate(cfg.preset, cfg.count, seed)
    if cfg.out:
        vio.write_dataset(cfg.out, data)
    else:
        for inst in data:
            stdout.write(vio.serialize(inst) + "\n")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "price": cmd_price,
    "verify": cmd_verify,
    "robustness": cmd_robustness,
    "generate": cmd_generate,
}


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        stderr.write(_dump({"run_config": dataclasses.asdict(cfg)}) + "\n")
        return COMMANDS[cfg.command](cfg, stdout)
    except UsageError as exc:
        stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except InvariantError as exc:
        stderr.write(f"invariant breach: {exc}\n")
        return EXIT_INVARIANT
    except (vio.InstanceError, ValueError, OSError, json.JSONDecodeError) as exc:
        stderr.write(f"input error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
