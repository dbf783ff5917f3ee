"""Instance files, datasets and synthetic generators.

Instances are JSON objects, datasets are JSON Lines (one instance per line).
Floats are written with Python's shortest round-trip repr, so
``parse_instance(serialize(x)) == x`` holds exactly.
"""

import json
import math
from dataclasses import dataclass
from typing import Optional

import jsonschema
import numpy as np

from .core import OutcomeSpace
from .slots import SlotAuctionInstance

_NUMBER_ARRAY = {"type": "array", "items": {"type": "number", "minimum": 0}}

INSTANCE_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["general", "slot"]},
        "id": {"type": ["string", "null"]},
        "seed": {"type": ["integer", "null"]},
    },
    "oneOf": [
        {
            "properties": {
                "kind": {"const": "general"},
                "outcomes": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                "values": {"type": "array", "items": _NUMBER_ARRAY, "minItems": 1},
            },
            "required": ["outcomes", "values"],
        },
        {
            "properties": {
                "kind": {"const": "slot"},
                "alpha": {**_NUMBER_ARRAY, "minItems": 1},
                "beta": {**_NUMBER_ARRAY, "minItems": 1},
                "bids": {**_NUMBER_ARRAY, "minItems": 1},
                "types": _NUMBER_ARRAY,
            },
            "required": ["alpha", "beta", "bids"],
        },
    ],
}

PRESETS = ("uniform-general", "slot-lognormal", "gemini-like")


class InstanceError(ValueError):
    """Invalid instance text; ``pointer`` is a JSON pointer to the culprit."""

    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.message = message
        self.pointer = pointer


@dataclass(frozen=True)
class InstanceFile:
    kind: str
    outcomes: Optional[tuple] = None
    values: Optional[tuple] = None
    alpha: Optional[tuple] = None
    beta: Optional[tuple] = None
    bids: Optional[tuple] = None
    types: Optional[tuple] = None
    id: Optional[str] = None
    seed: Optional[int] = None

    def value_matrix(self):
        return np.asarray(self.values, dtype=float)

    def outcome_space(self):
        return OutcomeSpace(self.outcomes)

    def slot_instance(self):
        return SlotAuctionInstance(self.alpha, self.beta, self.bids, self.types)

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "general":
            d["outcomes"] = list(self.outcomes)
            d["values"] = [list(r) for r in self.values]
        else:
            d["alpha"] = list(self.alpha)
            d["beta"] = list(self.beta)
            d["bids"] = list(self.bids)
            if self.types is not None:
                d["types"] = list(self.types)
        if self.id is not None:
            d["id"] = self.id
        if self.seed is not None:
            d["seed"] = self.seed
        return d


def _floats(xs):
    return tuple(float(x) for x in xs)


def _reject_constant(name):
    raise InstanceError(f"non-finite number {name} not allowed")


def _pointer(path):
    return "".join(f"/{p}" for p in path)


def instance_from_dict(obj):
    """Validate a decoded JSON object and build an :class:`InstanceFile`."""
    if not isinstance(obj, dict):
        raise InstanceError("instance must be a JSON object")
    kind = obj.get("kind")
    # validate against the matching branch so errors point at the bad field
    branch = {"general": 0, "slot": 1}.get(kind)
    schema = INSTANCE_SCHEMA if branch is None else {
        "type": "object",
        "properties": {**INSTANCE_SCHEMA["properties"], **INSTANCE_SCHEMA["oneOf"][branch]["properties"]},
        "required": INSTANCE_SCHEMA["oneOf"][branch]["required"],
    }
    err = jsonschema.exceptions.best_match(jsonschema.Draft7Validator(schema).iter_errors(obj))
    if err is not None:
        raise InstanceError(err.message, _pointer(err.absolute_path))
    meta = {"id": obj.get("id"), "seed": obj.get("seed")}
    if kind == "general":
        outcomes = tuple(obj["outcomes"])
        if len(set(outcomes)) != len(outcomes):
            raise InstanceError("outcome labels must be unique", "/outcomes")
        rows = obj["values"]
        for i, row in enumerate(rows):
            if len(row) != len(outcomes):
                raise InstanceError(
                    f"row has {len(row)} values for {len(outcomes)} outcomes", f"/values/{i}"
                )
        return InstanceFile("general", outcomes, tuple(_floats(r) for r in rows), **meta)
    try:
        SlotAuctionInstance(obj["alpha"], obj["beta"], obj["bids"], obj.get("types"))
    except ValueError as exc:
        msg = str(exc)
        where = "/alpha" if "alpha" in msg else "/types" if "types" in msg else "/bids"
        raise InstanceError(msg, where) from None
    return InstanceFile(
        "slot",
        alpha=_floats(obj["alpha"]),
        beta=_floats(obj["beta"]),
        bids=_floats(obj["bids"]),
        types=None if obj.get("types") is None else _floats(obj["types"]),
        **meta,
    )


def _loads(text):
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"invalid JSON: {exc.msg} at line {exc.lineno}") from None


def parse_instance(text):
    return instance_from_dict(_loads(text))


def serialize(instance):
    return json.dumps(instance.to_dict(), separators=(",", ":"), allow_nan=False)


def read_dataset(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(parse_instance(line))
            except InstanceError as exc:
                raise InstanceError(exc.message, f"line {lineno}{exc.pointer}") from None
    return out


def write_dataset(path, instances):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for inst in instances:
            fh.write(serialize(inst) + "\n")


def clean_number(x):
    """Integral floats as ints, for compact JSON output."""
    x = float(x)
    if math.isfinite(x) and x == int(x) and abs(x) < 2**53:
        return int(x)
    return x


def parse_gamma_grid(text):
    """'lo:hi:step' -> points lo, lo + step, ... up to hi inclusive."""
    try:
        lo, hi, step = (float(p) for p in text.split(":"))
    except ValueError:
        raise ValueError(f"gamma grid must be lo:hi:step, got {text!r}") from None
    if not step > 0 or lo > hi:
        raise ValueError("gamma grid needs step > 0 and lo <= hi")
    n = int(math.floor((hi - lo) / step + 0.5)) + 1
    return [round(lo + k * step, 12) for k in range(n)]


# -- synthetic data --------------------------------------------------------


def _geometric_alpha(rng, first, ratios):
    alpha = [first]
    for r in ratios:
        alpha.append(alpha[-1] * r)
    return tuple(alpha)


def _slot_sample(rng, n_range, m_range, first, ratio_range, sigma):
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    m = min(int(rng.integers(m_range[0], m_range[1] + 1)), n)
    ratios = rng.uniform(ratio_range[0], ratio_range[1], size=m - 1)
    alpha = _geometric_alpha(rng, first, ratios)
    beta = rng.uniform(0.5, 1.5, size=n)
    scores = rng.lognormal(0.0, sigma, size=n)
    bids = scores / beta
    return alpha, _floats(beta), _floats(bids)


def _one(preset, rng, ident, seed, sigma):
    if preset == "uniform-general":
        n = int(rng.integers(2, 6))
        k = int(rng.integers(2, 6))
        values = rng.uniform(0.0, 1.0, size=(n, k))
        return InstanceFile(
            "general",
            OutcomeSpace.default(k).outcomes,
            tuple(_floats(r) for r in values),
            id=ident,
            seed=seed,
        )
    if preset == "slot-lognormal":
        alpha, beta, bids = _slot_sample(rng, (3, 12), (1, 4), 1.0, (0.3, 0.8), sigma)
    else:
        first = 1.0 - float(rng.uniform(0.0, 0.5))  # in (0.5, 1]
        alpha, beta, bids = _slot_sample(rng, (3, 12), (1, 4), first, (0.3, 0.6), sigma)
    return InstanceFile("slot", alpha=alpha, beta=beta, bids=bids, id=ident, seed=seed)


def generate(preset, count, seed, sigma=1.0):
    """``count`` instances from a named preset, fully determined by ``seed``."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
    if count < 0:
        raise ValueError("count must be >= 0")
    rng = np.random.default_rng(seed)
    return [_one(preset, rng, f"{preset}-{seed}-{k:06d}", seed, sigma) for k in range(count)]
