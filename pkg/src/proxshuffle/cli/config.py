"""Experiment configuration: a JSON document validated into an :class:`ExperimentSpec`.

Top-level keys::

    name           string, default "experiment"
    problem        family descriptor (object) or family name (string)
    scheme         "RR" | "SS" | "IG" | "IID", or {"kind": "IG", "perm": [...]}
    schedule       object, or a call string such as "polyak(m=2)"
    sweep          {"n": [...], "K": [...]}; each cell runs T = K * n steps
    replications   positive integer, default 32
    master_seed    unsigned 64-bit integer, default 0
    outputs        subset of ["last", "average", "suffix"], default all three
    stride         gap-recording stride, default n

When ``problem`` is a bare family name, that family's parameters are read
from the top level instead, e.g. ``{"problem": "hard", "G": 1, "mu": 1, ...}``.
"""
from __future__ import annotations

import json
import re
from typing import Annotated, Any, Literal, Union

from pydantic import (BaseModel, ConfigDict, Field, NonNegativeFloat, NonNegativeInt,
                      PositiveFloat, PositiveInt, ValidationError, field_validator,
                      model_validator)

from ..samplers import SchemeKind
from ..stepsize import ScheduleKind

UINT64_MAX = 2**64 - 1
TRACKER_ORDER = ("last", "average", "suffix")
SCHEME_NAMES = tuple(k.value for k in SchemeKind)
SCHEDULE_NAMES = tuple(k.value for k in ScheduleKind)


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending key path."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RegularizerSpec(_Strict):
    """psi. ``center`` of the quadratic kinds: ``auto`` is the planted optimum when there is one."""

    kind: Literal["none", "ball", "box", "sqnorm", "sqnorm_ball", "l1"] = "none"
    radius: PositiveFloat = 2.0
    halfwidth: PositiveFloat = 1.0
    mu: PositiveFloat = 0.1
    lam: PositiveFloat = 0.01
    center: Literal["auto", "origin", "planted"] = "auto"


class HardSpec(_Strict):
    family: Literal["hard"]
    G: PositiveFloat = 1.0
    mu: PositiveFloat = 1.0
    d: PositiveInt | None = None


class LADSpec(_Strict):
    family: Literal["lad"]
    d: PositiveInt = 3
    seed: NonNegativeInt = 0
    planted: bool = True
    noise: NonNegativeFloat = 1.0
    x_star_norm: PositiveFloat = 1.0
    regularizer: RegularizerSpec = RegularizerSpec()
    reference_budget: PositiveInt = 20000


class HingeSpec(_Strict):
    family: Literal["hinge"]
    d: PositiveInt = 3
    seed: NonNegativeInt = 0
    flip: Annotated[float, Field(ge=0.0, le=1.0)] = 0.0
    regularizer: RegularizerSpec = RegularizerSpec()
    reference_budget: PositiveInt = 20000


ProblemSpec = Annotated[Union[HardSpec, LADSpec, HingeSpec], Field(discriminator="family")]
_FAMILY_KEYS = {
    "hard": set(HardSpec.model_fields) - {"family"},
    "lad": set(LADSpec.model_fields) - {"family"},
    "hinge": set(HingeSpec.model_fields) - {"family"},
}


class SchemeSpec(_Strict):
    kind: str
    perm: list[PositiveInt] | Literal["identity", "reverse"] = "identity"

    @field_validator("kind")
    @classmethod
    def _known(cls, v: str) -> str:
        if v not in SCHEME_NAMES:
            raise ValueError(f"invalid scheme {v!r}; valid values: {', '.join(SCHEME_NAMES)}")
        return v

    def permutation(self, n: int) -> list[int]:
        if self.perm == "identity":
            return list(range(1, n + 1))
        if self.perm == "reverse":
            return list(range(n, 0, -1))
        return list(self.perm)


class ScheduleSpec(_Strict):
    kind: str
    eta: PositiveFloat | None = None
    m: PositiveInt | None = None
    mu: PositiveFloat | None = None
    auto_eta: bool = False

    @field_validator("kind")
    @classmethod
    def _known(cls, v: str) -> str:
        if v not in SCHEDULE_NAMES:
            raise ValueError(f"invalid schedule {v!r}; valid values: {', '.join(SCHEDULE_NAMES)}")
        return v

    @model_validator(mode="after")
    def _parameters(self) -> "ScheduleSpec":
        if self.kind == ScheduleKind.POLYAK_STR.value:
            if self.m is None:
                raise ValueError("polyak schedule needs m")
            if self.eta is not None or self.auto_eta:
                raise ValueError("polyak schedule takes m and mu, not eta")
        else:
            if self.m is not None or self.mu is not None:
                raise ValueError(f"{self.kind} schedule takes eta, not m or mu")
            if self.auto_eta == (self.eta is not None):
                raise ValueError(f"{self.kind} schedule needs exactly one of eta and auto_eta")
        return self


class SweepSpec(_Strict):
    n: Annotated[list[PositiveInt], Field(min_length=1)]
    K: Annotated[list[PositiveInt], Field(min_length=1)]


class ExperimentSpec(_Strict):
    name: Annotated[str, Field(pattern=r"^[A-Za-z0-9_.-]+$")] = "experiment"
    problem: ProblemSpec
    scheme: SchemeSpec
    schedule: ScheduleSpec
    sweep: SweepSpec
    replications: PositiveInt = 32
    master_seed: Annotated[int, Field(ge=0, le=UINT64_MAX)] = 0
    outputs: tuple[Literal["last", "average", "suffix"], ...] = TRACKER_ORDER
    stride: PositiveInt | None = None

    @field_validator("scheme", mode="before")
    @classmethod
    def _scheme_shorthand(cls, v: Any) -> Any:
        return {"kind": v} if isinstance(v, str) else v

    @field_validator("schedule", mode="before")
    @classmethod
    def _schedule_shorthand(cls, v: Any) -> Any:
        return parse_call(v) if isinstance(v, str) else v

    @field_validator("outputs", mode="after")
    @classmethod
    def _ordered(cls, v: tuple[str, ...]) -> tuple[str, ...]:
        if not v:
            raise ValueError("outputs must name at least one tracker")
        return tuple(t for t in TRACKER_ORDER if t in v)

    @model_validator(mode="after")
    def _consistency(self) -> "ExperimentSpec":
        if self.scheme.kind == "IG" and isinstance(self.scheme.perm, list):
            if any(len(self.scheme.perm) != n for n in self.sweep.n):
                raise ValueError("an explicit IG perm needs every sweep n equal to its length")
        return self

    def cells(self) -> list[tuple[int, int, int]]:
        """``(cell, n, K)`` in emission order: ``n`` outer, ``K`` inner."""
        out = []
        for n in self.sweep.n:
            for K in self.sweep.K:
                out.append((len(out), n, K))
        return out

    def stride_for(self, n: int) -> int:
        return n if self.stride is None else self.stride


_CALL = re.compile(r"^\s*([A-Za-z_]\w*)\s*(?:\((.*)\))?\s*$")


def parse_call(text: str) -> dict[str, Any]:
    """``"polyak(m=2, mu=0.1)"`` to ``{"kind": "polyak", "m": 2, "mu": 0.1}``."""
    match = _CALL.match(text)
    if match is None:
        raise ValueError(f"cannot parse schedule {text!r}; expected kind(key=value, ...)")
    out: dict[str, Any] = {"kind": match.group(1)}
    args = (match.group(2) or "").strip()
    if args:
        for part in args.split(","):
            key, sep, raw = part.partition("=")
            if not sep:
                raise ValueError(f"schedule argument {part.strip()!r} is not key=value")
            try:
                value = json.loads(raw.strip())
            except json.JSONDecodeError:
                raise ValueError(f"schedule argument {part.strip()!r} has an unreadable value") from None
            out[key.strip()] = value
    return out


def _hoist_problem(doc: dict[str, Any]) -> dict[str, Any]:
    problem = doc.get("problem")
    if not isinstance(problem, str):
        return doc
    doc = dict(doc)
    params: dict[str, Any] = {"family": problem}
    for key in _FAMILY_KEYS.get(problem, ()):
        if key in doc:
            params[key] = doc.pop(key)
    doc["problem"] = params
    return doc


def _format(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = list(e["loc"])
        if len(loc) > 1 and loc[0] == "problem" and loc[1] in _FAMILY_KEYS:
            del loc[1]  # discriminated-union tag, not a document key
        path = ".".join(str(p) for p in loc) or "<root>"
        msg = e["msg"].removeprefix("Value error, ")
        if e["type"] == "extra_forbidden":
            msg = "unknown key"
        elif e["type"] == "missing":
            msg = "missing required key"
        lines.append(f"{path}: {msg}")
    return "; ".join(lines)


def spec_from_dict(doc: Any) -> ExperimentSpec:
    if not isinstance(doc, dict):
        raise ConfigError("<root>: configuration must be an object")
    try:
        return ExperimentSpec.model_validate(_hoist_problem(doc))
    except ValidationError as err:
        raise ConfigError(_format(err)) from None


def parse_config(text: str) -> ExperimentSpec:
    """Validate a JSON configuration document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"<root>: malformed JSON ({err})") from None
    return spec_from_dict(doc)
