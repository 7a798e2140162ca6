"""Simulation configuration: parsing, validation, canonical serialization.

Rationals travel as "p/q" strings so alignment checks stay exact; complex
numbers as [re, im] pairs.  `parse_config(serialize_config(c)) == c` and the
canonical JSON is byte-stable, which is what makes reruns reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional

from .errors import InvalidEpsilon, SchemaError, SpacingMisaligned
from .geometry import CaseId

TWO_PI = 2.0 * math.pi


def _frac(value, field_name: str) -> Fraction:
    try:
        if isinstance(value, str):
            return Fraction(value)
        if isinstance(value, int):
            return Fraction(value)
        if isinstance(value, float) and value == int(value):
            return Fraction(int(value))
    except (ValueError, ZeroDivisionError):
        pass
    raise SchemaError(field_name, f"expected a rational 'p/q' string, got {value!r}")


def _frac_str(f: Fraction) -> str:
    return f"{f.numerator}/{f.denominator}" if f.denominator != 1 else str(f.numerator)


@dataclass(frozen=True)
class SourceSpec:
    """Current source: laterally uniform sheet of finite thickness, or a dipole."""

    kind: str = "sheet"
    a: Fraction = Fraction(7, 16)
    polarization: str = "e1"
    amplitude: complex = 1.0 + 0.0j
    thickness: Fraction = Fraction(1, 16)


@dataclass(frozen=True)
class SimulationConfig:
    """Frequency-domain scattering problem description."""

    omega: float = TWO_PI
    epsilon: complex = 1.0 + 1.0j
    delta: Fraction = Fraction(1, 4)
    case: Optional[CaseId] = None
    spacing: Fraction = Fraction(1, 32)
    x3: Fraction = Fraction(3, 2)
    source: SourceSpec = field(default_factory=SourceSpec)
    tol: float = 1e-8
    seed: int = 7
    lateral_periods: int = 1

    def validate(self) -> "SimulationConfig":
        if not (isinstance(self.omega, (int, float)) and self.omega > 0):
            raise SchemaError("omega", "must be a positive number")
        eps = complex(self.epsilon)
        if not (eps.real > 0 and eps.imag > 0):
            raise InvalidEpsilon(
                f"epsilon = {eps} must have positive real and imaginary parts"
            )
        if self.delta <= 0:
            raise SchemaError("delta", "must be positive")
        if self.spacing <= 0:
            raise SchemaError("spacing", "must be positive")
        if self.case is not None:
            ratio = (self.delta / 8) / self.spacing
            if ratio.denominator != 1:
                raise SpacingMisaligned(
                    f"spacing {_frac_str(self.spacing)} does not divide "
                    f"delta/8 = {_frac_str(self.delta / 8)}"
                )
        for name, value in (("X3", self.x3), ("source.a", self.source.a),
                            ("source.thickness", self.source.thickness)):
            if (Fraction(value) / self.spacing).denominator != 1:
                raise SchemaError(name, f"{value} is not a multiple of the grid spacing")
        if self.x3 <= 0:
            raise SchemaError("X3", "must be positive")
        if self.source.kind not in ("sheet", "dipole"):
            raise SchemaError("source.type", f"unknown source kind {self.source.kind!r}")
        if self.source.polarization not in ("e1", "e2"):
            raise SchemaError("source.pol", "polarization must be 'e1' or 'e2'")
        if self.source.amplitude == 0:
            raise SchemaError("source.amp", "amplitude must be nonzero")
        if self.source.thickness < 0:
            raise SchemaError("source.thickness", "must be nonnegative")
        lo = self.source.a - self.source.thickness / 2
        hi = self.source.a + self.source.thickness / 2
        if self.case is not None and lo <= self.delta / 2:
            raise SchemaError(
                "source.a", "source support must stay above the layer slab |x3| <= delta/2"
            )
        if hi >= self.x3:
            raise SchemaError("source.a", "source support must stay inside the domain")
        if not (0 < self.tol <= 1e-2):
            raise SchemaError("tol", "solver tolerance must lie in (0, 1e-2]")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise SchemaError("seed", "must be a nonnegative integer")
        if not isinstance(self.lateral_periods, int) or self.lateral_periods < 1:
            raise SchemaError("lateral_periods", "must be a positive integer")
        return self

    def with_case(self, case: Optional[CaseId]) -> "SimulationConfig":
        return replace(self, case=case)

    def with_source(self, **kw) -> "SimulationConfig":
        return replace(self, source=replace(self.source, **kw))


def parse_config(text) -> SimulationConfig:
    """Parse and validate a JSON config document (string or dict)."""
    if isinstance(text, (str, bytes)):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise SchemaError("<document>", f"not valid JSON: {e}") from e
    else:
        doc = dict(text)
    if not isinstance(doc, dict):
        raise SchemaError("<document>", "top level must be an object")

    def pull_complex(obj, name, default):
        v = obj.get(name, default)
        if isinstance(v, (int, float)):
            return complex(v)
        if isinstance(v, (list, tuple)) and len(v) == 2:
            return complex(float(v[0]), float(v[1]))
        raise SchemaError(name, f"expected [re, im], got {v!r}")

    case_name = doc.get("case")
    if case_name in (None, "none", "null"):
        case = None
    else:
        try:
            case = CaseId.from_label(case_name)
        except KeyError as e:
            raise SchemaError("case", str(e)) from e

    src_doc = doc.get("source", {})
    if not isinstance(src_doc, dict):
        raise SchemaError("source", "must be an object")
    defaults = SourceSpec()
    source = SourceSpec(
        kind=src_doc.get("type", defaults.kind),
        a=_frac(src_doc.get("a", _frac_str(defaults.a)), "source.a"),
        polarization=src_doc.get("pol", defaults.polarization),
        amplitude=pull_complex(src_doc, "amp", [1, 0]),
        thickness=_frac(src_doc.get("thickness", _frac_str(defaults.thickness)),
                        "source.thickness"),
    )
    base = SimulationConfig()
    cfg = SimulationConfig(
        omega=float(doc.get("omega", base.omega)),
        epsilon=pull_complex(doc, "epsilon", [1, 1]),
        delta=_frac(doc.get("delta", _frac_str(base.delta)), "delta"),
        case=case,
        spacing=_frac(doc.get("spacing", _frac_str(base.spacing)), "spacing"),
        x3=_frac(doc.get("X3", _frac_str(base.x3)), "X3"),
        source=source,
        tol=float(doc.get("tol", base.tol)),
        seed=int(doc.get("seed", base.seed)),
        lateral_periods=int(doc.get("lateral_periods", base.lateral_periods)),
    )
    return cfg.validate()


def serialize_config(cfg: SimulationConfig) -> str:
    """Canonical JSON form (sorted keys, rationals as strings)."""
    doc = {
        "omega": cfg.omega,
        "epsilon": [cfg.epsilon.real, cfg.epsilon.imag],
        "delta": _frac_str(cfg.delta),
        "case": None if cfg.case is None else cfg.case.label,
        "spacing": _frac_str(cfg.spacing),
        "X3": _frac_str(cfg.x3),
        "source": {
            "type": cfg.source.kind,
            "a": _frac_str(cfg.source.a),
            "pol": cfg.source.polarization,
            "amp": [cfg.source.amplitude.real, cfg.source.amplitude.imag],
            "thickness": _frac_str(cfg.source.thickness),
        },
        "tol": cfg.tol,
        "seed": cfg.seed,
        "lateral_periods": cfg.lateral_periods,
    }
    return json.dumps(doc, sort_keys=True, separators=(", ", ": "))
