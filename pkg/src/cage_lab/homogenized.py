"""Effective interface conditions on the plane x3 = 0 and the limit problem.

In the vanishing-period limit the three layer topologies reduce to three
interface behaviours: discrete obstacles are transparent, parallel wires
short out the tangential field component along the wire axis only, and the
mesh shorts out both tangential components (a solid conducting sheet).  The
conditions are imposed structurally on the staggered grid: in-plane E edges
at x3 = 0 are zeroed for the constrained directions, and the jump conditions
need no action because the untouched stencil is continuity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import SimulationConfig
from .errors import InvalidEpsilon
from .fdfd import EMField, solve_scattering
from .geometry import CaseId


@dataclass(frozen=True)
class InterfaceConditionSet:
    """Constraints on field traces across the effective interface."""

    case: CaseId
    tangential_e_zero: frozenset        # in-plane E directions forced to vanish
    continuous_tangential_e: frozenset  # directions with [E x e3] = 0
    continuous_tangential_curl: frozenset


def interface_conditions(case: CaseId) -> InterfaceConditionSet:
    if case == CaseId.DISCRETE_OBSTACLE:
        return InterfaceConditionSet(case, frozenset(), frozenset({1, 2}), frozenset({1, 2}))
    if case == CaseId.PARALLEL_WIRES:
        return InterfaceConditionSet(case, frozenset({1}), frozenset({2}), frozenset({2}))
    if case == CaseId.WIRE_MESH:
        return InterfaceConditionSet(case, frozenset({1, 2}), frozenset(), frozenset())
    raise ValueError(f"unknown case {case}")


@dataclass(frozen=True)
class RTCoefficients:
    """Normal-incidence reflection/transmission of the effective interface."""

    case: CaseId
    polarization: str
    reflection: complex
    transmission: complex


def analytic_rt(case: CaseId, polarization: str, omega: float,
                epsilon: complex) -> RTCoefficients:
    """Closed-form coefficients: transparent (0, 1) or conducting sheet (-1, 0).

    A zeroed tangential component forces total reflection of that
    polarization; an unconstrained one passes through unchanged.  Parallel
    wires shield the polarization along the wire axis (e1) only.
    """
    if polarization not in ("e1", "e2"):
        raise ValueError("polarization must be 'e1' or 'e2'")
    eps = complex(epsilon)
    if not (eps.real > 0 and eps.imag > 0):
        raise InvalidEpsilon(f"epsilon = {eps} must satisfy Re > 0, Im > 0")
    conditions = interface_conditions(case)
    direction = 1 if polarization == "e1" else 2
    if direction in conditions.tangential_e_zero:
        r, t = -1.0 + 0.0j, 0.0 + 0.0j
    else:
        r, t = 0.0 + 0.0j, 1.0 + 0.0j
    return RTCoefficients(case=case, polarization=polarization,
                          reflection=r, transmission=t)


def solve_limit_problem(config: SimulationConfig,
                        conditions: InterfaceConditionSet,
                        method: str = "auto") -> EMField:
    """Curl-curl solve with the layer replaced by interface conditions on x3=0."""
    return solve_scattering(
        config.with_case(None), layer=None, method=method,
        zero_plane_polarizations=conditions.tangential_e_zero,
    )


def apply_conditions(field: EMField, conditions: InterfaceConditionSet) -> int:
    """Re-impose the constraint set on a solved field, in place.

    Returns the number of edge values that changed; zero on a field solved
    with the same conditions (idempotence).
    """
    grid = field.grid
    k_mid = int(round((0.0 - grid.z0) / grid.s))
    changed = 0
    e = list(grid.split(field.E))
    for comp in conditions.tangential_e_zero:
        plane = e[comp - 1][:, :, k_mid]
        changed += int(np.count_nonzero(plane))
        plane[:] = 0.0
    field.E = np.concatenate([c.ravel() for c in e])
    return changed
