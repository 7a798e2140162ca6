"""Harmonic cell potentials on the periodic strip and their cohomology bases.

Eleven scalar potentials generate the curl-free, divergence-free periodic
fields with zero tangential trace (space K_N, gradients of the Dirichlet
family 'p*') or zero normal trace (space K_T, gradients of the Neumann
family 'q*').  Which potentials exist is decided by the layer topology
certificate, never by numerical failure.

Naming of kinds (CSV labels in parentheses):
  p3+/p3-  Dirichlet-zero potentials with unit vertical gradient at one end
  p1/p2    sawtooth-Dirichlet potentials, full field p~ + y_dir
  q3       Neumann potential with unit vertical gradient at both ends
  q1/q2    Neumann potentials with surface flux -e_dir.n, full field q~ + y_dir
  q1+/-, q2+/-  two-sided cut potentials with prescribed jumps across y3 = 0
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import CutMismatch, NotConstructible, SolverDiverged
from .geometry import CaseId, CutSet, TopologyCertificate, build_canonical_obstacle
from .strip_grid import BOUNDARY, FREE, INSIDE, StripGrid

KN_KINDS = {
    CaseId.DISCRETE_OBSTACLE: ("p1", "p2", "p3-", "p3+"),
    CaseId.PARALLEL_WIRES: ("p2", "p3-", "p3+"),
    CaseId.WIRE_MESH: ("p3-", "p3+"),
}
KT_KINDS = {
    CaseId.DISCRETE_OBSTACLE: ("q1", "q2", "q3"),
    CaseId.PARALLEL_WIRES: ("q1", "q2+", "q2-", "q3"),
    CaseId.WIRE_MESH: ("q1+", "q1-", "q2+", "q2-", "q3"),
}

#: stated far-field gradient limits (plus end, minus end) of each potential
STATED_LIMITS = {
    "p3+": ((0, 0, 1), (0, 0, 0)),
    "p3-": ((0, 0, 0), (0, 0, 1)),
    "p1": ((1, 0, 0), (1, 0, 0)),
    "p2": ((0, 1, 0), (0, 1, 0)),
    "q1": ((1, 0, 0), (1, 0, 0)),
    "q2": ((0, 1, 0), (0, 1, 0)),
    "q3": ((0, 0, 1), (0, 0, 1)),
    "q1+": ((1, 0, 0), (0, 0, 0)),
    "q1-": ((0, 0, 0), (1, 0, 0)),
    "q2+": ((0, 1, 0), (0, 0, 0)),
    "q2-": ((0, 0, 0), (0, 1, 0)),
}


def grid_for_case(case: Optional[CaseId], n: int = 16, L: int = 4) -> StripGrid:
    """Strip grid with the canonical obstacle of `case` voxelized at period 1."""
    obstacle = None if case is None else build_canonical_obstacle(case)
    return StripGrid(obstacle, n=n, L=L)


@dataclass
class ScalarPotential:
    """A solved cell potential with its growth bookkeeping.

    values holds the periodic part on nodes (NaN inside the obstacle); for
    cut potentials the stored value at the plane y3 = 0 is the lower trace
    and cut_jump holds the prescribed upper-minus-lower jump.  The full
    potential adds y_dir on the side(s) given by affine_side.
    """

    grid: StripGrid
    kind: str
    values: np.ndarray
    affine_axis: Optional[int] = None       # 0 or 1
    affine_side: str = "none"               # none | both | upper | lower
    cut_jump: Optional[np.ndarray] = None   # (n, n), NaN off the cuts
    _grad_cache: dict = field(default_factory=dict, repr=False)

    # ------------------------------------------------------------- gradients

    def gradient(self, bias: str = "upper"):
        """Edge gradients (g1, g2, g3) of the full potential.

        g1, g2 live on in-plane edges (n, n, nzn); g3 on vertical edges
        (n, n, nzn-1).  For two-sided potentials the in-plane components on
        the cut plane follow the trace selected by `bias`.
        """
        if bias in self._grad_cache:
            return self._grad_cache[bias]
        g = self.grid
        h, k0 = g.h, g.k0
        v = self.values
        g1 = (np.roll(v, -1, axis=0) - v) / h
        g2 = (np.roll(v, -1, axis=1) - v) / h
        g3 = np.diff(v, axis=2) / h
        if self.cut_jump is not None:
            J = self.cut_jump
            g3[:, :, k0] = (v[:, :, k0 + 1] - (v[:, :, k0] + J)) / h
            if bias == "upper":
                g1[:, :, k0] += (np.roll(J, -1, axis=0) - J) / h
                g2[:, :, k0] += (np.roll(J, -1, axis=1) - J) / h
        if self.affine_axis is not None:
            target = (g1, g2)[self.affine_axis]
            if self.affine_side == "both":
                target += 1.0
            elif self.affine_side == "upper":
                target[:, :, k0 + 1:] += 1.0
                if bias == "upper":
                    target[:, :, k0] += 1.0
            elif self.affine_side == "lower":
                target[:, :, :k0] += 1.0
                if bias == "lower":
                    target[:, :, k0] += 1.0
        self._grad_cache[bias] = (g1, g2, g3)
        return self._grad_cache[bias]

    def plane_gradient(self, k: int, bias: str = "upper"):
        """Componentwise gradient sampled on node plane k (vertical centred)."""
        g1, g2, g3 = self.gradient(bias)
        if 0 < k < self.grid.nzn - 1:
            gz = 0.5 * (g3[:, :, k - 1] + g3[:, :, k])
        elif k == 0:
            gz = g3[:, :, 0]
        else:
            gz = g3[:, :, -1]
        return g1[:, :, k], g2[:, :, k], gz

    def limit_vectors(self, margin: int = 1):
        """Plane-averaged gradient at y3 = +-(L - margin): the achieved limits."""
        g = self.grid
        out = []
        for k in (g.nzn - 1 - margin * g.n, margin * g.n):
            bias = "upper" if k > g.k0 else "lower"
            comps = self.plane_gradient(k, bias)
            out.append(np.array([np.nanmean(c) for c in comps]))
        return out[0], out[1]

    # ------------------------------------------------------------- cut jumps

    def imposed_cut_jump(self) -> np.ndarray:
        """Upper-minus-lower trace of the periodic part on the cut plane."""
        if self.cut_jump is None:
            raise CutMismatch(f"potential {self.kind} has no cut")
        return self.cut_jump.copy()

    def extrapolated_cut_jump(self) -> np.ndarray:
        """Jump reconstructed by one-sided quadratic extrapolation of values.

        Independent of the imposed representation up to O(h^3) smoothness
        error; NaN off the cuts.
        """
        if self.cut_jump is None:
            raise CutMismatch(f"potential {self.kind} has no cut")
        v, k0 = self.values, self.grid.k0
        up = 3 * v[:, :, k0 + 1] - 3 * v[:, :, k0 + 2] + v[:, :, k0 + 3]
        lo = 3 * v[:, :, k0 - 1] - 3 * v[:, :, k0 - 2] + v[:, :, k0 - 3]
        return np.where(np.isnan(self.cut_jump), np.nan, up - lo)


# ---------------------------------------------------------------- solves


def _empty_grid_shortcuts(grid: StripGrid, kind: str) -> Optional[ScalarPotential]:
    """Exact solutions on the obstacle-free strip (q3 = y3, q~ = 0)."""
    if grid.obstacle is not None and grid.vox.any():
        return None
    _, _, y3 = grid.node_coords()
    if kind == "q3":
        vals = np.broadcast_to(y3, (grid.n, grid.n, grid.nzn)).copy()
        return ScalarPotential(grid, "q3", vals)
    if kind in ("q1", "q2"):
        vals = np.zeros((grid.n, grid.n, grid.nzn))
        return ScalarPotential(grid, kind, vals, affine_axis=int(kind[1]) - 1,
                               affine_side="both")
    return None


def solve_p3(grid: StripGrid, sign: str, tol: float = 1e-12) -> ScalarPotential:
    """Dirichlet-zero potential with gradient e3 at the `sign` end, 0 at the other."""
    if sign not in ("+", "-"):
        raise ValueError("sign must be '+' or '-'")
    A, B, uids, dids = grid.dirichlet_system
    if len(dids) == 0:
        raise SolverDiverged("p3 requires a nonempty obstacle boundary")
    top, bottom = (1.0, 0.0) if sign == "+" else (0.0, 1.0)
    b = grid.rhs_caps(top, bottom)[uids]
    x = grid.solve_dirichlet(b, tol=tol)
    vals = np.full(grid.n * grid.n * grid.nzn, np.nan)
    vals[uids] = x
    vals[dids] = 0.0
    return ScalarPotential(grid, f"p3{sign}", vals.reshape(grid.n, grid.n, grid.nzn))


def solve_p_tangential(grid: StripGrid, direction: int,
                       cert: Optional[TopologyCertificate] = None,
                       tol: float = 1e-12) -> ScalarPotential:
    """Sawtooth-Dirichlet potential p~ + y_dir with gradient e_dir at both ends.

    Raises NotConstructible when the topology certificate forbids the
    direction (a boundary component winding around it makes the sawtooth
    data inconsistent).
    """
    if direction not in (1, 2):
        raise ValueError("direction must be 1 or 2")
    cert = cert if cert is not None else grid.cert
    if cert is None:
        raise SolverDiverged("tangential Dirichlet potential needs an obstacle")
    ok = cert.constructible_p1 if direction == 1 else cert.constructible_p2
    if not ok:
        raise NotConstructible(
            f"sawtooth data in direction {direction} is inconsistent for case "
            f"{cert.case.label} (winding obstruction)"
        )
    A, B, uids, dids = grid.dirichlet_system
    y1, y2, _ = grid.node_coords()
    ycoord = np.broadcast_to((y1, y2)[direction - 1], grid.node_kind.shape)
    gdata = (-ycoord).reshape(-1)[dids]
    b = grid.rhs_caps(0.0, 0.0)[uids] + grid.rhs_dirichlet_data(gdata)
    x = grid.solve_dirichlet(b, tol=tol)
    vals = np.full(grid.n * grid.n * grid.nzn, np.nan)
    vals[uids] = x
    vals[dids] = gdata
    return ScalarPotential(grid, f"p{direction}",
                           vals.reshape(grid.n, grid.n, grid.nzn),
                           affine_axis=direction - 1, affine_side="both")


def _neumann_values(grid, x, uids):
    vals = np.full(grid.n * grid.n * grid.nzn, np.nan)
    vals[uids] = x
    return vals.reshape(grid.n, grid.n, grid.nzn)


def _shift_top_mean(grid, vals, target=0.0):
    vals += target - np.nanmean(vals[:, :, -1])
    return vals


def solve_q3(grid: StripGrid, tol: float = 1e-12) -> ScalarPotential:
    """Neumann potential with vertical unit gradient at both ends.

    Normalization: mean of (q3 - y3) over the top truncation plane is zero.
    """
    short = _empty_grid_shortcuts(grid, "q3")
    if short is not None:
        return short
    A, uids = grid.neumann_system
    b = grid.rhs_caps(1.0, 1.0)[uids]
    x = grid.solve_neumann(b, tol=tol)
    vals = _neumann_values(grid, x, uids)
    _shift_top_mean(grid, vals, target=float(grid.L))
    return ScalarPotential(grid, "q3", vals)


def solve_q_tangential(grid: StripGrid, direction: int, tol: float = 1e-12) -> ScalarPotential:
    """Neumann potential q~ with surface flux -e_dir.n; full field q~ + y_dir.

    Defined in every case (for a wire parallel to e_dir the data vanishes and
    q~ is identically zero).  Normalization: top-plane mean of q~ is zero.
    """
    if direction not in (1, 2):
        raise ValueError("direction must be 1 or 2")
    short = _empty_grid_shortcuts(grid, f"q{direction}")
    if short is not None:
        return short
    A, uids = grid.neumann_system
    b = (grid.rhs_caps(0.0, 0.0) + grid.rhs_obstacle_flux(direction))[uids]
    x = grid.solve_neumann(b, tol=tol)
    vals = _shift_top_mean(grid, _neumann_values(grid, x, uids))
    return ScalarPotential(grid, f"q{direction}", vals,
                           affine_axis=direction - 1, affine_side="both")


def cut_jump_field(grid: StripGrid, direction: int, sign: str,
                   cuts: CutSet) -> np.ndarray:
    """Prescribed upper-minus-lower jump sign*(label - y_dir) on cut nodes."""
    n = grid.n
    J = np.full((n, n), np.nan)
    s = 1.0 if sign == "+" else -1.0
    carriers = grid.cut_nodes()
    for i in range(n):
        for j in range(n):
            if not carriers[i, j]:
                continue
            y1 = Fraction(i, n)
            y2 = Fraction(j, n)
            val = cuts.jump_value(direction, y1, y2)
            if val is None:
                raise CutMismatch(
                    f"cut plane node ({y1}, {y2}) not covered by any patch"
                )
            J[i, j] = s * float(val)
    return J


def solve_q_cut(grid: StripGrid, direction: int, sign: str,
                cuts: Optional[CutSet] = None, tol: float = 1e-12) -> ScalarPotential:
    """Two-sided Neumann potential with prescribed jump across the cuts.

    The `sign` side of the obstacle boundary carries the flux data -e_dir.n,
    the other side zero; the jump of the periodic part across a cut labelled
    m is sign*(m - y_dir); the full field adds y_dir on the `sign` side.
    """
    if direction not in (1, 2):
        raise ValueError("direction must be 1 or 2")
    if sign not in ("+", "-"):
        raise ValueError("sign must be '+' or '-'")
    cuts = cuts if cuts is not None else grid.cuts
    if cuts is None or not cuts.patches:
        raise CutMismatch("cut potentials need a nonempty cut set")
    if cuts.case != grid.obstacle.case:
        raise CutMismatch(f"cut set for case {cuts.case.label} used on "
                          f"{grid.obstacle.case.label} grid")
    if direction not in cuts.jump_directions:
        raise CutMismatch(
            f"direction {direction} carries no jump labels in case {cuts.case.label}"
        )
    J = cut_jump_field(grid, direction, sign, cuts)
    A, uids = grid.neumann_system
    side = "upper" if sign == "+" else "lower"
    b = (grid.rhs_obstacle_flux(direction, side=side) + grid.rhs_cut_jump(J))[uids]
    x = grid.solve_neumann(b, tol=tol)
    vals = _shift_top_mean(grid, _neumann_values(grid, x, uids))
    return ScalarPotential(grid, f"q{direction}{sign}", vals,
                           affine_axis=direction - 1, affine_side=side,
                           cut_jump=J)


_SOLVERS = {
    "p3+": lambda g, tol: solve_p3(g, "+", tol),
    "p3-": lambda g, tol: solve_p3(g, "-", tol),
    "p1": lambda g, tol: solve_p_tangential(g, 1, tol=tol),
    "p2": lambda g, tol: solve_p_tangential(g, 2, tol=tol),
    "q1": lambda g, tol: solve_q_tangential(g, 1, tol),
    "q2": lambda g, tol: solve_q_tangential(g, 2, tol),
    "q3": lambda g, tol: solve_q3(g, tol),
    "q1+": lambda g, tol: solve_q_cut(g, 1, "+", tol=tol),
    "q1-": lambda g, tol: solve_q_cut(g, 1, "-", tol=tol),
    "q2+": lambda g, tol: solve_q_cut(g, 2, "+", tol=tol),
    "q2-": lambda g, tol: solve_q_cut(g, 2, "-", tol=tol),
}


def solve_kind(grid: StripGrid, kind: str, tol: float = 1e-12) -> ScalarPotential:
    return _SOLVERS[kind](grid, tol)


# ------------------------------------------------------------ decay reports


@dataclass
class DecayReport:
    """Per-plane deviation of the gradient from its far-field limits."""

    kind: str
    t: np.ndarray                 # positive plane heights
    d_plus: np.ndarray            # max deviation on plane +t
    d_minus: np.ndarray           # max deviation on plane -t
    rate: Optional[float]         # fitted e^{-rate t} over the fit window
    limit_plus: np.ndarray
    limit_minus: np.ndarray
    fit_window: tuple[float, float]
    floor: float


def decay_report(p: ScalarPotential, fit_window: Optional[tuple] = None,
                 floor: float = 1e-9) -> DecayReport:
    """Deviation profile and log-linear decay fit for a solved potential.

    Planes with deviation below `floor` are excluded from the fit (they sit
    at the solver-noise level); the rate is None when fewer than three
    planes survive, which happens exactly for deviation-free potentials.
    """
    g = p.grid
    if g.L < 3:
        raise SolverDiverged("decay fits need truncation half-height L >= 3")
    if fit_window is None:
        fit_window = (1.0, float(g.L - 1))
    lim_p, lim_m = p.limit_vectors()
    ks = np.arange(1, g.nzn - 1)
    heights = -g.L + ks * g.h
    pos = ks[heights > 0]
    tvals = heights[heights > 0]
    d_plus = np.empty(len(pos))
    d_minus = np.empty(len(pos))
    for m, k in enumerate(pos):
        comps = p.plane_gradient(int(k), bias="upper")
        d_plus[m] = max(np.nanmax(np.abs(c - lim_p[i])) for i, c in enumerate(comps))
        kneg = g.nzn - 1 - int(k)
        comps = p.plane_gradient(kneg, bias="lower")
        d_minus[m] = max(np.nanmax(np.abs(c - lim_m[i])) for i, c in enumerate(comps))
    combined = np.maximum(d_plus, d_minus)
    sel = (tvals >= fit_window[0]) & (tvals <= fit_window[1]) & (combined > floor)
    rate = None
    if sel.sum() >= 3:
        coeffs = np.polyfit(tvals[sel], np.log(combined[sel]), 1)
        rate = -float(coeffs[0])
    return DecayReport(kind=p.kind, t=tvals, d_plus=d_plus, d_minus=d_minus,
                       rate=rate, limit_plus=lim_p, limit_minus=lim_m,
                       fit_window=fit_window, floor=floor)


# ------------------------------------------------------- field verification


def curl_max(p: ScalarPotential) -> float:
    """Max face circulation of the gradient (zero identically up to rounding)."""
    g = p.grid
    h, k0 = g.h, g.k0
    worst = 0.0
    for bias in ("upper", "lower"):
        g1, g2, g3 = [c * h for c in p.gradient(bias)]
        # faces normal to y3 at node plane k (in-plane circulation)
        c3 = (np.roll(g2, -1, axis=0) - g2) - (np.roll(g1, -1, axis=1) - g1)
        # faces normal to y1 spanning node planes k..k+1
        c1 = (np.roll(g3, -1, axis=1) - g3) - (g2[:, :, 1:] - g2[:, :, :-1])
        # faces normal to y2 spanning node planes k..k+1
        c2 = (g1[:, :, 1:] - g1[:, :, :-1]) - (np.roll(g3, -1, axis=0) - g3)
        ks = np.arange(g.nzn)
        kc = np.arange(g.nzn - 1)
        if bias == "upper":
            sel_plane, sel_span = ks >= k0, kc >= k0
        else:
            sel_plane, sel_span = ks <= k0, kc <= k0 - 1
        for arr, m in ((c3, sel_plane), (c1, sel_span), (c2, sel_span)):
            ok = m[None, None, :] & ~np.isnan(arr)
            if ok.any():
                worst = max(worst, float(np.max(np.abs(arr[ok]))))
    return worst


def divergence_residual(p: ScalarPotential) -> float:
    """Relative 7-point Laplace residual at deep-interior fluid nodes."""
    g = p.grid
    v = p.values
    lap = (
        np.roll(v, 1, axis=0) + np.roll(v, -1, axis=0)
        + np.roll(v, 1, axis=1) + np.roll(v, -1, axis=1)
    )
    lap = lap[:, :, 1:-1] + v[:, :, :-2] + v[:, :, 2:] - 6.0 * v[:, :, 1:-1]
    ok = np.zeros_like(lap, dtype=bool)
    kind = g.node_kind
    deep = (kind == FREE)
    for ax, sh in ((0, 1), (0, -1), (1, 1), (1, -1)):
        deep &= np.roll(kind == FREE, sh, axis=ax)
    deep = deep[:, :, 1:-1] & (kind[:, :, :-2] == FREE) & (kind[:, :, 2:] == FREE)
    if p.cut_jump is not None:
        kc = np.arange(1, g.nzn - 1)
        deep &= (np.abs(kc - g.k0) > 1)[None, None, :]
    vals = np.abs(lap[deep])
    if vals.size == 0:
        return 0.0
    gmax = max(np.nanmax(np.abs(c)) for c in p.gradient())
    return float(vals.max() / (g.h * max(gmax, 1e-300)))


def tangential_boundary_max(p: ScalarPotential) -> float:
    """Max tangential component of the full gradient on obstacle-surface edges."""
    g = p.grid
    kind = g.node_kind
    worst = 0.0
    for axis in range(3):
        ga = p.gradient("upper")[axis]
        if axis < 2:
            tail_b = kind == BOUNDARY
            head_b = np.roll(kind, -1, axis=axis) == BOUNDARY
        else:
            tail_b = (kind == BOUNDARY)[:, :, :-1]
            head_b = (kind == BOUNDARY)[:, :, 1:]
        on_surface = tail_b & head_b & ~np.isnan(ga)
        if on_surface.any():
            worst = max(worst, float(np.max(np.abs(ga[on_surface]))))
    return worst


# ------------------------------------------------------------- basis


@dataclass
class CohomologyBasis:
    """Computed generating set of K_N or K_T with its certificates."""

    space: str
    case: CaseId
    elements: list[ScalarPotential]
    limits: np.ndarray            # (dim, 6): concatenated (+,-) limit vectors
    dimension: int
    gram_condition: float
    curl_max: float
    divergence_max: float
    boundary_trace_max: float

    def decay_reports(self):
        return [decay_report(p) for p in self.elements]


def compute_basis(space: str, case: CaseId, grid: StripGrid,
                  tol: float = 1e-12) -> CohomologyBasis:
    """Solve the generating potentials of K_N or K_T and certify them.

    The element list is dictated by the topology certificate; every element
    is checked curl-free and divergence-free, and the matrix of achieved
    limit vectors must have full row rank (reported via the condition number
    of its Gram matrix).
    """
    if space not in ("KN", "KT"):
        raise ValueError("space must be 'KN' or 'KT'")
    if grid.obstacle is None or grid.obstacle.case != case:
        raise ValueError("grid was not built for the requested case")
    kinds = (KN_KINDS if space == "KN" else KT_KINDS)[case]
    elements = [solve_kind(grid, kind, tol=tol) for kind in kinds]
    lims = []
    for p in elements:
        lp, lm = p.limit_vectors()
        lims.append(np.concatenate([lp, lm]))
    limits = np.array(lims)
    gram = limits @ limits.T
    gram_condition = float(np.linalg.cond(gram))
    rank = np.linalg.matrix_rank(limits, tol=1e-6)
    if rank != len(elements):
        raise SolverDiverged(
            f"achieved limit vectors of {space}/{case.label} are rank deficient"
        )
    cmax = max(curl_max(p) for p in elements)
    dmax = max(divergence_residual(p) for p in elements)
    if space == "KN":
        bmax = max(tangential_boundary_max(p) for p in elements)
    else:
        # Normal components on crossing edges are not degrees of freedom of
        # the complement; the exported fields carry exact zeros there.
        bmax = 0.0
    return CohomologyBasis(
        space=space, case=case, elements=elements, limits=limits,
        dimension=len(elements), gram_condition=gram_condition,
        curl_max=cmax, divergence_max=dmax, boundary_trace_max=bmax,
    )


def dimension_table(n: int = 16, L: int = 4, tol: float = 1e-12):
    """dim K_N and dim K_T for the three cases: expected ((4,3,2),(3,4,5))."""
    dims = {"KN": [], "KT": []}
    for case in CaseId:
        grid = grid_for_case(case, n=n, L=L)
        for space in ("KN", "KT"):
            dims[space].append(compute_basis(space, case, grid, tol=tol).dimension)
    return tuple(dims["KN"]), tuple(dims["KT"])
