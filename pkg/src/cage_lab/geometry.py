"""Canonical obstacles, exact layer voxelization, and layer topology.

All obstacle coordinates are rationals with denominator 8 in unit-cell
coordinates (y1, y2) in [0,1]^2, y3 in [-1/2, 1/2].  The scaled layer of
period ``delta`` is voxelized exactly: grid spacing must divide delta/8 so
every box face lands on a grid plane and no staircase error occurs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import SpacingMisaligned

Frac3 = tuple[Fraction, Fraction, Fraction]


class CaseId(IntEnum):
    """The three canonical layer topologies, ordered for reporting."""

    DISCRETE_OBSTACLE = 0
    PARALLEL_WIRES = 1
    WIRE_MESH = 2

    @property
    def label(self) -> str:
        return _CASE_LABELS[self]

    @staticmethod
    def from_label(name: str) -> "CaseId":
        for case, label in _CASE_LABELS.items():
            if label == name:
                return case
        raise KeyError(f"unknown case name {name!r} (expected discrete|wires|mesh)")


_CASE_LABELS = {
    CaseId.DISCRETE_OBSTACLE: "discrete",
    CaseId.PARALLEL_WIRES: "wires",
    CaseId.WIRE_MESH: "mesh",
}


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by rational corner coordinates."""

    lo: Frac3
    hi: Frac3

    def __post_init__(self):
        for a, b in zip(self.lo, self.hi):
            if not a < b:
                raise ValueError(f"degenerate box: {self.lo} .. {self.hi}")

    def contains(self, y: Frac3) -> bool:
        # Strict comparison: callers only probe voxel centers, which never
        # lie on a face when the alignment precondition holds.
        return all(a < c < b for a, b, c in zip(self.lo, self.hi, y))


@dataclass(frozen=True)
class CanonicalObstacle:
    """Box-union description of one period of the layer."""

    boxes: tuple[Box, ...]
    case: CaseId

    def contains(self, y: Frac3) -> bool:
        return any(b.contains(y) for b in self.boxes)

    def volume(self) -> Fraction:
        """Exact unit-cell volume of the box union.

        Counted on the coarsest aligned lattice (spacing 1/8), which is exact
        because every face coordinate is a multiple of 1/8.
        """
        eighth = Fraction(1, 8)
        count = 0
        for i in range(8):
            for j in range(8):
                for k in range(-4, 4):
                    c = (
                        (i + Fraction(1, 2)) * eighth,
                        (j + Fraction(1, 2)) * eighth,
                        (k + Fraction(1, 2)) * eighth,
                    )
                    if self.contains(c):
                        count += 1
        return count * eighth**3


def build_canonical_obstacle(case: CaseId) -> CanonicalObstacle:
    """Return the exact box union for one of the three canonical cases."""
    f = Fraction
    wire_e1 = Box(
        lo=(f(0), f(3, 8), f(-1, 8)),
        hi=(f(1), f(5, 8), f(1, 8)),
    )
    if case == CaseId.DISCRETE_OBSTACLE:
        # Centered cube with closure strictly inside the open cell.
        cube = Box(lo=(f(1, 4), f(1, 4), f(-1, 4)), hi=(f(3, 4), f(3, 4), f(1, 4)))
        return CanonicalObstacle(boxes=(cube,), case=case)
    if case == CaseId.PARALLEL_WIRES:
        return CanonicalObstacle(boxes=(wire_e1,), case=case)
    if case == CaseId.WIRE_MESH:
        wire_e2 = Box(
            lo=(f(3, 8), f(0), f(-1, 8)),
            hi=(f(5, 8), f(1), f(1, 8)),
        )
        return CanonicalObstacle(boxes=(wire_e1, wire_e2), case=case)
    raise ValueError(f"unknown case {case}")


@dataclass(frozen=True)
class CutPatch:
    """One labelled rectangle of the cut surface in the plane y3 = 0."""

    y1: tuple[Fraction, Fraction]
    y2: tuple[Fraction, Fraction]
    label: tuple[int, ...]  # (j,) for parallel wires, (i, j) for the mesh

    def covers(self, y1: Fraction, y2: Fraction) -> bool:
        # Closed intervals: rim nodes shared with the obstacle boundary
        # belong to the adjacent patch.
        return self.y1[0] <= y1 <= self.y1[1] and self.y2[0] <= y2 <= self.y2[1]


@dataclass(frozen=True)
class CutSet:
    """Cuts making the strip complement simply connected, with jump labels."""

    case: CaseId
    patches: tuple[CutPatch, ...]
    jump_directions: tuple[int, ...]  # coordinates the prescribed jump depends on

    def label_at(self, y1: Fraction, y2: Fraction) -> Optional[tuple[int, ...]]:
        for p in self.patches:
            if p.covers(y1, y2):
                return p.label
        return None

    def jump_value(self, direction: int, y1: Fraction, y2: Fraction) -> Optional[Fraction]:
        """Jump magnitude (label - y_dir) at a cut point, None off the cuts."""
        label = self.label_at(y1, y2)
        if label is None:
            return None
        if direction not in self.jump_directions:
            return None
        idx = self.jump_directions.index(direction)
        y = (y1, y2)[direction - 1]
        return Fraction(label[idx]) - y


def _cuts_for_case(case: CaseId) -> Optional[CutSet]:
    f = Fraction
    lo, hi = f(0), f(3, 8)
    lo2, hi2 = f(5, 8), f(1)
    full = (f(0), f(1))
    if case == CaseId.DISCRETE_OBSTACLE:
        return None
    if case == CaseId.PARALLEL_WIRES:
        # One infinite strip per period: labels follow the nearest integer.
        patches = (
            CutPatch(y1=full, y2=(lo, hi), label=(0,)),
            CutPatch(y1=full, y2=(lo2, hi2), label=(1,)),
        )
        return CutSet(case=case, patches=patches, jump_directions=(2,))
    # Wire mesh: one square per period, four pieces in the fundamental cell.
    pieces = []
    for i, i_iv in ((0, (lo, hi)), (1, (lo2, hi2))):
        for j, j_iv in ((0, (lo, hi)), (1, (lo2, hi2))):
            pieces.append(CutPatch(y1=i_iv, y2=j_iv, label=(i, j)))
    return CutSet(case=case, patches=tuple(pieces), jump_directions=(1, 2))


@dataclass(frozen=True)
class TopologyCertificate:
    """Winding data of the voxelized layer under periodic identification."""

    case: CaseId
    components: tuple[tuple[int, tuple[tuple[int, int], ...]], ...]
    constructible_p1: bool
    constructible_p2: bool
    cuts_required: Optional[CutSet]


def _winding_basis(vectors: list[tuple[int, int]]) -> tuple[tuple[int, int], ...]:
    """Hermite-style basis of the subgroup of Z^2 generated by `vectors`."""
    basis: list[list[int]] = []
    for v in vectors:
        v = list(v)
        for b in basis:
            if b[0] != 0 and v[0] != 0:
                q = v[0] // b[0]
                v = [v[0] - q * b[0], v[1] - q * b[1]]
            elif b[0] == 0 and v[0] == 0 and b[1] != 0:
                v = [0, v[1] % b[1]]
        if v != [0, 0]:
            basis.append(v)
            basis.sort(key=lambda w: (w[0] == 0, abs(w[0]), abs(w[1])))
    # Normalize: primitive vectors with positive leading coordinate.
    out = set()
    for b in basis:
        g = int(np.gcd(b[0], b[1]))
        if g == 0:
            continue
        v = (int(b[0]) // g, int(b[1]) // g)
        if v[0] < 0 or (v[0] == 0 and v[1] < 0):
            v = (-v[0], -v[1])
        out.add(v)
    return tuple(sorted(out))


def topology_certificate(obstacle: CanonicalObstacle) -> TopologyCertificate:
    """Trace solid components of the voxelized obstacle, tracking period lifts.

    A component that closes up on itself with a nonzero integer lift winds
    around the corresponding period direction; the sawtooth Dirichlet data of
    the tangential potential in that direction is then inconsistent on its
    boundary, which is exactly the constructibility obstruction.
    """
    n = 8  # reference resolution: exact for denominator-8 boxes
    vox = _voxelize_cell(obstacle, n)
    nz = vox.shape[2]
    visited = np.full(vox.shape, -1, dtype=np.int64)
    lifts: dict[tuple[int, int, int], tuple[int, int]] = {}
    components = []
    comp_id = 0
    for start in zip(*np.nonzero(vox)):
        if visited[start] >= 0:
            continue
        winding_vecs: list[tuple[int, int]] = []
        stack = [start]
        visited[start] = comp_id
        lifts[start] = (0, 0)
        while stack:
            cur = stack.pop()
            ci, cj, ck = cur
            la, lb = lifts[cur]
            for di, dj, dk in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
                nk = ck + dk
                if nk < 0 or nk >= nz:
                    continue
                ni, wrap_i = (ci + di) % n, (ci + di) // n
                nj, wrap_j = (cj + dj) % n, (cj + dj) // n
                nxt = (ni, nj, nk)
                if not vox[nxt]:
                    continue
                lift = (la + wrap_i, lb + wrap_j)
                if visited[nxt] < 0:
                    visited[nxt] = comp_id
                    lifts[nxt] = lift
                    stack.append(nxt)
                else:
                    prev = lifts[nxt]
                    dv = (lift[0] - prev[0], lift[1] - prev[1])
                    if dv != (0, 0):
                        winding_vecs.append(dv)
        components.append((comp_id, _winding_basis(winding_vecs)))
        comp_id += 1

    def winds(direction: int) -> bool:
        return any(any(v[direction - 1] != 0 for v in vecs) for _, vecs in components)

    return TopologyCertificate(
        case=obstacle.case,
        components=tuple(components),
        constructible_p1=not winds(1),
        constructible_p2=not winds(2),
        cuts_required=_cuts_for_case(obstacle.case) if (winds(1) or winds(2)) else None,
    )


def _voxelize_cell(obstacle: CanonicalObstacle, n: int) -> np.ndarray:
    """Exact obstacle mask on one unit cell, n voxels per period, y3 in [-1/2, 1/2]."""
    if n % 8 != 0:
        raise SpacingMisaligned(f"cell resolution {n} not a multiple of 8")
    h = Fraction(1, n)
    mask = np.zeros((n, n, n), dtype=bool)
    half = Fraction(1, 2)
    centers = [(i + Fraction(1, 2)) * h for i in range(n)]
    for b in obstacle.boxes:
        sel1 = np.array([b.lo[0] < c < b.hi[0] for c in centers])
        sel2 = np.array([b.lo[1] < c < b.hi[1] for c in centers])
        sel3 = np.array([b.lo[2] < c - half < b.hi[2] for c in centers])
        mask |= sel1[:, None, None] & sel2[None, :, None] & sel3[None, None, :]
    return mask


@dataclass(frozen=True)
class LayerGeometry:
    """Voxelized thin layer on a computational grid.

    The grid covers ``lateral_periods`` periods of size delta in x1, x2
    (periodic) and x3 in [z0, z0 + nzc*spacing].  ``pec_voxels`` flags voxels
    inside the closed layer; ``edge_pec`` flags staggered E-edges whose
    closed segment lies in the closed layer (tangential field must vanish).
    """

    delta: Fraction
    spacing: Fraction
    obstacle: CanonicalObstacle
    lateral_periods: tuple[int, int]
    z0: Fraction
    pec_voxels: np.ndarray
    edge_pec: tuple[np.ndarray, np.ndarray, np.ndarray] = field(repr=False)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.pec_voxels.shape

    def pec_volume(self) -> Fraction:
        return int(self.pec_voxels.sum()) * self.spacing**3


def edge_masks_from_voxels(vox: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """E-edge masks: an edge is PEC iff any of its 4 adjacent voxels is PEC.

    Lateral indices wrap (periodic); out-of-range vertical neighbours count
    as vacuum.  Shapes: E1 (nx, ny, nz+1), E2 (nx, ny, nz+1), E3 (nx, ny, nz)
    with the first two axes periodic node/cell indices as appropriate.
    """
    nx, ny, nz = vox.shape
    padded = np.zeros((nx, ny, nz + 2), dtype=bool)
    padded[:, :, 1:-1] = vox

    def wrap(a, axis, shift):
        return np.roll(a, shift, axis=axis)

    # E1 edge [i, j, k]: spans cells i in x1; adjacent voxels (i, j-1|j, k-1|k).
    vj = padded | wrap(padded, 1, 1)          # or over j-1, j
    e1 = vj[:, :, :-1] | vj[:, :, 1:]         # or over k-1, k  -> (nx, ny, nz+1)
    # E2 edge [i, j, k]: adjacent voxels (i-1|i, j, k-1|k).
    vi = padded | wrap(padded, 0, 1)
    e2 = vi[:, :, :-1] | vi[:, :, 1:]
    # E3 edge [i, j, k]: adjacent voxels (i-1|i, j-1|j, k).
    vij = vox | wrap(vox, 0, 1) | wrap(vox, 1, 1) | wrap(wrap(vox, 0, 1), 1, 1)
    e3 = vij
    return e1, e2, e3


def voxelize_layer(
    obstacle: CanonicalObstacle,
    delta: Fraction,
    spacing: Fraction,
    lateral_periods: tuple[int, int] = (1, 1),
    z_extent: Optional[tuple[Fraction, Fraction]] = None,
) -> LayerGeometry:
    """Voxelize the scaled layer exactly onto a uniform grid.

    Raises SpacingMisaligned unless spacing divides delta/8, the coarsest
    granularity of the canonical geometry.
    """
    delta = Fraction(delta)
    spacing = Fraction(spacing)
    ratio = (delta / 8) / spacing
    if ratio.denominator != 1 or ratio <= 0:
        raise SpacingMisaligned(
            f"spacing {spacing} does not divide delta/8 = {delta / 8}"
        )
    if z_extent is None:
        z_extent = (-delta / 2, delta / 2)
    z0, z1 = Fraction(z_extent[0]), Fraction(z_extent[1])
    for name, z in (("z_extent[0]", z0), ("z_extent[1]", z1)):
        if (z / spacing).denominator != 1:
            raise SpacingMisaligned(f"{name} = {z} is not a multiple of spacing {spacing}")
    nx = int(lateral_periods[0] * delta / spacing)
    ny = int(lateral_periods[1] * delta / spacing)
    nzc = int((z1 - z0) / spacing)

    # Period-resolved mask for one cell, then tiled laterally and embedded in z.
    n = int(delta / spacing)
    cell = _voxelize_cell(obstacle, n)  # one period, y3 in [-1/2, 1/2] -> n voxels
    vox = np.zeros((nx, ny, nzc), dtype=bool)
    k_lo = int((-delta / 2 - z0) / spacing)  # index of the layer's bottom plane
    for kc in range(n):
        k = k_lo + kc
        if 0 <= k < nzc:
            tile = np.tile(cell[:, :, kc], lateral_periods)
            vox[:, :, k] = tile
    e1, e2, e3 = edge_masks_from_voxels(vox)
    return LayerGeometry(
        delta=delta,
        spacing=spacing,
        obstacle=obstacle,
        lateral_periods=tuple(lateral_periods),
        z0=z0,
        pec_voxels=vox,
        edge_pec=(e1, e2, e3),
    )
