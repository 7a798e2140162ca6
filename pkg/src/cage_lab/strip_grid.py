"""Periodic-strip grid and finite-volume Laplace machinery for cell problems.

The strip is (0,1)^2 x (-L, L), periodic in y1 and y2, truncated at y3 = +-L
with prescribed-flux (Neumann) data.  Unknowns live on grid nodes; each node
owns the part of its dual cell lying outside the obstacle, and each lattice
edge carries a conductance equal to the fluid fraction of its dual face
(quarters of the four voxels around the edge).  With box faces on grid
planes this is exact: the scheme is the standard vertex-centred finite
volume / lumped trilinear FEM, symmetric and second order.

Flux balance at a node, after dividing by the spacing h:

    sum_edges c * (x_nb - x_a) + (1/h) * int_{Gamma cap V_a} g dS
                               + (1/h) * int_{caps cap V_a} dq/dnu dS = 0,

with c in {0, 1/4, 1/2, 3/4, 1}.  Obstacle surface integrals are assembled
face by face (each boundary voxel face gives h^2/4 to each corner node).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverDiverged
from .geometry import (
    CanonicalObstacle,
    CutSet,
    TopologyCertificate,
    topology_certificate,
    voxelize_layer,
)

# Node classes
FREE, BOUNDARY, INSIDE = 0, 1, 2

_DIRECT_LIMIT = 150_000  # unknown count above which iterative solves kick in


def _lateral_quarter_sum(a: np.ndarray) -> np.ndarray:
    """Sum of a over the 4 lateral offsets (i-1|i, j-1|j), periodic wrap."""
    return a + np.roll(a, 1, axis=0) + np.roll(a, 1, axis=1) + np.roll(np.roll(a, 1, axis=0), 1, axis=1)


class StripGrid:
    """Discretized strip with an (optional) obstacle voxelized at period 1."""

    def __init__(self, obstacle: Optional[CanonicalObstacle], n: int, L: int = 4):
        if n < 2 or (obstacle is not None and n % 8 != 0):
            raise ValueError(f"n = {n} must be a positive multiple of 8")
        if L < 1:
            raise ValueError("truncation half-height L must be >= 1")
        self.obstacle = obstacle
        self.n = int(n)
        self.L = int(L)
        self.h = 1.0 / n
        self.nzc = 2 * L * n            # voxel layers, y3 from -L to L
        self.nzn = self.nzc + 1         # node planes
        self.k0 = L * n                 # node plane y3 = 0
        self.cert: Optional[TopologyCertificate] = None
        self.cuts: Optional[CutSet] = None

        if obstacle is not None:
            layer = voxelize_layer(
                obstacle, Fraction(1), Fraction(1, n),
                lateral_periods=(1, 1), z_extent=(Fraction(-L), Fraction(L)),
            )
            self.vox = layer.pec_voxels
            self.cert = topology_certificate(obstacle)
            self.cuts = self.cert.cuts_required
        else:
            self.vox = np.zeros((n, n, self.nzc), dtype=bool)

        fluid = ~self.vox
        flp = np.zeros((n, n, self.nzc + 2))
        flp[:, :, 1:-1] = fluid
        # Edge conductances: fluid fraction of the dual face (quarter count).
        pair_j = flp + np.roll(flp, 1, axis=1)
        self.c1 = 0.25 * (pair_j[:, :, :-1] + pair_j[:, :, 1:])       # (n,n,nzn)
        pair_i = flp + np.roll(flp, 1, axis=0)
        self.c2 = 0.25 * (pair_i[:, :, :-1] + pair_i[:, :, 1:])       # (n,n,nzn)
        self.c3 = 0.25 * _lateral_quarter_sum(fluid.astype(float))    # (n,n,nzc)

        # Node classification from the 8 surrounding voxels.
        obs_p = np.zeros((n, n, self.nzc + 2))
        obs_p[:, :, 1:-1] = self.vox
        exist_p = np.zeros((n, n, self.nzc + 2))
        exist_p[:, :, 1:-1] = 1.0
        so = _lateral_quarter_sum(obs_p)
        se = _lateral_quarter_sum(exist_p)
        n_obs = so[:, :, :-1] + so[:, :, 1:]
        n_exist = se[:, :, :-1] + se[:, :, 1:]
        self.node_kind = np.full((n, n, self.nzn), FREE, dtype=np.int8)
        self.node_kind[(n_obs > 0) & (n_obs < n_exist)] = BOUNDARY
        self.node_kind[(n_obs > 0) & (n_obs == n_exist)] = INSIDE

        self._flat = np.arange(n * n * self.nzn).reshape(n, n, self.nzn)
        self._dirichlet = None   # (A, B, unknown_ids, data_ids)
        self._neumann = None     # (A, unknown_ids)
        self._dir_solver = None
        self._neu_solver = None
        self._faces = None

    # ------------------------------------------------------------------ grid

    def node_coords(self):
        """(y1, y2, y3) coordinate arrays broadcastable to node shape."""
        n = self.n
        y1 = (np.arange(n) * self.h)[:, None, None]
        y2 = (np.arange(n) * self.h)[None, :, None]
        y3 = (-self.L + np.arange(self.nzn) * self.h)[None, None, :]
        return y1, y2, y3

    def conductance(self, axis: int) -> np.ndarray:
        return (self.c1, self.c2, self.c3)[axis]

    # ----------------------------------------------------------- face survey

    @property
    def boundary_faces(self):
        """Obstacle boundary faces as per-axis structured arrays.

        For each axis a: dict with 'sign' (+1 if the outward-from-fluid normal
        is +e_a), 'corners' (4, nf) flat node ids, 'upper' (nf,) bool for the
        half-space y3 > 0.
        """
        if self._faces is not None:
            return self._faces
        n, nzc = self.n, self.nzc
        vox = self.vox
        out = []
        for axis in range(3):
            if axis in (0, 1):
                nb = np.roll(vox, 1, axis=axis)  # voxel at index-1 along axis
                # face between voxel (idx-1) and (idx) at plane idx
                plus = ~nb & vox    # fluid below plane, obstacle above: n = +e_a
                minus = nb & ~vox   # obstacle below, fluid above: n = -e_a
            else:
                plus = np.zeros_like(vox)
                minus = np.zeros_like(vox)
                # plane kf between voxel kf-1 and kf, interior planes only
                plus[:, :, 1:] = ~vox[:, :, :-1] & vox[:, :, 1:]
                minus[:, :, 1:] = vox[:, :, :-1] & ~vox[:, :, 1:]
            recs = {"sign": [], "corners": [], "upper": []}
            for sign, mask in ((+1, plus), (-1, minus)):
                ii, jj, kk = np.nonzero(mask)
                if len(ii) == 0:
                    continue
                corners = self._face_corners(axis, ii, jj, kk)
                if axis in (0, 1):
                    upper = kk >= self.k0          # voxel layer entirely in y3 > 0
                else:
                    assert not np.any(kk == self.k0), "obstacle face in the cut plane"
                    upper = kk > self.k0
                recs["sign"].append(np.full(len(ii), sign))
                recs["corners"].append(corners)
                recs["upper"].append(upper)
            if recs["sign"]:
                out.append({
                    "sign": np.concatenate(recs["sign"]),
                    "corners": np.concatenate(recs["corners"], axis=1),
                    "upper": np.concatenate(recs["upper"]),
                })
            else:
                out.append({"sign": np.zeros(0), "corners": np.zeros((4, 0), int),
                            "upper": np.zeros(0, bool)})
        self._faces = out
        return out

    def _face_corners(self, axis, ii, jj, kk):
        """Flat node ids of the 4 corners of boundary faces (axis-normal)."""
        n = self.n
        f = self._flat
        if axis == 0:
            # face at node-plane i = ii, spanning voxel (jj, kk)
            c = [f[ii % n, jj, kk], f[ii % n, (jj + 1) % n, kk],
                 f[ii % n, jj, kk + 1], f[ii % n, (jj + 1) % n, kk + 1]]
        elif axis == 1:
            c = [f[ii, jj % n, kk], f[(ii + 1) % n, jj % n, kk],
                 f[ii, jj % n, kk + 1], f[(ii + 1) % n, jj % n, kk + 1]]
        else:
            c = [f[ii, jj, kk], f[(ii + 1) % n, jj, kk],
                 f[ii, (jj + 1) % n, kk], f[(ii + 1) % n, (jj + 1) % n, kk]]
        return np.stack(c)

    # ------------------------------------------------------------- assembly

    def _edges(self, axis):
        """(tail, head, c) flat arrays for all lattice edges along axis."""
        f = self._flat
        if axis in (0, 1):
            tail = f
            head = np.roll(f, -1, axis=axis)
            c = self.conductance(axis)
        else:
            tail = f[:, :, :-1]
            head = f[:, :, 1:]
            c = self.c3
        return tail.ravel(), head.ravel(), c.ravel()

    def _build(self, dirichlet: bool):
        kind = self.node_kind.ravel()
        if dirichlet:
            unknown = kind == FREE
            data = kind == BOUNDARY
        else:
            unknown = kind != INSIDE
            data = np.zeros_like(unknown)
        uid = np.full(kind.shape, -1, dtype=np.int64)
        uid[unknown] = np.arange(int(unknown.sum()))
        did = np.full(kind.shape, -1, dtype=np.int64)
        did[data] = np.arange(int(data.sum()))

        rows, cols, vals = [], [], []
        brows, bcols, bvals = [], [], []
        diag = np.zeros(int(unknown.sum()))
        for axis in range(3):
            t, hd, c = self._edges(axis)
            live = c > 0
            t, hd, c = t[live], hd[live], c[live]
            tu, hu = uid[t], uid[hd]
            td, hdd = did[t], did[hd]
            both = (tu >= 0) & (hu >= 0)
            np.add.at(diag, tu[both], c[both])
            np.add.at(diag, hu[both], c[both])
            rows.append(tu[both]); cols.append(hu[both]); vals.append(-c[both])
            rows.append(hu[both]); cols.append(tu[both]); vals.append(-c[both])
            # unknown-data couplings (Dirichlet elimination)
            for u, d in ((tu, hdd), (hu, td)):
                m = (u >= 0) & (d >= 0)
                np.add.at(diag, u[m], c[m])
                brows.append(u[m]); bcols.append(d[m]); bvals.append(c[m])
            # conductive edge touching an excluded node would be a bug
            assert not np.any((tu < 0) & (td < 0)) and not np.any((hu < 0) & (hdd < 0))
        nu = int(unknown.sum())
        A = sp.coo_matrix(
            (np.concatenate(vals + [diag]),
             (np.concatenate(rows + [np.arange(nu)]),
              np.concatenate(cols + [np.arange(nu)]))),
            shape=(nu, nu),
        ).tocsr()
        B = sp.coo_matrix(
            (np.concatenate(bvals) if bvals else np.zeros(0),
             (np.concatenate(brows) if brows else np.zeros(0, int),
              np.concatenate(bcols) if bcols else np.zeros(0, int))),
            shape=(nu, int(data.sum())),
        ).tocsr()
        return A, B, np.nonzero(unknown)[0], np.nonzero(data)[0]

    @property
    def dirichlet_system(self):
        if self._dirichlet is None:
            self._dirichlet = self._build(dirichlet=True)
        return self._dirichlet

    @property
    def neumann_system(self):
        if self._neumann is None:
            A, _, uids, _ = self._build(dirichlet=False)
            self._neumann = (A, uids)
        return self._neumann

    # --------------------------------------------------------------- solvers

    def _amg_cg(self, A, b, nullspace: bool, tol: float):
        x0 = np.zeros_like(b)
        try:
            import pyamg

            B = np.ones((A.shape[0], 1)) if nullspace else None
            ml = pyamg.smoothed_aggregation_solver(A.tocsr(), B=B, max_coarse=500)
            M = ml.aspreconditioner(cycle="V")
        except Exception:
            M = sp.diags(1.0 / A.diagonal())
        if nullspace:
            def matvec(v):
                w = A @ v
                return w - w.mean()
            op = spla.LinearOperator(A.shape, matvec=matvec, dtype=float)
            def pre(v):
                w = M @ v
                return w - w.mean()
            Mop = spla.LinearOperator(A.shape, matvec=pre, dtype=float)
            x, info = spla.cg(op, b, x0=x0, rtol=tol, atol=0.0, maxiter=20000, M=Mop)
            x -= x.mean()
        else:
            x, info = spla.cg(A, b, x0=x0, rtol=tol, atol=0.0, maxiter=20000, M=M)
        if info != 0:
            raise SolverDiverged(f"CG failed to converge (info={info})")
        return x

    def solve_dirichlet(self, b: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        """Solve the Dirichlet-eliminated system for the reduced RHS b."""
        A, _, _, _ = self.dirichlet_system
        if A.shape[0] <= _DIRECT_LIMIT:
            if self._dir_solver is None:
                self._dir_solver = spla.splu(A.tocsc())
            x = self._dir_solver.solve(b)
        else:
            x = self._amg_cg(A, b, nullspace=False, tol=tol)
        self._check_residual(A, x, b, tol)
        return x

    def solve_neumann(self, b: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        """Solve the singular pure-Neumann system; returns the mean-zero gauge.

        Compatibility (sum b = 0) must hold up to rounding; the solve is done
        on the mean-zero complement via a bordered system (direct) or
        projected CG (iterative).
        """
        A, _ = self.neumann_system
        defect = abs(b.sum()) / max(1.0, np.abs(b).sum())
        if defect > 1e-10:
            raise SolverDiverged(f"incompatible Neumann data (relative defect {defect:.2e})")
        b = b - b.mean()
        if A.shape[0] <= _DIRECT_LIMIT:
            if self._neu_solver is None:
                m = A.shape[0]
                e = np.ones((m, 1)) / m
                K = sp.bmat([[A, e], [e.T, None]], format="csc")
                self._neu_solver = spla.splu(K)
            x = self._neu_solver.solve(np.concatenate([b, [0.0]]))[:-1]
            x = x - x.mean()
        else:
            x = self._amg_cg(A, b, nullspace=True, tol=tol)
        self._check_residual(A, x, b, tol, nullspace=True)
        return x

    @staticmethod
    def _check_residual(A, x, b, tol, nullspace=False):
        r = A @ x - b
        if nullspace:
            r = r - r.mean()
        nb = np.linalg.norm(b)
        if nb > 0 and np.linalg.norm(r) / nb > max(1e-8, 10 * tol):
            raise SolverDiverged(
                f"linear solve residual {np.linalg.norm(r) / nb:.2e} above tolerance"
            )

    # ------------------------------------------------------ RHS constructors

    def rhs_caps(self, top_flux: float, bottom_flux: float) -> np.ndarray:
        """Truncation-plane data: prescribed d(q)/d(y3) at y3 = +L and -L."""
        b = np.zeros(self.n * self.n * self.nzn)
        f = self._flat
        b[f[:, :, -1].ravel()] += top_flux * self.h
        b[f[:, :, 0].ravel()] += -bottom_flux * self.h
        return b

    def rhs_obstacle_flux(self, direction: int, side: Optional[str] = None) -> np.ndarray:
        """Neumann data g = -e_dir . n on the obstacle boundary.

        side: None for the whole boundary, 'upper'/'lower' to restrict to the
        part in y3 > 0 or y3 < 0 (used by the cut problems).
        """
        b = np.zeros(self.n * self.n * self.nzn)
        faces = self.boundary_faces[direction - 1]
        sel = np.ones(len(faces["sign"]), dtype=bool)
        if side == "upper":
            sel = faces["upper"]
        elif side == "lower":
            sel = ~faces["upper"]
        g = -faces["sign"][sel] * self.h / 4.0
        for corner in faces["corners"][:, sel]:
            np.add.at(b, corner, g)
        return b

    def cut_nodes(self) -> np.ndarray:
        """Lateral mask of fluid nodes in the plane y3 = 0 (the cut carriers)."""
        return self.node_kind[:, :, self.k0] != INSIDE

    def rhs_cut_jump(self, J: np.ndarray) -> np.ndarray:
        """Jump-offset corrections for a prescribed upper-minus-lower jump J.

        J is an (n, n) array over the cut plane, NaN off the cuts.  Stored
        unknowns at cut nodes are the lower traces; every difference reaching
        the plane from the upper side picks up the known jump, which lands
        here as a symmetric RHS contribution (gradient of the energy
        1/2 sum c (dx + j)^2).
        """
        n, k0 = self.n, self.k0
        b = np.zeros(n * n * self.nzn)
        f = self._flat
        Jz = np.where(np.isnan(J), 0.0, J)
        defined = ~np.isnan(J)
        # vertical edges from the plane to the node layer above: j_e = -J
        c_up = self.c3[:, :, k0]
        assert not np.any((c_up > 0) & ~defined), "conductive up-edge at an off-cut node"
        w = c_up * Jz
        np.add.at(b, f[:, :, k0 + 1].ravel(), w.ravel())
        np.add.at(b, f[:, :, k0].ravel(), -w.ravel())
        # lateral edges inside the plane, upper half of the dual face
        fluid_up = (~self.vox[:, :, k0]).astype(float)
        for axis in range(2):
            # upper half of the dual face of an in-plane edge: quarters of the
            # two voxels flanking the edge in the layer just above the plane
            tr = 1 - axis
            cu = 0.25 * (fluid_up + np.roll(fluid_up, 1, axis=tr))
            jmp = np.roll(Jz, -1, axis=axis) - Jz
            live = cu > 0
            head_def = np.roll(defined, -1, axis=axis)
            assert not np.any(live & ~(defined & head_def)), "cut edge with undefined jump"
            w = np.where(live, cu * jmp, 0.0)
            tails = f[:, :, k0].ravel()
            heads = np.roll(f[:, :, k0], -1, axis=axis).ravel()
            np.add.at(b, heads, -w.ravel())
            np.add.at(b, tails, w.ravel())
        return b

    def rhs_dirichlet_data(self, data_values: np.ndarray) -> np.ndarray:
        """Reduced RHS contribution of prescribed boundary-node values."""
        A, B, uids, dids = self.dirichlet_system
        return B @ data_values
