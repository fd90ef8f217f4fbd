"""Primal-dual interior-point solver on the homogeneous self-dual embedding.

Internally the rows of  b - A.w in K  are split into an equality part
(zero blocks, dual y free) and a barrier part (nonneg/soc blocks, slack s,
dual z):

    Aeq x = beq tau,    G x + s = h tau,    s in C, z in C,
    Aeq^T y + G^T z + c tau = 0,
    c^T x + beq^T y + h^T z + kappa = 0,    tau, kappa >= 0.

tau > 0 at convergence recovers an optimal triple; kappa > 0 yields an
infeasibility or unboundedness certificate.  Search directions use
Nesterov-Todd scaling with a Mehrotra predictor-corrector.  Each iteration
refreshes the values of one quasidefinite KKT matrix whose sparsity pattern
is fixed up front (static regularization plus iterative refinement), so the
per-iteration cost is one numeric factorization and a handful of
back-substitutions.  The solver is deterministic: no randomness, fixed
pivoting, fixed iteration order.

Sign conventions (fixed for the whole package):

* dual y lies in the dual cone K* and satisfies A^T y + c = 0 at optimality;
* weak duality reads c.w + b.y >= 0 with equality at optimality;
* consequently d(optimal value)/d(b) = -y and d/d(A_ij) = +y_i w_j.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cones import (
    NONNEG,
    SOC,
    ZERO,
    BarrierCones,
    ConeBlock,
    cone_project,
    cone_violation,
    dual_cone_violation,
)
from .program import (
    ConeProgram,
    ConeSolution,
    Residuals,
    SolverSettings,
    Status,
)

_STEP_FRAC = 0.99
_RUIZ_PASSES = 4


def solve(program: ConeProgram, settings: SolverSettings | None = None) -> ConeSolution:
    """Solve a cone program; see module docstring for conventions."""
    settings = settings or SolverSettings()
    program.check_finite()

    n, m = program.n, program.m
    if n == 0 or m == 0:
        return _solve_degenerate(program, settings)

    work = _Workspace(program, settings)
    return work.run()


def _solve_degenerate(program: ConeProgram, settings: SolverSettings) -> ConeSolution:
    n, m = program.n, program.m
    if m == 0:
        if np.linalg.norm(program.c) == 0.0:
            w = np.zeros(n)
            return ConeSolution(w, np.zeros(0), np.zeros(0), Status.OPTIMAL, 0.0,
                                Residuals(0.0, 0.0, 0.0))
        ray = -program.c / np.linalg.norm(program.c)
        return ConeSolution(np.zeros(n), np.zeros(0), np.zeros(0), Status.UNBOUNDED,
                            -np.inf, Residuals(0.0, np.inf, np.inf), certificate=ray)
    # n == 0: feasible iff b lies in K
    viol = cone_violation(program.cones, program.b)
    if viol <= settings.tol * (1.0 + np.linalg.norm(program.b)):
        return ConeSolution(np.zeros(0), np.zeros(m), program.b.copy(), Status.OPTIMAL,
                            0.0, Residuals(viol, 0.0, 0.0))
    cert = cone_project(program.cones, program.b) - program.b
    cert /= max(1e-300, -cert @ program.b)
    return ConeSolution(np.zeros(0), np.zeros(m), program.b.copy(), Status.INFEASIBLE,
                        np.inf, Residuals(viol, 0.0, np.inf), certificate=cert)


class _KKTSystem:
    """Fixed-pattern KKT matrix

        [ reg I    Aeq^T       G^T       ]
        [ Aeq     -reg I       0         ]
        [ G        0       -(W^T W + reg I) ]

    with only the scaling block values refreshed between factorizations.
    """

    def __init__(self, Aeq: sp.csr_matrix, G: sp.csr_matrix, cones: BarrierCones, reg: float):
        n = Aeq.shape[1]
        p, mc = Aeq.shape[0], G.shape[0]
        self.n, self.p, self.mc = n, p, mc
        self.Aeq, self.G = Aeq, G
        self.AeqT = Aeq.T.tocsr()
        self.GT = G.T.tocsr()
        self.reg = reg
        self._scaling = None

        rows = [np.arange(n)]
        cols = [np.arange(n)]
        vals = [np.full(n, reg)]
        eq_coo = Aeq.tocoo()
        rows += [eq_coo.col, n + eq_coo.row, n + np.arange(p)]
        cols += [n + eq_coo.row, eq_coo.col, n + np.arange(p)]
        vals += [eq_coo.data, eq_coo.data, np.full(p, -reg)]
        g_coo = G.tocoo()
        rows += [g_coo.col, n + p + g_coo.row]
        cols += [n + p + g_coo.row, g_coo.col]
        vals += [g_coo.data, g_coo.data]
        # scaling block: diagonal entries for nonneg rows, dense blocks for soc
        w_rows, w_cols = [], []
        self._seg = []  # (kind, slice into the scaling value segment, dim)
        at = 0
        for blk, sl in cones.slices():
            if blk.kind == NONNEG:
                idx = np.arange(sl.start, sl.stop)
                w_rows.append(idx)
                w_cols.append(idx)
                self._seg.append((NONNEG, slice(at, at + blk.dim), blk.dim))
                at += blk.dim
            else:
                ii, jj = np.meshgrid(np.arange(sl.start, sl.stop),
                                     np.arange(sl.start, sl.stop), indexing="ij")
                w_rows.append(ii.ravel())
                w_cols.append(jj.ravel())
                self._seg.append((SOC, slice(at, at + blk.dim ** 2), blk.dim))
                at += blk.dim ** 2
        self._wlen = at
        if mc:
            w_rows = np.concatenate(w_rows) if w_rows else np.zeros(0, dtype=int)
            w_cols = np.concatenate(w_cols) if w_cols else np.zeros(0, dtype=int)
            rows.append(n + p + w_rows)
            cols.append(n + p + w_cols)
            vals.append(np.zeros(at))
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        self._vals = np.concatenate(vals)
        self._wseg = slice(len(self._vals) - at, len(self._vals)) if mc else slice(0, 0)

        size = n + p + mc
        marker = sp.coo_matrix((np.arange(1.0, len(rows) + 1.0), (rows, cols)),
                               shape=(size, size)).tocsc()
        self._perm = marker.data.astype(np.int64) - 1
        self._indices = marker.indices
        self._indptr = marker.indptr
        self._size = size
        self._eye_written = False

    def refresh(self, scaling) -> None:
        """Write -(W^T W + reg I) entries for the given scaling (None = identity)."""
        self._scaling = scaling
        if not self.mc:
            return
        out = self._vals[self._wseg]
        if scaling is None:
            out[:] = 0.0
            for kind, seg, d in self._seg:
                if kind == NONNEG:
                    out[seg] = -(1.0 + self.reg)
                else:
                    blk = -np.eye(d) * (1.0 + self.reg)
                    out[seg] = blk.ravel()
            return
        blocks = scaling.wtw_blocks_list()
        for (kind, seg, d), blk in zip(self._seg, blocks):
            if kind == NONNEG:
                out[seg] = -(blk + self.reg)
            else:
                dense = -blk
                dense[np.diag_indices(d)] -= self.reg
                out[seg] = dense.ravel()

    def factor(self):
        data = self._vals[self._perm]
        K = sp.csc_matrix((data, self._indices, self._indptr),
                          shape=(self._size, self._size))
        return spla.splu(K)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """Unregularized K v, used for iterative refinement."""
        n, p = self.n, self.p
        vx, vy, vz = v[:n], v[n:n + p], v[n + p:]
        out = np.empty_like(v)
        out[:n] = self.AeqT @ vy + self.GT @ vz
        out[n:n + p] = self.Aeq @ vx
        if self.mc:
            wz = vz if self._scaling is None else self._scaling.apply(self._scaling.apply(vz))
            out[n + p:] = self.G @ vx - wz
        return out

    def solve(self, lu, rhs: np.ndarray, refine: int) -> np.ndarray:
        d = lu.solve(rhs)
        tol = 1e-11 * (1.0 + np.linalg.norm(rhs))
        for _ in range(refine):
            r = rhs - self.matvec(d)
            if np.linalg.norm(r) <= tol:
                break
            d = d + lu.solve(r)
        return d


class _Workspace:
    def __init__(self, program: ConeProgram, settings: SolverSettings):
        self.program = program
        self.settings = settings
        self.n = program.n

        eq_rows: list[int] = []
        cone_rows: list[int] = []
        blocks: list[ConeBlock] = []
        for blk, sl in program.cones.slices():
            if blk.dim == 0:
                continue
            kind, dim = blk.kind, blk.dim
            if kind == SOC and dim == 1:
                kind = NONNEG
            if kind == ZERO:
                eq_rows.extend(range(sl.start, sl.stop))
            else:
                cone_rows.extend(range(sl.start, sl.stop))
                blocks.append(ConeBlock(kind, dim))
        self.eq_rows = np.array(eq_rows, dtype=int)
        self.cone_rows = np.array(cone_rows, dtype=int)
        self.cones = BarrierCones(blocks)

        A = program.A.tocsr()
        self.A = A
        self.AT = A.T.tocsr()
        self.Aeq = A[self.eq_rows, :] if len(eq_rows) else sp.csr_matrix((0, self.n))
        self.G = A[self.cone_rows, :] if len(cone_rows) else sp.csr_matrix((0, self.n))
        self.beq = program.b[self.eq_rows]
        self.h = program.b[self.cone_rows]
        self.c = program.c.copy()
        self.p = self.Aeq.shape[0]
        self.mc = self.G.shape[0]
        self.bnorm = float(np.linalg.norm(program.b))
        self.cnorm = float(np.linalg.norm(program.c))

        self._equilibrate()
        self.data_scale = 1.0 + max(
            float(np.max(np.abs(self.As.data))) if self.As.nnz else 0.0,
            float(np.max(np.abs(self.cs))) if self.n else 0.0,
        )
        self.kkt = _KKTSystem(self.Aeqs, self.Gs, self.cones, settings.static_reg)

    # -- scaling -----------------------------------------------------------

    def _equilibrate(self):
        """Ruiz equilibration, uniform row scale inside each soc block."""
        n = self.n
        A = sp.vstack([self.Aeq, self.G], format="csr") if self.p + self.mc else sp.csr_matrix((0, n))
        Aabs = A.copy()
        Aabs.data = np.abs(Aabs.data)
        Acsc = Aabs.tocsc()
        e = np.ones(A.shape[0])
        d = np.ones(n)
        soc_groups = [(self.p + sl.start, self.p + sl.stop)
                      for blk, sl in self.cones.slices() if blk.kind == SOC]
        row_idx = Aabs.indices
        col_ptr = Acsc.indptr
        for _ in range(_RUIZ_PASSES if A.nnz else 0):
            vals = Aabs.data * d[row_idx]
            rmax = _segment_max(vals, Aabs.indptr)
            rmax *= e
            for lo, hi in soc_groups:
                if hi > lo:
                    rmax[lo:hi] = rmax[lo:hi].max()
            rmax[rmax <= 0] = 1.0
            e /= np.sqrt(rmax)
            vals_c = Acsc.data * e[Acsc.indices]
            cmax = _segment_max(vals_c, col_ptr)
            cmax *= d
            cmax[cmax <= 0] = 1.0
            d /= np.sqrt(cmax)
        self.row_scale = e
        self.col_scale = d
        As = sp.diags(e) @ A @ sp.diags(d)
        As = As.tocsr()
        self.As = As
        self.Aeqs = As[: self.p, :]
        self.Gs = As[self.p:, :]
        self.beqs = self.beq * e[: self.p]
        self.hs = self.h * e[self.p:]
        self.cs = self.c * d

    # -- main loop ---------------------------------------------------------

    def run(self) -> ConeSolution:
        st = self.settings
        n, p, mc = self.n, self.p, self.mc
        cones = self.cones
        e = cones.identity()
        degree = cones.degree + 1
        kkt = self.kkt
        refine = st.refine_steps

        kkt.refresh(None)
        lu0 = kkt.factor()
        init_p = kkt.solve(lu0, np.concatenate([np.zeros(n), self.beqs, self.hs]), refine)
        x = init_p[:n]
        s_raw = -init_p[n + p:]
        init_d = kkt.solve(lu0, np.concatenate([-self.cs, np.zeros(p), np.zeros(mc)]), refine)
        y = init_d[n:n + p]
        z_raw = init_d[n + p:]
        s = _shift_interior(cones, s_raw)
        z = _shift_interior(cones, z_raw)
        tau, kappa = 1.0, 1.0

        best_state = (x, y, z, s, tau)
        best_metric = np.inf
        it = 0

        for it in range(st.max_iter):
            sol, metric = self._classify(x, y, z, s, tau, kappa, it)
            if sol is not None:
                return sol
            if metric < best_metric:
                best_metric = metric
                best_state = (x.copy(), y.copy(), z.copy(), s.copy(), tau)

            mu = ((s @ z) + tau * kappa) / degree

            rx = self.Aeqs.T @ y + self.Gs.T @ z + self.cs * tau
            ry = self.Aeqs @ x - self.beqs * tau
            rz = self.Gs @ x + s - self.hs * tau
            rt = self.cs @ x + self.beqs @ y + self.hs @ z + kappa

            scaling = cones.nt_scaling(s, z) if mc else None
            lam = scaling.lam if mc else np.zeros(0)
            kkt.refresh(scaling)
            lu = kkt.factor()
            u1 = kkt.solve(lu, np.concatenate([-self.cs, self.beqs, self.hs]), refine)
            xi1 = self.cs @ u1[:n] + self.beqs @ u1[n:n + p] + self.hs @ u1[n + p:]

            def direction(sigma, ds_target, dtk_target):
                bz2 = -(1 - sigma) * rz
                if mc:
                    bz2 = bz2 - scaling.apply(cones.solve_product(lam, ds_target))
                rhs = np.concatenate([-(1 - sigma) * rx, -(1 - sigma) * ry, bz2])
                u2 = kkt.solve(lu, rhs, refine)
                xi2 = self.cs @ u2[:n] + self.beqs @ u2[n:n + p] + self.hs @ u2[n + p:]
                bt2 = -(1 - sigma) * rt - dtk_target / tau
                dtau = (bt2 - xi2) / (xi1 - kappa / tau)
                dxyz = u2 + dtau * u1
                dx, dy, dz = dxyz[:n], dxyz[n:n + p], dxyz[n + p:]
                ds = -(1 - sigma) * rz - self.Gs @ dx + self.hs * dtau
                dkappa = (dtk_target - kappa * dtau) / tau
                return dx, dy, dz, ds, dtau, dkappa

            def max_alpha(dz, ds, dtau, dkappa):
                alpha = np.inf
                if mc:
                    alpha = min(alpha, cones.max_step(s, ds), cones.max_step(z, dz))
                if dtau < 0:
                    alpha = min(alpha, -tau / dtau)
                if dkappa < 0:
                    alpha = min(alpha, -kappa / dkappa)
                return alpha

            lamlam = cones.product(lam, lam) if mc else lam
            aff = direction(0.0, -lamlam, -tau * kappa)
            a_aff = min(1.0, max_alpha(aff[2], aff[3], aff[4], aff[5]))
            sigma = float(np.clip((1.0 - a_aff) ** 3, 0.0, 1.0))

            if mc:
                corr = cones.product(scaling.apply_inv(aff[3]), scaling.apply(aff[2]))
                ds_target = -lamlam - corr + sigma * mu * e
            else:
                ds_target = lam
            dtk_target = -tau * kappa - aff[4] * aff[5] + sigma * mu
            dx, dy, dz, ds, dtau, dkappa = direction(sigma, ds_target, dtk_target)

            alpha = min(1.0, _STEP_FRAC * max_alpha(dz, ds, dtau, dkappa))
            if not np.isfinite(alpha) or alpha <= 1e-13:
                break
            x = x + alpha * dx
            y = y + alpha * dy
            z = z + alpha * dz
            s = s + alpha * ds
            tau = tau + alpha * dtau
            kappa = kappa + alpha * dkappa
            if tau <= 0 or kappa < 0 or (mc and cones.min_eig(s) <= 0):
                break

        bx, by, bz, bs, btau = best_state
        return self._package(bx, by, bz, bs, max(btau, 1e-300), it, Status.MAX_ITER)

    # -- classification ----------------------------------------------------

    def _unscale(self, x, y, z, tau):
        w = self.col_scale * (x / tau)
        yz = np.concatenate([y, z]) * self.row_scale / tau
        y_full = np.zeros(self.program.m)
        y_full[self.eq_rows] = yz[: self.p]
        y_full[self.cone_rows] = yz[self.p:]
        return w, y_full

    def _metrics(self, w, y_full):
        prog = self.program
        slack = prog.b - self.A @ w
        pres = cone_violation(prog.cones, slack) / (1.0 + self.bnorm)
        datres = np.linalg.norm(self.AT @ y_full + prog.c)
        dcone = dual_cone_violation(prog.cones, y_full)
        dres = np.sqrt(datres ** 2 + dcone ** 2) / (1.0 + self.cnorm)
        pcost = prog.c @ w
        dcost = -(prog.b @ y_full)
        gap = abs(pcost - dcost) / max(1.0, abs(pcost), abs(dcost))
        return slack, float(pres), float(dres), float(gap), float(pcost)

    def _classify(self, x, y, z, s, tau, kappa, it):
        """Return (solution, None) when converged, else (None, progress metric)."""
        st = self.settings
        prog = self.program
        w, y_full = self._unscale(x, y, z, tau)
        slack, pres, dres, gap, pcost = self._metrics(w, y_full)
        metric = max(pres, dres, gap)

        if pres <= st.tol and dres <= st.tol and gap <= st.tol:
            sol = ConeSolution(w, y_full, slack, Status.OPTIMAL, pcost,
                               Residuals(pres, dres, gap), iterations=it)
            return sol, metric

        # certificates live on the raw (tau-free) iterate, verified unscaled
        yz = np.concatenate([y, z]) * self.row_scale
        y_cert = np.zeros(prog.m)
        y_cert[self.eq_rows] = yz[: self.p]
        y_cert[self.cone_rows] = yz[self.p:]
        rho = -(prog.b @ y_cert)
        if rho > 0:
            yc = y_cert / rho
            infres = np.linalg.norm(self.AT @ yc) + dual_cone_violation(prog.cones, yc)
            if infres <= st.inf_tol * self.data_scale * (1.0 + np.linalg.norm(yc)):
                sol = ConeSolution(w, y_full, slack, Status.INFEASIBLE, np.inf,
                                   Residuals(pres, dres, np.inf),
                                   iterations=it, certificate=yc)
                return sol, metric
        xw = self.col_scale * x
        zeta = -(prog.c @ xw)
        if zeta > 0:
            xc = xw / zeta
            ray_slack = -(self.A @ xc)
            unbres = cone_violation(prog.cones, ray_slack)
            if unbres <= st.inf_tol * self.data_scale * (1.0 + np.linalg.norm(xc)):
                sol = ConeSolution(w, y_full, slack, Status.UNBOUNDED, -np.inf,
                                   Residuals(pres, np.inf, np.inf),
                                   iterations=it, certificate=xc)
                return sol, metric
        return None, metric

    def _package(self, x, y, z, s, tau, it, status):
        w, y_full = self._unscale(x, y, z, tau)
        slack, pres, dres, gap, pcost = self._metrics(w, y_full)
        return ConeSolution(w, y_full, slack, status, pcost,
                            Residuals(pres, dres, gap), iterations=it)


def _segment_max(vals: np.ndarray, indptr: np.ndarray) -> np.ndarray:
    out = np.zeros(len(indptr) - 1)
    nonempty = indptr[:-1] < indptr[1:]
    if vals.size:
        segmax = np.maximum.reduceat(vals, indptr[:-1][nonempty]) if nonempty.any() else np.zeros(0)
        out[nonempty] = segmax
    return out


def _shift_interior(cones: BarrierCones, v: np.ndarray) -> np.ndarray:
    """Push v a healthy margin inside the cone (both block kinds shift by e)."""
    if cones.dim == 0:
        return v
    m = cones.min_eig(v)
    scale = max(1.0, float(np.max(np.abs(v))) if v.size else 1.0)
    if m > 1e-6 * scale:
        return v
    return v + (1.0 + max(0.0, -m)) * cones.identity()
