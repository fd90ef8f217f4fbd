import os

# pin BLAS threading before numpy loads so reruns are bit-identical
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")
os.environ.setdefault("NUMEXPR_NUM_THREADS", "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402
import scipy.sparse as sp  # noqa: E402

from drolayers.conic import ConeBlock, ConeProgram, ConeSpec  # noqa: E402


def random_feasible_socp(rng, n=None, with_eq=True, box=10.0):
    """Random bounded cone program with a known strictly feasible point.

    Rows: optional equalities through w0, a couple of soc blocks, nonneg
    rows, and a box keeping the problem bounded.
    """
    n = n or rng.integers(3, 9)
    w0 = rng.standard_normal(n)
    rows = []
    bvals = []
    blocks = []

    def add_rows(mat, off, kind):
        rows.append(np.atleast_2d(mat))
        bvals.append(np.atleast_1d(off))
        blocks.append(ConeBlock(kind, len(np.atleast_1d(off))))

    if with_eq and n > 2:
        E = rng.standard_normal((1, n))
        add_rows(-E, -(E @ w0), "zero")  # b - Aw = Ew - Ew0
    for _ in range(int(rng.integers(1, 3))):
        d = int(rng.integers(2, 5))
        F = rng.standard_normal((d - 1, n))
        f = rng.standard_normal(d - 1)
        slackness = rng.uniform(0.5, 2.0)
        t0 = np.linalg.norm(F @ w0 + f) + slackness
        row = np.vstack([np.zeros((1, n)), -F])
        off = np.concatenate([[t0], f])
        add_rows(row, off, "soc")
    k = int(rng.integers(1, 4))
    Gm = rng.standard_normal((k, n))
    g0 = Gm @ w0 + rng.uniform(0.5, 1.5, size=k)
    add_rows(Gm, g0, "nonneg")  # g0 - Gw >= 0 holds strictly at w0
    eye = np.eye(n)
    add_rows(-eye, np.full(n, box) - w0, "nonneg")   # w - w0 <= box
    add_rows(eye, np.full(n, box) + w0, "nonneg")    # w - w0 >= -box
    A = np.vstack(rows)
    b = np.concatenate(bvals)
    c = rng.standard_normal(n)
    return ConeProgram(c, sp.csr_matrix(A), b, ConeSpec(tuple(blocks))), w0


def kkt_conditions(prog, w, y):
    """Stationarity and complementarity residual map, assembled from scratch.

    Independent of drolayers.diff: used to polish finite-difference oracle
    solutions to the exact KKT point.
    """
    s = prog.b - prog.A @ w
    phi = np.zeros(prog.m)
    for blk, sl in prog.cones.slices():
        if blk.kind == "zero":
            phi[sl] = s[sl]
        elif blk.kind == "nonneg":
            phi[sl] = s[sl] * y[sl]
        else:
            ss, yy = s[sl], y[sl]
            phi[sl.start] = ss @ yy
            phi[sl.start + 1:sl.stop] = ss[0] * yy[1:] + yy[0] * ss[1:]
    return np.concatenate([prog.A.T @ y + prog.c, phi])


def _kkt_jacobian(prog, w, y):
    s = prog.b - prog.A @ w
    m = prog.m
    Ds = sp.lil_matrix((m, m))
    Dy = sp.lil_matrix((m, m))
    for blk, sl in prog.cones.slices():
        if blk.kind == "zero":
            Ds[sl, sl] = sp.eye(blk.dim)
        elif blk.kind == "nonneg":
            Ds[sl, sl] = sp.diags(y[sl])
            Dy[sl, sl] = sp.diags(s[sl])
        else:
            d = blk.dim
            Ay = np.eye(d) * y[sl.start]
            Ay[0, 1:] = y[sl.start + 1:sl.stop]
            Ay[1:, 0] = y[sl.start + 1:sl.stop]
            As = np.eye(d) * s[sl.start]
            As[0, 1:] = s[sl.start + 1:sl.stop]
            As[1:, 0] = s[sl.start + 1:sl.stop]
            Ds[sl, sl] = Ay
            Dy[sl, sl] = As
    return sp.bmat([[sp.csr_matrix((prog.n, prog.n)), prog.A.T],
                    [-(Ds.tocsr() @ prog.A), Dy.tocsr()]], format="csc")


def polish(prog, sol, iters=3):
    """Newton-polish a solver solution onto the exact KKT point."""
    w, y = sol.primal.copy(), sol.dual.copy()
    for _ in range(iters):
        F = kkt_conditions(prog, w, y)
        if np.linalg.norm(F) < 1e-14:
            break
        J = _kkt_jacobian(prog, w, y)
        try:
            d = sp.linalg.splu(J).solve(-F)
        except RuntimeError:
            break
        w = w + d[:prog.n]
        y = y + d[prog.n:]
    return w, y


def complementarity_strength(prog, sol):
    """min eigenvalue of s + y over barrier blocks; small means near-degenerate."""
    s = prog.b - prog.A @ sol.primal
    v = s + sol.dual
    strength = np.inf
    for blk, sl in prog.cones.slices():
        if blk.kind == "nonneg":
            if blk.dim:
                strength = min(strength, float(np.min(v[sl])))
        elif blk.kind == "soc":
            strength = min(strength, float(v[sl.start] - np.linalg.norm(v[sl.start + 1:sl.stop])))
    return strength


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)
