"""Cone program container, canonicalization, and JSON serialization.

A program is  minimize c.w  subject to  b - A.w in K,  with K an ordered
product of zero/nonneg/soc blocks partitioning the m rows of A.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .cones import NONNEG, SOC, ZERO, ConeBlock, ConeSpec


class ConicError(Exception):
    """Base class for conic-layer errors."""


class DimensionMismatch(ConicError):
    pass


class NonFiniteData(ConicError):
    pass


class Status(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITER = "max_iter"


class Residuals(NamedTuple):
    primal_feas: float
    dual_feas: float
    duality_gap: float


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-8
    max_iter: int = 200
    # certificate acceptance threshold for infeasible/unbounded statuses
    inf_tol: float = 1e-9
    refine_steps: int = 2
    static_reg: float = 1e-11
    verbose: bool = False


class ConeProgram:
    """Immutable-by-convention cone program data.

    The constraint matrix is ingested from triplets (duplicates summed) or
    any scipy-convertible matrix and stored in CSR form.
    """

    def __init__(self, c, A, b, cones: ConeSpec):
        self.c = np.asarray(c, dtype=float).ravel()
        if sp.issparse(A):
            self.A = A.tocsr().astype(float)
        else:
            self.A = sp.csr_matrix(np.asarray(A, dtype=float))
        self.b = np.asarray(b, dtype=float).ravel()
        self.cones = cones
        m, n = self.A.shape
        if len(self.c) != n:
            raise DimensionMismatch(f"c has length {len(self.c)}, A has {n} columns")
        if len(self.b) != m:
            raise DimensionMismatch(f"b has length {len(self.b)}, A has {m} rows")
        if cones.dim != m:
            raise DimensionMismatch(f"cones cover {cones.dim} rows, A has {m}")

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @staticmethod
    def from_triplets(c, rows, cols, vals, shape, b, cones: ConeSpec) -> "ConeProgram":
        A = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
        A.sum_duplicates()
        return ConeProgram(c, A, b, cones)

    def check_finite(self):
        if not np.all(np.isfinite(self.c)):
            raise NonFiniteData("objective contains NaN or inf")
        if not np.all(np.isfinite(self.b)):
            raise NonFiniteData("offset vector contains NaN or inf")
        if not np.all(np.isfinite(self.A.data)):
            raise NonFiniteData("constraint matrix contains NaN or inf")

    def to_json_obj(self) -> dict:
        coo = self.A.tocoo()
        return {
            "c": self.c.tolist(),
            "A": {
                "rows": coo.row.tolist(),
                "cols": coo.col.tolist(),
                "vals": coo.data.tolist(),
                "shape": [int(self.m), int(self.n)],
            },
            "b": self.b.tolist(),
            "cones": self.cones.to_json_obj(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @staticmethod
    def from_json_obj(obj: dict) -> "ConeProgram":
        a = obj["A"]
        return ConeProgram.from_triplets(
            obj["c"], a["rows"], a["cols"], a["vals"], tuple(a["shape"]),
            obj["b"], ConeSpec.from_json_obj(obj["cones"]),
        )

    @staticmethod
    def from_json(text: str) -> "ConeProgram":
        return ConeProgram.from_json_obj(json.loads(text))


@dataclass
class ConeSolution:
    primal: np.ndarray
    dual: np.ndarray
    slack: np.ndarray
    status: Status
    objective_value: float
    residuals: Residuals
    iterations: int = 0
    # for infeasible: dual ray y; for unbounded: primal ray w
    certificate: np.ndarray | None = None

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def canonicalize(program: ConeProgram) -> ConeProgram:
    """Drop empty blocks, rewrite dim-1 soc as nonneg, merge adjacent nonneg.

    Row order is preserved, so primal/dual solutions are unchanged.  Returns
    the input object itself when it is already canonical.
    """
    blocks: list[ConeBlock] = []
    changed = False
    for blk in program.cones.blocks:
        kind, dim = blk.kind, blk.dim
        if dim == 0:
            changed = True
            continue
        if kind == SOC and dim == 1:
            kind = NONNEG
            changed = True
        if blocks and kind == NONNEG and blocks[-1].kind == NONNEG:
            blocks[-1] = ConeBlock(NONNEG, blocks[-1].dim + dim)
            changed = True
        else:
            blocks.append(ConeBlock(kind, dim))
    if not changed:
        return program
    return ConeProgram(program.c, program.A, program.b, ConeSpec(tuple(blocks)))
