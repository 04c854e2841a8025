"""Orthonormal smoothing bases over the locus grid.

Loci sit on the grid t_i = (i + 1) / N, i = 0..N-1, of the unit interval.
A basis is an N x Q column-orthonormal matrix H obtained by QR-factorizing a
raw design matrix (clamped B-splines or a Fourier family) evaluated on the
grid, with a deterministic per-column sign convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

KINDS = ("cubic_bspline", "fourier")


@dataclass(frozen=True)
class BasisMatrix:
    kind: str
    h: np.ndarray  # (N, Q), orthonormal columns

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}")
        h = np.asarray(self.h, dtype=float)
        object.__setattr__(self, "h", h)
        if h.ndim != 2 or h.shape[0] < h.shape[1]:
            raise ValueError("basis must be N x Q with Q <= N")
        if not np.allclose(h.T @ h, np.eye(h.shape[1]), atol=1e-10):
            raise ValueError("basis columns are not orthonormal")

    @property
    def n_loci(self) -> int:
        return self.h.shape[0]

    @property
    def q(self) -> int:
        return self.h.shape[1]


def locus_grid(n: int) -> np.ndarray:
    return (np.arange(n) + 1.0) / n


def _bspline_design(x: np.ndarray, q: int) -> np.ndarray:
    degree = min(3, q - 1)
    n_interior = q - degree - 1
    interior = np.linspace(0.0, 1.0, n_interior + 2)[1:-1]
    knots = np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])
    # design_matrix drops support at the right endpoint unless extrapolating;
    # nudge x = 1 inside the last knot span instead.
    xe = np.minimum(x, 1.0 - 1e-12)
    return BSpline.design_matrix(xe, knots, degree).toarray()


def _fourier_design(x: np.ndarray, q: int) -> np.ndarray:
    cols = [np.ones_like(x)]
    freq = 1
    while len(cols) < q:
        cols.append(np.cos(2.0 * np.pi * freq * x))
        if len(cols) < q:
            cols.append(np.sin(2.0 * np.pi * freq * x))
        freq += 1
    return np.column_stack(cols)


def _orthonormalize(b: np.ndarray) -> np.ndarray:
    h, r = np.linalg.qr(b, mode="reduced")
    # deterministic signs: largest-magnitude entry of each column positive
    for d in range(h.shape[1]):
        lead = np.argmax(np.abs(h[:, d]))
        if h[lead, d] < 0:
            h[:, d] = -h[:, d]
    return h


def build_basis(n: int, q: int, kind: str = "cubic_bspline") -> BasisMatrix:
    """Orthonormal N x Q basis on the locus grid.

    Column order follows the raw design (knot order for splines, increasing
    frequency for Fourier); QR preserves the nesting of leading column spans.
    """
    if not 1 <= q <= n:
        raise ValueError(f"need 1 <= Q <= N, got Q={q}, N={n}")
    x = locus_grid(n)
    if kind == "cubic_bspline":
        b = _bspline_design(x, q)
    elif kind == "fourier":
        b = _fourier_design(x, q)
    else:
        raise ValueError(f"unknown basis kind {kind!r}")
    return BasisMatrix(kind, _orthonormalize(b))
