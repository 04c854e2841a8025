"""Sparse symmetric count tensors and the small multilinear-algebra toolbox.

A count tensor holds pairwise counts over N loci and K cells.  Only the upper
triangle (i <= j) of each frontal slice is stored, as COO-style index arrays;
the tensor is symmetric in its first two modes by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class CountTensor:
    """Symmetric-in-(1,2) nonnegative integer tensor, upper-triangle COO.

    Entries are stored in canonical (i, j, k) lexicographic order with
    i <= j and strictly positive counts; absent entries are zero.
    """

    n_loci: int
    n_cells: int
    i: np.ndarray
    j: np.ndarray
    k: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        i = np.asarray(self.i, dtype=np.int64)
        j = np.asarray(self.j, dtype=np.int64)
        k = np.asarray(self.k, dtype=np.int64)
        c = np.asarray(self.c, dtype=np.int64)
        if not (i.shape == j.shape == k.shape == c.shape) or i.ndim != 1:
            raise ValueError("index/count arrays must be 1-d and equally long")
        if i.size:
            if i.min() < 0 or j.max() >= self.n_loci or k.min() < 0 or k.max() >= self.n_cells:
                raise ValueError("entry index out of bounds")
            if np.any(i > j):
                raise ValueError("entries must satisfy i <= j (upper triangle)")
            if np.any(c <= 0):
                raise ValueError("stored counts must be strictly positive")
        order = np.lexsort((k, j, i))
        i, j, k, c = i[order], j[order], k[order], c[order]
        if i.size > 1:
            dup = (np.diff(i) == 0) & (np.diff(j) == 0) & (np.diff(k) == 0)
            if np.any(dup):
                raise ValueError("duplicate (i, j, k) entry")
        for name, val in (("i", i), ("j", j), ("k", k), ("c", c)):
            object.__setattr__(self, name, val)

    @property
    def nnz(self) -> int:
        return int(self.i.size)

    def to_dense(self) -> np.ndarray:
        """Full symmetric (N, N, K) array."""
        t = np.zeros((self.n_loci, self.n_loci, self.n_cells))
        t[self.i, self.j, self.k] = self.c
        t[self.j, self.i, self.k] = self.c
        return t

    @classmethod
    def from_dense(cls, t: np.ndarray, check_symmetry: bool = True) -> "CountTensor":
        t = np.asarray(t)
        if t.ndim != 3 or t.shape[0] != t.shape[1]:
            raise ValueError("expected an (N, N, K) array")
        if check_symmetry and not np.array_equal(t, t.transpose(1, 0, 2)):
            raise ValueError("tensor is not symmetric in modes 1, 2")
        i, j, k = np.nonzero(np.triu(np.ones(t.shape[:2], dtype=bool))[:, :, None] & (t != 0))
        return cls(t.shape[0], t.shape[2], i, j, k, t[i, j, k])

    def upper_counts(self, iu: np.ndarray, ju: np.ndarray) -> np.ndarray:
        """Dense (P, K) matrix of counts at the given upper-triangle pairs."""
        n = self.n_loci
        pair_pos = np.full(n * n, -1, dtype=np.int64)
        pair_pos[iu * n + ju] = np.arange(iu.size)
        out = np.zeros((iu.size, self.n_cells))
        pos = pair_pos[self.i * n + self.j]
        keep = pos >= 0
        out[pos[keep], self.k[keep]] = self.c[keep]
        return out


def pair_indices(n: int, exclude_diag_band: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Upper-triangle pair indices (i <= j), optionally dropping |i - j| < band.

    Band 0 keeps everything including the diagonal; band 1 drops only the
    diagonal; band b drops all pairs closer than b to the diagonal.
    """
    iu, ju = np.triu_indices(n)
    if exclude_diag_band > 0:
        keep = (ju - iu) >= exclude_diag_band
        iu, ju = iu[keep], ju[keep]
    return iu, ju


def mode_product(t: np.ndarray, m: np.ndarray, mode: int) -> np.ndarray:
    """Mode-`mode` product: contract axis `mode` of t against the columns of m.

    Result axis `mode` has length m.shape[0].  An identity matrix returns an
    exact copy of the input.
    """
    t = np.asarray(t)
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[1] != t.shape[mode]:
        raise ValueError("matrix columns must match tensor axis length")
    if m.shape[0] == m.shape[1] and np.array_equal(m, np.eye(m.shape[0])):
        return t.copy()
    return np.moveaxis(np.tensordot(m, t, axes=(1, mode)), 0, mode)


def cp3_sym(alpha: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Symmetric CP-3 reconstruction: out[i,j,k] = sum_d alpha[i,d] alpha[j,d] w[k,d]."""
    alpha = np.asarray(alpha)
    w = np.asarray(w)
    if alpha.ndim != 2 or w.ndim != 2 or alpha.shape[1] != w.shape[1]:
        raise ValueError("alpha (N,D) and w (K,D) must share the rank dimension")
    return np.einsum("id,jd,kd->ijk", alpha, alpha, w, optimize=True)


def cp3_sym_pairs(alpha: np.ndarray, w: np.ndarray,
                  iu: np.ndarray, ju: np.ndarray) -> np.ndarray:
    """cp3_sym restricted to upper-triangle pairs: (P, K) matrix."""
    return (alpha[iu] * alpha[ju]) @ w.T


def khatri_rao_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise Khatri-Rao product: out[r] = kron(a[r], b[r])."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[0] != b.shape[0]:
        raise ValueError("row counts must match")
    return (a[:, :, None] * b[:, None, :]).reshape(a.shape[0], -1)


def diag_frontal(t: np.ndarray) -> np.ndarray:
    """Frontal diagonals of an (N, N, K) tensor: out[i, k] = t[i, i, k]."""
    t = np.asarray(t)
    if t.ndim != 3 or t.shape[0] != t.shape[1]:
        raise ValueError("expected an (N, N, K) tensor")
    return np.einsum("iik->ik", t)


def diag_horizontal(t: np.ndarray) -> np.ndarray:
    """Horizontal-slice diagonals of a (Q, D, D) tensor: out[q, d] = t[q, d, d]."""
    t = np.asarray(t)
    if t.ndim != 3 or t.shape[1] != t.shape[2]:
        raise ValueError("expected a (Q, D, D) tensor")
    return np.einsum("qdd->qd", t)
