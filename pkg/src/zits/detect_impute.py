"""False-zero detection via the Bayes rule and imputation of flagged cells.

An observed zero is flagged as a false zero exactly when the fitted masking
probability beats the Poisson zero mass: p > 1/(e^lambda - 1), evaluated in
the overflow-safe form log1p(1/p) < lambda.  Ties keep the zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model_core import ModelParams, build_links, lambda_p_of
from .tensor_ops import CountTensor, pair_indices


@dataclass
class DetectionResult:
    flags: np.ndarray       # (M, 3) int array of flagged (i, j, k), i <= j
    posterior: np.ndarray   # (M,) P(false zero | C = 0) at flagged cells
    zeros_scanned: int
    zeros_flagged: int


def _zero_cells(data: CountTensor, exclude_diag_band: int):
    """Upper-triangle cells with observed count zero."""
    iu, ju = pair_indices(data.n_loci, exclude_diag_band)
    c_u = data.upper_counts(iu, ju)
    pu, k = np.nonzero(c_u == 0)
    return iu[pu], ju[pu], k


def detect(data: CountTensor, fitted: ModelParams,
           exclude_diag_band: int = 0) -> DetectionResult:
    """Bayes-optimal false-zero flags over the observed-zero cells."""
    zi, zj, zk = _zero_cells(data, exclude_diag_band)
    lam, p = lambda_p_of(build_links(fitted))
    lam_z, p_z = lam[zi, zj, zk], p[zi, zj, zk]
    with np.errstate(divide="ignore"):
        hit = np.log1p(1.0 / p_z) < lam_z
    masked = p_z[hit] * (-np.expm1(-lam_z[hit]))
    posterior = masked / (masked + np.exp(-lam_z[hit]))
    flags = np.column_stack([zi[hit], zj[hit], zk[hit]]).astype(np.int64)
    return DetectionResult(flags, posterior, int(zi.size), int(flags.shape[0]))


def expected_tensor(fitted: ModelParams) -> np.ndarray:
    """Entrywise (1 - p) * lambda implied by the fit."""
    lam, p = lambda_p_of(build_links(fitted))
    return (1.0 - p) * lam


def impute(data: CountTensor, fitted: ModelParams, flags: np.ndarray,
           mode: str = "expected") -> np.ndarray:
    """Replace flagged zeros by lambda (intensity) or lambda (1-p) (expected).

    Returns a dense real symmetric tensor; unflagged cells keep their
    observed counts and structural zeros stay zero.
    """
    if mode not in ("intensity", "expected"):
        raise ValueError(f"unknown imputation mode {mode!r}")
    flags = np.asarray(flags, dtype=np.int64).reshape(-1, 3)
    out = data.to_dense()
    if flags.size == 0:
        return out
    fi, fj, fk = flags.T
    if np.any(out[fi, fj, fk] != 0):
        raise ValueError("flag at a cell with a nonzero observed count")
    lam, p = lambda_p_of(build_links(fitted))
    fill = lam[fi, fj, fk]
    if mode == "expected":
        fill = fill * (1.0 - p[fi, fj, fk])
    out[fi, fj, fk] = fill
    out[fj, fi, fk] = fill
    return out
