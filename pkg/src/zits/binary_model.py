"""Bernoulli (binary adjacency) variant with the same smoothed CP structure.

Edge probabilities are q = sigmoid(Theta) with Theta = cp3_sym(H gamma, w_xi);
there is no intensity link.  The NLL convention is used throughout, so the
per-entry link gradient is sigmoid(theta) - c.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .basis import BasisMatrix
from .model_core import softplus
from .tensor_ops import CountTensor, cp3_sym_pairs, pair_indices


@dataclass
class BinaryParams:
    basis: BasisMatrix
    gamma: np.ndarray  # (Q, D)
    w_xi: np.ndarray   # (K, D)

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.w_xi = np.asarray(self.w_xi, dtype=float)
        if self.gamma.shape[0] != self.basis.q or self.gamma.shape[1] != self.w_xi.shape[1]:
            raise ValueError("gamma must be (Q, D) matching basis and w_xi")

    @property
    def alpha(self) -> np.ndarray:
        return self.basis.h @ self.gamma


def _check_binary(c_u: np.ndarray, binarize: bool) -> np.ndarray:
    if binarize:
        return (c_u > 0).astype(float)
    if np.any(c_u > 1):
        raise ValueError("non-binary counts; pass binarize=True to threshold them")
    return c_u


def _binary_nll_entries(theta, c):
    return softplus(theta) - c * theta


def _binary_grad_entries(theta, c):
    return expit(theta) - c


def nll_binary(bp: BinaryParams, data: CountTensor, binarize: bool = False,
               exclude_diag_band: int = 0) -> float:
    """Normalized Bernoulli NLL, 2/(N(N+1)K) * sum_{i<=j,k} softplus(theta) - c theta."""
    n, k = bp.basis.n_loci, bp.w_xi.shape[0]
    iu, ju = pair_indices(n, exclude_diag_band)
    c_u = _check_binary(data.upper_counts(iu, ju), binarize)
    theta_u = cp3_sym_pairs(bp.alpha, bp.w_xi, iu, ju)
    return 2.0 / (n * (n + 1) * k) * float(np.sum(_binary_nll_entries(theta_u, c_u)))


def grad_binary(bp: BinaryParams, data: CountTensor, binarize: bool = False,
                exclude_diag_band: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Analytic (dGamma, dXi) of nll_binary, assembled from the per-entry
    gradient sigmoid(theta) - c over the upper triangle."""
    n, k = bp.basis.n_loci, bp.w_xi.shape[0]
    iu, ju = pair_indices(n, exclude_diag_band)
    c_u = _check_binary(data.upper_counts(iu, ju), binarize)
    alpha = bp.alpha
    pair = alpha[iu] * alpha[ju]
    gt = 2.0 / (n * (n + 1) * k) * _binary_grad_entries(pair @ bp.w_xi.T, c_u)
    d_xi = gt.T @ pair
    d_alpha = np.zeros_like(alpha)
    mw = gt @ bp.w_xi
    np.add.at(d_alpha, iu, mw * alpha[ju])
    np.add.at(d_alpha, ju, mw * alpha[iu])
    return bp.basis.h.T @ d_alpha, d_xi
