"""Doubly low-rank ZIP model: links, likelihood, and analytic gradients.

The intensity and mixing links share a smoothed symmetric CP structure

    eta   = cp3_sym(alpha, w_beta),   lambda = exp(eta)   (soft-capped)
    theta = cp3_sym(alpha, w_xi),     1 - p  = sigmoid(theta)

with alpha = H gamma, H an orthonormal locus basis.  The negative
log-likelihood is the affine-shifted per-entry ZIP NLL averaged over the
upper triangle i <= j and all cells, normalizer 2 / (N (N+1) K).

Intensities are capped at LAM_CAP: the working link eta_c = min(eta, log
LAM_CAP) replaces eta in every likelihood term, which keeps exp() finite and
the objective bounded below; above the cap, eta-gradients vanish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from .basis import BasisMatrix
from .tensor_ops import (CountTensor, cp3_sym, cp3_sym_pairs, diag_frontal,
                         diag_horizontal, mode_product, pair_indices)

LAM_CAP = 50.0
ETA_CAP = math.log(LAM_CAP)
PARAM_BOX = 50.0  # box constraint on every free parameter during fitting


def softplus(x):
    return np.logaddexp(0.0, x)


def clamp_eta(eta):
    """Upper clamp at log LAM_CAP; identity below the cap."""
    return np.minimum(eta, ETA_CAP)


@dataclass
class ModelParams:
    """Free parameters plus the fixed basis; D = n_blocks * block_rank."""

    basis: BasisMatrix
    gamma: np.ndarray   # (Q, D)
    w_beta: np.ndarray  # (K, D)
    w_xi: np.ndarray    # (K, D)
    n_blocks: int = 1

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.w_beta = np.asarray(self.w_beta, dtype=float)
        self.w_xi = np.asarray(self.w_xi, dtype=float)
        q, d = self.gamma.shape
        if q != self.basis.q:
            raise ValueError("gamma rows must match basis rank Q")
        if self.w_beta.shape != self.w_xi.shape or self.w_beta.shape[1] != d:
            raise ValueError("w_beta and w_xi must be (K, D) matching gamma")
        if self.n_blocks < 1 or d % self.n_blocks:
            raise ValueError("D must be a multiple of n_blocks")

    @property
    def alpha(self) -> np.ndarray:
        return self.basis.h @ self.gamma

    @property
    def block_rank(self) -> int:
        return self.gamma.shape[1] // self.n_blocks

    @property
    def n_loci(self) -> int:
        return self.basis.n_loci

    @property
    def n_cells(self) -> int:
        return self.w_beta.shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(self.basis, self.gamma.copy(), self.w_beta.copy(),
                           self.w_xi.copy(), self.n_blocks)


@dataclass(frozen=True)
class LinkTensors:
    eta: np.ndarray    # (N, N, K)
    theta: np.ndarray  # (N, N, K)


def build_links(m: ModelParams) -> LinkTensors:
    a = m.alpha
    return LinkTensors(cp3_sym(a, m.w_beta), cp3_sym(a, m.w_xi))


def lambda_p_of(links: LinkTensors) -> tuple[np.ndarray, np.ndarray]:
    """Intensity and zero-inflation tensors implied by the links."""
    return np.exp(clamp_eta(links.eta)), expit(-links.theta)


def _normalizer(n: int, k: int) -> float:
    return 2.0 / (n * (n + 1) * k)


# ---------------------------------------------------------------------------
# per-entry kernels (shared by the dense API and the fitting fast path)
# ---------------------------------------------------------------------------

def _nll_entries(eta, theta, c):
    """Affine-shifted per-entry ZIP NLL, on the clamped link.

    zero entries:    softplus(-theta) + lambda - softplus(lambda - theta)
    nonzero entries: softplus(-theta) + lambda - c * eta_c
    """
    eta_c = clamp_eta(eta)
    lam = np.exp(eta_c)
    return softplus(-theta) + lam - np.where(c == 0, softplus(lam - theta), c * eta_c)


def _grad_entries(eta, theta, c):
    """Per-entry d/d(eta), d/d(theta) of `_nll_entries` (unnormalized)."""
    eta_c = clamp_eta(eta)
    lam = np.exp(eta_c)
    zero_post = np.where(c == 0, expit(lam - theta), 0.0)
    g_eta = np.where(eta < ETA_CAP, (1.0 - zero_post) * lam - c, 0.0)
    g_theta = zero_post - expit(-theta)
    return g_eta, g_theta


def _poisson_nll_entries(eta, c):
    eta_c = clamp_eta(eta)
    return np.exp(eta_c) - c * eta_c


def _poisson_grad_entries(eta, c):
    eta_c = clamp_eta(eta)
    return np.where(eta < ETA_CAP, np.exp(eta_c) - c, 0.0)


# ---------------------------------------------------------------------------
# dense objective and gradients
# ---------------------------------------------------------------------------

def nll(m: ModelParams, data: CountTensor, exclude_diag_band: int = 0) -> float:
    """Normalized NLL over the (band-restricted) upper triangle."""
    iu, ju = pair_indices(m.n_loci, exclude_diag_band)
    eta_u, theta_u, c_u = _pair_links(m, data, iu, ju)
    return _normalizer(m.n_loci, m.n_cells) * float(np.sum(_nll_entries(eta_u, theta_u, c_u)))


def nll_poisson(m: ModelParams, data: CountTensor, exclude_diag_band: int = 0) -> float:
    """Poisson ablation of the objective (intensity link only)."""
    iu, ju = pair_indices(m.n_loci, exclude_diag_band)
    c_u = data.upper_counts(iu, ju)
    eta_u = cp3_sym_pairs(m.alpha, m.w_beta, iu, ju)
    return _normalizer(m.n_loci, m.n_cells) * float(np.sum(_poisson_nll_entries(eta_u, c_u)))


def _pair_links(m, data, iu, ju):
    a = m.alpha
    pair = a[iu] * a[ju]
    return pair @ m.w_beta.T, pair @ m.w_xi.T, data.upper_counts(iu, ju)


def _scatter_symmetric(vals, iu, ju, n, k):
    out = np.zeros((n, n, k))
    out[iu, ju] = vals
    out[ju, iu] = vals
    return out


def grad_links(m: ModelParams, data: CountTensor,
               exclude_diag_band: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Normalized NLL gradients w.r.t. the link tensors, mirrored to be
    symmetric in modes (1, 2); band-excluded entries carry zero gradient."""
    n, k = m.n_loci, m.n_cells
    iu, ju = pair_indices(n, exclude_diag_band)
    eta_u, theta_u, c_u = _pair_links(m, data, iu, ju)
    ge, gt = _grad_entries(eta_u, theta_u, c_u)
    norm = _normalizer(n, k)
    return (_scatter_symmetric(norm * ge, iu, ju, n, k),
            _scatter_symmetric(norm * gt, iu, ju, n, k))


def grad_poisson(m: ModelParams, data: CountTensor,
                 exclude_diag_band: int = 0) -> np.ndarray:
    """Poisson-ablation gradient w.r.t. the eta tensor."""
    n, k = m.n_loci, m.n_cells
    iu, ju = pair_indices(n, exclude_diag_band)
    c_u = data.upper_counts(iu, ju)
    eta_u = cp3_sym_pairs(m.alpha, m.w_beta, iu, ju)
    g = _normalizer(n, k) * _poisson_grad_entries(eta_u, c_u)
    return _scatter_symmetric(g, iu, ju, n, k)


def grad_w(g_link: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Chain a symmetric link gradient onto a weight matrix (K, D).

    Half the full bilinear contraction plus half the frontal-diagonal
    correction; the two halves undo the double count of off-diagonal pairs
    while keeping diagonal pairs at full weight.
    """
    full = np.einsum("ijk,id,jd->kd", g_link, alpha, alpha, optimize=True)
    diag = diag_frontal(g_link).T @ (alpha * alpha)
    return 0.5 * (full + diag)


def grad_alpha(g_eta: np.ndarray, g_theta: np.ndarray,
               alpha: np.ndarray, w_beta: np.ndarray,
               w_xi: np.ndarray) -> np.ndarray:
    """Chain symmetric link gradients onto the loci embedding (N, D)."""
    out = np.zeros_like(alpha)
    for g, w in ((g_eta, w_beta), (g_theta, w_xi)):
        out += np.einsum("ijk,jd,kd->id", g, alpha, w, optimize=True)
        out += (diag_frontal(g) @ w) * alpha
    return out


def grad_gamma(m: ModelParams, g_eta: np.ndarray, g_theta: np.ndarray) -> np.ndarray:
    """Chain link gradients onto gamma (Q, D) via the mode-product assembly.

    Equals H^T grad_alpha(...); kept in the horizontal-diagonal form to keep
    the multilinear bookkeeping explicit.
    """
    h, a = m.basis.h, m.alpha
    out = np.zeros_like(m.gamma)
    for g, w in ((g_eta, m.w_beta), (g_theta, m.w_xi)):
        core = mode_product(mode_product(mode_product(g, h.T, 0), a.T, 1), w.T, 2)
        out += diag_horizontal(core)
        out += h.T @ ((diag_frontal(g) @ w) * a)
    return out


# ---------------------------------------------------------------------------
# fast pair-major path used by the optimizer
# ---------------------------------------------------------------------------

@dataclass
class PairData:
    """Upper-triangle view of a count tensor, pair-major."""

    iu: np.ndarray
    ju: np.ndarray
    c_u: np.ndarray  # (P, K)
    n_loci: int
    n_cells: int
    norm: float

    @classmethod
    def build(cls, data: CountTensor, exclude_diag_band: int = 0) -> "PairData":
        iu, ju = pair_indices(data.n_loci, exclude_diag_band)
        return cls(iu, ju, data.upper_counts(iu, ju), data.n_loci,
                   data.n_cells, _normalizer(data.n_loci, data.n_cells))


def pair_nll(alpha, w_beta, w_xi, pd: PairData) -> float:
    pair = alpha[pd.iu] * alpha[pd.ju]
    return pd.norm * float(np.sum(_nll_entries(pair @ w_beta.T, pair @ w_xi.T, pd.c_u)))


def pair_grads(alpha, w_beta, w_xi, pd: PairData):
    """Normalized per-entry gradients on the pair grid: (P, K) each."""
    pair = alpha[pd.iu] * alpha[pd.ju]
    ge, gt = _grad_entries(pair @ w_beta.T, pair @ w_xi.T, pd.c_u)
    return pd.norm * ge, pd.norm * gt


def pair_grad_w(g_u: np.ndarray, alpha: np.ndarray, pd: PairData) -> np.ndarray:
    return g_u.T @ (alpha[pd.iu] * alpha[pd.ju])


def pair_grad_alpha(ge_u, gt_u, alpha, w_beta, w_xi, pd: PairData) -> np.ndarray:
    out = np.zeros_like(alpha)
    for g_u, w in ((ge_u, w_beta), (gt_u, w_xi)):
        mw = g_u @ w  # (P, D)
        np.add.at(out, pd.iu, mw * alpha[pd.ju])
        np.add.at(out, pd.ju, mw * alpha[pd.iu])
    return out
