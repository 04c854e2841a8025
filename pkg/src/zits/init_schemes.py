"""Method-of-moments preprocessing and the six initialization schemes.

Per locus pair, counts across cells are treated as iid ZIP draws; inverting
the first two moments gives starting values lambda0, p0 and hence link
matrices eta0, theta0.  Six schemes then factor those matrices into a shared
embedding alpha (N x D) and weight vectors b0, x0 (length D).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .model_core import LAM_CAP
from .tensor_ops import CountTensor

LAM_FLOOR = 1e-3
P_FLOOR = 1e-3

SCHEMES = ("random", "cp", "cpavg", "eigenb", "eigenx", "eigenbx")


@dataclass(frozen=True)
class MomentInit:
    lambda0: np.ndarray  # (N, N)
    p0: np.ndarray       # (N, N)
    eta0: np.ndarray
    theta0: np.ndarray
    clamp_report: int    # number of clamped cells


def moments_init(data: CountTensor) -> MomentInit:
    """Per-pair moment inversion: lambda0 = (v+m^2)/m - 1, p0 = (v-m)/(v+m^2-m).

    Degenerate or out-of-range pairs are clamped into
    [LAM_FLOOR, LAM_CAP] x [P_FLOOR, 1 - P_FLOOR]; the number of clamped
    cells is reported, never hidden.  All-zero pairs get maximal masking
    (lambda0 = floor, p0 = 1 - floor).
    """
    if data.n_cells < 2:
        raise ValueError("need K >= 2 cells for moment estimation")
    dense = data.to_dense()
    m = dense.mean(axis=2)
    v = dense.var(axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam0 = (v + m * m) / m - 1.0
        p0 = (v - m) / (v + m * m - m)
    allzero = m == 0
    lam0 = np.where(allzero, LAM_FLOOR, lam0)
    p0 = np.where(allzero, 1.0 - P_FLOOR, p0)

    lam_c = np.clip(lam0, LAM_FLOOR, LAM_CAP)
    p_c = np.clip(p0, P_FLOOR, 1.0 - P_FLOOR)
    clamped = int(np.sum((lam_c != lam0) | (p_c != p0)))
    return MomentInit(lam_c, p_c, np.log(lam_c), np.log((1.0 - p_c) / p_c), clamped)


def diag_weight_regression(m0: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Least-squares w minimizing ||M - alpha diag(w) alpha^T||_F.

    Normal equations have Gram matrix G[d,e] = (alpha_d . alpha_e)^2 and
    right side alpha_d^T M alpha_d; singular G handled by pseudo-inverse.
    """
    gram = (alpha.T @ alpha) ** 2
    rhs = np.einsum("id,ij,jd->d", alpha, m0, alpha)
    return np.linalg.pinv(gram) @ rhs


def _leading_eigs(m0: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-d eigenpairs of a symmetric matrix, ordered by |eigenvalue|."""
    vals, vecs = np.linalg.eigh(m0)
    order = np.argsort(-np.abs(vals))[:d]
    vecs = vecs[:, order]
    # deterministic signs, same convention as the basis columns
    for c in range(vecs.shape[1]):
        lead = np.argmax(np.abs(vecs[:, c]))
        if vecs[lead, c] < 0:
            vecs[:, c] = -vecs[:, c]
    return vecs, vals[order]


def _cp_als_two_slice(eta0: np.ndarray, theta0: np.ndarray, d: int,
                      rng: np.random.Generator,
                      max_sweeps: int = 200, tol: float = 1e-8):
    """Unconstrained rank-d CP-ALS on the N x N x 2 stack of the two links.

    Returns (a1, a2, w) with stack[:, :, s] ~ sum_d a1_d a2_d^T w[s, d].
    """
    t = np.stack([eta0, theta0], axis=2)
    n = eta0.shape[0]
    a1 = rng.uniform(-0.5, 0.5, size=(n, d))
    a2 = rng.uniform(-0.5, 0.5, size=(n, d))
    w = rng.uniform(-0.5, 0.5, size=(2, d))
    t1 = t.reshape(n, -1)                      # mode-1 unfolding (C order)
    t2 = t.transpose(1, 0, 2).reshape(n, -1)   # mode-2
    t3 = t.transpose(2, 0, 1).reshape(2, -1)   # mode-3
    normt = np.linalg.norm(t)
    prev_fit = np.inf
    for sweep in range(max_sweeps):
        kr = (a2[:, None, :] * w[None, :, :]).reshape(-1, d)
        a1 = t1 @ kr @ np.linalg.pinv((a2.T @ a2) * (w.T @ w))
        kr = (a1[:, None, :] * w[None, :, :]).reshape(-1, d)
        a2 = t2 @ kr @ np.linalg.pinv((a1.T @ a1) * (w.T @ w))
        kr = (a1[:, None, :] * a2[None, :, :]).reshape(-1, d)
        w = t3 @ kr @ np.linalg.pinv((a1.T @ a1) * (a2.T @ a2))
        recon = np.einsum("id,jd,sd->ijs", a1, a2, w)
        fit = np.linalg.norm(t - recon) / max(normt, 1e-300)
        if abs(prev_fit - fit) < tol:
            return a1, a2, w
        prev_fit = fit
    warnings.warn("two-slice CP-ALS hit the sweep limit; returning best iterate")
    return a1, a2, w


def init_scheme(kind: str, mi: MomentInit, d: int,
                seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One of the six (alpha, b0, x0) initializations from the moment links.

    Only `random`, `cp`, and `cpavg` consume the seed; the eigen schemes are
    deterministic in the moment matrices.
    """
    if kind not in SCHEMES:
        raise ValueError(f"unknown scheme {kind!r}; choose from {SCHEMES}")
    n = mi.eta0.shape[0]
    if d > n:
        raise ValueError("embedding dimension D cannot exceed N")

    if kind == "random":
        rng = np.random.default_rng(seed)
        return (rng.uniform(-0.5, 0.5, size=(n, d)),
                rng.uniform(-0.5, 0.5, size=d),
                rng.uniform(-0.5, 0.5, size=d))

    if kind in ("cp", "cpavg"):
        rng = np.random.default_rng(seed)
        a1, a2, w = _cp_als_two_slice(mi.eta0, mi.theta0, d, rng)
        alpha = a1 if kind == "cp" else 0.5 * (a1 + a2)
        return alpha, w[0].copy(), w[1].copy()

    if kind == "eigenb":
        alpha, b0 = _leading_eigs(mi.eta0, d)
        return alpha, b0, diag_weight_regression(mi.theta0, alpha)

    if kind == "eigenx":
        alpha, x0 = _leading_eigs(mi.theta0, d)
        return alpha, diag_weight_regression(mi.eta0, alpha), x0

    # eigenbx: common subspace of both eigenbases via SVD of the concatenation
    ab, _ = _leading_eigs(mi.eta0, d)
    ax, _ = _leading_eigs(mi.theta0, d)
    u, _, _ = np.linalg.svd(np.concatenate([ab, ax], axis=1), full_matrices=False)
    alpha = u[:, :d]
    for c in range(d):
        lead = np.argmax(np.abs(alpha[:, c]))
        if alpha[lead, c] < 0:
            alpha[:, c] = -alpha[:, c]
    return (alpha,
            diag_weight_regression(mi.eta0, alpha),
            diag_weight_regression(mi.theta0, alpha))


def lift_weights(b0: np.ndarray, x0: np.ndarray,
                 n_cells: int) -> tuple[np.ndarray, np.ndarray]:
    """Repeat the per-cluster weight vectors across all cells: W = 1_K b0^T."""
    return np.tile(b0, (n_cells, 1)), np.tile(x0, (n_cells, 1))


def multi_cluster_init(data: CountTensor, d: int, r: int, scheme: str, seed: int):
    """Per-cluster initialization behind an initial k-means partition.

    Returns (alpha: N x r*d, w_beta: K x r*d, w_xi: K x r*d, labels).  Cells
    are first partitioned by k-means on the top-20 PCs of their vectorized
    upper-triangular slices; each cluster then runs moments_init +
    init_scheme on its own sub-tensor, and its (b0, x0) fill that cluster's
    column block for its member cells only.
    """
    from .sim_eval import kmeans, pca_project  # circular-at-import otherwise

    k = data.n_cells
    if k < r:
        raise ValueError("fewer cells than requested clusters")
    if r == 1:
        mi = moments_init(data)
        alpha, b0, x0 = init_scheme(scheme, mi, d, seed)
        w_beta, w_xi = lift_weights(b0, x0, k)
        return alpha, w_beta, w_xi, np.zeros(k, dtype=np.int64)

    iu, ju = np.triu_indices(data.n_loci)
    feats = pca_project(data.upper_counts(iu, ju).T)
    labels = None
    for attempt in range(5):
        cand = kmeans(feats, r, seed + attempt)
        if np.all(np.bincount(cand, minlength=r) > 1):
            labels = cand
            break
    if labels is None:
        raise RuntimeError("k-means produced a degenerate cluster 5 times")

    alpha_blocks = []
    w_beta = np.zeros((k, r * d))
    w_xi = np.zeros((k, r * d))
    for c in range(r):
        members = np.flatnonzero(labels == c)
        keep = np.isin(data.k, members)
        remap = np.zeros(k, dtype=np.int64)
        remap[members] = np.arange(members.size)
        sub = CountTensor(data.n_loci, members.size, data.i[keep],
                          data.j[keep], remap[data.k[keep]], data.c[keep])
        mi = moments_init(sub)
        a_c, b0, x0 = init_scheme(scheme, mi, d, seed + 1000 * (c + 1))
        alpha_blocks.append(a_c)
        w_beta[members, c * d:(c + 1) * d] = b0
        w_xi[members, c * d:(c + 1) * d] = x0
    return np.concatenate(alpha_blocks, axis=1), w_beta, w_xi, labels
