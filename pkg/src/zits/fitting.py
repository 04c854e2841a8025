"""Alternating block gradient descent with Armijo backtracking, plus the
block-structured cluster extraction applied to fitted weight matrices.

One iteration updates gamma, then w_beta, then w_xi, each by a projected
gradient step whose length comes from backtracking line search.  The NLL
trace is non-increasing by construction.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .basis import build_basis
from .binary_model import _binary_grad_entries, _binary_nll_entries
from .init_schemes import multi_cluster_init
from .model_core import (PARAM_BOX, ModelParams, PairData, _grad_entries,
                         _nll_entries)
from .tensor_ops import CountTensor, khatri_rao_rows

GAMMA_BOX = PARAM_BOX
STALL_STEP = 1e-14
STATIONARY_TOL = 1e-12


@dataclass
class FitConfig:
    max_iters: int = 500
    rel_tol: float = 1e-4
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    init_step: float = 1.0
    beta_max: float = 50.0
    xi_max: float = 50.0
    seed: int = 0
    exclude_diag_band: int = 0

    def __post_init__(self):
        if min(self.max_iters, self.rel_tol, self.armijo_c1, self.backtrack,
               self.init_step, self.beta_max, self.xi_max) <= 0:
            raise ValueError("config values must be positive")
        if self.rel_tol >= 1.0:
            raise ValueError("rel_tol must be below 1")


@dataclass
class FitReport:
    nll_trace: list[float] = field(default_factory=list)
    rel_change_trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    stalled: bool = False
    final_steps: dict[str, float] = field(default_factory=dict)
    wall_time_s: float = 0.0


@dataclass
class ClusterSolution:
    z: np.ndarray         # (K, R) one-hot
    beta_bar: np.ndarray  # (R, L)
    xi_bar: np.ndarray    # (R, L)
    objective: float

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.z, axis=1)


class _Objective:
    """NLL and block gradients on the pair grid for one model family."""

    def __init__(self, pd: PairData, h: np.ndarray, model: str):
        if model not in ("zip", "binary"):
            raise ValueError(f"unknown model {model!r}")
        self.pd = pd
        self.h = h
        self.model = model
        if model == "binary" and np.any(pd.c_u > 1):
            raise ValueError("binary model requires 0/1 counts; binarize first")
        self.blocks = ("gamma", "w_xi") if model == "binary" else ("gamma", "w_beta", "w_xi")

    def pair_of(self, gamma):
        a = self.h @ gamma
        return a, a[self.pd.iu] * a[self.pd.ju]

    def value(self, pair, w_beta, w_xi):
        if self.model == "binary":
            terms = _binary_nll_entries(pair @ w_xi.T, self.pd.c_u)
        else:
            terms = _nll_entries(pair @ w_beta.T, pair @ w_xi.T, self.pd.c_u)
        return self.pd.norm * float(np.sum(terms))

    def entry_grads(self, pair, w_beta, w_xi):
        if self.model == "binary":
            gt = _binary_grad_entries(pair @ w_xi.T, self.pd.c_u)
            return None, self.pd.norm * gt
        ge, gt = _grad_entries(pair @ w_beta.T, pair @ w_xi.T, self.pd.c_u)
        return self.pd.norm * ge, self.pd.norm * gt

    def grad_block(self, block, alpha, pair, w_beta, w_xi):
        ge, gt = self.entry_grads(pair, w_beta, w_xi)
        if block == "w_beta":
            return ge.T @ pair
        if block == "w_xi":
            return gt.T @ pair
        da = np.zeros_like(alpha)
        pairs = ((gt, w_xi),) if self.model == "binary" else ((ge, w_beta), (gt, w_xi))
        for g_u, w in pairs:
            mw = g_u @ w
            np.add.at(da, self.pd.iu, mw * alpha[self.pd.ju])
            np.add.at(da, self.pd.ju, mw * alpha[self.pd.iu])
        return self.h.T @ da


def _normalize_gauge(m: ModelParams) -> None:
    """Unit-norm gamma columns with compensating quadratic weight rescale."""
    norms = np.linalg.norm(m.gamma, axis=0)
    for d, s in enumerate(norms):
        if s > 0:
            m.gamma[:, d] /= s
            m.w_beta[:, d] *= s * s
            m.w_xi[:, d] *= s * s


def fit(data: CountTensor, init: ModelParams, cfg: FitConfig,
        model: str = "zip") -> tuple[ModelParams, FitReport]:
    """Cyclic projected-gradient descent with per-block Armijo line search.

    Stops when the largest of the per-block relative Frobenius changes drops
    below cfg.rel_tol, when every block stalls at machine step, or at
    cfg.max_iters.  Each block reuses its last accepted step (capped at 1)
    as the next initial trial.
    """
    t0 = time.perf_counter()
    if init.n_loci != data.n_loci or init.n_cells != data.n_cells:
        raise ValueError("init dimensions do not match the data")
    pd = PairData.build(data, cfg.exclude_diag_band)
    obj = _Objective(pd, init.basis.h, model)
    m = init.copy()
    # Canonicalize the init gauge so that gauge-equivalent starting points
    # (gamma column scaled by s, weight columns by 1/s^2) follow the same
    # optimization trajectory.
    _normalize_gauge(m)
    _balance_columns(m.gamma, m.w_beta, m.w_xi, min(cfg.beta_max, cfg.xi_max))

    boxes = {"gamma": GAMMA_BOX, "w_beta": cfg.beta_max, "w_xi": cfg.xi_max}
    for name in boxes:
        np.clip(getattr(m, name), -boxes[name], boxes[name], out=getattr(m, name))

    alpha, pair = obj.pair_of(m.gamma)
    f_cur = obj.value(pair, m.w_beta, m.w_xi)
    if not np.isfinite(f_cur):
        raise ValueError("non-finite NLL at the initial point")

    report = FitReport(nll_trace=[f_cur])
    steps = {b: cfg.init_step for b in obj.blocks}

    for it in range(cfg.max_iters):
        rel_changes = []
        n_stalled = 0
        grad_inf = 0.0
        for block in obj.blocks:
            g = obj.grad_block(block, alpha, pair, m.w_beta, m.w_xi)
            grad_inf = max(grad_inf, float(np.max(np.abs(g))))
            if np.max(np.abs(g)) < STATIONARY_TOL:
                rel_changes.append(0.0)
                continue
            x = getattr(m, block)
            t = min(steps[block], 1.0)
            accepted = False
            while t >= STALL_STEP:
                cand = np.clip(x - t * g, -boxes[block], boxes[block])
                if block == "gamma":
                    alpha_c, pair_c = obj.pair_of(cand)
                    f_new = obj.value(pair_c, m.w_beta, m.w_xi)
                else:
                    wb = cand if block == "w_beta" else m.w_beta
                    wx = cand if block == "w_xi" else m.w_xi
                    f_new = obj.value(pair, wb, wx)
                if np.isfinite(f_new) and \
                        f_new <= f_cur + cfg.armijo_c1 * float(np.sum(g * (cand - x))):
                    accepted = True
                    break
                t *= cfg.backtrack
            if not accepted:
                n_stalled += 1
                rel_changes.append(0.0)
                continue
            steps[block] = t
            prev_norm = np.linalg.norm(x)
            delta = np.linalg.norm(cand - x)
            rel_changes.append(delta / prev_norm if prev_norm > 0 else delta)
            setattr(m, block, cand)
            if block == "gamma":
                alpha, pair = alpha_c, pair_c
            f_cur = f_new

        report.nll_trace.append(f_cur)
        report.rel_change_trace.append(max(rel_changes))
        report.iterations = it + 1
        if grad_inf < STATIONARY_TOL:
            report.converged = True
            break
        if n_stalled == len(obj.blocks):
            report.stalled = True
            report.converged = True
            break
        if max(rel_changes) < cfg.rel_tol:
            report.converged = True
            break

    report.final_steps = dict(steps)
    _normalize_gauge(m)
    report.wall_time_s = time.perf_counter() - t0
    return m, report


# ---------------------------------------------------------------------------
# block-structured cluster extraction
# ---------------------------------------------------------------------------

def _block_costs(w: np.ndarray, means: np.ndarray, r: int, l: int) -> np.ndarray:
    """cost[k, c]: squared distance from row k to the block-sparse target of
    cluster c (zeros outside block c, means[c] inside)."""
    k = w.shape[0]
    total = np.sum(w * w, axis=1, keepdims=True)  # (K, 1)
    blocks = w.reshape(k, r, l)
    in_block = np.sum(blocks * blocks, axis=2)    # (K, R)
    to_mean = np.sum((blocks - means[None, :, :]) ** 2, axis=2)
    return total - in_block + to_mean


def _lloyd_blocks(wb, wx, r, l, labels, max_sweeps=100):
    k = wb.shape[0]
    for _ in range(max_sweeps):
        z = np.zeros((k, r))
        z[np.arange(k), labels] = 1.0
        counts = z.sum(axis=0)
        if np.any(counts == 0):
            return None
        bmeans = (z.T @ wb.reshape(k, r * l)).reshape(r, r, l)[np.arange(r), np.arange(r)] \
            / counts[:, None]
        xmeans = (z.T @ wx.reshape(k, r * l)).reshape(r, r, l)[np.arange(r), np.arange(r)] \
            / counts[:, None]
        costs = _block_costs(wb, bmeans, r, l) + _block_costs(wx, xmeans, r, l)
        new_labels = np.argmin(costs, axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    j = float(np.sum(costs[np.arange(k), labels]))
    return labels, bmeans, xmeans, j


def extract_clusters(w_beta: np.ndarray, w_xi: np.ndarray, r: int, l: int,
                     seed: int, restarts: int = 10) -> ClusterSolution:
    """Minimize J(Z, beta_bar, xi_bar) = ||w_beta - KR(Z, Z beta_bar)||^2 +
    ||w_xi - KR(Z, Z xi_bar)||^2 by Lloyd-style alternation.

    The target row for a cell in cluster c is its cluster's mean block
    embedded at column block c and zero elsewhere, so cluster labels are
    pinned to column blocks.  Best of `restarts` kmeans++-seeded runs wins.
    """
    from .sim_eval import _kmeans_pp_centers

    k, d = w_beta.shape
    if d != r * l:
        raise ValueError("weight columns must equal n_clusters * block_rank")
    v = np.concatenate([w_beta, w_xi], axis=1)
    rng = np.random.default_rng(seed)
    best = None
    done = 0
    attempts = 0
    while done < restarts and attempts < 20 * restarts:
        attempts += 1
        centers = _kmeans_pp_centers(v, r, rng)
        labels = np.argmin(
            ((v[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2), axis=1)
        if np.unique(labels).size < r:
            continue  # degenerate seeding; re-seed this restart
        out = _lloyd_blocks(w_beta, w_xi, r, l, labels)
        if out is None:
            continue
        done += 1
        if best is None or out[3] < best[3]:
            best = out
    if best is None:
        raise RuntimeError("cluster extraction failed to seed non-degenerate starts")
    labels, bmeans, xmeans, j = best

    # Cluster identity is pinned to the column block a cluster occupies, so
    # no relabeling is possible without changing J; labels come out canonical.
    z = np.zeros((k, r))
    z[np.arange(k), labels] = 1.0
    # J is exactly the residual to the row-wise Khatri-Rao reconstruction
    j_check = (np.sum((w_beta - khatri_rao_rows(z, z @ bmeans)) ** 2)
               + np.sum((w_xi - khatri_rao_rows(z, z @ xmeans)) ** 2))
    return ClusterSolution(z, bmeans, xmeans, j_check)


def _balance_columns(gamma, w_beta, w_xi, w_max):
    """Use the column scaling gauge to pull oversized weights inside the box.

    Scaling (gamma_d, w_d) -> (f gamma_d, w_d / f^2) leaves the links
    unchanged; applied only where a weight column would otherwise be clipped.
    """
    for d in range(gamma.shape[1]):
        m = max(np.max(np.abs(w_beta[:, d])), np.max(np.abs(w_xi[:, d])))
        if m > w_max:
            f = np.sqrt(m / w_max)
            gamma[:, d] *= f
            w_beta[:, d] /= f * f
            w_xi[:, d] /= f * f


def fit_pipeline(data: CountTensor, r: int, l: int, q: int, scheme: str,
                 cfg: FitConfig, model: str = "zip",
                 basis_kind: str = "cubic_bspline"):
    """basis -> init -> fit -> cluster extraction, end to end."""
    basis = build_basis(data.n_loci, q, basis_kind)
    alpha0, w_beta0, w_xi0, _ = multi_cluster_init(data, l, r, scheme, cfg.seed)
    gamma0 = basis.h.T @ alpha0
    _balance_columns(gamma0, w_beta0, w_xi0, min(cfg.beta_max, cfg.xi_max))
    init = ModelParams(basis, gamma0, w_beta0, w_xi0, n_blocks=r)
    fitted, report = fit(data, init, cfg, model=model)
    clusters = extract_clusters(fitted.w_beta, fitted.w_xi, r, l, cfg.seed)
    return fitted, clusters, report
