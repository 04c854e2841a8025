"""Synthetic data generator and evaluation metrics.

The generator lays L contiguous locus segments over a template matrix
(mu_alpha on the diagonal, mu_alpha/L off it), adds uniform noise, draws
block-constant cell weights, and samples counts C = B * Poisson(exp(eta))
with masking probability sigmoid(-Theta).  Noise widths default to mu/4 for
each scale parameter mu, which keeps true intensities inside the model's
supported range.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from .tensor_ops import CountTensor, pair_indices


@dataclass(frozen=True)
class SimConfig:
    n_loci: int
    n_cells: int
    rank: int            # L, segments / embedding dimension
    n_clusters: int = 1  # R
    mu_alpha: float = 0.5
    mu_beta: float = 5.0
    mu_xi: float = 1.0
    sigma_alpha: Optional[float] = None  # uniform noise width; default mu/4
    sigma_beta: Optional[float] = None
    sigma_xi: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if min(self.mu_alpha, self.mu_beta, self.mu_xi) <= 0:
            raise ValueError("scale parameters must be positive")
        if not (1 <= self.rank <= self.n_loci):
            raise ValueError("need 1 <= L <= N")
        if not (1 <= self.n_clusters <= self.n_cells):
            raise ValueError("need 1 <= R <= K")

    def widths(self) -> tuple[float, float, float]:
        return (self.sigma_alpha if self.sigma_alpha is not None else self.mu_alpha / 4,
                self.sigma_beta if self.sigma_beta is not None else self.mu_beta / 4,
                self.sigma_xi if self.sigma_xi is not None else self.mu_xi / 4)


@dataclass
class SimTruth:
    alpha: np.ndarray    # (N, L)
    beta: np.ndarray     # (K, L), block-constant rows
    xi: np.ndarray       # (K, L)
    lam: np.ndarray      # (N, N, K) true intensities exp(eta)
    p: np.ndarray        # (N, N, K) true masking probabilities
    b: np.ndarray        # (N, N, K) 0/1 keep mask
    latent: np.ndarray   # (N, N, K) pre-masking Poisson counts
    labels: np.ndarray   # (K,) cluster labels


def _segments(n: int, parts: int) -> np.ndarray:
    """Contiguous equal segments of size floor(n/parts); the last one takes
    the remainder.  Returns the segment label of each index."""
    size = n // parts
    lab = np.minimum(np.arange(n) // size, parts - 1)
    return lab


def simulate(cfg: SimConfig) -> tuple[CountTensor, SimTruth]:
    """Draw one synthetic dataset; bit-reproducible given cfg.

    Independent counter-seeded RNG streams per logical matrix keep the alpha
    draws invariant to changes in K.
    """
    n, k, l, r = cfg.n_loci, cfg.n_cells, cfg.rank, cfg.n_clusters
    w_alpha, w_beta, w_xi = cfg.widths()
    streams = [np.random.default_rng([cfg.seed, s]) for s in range(5)]
    rng_a, rng_b, rng_x, rng_pois, rng_mask = streams

    template = np.full((l, l), cfg.mu_alpha / l)
    np.fill_diagonal(template, cfg.mu_alpha)
    seg = _segments(n, l)
    alpha = template[seg] + rng_a.uniform(0.0, w_alpha, size=(n, l))

    labels = _segments(k, r)
    beta_bar = rng_b.uniform(cfg.mu_beta, cfg.mu_beta + w_beta, size=(r, l))
    xi_bar = rng_x.uniform(cfg.mu_xi, cfg.mu_xi + w_xi, size=(r, l))
    beta = beta_bar[labels]
    xi = xi_bar[labels]

    iu, ju = pair_indices(n)
    pair = alpha[iu] * alpha[ju]
    lam_u = np.exp(pair @ beta.T)       # (P, K), raw intensities
    p_u = expit(-(pair @ xi.T))
    latent_u = rng_pois.poisson(lam_u)
    keep_u = rng_mask.random(lam_u.shape) >= p_u
    c_u = latent_u * keep_u

    def mirror(u):
        out = np.zeros((n, n, k), dtype=u.dtype)
        out[iu, ju] = u
        out[ju, iu] = u
        return out

    pu, ku = np.nonzero(c_u)
    data = CountTensor(n, k, iu[pu], ju[pu], ku, c_u[pu, ku])
    truth = SimTruth(alpha, beta, xi, mirror(lam_u), mirror(p_u),
                     mirror(keep_u.astype(np.int64)), mirror(latent_u), labels)
    return data, truth


def false_zero_cells(truth: SimTruth) -> np.ndarray:
    """Upper-triangle (i,j,k) cells masked to zero despite a positive latent
    count -- the positive class for detection."""
    iu, ju = pair_indices(truth.lam.shape[0])
    pos = (truth.b[iu, ju] == 0) & (truth.latent[iu, ju] > 0)
    pu, k = np.nonzero(pos)
    return np.column_stack([iu[pu], ju[pu], k]).astype(np.int64)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def rel_error(estimate: np.ndarray, truth: np.ndarray) -> float:
    """Relative Frobenius error ||truth - estimate||_F / ||truth||_F."""
    denom = np.linalg.norm(truth)
    if denom == 0:
        raise ValueError("truth tensor has zero norm")
    return float(np.linalg.norm(truth - estimate) / denom)


@dataclass(frozen=True)
class DetectionMetrics:
    accuracy: float
    precision: float
    recall: float
    precision_undefined: bool = False
    recall_undefined: bool = False


def _cell_set(cells: np.ndarray) -> set:
    return set(map(tuple, np.asarray(cells, dtype=np.int64).reshape(-1, 3)))


def detection_metrics(flags: np.ndarray, positives: np.ndarray,
                      zeros: np.ndarray) -> DetectionMetrics:
    """Confusion-matrix ratios over the observed-zero cells.

    `flags` are the predicted false zeros, `positives` the true false zeros,
    `zeros` all observed-zero cells.  Undefined ratios (empty denominator)
    are reported as 1 with the corresponding flag set and a warning.
    """
    f, pos, z = _cell_set(flags), _cell_set(positives), _cell_set(zeros)
    if not f <= z or not pos <= z:
        raise ValueError("flags/positives must be subsets of the zero cells")
    tp = len(f & pos)
    fp = len(f - pos)
    fn = len(pos - f)
    tn = len(z) - tp - fp - fn
    accuracy = (tp + tn) / len(z) if z else 1.0
    p_und = len(f) == 0
    r_und = len(pos) == 0
    if p_und:
        warnings.warn("no flags: precision undefined, reported as 1")
    precision = 1.0 if p_und else tp / (tp + fp)
    recall = 1.0 if r_und else tp / (tp + fn)
    return DetectionMetrics(accuracy, precision, recall, p_und, r_und)


def pca_project(rows: np.ndarray, n_components: int = 20) -> np.ndarray:
    """Center columns and project onto the top min(n, rank) right singular
    vectors, with the largest-|loading| entry of each direction positive."""
    rows = np.asarray(rows, dtype=float)
    if rows.shape[0] < 2:
        raise ValueError("need at least two rows")
    x = rows - rows.mean(axis=0)
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    tol = max(x.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    take = min(n_components, rank)
    for c in range(take):
        lead = np.argmax(np.abs(vt[c]))
        if vt[c, lead] < 0:
            vt[c] = -vt[c]
            u[:, c] = -u[:, c]
    return u[:, :take] * s[:take]


def _kmeans_pp_centers(rows: np.ndarray, r: int, rng: np.random.Generator) -> np.ndarray:
    """kmeans++ seeding: iteratively sample points with probability
    proportional to squared distance from the chosen centers."""
    m = rows.shape[0]
    centers = [rows[rng.integers(m)]]
    for _ in range(1, r):
        d2 = np.min(((rows[:, None, :] - np.array(centers)[None]) ** 2).sum(axis=2), axis=1)
        total = d2.sum()
        if total <= 0:
            centers.append(rows[rng.integers(m)])
            continue
        centers.append(rows[rng.choice(m, p=d2 / total)])
    return np.array(centers)


def kmeans(rows: np.ndarray, r: int, seed: int, restarts: int = 10,
           max_sweeps: int = 300) -> np.ndarray:
    """Lloyd's algorithm with kmeans++ seeding; best SSE of `restarts` runs."""
    rows = np.asarray(rows, dtype=float)
    m = rows.shape[0]
    if r > m:
        raise ValueError("more clusters than rows")
    rng = np.random.default_rng(seed)
    best_labels, best_sse = None, np.inf
    for _ in range(restarts):
        centers = _kmeans_pp_centers(rows, r, rng)
        for _ in range(max_sweeps):
            d2 = ((rows[:, None, :] - centers[None]) ** 2).sum(axis=2)
            labels = np.argmin(d2, axis=1)
            new_centers = centers.copy()
            for c in range(r):
                members = labels == c
                if np.any(members):
                    new_centers[c] = rows[members].mean(axis=0)
                else:  # revive an empty cluster at the worst-served point
                    new_centers[c] = rows[np.argmax(d2[np.arange(m), labels])]
            if np.allclose(new_centers, centers):
                break
            centers = new_centers
        sse = float(((rows - centers[labels]) ** 2).sum())
        if sse < best_sse:
            best_sse, best_labels = sse, labels
    return best_labels


def ari(labels_a: np.ndarray, labels_b: np.ndarray) -> float:
    """Hubert-Arabie adjusted Rand index via the pair-counting table."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape:
        raise ValueError("labelings must have equal length")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1)

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_cells = comb2(table).sum()
    sum_rows = comb2(table.sum(axis=1)).sum()
    sum_cols = comb2(table.sum(axis=0)).sum()
    total = comb2(a.size)
    expected = sum_rows * sum_cols / total
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        return 1.0 if sum_cells == expected else 0.0
    return float((sum_cells - expected) / (max_index - expected))
