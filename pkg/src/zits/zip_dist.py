"""Zero-inflated Poisson distribution layer.

Parameterization: an observed count is C = B * C~ with B ~ Bernoulli(1 - p)
(B = 0 masks the draw to zero) and C~ ~ Poisson(lambda) independent.  So

    P(C = 0) = p + (1 - p) e^{-lambda}
    P(C = c) = (1 - p) lambda^c e^{-lambda} / c!,   c >= 1.

The hurdle form carries the zero mass pi0 explicitly with the same positive
part; a hurdle is ZIP-representable only when pi0 >= e^{-lambda}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlogy

LAM_MIN = 1e-9
LAM_MAX = 50.0


class NonRepresentable(ValueError):
    """Hurdle parameters with no ZIP counterpart (pi0 < e^{-lambda})."""


@dataclass(frozen=True)
class ZipParams:
    p: float
    lam: float

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"p must lie in [0, 1), got {self.p}")
        if not LAM_MIN <= self.lam <= LAM_MAX:
            raise ValueError(f"lambda must lie in [{LAM_MIN}, {LAM_MAX}], got {self.lam}")


@dataclass(frozen=True)
class HurdleParams:
    pi0: float
    lam: float

    def __post_init__(self):
        if not 0.0 < self.pi0 < 1.0:
            raise ValueError(f"pi0 must lie in (0, 1), got {self.pi0}")
        if not LAM_MIN <= self.lam <= LAM_MAX:
            raise ValueError(f"lambda must lie in [{LAM_MIN}, {LAM_MAX}], got {self.lam}")


# ---------------------------------------------------------------------------
# pmf, sampling, moments
# ---------------------------------------------------------------------------

def zip_pmf(params: ZipParams, c) -> np.ndarray:
    """Probability mass at integer counts c (vectorized)."""
    c = np.asarray(c)
    p, lam = params.p, params.lam
    log_pois = xlogy(c, lam) - lam - gammaln(c + 1.0)
    out = (1.0 - p) * np.exp(log_pois)
    out = np.where(c == 0, p + out, out)
    return np.where(c < 0, 0.0, out)


def zip_logpmf(params: ZipParams, c) -> np.ndarray:
    """Log probability mass at integer counts c, stable in the far tail."""
    c = np.asarray(c)
    p, lam = params.p, params.lam
    log_pois = xlogy(c, lam) - lam - gammaln(c + 1.0)
    with np.errstate(divide="ignore"):
        out = np.log1p(-p) + log_pois
        out = np.where(c == 0, np.log(p + (1.0 - p) * math.exp(-lam)), out)
    return np.where(c < 0, -np.inf, out)


def zip_sample(params: ZipParams, size, rng: np.random.Generator) -> np.ndarray:
    """Draw counts C = B * Poisson(lambda), B ~ Bernoulli(1 - p)."""
    keep = rng.random(size) >= params.p
    return np.where(keep, rng.poisson(params.lam, size=size), 0)


def zip_mean(params: ZipParams) -> float:
    return (1.0 - params.p) * params.lam


def zip_var(params: ZipParams) -> float:
    p, lam = params.p, params.lam
    return lam * (1.0 - p) * (p * lam + 1.0)


def truncation_point(lam_max: float) -> int:
    """Series truncation with negligible (<< 1e-12) tail mass."""
    return int(math.ceil(lam_max + 40.0 * math.sqrt(lam_max) + 40.0))


# ---------------------------------------------------------------------------
# hurdle conversions
# ---------------------------------------------------------------------------

def zip_to_hurdle(params: ZipParams) -> HurdleParams:
    p, lam = params.p, params.lam
    return HurdleParams(p + (1.0 - p) * math.exp(-lam), lam)


def hurdle_to_zip(params: HurdleParams) -> ZipParams:
    pi0, lam = params.pi0, params.lam
    e = math.exp(-lam)
    if pi0 < e:
        raise NonRepresentable(f"pi0={pi0} < e^-lambda={e}: no ZIP counterpart")
    return ZipParams((pi0 - e) / (1.0 - e), lam)


# ---------------------------------------------------------------------------
# divergences
# ---------------------------------------------------------------------------

def kl_bernoulli(p: float, q: float) -> float:
    """KL(Bern(p) || Bern(q))."""
    if not (0.0 <= p <= 1.0 and 0.0 < q < 1.0):
        raise ValueError("need p in [0,1], q in (0,1)")
    return float(xlogy(p, p / q) + xlogy(1.0 - p, (1.0 - p) / (1.0 - q)))


def kl_poisson(lam: float, lam2: float) -> float:
    """KL(Poisson(lam) || Poisson(lam2))."""
    return lam2 - lam + float(xlogy(lam, lam / lam2))


def _log_expm1(x: float) -> float:
    """log(e^x - 1), stable for large x."""
    if x > 30.0:
        return x + math.log1p(-math.exp(-x))
    return math.log(math.expm1(x))


def kl_hurdle(a: HurdleParams, b: HurdleParams) -> float:
    """KL between hurdle-Poisson laws (zero mass + truncated-Poisson tail)."""
    lam, lam2 = a.lam, b.lam
    tail = lam / (-math.expm1(-lam)) * math.log(lam / lam2) + _log_expm1(lam2) - _log_expm1(lam)
    return kl_bernoulli(a.pi0, b.pi0) + (1.0 - a.pi0) * tail


def kl_zip(a: ZipParams, b: ZipParams) -> float:
    """KL between ZIP laws via a truncated series over the support."""
    cs = np.arange(truncation_point(max(a.lam, b.lam)) + 1)
    pa = zip_pmf(a, cs)
    # log pmfs keep the far tail finite where pmf values underflow to 0.0
    with np.errstate(invalid="ignore"):
        terms = pa * (zip_logpmf(a, cs) - zip_logpmf(b, cs))
    return float(np.sum(np.where(pa == 0.0, 0.0, terms)))


def hellinger_sq_zip(a: ZipParams, b: ZipParams) -> float:
    """Squared Hellinger distance between ZIP laws, in closed form."""
    p, lam = a.p, a.lam
    q, mu = b.p, b.lam
    pz = p + (1.0 - p) * math.exp(-lam)
    qz = q + (1.0 - q) * math.exp(-mu)
    return (2.0
            - 2.0 * math.sqrt((1.0 - p) * (1.0 - q))
            * math.exp(-0.5 * (math.sqrt(lam) - math.sqrt(mu)) ** 2)
            + 2.0 * math.sqrt((1.0 - p) * math.exp(-lam) * (1.0 - q) * math.exp(-mu))
            - 2.0 * math.sqrt(pz * qz))


# ---------------------------------------------------------------------------
# Orlicz norms and moment-generating-function bound
# ---------------------------------------------------------------------------

def orlicz_psi1_poisson(lam: float) -> float:
    """psi_1 Orlicz norm of a Poisson(lam) variable."""
    return 1.0 / math.log1p(math.log(2.0) / lam)


def orlicz_psi1_zip(params: ZipParams) -> float:
    """psi_1 Orlicz norm of a ZIP variable; strictly below the Poisson norm."""
    p, lam = params.p, params.lam
    return 1.0 / math.log1p(math.log((2.0 - p) / (1.0 - p)) / lam)


def zip_mgf_centered(params: ZipParams, t: float) -> float:
    """E exp(t (C - E C)), exact closed form."""
    p, lam = params.p, params.lam
    return ((1.0 - p) * math.exp(p * lam * t + lam * (math.exp(t) - t - 1.0))
            + p * math.exp(-(1.0 - p) * lam * t))


def mgf_quadratic_bound(params: ZipParams, t: float) -> float:
    """Bernstein-style upper bound for log E exp(t (C - E C)).

    Valid on |t| < 1 / max(1, lambda).  The denominator uses |t| (the
    standard sub-exponential form): the signed-denominator variant is
    numerically false for negative t near the domain boundary (e.g.
    p=0.2, lam=30, t=-0.033) while the |t| form holds on both signs.
    """
    p, lam = params.p, params.lam
    m = max(1.0, lam)
    if abs(t) * m >= 1.0:
        raise ValueError("bound requires |t| < 1/max(1, lambda)")
    return lam * (1.0 + p * (1.0 - p) * lam) * t * t / (1.0 - m * abs(t))


def bernstein_tail_bound(params: ZipParams, n: int, margin: float) -> float:
    """Concentration bound for P(mean of n iid ZIP draws >= mean + margin)."""
    p, lam = params.p, params.lam
    v = n * lam * (1.0 + p * (1.0 - p) * lam)
    return math.exp(-(n * margin) ** 2 / (2.0 * (v + n * margin * max(1.0, lam))))


# ---------------------------------------------------------------------------
# Bayes false-zero classification
# ---------------------------------------------------------------------------

def posterior_false_zero(p: float, lam: float) -> float:
    """P(latent count positive | observed zero)."""
    masked = p * (-math.expm1(-lam))
    return masked / (masked + math.exp(-lam))


def bayes_flag(p: float, lam: float) -> bool:
    """Bayes-optimal decision at an observed zero; ties resolve to True zero.

    Flags (returns True) exactly when p > 1/(e^lambda - 1), evaluated in the
    overflow-safe form log1p(1/p) < lambda.
    """
    if p <= 0.0:
        return False
    return math.log1p(1.0 / p) < lam


def excess_risk(p: float, lam: float, decision: str) -> float:
    """Extra misclassification risk of `decision` over the Bayes rule.

    decision is "false_zero" (flag) or "true_zero" (keep).
    """
    if decision not in ("false_zero", "true_zero"):
        raise ValueError(f"unknown decision {decision!r}")
    chose_flag = decision == "false_zero"
    if chose_flag == bayes_flag(p, lam):
        return 0.0
    masked = p * (-math.expm1(-lam))
    true0 = math.exp(-lam)
    return abs(masked - true0) / (masked + true0)
