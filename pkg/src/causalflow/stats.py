"""ROC analysis, block-bootstrap significance and Gaussianity diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import rankdata
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import ConfigurationError, DataError, FitError, InsufficientResamplesError

DEFAULT_B = 2000
DEFAULT_C = 0.85
DEFAULT_ALPHA = 0.05
SKEW_LIMIT = 2.0
KURT_LIMIT = 7.0

# Hart's double-precision rational approximation of the normal tail, in the
# arrangement published by G. West (Wilmott, 2005).
_HART_NUM = (
    3.52624965998911e-02,
    0.700383064443688,
    6.37396220353165,
    33.912866078383,
    112.079291497871,
    221.213596169931,
    220.206867912376,
)
_HART_DEN = (
    8.83883476483184e-02,
    1.75566716318264,
    16.064177579207,
    86.7807322029461,
    296.564248779674,
    637.333633378831,
    793.826512519948,
    440.413735824752,
)
_HART_SPLIT = 7.07106781186547
_SQRT_2PI = 2.506628274631


def _norm_cdf_scalar(x: float) -> float:
    z = abs(x)
    if z > 37.0:
        tail = 0.0
    else:
        e = math.exp(-z * z / 2.0)
        if z < _HART_SPLIT:
            num = 0.0
            for a in _HART_NUM:
                num = num * z + a
            den = 0.0
            for b in _HART_DEN:
                den = den * z + b
            tail = e * num / den
        else:
            build = z + 0.65
            for k in (4.0, 3.0, 2.0, 1.0):
                build = z + k / build
            tail = e / build / _SQRT_2PI
    return 1.0 - tail if x > 0 else tail


def norm_cdf(x):
    """Standard normal cdf, accurate to about 1e-14 absolute.

    Relative error in the lower tail stays below 1e-8.

    Pure arithmetic with fixed constants, so results do not depend on the
    platform's special-function library.
    """
    if np.ndim(x) == 0:
        return _norm_cdf_scalar(float(x))
    arr = np.asarray(x, dtype=float)
    return np.array([_norm_cdf_scalar(v) for v in arr.ravel()]).reshape(arr.shape)


# ---------------------------------------------------------------------------
# ROC and AUC
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScoreClass:
    """Scores of one class plus free-form provenance (pair, measure, tag)."""

    scores: np.ndarray
    label: str = "positive"
    provenance: Mapping = field(default_factory=dict)

    def __post_init__(self):
        s = _check_scores(self.scores, self.label)
        object.__setattr__(self, "scores", s)


def _check_scores(scores, name="scores") -> np.ndarray:
    s = np.asarray(scores, dtype=float).ravel()
    if s.size == 0:
        raise DataError(f"{name} class is empty", operation="roc_points", parameter=name)
    if not np.all(np.isfinite(s)):
        raise DataError(f"{name} class has non-finite scores", operation="roc_points", parameter=name)
    return s


def _scores(x, name):
    return x.scores if isinstance(x, ScoreClass) else _check_scores(x, name)


@dataclass(frozen=True)
class RocCurve:
    """ROC points at ascending thresholds; both rates are nonincreasing.

    Thresholds are ``-inf``, every distinct observed score, then ``+inf``,
    so the curve runs from ``(1, 1)`` to ``(0, 0)``.
    """

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    n_pos: int
    n_neg: int
    theta: float

    def to_dict(self) -> dict:
        def enc(v):
            return [None if not np.isfinite(t) else float(t) for t in v]

        return {
            "thresholds": enc(self.thresholds),
            "fpr": self.fpr.tolist(),
            "tpr": self.tpr.tolist(),
            "theta": self.theta,
        }


def roc_points(pos, neg) -> RocCurve:
    """Empirical ROC with strict ``score > T`` decisions at every observed score."""
    p = _scores(pos, "positive")
    n = _scores(neg, "negative")
    T = np.concatenate([[-np.inf], np.unique(np.concatenate([p, n])), [np.inf]])
    ps, ns = np.sort(p), np.sort(n)
    tp = p.size - np.searchsorted(ps, T, side="right")
    fp = n.size - np.searchsorted(ns, T, side="right")
    # Integer trapezoid sum, halved once at the end.
    area2 = np.sum((fp[:-1] - fp[1:]) * (tp[:-1] + tp[1:]))
    theta = float(area2) / (2.0 * p.size * n.size)
    return RocCurve(T, fp / n.size, tp / p.size, p.size, n.size, theta)


def auc_mann_whitney(pos, neg) -> float:
    """``(#{p > n} + 0.5 #{p == n}) / (N_p N_n)`` by sorted counting."""
    p = _scores(pos, "positive")
    ns = np.sort(_scores(neg, "negative"))
    below = np.searchsorted(ns, p, side="left")
    upto = np.searchsorted(ns, p, side="right")
    wins2 = np.sum(2 * below + (upto - below))
    return float(wins2) / (2.0 * p.size * ns.size)


def auc(pos, neg):
    """``(theta_trapezoid, theta_mann_whitney)``."""
    return roc_points(pos, neg).theta, auc_mann_whitney(pos, neg)


def _auc_rows(P, Nn):
    """Mann-Whitney AUC for each row pair of ``P`` (B, n_p) and ``Nn`` (B, n_n)."""
    n_p, n_n = P.shape[1], Nn.shape[1]
    ranks = rankdata(np.concatenate([P, Nn], axis=1), axis=1)
    u = ranks[:, :n_p].sum(axis=1) - n_p * (n_p + 1) / 2.0
    return u / (n_p * n_n)


# ---------------------------------------------------------------------------
# Block bootstrap
# ---------------------------------------------------------------------------


def default_block_length(n: int) -> int:
    """``round(n ** (1/3))``, at least 1."""
    return max(1, int(round(n ** (1.0 / 3.0))))


@dataclass
class BootstrapResult:
    theta_hat: float
    theta_b: np.ndarray
    sigma: float
    block_length: int
    n_blocks: int
    n_blocks_neg: int
    B: int
    seed: int = 0

    @property
    def mean(self) -> float:
        return float(np.mean(self.theta_b))

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat,
            "theta_b": self.theta_b.tolist(),
            "sigma": self.sigma,
            "block_length": self.block_length,
            "n_blocks": self.n_blocks,
            "n_blocks_neg": self.n_blocks_neg,
            "B": self.B,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d) -> "BootstrapResult":
        return cls(
            float(d["theta_hat"]),
            np.asarray(d["theta_b"], dtype=float),
            float(d["sigma"]),
            int(d["block_length"]),
            int(d["n_blocks"]),
            int(d["n_blocks_neg"]),
            int(d["B"]),
            int(d.get("seed", 0)),
        )


def _resample(x, rng, l, m):
    starts = rng.integers(0, x.size - l + 1, size=m)
    return x[(starts[:, None] + np.arange(l)).ravel()]


def block_bootstrap(pos, neg, B: int = DEFAULT_B, seed: int = 0, block_length: int | None = None) -> BootstrapResult:
    """Moving-block bootstrap of the AUC, resampling each class separately.

    Each class of size ``N`` offers its ``N - l + 1`` overlapping blocks of
    length ``l``; ``floor(N / l)`` blocks are drawn with replacement and
    concatenated. Resample ``b`` uses the RNG stream ``(seed, b)``, so the
    result does not depend on evaluation order.
    """
    p = _scores(pos, "positive")
    n = _scores(neg, "negative")
    if B < 1:
        raise ConfigurationError("B must be >= 1", operation="block_bootstrap", parameter="B")
    l = default_block_length(p.size) if block_length is None else int(block_length)
    if l < 1 or l > p.size or l > n.size:
        raise ConfigurationError(
            f"block length {l} must lie in [1, min(N_p, N_n)] = [1, {min(p.size, n.size)}]",
            operation="block_bootstrap",
            parameter="block_length",
        )
    m_p, m_n = p.size // l, n.size // l
    P = np.empty((B, m_p * l))
    Nn = np.empty((B, m_n * l))
    for b in range(B):
        rng = np.random.default_rng([int(seed), b])
        P[b] = _resample(p, rng, l, m_p)
        Nn[b] = _resample(n, rng, l, m_n)
    theta_b = np.concatenate([_auc_rows(P[i : i + 256], Nn[i : i + 256]) for i in range(0, B, 256)])
    sigma = float(np.std(theta_b, ddof=1)) if B > 1 else math.nan
    return BootstrapResult(auc_mann_whitney(p, n), theta_b, sigma, l, m_p, m_n, int(B), int(seed))


@dataclass(frozen=True)
class SignificanceConfig:
    c: float = DEFAULT_C
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if not 0.5 <= self.c < 1:
            raise ConfigurationError("c must lie in [0.5, 1)", operation="SignificanceConfig", parameter="c")
        if not 0 < self.alpha < 1:
            raise ConfigurationError("alpha must lie in (0, 1)", operation="SignificanceConfig", parameter="alpha")


@dataclass(frozen=True)
class SignificanceResult:
    p_value: float
    reject: bool
    empirical_p: float
    z: float


def significance_test(boot: BootstrapResult, cfg: SignificanceConfig | None = None) -> SignificanceResult:
    """One-sided test of ``H0: theta <= c``.

    ``p = Phi((c - mean(theta_b)) / sigma)``; ``H0`` is rejected when
    ``p <= alpha``. With ``sigma == 0`` the p-value is 0 if the bootstrap
    mean exceeds ``c`` and 1 otherwise. The empirical share of resamples
    with ``theta_b <= c`` is reported alongside.
    """
    cfg = cfg or SignificanceConfig()
    if boot.B < 2:
        raise InsufficientResamplesError(
            f"need at least 2 resamples, got {boot.B}", operation="significance_test", parameter="B"
        )
    mean = boot.mean
    if boot.sigma > 0:
        z = (cfg.c - mean) / boot.sigma
        p = norm_cdf(z)
    else:
        z = -math.inf if mean > cfg.c else math.inf
        p = 0.0 if mean > cfg.c else 1.0
    emp = float(np.mean(boot.theta_b <= cfg.c))
    return SignificanceResult(float(p), bool(p <= cfg.alpha), emp, float(z))


class BlockBootstrapAUC(BaseEstimator):
    """AUC of positive vs negative scores with block-bootstrap significance.

    Parameters
    ----------
    n_resamples : int, default=2000
    block_length : int or None
        ``None`` uses ``round(N_p ** (1/3))``.
    seed : int, default=0
    c : float, default=0.85
        AUC value tested as the null upper bound.
    alpha : float, default=0.05

    Attributes
    ----------
    theta_ : float
    curve_ : RocCurve
    bootstrap_ : BootstrapResult
    p_value_, empirical_p_ : float
    reject_ : bool
    """

    def __init__(self, n_resamples=DEFAULT_B, block_length=None, seed=0, c=DEFAULT_C, alpha=DEFAULT_ALPHA):
        self.n_resamples = n_resamples
        self.block_length = block_length
        self.seed = seed
        self.c = c
        self.alpha = alpha

    def fit(self, pos, neg):
        cfg = SignificanceConfig(self.c, self.alpha)
        self.curve_ = roc_points(pos, neg)
        self.bootstrap_ = block_bootstrap(pos, neg, self.n_resamples, self.seed, self.block_length)
        sig = significance_test(self.bootstrap_, cfg)
        self.theta_ = self.curve_.theta
        self.theta_b_ = self.bootstrap_.theta_b
        self.sigma_ = self.bootstrap_.sigma
        self.block_length_ = self.bootstrap_.block_length
        self.n_blocks_ = self.bootstrap_.n_blocks
        self.p_value_ = sig.p_value
        self.empirical_p_ = sig.empirical_p
        self.reject_ = sig.reject
        return self

    def score(self, pos, neg) -> float:
        check_is_fitted(self, "theta_")
        return roc_points(pos, neg).theta


def connectivity_change_matrix(
    results: Mapping[tuple, BootstrapResult],
    rois: Sequence,
    cfg: SignificanceConfig | None = None,
):
    """Boolean matrix, rows are sources and columns destinations.

    Entry ``(i, j)`` is true when ``H0: theta <= c`` is rejected for the
    ordered pair ``rois[i] -> rois[j]``. Missing pairs and the diagonal are
    false. Also returns one record per available pair.
    """
    cfg = cfg or SignificanceConfig()
    index = {r: i for i, r in enumerate(rois)}
    M = np.zeros((len(rois), len(rois)), dtype=bool)
    records = []
    for (src, dst), boot in sorted(results.items(), key=lambda kv: (index[kv[0][0]], index[kv[0][1]])):
        if src == dst:
            continue
        sig = significance_test(boot, cfg)
        M[index[src], index[dst]] = sig.reject
        records.append(
            {
                "source": src,
                "dest": dst,
                "theta": boot.theta_hat,
                "p_value": sig.p_value,
                "empirical_p": sig.empirical_p,
                "significant": sig.reject,
            }
        )
    return M, records


# ---------------------------------------------------------------------------
# Gaussianity diagnostics
# ---------------------------------------------------------------------------


def skewness_kurtosis(samples):
    """``(mean, skewness, kurtosis)`` from biased central moments.

    Kurtosis is not excess kurtosis: a Gaussian gives 3.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise DataError("no samples", operation="skewness_kurtosis", parameter="samples")
    mu = float(x.mean())
    d = x - mu
    m2 = float(np.mean(d**2))
    if m2 == 0:
        return mu, math.nan, math.nan
    return mu, float(np.mean(d**3) / m2**1.5), float(np.mean(d**4) / m2**2)


def is_non_normal(skew: float, kurt: float) -> bool:
    """True when ``|skew| > 2`` or ``kurtosis > 7`` (or undefined)."""
    if not (np.isfinite(skew) and np.isfinite(kurt)):
        return True
    return abs(skew) > SKEW_LIMIT or kurt > KURT_LIMIT


def _l1_objective(params, centers, widths, density):
    mu, log_s = params
    s = math.exp(log_s)
    g = np.exp(-0.5 * ((centers - mu) / s) ** 2) / (s * math.sqrt(2 * math.pi))
    return float(np.sum(np.abs(density - g) * widths))


def l1_objective(mu: float, sigma: float, edges, counts) -> float:
    """Area-weighted L1 distance between a histogram density and a Gaussian."""
    centers, widths, density = _histogram_density(edges, counts)
    return _l1_objective((mu, math.log(sigma)), centers, widths, density)


def _histogram_density(edges, counts):
    edges = np.asarray(edges, dtype=float)
    counts = np.asarray(counts, dtype=float)
    if edges.ndim != 1 or edges.size != counts.size + 1 or np.any(np.diff(edges) <= 0):
        raise FitError("edges must be increasing with one more entry than counts", operation="l1_gaussian_fit", parameter="edges")
    if np.any(counts < 0) or counts.sum() <= 0:
        raise FitError("counts must be nonnegative with a positive total", operation="l1_gaussian_fit", parameter="counts")
    widths = np.diff(edges)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return centers, widths, counts / (counts.sum() * widths)


def l1_gaussian_fit(edges, counts, tol: float = 1e-6):
    """``(mu, sigma)`` minimizing the L1 distance to a histogram.

    Nelder-Mead over ``(mu, log sigma)`` started at the histogram's moment
    estimates. Needs at least three nonempty bins.
    """
    centers, widths, density = _histogram_density(edges, counts)
    if np.count_nonzero(counts) < 3:
        raise FitError(
            "need at least three nonempty bins for a Gaussian fit",
            operation="l1_gaussian_fit",
            parameter="counts",
        )
    w = density * widths
    mu0 = float(np.sum(w * centers))
    s0 = float(np.sqrt(np.sum(w * (centers - mu0) ** 2)))
    if not s0 > 0:
        raise FitError("histogram has zero spread", operation="l1_gaussian_fit", parameter="counts")
    res = minimize(
        _l1_objective,
        x0=[mu0, math.log(s0)],
        args=(centers, widths, density),
        method="Nelder-Mead",
        options={"xatol": tol, "fatol": tol, "maxiter": 4000},
    )
    return float(res.x[0]), float(math.exp(res.x[1]))
