"""Closed-form information measures for jointly Gaussian processes.

Every measure is half a sum of log-determinant ratios of prefix covariance
submatrices. Notation in the docstrings: ``|C(X^a Y^b Z^c)|`` is the
determinant of the covariance of ``X_1..X_a, Y_1..Y_b, Z_1..Z_c``. All
values are in nats and summed over ``n = 1..N``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .ensemble import (
    DEFAULT_RIDGE,
    PrefixCovariance,
    WindowEnsemble,
    estimate_joint_covariance,
    log_det_psd,
    select_submatrix,
)
from .exceptions import ConfigurationError, NumericalError

logger = logging.getLogger(__name__)

NEG_TOL = 1e-8
CLAMP_WARN_FRACTION = 0.01
LOG_2PI_E = math.log(2.0 * math.pi * math.e)


class MeasureKind(str, Enum):
    CBI = "cbi"
    MASSEY = "massey"
    KAMITAKE = "kamitake"
    SUM_TE = "sum_te"
    CAUSAL_MI = "causal_mi"
    CONDITIONAL_MI = "conditional_mi"

    @classmethod
    def parse(cls, value) -> "MeasureKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        if key in _ALIASES:
            return _ALIASES[key]
        raise ConfigurationError(
            f"unknown measure {value!r}; choose from {[m.value for m in cls]}",
            operation="MeasureKind.parse",
            parameter="measure",
        )


_ALIASES = {m.value: m for m in MeasureKind}
_ALIASES.update(
    {
        "masseydi_cc": MeasureKind.MASSEY,
        "di1": MeasureKind.MASSEY,
        "kamitakedi_cc": MeasureKind.KAMITAKE,
        "di2": MeasureKind.KAMITAKE,
        "sumte_cc": MeasureKind.SUM_TE,
        "te": MeasureKind.SUM_TE,
        "causalmi_cc": MeasureKind.CAUSAL_MI,
        "conditionalmi": MeasureKind.CONDITIONAL_MI,
    }
)

# Kamitake's full-block selectors make it the most expensive; run it last.
EVALUATION_ORDER = (
    MeasureKind.CBI,
    MeasureKind.MASSEY,
    MeasureKind.SUM_TE,
    MeasureKind.CONDITIONAL_MI,
    MeasureKind.CAUSAL_MI,
    MeasureKind.KAMITAKE,
)


class LogDetCache:
    """Memoized log-determinants of the prefix submatrices of one covariance."""

    def __init__(self, pc: PrefixCovariance):
        self.pc = pc
        self._store = {}

    def __call__(self, selector, n=None) -> float:
        key = tuple(int(s) for s in selector)
        if key not in self._store:
            try:
                self._store[key] = log_det_psd(select_submatrix(self.pc, key))
            except NumericalError as exc:
                where = f" at n={n}" if n is not None else ""
                raise NumericalError(
                    f"submatrix {key}{where} is not positive definite",
                    pivot=exc.pivot,
                    operation="log_det",
                    parameter=f"selector={key}",
                ) from exc
        return self._store[key]


def _cache_for(pc, cache):
    if cache is None or cache.pc is not pc:
        return LogDetCache(pc)
    return cache


def _z(pc, n):
    # Z block enters as its strict past Z^{n-1}; absent Z gives empty selectors.
    return n if pc.has_z else 0


def _checked(value, name):
    if value < -NEG_TOL:
        raise NumericalError(
            f"{name} evaluated to {value:.3e} < -{NEG_TOL:g}",
            operation=name,
            parameter="value",
        )
    return value


def gaussian_entropy(C) -> float:
    """Differential entropy ``0.5 * log((2 pi e)^n |C|)`` in nats."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = 0 if C.size == 0 else C.shape[0]
    return 0.5 * (n * LOG_2PI_E + log_det_psd(C))


def cbi_rate(pc: PrefixCovariance, cache: LogDetCache | None = None) -> float:
    """Causal bidirectional information between X and Y given the past of Z.

    ``1/2 sum_n log |C(X^{n-1}Y^{n-1}Z^{n-1})| |C(X^n Z^{n-1})| |C(Y^n Z^{n-1})|
    / (|C(X^n Y^n Z^{n-1})| |C(X^{n-1}Z^{n-1})| |C(Y^{n-1}Z^{n-1})|)``.
    Symmetric in X and Y.
    """
    ld = _cache_for(pc, cache)
    total = 0.0
    for n in range(1, pc.N + 1):
        z = _z(pc, n - 1)
        total += (
            ld((n - 1, n - 1, z), n)
            + ld((n, 0, z), n)
            + ld((0, n, z), n)
            - ld((n, n, z), n)
            - ld((n - 1, 0, z), n)
            - ld((0, n - 1, z), n)
        )
    return _checked(0.5 * total, "cbi_rate")


def massey_rate(pc: PrefixCovariance, cache: LogDetCache | None = None) -> float:
    """Massey directed information X -> Y causally conditioned on Z.

    ``1/2 sum_n log |C(Y^n Z^{n-1})| |C(X^n Y^{n-1} Z^{n-1})|
    / (|C(Y^{n-1} Z^{n-1})| |C(X^n Y^n Z^{n-1})|)``
    """
    ld = _cache_for(pc, cache)
    total = 0.0
    for n in range(1, pc.N + 1):
        z = _z(pc, n - 1)
        total += ld((0, n, z), n) + ld((n, n - 1, z), n) - ld((0, n - 1, z), n) - ld((n, n, z), n)
    return _checked(0.5 * total, "massey_rate")


def kamitake_rate(pc: PrefixCovariance, cache: LogDetCache | None = None) -> float:
    """Kamitake directed information X -> Y causally conditioned on Z.

    Uses the whole Y block ``Y^N`` in two of the four determinants, so it is
    directional but not causal.
    """
    ld = _cache_for(pc, cache)
    N = pc.N
    total = 0.0
    for n in range(1, N + 1):
        z = _z(pc, n - 1)
        total += ld((n - 1, N, z), n) + ld((n, n, z), n) - ld((n - 1, n, z), n) - ld((n, N, z), n)
    return _checked(0.5 * total, "kamitake_rate")


def sum_te_rate(pc: PrefixCovariance, cache: LogDetCache | None = None) -> float:
    """Sum transfer entropy from the past of X to Y, causally conditioned on Z.

    ``1/2 sum_n log |C(Y^n Z^{n-1})| |C(Y^{n-1} X^{n-1} Z^{n-1})|
    / (|C(Y^{n-1} Z^{n-1})| |C(Y^n X^{n-1} Z^{n-1})|)``
    """
    ld = _cache_for(pc, cache)
    total = 0.0
    for n in range(1, pc.N + 1):
        z = _z(pc, n - 1)
        total += (
            ld((0, n, z), n)
            + ld((n - 1, n - 1, z), n)
            - ld((0, n - 1, z), n)
            - ld((n - 1, n, z), n)
        )
    return _checked(0.5 * total, "sum_te_rate")


def causal_mi_rate(pc: PrefixCovariance, cache: LogDetCache | None = None) -> float:
    """Causally conditioned mutual information ``sum_n I(X^N; Y_n | Y^{n-1} Z^{n-1})``."""
    ld = _cache_for(pc, cache)
    N = pc.N
    total = 0.0
    for n in range(1, N + 1):
        z = _z(pc, n - 1)
        total += ld((0, n, z), n) + ld((N, n - 1, z), n) - ld((0, n - 1, z), n) - ld((N, n, z), n)
    return _checked(0.5 * total, "causal_mi_rate")


def causal_mi_dual_rate(pc: PrefixCovariance, cache: LogDetCache | None = None) -> float:
    """Mirrored expansion ``sum_n I(X_n; Y^N | X^{n-1} Z^{n-1})``."""
    ld = _cache_for(pc, cache)
    N = pc.N
    total = 0.0
    for n in range(1, N + 1):
        z = _z(pc, n - 1)
        total += ld((n, 0, z), n) + ld((n - 1, N, z), n) - ld((n, N, z), n) - ld((n - 1, 0, z), n)
    return _checked(0.5 * total, "causal_mi_dual_rate")


def conditional_mi_rate(pc: PrefixCovariance, cache: LogDetCache | None = None) -> float:
    """``I(X^N; Y^N | Z^{N-1})`` with the whole Z past as conditioning."""
    ld = _cache_for(pc, cache)
    N = pc.N
    z = _z(pc, N - 1)
    total = ld((N, 0, z)) + ld((0, N, z)) - ld((N, N, z)) - ld((0, 0, z))
    return _checked(0.5 * total, "conditional_mi_rate")


def instantaneous_exchange_rate(pc: PrefixCovariance, cache: LogDetCache | None = None) -> float:
    """``sum_n I(X_n; Y_n | X^{n-1} Y^{n-1} Z^{n-1})``, the gap between Massey DI and sum TE."""
    ld = _cache_for(pc, cache)
    total = 0.0
    for n in range(1, pc.N + 1):
        z = _z(pc, n - 1)
        total += ld((n, n - 1, z), n) + ld((n - 1, n, z), n) - ld((n, n, z), n) - ld((n - 1, n - 1, z), n)
    return _checked(0.5 * total, "instantaneous_exchange_rate")


def mutual_information_rate(pc: PrefixCovariance, cache: LogDetCache | None = None) -> float:
    """Plain ``I(X^N; Y^N)``, ignoring Z."""
    ld = _cache_for(pc, cache)
    N = pc.N
    return _checked(0.5 * (ld((N, 0, 0)) + ld((0, N, 0)) - ld((N, N, 0))), "mutual_information_rate")


MEASURES = {
    MeasureKind.CBI: cbi_rate,
    MeasureKind.MASSEY: massey_rate,
    MeasureKind.KAMITAKE: kamitake_rate,
    MeasureKind.SUM_TE: sum_te_rate,
    MeasureKind.CAUSAL_MI: causal_mi_rate,
    MeasureKind.CONDITIONAL_MI: conditional_mi_rate,
}


def measure_rate(pc: PrefixCovariance, kind, cache: LogDetCache | None = None) -> float:
    return MEASURES[MeasureKind.parse(kind)](pc, cache)


def evaluate_measures(pc: PrefixCovariance, kinds) -> dict:
    """All requested measures on one covariance, sharing log-determinants."""
    kinds = [MeasureKind.parse(k) for k in kinds]
    cache = LogDetCache(pc)
    ordered = [k for k in EVALUATION_ORDER if k in kinds]
    return {k: MEASURES[k](pc, cache) for k in ordered}


GAUSSIAN_IDENTITIES = (
    "massey_kamitake_exchange",
    "causal_mi_decomposition",
    "massey_te_decomposition",
    "cbi_decomposition",
    "cbi_symmetry",
)


def random_prefix_covariance(rng, N: int, dim_z: int = 0, conditioning: float = 1.0) -> PrefixCovariance:
    """Random positive definite covariance with one X, one Y and ``dim_z`` Z variables."""
    layout = [("X", 0), ("Y", 1)] + [("Z", 2 + i) for i in range(dim_z)]
    dim = len(layout) * N
    A = rng.standard_normal((dim, dim))
    C = A @ A.T / dim + conditioning * np.eye(dim)
    return PrefixCovariance((C + C.T) / 2, layout, N)


def identity_residuals_gaussian(pc: PrefixCovariance) -> dict:
    """Relative residual of each identity relating the Gaussian measures.

    Each side is evaluated from its own log-determinant expression, and
    residuals are scaled by ``max(1, |lhs|, |rhs|)``.
    """
    rev = pc.swap_xy()
    di1_xy, di1_yx = massey_rate(pc), massey_rate(rev)
    di2_xy, di2_yx = kamitake_rate(pc), kamitake_rate(rev)
    te_xy, te_yx = sum_te_rate(pc), sum_te_rate(rev)
    cbi_xy, cbi_yx = cbi_rate(pc), cbi_rate(rev)

    def rel(a, b):
        return (a - b) / max(1.0, abs(a), abs(b))

    return {
        "massey_kamitake_exchange": rel(di2_yx + di1_xy, di2_xy + di1_yx),
        "causal_mi_decomposition": rel(causal_mi_rate(pc), di1_xy + di2_yx),
        "massey_te_decomposition": rel(di1_xy, te_xy + instantaneous_exchange_rate(pc)),
        "cbi_decomposition": rel(cbi_xy, di1_xy + te_yx),
        "cbi_symmetry": max(abs(rel(cbi_xy, cbi_yx)), abs(rel(cbi_xy, di1_yx + te_xy))),
    }


def random_gaussian_identity_suite(n_covariances=100, seed=0, max_N=6, max_dim_z=3) -> dict:
    """Maximum absolute relative residual per identity over random covariances."""
    rng = np.random.default_rng(seed)
    report = {name: 0.0 for name in GAUSSIAN_IDENTITIES}
    for _ in range(n_covariances):
        N = int(rng.integers(1, max_N + 1))
        dim_z = int(rng.integers(0, max_dim_z + 1))
        pc = random_prefix_covariance(rng, N, dim_z)
        for name, r in identity_residuals_gaussian(pc).items():
            report[name] = max(report[name], abs(r))
    return {"n_covariances": int(n_covariances), "max_abs_residual": report}


def clamp(value: float, tol: float = NEG_TOL):
    """Clamp round-off negatives to zero; returns ``(value, was_clamped)``."""
    if value < 0.0:
        if value < -tol:
            raise NumericalError(
                f"rate {value:.3e} below -{tol:g}", operation="clamp", parameter="value"
            )
        return 0.0, True
    return value, False


# ---------------------------------------------------------------------------
# Rate vectors over sliding windows
# ---------------------------------------------------------------------------


@dataclass
class RateVector:
    """Per-window information rates for one measure, ROI pair and tag."""

    values: np.ndarray
    measure: MeasureKind
    direction: tuple
    tag: object
    window_times_ms: np.ndarray = None
    n_clamped: int = 0
    per_sample: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise NumericalError(
                "rate vector contains non-finite values",
                operation="RateVector",
                parameter="values",
            )
        if self.window_times_ms is None:
            self.window_times_ms = np.zeros(len(self.values))
        self.window_times_ms = np.asarray(self.window_times_ms, dtype=float)

    def __len__(self):
        return len(self.values)


def rate_vectors_over_windows(
    ensembles: Mapping[object, Sequence[WindowEnsemble]],
    pair,
    kinds,
    *,
    ridge: float = DEFAULT_RIDGE,
    per_sample: bool = False,
    window_times_ms: Mapping[object, Sequence[float]] | None = None,
    clamp_tol: float = NEG_TOL,
) -> list:
    """One :class:`RateVector` per (measure, tag) for a fixed ROI pair.

    ``ensembles`` maps a tag to its window ensembles in window order.
    """
    kinds = [MeasureKind.parse(k) for k in kinds]
    out = []
    total = clamped = 0
    for tag, seq in ensembles.items():
        cols = {k: [] for k in kinds}
        counts = {k: 0 for k in kinds}
        for ens in seq:
            pc = estimate_joint_covariance(ens, ridge)
            for k, v in evaluate_measures(pc, kinds).items():
                v, was = clamp(v, clamp_tol)
                counts[k] += was
                if per_sample:
                    v /= pc.N
                cols[k].append(v)
        times = None if window_times_ms is None else window_times_ms[tag]
        for k in kinds:
            out.append(
                RateVector(
                    values=np.asarray(cols[k]),
                    measure=k,
                    direction=tuple(pair),
                    tag=tag,
                    window_times_ms=times,
                    n_clamped=counts[k],
                    per_sample=per_sample,
                )
            )
            total += len(cols[k])
            clamped += counts[k]
    if total and clamped / total > CLAMP_WARN_FRACTION:
        warnings.warn(
            f"{clamped} of {total} rates were clamped at zero",
            RuntimeWarning,
            stacklevel=2,
        )
    return out


class InformationRateTransformer(TransformerMixin, BaseEstimator):
    """Map window ensembles to information rates, one column per measure.

    Parameters
    ----------
    measures : sequence of str, default=("cbi", "massey", "sum_te", "kamitake")
    ridge : float, default=1e-9
    per_sample : bool, default=False
        Divide each window total by the window length.
    clamp_tol : float, default=1e-8
        Negative round-off down to ``-clamp_tol`` is clamped to zero.

    Attributes
    ----------
    measures_ : tuple of MeasureKind
    n_clamped_ : int
        Clamped values in the most recent :meth:`transform` call.
    """

    def __init__(
        self,
        measures=("cbi", "massey", "sum_te", "kamitake"),
        ridge=DEFAULT_RIDGE,
        per_sample=False,
        clamp_tol=NEG_TOL,
    ):
        self.measures = measures
        self.ridge = ridge
        self.per_sample = per_sample
        self.clamp_tol = clamp_tol

    def fit(self, X=None, y=None):
        self.measures_ = tuple(MeasureKind.parse(m) for m in self.measures)
        if not self.measures_:
            raise ConfigurationError(
                "no measures requested", operation="fit", parameter="measures"
            )
        return self

    def transform(self, X):
        check_is_fitted(self, "measures_")
        ensembles = list(X)
        out = np.empty((len(ensembles), len(self.measures_)))
        n_clamped = 0
        for i, item in enumerate(ensembles):
            pc = item if isinstance(item, PrefixCovariance) else estimate_joint_covariance(item, self.ridge)
            values = evaluate_measures(pc, self.measures_)
            for j, kind in enumerate(self.measures_):
                v, was = clamp(values[kind], self.clamp_tol)
                n_clamped += was
                out[i, j] = v / pc.N if self.per_sample else v
        self.n_clamped_ = n_clamped
        return out

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "measures_")
        return np.asarray([m.value for m in self.measures_], dtype=object)
