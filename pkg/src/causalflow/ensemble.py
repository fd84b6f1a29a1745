"""Grouped multichannel recordings, windowing, pooling and prefix covariances.

All Gaussian information measures in :mod:`causalflow.gaussian` consume a
single joint covariance matrix over every variable and every time index of
a window. The row layout is fixed: variable ``v`` at (zero-based) time ``t``
occupies row ``t * n_vars + v``. A *prefix selector* ``(n_x, n_y, n_z)``
picks ``X_1..X_{n_x}``, ``Y_1..Y_{n_y}`` and the whole Z block at times
``1..n_z``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from collections.abc import Sequence as _SequenceABC
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.linalg import lapack
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import (
    ConfigurationError,
    DataError,
    EstimationError,
    NumericalError,
)

logger = logging.getLogger(__name__)

ROLES = ("X", "Y", "Z")
AGGREGATIONS = ("per-electrode-realization", "roi-mean")
DEFAULT_RIDGE = 1e-9


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrialRecording:
    """One multichannel trial with a categorical tag per sample."""

    channels: np.ndarray
    sample_rate: float
    labels: np.ndarray
    channel_names: tuple

    def __post_init__(self):
        channels = np.asarray(self.channels, dtype=float)
        if channels.ndim != 2:
            raise DataError(
                "channels must be a 2-D array (n_channels, n_samples)",
                operation="TrialRecording",
                parameter="channels",
            )
        if not self.sample_rate > 0:
            raise DataError(
                f"sample_rate must be positive, got {self.sample_rate}",
                operation="TrialRecording",
                parameter="sample_rate",
            )
        labels = np.asarray(self.labels)
        if labels.shape != (channels.shape[1],):
            raise DataError(
                "exactly one tag per sample is required",
                operation="TrialRecording",
                parameter="labels",
            )
        names = tuple(str(n) for n in self.channel_names)
        if len(names) != channels.shape[0]:
            raise DataError(
                f"{len(names)} channel names for {channels.shape[0]} channels",
                operation="TrialRecording",
                parameter="channel_names",
            )
        if len(set(names)) != len(names):
            raise DataError(
                "channel names must be unique",
                operation="TrialRecording",
                parameter="channel_names",
            )
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "channel_names", names)

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    def segments(self):
        """Contiguous runs of equal tag as ``(tag, start, stop)`` triples."""
        return _label_runs(self.labels)


def _label_runs(labels):
    labels = np.asarray(labels)
    if labels.size == 0:
        return []
    change = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    starts = np.concatenate([[0], change])
    stops = np.concatenate([change, [labels.size]])
    return [(labels[s].item(), int(s), int(e)) for s, e in zip(starts, stops)]


class TrialSequence(_SequenceABC):
    """Read-only sequence that builds each trial on access.

    Keeps memory flat when trials are processed one at a time.
    """

    def __init__(self, loader, n: int):
        self._loader = loader
        self._n = int(n)

    def __len__(self):
        return self._n

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(self._n))]
        if i < 0:
            i += self._n
        if not 0 <= i < self._n:
            raise IndexError(i)
        return self._loader(i)


@dataclass(frozen=True)
class RoiGrouping:
    """Assignment of channel names to region-of-interest ids."""

    roi_of_channel: Mapping[str, int]

    def __post_init__(self):
        mapping = {str(k): int(v) for k, v in dict(self.roi_of_channel).items()}
        if len(set(mapping.values())) < 3:
            raise ConfigurationError(
                "at least three ROIs are needed (X, Y and a non-empty Z)",
                operation="RoiGrouping",
                parameter="roi_of_channel",
            )
        object.__setattr__(self, "roi_of_channel", mapping)

    @property
    def rois(self) -> tuple:
        return tuple(sorted(set(self.roi_of_channel.values())))

    def channels_of(self, roi: int) -> tuple:
        return tuple(c for c, r in self.roi_of_channel.items() if r == roi)

    def min_electrodes(self) -> int:
        return min(len(self.channels_of(r)) for r in self.rois)

    @classmethod
    def identity(cls, channel_names: Sequence[str]):
        """One ROI per channel, ids ``1..n`` in the given order."""
        return cls({name: i + 1 for i, name in enumerate(channel_names)})


@dataclass(frozen=True)
class GroupedRecording:
    """A recording reorganized as ``roi -> (n_realizations, n_samples)``."""

    data: Mapping[int, np.ndarray]
    labels: np.ndarray
    sample_rate: float
    aggregation: str
    electrode_names: Mapping[int, tuple] = field(default_factory=dict)

    @property
    def rois(self) -> tuple:
        return tuple(sorted(self.data))

    @property
    def n_samples(self) -> int:
        return len(self.labels)

    def segments(self):
        return _label_runs(self.labels)

    def roi_mean(self, roi: int) -> np.ndarray:
        return self.data[roi].mean(axis=0)


@dataclass(frozen=True)
class Window:
    """Window ``k`` inside one tag segment; ``[start, stop)`` in samples."""

    tag: object
    segment: int
    k: int
    start: int
    stop: int
    offset: int  # samples from segment onset to window start


@dataclass(frozen=True)
class WindowEnsemble:
    """Aligned realizations of grouped processes over one window."""

    sections: np.ndarray
    var_layout: tuple

    def __post_init__(self):
        sections = np.asarray(self.sections, dtype=float)
        if sections.ndim != 3:
            raise DataError(
                "sections must be (n_sections, n_vars, N)",
                operation="WindowEnsemble",
                parameter="sections",
            )
        layout = tuple((str(role), int(roi)) for role, roi in self.var_layout)
        _check_layout(layout, operation="WindowEnsemble")
        if len(layout) != sections.shape[1]:
            raise DataError(
                f"layout has {len(layout)} variables, sections have {sections.shape[1]}",
                operation="WindowEnsemble",
                parameter="var_layout",
            )
        if sections.shape[0] < 1:
            raise DataError(
                "an ensemble needs at least one section",
                operation="WindowEnsemble",
                parameter="sections",
            )
        object.__setattr__(self, "sections", sections)
        object.__setattr__(self, "var_layout", layout)

    @property
    def n_sections(self) -> int:
        return self.sections.shape[0]

    @property
    def n_vars(self) -> int:
        return self.sections.shape[1]

    @property
    def N(self) -> int:
        return self.sections.shape[2]

    def stacked(self) -> np.ndarray:
        """Sections flattened to ``(n_sections, N * n_vars)`` in row layout."""
        return self.sections.transpose(0, 2, 1).reshape(self.n_sections, -1)


def _check_layout(layout, operation):
    roles = [role for role, _ in layout]
    for role in roles:
        if role not in ROLES:
            raise DataError(
                f"unknown role {role!r}", operation=operation, parameter="var_layout"
            )
    if roles.count("X") != 1 or roles.count("Y") != 1:
        raise DataError(
            "exactly one X and one Y variable are required",
            operation=operation,
            parameter="var_layout",
        )


@dataclass(frozen=True)
class PrefixCovariance:
    """Joint covariance over all variables and times of a window."""

    C: np.ndarray
    var_layout: tuple
    N: int
    ridge: float = 0.0

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float)
        layout = tuple((str(role), int(roi)) for role, roi in self.var_layout)
        _check_layout(layout, operation="PrefixCovariance")
        dim = len(layout) * int(self.N)
        if C.shape != (dim, dim):
            raise DataError(
                f"covariance must be {dim}x{dim}, got {C.shape}",
                operation="PrefixCovariance",
                parameter="C",
            )
        if not np.allclose(C, C.T, rtol=0, atol=1e-12 * max(1.0, np.abs(C).max(initial=0))):
            raise DataError(
                "covariance is not symmetric",
                operation="PrefixCovariance",
                parameter="C",
            )
        C.setflags(write=False)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "var_layout", layout)
        object.__setattr__(self, "N", int(self.N))

    @property
    def n_vars(self) -> int:
        return len(self.var_layout)

    def role_vars(self, role: str) -> list:
        return [v for v, (r, _) in enumerate(self.var_layout) if r == role]

    @property
    def has_z(self) -> bool:
        return bool(self.role_vars("Z"))

    def indices(self, selector) -> np.ndarray:
        n_x, n_y, n_z = (int(s) for s in selector)
        for s in (n_x, n_y, n_z):
            if not 0 <= s <= self.N:
                raise IndexError(f"selector {selector} out of range for N={self.N}")
        limit = {"X": n_x, "Y": n_y, "Z": n_z}
        rows = [
            t * self.n_vars + v
            for t in range(self.N)
            for v, (role, _) in enumerate(self.var_layout)
            if t < limit[role]
        ]
        return np.asarray(rows, dtype=int)

    def with_layout(self, var_layout) -> "PrefixCovariance":
        """Same matrix, different role assignment of the variables."""
        return PrefixCovariance(self.C, tuple(var_layout), self.N, self.ridge)

    def swap_xy(self) -> "PrefixCovariance":
        swap = {"X": "Y", "Y": "X", "Z": "Z"}
        return self.with_layout([(swap[r], roi) for r, roi in self.var_layout])

    def keep_vars(self, keep: Sequence[int]) -> "PrefixCovariance":
        """Restrict to a subset of variables, re-indexing the row layout."""
        keep = list(keep)
        rows = [t * self.n_vars + v for t in range(self.N) for v in keep]
        layout = [self.var_layout[v] for v in keep]
        return PrefixCovariance(self.C[np.ix_(rows, rows)], layout, self.N, self.ridge)

    def drop_z(self) -> "PrefixCovariance":
        return self.keep_vars([v for v, (r, _) in enumerate(self.var_layout) if r != "Z"])

    def truncate(self, N: int) -> "PrefixCovariance":
        """Leading ``N`` time steps only."""
        rows = np.arange(int(N) * self.n_vars)
        return PrefixCovariance(self.C[np.ix_(rows, rows)], self.var_layout, N, self.ridge)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def group_into_rois(
    recording: TrialRecording,
    grouping: RoiGrouping,
    aggregation: str = "per-electrode-realization",
) -> GroupedRecording:
    """Collect the channels of each ROI.

    In ``per-electrode-realization`` mode every electrode stays a separate
    realization of its ROI's scalar process; ``roi-mean`` collapses an ROI
    to the spatial mean of its electrodes. Channels absent from the
    grouping are ignored; grouped channels absent from the recording are a
    configuration error.
    """
    if aggregation not in AGGREGATIONS:
        raise ConfigurationError(
            f"aggregation must be one of {AGGREGATIONS}",
            operation="group_into_rois",
            parameter="aggregation",
        )
    index = {name: i for i, name in enumerate(recording.channel_names)}
    missing = [c for c in grouping.roi_of_channel if c not in index]
    if missing:
        raise ConfigurationError(
            f"channels not in recording: {missing}",
            operation="group_into_rois",
            parameter="roi_of_channel",
        )
    data, names = {}, {}
    for roi in grouping.rois:
        chans = grouping.channels_of(roi)
        block = recording.channels[[index[c] for c in chans]]
        if aggregation == "roi-mean":
            block = block.mean(axis=0, keepdims=True)
        data[roi] = block
        names[roi] = chans
    return GroupedRecording(
        data=data,
        labels=recording.labels,
        sample_rate=recording.sample_rate,
        aggregation=aggregation,
        electrode_names=names,
    )


def slice_windows(recording, N: int, edge_overlap: int) -> list:
    """Sliding windows of ``N`` samples advancing by ``N - 2 * edge_overlap``.

    Windows restart at every tag change and never straddle one.
    """
    N, edge_overlap = int(N), int(edge_overlap)
    if edge_overlap < 0 or N <= 2 * edge_overlap:
        raise ConfigurationError(
            f"need N > 2*edge_overlap, got N={N}, edge_overlap={edge_overlap}",
            operation="slice_windows",
            parameter="edge_overlap",
        )
    stride = N - 2 * edge_overlap
    windows = []
    for seg, (tag, start, stop) in enumerate(_label_runs(recording.labels)):
        for k, offset in enumerate(range(0, stop - start - N + 1, stride)):
            windows.append(Window(tag, seg, k, start + offset, start + offset + N, offset))
    if not windows:
        warnings.warn(
            f"window length N={N} exceeds every segment; no windows produced",
            RuntimeWarning,
            stacklevel=2,
        )
    return windows


def electrode_selection(grouping_sizes: Mapping[int, int], n_keep: int, seed: int = 0):
    """Seeded choice of ``n_keep`` electrode indices per ROI.

    The permutation depends only on ``(seed, roi)`` so every trial and every
    ROI pair uses the same electrodes.
    """
    out = {}
    for roi, size in grouping_sizes.items():
        if size < n_keep:
            raise DataError(
                f"ROI {roi} has {size} electrodes, {n_keep} required",
                operation="pool_sections",
                parameter="n_keep",
            )
        perm = np.random.default_rng([int(seed), int(roi)]).permutation(size)
        out[roi] = np.sort(perm[:n_keep])
    return out


def _roles_for_pair(rois, x_roi, y_roi, z_rois):
    if x_roi == y_roi:
        raise ConfigurationError(
            "source and destination ROI must differ",
            operation="pool_sections",
            parameter="y_roi",
        )
    for r in (x_roi, y_roi):
        if r not in rois:
            raise ConfigurationError(
                f"unknown ROI {r}", operation="pool_sections", parameter="x_roi/y_roi"
            )
    if z_rois is None:
        z_rois = [r for r in rois if r not in (x_roi, y_roi)]
    z_rois = [int(r) for r in z_rois]
    if x_roi in z_rois or y_roi in z_rois:
        raise ConfigurationError(
            "Z ROIs must exclude X and Y", operation="pool_sections", parameter="z_rois"
        )
    layout = (("X", int(x_roi)), ("Y", int(y_roi))) + tuple(("Z", r) for r in z_rois)
    return z_rois, layout


def _collect(trials, spans, x_roi, y_roi, z_rois, layout, n_keep, pairing_seed):
    """Stack sections from ``spans``: list of ``(trial_index, start, stop)``."""
    sizes = {r: trials[0].data[r].shape[0] for r in (x_roi, y_roi)}
    if n_keep is None:
        n_keep = min(min(t.data[r].shape[0] for r in t.rois) for t in trials)
    sel = electrode_selection(sizes, n_keep, pairing_seed)
    blocks = []
    for ti, start, stop in spans:
        trial = trials[ti]
        xs = trial.data[x_roi][sel[x_roi], start:stop]
        ys = trial.data[y_roi][sel[y_roi], start:stop]
        zs = [trial.data[r][:, start:stop].mean(axis=0) for r in z_rois]
        for j in range(n_keep):
            blocks.append(np.vstack([xs[j], ys[j]] + zs))
    if not blocks:
        raise DataError(
            "no sections match the request", operation="pool_sections", parameter="tag"
        )
    return WindowEnsemble(np.stack(blocks), layout)


def _cap_sections(ensemble, section_cap, seed):
    if section_cap is None or ensemble.n_sections <= section_cap:
        return ensemble
    keep = np.sort(np.random.default_rng(seed).choice(ensemble.n_sections, section_cap, replace=False))
    return WindowEnsemble(ensemble.sections[keep], ensemble.var_layout)


def pool_sections(
    trials: Sequence[GroupedRecording],
    k: int,
    x_roi: int,
    y_roi: int,
    tag,
    N: int,
    edge_overlap: int,
    *,
    z_rois: Iterable[int] | None = None,
    n_keep: int | None = None,
    pairing_seed: int = 0,
    section_cap: int | None = None,
) -> WindowEnsemble:
    """Pool window ``k`` of every ``tag`` segment across trials and electrodes.

    One section per (trial, tag repetition, electrode pairing). X and Y keep
    individual electrodes, the ``j``-th selected X electrode pairs with the
    ``j``-th selected Y electrode; Z ROIs enter as their spatial mean. The
    number of electrodes kept per ROI defaults to the smallest ROI size in
    the data, so the section count is the same for every ROI pair.
    """
    if not trials:
        raise DataError("no trials given", operation="pool_sections", parameter="trials")
    z_rois, layout = _roles_for_pair(trials[0].rois, x_roi, y_roi, z_rois)
    spans = []
    for ti, trial in enumerate(trials):
        for w in slice_windows_quiet(trial, N, edge_overlap):
            if w.k == k and w.tag == tag:
                spans.append((ti, w.start, w.stop))
    if not spans:
        raise DataError(
            f"no trial has window {k} with tag {tag!r}",
            operation="pool_sections",
            parameter="k",
        )
    ens = _collect(trials, spans, x_roi, y_roi, z_rois, layout, n_keep, pairing_seed)
    return _cap_sections(ens, section_cap, pairing_seed)


def pool_blocks(
    trial: GroupedRecording,
    x_roi: int,
    y_roi: int,
    N: int,
    *,
    tag=None,
    z_rois: Iterable[int] | None = None,
    n_keep: int | None = None,
    pairing_seed: int = 0,
    section_cap: int | None = None,
) -> WindowEnsemble:
    """Cut one trial into disjoint blocks of ``N`` samples, one section each.

    This is the single-trial sample space used for the synthetic data: a
    430500-sample trial yields 14350 sections of length 30.
    """
    z_rois, layout = _roles_for_pair(trial.rois, x_roi, y_roi, z_rois)
    spans = []
    for seg_tag, start, stop in trial.segments():
        if tag is not None and seg_tag != tag:
            continue
        for s in range(start, stop - N + 1, N):
            spans.append((0, s, s + N))
    if not spans:
        raise DataError(
            f"trial has no complete block of {N} samples", operation="pool_blocks", parameter="N"
        )
    ens = _collect([trial], spans, x_roi, y_roi, z_rois, layout, n_keep, pairing_seed)
    return _cap_sections(ens, section_cap, pairing_seed)


def slice_windows_quiet(recording, N, edge_overlap):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return slice_windows(recording, N, edge_overlap)


def estimate_joint_covariance(ensemble: WindowEnsemble, ridge: float = DEFAULT_RIDGE) -> PrefixCovariance:
    """Sample covariance of the stacked section vectors plus a relative ridge.

    ``ridge * trace(C) / dim`` is added to the diagonal.
    """
    if ensemble.n_sections < 2:
        raise EstimationError(
            f"need at least 2 sections, got {ensemble.n_sections}",
            operation="estimate_joint_covariance",
            parameter="n_sections",
        )
    S = ensemble.stacked()
    if not np.all(np.isfinite(S)):
        raise DataError(
            "sections contain non-finite values",
            operation="estimate_joint_covariance",
            parameter="sections",
        )
    S = S - S.mean(axis=0)
    C = S.T @ S / (S.shape[0] - 1)
    C = 0.5 * (C + C.T)
    if ridge:
        C[np.diag_indices_from(C)] += ridge * np.trace(C) / C.shape[0]
    return PrefixCovariance(C, ensemble.var_layout, ensemble.N, ridge)


def select_submatrix(pc: PrefixCovariance, selector) -> np.ndarray:
    idx = pc.indices(selector)
    return pc.C[np.ix_(idx, idx)]


def log_det_psd(M) -> float:
    """Natural log-determinant through a Cholesky factorization.

    The empty matrix has log-determinant 0. A failed factorization, or a
    pivot at round-off level relative to the largest diagonal entry, raises
    :class:`NumericalError` with the zero-based failing pivot.
    """
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DataError("matrix must be square", operation="log_det_psd", parameter="M")
    scale = max(1.0, float(np.abs(M).max()))
    if not np.allclose(M, M.T, rtol=0, atol=1e-10 * scale):
        raise DataError("matrix must be symmetric", operation="log_det_psd", parameter="M")
    if not np.all(np.isfinite(M)):
        raise NumericalError("matrix has non-finite entries", operation="log_det_psd", parameter="M")
    L, info = lapack.dpotrf(M, lower=1, clean=0)
    if info != 0:
        pivot = int(info) - 1 if info > 0 else None
        raise NumericalError(
            f"matrix is not positive definite (leading minor {pivot} failed)",
            pivot=pivot,
            operation="log_det_psd",
            parameter="M",
        )
    d = np.diag(L) ** 2
    # Pivots at round-off level mean the matrix is numerically singular.
    tiny = np.flatnonzero(d <= M.shape[0] * np.finfo(float).eps * float(np.max(np.diag(M))))
    if tiny.size:
        raise NumericalError(
            f"matrix is numerically singular (pivot {int(tiny[0])} at round-off level)",
            pivot=int(tiny[0]),
            operation="log_det_psd",
            parameter="M",
        )
    return float(np.sum(np.log(d)))


# ---------------------------------------------------------------------------
# Estimator front end
# ---------------------------------------------------------------------------


def check_sections(X, var_layout=None) -> WindowEnsemble:
    """Accept a :class:`WindowEnsemble` or a 3-D array plus layout."""
    if isinstance(X, WindowEnsemble):
        return X
    X = check_array(X, allow_nd=True, ensure_2d=False, dtype=float)
    if X.ndim != 3:
        raise DataError(
            "expected sections of shape (n_sections, n_vars, N)",
            operation="check_sections",
            parameter="X",
        )
    if var_layout is None:
        var_layout = [("X", 1), ("Y", 2)] + [("Z", 3 + i) for i in range(X.shape[1] - 2)]
    return WindowEnsemble(X, tuple(var_layout))


class PrefixCovarianceEstimator(BaseEstimator):
    """Estimate the joint prefix covariance of a window ensemble.

    Parameters
    ----------
    ridge : float, default=1e-9
        Diagonal loading relative to the mean variance.

    Attributes
    ----------
    covariance_ : PrefixCovariance
    n_sections_ : int
    n_features_in_ : int
        Length of the stacked section vector, ``n_vars * N``.
    """

    def __init__(self, ridge=DEFAULT_RIDGE):
        self.ridge = ridge

    def fit(self, X, y=None, var_layout=None):
        ens = check_sections(X, var_layout)
        self.covariance_ = estimate_joint_covariance(ens, self.ridge)
        self.n_sections_ = ens.n_sections
        self.n_features_in_ = ens.n_vars * ens.N
        return self

    def log_det(self, selector) -> float:
        check_is_fitted(self, "covariance_")
        return log_det_psd(select_submatrix(self.covariance_, selector))
