"""Synthetic band-limited EEG with known source-sink connectivity.

Each (band, source electrode) owns one band signal, synthesized by an
inverse five-level wavelet transform from i.i.d. logistic coefficients.
Delta and theta coefficients are scaled by one factor per trial drawn from
an activity-dependent uniform law, so high-activity trials carry more
low-frequency power. The sink of each pair receives a lagged copy of its
source's band signal. Electrode signals are then smeared spatially with
inverse great-circle-distance weights and white sensor noise is added.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .ensemble import TrialRecording, TrialSequence
from .exceptions import ConfigurationError, LayoutError
from .wavelet import WAVELETS, wavedec, waverec

logger = logging.getLogger(__name__)

LEVELS = 5
ACTIVITIES = ("high", "low")
TAG_CODES = {"high": 0, "low": 1}
TAG_NAMES = {0: "high", 1: "low"}


@dataclass(frozen=True)
class BandSpec:
    """One frequency band tied to a coefficient slot of the 5-level transform.

    ``slot`` is ``("approx", 5)`` or ``("detail", j)``. ``scale_law`` maps an
    activity level to the ``(low, high)`` bounds of a uniform distribution.
    """

    name: str
    low_hz: float
    high_hz: float
    slot: tuple
    scale_law: Mapping[str, tuple]

    def check(self, sample_rate: float, levels: int = LEVELS):
        kind, j = self.slot
        if kind == "approx":
            edges = (0.0, sample_rate / 2 ** (levels + 1))
        elif kind == "detail" and 1 <= j <= levels:
            edges = (sample_rate / 2 ** (j + 1), sample_rate / 2**j)
        else:
            raise ConfigurationError(
                f"band {self.name}: bad slot {self.slot}", operation="BandSpec", parameter="slot"
            )
        if not np.allclose(edges, (self.low_hz, self.high_hz), rtol=1e-9, atol=1e-9):
            raise ConfigurationError(
                f"band {self.name}: edges {self.low_hz}-{self.high_hz} Hz do not match the "
                f"dyadic split {edges[0]:.4f}-{edges[1]:.4f} Hz",
                operation="BandSpec",
                parameter="low_hz/high_hz",
            )
        for act, (a, b) in self.scale_law.items():
            if not 0 <= a <= b:
                raise ConfigurationError(
                    f"band {self.name}: invalid scale range for {act}",
                    operation="BandSpec",
                    parameter="scale_law",
                )

    def n_coeffs(self, padded_length: int) -> int:
        kind, j = self.slot
        return padded_length // 2 ** (LEVELS if kind == "approx" else j)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "low_hz": self.low_hz,
            "high_hz": self.high_hz,
            "slot": list(self.slot),
            "scale_law": {k: list(v) for k, v in self.scale_law.items()},
        }

    @classmethod
    def from_dict(cls, d) -> "BandSpec":
        return cls(
            d["name"],
            float(d["low_hz"]),
            float(d["high_hz"]),
            (d["slot"][0], int(d["slot"][1])),
            {k: tuple(float(x) for x in v) for k, v in d["scale_law"].items()},
        )


SCALED = {"high": (0.9, 1.0), "low": (0.55, 0.85)}
UNSCALED = {"high": (1.0, 1.0), "low": (1.0, 1.0)}


def default_bands(sample_rate: float = 250.0) -> tuple:
    """Delta, theta, alpha and beta at the dyadic edges of ``sample_rate``."""
    e = [sample_rate / 2**k for k in (6, 5, 4, 3)]
    return (
        BandSpec("delta", 0.0, e[0], ("approx", 5), SCALED),
        BandSpec("theta", e[0], e[1], ("detail", 5), SCALED),
        BandSpec("alpha", e[1], e[2], ("detail", 4), UNSCALED),
        BandSpec("beta", e[2], e[3], ("detail", 3), UNSCALED),
    )


@dataclass(frozen=True)
class ElectrodeLayout:
    """Electrode positions on the unit sphere plus source-sink pairs per band."""

    names: tuple
    coords: np.ndarray
    pairs: Mapping[str, tuple]  # band -> ((source, sink), ...)

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        coords = np.asarray(self.coords, dtype=float)
        if coords.shape != (len(names), 3):
            raise LayoutError("coords must be (n_electrodes, 3)", operation="ElectrodeLayout", parameter="coords")
        if len(set(names)) != len(names):
            raise LayoutError("duplicate electrode names", operation="ElectrodeLayout", parameter="names")
        norms = np.linalg.norm(coords, axis=1)
        if np.any(norms == 0):
            raise LayoutError("zero coordinate vector", operation="ElectrodeLayout", parameter="coords")
        coords = coords / norms[:, None]
        d = great_circle(coords)
        iu = np.triu_indices(len(names), 1)
        if np.any(d[iu] < 1e-9):
            i, j = iu[0][np.argmin(d[iu])], iu[1][np.argmin(d[iu])]
            raise LayoutError(
                f"electrodes {names[i]} and {names[j]} are coincident",
                operation="ElectrodeLayout",
                parameter="coords",
            )
        pairs = {}
        for band, plist in dict(self.pairs).items():
            plist = tuple((str(s), str(t)) for s, t in plist)
            for s, t in plist:
                if s not in names or t not in names:
                    raise LayoutError(
                        f"{band}: pair {s}->{t} names an unknown electrode",
                        operation="ElectrodeLayout",
                        parameter="pairs",
                    )
                if s == t:
                    raise LayoutError(
                        f"{band}: source and sink are both {s}", operation="ElectrodeLayout", parameter="pairs"
                    )
            pairs[str(band)] = plist
        coords.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "pairs", pairs)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def sources(self) -> list:
        """Distinct ``(band, source)`` pairs, each owning one band signal."""
        out = []
        for band, plist in self.pairs.items():
            for s, _ in plist:
                if (band, s) not in out:
                    out.append((band, s))
        return out

    def anchors(self) -> list:
        """Electrodes that are a source or a sink of some band."""
        used = {e for plist in self.pairs.values() for pair in plist for e in pair}
        return [n for n in self.names if n in used]

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "coords": self.coords.tolist(),
            "pairs": {b: [list(p) for p in plist] for b, plist in self.pairs.items()},
        }

    @classmethod
    def from_dict(cls, d) -> "ElectrodeLayout":
        return cls(tuple(d["names"]), np.asarray(d["coords"]), {b: tuple(map(tuple, p)) for b, p in d["pairs"].items()})


def default_layout() -> ElectrodeLayout:
    """Eight 10-20 positions (x right, y anterior, z up) and the paired bands."""
    coords = {
        "Fz": (0.0, 0.707, 0.707),
        "Cz": (0.0, 0.0, 1.0),
        "F5": (-0.70, 0.55, 0.45),
        "F6": (0.70, 0.55, 0.45),
        "P5": (-0.70, -0.55, 0.45),
        "P6": (0.70, -0.55, 0.45),
        "T7": (-1.0, 0.0, 0.0),
        "T8": (1.0, 0.0, 0.0),
    }
    pairs = {
        "delta": (("Fz", "Cz"),),
        "theta": (("F5", "P5"), ("F6", "P6")),
        "alpha": (("P6", "Cz"), ("F5", "Cz")),
        "beta": (("T7", "T8"),),
    }
    return ElectrodeLayout(tuple(coords), np.array(list(coords.values())), pairs)


def great_circle(coords) -> np.ndarray:
    """Pairwise great-circle distances between unit vectors."""
    c = np.asarray(coords, dtype=float)
    return np.arccos(np.clip(c @ c.T, -1.0, 1.0))


def idw_weights(distances, power: float = 2.0) -> np.ndarray:
    """Normalized inverse-distance weights; a zero distance takes all weight."""
    d = np.asarray(distances, dtype=float)
    if d.size == 0:
        return d
    zero = d <= 0
    if zero.any():
        return zero / zero.sum()
    w = d ** (-power)
    return w / w.sum()


# ---------------------------------------------------------------------------
# Signal synthesis
# ---------------------------------------------------------------------------


def draw_band_coefficients(band: BandSpec, activity: str, n_coeffs: int, rng, scale=None, s_band=1.0):
    """I.i.d. logistic coefficients times one per-trial scale factor.

    Returns ``(coefficients, scale)``. ``scale`` may be forced; otherwise it
    is drawn from the band's uniform law for ``activity``.
    """
    if n_coeffs <= 0:
        raise ConfigurationError("n_coeffs must be positive", operation="draw_band_coefficients", parameter="n_coeffs")
    if scale is None:
        if activity not in band.scale_law:
            raise ConfigurationError(
                f"unknown activity {activity!r}", operation="draw_band_coefficients", parameter="activity"
            )
        a, b = band.scale_law[activity]
        scale = float(rng.uniform(a, b)) if b > a else float(a)
    c = rng.logistic(0.0, s_band, size=n_coeffs)
    return scale * c, float(scale)


def padded_length(n_samples: int, levels: int = LEVELS) -> int:
    block = 2**levels
    return -(-int(n_samples) // block) * block


def synthesize_source_signal(
    coeffs: Mapping[str, np.ndarray],
    n_samples: int,
    bands: Sequence[BandSpec] | None = None,
    wavelet: str = "meyer",
):
    """Inverse 5-level transform of per-band coefficients.

    Slots without a band (details 1 and 2 by default) are zero. If
    ``n_samples`` is not a multiple of 32 the transform runs on the next
    multiple and the output is truncated. Returns ``(signal, n_pad)``.
    """
    bands = default_bands() if bands is None else bands
    L = padded_length(n_samples)
    slots = {("approx", LEVELS): np.zeros(L // 2**LEVELS)}
    for j in range(LEVELS, 0, -1):
        slots[("detail", j)] = np.zeros(L // 2**j)
    for band in bands:
        if band.name not in coeffs:
            continue
        c = np.asarray(coeffs[band.name], dtype=float)
        expected = slots[band.slot].shape
        if c.shape != expected:
            raise ConfigurationError(
                f"band {band.name} needs {expected[0]} coefficients for {n_samples} samples, got {c.shape[0]}",
                operation="synthesize_source_signal",
                parameter="coeffs",
            )
        slots[band.slot] = c
    ordered = [slots[("approx", LEVELS)]] + [slots[("detail", j)] for j in range(LEVELS, 0, -1)]
    signal = waverec(ordered, wavelet)
    n_pad = L - int(n_samples)
    if n_pad:
        logger.info("padded %d samples to %d for the %d-level transform", n_samples, L, LEVELS)
    return signal[: int(n_samples)], n_pad


def mixing_weights(layout: ElectrodeLayout, leak: float = 0.05, power: float = 2.0) -> np.ndarray:
    """``(n_electrodes, n_anchors)`` weights applied to the anchor signals.

    An anchor keeps ``1 - leak`` of its own signal plus ``leak`` times an
    inverse-distance mixture of the other anchors. Every other electrode is
    an inverse-distance mixture of all anchors. Rows sum to 1.
    """
    if not 0 <= leak <= 1:
        raise ConfigurationError("leak must lie in [0, 1]", operation="spatial_mix", parameter="leak")
    anchors = layout.anchors()
    idx = [layout.index(a) for a in anchors]
    d = great_circle(layout.coords)[:, idx]
    W = np.zeros((len(layout.names), len(anchors)))
    for e, name in enumerate(layout.names):
        if name in anchors:
            k = anchors.index(name)
            others = [j for j in range(len(anchors)) if j != k]
            W[e, k] = 1.0 - leak if others else 1.0
            if others:
                W[e, others] = leak * idw_weights(d[e, others], power)
        else:
            W[e] = idw_weights(d[e], power)
    return W


def spatial_mix(anchor_signals: Mapping[str, np.ndarray], layout: ElectrodeLayout, leak=0.05, power=2.0) -> np.ndarray:
    """Full ``(n_electrodes, n_samples)`` recording from the anchor electrode signals."""
    anchors = layout.anchors()
    missing = [a for a in anchors if a not in anchor_signals]
    if missing:
        raise LayoutError(f"no signal for anchor electrodes {missing}", operation="spatial_mix", parameter="anchor_signals")
    S = np.stack([np.asarray(anchor_signals[a], dtype=float) for a in anchors])
    return mixing_weights(layout, leak, power) @ S


# ---------------------------------------------------------------------------
# Trials and datasets
# ---------------------------------------------------------------------------


@dataclass
class SynthConfig:
    n_samples: int = 430500
    sample_rate: float = 250.0
    lag: int = 1
    leak: float = 0.05
    noise_std: float = 0.1
    idw_power: float = 2.0
    wavelet: str = "meyer"
    s_band: float = 1.0

    def validate(self):
        if self.n_samples < 1:
            raise ConfigurationError("n_samples must be positive", operation="SynthConfig", parameter="n_samples")
        if self.lag < 0:
            raise ConfigurationError("lag must be >= 0", operation="SynthConfig", parameter="lag")
        if self.noise_std < 0:
            raise ConfigurationError("noise_std must be >= 0", operation="SynthConfig", parameter="noise_std")
        if self.wavelet not in WAVELETS:
            raise ConfigurationError(f"unknown wavelet {self.wavelet!r}", operation="SynthConfig", parameter="wavelet")
        if not 0 <= self.leak <= 1:
            raise ConfigurationError("leak must lie in [0, 1]", operation="SynthConfig", parameter="leak")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SyntheticTrial:
    recording: TrialRecording
    activity: str
    seed: int
    trial_index: int
    scales: dict = field(default_factory=dict)
    n_pad: int = 0


def generate_trial(
    trial_index: int,
    activity: str,
    seed: int,
    config: SynthConfig | None = None,
    layout: ElectrodeLayout | None = None,
    bands: Sequence[BandSpec] | None = None,
) -> SyntheticTrial:
    """One trial drawn from its own RNG stream ``(seed, trial_index)``."""
    cfg = (config or SynthConfig()).validate()
    layout = layout or default_layout()
    bands = tuple(bands or default_bands(cfg.sample_rate))
    if activity not in ACTIVITIES:
        raise ConfigurationError(f"activity must be one of {ACTIVITIES}", operation="generate_trial", parameter="activity")
    for b in bands:
        b.check(cfg.sample_rate)
    by_name = {b.name: b for b in bands}
    unknown = set(layout.pairs) - set(by_name)
    if unknown:
        raise LayoutError(f"pairs reference unknown bands {sorted(unknown)}", operation="generate_trial", parameter="pairs")
    rng = np.random.default_rng([int(seed), int(trial_index)])
    n_total = cfg.n_samples + cfg.lag
    L = padded_length(n_total)
    scales = {}
    for b in bands:
        a, hi = b.scale_law[activity]
        scales[b.name] = float(rng.uniform(a, hi)) if hi > a else float(a)
    signals = {}
    n_pad = 0
    for band_name, src in layout.sources():
        band = by_name[band_name]
        c, _ = draw_band_coefficients(band, activity, band.n_coeffs(L), rng, scale=scales[band_name], s_band=cfg.s_band)
        u, n_pad = synthesize_source_signal({band_name: c}, n_total, bands, cfg.wavelet)
        signals[(band_name, src)] = u
    lag, n = cfg.lag, cfg.n_samples
    anchor = {a: np.zeros(n) for a in layout.anchors()}
    for band_name, plist in layout.pairs.items():
        for s, t in plist:
            u = signals[(band_name, s)]
            # Source emits u[lag:]; the sink sees the same signal ``lag`` samples later.
            anchor[t] += u[:n]
        for s in {s for s, _ in plist}:
            anchor[s] += signals[(band_name, s)][lag : lag + n]
    data = spatial_mix(anchor, layout, cfg.leak, cfg.idw_power)
    if cfg.noise_std:
        data = data + rng.normal(0.0, cfg.noise_std, size=data.shape)
    labels = np.full(n, TAG_CODES[activity], dtype=np.uint8)
    rec = TrialRecording(data, cfg.sample_rate, labels, layout.names)
    return SyntheticTrial(rec, activity, int(seed), int(trial_index), scales, n_pad)


def generate_dataset(
    n_trials: int,
    activity: str,
    seed: int,
    config: SynthConfig | None = None,
    layout: ElectrodeLayout | None = None,
    bands: Sequence[BandSpec] | None = None,
    first_index: int = 0,
    n_jobs: int = 1,
) -> list:
    """``n_trials`` trials with indices ``first_index, first_index + 1, ...``.

    Each trial depends only on ``(seed, trial_index)`` and the configuration,
    so the result does not depend on ``n_jobs``.
    """
    if n_trials < 0:
        raise ConfigurationError("n_trials must be >= 0", operation="generate_dataset", parameter="n_trials")
    indices = range(first_index, first_index + int(n_trials))

    def make(i):
        return generate_trial(i, activity, seed, config, layout, bands)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(make, indices))
    return [make(i) for i in indices]


def synthetic_recordings(
    n_trials: int,
    activity: str,
    seed: int,
    config: SynthConfig | None = None,
    layout: ElectrodeLayout | None = None,
    first_index: int = 0,
):
    """Lazily generated recordings; trial ``i`` is built when accessed."""
    return TrialSequence(
        lambda i: generate_trial(first_index + i, activity, seed, config, layout).recording, n_trials
    )


def block_sections(data, N: int = 30) -> np.ndarray:
    """Disjoint length-``N`` blocks of a ``(n_channels, n_samples)`` array.

    Returns ``(n_blocks, n_channels, N)``; a trailing remainder is dropped.
    """
    data = np.asarray(data, dtype=float)
    n_blocks = data.shape[1] // N
    if n_blocks < 1:
        raise ConfigurationError(
            f"trial of {data.shape[1]} samples has no block of {N}", operation="block_sections", parameter="N"
        )
    x = data[:, : n_blocks * N].reshape(data.shape[0], n_blocks, N)
    return np.ascontiguousarray(x.transpose(1, 0, 2))


def band_power(signal, band: BandSpec, wavelet: str = "meyer") -> float:
    """Mean squared coefficient energy per sample in one band's slot."""
    x = np.asarray(signal, dtype=float)
    L = (x.size // 2**LEVELS) * 2**LEVELS
    coeffs = wavedec(x[:L], LEVELS, wavelet)
    kind, j = band.slot
    c = coeffs[0] if kind == "approx" else coeffs[LEVELS - j + 1]
    return float(np.sum(c**2) / L)


def expected_square_uniform(a: float, b: float) -> float:
    """``E[U^2]`` for ``U ~ Uniform(a, b)``."""
    return (a * a + a * b + b * b) / 3.0


def periodogram_fraction(signal, sample_rate: float, f_lo: float, f_hi: float) -> float:
    """Share of periodogram energy with ``f_lo <= f < f_hi``."""
    x = np.asarray(signal, dtype=float)
    P = np.abs(np.fft.rfft(x)) ** 2
    f = np.fft.rfftfreq(x.size, 1.0 / sample_rate)
    total = P.sum()
    return float(P[(f >= f_lo) & (f < f_hi)].sum() / total) if total > 0 else math.nan
