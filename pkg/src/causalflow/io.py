"""File formats: binary trials, CSV trials, manifests, rate tables and JSON.

Binary trial layout (little endian)::

    b"CFL1"            magic
    u32 n_channels
    u64 n_samples
    f64 sample_rate
    f64[n_channels * n_samples]   channel-major samples
    u8[n_samples]                 tag code per sample

Channel names and the tag-code map live in the dataset manifest.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import struct
from pathlib import Path

import numpy as np

from .ensemble import TrialRecording, TrialSequence
from .exceptions import ConfigurationError, DataError

FORMAT_VERSION = "1.0"
MAGIC = b"CFL1"
_HEADER = struct.Struct("<4sIQd")
RATE_COLUMNS = ("pair", "measure", "tag", "window_index", "window_time_ms")


def write_trial_binary(path, recording: TrialRecording) -> None:
    labels = np.asarray(recording.labels)
    if labels.size and (labels.min() < 0 or labels.max() > 255):
        raise DataError("tag codes must fit in one byte", operation="write_trial_binary", parameter="labels")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, recording.n_channels, recording.n_samples, float(recording.sample_rate)))
        fh.write(np.ascontiguousarray(recording.channels, dtype="<f8").tobytes())
        fh.write(labels.astype(np.uint8).tobytes())


def read_trial_binary(path, channel_names=None) -> TrialRecording:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated header", operation="read_trial_binary", parameter="path")
    magic, n_ch, n_s, fs = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}", operation="read_trial_binary", parameter="path")
    expected = _HEADER.size + 8 * n_ch * n_s + n_s
    if len(raw) != expected:
        raise DataError(
            f"{path}: {len(raw)} bytes, expected {expected}", operation="read_trial_binary", parameter="path"
        )
    data = np.frombuffer(raw, dtype="<f8", count=n_ch * n_s, offset=_HEADER.size).reshape(n_ch, n_s)
    labels = np.frombuffer(raw, dtype=np.uint8, offset=_HEADER.size + 8 * n_ch * n_s)
    names = channel_names or [f"ch{i}" for i in range(n_ch)]
    return TrialRecording(data.astype(float), fs, labels.astype(np.int64), tuple(names))


def read_trial_csv(path, sample_rate: float, tag_column: str = "tag", tag_codes=None) -> TrialRecording:
    """CSV with a header of channel names and an optional tag column.

    Without a tag column every sample gets tag 0. Non-integer tag names are
    mapped through ``tag_codes``.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise DataError(f"{path}: no data rows", operation="read_trial_csv", parameter="path")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if tag_column in header:
        ti = header.index(tag_column)
        raw_tags = [r[ti].strip() for r in body]
        if tag_codes:
            try:
                labels = np.array([int(tag_codes[t]) if t in tag_codes else int(t) for t in raw_tags])
            except ValueError as exc:
                raise DataError(f"{path}: unknown tag {exc}", operation="read_trial_csv", parameter=tag_column) from exc
        else:
            labels = np.array([int(t) for t in raw_tags])
        chan_idx = [i for i in range(len(header)) if i != ti]
    else:
        labels = np.zeros(len(body), dtype=np.int64)
        chan_idx = list(range(len(header)))
    try:
        data = np.array([[float(r[i]) for i in chan_idx] for r in body]).T
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed row ({exc})", operation="read_trial_csv", parameter="path") from exc
    return TrialRecording(data, sample_rate, labels, tuple(header[i] for i in chan_idx))


def write_trial_csv(path, recording: TrialRecording, tag_column: str = "tag") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(recording.channel_names) + [tag_column])
        for t in range(recording.n_samples):
            w.writerow([repr(float(v)) for v in recording.channels[:, t]] + [int(recording.labels[t])])


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path, obj: dict) -> None:
    """Pretty JSON with a ``version`` field, written atomically."""
    out = {"version": FORMAT_VERSION}
    out.update(obj)
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"{path} not found", operation="read_json", parameter="path") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})", operation="read_json", parameter="path") from exc


def load_dataset(directory, lazy: bool = True):
    """Manifest plus the recordings listed in it, in manifest order."""
    directory = Path(directory)
    manifest = read_json(directory / "manifest.json")
    names = manifest.get("channel_names")
    files = manifest.get("files", [])

    def load(i):
        path = directory / files[i]["file"]
        if path.suffix == ".csv":
            return read_trial_csv(path, float(manifest["sample_rate"]))
        return read_trial_binary(path, names)

    trials = TrialSequence(load, len(files))
    return manifest, trials if lazy else list(trials)


def write_rate_csv(path, rows, units: str = "nats") -> None:
    """Rows are dicts with the rate columns plus ``rate`` in nats."""
    if units not in ("nats", "bits"):
        raise ConfigurationError("units must be nats or bits", operation="write_rate_csv", parameter="units")
    scale = 1.0 / math.log(2.0) if units == "bits" else 1.0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(RATE_COLUMNS) + [f"rate_{units}"])
        for r in rows:
            w.writerow(
                [
                    r["pair"],
                    r["measure"],
                    r["tag"],
                    int(r["window_index"]),
                    repr(float(r["window_time_ms"])),
                    repr(float(r["rate"]) * scale),
                ]
            )


def read_rate_csv(path):
    """Rows with ``rate`` converted back to nats, plus the file's units."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        missing = [c for c in RATE_COLUMNS if c not in cols]
        unit_col = next((c for c in cols if c.startswith("rate_")), None)
        if missing or unit_col is None:
            raise DataError(
                f"{path}: missing columns {missing or ['rate_<units>']}", operation="read_rate_csv", parameter="path"
            )
        units = unit_col[len("rate_"):]
        scale = math.log(2.0) if units == "bits" else 1.0
        rows = [
            {
                "pair": r["pair"],
                "measure": r["measure"],
                "tag": r["tag"],
                "window_index": int(r["window_index"]),
                "window_time_ms": float(r["window_time_ms"]),
                "rate": float(r[unit_col]) * scale,
            }
            for r in reader
        ]
    return rows, units
