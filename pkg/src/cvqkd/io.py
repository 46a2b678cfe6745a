"""On-disk formats: I/Q binaries with JSON sidecars, CSV tables, checksums.

Binary layout (``*.iq``): little-endian IEEE-754 float64, interleaved
``I0 Q0 I1 Q1 ...``.  Multi-channel files (e.g. paired tx/rx symbols) store
the channels one after another, each ``count`` complex values long.  The
sidecar ``*.json`` next to it describes rates, seed, frame id and layout.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import os
from pathlib import Path

import numpy as np

from .errors import ConfigError, IntegrityError, MissingArtifact

IQ_SCHEMA = "cvqkd.iq/1"
IQ_DTYPE = "<f8"


def _sidecar(path):
    return Path(path).with_suffix(".json")


def write_iq(path, channels, *, kind, frame_id=0, sample_rate_hz=None, symbol_rate_hz=None,
             seed=None, units="raw", extra=None):
    """Write complex arrays in the interleaved I/Q format plus the sidecar header."""
    path = Path(path)
    if isinstance(channels, np.ndarray):
        channels = {"data": channels}
    names = list(channels)
    arrays = [np.asarray(channels[k], dtype=complex) for k in names]
    count = arrays[0].size
    if any(a.size != count for a in arrays):
        raise ConfigError("all channels must have the same length", "channels")
    with open(path, "wb") as fh:
        for a in arrays:
            inter = np.empty(2 * count, dtype=IQ_DTYPE)
            inter[0::2] = a.real
            inter[1::2] = a.imag
            fh.write(inter.tobytes())
    header = {
        "schema": IQ_SCHEMA,
        "kind": kind,
        "dtype": IQ_DTYPE,
        "layout": "interleaved-iq, channels sequential",
        "channels": names,
        "count": count,
        "frame_id": int(frame_id),
        "sample_rate_hz": sample_rate_hz,
        "symbol_rate_hz": symbol_rate_hz,
        "seed": seed,
        "units": units,
        "sha256": sha256_file(path),
    }
    if extra:
        header.update(extra)
    write_json(_sidecar(path), header)
    return header


def read_iq(path, verify=True):
    """Return ``(header, {channel: complex array})``."""
    path = Path(path)
    if not path.exists() or not _sidecar(path).exists():
        raise MissingArtifact(f"missing {path} or its sidecar header")
    header = read_json(_sidecar(path))
    if header.get("schema") != IQ_SCHEMA:
        raise ConfigError(f"unsupported schema {header.get('schema')!r}", "schema")
    if verify and header.get("sha256") and sha256_file(path) != header["sha256"]:
        raise IntegrityError(f"checksum mismatch for {path}")
    raw = np.fromfile(path, dtype=IQ_DTYPE).astype(np.float64)
    count = header["count"]
    names = header["channels"]
    if raw.size != 2 * count * len(names):
        raise IntegrityError(f"{path} holds {raw.size} floats, header says {2 * count * len(names)}")
    out = {}
    for i, name in enumerate(names):
        seg = raw[2 * count * i : 2 * count * (i + 1)]
        out[name] = seg[0::2] + 1j * seg[1::2]
    return header, out


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_plain(obj), fh, indent=1, sort_keys=True, allow_nan=True)
        fh.write("\n")


def read_json(path):
    if not Path(path).exists():
        raise MissingArtifact(f"missing {path}")
    with open(path) as fh:
        return json.load(fh)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path, header, rows, provenance=None):
    """CSV with optional ``# key=value`` provenance lines before the header.

    Floats are written with ``repr`` so a round trip is exact.
    """
    buf = _io.StringIO()
    if provenance:
        for k in sorted(provenance):
            buf.write(f"# {k}={provenance[k]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def read_csv(path):
    """Return ``(provenance, header, rows)``; values stay strings."""
    if not Path(path).exists():
        raise MissingArtifact(f"missing {path}")
    prov = {}
    lines = []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                prov[k.strip()] = v
            else:
                lines.append(line)
    rd = list(csv.reader(lines))
    if not rd:
        raise IntegrityError(f"{path} has no header")
    return prov, rd[0], rd[1:]


def csv_body(path):
    """File content after the provenance lines (header plus data)."""
    with open(path) as fh:
        return "".join(l for l in fh if not l.startswith("#"))


def sha256_file(path, chunk=1 << 20):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(chunk), b""):
            h.update(block)
    return h.hexdigest()


def sha256_text(text):
    return hashlib.sha256(text.encode()).hexdigest()


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return Path(path)
