"""CSV readers and writers.

All files are UTF-8 with ``.`` as decimal separator.  Lines starting with ``#``
are comments; ``# key: value`` comments carry metadata.

histogram
    header ``time_ns,counts``; ``time_ns`` is the left edge of each bin.
spectrum
    header ``axis,value`` and a ``# axis_kind: wavelength_nm`` (or
    ``wavenumber_cm-1``) comment.
sample table
    header ``id,rho_n_ppm,rho_n_err,tau_ns,tau_err``.
power table
    header ``power_uw,intensity_cps``.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .exceptions import ParseError
from .lifetime import DecayHistogram
from .spectra import AXIS_KINDS, SpectrumSeries

HISTOGRAM_HEADER = ("time_ns", "counts")
SPECTRUM_HEADER = ("axis", "value")
SAMPLE_HEADER = ("id", "rho_n_ppm", "rho_n_err", "tau_ns", "tau_err")
POWER_HEADER = ("power_uw", "intensity_cps")


def _read_table(path, header):
    """Return (metadata, rows) where rows are (line_number, fields)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not valid UTF-8 ({exc})") from None
    meta = {}
    rows = []
    seen_header = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped[1:].strip()
            if ":" in body:
                key, value = body.split(":", 1)
                meta[key.strip()] = value.strip()
            continue
        fields = [f.strip() for f in next(csv.reader([stripped]))]
        if not seen_header:
            if tuple(f.lower() for f in fields) != header:
                raise ParseError(f"expected header {','.join(header)!r}, got {stripped!r}", lineno)
            seen_header = True
            continue
        if len(fields) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(fields)}", lineno)
        rows.append((lineno, fields))
    if not seen_header:
        raise ParseError(f"{path}: empty file or missing header {','.join(header)!r}")
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return meta, rows


def _float(value, lineno, what):
    try:
        x = float(value)
    except ValueError:
        raise ParseError(f"{what} is not a number: {value!r}", lineno) from None
    if not np.isfinite(x):
        raise ParseError(f"{what} is not finite: {value!r}", lineno)
    return x


def read_histogram(path) -> DecayHistogram:
    meta, rows = _read_table(path, HISTOGRAM_HEADER)
    times, counts = [], []
    for lineno, (t, c) in rows:
        times.append(_float(t, lineno, "time_ns"))
        x = _float(c, lineno, "counts")
        if x < 0:
            raise ParseError("counts must be non-negative", lineno)
        counts.append(x)
    counts = np.array(counts)
    if np.all(counts == np.round(counts)):
        counts = counts.astype(np.int64)
    width = float(meta["bin_width_ns"]) if "bin_width_ns" in meta else None
    try:
        return DecayHistogram.from_left_edges(times, counts, width, meta)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None


def write_histogram(path, hist: DecayHistogram, metadata=None):
    meta = {"bin_width_ns": repr(hist.bin_width), **(metadata if metadata is not None else hist.metadata)}
    lines = [f"# {key}: {value}" for key, value in meta.items()]
    lines.append(",".join(HISTOGRAM_HEADER))
    integral = hist.counts.dtype.kind in "iu"
    for t, c in zip(hist.bin_edges[:-1], hist.counts):
        lines.append(f"{t:.6f},{c}" if integral else f"{t:.6f},{c:.12g}")
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


def read_spectrum(path) -> SpectrumSeries:
    meta, rows = _read_table(path, SPECTRUM_HEADER)
    kind = meta.get("axis_kind")
    if kind not in AXIS_KINDS:
        raise ParseError(f"{path}: missing or invalid '# axis_kind:' comment (one of {AXIS_KINDS})")
    axis = [_float(a, n, "axis") for n, (a, _) in rows]
    values = [_float(v, n, "value") for n, (_, v) in rows]
    try:
        return SpectrumSeries(kind, axis, values, meta.get("label", Path(path).stem))
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None


def write_spectrum(path, s: SpectrumSeries):
    lines = [f"# axis_kind: {s.axis_kind}"]
    if s.label:
        lines.append(f"# label: {s.label}")
    lines.append(",".join(SPECTRUM_HEADER))
    lines += [f"{a:.6f},{v:.12g}" for a, v in zip(s.axis, s.values)]
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


def read_sample_table(path):
    """Rows of (id, rho_n_ppm, rho_n_err, tau_ns, tau_err)."""
    _, rows = _read_table(path, SAMPLE_HEADER)
    out = []
    for lineno, (sid, *nums) in rows:
        vals = [_float(v, lineno, name) for v, name in zip(nums, SAMPLE_HEADER[1:])]
        if vals[0] < 0 or vals[1] < 0 or vals[2] <= 0 or vals[3] < 0:
            raise ParseError("concentrations and errors must be >= 0 and tau_ns > 0", lineno)
        out.append((sid, *vals))
    return out


def write_sample_table(path, rows):
    lines = [",".join(SAMPLE_HEADER)]
    lines += [f"{sid},{rho:.10g},{rho_e:.10g},{tau:.10g},{tau_e:.10g}" for sid, rho, rho_e, tau, tau_e in rows]
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


def read_power_table(path):
    _, rows = _read_table(path, POWER_HEADER)
    p = [_float(a, n, "power_uw") for n, (a, _) in rows]
    i = [_float(b, n, "intensity_cps") for n, (_, b) in rows]
    return np.array(p), np.array(i)


def write_csv(path, header, rows):
    """Plain CSV with a header row; floats written with 10 significant digits."""
    def fmt(v):
        return f"{v:.10g}" if isinstance(v, (float, np.floating)) else str(v)
    lines = [",".join(header)] + [",".join(fmt(v) for v in row) for row in rows]
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
