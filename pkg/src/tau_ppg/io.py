"""File formats: segment CSVs, the binary weights file, run manifests, SVG plots.

Segment CSV::

    # fs=100
    # subject=clean-7-0003
    # peaks=31,74,115
    # ref_hr=143.2
    0.1834...
    ...

Weights file (little-endian)::

    b"TAUW" | u16 version | u32 x 8 config fields | u8 flags
    then, until EOF, per tensor:
    u16 name length | name (utf-8) | u8 rank | u32 x rank dims | float32 payload
"""

import json
import struct
from pathlib import Path

import numpy as np

from .model.config import TauConfig
from .model.params import param_shapes, validate_weights
from .signal import PpgSegment
from .tensor import Tensor

__all__ = [
    "DataFormatError", "WeightsFormatError", "read_segment", "write_segment", "read_dataset",
    "write_weights", "read_weights", "encode_weights", "decode_weights", "write_manifest",
    "write_csv", "overlay_svg", "bland_altman_svg", "WEIGHTS_MAGIC", "WEIGHTS_VERSION",
]

WEIGHTS_MAGIC = b"TAUW"
WEIGHTS_VERSION = 1
_CONFIG_FIELDS = ("depth", "in_channels", "first_width", "embed_dim", "k_closest",
                  "kernel", "heads", "phase_vocab")
_FLAG_BITS = {"lite": 0, "no_time_module": 1, "no_decoder_attention": 2, "hard_labels": 3}
_HEADER = struct.Struct("<4sH8IB")


class DataFormatError(ValueError):
    """Malformed input file; the message carries the file and line number."""


class WeightsFormatError(DataFormatError):
    """Unreadable weights file."""


# -- segment CSV ----------------------------------------------------------------

def write_segment(path, seg):
    lines = [f"# fs={seg.fs!r}", f"# subject={seg.subject_id}"]
    if seg.truth_peaks is not None:
        lines.append("# peaks=" + ",".join(str(int(p)) for p in seg.truth_peaks))
    if seg.ref_hr is not None:
        lines.append(f"# ref_hr={float(seg.ref_hr)!r}")
    lines.extend(repr(float(v)) for v in seg.samples)
    Path(path).write_text("\n".join(lines) + "\n")


def read_segment(path):
    """Parse one segment CSV; every error names the offending line."""
    path = Path(path)
    header, values = {}, []
    try:
        text = path.read_text()
    except UnicodeDecodeError as exc:
        raise DataFormatError(f"{path}: not a text file ({exc.reason})") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if values:
                raise DataFormatError(f"{path}:{lineno}: header line after sample data")
            key, sep, val = line[1:].strip().partition("=")
            if not sep:
                raise DataFormatError(f"{path}:{lineno}: expected '# key=value', got {raw!r}")
            header[key.strip()] = (val.strip(), lineno)
            continue
        try:
            v = float(line.split(",")[0])
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: not a number: {raw!r}") from None
        if not np.isfinite(v):
            raise DataFormatError(f"{path}:{lineno}: non-finite sample {raw!r}")
        values.append(v)

    def field(key, conv, required=False):
        if key not in header:
            if required:
                raise DataFormatError(f"{path}: missing '# {key}=' header")
            return None
        val, lineno = header[key]
        try:
            return conv(val)
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: bad value for {key}: {val!r}") from None

    fs = field("fs", float, required=True)
    if not fs > 0:
        raise DataFormatError(f"{path}:{header['fs'][1]}: fs must be positive")
    subject = field("subject", str) or path.stem
    peaks = field("peaks", lambda s: np.array([int(t) for t in s.split(",") if t.strip()], dtype=np.int64))
    ref_hr = field("ref_hr", float)
    if not values:
        raise DataFormatError(f"{path}: no samples")
    try:
        return PpgSegment(np.array(values), fs, subject, peaks, ref_hr)
    except ValueError as exc:
        lineno = header["peaks"][1] if "peaks" in header else 1
        raise DataFormatError(f"{path}:{lineno}: {exc}") from None


def read_dataset(paths):
    """Segments from files and directories (``*.csv``), sorted by subject id."""
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(p.glob("*.csv")))
        elif p.is_file():
            files.append(p)
        else:
            raise DataFormatError(f"{p}: no such file or directory")
    if not files:
        raise DataFormatError("no segment files found")
    segs = [read_segment(f) for f in files]
    return sorted(segs, key=lambda s: s.subject_id)


# -- weights --------------------------------------------------------------------

def _flags(cfg):
    bits = {"lite": cfg.lite, "no_time_module": not cfg.time_module,
            "no_decoder_attention": not cfg.decoder_attention, "hard_labels": cfg.hard_labels}
    return sum(1 << _FLAG_BITS[k] for k, on in bits.items() if on)


def encode_weights(cfg, weights):
    """Serialise in :func:`param_shapes` order; values are stored as float32."""
    validate_weights(cfg, weights)
    out = [_HEADER.pack(WEIGHTS_MAGIC, WEIGHTS_VERSION,
                        *(getattr(cfg, f) for f in _CONFIG_FIELDS), _flags(cfg))]
    for name in param_shapes(cfg):
        arr = weights[name].data
        key = name.encode("utf-8")
        out.append(struct.pack("<H", len(key)) + key + struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(out)


def decode_weights(blob, source="<bytes>"):
    """Inverse of :func:`encode_weights`; returns (cfg, weights)."""
    if len(blob) < _HEADER.size:
        raise WeightsFormatError(f"{source}: truncated header")
    magic, version, *fields, flags = _HEADER.unpack_from(blob, 0)
    if magic != WEIGHTS_MAGIC:
        raise WeightsFormatError(f"{source}: bad magic {magic!r}")
    if version != WEIGHTS_VERSION:
        raise WeightsFormatError(f"{source}: unsupported format version {version}")
    try:
        cfg = TauConfig(**dict(zip(_CONFIG_FIELDS, fields)),
                        lite=bool(flags >> _FLAG_BITS["lite"] & 1),
                        time_module=not flags >> _FLAG_BITS["no_time_module"] & 1,
                        decoder_attention=not flags >> _FLAG_BITS["no_decoder_attention"] & 1,
                        hard_labels=bool(flags >> _FLAG_BITS["hard_labels"] & 1))
    except ValueError as exc:
        raise WeightsFormatError(f"{source}: invalid config header: {exc}") from None
    weights, pos = {}, _HEADER.size
    while pos < len(blob):
        try:
            (nlen,) = struct.unpack_from("<H", blob, pos)
            name = blob[pos + 2:pos + 2 + nlen].decode("utf-8")
            pos += 2 + nlen
            (rank,) = struct.unpack_from("<B", blob, pos)
            dims = struct.unpack_from(f"<{rank}I", blob, pos + 1)
            pos += 1 + 4 * rank
            count = int(np.prod(dims)) if rank else 1
            if pos + 4 * count > len(blob):
                raise struct.error("payload")
            arr = np.frombuffer(blob, dtype="<f4", count=count, offset=pos).reshape(dims)
            pos += 4 * count
        except (struct.error, UnicodeDecodeError):
            raise WeightsFormatError(f"{source}: truncated or corrupt tensor table at byte {pos}") from None
        weights[name] = Tensor(arr.astype(np.float64), trainable=True)
    validate_weights(cfg, weights)
    return cfg, weights


def write_weights(path, cfg, weights):
    Path(path).write_bytes(encode_weights(cfg, weights))


def read_weights(path):
    path = Path(path)
    if not path.is_file():
        raise DataFormatError(f"{path}: no such weights file")
    return decode_weights(path.read_bytes(), str(path))


# -- reports ----------------------------------------------------------------------

def write_manifest(path, command, config, seed=None, extra=None):
    """JSON record of what produced an output: command, config, seed, code version."""
    from . import __version__
    doc = {"command": command, "config": config, "seed": seed, "code_version": __version__}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "" if v != v else repr(float(v))
    return "" if v is None else str(v)


def write_csv(path, header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")


def _polyline(xs, ys, color, width=1.0):
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    return f'<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{pts}"/>'


def _scale(v, lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0
    return out_lo + (np.asarray(v, dtype=float) - lo) / span * (out_hi - out_lo)


def _svg(width, height, body):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n' + "\n".join(body) + "\n</svg>\n")


def overlay_svg(samples, labels=None, pred=None, truth=None, width=900, height=300):
    """Signal trace with optional label curve, predicted (red) and true (green) peaks."""
    x = np.asarray(samples, dtype=float)
    n = x.size
    xs = _scale(np.arange(n), 0, max(n - 1, 1), 10, width - 10)
    half = height / 2
    body = [f'<rect width="{width}" height="{height}" fill="white"/>',
            _polyline(xs, _scale(x, x.max(), x.min(), 10, half - 5), "black")]
    if labels is not None:
        lab = np.asarray(labels, dtype=float)
        body.append(_polyline(xs, _scale(lab, lab.max(), min(lab.min(), 0), half + 5, height - 10), "steelblue"))
    ys = _scale(x, x.max(), x.min(), 10, half - 5)
    for peaks, color, r in ((truth, "green", 5), (pred, "red", 3)):
        if peaks is None:
            continue
        for p in np.asarray(peaks, dtype=int):
            body.append(f'<circle cx="{xs[p]:.2f}" cy="{ys[p]:.2f}" r="{r}" fill="none" stroke="{color}"/>')
    return _svg(width, height, body)


def bland_altman_svg(a, b, width=500, height=400):
    """Mean-vs-difference scatter with the mean and limits-of-agreement lines."""
    from .metrics import bland_altman
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    mean, diff = (a + b) / 2, a - b
    m, lo, hi = bland_altman(a, b)
    ylo, yhi = min(diff.min(), lo) - 1, max(diff.max(), hi) + 1
    xs = _scale(mean, mean.min(), mean.max(), 40, width - 20)
    ys = _scale(diff, yhi, ylo, 20, height - 30)
    body = [f'<rect width="{width}" height="{height}" fill="white"/>']
    body += [f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="steelblue"/>' for x, y in zip(xs, ys)]
    for level, dash in ((m, ""), (lo, ' stroke-dasharray="4 3"'), (hi, ' stroke-dasharray="4 3"')):
        y = float(_scale(level, yhi, ylo, 20, height - 30))
        body.append(f'<line x1="40" x2="{width - 20}" y1="{y:.2f}" y2="{y:.2f}" stroke="gray"{dash}/>')
        body.append(f'<text x="{width - 18}" y="{y + 4:.2f}" font-size="10">{level:.2f}</text>')
    return _svg(width + 40, height, body)
