"""File formats: NetPBM images and masks, manifests, deep-feature tables, feature CSVs."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Fixed order of the Tumor Specific feature columns.
TSF_COLUMNS = (
    "irregularity",
    "roughness",
    "area",
    "mean_radius",
    "mean_local_entropy",
    "weight_range",
    "enhancement_factor",
    "fractal_dimension",
    "approx_entropy",
    "sample_entropy",
    "perm_entropy",
    "lyapunov",
    "rei",
    "d_skull",
    "contact_ratio",
    "mls",
    "iw_irregularity",
    "iw_roughness",
)

ORIENTATIONS = ("axial", "sagittal", "coronal", "unknown")
LABELS = ("glioma", "meningioma", "pituitary")
MANIFEST_HEADER = ("sample_id", "image", "mask", "orientation", "label", "deep_key")


class FormatError(ValueError):
    """Raised when an input file does not match its expected format."""


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit grayscale image; ``pixels`` has shape (height, width), dtype uint8."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"image must be a non-empty 2D grid, got shape {px.shape}")
        px = px.astype(np.uint8, copy=True)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.pixels if dtype is None else self.pixels.astype(dtype)

    def __eq__(self, other):
        return isinstance(other, GrayImage) and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Boolean membership grid of shape (height, width); True marks the region."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 2 or d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError(f"mask must be a non-empty 2D grid, got shape {d.shape}")
        d = d.astype(bool, copy=True)
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def count(self) -> int:
        return int(self.data.sum())

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def __eq__(self, other):
        return isinstance(other, BinaryMask) and np.array_equal(self.data, other.data)


@dataclass(frozen=True)
class SampleManifest:
    sample_id: str
    image_path: str
    mask_path: str
    orientation: str = "unknown"
    label: str | None = None
    deep_feature_row: str | None = None


@dataclass
class FeatureRecord:
    """One sample's Tumor Specific features, keyed by :data:`TSF_COLUMNS`.

    ``None`` marks an orientation-gated value (e.g. midline shift on a
    non-axial slice). ``deep`` optionally carries the raw deep-feature row.
    """

    sample_id: str
    values: dict = field(default_factory=dict)
    deep: np.ndarray | None = None

    def vector(self) -> np.ndarray:
        """TSF values in column order, with NaN for missing entries."""
        return np.array(
            [np.nan if self.values.get(c) is None else float(self.values[c]) for c in TSF_COLUMNS]
        )


# ---------------------------------------------------------------------------
# NetPBM


def _read_header(buf: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset just past the terminating whitespace byte.
    """
    tokens = []
    pos = 0
    n = len(buf)
    while len(tokens) < count:
        while pos < n and (buf[pos : pos + 1].isspace() or buf[pos] == ord("#")):
            if buf[pos] == ord("#"):
                while pos < n and buf[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        if pos >= n:
            raise FormatError(f"truncated header at byte offset {pos}")
        start = pos
        while pos < n and not buf[pos : pos + 1].isspace() and buf[pos] != ord("#"):
            pos += 1
        tokens.append((buf[start:pos], start))
    # exactly one whitespace byte separates the header from a binary raster
    if pos < n and buf[pos : pos + 1].isspace():
        pos += 1
    return tokens, pos


def _header_int(token, name):
    raw, offset = token
    try:
        value = int(raw)
    except ValueError:
        raise FormatError(f"invalid {name} {raw!r} at byte offset {offset}") from None
    if value < 1:
        raise FormatError(f"invalid {name} {value} at byte offset {offset}")
    return value


def decode_pgm(buf: bytes) -> GrayImage:
    """Decode a P2 (ASCII) or P5 (binary) graymap held in memory."""
    if len(buf) < 2 or buf[:2] not in (b"P2", b"P5"):
        raise FormatError(f"malformed magic number {buf[:2]!r} at byte offset 0")
    magic = buf[:2]
    tokens, pos = _read_header(buf[2:], 3)
    tokens = [(raw, off + 2) for raw, off in tokens]
    pos += 2
    width = _header_int(tokens[0], "width")
    height = _header_int(tokens[1], "height")
    maxval = _header_int(tokens[2], "maxval")
    if maxval > 255:
        raise FormatError(f"unsupported maxval {maxval} (> 255) at byte offset {tokens[2][1]}")
    npix = width * height

    if magic == b"P5":
        end = pos + npix
        if len(buf) < end:
            raise FormatError(
                f"truncated payload: expected {npix} bytes from byte offset {pos}, "
                f"file ends at byte offset {len(buf)}"
            )
        values = np.frombuffer(buf, dtype=np.uint8, count=npix, offset=pos)
    else:
        values = np.empty(npix, dtype=np.int64)
        tail = buf[pos:]
        i = 0
        off = 0
        for chunk in tail.split():
            # locate the token so errors can report where it was
            off = tail.index(chunk, off)
            if i >= npix:
                break
            try:
                values[i] = int(chunk)
            except ValueError:
                raise FormatError(f"invalid pixel {chunk!r} at byte offset {pos + off}") from None
            off += len(chunk)
            i += 1
        if i < npix:
            raise FormatError(
                f"truncated payload: {i} of {npix} pixels present, file ends at byte offset {len(buf)}"
            )
    if values.max(initial=0) > maxval:
        raise FormatError(f"pixel value exceeds maxval {maxval}")
    return GrayImage(np.asarray(values, dtype=np.uint8).reshape(height, width))


def load_pgm(path) -> GrayImage:
    """Load a NetPBM graymap (P2 or P5) with maxval <= 255."""
    with open(path, "rb") as fh:
        buf = fh.read()
    try:
        return decode_pgm(buf)
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


def load_mask(path) -> BinaryMask:
    """Load a graymap and threshold it: membership is ``intensity > 0``."""
    return BinaryMask(load_pgm(path).pixels > 0)


def encode_pgm(image, binary: bool = True) -> bytes:
    px = np.asarray(image, dtype=np.uint8)
    h, w = px.shape
    if binary:
        return f"P5\n{w} {h}\n255\n".encode("ascii") + px.tobytes()
    rows = "\n".join(" ".join(str(v) for v in row) for row in px)
    return f"P2\n{w} {h}\n255\n{rows}\n".encode("ascii")


def save_pgm(image, path, binary: bool = True) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(image, binary=binary))


def check_pair(image: GrayImage, mask: BinaryMask) -> None:
    if (image.height, image.width) != (mask.height, mask.width):
        raise FormatError(
            f"image is {image.width}x{image.height} but mask is {mask.width}x{mask.height}"
        )


# ---------------------------------------------------------------------------
# CSV inputs


def load_manifest(path) -> list[SampleManifest]:
    """Parse a sample manifest CSV.

    Image and mask paths are resolved relative to the manifest's directory.
    Orientation tokens are case-insensitive; empty label/deep_key become None.
    """
    base = Path(path).parent
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: empty manifest, no header") from None
        if tuple(header) != MANIFEST_HEADER:
            raise FormatError(f"{path}: expected header {','.join(MANIFEST_HEADER)}, got {','.join(header)}")
        rows = []
        seen: dict[str, list[int]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(MANIFEST_HEADER):
                raise FormatError(f"{path}:{lineno}: expected {len(MANIFEST_HEADER)} fields, got {len(row)}")
            sid, image, mask, orient, label, deep = (c.strip() for c in row)
            orient = orient.lower()
            if orient not in ORIENTATIONS:
                raise FormatError(f"{path}:{lineno}: unknown orientation {orient!r}")
            label = label.lower() or None
            if label is not None and label not in LABELS:
                raise FormatError(f"{path}:{lineno}: unknown label {label!r}")
            seen.setdefault(sid, []).append(lineno)
            rows.append(
                SampleManifest(
                    sample_id=sid,
                    image_path=str(base / image),
                    mask_path=str(base / mask),
                    orientation=orient,
                    label=label,
                    deep_feature_row=deep or None,
                )
            )
    dups = {k: v for k, v in seen.items() if len(v) > 1}
    if dups:
        detail = "; ".join(f"{k!r} on lines {', '.join(map(str, v))}" for k, v in dups.items())
        raise FormatError(f"{path}: duplicate sample_id {detail}")
    return rows


def write_manifest(rows, path) -> None:
    base = Path(path).parent
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for r in rows:
            w.writerow(
                [
                    r.sample_id,
                    os.path.relpath(r.image_path, base),
                    os.path.relpath(r.mask_path, base),
                    r.orientation,
                    r.label or "",
                    r.deep_feature_row or "",
                ]
            )


@dataclass
class DeepFeatureTable:
    keys: list
    values: np.ndarray  # (rows, width)
    columns: list

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def row(self, key) -> np.ndarray:
        return self.values[self._index[key]]

    def __post_init__(self):
        self._index = {k: i for i, k in enumerate(self.keys)}

    def __contains__(self, key):
        return key in self._index


def load_deep_features(path) -> DeepFeatureTable:
    """Load a ``key,f0,f1,...`` CSV of precomputed deep features."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file, no header") from None
        if len(header) < 2:
            raise FormatError(f"{path}: header needs a key column and at least one feature")
        width = len(header) - 1
        keys, rows = [], []
        for r, row in enumerate(reader):
            if not row:
                continue
            if len(row) != width + 1:
                raise FormatError(f"{path}: ragged row {r} has {len(row) - 1} values, expected {width}")
            vals = []
            for c, cell in enumerate(row[1:]):
                try:
                    v = float(cell)
                except ValueError:
                    raise FormatError(f"{path}: non-numeric cell at row {r}, column {c}: {cell!r}") from None
                if not math.isfinite(v):
                    raise FormatError(f"{path}: non-finite cell at row {r}, column {c}: {cell!r}")
                vals.append(v)
            keys.append(row[0].strip())
            rows.append(vals)
    if len(set(keys)) != len(keys):
        raise FormatError(f"{path}: duplicate keys")
    values = np.array(rows, dtype=float).reshape(len(rows), width)
    return DeepFeatureTable(keys=keys, values=values, columns=[h.strip() for h in header[1:]])


# ---------------------------------------------------------------------------
# feature CSV


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{float(v):.6g}"


def write_feature_csv(records, path) -> None:
    """Write feature records as CSV, sorted by sample_id.

    Values use 6 significant digits and missing values are empty cells, so
    identical records always produce identical bytes. If any record carries a
    deep-feature row, every record must, and ``deep_0..deep_{d-1}`` columns are
    appended.
    """
    records = sorted(records, key=lambda r: r.sample_id)
    if not records:
        raise ValueError("no feature records to write")
    with_deep = [r.deep is not None for r in records]
    if any(with_deep) and not all(with_deep):
        raise ValueError("either all or no records must carry deep features")
    width = len(records[0].deep) if all(with_deep) else 0
    header = ["sample_id", *TSF_COLUMNS, *(f"deep_{j}" for j in range(width))]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for rec in records:
            unknown = set(rec.values) - set(TSF_COLUMNS)
            if unknown:
                raise ValueError(f"{rec.sample_id}: unknown feature columns {sorted(unknown)}")
            row = [rec.sample_id, *(_fmt(rec.values.get(c)) for c in TSF_COLUMNS)]
            if width:
                if len(rec.deep) != width:
                    raise ValueError(f"{rec.sample_id}: deep row width {len(rec.deep)} != {width}")
                row.extend(_fmt(v) for v in rec.deep)
            w.writerow(row)


def read_feature_csv(path) -> list[FeatureRecord]:
    """Parse a feature CSV produced by :func:`write_feature_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty feature file") from None
        ntsf = len(TSF_COLUMNS)
        if header[0] != "sample_id" or tuple(header[1 : 1 + ntsf]) != TSF_COLUMNS:
            raise FormatError(
                f"{path}: feature columns do not match the schema\n"
                f"  expected: sample_id,{','.join(TSF_COLUMNS)}\n"
                f"  found:    {','.join(header[: 1 + ntsf])}"
            )
        deep_cols = header[1 + ntsf :]
        if deep_cols != [f"deep_{j}" for j in range(len(deep_cols))]:
            raise FormatError(f"{path}: unexpected trailing columns {deep_cols}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                values = {c: (float(v) if v != "" else None) for c, v in zip(TSF_COLUMNS, row[1 : 1 + ntsf])}
                deep = np.array([float(v) for v in row[1 + ntsf :]]) if deep_cols else None
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            out.append(FeatureRecord(row[0], values, deep))
    return out
