"""Bayer preprocessing, colour conversion, cropping, augmentation and file I/O.

Images are plain numpy arrays: grayscale ``(H, W)`` and RGB ``(H, W, 3)``
floats in [0, 1]. Raw sensor mosaics are wrapped in :class:`BayerImage`.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from .errors import ContractError, DataError

EXPOSURE_TAGS = ("156us", "1248us")
AUGMENT_OPS = ("identity", "flip_h", "flip_v", "rot90", "rot180", "rot270")


@dataclass
class BayerImage:
    """Single-channel colour-filter-array capture.

    ``offset`` shifts the RGGB tile: the site at (row, col) has colour
    ``RGGB[(row + dy) % 2][(col + dx) % 2]``; (0, 0) puts red on even/even.
    """

    values: np.ndarray
    bit_depth: int = 16
    offset: Tuple[int, int] = (0, 0)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise ContractError(f"Bayer data must be 2-D, got shape {self.values.shape}")
        h, w = self.values.shape
        if h % 2 or w % 2:
            raise ContractError(f"Bayer extents must be even, got {h}x{w}")
        if not 1 <= self.bit_depth <= 16:
            raise ContractError(f"bit depth must be in 1..16, got {self.bit_depth}")
        if self.values.min(initial=0) < 0 or self.values.max(initial=0) > self.maxval:
            raise ContractError(f"values exceed {self.bit_depth}-bit range")

    @property
    def maxval(self) -> int:
        return (1 << self.bit_depth) - 1

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def site_colors(self) -> np.ndarray:
        """Per-pixel site code: 0 red, 1 green on a red row, 2 green on a blue row, 3 blue."""
        dy, dx = self.offset
        rows = (np.arange(self.height)[:, None] + dy) % 2
        cols = (np.arange(self.width)[None, :] + dx) % 2
        return 2 * rows + cols


@dataclass
class ImagePair:
    """Registered (low-light, normal-light) grayscale pair."""

    low: np.ndarray
    high: np.ndarray
    stratum: int = 0
    exposure: str = "156us"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.shape(self.low) != np.shape(self.high):
            raise ContractError(f"pair extents differ: {np.shape(self.low)} vs {np.shape(self.high)}")


# ---------------------------------------------------------------------------
# Bayer conversion
# ---------------------------------------------------------------------------

def demosaic_bilinear(bayer: BayerImage) -> np.ndarray:
    """Bilinear demosaicing of an RGGB mosaic into an ``(H, W, 3)`` image in [0, 1].

    At a red site green is the mean of the 4-cross and blue of the 4 diagonal
    neighbours; blue sites mirror this. Green sites take 2-neighbour means:
    horizontal for the colour sharing the row, vertical for the other.
    Borders are handled by reflective padding, which keeps the CFA parity.
    """
    v = bayer.values.astype(np.float64)
    p = np.pad(v, 1, mode="reflect")
    c = p[1:-1, 1:-1]
    n, s = p[:-2, 1:-1], p[2:, 1:-1]
    w, e = p[1:-1, :-2], p[1:-1, 2:]
    nw, ne, sw, se = p[:-2, :-2], p[:-2, 2:], p[2:, :-2], p[2:, 2:]

    cross = (n + s + w + e) / 4.0
    diag = (nw + se + ne + sw) / 4.0
    horiz = (w + e) / 2.0
    vert = (n + s) / 2.0

    site = bayer.site_colors()
    red = np.select([site == 0, site == 1, site == 2], [c, horiz, vert], diag)
    green = np.where((site == 1) | (site == 2), c, cross)
    blue = np.select([site == 3, site == 1, site == 2], [c, vert, horiz], diag)
    return np.stack([red, green, blue], axis=-1) / bayer.maxval


def mosaic(img: np.ndarray, bit_depth: int = 16, offset: Tuple[int, int] = (0, 0)) -> BayerImage:
    """Sample one channel per site (RGGB layout) and quantise to ``bit_depth`` bits."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ContractError(f"mosaic expects (H, W, 3), got {img.shape}")
    h, w, _ = img.shape
    maxval = (1 << bit_depth) - 1
    probe = BayerImage(np.zeros((h, w), dtype=np.uint16), bit_depth, offset)
    channel = np.array([0, 1, 1, 2])[probe.site_colors()]
    picked = np.take_along_axis(img, channel[..., None], axis=2)[..., 0]
    values = np.rint(np.clip(picked, 0.0, 1.0) * maxval).astype(np.uint16)
    return BayerImage(values, bit_depth, offset)


def rgb_to_gray(img: np.ndarray) -> np.ndarray:
    """HSI intensity (R + G + B) / 3."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape[-1] != 3:
        raise ContractError(f"expected trailing RGB axis, got shape {img.shape}")
    return (img[..., 0] + img[..., 1] + img[..., 2]) / 3.0


def gray_to_rgb(gray: np.ndarray) -> np.ndarray:
    return np.repeat(np.asarray(gray, dtype=np.float64)[..., None], 3, axis=-1)


def center_crop(img: np.ndarray, size: Union[int, Tuple[int, int]]) -> np.ndarray:
    """Centred window; offsets are floor((dim - size) / 2)."""
    th, tw = (size, size) if isinstance(size, (int, np.integer)) else size
    h, w = img.shape[:2]
    if th > h or tw > w or th < 1 or tw < 1:
        raise ContractError(f"cannot crop {h}x{w} to {th}x{tw}")
    top, left = (h - th) // 2, (w - tw) // 2
    return img[top : top + th, left : left + tw]


def _transform(img: np.ndarray, op: str) -> np.ndarray:
    if op == "identity":
        return img
    if op == "flip_h":
        return img[:, ::-1]
    if op == "flip_v":
        return img[::-1]
    if op == "rot90":
        return np.rot90(img, 1, axes=(0, 1))
    if op == "rot180":
        return np.rot90(img, 2, axes=(0, 1))
    if op == "rot270":
        return np.rot90(img, 3, axes=(0, 1))
    raise ContractError(f"unknown augmentation {op!r}; choose from {AUGMENT_OPS}")


def augment(pair: ImagePair, op: str) -> ImagePair:
    """Apply the same dihedral transform to both images of a pair.

    ``rot90`` rotates counter-clockwise; ``flip_h`` mirrors left/right.
    """
    return ImagePair(
        np.ascontiguousarray(_transform(pair.low, op)),
        np.ascontiguousarray(_transform(pair.high, op)),
        pair.stratum,
        pair.exposure,
        dict(pair.meta),
    )


def augment_array(img: np.ndarray, op: str) -> np.ndarray:
    return np.ascontiguousarray(_transform(img, op))


# ---------------------------------------------------------------------------
# Netpbm I/O (binary P5 / P6)
# ---------------------------------------------------------------------------

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _parse_header(blob: bytes):
    pos = 0
    tokens = []
    for _ in range(4):
        m = _TOKEN.match(blob, pos)
        if not m:
            raise DataError("truncated Netpbm header")
        tokens.append(m.group(1))
        pos = m.end()
    magic, w, h, maxval = tokens
    if magic not in (b"P5", b"P6"):
        raise DataError(f"unsupported Netpbm magic {magic!r}; expected P5 or P6")
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise DataError("non-integer Netpbm header field") from None
    if w < 1 or h < 1 or not 1 <= maxval <= 65535:
        raise DataError(f"invalid Netpbm header: {w}x{h}, maxval {maxval}")
    if pos >= len(blob) or not blob[pos : pos + 1].isspace():
        raise DataError("missing whitespace after Netpbm header")
    return magic, w, h, maxval, pos + 1


def decode_netpbm(blob: bytes) -> Tuple[np.ndarray, int]:
    magic, w, h, maxval, start = _parse_header(blob)
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = w * h * channels
    if len(blob) - start < count * dtype.itemsize:
        raise DataError("truncated Netpbm raster")
    data = np.frombuffer(blob, dtype=dtype, count=count, offset=start).astype(np.uint16)
    shape = (h, w, 3) if channels == 3 else (h, w)
    data = data.reshape(shape)
    if data.max(initial=0) > maxval:
        raise DataError("sample exceeds declared maxval")
    return data, maxval


def encode_netpbm(values: np.ndarray, maxval: int) -> bytes:
    values = np.asarray(values)
    if values.ndim == 2:
        magic = b"P5"
    elif values.ndim == 3 and values.shape[2] == 3:
        magic = b"P6"
    else:
        raise ContractError(f"cannot encode image of shape {values.shape}")
    if not 1 <= maxval <= 65535:
        raise ContractError(f"maxval must be in 1..65535, got {maxval}")
    if values.min(initial=0) < 0 or values.max(initial=0) > maxval:
        raise ContractError("sample outside [0, maxval]")
    dtype = ">u2" if maxval > 255 else "u1"
    h, w = values.shape[:2]
    header = b"%s\n%d %d\n%d\n" % (magic, w, h, maxval)
    return header + np.ascontiguousarray(values.astype(dtype)).tobytes()


def read_image(path) -> Tuple[np.ndarray, int]:
    """Read a binary PGM/PPM; returns (integer samples, maxval)."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    return decode_netpbm(blob)


def write_image(path, values: np.ndarray, maxval: int) -> None:
    Path(path).write_bytes(encode_netpbm(values, maxval))


def load_float(path) -> np.ndarray:
    """Read a PGM/PPM and scale samples to [0, 1]."""
    data, maxval = read_image(path)
    return data.astype(np.float64) / maxval


def save_float(path, img: np.ndarray, maxval: int = 65535) -> None:
    """Quantise a [0, 1] image to ``maxval`` levels and write it."""
    q = np.rint(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * maxval).astype(np.uint16)
    write_image(path, q, maxval)


def read_bayer(path, offset: Tuple[int, int] = (0, 0)) -> BayerImage:
    data, maxval = read_image(path)
    if data.ndim != 2:
        raise DataError(f"{path}: a Bayer mosaic must be a single-channel PGM")
    bits = int(maxval).bit_length()
    if (1 << bits) - 1 != maxval:
        raise DataError(f"{path}: maxval {maxval} is not 2^k - 1")
    try:
        return BayerImage(data, bits, offset)
    except ContractError as exc:
        raise DataError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# dataset manifest
# ---------------------------------------------------------------------------

@dataclass
class ManifestEntry:
    low: str
    high: str
    stratum: int
    exposure: str


def read_manifest(path) -> List[ManifestEntry]:
    """Tab-separated: low path, high path, stratum id, exposure tag."""
    entries = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc.strerror}") from None
    for lineno, line in enumerate(lines, 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise DataError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
        low, high, stratum, tag = parts
        if tag not in EXPOSURE_TAGS:
            raise DataError(f"{path}:{lineno}: unknown exposure tag {tag!r}")
        try:
            stratum = int(stratum)
        except ValueError:
            raise DataError(f"{path}:{lineno}: stratum id must be an integer") from None
        entries.append(ManifestEntry(low, high, stratum, tag))
    return entries


def write_manifest(path, entries: List[ManifestEntry]) -> None:
    lines = [f"{e.low}\t{e.high}\t{e.stratum}\t{e.exposure}\n" for e in entries]
    Path(path).write_text("".join(lines))


def load_pairs(manifest_path) -> List[ImagePair]:
    """Load every pair listed in a manifest; paths resolve relative to it."""
    root = Path(manifest_path).parent
    pairs = []
    for e in read_manifest(manifest_path):
        low = load_float(root / e.low)
        high = load_float(root / e.high)
        if low.ndim == 3:
            low = rgb_to_gray(low)
        if high.ndim == 3:
            high = rgb_to_gray(high)
        pairs.append(ImagePair(low, high, e.stratum, e.exposure, {"low": e.low, "high": e.high}))
    return pairs

