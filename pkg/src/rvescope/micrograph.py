"""Two-phase micrograph data model and image I/O.

Phase convention: 0 is the matrix, 1 is the particle phase, so the volume
fraction is simply the mean of the grid.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Micrograph",
    "ImageFormatError",
    "read_gray",
    "load_micrograph",
    "save_pgm",
    "write_meta",
    "read_meta",
    "otsu_threshold",
    "binarize",
    "upsample_nn",
]


class ImageFormatError(ValueError):
    """Raised for unreadable, unsupported or multi-channel images."""


@dataclass(frozen=True, eq=False)
class Micrograph:
    """Binary phase grid plus physical pixel size (um per pixel)."""

    phases: np.ndarray
    scale: float = 1.0
    _vf: float = field(init=False, repr=False)

    def __post_init__(self):
        grid = np.asarray(self.phases)
        if grid.ndim != 2 or grid.shape[0] < 1 or grid.shape[1] < 1:
            raise ValueError(f"phases must be a non-empty 2-D grid, got shape {grid.shape}")
        if grid.dtype != np.uint8:
            if not np.all((grid == 0) | (grid == 1)):
                raise ValueError("phases must contain only 0 (matrix) and 1 (particle)")
            grid = grid.astype(np.uint8)
        elif grid.max(initial=0) > 1:
            raise ValueError("phases must contain only 0 (matrix) and 1 (particle)")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"scale must be strictly positive, got {self.scale!r}")
        grid = np.ascontiguousarray(grid)
        grid.setflags(write=False)
        object.__setattr__(self, "phases", grid)
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "_vf", float(np.count_nonzero(grid)) / grid.size)

    @property
    def height(self) -> int:
        return self.phases.shape[0]

    @property
    def width(self) -> int:
        return self.phases.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.phases.shape

    @property
    def volume_fraction(self) -> float:
        return self._vf

    def __eq__(self, other):
        if not isinstance(other, Micrograph):
            return NotImplemented
        return self.scale == other.scale and np.array_equal(self.phases, other.phases)

    __hash__ = None


# --------------------------------------------------------------------------
# PGM / PNG readers

_PGM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _pgm_header(data: bytes):
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = _PGM_TOKEN.match(data, pos)
        if m is None:
            raise ImageFormatError("truncated PGM header")
        tokens.append(m.group(1))
        pos = m.end()
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ImageFormatError(f"malformed PGM header: {exc}") from None
    if width < 1 or height < 1:
        raise ImageFormatError(f"PGM has invalid size {width}x{height}")
    if not 0 < maxval <= 255:
        raise ImageFormatError(f"only 8-bit PGM is supported (maxval={maxval})")
    return magic, width, height, maxval, pos


def _read_pgm(data: bytes) -> np.ndarray:
    magic, width, height, _, pos = _pgm_header(data)
    count = width * height
    if magic == b"P5":
        # exactly one whitespace byte separates the header from the raster
        raster = data[pos + 1 : pos + 1 + count]
        if len(raster) != count:
            raise ImageFormatError(f"P5 raster too short: {len(raster)} of {count} bytes")
        return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()
    if magic == b"P2":
        body = re.sub(rb"#[^\n]*", b"", data[pos:])
        values = np.array(body.split(), dtype=np.int64)
        if values.size != count:
            raise ImageFormatError(f"P2 raster has {values.size} values, expected {count}")
        return values.reshape(height, width).astype(np.uint8)
    if magic in (b"P3", b"P6"):
        raise ImageFormatError("color PPM images are not supported: image has more than one channel")
    raise ImageFormatError(f"unsupported format (magic {magic[:2]!r})")


def _read_png(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as img:
        if img.mode == "1":
            return np.asarray(img.convert("L"), dtype=np.uint8)
        if img.mode == "L":
            return np.asarray(img, dtype=np.uint8)
        if img.mode in ("I;16", "I;16B", "I", "F"):
            raise ImageFormatError(f"only 8-bit grayscale PNG is supported (mode {img.mode})")
        raise ImageFormatError(
            f"image mode {img.mode!r} has more than one channel; supply a single-channel grayscale image"
        )


def read_gray(path) -> np.ndarray:
    """Read an 8-bit single-channel PGM (P2/P5) or PNG as a uint8 array."""
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(8)
    except OSError as exc:
        raise ImageFormatError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if head.startswith(b"\x89PNG"):
        try:
            return _read_png(path)
        except ImageFormatError:
            raise
        except Exception as exc:  # Pillow raises a zoo of types on corrupt files
            raise ImageFormatError(f"cannot decode PNG {path}: {exc}") from exc
    if head[:1] == b"P":
        with open(path, "rb") as fh:
            return _read_pgm(fh.read())
    raise ImageFormatError(f"{path}: unsupported format (expected PGM P2/P5 or PNG)")


def save_pgm(path, grid, binary=True):
    """Write an 8-bit grid as PGM. A Micrograph is written with 1 -> 255."""
    if isinstance(grid, Micrograph):
        grid = grid.phases * np.uint8(255)
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise ValueError("PGM needs a 2-D grid")
    if grid.min(initial=0) < 0 or grid.max(initial=0) > 255:
        raise ValueError("PGM values must lie in [0, 255]")
    grid = grid.astype(np.uint8)
    h, w = grid.shape
    with open(path, "wb") as fh:
        if binary:
            fh.write(b"P5\n%d %d\n255\n" % (w, h))
            fh.write(grid.tobytes())
        else:
            fh.write(b"P2\n%d %d\n255\n" % (w, h))
            for row in grid:
                fh.write(b" ".join(b"%d" % v for v in row) + b"\n")


def _meta_candidates(path):
    path = os.fspath(path)
    yield path + ".meta"
    root, ext = os.path.splitext(path)
    if ext:
        yield root + ".meta"


def write_meta(path, scale):
    """Write the `<image>.meta` sidecar holding the pixel size."""
    meta = os.fspath(path) + ".meta"
    with open(meta, "w", newline="\n") as fh:
        fh.write(f"scale_um_per_px = {float(scale)!r}\n")
    return meta


def read_meta(path):
    """Return the sidecar scale for `path`, or None if there is no sidecar."""
    for meta in _meta_candidates(path):
        if not os.path.exists(meta):
            continue
        with open(meta) as fh:
            for line in fh:
                key, sep, value = line.partition("=")
                if sep and key.strip() == "scale_um_per_px":
                    scale = float(value)
                    if not scale > 0:
                        raise ImageFormatError(f"{meta}: scale must be positive")
                    return scale
    return None


# --------------------------------------------------------------------------
# thresholding and resampling


def otsu_threshold(gray) -> int:
    """Otsu level for an 8-bit image, in the ``>= threshold -> 1`` convention.

    Returns t such that intensities < t form the low class. Among levels with
    equal between-class variance the smallest is taken. A constant image has
    no split and returns its own value.
    """
    gray = np.asarray(gray)
    hist = np.bincount(gray.ravel().astype(np.int64), minlength=256)[:256].astype(np.float64)
    total = hist.sum()
    levels = np.arange(256, dtype=np.float64)
    w0 = np.cumsum(hist)[:-1]  # mass of intensities <= k, k = 0..254
    mu_sum = np.cumsum(hist * levels)[:-1]
    w1 = total - w0
    valid = (w0 > 0) & (w1 > 0)
    if not valid.any():
        return int(gray.flat[0])
    mu0 = np.where(valid, mu_sum / np.where(w0 > 0, w0, 1), 0.0)
    mu1 = np.where(valid, (mu_sum[-1] + 255.0 * hist[255] - mu_sum) / np.where(w1 > 0, w1, 1), 0.0)
    between = np.where(valid, w0 * w1 * (mu0 - mu1) ** 2, -1.0)
    k = int(np.argmax(between))
    return k + 1


def binarize(grid, threshold, scale=1.0) -> Micrograph:
    """Map intensities >= threshold to 1 (particle) and the rest to 0."""
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise ValueError("intensity grid must be 2-D")
    return Micrograph((grid >= threshold).astype(np.uint8), scale)


def load_micrograph(path, threshold=None, scale=None) -> Micrograph:
    """Load and binarize a grayscale micrograph.

    Without `threshold` the level comes from Otsu's method. The pixel size is
    taken from `scale`, else from the sidecar file, else 1.0 um/pixel.
    """
    gray = read_gray(path)
    if threshold is None:
        threshold = otsu_threshold(gray)
    if scale is None:
        scale = read_meta(path)
    return binarize(gray, threshold, 1.0 if scale is None else scale)


def upsample_nn(m: Micrograph, factor: int) -> Micrograph:
    """Replicate every pixel factor x factor times; the physical extent is kept."""
    if int(factor) != factor or factor < 1:
        raise ValueError(f"upsampling factor must be a positive integer, got {factor!r}")
    factor = int(factor)
    if factor == 1:
        return m
    grid = np.repeat(np.repeat(m.phases, factor, axis=0), factor, axis=1)
    return Micrograph(grid, m.scale / factor)
