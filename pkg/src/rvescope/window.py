"""Moving-window means of a whitened score field via integral images.

A window of side w "centred" at (r, c) covers rows r - (w-1)//2 .. r + w//2
(and likewise columns); for even w the centre is the top-left pixel of the
central 2x2 block. Only windows lying fully inside the field are used.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .score import WhitenedField

__all__ = [
    "IntegralField",
    "WindowSpec",
    "SizeStatistics",
    "build_integral",
    "window_mean_at",
    "sweep_size",
    "sweep_sizes",
]

# budget (bytes) for one block of integral images
INTEGRAL_BUDGET = 256 * 1024 * 1024
ROW_CHUNK = 64


def _field_array(z):
    arr = z.z if isinstance(z, WhitenedField) else np.asarray(z)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"expected an (H, W) or (H, W, d) field, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class IntegralField:
    """Zero-padded prefix sums: sums[i, j] = total of field[:i, :j]."""

    sums: np.ndarray

    @property
    def shape(self):
        return self.sums.shape[0] - 1, self.sums.shape[1] - 1

    @property
    def d(self):
        return self.sums.shape[2]

    def rect_sum(self, r0, c0, r1, c1):
        """Sum over rows r0..r1-1 and columns c0..c1-1."""
        S = self.sums
        return S[r1, c1] - S[r0, c1] - S[r1, c0] + S[r0, c0]


def build_integral(z, components=None) -> IntegralField:
    arr = _field_array(z)
    if components is not None:
        arr = arr[:, :, components]
    h, w, d = arr.shape
    sums = np.zeros((h + 1, w + 1, d), dtype=np.float64)
    np.cumsum(arr, axis=0, dtype=np.float64, out=sums[1:, 1:])
    np.cumsum(sums[1:, 1:], axis=1, out=sums[1:, 1:])
    return IntegralField(sums)


@dataclass(frozen=True)
class WindowSpec:
    w: int
    stride: int = 1

    def __post_init__(self):
        if int(self.w) != self.w or self.w < 1:
            raise ValueError(f"window size must be a positive integer, got {self.w!r}")
        if int(self.stride) != self.stride or self.stride < 1:
            raise ValueError(f"stride must be a positive integer, got {self.stride!r}")

    @property
    def n_pixels(self):
        return self.w * self.w

    @property
    def before(self):
        return (self.w - 1) // 2

    @property
    def after(self):
        return self.w // 2

    def grid(self, shape):
        """Number of strided window positions along each axis."""
        h, w = shape
        if self.w > min(h, w):
            raise ValueError(
                f"window size {self.w} exceeds the score field ({h}x{w}); "
                f"the largest feasible size is {min(h, w)}"
            )
        return -(-(h - self.w + 1) // self.stride), -(-(w - self.w + 1) // self.stride)

    def n_positions(self, shape):
        a, b = self.grid(shape)
        return a * b


@dataclass(frozen=True)
class SizeStatistics:
    w: int
    n_positions: int
    d_bar: float
    d_min: float
    d_median: float
    d_max: float


def window_mean_at(ints: IntegralField, spec: WindowSpec, pos) -> np.ndarray:
    """Mean of the field over the window centred at `pos`."""
    r, c = pos
    h, w = ints.shape
    r0, c0 = r - spec.before, c - spec.before
    r1, c1 = r + spec.after + 1, c + spec.after + 1
    if r0 < 0 or c0 < 0 or r1 > h or c1 > w:
        raise ValueError(f"window of size {spec.w} centred at {pos} leaves the {h}x{w} field")
    return ints.rect_sum(r0, c0, r1, c1) / spec.n_pixels


def _accumulate(ints: IntegralField, spec: WindowSpec, out):
    """Add the squared window means of the components in `ints` to `out`."""
    S = ints.sums
    w, s = spec.w, spec.stride
    nr, nc = out.shape
    inv = 1.0 / spec.n_pixels
    cols_top = slice(0, (nc - 1) * s + 1, s)
    cols_bot = slice(w, w + (nc - 1) * s + 1, s)
    for i0 in range(0, nr, ROW_CHUNK):
        i1 = min(i0 + ROW_CHUNK, nr)
        top = slice(i0 * s, (i1 - 1) * s + 1, s)
        bot = slice(i0 * s + w, (i1 - 1) * s + w + 1, s)
        m = S[bot, cols_bot] - S[top, cols_bot]
        m -= S[bot, cols_top]
        m += S[top, cols_top]
        m *= inv
        out[i0:i1] += np.einsum("ijk,ijk->ij", m, m)


def _summarise(w, D):
    flat = D.ravel()
    return SizeStatistics(
        w=int(w),
        n_positions=int(flat.size),
        d_bar=float(np.mean(flat)),  # numpy reduces contiguous float arrays pairwise
        d_min=float(flat.min()),
        d_median=float(np.median(flat)),
        d_max=float(flat.max()),
    )


def sweep_sizes(z, sizes, stride=1, return_maps=False):
    """Window statistics for every size in `sizes`.

    D at a position is the squared norm of the window mean of the whitened
    field; the result per size holds their mean over all strided positions
    and (min, median, max). Components are processed in blocks so the
    integral images stay within INTEGRAL_BUDGET bytes.
    """
    arr = _field_array(z)
    h, w, d = arr.shape
    specs = [WindowSpec(int(k), stride) for k in sizes]
    maps = [np.zeros(sp.grid((h, w)), dtype=np.float64) for sp in specs]
    per_comp = (h + 1) * (w + 1) * 8
    block = max(1, min(d, INTEGRAL_BUDGET // per_comp))
    for c0 in range(0, d, block):
        ints = build_integral(arr, slice(c0, min(c0 + block, d)))
        for sp, D in zip(specs, maps):
            _accumulate(ints, sp, D)
        del ints
    stats = [_summarise(sp.w, D) for sp, D in zip(specs, maps)]
    return (stats, maps) if return_maps else stats


def sweep_size(z, w, stride=1) -> SizeStatistics:
    return sweep_sizes(z, [w], stride)[0]
