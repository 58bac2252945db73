"""Neighbourhood regression dataset built from a micrograph.

Each interior pixel i (one with a full l_s x l_s neighbourhood) gives a sample
(x_i, y_i): y_i is the pixel value and x_i lists the neighbourhood in raster
order, top-left to bottom-right, with the centre pixel skipped. Samples are
numbered row-major over the interior grid. Features are never materialised
for the whole image; blocks are gathered on demand from a strided view.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .micrograph import Micrograph

__all__ = ["NeighborhoodDataset", "extract_dataset", "neighbor_offsets"]

DEFAULT_BLOCK = 1 << 14


def neighbor_offsets(ls):
    """(drow, dcol) of every feature relative to the centre pixel, in feature order."""
    m = (ls - 1) // 2
    offs = [(i - m, j - m) for i in range(ls) for j in range(ls) if (i, j) != (m, m)]
    return np.array(offs, dtype=np.int64)


class NeighborhoodDataset:
    """Immutable view of the (x_i, y_i) samples of a micrograph.

    Parameters
    ----------
    micrograph : Micrograph
    ls : int
        Odd neighbourhood side, 3 <= ls <= min(H, W).
    index : array of int, optional
        Restrict to these sample numbers (used for cross-validation folds).
    """

    def __init__(self, micrograph: Micrograph, ls: int, index=None):
        if int(ls) != ls or ls < 3 or ls % 2 == 0:
            raise ValueError(f"neighbourhood size l_s must be an odd integer >= 3, got {ls!r}")
        ls = int(ls)
        h, w = micrograph.shape
        if ls > min(h, w):
            raise ValueError(f"l_s={ls} exceeds the image side ({h}x{w})")
        self.micrograph = micrograph
        self.ls = ls
        self.margin = (ls - 1) // 2
        self.interior_shape = (h - ls + 1, w - ls + 1)
        self.interior_origin = (self.margin, self.margin)
        self._windows = sliding_window_view(micrograph.phases, (ls, ls))
        centre = self.margin * ls + self.margin
        self._keep = np.delete(np.arange(ls * ls), centre)
        if index is not None:
            index = np.asarray(index, dtype=np.int64)
            index.setflags(write=False)
        self._index = index

    @property
    def n_features(self):
        return self.ls * self.ls - 1

    @property
    def n_total(self):
        """Number of interior pixels, regardless of any subset restriction."""
        return self.interior_shape[0] * self.interior_shape[1]

    @property
    def n(self):
        return self.n_total if self._index is None else len(self._index)

    def __len__(self):
        return self.n

    @property
    def index(self):
        if self._index is None:
            return np.arange(self.n_total)
        return self._index

    @property
    def y(self) -> np.ndarray:
        m, (hi, wi) = self.margin, self.interior_shape
        y = self.micrograph.phases[m : m + hi, m : m + wi].reshape(-1)
        return y if self._index is None else y[self._index]

    def subset(self, idx) -> "NeighborhoodDataset":
        """Dataset restricted to positions `idx` of this dataset."""
        return NeighborhoodDataset(self.micrograph, self.ls, self.index[np.asarray(idx)])

    def location(self, i):
        """Micrograph (row, col) of sample `i`."""
        r, c = divmod(int(self.index[i]), self.interior_shape[1])
        return r + self.margin, c + self.margin

    def rows(self, idx, dtype=np.float64) -> np.ndarray:
        """Feature rows for sample positions `idx`, shape (len(idx), ls**2 - 1)."""
        idx = np.asarray(idx, dtype=np.int64)
        if self._index is not None:
            idx = self._index[idx]
        r, c = np.divmod(idx, self.interior_shape[1])
        block = self._windows[r, c].reshape(len(idx), self.ls * self.ls)
        return block[:, self._keep].astype(dtype)

    def block(self, start, stop, dtype=np.float64) -> np.ndarray:
        """Feature rows for the contiguous sample range [start, stop)."""
        if self._index is not None:
            return self.rows(np.arange(start, stop), dtype)
        wi = self.interior_shape[1]
        r0, r1 = start // wi, -(-stop // wi)
        win = self._windows[r0:r1].reshape(-1, self.ls * self.ls)
        off = start - r0 * wi
        return win[off : off + stop - start][:, self._keep].astype(dtype)

    def blocks(self, size=DEFAULT_BLOCK, dtype=np.float64):
        """Yield (start, stop, X) over the whole dataset."""
        for start in range(0, self.n, size):
            stop = min(start + size, self.n)
            yield start, stop, self.block(start, stop, dtype)

    def to_arrays(self):
        """Dense (X, y); only sensible for small images."""
        return self.block(0, self.n), self.y.astype(np.float64)


def extract_dataset(m: Micrograph, ls: int) -> NeighborhoodDataset:
    return NeighborhoodDataset(m, ls)
