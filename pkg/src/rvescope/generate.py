"""Seeded synthetic two-phase microstructures used as fixtures.

All geometry is integer: a pixel (i, j) belongs to a disk centred at (ci, cj)
with radius r iff (i-ci)^2 + (j-cj)^2 <= r^2.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .micrograph import Micrograph

__all__ = ["GeneratorSpec", "GenerationError", "generate", "paint_disk"]

KINDS = ("boolean-disks", "two-region", "clustered")

VF_RTOL = 0.10
MAX_ATTEMPTS = 20
# particles must stay the minority phase
MAX_VF = 0.5


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str = "boolean-disks"
    target_vf: float = 0.10
    particle_radius: int = 6
    offspring_count: float = 8.0
    cluster_radius: int = 20
    region_vfs: tuple[float, float] = (0.05, 0.20)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}; choose from {', '.join(KINDS)}")
        if not 0 < self.target_vf < 1:
            raise ValueError(f"target_vf must lie in (0, 1), got {self.target_vf}")
        if int(self.particle_radius) != self.particle_radius or self.particle_radius <= 0:
            raise ValueError("particle_radius must be a positive integer")
        if self.kind == "two-region":
            if len(self.region_vfs) != 2 or not all(0 < v < 1 for v in self.region_vfs):
                raise ValueError("region_vfs must be two fractions in (0, 1)")
        if self.kind == "clustered":
            if self.offspring_count <= 0 or self.cluster_radius <= 0:
                raise ValueError("offspring_count and cluster_radius must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def paint_disk(grid, ci, cj, r):
    """Set the integer disk of radius r at (ci, cj) to 1; returns newly set count."""
    h, w = grid.shape
    i0, i1 = max(ci - r, 0), min(ci + r, h - 1)
    j0, j1 = max(cj - r, 0), min(cj + r, w - 1)
    if i0 > i1 or j0 > j1:
        return 0
    di = np.arange(i0, i1 + 1)[:, None] - ci
    dj = np.arange(j0, j1 + 1)[None, :] - cj
    inside = di * di + dj * dj <= r * r
    patch = grid[i0 : i1 + 1, j0 : j1 + 1]
    added = int(np.count_nonzero(inside & (patch == 0)))
    patch[inside] = 1
    return added


def _fill(shape, target_vf, rng, radius, centers):
    """Add disks from the `centers` stream until the target fraction is reached.

    Returns the grid, or None when the attempt overshoots the tolerance band
    or the particle phase would become the majority.
    """
    h, w = shape
    grid = np.zeros(shape, dtype=np.uint8)
    goal = target_vf * h * w
    filled = 0
    cap = int(4 * h * w)  # far more disks than any feasible target needs
    for _ in range(cap):
        ci, cj = centers()
        filled += paint_disk(grid, ci, cj, radius)
        if filled > MAX_VF * h * w:
            return None
        if filled >= goal:
            vf = filled / (h * w)
            if abs(vf - target_vf) <= VF_RTOL * target_vf:
                return grid
            return None
    return None


def _uniform_centers(shape, rng):
    h, w = shape

    def draw():
        return int(rng.integers(0, h)), int(rng.integers(0, w))

    return draw


def _cluster_centers(shape, rng, offspring_mean, cluster_radius):
    # Matern-style: a parent uniform in the image, then Poisson many children
    # uniform within cluster_radius of it (integer disk test again)
    h, w = shape
    state = {"parent": None, "left": 0}

    def draw():
        while state["left"] <= 0:
            state["parent"] = (int(rng.integers(0, h)), int(rng.integers(0, w)))
            state["left"] = int(rng.poisson(offspring_mean))
        state["left"] -= 1
        pi, pj = state["parent"]
        while True:
            di, dj = rng.integers(-cluster_radius, cluster_radius + 1, size=2)
            if di * di + dj * dj <= cluster_radius * cluster_radius:
                break
        return int(min(max(pi + di, 0), h - 1)), int(min(max(pj + dj, 0), w - 1))

    return draw


def _boolean_field(shape, vf, spec, rng, clustered=False):
    best = None
    for attempt in range(MAX_ATTEMPTS):
        if clustered:
            centers = _cluster_centers(shape, rng, spec.offspring_count, int(spec.cluster_radius))
        else:
            centers = _uniform_centers(shape, rng)
        grid = _fill(shape, vf, rng, int(spec.particle_radius), centers)
        if grid is not None:
            return grid
        best = attempt
    raise GenerationError(
        f"iteration cap exceeded: target vf {vf} not reached within +/-{VF_RTOL:.0%} "
        f"after {best + 1} attempts (radius {spec.particle_radius}, field {shape[0]}x{shape[1]}); "
        f"particles must remain the minority phase (vf <= {MAX_VF})"
    )


def generate(spec: GeneratorSpec, height: int, width: int, scale: float = 1.0) -> Micrograph:
    """Draw a micrograph from `spec`; identical spec and seed give identical pixels."""
    r = int(spec.particle_radius)
    if height < 4 * r or width < 4 * r:
        raise ValueError(f"image {height}x{width} is too small for radius {r} (need >= {4 * r} per side)")
    rng = np.random.default_rng(np.uint64(spec.seed))
    if spec.kind == "boolean-disks":
        grid = _boolean_field((height, width), spec.target_vf, spec, rng)
    elif spec.kind == "clustered":
        grid = _boolean_field((height, width), spec.target_vf, spec, rng, clustered=True)
    else:
        left = width // 2
        if left < 4 * r or width - left < 4 * r:
            raise ValueError(f"each half of a two-region image needs width >= {4 * r}")
        a = _boolean_field((height, left), spec.region_vfs[0], spec, rng)
        b = _boolean_field((height, width - left), spec.region_vfs[1], spec, rng)
        grid = np.hstack([a, b])
    return Micrograph(grid, scale)
