import numpy as np
import pytest

from rvescope.generate import GenerationError, GeneratorSpec, generate, paint_disk


def test_boolean_disks_volume_fraction(disks512):
    assert 0.09 <= disks512.volume_fraction <= 0.11


def test_two_region_halves():
    m = generate(GeneratorSpec(kind="two-region", region_vfs=(0.05, 0.20), seed=42), 512, 512)
    assert 0.045 <= m.phases[:, :256].mean() <= 0.055
    assert 0.18 <= m.phases[:, 256:].mean() <= 0.22


def test_clustered_reaches_target():
    m = generate(GeneratorSpec(kind="clustered", target_vf=0.08, cluster_radius=25, seed=3), 256, 256)
    assert 0.072 <= m.volume_fraction <= 0.088


@pytest.mark.parametrize("kind", ["boolean-disks", "two-region", "clustered"])
def test_same_seed_is_bit_identical(kind):
    spec = GeneratorSpec(kind=kind, seed=7)
    a = generate(spec, 128, 128)
    b = generate(spec, 128, 128)
    assert a.phases.tobytes() == b.phases.tobytes()
    c = generate(GeneratorSpec(kind=kind, seed=8), 128, 128)
    assert not np.array_equal(a.phases, c.phases)


def test_integer_disk_rasterisation():
    grid = np.zeros((7, 7), dtype=np.uint8)
    added = paint_disk(grid, 3, 3, 2)
    ii, jj = np.mgrid[:7, :7]
    expected = (ii - 3) ** 2 + (jj - 3) ** 2 <= 4
    np.testing.assert_array_equal(grid, expected)
    assert added == expected.sum() == 13
    assert paint_disk(grid, 3, 3, 2) == 0
    # clipped at the corner
    g2 = np.zeros((4, 4), dtype=np.uint8)
    paint_disk(g2, 0, 0, 1)
    assert g2.sum() == 3


def test_unreachable_target_hits_cap():
    with pytest.raises(GenerationError, match="iteration cap"):
        generate(GeneratorSpec(target_vf=0.95, particle_radius=40), 256, 256)


def test_spec_validation():
    with pytest.raises(ValueError):
        GeneratorSpec(target_vf=0.0)
    with pytest.raises(ValueError):
        GeneratorSpec(kind="voronoi")
    with pytest.raises(ValueError):
        GeneratorSpec(particle_radius=0)
    with pytest.raises(ValueError):
        generate(GeneratorSpec(particle_radius=10), 30, 100)
