import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jcurves.core import (
    Grid, GridError, MapSample, Region, StructureField, energy, energy_density, gradient,
    lp_norm_du, read_csv, restrict, standard_structure, write_csv,
)


@pytest.fixture(scope="module")
def disk65():
    return Grid.disk(1.0, 65)


def interior(g, margin=1):
    # nodes whose dual cells lie entirely inside the domain, minus a margin
    w = g.weights
    full = np.isclose(w, g.spacing[0] * g.spacing[1])
    x, y = np.meshgrid(*g.axes, indexing="ij")
    return full & (np.hypot(x, y) < g.params[0] - margin * g.spacing[0])


def test_grid_rejects_degenerate_resolution():
    with pytest.raises(GridError):
        Grid.disk(1.0, 2)
    with pytest.raises(GridError):
        Grid("annulus", (1.0, 0.5), (9, 9))


def test_grid_json_roundtrip():
    g = Grid.cylinder(0, 3, 31, 16)
    assert Grid.from_json(g.to_json()) == g


def test_disk_weights_sum_to_area(disk65):
    assert disk65.weights.sum() == pytest.approx(math.pi, rel=2e-3)


def test_gradient_exact_for_linear(disk65):
    dx, dy = gradient(MapSample.from_function(disk65, lambda z: z))
    m = interior(disk65)
    assert np.abs(dx[..., 0] - 1)[m].max() <= 1e-12
    assert np.abs(dy[..., 0] - 1j)[m].max() <= 1e-12


def test_gradient_of_constant_vanishes(disk65):
    dx, dy = gradient(MapSample.constant(disk65, 2 - 1j))
    assert np.abs(dx).max() == 0 and np.abs(dy).max() == 0


def test_gradient_quadratic_exact_and_cubic_second_order():
    # second-order stencils are exact on quadratics, so the refinement
    # study uses a cubic
    g = Grid.disk(1.0, 33)
    dx, _ = gradient(MapSample.from_function(g, lambda z: z ** 2))
    assert np.abs(dx[..., 0] - 2 * g.z).max() <= 1e-12
    errs = []
    for n in (33, 65, 129):
        g = Grid.disk(1.0, n)
        dx, _ = gradient(MapSample.from_function(g, lambda z: z ** 3))
        errs.append(np.abs(dx[..., 0] - 3 * g.z ** 2)[interior(g)].max())
    assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5


def test_energy_examples(disk65):
    assert energy(MapSample.from_function(disk65, lambda z: z)) == pytest.approx(2 * math.pi, rel=0.02)
    assert energy(MapSample.constant(disk65, 1.0)) == 0.0
    cyl = Grid.cylinder(0, 1, 201, 64)
    e = energy(MapSample.from_function(cyl, np.exp))
    assert e == pytest.approx(2 * math.pi * (math.e ** 2 - 1), rel=0.02)


def test_lp_norm_examples(disk65):
    u = MapSample.from_function(disk65, lambda z: z)
    assert lp_norm_du(u, 2) == pytest.approx(math.sqrt(2 * math.pi), rel=0.02)
    assert lp_norm_du(MapSample.constant(disk65, 3.0), 4) == 0.0
    half = Region.disk(disk65, 0, 0.5)
    assert lp_norm_du(u, 4, half) == pytest.approx(math.sqrt(2) * (math.pi / 4) ** 0.25, rel=0.02)
    with pytest.raises(ValueError):
        lp_norm_du(u, 0.5)


def test_restrict(disk65):
    u = MapSample.from_function(disk65, lambda z: z ** 2 + np.conj(z))
    full = restrict(u, Region.disk(disk65, 0, 1.0))
    assert full.grid == disk65 and np.array_equal(full.values, u.values)
    r1 = restrict(u, Region.disk(disk65, 0, 0.75))
    r2 = restrict(r1, Region.disk(r1.grid, 0, 0.5))
    r12 = restrict(u, Region.disk(disk65, 0, 0.5))
    assert r2.grid == r12.grid and np.array_equal(r2.values, r12.values)
    # energies agree up to one boundary layer of cells
    h = disk65.spacing[0]
    e_sub = energy(r12)
    e_reg = energy(u, Region.disk(disk65, 0, 0.5))
    cell = energy_density(u).max() * h * h
    assert abs(e_sub - e_reg) <= 2 * math.pi * 0.5 / h * cell


def test_cylinder_energy_additive():
    g = Grid.cylinder(0, 5, 251, 32)
    u = MapSample.from_function(g, lambda z: np.exp(z) + 0.3 * np.exp(-2 * z))
    total = energy(u)
    parts = sum(energy(u, g.segment(k)) for k in range(1, 6))
    assert parts == pytest.approx(total, rel=1e-10)


def test_dilation_invariance():
    r = 0.5
    f = lambda z: z ** 2 + np.sin(z)
    g1 = Grid.disk(1.0, 129)
    gr = Grid.disk(r, 129)
    e1 = energy(MapSample.from_function(g1, lambda z: f(r * z)))
    er = energy(MapSample.from_function(gr, f))
    assert e1 == pytest.approx(er, rel=0.02)


def test_structure_field_validation(disk65):
    J = StructureField.standard(disk65, 2)
    assert J.distance_to_standard() == 0
    with pytest.raises(GridError):
        StructureField(disk65, np.eye(2))
    P = np.array([[2.0, 1.0], [0.0, 1.0]])
    Jc = StructureField.conjugated(disk65, P)
    assert Jc.defect < 1e-12
    jst = standard_structure(1)
    assert np.allclose(Jc.matrices[0, 0], P @ jst @ np.linalg.inv(P))


def test_structure_apply_is_multiplication_by_i(disk65):
    J = StructureField.standard(disk65)
    v = np.full(disk65.resolution + (1,), 1 + 2j)
    assert np.allclose(J.apply(v), 1j * v)


def test_csv_roundtrip(tmp_path):
    g = Grid.cylinder(0, 2, 11, 8)
    u = MapSample.from_function(g, lambda z: np.stack([np.exp(z), z], axis=-1))
    write_csv(u, tmp_path / "u.csv")
    v = read_csv(tmp_path / "u.csv")
    assert v.grid == g and np.array_equal(v.values, u.values)


@settings(max_examples=25, deadline=None)
@given(re=st.floats(-3, 3), im=st.floats(-3, 3))
def test_energy_scales_quadratically(re, im):
    g = Grid.disk(1.0, 17)
    u = MapSample.from_function(g, lambda z: z ** 2 + np.conj(z))
    c = complex(re, im)
    assert energy(u * c) == pytest.approx(abs(c) ** 2 * energy(u), rel=1e-12, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-1, 1), b=st.floats(-1, 1))
def test_energy_nonnegative_and_translation_invariant(a, b):
    g = Grid.cylinder(0, 2, 41, 16)
    u = MapSample.from_function(g, lambda z: a * np.exp(z) + b * np.exp(-z))
    e = energy(u)
    assert e >= 0
    assert energy(u + MapSample.constant(g, 5j)) == pytest.approx(e, rel=1e-12, abs=1e-14)
