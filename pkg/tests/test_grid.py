import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homogenlab.errors import EmptyDomain, InvalidDomain, UnresolvedSphere
from homogenlab.grid import (
    FLUID,
    SOLID,
    BoxDomain,
    GridSpec,
    RRule,
    ScalarField,
    SourceSpec,
    VectorFieldMAC,
    build_perforated_domain,
    cells_to_faces,
    eval_source,
    intermediate_radius,
    min_cells_for_radius,
    phase_volume,
    sample_source,
)

UNIT = BoxDomain()


def test_box_requires_hi_above_lo():
    with pytest.raises(InvalidDomain):
        BoxDomain((0, 0, 0), (1, 0, 1))


def test_grid_spacing_and_minimum_cells():
    g = GridSpec(BoxDomain((0, 0, 0), (2, 1, 1)), (8, 4, 4))
    assert g.h == (0.25, 0.25, 0.25)
    assert g.size == 128
    with pytest.raises(InvalidDomain):
        GridSpec(UNIT, 3)


def test_quarter_period_lattice_has_27_centers():
    dom = build_perforated_domain(UNIT, 0.25, 1.0, GridSpec(UNIT, 128))
    assert dom.n_spheres == 27
    assert dom.r_eps == 1 / 64
    ks = {tuple(k) for k in dom.lattice}
    assert ks == {(i, j, k) for i in (1, 2, 3) for j in (1, 2, 3) for k in (1, 2, 3)}


def test_half_period_has_single_center():
    dom = build_perforated_domain(UNIT, 0.5, 1.0, GridSpec(UNIT, 32))
    assert dom.n_spheres == 1
    np.testing.assert_array_equal(dom.centers[0], [0.5, 0.5, 0.5])
    assert dom.r_eps == 1 / 8


def test_default_intermediate_radius_is_geometric_mean():
    dom = build_perforated_domain(UNIT, 0.25, 1.0, GridSpec(UNIT, 128))
    assert dom.R_eps == pytest.approx(1 / 16, rel=1e-15)
    assert dom.r_eps < dom.R_eps < dom.epsilon / 2


def test_quarter_period_rule():
    dom = build_perforated_domain(UNIT, 0.25, 1.0, GridSpec(UNIT, 128), RRule.QUARTER_PERIOD)
    assert dom.R_eps == pytest.approx(1 / 16)


def test_rule_outside_interval_falls_back_to_midpoint():
    # sqrt(r * eps) = eps/2 when r = eps/4
    R = intermediate_radius(0.125, 0.5)
    assert R == pytest.approx((0.125 + 0.25) / 2)


def test_inscribed_sphere_has_no_annulus():
    dom = build_perforated_domain(UNIT, 0.5, 2.0, GridSpec(UNIT, 32))
    assert dom.r_eps == 0.25
    assert dom.R_eps == dom.r_eps


def test_oversized_sphere_rejected():
    with pytest.raises(InvalidDomain):
        build_perforated_domain(UNIT, 0.5, 3.0, GridSpec(UNIT, 32))


def test_epsilon_must_divide_box():
    with pytest.raises(InvalidDomain):
        build_perforated_domain(UNIT, 0.3, 1.0, GridSpec(UNIT, 64))


def test_unresolved_sphere_reports_grid():
    with pytest.raises(UnresolvedSphere) as info:
        build_perforated_domain(UNIT, 0.25, 1.0, GridSpec(UNIT, 64))
    assert info.value.min_cells == 128
    assert min_cells_for_radius(UNIT, 1 / 64) == 128


def test_empty_domain():
    box = BoxDomain((0.25, 0.25, 0.25), (1.25, 1.25, 1.25))
    with pytest.raises(EmptyDomain):
        build_perforated_domain(box, 1.0, 0.1, GridSpec(box, 40))


def test_phase_volume_examples():
    dom = build_perforated_domain(UNIT, 0.25, 1.0, GridSpec(UNIT, 128))
    assert phase_volume(dom, SOLID) == pytest.approx(27 * 4 * math.pi / 3 * (1 / 64) ** 3)
    assert phase_volume(dom, SOLID) == pytest.approx(4.313e-4, rel=1e-3)
    assert phase_volume(dom, FLUID) + phase_volume(dom, SOLID) == pytest.approx(1.0)
    dom2 = build_perforated_domain(UNIT, 0.5, 1.0, GridSpec(UNIT, 32))
    assert phase_volume(dom2, SOLID) == pytest.approx(8.181e-3, rel=1e-3)


def test_solid_cells_are_exactly_centers_inside_balls():
    dom = build_perforated_domain(UNIT, 0.5, 1.0, GridSpec(UNIT, 24))
    X, Y, Z = dom.grid.cell_mesh()
    inside = (X - 0.5) ** 2 + (Y - 0.5) ** 2 + (Z - 0.5) ** 2 < dom.r_eps**2
    np.testing.assert_array_equal(dom.solid, inside)
    assert dom.voxel_counts().sum() == inside.sum()


def test_domain_arrays_are_read_only():
    dom = build_perforated_domain(UNIT, 0.5, 1.0, GridSpec(UNIT, 16))
    with pytest.raises(ValueError):
        dom.phase_mask[0, 0, 0] = 1


def test_rebuild_is_bit_identical():
    g = GridSpec(UNIT, 64)
    a = build_perforated_domain(UNIT, 0.25, 2.0, g)
    b = build_perforated_domain(UNIT, 0.25, 2.0, g)
    assert a.phase_mask.tobytes() == b.phase_mask.tobytes()
    assert a.centers.tobytes() == b.centers.tobytes()


def test_voxel_volume_error_at_least_first_order():
    # single-grid errors oscillate, so compare rms errors over bands of grids
    def band_rms(lo):
        gaps = []
        for n in range(lo, 2 * lo, lo // 8):
            dom = build_perforated_domain(UNIT, 0.5, 1.0, GridSpec(UNIT, n))
            exact = phase_volume(dom, SOLID)
            gaps.append((dom.solid.sum() * dom.grid.cell_volume - exact) / exact)
        return math.sqrt(np.mean(np.square(gaps)))

    e16, e32, e64 = band_rms(16), band_rms(32), band_rms(64)
    assert e32 / e16 < 0.5 * 1.3
    assert e64 / e32 < 0.5 * 1.3


@settings(max_examples=30, deadline=None)
@given(
    eps_inv=st.sampled_from([2, 3, 4]),
    gamma=st.floats(0.05, 2.0),
)
def test_spheres_disjoint_and_inside_cells(eps_inv, gamma):
    eps = 1.0 / eps_inv
    r = gamma * eps**3
    n = max(16, min_cells_for_radius(UNIT, r))
    if n > 160:
        return
    dom = build_perforated_domain(UNIT, eps, gamma, GridSpec(UNIT, n))
    c = dom.centers
    assert np.all(c - eps / 2 >= -1e-12) and np.all(c + eps / 2 <= 1 + 1e-12)
    if len(c) > 1:
        d = np.linalg.norm(c[:, None] - c[None], axis=-1)
        d[np.diag_indices(len(c))] = np.inf
        assert d.min() == pytest.approx(eps)
        assert d.min() >= 2 * dom.r_eps
    assert dom.r_eps <= dom.R_eps <= eps / 2


def test_sources():
    assert eval_source(SourceSpec("constant", 1.0), (0.3, 0.2, 0.9)) == 1.0
    c = (0.3, 0.4, 0.5)
    assert eval_source(SourceSpec("gaussian", 1.0, c, 0.2), c) == 1.0
    assert eval_source(SourceSpec("product_sine"), (0.5, 0.5, 0.5)) == pytest.approx(1.0)
    trunc = SourceSpec("gaussian", 1.0, c, 0.2, support_radius=0.1)
    assert eval_source(trunc, (0.3, 0.4, 0.65)) == 0.0
    assert eval_source(trunc, (0.3, 0.4, 0.55)) > 0.0
    assert sample_source(SourceSpec("constant", 2.0), GridSpec(UNIT, 4)).values.min() == 2.0


def test_field_validation_and_norms():
    g = GridSpec(UNIT, 4)
    with pytest.raises(ValueError):
        ScalarField(g, np.zeros((4, 4, 5)))
    with pytest.raises(ValueError):
        ScalarField(g, np.full((4, 4, 4), np.nan))
    s = ScalarField(g, np.ones(g.n))
    assert s.integrate() == pytest.approx(1.0)
    assert s.l2_norm() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        VectorFieldMAC(g, (np.zeros((4, 4, 4)),) * 3)


def test_divergence_of_linear_field():
    g = GridSpec(UNIT, 6)
    X, _, _ = g.face_mesh(0)
    comps = (X, np.zeros(g.face_shape(1)), np.zeros(g.face_shape(2)))
    u = VectorFieldMAC(g, comps)
    np.testing.assert_allclose(u.divergence(), 1.0)


def test_cells_to_faces():
    v = np.arange(4.0).reshape(4, 1, 1) * np.ones((4, 2, 2))
    f = cells_to_faces(v, 0)
    np.testing.assert_allclose(f[:, 0, 0], [0, 0.5, 1.5, 2.5, 3])
