import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contrastbands import fem
from contrastbands.bands import cell_bands
from contrastbands.coeff import Lattice
from contrastbands.waveguide import (DefectLevelError, InterfaceBand, StripConfig,
                                     analytic_defect_levels, column_index, decay_rate,
                                     interface_band, localization_measure, mirror_parity,
                                     neumann_level, solve_strip, strip_bulk_consistency,
                                     strip_extent, x_defect_eigenvalue)

from conftest import LATTICE, mirrored, periodic, xdefect

PI = math.pi
COARSE = dict(target_h=0.05, frame_h=0.04)


@pytest.fixture(scope="module")
def table08():
    return cell_bands(periodic(0.08), count=4, grid=5, refine=False, **COARSE)


@pytest.fixture(scope="module")
def band08(table08):
    return interface_band(mirrored(0.08), table08.gap_after(1), zetas=[0.0, PI / 2, PI],
                          columns=4, **COARSE)


@pytest.fixture(scope="module")
def control08(table08):
    return interface_band(mirrored(0.08, 0.0), table08.gap_after(1), zetas=[0.0, PI],
                          columns=4, check_truncation=False, **COARSE)


# -- closed-form levels ------------------------------------------------------

def test_interface_level():
    lv = analytic_defect_levels(LATTICE, h=0.35)
    assert lv.target == pytest.approx(PI ** 2 / (4 * 1.1025), rel=1e-14)
    assert lv.target == pytest.approx(2.238, abs=5e-4)
    assert lv.window == (0.0, pytest.approx(5.0355, abs=1e-4))


def test_cross_level_and_window():
    lv = analytic_defect_levels(LATTICE, h12=(0.5, 0.45))
    assert lv.target == pytest.approx(PI ** 2 / 4 * (1 / 1.44 + 1 / 0.9025), rel=1e-14)
    assert lv.target == pytest.approx(4.448, abs=1e-3)
    assert lv.window[0] == pytest.approx(2.734, abs=1e-3)
    assert lv.window[1] == pytest.approx(5.035, abs=1e-3)


@given(st.floats(0.01, 0.69), st.floats(0.01, 0.69))
def test_interface_level_decreases_in_h(a, b):
    if abs(a - b) < 1e-9:
        return
    lo, hi = sorted((a, b))
    assert analytic_defect_levels(LATTICE, h=hi).target < analytic_defect_levels(LATTICE, h=lo).target


def test_interface_level_limit():
    near = analytic_defect_levels(LATTICE, h=0.7 - 1e-9).target
    assert near == pytest.approx(PI ** 2 / (16 * 0.49), rel=1e-8)


@pytest.mark.parametrize("kwargs", [
    dict(h=0.0), dict(h=0.7), dict(h12=(0.1, 0.45)), dict(h12=(0.5, 0.0)), dict(),
    dict(h=0.3, h12=(0.5, 0.45)),
])
def test_level_validation(kwargs):
    with pytest.raises(ValueError):
        analytic_defect_levels(LATTICE, **kwargs)


def test_level_ordering_error_type():
    with pytest.raises(DefectLevelError):
        analytic_defect_levels(LATTICE, h12=(0.05, 0.45))


def test_neumann_level():
    assert neumann_level((0.7, 0.5), (1, 1)) == pytest.approx(PI ** 2 / 4 * (1 / 0.49 + 4))


# -- localization measure ------------------------------------------------------

def test_decay_rate_geometric():
    e = 4.0 ** -np.arange(7)
    assert decay_rate(e) == pytest.approx(math.log(4), rel=1e-2)
    assert decay_rate(e) == pytest.approx(math.log(4), rel=1e-12)


def test_decay_rate_degenerate_inputs():
    assert decay_rate([1.0, 0.0, 0.0]) == math.inf
    assert decay_rate([1.0]) == math.inf
    assert decay_rate([0.2, 0.2, 0.2, 0.2]) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("x, expected", [(0.0, 0), (1.04, 0), (1.06, 1), (-1.06, -1),
                                         (1.05 + 1.4 * 2.5, 3)])
def test_column_index(x, expected):
    assert column_index(np.array([x]), 0.7, 0.35)[0] == expected


def strip_mesh(field, columns):
    x = strip_extent(field, columns)
    return fem.build_mesh(((-x, x), (-0.5, 0.5)), field, 0.05, 0.04)


def test_constant_vector_fractions_follow_widths():
    f = mirrored(0.08)
    mesh = strip_mesh(f, 4)
    rep = localization_measure(np.ones(mesh.num_nodes), mesh, 0.7, 0.35)
    width = 2 * strip_extent(f, 4)
    assert rep.total == pytest.approx(1.0, abs=1e-12)
    assert rep.center_fraction == pytest.approx(2.1 / width, rel=1e-12)
    assert rep.far_fraction == pytest.approx(2 * 2 * 1.4 / width, rel=1e-12)
    side = rep.fractions[rep.columns != 0]
    assert np.allclose(side, 1.4 / width)


@given(st.floats(0.1, 3.0), st.integers(0, 2 ** 31))
def test_fractions_sum_to_one(kappa, seed):
    f = mirrored(0.08)
    mesh = COARSE_STRIP
    xs, ys = mesh.node_coordinates()
    rng = np.random.default_rng(seed)
    u = np.exp(-kappa * np.abs(xs)) * (1 + 0.1 * rng.standard_normal(xs.shape))
    rep = localization_measure(u, mesh, 0.7, f.shifts()[0])
    assert abs(rep.total - 1.0) <= 1e-9


COARSE_STRIP = strip_mesh(mirrored(0.08), 4)


def test_exponential_profile_is_localized():
    mesh = COARSE_STRIP
    xs, _ = mesh.node_coordinates()
    rep = localization_measure(np.exp(-2.0 * np.abs(xs)), mesh, 0.7, 0.35)
    assert rep.localized()
    assert rep.rate == pytest.approx(2 * 2.0 * 1.4, rel=0.05)


def test_zero_vector_rejected():
    with pytest.raises(ValueError):
        localization_measure(np.zeros(COARSE_STRIP.num_nodes), COARSE_STRIP, 0.7, 0.35)


def test_mirror_parity_of_synthetic_vectors():
    mesh = COARSE_STRIP
    _, m = fem.assemble_nodal(mesh, mirrored(0.08))
    xs, ys = mesh.node_coordinates()
    s, r = mirror_parity(np.cos(xs) * (1 + ys), mesh, m)
    assert s == pytest.approx(1.0) and r < 1e-12
    s, r = mirror_parity(np.sin(xs) * np.exp(1j * ys), mesh, m)
    assert s == pytest.approx(-1.0) and r < 1e-12
    s, r = mirror_parity(np.exp(xs), mesh, m)
    assert r > 0.1


# -- strip problems ------------------------------------------------------------

def test_strip_config_validation():
    with pytest.raises(ValueError):
        StripConfig(periodic(0.04))
    with pytest.raises(ValueError):
        interface_band(mirrored(0.08), (1.0, 2.0), columns=3)


def test_localization_dichotomy(table08):
    gap = table08.gap_after(1)
    gap_values = []
    for n in (4, 5, 6, 7):
        s = solve_strip(StripConfig(mirrored(0.08), n, 0.0, **COARSE), gap)
        inside = s.gap_indices
        assert inside, "no eigenvalue in the gap"
        for i in inside:
            assert s.rates[i] > 0
        gap_values.append(s.values[inside[0]])
        outside = [i for i in range(len(s.values)) if i not in inside]
        assert min(s.far_fractions[i] for i in outside) > 0.1
    # truncation sensitivity |L(N) - L(N+2)| shrinks with N
    assert abs(gap_values[1] - gap_values[3]) < abs(gap_values[0] - gap_values[2])


def test_interface_branch_found_and_symmetric(band08, table08):
    a, b = table08.gap_after(1)
    assert band08.found
    lo, hi = band08.interval
    assert a < lo <= hi < b
    assert np.all(band08.far_fractions < 0.05) and np.all(band08.rates > 0.2)
    assert np.all(band08.parity_residuals < 1e-6)
    assert band08.refined_values is not None
    assert band08.truncation_error < 1e-3


def test_interface_csv(band08):
    text = band08.to_csv({"eps": 0.08})
    lines = text.splitlines()
    assert lines[0].startswith("# ") and lines[1] == "zeta,lambda,loc_rate,far_fraction"
    assert len(lines) == 2 + len(band08.zetas)


def test_interface_json_round_trip(band08):
    back = InterfaceBand.from_json(band08.to_json())
    assert np.array_equal(back.values, band08.values)
    assert np.array_equal(back.rates, band08.rates)
    assert back.gap == band08.gap and back.columns == band08.columns
    assert back.truncation_error == band08.truncation_error
    assert [list(s.values) for s in back.spectra] == [list(s.values) for s in band08.spectra]
    assert back.to_json() == band08.to_json()


def test_control_has_no_localized_gap_mode(control08):
    assert not control08.found
    assert all(len(c) == 0 for c in control08.candidates)


def test_control_strip_inside_bulk_bands(control08, table08):
    rep = strip_bulk_consistency(control08, table08)
    assert rep.ok, rep.violations
    assert rep.checked > 0


def test_defaults_strip_inside_bulk_bands(band08, table08):
    rep = strip_bulk_consistency(band08, table08)
    assert rep.ok, rep.violations


def test_bulk_consistency_flags_stray_value(band08):
    rep = strip_bulk_consistency(band08, [(0.0, 0.5), (3.0, 10.0)])
    assert not rep.ok and rep.to_json()["violations"]


# -- X-shaped defect -----------------------------------------------------------

@pytest.fixture(scope="module")
def xcoarse():
    return x_defect_eigenvalue(xdefect(0.04), (4, 4), target_h=0.05, frame_h=0.02,
                               check_truncation=False)


def test_x_defect_coarse(xcoarse):
    assert xcoarse.found
    lo, hi = xcoarse.window
    assert lo < xcoarse.value < hi
    assert abs(xcoarse.value - 4.448) <= 0.6
    assert xcoarse.report_x.localized() and xcoarse.report_y.localized()
    assert abs(xcoarse.report_x.total - 1) < 1e-9 and abs(xcoarse.report_y.total - 1) < 1e-9
    data = xcoarse.to_json()
    assert data["lambda_d"] == xcoarse.value and data["sector"] == xcoarse.sector


def test_x_defect_control_is_empty(xcoarse):
    res = x_defect_eigenvalue(xdefect(0.04, 0.0, 0.0), (4, 4), target_h=0.05, frame_h=0.02,
                              check_truncation=False, window=xcoarse.window,
                              target=xcoarse.target)
    assert not res.found and res.to_json()["lambda_d"] is None


def test_x_defect_validation():
    with pytest.raises(ValueError):
        x_defect_eigenvalue(mirrored(0.04))
    with pytest.raises(ValueError):
        x_defect_eigenvalue(xdefect(0.04), (3, 4))


def test_violations_do_not_grow_with_columns(band08, table08):
    wider = interface_band(mirrored(0.08), table08.gap_after(1), zetas=[0.0, PI / 2, PI],
                           columns=6, check_truncation=False, **COARSE)
    before = strip_bulk_consistency(band08, table08)
    after = strip_bulk_consistency(wider, table08)
    assert len(after.violations) <= len(before.violations)
    assert after.checked > before.checked
