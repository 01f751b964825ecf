from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxlab.errors import CompatibilityError, RejectedInput
from maxlab.fields import CoefficientSet, TorusGrid
from maxlab.presets import coefficient_preset, random_data, standing_wave
from maxlab.reflect import (
    PLAN_3D,
    HalfState,
    boundary_trace,
    compat_csv,
    compatibility_residuals,
    extend_half_to_torus,
    extend_state,
    geodesic_coefficients,
    restrict_to_half,
)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), parity=st.sampled_from([1, -1]))
def test_extension_has_declared_parity_and_restricts_back(seed, parity):
    grid = TorusGrid((8, 12), (1.0, 2.0))
    rng = np.random.default_rng(seed)
    half = rng.standard_normal(grid.half_shape())
    if parity == -1:
        half[:, 0] = 0.0
        half[:, -1] = 0.0
    full = extend_half_to_torus(half, parity, grid)
    assert np.array_equal(grid.mirror(full), parity * full)
    assert np.array_equal(restrict_to_half(full, grid), half)


def test_odd_extension_rejects_nonzero_trace():
    grid = TorusGrid.cube(2, 8)
    half = np.ones(grid.half_shape())
    with pytest.raises(CompatibilityError) as exc:
        extend_half_to_torus(half, -1, grid, name="E1")
    assert exc.value.components == ("E1",)


def test_extend_state_reports_every_bad_component(grid3):
    s = random_data(grid3, 0)
    half = HalfState.from_state(s)
    half.E = half.E + 1.0
    with pytest.raises(CompatibilityError) as exc:
        extend_state(half)
    assert set(exc.value.components) == {"E1", "E2"}


def test_extend_state_round_trip(grid3):
    s = random_data(grid3, 1)
    back = extend_state(HalfState.from_state(s), PLAN_3D)
    assert np.max(np.abs(back.components - s.components)) < 1e-15


def test_parity_plan_table():
    d = PLAN_3D.as_dict()
    assert d["E1"] == d["E2"] == "odd"
    assert d["E3"] == "even"
    assert d["H3"] == "odd" and d["H1"] == "even"
    assert d["rho"] == "odd"


@pytest.mark.parametrize("dim", [2, 3])
def test_standing_wave_meets_compatibility_to_order_two(dim):
    grid = TorusGrid.cube(dim, 16)
    s = standing_wave(grid)
    rows = compatibility_residuals(s, CoefficientSet.flat(grid), order=2)
    assert rows and max(r[2] for r in rows) < 1e-12
    assert {r[1] for r in rows} == {0, 1, 2}


def test_random_parity_data_have_vanishing_traces(grid3):
    s = random_data(grid3, 5)
    for name in ("E1", "E2", "H3"):
        assert np.max(np.abs(boundary_trace(s.component(name), grid3))) < 1e-14


def test_compat_order_is_validated(grid2):
    with pytest.raises(RejectedInput):
        compatibility_residuals(standing_wave(grid2), order=3)


def test_compat_csv_layout(grid2, tmp_path):
    rows = compatibility_residuals(standing_wave(grid2), order=1)
    text = compat_csv(rows, tmp_path / "c.csv")
    assert text.splitlines()[0] == "condition,order,residual"
    assert (tmp_path / "c.csv").read_text() == text


def test_geodesic_coefficients_are_even_and_consistent():
    grid = TorusGrid.cube(3, 16)
    c = coefficient_preset("smooth", grid)
    assert c.evenness_defect() < 1e-14
    detA = np.linalg.det(np.moveaxis(c.A, (0, 1), (-2, -1)))
    assert np.max(np.abs(c.h * detA - 1)) < 1e-12
    # unit normal-normal cometric entry
    assert np.max(np.abs(c.ginv[2, 2] - 1)) < 1e-14


def test_geodesic_coefficients_reject_degenerate_metric():
    grid = TorusGrid.cube(2, 8)
    with pytest.raises((RejectedInput, ValueError)):
        geodesic_coefficients(grid, g11=-1.0)
