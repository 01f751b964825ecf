from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxlab import lp
from maxlab.diagnostics import random_parity_field
from maxlab.errors import RejectedInput, SupportMarginError
from maxlab.fields import CoefficientSet, FieldState, TorusGrid
from maxlab.presets import coefficient_preset, random_data


@pytest.fixture(scope="module")
def bank2():
    return lp.DyadicProjectorBank(TorusGrid.cube(2, 64))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_bands_sum_to_identity(seed):
    grid = TorusGrid((32, 16), (2 * np.pi, np.pi))
    bank = lp.DyadicProjectorBank(grid)
    f = np.random.default_rng(seed).standard_normal(grid.shape)
    total = sum(bank.decompose(f).values())
    assert np.max(np.abs(total - f)) < 1e-10 * np.max(np.abs(f))


def test_smooth_step_profile_is_a_partition():
    r = np.linspace(0, 100, 2001)
    bank = lp.RadialBank(128.0)
    total = sum(bank.profile(r, lam) for lam in bank.bands)
    assert np.max(np.abs(total - 1)) < 1e-14
    assert np.all(lp.smooth_step(r) >= 0) and np.all(lp.smooth_step(r) <= 1)


def test_projection_is_supported_in_the_annulus(bank2):
    sp = bank2.sp
    m = bank2.multiplier(8)
    assert np.all(m[(sp.k_abs < 4) | (sp.k_abs > 16)] == 0)


def test_band_validation(bank2):
    with pytest.raises(RejectedInput):
        bank2.multiplier(3)
    with pytest.raises(RejectedInput):
        bank2.multiplier(4096)


@pytest.mark.parametrize("lam,cut", [(1, 1), (16, 1), (31, 1), (32, 2), (64, 4), (256, 16)])
def test_truncation_cutoff(lam, cut):
    assert lp.truncation_cutoff(lam) == cut


def test_truncating_flat_coefficients_is_exact():
    grid = TorusGrid.cube(2, 16)
    flat = CoefficientSet.flat(grid, eps=2.0)
    t = lp.truncate_coefficients(flat, 64)
    assert np.max(np.abs(t.eps - 2.0)) < 1e-14
    assert t.lam == 64


def test_truncated_coefficients_stay_even():
    grid = TorusGrid.cube(2, 32)
    t = lp.truncate_coefficients(coefficient_preset("kink", grid), 64)
    assert t.evenness_defect() < 1e-13


def test_commutator_with_lipschitz_profile_decays_like_one_over_lambda():
    grid = TorusGrid.cube(2, 256)
    bank = lp.DyadicProjectorBank(grid)
    kappa = np.broadcast_to(np.abs(grid.mesh()[1]), grid.shape).copy()
    scaled = [lp.commutator_decay(kappa, lam, bank, iters=40).scaled for lam in (16, 32, 64)]
    assert max(scaled) / min(scaled) < 1.5


def test_commutator_power_iteration_dominates_probes():
    grid = TorusGrid.cube(2, 64)
    bank = lp.DyadicProjectorBank(grid)
    kappa = np.broadcast_to(np.abs(grid.mesh()[1]), grid.shape).copy()
    rng = np.random.default_rng(0)
    probes = [rng.standard_normal(grid.shape) for _ in range(5)]
    est = lp.commutator_decay(kappa, 8, bank, iters=80)
    assert lp.commutator_decay(kappa, 8, bank, probes=probes).norm <= est.norm * (1 + 1e-6)


@settings(max_examples=50, deadline=None)
@given(
    vals=st.lists(st.floats(0.0, 1e6, allow_nan=False), min_size=1, max_size=12),
    delta=st.floats(0.05, 2.0),
)
def test_envelope_axioms(vals, delta):
    N = 2.0 ** np.arange(len(vals))
    env = lp.envelope_from_bands(N, vals, 1.0, delta)
    assert env.energy_defect() <= 0.0
    assert env.slow_variation_defect() <= 1e-12
    assert env.l2_excess() <= 1e-9 * max(1.0, float(np.sum(np.square(vals))))


def test_envelope_of_a_single_band():
    env = lp.envelope_from_bands([1, 2, 4], [0, 1, 0], 0.0, 0.5)
    assert np.allclose(env.c, [2**-0.5, 1, 2**-0.5])


def test_envelope_needs_positive_delta():
    with pytest.raises(RejectedInput):
        lp.envelope_from_bands([1, 2], [1, 1], 0.0, 0.0)


def test_l2_constant_closed_form():
    assert lp.l2_constant(0.5) == pytest.approx(3.0)


def test_envelope_csv(bank2, tmp_path):
    u = np.random.default_rng(0).standard_normal(bank2.grid.shape)
    env = lp.sharp_envelope(u, 0.0, 0.5, bank2)
    assert env.to_csv(tmp_path / "e.csv").splitlines()[0] == "N,c_tilde,c"
    assert lp.band_energy_csv(u, bank2).splitlines()[0] == "N,band_l2_squared"


def test_mollifier_preserves_parity_and_converges_monotonically():
    grid = TorusGrid.cube(2, 128)
    f = random_parity_field(grid, np.random.default_rng(3), decay=1.0)
    errs = []
    for n in (2, 4, 8, 16, 32, 64):
        mol = lp.Mollifier(grid, n)
        g = np.stack([mol.apply(c) for c in f])
        assert np.max(np.abs(g[0] + grid.mirror(g[0]))) < 1e-12
        assert np.max(np.abs(g[1] - grid.mirror(g[1]))) < 1e-12
        errs.append(float(np.linalg.norm(g - f)))
    assert all(b <= a for a, b in zip(errs, errs[1:]))


def test_mollifier_kernel_has_unit_mass_and_is_symmetric():
    grid = TorusGrid.cube(2, 64)
    k = lp.Mollifier(grid, 4).kernel_1d(0)
    assert k.sum() == pytest.approx(1.0)
    assert np.allclose(k[1:], k[1:][::-1])


def test_mollify_preserving_bc_needs_support_margin():
    grid = TorusGrid.cube(2, 32)
    with pytest.raises(SupportMarginError):
        lp.mollify_preserving_bc(random_data(grid, 0), 4)
    x = grid.full_mesh()[1]
    bump = np.where(np.abs(np.abs(x) - 2.0) < 0.5, np.cos(np.pi * (np.abs(x) - 2.0)) ** 2, 0.0)
    E = np.stack([np.sign(x) * bump, bump])
    s = FieldState(grid, E, np.zeros((1,) + grid.shape))
    out = lp.mollify_preserving_bc(s, 4)
    assert out.parity_defect() < 1e-12


def test_besov_norm_kinds(bank2):
    f = np.random.default_rng(0).standard_normal(bank2.grid.shape)
    b1 = lp.besov_norm(f, bank2)
    bh = lp.besov_norm(f, bank2, "Brho_inf_2", rho=0.5)
    assert 0 < bh < b1
    with pytest.raises(RejectedInput):
        lp.besov_norm(f, bank2, "B2_2_2")
    with pytest.raises(RejectedInput):
        lp.besov_norm(f, bank2, "Brho_inf_2")
