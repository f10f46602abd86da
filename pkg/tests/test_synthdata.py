import math

import numpy as np
import pytest

from pulsefield.errors import ConfigError
from pulsefield.model import Scales
from pulsefield.synthdata import (GridSpec, WomersleyParams, corrupt, generate_field, occlude,
                                  preset, random_bands, womersley_velocity)

from helpers import crank_nicolson_centerline, fd_vorticity_residual

R, RHO, MU = 2.5e-3, 1060.0, 3e-3


def test_frequency_from_alpha():
    p = WomersleyParams(alpha=2.77)
    assert p.f == pytest.approx(3.475, abs=1e-3)
    assert p.f == pytest.approx(2.77 ** 2 * MU / (RHO * R ** 2), rel=1e-15)


def test_no_slip_exact():
    p = WomersleyParams(alpha=5.0)
    t = np.linspace(0, p.period, 17)
    assert np.all(womersley_velocity(p, 1.0, t) == 0.0)
    assert np.all(womersley_velocity(p, -1.0, t) == 0.0)


def test_poiseuille_limit():
    p0 = 50.0
    p = WomersleyParams((p0,), alpha=2.77)
    y = np.linspace(-1, 1, 21)
    want = p0 * R ** 2 / (4 * MU) * (1 - y * y)
    np.testing.assert_allclose(womersley_velocity(p, y, 0.3), want, rtol=1e-14, atol=1e-18)


@pytest.mark.parametrize("p0", [0.0, 48.0])
def test_crank_nicolson_oracle(p0):
    p1 = 60.0
    p = WomersleyParams((p0, p1), alpha=2.77)
    want = crank_nicolson_centerline(R, RHO, MU, p0, p1, p.f)
    got = womersley_velocity(p, 0.0, 0.0)
    assert abs(got - want) <= 1e-3 * abs(want)


def test_periodicity_and_symmetry():
    for alpha in (2.77, 5.0):
        p = WomersleyParams(alpha=alpha)
        y = np.linspace(-1, 1, 41)
        t = np.linspace(0, p.period, 23)[:, None]
        a = womersley_velocity(p, y, t)
        b = womersley_velocity(p, y, t + p.period)
        assert np.max(np.abs(a - b)) <= 1e-10 * np.max(np.abs(a))
        assert np.max(np.abs(a - womersley_velocity(p, -y, t))) <= 1e-12


def test_default_peak_centerline():
    p = WomersleyParams(alpha=2.77)
    t = np.linspace(0, p.period, 2001)
    assert np.max(womersley_velocity(p, 0.0, t)) == pytest.approx(0.3, rel=1e-3)


def test_generate_field_layout():
    p = WomersleyParams(alpha=2.77)
    ff = generate_field(p, GridSpec(nx=8, ny=9, nt=11), period_count=2)
    assert ff.shape == (11, 8, 9)
    assert np.all(ff.u[:, :, [0, -1]] == 0) and np.all(ff.v == 0)
    assert ff.boundary[:, :, [0, -1]].all() and ff.fluid[:, :, 1:-1].all()
    assert ff.times[-1] == pytest.approx(2 * p.period, rel=1e-15)
    assert np.max(np.abs(ff.u[0] - ff.u[-1])) <= 1e-12


def test_generate_field_rejects_small_grid():
    with pytest.raises(ConfigError):
        generate_field(WomersleyParams(alpha=2.77), GridSpec(ny=2))
    with pytest.raises(ConfigError):
        generate_field(WomersleyParams(alpha=2.77), period_count=0)


@pytest.mark.parametrize("name", ["exp12", "exp22"])
def test_fd_residual_small(name):
    p, _ = preset(name)
    ff = generate_field(p, GridSpec(64, 33, 49))
    res = fd_vorticity_residual(ff, Scales.from_reynolds(p.R, p.nu, p.Re), p.Re)
    assert np.max(np.abs(res)) <= 1e-2


def test_corrupt_zero_noise_is_identity():
    ff = generate_field(WomersleyParams(alpha=2.77), GridSpec(8, 9, 6))
    out = corrupt(ff, 0.0, seed=3, dropout_fraction=0.3)
    assert np.array_equal(out.u, ff.u) and np.array_equal(out.v, ff.v)


def test_corrupt_statistics_and_walls():
    ff = generate_field(WomersleyParams(alpha=2.77), GridSpec(32, 17, 25))
    out = corrupt(ff, 0.3, seed=11, dropout_fraction=0.0)
    m = ff.fluid & (np.abs(ff.u) > 1e-6)
    eta = (out.u[m] - ff.u[m]) / ff.u[m]
    assert abs(eta.std() - 0.3) <= 0.03
    assert np.all(out.u[ff.boundary] == 0)


def test_corrupt_deterministic():
    ff = generate_field(WomersleyParams(alpha=2.77), GridSpec(16, 9, 13))
    a = corrupt(ff, 0.3, seed=5, dropout_fraction=0.05)
    b = corrupt(ff, 0.3, seed=5, dropout_fraction=0.05)
    c = corrupt(ff, 0.3, seed=6, dropout_fraction=0.05)
    assert np.array_equal(a.u, b.u) and not np.array_equal(a.u, c.u)


def test_corrupt_dropout_fraction():
    ff = generate_field(WomersleyParams(alpha=2.77), GridSpec(32, 17, 25))
    base = corrupt(ff, 1e-9, seed=1)
    out = corrupt(ff, 1e-9, seed=1, dropout_fraction=0.05)
    dropped = np.isclose(out.u, 0.1 * base.u, rtol=1e-6) & ff.fluid & (np.abs(ff.u) > 1e-6)
    frac = dropped.sum() / (ff.fluid & (np.abs(ff.u) > 1e-6)).sum()
    assert 0.05 <= frac <= 0.15


def test_occlude_attenuation_extremes():
    ff = generate_field(WomersleyParams(alpha=2.77), GridSpec(20, 9, 10))
    band = [((ff.times[2], ff.times[5]), (ff.xs[3], ff.xs[9]))]
    same = occlude(ff, band, attenuation=1.0)
    assert np.array_equal(same.u, ff.u)
    zero = occlude(ff, band, attenuation=0.0)
    assert np.all(zero.u[2:6, 3:10] == 0)
    assert np.array_equal(zero.u[:2], ff.u[:2]) and np.array_equal(zero.u[:, 10:], ff.u[:, 10:])
    want = np.ones(ff.shape)
    want[2:6, 3:10] = 0.0
    assert np.array_equal(zero.lam, want)


def test_occlude_twenty_percent_band():
    # a band over 20% of the x-columns at every time: mean |u| drops by 0.8 * 20%
    ff = generate_field(WomersleyParams(alpha=2.77), GridSpec(50, 17, 9))
    band = [((ff.times[0], ff.times[-1]), (ff.xs[10], ff.xs[19]))]
    out = occlude(ff, band, attenuation=0.2)
    inside = out.lam == 0
    assert inside[ff.fluid].mean() == pytest.approx(0.2, abs=1e-12)
    drop = 1 - np.abs(out.u[ff.fluid]).mean() / np.abs(ff.u[ff.fluid]).mean()
    assert drop == pytest.approx(0.16, abs=1e-12)


def test_occlude_rejects_bad_bands():
    ff = generate_field(WomersleyParams(alpha=2.77), GridSpec(8, 9, 6))
    with pytest.raises(ConfigError):
        occlude(ff, [((0.0, ff.times[-1] * 2), (0.0, 0.01))])
    with pytest.raises(ConfigError):
        occlude(ff, [((0.5, 0.1), (0.0, 0.01))])
    with pytest.raises(ConfigError):
        occlude(ff, [], attenuation=1.5)


def test_random_bands_deterministic_and_near_coverage():
    ff = generate_field(WomersleyParams(alpha=2.77), GridSpec(64, 9, 49))
    b1 = random_bands(ff, 0.2, seed=4)
    assert b1 == random_bands(ff, 0.2, seed=4)
    out = occlude(ff, b1, attenuation=0.2)
    assert 0.1 <= (out.lam == 0).mean() <= 0.21


def test_params_roundtrip():
    p = WomersleyParams(alpha=5.0, Re=300.0)
    q = WomersleyParams.from_dict(p.to_dict())
    assert q == p and math.isclose(q.f, p.f, rel_tol=0)
