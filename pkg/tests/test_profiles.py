"""Profile construction, mode chart, and local expansion data.

Frozen floats below are regression anchors from a validated initial run;
everything that has an exact closed form is asserted against the formula
instead.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from specflow.profiles import (
    DomainError,
    InvalidModeError,
    PoleModeError,
    ProfileConstructionError,
    ProfileValidationError,
    TwistSpec,
    build_binding_profile,
    build_dehn_profile,
    delta,
    integral_delta,
    mode_point,
    mode_points_batch,
    profile_from_json,
    profile_to_json,
    rotation_number,
    superlevel_intervals,
    taylor_at,
)

INT_DELTA_BINDING_FULL = 9.207367225881898
INT_DELTA_DEHN_FULL = 179.32917512600883
INT_DELTA_DEHN_CORE = 55.23824313505907
RHO_STAR_1_0 = 1.7740056412100358
TAYLOR_3_2_GAMMA = 2.39334332955144
TAYLOR_3_2_R1 = 0.38544165711323214


# ---------------------------------------------------------------------------
# construction


def test_binding_breakpoints(binding):
    want = [0.0, 0.1, 0.8, 1.25, 1.3125, 1.375, 1.4375, 1.5, 1.5625, 1.625, 1.6875, 1.75, 1.9, 2.0]
    assert np.allclose(binding.f.x, want, atol=1e-15)
    assert binding.rho_lo == 0.0 and binding.rho_hi == 2.0


def test_binding_mandated_pieces(binding):
    rho = np.linspace(0.0, 0.1, 41)
    np.testing.assert_allclose(binding.f(rho), rho**2, atol=1e-15)
    np.testing.assert_allclose(binding.g(rho), 2.0 - rho**2, atol=1e-14)
    rho = np.linspace(1.9, 2.0, 41)
    np.testing.assert_allclose(binding.f(rho), (2.0 - rho) ** 2, atol=1e-14)
    np.testing.assert_allclose(binding.g(rho), -2.0 + (2.0 - rho) ** 2, atol=1e-14)
    rho = np.linspace(0.8, 1.25, 46)
    np.testing.assert_allclose(binding.f(rho), 5.0, atol=1e-12)
    np.testing.assert_allclose(binding.g(rho), 2.0 - rho, atol=1e-13)


def test_dehn_mandated_pieces(dehn):
    tw = dehn.params.twist
    rho = np.linspace(-1.15, 1.15, 231)
    np.testing.assert_allclose(dehn.g(rho), 2.0 * (0.5 - rho), atol=1e-12)
    np.testing.assert_allclose(dehn.f(rho), 30.0 - 2.0 * (0.5 - rho) * tw.tau(rho), atol=1e-10)
    # poles carry g(-2) = 2|v| + 2 = -g(2)
    assert dehn.g(-2.0) == pytest.approx(3.0, abs=1e-14)
    assert dehn.g(2.0) == pytest.approx(-3.0, abs=1e-13)
    assert dehn.f(-2.0) == pytest.approx(0.0, abs=1e-15)
    # fully twisted side is linear in rho with slope 2 * total twist
    rho = np.linspace(0.95, 1.15, 21)
    np.testing.assert_allclose(dehn.f(rho), 30.0 - 4.0 * math.pi * (0.5 - rho), atol=1e-10)


def test_twist_spec_shape():
    tw = TwistSpec(N=1, sign=1, eps=0.01)
    assert tw.tau(-0.95) == pytest.approx(0.0, abs=1e-15)
    assert tw.tau(0.95) == pytest.approx(2.0 * math.pi, abs=1e-12)
    assert tw.tau(0.0) == pytest.approx(math.pi, abs=1e-12)
    assert tw.dtau(-0.95) == pytest.approx(0.0, abs=1e-15)
    assert tw.dtau(0.95) == pytest.approx(0.0, abs=1e-12)
    assert tw.d2tau(0.0) == pytest.approx(0.0, abs=1e-12)
    # monotone ramp
    grid = np.linspace(-0.95, 0.95, 500)
    assert np.all(np.diff(tw.tau(grid)) >= 0.0)
    with pytest.raises(ProfileValidationError):
        TwistSpec(N=0)
    with pytest.raises(ProfileValidationError):
        TwistSpec(sign=2)


def test_positivity_and_rotation_number(binding, dehn):
    for p in (binding, dehn):
        grid = np.linspace(p.rho_lo, p.rho_hi, 5001)[1:-1]
        assert np.all(delta(p, grid) > 0.0)
        u = rotation_number(p, grid)
        assert np.all(np.diff(u) < 0.0)


def test_construction_rejections():
    with pytest.raises(ProfileValidationError, match="V > 1"):
        build_binding_profile(V=0.5)
    with pytest.raises(ProfileValidationError, match="eps"):
        build_binding_profile(eps=0.02)
    with pytest.raises(ProfileValidationError, match="contact inequality"):
        build_dehn_profile(V=1.5)
    with pytest.raises(ProfileValidationError, match="offset"):
        build_dehn_profile(v=1.5)


def test_alternate_dehn_builds():
    p = build_dehn_profile(V=60.0, v=-0.3, twist=TwistSpec(N=2, sign=-1))
    assert p.g(-2.0) == pytest.approx(2.6, abs=1e-14)
    grid = np.linspace(-2.0, 2.0, 3001)[1:-1]
    assert np.all(delta(p, grid) > 0.0)


# ---------------------------------------------------------------------------
# densities and integrals


def test_delta_values(binding, dehn):
    # disc piece: Delta = 2 rho exactly
    assert delta(binding, 0.05) == pytest.approx(0.1, abs=1e-15)
    # flat piece: Delta = V / 2
    assert delta(binding, 1.0) == pytest.approx(2.5, abs=1e-12)
    # twisted core: Delta = V - 2 (v - rho)^2 tau'(rho)
    tw = dehn.params.twist
    for rho in (-0.5, 0.0, 0.7):
        want = 30.0 - 2.0 * (0.5 - rho) ** 2 * float(tw.dtau(rho))
        assert delta(dehn, rho) == pytest.approx(want, rel=1e-12)


def test_integral_delta_exact_and_frozen(binding, dehn):
    assert integral_delta(binding, 0.0, 0.1) == pytest.approx(1e-2, abs=1e-16)
    assert integral_delta(binding) == pytest.approx(INT_DELTA_BINDING_FULL, rel=1e-13)
    assert integral_delta(dehn) == pytest.approx(INT_DELTA_DEHN_FULL, rel=1e-13)
    assert integral_delta(dehn, -1.0, 1.0) == pytest.approx(INT_DELTA_DEHN_CORE, rel=1e-13)
    # additivity
    mid = 0.73
    parts = integral_delta(binding, 0.0, mid) + integral_delta(binding, mid, 2.0)
    assert parts == pytest.approx(integral_delta(binding), rel=1e-14)


def test_integral_delta_against_quadrature(binding, dehn):
    for p in (binding, dehn):
        val, err = quad(
            lambda r: 0.5 * (float(p.df(r)) * float(p.g(r)) - float(p.f(r)) * float(p.dg(r))),
            p.rho_lo,
            p.rho_hi,
            points=list(p.f.x),
            limit=200,
        )
        assert integral_delta(p) == pytest.approx(val, abs=max(1e-9, 10 * err))


def test_domain_errors(binding):
    with pytest.raises(DomainError):
        delta(binding, 2.5)
    with pytest.raises(DomainError):
        integral_delta(binding, -1.0, 1.0)


# ---------------------------------------------------------------------------
# mode chart


def test_mode_point_examples(binding, dehn):
    mp = mode_point(binding, 5, 1)
    assert mp.rho_star == pytest.approx(1.0, abs=1e-9)
    assert mp.gamma == pytest.approx(2.0, abs=1e-12)
    # (1, 0) localizes at the zero of g, which the descent places on the
    # stretch where g = f - 2 exactly, so f = 2 there and the frequency
    # ties the axis minimum gamma(0, 1) = 1 on the nose
    mp = mode_point(binding, 1, 0)
    assert mp.rho_star == pytest.approx(RHO_STAR_1_0, abs=1e-12)
    assert mp.gamma == pytest.approx(1.0, abs=1e-11)
    # axis modes localize at a pole with frequency 2|m| / |g(pole)|
    for m, rho, gam in ((3, 0.0, 3.0), (-3, 2.0, 3.0), (7, 0.0, 7.0)):
        mp = mode_point(binding, 0, m)
        assert (mp.rho_star, mp.gamma) == (rho, pytest.approx(gam, abs=1e-12))
    for m in (3, -3):
        assert mode_point(dehn, 0, m).gamma == pytest.approx(2.0, abs=1e-12)


def test_mode_rejections(binding):
    with pytest.raises(InvalidModeError):
        mode_point(binding, 0, 0)
    with pytest.raises(InvalidModeError):
        mode_point(binding, -1, 2)
    with pytest.raises(InvalidModeError):
        mode_points_batch(binding, np.array([0]), np.array([1]))


def test_gamma_floor_and_plateau_ties(binding):
    k = 20
    ms = np.arange(-60, 61)
    rho, gam = mode_points_batch(binding, np.full(ms.shape, k), ms)
    assert np.all(gam >= 2.0 * k / 5.0 - 1e-12)
    tied = np.abs(gam - 2.0 * k / 5.0) <= 1e-10
    inside = (rho >= 0.8 - 1e-9) & (rho <= 1.25 + 1e-9)
    np.testing.assert_array_equal(tied, inside)
    assert tied.any()
    # two modes sharing the plateau share the frequency exactly
    assert mode_point(binding, 20, 3).gamma == pytest.approx(mode_point(binding, 20, 4).gamma, abs=1e-12)


@settings(deadline=None, max_examples=60)
@given(k=st.integers(1, 150), m=st.integers(-300, 300))
def test_mode_residual_property(k, m):
    p = _BINDING_CACHE[0]
    mp = mode_point(p, k, m)
    resid = k * float(p.g(mp.rho_star)) - m * float(p.f(mp.rho_star))
    assert abs(resid) <= 1e-10 * (abs(k) + abs(m) + 1.0)
    assert mp.gamma > 0.0


@settings(deadline=None, max_examples=60)
@given(
    r1=st.floats(0.02, 1.98, allow_nan=False),
    r2=st.floats(0.02, 1.98, allow_nan=False),
)
def test_rotation_number_strictly_decreasing(r1, r2):
    p = _BINDING_CACHE[0]
    if abs(r1 - r2) < 1e-6:
        return
    u1, u2 = rotation_number(p, r1), rotation_number(p, r2)
    assert (u1 - u2) * (r2 - r1) > 0.0


_BINDING_CACHE = [build_binding_profile()]


# ---------------------------------------------------------------------------
# local expansions


def _fd_series(p, mp, half_width=0.01, n=21):
    """Degree-6 least-squares fit of the two local potentials around rho_star.

    Independent of the series-arithmetic path in taylor_at: only direct
    piecewise-polynomial evaluations enter.
    """
    xs = np.linspace(-half_width, half_width, n)
    rho = mp.rho_star + xs
    dd = p.delta_pp(rho)
    ddd = p.delta_pp.derivative()(rho)
    P = (mp.k * p.dg(rho) - mp.m * p.df(rho)) / (2.0 * dd)
    U = (mp.k * p.g(rho) - mp.m * p.f(rho)) / dd + ddd / (2.0 * dd)
    s = xs / half_width
    cp = np.polynomial.polynomial.polyfit(s, P, 6)
    cu = np.polynomial.polynomial.polyfit(s, -U, 6)
    scale = half_width ** np.arange(7)
    return cp / scale, cu / scale


@pytest.mark.parametrize("kind,k,m", [("b", 3, 2), ("b", 2, -3), ("b", 7, 3), ("d", 4, 1)])
def test_taylor_against_fd_fit(binding, dehn, kind, k, m):
    p = binding if kind == "b" else dehn
    mp = mode_point(p, k, m)
    td = taylor_at(p, mp)
    cp, cu = _fd_series(p, mp)
    lo = dict(rtol=1e-3, atol=2e-5 * max(1.0, td.gamma))
    hi = dict(rtol=5e-3, atol=2e-3 * max(1.0, td.gamma))
    np.testing.assert_allclose(cp[0], -td.gamma / 2.0, **lo)
    np.testing.assert_allclose(cp[1], 0.0, **lo)
    np.testing.assert_allclose(cp[2], td.r1, **lo)
    np.testing.assert_allclose(cp[3], td.r3, **hi)
    np.testing.assert_allclose(cu[0], td.c1, **lo)
    np.testing.assert_allclose(cu[1], td.gamma + td.c2, **lo)
    np.testing.assert_allclose(cu[2], td.r2, **lo)
    np.testing.assert_allclose(cu[3], td.r4, **hi)


@pytest.mark.parametrize("kind,k,m", [("b", 3, 2), ("b", 2, -3), ("b", 7, 3), ("d", 4, 1)])
def test_quadratic_coefficient_closed_form(binding, dehn, kind, k, m):
    # r1 / gamma depends on f, g alone: scale-invariant along rays in (k, m)
    p = binding if kind == "b" else dehn
    mp = mode_point(p, k, m)
    td = taylor_at(p, mp)
    r = mp.rho_star
    f, df, d2f = float(p.f(r)), float(p.df(r)), float(p.d2f(r))
    g, dg, d2g = float(p.g(r)), float(p.dg(r)), float(p.d2g(r))
    du = (dg * f - g * df) / f**2
    d2u = (d2g * f - g * d2f) / f**2 - 2.0 * df * (dg * f - g * df) / f**3
    want = -(td.gamma / 4.0) * (-(d2u / du) * (df / f) + d2f / f - 2.0 * (df / f) ** 2)
    assert td.r1 == pytest.approx(want, rel=1e-8, abs=1e-10)


def test_taylor_flat_mode_vanishes(binding):
    mp = mode_point(binding, 50, 10)
    td = taylor_at(binding, mp)
    assert td.gamma == pytest.approx(20.0, abs=1e-11)
    for name in ("c1", "c2", "c3", "r1", "r2", "r3", "r4"):
        assert abs(getattr(td, name)) <= 1e-10, name


def test_taylor_regression_values(binding):
    td = taylor_at(binding, mode_point(binding, 3, 2))
    assert td.gamma == pytest.approx(TAYLOR_3_2_GAMMA, rel=1e-12)
    assert td.r1 == pytest.approx(TAYLOR_3_2_R1, rel=1e-10)


def test_taylor_pole_refusals(binding):
    with pytest.raises(PoleModeError, match="pole"):
        taylor_at(binding, mode_point(binding, 0, 5))
    with pytest.raises(PoleModeError, match="pole"):
        taylor_at(binding, mode_point(binding, 1, 399))


# ---------------------------------------------------------------------------
# superlevel sets


def test_superlevel_plateau_exact(binding):
    assert superlevel_intervals(binding, 5.0) == [(0.8, 1.25)]
    assert superlevel_intervals(binding, 99.0) == []


def test_superlevel_endpoints_sit_on_level(binding, dehn):
    for p, level in ((binding, 4.0), (binding, 0.5), (dehn, 29.0), (dehn, 25.0)):
        ivs = superlevel_intervals(p, level)
        assert ivs
        for a, b in ivs:
            for e in (a, b):
                if e not in (p.rho_lo, p.rho_hi):
                    assert float(p.f(e)) == pytest.approx(level, abs=1e-8)
            assert float(p.f(0.5 * (a + b))) >= level - 1e-10


def test_superlevel_nesting(dehn):
    inner = superlevel_intervals(dehn, 31.0)
    outer = superlevel_intervals(dehn, 29.0)
    assert len(outer) == 2 and len(inner) == 1
    a, b = inner[0]
    assert any(lo - 1e-12 <= a and b <= hi + 1e-12 for lo, hi in outer)
    # the untwisted plateau is a whole component at level V
    comp = superlevel_intervals(dehn, 30.0)
    assert comp[0] == pytest.approx((-1.15, -0.95), abs=1e-12)


# ---------------------------------------------------------------------------
# serialization


def test_json_roundtrip(binding, dehn, tmp_path):
    for p in (binding, dehn):
        doc = profile_to_json(p)
        q = profile_from_json(doc)
        np.testing.assert_array_equal(p.f.x, q.f.x)
        np.testing.assert_array_equal(p.f.c, q.f.c)
        np.testing.assert_array_equal(p.g.c, q.g.c)
        grid = np.linspace(p.rho_lo, p.rho_hi, 777)
        np.testing.assert_array_equal(p.f(grid), q.f(grid))
        np.testing.assert_array_equal(p.g(grid), q.g(grid))
    alt = build_dehn_profile(V=60.0, v=-0.3, twist=TwistSpec(N=2, sign=-1))
    q = profile_from_json(profile_to_json(alt))
    assert q.params.twist == alt.params.twist
    assert q.params.v == alt.params.v
