"""Circle-symmetric contact profiles and their mode charts.

A profile is a pair of piecewise-polynomial functions (f, g) on a closed
interval [rho_lo, rho_hi].  f vanishes quadratically at both endpoints
("poles"), f > 0 in between, and the rotation number u = g/f is strictly
decreasing, which is equivalent to positivity of the half-twist density

    Delta = (f' g - f g') / 2.

Two families are built here: a "binding" shape on [0, 2] and a twisted
"dehn_twist" shape on [-2, 2].  Every piece is a true polynomial (the
junction pieces are quintic Hermite interpolants, the core of the twisted
family is degree 6), so derivatives, Taylor data and integrals used
downstream are computed exactly, not by finite differences.

A mode is an integer pair (k, m), k >= 0.  For k > 0 the localization
point rho_star solves k g = m f and the frequency is gamma = 2k/f(rho_star);
for k = 0 the mode sits at a pole and gamma = 2|m| / |g(pole)|.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import BPoly, PPoly

__all__ = [
    "BINDING",
    "DEHN_TWIST",
    "TwistSpec",
    "ProfileParams",
    "ContactProfile",
    "ModePoint",
    "TaylorData",
    "ProfileError",
    "ProfileConstructionError",
    "ProfileValidationError",
    "DomainError",
    "InvalidModeError",
    "PoleModeError",
    "build_binding_profile",
    "build_dehn_profile",
    "delta",
    "integral_delta",
    "mode_point",
    "mode_points_batch",
    "taylor_at",
    "superlevel_intervals",
    "rotation_number",
    "profile_to_json",
    "profile_from_json",
    "save_profile",
    "load_profile",
]

BINDING = "binding"
DEHN_TWIST = "dehn_twist"

# Dense validation grid used at construction time; taylor_at's interiority
# margin is expressed in multiples of this step.
VALIDATION_POINTS = 10_000


class ProfileError(Exception):
    """Base class for profile failures."""


class ProfileConstructionError(ProfileError):
    """A built profile violates a positivity requirement; names the offending rho."""


class ProfileValidationError(ProfileError):
    """Input parameters violate a stated inequality (message cites it)."""


class DomainError(ProfileError):
    """Evaluation outside [rho_lo, rho_hi]."""


class InvalidModeError(ProfileError):
    """(k, m) outside the admissible lattice, e.g. (0, 0) or k < 0."""


class PoleModeError(ProfileError):
    """Mode localizes at or near a pole; Taylor data is meaningless there."""


def _smoothstep(t):
    """C^2 step: 0 -> 1 on [0, 1] with vanishing first and second end derivatives."""
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 + t * (-15.0 + 6.0 * t))


def _smoothstep_d1(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    tt = np.where(inside, t, 0.0)
    return np.where(inside, 30.0 * tt**2 * (1.0 - tt) ** 2, 0.0)


def _smoothstep_d2(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    tt = np.where(inside, t, 0.0)
    return np.where(inside, 60.0 * tt * (1.0 - tt) * (1.0 - 2.0 * tt), 0.0)


@dataclass(frozen=True)
class TwistSpec:
    """Monotone twist profile: 0 left of the ramp, sign*2*pi*N right of it.

    The ramp occupies [-1 + 5 eps, 1 - 5 eps] and follows the quintic
    smoothstep, so tau is C^2 with flat ends.
    """

    N: int = 1
    sign: int = 1
    eps: float = 0.01

    def __post_init__(self):
        if not (isinstance(self.N, int) and self.N >= 1):
            raise ProfileValidationError(f"twist winding N must be a positive integer, got {self.N}")
        if self.sign not in (-1, 1):
            raise ProfileValidationError(f"twist sign must be +1 or -1, got {self.sign}")

    @property
    def total(self) -> float:
        return self.sign * 2.0 * math.pi * self.N

    def _t(self, rho):
        lo = -1.0 + 5.0 * self.eps
        return (np.asarray(rho, dtype=float) - lo) / (2.0 - 10.0 * self.eps)

    def tau(self, rho):
        return self.total * _smoothstep(self._t(rho))

    def dtau(self, rho):
        w = 2.0 - 10.0 * self.eps
        return self.total * _smoothstep_d1(self._t(rho)) / w

    def d2tau(self, rho):
        w = 2.0 - 10.0 * self.eps
        return self.total * _smoothstep_d2(self._t(rho)) / w**2


@dataclass(frozen=True)
class ProfileParams:
    V: float
    eps: float = 0.01
    v: Optional[float] = None
    twist: Optional[TwistSpec] = None

    def __post_init__(self):
        if not self.V > 1.0:
            raise ProfileValidationError(f"profile height must satisfy V > 1, got V={self.V}")
        if not 0.0 < self.eps <= 0.01:
            raise ProfileValidationError(f"eps must lie in (0, 0.01], got eps={self.eps}")


@dataclass(frozen=True)
class ModePoint:
    k: int
    m: int
    rho_star: float
    gamma: float


@dataclass(frozen=True)
class TaylorData:
    """Local expansion data at rho_star in the centered variable x.

    gamma : frequency 2k/f(rho_star)
    c1, c2 : constant and linear corrections of the minus-potential series
             (the leading gamma*x part is split off)
    c3 : curvature correction (f'' g' - f' g'')/(8 Delta) at rho_star
    r1, r3 : quadratic and cubic coefficients of (k g' - m f')/(2 Delta)
    r2, r4 : quadratic and cubic corrections of the minus-potential series
    """

    gamma: float
    c1: float
    c2: float
    c3: float
    r1: float
    r2: float
    r3: float
    r4: float

    def as_tuple(self):
        return (self.gamma, self.c1, self.c2, self.c3, self.r1, self.r2, self.r3, self.r4)


@dataclass
class ContactProfile:
    kind: str
    rho_lo: float
    rho_hi: float
    f: PPoly
    g: PPoly
    params: ProfileParams
    junctions: tuple = ()
    # derivative chain, filled in by the builder
    _derivs: dict = field(default_factory=dict, repr=False)
    _delta_pp: Optional[PPoly] = field(default=None, repr=False)

    def fg_derivative(self, which: str, order: int) -> PPoly:
        """Exact derivative PPoly of f or g (order 0 returns the function)."""
        key = (which, order)
        if key not in self._derivs:
            base = self.f if which == "f" else self.g
            self._derivs[key] = base if order == 0 else base.derivative(order)
        return self._derivs[key]

    @property
    def df(self) -> PPoly:
        return self.fg_derivative("f", 1)

    @property
    def d2f(self) -> PPoly:
        return self.fg_derivative("f", 2)

    @property
    def dg(self) -> PPoly:
        return self.fg_derivative("g", 1)

    @property
    def d2g(self) -> PPoly:
        return self.fg_derivative("g", 2)

    @property
    def delta_pp(self) -> PPoly:
        if self._delta_pp is None:
            self._delta_pp = _half_wronskian(self.f, self.g)
        return self._delta_pp

    @property
    def validation_step(self) -> float:
        return (self.rho_hi - self.rho_lo) / VALIDATION_POINTS

    def pole_gamma_scale(self, which: str) -> float:
        """|g| at the requested pole; gamma of a k=0 mode there is 2|m| / this."""
        rho = self.rho_lo if which == "lo" else self.rho_hi
        return abs(float(self.g(rho)))


# ---------------------------------------------------------------------------
# piecewise construction helpers


def _quintic(a: float, b: float, left: Sequence[float], right: Sequence[float]) -> np.ndarray:
    """Descending local coefficients of the quintic matching value/d1/d2 at both ends."""
    bp = BPoly.from_derivatives([a, b], [list(left), list(right)])
    pp = PPoly.from_bernstein_basis(bp)
    c = np.zeros(6)
    c[-pp.c.shape[0]:] = pp.c[:, 0]
    return c


def _assemble(breaks: Sequence[float], coeffs: Sequence[np.ndarray]) -> PPoly:
    order = max(len(c) for c in coeffs)
    mat = np.zeros((order, len(coeffs)))
    for i, c in enumerate(coeffs):
        mat[order - len(c):, i] = c
    return PPoly(mat, np.asarray(breaks, dtype=float))


def _half_wronskian(fpp: PPoly, gpp: PPoly) -> PPoly:
    """Exact piecewise polynomial (f' g - f g') / 2 on the shared breakpoints."""
    assert np.array_equal(fpp.x, gpp.x)
    n = fpp.c.shape[1]
    out = []
    for i in range(n):
        fc = np.trim_zeros(fpp.c[:, i], "f")
        gc = np.trim_zeros(gpp.c[:, i], "f")
        if fc.size == 0:
            fc = np.zeros(1)
        if gc.size == 0:
            gc = np.zeros(1)
        term = np.polymul(np.polyder(fc) if fc.size > 1 else np.zeros(1), gc)
        term = np.polysub(term, np.polymul(fc, np.polyder(gc) if gc.size > 1 else np.zeros(1)))
        out.append(0.5 * term)
    return _assemble(fpp.x, out)


def _row(rho, fv, df, d2f, gv, dg, d2g):
    return (float(rho), float(fv), float(df), float(d2f), float(gv), float(dg), float(d2g))


def _profile_from_rows(kind, rho_lo, rho_hi, rows, exact_pieces, params) -> ContactProfile:
    """Assemble f, g from exact pieces plus quintic Hermite fills between anchor rows.

    exact_pieces: list of (lo, hi, f_coeffs, g_coeffs) with descending local
    coefficients.  Every maximal interval not covered by an exact piece must
    be bordered (and may be subdivided) by anchor rows; each consecutive row
    pair inside it gets a quintic fill.
    """
    events = [(lo, hi, np.asarray(fc, float), np.asarray(gc, float)) for lo, hi, fc, gc in exact_pieces]
    events.sort(key=lambda t: t[0])
    rows = sorted(rows)
    gaps = []
    cursor = rho_lo
    for lo, hi, _, _ in events:
        if lo > cursor + 1e-14:
            gaps.append((cursor, lo))
        cursor = hi
    if cursor < rho_hi - 1e-14:
        gaps.append((cursor, rho_hi))
    for ga, gb in gaps:
        sub = [r for r in rows if ga - 1e-12 <= r[0] <= gb + 1e-12]
        if len(sub) < 2 or abs(sub[0][0] - ga) > 1e-12 or abs(sub[-1][0] - gb) > 1e-12:
            raise ProfileConstructionError(f"no anchor rows bordering the free region ({ga}, {gb})")
        for r0, r1 in zip(sub[:-1], sub[1:]):
            fc = _quintic(r0[0], r1[0], r0[1:4], r1[1:4])
            gc = _quintic(r0[0], r1[0], r0[4:7], r1[4:7])
            events.append((r0[0], r1[0], fc, gc))
    events.sort(key=lambda t: t[0])
    breaks = [events[0][0]] + [e[1] for e in events]
    f = _assemble(breaks, [e[2] for e in events])
    g = _assemble(breaks, [e[3] for e in events])
    prof = ContactProfile(kind, rho_lo, rho_hi, f, g, params, junctions=tuple(rows))
    _validate_positivity(prof)
    _check_junctions(prof)
    return prof


def _validate_positivity(p: ContactProfile):
    grid = np.linspace(p.rho_lo, p.rho_hi, VALIDATION_POINTS + 1)[1:-1]
    fv = p.f(grid)
    if np.any(fv <= 0.0):
        rho = float(grid[np.argmin(fv)])
        raise ProfileConstructionError(f"f <= 0 at rho={rho:.6f} (f={np.min(fv):.3e}); profile is not contact")
    dv = p.delta_pp(grid)
    if np.any(dv <= 0.0):
        rho = float(grid[np.argmin(dv)])
        raise ProfileConstructionError(
            f"Delta <= 0 at rho={rho:.6f} (Delta={np.min(dv):.3e}); g/f fails to be strictly decreasing"
        )


def _check_junctions(p: ContactProfile):
    # construction should be C^2 by design; this guards against bad anchor rows
    for pp, name in ((p.f, "f"), (p.g, "g")):
        for order in range(3):
            d = pp if order == 0 else pp.derivative(order)
            for i in range(1, len(d.x) - 1):
                b = d.x[i]
                left = np.polyval(d.c[:, i - 1], b - d.x[i - 1])
                right = d.c[-1, i]
                scale = max(1.0, abs(left), abs(right))
                if abs(left - right) > 1e-9 * scale:
                    raise ProfileConstructionError(
                        f"{name} derivative {order} jumps by {left - right:.3e} at junction rho={b}"
                    )


# ---------------------------------------------------------------------------
# builders


def build_binding_profile(V: float = 5.0, eps: float = 0.01) -> ContactProfile:
    """Binding shape on [0, 2].

    Mandated pieces: f = rho^2, g = 2 - rho^2 on [0, 10 eps]; f = V,
    g = 2 - rho on [1 - 5 eps, 1 + 15 eps]; mirrored quadratic pole at 2.
    The free regions are quintic Hermite fills between the anchor rows
    below; the f = V plateau is deliberately widened to [0.8, 1.25] (the
    Hermite fill reproduces constants exactly) so that modes localized in
    the mandated flat window sit far from any curvature.
    """
    params = ProfileParams(V=V, eps=eps)
    a = 10.0 * eps
    exact = [
        (0.0, a, [1.0, 0.0, 0.0], [-1.0, 0.0, 2.0]),  # f=rho^2, g=2-rho^2
        # far pole, local xi = rho-(2-a): f=(a-xi)^2, g=(a-xi)^2-2
        (2.0 - a, 2.0, [1.0, -2.0 * a, a * a], [1.0, -2.0 * a, a * a - 2.0]),
    ]
    rows = [
        _row(a, a * a, 2 * a, 2.0, 2.0 - a * a, -2 * a, -2.0),
        _row(0.8, V, 0.0, 0.0, 1.2, -1.0, 0.0),
        _row(1.25, V, 0.0, 0.0, 0.75, -1.0, 0.0),
        *_binding_descent_rows(V, a),
        _row(2.0 - a, a * a, -2 * a, 2.0, a * a - 2.0, -2 * a, 2.0),
    ]
    if not (1.0 + 15.0 * eps <= 1.25 and 1.0 - 5.0 * eps >= 0.8):
        raise ProfileValidationError(f"eps={eps} pushes the mandated flat window outside the plateau")
    return _profile_from_rows(BINDING, 0.0, 2.0, rows, exact, params)


def _binding_descent_rows(V: float, a: float, lo: float = 1.25, rj: float = 1.75) -> list:
    """Interior anchor rows carrying the binding shape from the plateau to the pole.

    The descent is the one stretch where hand-tuned rows keep failing, for a
    structural reason: u = g/f has to fall from its plateau value all the way
    to 1 - 2/a^2 ~ -200, and wherever that drop is carried by ad-hoc shapes,
    the operator family grows extra localized states whose zero crossings
    land inside other modes' search brackets.  Two facts tame it:

      * on a "pole track" where g = f - 2 identically, Delta = -f' for any
        monotone f, and a short computation shows every state localized on
        the track crosses at exactly k - m -- which is that mode's own
        frequency gamma(k, m) there, so nothing spurious appears no matter
        how violently f (hence Delta) varies on the track;
      * off the track, a decreasing Delta leaves the effective potential of
        every mode localized elsewhere single-signed, so the transition
        region is safe as long as its Delta target never rises.

    So the construction is: a transition on [lo, rj] where f is a quintic
    from (V, 0, 0) to (fj, fj', 0) with fj just above 2, and g = u f with u
    obtained by integrating u' = -2 Delta / f^2 against a monotone cubic
    Delta target scaled by one interior bump whose amplitude is solved (in
    closed form -- the constraint is linear) so that u lands exactly on the
    track value 1 - 2/fj; then the track itself from rj to the pole row,
    which needs no interior rows at all: the quintic fill between the rj row
    and the pole row reproduces g = f - 2 exactly, because Hermite data that
    differ by the constant 2 interpolate to fills that differ by 2.

    With fj > 2 the zero of g sits on the track at f = 2, which makes the
    slowest k >= 1 frequency exactly 1, tying the k = 0 axis modes; for
    small V (fj capped at 0.92 V < 2) the zero moves into the transition and
    the tie is only approximate.  Junction smoothness at both ends is
    automatic: matching the Delta endpoint data is the same thing as
    matching the curvature data of (f, g) once f and u agree there.
    """
    hi = 2.0 - a
    u_lo = (2.0 - lo) / V
    fj = min(2.2, 2.0 / (1.0 - 0.25 * u_lo), 0.92 * V)
    dfj = -min(3.0 / V, 0.5 * V, 1.6 * (V - fj) / (rj - lo))
    uj = 1.0 - 2.0 / fj
    if not uj < u_lo - 1e-9:
        raise ProfileConstructionError(f"descent start u={u_lo} already below track start u={uj}")
    f_tr = BPoly.from_derivatives([lo, rj], [[V, 0.0, 0.0], [fj, dfj, 0.0]])
    f_tr1 = f_tr.derivative()
    f_tr2 = f_tr1.derivative()
    if not np.all(f_tr1(np.linspace(lo, rj, 257)[1:-1]) < 0.0):
        raise ProfileConstructionError("descent transition f is not strictly decreasing")
    width = rj - lo
    # cubic Hermite (V/2, 0) -> (-dfj, 0) in the warped time 1 - (1-s)^3, so the
    # target dives while f is still large; the endpoint slope pins survive the warp
    core = BPoly.from_derivatives([0.0, 1.0], [[0.5 * V, 0.0], [-dfj, 0.0]])
    core1 = core.derivative()

    def d0(r):
        s = (r - lo) / width
        return core(1.0 - (1.0 - s) ** 3)

    def d01(r):
        s = (r - lo) / width
        return core1(1.0 - (1.0 - s) ** 3) * 3.0 * (1.0 - s) ** 2 / width

    def bump(r):
        s = (r - lo) / width
        return s * s * (1.0 - s) ** 2

    def bump1(r):
        s = (r - lo) / width
        return 2.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / width

    kernel = lambda r: 2.0 * d0(r) / f_tr(r) ** 2
    base = quad(kernel, lo, rj, epsabs=1e-13, epsrel=1e-13, limit=400)[0]
    gain = quad(lambda r: kernel(r) * bump(r), lo, rj, epsabs=1e-13, epsrel=1e-13, limit=400)[0]
    lam = (u_lo - uj - base) / gain
    if not 1.0 + lam / 16.0 > 0.02:  # bump peaks at 1/16
        raise ProfileConstructionError(f"descent needs an inadmissible density correction (lam={lam:.3f})")

    rows = []
    stations = np.linspace(lo, rj, 9)
    u = u_lo
    for s0, s1 in zip(stations[:-2], stations[1:-1]):
        u -= quad(lambda r: kernel(r) * (1.0 + lam * bump(r)), s0, s1,
                  epsabs=1e-13, epsrel=1e-13, limit=400)[0]
        dd = float(d0(s1)) * (1.0 + lam * bump(s1))
        dd1 = float(d01(s1)) * (1.0 + lam * bump(s1)) + float(d0(s1)) * lam * bump1(s1)
        rows.append(_g_row_from_design(s1, float(f_tr(s1)), float(f_tr1(s1)), float(f_tr2(s1)), u, dd, dd1))
    rows.append(_row(rj, fj, dfj, 0.0, fj - 2.0, dfj, 0.0))
    f_tk = BPoly.from_derivatives([rj, hi], [[fj, dfj, 0.0], [a * a, -2.0 * a, 2.0]])
    probe = np.linspace(rj, hi, 513)
    if not np.all(f_tk.derivative()(probe) < 0.0):
        raise ProfileConstructionError("pole track f is not strictly decreasing")
    return rows


def _g_row_from_design(rho, f, f1, f2, u, delta, delta1):
    """Anchor row for g = u f given u's defining data u' = -2 Delta / f^2."""
    u1 = -2.0 * delta / f**2
    u2 = -2.0 * delta1 / f**2 + 4.0 * delta * f1 / f**3
    return _row(rho, f, f1, f2, u * f, u1 * f + u * f1, u2 * f + 2.0 * u1 * f1 + u * f2)


def build_dehn_profile(
    V: float = 30.0,
    v: float = 0.5,
    twist: Optional[TwistSpec] = None,
    eps: float = 0.01,
) -> ContactProfile:
    """Twisted shape on [-2, 2].

    Core on [-1-15 eps, 1+15 eps]: f = V - 2(v-rho) tau(rho), g = 2(v-rho),
    with tau ramping from 0 to sign*2*pi*N.  Quadratic poles at both ends
    with g(-2) = 2|v|+2 = -g(2).  The contact requirement

        V >= 1 + 2|(v-rho)^2 tau'(rho)| + 2|(v-rho) tau(rho)|

    is checked pointwise on the core and a violation is reported verbatim.
    """
    if twist is None:
        twist = TwistSpec(N=1, sign=1, eps=eps)
    if abs(twist.eps - eps) > 0.0:
        twist = TwistSpec(N=twist.N, sign=twist.sign, eps=eps)
    params = ProfileParams(V=V, eps=eps, v=v, twist=twist)
    if not abs(v) < 1.0:
        raise ProfileValidationError(f"offset must satisfy |v| < 1, got v={v}")

    # contact inequality on the core
    core = np.linspace(-1.0 - 15.0 * eps, 1.0 + 15.0 * eps, 4001)
    need = 1.0 + 2.0 * np.abs((v - core) ** 2 * twist.dtau(core)) + 2.0 * np.abs((v - core) * twist.tau(core))
    worst = int(np.argmax(need))
    if V < need[worst]:
        raise ProfileValidationError(
            "contact inequality V >= 1 + 2|(v-rho)^2 tau'| + 2|(v-rho) tau| fails at "
            f"rho={core[worst]:.4f}: V={V} < {need[worst]:.6f}"
        )

    C0 = 2.0 * abs(v) + 2.0
    a = 10.0 * eps
    A = twist.total
    ramp_lo, ramp_hi = -1.0 + 5.0 * eps, 1.0 - 5.0 * eps
    w = ramp_hi - ramp_lo

    # tau on the ramp in the local variable xi = rho - ramp_lo, descending coeffs
    c = 1.0 / w
    tau_c = A * np.array([6.0 * c**5, -15.0 * c**4, 10.0 * c**3, 0.0, 0.0, 0.0])
    lin = np.array([-1.0, v - ramp_lo])  # (v - rho) locally
    f_ramp = -2.0 * np.polymul(tau_c, lin)
    f_ramp[-1] += V
    g_ramp = 2.0 * lin

    core_lo, core_hi = -1.0 - 15.0 * eps, 1.0 + 15.0 * eps
    exact = [
        # pole at -2: f = xi^2, g = C0 - xi^2, xi = rho + 2
        (-2.0, -2.0 + a, [1.0, 0.0, 0.0], [-1.0, 0.0, C0]),
        # untwisted core entry: f = V, g = 2(v - rho)
        (core_lo, ramp_lo, [V], [-2.0, 2.0 * (v - core_lo)]),
        (ramp_lo, ramp_hi, f_ramp, g_ramp),
        # fully twisted exit: f = V - 2 A (v - rho) linear in rho
        (ramp_hi, core_hi, [2.0 * A, V - 2.0 * A * (v - ramp_hi)], [-2.0, 2.0 * (v - ramp_hi)]),
        # pole at 2: local xi = rho - (2 - a), 2 - rho = a - xi
        (2.0 - a, 2.0, [1.0, -2.0 * a, a * a], [1.0, -2.0 * a, a * a - C0]),
    ]
    rows = [
        _row(-2.0 + a, a * a, 2 * a, 2.0, C0 - a * a, -2 * a, -2.0),
        _row(core_lo, V, 0.0, 0.0, 2.0 * (v - core_lo), -2.0, 0.0),
        _row(core_hi, V - 2.0 * A * (v - core_hi), 2.0 * A, 0.0, 2.0 * (v - core_hi), -2.0, 0.0),
        _row(2.0 - a, a * a, -2 * a, 2.0, a * a - C0, -2 * a, 2.0),
    ]
    return _profile_from_rows(DEHN_TWIST, -2.0, 2.0, rows, exact, params)


# ---------------------------------------------------------------------------
# evaluation


def _check_domain(p: ContactProfile, rho):
    arr = np.asarray(rho, dtype=float)
    if np.any(arr < p.rho_lo - 1e-12) or np.any(arr > p.rho_hi + 1e-12):
        bad = arr[(arr < p.rho_lo - 1e-12) | (arr > p.rho_hi + 1e-12)]
        raise DomainError(f"rho={float(np.atleast_1d(bad)[0])} outside [{p.rho_lo}, {p.rho_hi}]")
    return arr


def delta(p: ContactProfile, rho):
    """Half-twist density Delta = (f' g - f g')/2, exact."""
    arr = _check_domain(p, rho)
    out = p.delta_pp(arr)
    return float(out) if np.isscalar(rho) else out


def rotation_number(p: ContactProfile, rho):
    """u = g/f; strictly decreasing, blows up at the poles."""
    arr = _check_domain(p, rho)
    out = p.g(arr) / p.f(arr)
    return float(out) if np.isscalar(rho) else out


def integral_delta(p: ContactProfile, lo: Optional[float] = None, hi: Optional[float] = None) -> float:
    """Integral of Delta over [lo, hi] (defaults: whole interval), exact.

    Delta is piecewise polynomial, so the antiderivative is evaluated in
    closed form; no quadrature error enters.
    """
    lo = p.rho_lo if lo is None else lo
    hi = p.rho_hi if hi is None else hi
    _check_domain(p, [lo, hi])
    anti = p.delta_pp.antiderivative()
    return float(anti(hi) - anti(lo))


# ---------------------------------------------------------------------------
# mode chart


def mode_points_batch(p: ContactProfile, k: np.ndarray, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (rho_star, gamma) for arrays of modes; k >= 1 entries only."""
    k = np.asarray(k, dtype=float)
    m = np.asarray(m, dtype=float)
    if np.any(k < 1):
        raise InvalidModeError("batch localization requires k >= 1; k = 0 modes sit at a pole")
    lo = np.full(k.shape, p.rho_lo)
    hi = np.full(k.shape, p.rho_hi)
    # F = k g - m f is positive at rho_lo and negative at rho_hi
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        F = k * p.g(mid) - m * p.f(mid)
        pos = F > 0.0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    rho = 0.5 * (lo + hi)
    gamma = 2.0 * k / p.f(rho)
    return rho, gamma


def mode_point(p: ContactProfile, k: int, m: int) -> ModePoint:
    """Localization point and frequency of the (k, m) mode."""
    if k < 0 or int(k) != k or int(m) != m:
        raise InvalidModeError(f"modes are integer pairs with k >= 0, got ({k}, {m})")
    k, m = int(k), int(m)
    if k == 0:
        if m == 0:
            raise InvalidModeError("(0, 0) is not a mode")
        which = "lo" if m > 0 else "hi"
        rho = p.rho_lo if m > 0 else p.rho_hi
        gamma = 2.0 * abs(m) / p.pole_gamma_scale(which)
        return ModePoint(0, m, rho, gamma)
    rho, gamma = mode_points_batch(p, np.array([k]), np.array([m]))
    return ModePoint(k, m, float(rho[0]), float(gamma[0]))


# ---------------------------------------------------------------------------
# Taylor data


def _ser_mul(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n)
    for i in range(min(len(a), n)):
        if a[i] == 0.0:
            continue
        top = min(len(b), n - i)
        out[i:i + top] += a[i] * b[:top]
    return out


def _ser_div(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    # power-series quotient to order n-1; requires b[0] != 0
    aa = np.zeros(n)
    aa[: min(n, len(a))] = np.asarray(a, float)[:n]
    bb = np.zeros(n)
    bb[: min(n, len(b))] = np.asarray(b, float)[:n]
    out = np.zeros(n)
    for i in range(n):
        out[i] = (aa[i] - np.dot(out[:i], bb[i:0:-1])) / bb[0]
    return out


def _ser_deriv(a: np.ndarray) -> np.ndarray:
    return np.array([(i + 1) * a[i + 1] for i in range(len(a) - 1)] + [0.0])


def taylor_at(p: ContactProfile, mp: ModePoint) -> TaylorData:
    """Exact Taylor data of the reduced potentials at an interior mode point.

    Modes within 10 eps of a pole must go through the disc model instead
    (the expansion below divides by Delta, which degenerates there).
    """
    eps = p.params.eps
    if mp.k == 0 or min(mp.rho_star - p.rho_lo, p.rho_hi - mp.rho_star) <= 10.0 * eps:
        raise PoleModeError(
            f"mode ({mp.k}, {mp.m}) localizes at rho={mp.rho_star:.4f}, within 10*eps of a pole; "
            "use the pole-disc operator backend instead of Taylor data"
        )
    if min(mp.rho_star - p.rho_lo, p.rho_hi - mp.rho_star) <= 10.0 * p.validation_step:
        raise PoleModeError(f"mode point rho={mp.rho_star:.6f} is within 10 grid steps of the boundary")

    n = 6
    rho = mp.rho_star
    F = np.array([float(p.fg_derivative("f", j)(rho)) / math.factorial(j) for j in range(n)])
    G = np.array([float(p.fg_derivative("g", j)(rho)) / math.factorial(j) for j in range(n)])
    dF, dG = _ser_deriv(F), _ser_deriv(G)
    delta_ser = 0.5 * (_ser_mul(dF, G, n) - _ser_mul(F, dG, n))
    num_p = float(mp.k) * dG - float(mp.m) * dF
    p_ser = _ser_div(num_p, 2.0 * delta_ser, 4)
    num_u = float(mp.k) * G - float(mp.m) * F
    u_ser = _ser_div(num_u, delta_ser, 4) + _ser_div(_ser_deriv(delta_ser), 2.0 * delta_ser, 4)

    gamma = mp.gamma
    scale = max(1.0, abs(gamma))
    if abs(p_ser[0] + 0.5 * gamma) > 1e-6 * scale:
        raise ArithmeticError(f"potential series constant {p_ser[0]} is not -gamma/2 = {-0.5 * gamma}")
    if abs(p_ser[1]) > 1e-6 * scale:
        raise ArithmeticError(f"potential series linear term {p_ser[1]} should cancel at rho_star")

    t0 = (float(p.d2f(rho)) * float(p.dg(rho)) - float(p.df(rho)) * float(p.d2g(rho))) / (8.0 * float(p.delta_pp(rho)))
    return TaylorData(
        gamma=gamma,
        c1=-u_ser[0],
        c2=-(u_ser[1] + gamma),
        c3=t0,
        r1=p_ser[2],
        r2=-u_ser[2],
        r3=p_ser[3],
        r4=-u_ser[3],
    )


# ---------------------------------------------------------------------------
# superlevel machinery (mode counting, sector charts)


def superlevel_intervals(p: ContactProfile, level: float) -> list[tuple[float, float]]:
    """Closed intervals where f >= level, as exact polynomial root spans.

    Plateau pieces sitting exactly on the level are included whole.  Used
    by the lattice counters; at most two components occur for the shapes
    built here, but the walk below is generic.
    """
    fpp = p.f
    # include all junctions: tangencies there make np.roots unreliable
    nodes = list(map(float, fpp.x))
    scale = max(1.0, abs(level))
    for i in range(fpp.c.shape[1]):
        a, b = fpp.x[i], fpp.x[i + 1]
        coeffs = fpp.c[:, i].copy()
        coeffs[-1] -= level
        if np.all(np.abs(coeffs) <= 1e-12 * scale):
            continue  # piece rides the level exactly
        lead = np.trim_zeros(coeffs, "f")
        if lead.size <= 1:
            continue
        for r in np.roots(lead):
            if abs(r.imag) < 1e-5 and -1e-12 <= r.real <= (b - a) + 1e-12:
                cand = float(a + min(max(r.real, 0.0), b - a))
                # double roots at junction tangencies split numerically;
                # the junction node already marks them exactly
                if min(abs(cand - x) for x in fpp.x) > 1e-5:
                    nodes.append(cand)
    nodes = sorted(set(nodes))
    out = []
    for a, b in zip(nodes[:-1], nodes[1:]):
        if b - a < 1e-14:
            continue
        if float(p.f(0.5 * (a + b))) >= level - 1e-12 * scale:
            if out and abs(out[-1][1] - a) < 1e-12:
                out[-1] = (out[-1][0], b)
            else:
                out.append((a, b))
    return out


# ---------------------------------------------------------------------------
# serialization


def profile_to_json(p: ContactProfile) -> dict:
    doc = {
        "version": 1,
        "kind": p.kind,
        "V": p.params.V,
        "eps": p.params.eps,
        "junctions": [list(r) for r in p.junctions],
    }
    if p.kind == DEHN_TWIST:
        doc["v"] = p.params.v
        doc["twist"] = {"N": p.params.twist.N, "sign": p.params.twist.sign}
    return doc


def profile_from_json(doc: dict) -> ContactProfile:
    kind = doc["kind"]
    if kind == BINDING:
        prof = build_binding_profile(V=doc["V"], eps=doc["eps"])
    elif kind == DEHN_TWIST:
        tw = TwistSpec(N=int(doc["twist"]["N"]), sign=int(doc["twist"]["sign"]), eps=doc["eps"])
        prof = build_dehn_profile(V=doc["V"], v=doc["v"], twist=tw, eps=doc["eps"])
    else:
        raise ProfileValidationError(f"unknown profile kind {kind!r}")
    if "junctions" in doc:
        stored = [tuple(r) for r in doc["junctions"]]
        if len(stored) != len(prof.junctions) or any(
            sa != sb for row_a, row_b in zip(stored, prof.junctions) for sa, sb in zip(row_a, row_b)
        ):
            raise ProfileValidationError("junction table in document does not match rebuilt profile")
    return prof


def save_profile(p: ContactProfile, path):
    with open(path, "w") as fh:
        json.dump(profile_to_json(p), fh, indent=1)


def load_profile(path) -> ContactProfile:
    with open(path) as fh:
        return profile_from_json(json.load(fh))
