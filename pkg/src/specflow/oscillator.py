"""Gaussian mode kernels and the closed-form second-order eigenvalue model.

The 1-D and 2-D kernels are exact ground states of the localized problems,
so everything here is closed-form bookkeeping plus carefully stabilized
quadrature: the inverse off the kernel line integrates outward from the
origin where its integrating factor only ever decays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .profiles import DomainError, TaylorData

__all__ = [
    "CUTOFF_EPS",
    "DECAY_ENVELOPE",
    "GreenReport",
    "Oscillator1D",
    "Oscillator2D",
    "QuadratureRangeError",
    "SecondOrderModel",
    "cutoff_chi",
    "decay_bound",
    "green1d",
    "green1d_bound_check",
    "kernel1d",
    "kernel2d",
    "second_order_lambda",
    "second_order_section",
]

CUTOFF_EPS = 0.01
DECAY_ENVELOPE = 100.0


class QuadratureRangeError(ArithmeticError):
    """The sample grid cannot resolve or contain the Gaussian at this frequency."""


@dataclass(frozen=True)
class Oscillator1D:
    gamma: float
    center: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0.0:
            raise ValueError(f"frequency must be positive, got gamma={self.gamma}")


@dataclass(frozen=True)
class Oscillator2D:
    gamma: float
    k: int = 0

    def __post_init__(self):
        if not self.gamma > 0.0:
            raise ValueError(f"frequency must be positive, got gamma={self.gamma}")
        if not (isinstance(self.k, (int, np.integer)) and self.k >= 0):
            raise ValueError(f"angular index must be an integer >= 0, got k={self.k}")


def kernel1d(osc: Oscillator1D, x):
    """Unit-norm Gaussian (gamma/pi)^(1/4) exp(-gamma x^2 / 2).

    x is the local coordinate measured from osc.center.
    """
    xx = np.asarray(x, dtype=float)
    out = (osc.gamma / math.pi) ** 0.25 * np.exp(-0.5 * osc.gamma * xx * xx)
    return float(out) if np.isscalar(x) else out


def kernel2d(osc: Oscillator2D, z):
    """Unit-norm planar kernel ~ z^k exp(-gamma |z|^2 / 4).

    Magnitude is assembled in log space so k up to 1e5 stays finite.
    """
    zz = np.asarray(z, dtype=complex)
    g, k = osc.gamma, int(osc.k)
    log_pref = 0.5 * (-math.lgamma(k + 1) + (k + 1) * math.log(0.5 * g)) - 0.5 * math.log(math.pi)
    r = np.abs(zz)
    radial = np.where(r > 0.0, k * np.log(np.where(r > 0.0, r, 1.0)), -np.inf if k else 0.0)
    out = np.exp(log_pref + radial - 0.25 * g * r * r) * np.exp(1j * k * np.angle(zz))
    return complex(out) if np.isscalar(z) else out


def cutoff_chi(s):
    """C^2 bump: 1 on |s| <= 1/2, 0 on |s| >= 1, quintic step between."""
    a = np.abs(np.asarray(s, dtype=float))
    t = np.clip(2.0 * a - 1.0, 0.0, 1.0)
    out = 1.0 - t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    return float(out) if np.isscalar(s) else out


# ---------------------------------------------------------------------------
# right inverse off the kernel line


@dataclass(frozen=True, eq=False)
class GreenReport:
    gamma: float
    ratio: float
    ortho: float
    residual: float
    norm_eta: float
    u: np.ndarray = field(repr=False)

    @property
    def passed(self) -> bool:
        return self.ratio <= 1.0 + 1e-9 and abs(self.ortho) <= 1e-8


def _green_grid_checks(gamma: float, x: np.ndarray, eta: np.ndarray) -> float:
    if not gamma > 0.0:
        raise ValueError(f"frequency must be positive, got gamma={gamma}")
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 16:
        raise ValueError("need a 1-D sample grid with at least 16 points")
    if eta.shape != x.shape:
        raise ValueError("eta must be sampled on the same grid as x")
    h = x[1] - x[0]
    if h <= 0.0 or not np.allclose(np.diff(x), h, rtol=1e-10, atol=1e-14):
        raise ValueError("sample grid must be uniform and increasing")
    if h * math.sqrt(gamma) > 0.2:
        raise QuadratureRangeError(
            f"step {h:.3e} cannot resolve the kernel width {1.0 / math.sqrt(gamma):.3e}"
        )
    if not (x[0] < 0.0 < x[-1]) or gamma * min(x[-1], -x[0]) ** 2 < 20.0:
        raise QuadratureRangeError("window does not contain the kernel mass for this gamma")
    return float(h)


def green1d(gamma: float, x, eta) -> np.ndarray:
    """Solve (d/dx + gamma x) u = eta - <eta, xi> xi with u orthogonal to xi.

    Trapezoid integrating-factor recurrence marching outward from the origin,
    where the propagation factor exp(-gamma (x_next^2 - x_cur^2)/2) never
    exceeds 1, so the march is unconditionally stable.
    """
    x = np.asarray(x, dtype=float)
    eta = np.asarray(eta, dtype=float)
    h = _green_grid_checks(gamma, x, eta)
    xi = (gamma / math.pi) ** 0.25 * np.exp(-0.5 * gamma * x * x)
    xi_sq = np.trapezoid(xi * xi, x)
    zeta = eta - (np.trapezoid(eta * xi, x) / xi_sq) * xi

    u = np.zeros_like(x)
    i0 = int(np.argmin(np.abs(x)))
    for j in range(i0, x.size - 1):
        kfac = math.exp(-0.5 * gamma * (x[j + 1] ** 2 - x[j] ** 2))
        u[j + 1] = kfac * u[j] + 0.5 * h * (kfac * zeta[j] + zeta[j + 1])
    for j in range(i0, 0, -1):
        kfac = math.exp(-0.5 * gamma * (x[j - 1] ** 2 - x[j] ** 2))
        u[j - 1] = kfac * u[j] - 0.5 * h * (zeta[j - 1] + kfac * zeta[j])
    u -= (np.trapezoid(u * xi, x) / xi_sq) * xi
    return u


def green1d_bound_check(gamma: float, x, eta) -> GreenReport:
    """Ratio gamma * ||u||^2 / ||eta||^2 (should be <= 1) plus orthogonality."""
    x = np.asarray(x, dtype=float)
    eta = np.asarray(eta, dtype=float)
    u = green1d(gamma, x, eta)
    xi = (gamma / math.pi) ** 0.25 * np.exp(-0.5 * gamma * x * x)
    norm_eta = float(np.trapezoid(eta * eta, x))
    norm_u = float(np.trapezoid(u * u, x))
    ratio = gamma * norm_u / norm_eta if norm_eta > 0.0 else 0.0
    denom = math.sqrt(norm_u * float(np.trapezoid(xi * xi, x)))
    ortho = float(np.trapezoid(u * xi, x)) / denom if denom > 0.0 else 0.0
    zeta = eta - (np.trapezoid(eta * xi, x) / np.trapezoid(xi * xi, x)) * xi
    resid = np.gradient(u, x) + gamma * x * u - zeta
    scale = max(1.0, float(np.max(np.abs(zeta))))
    residual = float(np.max(np.abs(resid[2:-2]))) / scale
    return GreenReport(gamma, float(ratio), ortho, residual, norm_eta, u)


# ---------------------------------------------------------------------------
# second-order model


def second_order_lambda(td: TaylorData, r: float) -> float:
    """Model eigenvalue r/2 - gamma/2 + r1/(2 gamma)."""
    return 0.5 * (r - td.gamma) + td.r1 / (2.0 * td.gamma)


@dataclass(frozen=True)
class SecondOrderModel:
    """Polynomial corrections to the Gaussian mode, ascending coefficients.

    With all Taylor corrections zero every polynomial vanishes and the
    eigenvalue reduces to (r - gamma)/2.
    """

    taylor: TaylorData
    cutoff_eps: float = CUTOFF_EPS

    def lambda_at(self, r: float) -> float:
        return second_order_lambda(self.taylor, r)

    @property
    def a1(self) -> np.ndarray:
        td = self.taylor
        return np.array([0.0, -td.c1, 0.0, -td.r2 / 3.0])

    @property
    def b1(self) -> np.ndarray:
        td = self.taylor
        return np.array([0.0, -td.r1 / (2.0 * td.gamma)])

    def a2(self, r: float) -> np.ndarray:
        td = self.taylor
        g = td.gamma
        # quadratic, quartic, sextic weights; each bracket is mean-zero
        # against the squared kernel so the norm stays centered
        w2 = 0.5 * (td.c1**2 - td.c2) - (td.r1 / (4.0 * g)) * (
            r - g + td.r1 / (2.0 * g) + 1.0 + td.c3
        )
        w4 = td.c1 * td.r2 / 3.0 - td.r4 / 4.0 - td.r1**2 / (8.0 * g)
        w6 = td.r2**2 / 18.0
        out = np.zeros(7)
        out[0] = -w2 / (2.0 * g) - w4 * 3.0 / (4.0 * g**2) - w6 * 15.0 / (8.0 * g**3)
        out[2], out[4], out[6] = w2, w4, w6
        return out

    @property
    def b2(self) -> np.ndarray:
        td = self.taylor
        g = td.gamma
        w2 = (td.c1 * td.r1 - td.r3) / (2.0 * g) + td.r1 * td.r2 / (4.0 * g**2)
        out = np.zeros(5)
        out[0] = w2 / (2.0 * g)
        out[2] = w2
        out[4] = td.r1 * td.r2 / (6.0 * g)
        return out

    def section(self, r: float, x):
        """(alpha, beta) samples of the cut-off corrected Gaussian mode."""
        xx = np.asarray(x, dtype=float)
        td = self.taylor
        xi = (td.gamma / math.pi) ** 0.25 * np.exp(-0.5 * td.gamma * xx * xx)
        chi = cutoff_chi(self.cutoff_eps * xx)
        pv = np.polynomial.polynomial.polyval
        alpha = (1.0 + pv(xx, self.a1) + pv(xx, self.a2(r))) * chi * xi
        beta = (pv(xx, self.b1) + pv(xx, self.b2)) * chi * xi
        if np.isscalar(x):
            return float(alpha), float(beta)
        return alpha, beta

    def norm_prediction(self) -> float:
        """Squared L2 norm of the section through second order, closed form."""
        td = self.taylor
        g = td.gamma
        return 1.0 + (
            td.c1**2 / (2.0 * g)
            + td.c1 * td.r2 / (2.0 * g**2)
            + 5.0 * td.r2**2 / (24.0 * g**3)
            + td.r1**2 / (8.0 * g**3)
        )


def second_order_section(td: TaylorData, r: float, x):
    return SecondOrderModel(td).section(r, x)


# ---------------------------------------------------------------------------
# planar tail estimate


def decay_bound(k: int, m: int, z_abs: float, eps: float = 0.01, envelope: float = DECAY_ENVELOPE) -> float:
    """|planar kernel|^2 at radius z_abs, checked against C exp(-gamma z^2 / C).

    Valid in the regime m >= (1/(32 eps^2) - 1) k >= 0 with z_abs >= 9 eps,
    where the pole-chart frequency is gamma = k + m.  Factorials go through
    log-Gamma so k up to 1e5 is exact to double precision.
    """
    if k < 0 or m < (1.0 / (32.0 * eps * eps) - 1.0) * k:
        raise DomainError(f"(k={k}, m={m}) violates m >= (1/(32 eps^2) - 1) k >= 0")
    if k == 0 and m <= 0:
        raise DomainError("axis modes need m >= 1")
    if z_abs < 9.0 * eps:
        raise DomainError(f"radius {z_abs} is inside the core region 9 eps = {9.0 * eps}")
    gamma = float(k + m)
    log_val = (
        -math.lgamma(k + 1)
        + (k + 1) * math.log(0.5 * gamma)
        + 2.0 * k * math.log(z_abs)
        - math.log(math.pi)
        - 0.5 * gamma * z_abs * z_abs
    )
    val = math.exp(log_val) if log_val > -745.0 else 0.0
    bound = envelope * math.exp(-gamma * z_abs * z_abs / envelope)
    if not val <= bound:
        raise ArithmeticError(
            f"decay envelope C={envelope} exceeded at (k={k}, m={m}, |z|={z_abs}): {val} > {bound}"
        )
    return val
