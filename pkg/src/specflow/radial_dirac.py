"""Per-mode radial operators on a staggered grid, and their zero crossings.

The two-component system is discretized so that the discrete operator is
exactly symmetric: the first-order couplings are one-sided differences that
are exact discrete adjoints of each other, with the potential attached to
the links.  The family in the spectral parameter r is affine,

    D(r) = A + (r/2) J,

with J the +/-1 signature of the two components, so eigenvalue slopes are
bounded and zero crossings can be located by Sturm negative-eigenvalue
counts alone, which vectorize across many modes at once.

Near a pole the disc model is substituted: the half-density unknown
absorbs the s^(k+1/2) regularity weight, which shows up as the
centrifugal term (k+1/2)/s of the model potential, and both components
vanish at s = 0.  The far pole is mapped onto the same template by
reflecting the coordinate and flipping the sign of the second component,
an exact isospectral conjugation.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .profiles import ContactProfile, DomainError, ModePoint, mode_point

__all__ = [
    "BackendMismatchError",
    "CrossingTable",
    "DEFAULT_N_CELLS",
    "DELTA_FLOOR",
    "EigenResult",
    "INTERIOR",
    "ModeOperator",
    "MultiCrossingError",
    "POLE",
    "SolverError",
    "VALIDITY_FLOOR",
    "assemble",
    "batch_crossing_search",
    "crossing_r",
    "eigen_derivative",
    "model_sf",
    "negcount",
    "small_eigs",
]

VALIDITY_FLOOR = 10.0
DEFAULT_N_CELLS = 2000
DELTA_FLOOR = 1e-8
INTERIOR = "interior_staggered"
POLE = "pole_disc"


class SolverError(RuntimeError):
    """Eigensolver failed or produced residuals above tolerance."""


class BackendMismatchError(ValueError):
    """Interior windows must stay away from the coordinate poles."""


class MultiCrossingError(RuntimeError):
    """More than one sign change in a bracket; the mode is under-resolved."""

    def __init__(self, k, m, bracket, delta):
        self.k, self.m, self.bracket, self.delta = k, m, bracket, delta
        super().__init__(
            f"mode ({k}, {m}) changes its negative count by {delta} over "
            f"[{bracket[0]:.6g}, {bracket[1]:.6g}]; expected a single upward crossing"
        )


@dataclass(frozen=True, eq=False)
class ModeOperator:
    """Assembled tridiagonal family D(r) = A + (r/2) J for one mode."""

    profile: ContactProfile
    k: int
    m: int
    mode: ModePoint
    window: tuple[float, float]
    n_cells: int
    backend: str
    h: float
    alpha_rho: np.ndarray = field(repr=False)
    beta_rho: np.ndarray = field(repr=False)
    a_diag: np.ndarray = field(repr=False)
    a_off: np.ndarray = field(repr=False)
    j_diag: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.a_diag.size

    def d_diag(self, r: float) -> np.ndarray:
        return self.a_diag + 0.5 * r * self.j_diag

    def dense(self, r: float) -> np.ndarray:
        out = np.diag(self.d_diag(r))
        idx = np.arange(self.dim - 1)
        out[idx, idx + 1] = self.a_off
        out[idx + 1, idx] = self.a_off
        return out


@dataclass(frozen=True, eq=False)
class EigenResult:
    r: float
    eigenvalues: np.ndarray
    vectors: np.ndarray = field(repr=False)
    residuals: np.ndarray


def _potentials(p: ContactProfile, k: int, m: int, rho: np.ndarray):
    """P, U, T of the radial system at the given coordinates."""
    f, g = p.f(rho), p.g(rho)
    df, dg = p.df(rho), p.dg(rho)
    d2f, d2g = p.d2f(rho), p.d2g(rho)
    dd = p.delta_pp(rho)
    ddd = p.delta_pp.derivative()(rho)
    P = (k * dg - m * df) / (2.0 * dd)
    U = (k * g - m * f) / dd + ddd / (2.0 * dd)
    T = (d2f * dg - df * d2g) / (8.0 * dd)
    return P, U, T


def assemble(p: ContactProfile, k: int, m: int, n_cells: int = DEFAULT_N_CELLS) -> ModeOperator:
    """Build the tridiagonal mode family on a window around the mode point.

    beta-values live on interior nodes with Dirichlet conditions at both
    window ends; alpha-values on cell midpoints, unconstrained.  The
    interleaving [alpha, beta, alpha, ..., alpha] has dimension
    2 n_cells - 1.  With this staggering the off-diagonal block has a
    one-dimensional cokernel whose generator is the discrete localized
    state itself, so the family has exactly one upward crossing per mode
    and no boundary artifacts.  Within 10 eps of a pole the window is
    anchored at the pole and the disc-model potentials are substituted;
    the centrifugal (k+1/2)/s term encodes the regularity weight.
    """
    if n_cells < 200:
        raise ValueError(f"n_cells must be at least 200, got {n_cells}")
    mp = mode_point(p, k, m)
    eps = p.params.eps
    w = max(0.3, 20.0 / math.sqrt(mp.gamma))
    near_lo = mp.rho_star <= p.rho_lo + 10.0 * eps
    near_hi = mp.rho_star >= p.rho_hi - 10.0 * eps

    if near_lo or near_hi:
        # disc model: all four poles reduce to one half-line template after
        # reflection and a sign flip on the second component (isospectral)
        backend = POLE
        span = p.rho_hi - p.rho_lo
        dist = (mp.rho_star - p.rho_lo) if near_lo else (p.rho_hi - mp.rho_star)
        b = min(dist + w, span)
        s_nodes = np.linspace(0.0, b, n_cells + 1)
        s_mids = 0.5 * (s_nodes[:-1] + s_nodes[1:])
        if near_lo:
            rho_nodes, rho_mids = p.rho_lo + s_nodes, p.rho_lo + s_mids
        else:
            rho_nodes, rho_mids = p.rho_hi - s_nodes, p.rho_hi - s_mids
        a, bb = 0.0, b
        h = b / n_cells
        gam = mp.gamma
        s_in = s_nodes[1:-1]
        P_alpha = np.full(n_cells, -0.5 * gam)
        P_beta = np.full(n_cells - 1, -0.5 * gam)
        T_beta = np.zeros(n_cells - 1)
        U_node = (k + 0.5) / s_in - 0.5 * gam * s_in
    else:
        backend = INTERIOR
        a = max(p.rho_lo + 2.0 * eps, mp.rho_star - w)
        bb = min(p.rho_hi - 2.0 * eps, mp.rho_star + w)
        rho_nodes = np.linspace(a, bb, n_cells + 1)
        rho_mids = 0.5 * (rho_nodes[:-1] + rho_nodes[1:])
        dmin = float(np.min(p.delta_pp(np.concatenate([rho_nodes, rho_mids]))))
        if dmin < DELTA_FLOOR:
            raise BackendMismatchError(
                f"window [{a:.4f}, {bb:.4f}] reaches Delta = {dmin:.3e} < {DELTA_FLOOR}; "
                "mode belongs to the pole backend"
            )
        h = (bb - a) / n_cells
        P_alpha, _, _ = _potentials(p, k, m, rho_mids)
        P_beta, U_node, T_beta = _potentials(p, k, m, rho_nodes[1:-1])

    dim = 2 * n_cells - 1
    a_diag = np.empty(dim)
    j_diag = np.empty(dim)
    a_diag[0::2] = P_alpha
    a_diag[1::2] = -(1.0 + P_beta + T_beta)
    j_diag[0::2] = 1.0
    j_diag[1::2] = -1.0
    a_off = np.empty(dim - 1)
    # row beta_j: (alpha_{j+1/2} - alpha_{j-1/2})/h - U_j (alpha_{j-1/2} + alpha_{j+1/2})/2
    a_off[0::2] = -1.0 / h - 0.5 * U_node
    a_off[1::2] = 1.0 / h - 0.5 * U_node

    return ModeOperator(
        profile=p,
        k=int(k),
        m=int(m),
        mode=mp,
        window=(float(a), float(bb)),
        n_cells=n_cells,
        backend=backend,
        h=float(h),
        alpha_rho=rho_mids,
        beta_rho=rho_nodes[1:-1],
        a_diag=a_diag,
        a_off=a_off,
        j_diag=j_diag,
    )


# ---------------------------------------------------------------------------
# eigensolves


def small_eigs(op: ModeOperator, r: float, q: int = 1) -> EigenResult:
    """The q eigenvalues of D(r) nearest zero, with vectors and residuals."""
    if q < 1:
        raise ValueError("q must be positive")
    d = op.d_diag(r)
    e = op.a_off
    bound = float(np.max(np.abs(d)) + 2.0 * np.max(np.abs(e))) + 1.0
    width = 1.0
    w = v = None
    while True:
        try:
            w, v = eigh_tridiagonal(d, e, select="v", select_range=(-width, width))
        except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
            raise SolverError(f"eigensolver failed for mode ({op.k}, {op.m}) at r={r}: {exc}")
        if w.size >= q or width > bound:
            break
        width *= 4.0
    if w.size < q:
        raise SolverError(
            f"found only {w.size} of {q} requested eigenvalues for mode "
            f"({op.k}, {op.m}) at r={r} within |lambda| <= {width:.3g}"
        )
    order = np.argsort(np.abs(w))[:q]
    order = order[np.argsort(w[order])]
    lam = w[order]
    vec = v[:, order]
    resid = np.empty(q)
    for i in range(q):
        x = vec[:, i]
        y = d * x
        y[:-1] += e * x[1:]
        y[1:] += e * x[:-1]
        resid[i] = float(np.linalg.norm(y - lam[i] * x))
        if resid[i] > 1e-8 * float(np.linalg.norm(x)):
            raise SolverError(
                f"residual {resid[i]:.3e} above tolerance for mode ({op.k}, {op.m}) "
                f"at r={r}, lambda={lam[i]:.6e}"
            )
    return EigenResult(float(r), lam, vec, resid)


def _sturm_counts(diags: np.ndarray, offs_sq: np.ndarray) -> np.ndarray:
    """Negative-eigenvalue counts of symmetric tridiagonal rows (vectorized).

    Zero pivots are forced to -pivmin before counting (the replaced pivot
    itself must be counted, or one downstream sign flips); pivmin scales
    with the squared couplings so the division cannot overflow.  Exact
    zero pivots do occur: on exactly flat profile pieces whole blocks of
    diagonal entries vanish simultaneously at special r.
    """
    pivmin = np.finfo(np.float64).tiny * np.max(offs_sq, axis=1, initial=1.0)
    pivmin = np.maximum(pivmin, 1e-300)
    piv = np.where(np.abs(diags[:, 0]) < pivmin, -pivmin, diags[:, 0])
    count = (piv < 0.0).astype(np.int64)
    for i in range(1, diags.shape[1]):
        piv = diags[:, i] - offs_sq[:, i - 1] / piv
        piv = np.where(np.abs(piv) < pivmin, -pivmin, piv)
        count += piv < 0.0
    return count


def negcount(op: ModeOperator, r: float) -> int:
    """Number of eigenvalues of D(r) below zero."""
    d = op.d_diag(r)[None, :]
    return int(_sturm_counts(d, (op.a_off**2)[None, :])[0])


def crossing_r(op: ModeOperator, r_lo: float, r_hi: float, tol: float = 1e-10) -> float | None:
    """Locate the upward zero crossing of the smallest eigenvalue, if any.

    Bisection on the negative count: each upward crossing decreases it by
    one.  A change of more than one over the bracket violates the
    single-crossing structure and raises.
    """
    if not r_lo < r_hi:
        raise ValueError(f"empty bracket [{r_lo}, {r_hi}]")
    if r_lo < VALIDITY_FLOOR:
        raise DomainError(f"bracket start {r_lo} is below the validity floor {VALIDITY_FLOOR}")
    return _crossing_unchecked(op, r_lo, r_hi, tol)


def _crossing_unchecked(op: ModeOperator, r_lo: float, r_hi: float, tol: float) -> float | None:
    n_lo, n_hi = negcount(op, r_lo), negcount(op, r_hi)
    delta = n_lo - n_hi
    if delta == 0:
        return None
    if delta != 1:
        raise MultiCrossingError(op.k, op.m, (r_lo, r_hi), delta)
    lo, hi = r_lo, r_hi
    for _ in range(60):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if negcount(op, mid) == n_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def eigen_derivative(op: ModeOperator, r: float) -> float:
    """Slope of the smallest eigenvalue: half the signature expectation.

    Exact for the affine family by first-order perturbation; equals
    (norm(alpha)^2 - norm(beta)^2) / 2 for the unit eigenvector.
    """
    res = small_eigs(op, r, q=1)
    x = res.vectors[:, 0]
    return float(0.5 * np.dot(op.j_diag * x, x) / np.dot(x, x))


# ---------------------------------------------------------------------------
# many modes at once


@dataclass(frozen=True)
class CrossingRow:
    k: int
    m: int
    gamma: float
    r_star: float | None
    residual: float
    # crossing certainly happened below the validity floor; not locatable
    # there because the single-crossing guarantee only holds above it
    below_floor: bool = False


@dataclass(frozen=True)
class CrossingTable:
    rows: tuple

    def found(self):
        return [row for row in self.rows if row.r_star is not None]

    def write_csv(self, path):
        import csv

        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh)
            out.writerow(["k", "m", "gamma", "r_star", "residual"])
            for row in self.rows:
                out.writerow(
                    [
                        row.k,
                        row.m,
                        _fmt(row.gamma),
                        "" if row.r_star is None else _fmt(row.r_star),
                        _fmt(row.residual),
                    ]
                )


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _thread_count(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("SPECFLOW_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(8, os.cpu_count() or 1)


def batch_crossing_search(
    p: ContactProfile,
    modes,
    n_cells: int = DEFAULT_N_CELLS,
    margin: float = 8.0,
    threads: int | None = None,
    chunk: int = 512,
    progress=None,
) -> CrossingTable:
    """Crossing search over many modes with fully vectorized Sturm bisection.

    modes: iterable of (k, m).  Brackets are [max(floor, gamma - margin),
    gamma + margin] per mode; sixty bisection steps pin r_star far below
    any practical tolerance, and the reported residual is the certified
    half-width times a slope bound.  A mode whose clamped bracket shows no
    sign change crossed below the validity floor (slopes are positive and
    crossings sit within the margin of gamma); its row carries
    below_floor=True with no r_star.
    """
    modes = [(int(k), int(m)) for k, m in modes]
    nthreads = _thread_count(threads)

    def build(km):
        return assemble(p, km[0], km[1], n_cells)

    if nthreads > 1 and len(modes) > 8:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            ops = list(pool.map(build, modes))
    else:
        ops = [build(km) for km in modes]

    rows: list[CrossingRow | None] = [None] * len(modes)
    order = sorted(range(len(ops)), key=lambda i: ops[i].dim)
    groups: list[list[int]] = []
    for i in order:
        if groups and ops[groups[-1][-1]].dim == ops[i].dim and len(groups[-1]) < chunk:
            groups[-1].append(i)
        else:
            groups.append([i])

    done = 0

    def solve_group(idx_list):
        a_d = np.stack([ops[i].a_diag for i in idx_list])
        offs_sq = np.stack([ops[i].a_off for i in idx_list]) ** 2
        j_d = np.stack([ops[i].j_diag for i in idx_list])
        gam = np.array([ops[i].mode.gamma for i in idx_list])
        clamped = gam - margin < VALIDITY_FLOOR
        lo = np.maximum(VALIDITY_FLOOR, gam - margin)
        hi = np.maximum(gam + margin, lo)

        def counts(rvec):
            return _sturm_counts(a_d + 0.5 * rvec[:, None] * j_d, offs_sq)

        n_lo, n_hi = counts(lo), counts(hi)
        delta = n_lo - n_hi
        for pos, i in enumerate(idx_list):
            if delta[pos] not in (0, 1):
                raise MultiCrossingError(ops[i].k, ops[i].m, (lo[pos], hi[pos]), int(delta[pos]))
        active = delta == 1
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            nm = counts(mid)
            go_up = active & (nm == n_lo)
            lo = np.where(go_up, mid, lo)
            hi = np.where(active & ~go_up, mid, hi)
        for pos, i in enumerate(idx_list):
            star = 0.5 * (lo[pos] + hi[pos]) if active[pos] else None
            bound = 0.6 * 0.5 * (hi[pos] - lo[pos]) if active[pos] else math.nan
            early = bool(clamped[pos]) and not active[pos]
            rows[i] = CrossingRow(
                ops[i].k, ops[i].m, float(ops[i].mode.gamma), star, float(bound), below_floor=early
            )
        return len(idx_list)

    if nthreads > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            for n in pool.map(solve_group, groups):
                done += n
                if progress:
                    progress(done, len(modes))
    else:
        for g in groups:
            done += solve_group(g)
            if progress:
                progress(done, len(modes))
    return CrossingTable(tuple(rows))


def model_sf(
    p: ContactProfile,
    r: float,
    sector=None,
    n_cells: int = DEFAULT_N_CELLS,
    margin: float = 8.0,
    threads: int | None = None,
    progress=None,
):
    """Count crossings at parameter values <= r within a sector.

    Returns (count, CrossingTable) over all modes whose frequency is at
    most r + margin in the sector.  Modes whose crossing happened below
    the validity floor are counted (r >= floor implies they have crossed)
    but carry no located r_star.
    """
    from .counting import enumerate_modes

    if r < VALIDITY_FLOOR:
        raise DomainError(f"r={r} is below the validity floor {VALIDITY_FLOOR}")
    modes = enumerate_modes(p, r + margin, sector)
    table = batch_crossing_search(
        p, modes, n_cells=n_cells, margin=margin, threads=threads, progress=progress
    )
    count = sum(
        1
        for row in table.rows
        if row.below_floor or (row.r_star is not None and row.r_star <= r)
    )
    return count, table
