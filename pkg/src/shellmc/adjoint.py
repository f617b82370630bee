"""Deterministic importance function for the spherical shell problem.

The adjoint equation with constant cross sections and isotropic scattering is
reduced to a Fredholm equation for ``phi(r) = r * S(r)`` whose kernel is a
difference of exponential integrals. The equation is collocated on a radial
mesh, solved densely, and the angular importance ``I(r, mu)`` is rebuilt by
integrating the source along straight characteristics.
"""
from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.optimize import brentq

from .errors import DegenerateImportance, DomainError, NegativePhiWarning, NumericalError, SingularSystem
from .specfun import ei_neg

IMPORTANCE_FLOOR = 1e-300


@dataclass(frozen=True)
class RadialMesh:
    """Active radial cells between the inner sphere and the outer boundary.

    ``offset`` is the index of the first active cell in the underlying fixed
    mesh; it is zero for the stationary mesh built on ``[r_inner, r_outer]``.
    """

    r_inner: float
    r_outer: float
    edges: np.ndarray
    offset: int = 0

    @classmethod
    def uniform(cls, r_inner, r_outer, n_cells):
        if n_cells < 1:
            raise DomainError("n_cells must be positive")
        if not 0.0 <= r_inner < r_outer:
            raise DomainError(f"need 0 <= r_inner < r_outer, got {r_inner}, {r_outer}")
        dr = (r_outer - r_inner) / n_cells
        edges = r_inner + dr * np.arange(n_cells + 1)
        edges[-1] = r_outer
        return cls(float(r_inner), float(r_outer), edges, 0)

    @classmethod
    def fixed(cls, r_inner, r_outer, n_cells):
        """Time-independent spacing ``r_outer / n_cells``; cells below ``r_inner`` dropped."""
        if n_cells < 1:
            raise DomainError("n_cells must be positive")
        if not 0.0 <= r_inner < r_outer:
            raise DomainError(f"need 0 <= r_inner < r_outer, got {r_inner}, {r_outer}")
        full = r_outer * np.arange(n_cells + 1) / n_cells
        full[-1] = r_outer
        # first cell whose upper edge lies strictly above r_inner
        offset = int(np.searchsorted(full, r_inner, side="right")) - 1
        offset = max(offset, 0)
        edges = full[offset:].copy()
        edges[0] = r_inner
        return cls(float(r_inner), float(r_outer), edges, offset)

    @property
    def n_cells(self):
        return len(self.edges) - 1

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def widths(self):
        return np.diff(self.edges)

    def volumes(self):
        return 4.0 / 3.0 * math.pi * (self.edges[1:] ** 3 - self.edges[:-1] ** 3)


@dataclass(frozen=True)
class DirectionMesh:
    n_cells: int

    def __post_init__(self):
        if self.n_cells < 1:
            raise DomainError("direction mesh needs at least one cell")

    @property
    def edges(self):
        e = np.linspace(-1.0, 1.0, self.n_cells + 1)
        e[0], e[-1] = -1.0, 1.0
        return e

    @property
    def centers(self):
        e = self.edges
        return 0.5 * (e[1:] + e[:-1])

    @property
    def width(self):
        return 2.0 / self.n_cells


@dataclass(frozen=True)
class PhiSolution:
    phi: np.ndarray
    b: np.ndarray
    A: np.ndarray
    residual_norm: float


@dataclass(frozen=True)
class ImportanceTable:
    """Piecewise-constant importance on the (radial, direction) mesh.

    Arrays are indexed ``[j, l]`` with ``j`` the active radial cell and ``l``
    the direction cell.
    """

    r_edges: np.ndarray
    mu_edges: np.ndarray
    offset: int
    kappa_s: float
    kappa_t: float
    phi: np.ndarray
    source: np.ndarray
    I: np.ndarray
    mean_importance: np.ndarray
    kappa_s_tilde: np.ndarray
    kappa_t_tilde: np.ndarray
    direction_cdf: np.ndarray
    boundary_emission_cdf: np.ndarray
    boundary_emission_weight: float
    boundary_importance: np.ndarray
    flagged: tuple = field(default_factory=tuple)

    @property
    def r_inner(self):
        return float(self.r_edges[0])

    @property
    def r_outer(self):
        return float(self.r_edges[-1])

    def lookup(self, r, mu):
        """Importance value of the cell containing ``(r, mu)``."""
        j = min(max(int(np.searchsorted(self.r_edges, r, side="right")) - 1, 0), len(self.r_edges) - 2)
        l = min(max(int(np.searchsorted(self.mu_edges, mu, side="right")) - 1, 0), len(self.mu_edges) - 2)
        return float(self.I[j, l])


def mu_d(r, r0):
    """Cosine of the direction grazing the inner sphere, seen from radius ``r``."""
    if r < r0:
        raise DomainError(f"r = {r} lies inside the inner sphere r0 = {r0}")
    if r == 0.0:
        return 0.0
    return -math.sqrt(max(0.0, 1.0 - (r0 / r) ** 2))


# --- Fredholm system --------------------------------------------------------

@njit(cache=True)
def _boundary_moment(kappa_t, r, big_r, theta_a, theta_b):
    """``(1/kt)[e^{kt th}] + (R^2 - r^2)[kt Ei(kt th) - e^{kt th}/th]`` from theta_a to theta_b."""
    ea = math.exp(kappa_t * theta_a)
    eb = math.exp(kappa_t * theta_b)
    first = (eb - ea) / kappa_t
    gb = kappa_t * ei_neg(kappa_t * theta_b) - eb / theta_b
    ga = kappa_t * ei_neg(kappa_t * theta_a) - ea / theta_a
    return first + (big_r * big_r - r * r) * (gb - ga)


@njit(cache=True)
def _rhs_kernel(centers, r0, kappa_s, kappa_t):
    n = centers.shape[0]
    b = np.empty(n)
    for j in range(n):
        r = centers[j]
        theta_a = -r + r0
        theta_b = -math.sqrt(r * r - r0 * r0)
        if not (theta_a < 0.0 and theta_b < 0.0):
            return b, j
        b[j] = 0.25 * kappa_s * _boundary_moment(kappa_t, r, r0, theta_a, theta_b)
    return b, -1


@njit(cache=True)
def _outer_kernel(centers, r0, r1, kappa_s, kappa_t):
    n = centers.shape[0]
    c = np.empty(n)
    for j in range(n):
        r = centers[j]
        theta_a = -math.sqrt(r * r - r0 * r0) - math.sqrt(r1 * r1 - r0 * r0)
        theta_b = r - r1
        if not (theta_a < 0.0 and theta_b < 0.0):
            return c, j
        c[j] = 0.25 * kappa_s * _boundary_moment(kappa_t, r, r1, theta_a, theta_b)
    return c, -1


@njit(cache=True)
def kernel_entry(r_row, r_col, width, r0, kappa_s, kappa_t):
    """Off-diagonal coupling of cell ``col`` (width ``width``) into row ``row``."""
    a = math.sqrt(r_row * r_row - r0 * r0)
    b = math.sqrt(r_col * r_col - r0 * r0)
    return 0.5 * kappa_s * width * (ei_neg(-kappa_t * (a + b)) - ei_neg(-kappa_t * abs(r_row - r_col)))


@njit(cache=True)
def _matrix_kernel(centers, widths, r0, kappa_s, kappa_t, b, c):
    n = centers.shape[0]
    A = np.zeros((n, n))
    for j in range(n):
        for i in range(n):
            if i != j:
                A[j, i] = kernel_entry(centers[j], centers[i], widths[i], r0, kappa_s, kappa_t)
    for j in range(n):
        off = 0.0
        for i in range(n):
            if i != j:
                off += A[j, i] * centers[i]
        rj = centers[j]
        A[j, j] = (rj * kappa_s - b[j] - c[j]) / (kappa_t * rj) - off / rj
    return A


def _check_rates(kappa_s, kappa_t):
    if kappa_s < 0.0 or kappa_t <= 0.0 or kappa_s > kappa_t:
        raise DomainError(f"need 0 <= kappa_s <= kappa_t and kappa_t > 0, got {kappa_s}, {kappa_t}")


def assemble_rhs(mesh: RadialMesh, kappa_s, kappa_t):
    """Uncollided contribution of the inner-sphere boundary condition to ``phi``."""
    _check_rates(kappa_s, kappa_t)
    b, bad = _rhs_kernel(mesh.centers, mesh.r_inner, float(kappa_s), float(kappa_t))
    if bad >= 0:
        raise NumericalError(f"non-negative Ei argument in cell {bad}: center not above r_inner")
    return b


def assemble_outer(mesh: RadialMesh, kappa_s, kappa_t):
    """Same boundary moment for a unit importance entering from the outer sphere."""
    _check_rates(kappa_s, kappa_t)
    c, bad = _outer_kernel(mesh.centers, mesh.r_inner, mesh.r_outer, float(kappa_s), float(kappa_t))
    if bad >= 0:
        raise NumericalError(f"non-negative Ei argument in cell {bad}")
    return c


def assemble_matrix(mesh: RadialMesh, kappa_s, kappa_t, b=None):
    """Dense collocation matrix; the diagonal follows from requiring that a
    unit importance with unit boundary data be reproduced exactly."""
    _check_rates(kappa_s, kappa_t)
    if b is None:
        b = assemble_rhs(mesh, kappa_s, kappa_t)
    c = assemble_outer(mesh, kappa_s, kappa_t)
    A = _matrix_kernel(mesh.centers, mesh.widths, mesh.r_inner, float(kappa_s), float(kappa_t), b, c)
    if not np.all(np.isfinite(A)):
        raise NumericalError("non-finite entry in the collocation matrix")
    return A


def solve_phi(A, b):
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.shape != (b.size, b.size):
        raise DomainError(f"shape mismatch: A {A.shape}, b {b.shape}")
    M = np.eye(b.size) - A
    try:
        phi = np.linalg.solve(M, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(phi)):
        raise SingularSystem("solution is not finite")
    if np.any(phi < -1e-12):
        warnings.warn(f"negative phi (min {phi.min():.3e}): assembly is suspect", NegativePhiWarning)
    residual = float(np.max(np.abs(M @ phi - b))) if b.size else 0.0
    return PhiSolution(phi=phi, b=b, A=A, residual_norm=residual)


# --- characteristic reconstruction ------------------------------------------

@njit(cache=True, nogil=True)
def characteristic_importance(r, mu, edges, phi, kappa_t, gl_x, gl_w):
    """Importance at ``(r, mu)`` from a piecewise-constant ``phi`` on ``edges``.

    The characteristic is walked cell by cell in the coordinate ``x = r mu``
    at fixed impact parameter; each piece (split at the turning point) is
    integrated with the given Gauss-Legendre rule on [-1, 1].
    """
    n = edges.shape[0] - 1
    r0 = edges[0]
    r1 = edges[n]
    x0 = r * mu
    y2 = max(r * r - x0 * x0, 0.0)
    y = math.sqrt(y2)
    value = 0.0
    grazing = -math.sqrt(max(0.0, 1.0 - (r0 / r) ** 2)) if r > 0.0 else 0.0
    hits_inner = r0 > 0.0 and mu < grazing
    if hits_inner:
        x_exit = -math.sqrt(max(r0 * r0 - y2, 0.0))
        value = math.exp(kappa_t * (x0 - x_exit))
    # locate cell of r
    i = 0
    while i < n - 1 and edges[i + 1] <= r:
        i += 1
    xs = x0
    order = gl_x.shape[0]
    for _ in range(4 * n + 4):
        if xs < 0.0:
            lo = edges[i]
            if lo > y:
                xe = -math.sqrt(lo * lo - y2)
                nxt = i - 1
            else:
                xe = 0.0
                nxt = i
        else:
            hi = edges[i + 1]
            xe = math.sqrt(max(hi * hi - y2, 0.0))
            nxt = i + 1
        if xe > xs and phi[i] != 0.0:
            half = 0.5 * (xe - xs)
            mid = 0.5 * (xe + xs)
            acc = 0.0
            for q in range(order):
                s = mid + half * gl_x[q]
                acc += gl_w[q] * math.exp(kappa_t * (x0 - s)) / math.sqrt(s * s + y2)
            value += phi[i] * half * acc
        if xe > xs:
            xs = xe
        elif xs < 0.0 and xe == 0.0:
            xs = 0.0
        i = nxt
        if i < 0 or i >= n:
            break
    return value


@njit(cache=True, nogil=True)
def _table_kernel(centers, mu_centers, edges, phi, kappa_t, gl_x, gl_w):
    nr = centers.shape[0]
    nm = mu_centers.shape[0]
    out = np.empty((nr, nm))
    for j in range(nr):
        for l in range(nm):
            out[j, l] = characteristic_importance(centers[j], mu_centers[l], edges, phi, kappa_t, gl_x, gl_w)
    return out


def _lambert_bin_weights(mu_edges):
    """``int |mu| dmu`` over the incoming (mu < 0) part of each direction bin."""
    lo = np.minimum(mu_edges[:-1], 0.0)
    hi = np.minimum(mu_edges[1:], 0.0)
    return 0.5 * (lo * lo - hi * hi)


@njit(cache=True, nogil=True)
def _gl_piece(r_out, lo, hi, edges, phi, kappa_t, gl_x, gl_w):
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    total = 0.0
    for q in range(gl_x.shape[0]):
        m = mid + half * gl_x[q]
        total += gl_w[q] * half * (-m) * characteristic_importance(r_out, m, edges, phi, kappa_t, gl_x, gl_w)
    return total


@njit(cache=True, nogil=True)
def _boundary_bin_moments(r_out, mu_edges, edges, phi, kappa_t, gl_x, gl_w):
    """``int |mu| I(r_out, mu) dmu`` over the incoming part of each direction bin.

    ``I`` jumps at the grazing cosine of the inner sphere, so a bin holding
    that cosine is integrated in two pieces.
    """
    r0 = edges[0]
    cut = -1.0
    if r0 > 0.0:
        cut = -math.sqrt(max(0.0, 1.0 - (r0 / r_out) ** 2))
    nb = mu_edges.shape[0] - 1
    out = np.zeros(nb)
    for l in range(nb):
        a = mu_edges[l]
        b = min(mu_edges[l + 1], 0.0)
        if a >= b:
            continue
        if a < cut < b:
            out[l] = _gl_piece(r_out, a, cut, edges, phi, kappa_t, gl_x, gl_w) + _gl_piece(
                r_out, cut, b, edges, phi, kappa_t, gl_x, gl_w)
        else:
            out[l] = _gl_piece(r_out, a, b, edges, phi, kappa_t, gl_x, gl_w)
    return out


def importance_table(phi: PhiSolution, rmesh: RadialMesh, dmesh: DirectionMesh, kappa_s, kappa_t, gl_order=8):
    phi_vals = np.asarray(phi.phi if isinstance(phi, PhiSolution) else phi, dtype=float)
    if phi_vals.size != rmesh.n_cells:
        raise DomainError("phi and radial mesh sizes differ")
    phi_vals = np.maximum(phi_vals, 0.0)
    gl_x, gl_w = np.polynomial.legendre.leggauss(gl_order)
    centers = rmesh.centers
    mu_edges = dmesh.edges
    I = _table_kernel(centers, dmesh.centers, rmesh.edges, phi_vals, float(kappa_t), gl_x, gl_w)

    flagged = tuple((int(j), int(l)) for j, l in zip(*np.nonzero(I < IMPORTANCE_FLOOR)))
    I = np.maximum(I, IMPORTANCE_FLOOR)
    dmu = np.diff(mu_edges)
    mean_I = 0.5 * (I * dmu).sum(axis=1)
    source = phi_vals / centers
    ks_tilde = kappa_s * mean_I[:, None] / I
    kt_tilde = source[:, None] / I

    mass = I * dmu
    cdf = np.cumsum(mass, axis=1) / mass.sum(axis=1)[:, None]
    cdf[:, -1] = 1.0

    # emission happens exactly on the outer sphere, so use I there rather
    # than the outermost cell value
    r_out = float(rmesh.edges[-1])
    lam = _boundary_bin_moments(r_out, mu_edges, rmesh.edges, phi_vals, float(kappa_t), gl_x, gl_w)
    base = _lambert_bin_weights(mu_edges)
    I_b = np.divide(lam, base, out=np.zeros_like(lam), where=base > 0.0)
    z = float(lam.sum())
    if z <= 0.0:
        raise DegenerateImportance("importance vanishes on the outer boundary", [(rmesh.n_cells - 1, l) for l in range(dmesh.n_cells)])
    bcdf = np.cumsum(lam) / z
    # pin the last incoming bin (and all outgoing ones) to exactly 1 so a
    # draw can never land on an outgoing direction
    last_in = int(np.nonzero(lam > 0.0)[0][-1])
    bcdf[last_in:] = 1.0
    outer_flags = [f for f in flagged if f[0] == rmesh.n_cells - 1 and mu_edges[f[1]] < 0.0]
    if outer_flags and kappa_s > 0.0:
        raise DegenerateImportance("importance vanishes for incoming directions on the outer boundary", outer_flags)

    return ImportanceTable(
        r_edges=rmesh.edges.copy(),
        mu_edges=mu_edges,
        offset=rmesh.offset,
        kappa_s=float(kappa_s),
        kappa_t=float(kappa_t),
        phi=phi_vals,
        source=source,
        I=I,
        mean_importance=mean_I,
        kappa_s_tilde=ks_tilde,
        kappa_t_tilde=kt_tilde,
        direction_cdf=cdf,
        boundary_emission_cdf=bcdf,
        boundary_emission_weight=z,
        boundary_importance=I_b,
        flagged=flagged,
    )


def build_importance(r_inner, r_outer, n_r, n_mu, kappa_s, kappa_t, fixed_mesh=False, gl_order=8):
    """Convenience pipeline: mesh, assembly, solve, and table."""
    mesh = (RadialMesh.fixed if fixed_mesh else RadialMesh.uniform)(r_inner, r_outer, n_r)
    if kappa_s == 0.0 and kappa_t >= 0.0:
        # no scattering source: only the boundary exponential survives, and
        # the assembly (which divides by kappa_t) is not needed
        n = mesh.n_cells
        sol = PhiSolution(phi=np.zeros(n), b=np.zeros(n), A=np.zeros((n, n)), residual_norm=0.0)
    else:
        b = assemble_rhs(mesh, kappa_s, kappa_t)
        A = assemble_matrix(mesh, kappa_s, kappa_t, b)
        sol = solve_phi(A, b)
    table = importance_table(sol, mesh, DirectionMesh(n_mu), kappa_s, kappa_t, gl_order)
    return sol, table


# --- planar analytic case ---------------------------------------------------

@dataclass(frozen=True)
class PlanarEigen:
    K: float
    kappa_s: float
    kappa_t: float

    def Phi_K(self, mu):
        return 0.5 * self.kappa_s / (self.kappa_t - self.K * np.asarray(mu))


def planar_eigenvalue(kappa_s, kappa_t):
    """Decay constant of the slab eigen-importance ``exp(K x) Phi_K(mu)``."""
    if kappa_s <= 0.0 or kappa_s > kappa_t:
        raise DomainError(f"need 0 < kappa_s <= kappa_t, got {kappa_s}, {kappa_t}")
    if kappa_s == kappa_t:
        return PlanarEigen(0.0, float(kappa_s), float(kappa_t))

    def normalisation(k):
        return kappa_s * math.atanh(k / kappa_t) / k - 1.0

    lo = 1e-12 * kappa_t
    hi = kappa_t * (1.0 - 1e-15)
    k = brentq(normalisation, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    return PlanarEigen(float(k), float(kappa_s), float(kappa_t))


# --- debug output -----------------------------------------------------------

def write_debug_csv(solution: PhiSolution, table: ImportanceTable, out_dir):
    """Write ``phi.csv`` and ``importance.csv``; returns the two paths."""
    os.makedirs(out_dir, exist_ok=True)
    centers = 0.5 * (table.r_edges[1:] + table.r_edges[:-1])
    mu_c = 0.5 * (table.mu_edges[1:] + table.mu_edges[:-1])
    phi_path = os.path.join(out_dir, "phi.csv")
    with open(phi_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r_center", "phi"])
        for r, p in zip(centers, solution.phi):
            w.writerow([f"{r:.17e}", f"{p:.17e}"])
    imp_path = os.path.join(out_dir, "importance.csv")
    with open(imp_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r_center", "mu_center", "I", "kappa_s_tilde", "kappa_t_tilde"])
        for j, r in enumerate(centers):
            for l, m in enumerate(mu_c):
                w.writerow([f"{r:.17e}", f"{m:.17e}", f"{table.I[j, l]:.17e}",
                            f"{table.kappa_s_tilde[j, l]:.17e}", f"{table.kappa_t_tilde[j, l]:.17e}"])
    return phi_path, imp_path
