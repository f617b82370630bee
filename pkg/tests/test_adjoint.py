import math

import numpy as np
import pytest
from scipy.integrate import quad

from shellmc.adjoint import (
    DirectionMesh, RadialMesh, assemble_matrix, assemble_outer, assemble_rhs, build_importance,
    characteristic_importance, importance_table, kernel_entry, mu_d, planar_eigenvalue, solve_phi,
    write_debug_csv,
)
from shellmc.errors import DomainError, NumericalError, SingularSystem

R0, R1, KS, KT = 0.1, 1.0, 0.9, 1.0


@pytest.fixture(scope="module")
def desk():
    return build_importance(R0, R1, 90, 1000, KS, KT)


# --- meshes -----------------------------------------------------------------

def test_uniform_mesh():
    m = RadialMesh.uniform(0.1, 1.0, 90)
    assert m.n_cells == 90
    assert np.allclose(m.widths, 0.01)
    assert np.all(m.centers > 0.1) and np.all(m.centers < 1.0)


def test_fixed_mesh_drops_cells_below_inner_radius():
    m = RadialMesh.fixed(0.37625, 1.0, 100)
    assert m.offset == 37
    assert m.edges[0] == 0.37625
    assert np.allclose(m.edges[1:], np.arange(38, 101) / 100)
    assert np.all(m.centers > m.r_inner)


def test_direction_mesh():
    d = DirectionMesh(1000)
    assert d.width == pytest.approx(2e-3)
    assert d.edges[0] == -1.0 and d.edges[-1] == 1.0
    assert np.all(np.abs(d.centers) < 1.0)


def test_mu_d():
    assert mu_d(0.3, 0.3) == 0.0
    assert mu_d(math.sqrt(2) * 0.1, 0.1) == pytest.approx(-math.sqrt(0.5), abs=1e-12)
    assert mu_d(1.0, 0.1) == pytest.approx(-0.9949874, abs=1e-7)
    with pytest.raises(DomainError):
        mu_d(0.05, 0.1)


# --- right-hand side and matrix --------------------------------------------

def test_rhs_vanishes_without_scattering():
    assert np.all(assemble_rhs(RadialMesh.uniform(R0, R1, 20), 0.0, KT) == 0.0)


def test_rhs_non_negative(desk):
    sol, _ = desk
    assert np.all(sol.b >= 0.0)


def test_rhs_single_cell_quadrature():
    r = 0.55
    mesh = RadialMesh(R0, R1, np.array([R0, R1]), 0)
    b = assemble_rhs(mesh, KS, KT)[0]
    ref = 0.5 * KS * r * quad(lambda mu: math.exp(KT * (r * mu + math.sqrt(r * r * mu * mu - r * r + R0 * R0))),
                              -1.0, mu_d(r, R0), epsabs=0, epsrel=1e-13, limit=200)[0]
    assert b == pytest.approx(ref, rel=1e-8)


def test_rhs_rejects_center_on_inner_sphere():
    mesh = RadialMesh(R0, R1, np.array([0.0, R0]), 0)
    with pytest.raises(NumericalError):
        assemble_rhs(mesh, KS, KT)


def test_matrix_vanishes_without_scattering():
    A = assemble_matrix(RadialMesh.uniform(R0, R1, 20), 0.0, KT)
    assert np.all(A == 0.0)


def test_matrix_structure(desk):
    sol, _ = desk
    A = sol.A
    off = A - np.diag(np.diag(A))
    assert np.all(off >= 0.0)
    assert np.allclose(off, off.T, rtol=1e-12, atol=0)


def test_row_identity():
    mesh = RadialMesh.uniform(R0, R1, 90)
    b = assemble_rhs(mesh, KS, KT)
    c = assemble_outer(mesh, KS, KT)
    A = assemble_matrix(mesh, KS, KT, b)
    r = mesh.centers
    lhs = r * KS
    rhs = b + c + KT * (A @ r)
    assert np.max(np.abs(lhs - rhs) / lhs) <= 1e-12


def _cell_kernel_quadrature(rj, ri, w, r0=R0, r1=R1, ks=KS, kt=KT):
    """(ks r_j / 2) int dmu int_{r(s) in cell i} exp(-kt s) / r(s) ds, by brute force."""
    a, b = ri - w / 2, ri + w / 2

    def along(mu):
        x0 = rj * mu
        y2 = rj * rj * (1 - mu) * (1 + mu)
        x_stop = -math.sqrt(r0 * r0 - y2) if mu < mu_d(rj, r0) else math.sqrt(r1 * r1 - y2)
        if b * b <= y2:
            return 0.0
        xb = math.sqrt(b * b - y2)
        segs = [(-xb, -math.sqrt(a * a - y2)), (math.sqrt(a * a - y2), xb)] if a * a > y2 else [(-xb, xb)]
        total = 0.0
        for lo, hi in segs:
            lo, hi = max(lo, x0), min(hi, x_stop)
            if hi > lo:
                total += quad(lambda x: math.exp(-kt * (x - x0)) / math.sqrt(x * x + y2), lo, hi,
                              epsabs=0, epsrel=1e-12)[0]
        return total

    breaks = {-1.0, 1.0, mu_d(rj, r0)}
    for e in (a, b):
        if e < rj:
            breaks.add(-math.sqrt(1 - (e / rj) ** 2))
    pts = sorted(breaks)
    return 0.5 * ks * rj * sum(quad(along, lo, hi, epsabs=0, epsrel=1e-11, limit=500)[0]
                               for lo, hi in zip(pts[:-1], pts[1:]))


@pytest.mark.parametrize("rj,ri", [(0.3, 0.7), (0.7, 0.3)])
def test_kernel_entry_against_double_quadrature(rj, ri):
    w = 1e-3
    assert kernel_entry(rj, ri, w, R0, KS, KT) == pytest.approx(_cell_kernel_quadrature(rj, ri, w), rel=1e-6)


# --- linear solve -----------------------------------------------------------

def test_zero_rhs_gives_zero_phi():
    A = assemble_matrix(RadialMesh.uniform(R0, R1, 30), KS, KT)
    assert np.all(solve_phi(A, np.zeros(30)).phi == 0.0)


def test_singular_system():
    with pytest.raises(SingularSystem):
        solve_phi(np.eye(3), np.ones(3))


def test_phi_against_fixed_point_iteration(desk):
    sol, _ = desk
    phi = np.zeros_like(sol.b)
    for _ in range(10_000):
        nxt = sol.A @ phi + sol.b
        if np.max(np.abs(nxt - phi)) < 1e-14:
            phi = nxt
            break
        phi = nxt
    assert np.max(np.abs(phi - sol.phi)) <= 1e-10


def test_residual_contract(desk):
    sol, _ = desk
    assert sol.residual_norm <= 1e-10 * np.max(np.abs(sol.b))
    assert np.all(sol.phi >= 0.0)


# --- importance table -------------------------------------------------------

GL = np.polynomial.legendre.leggauss(8)


def test_boundary_exponential_only():
    edges = np.linspace(R0, R1, 11)
    v = characteristic_importance(0.2, -1.0, edges, np.zeros(10), 1.0, *GL)
    assert v == pytest.approx(math.exp(-0.1), rel=1e-14)
    assert characteristic_importance(0.2, mu_d(0.2, R0) + 1e-3, edges, np.zeros(10), 1.0, *GL) == 0.0


def _importance_by_quadrature(r, mu, edges, phi, kt):
    x0 = r * mu
    y2 = r * r * (1 - mu) * (1 + mu)
    r0, r1 = edges[0], edges[-1]
    val = 0.0
    if mu < mu_d(r, r0):
        x_end = -math.sqrt(r0 * r0 - y2)
        val = math.exp(kt * (x0 - x_end))
    else:
        x_end = math.sqrt(r1 * r1 - y2)

    def f(x):
        rr = math.sqrt(x * x + y2)
        j = min(int(np.searchsorted(edges, rr, side="right")) - 1, len(phi) - 1)
        return phi[j] * math.exp(kt * (x0 - x)) / rr

    pts = [x0, x_end]
    for e in edges:
        if e * e > y2:
            for c in (-math.sqrt(e * e - y2), math.sqrt(e * e - y2)):
                if x0 < c < x_end:
                    pts.append(c)
    if x0 < 0.0 < x_end:
        pts.append(0.0)
    pts = sorted(pts)
    return val + sum(quad(f, lo, hi, epsabs=0, epsrel=1e-11, limit=200)[0] for lo, hi in zip(pts[:-1], pts[1:]))


def test_table_against_adaptive_quadrature(desk):
    _, t = desk
    centers = 0.5 * (t.r_edges[1:] + t.r_edges[:-1])
    mu_c = 0.5 * (t.mu_edges[1:] + t.mu_edges[:-1])
    rng = np.random.default_rng(3)
    cells = [(int(j), int(l)) for j, l in zip(rng.integers(0, 90, 400), rng.integers(0, 1000, 400))]
    cells += [(0, 0), (0, 999), (89, 0), (89, 999), (89, 2), (0, 450)]
    for j, l in cells:
        ref = _importance_by_quadrature(centers[j], mu_c[l], t.r_edges, t.phi, KT)
        assert t.I[j, l] == pytest.approx(ref, rel=1e-6)


def test_table_invariants(desk):
    _, t = desk
    assert np.all(t.I > 0.0)
    assert np.all(t.kappa_s_tilde >= 0.0) and np.all(t.kappa_t_tilde >= 0.0)
    assert np.all(np.diff(t.direction_cdf, axis=1) >= 0.0)
    assert np.all(np.abs(t.direction_cdf[:, -1] - 1.0) <= 1e-12)
    assert abs(t.boundary_emission_cdf[-1] - 1.0) <= 1e-12
    assert np.all(t.boundary_emission_cdf[t.mu_edges[:-1] >= 0.0] == 1.0)


def test_phi_matches_mean_importance(desk):
    sol, t = desk
    centers = 0.5 * (t.r_edges[1:] + t.r_edges[:-1])
    implied = KS * centers * t.mean_importance
    assert np.allclose(implied, sol.phi, rtol=0.1)


def _consistency(nr, nm, weighted):
    _, t = build_importance(R0, R1, nr, nm, KS, KT)
    d = np.abs(t.kappa_t_tilde - t.kappa_s_tilde)
    if not weighted:
        return d.max()
    w = t.I * np.diff(t.mu_edges)[None, :]
    return float((d * w).sum() / w.sum())


def test_kernel_consistency_improves_on_refinement_weighted():
    levels = [_consistency(nr, nm, True) for nr, nm in [(45, 100), (90, 200), (180, 400)]]
    assert levels[0] > levels[1] > levels[2]


@pytest.mark.xfail(strict=True, reason="max over cells is set by the outermost outgoing cell where the "
                                      "cell-centre importance is tiny; it does not shrink monotonically")
def test_kernel_consistency_improves_on_refinement_max():
    levels = [_consistency(nr, nm, False) for nr, nm in [(45, 100), (90, 200), (180, 400)]]
    assert levels[0] > levels[1] > levels[2]


def test_unsteady_table_uses_fixed_mesh():
    sol, t = build_importance(0.37625, 1.0, 100, 50, KS, KT, fixed_mesh=True)
    assert t.offset == 37
    assert t.r_edges[0] == 0.37625
    assert t.I.shape == (63, 50)


def test_no_scattering_table_has_boundary_importance_only():
    sol, t = build_importance(R0, R1, 20, 40, 0.0, KT)
    assert np.all(sol.phi == 0.0)
    assert t.boundary_emission_weight > 0.0


def test_debug_csv(tmp_path, desk):
    sol, t = desk
    phi_path, imp_path = write_debug_csv(sol, t, tmp_path)
    assert open(phi_path).readline().strip() == "r_center,phi"
    head = open(imp_path).readline().strip()
    assert head == "r_center,mu_center,I,kappa_s_tilde,kappa_t_tilde"
    assert sum(1 for _ in open(imp_path)) == 90 * 1000 + 1


# --- planar eigenvalue -----------------------------------------------------

def _bisect_K(c):
    lo, hi = 1e-12, 1 - 1e-15
    f = lambda k: c / (2 * k) * math.log((1 + k) / (1 - k)) - 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(lo) * f(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@pytest.mark.parametrize("c,expected", [(0.9, 0.525430), (0.5, 0.957504)])
def test_planar_eigenvalue(c, expected):
    pe = planar_eigenvalue(c, 1.0)
    assert pe.K == pytest.approx(expected, abs=1e-5)
    assert pe.K == pytest.approx(_bisect_K(c), abs=1e-10)
    norm = quad(pe.Phi_K, -1, 1, epsabs=1e-13)[0]
    assert norm == pytest.approx(1.0, abs=1e-10)
    assert 0.0 <= pe.K < pe.kappa_t


def test_planar_eigenvalue_conservative_limit():
    assert planar_eigenvalue(1.0, 1.0).K == 0.0


@pytest.mark.parametrize("ks,kt", [(1.2, 1.0), (0.0, 1.0), (-0.1, 1.0)])
def test_planar_eigenvalue_domain(ks, kt):
    with pytest.raises(DomainError):
        planar_eigenvalue(ks, kt)
