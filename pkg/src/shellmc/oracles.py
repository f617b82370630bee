"""Deterministic reference values for the verification problems.

Everything here is plain Python plus numpy so it shares no code path with
the Monte Carlo engines it checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, QuadratureNonConvergence, SingularPoint


@dataclass(frozen=True)
class OracleValue:
    value: float
    abs_tolerance: float
    provenance: str  # "closed_form" or "quadrature"

    def __float__(self):
        return self.value

    def agrees(self, x, extra=0.0):
        return abs(x - self.value) <= self.abs_tolerance + extra


# --- adaptive Simpson ------------------------------------------------------

def adaptive_simpson(f, a, b, tol=1e-10, max_depth=50, max_evals=2_000_000):
    """Integrate ``f`` on ``[a, b]`` by bisection with Richardson correction.

    Returns ``(value, error_estimate)``.
    """
    if b == a:
        return 0.0, 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    total = 0.0
    err = 0.0
    evals = 3
    while stack:
        lo, hi, flo, fmid, fhi, s, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        fl = f(0.5 * (lo + mid))
        fr = f(0.5 * (mid + hi))
        evals += 2
        left = (mid - lo) * (flo + 4.0 * fl + fmid) / 6.0
        right = (hi - mid) * (fmid + 4.0 * fr + fhi) / 6.0
        delta = left + right - s
        if abs(delta) <= 15.0 * eps or depth >= max_depth:
            if depth >= max_depth and abs(delta) > 15.0 * eps:
                raise QuadratureNonConvergence(f"no convergence on [{lo}, {hi}]")
            total += left + right + delta / 15.0
            err += abs(delta) / 15.0
            continue
        if evals > max_evals:
            raise QuadratureNonConvergence("evaluation budget exhausted")
        stack.append((mid, hi, fmid, fr, fhi, right, 0.5 * eps, depth + 1))
        stack.append((lo, mid, flo, fl, fmid, left, 0.5 * eps, depth + 1))
    return total, err


def _halving_checked(compute, tol):
    """Run ``compute(tol)`` and ``compute(tol/16)``; the gap is the error estimate."""
    coarse = compute(tol)
    fine = compute(tol / 16.0)
    gap = abs(fine - coarse)
    if gap > tol:
        raise QuadratureNonConvergence(f"step-halving gap {gap:.3e} exceeds {tol:.1e}")
    return OracleValue(fine, max(gap, tol / 16.0), "quadrature")


# --- moving-target geometry -------------------------------------------------

def exact_tmax(alpha, beta, r1, t_final):
    r0 = alpha + beta * t_final
    rad = r0 * r0 * beta * beta - r0 * r0 + r1 * r1
    if rad < 0.0:
        raise DomainError("negative radicand in the end-time formula")
    return OracleValue(t_final - r0 * beta - math.sqrt(rad), 1e-12 * max(1.0, t_final), "closed_form")


def mu_max(t, alpha, beta, r1):
    """Largest launch direction at ``r1`` and time ``t`` that still meets the target."""
    r0 = alpha + beta * t
    if not r0 < r1:
        raise DomainError("inner radius must be below r1")
    return (beta * r0 - math.sqrt((1.0 - beta * beta) * (r1 * r1 - r0 * r0))) / r1


def hit_time(t, mu, alpha, beta, r1):
    """Time at which a particle launched inward from ``r1`` at ``(t, mu)`` meets the target."""
    q = 1.0 - beta * beta
    b = r1 * mu - t - alpha * beta
    disc = b * b - q * (t * t + r1 * r1 - alpha * alpha - 2.0 * r1 * mu * t)
    return (t + alpha * beta - r1 * mu - math.sqrt(max(disc, 0.0))) / q


def exact_flux_streaming(alpha, beta, r1, t_final, tol=1e-11):
    t_max = exact_tmax(alpha, beta, r1, t_final).value

    def integrand(t):
        m = mu_max(t, alpha, beta, r1)
        return 0.5 * (1.0 - m * m)

    return _halving_checked(lambda eps: adaptive_simpson(integrand, 0.0, t_max, eps)[0], tol)


def exact_flux_absorbing(alpha, beta, r1, kappa_t, t_final, tol=1e-8, kappa_s=0.0):
    t_max = exact_tmax(alpha, beta, r1, t_final).value
    kappa_a = kappa_t - kappa_s

    def compute(eps):
        inner_eps = eps / (4.0 * t_max)

        def outer(t):
            m = mu_max(t, alpha, beta, r1)

            def inner(mu):
                return -mu * math.exp(-kappa_a * (hit_time(t, mu, alpha, beta, r1) - t))

            return adaptive_simpson(inner, -1.0, m, inner_eps)[0]

        return adaptive_simpson(outer, 0.0, t_max, 0.5 * eps)[0]

    return _halving_checked(compute, tol)


def hit_time_residual(t, mu, alpha, beta, r1):
    """``r(tau - t) - R0(tau)`` along the straight flight; zero for points in the wedge."""
    tau = hit_time(t, mu, alpha, beta, r1)
    s = tau - t
    r = math.sqrt(r1 * r1 + 2.0 * s * r1 * mu + s * s)
    return r - (alpha + beta * tau)


# --- duality identity -------------------------------------------------------

def duality_flux(table, t_final):
    """``t_final * integral of |mu| I(R1, mu)`` over incoming directions."""
    return OracleValue(t_final * table.boundary_emission_weight, 1e-12 * t_final, "closed_form")


# --- pure-absorber shell source --------------------------------------------

def uncollided_shell_flux(r, r_source, kappa_t, tol=1e-11):
    """Scalar flux at ``r`` from a unit isotropic shell source, no scattering.

    Integrates over emission direction: a particle leaving ``r_source`` with
    cosine ``mu`` passes radius ``r`` at distances where ``rho`` satisfies the
    chord relation; summed over directions this is
    ``(1 / (8 pi r r_s)) * integral of exp(-kappa rho)/rho`` over
    ``|r - r_s| <= rho <= r + r_s``.
    """
    if r <= 0.0 or r_source <= 0.0:
        raise DomainError("radii must be positive")
    lo = abs(r - r_source)
    hi = r + r_source
    if lo <= 1e-14 * hi:
        raise SingularPoint("flux diverges at the source radius; use cell averages")
    # rho = lo * exp(u) removes the 1/rho factor
    u_hi = math.log(hi / lo)
    val, _ = adaptive_simpson(lambda u: math.exp(-kappa_t * lo * math.exp(u)), 0.0, u_hi, tol)
    return val / (8.0 * math.pi * r * r_source)


def _chord_pieces(r_s, mu, a, b):
    """Path-length intervals inside the shell ``a <= r <= b`` for a ray from ``r_s``."""
    x0 = r_s * mu
    y2 = r_s * r_s * (1.0 - mu) * (1.0 + mu)
    out = []
    # the ray is r(s)^2 = (x0 + s)^2 + y2, s >= 0; inside the ball of radius R
    # for x in [-sqrt(R^2-y2), sqrt(R^2-y2)]
    if b * b <= y2:
        return out
    xb = math.sqrt(b * b - y2)
    if a * a > y2:
        xa = math.sqrt(a * a - y2)
        segs = [(-xb, -xa), (xa, xb)]
    else:
        segs = [(-xb, xb)]
    for lo, hi in segs:
        lo = max(lo, x0)
        if hi > lo:
            out.append((lo - x0, hi - x0))
    return out


def uncollided_cell_flux(edges, r_source, kappa_t, r_outer=None, tol=1e-10):
    """Volume-averaged uncollided flux in each shell of ``edges`` (unit source).

    Rays leave the problem at ``r_outer`` (default: last edge), so shells are
    only credited with path before escape.
    """
    edges = np.asarray(edges, dtype=float)
    r_outer = edges[-1] if r_outer is None else r_outer
    out = np.empty(len(edges) - 1)
    for j in range(len(edges) - 1):
        a, b = edges[j], edges[j + 1]

        def track(mu):
            s_exit = -r_source * mu + math.sqrt(max(r_outer**2 - r_source**2 * (1 - mu * mu), 0.0))
            total = 0.0
            for s1, s2 in _chord_pieces(r_source, mu, a, b):
                s2 = min(s2, s_exit)
                if s2 <= s1:
                    continue
                if kappa_t > 0.0:
                    total += (math.exp(-kappa_t * s1) - math.exp(-kappa_t * s2)) / kappa_t
                else:
                    total += s2 - s1
            return 0.5 * total

        # kinks where the ray grazes an edge; integrate piecewise between them
        breaks = {-1.0, 1.0}
        for edge in (a, b):
            if 0.0 < edge < r_source:
                breaks.add(-math.sqrt(1.0 - (edge / r_source) ** 2))
        pts = sorted(breaks)
        length = 0.0
        for lo, hi in zip(pts[:-1], pts[1:]):
            # mu = lo + (hi - lo) u^2 (3 - 2u) flattens the square-root
            # behaviour at grazing directions
            span = hi - lo
            length += adaptive_simpson(
                lambda u: track(lo + span * u * u * (3.0 - 2.0 * u)) * 6.0 * span * u * (1.0 - u),
                0.0, 1.0, tol / len(pts))[0]
        vol = 4.0 / 3.0 * math.pi * (b**3 - a**3)
        out[j] = length / vol
    return out
