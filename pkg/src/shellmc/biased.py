"""Importance-sampled transport.

A particle carries ``W = w * I(j, l)``, where ``w`` is its physical weight and
``I(j, l)`` the importance of its current (radial, direction) cell. Between
events inside one cell ``W`` decays with ``exp(-(kappa_t - kappa_s_tilde) s)``,
collisions happen at rate ``kappa_s_tilde = kappa_s <I>_j / I_jl`` and leave
``W`` unchanged, the new direction is drawn with density proportional to
``I_j(mu)``, and crossing into a neighbouring cell multiplies ``W`` by the
importance ratio. These are the exact likelihood ratios of the modified
process with respect to the analog one, so ``W / I`` is the physical weight
at every point of the history.
"""
from __future__ import annotations

import math
import time

import numpy as np
from numba import njit

from .adjoint import RadialMesh, build_importance
from .config import ProblemConfig
from .errors import ConfigError, DegenerateImportance
from .rng import next_uniform, stream_key
from .transport import (
    CENSUS, EXITED_INNER, EXITED_OUTER, MAX_EVENTS, STALLED, STATUS_NAMES,
    Bank, _finish, _map_chunks, advance, step_source_weight,
)

KIND_RADIAL = 0
KIND_DIRECTION = 1
KIND_COLLISION = 2
KIND_CENSUS = 3


def cross_cell_weight_update(w, I_from, I_to):
    if I_from == 0.0:
        raise DegenerateImportance("cannot leave a cell of zero importance", [])
    return w * I_to / I_from


@njit(cache=True, nogil=True)
def _search(cdf, u):
    lo = 0
    hi = cdf.shape[0] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True, nogil=True)
def _emit(state, mu_edges, bcdf):
    """Incoming direction with density proportional to ``|mu| I(R1, mu)``."""
    l = _search(bcdf, next_uniform(state, 0))
    a = min(mu_edges[l], 0.0)
    b = min(mu_edges[l + 1], 0.0)
    # within the bin the density is proportional to |mu|, so mu^2 is uniform
    u = next_uniform(state, 0)
    mu = -math.sqrt(b * b + u * (a * a - b * b))
    if mu >= 0.0:
        mu = -1e-300
    return mu, l


@njit(cache=True, nogil=True)
def _scatter(state, cdf_row, mu_edges):
    l = _search(cdf_row, next_uniform(state, 0))
    u = next_uniform(state, 0)
    mu = mu_edges[l] + u * (mu_edges[l + 1] - mu_edges[l])
    return mu, l


@njit(cache=True, nogil=True)
def _locate(edges, v):
    n = edges.shape[0] - 1
    lo = 0
    hi = n
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if edges[mid] <= v:
            lo = mid
        else:
            hi = mid
    return lo


@njit(cache=True, nogil=True)
def _biased_fly(r, mu, j, l, W, t_left, state, edges, mu_edges, imp, ks_tilde, kappa_t, cdf):
    """Surface-track one particle. Returns ``(r, mu, j, l, W, status, tally, events)``."""
    n = edges.shape[0] - 1
    nm = mu_edges.shape[0] - 1
    tau = -math.log(1.0 - next_uniform(state, 0))
    for ev in range(MAX_EVENTS):
        x0 = r * mu
        y2 = r * r * (1.0 - mu) * (1.0 + mu)
        lo = edges[j]
        hi = edges[j + 1]
        if x0 < 0.0 and lo * lo > y2:
            s_r = -math.sqrt(lo * lo - y2) - x0
            dj = -1
        else:
            s_r = math.sqrt(max(hi * hi - y2, 0.0)) - x0
            dj = 1
        if s_r < 0.0:
            s_r = 0.0
        s_m = math.inf
        if l < nm - 1:
            m = mu_edges[l + 1]
            s_m = m * math.sqrt(y2) / math.sqrt((1.0 - m) * (1.0 + m)) - x0
            if s_m < 0.0:
                s_m = 0.0
        ks = ks_tilde[j, l]
        s_c = tau / ks if ks > 0.0 else math.inf
        s = s_r
        kind = KIND_RADIAL
        if s_m < s:
            s = s_m
            kind = KIND_DIRECTION
        if s_c < s:
            s = s_c
            kind = KIND_COLLISION
        if t_left < s:
            s = t_left
            kind = KIND_CENSUS
        W *= math.exp(-(kappa_t - ks) * s)
        tau -= ks * s
        t_left -= s
        if kind == KIND_RADIAL:
            if dj < 0 and j == 0:
                return lo, mu, j, l, W, EXITED_INNER, W / imp[j, l], ev + 1
            if dj > 0 and j == n - 1:
                return hi, mu, j, l, W, EXITED_OUTER, 0.0, ev + 1
            x = x0 + s
            r = lo if dj < 0 else hi
            mu = min(max(x / r, -1.0), 1.0)
            W *= imp[j + dj, l] / imp[j, l]
            j += dj
        elif kind == KIND_DIRECTION:
            r, mu = advance(r, mu, s)
            W *= imp[j, l + 1] / imp[j, l]
            l += 1
        elif kind == KIND_COLLISION:
            r, mu = advance(r, mu, s)
            if r < lo:
                r = lo
            elif r > hi:
                r = hi
            mu, l = _scatter(state, cdf[j], mu_edges)
            tau = -math.log(1.0 - next_uniform(state, 0))
        else:
            r, mu = advance(r, mu, s)
            if r < lo:
                r = lo
            elif r > hi:
                r = hi
            return r, mu, j, l, W, CENSUS, 0.0, ev + 1
    return r, mu, j, l, W, STALLED, 0.0, MAX_EVENTS


@njit(cache=True, nogil=True)
def _biased_stationary_chunk(first, count, seed, w_a, z, edges, mu_edges, imp, ib, ks_tilde, kappa_t, cdf, bcdf,
                             tallies, status_counts):
    state = np.zeros(1, dtype=np.uint64)
    n = edges.shape[0] - 1
    r1 = edges[n]
    for k in range(count):
        state[0] = stream_key(seed, first + k)
        mu, l = _emit(state, mu_edges, bcdf)
        w = w_a * 2.0 * z / ib[l]
        W = w * imp[n - 1, l]
        _, _, _, _, _, status, tally, _ = _biased_fly(r1, mu, n - 1, l, W, math.inf, state, edges, mu_edges, imp,
                                                      ks_tilde, kappa_t, cdf)
        tallies[k] = tally
        status_counts[status] += 1


@njit(cache=True, nogil=True)
def _biased_emit_batch(seed, first, count, w_a, z, mu_edges, ib, bcdf):
    mu = np.empty(count)
    w = np.empty(count)
    st = np.empty(count, dtype=np.uint64)
    state = np.zeros(1, dtype=np.uint64)
    for k in range(count):
        state[0] = stream_key(seed, first + k)
        m, l = _emit(state, mu_edges, bcdf)
        mu[k] = m
        w[k] = w_a * 2.0 * z / ib[l]
        st[k] = state[0]
    return mu, w, st


@njit(cache=True, nogil=True)
def _biased_bank_step(lo_k, hi_k, r_arr, mu_arr, w_arr, hist_arr, st_arr, alive, t_left, edges, mu_edges, imp,
                      ks_tilde, kappa_t, cdf, hist_tally, status_counts):
    state = np.zeros(1, dtype=np.uint64)
    n = edges.shape[0] - 1
    nm = mu_edges.shape[0] - 1
    r0 = edges[0]
    for k in range(lo_k, hi_k):
        if not alive[k]:
            continue
        h = hist_arr[k]
        r = r_arr[k]
        if r < r0:
            hist_tally[h] += w_arr[k]
            alive[k] = False
            status_counts[EXITED_INNER] += 1
            continue
        mu = mu_arr[k]
        j = min(_locate(edges, r), n - 1)
        l = min(_locate(mu_edges, mu), nm - 1)
        W = w_arr[k] * imp[j, l]
        state[0] = st_arr[k]
        r, mu, j, l, W, status, tally, _ = _biased_fly(r, mu, j, l, W, t_left, state, edges, mu_edges, imp,
                                                       ks_tilde, kappa_t, cdf)
        st_arr[k] = state[0]
        hist_tally[h] += tally
        if status == CENSUS:
            r_arr[k] = r
            mu_arr[k] = mu
            w_arr[k] = W / imp[j, l]
        else:
            alive[k] = False
            status_counts[status] += 1


# --- public wrappers --------------------------------------------------------

def biased_source_emit(rng, table, w_analog):
    """Draw one incoming direction on the outer sphere.

    Returns ``(mu, weight)`` where ``weight`` is the physical weight: the analog
    weight ``w_analog`` times the ratio of Lambert to biased emission density.
    """
    z = table.boundary_emission_weight
    if z <= 0.0:
        raise DegenerateImportance("importance vanishes on the outer boundary", [])
    mu, l = _emit(rng, table.mu_edges, table.boundary_emission_cdf)
    return mu, w_analog * 2.0 * z / table.boundary_importance[l]


def biased_flight_and_collide(r, mu, weight, table, rng, t_left=math.inf):
    """Track a particle with physical ``weight`` to its next terminal event or census.

    Returns ``(r, mu, weight, status, target_tally, events)``.
    """
    edges, mu_edges = table.r_edges, table.mu_edges
    j = min(int(np.searchsorted(edges, r, side="right")) - 1, len(edges) - 2)
    l = min(int(np.searchsorted(mu_edges, mu, side="right")) - 1, len(mu_edges) - 2)
    j, l = max(j, 0), max(l, 0)
    W = weight * table.I[j, l]
    r, mu, j, l, W, status, tally, events = _biased_fly(
        float(r), float(mu), j, l, W, t_left, rng, edges, mu_edges, table.I, table.kappa_s_tilde,
        table.kappa_t, table.direction_cdf)
    if status == STALLED:
        from .errors import EventLoopStall
        raise EventLoopStall(f"history exceeded {MAX_EVENTS} events")
    return r, mu, W / table.I[j, l], STATUS_NAMES[status], tally, events


def run_biased(cfg: ProblemConfig, workers=1):
    if not cfg.importance:
        raise ConfigError("importance: run_biased needs importance on")
    if cfg.source != "outer_boundary":
        raise ConfigError("source: biased runs need the outer boundary source")
    if cfg.mode == "stationary":
        return _run_biased_stationary(cfg, workers)
    return _run_biased_unsteady(cfg, workers)


def _table_arrays(table):
    return (table.r_edges, table.mu_edges, table.I, table.boundary_importance, table.kappa_s_tilde,
            table.direction_cdf, table.boundary_emission_cdf)


def _run_biased_stationary(cfg, workers):
    start = time.perf_counter()
    _, table = build_importance(cfg.alpha, cfg.r1, cfg.n_r, cfg.n_mu, cfg.kappa_s, cfg.kappa_t, gl_order=cfg.gl_order)
    setup = time.perf_counter() - start
    edges, mu_edges, imp, ib, ks_tilde, cdf, bcdf = _table_arrays(table)
    w_a = cfg.t_final / (2.0 * cfg.n)
    z = table.boundary_emission_weight

    def work(lo, hi):
        tallies = np.zeros(hi - lo)
        sc = np.zeros(len(STATUS_NAMES), dtype=np.int64)
        _biased_stationary_chunk(lo, hi - lo, np.uint64(cfg.seed), w_a, z, edges, mu_edges, imp, ib, ks_tilde,
                                 cfg.kappa_t, cdf, bcdf, tallies, sc)
        return tallies, sc

    parts = _map_chunks(work, cfg.n, workers)
    per_history = np.concatenate([p[0] for p in parts])
    status = np.sum([p[1] for p in parts], axis=0)
    wall = time.perf_counter() - start
    res = _finish(cfg, per_history, status, wall, "biased", setup_time=setup)
    res.table = table
    return res


def _run_biased_unsteady(cfg, workers):
    start = time.perf_counter()
    setup = 0.0
    M = cfg.n
    n_steps = cfg.n_steps
    seed = np.uint64(cfg.seed)
    hist_tally = np.zeros(M * n_steps)
    status = np.zeros(len(STATUS_NAMES), dtype=np.int64)
    bank = Bank()
    emitted = 0
    table = None
    for m in range(n_steps):
        t0 = m * cfg.dt
        r0 = cfg.alpha + cfg.beta * t0
        w_src = step_source_weight(cfg, m)
        if w_src <= 0.0 and len(bank) == 0:
            continue
        if table is None or cfg.beta != 0.0:
            t_build = time.perf_counter()
            _, table = build_importance(r0, cfg.r1, cfg.n_r, cfg.n_mu, cfg.kappa_s, cfg.kappa_t,
                                        fixed_mesh=True, gl_order=cfg.gl_order)
            setup += time.perf_counter() - t_build
        edges, mu_edges, imp, ib, ks_tilde, cdf, bcdf = _table_arrays(table)
        if w_src > 0.0:
            mu, w, st = _biased_emit_batch(seed, emitted, M, w_src, table.boundary_emission_weight, mu_edges, ib, bcdf)
            bank.append(np.full(M, cfg.r1), mu, w, np.arange(emitted, emitted + M), st)
            emitted += M
        alive = np.ones(len(bank), dtype=np.bool_)

        def work(lo, hi):
            sc = np.zeros(len(STATUS_NAMES), dtype=np.int64)
            _biased_bank_step(lo, hi, bank.r, bank.mu, bank.w, bank.hist, bank.state, alive, cfg.dt, edges,
                              mu_edges, imp, ks_tilde, cfg.kappa_t, cdf, hist_tally, sc)
            return sc

        for sc in _map_chunks(work, len(bank), workers):
            status += sc
        bank.keep(alive)
    status[CENSUS] += len(bank)
    wall = time.perf_counter() - start
    res = _finish(cfg, hist_tally[:emitted], status, wall, "biased", setup_time=setup)
    res.table = table
    return res
