"""Analog Monte Carlo transport between two concentric spheres.

Particles carry ``(r, mu)`` only: along a straight flight the impact
parameter ``y = r sqrt(1 - mu^2)`` is conserved and ``x = r mu`` grows like
the path length. Absorption is implicit: the weight decays with
``exp(-(kappa_t - kappa_s) s)`` and collisions only scatter, isotropically.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .config import ProblemConfig
from .errors import ConfigError, DomainError, EventLoopStall
from .rng import next_uniform, stream_key
from .stats import SampleAccumulator

IN_FLIGHT = 0
ABSORBED_CUTOFF = 1
EXITED_INNER = 2
EXITED_OUTER = 3
CENSUS = 4
STALLED = 5
STATUS_NAMES = ("in_flight", "absorbed_cutoff", "exited_inner", "exited_outer", "census", "stalled")

HIT_INNER = 0
HIT_OUTER = 1

MAX_EVENTS = 1_000_000
CHUNK = 2048
PROFILE_BATCHES = 32


@dataclass
class Particle:
    r: float
    mu: float
    weight: float = 1.0
    time: float = 0.0
    status: str = "in_flight"


@dataclass
class TallyResult:
    """Outcome of one run. ``flux_mean`` is the target flux estimate."""

    flux_mean: float
    sample_variance: float
    mean_variance: float
    n_histories: int
    reach_fraction: float
    shell_flux: np.ndarray | None = None
    shell_flux_std: np.ndarray | None = None
    shell_crossings: np.ndarray | None = None
    profile_edges: np.ndarray | None = None
    status_counts: dict = field(default_factory=dict)
    wall_time: float = 0.0
    setup_time: float = 0.0
    engine: str = "analog"

    @property
    def std_dev(self):
        return math.sqrt(self.mean_variance)


# --- kinematics -------------------------------------------------------------

@njit(cache=True, nogil=True)
def _impact2(r, mu):
    return r * r * (1.0 - mu) * (1.0 + mu)


@njit(cache=True, nogil=True)
def advance(r, mu, s):
    """Position and direction cosine after a straight flight of length ``s``."""
    x = r * mu + s
    y2 = _impact2(r, mu)
    rn = math.sqrt(x * x + y2)
    if rn == 0.0:
        return 0.0, 1.0
    mun = x / rn
    if mun > 1.0:
        mun = 1.0
    elif mun < -1.0:
        mun = -1.0
    return rn, mun


@njit(cache=True, nogil=True)
def shell_distance(r, mu, r0, r1):
    """Distance to the next sphere along the flight and which one is hit."""
    x = r * mu
    y2 = _impact2(r, mu)
    if r0 > 0.0 and mu < 0.0 and y2 < r0 * r0:
        s = -x - math.sqrt(r0 * r0 - y2)
        return max(s, 0.0), HIT_INNER
    s = -x + math.sqrt(max(r1 * r1 - y2, 0.0))
    return max(s, 0.0), HIT_OUTER


@njit(cache=True, nogil=True)
def collision_distance(state, i, kappa_s):
    if kappa_s <= 0.0:
        return math.inf
    return -math.log(1.0 - next_uniform(state, i)) / kappa_s


@njit(cache=True, nogil=True)
def lambert_mu(state, i):
    """Incoming direction at the outer sphere, density ``2|mu|`` on [-1, 0)."""
    return -math.sqrt(1.0 - next_uniform(state, i))


@njit(cache=True, nogil=True)
def isotropic_mu(state, i):
    return 2.0 * next_uniform(state, i) - 1.0


@njit(cache=True, nogil=True)
def locate(edges, r):
    n = edges.shape[0] - 1
    lo = 0
    hi = n
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if edges[mid] <= r:
            lo = mid
        else:
            hi = mid
    return lo


@njit(cache=True, nogil=True)
def track_segment(r, mu, s, weight, kappa_a, edges, acc, counts):
    """Add the weight-integrated chord length of a flight to each radial cell.

    The weight decays as ``exp(-kappa_a s)`` along the flight. ``acc`` and
    ``counts`` are indexed by cell; returns nothing.
    """
    n = edges.shape[0] - 1
    if s <= 0.0 or n < 1:
        return
    x0 = r * mu
    y2 = _impact2(r, mu)
    y = math.sqrt(y2)
    x_end = x0 + s
    i = locate(edges, r)
    xs = x0
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
        xb = min(xe, x_end)
        if xb > xs:
            if kappa_a > 0.0:
                amount = weight * (math.exp(-kappa_a * (xs - x0)) - math.exp(-kappa_a * (xb - x0))) / kappa_a
            else:
                amount = weight * (xb - xs)
            acc[i] += amount
            counts[i] += 1
        if xe >= x_end:
            break
        if xe > xs:
            xs = xe
        i = nxt
        if i < 0 or i >= n:
            break


# --- history kernels --------------------------------------------------------

@njit(cache=True, nogil=True)
def _fly(r, mu, w, t_left, state, r0, r1, kappa_s, kappa_a, w_cut, edges, do_profile, acc, counts):
    """Track one particle until it leaves, is cut off, or ``t_left`` runs out.

    Returns ``(r, mu, w, status, tallied, events)``.
    """
    tallied = 0.0
    for ev in range(MAX_EVENTS):
        s_b, hit = shell_distance(r, mu, r0, r1)
        s_c = collision_distance(state, 0, kappa_s)
        s = s_b
        kind = 0
        if s_c < s:
            s = s_c
            kind = 1
        if t_left < s:
            s = t_left
            kind = 2
        if do_profile:
            track_segment(r, mu, s, w, kappa_a, edges, acc, counts)
        w_new = w * math.exp(-kappa_a * s) if kappa_a > 0.0 else w
        t_left -= s
        if kind == 0:
            if hit == HIT_INNER:
                return r0, mu, w_new, EXITED_INNER, w_new, ev + 1
            return r1, mu, w_new, EXITED_OUTER, tallied, ev + 1
        r, mu = advance(r, mu, s)
        w = w_new
        if r > r1:
            r = r1
        if r < r0:
            r = r0
        if kind == 2:
            return r, mu, w, CENSUS, tallied, ev + 1
        if w < w_cut:
            return r, mu, w, ABSORBED_CUTOFF, tallied, ev + 1
        mu = isotropic_mu(state, 0)
    return r, mu, w, STALLED, tallied, MAX_EVENTS


@njit(cache=True, nogil=True)
def _stationary_chunk(first, count, seed, shell_source, r0, r1, r_src, kappa_s, kappa_a, w0, cutoff,
                      edges, do_profile, tallies, status_counts, s1, s2, ncross):
    state = np.zeros(1, dtype=np.uint64)
    n_cells = edges.shape[0] - 1
    hist = np.zeros(max(n_cells, 1))
    hist_counts = np.zeros(max(n_cells, 1), dtype=np.int64)
    for k in range(count):
        h = first + k
        state[0] = stream_key(seed, h)
        if shell_source:
            r = r_src
            mu = isotropic_mu(state, 0)
        else:
            r = r1
            mu = lambert_mu(state, 0)
        r, mu, w, status, tallied, _ = _fly(r, mu, w0, math.inf, state, r0, r1, kappa_s, kappa_a,
                                            w0 * cutoff, edges, do_profile, hist, hist_counts)
        tallies[k] = tallied
        status_counts[status] += 1
        if do_profile:
            for i in range(n_cells):
                if hist_counts[i] > 0:
                    v = hist[i]
                    s1[i] += v
                    s2[i] += v * v
                    ncross[i] += hist_counts[i]
                    hist[i] = 0.0
                    hist_counts[i] = 0


@njit(cache=True, nogil=True)
def _bank_step(lo, hi, r_arr, mu_arr, w_arr, wb_arr, hist_arr, st_arr, alive, t_left, r0, r1,
               kappa_s, kappa_a, cutoff, edges, do_profile, hist_tally, acc, counts, n_batches, status_counts):
    state = np.zeros(1, dtype=np.uint64)
    for k in range(lo, hi):
        if not alive[k]:
            continue
        h = hist_arr[k]
        b = h % n_batches
        if r_arr[k] < r0:
            # the inner sphere grew over the particle during the census
            hist_tally[h] += w_arr[k]
            alive[k] = False
            status_counts[EXITED_INNER] += 1
            continue
        state[0] = st_arr[k]
        r, mu, w, status, tallied, _ = _fly(r_arr[k], mu_arr[k], w_arr[k], t_left, state, r0, r1,
                                            kappa_s, kappa_a, wb_arr[k] * cutoff, edges, do_profile,
                                            acc[b], counts[b])
        st_arr[k] = state[0]
        r_arr[k] = r
        mu_arr[k] = mu
        w_arr[k] = w
        hist_tally[h] += tallied
        if status != CENSUS:
            alive[k] = False
            status_counts[status] += 1


# --- public kinematics API --------------------------------------------------

def advance_free_flight(p: Particle, s) -> Particle:
    if s < 0.0:
        raise DomainError("flight length must be non-negative")
    r, mu = advance(p.r, p.mu, float(s))
    return Particle(r=r, mu=mu, weight=p.weight, time=p.time + s, status=p.status)


def distance_to_shells(r, mu, r0, r1):
    """``(s, 'inner' | 'outer')`` for a particle at ``(r, mu)``."""
    tol = 1e-12 * r1
    if r < r0 - tol or r > r1 + tol:
        raise DomainError(f"r = {r} outside [{r0}, {r1}]")
    r = min(max(r, r0), r1)
    s, hit = shell_distance(float(r), float(mu), float(r0), float(r1))
    return s, ("inner" if hit == HIT_INNER else "outer")


def sample_collision_distance(rng, kappa_s):
    return collision_distance(rng, 0, float(kappa_s))


def attenuate_weight(w, kappa_a, s):
    if kappa_a < 0.0 or s < 0.0:
        raise DomainError("need kappa_a >= 0 and s >= 0")
    return w * math.exp(-kappa_a * s)


def sample_boundary_source(rng, t, cfg: ProblemConfig) -> Particle:
    mu = lambert_mu(rng, 0)
    return Particle(r=cfg.r1, mu=mu, weight=cfg.dt / (2.0 * cfg.n), time=t)


def sample_shell_source(rng, r_source, cfg: ProblemConfig) -> Particle:
    if not cfg.alpha <= r_source <= cfg.r1:
        raise DomainError(f"source radius {r_source} outside the domain")
    return Particle(r=float(r_source), mu=isotropic_mu(rng, 0), weight=1.0 / cfg.n)


def scatter_direction(rng):
    return isotropic_mu(rng, 0)


def inner_radius(t, cfg: ProblemConfig):
    """Inner radius frozen at the start of the time step containing ``t``."""
    if cfg.mode == "stationary" or cfg.beta == 0.0:
        return cfg.alpha
    step = min(int(math.floor(t / cfg.dt + 1e-9)), cfg.n_steps - 1) if t < cfg.t_final else cfg.n_steps
    return cfg.alpha + cfg.beta * step * cfg.dt


def tally_track_length(p: Particle, s, edges, acc, counts=None, kappa_a=0.0):
    if counts is None:
        counts = np.zeros(len(edges) - 1, dtype=np.int64)
    track_segment(p.r, p.mu, float(s), p.weight, float(kappa_a), np.asarray(edges, dtype=float), acc, counts)
    return acc


# --- run drivers ------------------------------------------------------------

def profile_edges(cfg: ProblemConfig):
    if cfg.mode == "stationary":
        return np.linspace(cfg.alpha, cfg.r1, cfg.n_r + 1)
    return np.linspace(0.0, cfg.r1, cfg.n_r + 1)


def _map_chunks(fn, n_items, workers):
    chunks = [(lo, min(lo + CHUNK, n_items)) for lo in range(0, n_items, CHUNK)]
    if workers <= 1 or len(chunks) <= 1:
        return [fn(lo, hi) for lo, hi in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: fn(*c), chunks))


def _status_dict(counts):
    return {name: int(c) for name, c in zip(STATUS_NAMES, counts) if c}


def _finish(cfg, per_history, status_counts, wall, engine, setup_time=0.0, profile=None):
    n = per_history.size
    acc = SampleAccumulator.from_samples(per_history * n)
    mean, var, mvar = acc.finalize()
    reach = float(np.count_nonzero(per_history)) / n
    res = TallyResult(flux_mean=mean, sample_variance=var, mean_variance=mvar, n_histories=n,
                      reach_fraction=reach, status_counts=_status_dict(status_counts), wall_time=wall,
                      setup_time=setup_time, engine=engine)
    if status_counts[STALLED]:
        raise EventLoopStall(f"{status_counts[STALLED]} histories exceeded {MAX_EVENTS} events")
    if profile is not None:
        res.profile_edges, res.shell_flux, res.shell_flux_std, res.shell_crossings = profile
    return res


def run_analog(cfg: ProblemConfig, workers=1) -> TallyResult:
    """Analog run; the estimator sums weights crossing the inner sphere inwards."""
    if cfg.importance:
        raise ConfigError("importance: run_analog needs importance off")
    if cfg.mode == "stationary":
        return _run_analog_stationary(cfg, workers)
    return _run_analog_unsteady(cfg, workers)


def _run_analog_stationary(cfg, workers):
    start = time.perf_counter()
    n = cfg.n
    shell = cfg.source == "shell"
    w0 = 1.0 / n if shell else cfg.t_final / (2.0 * n)
    edges = profile_edges(cfg) if cfg.profile else np.array([cfg.alpha, cfg.r1])
    n_cells = len(edges) - 1
    kappa_a = cfg.kappa_t - cfg.kappa_s

    def work(lo, hi):
        tallies = np.zeros(hi - lo)
        sc = np.zeros(len(STATUS_NAMES), dtype=np.int64)
        s1 = np.zeros(n_cells)
        s2 = np.zeros(n_cells)
        nc = np.zeros(n_cells, dtype=np.int64)
        _stationary_chunk(lo, hi - lo, np.uint64(cfg.seed), shell, cfg.alpha, cfg.r1, cfg.r_source,
                          cfg.kappa_s, kappa_a, w0, cfg.weight_cutoff, edges, cfg.profile, tallies, sc, s1, s2, nc)
        return tallies, sc, s1, s2, nc

    parts = _map_chunks(work, n, workers)
    per_history = np.concatenate([p[0] for p in parts])
    status = np.sum([p[1] for p in parts], axis=0)
    profile = None
    if cfg.profile:
        s1 = np.zeros(n_cells)
        s2 = np.zeros(n_cells)
        nc = np.zeros(n_cells, dtype=np.int64)
        for p in parts:
            s1 += p[2]
            s2 += p[3]
            nc += p[4]
        vol = 4.0 / 3.0 * math.pi * (edges[1:] ** 3 - edges[:-1] ** 3)
        # per-history samples are n * contribution / volume; the variance of
        # their mean reduces to (n S2 - S1^2) / ((n - 1) V^2)
        mean = s1 / vol
        spread = (n * s2 - s1 * s1) / (n - 1) if n > 1 else np.zeros(n_cells)
        std = np.sqrt(np.maximum(spread, 0.0)) / vol
        profile = (edges, mean, std, nc)
    wall = time.perf_counter() - start
    return _finish(cfg, per_history, status, wall, "analog", profile=profile)


class Bank:
    """Particles alive at a census, in deterministic order."""

    def __init__(self):
        self.r = np.zeros(0)
        self.mu = np.zeros(0)
        self.w = np.zeros(0)
        self.w_birth = np.zeros(0)
        self.hist = np.zeros(0, dtype=np.int64)
        self.state = np.zeros(0, dtype=np.uint64)
        self.extra = {}

    def __len__(self):
        return self.r.size

    def append(self, r, mu, w, hist, state, **extra):
        self.r = np.concatenate([self.r, r])
        self.mu = np.concatenate([self.mu, mu])
        self.w = np.concatenate([self.w, w])
        self.w_birth = np.concatenate([self.w_birth, w])
        self.hist = np.concatenate([self.hist, hist])
        self.state = np.concatenate([self.state, state])
        for key, val in extra.items():
            self.extra[key] = np.concatenate([self.extra.get(key, np.zeros(0, dtype=val.dtype)), val])

    def keep(self, mask):
        self.r, self.mu, self.w = self.r[mask], self.mu[mask], self.w[mask]
        self.w_birth, self.hist, self.state = self.w_birth[mask], self.hist[mask], self.state[mask]
        for key in self.extra:
            self.extra[key] = self.extra[key][mask]


@njit(cache=True, nogil=True)
def _emit_lambert(seed, first, count, r1):
    mu = np.empty(count)
    st = np.empty(count, dtype=np.uint64)
    state = np.zeros(1, dtype=np.uint64)
    for k in range(count):
        state[0] = stream_key(seed, first + k)
        mu[k] = lambert_mu(state, 0)
        st[k] = state[0]
    return mu, st


def step_source_weight(cfg: ProblemConfig, m):
    """Per-particle weight emitted at the start of step ``m`` (0 once the source is off)."""
    t0 = m * cfg.dt
    duration = min(cfg.dt, cfg.source_end - t0)
    return max(duration, 0.0) / (2.0 * cfg.n)


def _run_analog_unsteady(cfg, workers):
    start = time.perf_counter()
    M = cfg.n
    n_steps = cfg.n_steps
    kappa_a = cfg.kappa_t - cfg.kappa_s
    edges = profile_edges(cfg) if cfg.profile else np.array([0.0, cfg.r1])
    n_cells = len(edges) - 1
    n_batches = PROFILE_BATCHES if cfg.profile else 1
    seed = np.uint64(cfg.seed)
    emitted = 0
    hist_tally = np.zeros(M * n_steps)
    status = np.zeros(len(STATUS_NAMES), dtype=np.int64)
    acc_total = np.zeros((n_batches, n_cells))
    cnt_total = np.zeros((n_batches, n_cells), dtype=np.int64)
    bank = Bank()
    for m in range(n_steps):
        t0 = m * cfg.dt
        r0 = cfg.alpha + cfg.beta * t0
        w_src = step_source_weight(cfg, m)
        if w_src > 0.0:
            mu, st = _emit_lambert(seed, emitted, M, cfg.r1)
            bank.append(np.full(M, cfg.r1), mu, np.full(M, w_src), np.arange(emitted, emitted + M), st)
            emitted += M
        if len(bank) == 0:
            continue
        alive = np.ones(len(bank), dtype=np.bool_)
        t_left = cfg.dt

        def work(lo, hi):
            acc = np.zeros((n_batches, n_cells))
            cnt = np.zeros((n_batches, n_cells), dtype=np.int64)
            sc = np.zeros(len(STATUS_NAMES), dtype=np.int64)
            _bank_step(lo, hi, bank.r, bank.mu, bank.w, bank.w_birth, bank.hist, bank.state, alive, t_left, r0,
                       cfg.r1, cfg.kappa_s, kappa_a, cfg.weight_cutoff, edges, cfg.profile, hist_tally, acc, cnt,
                       n_batches, sc)
            return acc, cnt, sc

        for acc, cnt, sc in _map_chunks(work, len(bank), workers):
            acc_total += acc
            cnt_total += cnt
            status += sc
        bank.keep(alive)
    status[CENSUS] += len(bank)
    per_history = hist_tally[:emitted]
    profile = _batch_profile(edges, acc_total, cnt_total, cfg) if cfg.profile else None
    wall = time.perf_counter() - start
    return _finish(cfg, per_history, status, wall, "analog", profile=profile)


def _batch_profile(edges, acc, cnt, cfg):
    """Profile mean and standard error from fixed history batches (unsteady runs)."""
    vol = 4.0 / 3.0 * math.pi * (edges[1:] ** 3 - edges[:-1] ** 3)
    nb = acc.shape[0]
    per_batch = acc * nb / (vol * cfg.t_final)
    mean = per_batch.mean(axis=0)
    std = per_batch.std(axis=0, ddof=1) / math.sqrt(nb)
    return edges, mean, std, cnt.sum(axis=0)
