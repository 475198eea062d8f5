"""Kinetic Monte Carlo for the microscopic lattice models.

The lattice has ``N`` sites at positions ``(i + 1/2) / N``.  Bulk events
are accelerated by ``N^2`` and boundary events by ``N`` times the contact
strength ``kappa``.  Rates:

exclusion
    jump ``x -> x +- 1`` at ``N^2 exp(+-E / 2N)`` if the target is empty;
    boundary flips from window-dependent tables (a one-site window with
    rates ``R(lam)`` and ``1 - R(lam)`` for the reversible model).
zero range
    a particle leaves ``x`` at ``N^2 g(eta_x) exp(+-E / 2N)`` per direction,
    leaves through the boundary at ``N kappa g(eta_x)`` and enters at
    ``N kappa exp(lam)``.
KMP
    each bond redistributes its energy uniformly at rate ``2 N^2``; the
    boundary site is refreshed from ``Exp(mean -1/lam)`` at rate ``N kappa``.

Time averages weight every visited state by its expected holding time
``1 / total_rate`` and are split into batches for standard errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import linalg
from scipy.sparse import csgraph, csr_matrix

from .errors import ConfigError, ResourceError, StructureError
from .functionals import Drive
from .models import KMP, SEP, Model, NonRevExclusion, ZeroRange

MAX_ORACLE_SITES = 12
MAX_HISTOGRAM_SITES = 16

OK, CAP_EXCEEDED, BOOKKEEPING = 0, 1, 2


# ---------------------------------------------------------------------------
# Fenwick tree


@numba.njit(cache=True)
def _fen_build(tree, rates):
    n = rates.size
    tree[:] = 0.0
    for i in range(n):
        j = i + 1
        while j <= n:
            tree[j] += rates[i]
            j += j & -j


@numba.njit(cache=True)
def _fen_add(tree, i, delta):
    n = tree.size - 1
    j = i + 1
    while j <= n:
        tree[j] += delta
        j += j & -j


@numba.njit(cache=True)
def _fen_total(tree):
    n = tree.size - 1
    s = 0.0
    j = n
    while j > 0:
        s += tree[j]
        j -= j & -j
    return s


@numba.njit(cache=True)
def _fen_find(tree, u, top):
    """Smallest index whose inclusive prefix sum exceeds ``u``."""
    n = tree.size - 1
    pos = 0
    bit = top
    while bit > 0:
        nxt = pos + bit
        if nxt <= n and tree[nxt] <= u:
            pos = nxt
            u -= tree[nxt]
        bit >>= 1
    return pos


@numba.njit(cache=True)
def _top_bit(n):
    b = 1
    while b * 2 <= n:
        b *= 2
    return b


@numba.njit(cache=True)
def _set_rate(tree, rates, i, value):
    d = value - rates[i]
    if d != 0.0:
        rates[i] = value
        _fen_add(tree, i, d)


@numba.njit(cache=True)
def _pick(tree, rates, rng, top):
    total = _fen_total(tree)
    while True:
        k = _fen_find(tree, rng.random() * total, top)
        if k < rates.size and rates[k] > 0.0:
            return k, total
        # roundoff at the end of the tree: rebuild and retry
        _fen_build(tree, rates)
        total = _fen_total(tree)


# ---------------------------------------------------------------------------
# shared bookkeeping


@numba.njit(cache=True)
def _batch_index(ev, t, n_burn, per_batch, t_burn, t_per_batch, by_time, n_batches):
    if by_time:
        b = int((t - t_burn) / t_per_batch)
    else:
        b = (ev - n_burn) // per_batch
    return min(b, n_batches - 1)


@numba.njit(cache=True)
def _next_switch(batch, n_burn, per_batch, t_burn, t_per_batch, by_time, n_batches):
    if batch >= n_batches - 1:
        return np.inf
    if by_time:
        return t_burn + (batch + 1) * t_per_batch
    return float(n_burn + (batch + 1) * per_batch)


@numba.njit(cache=True)
def _flush_sites(acc_row, eta, last, clock):
    for x in range(eta.size):
        acc_row[x] += eta[x] * (clock - last[x])
        last[x] = 0.0


# ---------------------------------------------------------------------------
# exclusion


@numba.njit(cache=True)
def _bond_class(eta, b):
    """0 if the bond can carry a jump to the right, 1 to the left, -1 if blocked."""
    if eta[b] == 1 and eta[b + 1] == 0:
        return 0
    if eta[b] == 0 and eta[b + 1] == 1:
        return 1
    return -1


@numba.njit(cache=True)
def _window_code(eta, ell, right):
    n = eta.size
    c = 0
    for i in range(ell):
        x = n - 1 - i if right else i
        c |= eta[x] << i
    return c


@numba.njit(cache=True)
def _boundary_net(eta, tab, ell, right):
    """Net particle flux into the lattice through one edge, in event-rate units."""
    c = _window_code(eta, ell, right)
    net = 0.0
    for j in range(ell):
        x = eta.size - 1 - j if right else j
        net += tab[j, c] * (1.0 - 2.0 * eta[x])
    return net


@numba.njit(cache=True)
def _boundary_rates(eta, tab_l, tab_r, ell, out):
    cl = _window_code(eta, ell, False)
    cr = _window_code(eta, ell, True)
    for j in range(ell):
        out[j] = tab_l[j, cl]
        out[ell + j] = tab_r[j, cr]


@numba.njit(cache=True)
def _exclusion_kernel(eta, rate_r, rate_l, tab_l, tab_r, ell, rng, n_burn, n_events, t_end, by_time,
                      burn_frac, n_batches, want_hist, n_log, debug):
    # Bulk bonds are kept in two rate classes (jump right / jump left) so an
    # event is chosen in O(1); the 2*ell boundary flips are scanned.  The
    # class bookkeeping is written out inline with scalar counters: helper
    # calls on small arrays cost several times more in this hot loop.
    n = eta.size
    nb = n - 1
    cls = np.full(nb, -1, dtype=np.int64)
    m0 = np.zeros(nb, dtype=np.int64)
    m1 = np.zeros(nb, dtype=np.int64)
    pos = np.zeros(nb, dtype=np.int64)
    c0 = 0
    c1 = 0
    for b in range(nb):
        new = _bond_class(eta, b)
        if new == 0:
            m0[c0] = b
            pos[b] = c0
            c0 += 1
        elif new == 1:
            m1[c1] = b
            pos[b] = c1
            c1 += 1
        cls[b] = new
    brates = np.zeros(2 * ell)
    _boundary_rates(eta, tab_l, tab_r, ell, brates)
    bsum = brates.sum()
    check = np.zeros(2 * ell)

    acc = np.zeros((n_batches, n))
    weight = np.zeros(n_batches)
    cur = np.zeros((n_batches, 2))
    hist = np.zeros((n_batches, (1 << n) if want_hist else 0))
    log_t = np.zeros(n_log)
    log_id = np.zeros(n_log, dtype=np.uint32)
    last = np.zeros(n)
    clock = 0.0
    t = 0.0
    t_burn = burn_frac * t_end
    t_per = (t_end - t_burn) / n_batches
    per = max((n_events - n_burn) // n_batches, 1)
    code = 0
    if want_hist:
        for x in range(n):
            code |= eta[x] << x
    lnet = _boundary_net(eta, tab_l, ell, False)
    rnet = -_boundary_net(eta, tab_r, ell, True)
    ev = 0
    batch = -1
    next_switch = -1.0
    while ev < n_events and t < t_end:
        a_r = c0 * rate_r
        a_l = c1 * rate_l
        total = a_r + a_l + bsum
        u = rng.random() * total
        if u < a_r:
            k = m0[min(int(u / rate_r), c0 - 1)]
        elif u < a_r + a_l:
            k = m1[min(int((u - a_r) / rate_l), c1 - 1)]
        else:
            u -= a_r + a_l
            j = 0
            while j < 2 * ell - 1 and (u >= brates[j] or brates[j] == 0.0):
                u -= brates[j]
                j += 1
            k = nb + j
        measuring = (t >= t_burn) if by_time else (ev >= n_burn)
        if measuring:
            if (t if by_time else float(ev)) >= next_switch:
                b = _batch_index(ev, t, n_burn, per, t_burn, t_per, by_time, n_batches)
                if b != batch:
                    if batch >= 0:
                        _flush_sites(acc[batch], eta, last, clock)
                    batch = b
                    clock = 0.0
                    last[:] = 0.0
                next_switch = _next_switch(batch, n_burn, per, t_burn, t_per, by_time, n_batches)
            w = 1.0 / total
            clock += w
            weight[batch] += w
            cur[batch, 0] += lnet * w
            cur[batch, 1] += rnet * w
            if want_hist:
                hist[batch, code] += w
        t_next = t + rng.standard_exponential() / total
        if t_next > t_end:
            t = t_end  # the jump falls past the horizon
            break
        t = t_next
        if ev < n_log:
            log_t[ev] = t
            log_id[ev] = k
        if k < nb:
            lo = k
            hi = k + 1
        else:
            j = k - nb
            lo = j if j < ell else n - 1 - (j - ell)
            hi = lo
        for x in range(lo, hi + 1):
            if measuring:
                acc[batch, x] += eta[x] * (clock - last[x])
                last[x] = clock
            eta[x] = 1 - eta[x]
            if want_hist:
                code ^= 1 << x
        for b2 in range(max(lo - 1, 0), min(hi, nb - 1) + 1):
            new = _bond_class(eta, b2)
            old = cls[b2]
            if old != new:
                if old == 0:
                    i = pos[b2]
                    moved = m0[c0 - 1]
                    m0[i] = moved
                    pos[moved] = i
                    c0 -= 1
                elif old == 1:
                    i = pos[b2]
                    moved = m1[c1 - 1]
                    m1[i] = moved
                    pos[moved] = i
                    c1 -= 1
                if new == 0:
                    m0[c0] = b2
                    pos[b2] = c0
                    c0 += 1
                elif new == 1:
                    m1[c1] = b2
                    pos[b2] = c1
                    c1 += 1
                cls[b2] = new
        if lo < ell or hi >= n - ell:
            _boundary_rates(eta, tab_l, tab_r, ell, brates)
            bsum = brates.sum()
            lnet = _boundary_net(eta, tab_l, ell, False)
            rnet = -_boundary_net(eta, tab_r, ell, True)
        ev += 1
        if debug:
            _boundary_rates(eta, tab_l, tab_r, ell, check)
            bad = False
            for i in range(2 * ell):
                bad |= check[i] != brates[i]
            n0 = 0
            n1 = 0
            for b2 in range(nb):
                c2 = _bond_class(eta, b2)
                bad |= c2 != cls[b2]
                if c2 == 0:
                    bad |= m0[pos[b2]] != b2
                    n0 += 1
                elif c2 == 1:
                    bad |= m1[pos[b2]] != b2
                    n1 += 1
            if bad or n0 != c0 or n1 != c1:
                return acc, weight, cur, hist, log_t, log_id, t, ev, BOOKKEEPING
    if batch >= 0:
        _flush_sites(acc[batch], eta, last, clock)
    return acc, weight, cur, hist, log_t, log_id, t, ev, OK


# ---------------------------------------------------------------------------
# KMP


@numba.njit(cache=True)
def _kmp_kernel(eta, bulk_rate, rate_l, rate_r, tau_l, tau_r, rng, n_burn, n_events, t_end, by_time,
                burn_frac, n_batches, n_log):
    n = eta.size
    nb = n - 1
    total = nb * bulk_rate + rate_l + rate_r
    acc = np.zeros((n_batches, n))
    weight = np.zeros(n_batches)
    cur = np.zeros((n_batches, 2))
    log_t = np.zeros(n_log)
    log_id = np.zeros(n_log, dtype=np.uint32)
    last = np.zeros(n)
    clock = 0.0
    t = 0.0
    t_burn = burn_frac * t_end
    t_per = (t_end - t_burn) / n_batches
    per = max((n_events - n_burn) // n_batches, 1)
    w = 1.0 / total
    ev = 0
    batch = -1
    next_switch = -1.0
    while ev < n_events and t < t_end:
        u = rng.random() * total
        if u < nb * bulk_rate:
            k = min(int(u / bulk_rate), nb - 1)
        elif u < nb * bulk_rate + rate_l:
            k = nb
        else:
            k = nb + 1
        measuring = (t >= t_burn) if by_time else (ev >= n_burn)
        if measuring:
            if (t if by_time else float(ev)) >= next_switch:
                b = _batch_index(ev, t, n_burn, per, t_burn, t_per, by_time, n_batches)
                if b != batch:
                    if batch >= 0:
                        _flush_sites(acc[batch], eta, last, clock)
                    batch = b
                    clock = 0.0
                    last[:] = 0.0
                next_switch = _next_switch(batch, n_burn, per, t_burn, t_per, by_time, n_batches)
            clock += w
            weight[batch] += w
            cur[batch, 0] += rate_l * (tau_l - eta[0]) * w
            cur[batch, 1] += rate_r * (eta[n - 1] - tau_r) * w
        t_next = t + rng.standard_exponential() * w
        if t_next > t_end:
            t = t_end  # the jump falls past the horizon
            break
        t = t_next
        if ev < n_log:
            log_t[ev] = t
            log_id[ev] = k
        if k < nb:
            if measuring:
                for x in (k, k + 1):
                    acc[batch, x] += eta[x] * (clock - last[x])
                    last[x] = clock
            r = rng.random()
            s = eta[k] + eta[k + 1]
            eta[k] = r * s
            eta[k + 1] = s - eta[k]
        else:
            x = 0 if k == nb else n - 1
            if measuring:
                acc[batch, x] += eta[x] * (clock - last[x])
                last[x] = clock
            eta[x] = (tau_l if k == nb else tau_r) * rng.standard_exponential()
        ev += 1
    if batch >= 0:
        _flush_sites(acc[batch], eta, last, clock)
    return acc, weight, cur, log_t, log_id, t, ev, OK


# ---------------------------------------------------------------------------
# zero range


@numba.njit(cache=True)
def _g(k, g_tab, linear):
    if linear:
        return float(k)
    if k < g_tab.size:
        return g_tab[k]
    return g_tab[g_tab.size - 1]


@numba.njit(cache=True)
def _zr_kernel(eta, w_right, w_left, exit_l, exit_r, enter_l, enter_r, g_tab, linear, cap, rng, n_burn,
               n_events, t_end, by_time, burn_frac, n_batches, n_log, debug):
    n = eta.size
    n_ev = n + 2
    wsite = w_right + w_left
    wsite[0] += exit_l
    wsite[n - 1] += exit_r
    rates = np.zeros(n_ev)
    for x in range(n):
        rates[x] = _g(eta[x], g_tab, linear) * wsite[x]
    rates[n] = enter_l
    rates[n + 1] = enter_r
    tree = np.zeros(n_ev + 1)
    _fen_build(tree, rates)
    top = _top_bit(n_ev)

    acc = np.zeros((n_batches, n))
    weight = np.zeros(n_batches)
    cur = np.zeros((n_batches, 2))
    log_t = np.zeros(n_log)
    log_id = np.zeros(n_log, dtype=np.uint32)
    last = np.zeros(n)
    clock = 0.0
    t = 0.0
    t_burn = burn_frac * t_end
    t_per = (t_end - t_burn) / n_batches
    per = max((n_events - n_burn) // n_batches, 1)
    ev = 0
    batch = -1
    next_switch = -1.0
    since_rebuild = 0
    status = OK
    while ev < n_events and t < t_end:
        k, total = _pick(tree, rates, rng, top)
        measuring = (t >= t_burn) if by_time else (ev >= n_burn)
        if measuring:
            if (t if by_time else float(ev)) >= next_switch:
                b = _batch_index(ev, t, n_burn, per, t_burn, t_per, by_time, n_batches)
                if b != batch:
                    if batch >= 0:
                        _flush_sites(acc[batch], eta, last, clock)
                    batch = b
                    clock = 0.0
                    last[:] = 0.0
                next_switch = _next_switch(batch, n_burn, per, t_burn, t_per, by_time, n_batches)
            w = 1.0 / total
            clock += w
            weight[batch] += w
            cur[batch, 0] += (enter_l - exit_l * _g(eta[0], g_tab, linear)) * w
            cur[batch, 1] += (exit_r * _g(eta[n - 1], g_tab, linear) - enter_r) * w
        t_next = t + rng.standard_exponential() / total
        if t_next > t_end:
            t = t_end  # the jump falls past the horizon
            break
        t = t_next
        if ev < n_log:
            log_t[ev] = t
            log_id[ev] = k
        # event k < n: a particle leaves site k; then the destination
        if k < n:
            src = k
            u = rng.random() * wsite[k]
            if u < w_right[k]:
                dst = k + 1
            elif u < w_right[k] + w_left[k]:
                dst = k - 1
            else:
                dst = -1
        else:
            src = -1
            dst = 0 if k == n else n - 1
        for x in (src, dst):
            if x < 0:
                continue
            if measuring:
                acc[batch, x] += eta[x] * (clock - last[x])
                last[x] = clock
            eta[x] += 1 if x == dst else -1
            if eta[x] > cap:
                status = CAP_EXCEEDED
            _set_rate(tree, rates, x, _g(eta[x], g_tab, linear) * wsite[x])
        if status != OK:
            break
        ev += 1
        since_rebuild += 1
        if since_rebuild >= 1 << 20:
            _fen_build(tree, rates)
            since_rebuild = 0
        if debug:
            for x in range(n):
                if rates[x] != _g(eta[x], g_tab, linear) * wsite[x]:
                    return acc, weight, cur, log_t, log_id, t, ev, BOOKKEEPING
    if batch >= 0:
        _flush_sites(acc[batch], eta, last, clock)
    return acc, weight, cur, log_t, log_id, t, ev, status


# ---------------------------------------------------------------------------
# configuration and results


@dataclass
class MicroConfig:
    """One simulation run.

    The horizon is ``n_events`` events or macroscopic time ``t_end``,
    whichever comes first; burn-in and batches are counted in the one
    that is finite (events take precedence).
    """

    model: Model
    N: int
    drive: Drive
    seed: int = 0
    n_events: int | None = None
    t_end: float | None = None
    burn_in: float = 0.1
    n_batches: int = 32
    histogram: bool = False
    event_log: int = 0
    zr_cap: int = 10**6
    debug: bool = False
    initial: np.ndarray | None = None

    def __post_init__(self):
        if self.N < 3:
            raise ConfigError("N must be at least 3")
        if self.n_events is None and self.t_end is None:
            raise ConfigError("give n_events or t_end")
        if self.n_batches < 16:
            raise ConfigError("at least 16 batches are needed for standard errors")
        if not 0 <= self.burn_in < 1:
            raise ConfigError("burn_in is a fraction in [0, 1)")
        if np.ndim(self.drive.E) != 0:
            raise ConfigError("microscopic runs take a constant field")
        if self.histogram and self.N > MAX_HISTOGRAM_SITES:
            raise ConfigError(f"state histograms need N <= {MAX_HISTOGRAM_SITES}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @property
    def sites(self) -> np.ndarray:
        return (np.arange(self.N) + 0.5) / self.N

    def rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self.seed))


@dataclass
class EmpiricalProfile:
    """Time-averaged per-site density with batch-means standard errors.

    ``currents`` are the mean macroscopic influx at the left edge and
    outflux at the right edge.
    """

    x: np.ndarray
    batch_means: np.ndarray
    batch_weights: np.ndarray
    batch_currents: np.ndarray
    n_events: int
    time: float
    batch_histograms: np.ndarray | None = None
    event_log: tuple | None = field(default=None, repr=False)
    final_state: np.ndarray | None = field(default=None, repr=False)

    @staticmethod
    def _se(values):
        return np.std(values, axis=0, ddof=1) / np.sqrt(values.shape[0])

    @property
    def mean(self) -> np.ndarray:
        return self.batch_weights @ self.batch_means / self.batch_weights.sum()

    @property
    def stderr(self) -> np.ndarray:
        return self._se(self.batch_means)

    @property
    def currents(self) -> np.ndarray:
        return self.batch_weights @ self.batch_currents / self.batch_weights.sum()

    @property
    def currents_stderr(self) -> np.ndarray:
        return self._se(self.batch_currents)

    @property
    def state_law(self) -> np.ndarray:
        h = self.batch_histograms.sum(axis=0)
        return h / h.sum()

    def observable(self, values) -> tuple[float, float]:
        """Time average and standard error of a state function given on all ``2^N`` states."""
        per_batch = (self.batch_histograms @ values) / self.batch_histograms.sum(axis=1)
        return float(self.batch_weights @ per_batch / self.batch_weights.sum()), float(self._se(per_batch))

    def covariance(self, i: int, j: int) -> tuple[float, float]:
        """Covariance of the occupations of sites ``i`` and ``j``, computed per batch."""
        H = self.batch_histograms / self.batch_histograms.sum(axis=1, keepdims=True)
        states = np.arange(H.shape[1])
        a, b = (states >> i) & 1, (states >> j) & 1
        per_batch = H @ (a * b) - (H @ a) * (H @ b)
        return float(self.batch_weights @ per_batch / self.batch_weights.sum()), float(self._se(per_batch))

    def merge(self, other: "EmpiricalProfile") -> "EmpiricalProfile":
        """Pool the batches of two independent replicas."""
        hist = None
        if self.batch_histograms is not None and other.batch_histograms is not None:
            hist = np.vstack((self.batch_histograms, other.batch_histograms))
        return EmpiricalProfile(
            self.x,
            np.vstack((self.batch_means, other.batch_means)),
            np.concatenate((self.batch_weights, other.batch_weights)),
            np.vstack((self.batch_currents, other.batch_currents)),
            self.n_events + other.n_events,
            self.time + other.time,
            hist,
        )


def exclusion_tables(model: Model, N: int, drive: Drive):
    """Bulk jump rates per bond and boundary flip tables (including the factor ``N kappa``).

    The field is constant, so every bond has the same pair of rates.
    """
    bias = np.exp(0.5 * float(drive.E) / N)
    rate_r = np.full(N - 1, N**2 * bias)
    rate_l = np.full(N - 1, N**2 / bias)
    if isinstance(model, NonRevExclusion):
        tab_l = model.table("left") * N * drive.kappa_left
        tab_r = model.table("right") * N * drive.kappa_right
        return rate_r, rate_l, tab_l, tab_r, model.window
    if not isinstance(model, SEP):
        raise ConfigError(f"{model.kind} is not an exclusion model")
    tabs = []
    for side, inward in (("left", bias), ("right", 1.0 / bias)):
        r = float(model.R(drive.lam(side)))
        # configuration 0 (empty): creation; 1 (occupied): annihilation
        tabs.append(N * drive.kappa(side) * np.array([[r * inward, (1.0 - r) / inward]]))
    return rate_r, rate_l, tabs[0], tabs[1], 1


def _initial_state(config: MicroConfig, rng):
    if config.initial is not None:
        return np.array(config.initial).copy()
    model, N = config.model, config.N
    if isinstance(model, SEP):
        return (rng.random(N) < 0.5).astype(np.int64)
    if isinstance(model, KMP):
        tau = -1.0 / np.array([config.drive.lam_left, config.drive.lam_right])
        return np.full(N, tau.mean())
    return np.zeros(N, dtype=np.int64)


def _horizon(config):
    n_events = config.n_events if config.n_events is not None else np.iinfo(np.int64).max
    t_end = config.t_end if config.t_end is not None else np.inf
    by_time = config.n_events is None
    n_burn = 0 if by_time else int(config.burn_in * config.n_events)
    return n_burn, n_events, t_end, by_time


def simulate(config: MicroConfig) -> EmpiricalProfile:
    """Run one kinetic Monte Carlo simulation; deterministic given the config."""
    model, N, drive = config.model, config.N, config.drive
    rng = config.rng()
    eta = _initial_state(config, rng)
    n_burn, n_events, t_end, by_time = _horizon(config)
    B = config.n_batches
    hist = None
    if isinstance(model, SEP):
        rate_r, rate_l, tab_l, tab_r, ell = exclusion_tables(model, N, drive)
        rate_r, rate_l = float(rate_r[0]), float(rate_l[0])
        if 2 * ell > N:
            raise ConfigError("boundary windows overlap")
        eta = eta.astype(np.int64)
        acc, weight, cur, hist, log_t, log_id, t, ev, status = _exclusion_kernel(
            eta, rate_r, rate_l, tab_l, tab_r, ell, rng, n_burn, n_events, t_end, by_time,
            config.burn_in, B, config.histogram, config.event_log, config.debug,
        )
        hist = hist if config.histogram else None
    elif isinstance(model, KMP):
        tau_l, tau_r = -1.0 / drive.lam_left, -1.0 / drive.lam_right
        if drive.E != 0:
            raise ConfigError("the KMP model has no external field")
        eta = eta.astype(np.float64)
        acc, weight, cur, log_t, log_id, t, ev, status = _kmp_kernel(
            eta, 2.0 * N**2, N * drive.kappa_left, N * drive.kappa_right, tau_l, tau_r,
            rng, n_burn, n_events, t_end, by_time, config.burn_in, B, config.event_log,
        )
    elif isinstance(model, ZeroRange):
        bias = np.exp(0.5 * float(drive.E) / N)
        w_right = np.full(N, N**2 * bias)
        w_left = np.full(N, N**2 / bias)
        w_right[-1] = 0.0
        w_left[0] = 0.0
        linear = model.rate == "linear"
        # indexed by occupation, so g(0) = 0 goes first
        g_tab = np.array([0.0, 1.0]) if model.rate == "constant" else np.concatenate(([0.0], model.g_table))
        eta = eta.astype(np.int64)
        acc, weight, cur, log_t, log_id, t, ev, status = _zr_kernel(
            eta, w_right, w_left,
            N * drive.kappa_left / bias, N * drive.kappa_right * bias,
            N * drive.kappa_left * np.exp(drive.lam_left) * bias,
            N * drive.kappa_right * np.exp(drive.lam_right) / bias,
            g_tab, linear, config.zr_cap, rng, n_burn, n_events, t_end, by_time, config.burn_in, B,
            config.event_log, config.debug,
        )
        if status == CAP_EXCEEDED:
            raise ResourceError(f"a site exceeded the occupation cap {config.zr_cap}")
    else:
        raise ConfigError(f"no microscopic dynamics for {model.kind}")
    if status == BOOKKEEPING:
        raise StructureError(f"rate bookkeeping diverged from the configuration after {ev} events")
    if np.any(weight <= 0):
        raise ConfigError("horizon too short: some batches received no samples")
    means = acc / weight[:, None]
    currents = cur / weight[:, None] / N
    log = (log_t[:ev], log_id[:ev]) if config.event_log else None
    return EmpiricalProfile(config.sites, means, weight, currents, int(ev), float(t), hist, log, eta)


def write_event_log(path, log) -> None:
    """Little-endian records of (u64 time bits, u32 event id)."""
    times, ids = log
    rec = np.zeros(times.size, dtype=[("t", "<u8"), ("id", "<u4")])
    rec["t"] = times.astype("<f8").view("<u8")
    rec["id"] = ids
    rec.tofile(path)


def read_event_log(path):
    rec = np.fromfile(path, dtype=[("t", "<u8"), ("id", "<u4")])
    return rec["t"].view("<f8"), rec["id"].astype(np.uint32)


def replicas(config: MicroConfig, seeds, map_fn=map) -> EmpiricalProfile:
    """Independent runs with the given seeds, pooled."""
    from dataclasses import replace

    runs = list(map_fn(simulate, [replace(config, seed=int(s)) for s in seeds]))
    out = runs[0]
    for r in runs[1:]:
        out = out.merge(r)
    return out


# ---------------------------------------------------------------------------
# exact generator for small exclusion systems


@dataclass
class OracleResult:
    pi: np.ndarray
    marginals: np.ndarray
    currents: np.ndarray
    residual: float


def exclusion_generator(model: Model, N: int, drive: Drive) -> np.ndarray:
    """Dense rate matrix on ``{0,1}^N`` (state code ``sum eta_x 2^x``) with zero row sums."""
    rate_r, rate_l, tab_l, tab_r, ell = exclusion_tables(model, N, drive)
    S = 1 << N
    Q = np.zeros((S, S))
    for s in range(S):
        eta = (s >> np.arange(N)) & 1
        for b in range(N - 1):
            if eta[b] == 1 and eta[b + 1] == 0:
                Q[s, s ^ (3 << b)] += rate_r[b]
            elif eta[b] == 0 and eta[b + 1] == 1:
                Q[s, s ^ (3 << b)] += rate_l[b]
        cl = sum(int(eta[i]) << i for i in range(ell))
        cr = sum(int(eta[N - 1 - i]) << i for i in range(ell))
        for j in range(ell):
            Q[s, s ^ (1 << j)] += tab_l[j, cl]
            Q[s, s ^ (1 << (N - 1 - j))] += tab_r[j, cr]
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


def exact_generator_oracle(config: MicroConfig) -> OracleResult:
    """Stationary law of a small exclusion system by dense linear algebra."""
    model, N, drive = config.model, config.N, config.drive
    if not isinstance(model, SEP):
        raise ConfigError("the exact oracle covers exclusion models only")
    if N > MAX_ORACLE_SITES:
        raise ConfigError(f"the exact oracle needs N <= {MAX_ORACLE_SITES}")
    Q = exclusion_generator(model, N, drive)
    n_comp, _ = csgraph.connected_components(csr_matrix(Q != 0), directed=True, connection="strong")
    if n_comp != 1:
        raise StructureError(f"the chain is reducible ({n_comp} communicating classes)")
    S = Q.shape[0]
    A = Q.T.copy()
    A[-1, :] = 1.0
    rhs = np.zeros(S)
    rhs[-1] = 1.0
    pi = linalg.solve(A, rhs)
    bits = (np.arange(S)[:, None] >> np.arange(N)) & 1
    _, _, tab_l, tab_r, ell = exclusion_tables(model, N, drive)
    net_l = np.zeros(S)
    net_r = np.zeros(S)
    for s in range(S):
        eta = bits[s]
        cl = sum(int(eta[i]) << i for i in range(ell))
        cr = sum(int(eta[N - 1 - i]) << i for i in range(ell))
        net_l[s] = sum(tab_l[j, cl] * (1 - 2 * eta[j]) for j in range(ell))
        net_r[s] = -sum(tab_r[j, cr] * (1 - 2 * eta[N - 1 - j]) for j in range(ell))
    currents = np.array([pi @ net_l, pi @ net_r]) / N
    return OracleResult(pi, pi @ bits, currents, float(np.max(np.abs(pi @ Q))))


def total_variation(p, q) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))


# ---------------------------------------------------------------------------
# zero range fugacities


@dataclass
class ZRFugacity:
    phi: np.ndarray

    @property
    def lam(self) -> np.ndarray:
        return np.log(self.phi)

    def means(self, model: ZeroRange) -> np.ndarray:
        return model.R(self.lam)


def zr_discrete_phi(N: int, lam_left: float, lam_right: float, E: float = 0.0,
                    kappa_left: float = 1.0, kappa_right: float = 1.0) -> ZRFugacity:
    """Site fugacities of the product stationary law of the zero-range chain.

    Balance of the mean flux through every site, with fugacity ``exp(lam)``
    outside the lattice.  Rates as in :func:`simulate`.
    """
    if N < 3:
        raise ConfigError("N must be at least 3")
    bias = np.exp(0.5 * E / N)
    up, down = N**2 * bias, N**2 / bias
    A = np.zeros((N, N))
    rhs = np.zeros(N)
    for x in range(N):
        if x + 1 < N:
            A[x, x] += up
            A[x + 1, x] -= up
        if x > 0:
            A[x, x] += down
            A[x - 1, x] -= down
    A[0, 0] += N * kappa_left / bias
    A[-1, -1] += N * kappa_right * bias
    rhs[0] = N * kappa_left * np.exp(lam_left) * bias
    rhs[-1] = N * kappa_right * np.exp(lam_right) / bias
    # row x: outflow of x minus inflow into x from its neighbours equals the reservoir inflow
    try:
        lu = linalg.lu_factor(A, check_finite=True)
        if np.min(np.abs(np.diag(lu[0]))) < 1e-14 * np.max(np.abs(A)):
            raise linalg.LinAlgError
        phi = linalg.lu_solve(lu, rhs)
    except linalg.LinAlgError as exc:
        raise StructureError("singular fugacity system") from exc
    return ZRFugacity(phi)
