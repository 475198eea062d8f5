"""Single-site thermodynamics and boundary functionals of the lattice gases.

Each model carries the exponential family of single-site measures
``m_lambda`` (partition function ``Z``, mean ``R`` and its inverse ``xi``),
the free energy density ``f`` (Legendre transform of ``log Z``), the
transport coefficients ``D`` and ``sigma`` tied by the Einstein relation
``D = sigma * f''``, the primitive ``d`` of ``D`` and the boundary
Hamiltonian ``M(p)`` that encodes the exchange with a reservoir.

All methods are vectorised over numpy arrays.  Densities must lie in the
open state interval; chemical potentials in the admissible set of the
model, otherwise :class:`~weakcontact.errors.DomainError` is raised.

The module level functions (``partition_Z``, ``mean_R``, ...) are thin
wrappers around the methods and form the public catalogue.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import ClassVar

import numpy as np
from scipy import optimize, special

from .errors import ConvergenceError, DomainError, PoleError

SERIES_KMAX = 200
SERIES_TAIL = 1e-14
MAX_WINDOW = 12


@dataclass(frozen=True)
class StateInterval:
    """Convex envelope of the single-site state space."""

    lo: float
    hi: float

    def contains(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        return (rho > self.lo) & (rho < self.hi) & np.isfinite(rho)


def _arr(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


class Model:
    """Common interface; concrete models override the closed forms."""

    kind: ClassVar[str] = ""
    reversible: ClassVar[bool] = True

    # -- admissibility -------------------------------------------------
    @property
    def interval(self) -> StateInterval:
        raise NotImplementedError

    def lambda_ok(self, lam) -> np.ndarray:
        return np.isfinite(_arr(lam))

    def check_density(self, rho) -> np.ndarray:
        rho = _arr(rho)
        if not np.all(self.interval.contains(rho)):
            raise DomainError(
                f"{self.kind}: density outside ({self.interval.lo}, {self.interval.hi})"
            )
        return rho

    def check_lambda(self, lam) -> np.ndarray:
        lam = _arr(lam)
        if not np.all(self.lambda_ok(lam)):
            raise DomainError(f"{self.kind}: chemical potential not admissible: {lam}")
        return lam

    # -- single-site family --------------------------------------------
    def Z(self, lam):
        raise NotImplementedError

    def R(self, lam):
        raise NotImplementedError

    def R_prime(self, lam):
        """Variance of ``m_lambda``, i.e. ``R'(lambda)``."""
        raise NotImplementedError

    def xi(self, rho):
        raise NotImplementedError

    def f(self, rho):
        lam = self.xi(rho)
        return lam * _arr(rho) - np.log(self.Z(lam))

    def fprime(self, rho):
        return self.xi(rho)

    def fsecond(self, rho):
        return 1.0 / self.R_prime(self.xi(rho))

    # -- transport -----------------------------------------------------
    def D(self, rho):
        raise NotImplementedError

    def sigma(self, rho):
        raise NotImplementedError

    def sigma_prime(self, rho):
        raise NotImplementedError

    def d(self, rho):
        raise NotImplementedError

    # -- boundary Hamiltonian ------------------------------------------
    def M(self, lam, rho, p, side: str = "left"):
        raise NotImplementedError

    def M_p(self, lam, rho, p, side: str = "left"):
        raise NotImplementedError

    def M_pp(self, lam, rho, p, side: str = "left"):
        raise NotImplementedError

    def M_p0(self, lam, rho, side: str = "left"):
        return self.M_p(lam, rho, 0.0, side)

    def momentum_domain(self, lam, rho):
        """Open interval of ``p`` on which ``M`` is finite."""
        shape = np.broadcast(_arr(lam), _arr(rho)).shape
        return np.full(shape, -np.inf), np.full(shape, np.inf)

    def robin_F_flux(self, lam, rho, F, side: str = "left"):
        """Boundary flux row of the auxiliary-profile equation.

        Returns ``sigma(F) * M_{lam,rho}(f'(rho) - f'(F)) / (d(rho) - d(F))``,
        which at ``F = rho`` reduces to ``M'_{lam,rho}(0)``.
        """
        rho, F = np.broadcast_arrays(_arr(rho), _arr(F))
        gap = self.d(rho) - self.d(F)
        small = np.abs(gap) < 1e-8
        safe = np.where(small, 1.0, gap)
        exact = self.sigma(F) * self.M(lam, rho, self.fprime(rho) - self.fprime(F), side) / safe
        limit = self.M_p0(lam, rho, side) * self.sigma(F) / self.sigma(rho)
        return np.where(small, limit, exact)

    def __str__(self) -> str:
        return self.kind


# ---------------------------------------------------------------------------
# Exclusion


@dataclass(frozen=True)
class SEP(Model):
    """Symmetric simple exclusion with birth and death at the boundary."""

    kind: ClassVar[str] = "SEP"

    @property
    def interval(self):
        return StateInterval(0.0, 1.0)

    def Z(self, lam):
        return 1.0 + np.exp(self.check_lambda(lam))

    def R(self, lam):
        return special.expit(self.check_lambda(lam))

    def R_prime(self, lam):
        r = self.R(lam)
        return r * (1.0 - r)

    def xi(self, rho):
        return special.logit(self.check_density(rho))

    def f(self, rho):
        rho = self.check_density(rho)
        return special.xlogy(rho, rho) + special.xlogy(1.0 - rho, 1.0 - rho)

    def fsecond(self, rho):
        rho = self.check_density(rho)
        return 1.0 / (rho * (1.0 - rho))

    def D(self, rho):
        return np.ones_like(self.check_density(rho))

    def sigma(self, rho):
        rho = self.check_density(rho)
        return rho * (1.0 - rho)

    def sigma_prime(self, rho):
        return 1.0 - 2.0 * self.check_density(rho)

    def d(self, rho):
        return _arr(rho).copy()

    def _rates(self, lam, side):
        r = self.R(lam)
        return r, 1.0 - r

    def M(self, lam, rho, p, side="left"):
        up, down = self._rates(lam, side)
        rho, p = _arr(rho), _arr(p)
        return (1.0 - rho) * up * np.expm1(p) + rho * down * np.expm1(-p)

    def M_p(self, lam, rho, p, side="left"):
        up, down = self._rates(lam, side)
        rho, p = _arr(rho), _arr(p)
        return (1.0 - rho) * up * np.exp(p) - rho * down * np.exp(-p)

    def M_pp(self, lam, rho, p, side="left"):
        up, down = self._rates(lam, side)
        rho, p = _arr(rho), _arr(p)
        return (1.0 - rho) * up * np.exp(p) + rho * down * np.exp(-p)

    def robin_F_flux(self, lam, rho, F, side="left"):
        # sigma(F)/(rho-F) * M_rho(f'(rho)-f'(F)) = M'_F(0) for exclusion
        return np.broadcast_to(self.M_p0(lam, F, side), np.broadcast(_arr(rho), _arr(F)).shape)


@dataclass(frozen=True)
class NonRevExclusion(SEP):
    """Exclusion bulk with boundary flips driven by window-dependent rates.

    ``left[j][c]`` is the rate (before the factor ``N``) of flipping the
    ``j``-th site counted from the left edge when the ``window`` sites
    nearest to that edge are in configuration ``c`` (bit ``i`` of ``c`` is
    the occupation of the ``i``-th nearest site).  ``right`` is the mirror
    image.  The chemical potential arguments of the boundary functionals
    are ignored: the rate tables play the role of the reservoirs.
    """

    window: int = 1
    left: tuple = ((0.5, 0.5),)
    right: tuple = ((0.5, 0.5),)

    kind: ClassVar[str] = "NonRevExclusion"
    reversible: ClassVar[bool] = False

    def __post_init__(self):
        if not 1 <= self.window <= MAX_WINDOW:
            raise DomainError(f"window must be in [1, {MAX_WINDOW}]")
        for name in ("left", "right"):
            table = np.asarray(getattr(self, name), dtype=float)
            if table.shape != (self.window, 2**self.window):
                raise DomainError(f"{name} table must have shape ({self.window}, {2**self.window})")
            if np.any(table < 0) or not np.all(np.isfinite(table)):
                raise DomainError("rates must be finite and nonnegative")
            if not np.any(table > 0):
                raise DomainError(f"{name} boundary has no positive rate (chain reducible)")
            object.__setattr__(self, name, tuple(tuple(float(v) for v in row) for row in table))

    @classmethod
    def example(cls) -> "NonRevExclusion":
        """Two-site windows whose boundary law is not Bernoulli."""
        left = (
            (1.0, 0.2, 3.0, 0.5),  # flip nearest site, depends on its neighbour
            (0.5, 0.5, 0.1, 0.1),  # flip second site, depends on the nearest one
        )
        right = (
            (0.3, 1.5, 0.1, 2.5),
            (0.2, 0.2, 0.6, 0.6),
        )
        return cls(window=2, left=left, right=right)

    def table(self, side: str) -> np.ndarray:
        return np.asarray(self.left if side == "left" else self.right, dtype=float)

    @cached_property
    def _bits(self) -> np.ndarray:
        configs = np.arange(2**self.window)
        return (configs[:, None] >> np.arange(self.window)) & 1

    def _bernoulli(self, rho) -> np.ndarray:
        rho = _arr(rho)[..., None]
        ones = self._bits.sum(axis=1)
        return rho**ones * (1.0 - rho) ** (self.window - ones)

    def R_pm(self, rho, side: str = "left"):
        """Expected creation (``+``) and annihilation (``-``) rates under ``nu_rho``."""
        rho = self.check_density(rho)
        table = self.table(side)
        weights = self._bernoulli(rho)
        configs = np.arange(2**self.window)
        plus = np.zeros(rho.shape)
        minus = np.zeros(rho.shape)
        for j in range(self.window):
            plus = plus + weights @ table[j, configs & ~(1 << j)]
            minus = minus + weights @ table[j, configs | (1 << j)]
        return plus, minus

    def _rates(self, lam, side):
        raise NotImplementedError  # density dependent, see R_pm

    def M(self, lam, rho, p, side="left"):
        up, down = self.R_pm(rho, side)
        rho, p = _arr(rho), _arr(p)
        return (1.0 - rho) * up * np.expm1(p) + rho * down * np.expm1(-p)

    def M_p(self, lam, rho, p, side="left"):
        up, down = self.R_pm(rho, side)
        rho, p = _arr(rho), _arr(p)
        return (1.0 - rho) * up * np.exp(p) - rho * down * np.exp(-p)

    def M_pp(self, lam, rho, p, side="left"):
        up, down = self.R_pm(rho, side)
        rho, p = _arr(rho), _arr(p)
        return (1.0 - rho) * up * np.exp(p) + rho * down * np.exp(-p)

    def robin_F_flux(self, lam, rho, F, side="left"):
        raise DomainError("no auxiliary-profile equation for non-reversible boundaries")

    def rest_density(self, side: str = "left") -> float:
        """Density at which the boundary produces no mean current."""
        lo, hi = 1e-12, 1.0 - 1e-12
        g = lambda r: float(self.M_p0(0.0, r, side))
        if g(lo) * g(hi) > 0:
            raise DomainError("boundary current does not change sign on (0, 1)")
        return optimize.brentq(g, lo, hi, xtol=1e-15, rtol=1e-15)

    def naive_equilibrium_violation(self, side: str = "left", n: int = 201):
        """Largest ``|M_rho(f'(rho) - lambda*)|`` over a density grid.

        ``lambda* = f'(rho*)`` with ``rho*`` the rest density of the boundary.
        For a reversible boundary this vanishes identically.
        """
        lam_star = float(special.logit(self.rest_density(side)))
        rho = np.linspace(0.02, 0.98, n)
        values = self.M(0.0, rho, special.logit(rho) - lam_star, side)
        k = int(np.argmax(np.abs(values)))
        return float(rho[k]), float(values[k])


# ---------------------------------------------------------------------------
# Zero range


def _rate_table(rate) -> np.ndarray:
    if rate == "linear":
        return np.arange(1.0, SERIES_KMAX + 1.0)
    if rate == "constant":
        return np.ones(SERIES_KMAX)
    return np.asarray(rate, dtype=float)


@dataclass(frozen=True)
class ZeroRange(Model):
    """Zero-range process with jump rate ``g(k)``.

    ``rate`` is ``"linear"`` (``g(k) = k``), ``"constant"`` (``g(k) = 1`` for
    ``k >= 1``) or a tuple ``(g(1), ..., g(K))`` with ``K <= 200``.  The first
    two have closed forms; tabulated rates use the truncated series for
    ``Z`` with a geometric tail bound, treating ``g(k) = g(K)`` beyond the
    table.
    """

    rate: object = "linear"

    kind: ClassVar[str] = "ZeroRange"

    def __post_init__(self):
        if isinstance(self.rate, str):
            if self.rate not in ("linear", "constant"):
                raise DomainError(f"unknown zero-range rate {self.rate!r}")
            return
        table = np.asarray(self.rate, dtype=float)
        if table.ndim != 1 or not 1 <= table.size <= SERIES_KMAX:
            raise DomainError(f"tabulated rate must list g(1..K) with K <= {SERIES_KMAX}")
        if np.any(table <= 0) or not np.all(np.isfinite(table)):
            raise DomainError("tabulated rates must be positive")
        object.__setattr__(self, "rate", tuple(float(v) for v in table))

    @property
    def tabulated(self) -> bool:
        return not isinstance(self.rate, str)

    @cached_property
    def g_table(self) -> np.ndarray:
        return _rate_table(self.rate)

    def g(self, k):
        """Jump rate ``g(k)`` for integer occupations (``g(0) = 0``)."""
        k = np.asarray(k, dtype=np.int64)
        table = self.g_table
        idx = np.clip(k, 1, table.size) - 1
        return np.where(k <= 0, 0.0, table[idx])

    @cached_property
    def lambda_c(self) -> float:
        if self.rate == "linear":
            return np.inf
        if self.rate == "constant":
            return 0.0
        return float(np.log(self.g_table[-1]))

    @cached_property
    def _log_gfact(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(np.log(self.g_table))))

    def lambda_ok(self, lam):
        lam = _arr(lam)
        return np.isfinite(lam) & (lam < self.lambda_c)

    def series(self, lam):
        """``(log Z, mean, variance)`` from the truncated series.

        Raises :class:`ConvergenceError` when the tail bound exceeds the
        relative tolerance.
        """
        lam = self.check_lambda(lam)
        k = np.arange(self._log_gfact.size, dtype=float)
        logt = lam[..., None] * k - self._log_gfact
        logz = special.logsumexp(logt, axis=-1)
        w = np.exp(logt - logz[..., None])
        mean = w @ k
        var = w @ k**2 - mean**2
        q = np.exp(lam - np.log(self.g_table[-1]))
        tail = np.where(q < 1, w[..., -1] * q / np.maximum(1.0 - q, 1e-300), np.inf)
        if np.any(tail > SERIES_TAIL):
            raise ConvergenceError(
                f"zero-range series not converged within {k.size - 1} terms at lambda={lam}"
            )
        return logz, mean, var

    def Z(self, lam):
        lam = self.check_lambda(lam)
        if self.rate == "linear":
            return np.exp(np.exp(lam))
        if self.rate == "constant":
            return 1.0 / -np.expm1(lam)
        return np.exp(self.series(lam)[0])

    def R(self, lam):
        lam = self.check_lambda(lam)
        if self.rate == "linear":
            return np.exp(lam)
        if self.rate == "constant":
            return np.exp(lam) / -np.expm1(lam)
        return self.series(lam)[1]

    def R_prime(self, lam):
        lam = self.check_lambda(lam)
        if self.rate == "linear":
            return np.exp(lam)
        if self.rate == "constant":
            return np.exp(lam) / np.expm1(lam) ** 2
        return self.series(lam)[2]

    @cached_property
    def rho_max(self) -> float:
        if not self.tabulated:
            return np.inf
        hi = self.lambda_c
        lo = hi - 60.0
        for _ in range(200):  # largest lambda whose series passes the tail test
            mid = 0.5 * (lo + hi)
            try:
                self.series(mid)
                lo = mid
            except ConvergenceError:
                hi = mid
            if hi - lo < 1e-10:
                break
        object.__setattr__(self, "_lambda_hi", lo)
        return float(self.series(lo)[1])

    @property
    def interval(self):
        return StateInterval(0.0, self.rho_max)

    def xi(self, rho):
        rho = self.check_density(rho)
        if self.rate == "linear":
            return np.log(rho)
        if self.rate == "constant":
            return np.log(rho / (1.0 + rho))
        hi = getattr(self, "_lambda_hi")
        out = np.empty_like(rho)
        for i, r in np.ndenumerate(rho):
            lo = np.log(r / self.g_table[0]) - 1.0
            while self.series(lo)[1] >= r:
                lo -= 5.0
            target = lambda lam: float(self.series(lam)[1]) - r
            lam = optimize.brentq(target, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
            _, mean, var = self.series(lam)
            out[i] = lam - (float(mean) - r) / float(var)
        return out

    def f(self, rho):
        rho = self.check_density(rho)
        if self.rate == "linear":
            return rho * np.log(rho) - rho
        if self.rate == "constant":
            return rho * np.log(rho / (1.0 + rho)) - np.log1p(rho)
        return super().f(rho)

    def fsecond(self, rho):
        rho = self.check_density(rho)
        if self.rate == "linear":
            return 1.0 / rho
        if self.rate == "constant":
            return 1.0 / (rho * (1.0 + rho))
        return super().fsecond(rho)

    def phi(self, rho):
        """Fugacity profile ``exp(xi(rho))``, also the mean jump rate."""
        rho = self.check_density(rho)
        if self.rate == "linear":
            return rho.copy()
        if self.rate == "constant":
            return rho / (1.0 + rho)
        return np.exp(self.xi(rho))

    def D(self, rho):
        rho = self.check_density(rho)
        if self.rate == "linear":
            return np.ones_like(rho)
        if self.rate == "constant":
            return 1.0 / (1.0 + rho) ** 2
        return self.phi(rho) * self.fsecond(rho)

    def sigma(self, rho):
        return self.phi(rho)

    def sigma_prime(self, rho):
        return self.D(rho)

    def d(self, rho):
        return self.phi(rho)

    def M(self, lam, rho, p, side="left"):
        p = _arr(p)
        return np.exp(self.check_lambda(lam)) * np.expm1(p) + self.phi(rho) * np.expm1(-p)

    def M_p(self, lam, rho, p, side="left"):
        p = _arr(p)
        return np.exp(self.check_lambda(lam)) * np.exp(p) - self.phi(rho) * np.exp(-p)

    def M_pp(self, lam, rho, p, side="left"):
        p = _arr(p)
        return np.exp(self.check_lambda(lam)) * np.exp(p) + self.phi(rho) * np.exp(-p)

    def robin_F_flux(self, lam, rho, F, side="left"):
        return np.broadcast_to(self.M_p0(lam, F, side), np.broadcast(_arr(rho), _arr(F)).shape)


# ---------------------------------------------------------------------------
# KMP


@dataclass(frozen=True)
class KMP(Model):
    """Energy-redistribution model; ``lambda < 0`` and ``tau = -1/lambda``."""

    kind: ClassVar[str] = "KMP"

    @property
    def interval(self):
        return StateInterval(0.0, np.inf)

    def lambda_ok(self, lam):
        lam = _arr(lam)
        return np.isfinite(lam) & (lam < 0)

    def Z(self, lam):
        return -1.0 / self.check_lambda(lam)

    def R(self, lam):
        return -1.0 / self.check_lambda(lam)

    def R_prime(self, lam):
        return 1.0 / self.check_lambda(lam) ** 2

    def xi(self, rho):
        return -1.0 / self.check_density(rho)

    def f(self, rho):
        return -1.0 - np.log(self.check_density(rho))

    def fsecond(self, rho):
        return 1.0 / self.check_density(rho) ** 2

    def D(self, rho):
        return np.ones_like(self.check_density(rho))

    def sigma(self, rho):
        return self.check_density(rho) ** 2

    def sigma_prime(self, rho):
        return 2.0 * self.check_density(rho)

    def d(self, rho):
        return _arr(rho).copy()

    def momentum_domain(self, lam, rho):
        tau, rho = np.broadcast_arrays(self.R(lam), self.check_density(rho))
        return -1.0 / rho, 1.0 / tau

    def _parts(self, lam, rho, p):
        tau = self.R(lam)
        rho = self.check_density(rho)
        p = _arr(p)
        tau, rho, p = np.broadcast_arrays(tau, rho, p)
        inside = (p > -1.0 / rho) & (p < 1.0 / tau)
        a = np.where(inside, 1.0 - tau * p, 1.0)
        b = np.where(inside, 1.0 + rho * p, 1.0)
        return tau, rho, p, inside, a, b

    def M(self, lam, rho, p, side="left"):
        tau, rho, p, inside, a, b = self._parts(lam, rho, p)
        val = (tau * (tau * p / a) + rho * (-rho * p / b)) / (rho + tau)
        return np.where(inside, val, np.inf)

    def M_p(self, lam, rho, p, side="left"):
        tau, rho, p, inside, a, b = self._parts(lam, rho, p)
        val = (tau**2 / a**2 - rho**2 / b**2) / (rho + tau)
        return np.where(inside, val, np.nan)

    def M_pp(self, lam, rho, p, side="left"):
        tau, rho, p, inside, a, b = self._parts(lam, rho, p)
        val = 2.0 * (tau**3 / a**3 + rho**3 / b**3) / (rho + tau)
        return np.where(inside, val, np.nan)

    def M_p0(self, lam, rho, side="left"):
        return self.R(lam) - self.check_density(rho)

    def robin_F_flux(self, lam, rho, F, side="left"):
        tau = self.R(lam)
        rho, F = self.check_density(rho), self.check_density(F)
        return F**2 * (tau - F) / (rho * F - tau * rho + tau * F)


# ---------------------------------------------------------------------------
# construction and public catalogue


def make_model(kind: str, **params) -> Model:
    """Build a model from its kind name and parameters."""
    kinds = {"SEP": SEP, "ZeroRange": ZeroRange, "KMP": KMP, "NonRevExclusion": NonRevExclusion}
    if kind not in kinds:
        raise DomainError(f"unknown model kind {kind!r}")
    if kind == "NonRevExclusion" and not params:
        return NonRevExclusion.example()
    return kinds[kind](**params)


def partition_Z(model: Model, lam):
    return model.Z(lam)


def mean_R(model: Model, lam):
    return model.R(lam)


def xi_inverse(model: Model, rho):
    return model.xi(rho)


def free_energy(model: Model, rho):
    return model.f(rho)


def free_energy_prime(model: Model, rho):
    return model.fprime(rho)


def transport(model: Model, rho):
    """``(D, sigma, d)`` at ``rho``."""
    return model.D(rho), model.sigma(rho), model.d(rho)


def boundary_M(model: Model, lam, rho, p, side: str = "left"):
    """Boundary Hamiltonian; raises :class:`PoleError` where it is infinite."""
    value = model.M(lam, rho, p, side)
    if np.any(np.isposinf(value)):
        raise PoleError(f"{model.kind}: momentum outside the finite domain of M")
    return value


def boundary_M_prime0(model: Model, lam, rho, side: str = "left"):
    return model.M_p0(lam, rho, side)


def boundary_A(model: Model, lam, rho, p, kappa, side: str = "left"):
    """First-order Taylor remainder ``kappa [M(p) - M(0) - p M'(0)] >= 0``."""
    p = _arr(p)
    return _arr(kappa) * (boundary_M(model, lam, rho, p, side) - p * model.M_p0(lam, rho, side))


def boundary_C0(model: Model, lam_range, rho_range, n: int = 41, side: str = "left") -> float:
    """Sup of ``M''`` over ``|p| <= 1`` and the given parameter boxes, by sampling.

    For KMP the box must keep ``[-1, 1]`` inside the pole interval.
    """
    lam = np.linspace(*lam_range, n)[:, None, None]
    rho = np.linspace(*rho_range, n)[None, :, None]
    p = np.linspace(-1.0, 1.0, 4 * n + 1)[None, None, :]
    lo, hi = model.momentum_domain(lam, rho)
    if np.any(lo >= -1.0) or np.any(hi <= 1.0):
        raise DomainError("sampling box reaches a pole of M within |p| <= 1")
    return float(np.max(model.M_pp(lam, rho, p, side)))


# ---------------------------------------------------------------------------
# identity suite


def _sample(model: Model, rng: np.random.Generator, n: int):
    if isinstance(model, KMP):
        lam = -rng.uniform(0.2, 3.0, n)
        rho = rng.uniform(0.2, 4.0, (2, n))
    elif isinstance(model, ZeroRange):
        if model.rate == "constant" or model.tabulated:
            lam = -rng.uniform(0.1, 3.0, n)
            rho = model.R(-rng.uniform(0.1, 3.0, (2, n)))
        else:
            lam = rng.uniform(-2.0, 2.0, n)
            rho = rng.uniform(0.1, 5.0, (2, n))
    else:
        lam = rng.uniform(-3.0, 3.0, n)
        rho = rng.uniform(0.02, 0.98, (2, n))
    return lam, rho[0], rho[1]


def _finite(x):
    # both sides are +inf together outside the pole interval of KMP
    return np.where(np.isnan(x), 0.0, x)


def identity_residuals(model: Model, n: int = 100, seed: int = 0) -> dict[str, float]:
    """Worst-case residuals of the boundary and transport identities.

    Keys: ``rest_point`` (``M`` vanishes at ``f'(rho) - lambda``),
    ``reflection`` (``M(f'(rho) - f'(q)) = M(f'(q) - lambda)``),
    ``robin_rewrite`` (``sigma(q) M(f'(rho) - f'(q)) / (d(rho) - d(q)) =
    M'_q(0)``, exclusion and zero range only), ``einstein``
    (``D - sigma f''``) and ``sign``
    (largest value of ``(f'(rho) - lambda) M'(0)`` which must be negative;
    reported as the maximum, so a negative number means the property holds).
    """
    if not model.reversible:
        raise DomainError("identity suite applies to reversible boundaries")
    rng = np.random.default_rng(seed)
    lam, rho, q = _sample(model, rng, n)
    fp = model.fprime
    with np.errstate(invalid="ignore"):
        reflected = _finite(model.M(lam, rho, fp(rho) - fp(q)) - model.M(lam, rho, fp(q) - lam))
    out = {
        "rest_point": float(np.max(np.abs(model.M(lam, rho, fp(rho) - lam)))),
        "reflection": float(np.max(np.abs(reflected))),
        "einstein": float(np.max(np.abs(model.D(rho) - model.sigma(rho) * model.fsecond(rho)))),
    }
    if isinstance(model, (SEP, ZeroRange)):
        lhs = model.sigma(q) / (model.d(rho) - model.d(q)) * model.M(lam, rho, fp(rho) - fp(q))
        out["robin_rewrite"] = float(np.max(np.abs(lhs - model.M_p0(lam, q))))
    off = np.abs(fp(rho) - lam) > 1e-8
    out["sign"] = float(np.max(((fp(rho) - lam) * model.M_p0(lam, rho))[off]))
    return out

