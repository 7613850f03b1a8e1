"""Thermodynamics of the two reference Gibbs families.

``-`` is the free (simple exclusion) family with product Bernoulli measures,
``+`` the nearest-neighbour family with energy ``q * eta_x * eta_{x+1}``.
For ``+`` everything is read off the 2x2 transfer matrix

    T(a, b) = exp(-q a b + lam (a + b) / 2),   a, b in {0, 1}

whose Perron eigenvalue gives the pressure.  Writing ``A = T(0,0)``,
``B = T(0,1)``, ``C = T(1,1)``, ``delta = C - A`` and
``s = sqrt(delta**2 + 4 B**2)``, the density is ``(1 + delta/s) / 2`` and the
logit of the density has derivative ``(A + C) / s`` in ``lam``.  The kernels
below evaluate these with the entries rescaled so nothing overflows.

The flux function ``phi`` uses the closed form for ``theta = 1`` rewritten
without the ``1/r`` cancellation and gauged to ``phi(0) = 0``; general
``theta > 0`` follows from ``phi_theta(rho) = theta * phi_1(rho; alpha/theta, beta/theta)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy.special import expit, gammaln, logit

from .model import ModelParams

__all__ = [
    "pressure_minus",
    "pressure_plus",
    "rho_of_lambda",
    "lambda_of_rho",
    "susceptibility",
    "phi",
    "phi_unit",
    "q_of_rho",
    "canonical_log_partition",
    "canonical_log_partitions",
    "grand_log_partition",
    "EnsembleTable",
    "RHO_CLAMP",
]

# densities handed to the inverse maps are clamped into [RHO_CLAMP, 1 - RHO_CLAMP]
RHO_CLAMP = 1e-9

_BRACKET = 40.0


def _check_family(family):
    if family not in ("+", "-"):
        raise ValueError(f"family must be '+' or '-', got {family!r}")


# ---------------------------------------------------------------------------
# scalar kernels for the "+" family


@numba.njit(cache=True, nogil=True)
def _scaled_entries(lam, q):
    m = max(0.0, lam - q, 0.5 * lam)
    a = math.exp(-m)
    b = math.exp(0.5 * lam - m)
    c = math.exp(lam - q - m)
    return m, a, b, c


@numba.njit(cache=True, nogil=True)
def _pressure_plus_k(lam, q):
    m, a, b, c = _scaled_entries(lam, q)
    d = c - a
    s = math.hypot(d, 2.0 * b)
    return m + math.log(0.5 * (a + c + s))


@numba.njit(cache=True, nogil=True)
def _rho_plus_k(lam, q):
    m, a, b, c = _scaled_entries(lam, q)
    d = c - a
    s = math.hypot(d, 2.0 * b)
    if d >= 0.0:
        return (s + d) / (2.0 * s)
    return 2.0 * b * b / (s * (s - d))


@numba.njit(cache=True, nogil=True)
def _chi_plus_k(lam, q):
    m, a, b, c = _scaled_entries(lam, q)
    d = c - a
    s = math.hypot(d, 2.0 * b)
    return b * b * (a + c) / (s * s * s)


@numba.njit(cache=True, nogil=True)
def _logit_rho_plus_k(lam, q):
    """Returns (logit of the density, its derivative in lam)."""
    m, a, b, c = _scaled_entries(lam, q)
    d = c - a
    s = math.hypot(d, 2.0 * b)
    if d >= 0.0:
        lg = 2.0 * math.log((s + d) / (2.0 * b))
    else:
        lg = 2.0 * math.log(2.0 * b / (s - d))
    return lg, (a + c) / s


@numba.njit(cache=True, nogil=True)
def _rho_k(lam, family_plus, q):
    if family_plus:
        return _rho_plus_k(lam, q)
    if lam >= 0.0:
        return 1.0 / (1.0 + math.exp(-lam))
    e = math.exp(lam)
    return e / (1.0 + e)


@numba.njit(cache=True, nogil=True)
def _lambda_plus_k(rho, q):
    target = math.log(rho / (1.0 - rho))
    lo = -_BRACKET
    hi = _BRACKET
    while _logit_rho_plus_k(lo, q)[0] > target:
        lo *= 2.0
    while _logit_rho_plus_k(hi, q)[0] < target:
        hi *= 2.0
    lam = min(max(target + 0.0, lo), hi)
    for _ in range(200):
        g, dg = _logit_rho_plus_k(lam, q)
        g -= target
        if g == 0.0:
            return lam
        if g > 0.0:
            hi = lam
        else:
            lo = lam
        new = lam - g / dg
        if not (lo < new < hi):
            new = 0.5 * (lo + hi)
        if abs(new - lam) <= 4e-16 * max(1.0, abs(lam)):
            return new
        lam = new
    return lam


@numba.njit(cache=True, nogil=True)
def _lambda_k(rho, family_plus, q):
    if family_plus:
        return _lambda_plus_k(rho, q)
    return math.log(rho / (1.0 - rho))


@numba.njit(cache=True, nogil=True)
def _phi_unit_k(rho, alpha, beta):
    # closed form at theta = 1 with phi(0) = 0; finite also at r = 0
    r = (alpha - beta) / (1.0 + alpha)
    p = rho * (1.0 - rho)
    s = math.sqrt(1.0 - 4.0 * r * p)
    return 2.0 * rho * ((1.0 + alpha) - 2.0 * alpha * (1.0 - rho) / (1.0 + s)) / (1.0 + s)


@numba.njit(cache=True, nogil=True)
def _phi_k(rho, theta, alpha, beta):
    return theta * _phi_unit_k(rho, alpha / theta, beta / theta)


@numba.vectorize(["float64(float64, float64)"], cache=True)
def _pressure_plus_u(lam, q):
    return _pressure_plus_k(lam, q)


@numba.vectorize(["float64(float64, float64)"], cache=True)
def _rho_plus_u(lam, q):
    return _rho_plus_k(lam, q)


@numba.vectorize(["float64(float64, float64)"], cache=True)
def _chi_plus_u(lam, q):
    return _chi_plus_k(lam, q)


@numba.vectorize(["float64(float64, float64)"], cache=True)
def _lambda_plus_u(rho, q):
    return _lambda_plus_k(rho, q)


@numba.vectorize(["float64(float64, float64, float64)"], cache=True)
def _phi_unit_u(rho, alpha, beta):
    return _phi_unit_k(rho, alpha, beta)


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


# ---------------------------------------------------------------------------
# public maps


def pressure_minus(lam):
    """``ln(1 + e^lam)``."""
    return _out(np.logaddexp(0.0, np.asarray(lam, dtype=float)))


def pressure_plus(lam, q):
    """Log of the Perron eigenvalue of the transfer matrix."""
    return _out(_pressure_plus_u(np.asarray(lam, dtype=float), float(q)))


def rho_of_lambda(lam, family, q=0.0):
    """Density ``p'(lam)`` of the family; strictly increasing with range (0, 1)."""
    _check_family(family)
    lam = np.asarray(lam, dtype=float)
    if family == "-":
        return _out(expit(lam))
    return _out(_rho_plus_u(lam, float(q)))


def susceptibility(lam, family, q=0.0):
    """``d rho / d lam`` (the second derivative of the pressure)."""
    _check_family(family)
    lam = np.asarray(lam, dtype=float)
    if family == "-":
        e = expit(lam)
        return _out(e * (1.0 - e))
    return _out(_chi_plus_u(lam, float(q)))


def _check_open_density(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(~((rho > 0.0) & (rho < 1.0))):
        raise ValueError("density must lie strictly inside (0, 1)")
    return rho


def lambda_of_rho(rho, family, q=0.0):
    """Chemical potential with ``rho_of_lambda(lam) == rho``.

    The ``+`` branch runs a bracketed Newton iteration on the logit scale,
    started from the bracket [-40, 40] and widened if needed.
    """
    _check_family(family)
    rho = _check_open_density(rho)
    if family == "-":
        return _out(logit(rho))
    return _out(_lambda_plus_u(rho, float(q)))


def q_of_rho(rho, family, q=0.0):
    """Free energy ``p(lam_rho) - rho * lam_rho`` (the Legendre dual of the pressure)."""
    _check_family(family)
    rho = _check_open_density(rho)
    lam = lambda_of_rho(rho, family, q)
    p = pressure_minus(lam) if family == "-" else pressure_plus(lam, q)
    return _out(p - rho * lam)


def phi_unit(rho, alpha, beta):
    """Flux function at ``theta = 1``."""
    return _out(_phi_unit_u(np.asarray(rho, dtype=float), float(alpha), float(beta)))


def phi(rho, params: ModelParams):
    """Bulk flux function ``Phi(rho)`` with ``Phi(0) = 0``."""
    rho = np.asarray(rho, dtype=float)
    if np.any((rho < 0.0) | (rho > 1.0)):
        raise ValueError("density must lie in [0, 1]")
    t = params.theta
    return _out(t * _phi_unit_u(rho, params.alpha / t, params.beta / t))


# ---------------------------------------------------------------------------
# finite volumes


def grand_log_partition(size: int, lam: float, family: str, q: float = 0.0) -> float:
    """``log Z^{lam,+-}`` of a block of ``size`` sites with free boundary."""
    _check_family(family)
    if size < 1:
        raise ValueError("size must be positive")
    if family == "-":
        return size * pressure_minus(lam)
    # forward recursion over the last occupation, in log space
    f = np.array([0.0, lam])
    for _ in range(size - 1):
        f = np.array([
            np.logaddexp(f[0], f[1]),
            lam + np.logaddexp(f[0], f[1] - q),
        ])
    return float(np.logaddexp(f[0], f[1]))


def canonical_log_partitions(size: int, family: str, q: float = 0.0) -> np.ndarray:
    """``log Z_{size,n}`` for every ``n = 0..size``."""
    _check_family(family)
    if size < 1:
        raise ValueError("size must be positive")
    n = np.arange(size + 1)
    if family == "-":
        return gammaln(size + 1) - gammaln(n + 1) - gammaln(size - n + 1)
    neg = -np.inf
    # f[c, a]: log weight of prefixes with c particles ending in occupation a
    f = np.full((size + 1, 2), neg)
    f[0, 0] = 0.0
    f[1, 1] = 0.0
    for _ in range(size - 1):
        g = np.full_like(f, neg)
        g[:, 0] = np.logaddexp(f[:, 0], f[:, 1])
        g[1:, 1] = np.logaddexp(f[:-1, 0], f[:-1, 1] - q)
        f = g
    return np.logaddexp(f[:, 0], f[:, 1])


def canonical_log_partition(size: int, n: int, family: str, q: float = 0.0) -> float:
    """``log Z_{size,n}``: sum of ``exp(-H)`` over configurations with ``n`` particles."""
    if not 0 <= n <= size:
        raise ValueError(f"particle number {n} outside [0, {size}]")
    return float(canonical_log_partitions(size, family, q)[n])


@dataclass(frozen=True)
class EnsembleTable:
    """Bundles the maps of both families for one parameter set."""

    theta: float
    alpha: float
    beta: float

    @classmethod
    def from_params(cls, params: ModelParams) -> "EnsembleTable":
        return cls(params.theta, params.alpha, params.beta)

    @property
    def q(self) -> float:
        if self.alpha == self.beta:
            return 0.0
        return math.log((self.theta + self.alpha) / (self.theta + self.beta))

    def p_minus(self, lam):
        return pressure_minus(lam)

    def p_plus(self, lam):
        return pressure_plus(lam, self.q)

    def rho_minus(self, lam):
        return rho_of_lambda(lam, "-")

    def rho_plus(self, lam):
        return rho_of_lambda(lam, "+", self.q)

    def lambda_minus(self, rho):
        return lambda_of_rho(rho, "-")

    def lambda_plus(self, rho):
        return lambda_of_rho(rho, "+", self.q)

    def q_minus(self, rho):
        return q_of_rho(rho, "-")

    def q_plus(self, rho):
        return q_of_rho(rho, "+", self.q)

    def rho(self, lam, family):
        return rho_of_lambda(lam, family, self.q)

    def lam(self, rho, family):
        return lambda_of_rho(rho, family, self.q)

    def phi(self, rho):
        rho = np.asarray(rho, dtype=float)
        t = self.theta
        return _out(t * _phi_unit_u(rho, self.alpha / t, self.beta / t))

    def max_phi_slope(self, samples: int = 4001) -> float:
        """Largest ``Phi'`` on [0, 1], from a fine one-sided difference grid."""
        rho = np.linspace(0.0, 1.0, samples)
        vals = self.phi(rho)
        return float(np.max(np.diff(vals)) / (rho[1] - rho[0]))
