"""Lattice layout, Hamiltonian and exchange rates of the coupled exclusion process.

Configurations are ``int8`` numpy arrays of length ``3N + 1``; the entry at
array index ``i`` is the occupation of lattice site ``x = i - N``, so sites
run over ``-N..2N``.  Sites ``-N..-1`` and ``N+1..2N`` are the two
reservoirs (simple symmetric exclusion), ``0..N`` is the bulk with the
finite-range rates.  A bond ``x`` joins sites ``x`` and ``x + 1``.

The scalar rate kernels are numba-compiled so the simulator in
:mod:`exclusion_hydro.kmc` evaluates exactly the same code as this module.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numba
import numpy as np

__all__ = [
    "ModelParams",
    "Region",
    "BondClass",
    "region_of_site",
    "bond_class",
    "site_index",
    "empty_configuration",
    "hamiltonian",
    "delta_h_swap",
    "bond_rate",
    "all_bond_rates",
    "swap",
]


@dataclass(frozen=True)
class ModelParams:
    """Rate parameters ``(theta, alpha, beta)`` and the lattice size ``N``."""

    theta: float
    alpha: float
    beta: float
    n_sites: int

    def __post_init__(self):
        theta, alpha, beta = float(self.theta), float(self.alpha), float(self.beta)
        if not all(math.isfinite(v) for v in (theta, alpha, beta)):
            raise ValueError("rate parameters must be finite")
        if theta + alpha <= 0 or theta + beta <= 0 or theta + alpha + beta <= 0:
            raise ValueError(
                f"need theta+alpha > 0, theta+beta > 0, theta+alpha+beta > 0; "
                f"got theta={theta}, alpha={alpha}, beta={beta}"
            )
        # an isolated particle jumps at rate theta
        if theta <= 0:
            raise ValueError(f"theta must be positive, got {theta}")
        if int(self.n_sites) != self.n_sites or self.n_sites < 4:
            raise ValueError(f"n_sites must be an integer >= 4, got {self.n_sites}")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "n_sites", int(self.n_sites))

    @property
    def q(self) -> float:
        """Nearest-neighbour coupling ``ln((theta+alpha)/(theta+beta))``."""
        if self.alpha == self.beta:
            return 0.0
        return math.log((self.theta + self.alpha) / (self.theta + self.beta))

    @property
    def lattice_size(self) -> int:
        return 3 * self.n_sites + 1

    @property
    def n_bonds(self) -> int:
        return 3 * self.n_sites

    def with_n(self, n_sites: int) -> "ModelParams":
        return ModelParams(self.theta, self.alpha, self.beta, n_sites)

    def scaled(self) -> "ModelParams":
        """The same model with ``theta`` normalised to one (rates divided by theta)."""
        return ModelParams(1.0, self.alpha / self.theta, self.beta / self.theta, self.n_sites)


class Region(enum.IntEnum):
    LEFT_RESERVOIR = 0
    BULK = 1
    RIGHT_RESERVOIR = 2


class BondClass(enum.IntEnum):
    SSEP = 0
    FINITE_RANGE = 1
    BOUNDARY = 2


def region_of_site(x: int, n: int) -> Region:
    if not -n <= x <= 2 * n:
        raise IndexError(f"site {x} outside [-{n}, {2 * n}]")
    if x < 0:
        return Region.LEFT_RESERVOIR
    if x <= n:
        return Region.BULK
    return Region.RIGHT_RESERVOIR


def bond_class(x: int, n: int) -> BondClass:
    _check_bond(x, n)
    return BondClass(_bond_class_kernel(x, n))


def site_index(x: int, n: int) -> int:
    """Array index of lattice site ``x``."""
    return x + n


def empty_configuration(params: ModelParams) -> np.ndarray:
    return np.zeros(params.lattice_size, dtype=np.int8)


def _check_bond(x, n):
    if not -n <= x <= 2 * n - 1:
        raise IndexError(f"bond {x} outside [-{n}, {2 * n - 1}]")


def _check_cfg(cfg, params):
    cfg = np.asarray(cfg)
    if cfg.shape[-1] != params.lattice_size:
        raise ValueError(
            f"configuration has {cfg.shape[-1]} sites, expected {params.lattice_size}"
        )
    return cfg


# ---------------------------------------------------------------------------
# numba kernels; ``occ`` is indexed by array position, ``x`` by lattice site


@numba.njit(cache=True, nogil=True, inline="always")
def _bond_class_kernel(x, n):
    if x == -1 or x == 0 or x == n - 1 or x == n:
        return 2
    if 1 <= x <= n - 2:
        return 1
    return 0


@numba.njit(cache=True, nogil=True, inline="always")
def _occ(occ, x, n):
    # sites beyond the lattice ends read as empty
    i = x + n
    if i < 0 or i >= occ.shape[0]:
        return 0
    return occ[i]


@numba.njit(cache=True, nogil=True, inline="always")
def _window_delta_h(a, b, left, right, x, n, q):
    d = 0
    # bond (x-1, x) is in H iff 0 <= x-1 <= n-1
    if 1 <= x <= n:
        d += left * (b - a)
    # bond (x+1, x+2) is in H iff 0 <= x+1 <= n-1
    if -1 <= x <= n - 2:
        d += right * (a - b)
    return q * d


@numba.njit(cache=True, nogil=True, inline="always")
def _delta_h_kernel(occ, x, n, q):
    a = occ[x + n]
    b = occ[x + n + 1]
    if a == b:
        return 0.0
    return _window_delta_h(a, b, _occ(occ, x - 1, n), _occ(occ, x + 2, n), x, n, q)


@numba.njit(cache=True, nogil=True, inline="always")
def _bond_rate_kernel(occ, x, n, theta, alpha, beta, q):
    i = x + n
    a = occ[i]
    b = occ[i + 1]
    if a == b:
        return 0.0
    if x < -1 or x > n:
        return 1.0
    # only SSEP bonds touch the lattice ends, so these reads stay in range
    left = occ[i - 1]
    right = occ[i + 2]
    if x == -1 or x == 0 or x == n - 1 or x == n:
        return math.exp(-0.5 * _window_delta_h(a, b, left, right, x, n, q))
    if a == 1:
        return theta + alpha * left + beta * right
    return theta + alpha * right + beta * left


@numba.njit(cache=True, nogil=True)
def _hamiltonian_kernel(occ, n, q):
    s = 0
    for x in range(0, n):
        s += occ[x + n] * occ[x + n + 1]
    return q * s


# ---------------------------------------------------------------------------


def hamiltonian(cfg: np.ndarray, params: ModelParams) -> float:
    """Energy ``q * sum_{x=0}^{N-1} eta_x eta_{x+1}``."""
    cfg = _check_cfg(cfg, params)
    return float(_hamiltonian_kernel(np.ascontiguousarray(cfg, dtype=np.int8), params.n_sites, params.q))


def delta_h_swap(cfg: np.ndarray, x: int, params: ModelParams) -> float:
    """Energy change ``H(eta^{x,x+1}) - H(eta)`` from the four-site window at bond ``x``."""
    cfg = _check_cfg(cfg, params)
    _check_bond(x, params.n_sites)
    return float(_delta_h_kernel(np.ascontiguousarray(cfg, dtype=np.int8), x, params.n_sites, params.q))


def bond_rate(cfg: np.ndarray, x: int, params: ModelParams) -> float:
    """Exchange rate ``c_{x,x+1}(eta)`` of bond ``x``."""
    cfg = _check_cfg(cfg, params)
    _check_bond(x, params.n_sites)
    return float(
        _bond_rate_kernel(
            np.ascontiguousarray(cfg, dtype=np.int8), x, params.n_sites,
            params.theta, params.alpha, params.beta, params.q,
        )
    )


def all_bond_rates(cfg: np.ndarray, params: ModelParams) -> np.ndarray:
    """Rates of every bond ``-N..2N-1``, vectorised over leading batch axes.

    Written with array arithmetic rather than the scalar kernel, so it doubles
    as an independent full rebuild of the simulator's rate table.
    """
    cfg = _check_cfg(cfg, params).astype(np.float64)
    n = params.n_sites
    pad = np.zeros(cfg.shape[:-1] + (1,))
    ext = np.concatenate([pad, cfg, pad], axis=-1)  # ext[..., x + n + 1] = eta_x
    left = ext[..., 0:3 * n]
    a = ext[..., 1:3 * n + 1]
    b = ext[..., 2:3 * n + 2]
    right = ext[..., 3:3 * n + 3]
    x = np.arange(-n, 2 * n)
    exch = a * (1 - b) + b * (1 - a)

    in_h_left = ((x - 1 >= 0) & (x - 1 <= n - 1)).astype(float)
    in_h_right = ((x + 1 >= 0) & (x + 1 <= n - 1)).astype(float)
    dh = params.q * (in_h_left * left * (b - a) + in_h_right * right * (a - b))

    finite = (
        a * (1 - b) * (params.theta + params.alpha * left + params.beta * right)
        + b * (1 - a) * (params.theta + params.alpha * right + params.beta * left)
    )
    boundary = exch * np.exp(-0.5 * dh)

    is_boundary = np.isin(x, [-1, 0, n - 1, n])
    is_finite = (x >= 1) & (x <= n - 2)
    return np.where(is_boundary, boundary, np.where(is_finite, finite, exch))


def swap(cfg: np.ndarray, x: int) -> np.ndarray:
    """Return a copy of ``cfg`` with the occupations of sites ``x`` and ``x+1`` exchanged.

    The lattice size fixes ``N`` (``len(cfg) = 3N + 1``).
    """
    cfg = np.asarray(cfg)
    n, rem = divmod(cfg.shape[-1] - 1, 3)
    if rem:
        raise ValueError("configuration length must be 3N + 1")
    _check_bond(x, n)
    out = cfg.copy()
    i = x + n
    out[..., i], out[..., i + 1] = cfg[..., i + 1], cfg[..., i]
    return out
