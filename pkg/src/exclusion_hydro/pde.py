"""Finite-volume solver for the limiting equation on [-1, 2].

Three regions of ``M`` cells each: the reservoirs ``(-1, 0)`` and ``(1, 2)``
diffuse with flux map ``phi(rho) = rho``, the bulk ``(0, 1)`` with
``phi = Phi``.  Interior edges use ``F = -(phi(rho_{i+1}) - phi(rho_i)) / du``,
the outer edges carry no flux, and each interface edge finds the common
chemical potential ``lam*`` for which the two half-cell fluxes

    -(phi_L(rho_L(lam*)) - phi_L(rho_left)) / (du/2)
    -(phi_R(rho_right) - phi_R(rho_R(lam*))) / (du/2)

coincide.  Time stepping is explicit Euler under a CFL bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numba
import numpy as np

from .ensembles import EnsembleTable, _lambda_k, _phi_k, _rho_k
from .observables import TestFunction, trapezoid

__all__ = [
    "PdeState",
    "InterfaceCoupler",
    "InterfaceSolution",
    "PdeSeries",
    "SAFETY",
    "cell_centers",
    "cell_edges",
    "initial_state",
    "max_stable_dt",
    "interface_flux",
    "edge_fluxes",
    "step_explicit",
    "solve",
    "stationary_profile",
    "stationary_state",
    "weak_residual",
    "CflError",
]

SAFETY = 0.4
_EDGE_CLAMP = 1e-15


class CflError(ValueError):
    """Time step above the explicit stability bound."""


# ---------------------------------------------------------------------------
# kernels; "plus" flags select the bulk family (phi = Phi, rho = rho_+)


@numba.njit(cache=True, nogil=True, inline="always")
def _phi_map(rho, plus, theta, alpha, beta):
    if plus:
        return _phi_k(rho, theta, alpha, beta)
    return rho


@numba.njit(cache=True, nogil=True)
def _interface_k(rl, rr, lplus, rplus, theta, alpha, beta, q):
    """Returns (flux * du, lam*, rho*_L, rho*_R, half-flux mismatch * du)."""
    cl = min(max(rl, _EDGE_CLAMP), 1.0 - _EDGE_CLAMP)
    cr = min(max(rr, _EDGE_CLAMP), 1.0 - _EDGE_CLAMP)
    fl = _phi_map(rl, lplus, theta, alpha, beta)
    fr = _phi_map(rr, rplus, theta, alpha, beta)
    lam_l = _lambda_k(cl, lplus, q)
    lam_r = _lambda_k(cr, rplus, q)
    lo = min(lam_l, lam_r)
    hi = max(lam_l, lam_r)

    # g(lam) = [phi_L(rho_L(lam)) - phi_L(rl)] + [phi_R(rho_R(lam)) - phi_R(rr)], increasing
    glo = (_phi_map(_rho_k(lo, lplus, q), lplus, theta, alpha, beta) - fl
           + _phi_map(_rho_k(lo, rplus, q), rplus, theta, alpha, beta) - fr)
    ghi = (_phi_map(_rho_k(hi, lplus, q), lplus, theta, alpha, beta) - fl
           + _phi_map(_rho_k(hi, rplus, q), rplus, theta, alpha, beta) - fr)
    lam = lo
    if glo >= 0.0:
        lam = lo
    elif ghi <= 0.0:
        lam = hi
    else:
        # Illinois regula falsi with a bisection guard
        side = 0
        for _ in range(200):
            if hi - lo <= 4e-16 * max(1.0, abs(lo), abs(hi)):
                lam = 0.5 * (lo + hi)
                break
            lam = (lo * ghi - hi * glo) / (ghi - glo)
            if not (lo < lam < hi):
                lam = 0.5 * (lo + hi)
            g = (_phi_map(_rho_k(lam, lplus, q), lplus, theta, alpha, beta) - fl
                 + _phi_map(_rho_k(lam, rplus, q), rplus, theta, alpha, beta) - fr)
            if g == 0.0:
                break
            if g < 0.0:
                lo, glo = lam, g
                if side == -1:
                    ghi *= 0.5
                side = -1
            else:
                hi, ghi = lam, g
                if side == 1:
                    glo *= 0.5
                side = 1
    sl = _rho_k(lam, lplus, q)
    sr = _rho_k(lam, rplus, q)
    gl = _phi_map(sl, lplus, theta, alpha, beta) - fl
    gr = fr - _phi_map(sr, rplus, theta, alpha, beta)
    # both half fluxes are -2 g / du; average them
    return -(gl + gr), lam, sl, sr, 2.0 * abs(gl - gr)


@numba.njit(cache=True, nogil=True)
def _fluxes(rho, m, du, theta, alpha, beta, q, flux, diag):
    """Edge fluxes into ``flux`` (length 3M + 1); per-interface diagnostics into ``diag``.

    diag[k] = (lam*, rho*_L, rho*_R, flux mismatch, lambda round-trip error) for k = 0, 1.
    """
    nc = 3 * m
    flux[0] = 0.0
    flux[nc] = 0.0
    phi_prev = rho[0]
    for e in range(1, nc):
        if e == m or e == 2 * m:
            lplus = e == 2 * m
            rplus = e == m
            fdu, lam, sl, sr, mis = _interface_k(rho[e - 1], rho[e], lplus, rplus, theta, alpha, beta, q)
            flux[e] = fdu / du
            k = 0 if e == m else 1
            diag[k, 0] = lam
            diag[k, 1] = sl
            diag[k, 2] = sr
            diag[k, 3] = mis / du
            diag[k, 4] = abs(_lambda_k(min(max(sl, _EDGE_CLAMP), 1.0 - _EDGE_CLAMP), lplus, q)
                             - _lambda_k(min(max(sr, _EDGE_CLAMP), 1.0 - _EDGE_CLAMP), rplus, q))
            phi_prev = _phi_map(rho[e], rplus, theta, alpha, beta)
        else:
            plus = m <= e < 2 * m
            phi_e = _phi_map(rho[e], plus, theta, alpha, beta)
            flux[e] = -(phi_e - phi_prev) / du
            phi_prev = phi_e


@numba.njit(cache=True, nogil=True)
def _solve_k(rho, m, du, dt_max, t0, targets, theta, alpha, beta, q, snaps, worst):
    """Steps from ``t0`` through every target time, storing the state at each.

    worst = [max flux mismatch, max lambda round-trip error, steps]
    """
    nc = 3 * m
    flux = np.zeros(nc + 1)
    diag = np.zeros((2, 5))
    t = t0
    cur = rho.copy()
    for s in range(targets.shape[0]):
        while t < targets[s]:
            dt = min(dt_max, targets[s] - t)
            if targets[s] - t - dt < 1e-14 * max(1.0, targets[s]):
                dt = targets[s] - t
            _fluxes(cur, m, du, theta, alpha, beta, q, flux, diag)
            for i in range(nc):
                cur[i] -= dt / du * (flux[i + 1] - flux[i])
            worst[0] = max(worst[0], diag[0, 3], diag[1, 3])
            worst[1] = max(worst[1], diag[0, 4], diag[1, 4])
            worst[2] += 1
            if dt == targets[s] - t:
                t = targets[s]
            else:
                t += dt
        snaps[s, :] = cur
    return t


# ---------------------------------------------------------------------------


@dataclass
class PdeState:
    """Cell averages on the three regions (``3M`` cells) at time ``t``."""

    rho: np.ndarray
    cells_per_region: int
    table: EnsembleTable
    t: float = 0.0

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        if self.rho.shape != (3 * self.cells_per_region,):
            raise ValueError("need 3M cell values")

    @property
    def du(self) -> float:
        return 1.0 / self.cells_per_region

    @property
    def mass(self) -> float:
        return float(self.rho.sum() * self.du)

    def copy(self) -> "PdeState":
        return replace(self, rho=self.rho.copy())


@dataclass(frozen=True)
class InterfaceSolution:
    flux: float
    lam: float
    rho_left: float
    rho_right: float
    mismatch: float


@dataclass(frozen=True)
class InterfaceCoupler:
    """Flux and potential maps on both sides of one interface (``'-'`` or ``'+'`` per side)."""

    left_family: str
    right_family: str
    table: EnsembleTable

    def solve(self, rho_left: float, rho_right: float, du: float) -> InterfaceSolution:
        t = self.table
        fdu, lam, sl, sr, mis = _interface_k(
            float(rho_left), float(rho_right), self.left_family == "+", self.right_family == "+",
            t.theta, t.alpha, t.beta, t.q,
        )
        if not (min(rho_left, rho_right) >= 0.0 and max(rho_left, rho_right) <= 1.0):
            raise ValueError("cell densities must lie in [0, 1]")
        return InterfaceSolution(fdu / du, lam, sl, sr, mis / du)


@dataclass
class PdeSeries:
    times: np.ndarray
    cells: np.ndarray  # (snapshots, 3M)
    cells_per_region: int
    table: EnsembleTable
    max_flux_mismatch: float = 0.0
    max_lambda_mismatch: float = 0.0
    steps: int = 0

    @property
    def du(self) -> float:
        return 1.0 / self.cells_per_region

    @property
    def mass(self) -> np.ndarray:
        return self.cells.sum(axis=1) * self.du

    @property
    def centers(self) -> np.ndarray:
        return cell_centers(self.cells_per_region)


def cell_edges(m: int) -> np.ndarray:
    return -1.0 + np.arange(3 * m + 1) / m


def cell_centers(m: int) -> np.ndarray:
    return -1.0 + (np.arange(3 * m) + 0.5) / m


def initial_state(rho0: Callable[[np.ndarray], np.ndarray], m: int, table: EnsembleTable) -> PdeState:
    """Cell averages of ``rho0`` by 5-point Gauss quadrature in every cell."""
    x, w = np.polynomial.legendre.leggauss(5)
    edges = cell_edges(m)
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = mid[:, None] + 0.5 / m * x[None, :]
    vals = np.asarray(rho0(pts), dtype=float)
    rho = 0.5 * (vals * w[None, :]).sum(axis=1)
    if np.any(rho < 0) or np.any(rho > 1):
        raise ValueError("initial densities must lie in [0, 1]")
    return PdeState(rho, m, table, 0.0)


def max_stable_dt(state: PdeState, safety: float = SAFETY) -> float:
    slope = max(1.0, state.table.max_phi_slope())
    return safety * state.du ** 2 / (2.0 * slope)


def interface_flux(rho_left_cell: float, rho_right_cell: float, coupler: InterfaceCoupler, du: float) -> float:
    """Common flux through an interface edge between two cells of width ``du``."""
    return coupler.solve(rho_left_cell, rho_right_cell, du).flux


def _args(table):
    return table.theta, table.alpha, table.beta, table.q


def edge_fluxes(state: PdeState):
    """All ``3M + 1`` edge fluxes and the two interface diagnostics rows."""
    flux = np.zeros(3 * state.cells_per_region + 1)
    diag = np.zeros((2, 5))
    _fluxes(state.rho, state.cells_per_region, state.du, *_args(state.table), flux, diag)
    return flux, diag


def step_explicit(state: PdeState, dt: float, safety: float = SAFETY) -> PdeState:
    """One explicit Euler step in conservative form."""
    limit = max_stable_dt(state, safety)
    if dt > limit * (1 + 1e-12):
        raise CflError(f"dt={dt:g} exceeds the stability bound {limit:g}")
    flux, _ = edge_fluxes(state)
    rho = state.rho - dt / state.du * np.diff(flux)
    return PdeState(rho, state.cells_per_region, state.table, state.t + dt)


def solve(
    state: PdeState, t_end: float, snapshots: Optional[Sequence[float]] = None,
    safety: float = SAFETY,
) -> PdeSeries:
    """Integrates to ``t_end`` and returns the state at the snapshot times.

    Steps are shortened to land exactly on each snapshot.
    """
    times = np.asarray([t_end] if snapshots is None else snapshots, dtype=float)
    if times.size == 0 or np.any(np.diff(times) < 0) or times[0] < state.t or times[-1] > t_end:
        raise ValueError("snapshot times must be sorted and inside [t, t_end]")
    dt = max_stable_dt(state, safety)
    snaps = np.zeros((times.size, state.rho.size))
    worst = np.zeros(3)
    _solve_k(state.rho, state.cells_per_region, state.du, dt, state.t, times,
             *_args(state.table), snaps, worst)
    return PdeSeries(times, snaps, state.cells_per_region, state.table,
                     float(worst[0]), float(worst[1]), int(worst[2]))


def stationary_profile(total_mass: float, table: EnsembleTable):
    """Flat chemical-potential profile holding ``total_mass`` on [-1, 2].

    Solves ``2 rho_-(lam) + rho_+(lam) = total_mass`` by bisection and returns
    ``(lam, (rho_-, rho_+, rho_-))``.
    """
    if not 0.0 < total_mass < 3.0:
        raise ValueError("total mass must lie in (0, 3)")

    def excess(lam):
        return 2.0 * table.rho_minus(lam) + table.rho_plus(lam) - total_mass

    lo, hi = -40.0, 40.0
    while excess(lo) > 0:
        lo *= 2
    while excess(hi) < 0:
        hi *= 2
    while hi - lo > 1e-13 * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        if excess(mid) < 0:
            lo = mid
        else:
            hi = mid
        if mid in (lo, hi) and hi - lo < 1e-15:
            break
    lam = 0.5 * (lo + hi)
    rm, rp = table.rho_minus(lam), table.rho_plus(lam)
    return lam, (rm, rp, rm)


def stationary_state(total_mass: float, m: int, table: EnsembleTable) -> PdeState:
    _, (a, b, c) = stationary_profile(total_mass, table)
    rho = np.concatenate([np.full(m, a), np.full(m, b), np.full(m, c)])
    return PdeState(rho, m, table, 0.0)


def _cell_integrals(G: TestFunction, m: int):
    """Per-cell integrals of G (5-point Gauss) and of G'' (exact, from G')."""
    x, w = np.polynomial.legendre.leggauss(5)
    edges = cell_edges(m)
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = mid[:, None] + 0.5 / m * x[None, :]
    g = 0.5 / m * (np.asarray(G.f(pts)) * w[None, :]).sum(axis=1)
    dg = np.asarray(G.df(edges))
    return g, np.diff(dg)


def weak_residual(series: PdeSeries, G: TestFunction, t: Optional[float] = None) -> float:
    """Signed residual of the weak formulation at time ``t`` (default: last snapshot).

    Evaluates ``int rho(t) G - [int rho_0 G + int_0^t (...) ds]`` with the
    bulk/reservoir second-derivative terms and the four trace terms; traces
    come from the cells next to each boundary point, the time integral from
    the trapezoid rule on the snapshot grid, which must start at ``t = 0``.
    """
    times = series.times
    if times[0] != 0.0:
        raise ValueError("the snapshot series must start at t = 0")
    idx = times.size - 1 if t is None else int(np.argmin(np.abs(times - t)))
    if t is not None and abs(times[idx] - t) > 1e-12:
        raise ValueError(f"t={t} is not a snapshot time")
    m = series.cells_per_region
    g_int, g2_int = _cell_integrals(G, m)
    dG = np.asarray(G.df(np.array([-1.0, 0.0, 1.0, 2.0])))
    cells = series.cells[: idx + 1]
    table = series.table
    res_cells = np.concatenate([cells[:, :m], cells[:, 2 * m:]], axis=1)
    phi_bulk = table.phi(np.clip(cells[:, m:2 * m], 0.0, 1.0))
    g2_res = np.concatenate([g2_int[:m], g2_int[2 * m:]])
    integrand = (
        phi_bulk @ g2_int[m:2 * m]
        + res_cells @ g2_res
        + dG[0] * cells[:, 0]
        + dG[1] * (table.phi(np.clip(cells[:, m], 0.0, 1.0)) - cells[:, m - 1])
        + dG[2] * (cells[:, 2 * m] - table.phi(np.clip(cells[:, 2 * m - 1], 0.0, 1.0)))
        - dG[3] * cells[:, 3 * m - 1]
    )
    lhs = cells[-1] @ g_int
    rhs = cells[0] @ g_int + trapezoid(integrand, times[: idx + 1])
    return float(lhs - rhs)
