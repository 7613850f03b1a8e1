"""Continuous-time simulation of the process with generator ``N^2 L_N``.

Gillespie direct method: one exponential clock for the total rate and a
Fenwick tree over the ``3N`` bonds for the choice of the jumping bond.  A
swap at bond ``x`` changes the rates of bonds ``x-2..x+2`` only, so an
event costs ``O(log N)``.  Time is macroscopic (already sped up by ``N^2``).

Replicas are independent: replica ``r`` draws from
``PCG64(SeedSequence(base_seed, spawn_key=(r,)))`` and all reductions run in
replica order, so results do not depend on the thread count.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numba
import numpy as np

from .model import ModelParams, _bond_rate_kernel, all_bond_rates

__all__ = [
    "RNG_NAME",
    "REBUILD_INTERVAL",
    "FrozenError",
    "EventRecord",
    "Snapshots",
    "SimState",
    "replica_rng",
    "bernoulli_configuration",
    "run_replicas",
    "ReplicaResult",
]

RNG_NAME = "numpy PCG64 seeded by SeedSequence(base_seed, spawn_key=(replica,))"
REBUILD_INTERVAL = 1_000_000


class FrozenError(RuntimeError):
    """Raised by :meth:`SimState.step` when no swap is possible."""


@dataclass(frozen=True)
class EventRecord:
    bond: int
    dt: float


@dataclass
class Snapshots:
    """Configurations recorded at fixed macroscopic times."""

    times: np.ndarray
    configs: np.ndarray  # (len(times), 3N + 1) int8


def replica_rng(base_seed: int, replica: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(int(replica),))
    return np.random.Generator(np.random.PCG64(ss))


def bernoulli_configuration(
    params: ModelParams, rho0: Callable[[np.ndarray], np.ndarray], rng: np.random.Generator
) -> np.ndarray:
    """Independent sites with ``P(eta_x = 1) = rho0(x / N)``.

    ``rho0`` receives the array of site positions ``x / N``; sites ``0`` and
    ``N`` belong to the bulk.
    """
    n = params.n_sites
    u = np.arange(-n, 2 * n + 1) / n
    p = np.clip(np.asarray(rho0(u), dtype=float), 0.0, 1.0)
    return (rng.random(u.size) < p).astype(np.int8)


# ---------------------------------------------------------------------------
# numba core


@numba.njit(cache=True, nogil=True)
def _fw_build(rates, tree):
    nb = rates.shape[0]
    tree[0] = 0.0
    for i in range(1, nb + 1):
        tree[i] = rates[i - 1]
    for i in range(1, nb + 1):
        j = i + (i & -i)
        if j <= nb:
            tree[j] += tree[i]


@numba.njit(cache=True, nogil=True)
def _fw_add(tree, i, delta):
    nb = tree.shape[0] - 1
    j = i + 1
    while j <= nb:
        tree[j] += delta
        j += j & -j


@numba.njit(cache=True, nogil=True)
def _fw_find(tree, u):
    """0-based index of the first bond whose prefix sum reaches ``u``."""
    nb = tree.shape[0] - 1
    step = 1
    while step * 2 <= nb:
        step *= 2
    pos = 0
    while step > 0:
        k = pos + step
        if k <= nb and tree[k] < u:
            pos = k
            u -= tree[k]
        step >>= 1
    if pos >= nb:
        pos = nb - 1
    return pos


@numba.njit(cache=True, nogil=True)
def _rebuild(occ, rates, tree, n, theta, alpha, beta, q):
    total = 0.0
    for j in range(rates.shape[0]):
        r = _bond_rate_kernel(occ, j - n, n, theta, alpha, beta, q)
        rates[j] = r
        total += r
    _fw_build(rates, tree)
    return total


@numba.njit(cache=True, nogil=True)
def _advance(occ, rates, tree, fstate, istate, n, theta, alpha, beta, q, rng,
             t_stop, max_events, snap_times, snap_cfg, occ_int, last_change):
    """Runs events until ``t_stop`` or ``max_events``.

    fstate = [t, total]; istate = [events, since_rebuild, violations, snap_idx, last_bond].
    Returns 0 when stopped by time, 1 by the event budget, 2 when frozen.
    """
    nb = rates.shape[0]
    n2 = float(n) * float(n)
    t = fstate[0]
    total = fstate[1]
    events = istate[0]
    since = istate[1]
    violations = istate[2]
    sidx = istate[3]
    nsnap = snap_times.shape[0]
    done = 0
    status = 0
    while True:
        if done >= max_events:
            status = 1
            break
        if total <= 1e-12:
            # absorbing: nothing moves again
            while sidx < nsnap and snap_times[sidx] <= t_stop:
                snap_cfg[sidx, :] = occ
                sidx += 1
            if t_stop < np.inf:
                t = t_stop
            status = 2
            break
        t_next = t + rng.exponential() / (n2 * total)
        while sidx < nsnap and snap_times[sidx] < t_next and snap_times[sidx] <= t_stop:
            snap_cfg[sidx, :] = occ
            sidx += 1
        if t_next > t_stop:
            t = t_stop
            status = 0
            break
        j = _fw_find(tree, rng.random() * total)
        tries = 0
        while rates[j] <= 0.0 and tries < 8:
            # rounding in the prefix sums; draw again
            j = _fw_find(tree, rng.random() * total)
            tries += 1
        if rates[j] <= 0.0:
            for jj in range(nb):
                if rates[jj] > 0.0:
                    j = jj
                    break
        a = occ[j]
        b = occ[j + 1]
        if a == b:
            violations += 1
        for s in range(j, j + 2):
            occ_int[s] += occ[s] * (t_next - last_change[s])
            last_change[s] = t_next
        occ[j] = b
        occ[j + 1] = a
        if occ[j] + occ[j + 1] != a + b:
            violations += 1
        lo = max(j - 2, 0)
        hi = min(j + 2, nb - 1)
        for k in range(lo, hi + 1):
            r = _bond_rate_kernel(occ, k - n, n, theta, alpha, beta, q)
            d = r - rates[k]
            if d != 0.0:
                rates[k] = r
                _fw_add(tree, k, d)
                total += d
        t = t_next
        events += 1
        since += 1
        done += 1
        istate[4] = j
        if since >= REBUILD_INTERVAL:
            total = _rebuild(occ, rates, tree, n, theta, alpha, beta, q)
            since = 0
    fstate[0] = t
    fstate[1] = total
    istate[0] = events
    istate[1] = since
    istate[2] = violations
    istate[3] = sidx
    return status


_EMPTY_TIMES = np.zeros(0)


class SimState:
    """One trajectory: configuration, rate table, clock and random stream."""

    def __init__(self, params: ModelParams, cfg0: np.ndarray, rng):
        cfg0 = np.asarray(cfg0)
        if cfg0.shape != (params.lattice_size,):
            raise ValueError(f"initial configuration must have {params.lattice_size} sites")
        if np.any((cfg0 != 0) & (cfg0 != 1)):
            raise ValueError("occupations must be 0 or 1")
        if not isinstance(rng, np.random.Generator):
            rng = np.random.Generator(np.random.PCG64(rng))
        self.params = params
        self.rng = rng
        self.occ = cfg0.astype(np.int8).copy()
        self.rates = np.zeros(params.n_bonds)
        self.tree = np.zeros(params.n_bonds + 1)
        total = _rebuild(self.occ, self.rates, self.tree, *self._kernel_args())
        self._f = np.array([0.0, total])
        self._i = np.zeros(5, dtype=np.int64)
        self.occ_int = np.zeros(params.lattice_size)
        self.last_change = np.zeros(params.lattice_size)
        self.t0 = 0.0
        self.particles = int(self.occ.sum())

    def _kernel_args(self):
        p = self.params
        return p.n_sites, p.theta, p.alpha, p.beta, p.q

    @property
    def t(self) -> float:
        return float(self._f[0])

    @property
    def total_rate(self) -> float:
        return float(self._f[1])

    @property
    def events(self) -> int:
        return int(self._i[0])

    @property
    def violations(self) -> int:
        return int(self._i[2])

    def _run(self, t_stop, max_events, snap_times, snap_cfg):
        self._i[3] = 0
        return _advance(
            self.occ, self.rates, self.tree, self._f, self._i, *self._kernel_args(),
            self.rng, float(t_stop), int(max_events), snap_times, snap_cfg,
            self.occ_int, self.last_change,
        )

    def step(self) -> EventRecord:
        """Performs one event; raises :class:`FrozenError` if no swap is possible."""
        t_before = self.t
        status = self._run(np.inf, 1, _EMPTY_TIMES, np.zeros((0, self.occ.size), dtype=np.int8))
        if status == 2:
            raise FrozenError("total rate is zero")
        return EventRecord(bond=int(self._i[4]) - self.params.n_sites, dt=self.t - t_before)

    def run_events(self, count: int) -> int:
        """Performs up to ``count`` events; returns the number done."""
        before = self.events
        self._run(np.inf, count, _EMPTY_TIMES, np.zeros((0, self.occ.size), dtype=np.int8))
        return self.events - before

    def run_until(self, t_end: float, snapshots: Optional[Sequence[float]] = None) -> Snapshots:
        """Advances to ``t_end`` recording the configuration at each snapshot time.

        The recorded configuration is the one left by the last event at or
        before the snapshot time.
        """
        times = np.asarray([] if snapshots is None else snapshots, dtype=float)
        if times.size and (np.any(np.diff(times) < 0) or times[0] < self.t or times[-1] > t_end):
            raise ValueError("snapshot times must be sorted and inside [t, t_end]")
        if t_end < self.t:
            raise ValueError("t_end lies in the past")
        cfgs = np.zeros((times.size, self.occ.size), dtype=np.int8)
        self._run(t_end, np.iinfo(np.int64).max, times, cfgs)
        return Snapshots(times, cfgs)

    def time_averaged_occupation(self) -> np.ndarray:
        """Occupation of each site averaged over ``[t0, t]``."""
        span = self.t - self.t0
        if span <= 0:
            return self.occ.astype(float)
        acc = self.occ_int + self.occ * (self.t - self.last_change)
        return acc / span

    def rate_table_error(self) -> float:
        """Largest deviation between the incremental rate table and a full rebuild."""
        fresh = all_bond_rates(self.occ, self.params)
        tree = np.zeros_like(self.tree)
        _fw_build(self.rates, tree)
        return float(max(
            np.max(np.abs(fresh - self.rates)),
            abs(fresh.sum() - self.total_rate),
            np.max(np.abs(tree - self.tree)),
        ))


# ---------------------------------------------------------------------------
# replicas


@dataclass
class ReplicaResult:
    times: np.ndarray
    configs: np.ndarray  # (replicas, snapshots, sites) int8
    time_averaged: np.ndarray  # (replicas, sites) occupation averaged over [0, t_end]
    events: np.ndarray
    violations: np.ndarray
    seeds: list


def default_threads() -> int:
    env = os.environ.get("EXCLUSION_HYDRO_THREADS")
    return max(1, int(env)) if env else 1


def run_replicas(
    params: ModelParams,
    initial: Callable[[np.random.Generator], np.ndarray],
    n_replicas: int,
    base_seed: int,
    t_end: float,
    snapshots: Sequence[float],
    threads: Optional[int] = None,
) -> ReplicaResult:
    """Runs independent replicas; ``initial(rng)`` draws each starting configuration
    from the replica's own stream."""
    times = np.asarray(snapshots, dtype=float)
    threads = default_threads() if threads is None else max(1, int(threads))
    sites = params.lattice_size
    configs = np.zeros((n_replicas, times.size, sites), dtype=np.int8)
    averaged = np.zeros((n_replicas, sites))
    events = np.zeros(n_replicas, dtype=np.int64)
    violations = np.zeros(n_replicas, dtype=np.int64)

    def one(r):
        rng = replica_rng(base_seed, r)
        state = SimState(params, initial(rng), rng)
        snaps = state.run_until(t_end, times)
        configs[r] = snaps.configs
        averaged[r] = state.time_averaged_occupation()
        events[r] = state.events
        violations[r] = state.violations

    if threads == 1:
        for r in range(n_replicas):
            one(r)
    else:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(one, range(n_replicas)))
    seeds = [f"SeedSequence({int(base_seed)}, spawn_key=({r},))" for r in range(n_replicas)]
    return ReplicaResult(times, configs, averaged, events, violations, seeds)
