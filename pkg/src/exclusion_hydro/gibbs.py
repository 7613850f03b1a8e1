"""Exact samplers and enumeration oracles for finite-volume Gibbs measures.

The ``+`` measure on an interval is a Markov chain in the site index, so it
is sampled exactly by a forward pass of normalised partial partition vectors
followed by backward conditional sampling.  All samplers are vectorised over
the number of draws.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import expit

from .model import ModelParams

__all__ = [
    "GibbsSpec",
    "sample_chain",
    "sample_full_lattice",
    "full_lattice_marginals",
    "exact_marginals",
    "enumerate_distribution",
    "log_weights",
    "block_count_distribution",
    "total_variation",
]


@dataclass(frozen=True)
class GibbsSpec:
    """Grand canonical measure on an interval of ``size`` sites.

    ``boundary`` holds the occupations ``(omega_left, omega_right)`` of the
    two sites adjacent to the interval; ``None`` on either side means a free
    end.  Only the ``+`` family feels the boundary.
    """

    size: int
    family: str
    lam: float
    q: float = 0.0
    boundary: Optional[Tuple[Optional[int], Optional[int]]] = None

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("interval must contain at least one site")
        if self.family not in ("+", "-"):
            raise ValueError(f"family must be '+' or '-', got {self.family!r}")
        if self.boundary is not None:
            if len(self.boundary) != 2:
                raise ValueError("boundary condition reads only the two adjacent sites")
            for w in self.boundary:
                if w not in (None, 0, 1):
                    raise ValueError("boundary occupations must be 0, 1 or None")

    @property
    def coupling(self) -> float:
        return self.q if self.family == "+" else 0.0

    def boundary_pair(self):
        if self.boundary is None or self.family == "-":
            return 0, 0
        return tuple(0 if w is None else w for w in self.boundary)


def _forward(spec):
    """Normalised forward vectors ``f[i, a]`` and the log normaliser."""
    q, lam = spec.coupling, spec.lam
    wl, wr = spec.boundary_pair()
    k = np.exp(-q * np.outer([0, 1], [0, 1]))
    site = np.array([1.0, np.exp(lam)]) if lam <= 0 else np.array([np.exp(-lam), 1.0])
    log_site_scale = 0.0 if lam <= 0 else lam
    f = np.empty((spec.size, 2))
    v = site * np.exp(-q * wl * np.array([0.0, 1.0]))
    log_z = log_site_scale
    for i in range(spec.size):
        if i > 0:
            v = (f[i - 1] @ k) * site
            log_z += log_site_scale
        c = v.sum()
        f[i] = v / c
        log_z += np.log(c)
    right = np.exp(-q * wr * np.array([0.0, 1.0]))
    end = f[-1] * right
    log_z += np.log(end.sum())
    return f, k, right, log_z


def sample_chain(spec: GibbsSpec, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Exact draws from the interval measure, shape ``(size, spec.size)`` (or one row)."""
    n_draw = 1 if size is None else int(size)
    out = np.empty((n_draw, spec.size), dtype=np.int8)
    if spec.coupling == 0.0:
        p = expit(spec.lam)
        out[:] = rng.random((n_draw, spec.size)) < p
        return out[0] if size is None else out

    f, k, right, _ = _forward(spec)
    last = f[-1] * right
    p1 = last[1] / last.sum()
    out[:, -1] = rng.random(n_draw) < p1
    for i in range(spec.size - 2, -1, -1):
        # P(eta_i = 1 | eta_{i+1} = b) is proportional to f[i, 1] k[1, b]
        w1 = f[i, 1] * k[1, out[:, i + 1]]
        w0 = f[i, 0] * k[0, out[:, i + 1]]
        out[:, i] = rng.random(n_draw) * (w0 + w1) < w1
    return out[0] if size is None else out


def exact_marginals(spec: GibbsSpec) -> np.ndarray:
    """Per-site occupation probabilities from forward/backward partition vectors."""
    if spec.coupling == 0.0:
        return np.full(spec.size, expit(spec.lam))
    f, k, right, _ = _forward(spec)
    b = np.empty((spec.size, 2))
    b[-1] = right
    for i in range(spec.size - 2, -1, -1):
        v = k @ (b[i + 1] * np.array([1.0, np.exp(spec.lam)]))
        b[i] = v / v.sum()
    m = f * b
    return m[:, 1] / m.sum(axis=1)


def log_weights(spec: GibbsSpec, states: np.ndarray) -> np.ndarray:
    """Unnormalised log weights ``-H + lam * N`` of the given configurations."""
    states = np.asarray(states, dtype=float)
    q = spec.coupling
    wl, wr = spec.boundary_pair()
    energy = q * np.sum(states[:, :-1] * states[:, 1:], axis=1)
    energy += q * (wl * states[:, 0] + wr * states[:, -1])
    return -energy + spec.lam * states.sum(axis=1)


def _all_states(size):
    return np.array(list(itertools.product([0, 1], repeat=size)), dtype=np.int8)


def enumerate_distribution(spec: GibbsSpec) -> Tuple[np.ndarray, np.ndarray]:
    """All ``2**size`` states (lexicographic, first site most significant) and their probabilities."""
    if spec.size > 22:
        raise ValueError("enumeration limited to 22 sites")
    states = _all_states(spec.size)
    lw = log_weights(spec, states)
    p = np.exp(lw - lw.max())
    return states, p / p.sum()


def state_codes(samples: np.ndarray) -> np.ndarray:
    """Integer code of each row, matching the ordering of :func:`enumerate_distribution`."""
    samples = np.asarray(samples, dtype=np.int64)
    powers = 1 << np.arange(samples.shape[1] - 1, -1, -1, dtype=np.int64)
    return samples @ powers


def total_variation(samples: np.ndarray, probs: np.ndarray) -> float:
    """TV distance between the empirical law of ``samples`` and ``probs``."""
    counts = np.bincount(state_codes(samples), minlength=probs.size)
    return 0.5 * float(np.abs(counts / counts.sum() - probs).sum())


def block_count_distribution(size: int, lam: float, family: str, q: float = 0.0) -> np.ndarray:
    """Exact law of the particle number of a free block under the grand canonical measure."""
    from .ensembles import canonical_log_partitions

    lz = canonical_log_partitions(size, family, q) + lam * np.arange(size + 1)
    p = np.exp(lz - lz.max())
    return p / p.sum()


# ---------------------------------------------------------------------------
# the full lattice


def sample_full_lattice(
    params: ModelParams, lam: float, rng: np.random.Generator, size: Optional[int] = None
) -> np.ndarray:
    """Exact draws from the Gibbs measure of the whole lattice ``-N..2N``.

    The energy only couples bonds inside ``0..N``, so the reservoirs are
    independent Bernoulli sites and the bulk is an independent chain.
    """
    n = params.n_sites
    n_draw = 1 if size is None else int(size)
    out = np.empty((n_draw, params.lattice_size), dtype=np.int8)
    out[:, :n] = rng.random((n_draw, n)) < expit(lam)
    out[:, n:2 * n + 1] = sample_chain(GibbsSpec(n + 1, "+", lam, params.q), rng, n_draw)
    out[:, 2 * n + 1:] = rng.random((n_draw, n)) < expit(lam)
    return out[0] if size is None else out


def full_lattice_marginals(params: ModelParams, lam: float) -> np.ndarray:
    """Exact per-site occupation probabilities of the full-lattice Gibbs measure."""
    n = params.n_sites
    out = np.full(params.lattice_size, expit(lam))
    out[n:2 * n + 1] = exact_marginals(GibbsSpec(n + 1, "+", lam, params.q))
    return out
