"""Empirical densities, block densities, interface traces and replica statistics.

All functions accept a single configuration (length ``3N + 1``) or a stack of
them with sites on the last axis, and likewise for per-site mean profiles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .ensembles import RHO_CLAMP, EnsembleTable

__all__ = [
    "TestFunction",
    "sine_mode",
    "bump",
    "standard_battery",
    "DensityProfile",
    "pair_empirical",
    "truncated_sites",
    "truncated_empirical",
    "cesaro_weights",
    "averaged_empirical",
    "normalized_averaged_empirical",
    "block_density",
    "interface_trace_centers",
    "interface_traces",
    "two_block_potential_gap",
    "replica_mean_profile",
    "trapezoid",
    "write_profile_csv",
    "read_profile_csv",
]

ANCHORS = (-1.0, 0.0, 1.0, 2.0)


@dataclass(frozen=True)
class TestFunction:
    """A C^2 function on [-1, 2] vanishing at -1, 0, 1 and 2, with its derivatives."""

    __test__ = False  # keep pytest from collecting this class

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    d2f: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        vals = np.asarray(self.f(np.array(ANCHORS)), dtype=float)
        if np.max(np.abs(vals)) > 1e-12:
            raise ValueError(f"test function {self.name} does not vanish at {ANCHORS}")

    def __call__(self, u):
        return self.f(np.asarray(u, dtype=float))


def sine_mode(m: int) -> TestFunction:
    k = m * math.pi
    return TestFunction(
        f"sin{m}",
        lambda u: np.sin(k * u),
        lambda u: k * np.cos(k * u),
        lambda u: -k * k * np.sin(k * u),
    )


def bump(a: float, b: float) -> TestFunction:
    """``(4 s (1 - s))^3`` on ``[a, b]`` with ``s = (u - a)/(b - a)``, zero outside; peak value 1."""
    w = b - a

    def s_of(u):
        return np.clip((np.asarray(u, dtype=float) - a) / w, 0.0, 1.0)

    def f(u):
        s = s_of(u)
        return (4.0 * s * (1.0 - s)) ** 3

    def df(u):
        s = s_of(u)
        return 3.0 * (4.0 * s * (1.0 - s)) ** 2 * 4.0 * (1.0 - 2.0 * s) / w

    def d2f(u):
        s = s_of(u)
        g = 4.0 * s * (1.0 - s)
        dg = 4.0 * (1.0 - 2.0 * s)
        return (6.0 * g * dg * dg - 24.0 * g * g) / (w * w)

    return TestFunction(f"bump[{a:g},{b:g}]", f, df, d2f)


def standard_battery() -> List[TestFunction]:
    """``sin(m pi u)`` for m = 1..4 and two bumps inside each region."""
    out = [sine_mode(m) for m in range(1, 5)]
    for left in (-1.0, 0.0, 1.0):
        out.append(bump(left + 0.1, left + 0.5))
        out.append(bump(left + 0.5, left + 0.9))
    return out


@dataclass
class DensityProfile:
    u: np.ndarray
    values: np.ndarray
    se: np.ndarray
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.se = np.asarray(self.se, dtype=float)
        if np.any(self.values < -1e-12) or np.any(self.values > 1 + 1e-12):
            raise ValueError("densities must lie in [0, 1]")


# ---------------------------------------------------------------------------
# pairings


def _n_of(cfg):
    n, rem = divmod(np.shape(cfg)[-1] - 1, 3)
    if rem or n < 1:
        raise ValueError("configuration length must be 3N + 1")
    return n


def _positions(n):
    return np.arange(-n, 2 * n + 1) / n


def pair_empirical(cfg, G, n: Optional[int] = None):
    """``(1/N) sum_x G(x/N) eta_x`` over the whole lattice."""
    n = _n_of(cfg) if n is None else n
    g = np.asarray(G(_positions(n)), dtype=float)
    return np.asarray(cfg, dtype=float) @ g / n


def truncated_sites(n: int, k: int) -> np.ndarray:
    """Boolean mask of the sites kept by the truncation at depth ``k``."""
    x = np.arange(-n, 2 * n + 1)
    return (
        ((x >= -n + k) & (x <= -k))
        | ((x >= k) & (x <= n - k))
        | ((x >= n + k) & (x <= 2 * n - k))
    )


def truncated_empirical(cfg, G, n: Optional[int] = None, k: int = 1):
    """Pairing restricted to ``[-N+k, -k] u [k, N-k] u [N+k, 2N-k]``."""
    n = _n_of(cfg) if n is None else n
    if not 1 <= k <= n // 2:
        raise ValueError(f"truncation depth must lie in [1, N/2], got {k}")
    g = np.where(truncated_sites(n, k), G(_positions(n)), 0.0)
    return np.asarray(cfg, dtype=float) @ g / n


def cesaro_weights(k: int) -> np.ndarray:
    """Weights ``w_j`` (j = 1..k-1) of the truncated densities inside the average.

    ``w_j = (1/k) sum_{m=j+1}^{k-1} 1/m``; they sum to ``(k - 1 - H_{k-1}) / k``,
    not to one.
    """
    if k < 3:
        raise ValueError("averaging depth must be at least 3")
    inv = 1.0 / np.arange(1, k)
    # tail[j-1] = sum_{m=j+1}^{k-1} 1/m
    tail = np.concatenate([np.cumsum(inv[::-1])[::-1][1:], [0.0]])
    return tail / k


def _averaged_weights(n, k, G, normalized):
    w = cesaro_weights(k)
    if normalized:
        w = w / w.sum()
    x = np.arange(-n, 2 * n + 1)
    # site weight = sum of w_j over the truncations that keep the site
    site_w = np.zeros(x.size)
    for j, wj in enumerate(w, start=1):
        if wj != 0.0:
            site_w += wj * truncated_sites(n, j)
    return site_w * G(_positions(n)) / n


def averaged_empirical(cfg, G, n: Optional[int] = None, k: int = 3):
    """``(1/k) sum_{m=1}^{k-1} (1/m) sum_{j=1}^{m-1}`` of the truncated pairings."""
    n = _n_of(cfg) if n is None else n
    if k < 3:
        raise ValueError("averaging depth must be at least 3")
    if k - 1 > n // 2:
        raise ValueError("averaging depth too large for the lattice")
    return np.asarray(cfg, dtype=float) @ _averaged_weights(n, k, G, False)


def normalized_averaged_empirical(cfg, G, n: Optional[int] = None, k: int = 3):
    """Same average with the weights rescaled to total one.

    This is the finite-k estimator compared against the PDE; the raw average
    has total weight ``(k - 1 - H_{k-1}) / k`` and only approaches one as k grows.
    """
    n = _n_of(cfg) if n is None else n
    if k < 3 or k - 1 > n // 2:
        raise ValueError("averaging depth out of range")
    return np.asarray(cfg, dtype=float) @ _averaged_weights(n, k, G, True)


# ---------------------------------------------------------------------------
# blocks and interfaces


def block_density(cfg, center: int, l: int, n: Optional[int] = None):
    """Fraction of occupied sites in ``B_l(center) = [center - l, center + l]``."""
    n = _n_of(cfg) if n is None else n
    if l < 0 or center - l < -n or center + l > 2 * n:
        raise ValueError(f"block B_{l}({center}) leaves the lattice")
    i = center + n
    return np.asarray(cfg, dtype=float)[..., i - l:i + l + 1].mean(axis=-1)


def interface_trace_centers(n: int, l: int) -> Tuple[int, int, int, int]:
    """Centres of the blocks estimating rho(0-), rho(0+), rho(1-), rho(1+)."""
    return (-l - 1, l + 1, n - l - 1, n + l + 2)


def interface_traces(cfg, l: int, n: Optional[int] = None):
    """Block densities on both sides of u = 0 and u = 1, stacked on the last axis."""
    n = _n_of(cfg) if n is None else n
    if l < 1 or 4 * l > n:
        raise ValueError(f"block half-width must lie in [1, N/4], got {l}")
    return np.stack([block_density(cfg, c, l, n) for c in interface_trace_centers(n, l)], axis=-1)


def two_block_potential_gap(traces, table: EnsembleTable):
    """Chemical-potential mismatch across both interfaces.

    Returns ``(gap0, gap1, clamped)`` where ``gap0 = |lam-(rho(0-)) - lam+(rho(0+))|``,
    ``gap1 = |lam+(rho(1-)) - lam-(rho(1+))|`` and ``clamped`` flags traces that
    had to be pulled into ``[RHO_CLAMP, 1 - RHO_CLAMP]``.
    """
    tr = np.asarray(traces, dtype=float)
    clipped = np.clip(tr, RHO_CLAMP, 1.0 - RHO_CLAMP)
    clamped = np.any(clipped != tr, axis=-1)
    lam0m = table.lambda_minus(clipped[..., 0])
    lam0p = table.lambda_plus(clipped[..., 1])
    lam1m = table.lambda_plus(clipped[..., 2])
    lam1p = table.lambda_minus(clipped[..., 3])
    return np.abs(lam0m - lam0p), np.abs(lam1m - lam1p), clamped


# ---------------------------------------------------------------------------
# replicas, time integrals, CSV


def replica_mean_profile(series):
    """Pointwise mean and standard error over the leading (replica) axis.

    ``series`` is a sequence of equally shaped arrays or one stacked array;
    the reduction runs in replica order.
    """
    if isinstance(series, np.ndarray):
        arr = series.astype(float, copy=False)
    else:
        shapes = {np.shape(s) for s in series}
        if len(shapes) != 1:
            raise ValueError(f"replicas are not aligned: shapes {sorted(shapes)}")
        arr = np.stack([np.asarray(s, dtype=float) for s in series])
    r = arr.shape[0]
    if r < 2:
        raise ValueError("need at least two replicas")
    mean = arr.mean(axis=0)
    se = arr.std(axis=0, ddof=1) / math.sqrt(r)
    return mean, se


def trapezoid(values, times) -> float:
    """Trapezoid rule over a (possibly non-uniform) time grid."""
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    if values.shape[0] != times.size:
        raise ValueError("values and times differ in length")
    if times.size < 2:
        return 0.0
    dt = np.diff(times)
    return float(np.sum(0.5 * (values[1:] + values[:-1]) * dt))


def write_profile_csv(path, profile: DensityProfile) -> None:
    """``#key: value`` metadata lines, then ``u,rho_mean,rho_se`` rows."""
    lines = [f"#{k}: {v}" for k, v in profile.meta.items()]
    lines.append("u,rho_mean,rho_se")
    for u, v, s in zip(profile.u, profile.values, profile.se):
        lines.append(f"{float(u)!r},{float(v)!r},{float(s)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_meta(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def read_profile_csv(path) -> DensityProfile:
    meta = {}
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = _parse_meta(value.strip())
        elif line.startswith("u,"):
            continue
        else:
            rows.append([float(v) for v in line.split(",")])
    data = np.array(rows, dtype=float).reshape(-1, 3)
    return DensityProfile(data[:, 0], data[:, 1], data[:, 2], meta)
