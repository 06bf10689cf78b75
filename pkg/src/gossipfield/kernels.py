"""Interaction kernels: who moves where after a pairwise or environment
interaction.

A kernel mixes two branches. With probability alpha the activated opinion x
moves to (1-w) x + w y toward the observed opinion y, with trust weight w
drawn from the internal weight law. With probability 1 - alpha it moves to
(1-u) x + u e toward a signal e drawn from a static environment
distribution, with weight u from the external law.

Weight laws are either deterministic functions of the distance |x - y|
(constant, bounded confidence, Gaussian decay) or state-independent finite
mixtures; both admit exact branch enumeration, which the deterministic
solver relies on.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import simpson

from .measures import GridMeasure1D, MeasureError


class KernelError(ValueError):
    pass


# ---------------------------------------------------------------------------
# weight laws


@dataclass(frozen=True)
class Constant:
    omega: float

    def __post_init__(self):
        if not 0.0 <= self.omega <= 1.0:
            raise KernelError("constant weight must lie in [0,1]")


@dataclass(frozen=True)
class BoundedConfidence:
    """Deffuant-Weisbuch weight: omega0 if |x-y| <= radius, else 0."""

    omega0: float
    radius: float

    def __post_init__(self):
        if not 0.0 < self.omega0 < 1.0:
            raise KernelError("bounded-confidence weight must lie in (0,1)")
        if self.radius <= 0:
            raise KernelError("confidence radius must be positive")


@dataclass(frozen=True)
class Gaussian:
    """Gaussian decay weight: omega0 * exp(-|x-y|^2 / sigma^2)."""

    omega0: float
    sigma: float

    def __post_init__(self):
        if not 0.0 <= self.omega0 <= 1.0:
            raise KernelError("gaussian weight must lie in [0,1]")
        if self.sigma <= 0:
            raise KernelError("sigma must be positive")


@dataclass(frozen=True)
class FiniteMixture:
    """State-independent random weight: value omegas[j] with prob probs[j]."""

    omegas: tuple
    probs: tuple

    def __post_init__(self):
        if len(self.omegas) != len(self.probs) or not self.omegas:
            raise KernelError("mixture needs matching nonempty omega/prob lists")
        if any(not 0.0 <= w <= 1.0 for w in self.omegas):
            raise KernelError("mixture weights must lie in [0,1]")
        if any(p < 0 for p in self.probs):
            raise KernelError("mixture probabilities must be nonnegative")
        if abs(sum(self.probs) - 1.0) > 1e-12:
            raise KernelError("mixture probabilities must sum to 1")


WeightLaw = Constant | BoundedConfidence | Gaussian | FiniteMixture


def weight_value(law: WeightLaw, dist) -> float:
    """Deterministic weight at distance `dist` (not defined for mixtures)."""
    if isinstance(law, Constant):
        return np.broadcast_to(law.omega, np.shape(dist)) if np.ndim(dist) \
            else law.omega
    if isinstance(law, BoundedConfidence):
        return np.where(np.asarray(dist) <= law.radius, law.omega0, 0.0) \
            if np.ndim(dist) else (law.omega0 if dist <= law.radius else 0.0)
    if isinstance(law, Gaussian):
        return law.omega0 * np.exp(-np.square(dist) / law.sigma ** 2)
    raise KernelError("mixture law has no deterministic value")


def weight_branches(law: WeightLaw, dist: float) -> list[tuple[float, float]]:
    """Enumerate (weight, probability) branches at a given distance."""
    if isinstance(law, FiniteMixture):
        return list(zip(law.omegas, law.probs))
    return [(float(weight_value(law, dist)), 1.0)]


def sample_weight(law: WeightLaw, dist: float, rng: np.random.Generator) -> float:
    if isinstance(law, FiniteMixture):
        u = rng.random()
        acc = 0.0
        for w, p in zip(law.omegas, law.probs):
            acc += p
            if u < acc:
                return w
        return law.omegas[-1]
    return float(weight_value(law, dist))


# ---------------------------------------------------------------------------
# environments


@dataclass(frozen=True)
class EnvAtom:
    z: float


@dataclass(frozen=True)
class EnvUniform:
    a: float
    b: float

    def __post_init__(self):
        if not self.b > self.a:
            raise KernelError("environment interval needs b > a")


@dataclass(frozen=True)
class EnvGrid:
    grid: GridMeasure1D

    def __post_init__(self):
        if not self.grid.normalized:
            raise KernelError("environment grid must be normalized")


@dataclass(frozen=True)
class EnvBump:
    """Smooth bump density proportional to exp(-(1-(x-3)^2)^-1) on (2,4)."""


EnvironmentSpec = EnvAtom | EnvUniform | EnvGrid | EnvBump | None

_BUMP_NODES = 1 << 13  # Simpson node count; the bump is C-infinity


def _bump_unnormalized(x: np.ndarray) -> np.ndarray:
    u = 1.0 - (x - 3.0) ** 2
    out = np.zeros_like(x)
    inside = u > 0
    out[inside] = np.exp(-1.0 / u[inside])
    return out


@lru_cache(maxsize=1)
def _bump_norm() -> float:
    x = np.linspace(2.0, 4.0, _BUMP_NODES + 1)
    return float(simpson(_bump_unnormalized(x), x=x))


def env_support(e: EnvironmentSpec) -> tuple[float, float]:
    if isinstance(e, EnvAtom):
        return (e.z, e.z)
    if isinstance(e, EnvUniform):
        return (e.a, e.b)
    if isinstance(e, EnvGrid):
        return (e.grid.lo, e.grid.hi)
    if isinstance(e, EnvBump):
        return (2.0, 4.0)
    raise KernelError("no environment configured")


def env_moment(e: EnvironmentSpec, k: int) -> float:
    """k-th moment of the environment distribution; exact for atoms and
    intervals, composite Simpson for densities."""
    if k < 1:
        raise KernelError("moment order must be >= 1")
    if isinstance(e, EnvAtom):
        return e.z ** k
    if isinstance(e, EnvUniform):
        return (e.b ** (k + 1) - e.a ** (k + 1)) / ((k + 1) * (e.b - e.a))
    if isinstance(e, EnvGrid):
        # exact polynomial integral of the piecewise-constant density
        g = e.grid
        edges = g.lo + np.arange(g.m + 1) * g.h
        cell_int = (edges[1:] ** (k + 1) - edges[:-1] ** (k + 1)) / ((k + 1) * g.h)
        return float(np.dot(g.cells, cell_int))
    if isinstance(e, EnvBump):
        x = np.linspace(2.0, 4.0, _BUMP_NODES + 1)
        return float(simpson(_bump_unnormalized(x) * x ** k, x=x)) / _bump_norm()
    raise KernelError("no environment configured")


def env_atoms(e: EnvironmentSpec, m: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Realize the environment as grid atoms (positions, masses) for the
    deterministic solver. Atoms are exact; densities use m cells."""
    if isinstance(e, EnvAtom):
        return np.array([e.z]), np.array([1.0])
    if isinstance(e, EnvUniform):
        g = GridMeasure1D.uniform(e.a, e.b, m)
        return g.centers, np.asarray(g.cells)
    if isinstance(e, EnvGrid):
        return e.grid.centers, np.asarray(e.grid.cells)
    if isinstance(e, EnvBump):
        g = env_bump_grid(m)
        return g.centers, np.asarray(g.cells)
    raise KernelError("no environment configured")


def env_bump_grid(m: int = 256) -> GridMeasure1D:
    """Bump density realized as a normalized histogram on (2,4)."""
    h = 2.0 / m
    cells = np.empty(m)
    # per-cell mass by Simpson on each cell (smooth integrand)
    for i in range(m):
        x = np.linspace(2.0 + i * h, 2.0 + (i + 1) * h, 9)
        cells[i] = simpson(_bump_unnormalized(x), x=x)
    cells /= cells.sum()
    return GridMeasure1D(2.0, 4.0, cells)


def make_env_sampler(e: EnvironmentSpec, m: int = 1024):
    """Return sampler(rng) -> float. Densities use inverse-CDF sampling on a
    grid with uniform jitter within the selected cell."""
    if isinstance(e, EnvAtom):
        z = e.z
        return lambda rng: z
    if isinstance(e, EnvUniform):
        a, b = e.a, e.b
        return lambda rng: rng.uniform(a, b)
    if isinstance(e, (EnvGrid, EnvBump)):
        grid = e.grid if isinstance(e, EnvGrid) else env_bump_grid(m)
        cdf = np.cumsum(grid.cells)
        cdf /= cdf[-1]
        lo, h = grid.lo, grid.h

        def sampler(rng):
            i = int(np.searchsorted(cdf, rng.random(), side="right"))
            i = min(i, grid.m - 1)
            return lo + (i + rng.random()) * h

        return sampler
    raise KernelError("no environment configured")


# ---------------------------------------------------------------------------
# the full kernel


@dataclass(frozen=True)
class KernelSpec:
    """Full interaction kernel: mixture weight alpha, internal weight law,
    external weight law, and environment distribution."""

    alpha: float
    internal: WeightLaw
    external: WeightLaw = Constant(0.0)
    environment: EnvironmentSpec = None

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise KernelError("alpha must lie in [0,1]")
        if self.alpha < 1.0 and self.environment is None:
            raise KernelError("environment required")


def internal_weight(k: KernelSpec, x: float, y: float,
                    rng: np.random.Generator | None = None) -> float:
    """Sample (or evaluate, for deterministic laws) the internal trust
    weight for the pair (x, y)."""
    dist = abs(x - y) if np.ndim(x) == 0 else float(np.linalg.norm(
        np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))
    if isinstance(k.internal, FiniteMixture) and rng is None:
        raise KernelError("mixture law needs an rng")
    return sample_weight(k.internal, dist,
                         rng if rng is not None else np.random.default_rng(0))


def apply_update(k: KernelSpec, x, rng: np.random.Generator, y=None,
                 env_sampler=None):
    """Draw the activated agent's new opinion from kappa(.|x, y).

    env_sampler may be supplied to reuse a prebuilt environment sampler in
    hot loops; otherwise one is built on the fly.
    """
    if k.alpha > 0.0 and y is None:
        raise KernelError("observed opinion y required when alpha > 0")
    if k.alpha >= 1.0 or (k.alpha > 0.0 and rng.random() < k.alpha):
        dist = abs(x - y) if np.ndim(x) == 0 else float(
            np.linalg.norm(np.asarray(x, float) - np.asarray(y, float)))
        w = sample_weight(k.internal, dist, rng)
        return (1.0 - w) * x + w * y
    if k.environment is None:
        raise KernelError("environment required")
    if env_sampler is None:
        env_sampler = make_env_sampler(k.environment)
    e = env_sampler(rng)
    dist = abs(x - e) if np.ndim(x) == 0 else float(
        np.linalg.norm(np.asarray(x, float) - e))
    u = sample_weight(k.external, dist, rng)
    return (1.0 - u) * x + u * e
