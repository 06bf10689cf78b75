"""Event-driven simulation of the finite-population stochastic opinion
process.

Each of the n agents carries a rate-1 Poisson clock; the superposition makes
jump times exponential with mean 1/n. At a jump a uniformly chosen agent
updates her opinion through the interaction kernel, observing another
uniformly chosen agent (or, in the symmetric variant, both update with the
same sampled weight).

Opinions are scalar (d = 1); the analysis pipeline (exact W1, grid solver)
is one-dimensional throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import (Constant, FiniteMixture, KernelSpec, env_support,
                      make_env_sampler, sample_weight, weight_value)
from .measures import AtomicMeasure, GridMeasure1D


class SimError(ValueError):
    pass


# ---------------------------------------------------------------------------
# initial laws


@dataclass(frozen=True)
class InitUniform:
    a: float
    b: float

    def __post_init__(self):
        if not self.b > self.a:
            raise SimError("uniform initial law needs b > a")


@dataclass(frozen=True)
class InitAtoms:
    measure: AtomicMeasure

    def __post_init__(self):
        if not self.measure.normalized:
            raise SimError("atomic initial law must be normalized")
        if self.measure.dim != 1:
            raise SimError("simulator is 1-D")


@dataclass(frozen=True)
class InitGrid:
    grid: GridMeasure1D

    def __post_init__(self):
        if not self.grid.normalized:
            raise SimError("grid initial law must be normalized")


InitialLaw = InitUniform | InitAtoms | InitGrid


def sample_initial(law: InitialLaw, n: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(law, InitUniform):
        return rng.uniform(law.a, law.b, n)
    if isinstance(law, InitAtoms):
        idx = rng.choice(law.measure.weights.size, size=n,
                         p=law.measure.weights)
        return law.measure.positions[idx, 0]
    if isinstance(law, InitGrid):
        g = law.grid
        cdf = np.cumsum(g.cells)
        cdf /= cdf[-1]
        i = np.searchsorted(cdf, rng.random(n), side="right")
        i = np.minimum(i, g.m - 1)
        return g.lo + (i + rng.random(n)) * g.h
    raise SimError(f"unknown initial law {law!r}")


def initial_support(law: InitialLaw) -> tuple[float, float]:
    if isinstance(law, InitUniform):
        return (law.a, law.b)
    if isinstance(law, InitAtoms):
        x = law.measure.positions[:, 0]
        return (float(x.min()), float(x.max()))
    if isinstance(law, InitGrid):
        return (law.grid.lo, law.grid.hi)
    raise SimError(f"unknown initial law {law!r}")


# ---------------------------------------------------------------------------
# state and configuration


@dataclass
class SimState:
    """One stochastic replica: opinions, continuous clock, PRNG, jump count."""

    opinions: np.ndarray
    t: float
    rng: np.random.Generator
    update_count: int = 0

    def __post_init__(self):
        self.opinions = np.asarray(self.opinions, dtype=float)
        if self.opinions.ndim != 1:
            raise SimError("simulator is 1-D")
        if self.opinions.size < 2:
            raise SimError("need at least two agents")

    @property
    def n(self) -> int:
        return self.opinions.size


@dataclass(frozen=True)
class SimConfig:
    n: int
    kernel: KernelSpec
    initial: InitialLaw
    horizon: float
    snapshot_times: tuple
    seed: int = 0
    symmetric: bool = False
    allow_self: bool = False

    def __post_init__(self):
        if self.n < 2:
            raise SimError("need at least two agents")
        times = tuple(float(s) for s in self.snapshot_times)
        if any(s < 0 or s > self.horizon for s in times):
            raise SimError("snapshot times must lie in [0, horizon]")
        if list(times) != sorted(times):
            raise SimError("snapshot times must be sorted")
        object.__setattr__(self, "snapshot_times", times)


def init_state(cfg: SimConfig) -> SimState:
    rng = np.random.default_rng(cfg.seed)
    return SimState(sample_initial(cfg.initial, cfg.n, rng), 0.0, rng)


def dispersion(s: SimState) -> float:
    """Mean squared deviation of opinions around their current mean."""
    x = s.opinions
    return float(np.mean((x - x.mean()) ** 2))


# ---------------------------------------------------------------------------
# dynamics


def step(s: SimState, k: KernelSpec, symmetric: bool = False,
         allow_self: bool = False, env_sampler=None) -> SimState:
    """One jump of the process, in place: advance the clock by an
    exponential increment of mean 1/n, pick the interacting pair, update.

    Returns the same (mutated) state for chaining.
    """
    n = s.n
    rng = s.rng
    s.t += rng.exponential(1.0 / n)
    a = int(rng.integers(n))
    if allow_self:
        b = int(rng.integers(n))
    else:
        b = int(rng.integers(n - 1))
        if b >= a:
            b += 1
    x = s.opinions
    if k.alpha >= 1.0 or rng.random() < k.alpha:
        w = sample_weight(k.internal, abs(x[a] - x[b]), rng)
        xa, xb = x[a], x[b]
        x[a] = (1.0 - w) * xa + w * xb
        if symmetric:
            x[b] = (1.0 - w) * xb + w * xa
    else:
        if env_sampler is None:
            env_sampler = make_env_sampler(k.environment)
        e = env_sampler(rng)
        u = sample_weight(k.external, abs(x[a] - e), rng)
        x[a] = (1.0 - u) * x[a] + u * e
        if symmetric:
            # the symmetric variant concerns pairwise interactions only;
            # environment updates touch a single agent
            pass
    s.update_count += 1
    return s


_CHUNK = 1 << 14


def run(cfg: SimConfig) -> list[tuple[float, AtomicMeasure]]:
    """Run one replica to the horizon, emitting the empirical measure at
    each snapshot time (trajectories are piecewise constant and right
    continuous, so a snapshot holds the value after the last jump at or
    before it). Deterministic given (config, seed)."""
    snapshots, _ = run_with_state(cfg)
    return snapshots


def run_with_state(cfg: SimConfig) -> tuple[list, SimState]:
    """As run(), additionally returning the terminal SimState."""
    state = init_state(cfg)
    k = cfg.kernel
    rng = state.rng
    n = cfg.n
    tau = cfg.horizon
    snaps = cfg.snapshot_times
    symmetric = cfg.symmetric
    allow_self = cfg.allow_self
    alpha = k.alpha
    env_sampler = (make_env_sampler(k.environment)
                   if alpha < 1.0 and k.environment is not None else None)
    internal = k.internal
    external = k.external
    mixture = isinstance(internal, FiniteMixture)
    const_w = internal.omega if isinstance(internal, Constant) else None

    out: list[tuple[float, AtomicMeasure]] = []
    ptr = 0
    x = state.opinions
    t = 0.0
    count = 0
    scale = 1.0 / n
    done = False
    while not done:
        dts = rng.exponential(scale, _CHUNK)
        aa = rng.integers(0, n, _CHUNK)
        if allow_self:
            bb = rng.integers(0, n, _CHUNK)
        else:
            bb = rng.integers(0, n - 1, _CHUNK)
            bb += bb >= aa
        for i in range(_CHUNK):
            t_next = t + dts[i]
            while ptr < len(snaps) and snaps[ptr] < t_next:
                out.append((snaps[ptr], AtomicMeasure.empirical(x.copy())))
                ptr += 1
            if t_next > tau:
                t = t_next
                done = True
                break
            t = t_next
            a = aa[i]
            b = bb[i]
            if alpha >= 1.0 or rng.random() < alpha:
                xa = x[a]
                xb = x[b]
                if const_w is not None:
                    w = const_w
                elif mixture:
                    w = sample_weight(internal, 0.0, rng)
                else:
                    w = weight_value(internal, abs(xa - xb))
                x[a] = (1.0 - w) * xa + w * xb
                if symmetric:
                    x[b] = (1.0 - w) * xb + w * xa
            else:
                e = env_sampler(rng)
                u = sample_weight(external, abs(x[a] - e), rng)
                x[a] = (1.0 - u) * x[a] + u * e
            count += 1
    while ptr < len(snaps):
        out.append((snaps[ptr], AtomicMeasure.empirical(x.copy())))
        ptr += 1
    state.t = t
    state.update_count = count
    return out, state
