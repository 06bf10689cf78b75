"""Concentration harness: how far the finite-n empirical process strays
from the mean-field solution, as a function of n.

For each population size and replica we record
D = max over sample times of W1(empirical measure, mean-field reference),
then estimate tail probabilities P(D >= eps) and the slope of log P versus
n. The mean-field reference is computed once (RK4, fine grid) and its own
discretization error is estimated by grid/step refinement; the harness
aborts if that error is not small against the measured deviations.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass

import numpy as np

from .agent_sim import InitialLaw, SimConfig, initial_support, run
from .kernels import BoundedConfidence, KernelSpec, env_support
from .meanfield import SolverConfig, integrate
from .measures import GridMeasure1D, wasserstein1_1d


class ExperimentError(ValueError):
    pass


@dataclass(frozen=True)
class ConcentrationConfig:
    kernel: KernelSpec
    initial: InitialLaw
    tau: float = 5.0
    sample_times: tuple = ()
    n_list: tuple = (100, 300, 1000, 3000)
    replicas: int = 100
    eps_list: tuple = ()
    base_seed: int = 0
    ref_dt: float = 0.005
    ref_m: int = 2000

    def __post_init__(self):
        if self.replicas < 20:
            raise ExperimentError("need >= 20 replicas for tail estimation")
        times = tuple(float(s) for s in self.sample_times)
        if not times:
            times = tuple(np.linspace(0.0, self.tau, 20))
        if any(s < 0 or s > self.tau for s in times):
            raise ExperimentError("sample times must lie in [0, tau]")
        object.__setattr__(self, "sample_times", times)
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))

    @property
    def outside_theorem_hypotheses(self) -> bool:
        """Bounded-confidence weights are not globally Lipschitz; deviation
        is still measurable but the exponential tail bound is not implied."""
        return isinstance(self.kernel.internal, BoundedConfidence)


@dataclass(frozen=True)
class DeviationTable:
    """Rows (n, replica_index, D), ordered by (n, replica_index)."""

    rows: tuple

    def for_n(self, n: int) -> np.ndarray:
        return np.array([d for (nn, _, d) in self.rows if nn == n])

    def median_by_n(self) -> list[tuple[int, float]]:
        ns = sorted({nn for (nn, _, _) in self.rows})
        return [(n, float(np.median(self.for_n(n)))) for n in ns]


def _domain(cfg: ConcentrationConfig) -> tuple[float, float]:
    lo, hi = initial_support(cfg.initial)
    if cfg.kernel.alpha < 1.0 and cfg.kernel.environment is not None:
        elo, ehi = env_support(cfg.kernel.environment)
        lo, hi = min(lo, elo), max(hi, ehi)
    return lo, hi


def _reference(cfg: ConcentrationConfig, m: int, dt: float):
    lo, hi = _domain(cfg)
    g0 = _initial_grid(cfg.initial, lo, hi, m)
    solver = SolverConfig(lo, hi, m=m, dt=dt, horizon=cfg.tau,
                          snapshot_times=cfg.sample_times, scheme="rk4")
    return integrate(g0, cfg.kernel, solver)


def _initial_grid(initial: InitialLaw, lo: float, hi: float,
                  m: int) -> GridMeasure1D:
    from .agent_sim import InitAtoms, InitGrid, InitUniform

    if isinstance(initial, InitUniform):
        return GridMeasure1D.uniform(lo, hi, m, support=(initial.a, initial.b))
    if isinstance(initial, InitGrid):
        g = initial.grid
        # rebin onto the solver grid by cell-center assignment
        h = (hi - lo) / m
        idx = np.clip(((g.centers - lo) / h).astype(int), 0, m - 1)
        cells = np.bincount(idx, weights=g.cells, minlength=m)[:m]
        return GridMeasure1D(lo, hi, cells / cells.sum())
    if isinstance(initial, InitAtoms):
        h = (hi - lo) / m
        x = initial.measure.positions[:, 0]
        idx = np.clip(((x - lo) / h).astype(int), 0, m - 1)
        cells = np.bincount(idx, weights=initial.measure.weights,
                            minlength=m)[:m]
        return GridMeasure1D(lo, hi, cells / cells.sum())
    raise ExperimentError(f"unknown initial law {initial!r}")


def _density_w1(a: GridMeasure1D, b: GridMeasure1D) -> float:
    """W1 between two histograms read as piecewise-uniform densities
    (piecewise-linear CDFs). Used for the discretization-error estimate,
    where comparing cell-center atom sets of nested grids would inflate
    the result by an O(h) atomization offset."""
    ea = a.lo + np.arange(a.m + 1) * a.h
    eb = b.lo + np.arange(b.m + 1) * b.h
    edges = np.union1d(ea, eb)
    fa = np.interp(edges, ea, np.concatenate([[0.0], np.cumsum(a.cells)]))
    fb = np.interp(edges, eb, np.concatenate([[0.0], np.cumsum(b.cells)]))
    d0 = fa[:-1] - fb[:-1]
    d1 = fa[1:] - fb[1:]
    # the CDF difference is linear on each segment; integrate |.| exactly,
    # splitting segments where the sign changes
    denom = np.maximum(np.abs(d0) + np.abs(d1), 1e-300)
    seg = np.where(d0 * d1 >= 0, 0.5 * (np.abs(d0) + np.abs(d1)),
                   0.5 * (d0 * d0 + d1 * d1) / denom)
    return float(np.dot(np.diff(edges), seg))


def _replica_seed(base_seed: int, n: int, replica: int) -> int:
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(n, replica))
    state = ss.generate_state(2, dtype=np.uint64)
    return int(state[0]) << 64 | int(state[1])


def _one_replica(args) -> tuple[int, int, float]:
    cfg, reference, n, replica = args
    sim = SimConfig(n=n, kernel=cfg.kernel, initial=cfg.initial,
                    horizon=cfg.tau, snapshot_times=cfg.sample_times,
                    seed=_replica_seed(cfg.base_seed, n, replica),
                    allow_self=True)
    snaps = run(sim)
    d = max(wasserstein1_1d(emp, ref)
            for (_, emp), (_, ref) in zip(snaps, reference))
    return (n, replica, float(d))


def run_concentration(cfg: ConcentrationConfig, threads: int = 1,
                      skip_refinement_check: bool = False) -> DeviationTable:
    """Compute the deviation table. Deterministic given base_seed; replicas
    use allow_self=True to match the independent-sampling structure of the
    mean-field operator."""
    reference = _reference(cfg, cfg.ref_m, cfg.ref_dt)
    jobs = [(cfg, reference, n, r)
            for n in cfg.n_list for r in range(cfg.replicas)]
    if threads > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_one_replica, jobs,
                                  chunksize=max(1, len(jobs) // (4 * threads))))
    else:
        results = [_one_replica(j) for j in jobs]
    results.sort(key=lambda r: (r[0], r[1]))
    table = DeviationTable(tuple(results))
    if not skip_refinement_check:
        coarse = _reference(cfg, cfg.ref_m // 2, cfg.ref_dt * 2)
        disc_err = max(_density_w1(a, b)
                       for (_, a), (_, b) in zip(reference, coarse))
        d_min = min(d for (_, _, d) in table.rows)
        if disc_err >= 0.1 * d_min:
            raise ExperimentError(
                f"mean-field discretization error {disc_err:.3g} is not "
                f"small against the smallest deviation {d_min:.3g}; refine "
                "the reference solver")
    return table


def tail_rates(tbl: DeviationTable, eps: float):
    """Empirical tail probabilities P(D >= eps) per n and the least-squares
    slope of log P versus n (with its standard error).

    Only n values with tails strictly inside (0, 1) enter the fit.
    Returns (points, slope, stderr) with points = [(n, p), ...].
    """
    ns = sorted({n for (n, _, _) in tbl.rows})
    points = []
    for n in ns:
        d = tbl.for_n(n)
        points.append((n, float(np.mean(d >= eps))))
    usable = [(n, p) for n, p in points if 0.0 < p < 1.0]
    if len(usable) < 2:
        raise ExperimentError(
            "eps outside resolvable range; adjust eps_list or R")
    x = np.array([n for n, _ in usable], dtype=float)
    y = np.log([p for _, p in usable])
    xbar = x.mean()
    sxx = float(np.sum((x - xbar) ** 2))
    slope = float(np.sum((x - xbar) * (y - y.mean())) / sxx)
    intercept = float(y.mean() - slope * xbar)
    resid = y - (intercept + slope * x)
    dof = len(usable) - 2
    stderr = float(np.sqrt(np.sum(resid ** 2) / dof / sxx)) if dof > 0 else 0.0
    return points, slope, stderr
