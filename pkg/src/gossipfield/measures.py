"""Measure representations: weighted atom sets, 1-D histograms, moments,
exact 1-D Wasserstein-1, and cluster extraction.

All values are immutable after construction; every function here is pure.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

MASS_TOL = 1e-10
WEIGHT_TOL = 1e-12


class MeasureError(ValueError):
    pass


@dataclass(frozen=True)
class AtomicMeasure:
    """Finite weighted point set in R^d.

    positions has shape (n, d); weights has shape (n,), all nonnegative.
    """

    positions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pos = np.atleast_1d(np.asarray(self.positions, dtype=float))
        if pos.ndim == 1:
            pos = pos[:, None]
        w = np.asarray(self.weights, dtype=float)
        if pos.shape[0] != w.shape[0]:
            raise MeasureError("positions and weights length mismatch")
        if np.any(w < 0):
            raise MeasureError("negative atom weight")
        pos.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def normalized(self) -> bool:
        return abs(self.total_mass - 1.0) <= WEIGHT_TOL

    def normalize(self) -> "AtomicMeasure":
        total = self.total_mass
        if total <= 0:
            raise MeasureError("empty measure")
        return AtomicMeasure(self.positions, self.weights / total)

    def shifted(self, c: float) -> "AtomicMeasure":
        return AtomicMeasure(self.positions + c, self.weights)

    @staticmethod
    def dirac(x, weight: float = 1.0) -> "AtomicMeasure":
        pos = np.atleast_1d(np.asarray(x, dtype=float))[None, :]
        return AtomicMeasure(pos, np.array([weight]))

    @staticmethod
    def from_points(points) -> "AtomicMeasure":
        """Build from a list of (position, weight) pairs."""
        pos = np.asarray([p for p, _ in points], dtype=float)
        w = np.asarray([m for _, m in points], dtype=float)
        return AtomicMeasure(pos, w)

    @staticmethod
    def empirical(samples: np.ndarray) -> "AtomicMeasure":
        samples = np.asarray(samples, dtype=float)
        n = samples.shape[0]
        return AtomicMeasure(samples, np.full(n, 1.0 / n))


@dataclass(frozen=True)
class GridMeasure1D:
    """Histogram measure on a uniform 1-D grid: cell i holds mass cells[i]
    at center lo + (i + 1/2) h with h = (hi - lo) / m."""

    lo: float
    hi: float
    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=float)
        if not self.hi > self.lo:
            raise MeasureError("grid needs hi > lo")
        if cells.size < 2:
            raise MeasureError("grid needs at least 2 cells")
        if np.any(cells < 0):
            raise MeasureError("negative cell mass")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @property
    def m(self) -> int:
        return self.cells.size

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / self.m

    @property
    def centers(self) -> np.ndarray:
        return self.lo + (np.arange(self.m) + 0.5) * self.h

    @property
    def total_mass(self) -> float:
        return float(self.cells.sum())

    @property
    def normalized(self) -> bool:
        return abs(self.total_mass - 1.0) <= MASS_TOL

    def normalize(self) -> "GridMeasure1D":
        total = self.total_mass
        if total <= 0:
            raise MeasureError("empty measure")
        return GridMeasure1D(self.lo, self.hi, self.cells / total)

    def as_atoms(self) -> AtomicMeasure:
        """All cell mass placed at the cell center (first-moment exact for
        densities symmetric within each cell; O(h^2) error otherwise)."""
        return AtomicMeasure(self.centers, self.cells)

    @staticmethod
    def uniform(lo: float, hi: float, m: int,
                support: tuple[float, float] | None = None) -> "GridMeasure1D":
        """Uniform density over `support` (default: the whole grid),
        discretized by cell-overlap fractions."""
        if support is None:
            return GridMeasure1D(lo, hi, np.full(m, 1.0 / m))
        a, b = support
        h = (hi - lo) / m
        edges = lo + np.arange(m + 1) * h
        overlap = np.clip(np.minimum(edges[1:], b) - np.maximum(edges[:-1], a),
                          0.0, None)
        total = overlap.sum()
        if total <= 0:
            raise MeasureError("support does not intersect grid")
        return GridMeasure1D(lo, hi, overlap / total)


@dataclass(frozen=True)
class Cluster:
    """A contiguous mass concentration of a grid measure."""

    center: float
    weight: float
    extent: tuple[float, float]


def moment(m, k: int, z=None) -> float:
    """k-th z-weighted moment: integral of (x . z)^k.

    z defaults to the first coordinate axis; must have unit Euclidean norm.
    """
    if k < 1:
        raise MeasureError("moment order must be >= 1 (use total mass for k=0)")
    if isinstance(m, GridMeasure1D):
        if m.total_mass <= 0:
            raise MeasureError("empty measure")
        return float(np.dot(m.cells, m.centers ** k))
    if m.total_mass <= 0:
        raise MeasureError("empty measure")
    if z is None:
        z = np.zeros(m.dim)
        z[0] = 1.0
    z = np.asarray(z, dtype=float)
    if abs(np.linalg.norm(z) - 1.0) > 1e-9:
        raise MeasureError("direction z must have unit norm")
    proj = m.positions @ z
    return float(np.dot(m.weights, proj ** k))


def variance(m) -> float:
    """Second central moment about the mean (d = 1)."""
    m1 = moment(m, 1)
    return moment(m, 2) - m1 * m1


def _to_sorted_atoms(m) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(m, GridMeasure1D):
        m = m.as_atoms()
    if m.dim != 1:
        raise MeasureError("exact W1 only in d=1")
    x = m.positions[:, 0]
    order = np.argsort(x, kind="stable")
    return x[order], m.weights[order]


def wasserstein1_1d(mu, nu) -> float:
    """Exact order-1 Wasserstein distance in d = 1 via the CDF formula:
    the integral of |F_mu - F_nu| over the merged support."""
    for m in (mu, nu):
        if not m.normalized:
            raise MeasureError("W1 requires normalized measures")
    x1, w1 = _to_sorted_atoms(mu)
    x2, w2 = _to_sorted_atoms(nu)
    xs = np.union1d(x1, x2)
    # evaluate each CDF separately at the union points; equal measures then
    # cancel exactly instead of leaving interleaved-cumsum rounding residue
    c1 = np.concatenate(([0.0], np.cumsum(w1)))
    c2 = np.concatenate(([0.0], np.cumsum(w2)))
    f1 = c1[np.searchsorted(x1, xs, side="right")]
    f2 = c2[np.searchsorted(x2, xs, side="right")]
    return float(np.dot(np.abs(f1[:-1] - f2[:-1]), np.diff(xs)))


def wasserstein1_oracle(mu: AtomicMeasure, nu: AtomicMeasure) -> float:
    """Ground-truth W1 for small atomic instances by solving the
    transportation linear program exactly.

    Independent of wasserstein1_1d (LP on the cost matrix |x - y|, no CDF
    shortcut); limited to supports of at most 12 atoms each.
    """
    from scipy.optimize import linprog

    if mu.positions.shape[0] > 12 or nu.positions.shape[0] > 12:
        raise MeasureError("oracle is desk-scale only")
    if not (mu.normalized and nu.normalized):
        raise MeasureError("W1 requires normalized measures")
    a, b = mu.weights, nu.weights
    p = mu.positions.shape[0]
    q = nu.positions.shape[0]
    cost = np.linalg.norm(mu.positions[:, None, :] - nu.positions[None, :, :],
                          axis=2).ravel()
    # Row sums = a, column sums = b; drop one redundant equality.
    A_eq = np.zeros((p + q, p * q))
    for i in range(p):
        A_eq[i, i * q:(i + 1) * q] = 1.0
    for j in range(q):
        A_eq[p + j, j::q] = 1.0
    b_eq = np.concatenate([a, b])
    # default HiGHS tolerances (~1e-7) leave O(1e-9) slack on instances
    # with nearly coincident atoms; tighten to the solver minimum (1e-10)
    # so the oracle resolves such instances exactly
    res = linprog(cost, A_eq=A_eq[:-1], b_eq=b_eq[:-1], bounds=(0, None),
                  method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if not res.success:
        raise MeasureError(f"transport LP failed: {res.message}")
    return float(res.fun)


def detect_clusters(g: GridMeasure1D, mass_threshold: float,
                    gap_cells: int) -> list[Cluster]:
    """Extract mass clusters from a histogram.

    A cell is occupied if its mass exceeds mass_threshold / m (scale-free in
    the grid resolution). Occupied runs separated by fewer than gap_cells
    unoccupied cells are merged; merged runs with total weight at most
    mass_threshold are dropped. Clusters are returned sorted by center.
    """
    if not g.normalized:
        raise MeasureError("detect_clusters needs a normalized grid")
    if not 0 < mass_threshold < 1:
        raise MeasureError("mass_threshold must be in (0,1)")
    if gap_cells < 1:
        raise MeasureError("gap_cells must be >= 1")
    cutoff = mass_threshold / g.m
    occupied = g.cells > cutoff
    centers = g.centers
    runs = []  # (start, end) inclusive
    i = 0
    while i < g.m:
        if occupied[i]:
            j = i
            while j + 1 < g.m and occupied[j + 1]:
                j += 1
            runs.append([i, j])
            i = j + 1
        else:
            i += 1
    merged = []
    for run in runs:
        if merged and run[0] - merged[-1][1] - 1 < gap_cells:
            merged[-1][1] = run[1]
        else:
            merged.append(run)
    clusters = []
    for i, j in merged:
        w = float(g.cells[i:j + 1].sum())
        if w <= mass_threshold:
            continue
        c = float(np.dot(g.cells[i:j + 1], centers[i:j + 1]) / w)
        extent = (g.lo + i * g.h, g.lo + (j + 1) * g.h)
        clusters.append(Cluster(center=c, weight=w, extent=extent))
    clusters.sort(key=lambda cl: cl.center)
    return clusters


def measure_to_csv_rows(t: float, m) -> list[tuple[float, float, float]]:
    """Rows (t, position, mass) for the measure CSV format (d = 1)."""
    if isinstance(m, GridMeasure1D):
        m = m.as_atoms()
    if m.dim != 1:
        raise MeasureError("CSV format is 1-D")
    return [(t, float(x), float(w))
            for x, w in zip(m.positions[:, 0], m.weights)]


def write_measure_csv(fh: io.TextIOBase, snapshots, header_comment: str = ""):
    """Write (t, measure) snapshots in long format: header t,position,mass."""
    if header_comment:
        fh.write(f"# {header_comment}\n")
    fh.write("t,position,mass\n")
    for t, m in snapshots:
        for row in measure_to_csv_rows(t, m):
            fh.write("%.17g,%.17g,%.17g\n" % row)
