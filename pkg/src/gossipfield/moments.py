"""Directional moment system for the constant-weight gossip model with an
influential environment.

The moments m^(k)_t = int (x.z)^k dmu_t obey a lower-triangular ODE system:

    d/dt m^(1) = (1-alpha) upsilon (n^(1) - m^(1))
    d/dt m^(k) = -gamma_k m^(k) + f_k(m^(1),...,m^(k-1))
                 + (1-alpha) upsilon^k n^(k),   k >= 2

with gamma_k = 1 - alpha ((1-omega)^k + omega^k) - (1-alpha)(1-upsilon)^k
and f_k the bilinear coupling of lower moments with themselves and with the
environment moments n^(k).

For alpha < 1 the stationary moments follow recursively from the order-k
stationary condition. Note the recursion's environment term carries
upsilon^(k+1) at order k+1: this is what d/dt m^(k+1) = 0 forces, and it is
confirmed here against long-horizon integration (and by the exact identity
for a point-mass environment, where the limit moments must be c^k).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np


class MomentError(ValueError):
    pass


@dataclass(frozen=True)
class MomentParams:
    alpha: float
    omega: float
    upsilon: float
    env_moments: tuple        # n^(k), k = 1..K (ignored when alpha = 1)
    initial_moments: tuple    # m^(k)_0, k = 1..K
    K: int

    def __post_init__(self):
        for name in ("alpha", "omega", "upsilon"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise MomentError(f"{name} must lie in [0,1]")
        if self.K < 1:
            raise MomentError("K must be >= 1")
        if len(self.initial_moments) != self.K:
            raise MomentError("need K initial moments")
        env = tuple(float(v) for v in self.env_moments)
        if self.alpha < 1.0 and len(env) != self.K:
            raise MomentError("need K environment moments when alpha < 1")
        object.__setattr__(self, "env_moments", env)
        object.__setattr__(self, "initial_moments",
                           tuple(float(v) for v in self.initial_moments))

    def moment_scale(self) -> float:
        """M with |m^(k)| <= M^k a priori, from initial and environment
        moments."""
        vals = [abs(v) ** (1.0 / (i + 1))
                for i, v in enumerate(self.initial_moments) if v != 0]
        vals += [abs(v) ** (1.0 / (i + 1))
                 for i, v in enumerate(self.env_moments) if v != 0]
        return max(vals, default=1.0)


@dataclass(frozen=True)
class MomentTrajectory:
    times: np.ndarray
    values: np.ndarray  # shape (K, len(times)); row k-1 is m^(k)

    def row(self, k: int) -> np.ndarray:
        return self.values[k - 1]

    def jensen_violation(self) -> float:
        """Max of (m^(1))^2 - m^(2) over stored times (<= 0 for genuine
        probability measures); requires K >= 2."""
        if self.values.shape[0] < 2:
            raise MomentError("Jensen check needs K >= 2")
        return float(np.max(self.values[0] ** 2 - self.values[1]))


def gamma_k(p: MomentParams, k: int) -> float:
    """Relaxation rate of the order-k moment."""
    if k < 1:
        raise MomentError("k must be >= 1")
    a, w, u = p.alpha, p.omega, p.upsilon
    return 1.0 - a * ((1.0 - w) ** k + w ** k) - (1.0 - a) * (1.0 - u) ** k


def f_k(p: MomentParams, k: int, m) -> float:
    """Bilinear coupling of lower-order moments entering d/dt m^(k)."""
    if k < 2:
        raise MomentError("f_k undefined below order 2")
    m = tuple(m)
    if len(m) < k - 1:
        raise MomentError(f"f_{k} needs moments 1..{k - 1}")
    a, w, u = p.alpha, p.omega, p.upsilon
    abar = 1.0 - a
    wbar = 1.0 - w
    ubar = 1.0 - u
    total = 0.0
    for j in range(1, k):
        c = comb(k, j)
        term = a * wbar ** j * w ** (k - j) * m[j - 1] * m[k - j - 1]
        if abar > 0.0:
            term += abar * ubar ** j * u ** (k - j) * m[j - 1] \
                * p.env_moments[k - j - 1]
        total += c * term
    return total


def _rhs(p: MomentParams, m: np.ndarray) -> np.ndarray:
    a, u = p.alpha, p.upsilon
    abar = 1.0 - a
    out = np.empty_like(m)
    n1 = p.env_moments[0] if abar > 0.0 else 0.0
    out[0] = abar * u * (n1 - m[0])
    for k in range(2, p.K + 1):
        nk = p.env_moments[k - 1] if abar > 0.0 else 0.0
        out[k - 1] = -gamma_k(p, k) * m[k - 1] + f_k(p, k, m) \
            + abar * u ** k * nk
    return out


def integrate_moments(p: MomentParams, T: float, dt: float = 0.005) -> MomentTrajectory:
    """Solve the triangular moment system by classical RK4.

    The lower-triangular structure means the first K' rows are identical
    whatever K >= K' is used.
    """
    gmax = max(max(gamma_k(p, k) for k in range(1, p.K + 1)), 1.0)
    if dt > 0.01 / gmax + 1e-15:
        raise MomentError("dt too large for the stiffest moment rate")
    n_steps = int(np.ceil(T / dt - 1e-9))
    guard = 10.0 * p.moment_scale() ** np.arange(1, p.K + 1)
    m = np.array(p.initial_moments, dtype=float)
    times = np.empty(n_steps + 1)
    values = np.empty((p.K, n_steps + 1))
    times[0] = 0.0
    values[:, 0] = m
    for i in range(n_steps):
        k1 = _rhs(p, m)
        k2 = _rhs(p, m + 0.5 * dt * k1)
        k3 = _rhs(p, m + 0.5 * dt * k2)
        k4 = _rhs(p, m + dt * k3)
        m = m + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if np.any(np.abs(m) > guard):
            raise MomentError("moment blow-up: check params")
        times[i + 1] = (i + 1) * dt
        values[:, i + 1] = m
    return MomentTrajectory(times, values)


def limit_moments(p: MomentParams) -> list[float]:
    """Stationary moments for alpha < 1, by the triangular recursion
    m^(1) = n^(1),
    m^(k+1) = [f_{k+1}(m^(1..k)) + (1-alpha) upsilon^(k+1) n^(k+1)]
              / gamma_{k+1}.

    Independent of the initial moments by construction.
    """
    if p.alpha >= 1.0:
        raise MomentError("limit recursion requires alpha < 1")
    for k in range(1, p.K + 1):
        if gamma_k(p, k) <= 0.0:
            raise MomentError(f"gamma_{k} must be positive for the recursion")
    abar = 1.0 - p.alpha
    u = p.upsilon
    out = [p.env_moments[0]]
    for k in range(2, p.K + 1):
        val = (f_k(p, k, out) + abar * u ** k * p.env_moments[k - 1]) \
            / gamma_k(p, k)
        out.append(val)
    return out
