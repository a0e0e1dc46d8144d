"""Bandit convex optimization with one-point gradient estimates (AdaBGD).

The learner works in *centered* coordinates: the feasible set is translated
so that the origin is interior, with ``r*B <= X <= R*B``. Sets convert points
back to the caller's coordinates with ``to_original``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from banditnet.errors import ConstructionError, InvariantFailure, StructuralError


class BoxSet:
    """Axis-aligned box ``[lo, hi]`` re-centered at its midpoint."""

    geometry = "box"

    def __init__(self, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(hi, dtype=np.float64))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise StructuralError("box bounds must be 1-d arrays of equal length")
        if not np.all(hi > lo):
            raise ConstructionError("box needs hi > lo in every coordinate (nonempty interior)")
        self.lo, self.hi = lo, hi
        self.center = (lo + hi) / 2.0
        self.half = (hi - lo) / 2.0
        self.dim = lo.size
        self.inner_radius = float(self.half.min())
        self.outer_radius = float(np.linalg.norm(self.half))

    def project(self, y, shrink: float = 1.0) -> np.ndarray:
        """Euclidean projection onto ``shrink * X`` (centered coordinates)."""
        lim = shrink * self.half
        return np.clip(y, -lim, lim)

    def contains(self, y, shrink: float = 1.0, tol: float = 1e-9) -> bool:
        return bool((abs(y) <= shrink * self.half + tol).all())

    def to_original(self, y) -> np.ndarray:
        return self.center + y

    def from_original(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) - self.center


class BallSet:
    """Euclidean ball of radius ``radius`` around ``center``."""

    geometry = "ball"

    def __init__(self, center, radius: float):
        self.center = np.atleast_1d(np.asarray(center, dtype=np.float64))
        if not radius > 0:
            raise ConstructionError("ball radius must be positive")
        self.radius = float(radius)
        self.dim = self.center.size
        self.inner_radius = self.radius
        self.outer_radius = self.radius

    def project(self, y, shrink: float = 1.0) -> np.ndarray:
        lim = shrink * self.radius
        norm = float(np.linalg.norm(y))
        if norm <= lim:
            return np.array(y, dtype=np.float64)
        return np.asarray(y, dtype=np.float64) * (lim / norm)

    def contains(self, y, shrink: float = 1.0, tol: float = 1e-9) -> bool:
        return float(np.linalg.norm(y)) <= shrink * self.radius + tol

    def to_original(self, y) -> np.ndarray:
        return self.center + y

    def from_original(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) - self.center


@dataclass(frozen=True)
class ScheduleTriple:
    eta: float
    delta: float
    alpha: float


class QueueAdaptiveSchedule:
    """Queue-dependent step size, exploration radius and shrink factor.

    Each round, with ``qi = ||Q||_inf`` and ``q2 = ||Q||_2`` over the flattened
    queue matrix::

        accum += ((qi + V G)^2 (q2 + V L)^2)^(1/3)
        eta    = (B / (X1 + X2 + accum))^(3/4),   B = C_lam * T^(1/2 - delta_lam)
        delta  = (eta d^2 (qi + V G)^2 / (q2 + V L))^(1/3)
        alpha  = delta / r

    The guard terms ``X1 = B^(7/3) (4 d^2 / r^3)^(28/9) (2NM + R)^(4/3)`` and
    ``X2 = B (d^2 V G^2 / (r^3 L))^(4/3)`` keep ``alpha < 1``.
    """

    def __init__(self, *, c_lambda, delta_lambda, horizon, V, utility_bound, lipschitz,
                 capacity_bound, arrival_bound, server_count, inner_radius, dim):
        if not (V * utility_bound > 0 and V * lipschitz > 0):
            raise ConstructionError("schedule needs V*G > 0 and V*L > 0")
        if not c_lambda > 0:
            raise ConstructionError("path-length constant C_lambda must be positive")
        if not inner_radius > 0 or dim < 1 or horizon < 1:
            raise ConstructionError("need inner_radius > 0, dim >= 1, horizon >= 1")
        self.V = float(V)
        self.G = float(utility_bound)
        self.L = float(lipschitz)
        self.r = float(inner_radius)
        self.d = int(dim)
        self.budget = c_lambda * horizon ** (0.5 - delta_lambda)
        inc_bound = 2.0 * server_count * capacity_bound + arrival_bound
        self.x1 = (self.budget ** (7.0 / 3.0)
                   * (4.0 * self.r ** -3 * self.d ** 2) ** (28.0 / 9.0)
                   * inc_bound ** (4.0 / 3.0))
        self.x2 = self.budget * (self.r ** -3 * self.d ** 2 * self.V * self.G ** 2 / self.L) ** (4.0 / 3.0)
        self.denom_accum = 0.0
        self.rounds = 0

    def next(self, q) -> ScheduleTriple:
        flat = np.asarray(q, dtype=np.float64).ravel()  # row-major (server-major)
        qi = float(abs(flat).max()) if flat.size else 0.0
        q2 = math.sqrt(float(flat @ flat))
        self.last_norms = (qi, q2)
        mag = qi + self.V * self.G
        lip = q2 + self.V * self.L
        self.denom_accum += ((mag * mag) * (lip * lip)) ** (1.0 / 3.0)
        self.rounds += 1
        eta = (self.budget / (self.x1 + self.x2 + self.denom_accum)) ** 0.75
        delta = (eta * self.d ** 2 * mag * mag / lip) ** (1.0 / 3.0)
        alpha = delta / self.r
        if not alpha < 1.0:
            raise InvariantFailure(f"shrink factor alpha={alpha} >= 1 at round {self.rounds}")
        return ScheduleTriple(eta, delta, alpha)


class PowerSchedule:
    """Queue-independent schedule ``eta_t = eta0 t^-a``, ``delta_t = delta0 t^-b``.

    For standalone bandit optimization where no queue is involved.
    """

    def __init__(self, eta0: float, delta0: float, inner_radius: float, eta_power: float = 0.75, delta_power: float = 0.25):
        if not (eta0 > 0 and delta0 > 0 and eta_power > 0 and delta_power >= 0):
            raise ConstructionError("power schedule needs positive eta0, delta0, eta_power")
        if not delta0 < inner_radius:
            raise ConstructionError("delta0 must be below the inner radius so that alpha < 1")
        self.eta0, self.delta0 = eta0, delta0
        self.r = inner_radius
        self.a, self.b = eta_power, delta_power
        self.rounds = 0

    def next(self, q=None) -> ScheduleTriple:
        self.rounds += 1
        t = self.rounds
        eta = self.eta0 * t ** -self.a
        delta = self.delta0 * t ** -self.b
        return ScheduleTriple(eta, delta, delta / self.r)


def sample_unit_sphere(dim: int, rng, size: int | None = None) -> np.ndarray:
    """Uniform direction(s) on the unit sphere via normalized Gaussians."""
    if size is None:
        z = rng.standard_normal(dim)
        return z / math.sqrt(float(z @ z))
    z = rng.standard_normal((size, dim))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


class AdaBGD:
    """Projected bandit gradient descent with shrinking feasible set.

    ``act`` plays ``x = y + delta * s`` for a uniform unit ``s``; ``feed``
    takes the scalar loss observed at ``x`` and steps
    ``y <- Proj_{(1 - alpha) X}[y - eta (d / delta) loss * s]``.
    """

    def __init__(self, domain):
        self.domain = domain
        self.dim = domain.dim
        self.y = np.zeros(self.dim)
        self.last_direction: np.ndarray | None = None
        self.max_alpha = 0.0

    def act(self, triple: ScheduleTriple, rng) -> np.ndarray:
        """Return the played point in the caller's (original) coordinates."""
        if not triple.alpha < 1.0:
            raise InvariantFailure(f"alpha={triple.alpha} >= 1")
        self.max_alpha = max(self.max_alpha, triple.alpha)
        # alpha can grow between rounds; keep y inside the current shrunk set
        self.y = self.domain.project(self.y, 1.0 - triple.alpha)
        s = sample_unit_sphere(self.dim, rng)
        self.last_direction = s
        return self.domain.to_original(self.y + triple.delta * s)

    def feed(self, triple: ScheduleTriple, loss_value: float, s_used=None) -> None:
        s = self.last_direction if s_used is None else np.asarray(s_used, dtype=np.float64)
        if s is None:
            raise ValueError("feed called before act and without a direction")
        step = self.y - triple.eta * (self.dim / triple.delta) * float(loss_value) * s
        self.y = self.domain.project(step, 1.0 - triple.alpha)


def gradient_estimator_mean(loss, y, delta: float, samples: int, rng, return_stderr: bool = False):
    """Monte Carlo mean of the one-point estimator ``(d/delta) loss(y + delta s) s``.

    Its expectation is the gradient of the delta-smoothed loss at ``y``.
    """
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    d = y.size
    s = sample_unit_sphere(d, rng, size=samples)
    vals = np.array([loss(y + delta * row) for row in s], dtype=np.float64)
    est = (d / delta) * vals[:, None] * s
    mean = est.mean(axis=0)
    if return_stderr:
        return mean, est.std(axis=0, ddof=1) / math.sqrt(samples)
    return mean
