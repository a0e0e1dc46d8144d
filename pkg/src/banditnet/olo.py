"""Online linear optimization on the probability simplex.

``AdaPFOL`` wraps a bounded-loss base learner with a magnitude-doubling
restart rule, so it can be fed loss vectors of arbitrary (but announced)
size. ``AdaPFOLBank`` runs many independent copies with the default base
learner in vectorized form; NSO keeps one copy per link in a bank.
"""

from __future__ import annotations

import math
from typing import Callable, Protocol, Sequence

import numpy as np

from banditnet import _kernels
from banditnet.errors import ContractViolation, StructuralError

SIMPLEX_L1_DIAMETER = 2.0


class BaseLearner(Protocol):
    """Full-information learner for losses with ``||g||_inf <= 1``."""

    def act(self) -> np.ndarray: ...

    def feed(self, g: np.ndarray) -> None: ...


def _grid_step_sizes(dim: int, horizon: int) -> np.ndarray:
    # smallest step suits a static comparator over `horizon` rounds; the grid
    # doubles until it covers a comparator moving every round
    l2_diam = math.sqrt(2.0)
    l2_grad = math.sqrt(dim)
    base = l2_diam / (l2_grad * math.sqrt(horizon))
    count = int(math.ceil(math.log2(math.sqrt(1.0 + 2.0 * horizon)))) + 2
    return base * 2.0 ** np.arange(count)


class FixedShareOGDGrid:
    """Default base learner.

    A geometric grid of projected-OGD experts with constant step sizes,
    combined by Hedge with a self-confident learning rate and a fixed-share
    mixing step of ``1/horizon`` per round. Rounds with an all-zero loss are
    no-ops.
    """

    def __init__(self, dim: int, horizon: int):
        if dim < 1 or horizon < 1:
            raise ValueError("dim and horizon must be positive")
        self.dim = dim
        self.horizon = horizon
        self.etas = _grid_step_sizes(dim, horizon)
        self.mix = 1.0 / horizon
        n_exp = len(self.etas)
        self.points = np.full((1, n_exp, dim), 1.0 / dim)
        self.weights = np.full((1, n_exp), 1.0 / n_exp)
        self.sq_sum = np.zeros(1)

    def fresh(self) -> FixedShareOGDGrid:
        return FixedShareOGDGrid(self.dim, self.horizon)

    def act(self) -> np.ndarray:
        return _kernels.grid_act(self.points, self.weights)[0]

    def feed(self, g) -> None:
        g = np.asarray(g, dtype=np.float64).reshape(1, self.dim)
        _kernels.grid_feed(self.points, self.weights, self.sq_sum, g, self.etas, self.mix)


class SelfConfidentOGD:
    """Single projected-OGD learner with step ``D / sqrt(1 + sum ||g_s||_inf^2)``.

    Optional fixed-share pull towards the uniform point (``mix`` per round).
    Kept as a pluggable alternative to the grid learner.
    """

    def __init__(self, dim: int, horizon: int | None = None, diameter: float = SIMPLEX_L1_DIAMETER, fixed_share: bool = True):
        self.dim = dim
        self.horizon = horizon
        self.diameter = diameter
        self.fixed_share = fixed_share and horizon is not None
        self.x = np.full(dim, 1.0 / dim)
        self.sq_sum = 0.0

    def fresh(self) -> SelfConfidentOGD:
        return SelfConfidentOGD(self.dim, self.horizon, self.diameter, self.fixed_share)

    def act(self) -> np.ndarray:
        return self.x.copy()

    def feed(self, g) -> None:
        g = np.asarray(g, dtype=np.float64)
        mag = float(np.max(np.abs(g)))
        if mag == 0.0:
            return
        self.sq_sum += mag * mag
        eta = self.diameter / math.sqrt(1.0 + self.sq_sum)
        x = _kernels.project_simplex_rows((self.x - eta * g)[None, :])[0]
        if self.fixed_share:
            mix = 1.0 / self.horizon
            x = (1.0 - mix) * x + mix / self.dim
        self.x = x


class AdaPFOL:
    """Magnitude-doubling wrapper around a base learner.

    Protocol per round: ``announce_bound(G_t)``, ``act()``, ``feed(g_t)`` with
    ``||g_t||_inf <= G_t``. When ``G_t`` exceeds the current scale the scale
    becomes ``2 * G_t`` and the base learner restarts from scratch; losses are
    divided by the scale before reaching it. If every announcement stays at or
    below 1 the wrapper never resets and runs at scale 1.
    """

    def __init__(self, base_factory: Callable[[], BaseLearner]):
        self._factory = base_factory
        self.inner = base_factory()
        self.scale = 1.0
        self.resets = 0
        self.sq_history = 0.0
        self._announced: float | None = None

    def announce_bound(self, bound: float) -> None:
        bound = float(bound)
        # zero is allowed: an all-zero queue differential announces 0
        if not bound >= 0.0:
            raise ContractViolation(f"announced loss bound must be nonnegative, got {bound}")
        if bound > self.scale:
            self.scale = 2.0 * bound
            self.inner = self._factory()
            self.resets += 1
        self._announced = bound

    def act(self) -> np.ndarray:
        return self.inner.act()

    def feed(self, g) -> None:
        g = np.asarray(g, dtype=np.float64)
        mag = float(np.max(np.abs(g))) if g.size else 0.0
        limit = self.scale if self._announced is None else min(self._announced, self.scale)
        if mag > limit:
            raise ContractViolation(f"loss magnitude {mag} exceeds announced bound {limit}")
        self.sq_history += mag * mag
        self.inner.feed(g / self.scale)
        self._announced = None


def default_adapfol(dim: int, horizon: int) -> AdaPFOL:
    proto = FixedShareOGDGrid(dim, horizon)
    return AdaPFOL(proto.fresh)


class AdaPFOLBank:
    """``count`` independent AdaPFOL learners with the default grid base learner.

    Behaves exactly like a list of ``default_adapfol(dim, horizon)`` instances
    stepped in lockstep, but updates them with one kernel call per round.
    """

    def __init__(self, count: int, dim: int, horizon: int):
        self.count = count
        self.dim = dim
        self.horizon = horizon
        self.etas = _grid_step_sizes(dim, horizon)
        self.mix = 1.0 / horizon
        n_exp = len(self.etas)
        self.points = np.full((count, n_exp, dim), 1.0 / dim)
        self.weights = np.full((count, n_exp), 1.0 / n_exp)
        self.sq_sum = np.zeros(count)
        self.scale = np.ones(count)
        self.resets = np.zeros(count, dtype=np.int64)
        self.sq_history = np.zeros(count)
        self._announced: np.ndarray | None = None

    def announce_bound(self, bounds) -> np.ndarray:
        """Announce one bound per learner; returns the mask of learners that reset."""
        bounds = np.asarray(bounds, dtype=np.float64)
        if bounds.shape != (self.count,):
            raise StructuralError(f"expected {self.count} bounds, got shape {bounds.shape}")
        if not (bounds >= 0.0).all():
            raise ContractViolation("announced loss bounds must be nonnegative")
        grow = bounds > self.scale
        if grow.any():
            self.scale[grow] = 2.0 * bounds[grow]
            self.points[grow] = 1.0 / self.dim
            self.weights[grow] = 1.0 / len(self.etas)
            self.sq_sum[grow] = 0.0
            self.resets[grow] += 1
        self._announced = bounds.copy()
        return grow

    def act(self) -> np.ndarray:
        return _kernels.grid_act(self.points, self.weights)

    def feed(self, losses) -> np.ndarray:
        """Feed one loss vector per learner; returns their sup-norms."""
        losses = np.asarray(losses, dtype=np.float64)
        if losses.shape != (self.count, self.dim):
            raise StructuralError(f"expected losses of shape {(self.count, self.dim)}, got {losses.shape}")
        mags = np.abs(losses).max(axis=1)
        limit = self.scale if self._announced is None else np.minimum(self._announced, self.scale)
        if (mags > limit).any():
            i = int(np.argmax(mags > limit))
            raise ContractViolation(f"learner {i}: loss magnitude {mags[i]} exceeds announced bound {limit[i]}")
        self.sq_history += mags * mags
        _kernels.grid_feed(self.points, self.weights, self.sq_sum, losses / self.scale[:, None], self.etas, self.mix)
        self._announced = None
        return mags


def measure_dynamic_regret(losses: Sequence, actions: Sequence, comparators: Sequence) -> float:
    """``sum_t <g_t, x_t - comparator_t>``."""
    g = np.asarray(losses, dtype=np.float64)
    x = np.asarray(actions, dtype=np.float64)
    c = np.asarray(comparators, dtype=np.float64)
    if not (g.shape == x.shape == c.shape):
        raise StructuralError(f"length/shape mismatch: losses {g.shape}, actions {x.shape}, comparators {c.shape}")
    return float(np.sum(g * (x - c)))
