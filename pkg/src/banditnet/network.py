"""Network topology, queue state and the queue update rule.

Servers are indexed ``0 .. N-1`` and commodity ``k`` is the class of jobs
destined for server ``k``. Array conventions used throughout the package:

* queue / arrival matrices: ``(N, N)``, row = server, column = commodity
* capacities: ``(L,)``, one entry per link in ``Topology.links`` order
* allocation plans and transmissions: ``(L, N)``, row = link
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from banditnet import _kernels
from banditnet.errors import StructuralError

SIMPLEX_TOL = 1e-9

TRANSMISSION_MODES = ("deterministic", "bernoulli")


@dataclass(frozen=True)
class Topology:
    """Servers, directed links and the capacity/arrival bounds ``M`` and ``R``."""

    server_count: int
    links: tuple[tuple[int, int], ...]
    capacity_bound: float
    arrival_bound: float

    def __post_init__(self):
        links = tuple((int(a), int(b)) for a, b in self.links)
        object.__setattr__(self, "links", links)
        if self.server_count < 1:
            raise StructuralError("server_count must be positive")
        if len(set(links)) != len(links):
            raise StructuralError("duplicate link in topology")
        for n, m in links:
            if n == m:
                raise StructuralError(f"self-loop link ({n}, {m})")
            if not (0 <= n < self.server_count and 0 <= m < self.server_count):
                raise StructuralError(f"link ({n}, {m}) has an endpoint outside [0, {self.server_count})")
        if not self.capacity_bound > 0:
            raise StructuralError("capacity_bound M must be > 0")
        if not self.arrival_bound >= 0:
            raise StructuralError("arrival_bound R must be >= 0")
        src = np.array([a for a, _ in links], dtype=np.int64)
        dst = np.array([b for _, b in links], dtype=np.int64)
        src.setflags(write=False)
        dst.setflags(write=False)
        object.__setattr__(self, "_src", src)
        object.__setattr__(self, "_dst", dst)

    @classmethod
    def line(cls, n: int, capacity_bound: float = 1.0, arrival_bound: float = 1.0, bidirectional: bool = True) -> Topology:
        links = [(i, i + 1) for i in range(n - 1)]
        if bidirectional:
            links += [(i + 1, i) for i in range(n - 1)]
        return cls(n, tuple(links), capacity_bound, arrival_bound)

    @property
    def num_links(self) -> int:
        return len(self.links)

    @property
    def src(self) -> np.ndarray:
        return self._src

    @property
    def dst(self) -> np.ndarray:
        return self._dst

    @property
    def increment_bound(self) -> float:
        """Largest possible one-round change of any queue entry, ``2NM + R``."""
        return 2.0 * self.server_count * self.capacity_bound + self.arrival_bound

    def link_index(self, n: int, m: int) -> int:
        return self.links.index((n, m))

    def to_dict(self) -> dict:
        return {
            "server_count": self.server_count,
            "links": [list(l) for l in self.links],
            "capacity_bound": float(self.capacity_bound),
            "arrival_bound": float(self.arrival_bound),
        }

    @classmethod
    def from_dict(cls, d: dict) -> Topology:
        return cls(
            int(d["server_count"]),
            tuple(tuple(l) for l in d["links"]),
            float(d["capacity_bound"]),
            float(d["arrival_bound"]),
        )


def _check_shape(name, arr, shape):
    if arr.shape != shape:
        raise StructuralError(f"{name} has shape {arr.shape}, expected {shape}")


def zero_queues(topo: Topology) -> np.ndarray:
    return np.zeros((topo.server_count, topo.server_count))


def check_plan(plan, topo: Topology, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate a link allocation plan: one probability vector per link."""
    plan = np.asarray(plan, dtype=np.float64)
    _check_shape("allocation plan", plan, (topo.num_links, topo.server_count))
    if plan.size and (plan.min() < -tol or abs(plan.sum(axis=1) - 1.0).max() > tol):
        raise StructuralError("allocation plan rows must be probability vectors")
    return plan


def step(q, mu, lam, topo: Topology) -> np.ndarray:
    """Advance the queues by one round.

    For ``k != n``::

        Q'[n, k] = max(Q[n, k] - sum_out mu[(n, m), k], 0) + sum_in mu[(o, n), k] + lam[n, k]

    and ``Q'[k, k] = 0``. Incoming transmissions are credited in full even if
    the upstream queue was short (fluid model, no conservation enforcement).
    """
    q = np.asarray(q, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    n = topo.server_count
    _check_shape("queue matrix", q, (n, n))
    _check_shape("transmissions", mu, (topo.num_links, n))
    _check_shape("arrivals", lam, (n, n))
    return _kernels.queue_step(q, mu, lam, topo.src, topo.dst)


def realize_transmissions(c, plan, topo: Topology, mode: str = "deterministic", rng=None) -> np.ndarray:
    """Turn capacities and a plan into per-(link, commodity) transmissions.

    ``deterministic`` returns ``C * a`` exactly. ``bernoulli`` returns
    ``M * Bernoulli(C * a / M)`` independently per entry, which has the same
    mean and stays inside ``[0, M]``.
    """
    c = np.asarray(c, dtype=np.float64)
    plan = np.asarray(plan, dtype=np.float64)
    _check_shape("capacities", c, (topo.num_links,))
    _check_shape("allocation plan", plan, (topo.num_links, topo.server_count))
    mean = c[:, None] * plan
    if mode == "deterministic":
        return mean
    if mode == "bernoulli":
        if rng is None:
            raise ValueError("bernoulli mode needs a random generator")
        m = topo.capacity_bound
        # mean / m is already in [0, 1] since C <= M and a <= 1
        return m * (rng.random(mean.shape) < mean / m)
    raise ValueError(f"unknown transmission mode {mode!r}; expected one of {TRANSMISSION_MODES}")


def queue_l1(q) -> float:
    """Total backlog ``sum_n sum_k Q[n, k]``."""
    return float(np.sum(q))
