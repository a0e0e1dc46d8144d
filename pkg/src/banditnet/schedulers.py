"""Round-loop scheduling policies.

Every scheduler exposes ``decide(q)`` returning a ``Decision`` and
``observe(c, mu, utility_value)`` receiving only post-decision feedback. None
of them is ever handed the adversary trace. Baselines are flagged with
``control = True``; the oracle additionally sets ``needs_capacities`` and
reads the current round's capacities before deciding, which the bandit model
forbids. They exist as experimental controls only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from banditnet.bco import AdaBGD, BoxSet, PowerSchedule, QueueAdaptiveSchedule, ScheduleTriple
from banditnet.errors import ConstructionError, InvariantFailure, StructuralError
from banditnet.network import Topology, check_plan
from banditnet.olo import AdaPFOLBank

SCHEDULERS = ("nso", "umo2", "oracle_backpressure", "uniform_random", "fixed_plan")


@dataclass
class Decision:
    plan: np.ndarray  # (L, N)
    arrivals: np.ndarray | None = None  # (N, N); None means "use the trace's arrivals"
    flow_values: np.ndarray | None = None  # (d,) chosen point in the arrival box


class ArrivalBox:
    """Controllable arrival flows, each in ``[0, hi]``."""

    def __init__(self, flows, hi, server_count: int):
        self.flows = tuple((int(n), int(k)) for n, k in flows)
        self.hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), (len(self.flows),)).copy()
        self.server_count = server_count
        self.rows = np.array([n for n, _ in self.flows], dtype=np.int64)
        self.cols = np.array([k for _, k in self.flows], dtype=np.int64)
        self.domain = BoxSet(np.zeros(len(self.flows)), self.hi)

    @property
    def dim(self) -> int:
        return len(self.flows)

    def to_matrix(self, x) -> np.ndarray:
        lam = np.zeros((self.server_count, self.server_count))
        lam[self.rows, self.cols] = x
        return lam

    def gather(self, q) -> np.ndarray:
        return np.asarray(q)[self.rows, self.cols]


class NSO:
    """One AdaPFOL learner per link fed with queue-differential losses."""

    control = False
    needs_capacities = False

    def __init__(self, topo: Topology, horizon: int):
        self.topo = topo
        self.bank = AdaPFOLBank(topo.num_links, topo.server_count, horizon)
        self._diff: np.ndarray | None = None
        self._bounds = np.zeros(topo.num_links)
        self.max_fed_ratio = 0.0  # largest ||fed loss|| / announced bound seen

    def _plan(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64)
        topo = self.topo
        diff = q[topo.dst] - q[topo.src]  # (L, N): Q_m - Q_n per link
        self._diff = diff
        bounds = topo.capacity_bound * np.abs(diff).max(axis=1)
        self._bounds = bounds
        self.bank.announce_bound(bounds)
        return self.bank.act()

    def decide(self, q) -> Decision:
        return Decision(self._plan(q))

    def _feed(self, c) -> None:
        if self._diff is None:
            raise InvariantFailure("observe called before decide")
        losses = np.asarray(c, dtype=np.float64)[:, None] * self._diff
        # the bank rejects any loss above its announcement
        mags = self.bank.feed(losses)
        pos = self._bounds > 0
        if pos.any():
            self.max_fed_ratio = max(self.max_fed_ratio, float((mags[pos] / self._bounds[pos]).max()))
        self._diff = None

    def observe(self, c, mu=None, utility_value=None) -> None:
        self._feed(c)

    @property
    def resets(self) -> np.ndarray:
        return self.bank.resets


class UMO2(NSO):
    """NSO routing plus AdaBGD over the arrival box with drift-plus-penalty losses."""

    def __init__(self, topo: Topology, horizon: int, box: ArrivalBox, V: float, utility_bound: float,
                 lipschitz: float, rng, c_lambda: float = 1.0, delta_lambda: float = 0.25,
                 schedule: str = "queue_adaptive", eta0: float = 0.1, delta0: float | None = None):
        super().__init__(topo, horizon)
        if not V > 0:
            raise ConstructionError("UMO2 needs V > 0")
        self.box = box
        self.V = float(V)
        self.G = float(utility_bound)
        self.L = float(lipschitz)
        self.rng = rng
        self.learner = AdaBGD(box.domain)
        r = box.domain.inner_radius
        if schedule == "queue_adaptive":
            self.schedule = QueueAdaptiveSchedule(
                c_lambda=c_lambda, delta_lambda=delta_lambda, horizon=horizon, V=V,
                utility_bound=utility_bound, lipschitz=lipschitz,
                capacity_bound=topo.capacity_bound, arrival_bound=topo.arrival_bound,
                server_count=topo.server_count, inner_radius=r, dim=box.dim)
        elif schedule == "power":
            self.schedule = PowerSchedule(eta0, delta0 if delta0 is not None else 0.5 * r, r)
        else:
            raise ConstructionError(f"unknown schedule {schedule!r}")
        self.schedule_kind = schedule
        self._triple: ScheduleTriple | None = None
        self._x: np.ndarray | None = None
        self._q: np.ndarray | None = None
        # schedule diagnostics
        self.max_alpha = 0.0
        self.eta_prev = np.inf
        self.eta_violations = 0
        self.max_identity_err = 0.0

    def decide(self, q) -> Decision:
        q = np.asarray(q, dtype=np.float64)
        plan = self._plan(q)
        triple = self.schedule.next(q)
        self._check_triple(triple, q)
        x = self.learner.act(triple, self.rng)
        if not self.box.domain.contains(self.box.domain.from_original(x)):
            raise InvariantFailure(f"played arrival point {x} left the arrival box")
        x = np.clip(x, 0.0, self.box.hi)  # strip rounding noise at the faces
        self._triple, self._x, self._q = triple, x, q
        return Decision(plan, self.box.to_matrix(x), x)

    def _check_triple(self, triple: ScheduleTriple, q) -> None:
        if not triple.alpha < 1.0:
            raise InvariantFailure(f"alpha={triple.alpha} >= 1")
        self.max_alpha = max(self.max_alpha, triple.alpha)
        if not triple.eta < self.eta_prev:
            self.eta_violations += 1
        self.eta_prev = triple.eta
        if self.schedule_kind == "queue_adaptive":
            qi, q2 = self.schedule.last_norms
            d = self.box.dim
            want = triple.eta * d * d * (qi + self.V * self.G) ** 2 / (q2 + self.V * self.L)
            err = abs(triple.delta ** 3 - want) / want
            self.max_identity_err = max(self.max_identity_err, err)

    def observe(self, c, mu=None, utility_value=None) -> None:
        self._feed(c)
        if utility_value is None:
            raise StructuralError("UMO2 needs the scalar utility value as feedback")
        loss = float(self.box.gather(self._q) @ self._x) - self.V * float(utility_value)
        self.learner.feed(self._triple, loss)
        self.last_bco_loss = loss


def _fixed_arrivals(box: ArrivalBox | None, value):
    if box is None:
        return None, None
    x = 0.5 * box.hi if value is None else np.broadcast_to(np.asarray(value, dtype=np.float64), (box.dim,)).copy()
    return box.to_matrix(x), x


class OracleBackpressure:
    """Skyline: all link mass on the commodity with the largest capacity-weighted backlog gap.

    Reads the current round's capacities before deciding. When no commodity
    has a positive gap the link serves its head commodity, whose jobs are
    absorbed on arrival.
    """

    control = True
    needs_capacities = True

    def __init__(self, topo: Topology, box: ArrivalBox | None = None, arrival_value=None):
        self.topo = topo
        self._lam, self._x = _fixed_arrivals(box, arrival_value)

    def decide(self, q, c=None) -> Decision:
        if c is None:
            raise StructuralError("oracle_backpressure needs the current capacities")
        q = np.asarray(q, dtype=np.float64)
        topo = self.topo
        weights = np.asarray(c, dtype=np.float64)[:, None] * np.maximum(q[topo.src] - q[topo.dst], 0.0)
        best = np.argmax(weights, axis=1)  # first max wins -> lowest commodity index
        idle = weights[np.arange(topo.num_links), best] <= 0.0
        best = np.where(idle, topo.dst, best)
        plan = np.zeros((topo.num_links, topo.server_count))
        plan[np.arange(topo.num_links), best] = 1.0
        return Decision(plan, self._lam, self._x)

    def observe(self, c, mu=None, utility_value=None) -> None:
        pass


class UniformRandom:
    """Independent uniform simplex point per link every round."""

    control = True
    needs_capacities = False

    def __init__(self, topo: Topology, rng, box: ArrivalBox | None = None, arrival_value=None):
        self.topo = topo
        self.rng = rng
        self._lam, self._x = _fixed_arrivals(box, arrival_value)

    def decide(self, q, c=None) -> Decision:
        plan = self.rng.dirichlet(np.ones(self.topo.server_count), size=self.topo.num_links)
        return Decision(plan, self._lam, self._x)

    def observe(self, c, mu=None, utility_value=None) -> None:
        pass


class FixedPlan:
    """Replays one configured plan every round."""

    control = True
    needs_capacities = False

    def __init__(self, topo: Topology, plan, box: ArrivalBox | None = None, arrival_value=None):
        self.topo = topo
        self.plan = check_plan(plan, topo).copy()
        self._lam, self._x = _fixed_arrivals(box, arrival_value)

    def decide(self, q, c=None) -> Decision:
        return Decision(self.plan.copy(), self._lam, self._x)

    def observe(self, c, mu=None, utility_value=None) -> None:
        pass
