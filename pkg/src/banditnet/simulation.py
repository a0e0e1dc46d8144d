"""The round loop.

Per round: the scheduler decides from ``Q(t)``; the environment then reveals
the capacities, transmissions are realized, queues advance, and the scheduler
is fed its post-decision feedback computed against the pre-update ``Q(t)``.
Runtime invariants are collected rather than raised so a run always finishes
with a full report.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from banditnet.adversary import AdversaryTrace
from banditnet.errors import StructuralError
from banditnet.network import check_plan, realize_transmissions, step, zero_queues

INCREMENT_TOL = 1e-9


class SealedEnvironment:
    """Hands out one round of feedback at a time, only after a decision is made."""

    def __init__(self, trace: AdversaryTrace):
        self.__trace = trace
        self.topology = trace.topology
        self.mode = trace.mode
        self.rounds = trace.rounds
        self._next = 0

    def peek_capacities(self, t: int) -> np.ndarray:
        """Privileged access for skyline baselines only."""
        return self.__trace.capacities[t]

    def reveal(self, t: int, flow_values=None):
        """Return ``(capacities, trace_arrivals_or_None, utility_value_or_None)`` for round ``t``."""
        if t != self._next:
            raise StructuralError(f"rounds must be revealed in order (expected {self._next}, got {t})")
        self._next += 1
        tr = self.__trace
        lam = tr.arrivals[t] if tr.mode == "stability" else None
        util = None
        if tr.mode == "utility":
            if flow_values is None:
                raise StructuralError("utility mode needs the chosen arrival point to evaluate the utility")
            util = tr.utility.evaluate(t, flow_values)
        return tr.capacities[t], lam, util


@dataclass
class SimulationLog:
    queues: np.ndarray  # (T+1, N, N), Q(1) .. Q(T+1)
    plans: np.ndarray | None  # (T, L, N)
    flows: np.ndarray | None  # (T, d) utility mode
    utility: np.ndarray | None  # (T,) utility mode
    transmissions: np.ndarray | None  # (T, L, N) if kept
    invariant_failures: list[str] = field(default_factory=list)

    @property
    def rounds(self) -> int:
        return self.queues.shape[0] - 1

    @property
    def ok(self) -> bool:
        return not self.invariant_failures


def simulate(env: SealedEnvironment, scheduler, transmission_mode: str, rng,
             keep_plans: bool = True, keep_transmissions: bool = False) -> SimulationLog:
    topo = env.topology
    rounds = env.rounds
    n = topo.server_count
    bound = topo.increment_bound
    utility_mode = env.mode == "utility"

    queues = np.zeros((rounds + 1, n, n))
    plans = np.zeros((rounds, topo.num_links, n)) if keep_plans else None
    mus = np.zeros((rounds, topo.num_links, n)) if keep_transmissions else None
    flows = utility = None
    failures: list[str] = []

    q = zero_queues(topo)
    for t in range(rounds):
        if scheduler.needs_capacities:
            dec = scheduler.decide(q, env.peek_capacities(t))
        else:
            dec = scheduler.decide(q)
        check_plan(dec.plan, topo)
        c, trace_lam, util = env.reveal(t, dec.flow_values)
        lam = trace_lam if dec.arrivals is None or not utility_mode else dec.arrivals
        if lam is None:
            raise StructuralError("no arrival matrix for this round")
        mu = realize_transmissions(c, dec.plan, topo, transmission_mode, rng)
        q_next = step(q, mu, lam, topo)
        scheduler.observe(c, mu, util)

        delta = abs(q_next - q).max()
        if delta > bound + INCREMENT_TOL:
            failures.append(f"round {t + 1}: queue increment {delta} exceeds 2NM+R={bound}")
        if q_next.diagonal().any() or q_next.min() < 0.0:
            failures.append(f"round {t + 1}: queue matrix invariant broken")

        if plans is not None:
            plans[t] = dec.plan
        if mus is not None:
            mus[t] = mu
        if utility_mode:
            if flows is None:
                flows = np.zeros((rounds, len(dec.flow_values)))
                utility = np.zeros(rounds)
            flows[t] = dec.flow_values
            utility[t] = util
        queues[t + 1] = q_next
        q = q_next
    return SimulationLog(queues, plans, flows, utility, mus, failures)
