"""Lyapunov quantities, run summaries, regret against reference policies and CSV output."""

from __future__ import annotations

import io
from dataclasses import asdict, dataclass, field

import numpy as np

from banditnet.errors import StructuralError

CSV_HEADER = "t,l1_queue,l2sq_queue,lyapunov,drift,utility,ref_utility,dpp"


@dataclass
class RoundRecord:
    t: int
    l1_queue: float
    l2sq_queue: float
    lyapunov: float
    drift: float
    utility: float | None = None
    ref_utility: float | None = None
    dpp: float = 0.0


@dataclass
class RoundTable:
    """Column-wise round records for a whole run."""

    l1_queue: np.ndarray
    l2sq_queue: np.ndarray
    drift: np.ndarray
    utility: np.ndarray | None = None
    ref_utility: np.ndarray | None = None
    V: float = 0.0

    @property
    def lyapunov(self) -> np.ndarray:
        return 0.5 * self.l2sq_queue

    @property
    def dpp(self) -> np.ndarray:
        if self.utility is None:
            return self.drift
        return self.drift - self.V * self.utility

    def __len__(self) -> int:
        return self.l1_queue.size

    def record(self, i: int) -> RoundRecord:
        util = None if self.utility is None else float(self.utility[i])
        ref = None if self.ref_utility is None else float(self.ref_utility[i])
        return RoundRecord(i + 1, float(self.l1_queue[i]), float(self.l2sq_queue[i]),
                           float(self.lyapunov[i]), float(self.drift[i]), util, ref, float(self.dpp[i]))

    def to_csv(self) -> str:
        cols = [self.l1_queue, self.l2sq_queue, self.lyapunov, self.drift]
        if self.utility is not None:
            ref = self.ref_utility if self.ref_utility is not None else np.full(len(self), np.nan)
            cols += [self.utility, ref]
        cols.append(self.dpp)
        t = np.arange(1, len(self) + 1)
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        if self.utility is None:
            row_fmt = "%d,%.12g,%.12g,%.12g,%.12g,,,%.12g\n"
        else:
            row_fmt = "%d,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n"
        data = np.column_stack(cols)
        for i in range(len(self)):
            buf.write(row_fmt % (t[i], *data[i]))
        return buf.getvalue()


def drift_series(queue_log) -> np.ndarray:
    """``L_{t+1} - L_t`` with ``L_t = ||Q(t)||_2^2 / 2`` for a log of ``Q(1..T+1)``."""
    q = np.asarray(queue_log, dtype=np.float64)
    flat = q.reshape(q.shape[0], -1)
    lyap = 0.5 * np.einsum("ij,ij->i", flat, flat)
    return np.diff(lyap)


def round_table(queue_log, utility=None, ref_utility=None, V: float = 0.0) -> RoundTable:
    q = np.asarray(queue_log, dtype=np.float64)
    flat = q.reshape(q.shape[0], -1)
    l2sq = np.einsum("ij,ij->i", flat, flat)
    return RoundTable(
        l1_queue=flat[:-1].sum(axis=1),
        l2sq_queue=l2sq[:-1],
        drift=np.diff(0.5 * l2sq),
        utility=None if utility is None else np.asarray(utility, dtype=np.float64),
        ref_utility=None if ref_utility is None else np.asarray(ref_utility, dtype=np.float64),
        V=V,
    )


def _reference_plans(ref, rounds: int) -> np.ndarray:
    return np.repeat(ref.plans, ref.lengths, axis=0)[:rounds]


def olo_regret_vs_reference(trace, queue_log, plan_log, ref, per_link: bool = False):
    """``sum_t sum_(n,m) <C(t) (Q_m(t) - Q_n(t)), a(t) - a_ref(t)>`` using expected transmissions."""
    q = np.asarray(queue_log, dtype=np.float64)
    a = np.asarray(plan_log, dtype=np.float64)
    rounds = a.shape[0]
    if q.shape[0] < rounds or trace.rounds != rounds or ref.rounds != rounds:
        raise StructuralError("queue log, plan log, trace and reference must cover the same rounds")
    topo = trace.topology
    diff = q[:rounds, topo.dst, :] - q[:rounds, topo.src, :]  # (T, L, N)
    gap = a - _reference_plans(ref, rounds)
    per = np.einsum("tl,tlk,tlk->l", trace.capacities, diff, gap)
    return per if per_link else float(per.sum())


def olo_regret_realized(trace, queue_log, transmissions, ref, per_link: bool = False):
    """Same quantity with realized transmissions ``mu`` in place of ``C a``."""
    q = np.asarray(queue_log, dtype=np.float64)
    mu = np.asarray(transmissions, dtype=np.float64)
    rounds = mu.shape[0]
    topo = trace.topology
    diff = q[:rounds, topo.dst, :] - q[:rounds, topo.src, :]
    ref_mu = trace.capacities[:, :, None] * _reference_plans(ref, rounds)
    per = np.einsum("tlk,tlk->l", diff, mu - ref_mu)
    return per if per_link else float(per.sum())


def reference_flow_values(trace, ref) -> np.ndarray:
    """(T, d) reference arrival point per round, in the utility's flow coordinates."""
    util = trace.utility
    rows = np.array([n for n, _ in util.flows])
    cols = np.array([k for _, k in util.flows])
    per_window = ref.arrivals[:, rows, cols]
    return np.repeat(per_window, ref.lengths, axis=0)


def utility_series(trace, flow_values) -> np.ndarray:
    util = trace.utility
    x = np.asarray(flow_values, dtype=np.float64)
    return np.array([util.evaluate(t, x[t]) for t in range(x.shape[0])])


def bco_regret_vs_reference(trace, queue_log, flow_values, ref, V: float) -> float:
    """``sum_t l_t(lambda(t)) - l_t(lambda_ref(t))`` with ``l_t(x) = <Q(t), x> - V g_t(x)``."""
    util = trace.utility
    x = np.asarray(flow_values, dtype=np.float64)
    rounds = x.shape[0]
    xr = reference_flow_values(trace, ref)[:rounds]
    q = np.asarray(queue_log)[:rounds]
    qf = np.stack([q[:, n, k] for n, k in util.flows], axis=1)
    g = utility_series(trace, x)
    gr = utility_series(trace, xr)
    loss = np.sum(qf * x, axis=1) - V * g
    loss_ref = np.sum(qf * xr, axis=1) - V * gr
    return float(np.sum(loss) - np.sum(loss_ref))


@dataclass
class RunSummary:
    scheduler: str
    mode: str
    rounds: int
    seed: int
    V: float | None
    avg_queue: float
    avg_queue_quarter: float  # running average at T/4, for plateau checks
    avg_utility_gap: float | None
    link_regret: list = field(default_factory=list)
    bco_regret: float | None = None
    resets: list = field(default_factory=list)
    max_alpha: float | None = None
    eta_violations: int | None = None
    max_identity_err: float | None = None
    invariants_ok: bool = True
    invariant_failures: list = field(default_factory=list)
    control: bool = False
    trace_hash: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


SUMMARY_COLUMNS = ("scheduler", "mode", "rounds", "seed", "V", "avg_queue", "avg_queue_quarter", "avg_utility_gap",
                   "bco_regret", "max_alpha", "invariants_ok", "control", "trace_hash")


def summary_table_csv(rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(SUMMARY_COLUMNS) + "\n")
    for r in rows:
        d = r.to_dict() if isinstance(r, RunSummary) else r
        vals = []
        for col in SUMMARY_COLUMNS:
            v = d.get(col)
            if v is None:
                vals.append("")
            elif isinstance(v, float):
                vals.append("%.12g" % v)
            else:
                vals.append(str(v))
        buf.write(",".join(vals) + "\n")
    return buf.getvalue()


def running_average(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    return np.cumsum(v) / np.arange(1, v.size + 1)


def mean_and_stderr(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))
