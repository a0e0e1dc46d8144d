"""Oblivious adversary traces and certified reference policies.

A trace fixes, before any scheduler runs, the per-round link capacities and
either the arrival rates (stability mode) or a sequence of concave utility
functions over a box of controllable flows (utility mode). Each trace comes
with a reference policy: a window partition and one allocation plan (plus,
in utility mode, one arrival point) per window. The reference is constant
inside each window, so it is stored per window rather than per round.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from banditnet.errors import ConstructionError, StructuralError
from banditnet.network import Topology

TRACE_FORMAT = "banditnet-trace"
TRACE_VERSION = 1
MODES = ("stability", "utility")
FAMILIES = ("piecewise", "sinusoid", "jamming")
UTILITY_FAMILIES = ("log", "linquad")
VERIFY_TOL = 1e-9


# utilities -------------------------------------------------------------------

@dataclass
class UtilitySequence:
    """Per-round concave utilities over a box of controllable flows.

    ``flows`` lists the (server, commodity) arrival entries the scheduler
    controls; every other arrival entry is zero. The box is ``[0, hi]`` per
    flow. Families:

    * ``log``: ``g_t(x) = sum_f w[t, f] log(1 + x_f)``, params ``w`` (T, d)
    * ``linquad``: ``g_t(x) = sum_f a[t, f] x_f - b[t, f] x_f^2 / 2``,
      params ``[a | b]`` (T, 2d)
    """

    family: str
    flows: tuple[tuple[int, int], ...]
    hi: np.ndarray
    params: np.ndarray

    def __post_init__(self):
        if self.family not in UTILITY_FAMILIES:
            raise ConstructionError(f"unknown utility family {self.family!r}")
        self.flows = tuple((int(n), int(k)) for n, k in self.flows)
        self.hi = np.asarray(self.hi, dtype=np.float64)
        self.params = np.asarray(self.params, dtype=np.float64)
        d = len(self.flows)
        if d == 0 or self.hi.shape != (d,):
            raise StructuralError("utility needs at least one flow and one upper bound per flow")
        width = d if self.family == "log" else 2 * d
        if self.params.ndim != 2 or self.params.shape[1] != width:
            raise StructuralError(f"{self.family} utility params must have shape (T, {width})")
        if self.family == "log" and np.any(self.params < 0):
            raise ConstructionError("log utility weights must be nonnegative")
        if self.family == "linquad" and np.any(self.params[:, d:] < 0):
            raise ConstructionError("linquad curvature b must be nonnegative")

    @property
    def dim(self) -> int:
        return len(self.flows)

    @property
    def rounds(self) -> int:
        return self.params.shape[0]

    def evaluate(self, t: int, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        p = self.params[t]
        if self.family == "log":
            return float(p @ np.log1p(x))
        d = self.dim
        return float(p[:d] @ x - 0.5 * (p[d:] @ (x * x)))

    def gradient(self, t: int, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        p = self.params[t]
        if self.family == "log":
            return p / (1.0 + x)
        d = self.dim
        return p[:d] - p[d:] * x

    @property
    def bound(self) -> float:
        """``G``: sup of ``|g_t|`` over the box and all rounds."""
        if self.family == "log":
            return float(np.max(self.params @ np.log1p(self.hi)))
        d = self.dim
        a, b = self.params[:, :d], self.params[:, d:]
        return float(np.max(np.abs(a) @ self.hi + 0.5 * (b @ (self.hi ** 2))))

    @property
    def lipschitz(self) -> float:
        """``L``: sup of the gradient 2-norm over the box and all rounds."""
        if self.family == "log":
            return float(np.max(np.linalg.norm(self.params, axis=1)))
        d = self.dim
        a, b = self.params[:, :d], self.params[:, d:]
        per = np.maximum(np.abs(a), np.abs(a - b * self.hi))
        return float(np.max(np.linalg.norm(per, axis=1)))

    def to_matrix(self, x, n: int) -> np.ndarray:
        lam = np.zeros((n, n))
        for (srv, com), v in zip(self.flows, x):
            lam[srv, com] = v
        return lam

    def check(self, rng, pairs: int = 1000, rounds_sampled: int = 4) -> None:
        """Spot-check concavity and the Lipschitz constant on random pairs."""
        g_bound, lip = self.bound, self.lipschitz
        ts = {0, self.rounds - 1}
        ts.update(int(t) for t in rng.integers(0, self.rounds, size=rounds_sampled))
        for t in sorted(ts):
            x = rng.random((pairs, self.dim)) * self.hi
            y = rng.random((pairs, self.dim)) * self.hi
            for xi, yi in zip(x, y):
                gx, gy = self.evaluate(t, xi), self.evaluate(t, yi)
                gm = self.evaluate(t, 0.5 * (xi + yi))
                if gm < 0.5 * (gx + gy) - 1e-9:
                    raise ConstructionError(f"utility at round {t} failed the midpoint concavity check")
                if abs(gx - gy) > lip * float(np.linalg.norm(xi - yi)) + 1e-9:
                    raise ConstructionError(f"utility at round {t} exceeds its Lipschitz constant {lip}")
                if abs(gx) > g_bound + 1e-9:
                    raise ConstructionError(f"utility at round {t} exceeds its bound {g_bound}")

    def to_header(self) -> dict:
        return {"family": self.family, "flows": [list(f) for f in self.flows], "hi": self.hi.tolist()}


# trace and reference ---------------------------------------------------------

@dataclass
class AdversaryTrace:
    topology: Topology
    mode: str
    capacities: np.ndarray  # (T, L)
    arrivals: np.ndarray | None = None  # (T, N, N), stability mode
    utility: UtilitySequence | None = None  # utility mode
    family: str = "piecewise"

    def __post_init__(self):
        if self.mode not in MODES:
            raise StructuralError(f"unknown mode {self.mode!r}")
        topo = self.topology
        self.capacities = np.asarray(self.capacities, dtype=np.float64)
        t_len = self.capacities.shape[0]
        if self.capacities.shape != (t_len, topo.num_links) or t_len < 1:
            raise StructuralError("capacities must have shape (T, L) with T >= 1")
        if np.any(self.capacities < 0) or np.any(self.capacities > topo.capacity_bound):
            raise StructuralError("capacities must lie in [0, M]")
        n = topo.server_count
        if self.mode == "stability":
            if self.arrivals is None:
                raise StructuralError("stability-mode trace needs arrivals")
            self.arrivals = np.asarray(self.arrivals, dtype=np.float64)
            if self.arrivals.shape != (t_len, n, n):
                raise StructuralError("arrivals must have shape (T, N, N)")
            if np.any(self.arrivals < 0) or np.any(self.arrivals > topo.arrival_bound):
                raise StructuralError("arrivals must lie in [0, R]")
        else:
            if self.utility is None:
                raise StructuralError("utility-mode trace needs a utility sequence")
            if self.utility.rounds != t_len:
                raise StructuralError("utility sequence length differs from the trace length")

    @property
    def rounds(self) -> int:
        return self.capacities.shape[0]


@dataclass
class ReferencePolicy:
    """Window-constant reference plan (and arrivals in utility mode).

    ``starts`` holds the 0-based first round of each window; window ``j``
    covers rounds ``starts[j] .. starts[j+1]-1``.
    """

    rounds: int
    starts: np.ndarray  # (J,)
    plans: np.ndarray  # (J, L, N)
    arrivals: np.ndarray | None = None  # (J, N, N)
    slack: float = 0.0
    window_constant: float = 0.0
    delta_a: float = 0.25
    c_a: float = 0.0
    delta_lambda: float = 0.25
    c_lambda: float = 0.0

    def __post_init__(self):
        self.starts = np.asarray(self.starts, dtype=np.int64)
        self.plans = np.asarray(self.plans, dtype=np.float64)
        if self.arrivals is not None:
            self.arrivals = np.asarray(self.arrivals, dtype=np.float64)
        j = self.starts.size
        if j < 1 or self.starts[0] != 0 or np.any(np.diff(self.starts) <= 0) or self.starts[-1] >= self.rounds:
            raise StructuralError("windows must be consecutive, nonempty and cover [0, T)")
        if self.plans.shape[0] != j or (self.arrivals is not None and self.arrivals.shape[0] != j):
            raise StructuralError("one plan (and arrival point) per window is required")

    @property
    def windows(self) -> list[tuple[int, int]]:
        ends = np.append(self.starts[1:], self.rounds)
        return [(int(a), int(b)) for a, b in zip(self.starts, ends)]

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(np.append(self.starts, self.rounds))

    def window_index(self) -> np.ndarray:
        """(T,) window id of every round."""
        return np.repeat(np.arange(self.starts.size), self.lengths)

    def plan_at(self, t: int) -> np.ndarray:
        return self.plans[np.searchsorted(self.starts, t, side="right") - 1]

    def arrivals_at(self, t: int) -> np.ndarray | None:
        if self.arrivals is None:
            return None
        return self.arrivals[np.searchsorted(self.starts, t, side="right") - 1]

    def to_header(self) -> dict:
        out = {
            "starts": self.starts.tolist(),
            "plans": self.plans.tolist(),
            "slack": self.slack,
            "window_constant": self.window_constant,
            "delta_a": self.delta_a,
            "c_a": self.c_a,
            "delta_lambda": self.delta_lambda,
            "c_lambda": self.c_lambda,
        }
        if self.arrivals is not None:
            out["arrivals"] = self.arrivals.tolist()
        return out


def window_constant(lengths) -> float:
    """Smallest ``C_W`` with ``sum_j (|W_j| - 1)^2 <= C_W * T``."""
    lengths = np.asarray(lengths, dtype=np.float64)
    return float(np.sum((lengths - 1.0) ** 2) / lengths.sum())


def path_length(seq, norm: str = "l1") -> float:
    """``sum_t ||x_t - x_{t+1}||_1`` over a sequence of vectors (or arrays)."""
    if norm != "l1":
        raise ValueError("only the l1 path length is supported")
    arr = np.asarray(seq, dtype=np.float64)
    if arr.shape[0] == 0:
        raise ValueError("path length of an empty sequence")
    arr = arr.reshape(arr.shape[0], -1)
    return float(np.abs(np.diff(arr, axis=0)).sum())


def certify_path_budget(window_points, starts, rounds: int, delta: float) -> float:
    """Smallest ``C`` with ``P_t <= C t^(1/2 - delta)`` for all ``t`` (1-based).

    The sequence is window-constant, so ``P_t`` only jumps at window starts;
    the ratio is checked at every jump and at ``T``.
    """
    pts = np.asarray(window_points, dtype=np.float64).reshape(len(starts), -1)
    if len(starts) == 1:
        return 0.0
    jumps = np.abs(np.diff(pts, axis=0)).sum(axis=1)
    cum = np.cumsum(jumps)
    # window j+1 starts at 0-based round s, i.e. 1-based round s+1, the first round whose
    # predecessor differs; P at that round already includes the jump
    t_vals = np.asarray(starts[1:], dtype=np.float64) + 1.0
    expo = 0.5 - delta
    ratios = cum / t_vals ** expo
    end_ratio = cum[-1] / float(rounds) ** expo
    return float(max(ratios.max(), end_ratio))


# verifier --------------------------------------------------------------------

@dataclass(frozen=True)
class VerifyResult:
    accepted: bool
    slack: float  # smallest observed slack over all windows and (n, k), n != k
    window: int = -1
    server: int = -1
    commodity: int = -1
    deficit: float = 0.0


def window_means(values: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Per-window averages along axis 0."""
    rounds = values.shape[0]
    lengths = np.diff(np.append(starts, rounds)).astype(np.float64)
    sums = np.add.reduceat(values, starts, axis=0)
    return sums / lengths.reshape((-1,) + (1,) * (values.ndim - 1))


def _slack_matrix(topo: Topology, cbar: np.ndarray, plan: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Per-(n, k) slack ``out_service - inflow - arrivals`` for one window."""
    served = cbar[:, None] * plan  # (L, N)
    n = topo.server_count
    out = np.zeros((n, n))
    inc = np.zeros((n, n))
    np.add.at(out, topo.src, served)
    np.add.at(inc, topo.dst, served)
    return out - inc - lam


def verify_piecewise_stability(trace: AdversaryTrace, ref: ReferencePolicy, topo: Topology | None = None) -> VerifyResult:
    """Check the windowed service-exceeds-arrivals condition with the reference's slack.

    Destination rows (``n == k``) are exempt: those queues are identically
    zero. In utility mode the arrivals are the reference's own arrival points.
    """
    topo = topo or trace.topology
    if ref.rounds != trace.rounds:
        raise StructuralError("trace and reference disagree on T")
    cbar = window_means(trace.capacities, ref.starts)
    if trace.mode == "stability":
        lbar = window_means(trace.arrivals, ref.starts)
    else:
        lbar = ref.arrivals
    n = topo.server_count
    off = ~np.eye(n, dtype=bool)
    worst = math.inf
    for j in range(ref.starts.size):
        s = _slack_matrix(topo, cbar[j], ref.plans[j], lbar[j])
        s_off = np.where(off, s, np.inf)
        i = int(np.argmin(s_off))
        low = float(s_off.flat[i])
        if low < ref.slack - VERIFY_TOL:
            srv, com = divmod(i, n)
            return VerifyResult(False, low, j, srv, com, ref.slack - low)
        worst = min(worst, low)
    return VerifyResult(True, worst if n > 1 else 0.0)


# reference construction ------------------------------------------------------

def _next_hops(topo: Topology, k: int) -> dict[int, int]:
    """Shortest-path next-hop link towards ``k`` for every server that can reach it."""
    incoming: dict[int, list[int]] = {m: [] for m in range(topo.server_count)}
    for l, (_, m) in enumerate(topo.links):
        incoming[m].append(l)
    nxt: dict[int, int] = {}
    seen = {k}
    queue = deque([k])
    while queue:
        m = queue.popleft()
        for l in incoming[m]:
            src = topo.links[l][0]
            if src not in seen:
                seen.add(src)
                nxt[src] = l
                queue.append(src)
    return nxt


class _Router:
    """Routes every (n, k) demand along a fixed shortest-path forest."""

    def __init__(self, topo: Topology):
        self.topo = topo
        self.trees = []
        for k in range(topo.server_count):
            nxt = _next_hops(topo, k)
            depth = {k: 0}
            for n in sorted(nxt):
                d, cur = 0, n
                while cur != k:
                    cur = topo.links[nxt[cur]][1]
                    d += 1
                depth[n] = d
            order = sorted((n for n in range(topo.server_count) if n != k), key=lambda n: (-depth.get(n, 10 ** 9), n))
            self.trees.append((nxt, order))

    def plan(self, cbar, lam, eps):
        """Return (plan, None) or (None, reason) for one window."""
        topo = self.topo
        n_srv = topo.server_count
        load = np.zeros((topo.num_links, n_srv))
        for k, (nxt, order) in enumerate(self.trees):
            inflow = np.zeros(n_srv)
            for n in order:
                need = lam[n, k] + inflow[n] + eps
                if need <= 0.0:
                    continue
                if n not in nxt:
                    return None, f"server {n} cannot reach commodity {k}"
                l = nxt[n]
                load[l, k] += need
                inflow[topo.links[l][1]] += need
        plan = np.zeros_like(load)
        for l, (_, m) in enumerate(topo.links):
            total = load[l].sum()
            if total > 0.0:
                if cbar[l] <= 0.0 or total > cbar[l] * (1.0 + 1e-12):
                    return None, f"link {topo.links[l]} needs {total:.6g} but averages {cbar[l]:.6g}"
                plan[l] = load[l] / cbar[l]
            # leftover mass serves the head commodity, which is absorbed on arrival
            plan[l, m] += max(0.0, 1.0 - plan[l].sum())
        return plan, None


def _max_feasible(check, lo: float, hi: float, iters: int = 60) -> float:
    if check(hi):
        return hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if check(mid):
            lo = mid
        else:
            hi = mid
    return lo


def build_reference(trace: AdversaryTrace, starts, slack: float | None = None, delta_a: float = 0.25,
                    delta_lambda: float = 0.25, ref_level: float = 1.0) -> ReferencePolicy:
    """Construct a certified reference policy on the given window partition.

    Each window's demand ``lambda + inflow + eps`` is routed along shortest
    paths and scaled by the window's mean capacity. ``slack=None`` searches
    for the largest common ``eps``. In utility mode the window's arrival
    point is ``theta * hi`` on every flow with the largest ``theta <= ref_level``
    that keeps ``eps`` (which must then be given) feasible.
    """
    topo = trace.topology
    starts = np.asarray(starts, dtype=np.int64)
    router = _Router(topo)
    cbar = window_means(trace.capacities, starts)
    n = topo.server_count
    j_count = starts.size

    if trace.mode == "stability":
        lbar = window_means(trace.arrivals, starts)
        ref_lam = None
    else:
        if slack is None:
            raise ConstructionError("utility-mode reference needs an explicit slack target")
        util = trace.utility
        ref_lam = np.zeros((j_count, n, n))
        for j in range(j_count):
            def ok_theta(theta, j=j):
                return router.plan(cbar[j], util.to_matrix(theta * util.hi, n), slack)[0] is not None
            if not ok_theta(0.0):
                _, why = router.plan(cbar[j], np.zeros((n, n)), slack)
                raise ConstructionError(f"window {j}: slack {slack} infeasible even with zero arrivals ({why})")
            theta = _max_feasible(ok_theta, 0.0, ref_level)
            ref_lam[j] = util.to_matrix(theta * util.hi, n)
        lbar = ref_lam

    if slack is None:
        def ok_eps(eps):
            return all(router.plan(cbar[j], lbar[j], eps)[0] is not None for j in range(j_count))
        if not ok_eps(0.0):
            for j in range(j_count):
                _, why = router.plan(cbar[j], lbar[j], 0.0)
                if why:
                    raise ConstructionError(f"window {j}: arrivals exceed what can be routed ({why})")
        eps = _max_feasible(ok_eps, 0.0, topo.capacity_bound)
    else:
        eps = float(slack)

    plans = np.zeros((j_count, topo.num_links, n))
    for j in range(j_count):
        plan, why = router.plan(cbar[j], lbar[j], eps)
        if plan is None:
            raise ConstructionError(f"window {j}: slack {eps:.6g} is infeasible ({why})")
        plans[j] = plan

    ref = ReferencePolicy(trace.rounds, starts, plans, ref_lam, slack=0.0)
    achieved = verify_piecewise_stability(trace, ref).slack
    ref.slack = float(achieved)
    ref.window_constant = window_constant(ref.lengths)
    ref.delta_a = delta_a
    ref.c_a = certify_path_budget(plans, starts, trace.rounds, delta_a)
    ref.delta_lambda = delta_lambda
    if ref_lam is not None:
        ref.c_lambda = certify_path_budget(ref_lam, starts, trace.rounds, delta_lambda)
    return ref


# generation ------------------------------------------------------------------

DEFAULT_PARAMS = {
    "family": "piecewise",
    "phase_length": None,  # default round(sqrt(T))
    "phase_jitter": 0.0,
    "cap_lo": 0.85,
    "cap_hi": 1.0,
    "cap_noise": 0.0,
    "cap_base": 0.9,
    "cap_amp": 0.1,
    "period": None,  # sinusoid, default phase_length
    "burst_rate": 0.002,
    "burst_length": 3,
    "arrivals": [],  # [[server, commodity, rate], ...]
    "arrival_jitter": 0.0,
    "slack": None,
    "delta_a": 0.25,
    "delta_lambda": 0.25,
    "ref_level": 1.0,
    "utility": None,
}

DEFAULT_UTILITY = {
    "family": "log",
    "flows": [],
    "hi": None,  # default R on every flow
    "weight_lo": 0.8,
    "weight_hi": 1.2,
    "a_lo": 0.8,
    "a_hi": 1.2,
    "b_lo": 0.2,
    "b_hi": 0.4,
}


def _phase_starts(rounds: int, phase_length: int, jitter: float, rng) -> np.ndarray:
    starts = [0]
    while True:
        span = phase_length
        if jitter > 0:
            span = max(1, int(round(phase_length * (1.0 + jitter * rng.uniform(-1.0, 1.0)))))
        nxt = starts[-1] + span
        if nxt >= rounds:
            break
        starts.append(nxt)
    return np.asarray(starts, dtype=np.int64)


def _expand(per_window: np.ndarray, starts: np.ndarray, rounds: int) -> np.ndarray:
    lengths = np.diff(np.append(starts, rounds))
    return np.repeat(per_window, lengths, axis=0)


def generate_trace(topo: Topology, rounds: int, params: dict | None = None, mode: str = "stability", rng=None):
    """Materialize an oblivious trace and its certified reference policy.

    Returns ``(trace, reference)``. See ``DEFAULT_PARAMS`` for the knobs.
    """
    if rounds < 1:
        raise ConstructionError("rounds must be >= 1")
    if mode not in MODES:
        raise ConstructionError(f"unknown mode {mode!r}")
    p = dict(DEFAULT_PARAMS)
    p.update(params or {})
    unknown = set(p) - set(DEFAULT_PARAMS)
    if unknown:
        raise ConstructionError(f"unknown adversary parameter(s): {sorted(unknown)}")
    rng = rng if rng is not None else np.random.default_rng(0)
    family = p["family"]
    if family not in FAMILIES:
        raise ConstructionError(f"unknown adversary family {family!r}")
    m_cap = topo.capacity_bound
    if not (0.0 <= p["cap_lo"] <= p["cap_hi"] <= m_cap):
        raise ConstructionError("need 0 <= cap_lo <= cap_hi <= M")
    n_links = topo.num_links
    n = topo.server_count
    phase_length = p["phase_length"] or max(1, int(round(math.sqrt(rounds))))
    starts = _phase_starts(rounds, int(phase_length), float(p["phase_jitter"]), rng)
    j_count = starts.size

    if family == "sinusoid":
        period = float(p["period"] or phase_length)
        t = np.arange(rounds, dtype=np.float64)[:, None]
        offsets = rng.uniform(0.0, 2.0 * math.pi, size=n_links)[None, :]
        caps = p["cap_base"] + p["cap_amp"] * np.sin(2.0 * math.pi * t / period + offsets)
    else:
        levels = rng.uniform(p["cap_lo"], p["cap_hi"], size=(j_count, n_links))
        caps = _expand(levels, starts, rounds)
    if p["cap_noise"] > 0:
        caps = caps + p["cap_noise"] * rng.uniform(-1.0, 1.0, size=caps.shape)
    if family == "jamming":
        hits = np.nonzero(rng.random(rounds) < p["burst_rate"])[0]
        for t0 in hits:
            l = int(rng.integers(n_links))
            caps[t0:t0 + int(p["burst_length"]), l] = 0.0
    caps = np.clip(caps, 0.0, m_cap)

    arrivals = None
    util = None
    if mode == "stability":
        per_window = np.zeros((j_count, n, n))
        for srv, com, rate in p["arrivals"]:
            srv, com = int(srv), int(com)
            if srv == com or not (0 <= srv < n and 0 <= com < n):
                raise ConstructionError(f"arrival entry ({srv}, {com}) is not an off-diagonal server/commodity pair")
            jit = 1.0 + p["arrival_jitter"] * rng.uniform(-1.0, 1.0, size=j_count)
            per_window[:, srv, com] = rate * jit
        if np.any(per_window > topo.arrival_bound):
            raise ConstructionError("configured arrival rates exceed R")
        arrivals = _expand(np.clip(per_window, 0.0, topo.arrival_bound), starts, rounds)
    else:
        util = _generate_utility(topo, rounds, starts, p["utility"] or {}, rng)

    trace = AdversaryTrace(topo, mode, caps, arrivals, util, family)
    slack = p["slack"]
    if mode == "utility" and slack is None:
        slack = 0.1
    ref = build_reference(trace, starts, slack, p["delta_a"], p["delta_lambda"], p["ref_level"])
    return trace, ref


def _generate_utility(topo: Topology, rounds: int, starts: np.ndarray, spec: dict, rng) -> UtilitySequence:
    u = dict(DEFAULT_UTILITY)
    u.update(spec)
    unknown = set(u) - set(DEFAULT_UTILITY)
    if unknown:
        raise ConstructionError(f"unknown utility parameter(s): {sorted(unknown)}")
    flows = [tuple(int(v) for v in f) for f in u["flows"]]
    n = topo.server_count
    if not flows:
        raise ConstructionError("utility.flows must list at least one (server, commodity) pair")
    for srv, com in flows:
        if srv == com or not (0 <= srv < n and 0 <= com < n):
            raise ConstructionError(f"utility flow ({srv}, {com}) is not an off-diagonal server/commodity pair")
    d = len(flows)
    hi = np.full(d, topo.arrival_bound) if u["hi"] is None else np.broadcast_to(np.asarray(u["hi"], dtype=np.float64), (d,)).copy()
    if np.any(hi <= 0) or np.any(hi > topo.arrival_bound):
        raise ConstructionError("utility.hi must lie in (0, R]")
    j_count = starts.size
    if u["family"] == "log":
        w = rng.uniform(u["weight_lo"], u["weight_hi"], size=(j_count, d))
    elif u["family"] == "linquad":
        a = rng.uniform(u["a_lo"], u["a_hi"], size=(j_count, d))
        b = rng.uniform(u["b_lo"], u["b_hi"], size=(j_count, d))
        w = np.concatenate([a, b], axis=1)
    else:
        raise ConstructionError(f"unknown utility family {u['family']!r}")
    seq = UtilitySequence(u["family"], tuple(flows), hi, _expand(w, starts, rounds))
    seq.check(rng)
    return seq


# serialization ---------------------------------------------------------------

def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def serialize_trace(trace: AdversaryTrace, ref: ReferencePolicy | None = None) -> bytes:
    """JSON Lines: one header record, then one record per round."""
    header = {
        "format": TRACE_FORMAT,
        "version": TRACE_VERSION,
        "mode": trace.mode,
        "family": trace.family,
        "rounds": trace.rounds,
        "topology": trace.topology.to_dict(),
    }
    if trace.utility is not None:
        header["utility"] = trace.utility.to_header()
    if ref is not None:
        header["reference"] = ref.to_header()
    lines = [_dump(header)]
    caps = trace.capacities.tolist()
    if trace.mode == "stability":
        arr = trace.arrivals.tolist()
        for t in range(trace.rounds):
            lines.append(_dump({"t": t, "capacities": caps[t], "arrivals": arr[t]}))
    else:
        params = trace.utility.params.tolist()
        for t in range(trace.rounds):
            lines.append(_dump({"t": t, "capacities": caps[t], "utility": params[t]}))
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_trace(data: bytes):
    """Inverse of ``serialize_trace``; returns ``(trace, reference_or_None)``."""
    lines = data.decode("utf-8").splitlines()
    if not lines:
        raise StructuralError("empty trace file")
    header = json.loads(lines[0])
    if header.get("format") != TRACE_FORMAT:
        raise StructuralError("not a banditnet trace file")
    if header.get("version") != TRACE_VERSION:
        raise StructuralError(f"unsupported trace version {header.get('version')}")
    rounds = int(header["rounds"])
    body = [json.loads(s) for s in lines[1:]]
    if len(body) != rounds or any(rec["t"] != t for t, rec in enumerate(body)):
        raise StructuralError("trace body does not match the declared number of rounds")
    topo = Topology.from_dict(header["topology"])
    caps = np.array([rec["capacities"] for rec in body], dtype=np.float64).reshape(rounds, topo.num_links)
    mode = header["mode"]
    arrivals = util = None
    if mode == "stability":
        arrivals = np.array([rec["arrivals"] for rec in body], dtype=np.float64)
    else:
        uh = header["utility"]
        params = np.array([rec["utility"] for rec in body], dtype=np.float64)
        util = UtilitySequence(uh["family"], tuple(tuple(f) for f in uh["flows"]), np.array(uh["hi"]), params)
    trace = AdversaryTrace(topo, mode, caps, arrivals, util, header.get("family", "piecewise"))
    ref = None
    if "reference" in header:
        rh = header["reference"]
        ref = ReferencePolicy(
            rounds,
            np.array(rh["starts"], dtype=np.int64),
            np.array(rh["plans"], dtype=np.float64).reshape(len(rh["starts"]), topo.num_links, topo.server_count),
            np.array(rh["arrivals"], dtype=np.float64) if "arrivals" in rh else None,
            slack=rh["slack"],
            window_constant=rh["window_constant"],
            delta_a=rh["delta_a"],
            c_a=rh["c_a"],
            delta_lambda=rh["delta_lambda"],
            c_lambda=rh["c_lambda"],
        )
    return trace, ref


def content_hash(data: bytes) -> str:
    """Git-style blob hash of raw bytes."""
    h = hashlib.sha1()
    h.update(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()
