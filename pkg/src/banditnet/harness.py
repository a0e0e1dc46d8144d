"""Experiment execution: single runs, sweeps, and their on-disk artifacts."""

from __future__ import annotations

import copy
import json
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from banditnet import __version__
from banditnet._kernels import BACKEND
from banditnet.adversary import content_hash, generate_trace, serialize_trace
from banditnet.errors import ScenarioError
from banditnet.metrics import (
    RunSummary,
    bco_regret_vs_reference,
    olo_regret_vs_reference,
    reference_flow_values,
    round_table,
    running_average,
    summary_table_csv,
    utility_series,
)
from banditnet.scenario import Scenario, scenario_from_dict
from banditnet.schedulers import NSO, UMO2, ArrivalBox, FixedPlan, OracleBackpressure, UniformRandom
from banditnet.simulation import SealedEnvironment, simulate

log = logging.getLogger(__name__)

SWEEP_AXES = ("V", "T", "seed", "scheduler")
TELESCOPE_TOL = 1e-9
IDENTITY_TOL = 1e-12
DEFAULT_DELTA = 0.25

# stream ids for SeedSequence spawning, fixed so runs are reproducible
_TRACE_STREAM, _SCHEDULER_STREAM, _TRANSMISSION_STREAM = 0, 1, 2


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stream]))


@dataclass
class RunResult:
    summary: RunSummary
    csv: str
    manifest: dict
    csv_path: Path | None = None


def build_trace(scn: Scenario, seed: int | None = None):
    topo = scn.build_topology()
    seed = scn.effective_trace_seed if seed is None else seed
    params = copy.deepcopy(scn.adversary)
    params.setdefault("delta_a", scn.scheduler.get("delta_a", DEFAULT_DELTA))
    params.setdefault("delta_lambda", scn.scheduler.get("delta_lambda", DEFAULT_DELTA))
    log.info("generating %s trace: T=%d, seed=%d", scn.mode, scn.rounds, seed)
    return generate_trace(topo, scn.rounds, params, scn.mode, _rng(seed, _TRACE_STREAM))


def trace_hash(trace, ref) -> str:
    return content_hash(serialize_trace(trace, ref))


def v_condition(V: float, rounds: int, delta_a: float, delta_lambda: float) -> float:
    """Upper limit ``min(T^(2 delta_a / 3), T^(2 delta_lambda / 7))`` on the trade-off parameter."""
    return min(rounds ** (2.0 * delta_a / 3.0), rounds ** (2.0 * delta_lambda / 7.0))


def build_scheduler(scn: Scenario, topo, utility_constants, rng):
    """``utility_constants`` is ``(flows, hi, G, L)`` in utility mode, else None.

    Only the function-class constants reach the scheduler, never the trace.
    """
    s = scn.scheduler
    kind = scn.scheduler_kind
    box = None
    if utility_constants is not None:
        flows, hi, _, _ = utility_constants
        box = ArrivalBox(flows, hi, topo.server_count)
    if kind == "nso":
        return NSO(topo, scn.rounds)
    if kind == "umo2":
        _, _, g_bound, lip = utility_constants
        return UMO2(topo, scn.rounds, box, float(s["V"]), g_bound, lip, rng,
                    c_lambda=float(s.get("c_lambda", 1.0)), delta_lambda=float(s.get("delta_lambda", DEFAULT_DELTA)),
                    schedule=s.get("schedule", "queue_adaptive"), eta0=float(s.get("eta0", 0.1)),
                    delta0=s.get("delta0"))
    value = s.get("arrival_value")
    if kind == "oracle_backpressure":
        return OracleBackpressure(topo, box, value)
    if kind == "uniform_random":
        return UniformRandom(topo, rng, box, value)
    if kind == "fixed_plan":
        return FixedPlan(topo, np.asarray(s["plan"], dtype=np.float64), box, value)
    raise ScenarioError(f"scheduler.kind: unknown scheduler {kind!r}")


def run(scn: Scenario, trace=None, ref=None, out_dir=None, thash: str | None = None) -> RunResult:
    """Simulate one scenario; writes ``<name>.csv`` and ``<name>.manifest.json`` when ``out_dir`` is set."""
    if trace is None:
        trace, ref = build_trace(scn)
    topo = trace.topology
    kind = scn.scheduler_kind
    V = float(scn.scheduler["V"]) if "V" in scn.scheduler else None
    warn_msgs = []
    if scn.mode == "utility" and V is not None:
        limit = v_condition(V, scn.rounds, scn.scheduler.get("delta_a", DEFAULT_DELTA),
                            scn.scheduler.get("delta_lambda", DEFAULT_DELTA))
        if V > limit:
            msg = f"V={V} exceeds min(T^(2 delta_a/3), T^(2 delta_lambda/7))={limit:.6g}; the trade-off guarantee does not apply"
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            warn_msgs.append(msg)
    if kind == "umo2" and ref is not None and ref.c_lambda > float(scn.scheduler.get("c_lambda", 1.0)):
        msg = f"reference path budget C_lambda={ref.c_lambda:.6g} exceeds the configured c_lambda"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        warn_msgs.append(msg)

    util_consts = None
    if scn.mode == "utility":
        u = trace.utility
        util_consts = (u.flows, u.hi, u.bound, u.lipschitz)
    sched = build_scheduler(scn, topo, util_consts, _rng(scn.seed, _SCHEDULER_STREAM))
    log.info("running %s (seed %d, T=%d)", kind, scn.seed, scn.rounds)
    sim = simulate(SealedEnvironment(trace), sched, scn.transmission, _rng(scn.seed, _TRANSMISSION_STREAM))

    failures = list(sim.invariant_failures)
    util = ref_util = None
    gap = bco = None
    if scn.mode == "utility":
        util = sim.utility
        if ref is not None:
            ref_util = utility_series(trace, reference_flow_values(trace, ref))
            gap = float(np.mean(ref_util - util))
            if V is not None:
                bco = bco_regret_vs_reference(trace, sim.queues, sim.flows, ref, V)
    table = round_table(sim.queues, util, ref_util, V or 0.0)

    final_l2 = float(np.sum(sim.queues[-1] ** 2))
    drift_sum = float(table.drift.sum())
    if abs(drift_sum - 0.5 * final_l2) > TELESCOPE_TOL * max(1.0, 0.5 * final_l2):
        failures.append(f"drift sum {drift_sum} differs from final Lyapunov value {0.5 * final_l2}")

    max_alpha = eta_viol = ident = None
    if isinstance(sched, UMO2):
        max_alpha, eta_viol = sched.max_alpha, sched.eta_violations
        if eta_viol:
            failures.append(f"step size failed to decrease on {eta_viol} consecutive rounds")
        if sched.schedule_kind == "queue_adaptive":
            ident = sched.max_identity_err
            if ident > IDENTITY_TOL:
                failures.append(f"exploration-radius identity off by {ident:.3g} (relative)")

    avg = running_average(table.l1_queue)
    summary = RunSummary(
        scheduler=kind,
        mode=scn.mode,
        rounds=scn.rounds,
        seed=scn.seed,
        V=V,
        avg_queue=float(avg[-1]),
        avg_queue_quarter=float(avg[max(scn.rounds // 4, 1) - 1]),
        avg_utility_gap=gap,
        link_regret=(olo_regret_vs_reference(trace, sim.queues, sim.plans, ref, per_link=True).tolist()
                     if ref is not None else []),
        bco_regret=bco,
        resets=sched.resets.tolist() if hasattr(sched, "resets") else [],
        max_alpha=max_alpha,
        eta_violations=eta_viol,
        max_identity_err=ident,
        invariants_ok=not failures,
        invariant_failures=failures,
        control=bool(sched.control),
        trace_hash=thash if thash is not None else trace_hash(trace, ref),
    )
    csv_text = table.to_csv()
    manifest = {
        "scenario": scn.to_dict(),
        "trace_hash": summary.trace_hash,
        "backend": BACKEND,
        "version": __version__,
        "control_baseline": summary.control,
        "warnings": warn_msgs,
        "summary": summary.to_dict(),
    }
    result = RunResult(summary, csv_text, manifest)
    if out_dir is not None:
        result.csv_path = write_run(result, out_dir, run_stem(scn))
    return result


def run_stem(scn: Scenario) -> str:
    stem = f"{scn.name}_{scn.scheduler_kind}_seed{scn.seed}_T{scn.rounds}"
    if "V" in scn.scheduler:
        stem += f"_V{scn.scheduler['V']:g}"
    return stem


def write_run(result: RunResult, out_dir, stem: str) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{stem}.csv"
        csv_path.write_text(result.csv)
        (out / f"{stem}.manifest.json").write_text(json.dumps(result.manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write run artifacts to {out}: {exc}") from exc
    return csv_path


def _variant(base: Scenario, axis: str, value, seed: int) -> Scenario:
    raw = base.to_dict()
    raw["seed"] = int(seed)
    raw["trace_seed"] = base.effective_trace_seed
    if axis == "V":
        raw["scheduler"]["V"] = value
    elif axis == "T":
        raw["rounds"] = int(value)
    elif axis == "scheduler":
        raw["scheduler"]["kind"] = value
    elif axis == "seed":
        raw["seed"] = int(value)
    else:
        raise ScenarioError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    return scenario_from_dict(raw)


def _run_one(args):
    scn, trace, ref, out_dir, thash = args
    return run(scn, trace, ref, out_dir, thash)


def sweep(base: Scenario, axis: str, values, out_dir=None, workers: int | None = None):
    """One run per value (crossed with ``base.sweep['seeds']`` unless sweeping seeds).

    The trace is generated once from the base seed and shared by every run,
    except along the ``T`` axis where each horizon needs its own trace.
    Returns ``(summaries, summary_csv_text)``.
    """
    values = list(values)
    if not values:
        raise ScenarioError("sweep needs at least one value")
    if axis not in SWEEP_AXES:
        raise ScenarioError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    seeds = [base.seed] if axis == "seed" else list(base.sweep.get("seeds", [base.seed]))
    variants = [_variant(base, axis, v, s) for v in values for s in (seeds if axis != "seed" else [v])]

    traces = {}
    jobs = []
    for scn in variants:
        key = scn.rounds
        if key not in traces:
            tr, ref = build_trace(scn, base.effective_trace_seed)
            traces[key] = (tr, ref, trace_hash(tr, ref))
        tr, ref, h = traces[key]
        jobs.append((scn, tr, ref, out_dir, h))

    workers = workers or int(base.sweep.get("workers", 1))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    summaries = [r.summary for r in results]
    table = summary_table_csv(summaries)
    if out_dir is not None:
        path = Path(out_dir) / f"{base.name}_sweep_{axis}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(table)
    return summaries, table
