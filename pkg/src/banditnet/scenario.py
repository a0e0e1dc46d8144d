"""Scenario files: TOML with a validating loader and dotted-key overrides.

Layout (see ``scenarios/README.md`` for the full key reference)::

    name = "line3-stability"
    mode = "stability"            # or "utility"
    rounds = 20000
    seed = 1
    transmission = "bernoulli"    # or "deterministic"

    [topology]                    # kind = "line" or "custom"
    [adversary]                   # generator family and its knobs
    [adversary.utility]           # utility mode only
    [scheduler]                   # kind, V, schedule constants, baseline options
    [sweep]                       # optional: seeds crossed with non-seed sweeps
"""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from banditnet.adversary import DEFAULT_PARAMS, DEFAULT_UTILITY, FAMILIES, MODES, UTILITY_FAMILIES
from banditnet.errors import ScenarioError
from banditnet.network import TRANSMISSION_MODES, Topology
from banditnet.schedulers import SCHEDULERS

TOP_KEYS = {"name", "mode", "rounds", "seed", "trace_seed", "transmission", "topology", "adversary", "scheduler", "sweep"}
TOPOLOGY_KEYS = {"kind", "servers", "bidirectional", "links", "capacity_bound", "arrival_bound"}
SCHEDULER_KEYS = {"kind", "V", "c_lambda", "delta_lambda", "delta_a", "schedule", "eta0", "delta0", "plan", "arrival_value"}
SWEEP_KEYS = {"seeds", "workers"}
U64 = 2 ** 64


@dataclass
class Scenario:
    name: str
    mode: str
    rounds: int
    seed: int
    transmission: str
    topology: dict
    adversary: dict
    scheduler: dict
    sweep: dict = field(default_factory=dict)
    trace_seed: int | None = None

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "mode": self.mode,
            "rounds": self.rounds,
            "seed": self.seed,
            "transmission": self.transmission,
            "topology": copy.deepcopy(self.topology),
            "adversary": copy.deepcopy(self.adversary),
            "scheduler": copy.deepcopy(self.scheduler),
            "sweep": copy.deepcopy(self.sweep),
        }
        if self.trace_seed is not None:
            out["trace_seed"] = self.trace_seed
        return out

    def with_overrides(self, overrides) -> Scenario:
        raw = self.to_dict()
        for item in overrides:
            apply_override(raw, item)
        return scenario_from_dict(raw)

    @property
    def effective_trace_seed(self) -> int:
        return self.seed if self.trace_seed is None else self.trace_seed

    def build_topology(self) -> Topology:
        t = self.topology
        try:
            if t.get("kind", "line") == "line":
                return Topology.line(int(t["servers"]), float(t.get("capacity_bound", 1.0)),
                                     float(t.get("arrival_bound", 1.0)), bool(t.get("bidirectional", True)))
            return Topology(int(t["servers"]), tuple(tuple(l) for l in t["links"]),
                            float(t.get("capacity_bound", 1.0)), float(t.get("arrival_bound", 1.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"topology: {exc}") from exc

    @property
    def scheduler_kind(self) -> str:
        return self.scheduler.get("kind", "nso" if self.mode == "stability" else "umo2")


def parse_value(text: str):
    """Interpret an override value as a TOML value, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(raw: dict, item: str) -> None:
    if "=" not in item:
        raise ScenarioError(f"override {item!r} is not of the form key=value")
    key, text = item.split("=", 1)
    key = key.strip()
    parts = key.split(".")
    node = raw
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = parse_value(text.strip())


def _require(cond: bool, key: str, msg: str) -> None:
    if not cond:
        raise ScenarioError(f"{key}: {msg}")


def _check_unknown(section: dict, allowed, prefix: str) -> None:
    for k in section:
        if k not in allowed:
            raise ScenarioError(f"{prefix}{k}: unknown key")


def scenario_from_dict(raw: dict) -> Scenario:
    _check_unknown(raw, TOP_KEYS, "")
    for k in ("mode", "rounds"):
        _require(k in raw, k, "missing required key")
    mode = raw["mode"]
    _require(mode in MODES, "mode", f"must be one of {MODES}, got {mode!r}")
    rounds = raw["rounds"]
    _require(isinstance(rounds, int) and not isinstance(rounds, bool) and rounds >= 1, "rounds", "must be an integer >= 1")
    seed = raw.get("seed", 0)
    _require(isinstance(seed, int) and 0 <= seed < U64, "seed", "must be an unsigned 64-bit integer")
    trace_seed = raw.get("trace_seed")
    _require(trace_seed is None or (isinstance(trace_seed, int) and 0 <= trace_seed < U64), "trace_seed",
             "must be an unsigned 64-bit integer")
    transmission = raw.get("transmission", "bernoulli")
    _require(transmission in TRANSMISSION_MODES, "transmission", f"must be one of {TRANSMISSION_MODES}")

    topo = dict(raw.get("topology", {}))
    _check_unknown(topo, TOPOLOGY_KEYS, "topology.")
    kind = topo.get("kind", "line")
    _require(kind in ("line", "custom"), "topology.kind", "must be 'line' or 'custom'")
    _require(isinstance(topo.get("servers"), int) and topo["servers"] >= 1, "topology.servers", "must be an integer >= 1")
    if kind == "custom":
        _require(isinstance(topo.get("links"), list), "topology.links", "custom topology needs a list of [src, dst] pairs")
    for k in ("capacity_bound", "arrival_bound"):
        if k in topo:
            _require(isinstance(topo[k], (int, float)) and topo[k] >= 0, f"topology.{k}", "must be a nonnegative number")
    _require(topo.get("capacity_bound", 1.0) > 0, "topology.capacity_bound", "must be > 0")

    adv = copy.deepcopy(raw.get("adversary", {}))
    _check_unknown(adv, DEFAULT_PARAMS, "adversary.")
    _require(adv.get("family", "piecewise") in FAMILIES, "adversary.family", f"must be one of {FAMILIES}")
    if mode == "stability":
        _require(bool(adv.get("arrivals")), "adversary.arrivals", "stability mode needs at least one [server, commodity, rate]")
        for i, a in enumerate(adv["arrivals"]):
            _require(isinstance(a, list) and len(a) == 3, f"adversary.arrivals[{i}]", "must be [server, commodity, rate]")
    else:
        util = adv.get("utility")
        _require(isinstance(util, dict), "adversary.utility", "utility mode needs an [adversary.utility] table")
        _check_unknown(util, DEFAULT_UTILITY, "adversary.utility.")
        _require(util.get("family", "log") in UTILITY_FAMILIES, "adversary.utility.family", f"must be one of {UTILITY_FAMILIES}")
        _require(bool(util.get("flows")), "adversary.utility.flows", "needs at least one [server, commodity] pair")
        hi = util.get("hi")
        bound = topo.get("arrival_bound", 1.0)
        his = hi if isinstance(hi, list) else [hi]
        _require(all(h is None or 0 < h <= bound for h in his), "adversary.utility.hi",
                 "arrival box must lie inside [0, R]")

    sched = dict(raw.get("scheduler", {}))
    _check_unknown(sched, SCHEDULER_KEYS, "scheduler.")
    skind = sched.get("kind", "nso" if mode == "stability" else "umo2")
    _require(skind in SCHEDULERS, "scheduler.kind", f"must be one of {SCHEDULERS}")
    if skind == "umo2":
        _require(mode == "utility", "scheduler.kind", "umo2 runs in utility mode only")
        _require(isinstance(sched.get("V"), (int, float)) and sched["V"] > 0, "scheduler.V", "umo2 needs V > 0")
    if skind == "nso":
        _require(mode == "stability", "scheduler.kind", "nso runs in stability mode only (use umo2 for utility mode)")
    if skind == "fixed_plan":
        _require(isinstance(sched.get("plan"), list), "scheduler.plan", "fixed_plan needs a plan (one row per link)")
    if "schedule" in sched:
        _require(sched["schedule"] in ("queue_adaptive", "power"), "scheduler.schedule", "must be 'queue_adaptive' or 'power'")

    sweep = dict(raw.get("sweep", {}))
    _check_unknown(sweep, SWEEP_KEYS, "sweep.")
    if "seeds" in sweep:
        _require(isinstance(sweep["seeds"], list) and sweep["seeds"], "sweep.seeds", "must be a nonempty list")

    scn = Scenario(
        name=str(raw.get("name", "scenario")),
        mode=mode,
        rounds=rounds,
        seed=seed,
        transmission=transmission,
        topology=topo,
        adversary=adv,
        scheduler=sched,
        sweep=sweep,
        trace_seed=trace_seed,
    )
    scn.build_topology()  # surfaces structural errors now
    return scn


def load_scenario(path, overrides=()) -> Scenario:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ScenarioError(f"scenario file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    for item in overrides:
        apply_override(raw, item)
    return scenario_from_dict(raw)
