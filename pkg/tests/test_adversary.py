import hashlib
import math
import subprocess

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from banditnet.adversary import (
    AdversaryTrace,
    ReferencePolicy,
    UtilitySequence,
    build_reference,
    certify_path_budget,
    content_hash,
    generate_trace,
    parse_trace,
    path_length,
    serialize_trace,
    verify_piecewise_stability,
    window_constant,
)
from banditnet.errors import ConstructionError, StructuralError
from banditnet.network import Topology


def two_node_trace(rate, rounds=10):
    topo = Topology.line(2)
    lam = np.zeros((rounds, 2, 2))
    lam[:, 0, 1] = rate
    return AdversaryTrace(topo, "stability", np.ones((rounds, 2)), lam)


def route_all_plan(rounds):
    # link 0->1 serves commodity 1, link 1->0 serves commodity 0
    return ReferencePolicy(rounds, [0], [[[0.0, 1.0], [1.0, 0.0]]])


def test_two_node_example_accepts_with_slack_06():
    trace = two_node_trace(0.4)
    ref = route_all_plan(10)
    ref.slack = 0.6
    res = verify_piecewise_stability(trace, ref)
    assert res.accepted
    assert res.slack == pytest.approx(0.6, abs=1e-12)


def test_reference_builder_finds_the_same_slack():
    ref = build_reference(two_node_trace(0.4), [0])
    assert ref.slack == pytest.approx(0.6, abs=1e-9)
    assert verify_piecewise_stability(two_node_trace(0.4), ref).accepted


def test_overload_is_rejected_with_deficit():
    trace = two_node_trace(1.0)
    trace.arrivals[:, 0, 1] = 1.2  # bypass the R bound on purpose
    ref = route_all_plan(10)
    res = verify_piecewise_stability(trace, ref)
    assert not res.accepted
    assert (res.window, res.server, res.commodity) == (0, 0, 1)
    assert res.deficit >= 0.2 - 1e-12


def test_zero_slack_boundary_accepts():
    trace = two_node_trace(1.0)
    ref = route_all_plan(10)
    res = verify_piecewise_stability(trace, ref)
    assert res.accepted and res.slack == pytest.approx(0.0, abs=1e-12)


def test_infeasible_arrivals_name_the_window():
    trace = two_node_trace(1.0)
    trace.arrivals[5:, 0, 1] = 1.0
    trace.capacities[5:] = 0.5
    with pytest.raises(ConstructionError, match="window 1"):
        build_reference(trace, [0, 5])


def test_single_round_trace():
    topo = Topology.line(2)
    trace, ref = generate_trace(topo, 1, {"arrivals": [[0, 1, 0.3]]}, "stability", np.random.default_rng(0))
    assert ref.windows == [(0, 1)]
    assert ref.window_constant == 0.0
    assert verify_piecewise_stability(trace, ref).accepted


def test_sqrt_phase_window_constant():
    topo = Topology.line(3)
    rounds = 10_000
    trace, ref = generate_trace(topo, rounds, {"arrivals": [[0, 2, 0.2]]}, "stability", np.random.default_rng(0))
    assert set(ref.lengths.tolist()) == {100}
    expected = 100 * 99 ** 2 / rounds
    assert ref.window_constant == pytest.approx(expected)
    assert ref.window_constant <= math.sqrt(rounds)
    assert np.sum((ref.lengths - 1) ** 2) <= ref.window_constant * rounds * (1 + 1e-12)


def test_window_constant_helper():
    assert window_constant([1, 1, 1]) == 0.0
    assert window_constant([3, 1]) == pytest.approx(4 / 4)


def test_path_length():
    assert path_length([[0.2, 0.8]] * 5) == 0.0
    assert path_length([[0, 0], [1, 2]]) == 3.0
    e1, e2 = [1.0, 0.0], [0.0, 1.0]
    assert path_length([e1, e2, e1, e2, e1]) == 8.0
    with pytest.raises(ValueError):
        path_length([])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 40), st.floats(0.0, 0.45))
def test_certified_path_budget_holds_at_every_round(seed, windows, delta):
    rng = np.random.default_rng(seed)
    rounds = int(rng.integers(windows, 500))
    starts = np.sort(rng.choice(np.arange(1, rounds), size=windows - 1, replace=False))
    starts = np.concatenate([[0], starts])
    pts = rng.dirichlet(np.ones(3), size=windows)
    c = certify_path_budget(pts, starts, rounds, delta)
    seq = np.repeat(pts, np.diff(np.append(starts, rounds)), axis=0)
    steps = np.abs(np.diff(seq, axis=0)).sum(axis=1)
    p_t = np.concatenate([[0.0], np.cumsum(steps)])  # P_t for t = 1..T
    t = np.arange(1, rounds + 1)
    assert np.all(p_t <= c * t ** (0.5 - delta) * (1 + 1e-12) + 1e-12)


def test_utility_sequence_checks():
    util = UtilitySequence("log", [(0, 2)], [1.0], np.full((5, 1), 1.1))
    assert util.bound == pytest.approx(1.1 * math.log(2.0))
    assert util.lipschitz == pytest.approx(1.1)
    util.check(np.random.default_rng(0))
    np.testing.assert_allclose(util.gradient(0, [1.0]), [0.55])
    lq = UtilitySequence("linquad", [(0, 2), (1, 0)], [1.0, 0.5], np.tile([1.0, 0.8, 0.3, 0.2], (5, 1)))
    assert lq.evaluate(0, [1.0, 0.5]) == pytest.approx(1.0 + 0.4 - 0.15 - 0.025)
    lq.check(np.random.default_rng(1))
    with pytest.raises(ConstructionError):
        UtilitySequence("log", [(0, 2)], [1.0], -np.ones((5, 1)))
    with pytest.raises(StructuralError):
        UtilitySequence("log", [(0, 2)], [1.0], np.ones((5, 2)))


FAMILIES = ["piecewise", "sinusoid", "jamming"]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(FAMILIES), st.integers(1, 400), st.floats(0.0, 0.5))
def test_generated_stability_traces_pass_their_verifier(seed, family, rounds, jitter):
    topo = Topology.line(3)
    params = {"family": family, "arrivals": [[0, 2, 0.2], [2, 0, 0.1], [1, 0, 0.1]],
              "phase_jitter": jitter, "arrival_jitter": jitter / 2, "cap_noise": jitter / 10}
    trace, ref = generate_trace(topo, rounds, params, "stability", np.random.default_rng(seed))
    res = verify_piecewise_stability(trace, ref)
    assert res.accepted and res.slack == pytest.approx(ref.slack, abs=1e-12)
    assert ref.slack > 0
    assert np.sum((ref.lengths - 1.0) ** 2) <= ref.window_constant * rounds * (1 + 1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["log", "linquad"]), st.integers(1, 400),
       st.floats(0.0, 0.3))
def test_generated_utility_traces_pass_their_verifier(seed, family, rounds, slack):
    topo = Topology.line(3)
    params = {"utility": {"family": family, "flows": [[0, 2], [2, 0]], "hi": 0.6}, "slack": slack}
    trace, ref = generate_trace(topo, rounds, params, "utility", np.random.default_rng(seed))
    res = verify_piecewise_stability(trace, ref)
    assert res.accepted
    assert ref.arrivals is not None
    rows, cols = [0, 2], [2, 0]
    chosen = ref.arrivals[:, rows, cols]
    assert np.all(chosen >= 0) and np.all(chosen <= 0.6 + 1e-12)


def test_generation_rejects_bad_parameters(line3):
    rng = np.random.default_rng(0)
    with pytest.raises(ConstructionError):
        generate_trace(line3, 10, {"arrivals": [[0, 0, 0.1]]}, "stability", rng)
    with pytest.raises(ConstructionError):
        generate_trace(line3, 10, {"arrivals": [[0, 2, 1.5]]}, "stability", rng)
    with pytest.raises(ConstructionError):
        generate_trace(line3, 10, {"bogus": 1, "arrivals": [[0, 2, 0.1]]}, "stability", rng)
    with pytest.raises(ConstructionError):
        generate_trace(line3, 10, {"utility": {"flows": [[0, 2]]}, "slack": 0.99}, "utility", rng)


def test_trace_round_trip_is_byte_exact(line3):
    for mode, params in [("stability", {"arrivals": [[0, 2, 0.2]], "family": "sinusoid"}),
                         ("utility", {"utility": {"family": "linquad", "flows": [[0, 2]]}})]:
        trace, ref = generate_trace(line3, 300, params, mode, np.random.default_rng(7))
        data = serialize_trace(trace, ref)
        trace2, ref2 = parse_trace(data)
        assert serialize_trace(trace2, ref2) == data
        assert np.array_equal(trace2.capacities, trace.capacities)
        assert verify_piecewise_stability(trace2, ref2).accepted
        bare = serialize_trace(trace)
        assert parse_trace(bare)[1] is None


def test_parse_rejects_malformed_files():
    with pytest.raises(StructuralError):
        parse_trace(b"")
    with pytest.raises(StructuralError):
        parse_trace(b'{"format":"other"}\n')
    trace, ref = generate_trace(Topology.line(2), 5, {"arrivals": [[0, 1, 0.2]]}, "stability",
                                np.random.default_rng(0))
    data = serialize_trace(trace, ref)
    truncated = b"\n".join(data.split(b"\n")[:-2]) + b"\n"
    with pytest.raises(StructuralError):
        parse_trace(truncated)


def test_content_hash_matches_git_blob_hash(tmp_path):
    data = b"hello trace\n"
    ref = hashlib.sha1(b"blob 12\0" + data).hexdigest()
    assert content_hash(data) == ref
    try:
        out = subprocess.run(["git", "hash-object", "--stdin"], input=data, capture_output=True, check=True)
    except (OSError, subprocess.CalledProcessError):
        pytest.skip("git not available")
    assert out.stdout.decode().strip() == ref


def test_generation_is_oblivious(line3):
    """The trace bytes do not depend on whether a scheduler ever ran on them."""
    from banditnet.schedulers import NSO
    from banditnet.simulation import SealedEnvironment, simulate

    params = {"arrivals": [[0, 2, 0.2]], "family": "jamming"}
    trace, ref = generate_trace(line3, 200, params, "stability", np.random.default_rng(3))
    before = serialize_trace(trace, ref)
    simulate(SealedEnvironment(trace), NSO(line3, 200), "bernoulli", np.random.default_rng(4))
    assert serialize_trace(trace, ref) == before
    again, ref2 = generate_trace(line3, 200, params, "stability", np.random.default_rng(3))
    assert serialize_trace(again, ref2) == before
