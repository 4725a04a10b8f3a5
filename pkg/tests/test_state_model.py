import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atomic.errors import IndexOutOfRange, UnknownOutputName
from atomic.spec_io import AlgorithmProgram, FalseOp, ImplyOp, parse_algorithm
from atomic.state_model import (
    StateModel, apply_step, calc_algorithm, check_equivalence, false_op, format_history, imply_op,
    input_columns, parse_history, run_program,
)
from helpers import ALL_ALGORITHMS, EXACT_ADDERS, bundled, full_adder_truth
from strategies import programs


def _state(rows):
    v = np.array(rows, dtype=np.uint8)
    v.setflags(write=False)
    return StateModel(int(np.log2(v.shape[1])), v)


def test_input_columns_msb_first():
    cols = input_columns(3)
    assert cols[:, 1].tolist() == [0, 0, 1]
    assert cols[:, 4].tolist() == [1, 0, 0]


def test_imply_truth_table():
    s = imply_op(_state([[0, 0, 1, 1], [0, 1, 0, 1]]), 0, 1)
    assert s.vectors[1].tolist() == [1, 1, 0, 1]
    assert s.vectors[0].tolist() == [0, 0, 1, 1]


def test_imply_from_zeros_and_ones():
    s = _state([[0, 0, 0, 0], [1, 1, 1, 1], [0, 1, 1, 0]])
    assert imply_op(s, 0, 2).vectors[2].tolist() == [1, 1, 1, 1]
    assert imply_op(s, 1, 2).vectors[2].tolist() == [0, 1, 1, 0]


def test_false_resets_targets():
    s = _state([[1, 0, 1, 1], [1, 1, 1, 1], [0, 1, 0, 1]])
    assert false_op(s, [0]).vectors[0].tolist() == [0, 0, 0, 0]
    assert not false_op(s, [0, 1, 2]).vectors.any()


def test_out_of_range_index():
    s = StateModel.initial(2, [0])
    with pytest.raises(IndexOutOfRange):
        imply_op(s, 0, 5)
    with pytest.raises(IndexOutOfRange):
        false_op(s, [2])


def test_empty_program_keeps_initial_state():
    init = StateModel.initial(3, [0, 1])
    final, history = run_program(AlgorithmProgram((), 1), init)
    assert np.array_equal(final.vectors, init.vectors)
    assert len(history) == 1


def test_false_then_imply_is_negation():
    init = StateModel.initial(4, [0, 1])
    final, _ = run_program(parse_algorithm("F3\nI0,3", 1), init)
    assert np.array_equal(final.vectors[3], 1 - init.vectors[0])


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4).flatmap(lambda n: st.tuples(st.just(n), st.lists(st.integers(0, 1), min_size=2 ** n,
                                                                           max_size=2 ** n))))
def test_imply_idempotent_in_src(data):
    n, dst_bits = data
    init = StateModel.initial(n + 1, list(range(n)))
    v = init.vectors.copy()
    v[n] = dst_bits
    s = StateModel(n, v)
    once = imply_op(s, 0, n)
    assert np.array_equal(imply_op(once, 0, n).vectors, once.vectors)


def _scalar_run(program, n_inputs, n_devices, k):
    bits = [0] * n_devices
    for j in range(n_inputs):
        bits[j] = (k >> (n_inputs - 1 - j)) & 1
    for step in program.steps:
        before = list(bits)
        for op in step:
            if isinstance(op, ImplyOp):
                bits[op.dst] = int((not before[op.src]) or before[op.dst])
            elif isinstance(op, FalseOp):
                for t in op.targets:
                    bits[t] = 0
    return bits


@settings(max_examples=60, deadline=None)
@given(programs(max_devices=7), st.integers(1, 4))
def test_vector_matches_scalar(prog_and_n, n_inputs):
    prog, n_dev = prog_and_n
    n_inputs = min(n_inputs, n_dev)
    final, _ = run_program(prog, StateModel.initial(n_dev, list(range(n_inputs))))
    for k in range(2 ** n_inputs):
        assert final.vectors[:, k].tolist() == _scalar_run(prog, n_inputs, n_dev, k)


@settings(max_examples=40, deadline=None)
@given(programs(max_devices=6, max_steps=12))
def test_history_replay(prog_and_n):
    prog, n_dev = prog_and_n
    init = StateModel.initial(n_dev, [0])
    _, history = run_program(prog, init)
    state = init
    for entry, step in zip(history[1:], prog.steps):
        state = apply_step(state, step)
        assert np.array_equal(state.vectors, entry.snapshot)


@pytest.mark.parametrize("name", EXACT_ADDERS)
def test_exact_adders_match_oracle(name):
    b = bundled(name)
    final, _ = calc_algorithm(b)
    s, c = full_adder_truth()
    assert final.vectors[b.config.index("sum")].tolist() == s
    assert final.vectors[b.config.index("cout")].tolist() == c
    assert check_equivalence(final, b.config).passed


def test_approximate_adder_passes_against_its_declared_vectors():
    b = bundled("approx_full_adder")
    final, _ = calc_algorithm(b)
    assert check_equivalence(final, b.config).passed
    exact_sum, _ = full_adder_truth()
    got = final.vectors[b.config.index("sum")].tolist()
    assert [k for k in range(8) if got[k] != exact_sum[k]] == [0, 7]


def test_flipped_expected_bit_reported():
    import dataclasses
    b = bundled("serial_full_adder")
    states = dict(b.config.output_states)
    flipped = list(states["sum"])
    flipped[5] ^= 1
    states["sum"] = tuple(flipped)
    final, _ = calc_algorithm(b)
    report = check_equivalence(final, dataclasses.replace(b.config, output_states=states))
    assert not report.passed
    assert report.mismatches == (("sum", 5, flipped[5], 1 - flipped[5]),)


def test_unknown_output_name():
    import dataclasses
    b = bundled("serial_full_adder")
    final, _ = calc_algorithm(b)
    cfg = dataclasses.replace(b.config, outputs=("sum", "ghost"), output_states={"ghost": (0,) * 8})
    with pytest.raises(UnknownOutputName):
        check_equivalence(final, cfg)


@pytest.mark.parametrize("name", ALL_ALGORITHMS)
def test_history_text_round_trip(name):
    b = bundled(name)
    _, history = calc_algorithm(b)
    parsed = parse_history(format_history(history, b.memristors))
    assert len(parsed) == len(b.program) + 1
    for (number, ops, snap), entry in zip(parsed, history):
        assert number == entry.step
        assert ops == entry.operations
        assert [snap[n] for n in b.memristors] == entry.snapshot.tolist()
