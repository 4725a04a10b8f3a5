import dataclasses
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atomic.errors import (
    AlgorithmParseError, BadOutputVectorLength, DuplicateDeviceInStep, ElectricalPreconditionViolated,
    EmptyAlgorithm, IndexOutOfRange, MalformedToken, MissingKey, RoleReferencesUndeclaredMemristor,
    SectionCountMismatch, StepCountMismatch, TopologyError, TopologyMismatch, UnknownKey, UnknownTopologyName,
)
from atomic.spec_io import (
    AlgorithmProgram, FalseOp, ImplyOp, ImplyParameters, Nop, check_electrical, cross_validate,
    electrical_problems, load_parameters, load_topology, parse_algorithm, parse_config, parse_parameters,
    parse_topology, render_algorithm,
)
from helpers import ALL_ALGORITHMS, bundled, config_path

from strategies import programs


def test_parse_single_imply():
    prog = parse_algorithm("I0,2", 1)
    assert prog.steps == ((ImplyOp(0, 2),),)


def test_parse_false_and_nop():
    prog = parse_algorithm("F1,3 | NOP", 2)
    assert prog.steps == ((FalseOp((1, 3)), Nop()),)


def test_section_count_mismatch():
    with pytest.raises(SectionCountMismatch):
        parse_algorithm("I0,1 | I2,3", 1)


def test_comments_blank_lines_and_whitespace():
    text = "# header\n\n  I 0 , 1   # trailing\n\tF2\n"
    prog = parse_algorithm(text, 1)
    assert [str(s[0]) for s in prog.steps] == ["I0,1", "F2"]


@pytest.mark.parametrize("text, exc", [
    ("X0,1", MalformedToken),
    ("I0", MalformedToken),
    ("I0,1,2", MalformedToken),
    ("F0,1,2,3", MalformedToken),
    ("F", MalformedToken),
    ("I0,0", MalformedToken),
    ("F1,1", MalformedToken),
    ("I0,1 | F1", DuplicateDeviceInStep),
    ("", EmptyAlgorithm),
    ("# nothing\n\n", EmptyAlgorithm),
])
def test_parse_errors(text, exc):
    sections = 2 if "|" in text else 1
    with pytest.raises(exc):
        parse_algorithm(text, sections)


def test_parse_error_reports_position():
    with pytest.raises(MalformedToken) as info:
        parse_algorithm("I0,1\nF2\nQ7\n", 1)
    assert info.value.line == 3
    assert info.value.column == 1


def test_index_out_of_range_with_known_device_count():
    with pytest.raises(IndexOutOfRange):
        parse_algorithm("I0,4", 1, n_devices=4)


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet="IFNOP0123456789,| #\n\tx-", max_size=60))
def test_parsing_is_total(text):
    # every string either parses or fails with a located diagnostic
    try:
        parse_algorithm(text, 1)
    except AlgorithmParseError:
        pass


@settings(max_examples=100, deadline=None)
@given(programs())
def test_render_parse_round_trip(prog_and_n):
    prog, _ = prog_and_n
    again = parse_algorithm(render_algorithm(prog), prog.section_count)
    assert again.steps == prog.steps


def _template(**overrides):
    cfg = json.loads(config_path("serial_full_adder").read_text())
    cfg.update(overrides)
    return cfg


def test_parse_config_full_adder_template():
    cfg = parse_config(json.dumps(_template()))
    assert cfg.n_inputs == 3
    assert cfg.n_combinations == 8
    assert cfg.index("sum") == 7


def test_config_vector_length_checked():
    cfg = _template(inputs=["a", "b"], work=["cin", "n1", "n2", "cout", "n4", "sum"])
    with pytest.raises(BadOutputVectorLength):
        parse_config(json.dumps(cfg))


def test_config_output_not_listed():
    cfg = _template()
    cfg["output_states"]["s"] = [0] * 8
    with pytest.raises((MissingKey, RoleReferencesUndeclaredMemristor)):
        parse_config(json.dumps(cfg))


def test_config_missing_and_unknown_keys():
    cfg = _template()
    del cfg["steps"]
    with pytest.raises(MissingKey):
        parse_config(json.dumps(cfg))
    with pytest.raises(UnknownKey):
        parse_config(json.dumps(_template(extra=1)))


def test_config_unknown_topology():
    with pytest.raises(UnknownTopologyName):
        parse_config(json.dumps(_template(topology="Crossbar")))


def test_config_role_must_be_declared():
    with pytest.raises(RoleReferencesUndeclaredMemristor):
        parse_config(json.dumps(_template(work=["n1", "zz"])))


def test_topology_files_load():
    assert load_topology("Serial").section_count == 1
    assert load_topology("Semi-Serial").section_count == 2
    assert load_topology("Semi-Parallel").section_count >= 2


def test_topology_partition_enforced():
    raw = {"name": "Semi-Serial", "sections": [{"memristors": ["a", "b"]}, {"memristors": ["b", "c"]}]}
    with pytest.raises(TopologyError):
        parse_topology(json.dumps(raw))


def test_topology_section_count_enforced():
    raw = {"name": "Serial", "sections": [{"memristors": ["a"]}, {"memristors": ["b"]}]}
    with pytest.raises(TopologyError):
        parse_topology(json.dumps(raw))


def test_topology_r_g_positive():
    raw = {"name": "Serial", "sections": [{"memristors": ["a"], "R_G": 0}]}
    with pytest.raises(TopologyError):
        parse_topology(json.dumps(raw))


@pytest.mark.parametrize("name", ALL_ALGORITHMS)
def test_bundled_configs_validate(name):
    b = bundled(name)
    assert b.config.steps == len(b.program)
    assert b.output_names == ("sum", "cout")


def test_step_count_mismatch():
    b = bundled("serial_full_adder")
    cfg = dataclasses.replace(b.config, steps=b.config.steps + 2)
    with pytest.raises(StepCountMismatch):
        cross_validate(b.program, cfg, b.topology, b.params)


def test_topology_arity_mismatch():
    b = bundled("serial_full_adder")
    prog = AlgorithmProgram(b.program.steps, 2)
    with pytest.raises(TopologyMismatch):
        cross_validate(prog, b.config, load_topology("Semi-Serial"), b.params)


def test_index_out_of_range_deferred_to_cross_validate():
    b = bundled("serial_full_adder")
    prog = parse_algorithm("I0,9", 1)
    cfg = dataclasses.replace(b.config, steps=1)
    with pytest.raises(IndexOutOfRange):
        cross_validate(prog, cfg, b.topology, b.params)


def test_cross_section_imply_needs_idle_partner():
    b = bundled("semi_serial_full_adder")
    # a (section 0) -> n2 (section 1) while section 0 is also busy
    prog = parse_algorithm("I0,4 | F6", 2)
    cfg = dataclasses.replace(b.config, steps=1)
    with pytest.raises(TopologyMismatch):
        cross_validate(prog, cfg, b.topology, b.params)


def test_v_cond_at_or_above_v_set_rejected():
    p = load_parameters()
    bad = dataclasses.replace(p, V_COND=p.V_SET)
    with pytest.raises(ElectricalPreconditionViolated):
        check_electrical(bad)
    b = bundled("serial_full_adder")
    with pytest.raises(ElectricalPreconditionViolated):
        cross_validate(b.program, b.config, b.topology, bad)


def test_bundled_parameters_satisfy_bias_inequalities():
    p = load_parameters()
    assert electrical_problems(p) == []
    assert p.V_SET - p.V_COND < p.model.v_on < p.V_SET
    assert p.V_COND < p.model.v_on
    assert p.model.calibrated


def test_parameter_file_unknown_key():
    with pytest.raises(TopologyError):
        parse_parameters(json.dumps({"V_SET": 1.0, "bogus": 2}))


def test_parameters_round_trip_through_dict():
    p = load_parameters()
    again = parse_parameters(json.dumps(p.to_dict()))
    assert again == p
    assert isinstance(again, ImplyParameters)
