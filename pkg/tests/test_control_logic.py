import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atomic.control_logic import (
    WaveformSchedule, device_rows, eval_algo, read_pwm_csv, read_schedule, switch_rows, write_pwm_csv,
)
from atomic.errors import IoError
from atomic.spec_io import ground_switch
from helpers import ALL_ALGORITHMS, bundled, serial_bundle


def test_imply_step_drive_levels():
    b = serial_bundle(["m0", "m1", "m2", "m3"], [], "I0,2")
    sch = eval_algo(b)
    p = b.params
    assert sch.devices["m0"] == [p.V_COND]
    assert sch.devices["m2"] == [p.V_SET]
    assert sch.devices["m1"] == [None]
    assert sch.devices["m3"] == [None]
    assert sch.switches["sm0"] == [True]
    assert sch.switches["sm2"] == [True]
    assert sch.switches["sm1"] == [False]
    assert sch.switches[ground_switch(0)] == [False]


def test_false_step_grounds_the_section():
    b = serial_bundle(["m0", "m1", "m2"], [], "F0,2\nNOP")
    sch = eval_algo(b)
    assert sch.devices["m0"] == [b.params.V_RESET, None]
    assert sch.devices["m2"] == [b.params.V_RESET, None]
    assert sch.switches[ground_switch(0)] == [True, False]
    assert sch.switches["sm1"] == [False, False]


def test_cross_section_imply_closes_bridge():
    b = bundled("semi_serial_full_adder")
    sch = eval_algo(b)
    for s, step in enumerate(b.program.steps):
        crossing = any(len({b.device_sections[d] for d in op.devices()}) > 1 for op in step)
        assert sch.switches["bridge01"][s] == crossing


@pytest.mark.parametrize("name", ALL_ALGORITHMS)
def test_levels_and_switches_consistent(name):
    b = bundled(name)
    sch = eval_algo(b)
    allowed = {None, b.params.V_SET, b.params.V_COND, b.params.V_RESET, 0.0}
    assert sch.steps == len(b.program)
    for dev, levels in sch.devices.items():
        assert set(levels) <= allowed
        assert [v is not None for v in levels] == sch.switches["s" + dev]


def test_two_step_schedule_rows():
    b = serial_bundle(["m0", "m1"], [], "F0\nI0,1")
    sch = eval_algo(b)
    rows = device_rows(sch, "m1")
    assert len(rows) == 4
    assert rows[0][0] == 0.0
    assert rows[-1][0] == 2 * b.params.cycle_time
    assert math.isnan(rows[0][1]) and rows[2][1] == b.params.V_SET
    assert [v for _, v in switch_rows(sch, "sm1")] == [0, 0, 1, 1]


def test_pwm_files_round_trip(tmp_path):
    b = bundled("semi_parallel_full_adder")
    sch = eval_algo(b)
    paths = write_pwm_csv(sch, tmp_path)
    assert len(paths) == len(sch.devices) + len(sch.switches)
    back = read_schedule(tmp_path, list(sch.devices), list(sch.switches))
    assert back.devices == sch.devices
    assert back.switches == sch.switches
    assert back.cycle_time == sch.cycle_time
    first = (tmp_path / "a.csv").read_text().splitlines()
    assert first[0] == "time_s,value"


levels = st.lists(st.sampled_from([None, 1.0, 0.9, -1.0, 0.0]), min_size=1, max_size=12)


@settings(max_examples=50, deadline=None)
@given(levels, st.floats(1e-9, 1e-3))
def test_csv_round_trip_property(tmp_path_factory, lv, cycle):
    d = tmp_path_factory.mktemp("pwm")
    sch = WaveformSchedule(cycle, {"m": lv}, {"sm": [v is not None for v in lv]})
    write_pwm_csv(sch, d)
    assert read_pwm_csv(d / "m.csv")[-1][0] == len(lv) * cycle
    back = read_schedule(d, ["m"], ["sm"], cycle)
    assert back.devices == sch.devices and back.switches == sch.switches


def test_unwritable_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    sch = WaveformSchedule(1e-6, {"m": [1.0]}, {"sm": [True]})
    with pytest.raises(IoError):
        write_pwm_csv(sch, blocker / "sub")
