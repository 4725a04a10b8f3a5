"""Per-device drive voltages and switch states, one entry per algorithm step."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import IoError
from .spec_io import FalseOp, ImplyOp, ValidatedBundle, device_switch, ground_switch


@dataclass
class WaveformSchedule:
    """Drive level per step is volts, or ``None`` for a floating (disconnected) device."""

    cycle_time: float
    devices: dict[str, list[float | None]]
    switches: dict[str, list[bool]]

    @property
    def steps(self) -> int:
        for levels in self.devices.values():
            return len(levels)
        for states in self.switches.values():
            return len(states)
        return 0

    @property
    def duration(self) -> float:
        return self.steps * self.cycle_time


def eval_algo(bundle: ValidatedBundle) -> WaveformSchedule:
    params = bundle.params
    names = bundle.memristors
    topo = bundle.topology
    sections = bundle.device_sections
    n_steps = len(bundle.program)

    devices: dict[str, list[float | None]] = {n: [None] * n_steps for n in names}
    switch_names = list(bundle.config.switches) + [ground_switch(i) for i in range(topo.section_count)]
    switches = {s: [False] * n_steps for s in switch_names}

    for s, step in enumerate(bundle.program.steps):
        for sec, op in enumerate(step):
            if isinstance(op, ImplyOp):
                devices[names[op.src]][s] = params.V_COND
                devices[names[op.dst]][s] = params.V_SET
                switches[device_switch(names[op.src])][s] = True
                switches[device_switch(names[op.dst])][s] = True
                if sections[op.src] != sections[op.dst]:
                    switches[topo.bridge_between(sections[op.src], sections[op.dst])][s] = True
            elif isinstance(op, FalseOp):
                for t in op.targets:
                    devices[names[t]][s] = params.V_RESET
                    switches[device_switch(names[t])][s] = True
                switches[ground_switch(sec)][s] = True

    schedule = WaveformSchedule(params.cycle_time, devices, switches)
    _check_schedule(schedule, params)
    return schedule


def _check_schedule(schedule: WaveformSchedule, params) -> None:
    for name, levels in schedule.devices.items():
        for s, v in enumerate(levels):
            assert v in (None, params.V_SET, params.V_COND, params.V_RESET, 0.0), (name, s, v)
            sw = schedule.switches.get(device_switch(name))
            if sw is not None:
                assert sw[s] == (v is not None), (name, s)


def _fmt(value: float) -> str:
    if math.isnan(value):
        return "NaN"
    return repr(float(value))


def pwl_rows(levels: list, cycle_time: float) -> list[tuple[float, float]]:
    """Piecewise-constant levels as (time, value) pairs, two per step."""
    rows = []
    for s, v in enumerate(levels):
        rows.append((s * cycle_time, v))
        rows.append(((s + 1) * cycle_time, v))
    return rows


def device_rows(schedule: WaveformSchedule, name: str) -> list[tuple[float, float]]:
    levels = [math.nan if v is None else float(v) for v in schedule.devices[name]]
    return pwl_rows(levels, schedule.cycle_time)


def switch_rows(schedule: WaveformSchedule, name: str) -> list[tuple[float, int]]:
    return pwl_rows([int(b) for b in schedule.switches[name]], schedule.cycle_time)


def _write_rows(path: Path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time_s", "value"])
        for t, v in rows:
            writer.writerow([_fmt(t), v if isinstance(v, int) else _fmt(v)])


def write_pwm_csv(schedule: WaveformSchedule, out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for name in schedule.devices:
            path = out_dir / f"{name}.csv"
            _write_rows(path, device_rows(schedule, name))
            paths.append(path)
        for name in schedule.switches:
            path = out_dir / f"{name}.csv"
            _write_rows(path, switch_rows(schedule, name))
            paths.append(path)
    except OSError as exc:
        raise IoError(f"cannot write PWM files to {out_dir}: {exc}") from exc
    return paths


def read_pwm_csv(path: Path) -> list[tuple[float, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["time_s", "value"]:
            raise ValueError(f"{path}: unexpected header {header}")
        return [(float(t), float(v)) for t, v in reader]


def read_schedule(out_dir: Path, devices: list[str], switches: list[str],
                  cycle_time: float | None = None) -> WaveformSchedule:
    """Rebuild a schedule from files written by :func:`write_pwm_csv`."""
    out_dir = Path(out_dir)
    dev_levels: dict[str, list[float | None]] = {}
    sw_states: dict[str, list[bool]] = {}
    for name in devices:
        rows = read_pwm_csv(out_dir / f"{name}.csv")
        dev_levels[name] = [None if math.isnan(v) else v for _, v in rows[::2]]
        if rows and cycle_time is None:
            cycle_time = rows[1][0]
    for name in switches:
        rows = read_pwm_csv(out_dir / f"{name}.csv")
        sw_states[name] = [bool(v) for _, v in rows[::2]]
        if rows and cycle_time is None:
            cycle_time = rows[1][0]
    return WaveformSchedule(cycle_time if cycle_time is not None else 0.0, dev_levels, sw_states)
