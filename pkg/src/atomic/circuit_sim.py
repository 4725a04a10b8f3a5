"""Transient simulation of scheduled IMPLY/FALSE steps.

Each section is a single common node tied to ground through ``R_G``. Driven
memristors connect their source voltage to that node; floating ones are cut
off by their series switch. With only one unknown per node the nodal equation
has a closed form, so every substep is a handful of array operations.

Runs are batched along a leading axis. All reductions are written as explicit
left-to-right accumulations so a row's result never depends on the batch it
was computed in.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .control_logic import WaveformSchedule
from .device import threshold_logic  # noqa: F401
from .errors import NumericalBlowup
from .spec_io import Nop, ValidatedBundle, device_switch, ground_switch

DEFAULT_SUBSTEPS = 1000


def solve_section_node(devices: Sequence[tuple[float | None, float]], r_g: float) -> float:
    """Voltage of a section's common node.

    ``devices`` holds ``(drive, resistance)`` pairs; ``drive`` is ``None`` for a
    floating device, which contributes nothing.
    """
    num = 0.0
    den = 1.0 / r_g
    driven = False
    for drive, r in devices:
        if drive is None:
            continue
        driven = True
        num += drive / r
        den += 1.0 / r
    return num / den if driven else 0.0


@dataclass
class _Group:
    members: list[int]       # positions in the step's driven-device list
    sections: tuple[int, ...]
    r_g: float | None        # None: node tied to ground
    owner: int = 0           # section whose R_G carries the group current


@dataclass
class _StepPlan:
    driven: np.ndarray       # global device indices
    volts: list[float]
    groups: list[_Group] = field(default_factory=list)


def compile_schedule(bundle: ValidatedBundle, schedule: WaveformSchedule) -> list[_StepPlan]:
    """Turn per-step drives and switch states into electrical node groups."""
    names = bundle.memristors
    topo = bundle.topology
    sections = bundle.device_sections
    n_sec = topo.section_count
    bridges = [(name, w.sections) for name, w in topo.switches.items()
               if w.device is None and name in schedule.switches]
    plans = []
    for s in range(schedule.steps):
        driven, volts, dev_sec = [], [], []
        for i, name in enumerate(names):
            v = schedule.devices[name][s]
            sw = schedule.switches.get(device_switch(name))
            if v is None or (sw is not None and not sw[s]):
                continue
            driven.append(i)
            volts.append(float(v))
            dev_sec.append(sections[i])

        # merge sections joined by a closed bridge
        parent = list(range(n_sec))

        def find(x):
            while parent[x] != x:
                x = parent[x]
            return x

        for name, (a, b) in bridges:
            if schedule.switches[name][s]:
                parent[find(b)] = find(a)

        step_ops = bundle.program.steps[s] if s < len(bundle.program) else ()
        groups: dict[int, _Group] = {}
        for pos, sec in enumerate(dev_sec):
            root = find(sec)
            if root not in groups:
                members_sec = tuple(x for x in range(n_sec) if find(x) == root)
                grounded = any(schedule.switches.get(ground_switch(x), [False] * (s + 1))[s]
                               for x in members_sec)
                active = [x for x in members_sec if x < len(step_ops) and not isinstance(step_ops[x], Nop)]
                owner = min(active) if active else min(members_sec)
                groups[root] = _Group([], members_sec, None if grounded else topo.sections[owner].r_g, owner)
            groups[root].members.append(pos)
        plans.append(_StepPlan(np.array(driven, dtype=int), volts, list(groups.values())))
    return plans


@dataclass
class TransientTrace:
    """Sampled waveforms of one run.

    Every step contributes ``substeps + 1`` samples; the first sample of a
    step repeats the previous step's last time stamp so the drive
    discontinuity is represented exactly (value-before, value-after).
    """

    device_names: tuple[str, ...]
    cycle_time: float
    substeps: int
    times: np.ndarray        # (M,)
    step: np.ndarray         # (M,) step index of each sample
    w: np.ndarray            # (M, D)
    v_g: np.ndarray          # (M, S)
    p_dev: np.ndarray        # (M, D)
    p_rg: np.ndarray         # (M, S)
    final_w: np.ndarray      # (D,)

    @property
    def recorded(self) -> bool:
        return self.times.size > 0


def _ipow(x: np.ndarray, alpha: float) -> np.ndarray:
    n = int(alpha)
    if n == alpha and 1 <= n <= 16:
        out = x
        for _ in range(n - 1):
            out = out * x
        return out
    return np.power(x, alpha)


def _integrate(plans: list[_StepPlan], w0: np.ndarray, bundle: ValidatedBundle, substeps: int,
               record: bool):
    params = bundle.params
    model = params.model
    r_on, r_off = params.R_on, params.R_off
    span = r_on - r_off
    v_on, v_off = model.v_on, model.v_off
    k_on, k_off, alpha = model.k_on, model.k_off, model.alpha
    h = params.cycle_time / substeps
    n_sec = bundle.topology.section_count

    w = np.array(w0, dtype=float, copy=True)
    batch, n_dev = w.shape
    rec = None
    if record:
        m = len(plans) * (substeps + 1)
        rec = {
            "w": np.empty((batch, m, n_dev)),
            "v_g": np.zeros((batch, m, n_sec)),
            "p_dev": np.zeros((batch, m, n_dev)),
            "p_rg": np.zeros((batch, m, n_sec)),
        }

    for s, plan in enumerate(plans):
        idx = plan.driven
        k = len(idx)
        base = s * (substeps + 1)
        if k == 0:
            if record:
                rec["w"][:, base:base + substeps + 1, :] = w[:, None, :]
            continue
        wd = w[:, idx].copy()
        volts = plan.volts
        vdev = np.empty((batch, k))
        vgs = [None] * len(plan.groups)
        for i in range(substeps + 1):
            g = 1.0 / (r_off + wd * span)
            for gi, grp in enumerate(plan.groups):
                if grp.r_g is None:
                    vg = np.zeros(batch)
                else:
                    num = np.zeros(batch)
                    den = np.full(batch, 1.0 / grp.r_g)
                    for j in grp.members:
                        num = num + volts[j] * g[:, j]
                        den = den + g[:, j]
                    vg = num / den
                vgs[gi] = vg
                for j in grp.members:
                    vdev[:, j] = volts[j] - vg
            if record:
                t = base + i
                full = w.copy()
                full[:, idx] = wd
                rec["w"][:, t, :] = full
                rec["p_dev"][:, t, idx] = vdev * vdev * g
                for grp, vg in zip(plan.groups, vgs):
                    for sec in grp.sections:
                        rec["v_g"][:, t, sec] = vg
                    if grp.r_g is not None:
                        rec["p_rg"][:, t, grp.owner] = vg * vg / grp.r_g
            if i == substeps:
                break
            over_on = np.maximum(vdev - v_on, 0.0) / v_on
            over_off = np.maximum(v_off - vdev, 0.0) / -v_off
            rate = k_on * _ipow(over_on, alpha) - k_off * _ipow(over_off, alpha)
            wd = np.minimum(np.maximum(wd + rate * h, 0.0), 1.0)
        if not np.isfinite(wd).all():
            bad = np.nonzero(~np.isfinite(wd).all(axis=1))[0]
            err = NumericalBlowup(f"non-finite state in step {s + 1}")
            err.rows = bad.tolist()
            err.step = s + 1
            raise err
        w[:, idx] = wd
    return w, rec


def _trace_from(bundle, rec, row, final, substeps, n_steps) -> TransientTrace:
    cycle = bundle.params.cycle_time
    if rec is None:
        empty = np.empty((0,))
        d, s = len(bundle.memristors), bundle.topology.section_count
        return TransientTrace(bundle.memristors, cycle, substeps, empty, empty.astype(int),
                              np.empty((0, d)), np.empty((0, s)), np.empty((0, d)), np.empty((0, s)),
                              final.copy())
    h = cycle / substeps
    steps = np.repeat(np.arange(n_steps), substeps + 1)
    local = np.tile(np.arange(substeps + 1), n_steps)
    times = steps * cycle + local * h
    # pin step boundaries to exact multiples of the cycle time
    times[local == substeps] = (steps[local == substeps] + 1) * cycle
    return TransientTrace(bundle.memristors, cycle, substeps, times, steps,
                          rec["w"][row], rec["v_g"][row], rec["p_dev"][row], rec["p_rg"][row],
                          final.copy())


def initial_vector(bundle: ValidatedBundle, initial_w) -> np.ndarray:
    if isinstance(initial_w, Mapping):
        w0 = np.zeros(len(bundle.memristors))
        for name, value in initial_w.items():
            w0[bundle.config.index(name)] = value
    else:
        w0 = np.asarray(initial_w, dtype=float)
    if w0.shape != (len(bundle.memristors),):
        raise ValueError("initial state must give one value per memristor")
    if np.any((w0 < 0) | (w0 > 1)):
        raise ValueError("initial states must lie in [0, 1]")
    return w0


def run_transient_batch(bundle: ValidatedBundle, schedule: WaveformSchedule, initial_w: np.ndarray,
                        record: bool = False, substeps: int = DEFAULT_SUBSTEPS):
    """Simulate many initial states at once.

    Returns ``(final_w, traces)``; ``final_w`` has shape ``(B, D)`` and
    ``traces`` is a list of :class:`TransientTrace` (empty unless ``record``).
    """
    w0 = np.atleast_2d(np.asarray(initial_w, dtype=float))
    if np.any((w0 < 0) | (w0 > 1)):
        raise ValueError("initial states must lie in [0, 1]")
    plans = compile_schedule(bundle, schedule)
    final, rec = _integrate(plans, w0, bundle, substeps, record)
    traces = []
    if record:
        traces = [_trace_from(bundle, rec, b, final[b], substeps, len(plans)) for b in range(len(w0))]
    return final, traces


def run_transient(bundle: ValidatedBundle, schedule: WaveformSchedule, initial_w,
                  record: bool = True, substeps: int = DEFAULT_SUBSTEPS) -> TransientTrace:
    w0 = initial_vector(bundle, initial_w)
    plans = compile_schedule(bundle, schedule)
    final, rec = _integrate(plans, w0[None, :], bundle, substeps, record)
    return _trace_from(bundle, rec, 0, final[0], substeps, len(plans))


@dataclass
class EnergyReport:
    total: float
    per_device: dict[str, float]
    per_section: dict[int, float]   # R_G dissipation
    per_step: list[float]


def calculate_energy(trace: TransientTrace) -> EnergyReport:
    """Trapezoidal integral of every power series, attributed to steps."""
    n_dev = trace.p_dev.shape[1]
    n_sec = trace.p_rg.shape[1]
    if trace.times.size < 2:
        return EnergyReport(0.0, {n: 0.0 for n in trace.device_names}, {i: 0.0 for i in range(n_sec)}, [])
    n_steps = int(trace.step.max()) + 1
    power = np.concatenate([trace.p_dev, trace.p_rg], axis=1)
    per = np.zeros((n_steps, n_dev + n_sec))
    for s in range(n_steps):
        sel = trace.step == s
        if sel.sum() >= 2:
            per[s] = np.trapezoid(power[sel], trace.times[sel], axis=0)
    dev_tot = per.sum(axis=0)
    return EnergyReport(
        total=float(per.sum()),
        per_device={n: float(dev_tot[i]) for i, n in enumerate(trace.device_names)},
        per_section={i: float(dev_tot[n_dev + i]) for i in range(n_sec)},
        per_step=[float(x) for x in per.sum(axis=1)],
    )


def write_waveform_csv(trace: TransientTrace, path, section_names: Sequence[str] | None = None,
                       stride: int = 1) -> None:
    """Dump ``w`` per device and the common-node voltage per section."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n_sec = trace.v_g.shape[1]
    section_names = section_names or [f"vG_s{i}" for i in range(n_sec)]
    keep = _stride_mask(trace, stride)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time_s", *trace.device_names, *section_names])
        for t, w, vg in zip(trace.times[keep], trace.w[keep], trace.v_g[keep]):
            writer.writerow([repr(float(t)), *(repr(float(x)) for x in w), *(repr(float(x)) for x in vg)])


def _stride_mask(trace: TransientTrace, stride: int) -> np.ndarray:
    local = np.arange(trace.times.size) % (trace.substeps + 1)
    return (local % stride == 0) | (local == trace.substeps)


def read_waveform_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(x) for x in row] for row in reader])
    return header, data.reshape(-1, len(header))
