"""SPICE netlist export for cross-checking a run in an external simulator.

The netlist mirrors the built-in engine: one behavioural threshold memristor
per device, a PWL source and series switch per device, one ``R_G`` per section
(itself switched so a bridged section can lend its node without its resistor),
a reset switch per section and the inter-section bridges.
"""

from __future__ import annotations

import math
import re
from pathlib import Path
from typing import Mapping

from .circuit_sim import compile_schedule
from .control_logic import WaveformSchedule, device_rows, pwl_rows, switch_rows
from .errors import IoError
from .spec_io import ValidatedBundle, device_switch, ground_switch

SUBCKT = """\
.subckt memristor p n w0=0 Ron=10k Roff=1Meg von=0.7 voff=-0.7 kon=1 koff=1 alpha=3
* state variable w lives on node w (1 F capacitor, so dV/dt = dw/dt)
Cw w 0 1 ic={w0}
Rleak w 0 1e15
Gw 0 w value={if(V(w)>=1 & V(p,n)>von, 0, if(V(w)<=0 & V(p,n)<voff, 0,
+ kon*pow(max(V(p,n)-von,0)/von, alpha) - koff*pow(max(voff-V(p,n),0)/(-voff), alpha)))}
Bm p n I=V(p,n)/(Roff+V(w)*(Ron-Roff))
.ends memristor
"""


def _num(x: float) -> str:
    return repr(float(x))


def _pwl(points) -> str:
    return "PWL(" + " ".join(f"{_num(t)} {_num(v)}" for t, v in points) + ")"


def _rg_rows(bundle: ValidatedBundle, schedule: WaveformSchedule) -> dict[int, list]:
    """Per section, whether its R_G is connected in each step (1) or lent out (0)."""
    n_sec = bundle.topology.section_count
    states = {i: [1] * schedule.steps for i in range(n_sec)}
    for s, plan in enumerate(compile_schedule(bundle, schedule)):
        for grp in plan.groups:
            for sec in grp.sections:
                if grp.r_g is not None and sec != grp.owner:
                    states[sec][s] = 0
    return {i: pwl_rows(v, schedule.cycle_time) for i, v in states.items()}


def render_netlist(bundle: ValidatedBundle, schedule: WaveformSchedule,
                   initial_w: Mapping[str, float], title: str = "") -> str:
    if schedule.steps == 0:
        raise IoError("cannot export a netlist for a program with zero steps")
    params = bundle.params
    model = params.model
    topo = bundle.topology
    names = bundle.memristors
    sections = bundle.device_sections
    stop = schedule.duration

    out = [f"* {title or bundle.name} ({topo.name} topology)",
           f".param Ron={_num(params.R_on)} Roff={_num(params.R_off)}",
           SUBCKT.rstrip("\n"),
           ".model SWIDEAL SW(Ron=1m Roff=1T Vt=0.5 Vh=0)",
           ""]
    for i, name in enumerate(names):
        rows = [(t, 0.0 if math.isnan(v) else v) for t, v in device_rows(schedule, name)]
        out.append(f"Vdrv_{name} drv_{name} 0 {_pwl(rows)}")
        sw = device_switch(name)
        if sw in schedule.switches:
            out.append(f"Vctl_{sw} ctl_{sw} 0 {_pwl(switch_rows(schedule, sw))}")
            out.append(f"S{sw} drv_{name} top_{name} ctl_{sw} 0 SWIDEAL")
        else:
            out.append(f"Ropen_{name} drv_{name} top_{name} 1e15")
        w0 = float(initial_w.get(name, 0.0))
        out.append(f"X{name} top_{name} node{sections[i]} memristor w0={_num(w0)} Ron={{Ron}} Roff={{Roff}} "
                   f"von={_num(model.v_on)} voff={_num(model.v_off)} kon={_num(model.k_on)} "
                   f"koff={_num(model.k_off)} alpha={_num(model.alpha)}")
    out.append("")
    for i, (sec, rg_rows) in enumerate(zip(topo.sections, _rg_rows(bundle, schedule).values())):
        out.append(f"RG{i} rg{i} 0 {_num(sec.r_g)}")
        out.append(f"Vctl_rg{i} ctl_rg{i} 0 {_pwl(rg_rows)}")
        out.append(f"Srg{i} node{i} rg{i} ctl_rg{i} 0 SWIDEAL")
        gsw = ground_switch(i)
        out.append(f"Vctl_{gsw} ctl_{gsw} 0 {_pwl(switch_rows(schedule, gsw))}")
        out.append(f"S{gsw} node{i} 0 ctl_{gsw} 0 SWIDEAL")
    for sw, wiring in topo.switches.items():
        if wiring.device is None and sw in schedule.switches:
            a, b = wiring.sections
            out.append(f"Vctl_{sw} ctl_{sw} 0 {_pwl(switch_rows(schedule, sw))}")
            out.append(f"S{sw} node{a} node{b} ctl_{sw} 0 SWIDEAL")
    max_step = params.cycle_time / 1000
    out += ["", f".tran 0 {_num(stop)} 0 {_num(max_step)} uic", ".end", ""]
    return "\n".join(out)


def export_netlist(bundle: ValidatedBundle, schedule: WaveformSchedule,
                   initial_w: Mapping[str, float], out: Path, title: str = "") -> Path:
    text = render_netlist(bundle, schedule, initial_w, title)
    out = Path(out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise IoError(f"cannot write netlist {out}: {exc}") from exc
    return out


# --- reading back ---------------------------------------------------------

_PWL_RE = re.compile(r"^(V\S+)\s+\S+\s+\S+\s+PWL\((.*)\)\s*$")


def read_pwl_sources(text: str) -> dict[str, list[tuple[float, float]]]:
    sources = {}
    for line in text.splitlines():
        m = _PWL_RE.match(line)
        if m:
            vals = [float(x) for x in m.group(2).split()]
            sources[m.group(1)] = list(zip(vals[0::2], vals[1::2]))
    return sources


def lint_netlist(text: str) -> dict[str, int]:
    """Structural checks; returns element counts or raises ``ValueError``."""
    depth = 0
    names: set[str] = set()
    counts = {"memristors": 0, "ground_resistors": 0, "switches": 0, "sources": 0, "tran": 0}
    lines = text.splitlines()
    if not lines or not lines[0].startswith("*"):
        raise ValueError("netlist must start with a title comment")
    for line in lines:
        s = line.strip()
        if not s or s.startswith("*") or s.startswith("+"):
            continue
        word = s.split()[0]
        low = word.lower()
        if low == ".subckt":
            depth += 1
            continue
        if low == ".ends":
            depth -= 1
            if depth < 0:
                raise ValueError(".ends without .subckt")
            continue
        if low == ".tran":
            counts["tran"] += 1
            if float(s.split()[2]) <= 0:
                raise ValueError(".tran stop time must be positive")
            continue
        if low.startswith("."):
            continue
        if depth == 0:
            if word in names:
                raise ValueError(f"duplicate element name {word}")
            names.add(word)
            if word[0] in "Xx":
                counts["memristors"] += 1
            elif word.startswith("RG"):
                counts["ground_resistors"] += 1
            elif word[0] in "Ss":
                counts["switches"] += 1
            elif word[0] in "Vv":
                counts["sources"] += 1
    if depth != 0:
        raise ValueError("unbalanced .subckt/.ends")
    if counts["tran"] != 1:
        raise ValueError("netlist needs exactly one .tran directive")
    if lines[-1].strip().lower() != ".end" and lines[-2].strip().lower() != ".end":
        raise ValueError("netlist must finish with .end")
    for name, pts in read_pwl_sources(text).items():
        times = [t for t, _ in pts]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError(f"{name}: PWL time points are not monotone")
    return counts
