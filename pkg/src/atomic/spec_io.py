"""Parsing and cross-validation of the user-facing input files.

Three inputs describe an algorithm run: the algorithm text (one line per step,
``|``-separated sections), the JSON config naming memristors and expected
outputs, and the topology/parameter JSON files that ship in ``structures/``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Union

from .device import MemristorModelParams, calibrate_rates
from .errors import (
    BadOutputVectorLength,
    ConfigError,
    DuplicateDeviceInStep,
    ElectricalPreconditionViolated,
    EmptyAlgorithm,
    IndexOutOfRange,
    MalformedToken,
    MissingKey,
    RoleReferencesUndeclaredMemristor,
    SectionCountMismatch,
    StepCountMismatch,
    TopologyError,
    TopologyMismatch,
    UnknownKey,
    UnknownTopologyName,
)

TOPOLOGY_NAMES = ("Serial", "Semi-Serial", "Semi-Parallel")
TOPOLOGY_FILES = {
    "Serial": "serial.json",
    "Semi-Serial": "semi_serial.json",
    "Semi-Parallel": "semi_parallel.json",
}
PARAMETERS_FILE = "imply_parameters.json"
CONFIG_KEYS = ("topology", "algorithm", "memristors", "inputs", "work", "outputs",
               "switches", "steps", "output_states")
DEFAULT_R_G = 40e3


def data_dir() -> Path:
    return Path(str(resources.files("atomic") / "data"))


# --- algorithm programs ---------------------------------------------------

@dataclass(frozen=True)
class ImplyOp:
    src: int
    dst: int

    def devices(self) -> tuple[int, ...]:
        return (self.src, self.dst)

    def __str__(self) -> str:
        return f"I{self.src},{self.dst}"


@dataclass(frozen=True)
class FalseOp:
    targets: tuple[int, ...]

    def devices(self) -> tuple[int, ...]:
        return self.targets

    def __str__(self) -> str:
        return "F" + ",".join(str(t) for t in self.targets)


@dataclass(frozen=True)
class Nop:
    def devices(self) -> tuple[int, ...]:
        return ()

    def __str__(self) -> str:
        return "NOP"


SectionOp = Union[ImplyOp, FalseOp, Nop]
Step = tuple  # tuple[SectionOp, ...], one entry per topology section


@dataclass(frozen=True)
class AlgorithmProgram:
    steps: tuple[Step, ...]
    section_count: int = 1

    def __len__(self) -> int:
        return len(self.steps)

    def max_index(self) -> int:
        return max((d for step in self.steps for op in step for d in op.devices()), default=-1)


_IMPLY_RE = re.compile(r"I([0-9]+),([0-9]+)", re.IGNORECASE)
_FALSE_RE = re.compile(r"F([0-9]+)(?:,([0-9]+))?(?:,([0-9]+))?", re.IGNORECASE)
_WS_RE = re.compile(r"\s+")


def _parse_token(raw: str, lineno: int, column: int) -> SectionOp:
    token = _WS_RE.sub("", raw)
    if not token:
        raise MalformedToken("empty section", lineno, column)
    if token.upper() == "NOP":
        return Nop()
    m = _IMPLY_RE.fullmatch(token)
    if m:
        src, dst = int(m.group(1)), int(m.group(2))
        if src == dst:
            raise MalformedToken(f"IMPLY source and target are both {src}", lineno, column)
        return ImplyOp(src, dst)
    m = _FALSE_RE.fullmatch(token)
    if m:
        targets = tuple(int(g) for g in m.groups() if g is not None)
        if len(set(targets)) != len(targets):
            raise MalformedToken(f"FALSE targets repeat in {token!r}", lineno, column)
        return FalseOp(targets)
    raise MalformedToken(f"cannot parse {raw.strip()!r}", lineno, column)


def parse_algorithm(text: str, section_count: int, n_devices: int | None = None) -> AlgorithmProgram:
    """Parse algorithm text into a program of ``section_count``-wide steps.

    Blank lines are skipped and ``#`` starts a comment running to the end of
    the line. Index bounds are only
    checked when ``n_devices`` is known; otherwise ``cross_validate`` does it.
    """
    if section_count < 1:
        raise ValueError("section_count must be >= 1")
    steps = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0]
        if not line.strip():
            continue
        parts = line.split("|")
        if len(parts) != section_count:
            raise SectionCountMismatch(
                f"expected {section_count} section(s), found {len(parts)}", lineno, 1)
        ops = []
        seen: dict[int, int] = {}
        offset = 0
        for part in parts:
            column = offset + (len(part) - len(part.lstrip())) + 1
            op = _parse_token(part, lineno, column)
            for d in op.devices():
                if n_devices is not None and d >= n_devices:
                    raise IndexOutOfRange(
                        f"memristor index {d} out of range (have {n_devices})", lineno, column)
                if d in seen:
                    raise DuplicateDeviceInStep(
                        f"memristor {d} used by more than one section", lineno, column)
                seen[d] = column
            ops.append(op)
            offset += len(part) + 1
        steps.append(tuple(ops))
    if not steps:
        raise EmptyAlgorithm("algorithm contains no steps")
    return AlgorithmProgram(tuple(steps), section_count)


def render_algorithm(program: AlgorithmProgram) -> str:
    return "".join(render_step(step) + "\n" for step in program.steps)


def render_step(step: Step) -> str:
    return " | ".join(str(op) for op in step)


# --- config ---------------------------------------------------------------

@dataclass(frozen=True)
class ConfigSpec:
    topology_name: str
    algorithm_file: str
    memristors: tuple[str, ...]
    inputs: tuple[str, ...]
    work: tuple[str, ...]
    outputs: tuple[str, ...]
    switches: tuple[str, ...]
    steps: int
    output_states: dict[str, tuple[int, ...]]
    base_dir: Path | None = field(default=None, compare=False)

    @property
    def n_inputs(self) -> int:
        return len(self.inputs)

    @property
    def n_combinations(self) -> int:
        return 2 ** len(self.inputs)

    def index(self, name: str) -> int:
        return self.memristors.index(name)


def _str_list(obj: dict, key: str) -> tuple[str, ...]:
    value = obj[key]
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigError(f"{key!r} must be a list of strings")
    if len(set(value)) != len(value):
        raise ConfigError(f"{key!r} contains duplicate names")
    return tuple(value)


def parse_config(json_text: str, base_dir: Path | None = None) -> ConfigSpec:
    try:
        obj = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    missing = [k for k in CONFIG_KEYS if k not in obj]
    if missing:
        raise MissingKey(f"config is missing key(s): {', '.join(missing)}")
    unknown = sorted(set(obj) - set(CONFIG_KEYS))
    if unknown:
        raise UnknownKey(f"config has unknown key(s): {', '.join(unknown)}")

    topology = obj["topology"]
    if topology not in TOPOLOGY_NAMES:
        raise UnknownTopologyName(f"unknown topology {topology!r}; expected one of {TOPOLOGY_NAMES}")
    if not isinstance(obj["algorithm"], str) or not obj["algorithm"]:
        raise ConfigError("'algorithm' must be a non-empty string")
    steps = obj["steps"]
    if isinstance(steps, bool) or not isinstance(steps, int) or steps < 0:
        raise ConfigError("'steps' must be a non-negative integer")

    memristors = _str_list(obj, "memristors")
    if any(not m for m in memristors):
        raise ConfigError("memristor names must be non-empty")
    roles = {key: _str_list(obj, key) for key in ("inputs", "work", "outputs")}
    switches = _str_list(obj, "switches")
    declared = set(memristors)
    for key, names in roles.items():
        stray = [n for n in names if n not in declared]
        if stray:
            raise RoleReferencesUndeclaredMemristor(f"{key!r} names undeclared memristor(s): {stray}")
    both = set(roles["inputs"]) & set(roles["work"])
    if both:
        raise ConfigError(f"memristor(s) {sorted(both)} are both input and work")

    states = obj["output_states"]
    if not isinstance(states, dict):
        raise ConfigError("'output_states' must be an object")
    expected_len = 2 ** len(roles["inputs"])
    output_states = {}
    for name, vector in states.items():
        if name not in roles["outputs"]:
            raise RoleReferencesUndeclaredMemristor(
                f"output_states names {name!r}, which is not listed in 'outputs'")
        if not isinstance(vector, list) or any(isinstance(b, bool) or b not in (0, 1) for b in vector):
            raise ConfigError(f"output_states[{name!r}] must be a list of 0/1")
        if len(vector) != expected_len:
            raise BadOutputVectorLength(
                f"output_states[{name!r}] has {len(vector)} entries, expected 2^{len(roles['inputs'])} = {expected_len}")
        output_states[name] = tuple(int(b) for b in vector)

    return ConfigSpec(topology, obj["algorithm"], memristors, roles["inputs"], roles["work"],
                      roles["outputs"], switches, steps, output_states, base_dir)


# --- topology and parameters ----------------------------------------------

@dataclass(frozen=True)
class Section:
    memristors: tuple[str, ...]
    r_g: float = DEFAULT_R_G


@dataclass(frozen=True)
class SwitchWiring:
    device: str | None  # None for an inter-section bridge
    sections: tuple[int, ...]


@dataclass(frozen=True)
class TopologySpec:
    name: str
    sections: tuple[Section, ...]
    switches: dict[str, SwitchWiring]

    @property
    def section_count(self) -> int:
        return len(self.sections)

    def section_of(self, device: str) -> int:
        for i, sec in enumerate(self.sections):
            if device in sec.memristors:
                return i
        raise KeyError(device)

    def devices(self) -> tuple[str, ...]:
        return tuple(m for sec in self.sections for m in sec.memristors)

    def bridge_between(self, a: int, b: int) -> str | None:
        for name, wiring in self.switches.items():
            if wiring.device is None and set(wiring.sections) == {a, b}:
                return name
        return None


def device_switch(name: str) -> str:
    return "s" + name


def ground_switch(section: int) -> str:
    """Switch that ties a section's common node to ground during FALSE steps."""
    return f"gnd{section}"


def parse_topology(json_text: str) -> TopologySpec:
    try:
        obj = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise TopologyError(f"topology is not valid JSON: {exc}") from None
    try:
        name = obj["name"]
        raw_sections = obj["sections"]
        raw_switches = obj.get("switches", {})
    except (KeyError, TypeError):
        raise TopologyError("topology needs 'name' and 'sections'") from None
    if name not in TOPOLOGY_NAMES:
        raise UnknownTopologyName(f"unknown topology {name!r}")

    sections = []
    seen: set[str] = set()
    for raw in raw_sections:
        members = tuple(raw["memristors"])
        r_g = float(raw.get("R_G", DEFAULT_R_G))
        if not r_g > 0:
            raise TopologyError("R_G must be > 0")
        overlap = seen & set(members)
        if overlap or len(set(members)) != len(members):
            raise TopologyError(f"memristor(s) {sorted(overlap) or members} appear in more than one slot")
        seen |= set(members)
        sections.append(Section(members, r_g))

    wanted = {"Serial": (1, 1), "Semi-Serial": (2, 2), "Semi-Parallel": (2, None)}[name]
    n = len(sections)
    if n < wanted[0] or (wanted[1] is not None and n > wanted[1]):
        raise TopologyError(f"{name} topology cannot have {n} section(s)")

    switches = {}
    for sw, raw in raw_switches.items():
        if "device" in raw:
            dev = raw["device"]
            if dev not in seen:
                raise TopologyError(f"switch {sw!r} wires unknown memristor {dev!r}")
            sec = next(i for i, s in enumerate(sections) if dev in s.memristors)
            switches[sw] = SwitchWiring(dev, (sec,))
        elif "bridge" in raw:
            pair = tuple(int(i) for i in raw["bridge"])
            if len(pair) != 2 or pair[0] == pair[1] or not all(0 <= i < n for i in pair):
                raise TopologyError(f"switch {sw!r} must bridge two distinct sections")
            switches[sw] = SwitchWiring(None, pair)
        else:
            raise TopologyError(f"switch {sw!r} needs 'device' or 'bridge'")
    return TopologySpec(name, tuple(sections), switches)


@dataclass(frozen=True)
class ImplyParameters:
    V_SET: float = 1.0
    V_COND: float = 0.96
    V_RESET: float = -1.0
    cycle_time: float = 30e-6
    R_on: float = 10e3
    R_off: float = 1e6
    model: MemristorModelParams = field(default_factory=MemristorModelParams)

    def to_dict(self) -> dict:
        return {
            "V_SET": self.V_SET, "V_COND": self.V_COND, "V_RESET": self.V_RESET,
            "cycle_time": self.cycle_time, "R_on": self.R_on, "R_off": self.R_off,
            "model": {"v_on": self.model.v_on, "v_off": self.model.v_off, "k_on": self.model.k_on,
                      "k_off": self.model.k_off, "alpha": self.model.alpha},
        }


def electrical_problems(p: ImplyParameters) -> list[str]:
    """Every violated bias inequality, empty when the parameters are sound."""
    m = p.model
    problems = list(m.check())
    if not 0 < p.V_COND < p.V_SET:
        problems.append(f"need 0 < V_COND < V_SET (V_COND={p.V_COND}, V_SET={p.V_SET})")
    if not p.V_RESET < 0:
        problems.append(f"need V_RESET < 0 (V_RESET={p.V_RESET})")
    if not 0 < p.R_on < p.R_off:
        problems.append(f"need 0 < R_on < R_off (R_on={p.R_on}, R_off={p.R_off})")
    if not p.cycle_time > 0:
        problems.append(f"need cycle_time > 0 (cycle_time={p.cycle_time})")
    if not p.V_SET - p.V_COND < m.v_on < p.V_SET:
        problems.append(f"need V_SET - V_COND < v_on < V_SET (v_on={m.v_on})")
    if not p.V_COND < m.v_on:
        problems.append(f"need V_COND < v_on (V_COND={p.V_COND}, v_on={m.v_on})")
    if not p.V_RESET < m.v_off:
        problems.append(f"need V_RESET < v_off (V_RESET={p.V_RESET}, v_off={m.v_off})")
    return problems


def check_electrical(p: ImplyParameters) -> None:
    problems = electrical_problems(p)
    if problems:
        raise ElectricalPreconditionViolated("; ".join(problems))


def resolve_parameters(p: ImplyParameters) -> ImplyParameters:
    """Check the bias inequalities and calibrate any missing switching rates."""
    check_electrical(p)
    if p.model.calibrated:
        return p
    model = calibrate_rates(p.model, p.V_SET, p.V_RESET, p.cycle_time)
    return ImplyParameters(p.V_SET, p.V_COND, p.V_RESET, p.cycle_time, p.R_on, p.R_off, model)


def parse_parameters(json_text: str, resolve: bool = True) -> ImplyParameters:
    try:
        obj = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise TopologyError(f"parameter file is not valid JSON: {exc}") from None
    defaults = ImplyParameters()
    known = {"V_SET", "V_COND", "V_RESET", "cycle_time", "R_on", "R_off", "model"}
    unknown = sorted(set(obj) - known)
    if unknown:
        raise TopologyError(f"parameter file has unknown key(s): {', '.join(unknown)}")
    raw_model = obj.get("model", {})
    model_defaults = MemristorModelParams()
    model = MemristorModelParams(
        v_on=float(raw_model.get("v_on", model_defaults.v_on)),
        v_off=float(raw_model.get("v_off", model_defaults.v_off)),
        k_on=None if raw_model.get("k_on") is None else float(raw_model["k_on"]),
        k_off=None if raw_model.get("k_off") is None else float(raw_model["k_off"]),
        alpha=float(raw_model.get("alpha", model_defaults.alpha)),
    )
    params = ImplyParameters(
        **{k: float(obj.get(k, getattr(defaults, k)))
           for k in ("V_SET", "V_COND", "V_RESET", "cycle_time", "R_on", "R_off")},
        model=model,
    )
    return resolve_parameters(params) if resolve else params


# --- cross validation -----------------------------------------------------

@dataclass(frozen=True)
class ValidatedBundle:
    name: str
    program: AlgorithmProgram
    config: ConfigSpec
    topology: TopologySpec
    params: ImplyParameters

    @property
    def memristors(self) -> tuple[str, ...]:
        return self.config.memristors

    @property
    def input_indices(self) -> tuple[int, ...]:
        return tuple(self.config.index(n) for n in self.config.inputs)

    @property
    def output_names(self) -> tuple[str, ...]:
        """Outputs that carry an expected vector, in ``outputs`` order."""
        return tuple(n for n in self.config.outputs if n in self.config.output_states)

    @property
    def device_sections(self) -> tuple[int, ...]:
        return tuple(self.topology.section_of(n) for n in self.config.memristors)


def cross_validate(program: AlgorithmProgram, config: ConfigSpec, topo: TopologySpec,
                   params: ImplyParameters, name: str = "algorithm") -> ValidatedBundle:
    if topo.name != config.topology_name:
        raise TopologyMismatch(f"config asks for {config.topology_name!r}, topology file is {topo.name!r}")
    if program.section_count != topo.section_count:
        raise TopologyMismatch(
            f"algorithm has {program.section_count} section(s) per step, {topo.name} has {topo.section_count}")
    n = len(config.memristors)
    if program.max_index() >= n:
        raise IndexOutOfRange(f"memristor index {program.max_index()} out of range (have {n})")
    if config.steps != len(program):
        raise StepCountMismatch(f"config declares {config.steps} steps, algorithm has {len(program)}")

    available = set(topo.devices())
    stray = [m for m in config.memristors if m not in available]
    if stray:
        raise TopologyMismatch(f"memristor(s) {stray} do not exist in the {topo.name} topology")
    stray = [s for s in config.switches if s not in topo.switches]
    if stray:
        raise TopologyMismatch(f"switch(es) {stray} do not exist in the {topo.name} topology")
    clash = set(config.switches) & set(config.memristors)
    if clash:
        raise TopologyMismatch(f"name(s) {sorted(clash)} used for both a switch and a memristor")

    sections = [topo.section_of(m) for m in config.memristors]
    declared = set(config.switches)
    names = config.memristors
    for lineno, step in enumerate(program.steps, start=1):
        for sec, op in enumerate(step):
            for d in op.devices():
                sw = device_switch(names[d])
                if sw not in declared:
                    raise TopologyMismatch(f"step {lineno}: switch {sw!r} for {names[d]!r} is not declared")
            if isinstance(op, FalseOp):
                off = [names[t] for t in op.targets if sections[t] != sec]
                if off:
                    raise TopologyMismatch(f"step {lineno}: FALSE in section {sec} targets {off} of another section")
            elif isinstance(op, ImplyOp):
                s_src, s_dst = sections[op.src], sections[op.dst]
                if sec not in (s_src, s_dst):
                    raise TopologyMismatch(
                        f"step {lineno}: IMPLY in section {sec} touches neither of its own memristors")
                if s_src != s_dst:
                    other = s_dst if s_src == sec else s_src
                    if not isinstance(step[other], Nop):
                        raise TopologyMismatch(
                            f"step {lineno}: cross-section IMPLY needs section {other} idle")
                    bridge = topo.bridge_between(s_src, s_dst)
                    if bridge is None or bridge not in declared:
                        raise TopologyMismatch(
                            f"step {lineno}: no declared switch bridges sections {s_src} and {s_dst}")
    check_electrical(params)
    return ValidatedBundle(name, program, config, topo, params)


# --- file loading ---------------------------------------------------------

def _read(path: Path) -> str:
    return Path(path).read_text(encoding="utf-8")


def resolve_algorithm_path(config: ConfigSpec) -> Path:
    candidates = []
    raw = Path(config.algorithm_file)
    bases = [config.base_dir] if config.base_dir is not None else []
    bases.append(data_dir() / "algorithms")
    for base in bases:
        p = raw if raw.is_absolute() else base / raw
        candidates += [p, p.with_name(p.name + ".txt")]
    for p in candidates:
        if p.is_file():
            return p
    raise FileNotFoundError(f"algorithm file {config.algorithm_file!r} not found")


def load_topology(name: str, structures_dir: Path | None = None) -> TopologySpec:
    base = Path(structures_dir) if structures_dir else data_dir() / "structures"
    return parse_topology(_read(base / TOPOLOGY_FILES[name]))


def load_parameters(structures_dir: Path | None = None, path: Path | None = None) -> ImplyParameters:
    if path is None:
        base = Path(structures_dir) if structures_dir else data_dir() / "structures"
        path = base / PARAMETERS_FILE
    return parse_parameters(_read(path))


def load_bundle(config_path: Path, structures_dir: Path | None = None,
                params_path: Path | None = None) -> ValidatedBundle:
    """Read a config and everything it refers to, then cross-validate."""
    config_path = Path(config_path)
    config = parse_config(_read(config_path), base_dir=config_path.parent)
    topo = load_topology(config.topology_name, structures_dir)
    params = load_parameters(structures_dir, params_path)
    text = _read(resolve_algorithm_path(config))
    program = parse_algorithm(text, topo.section_count, len(config.memristors))
    return cross_validate(program, config, topo, params, name=config_path.stem)
