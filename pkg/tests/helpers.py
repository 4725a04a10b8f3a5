"""Shared builders for the test-suite."""

from pathlib import Path

from atomic.spec_io import (
    ConfigSpec, Section, SwitchWiring, TopologySpec, ValidatedBundle,
    cross_validate, data_dir, device_switch, load_bundle, load_parameters, parse_algorithm,
)

CONFIGS = data_dir() / "configs"
EXACT_ADDERS = ("serial_full_adder", "semi_serial_full_adder", "semi_parallel_full_adder")
ALL_ALGORITHMS = EXACT_ADDERS + ("approx_full_adder",)


def config_path(name: str) -> Path:
    return CONFIGS / f"{name}.json"


def bundled(name: str) -> ValidatedBundle:
    return load_bundle(config_path(name))


def serial_bundle(names, inputs, text, outputs=(), output_states=None, params=None, r_g=None):
    """Single-section bundle built in memory."""
    params = params or load_parameters()
    if r_g is None:
        r_g = bundled("serial_full_adder").topology.sections[0].r_g
    names = tuple(names)
    topo = TopologySpec("Serial", (Section(names, r_g),), {device_switch(n): SwitchWiring(n, (0,)) for n in names})
    program = parse_algorithm(text, 1, len(names))
    config = ConfigSpec("Serial", "inline", names, tuple(inputs), tuple(n for n in names if n not in inputs),
                        tuple(outputs), tuple(device_switch(n) for n in names), len(program),
                        dict(output_states or {}))
    return cross_validate(program, config, topo, params, name="inline")


def gate_bundle(text="I0,1", params=None):
    return serial_bundle(["p", "q"], [], text, params=params)


def full_adder_truth():
    rows = [((k >> 2) & 1, (k >> 1) & 1, k & 1) for k in range(8)]
    return [a ^ b ^ c for a, b, c in rows], [int(a + b + c >= 2) for a, b, c in rows]
