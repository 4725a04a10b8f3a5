"""Vectorised functional validation.

Every memristor carries a bit vector with one entry per input combination, so
a single pass over the program evaluates the whole truth table.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import IndexOutOfRange, UnknownOutputName
from .spec_io import AlgorithmProgram, ConfigSpec, FalseOp, ImplyOp, ValidatedBundle, render_step


def input_columns(n_inputs: int) -> np.ndarray:
    """Truth-table columns, shape ``(n_inputs, 2**n_inputs)``.

    Combination ``k`` gives input ``j`` the bit ``(k >> (n - 1 - j)) & 1``, so
    the first input is the most significant bit.
    """
    k = np.arange(2 ** n_inputs)
    shifts = np.arange(n_inputs - 1, -1, -1)[:, None]
    return ((k[None, :] >> shifts) & 1).astype(np.uint8)


@dataclass(frozen=True)
class StateModel:
    n_inputs: int
    vectors: np.ndarray  # (n_devices, 2**n_inputs), uint8

    @classmethod
    def initial(cls, n_devices: int, input_indices: Sequence[int]) -> StateModel:
        n = len(input_indices)
        vectors = np.zeros((n_devices, 2 ** n), dtype=np.uint8)
        cols = input_columns(n)
        for j, dev in enumerate(input_indices):
            vectors[dev] = cols[j]
        vectors.setflags(write=False)
        return cls(n, vectors)

    @property
    def n_devices(self) -> int:
        return self.vectors.shape[0]

    def _check(self, *indices: int) -> None:
        for i in indices:
            if not 0 <= i < self.n_devices:
                raise IndexOutOfRange(f"memristor index {i} out of range (have {self.n_devices})")

    def _with(self, vectors: np.ndarray) -> StateModel:
        vectors.setflags(write=False)
        return StateModel(self.n_inputs, vectors)


def imply_op(state: StateModel, src: int, dst: int) -> StateModel:
    """``dst <- (NOT src) OR dst``."""
    state._check(src, dst)
    v = state.vectors.copy()
    v[dst] = (1 - v[src]) | v[dst]
    return state._with(v)


def false_op(state: StateModel, targets: Sequence[int]) -> StateModel:
    state._check(*targets)
    v = state.vectors.copy()
    v[list(targets)] = 0
    return state._with(v)


def apply_step(state: StateModel, step) -> StateModel:
    # Sections touch disjoint memristors, so updating from the pre-step
    # snapshot equals any sequential order.
    before = state.vectors
    v = before.copy()
    for op in step:
        if isinstance(op, ImplyOp):
            state._check(op.src, op.dst)
            v[op.dst] = (1 - before[op.src]) | before[op.dst]
        elif isinstance(op, FalseOp):
            state._check(*op.targets)
            v[list(op.targets)] = 0
    return state._with(v)


@dataclass(frozen=True)
class HistoryEntry:
    step: int
    operations: str
    snapshot: np.ndarray


def run_program(program: AlgorithmProgram, initial: StateModel) -> tuple[StateModel, list[HistoryEntry]]:
    state = initial
    history = [HistoryEntry(0, "INIT", state.vectors)]
    for number, step in enumerate(program.steps, start=1):
        state = apply_step(state, step)
        history.append(HistoryEntry(number, render_step(step), state.vectors))
    return state, history


def calc_algorithm(bundle: ValidatedBundle) -> tuple[StateModel, list[HistoryEntry]]:
    initial = StateModel.initial(len(bundle.memristors), bundle.input_indices)
    return run_program(bundle.program, initial)


def initial_logic(bundle: ValidatedBundle) -> np.ndarray:
    """Initial logic level per (combination, memristor), shape ``(2**n, n_devices)``."""
    return StateModel.initial(len(bundle.memristors), bundle.input_indices).vectors.T.copy()


@dataclass(frozen=True)
class ValidationReport:
    mismatches: tuple[tuple[str, int, int, int], ...]  # (output, combination, expected, got)

    @property
    def passed(self) -> bool:
        return not self.mismatches


def check_equivalence(final: StateModel, config: ConfigSpec) -> ValidationReport:
    mismatches = []
    for name in config.outputs:
        if name not in config.output_states:
            continue
        if name not in config.memristors:
            raise UnknownOutputName(name)
        got = final.vectors[config.index(name)]
        for k, want in enumerate(config.output_states[name]):
            if int(got[k]) != want:
                mismatches.append((name, k, want, int(got[k])))
    for name in config.output_states:
        if name not in config.outputs:
            raise UnknownOutputName(name)
    return ValidationReport(tuple(mismatches))


def format_history(history: list[HistoryEntry], names: Sequence[str]) -> str:
    width = max((len(n) for n in names), default=0)
    blocks = []
    for entry in history:
        lines = [f"step {entry.step}: {entry.operations}"]
        for name, vec in zip(names, entry.snapshot):
            bits = " ".join(str(int(b)) for b in vec)
            lines.append(f"{name.ljust(width)}: [{bits}]")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def parse_history(text: str) -> list[tuple[int, str, dict[str, list[int]]]]:
    entries = []
    for block in text.strip().split("\n\n"):
        head, *rows = block.splitlines()
        number, ops = head[len("step "):].split(": ", 1)
        snap = {}
        for row in rows:
            name, bits = row.split(": ", 1)
            snap[name.rstrip()] = [int(b) for b in bits.strip("[]").split()]
        entries.append((int(number), ops, snap))
    return entries


def write_history(history: list[HistoryEntry], names: Sequence[str], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_history(history, names), encoding="utf-8", newline="\n")
    return path
