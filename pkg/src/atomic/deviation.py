"""Resistive-deviation experiments on the input memristors.

For every deviation level ``p``, every input combination and every sign corner
of the input memristors, the initial state of each input is pushed by
``+/- p`` (clamped to [0, 1]) and the algorithm is simulated. At ``p = 0``
there is a single, nominal corner.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .circuit_sim import DEFAULT_SUBSTEPS, run_transient_batch
from .control_logic import WaveformSchedule, eval_algo
from .device import LOGIC_HIGH, LOGIC_LOW, threshold_logic
from .errors import NumericalBlowup
from .spec_io import ConfigSpec, ValidatedBundle
from .state_model import initial_logic


def make_grid(max_level: float = 0.5, step: float = 0.05) -> tuple[float, ...]:
    if step <= 0 or max_level < 0:
        raise ValueError("deviation step must be > 0 and max >= 0")
    if max_level >= 1:
        raise ValueError("deviation levels must be < 1")
    n = int(math.floor(max_level / step + 1e-9))
    return tuple(round(i * step, 10) for i in range(n + 1))


def level_label(p: float) -> str:
    return f"{p:g}"


def corner_signs(corner: int, n_inputs: int) -> np.ndarray:
    """+1/-1 per input; input ``j`` reads bit ``n-1-j`` of the mask."""
    return np.array([1.0 if (corner >> (n_inputs - 1 - j)) & 1 else -1.0 for j in range(n_inputs)])


def corner_count(p: float, n_inputs: int) -> int:
    return 1 if p == 0 else 2 ** n_inputs


def deviated_initial(bundle: ValidatedBundle, p: float, combination: int, corner: int) -> np.ndarray:
    w = initial_logic(bundle)[combination].astype(float)
    if p == 0:
        return w
    idx = list(bundle.input_indices)
    signs = corner_signs(corner, len(idx))
    w[idx] = np.clip(w[idx] + signs * p, 0.0, 1.0)
    return w


@dataclass
class DeviationResults:
    levels: tuple[float, ...]
    outputs: tuple[str, ...]
    expected: dict[str, tuple[int, ...]]
    n_inputs: int
    final_w: list[np.ndarray]    # per level, shape (combinations, corners, outputs)
    nominal: np.ndarray          # (combinations, outputs)

    @property
    def n_combinations(self) -> int:
        return 2 ** self.n_inputs

    @property
    def run_count(self) -> int:
        return sum(a.shape[0] * a.shape[1] for a in self.final_w)

    def expected_matrix(self) -> np.ndarray:
        return np.array([self.expected[o] for o in self.outputs], dtype=int).T  # (K, O)


def _level_rows(bundle: ValidatedBundle, p: float) -> list[tuple[int, int]]:
    return [(k, c) for k in range(bundle.config.n_combinations)
            for c in range(corner_count(p, bundle.config.n_inputs))]


def evaluate_deviation(bundle: ValidatedBundle, grid, schedule: WaveformSchedule | None = None,
                       substeps: int = DEFAULT_SUBSTEPS) -> DeviationResults:
    grid = tuple(grid)
    if not grid:
        raise ValueError("deviation grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 0 or grid[-1] >= 1:
        raise ValueError("deviation levels must be strictly increasing within [0, 1)")
    schedule = schedule or eval_algo(bundle)
    out_idx = [bundle.config.index(o) for o in bundle.output_names]
    n_comb = bundle.config.n_combinations

    levels = grid if grid[0] == 0 else (0.0,) + grid
    keys, w0 = [], []
    for p in levels:
        for k, c in _level_rows(bundle, p):
            keys.append((p, k, c))
            w0.append(deviated_initial(bundle, p, k, c))
    try:
        final, _ = run_transient_batch(bundle, schedule, np.array(w0), substeps=substeps)
    except NumericalBlowup as exc:
        p, k, c = keys[exc.rows[0]]
        raise NumericalBlowup(f"{exc} at deviation {p}, combination {k}, corner {c}") from exc

    per_level = []
    pos = 0
    for p in levels:
        n_c = corner_count(p, bundle.config.n_inputs)
        block = final[pos:pos + n_comb * n_c][:, out_idx]
        per_level.append(block.reshape(n_comb, n_c, len(out_idx)))
        pos += n_comb * n_c
    nominal = per_level[0][:, 0, :].copy()
    if grid[0] != 0:
        per_level = per_level[1:]
    return DeviationResults(grid, bundle.output_names,
                            {o: bundle.config.output_states[o] for o in bundle.output_names},
                            bundle.config.n_inputs, per_level, nominal)


@dataclass(frozen=True)
class RangeRow:
    output: str
    level: float
    expected: int
    min_w: float
    max_w: float


def summarize_ranges(results: DeviationResults) -> list[RangeRow]:
    """Spread of final states per output, level and expected value."""
    exp = results.expected_matrix()
    rows = []
    for o, name in enumerate(results.outputs):
        for p, block in zip(results.levels, results.final_w):
            for want in (0, 1):
                sel = block[exp[:, o] == want, :, o]
                if sel.size:
                    rows.append(RangeRow(name, p, want, float(sel.min()), float(sel.max())))
    return rows


def write_range_table(rows: list[RangeRow], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["output", "level", "expected", "min_w", "max_w"])
        for r in rows:
            writer.writerow([r.output, level_label(r.level), r.expected, repr(r.min_w), repr(r.max_w)])
    return path


def read_range_table(path: Path) -> list[RangeRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [RangeRow(r["output"], float(r["level"]), int(r["expected"]),
                         float(r["min_w"]), float(r["max_w"])) for r in reader]


@dataclass
class CorrectnessTable:
    levels: tuple[float, ...]
    incorrect: list[np.ndarray]   # per level, bool (combinations, corners, outputs)

    def incorrect_count(self, level_index: int) -> int:
        return int(self.incorrect[level_index].sum())

    def fraction_incorrect(self, level_index: int) -> float:
        block = self.incorrect[level_index]
        return float(block.sum()) / block.size if block.size else 0.0

    def max_clean_level(self) -> float | None:
        """Largest level such that it and every smaller level have no incorrect sample."""
        best = None
        for i, p in enumerate(self.levels):
            if self.incorrect_count(i):
                break
            best = p
        return best


def is_incorrect(w: float, expected: int) -> bool:
    return threshold_logic(w) != expected


def classify(results: DeviationResults, config: ConfigSpec | None = None) -> CorrectnessTable:
    expected = results.expected if config is None else config.output_states
    exp = np.array([expected[o] for o in results.outputs], dtype=int).T
    masks = []
    for block in results.final_w:
        logic = np.where(block >= LOGIC_HIGH, 1, np.where(block <= LOGIC_LOW, 0, -1))
        masks.append(logic != exp[:, None, :])
    return CorrectnessTable(results.levels, masks)


def _classification_label(w: float) -> str:
    v = threshold_logic(w)
    return "X" if v is None else str(v)


def write_deviation_results(results: DeviationResults, out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for o, name in enumerate(results.outputs):
        for p, block in zip(results.levels, results.final_w):
            path = out_dir / f"{name}_{level_label(p)}.csv"
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["combination", "corner_mask", "final_w", "classification"])
                for k in range(block.shape[0]):
                    for c in range(block.shape[1]):
                        w = float(block[k, c, o])
                        writer.writerow([k, c, repr(w), _classification_label(w)])
            paths.append(path)
    return paths


_RESULT_NAME = re.compile(r"(.+)_([0-9.eE+-]+)\.csv")


def read_deviation_results(out_dir: Path, config: ConfigSpec) -> DeviationResults:
    """Load files written by :func:`write_deviation_results`."""
    out_dir = Path(out_dir)
    outputs = tuple(n for n in config.outputs if n in config.output_states)
    found: dict[tuple[str, float], np.ndarray] = {}
    for path in sorted(out_dir.glob("*.csv")):
        m = _RESULT_NAME.fullmatch(path.name)
        if not m or m.group(1) not in outputs:
            continue
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [(int(r["combination"]), int(r["corner_mask"]), float(r["final_w"]))
                    for r in csv.DictReader(fh)]
        n_k = max(r[0] for r in rows) + 1
        n_c = max(r[1] for r in rows) + 1
        arr = np.empty((n_k, n_c))
        for k, c, w in rows:
            arr[k, c] = w
        found[(m.group(1), float(m.group(2)))] = arr
    if not found:
        raise FileNotFoundError(f"no deviation results in {out_dir}")
    levels = tuple(sorted({p for _, p in found}))
    per_level = [np.stack([found[(o, p)] for o in outputs], axis=-1) for p in levels]
    nominal = per_level[0][:, 0, :].copy() if levels[0] == 0 else np.full_like(per_level[0][:, 0, :], np.nan)
    return DeviationResults(levels, outputs, {o: config.output_states[o] for o in outputs},
                            config.n_inputs, per_level, nominal)
