"""Command line entry point: ``atomic pipeline`` and ``atomic evaluate-soa``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import circuit_sim, control_logic, deviation, netlist, report, state_model
from .errors import (
    AlgorithmParseError, AtomicError, ConfigError, ElectricalPreconditionViolated, IoError,
    MismatchedTimeBase, NumericalBlowup, StepCountMismatch, TopologyError, TopologyMismatch,
    UnknownOutputName,
)
from .spec_io import ValidatedBundle, data_dir, load_bundle, render_algorithm

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_MISMATCH = 2
EXIT_SIMULATION = 3
EXIT_IO = 4

STAGES = ("validate", "control", "simulate", "deviate", "plot")
STAGE_LETTERS = {s[0]: s for s in STAGES}
TEST_MODE_ENV = "ATOMIC_TEST_MODE"
WAVEFORM_POINTS_PER_STEP = 50


class StageFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class PipelineOptions:
    config_file: Path
    out_dir: Path = Path("outputs")
    stages: tuple[str, ...] = STAGES
    deviation_max: float = 0.5
    deviation_step: float = 0.05
    substeps: int = circuit_sim.DEFAULT_SUBSTEPS
    record_waveforms: bool = True
    band_level: float | None = None
    band_combination: int | None = None
    figure_size: report.FigureSize = field(default_factory=report.FigureSize)
    structures_dir: Path | None = None
    params_file: Path | None = None
    test_mode: bool = False


@dataclass
class PipelineResult:
    code: int
    out_dir: Path
    summary: dict
    message: str = ""


def parse_stages(text: str) -> tuple[str, ...]:
    chosen = set()
    for part in text.split(","):
        part = part.strip().lower()
        if not part:
            continue
        name = STAGE_LETTERS.get(part, part)
        if name not in STAGES:
            raise ValueError(f"unknown stage {part!r} (choose from {', '.join(STAGES)})")
        chosen.add(name)
    if not chosen:
        raise ValueError("no stages selected")
    return tuple(s for s in STAGES if s in chosen)


# --- logging --------------------------------------------------------------

class _Formatter(logging.Formatter):
    def __init__(self, test_mode: bool):
        super().__init__("%(asctime)s %(levelname)s %(message)s")
        self.test_mode = test_mode

    def formatTime(self, record, datefmt=None):
        if self.test_mode:
            return "0000-00-00T00:00:00"
        return time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(record.created))


def _open_log(path: Path, test_mode: bool) -> logging.Logger:
    path.parent.mkdir(parents=True, exist_ok=True)
    log = logging.getLogger(f"atomic.run.{path.resolve()}")
    log.setLevel(logging.INFO)
    log.propagate = False
    for h in list(log.handlers):
        log.removeHandler(h)
        h.close()
    handler = logging.FileHandler(path, mode="w", encoding="utf-8")
    handler.setFormatter(_Formatter(test_mode))
    log.addHandler(handler)
    return log


def _close_log(log: logging.Logger) -> None:
    for h in list(log.handlers):
        log.removeHandler(h)
        h.close()


# --- helpers --------------------------------------------------------------

def _dump_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")


def _merge_summary(path: Path, update: dict) -> dict:
    current = json.loads(path.read_text(encoding="utf-8")) if path.is_file() else {}
    current.update(update)
    _dump_json(path, current)
    return current


def _stride(substeps: int) -> int:
    return max(1, substeps // WAVEFORM_POINTS_PER_STEP)


def _initial_states(bundle: ValidatedBundle) -> np.ndarray:
    return state_model.initial_logic(bundle).astype(float)


def _comb_file(k: int) -> str:
    return f"comb{k}.csv"


def _band_params(bundle: ValidatedBundle, opts: PipelineOptions, grid) -> tuple[float, int]:
    positive = [p for p in grid if p > 0]
    if opts.band_level is not None:
        level = opts.band_level
    elif not positive:
        level = 0.0
    else:
        level = 0.2 if 0.2 in positive else positive[-1]
    k = opts.band_combination
    if k is None:
        k = bundle.config.n_combinations - 1
    if not 0 <= k < bundle.config.n_combinations:
        raise ValueError(f"band combination {k} out of range")
    return level, k


def _band_dir(out: Path) -> Path:
    return out / "Waveforms" / "deviation"


# --- stages ---------------------------------------------------------------

def _stage_validate(bundle: ValidatedBundle, out: Path, log: logging.Logger) -> dict:
    final, history = state_model.calc_algorithm(bundle)
    state_model.write_history(history, bundle.memristors, out / "State_History.txt")
    report_ = state_model.check_equivalence(final, bundle.config)
    log.info("state model: %d steps, %d combinations, %d mismatches",
             len(bundle.program), bundle.config.n_combinations, len(report_.mismatches))
    if not report_.passed:
        lines = [f"{o} combination {k}: expected {e}, got {g}" for o, k, e, g in report_.mismatches]
        for line in lines:
            log.error("mismatch %s", line)
        raise StageFailure(EXIT_MISMATCH, "functional mismatch:\n  " + "\n  ".join(lines))
    return {"functional_pass": True}


def _stage_control(bundle: ValidatedBundle, out: Path, log: logging.Logger) -> dict:
    schedule = control_logic.eval_algo(bundle)
    paths = control_logic.write_pwm_csv(schedule, out / "PWM_output")
    log.info("wrote %d PWM files over %.6g s", len(paths), schedule.duration)
    return {"duration_s": schedule.duration}


def _load_schedule(bundle: ValidatedBundle, out: Path) -> control_logic.WaveformSchedule:
    pwm = out / "PWM_output"
    if not pwm.is_dir():
        raise StageFailure(EXIT_INPUT, f"{pwm} missing; run the control stage first")
    switches = list(control_logic.eval_algo(bundle).switches)
    return control_logic.read_schedule(pwm, list(bundle.memristors), switches, bundle.params.cycle_time)


def _stage_simulate(bundle: ValidatedBundle, out: Path, opts: PipelineOptions, log: logging.Logger) -> dict:
    schedule = _load_schedule(bundle, out)
    w0 = _initial_states(bundle)
    final, traces = circuit_sim.run_transient_batch(bundle, schedule, w0, record=True, substeps=opts.substeps)
    energies = [circuit_sim.calculate_energy(t).total for t in traces]
    stride = _stride(opts.substeps)
    if opts.record_waveforms:
        for k, tr in enumerate(traces):
            circuit_sim.write_waveform_csv(tr, out / "Waveforms" / _comb_file(k), stride=stride)
    with open(out / "Waveforms" / "energy.csv" if opts.record_waveforms else out / "tmp" / "energy.csv",
              "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["combination", "energy_J"])
        for k, e in enumerate(energies):
            writer.writerow([k, repr(e)])
    for k in range(len(w0)):
        netlist.export_netlist(bundle, schedule, dict(zip(bundle.memristors, w0[k])),
                               out / "netlists" / f"comb{k}.net", title=f"{bundle.name} combination {k}")
    log.info("simulated %d combinations at %d substeps per cycle", len(w0), opts.substeps)
    log.info("energy per combination (J): %s", ", ".join(f"{e:.6e}" for e in energies))

    mismatches = []
    for name in bundle.output_names:
        idx = bundle.config.index(name)
        for k, want in enumerate(bundle.config.output_states[name]):
            got = final[k, idx]
            if deviation.is_incorrect(float(got), want):
                mismatches.append(f"{name} combination {k}: expected {want}, final w {got!r}")
    if mismatches:
        for m in mismatches:
            log.error("circuit mismatch %s", m)
        raise StageFailure(EXIT_MISMATCH, "circuit-level mismatch:\n  " + "\n  ".join(mismatches))
    return {"circuit_pass": True, "energy_J": {"per_combination": energies, "mean": float(np.mean(energies))}}


def _stage_deviate(bundle: ValidatedBundle, out: Path, opts: PipelineOptions, log: logging.Logger) -> dict:
    schedule = _load_schedule(bundle, out)
    grid = deviation.make_grid(opts.deviation_max, opts.deviation_step)
    results = deviation.evaluate_deviation(bundle, grid, schedule, substeps=opts.substeps)
    table = deviation.classify(results)
    res_dir = out / "deviation_results"
    if res_dir.is_dir():
        for old in res_dir.glob("*.csv"):
            old.unlink()
    deviation.write_deviation_results(results, res_dir)
    deviation.write_range_table(deviation.summarize_ranges(results), out / "deviation_range.txt")
    fractions = {deviation.level_label(p): table.fraction_incorrect(i) for i, p in enumerate(results.levels)}
    log.info("deviation: %d levels, %d runs", len(results.levels), results.run_count)
    for label, frac in fractions.items():
        log.info("level %s: incorrect fraction %.6f", label, frac)

    if opts.record_waveforms:
        level, k = _band_params(bundle, opts, grid)
        n_c = deviation.corner_count(level, bundle.config.n_inputs)
        w0 = np.array([deviation.deviated_initial(bundle, level, k, c) for c in range(n_c)])
        _, traces = circuit_sim.run_transient_batch(bundle, schedule, w0, record=True, substeps=opts.substeps)
        band = _band_dir(out)
        if band.is_dir():
            for old in band.glob("*.csv"):
                old.unlink()
        for c, tr in enumerate(traces):
            circuit_sim.write_waveform_csv(tr, band / f"corner{c}.csv", stride=_stride(opts.substeps))
        _dump_json(band / "band.json", {"level": level, "combination": k, "corners": n_c})
        log.info("recorded %d corner waveforms at level %s for combination %d", n_c,
                 deviation.level_label(level), k)
    clean = table.max_clean_level()
    return {"deviation": {"levels": [deviation.level_label(p) for p in results.levels],
                          "runs": results.run_count, "incorrect_fraction": fractions,
                          "max_clean_level": clean}}


def _stage_plot(bundle: ValidatedBundle, out: Path, opts: PipelineOptions, log: logging.Logger) -> dict:
    res_dir = out / "deviation_results"
    if not res_dir.is_dir() or not (out / "deviation_range.txt").is_file():
        raise StageFailure(EXIT_INPUT, "deviation results missing; run the deviate stage first")
    images = out / "Images"
    results = deviation.read_deviation_results(res_dir, bundle.config)
    table = deviation.classify(results)
    paths = report.plot_deviation_scatter(results, table, images, opts.figure_size)
    paths.append(report.plot_deviation_range(deviation.read_range_table(out / "deviation_range.txt"),
                                             images, opts.figure_size))
    band_meta = _band_dir(out) / "band.json"
    if band_meta.is_file():
        meta = json.loads(band_meta.read_text(encoding="utf-8"))
        nominal_path = out / "Waveforms" / _comb_file(meta["combination"])
        if not nominal_path.is_file():
            raise StageFailure(EXIT_INPUT, f"{nominal_path} missing; run the simulate stage first")
        nominal = report.load_series(nominal_path)
        corners = [report.load_series(_band_dir(out) / f"corner{c}.csv") for c in range(meta["corners"])]
        caption = f"(combination {meta['combination']}, deviation {deviation.level_label(meta['level'])})"
        paths += report.plot_waveforms_with_deviation(nominal, corners, bundle.output_names, images,
                                                      opts.figure_size, caption)
    log.info("wrote %d figures", len(paths))
    red = {name: int(sum(t[..., o].sum() for t in table.incorrect)) for o, name in enumerate(results.outputs)}
    return {"incorrect_markers": red}


# --- orchestration --------------------------------------------------------

def _classify_error(exc: BaseException) -> int:
    if isinstance(exc, StageFailure):
        return exc.code
    if isinstance(exc, (AlgorithmParseError, ConfigError, TopologyError, StepCountMismatch, TopologyMismatch,
                        ElectricalPreconditionViolated, UnknownOutputName, FileNotFoundError, ValueError)):
        return EXIT_INPUT
    if isinstance(exc, (NumericalBlowup, MismatchedTimeBase, FloatingPointError)):
        return EXIT_SIMULATION
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_SIMULATION


def run_pipeline(opts: PipelineOptions) -> PipelineResult:
    config_path = Path(opts.config_file)
    if not config_path.is_file():
        return PipelineResult(EXIT_INPUT, Path(opts.out_dir), {}, f"config file {config_path} not found")
    out = Path(opts.out_dir) / config_path.stem
    try:
        out.mkdir(parents=True, exist_ok=True)
        log = _open_log(out / "run.log", opts.test_mode)
    except OSError as exc:
        return PipelineResult(EXIT_IO, out, {}, f"cannot create output directory {out}: {exc}")

    summary_path = out / "summary.json"
    summary: dict = {}
    try:
        log.info("config %s", config_path)
        log.info("stages %s", ",".join(opts.stages))
        try:
            bundle = load_bundle(config_path, opts.structures_dir, opts.params_file)
        except (AtomicError, OSError, ValueError) as exc:
            log.error("input rejected: %s", exc)
            return PipelineResult(EXIT_IO if isinstance(exc, IoError) else EXIT_INPUT, out, {}, str(exc))
        _dump_json(out / "tmp" / "imply_parameters.json", bundle.params.to_dict())
        (out / "tmp" / "algorithm.txt").write_text(render_algorithm(bundle.program), encoding="utf-8",
                                                   newline="\n")
        summary = _merge_summary(summary_path, {
            "name": bundle.name, "topology": bundle.topology.name, "steps": len(bundle.program),
            "memristors": len(bundle.memristors), "outputs": list(bundle.output_names),
        })
        runners = {
            "validate": lambda: _stage_validate(bundle, out, log),
            "control": lambda: _stage_control(bundle, out, log),
            "simulate": lambda: _stage_simulate(bundle, out, opts, log),
            "deviate": lambda: _stage_deviate(bundle, out, opts, log),
            "plot": lambda: _stage_plot(bundle, out, opts, log),
        }
        for stage in opts.stages:
            log.info("START %s", stage)
            try:
                np.seterr(over="raise", invalid="raise")
                update = runners[stage]()
            except Exception as exc:  # noqa: BLE001 - every failure maps to an exit status
                code = _classify_error(exc)
                log.error("%s failed: %s", stage, exc)
                log.info("END %s status=%d", stage, code)
                summary = _merge_summary(summary_path, {f"{stage}_status": code})
                return PipelineResult(code, out, summary, f"{stage} failed: {exc}")
            finally:
                np.seterr(all="warn")
            log.info("END %s status=0", stage)
            summary = _merge_summary(summary_path, {**update, f"{stage}_status": 0})
        return PipelineResult(EXIT_OK, out, summary)
    except OSError as exc:
        return PipelineResult(EXIT_IO, out, summary, str(exc))
    finally:
        _close_log(log)


# --- batch ----------------------------------------------------------------

SOA_COLUMNS = ("algorithm", "steps", "memristors", "mean_energy_J", "max_clean_level", "status")


def evaluate_soa(out_dir: Path, configs_dir: Path | None = None, test_mode: bool = False,
                 **overrides) -> tuple[list[dict], int]:
    """Run the full pipeline for every config; one row per algorithm."""
    configs_dir = Path(configs_dir) if configs_dir else data_dir() / "configs"
    configs = sorted(configs_dir.glob("*.json")) if configs_dir.is_dir() else []
    rows = []
    for cfg in configs:
        res = run_pipeline(PipelineOptions(cfg, Path(out_dir), test_mode=test_mode, **overrides))
        s = res.summary
        rows.append({
            "algorithm": cfg.stem,
            "steps": s.get("steps", ""),
            "memristors": s.get("memristors", ""),
            "mean_energy_J": repr(s["energy_J"]["mean"]) if "energy_J" in s else "",
            "max_clean_level": ("" if s.get("deviation", {}).get("max_clean_level") is None
                                else deviation.level_label(s["deviation"]["max_clean_level"])),
            "status": "pass" if res.code == EXIT_OK else f"fail({res.code})",
        })
    return rows, len(configs)


def format_soa_table(rows: list[dict]) -> str:
    widths = {c: max([len(c)] + [len(str(r[c])) for r in rows]) for c in SOA_COLUMNS}
    lines = ["  ".join(c.ljust(widths[c]) for c in SOA_COLUMNS)]
    for r in rows:
        lines.append("  ".join(str(r[c]).ljust(widths[c]) for c in SOA_COLUMNS))
    return "\n".join(lines) + "\n"


def write_soa_table(rows: list[dict], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, SOA_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return path


# --- argument parsing -----------------------------------------------------

def _normalize_argv(argv: list[str]) -> list[str]:
    # accept "-- config_file=X" and "--config_file X" as spellings of --config-file
    out = []
    i = 0
    while i < len(argv):
        a = argv[i]
        if a == "--" and i + 1 < len(argv) and argv[i + 1].startswith("config_file="):
            out.append("--config-file=" + argv[i + 1].split("=", 1)[1])
            i += 2
            continue
        if a.startswith("config_file="):
            a = "--config-file=" + a.split("=", 1)[1]
        elif a == "--config_file" or a.startswith("--config_file="):
            a = a.replace("--config_file", "--config-file", 1)
        out.append(a)
        i += 1
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atomic", description="IMPLY-logic algorithm pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    pipe = sub.add_parser("pipeline", help="validate, simulate and stress-test one algorithm")
    pipe.add_argument("--config-file", required=True, type=Path)
    pipe.add_argument("--out-dir", type=Path, default=Path("outputs"))
    pipe.add_argument("--stages", default="v,c,s,d,p", help="comma list of v,c,s,d,p or stage names")
    pipe.add_argument("--deviation-max", type=float, default=0.5)
    pipe.add_argument("--deviation-step", type=float, default=0.05)
    pipe.add_argument("--substeps", type=int, default=circuit_sim.DEFAULT_SUBSTEPS)
    pipe.add_argument("--no-waveforms", action="store_true", help="skip waveform CSVs and band figures")
    pipe.add_argument("--band-level", type=float, default=None)
    pipe.add_argument("--band-combination", type=int, default=None)
    pipe.add_argument("--figure-size", default=None, help="panel size in pixels, e.g. 900x400")
    pipe.add_argument("--structures-dir", type=Path, default=None)
    pipe.add_argument("--params-file", type=Path, default=None)
    pipe.add_argument("--test-mode", action="store_true", help="write fixed timestamps in run.log")

    soa = sub.add_parser("evaluate-soa", help="run every bundled algorithm and tabulate the results")
    soa.add_argument("--out-dir", type=Path, default=Path("outputs"))
    soa.add_argument("--configs-dir", type=Path, default=None)
    soa.add_argument("--substeps", type=int, default=circuit_sim.DEFAULT_SUBSTEPS)
    soa.add_argument("--test-mode", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = _normalize_argv(list(sys.argv[1:] if argv is None else argv))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    test_mode = args.test_mode or os.environ.get(TEST_MODE_ENV) == "1"
    if args.substeps < 1:
        print("error: --substeps must be >= 1", file=sys.stderr)
        return EXIT_INPUT

    if args.command == "evaluate-soa":
        rows, n = evaluate_soa(args.out_dir, args.configs_dir, test_mode=test_mode, substeps=args.substeps)
        if n == 0:
            print("warning: no configs found; nothing to evaluate", file=sys.stderr)
        args.out_dir.mkdir(parents=True, exist_ok=True)
        write_soa_table(rows, args.out_dir / "soa_summary.csv")
        sys.stdout.write(format_soa_table(rows))
        return EXIT_OK if all(r["status"] == "pass" for r in rows) else EXIT_MISMATCH

    try:
        stages = parse_stages(args.stages)
        size = report.FigureSize.parse(args.figure_size) if args.figure_size else report.FigureSize()
        deviation.make_grid(args.deviation_max, args.deviation_step)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    opts = PipelineOptions(
        config_file=args.config_file, out_dir=args.out_dir, stages=stages,
        deviation_max=args.deviation_max, deviation_step=args.deviation_step, substeps=args.substeps,
        record_waveforms=not args.no_waveforms, band_level=args.band_level,
        band_combination=args.band_combination, figure_size=size,
        structures_dir=args.structures_dir, params_file=args.params_file, test_mode=test_mode,
    )
    result = run_pipeline(opts)
    if result.code:
        print(f"error: {result.message}", file=sys.stderr)
    else:
        print(f"outputs written to {result.out_dir}")
    return result.code


if __name__ == "__main__":
    sys.exit(main())
