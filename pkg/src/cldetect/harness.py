"""Experiment driver and metrics.

Runs continual sequences with the reference hyperparameters, computes the
evaluation matrix, average-accuracy curve and per-task forgetting, and
emits byte-stable CSV/JSON/SVG artifacts so identical (manifest, config,
seed) runs diff clean.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint
from .config import EvalMatrix, RunConfig
from .continual import Strategy, Transfer, strategy_metadata, task_accuracy, train_sequence, train_task
from .exceptions import ConfigError
from .nn import ModelSpec, default_model_spec, init_params
from .taskgen import TaskDataset

__all__ = [
    "RunConfig",
    "EvalMatrix",
    "ForgettingReport",
    "ExperimentResult",
    "evaluate",
    "zero_shot_eval",
    "average_accuracy_curve",
    "row_average",
    "forgetting_report",
    "run_experiment",
    "emit_report",
    "render_curves_svg",
    "load_matrix_csv",
]


def evaluate(spec: ModelSpec, params: np.ndarray, task: TaskDataset) -> float:
    """Test-split accuracy in [0, 1]; deterministic, ties predict real."""
    return task_accuracy(spec, params, task, split="test")


def zero_shot_eval(spec: ModelSpec, run: RunConfig, first_task: TaskDataset,
                   all_tasks: list[TaskDataset]) -> EvalMatrix:
    """Train plain cross-entropy on one task, evaluate on every task."""
    names = [t.name for t in all_tasks]
    if first_task.name not in names:
        raise ConfigError(f"training task {first_task.name!r} must be among the eval tasks")
    params, _trace = train_task(spec, init_params(spec, run.seed), first_task,
                                Transfer(), run, stage=0)
    matrix = EvalMatrix(names)
    matrix.append_row([evaluate(spec, params, t) for t in all_tasks])
    return matrix


def average_accuracy_curve(matrix: EvalMatrix) -> list[float]:
    """curve[t] = mean accuracy over eval tasks 0..t after stage t."""
    curve = []
    for t, row in enumerate(matrix.rows):
        if len(row) < t + 1:
            raise ConfigError(f"stage {t} row has {len(row)} entries, needs at least {t + 1}")
        curve.append(float(np.mean(row[: t + 1])))
    return curve


def row_average(values) -> float:
    """Arithmetic mean of percentage values, to 2 decimals (ties away from zero)."""
    values = list(values)
    if not values:
        raise ConfigError("row_average needs at least one value")
    total = sum(Decimal(repr(float(v))) for v in values)
    mean = total / Decimal(len(values))
    return float(mean.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass
class ForgettingReport:
    """f_j = best earlier accuracy on task j minus final accuracy on task j."""

    per_task: dict[str, float]
    mean: float


def forgetting_report(matrix: EvalMatrix) -> ForgettingReport:
    if not matrix.rows:
        raise ConfigError("empty evaluation matrix")
    rows = np.asarray(matrix.rows)
    last = rows[-1]
    if rows.shape[0] == 1:
        per_task = {name: 0.0 for name in matrix.task_names}
        return ForgettingReport(per_task, 0.0)
    best_earlier = rows[:-1].max(axis=0)
    f = best_earlier - last
    per_task = {name: float(v) for name, v in zip(matrix.task_names, f)}
    return ForgettingReport(per_task, float(np.mean(f)))


@dataclass
class ExperimentResult:
    label: str
    strategy_name: str
    strategy_meta: dict
    stage_names: list[str]
    matrix: EvalMatrix
    curve: list[float]
    forgetting: ForgettingReport
    checkpoints: dict[str, Checkpoint]
    run: RunConfig
    final_average: float
    extra: dict = field(default_factory=dict)


def run_experiment(tasks: list[TaskDataset], strategy: Strategy, run: RunConfig,
                   eval_tasks: list[TaskDataset] | None = None,
                   out_dir=None, label: str = "experiment",
                   spec: ModelSpec | None = None,
                   hidden_widths: tuple[int, ...] = (64, 32),
                   extra: dict | None = None) -> ExperimentResult:
    """Drive a full continual run and compute every metric.

    If out_dir is given, artifacts are written there; rows completed before
    a failure are flushed to eval_matrix.partial.csv so partial progress
    survives an abort.
    """
    if not tasks:
        raise ConfigError("experiment needs at least one task")
    spec = spec if spec is not None else default_model_spec(run.input_side, hidden_widths)
    eval_tasks = list(eval_tasks) if eval_tasks is not None else list(tasks)
    stage_names: list[str] = []
    partial_rows: list[list[float]] = []

    def on_stage(_idx, task, row, _ckpt):
        stage_names.append(task.name)
        partial_rows.append(list(row))

    try:
        _params, matrix, checkpoints = train_sequence(
            spec, tasks, strategy, run, eval_tasks=eval_tasks, on_stage=on_stage)
    except Exception:
        if out_dir is not None and partial_rows:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            partial = EvalMatrix([t.name for t in eval_tasks])
            for row in partial_rows:
                partial.append_row(row)
            _write_bytes(out / "eval_matrix.partial.csv",
                         _matrix_csv(partial, stage_names))
        raise

    meta = strategy_metadata(strategy)
    result = ExperimentResult(
        label=label,
        strategy_name=meta["kind"],
        strategy_meta=meta,
        stage_names=stage_names,
        matrix=matrix,
        curve=average_accuracy_curve(matrix),
        forgetting=forgetting_report(matrix),
        checkpoints=checkpoints,
        run=run,
        final_average=matrix.final_average(),
        extra=dict(extra or {}),
    )
    if out_dir is not None:
        emit_report(result, out_dir)
    return result


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------

def _write_bytes(path: Path, text: str) -> None:
    try:
        path.write_bytes(text.encode("utf-8"))
    except OSError as exc:
        raise OSError(f"cannot write report artifact {path}: {exc}") from exc


def _matrix_csv(matrix: EvalMatrix, stage_names: list[str]) -> str:
    lines = ["stage," + ",".join(matrix.task_names)]
    for i, row in enumerate(matrix.rows):
        stage = stage_names[i] if i < len(stage_names) else str(i + 1)
        lines.append(f"{i + 1}:{stage}," + ",".join(repr(v) for v in row))
    return "\n".join(lines) + "\n"


def _curves_csv(curve: list[float]) -> str:
    lines = ["stage,average_accuracy"]
    for i, v in enumerate(curve):
        lines.append(f"{i + 1},{v!r}")
    return "\n".join(lines) + "\n"


def load_matrix_csv(path) -> tuple[EvalMatrix, list[str]]:
    """Parse an eval_matrix.csv back into (EvalMatrix, stage names)."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not lines or not lines[0].startswith("stage,"):
        raise ConfigError(f"{path} is not an eval matrix CSV")
    task_names = lines[0].split(",")[1:]
    matrix = EvalMatrix(task_names)
    stage_names = []
    for line in lines[1:]:
        if not line:
            continue
        cells = line.split(",")
        stage_names.append(cells[0].split(":", 1)[-1])
        matrix.append_row([float(c) for c in cells[1:]])
    return matrix, stage_names


def emit_report(result: ExperimentResult, out_dir) -> list[Path]:
    """Write eval_matrix.csv, curves.csv, summary.json and curves.svg."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    matrix_path = out / "eval_matrix.csv"
    _write_bytes(matrix_path, _matrix_csv(result.matrix, result.stage_names))
    paths.append(matrix_path)

    curves_path = out / "curves.csv"
    _write_bytes(curves_path, _curves_csv(result.curve))
    paths.append(curves_path)

    summary = {
        "label": result.label,
        "strategy": result.strategy_meta,
        "task_names": result.matrix.task_names,
        "stage_names": result.stage_names,
        "final_average": result.final_average,
        "average_curve": result.curve,
        "final_row": dict(zip(result.matrix.task_names, result.matrix.rows[-1])),
        "forgetting": {"per_task": result.forgetting.per_task, "mean": result.forgetting.mean},
        "run_config": result.run.to_dict(),
        **result.extra,
    }
    summary_path = out / "summary.json"
    _write_bytes(summary_path, json.dumps(summary, indent=2, sort_keys=True) + "\n")
    paths.append(summary_path)

    svg_path = out / "curves.svg"
    render_curves_svg({result.strategy_name: result.curve}, svg_path)
    paths.append(svg_path)
    return paths


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def render_curves_svg(series: dict[str, list[float]], path,
                      title: str = "average accuracy per stage") -> None:
    """Dependency-free SVG line chart, one polyline per series, y in [0, 1]."""
    if not series or any(len(c) == 0 for c in series.values()):
        raise ConfigError("render_curves_svg needs non-empty series")
    width, height = 760, 440
    ml, mr, mt, mb = 60, 170, 42, 48
    plot_w, plot_h = width - ml - mr, height - mt - mb
    n = max(len(c) for c in series.values())

    def x(i: int) -> float:
        return ml + (plot_w * i / (n - 1) if n > 1 else plot_w / 2)

    def y(v: float) -> float:
        return mt + (1.0 - min(max(v, 0.0), 1.0)) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{ml}" y="{mt - 16}" font-size="14">{title}</text>',
    ]
    for k in range(5):
        v = k / 4
        parts.append(
            f'<line x1="{ml}" y1="{y(v):.2f}" x2="{ml + plot_w}" y2="{y(v):.2f}" '
            f'stroke="#dddddd" stroke-width="1"/>')
        parts.append(f'<text x="{ml - 34}" y="{y(v) + 4:.2f}">{v:.2f}</text>')
    for i in range(n):
        parts.append(
            f'<text x="{x(i) - 4:.2f}" y="{mt + plot_h + 18}">{i + 1}</text>')
    parts.append(
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + plot_h}" stroke="black"/>')
    parts.append(
        f'<line x1="{ml}" y1="{mt + plot_h}" x2="{ml + plot_w}" y2="{mt + plot_h}" stroke="black"/>')
    parts.append(
        f'<text x="{ml + plot_w / 2 - 20:.2f}" y="{height - 12}">stage</text>')
    for k, name in enumerate(sorted(series)):
        curve = series[name]
        color = _PALETTE[k % len(_PALETTE)]
        pts = " ".join(f"{x(i):.2f},{y(v):.2f}" for i, v in enumerate(curve))
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = mt + 16 * k
        parts.append(
            f'<line x1="{ml + plot_w + 12}" y1="{ly}" x2="{ml + plot_w + 34}" y2="{ly}" '
            f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{ml + plot_w + 40}" y="{ly + 4}">{name}</text>')
    parts.append("</svg>")
    _write_bytes(Path(path), "\n".join(parts) + "\n")
