"""
Summary statistics recomputed from per-run CSV files
"""

from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import DataError, DatasetHashMismatchError, MissingColumnError
from ..utils import Logger, check_writable, ensure_directory


SUMMARY_COLUMNS = [
    "method", "scenario", "runs", "mean_fitness", "std_dev", "mean_time_s",
    "mean_ratio", "median_ratio", "pct_hit_opt", "cv", "unique_solutions",
]
CELL_KEYS = ["method", "scenario", "min_size", "param_idx"]
CELL_COLUMNS = CELL_KEYS + SUMMARY_COLUMNS[2:] + ["failed"]
REQUIRED_RUN_COLUMNS = [
    "method", "scenario", "min_size", "param_idx", "repeat", "seed",
    "best_fitness", "subgroup_size", "ratio_to_opt", "hit_opt", "wall_s", "rule_bits", "rule_text",
]
NUMERIC_COLUMNS = ["min_size", "param_idx", "repeat", "best_fitness", "subgroup_size",
                   "ratio_to_opt", "hit_opt", "wall_s"]


def _prepare(frame: pd.DataFrame) -> pd.DataFrame:
    frame = frame.copy()
    for column in NUMERIC_COLUMNS:
        frame[column] = pd.to_numeric(frame[column], errors="coerce")
    if "status" not in frame.columns:
        frame["status"] = "ok"
    if "subgroup_hash" not in frame.columns:
        frame["subgroup_hash"] = frame["rule_bits"]
    frame["status"] = frame["status"].fillna("ok").astype(str)
    return frame


def _group_stats(group: pd.DataFrame) -> Dict:
    """Fitness moments over feasible runs; ratios and hits over every completed run"""
    feasible = group[group["subgroup_size"] >= group["min_size"]]
    fitness = feasible["best_fitness"].astype(float)
    mean = float(fitness.mean()) if len(fitness) else np.nan
    if len(fitness) > 1:
        std = float(fitness.std(ddof=1))
    else:
        std = 0.0 if len(fitness) else np.nan
    ratios = group["ratio_to_opt"].dropna()
    hits = group["hit_opt"].dropna()
    return {
        "runs": int(len(group)),
        "mean_fitness": mean,
        "std_dev": std,
        "mean_time_s": float(group["wall_s"].mean()) if len(group) else np.nan,
        "mean_ratio": float(ratios.mean()) if len(ratios) else np.nan,
        "median_ratio": float(ratios.median()) if len(ratios) else np.nan,
        "pct_hit_opt": 100.0 * float(hits.mean()) if len(hits) else np.nan,
        "cv": std / mean if len(fitness) and mean != 0 else np.nan,
        "unique_solutions": int(feasible["subgroup_hash"].nunique()),
    }


def summarize(frame: pd.DataFrame, keys: Sequence[str]) -> pd.DataFrame:
    """One row per group of completed runs, groups in order of first appearance"""
    frame = _prepare(frame)
    done = frame[frame["status"] == "ok"]
    rows = []
    for values, group in done.groupby(list(keys), sort=False):
        values = values if isinstance(values, tuple) else (values,)
        row = dict(zip(keys, values))
        row.update(_group_stats(group))
        rows.append(row)
    return pd.DataFrame(rows, columns=list(keys) + SUMMARY_COLUMNS[2:])


def summary_tables(frame: pd.DataFrame) -> Tuple[pd.DataFrame, pd.DataFrame, int]:
    """(method x scenario summary, per-cell summary, number of excluded failed runs)"""
    prepared = _prepare(frame)
    failed = prepared[prepared["status"] != "ok"]
    excluded = int(len(failed))
    if excluded:
        Logger.warning(f"{excluded} failed run(s) excluded from aggregation")

    summary = summarize(prepared, ["method", "scenario"])
    cells = summarize(prepared, CELL_KEYS)
    failed_counts = failed.groupby(CELL_KEYS).size() if excluded else pd.Series(dtype=int)
    cells["failed"] = [
        int(failed_counts.get(tuple(row), 0)) for row in cells[CELL_KEYS].itertuples(index=False, name=None)
    ]
    return summary[SUMMARY_COLUMNS], cells[CELL_COLUMNS], excluded


def check_dataset_hashes(frame: pd.DataFrame) -> None:
    """One dataset per (scenario, instance); anything else mixes incomparable runs"""
    if "dataset_hash" not in frame.columns:
        return
    keys = ["scenario", "instance"] if "instance" in frame.columns else ["scenario"]
    hashes = frame.dropna(subset=["dataset_hash"]).groupby(keys)["dataset_hash"].nunique()
    mixed = hashes[hashes > 1]
    if len(mixed):
        raise DatasetHashMismatchError(
            "Run files mix datasets with different hashes",
            detail=", ".join(str(k) for k in mixed.index.tolist()),
        )


def load_runs(paths: Iterable[Union[str, Path]]) -> pd.DataFrame:
    frames = []
    for path in paths:
        path = Path(path)
        if not path.exists():
            raise DataError(f"Run file not found: {path}")
        frame = pd.read_csv(path, dtype={"dataset_hash": str, "subgroup_hash": str, "rule_bits": str,
                                         "status": str, "rule_text": str}, keep_default_na=True)
        missing = [c for c in REQUIRED_RUN_COLUMNS if c not in frame.columns]
        if missing:
            raise MissingColumnError(f"Missing column(s) in {path.name}: {', '.join(missing)}")
        frames.append(frame)
    if not frames:
        raise DataError("No run files given")
    frame = pd.concat(frames, ignore_index=True)
    if frame.empty:
        raise DataError("Run files contain no runs")
    check_dataset_hashes(frame)
    return frame


def convergence_frame(trace_dir: Union[str, Path]) -> pd.DataFrame:
    """Tidy best-so-far curves from JSONL traces: cell, method, seed, step, best_fitness"""
    columns = ["cell", "method", "seed", "step", "best_fitness"]
    parts: List[pd.DataFrame] = []
    for path in sorted(Path(trace_dir).glob("*.jsonl")):
        lines = pd.read_json(path, lines=True, convert_dates=False)
        if lines.empty or "kind" not in lines.columns:
            continue
        trace = lines[lines["kind"] == "trace"].copy()
        if trace.empty:
            continue
        step = None
        for name in ("generation", "iteration", "step"):
            if name in trace.columns and trace[name].notna().any():
                step = trace[name]
                break
        trace["step"] = step if step is not None else range(len(trace))
        trace["cell"] = path.stem
        parts.append(trace[columns])
    if not parts:
        return pd.DataFrame(columns=columns)
    return pd.concat(parts, ignore_index=True)


def write_summaries(summary: pd.DataFrame, cells: pd.DataFrame, out_dir: Union[str, Path],
                    trace_dir: Optional[Union[str, Path]] = None, force: bool = True) -> Path:
    out_dir = Path(out_dir)
    ensure_directory(str(out_dir))
    summary_path = out_dir / "summary.csv"
    cells_path = out_dir / "summary_cells.csv"
    for path in (summary_path, cells_path):
        check_writable(path, force)
    summary.to_csv(summary_path, index=False, na_rep="", lineterminator="\n")
    cells.to_csv(cells_path, index=False, na_rep="", lineterminator="\n")
    if trace_dir is not None and Path(trace_dir).is_dir():
        convergence_frame(trace_dir).to_csv(out_dir / "convergence.csv", index=False, na_rep="",
                                            lineterminator="\n")
    return summary_path


def compute_stats(paths: Iterable[Union[str, Path]], out_dir: Union[str, Path], force: bool = False,
                  trace_dir: Optional[Union[str, Path]] = None) -> Tuple[pd.DataFrame, int]:
    """Load run files, aggregate them and write the summary CSVs"""
    frame = load_runs(paths)
    summary, cells, excluded = summary_tables(frame)
    write_summaries(summary, cells, out_dir, trace_dir=trace_dir, force=force)
    return summary, excluded
