"""CSV/JSON output for trial records and sweep summaries, and config loading.

Config files are YAML or JSON mappings whose keys are exactly the
:class:`TrialConfig` field names; ``wf`` and ``nomp`` are nested mappings
of :class:`WfOptions` / :class:`NompOptions` fields.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from pathlib import Path
from typing import Sequence

import yaml

from ..errors import ConfigError
from .sweeps import LadderResult, ScalingResult, SweepResult
from .trial import TrialConfig, TrialRecord

RECORD_COLUMNS = [
    "trial_index", "seed", "n", "k", "m", "m_cs", "loss_strongest_db", "success_1db",
    "stage1_converged", "freq_err_max", "wall_ms",
]
SUMMARY_COLUMNS = [
    "axis_value", "trials", "success_rate", "wilson_lo", "wilson_hi", "mean_loss_db",
    "median_loss_db", "mean_loss_all_paths_db",
]
LADDER_COLUMNS = ["m", "m_cs", "trials", "successes", "wilson_lo", "passed"]
SCALING_COLUMNS = ["n", "k", "m_star", "m_cs_star", "m_star_coherent", "ratio"]

# Columns that legitimately differ between otherwise identical runs.
TIMING_COLUMNS = ("wall_ms",)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def record_row(record: TrialRecord) -> dict:
    return {
        "trial_index": record.trial_index,
        "seed": record.seed,
        "n": record.n,
        "k": record.k,
        "m": record.m,
        "m_cs": record.m_cs,
        "loss_strongest_db": record.loss_strongest_db,
        "success_1db": record.success_1db,
        "stage1_converged": record.stage1_converged,
        "freq_err_max": record.freq_err_max,
        "wall_ms": record.wall_time * 1e3,
    }


def _write_csv(rows: Sequence[dict], columns: Sequence[str], drop: Sequence[str] = ()) -> str:
    cols = [c for c in columns if c not in drop]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in cols])
    return buf.getvalue()


def records_csv(records: Sequence[TrialRecord], *, include_timing: bool = True) -> str:
    """One CSV row per trial; ``include_timing=False`` drops ``wall_ms`` for byte comparisons."""
    drop = () if include_timing else TIMING_COLUMNS
    return _write_csv([record_row(r) for r in records], RECORD_COLUMNS, drop)


def summary_csv(sweep: SweepResult) -> str:
    return _write_csv([dataclasses.asdict(p) for p in sweep.points], SUMMARY_COLUMNS)


def ladder_csv(ladder: LadderResult) -> str:
    return _write_csv([dataclasses.asdict(s) for s in ladder.steps], LADDER_COLUMNS)


def scaling_csv(result: ScalingResult) -> str:
    rows = [dict(dataclasses.asdict(r), ratio=r.ratio) for r in result.rows]
    return _write_csv(rows, SCALING_COLUMNS)


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return _fmt(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def to_json(obj) -> str:
    """JSON for records/results dataclasses; non-finite floats become strings."""
    if dataclasses.is_dataclass(obj):
        obj = dataclasses.asdict(obj)
    elif isinstance(obj, (list, tuple)):
        obj = [dataclasses.asdict(o) if dataclasses.is_dataclass(o) else o for o in obj]
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True)


def companion_path(path: Path, suffix: str) -> Path:
    """``runs/out.csv`` -> ``runs/out_<suffix>.csv``."""
    return path.with_name(f"{path.stem}_{suffix}{path.suffix}")


def load_config(path: str | Path) -> TrialConfig:
    """Read a TrialConfig from YAML or JSON."""
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data)


def config_from_dict(data) -> TrialConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    known = {f.name for f in dataclasses.fields(TrialConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return TrialConfig(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def dump_config(cfg: TrialConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
