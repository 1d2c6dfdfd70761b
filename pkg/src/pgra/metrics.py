"""Per-episode metrics, their CSV form, and cross-seed aggregation."""

import csv
import json
import math
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
COLUMNS = ("episode", "return", "steps", "supervised_loss", "alpha_critic",
           "alpha_representation", "alpha_actor", "fallbacks", "wall_ms")
TIMING_COLUMNS = ("wall_ms",)
META_FILE = "meta.json"
METRICS_FILE = "metrics.csv"


class SchemaError(ValueError):
    pass


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


class MetricsLog:
    def __init__(self, metadata=None):
        self.metadata = dict(metadata or {})
        self.rows = []

    def append(self, episode, ret, steps, supervised_loss, rates, fallbacks=0, wall_ms=0.0):
        if self.rows and episode <= self.rows[-1]["episode"]:
            raise ValueError("metrics rows must be strictly ordered by episode")
        a_w, a_phi, a_th = rates
        self.rows.append({
            "episode": int(episode), "return": float(ret), "steps": int(steps),
            "supervised_loss": float(supervised_loss), "alpha_critic": float(a_w),
            "alpha_representation": float(a_phi), "alpha_actor": float(a_th),
            "fallbacks": int(fallbacks), "wall_ms": float(wall_ms),
        })

    def __len__(self):
        return len(self.rows)

    def returns(self):
        return np.array([r["return"] for r in self.rows])

    def payload(self):
        """Rows without timing columns: the part covered by the determinism contract."""
        return [tuple(_fmt(r[c]) for c in COLUMNS if c not in TIMING_COLUMNS) for r in self.rows]

    def write(self, run_dir):
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        with open(run_dir / METRICS_FILE, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(COLUMNS)
            for r in self.rows:
                w.writerow([_fmt(r[c]) for c in COLUMNS])
        meta = dict(self.metadata, schema_version=SCHEMA_VERSION, columns=list(COLUMNS))
        (run_dir / META_FILE).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, run_dir):
        run_dir = Path(run_dir)
        meta_path = run_dir / META_FILE
        if not meta_path.exists():
            raise SchemaError(f"{run_dir}: missing {META_FILE}")
        meta = json.loads(meta_path.read_text())
        if meta.get("schema_version") != SCHEMA_VERSION:
            raise SchemaError(f"{run_dir}: metrics schema version {meta.get('schema_version')!r}, "
                              f"expected {SCHEMA_VERSION}")
        log = cls(metadata=meta)
        with open(run_dir / METRICS_FILE, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != COLUMNS:
                raise SchemaError(f"{run_dir}: unexpected CSV header {header}")
            for row in reader:
                rec = dict(zip(COLUMNS, row))
                log.append(int(rec["episode"]), float(rec["return"]), int(rec["steps"]),
                           float(rec["supervised_loss"]),
                           (float(rec["alpha_critic"]), float(rec["alpha_representation"]),
                            float(rec["alpha_actor"])),
                           int(rec["fallbacks"]), float(rec["wall_ms"]))
        return log


def smooth(x, window):
    """Trailing moving average; the first entries average over what is available."""
    x = np.asarray(x, dtype=np.float64)
    if window <= 1 or x.size == 0:
        return x.copy()
    c = np.cumsum(np.concatenate([[0.0], x]))
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def aggregate_runs(run_dirs, out, window=1):
    """Write per-episode mean and std of (smoothed) returns across runs to ``out``."""
    if not run_dirs:
        raise ValueError("need at least one run directory")
    logs = [MetricsLog.read(d) for d in run_dirs]
    lengths = {str(d): len(log) for d, log in zip(run_dirs, logs)}
    if len(set(lengths.values())) != 1:
        expected = len(logs[0])
        bad = [f"{d} ({n} episodes)" for d, n in lengths.items() if n != expected]
        raise ValueError(f"mismatched episode counts (expected {expected}): " + ", ".join(bad))
    curves = np.stack([smooth(log.returns(), window) for log in logs])
    mean = curves.mean(axis=0)
    std = curves.std(axis=0)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("episode", "mean_return", "std_return", "n_runs"))
        for i in range(mean.shape[0]):
            w.writerow((i, repr(float(mean[i])), repr(float(std[i])), len(logs)))
    return mean, std
