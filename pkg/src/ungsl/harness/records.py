"""Run records: stable config fingerprints, an append-only JSONL store, CSV series."""
from __future__ import annotations

import csv
import hashlib
import json
import os
import threading
from dataclasses import asdict, dataclass, field

import numpy as np


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def fingerprint(config):
    """Stable 16-hex-digit hash of a JSON-serializable config (seed excluded by callers)."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()[:16]


@dataclass
class ExperimentRecord:
    """One (config, seed) execution: metrics per stage, timings and artifact paths."""

    kind: str
    config: dict
    seed: int
    metrics: dict
    timings: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    fingerprint: str = ""

    def __post_init__(self):
        fp = fingerprint({"kind": self.kind, "config": self.config})
        if self.fingerprint and self.fingerprint != fp:
            raise ValueError("record fingerprint does not match its config")
        self.fingerprint = fp

    def to_json(self):
        return canonical_json(asdict(self))

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d["config"], int(d["seed"]), d["metrics"], d.get("timings", {}),
                   d.get("artifacts", {}), d.get("fingerprint", ""))

    def accuracy(self, stage="enhanced"):
        return self.metrics[stage]["test_acc"]


class RunLog:
    """Append-only ``runs.jsonl``; each record is one line written in a single call."""

    _lock = threading.Lock()

    def __init__(self, path):
        self.path = str(path)

    def append(self, record):
        line = record.to_json() + "\n"
        with self._lock:
            fd = os.open(self.path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
            try:
                os.write(fd, line.encode("utf-8"))
            finally:
                os.close(fd)

    def read(self):
        if not os.path.exists(self.path):
            return []
        with open(self.path, encoding="utf-8") as fh:
            return [ExperimentRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def write_series_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def mean_std(values):
    """Mean and sample standard deviation; one value gives std 0."""
    v = np.asarray(values, dtype=np.float64)
    if len(v) == 0:
        raise ValueError("no values")
    return float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0


@dataclass
class GroupSummary:
    fingerprint: str
    kind: str
    n: int
    base: tuple | None
    enhanced: tuple | None

    @property
    def delta(self):
        if self.base is None or self.enhanced is None:
            return None
        return self.enhanced[0] - self.base[0]

    @property
    def relative(self):
        d = self.delta
        return None if d is None or self.base[0] == 0 else 100.0 * d / self.base[0]


def summarize(records):
    """Group by fingerprint (in first-seen order) with mean/std test accuracy per stage."""
    if not records:
        raise ValueError("empty record set")
    groups = {}
    for r in records:
        groups.setdefault(r.fingerprint, []).append(r)
    out = []
    for fp, rs in groups.items():
        stats = {}
        for stage in ("base", "enhanced"):
            vals = [r.metrics[stage]["test_acc"] for r in rs if stage in r.metrics]
            stats[stage] = mean_std(vals) if vals else None
        out.append(GroupSummary(fp, rs[0].kind, len(rs), stats["base"], stats["enhanced"]))
    return out


def format_summary(summaries):
    def cell(ms):
        return "-" if ms is None else f"{100 * ms[0]:.2f}±{100 * ms[1]:.2f}"

    lines = [f"{'fingerprint':16s}  {'kind':12s} {'n':>3s}  {'base':>13s}  {'ungsl':>13s}  {'delta':>7s}  {'rel%':>7s}"]
    for s in summaries:
        d = "-" if s.delta is None else f"{100 * s.delta:+.2f}"
        r = "-" if s.relative is None else f"{s.relative:+.2f}"
        lines.append(f"{s.fingerprint:16s}  {s.kind:12s} {s.n:3d}  {cell(s.base):>13s}  "
                     f"{cell(s.enhanced):>13s}  {d:>7s}  {r:>7s}")
    return "\n".join(lines)


def write_summary_csv(path, summaries):
    rows = []
    for s in summaries:
        b = s.base or (float("nan"), float("nan"))
        e = s.enhanced or (float("nan"), float("nan"))
        rows.append([s.fingerprint, s.kind, s.n, b[0], b[1], e[0], e[1],
                     float("nan") if s.delta is None else s.delta,
                     float("nan") if s.relative is None else s.relative])
    write_series_csv(path, ["fingerprint", "kind", "n", "base_mean", "base_std", "ungsl_mean",
                            "ungsl_std", "delta", "relative_pct"], rows)
