"""JSONL metrics stream."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields

METRIC_KEYS = ("step", "success_rate", "mean_return", "kl_mean", "kl_max", "alpha_high", "alpha_low",
               "critic_loss_high", "critic_loss_low", "actor_loss_high", "actor_loss_low", "wall_time_s")


@dataclass
class MetricsRecord:
    step: int
    success_rate: float
    mean_return: float
    kl_mean: float | None = None
    kl_max: float | None = None
    alpha_high: float | None = None
    alpha_low: float | None = None
    critic_loss_high: float | None = None
    critic_loss_low: float | None = None
    actor_loss_high: float | None = None
    actor_loss_low: float | None = None
    wall_time_s: float = 0.0

    def to_dict(self) -> dict:
        # JSON has no NaN; missing values are null
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsRecord":
        validate_record(data)
        return cls(**data)


def validate_record(data: dict):
    if tuple(sorted(data)) != tuple(sorted(METRIC_KEYS)):
        raise ValueError(f"metrics keys must be exactly {METRIC_KEYS}")
    if not isinstance(data["step"], int) or data["step"] < 0:
        raise ValueError("step must be a non-negative integer")
    sr = data["success_rate"]
    if not isinstance(sr, (int, float)) or not 0.0 <= sr <= 1.0:
        raise ValueError("success_rate must lie in [0, 1]")
    for k in METRIC_KEYS[2:]:
        v = data[k]
        if v is not None and not isinstance(v, (int, float)):
            raise ValueError(f"{k} must be a number or null")


class MetricsSink:
    """Line-oriented JSON sink that refuses out-of-order steps."""

    def __init__(self, fh, last_step: int | None = None):
        self.fh = fh
        self.last_step = last_step

    def write(self, record: MetricsRecord):
        if self.last_step is not None and record.step <= self.last_step:
            raise ValueError(f"metrics step {record.step} does not follow {self.last_step}")
        self.fh.write(json.dumps(record.to_dict()) + "\n")
        self.fh.flush()
        self.last_step = record.step


def emit_metrics(record: MetricsRecord, sink: MetricsSink):
    sink.write(record)


def read_metrics(path) -> list:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                out.append(MetricsRecord.from_dict(json.loads(line)))
    return out


assert tuple(f.name for f in fields(MetricsRecord)) == METRIC_KEYS
