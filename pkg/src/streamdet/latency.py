"""Analytic latency and peak-compute model for slice-pipelined inference.

With ``n`` slices per rotation a slice is complete ``scan_period / n`` after its
first measurement, and its inference costs ``full_inference / n``.  A fixed
per-slice overhead stands in for everything that does not shrink with the
slice (stateful NMS, recurrent state, launch cost).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass

from .errors import InvalidInputError


@dataclass(frozen=True)
class LatencyModel:
    scan_period_ms: float = 100.0
    full_inference_ms: float = 16.0
    per_slice_overhead_ms: float = 2.5
    rnn_flops_fraction: float = 0.02

    def __post_init__(self):
        if not self.scan_period_ms > 0:
            raise InvalidInputError("scan_period_ms must be positive")
        for name in ("full_inference_ms", "per_slice_overhead_ms", "rnn_flops_fraction"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"{name} must be non-negative")


def _check_n(n) -> None:
    if int(n) != n or n < 1:
        raise InvalidInputError(f"slice count must be a positive integer, got {n!r}")


def _overhead(model: LatencyModel, n: int) -> float:
    return model.per_slice_overhead_ms if n > 1 else 0.0


def worst_case_latency(model: LatencyModel, n: int) -> float:
    """First measurement at the start of a slice: wait the whole slice, then infer."""
    _check_n(n)
    return model.scan_period_ms / n + model.full_inference_ms / n + _overhead(model, n)


def expected_latency(model: LatencyModel, n: int) -> float:
    """Measurement time uniform within its slice: wait half a slice on average."""
    _check_n(n)
    return (model.scan_period_ms / n) / 2 + model.full_inference_ms / n + _overhead(model, n)


def peak_flops_fraction(n: int, with_state: bool = False, model: LatencyModel = LatencyModel()) -> float:
    _check_n(n)
    return 1.0 / n + (model.rnn_flops_fraction if with_state else 0.0)


@dataclass(frozen=True)
class LatencyRow:
    n: int
    worst_case_ms: float
    expected_ms: float
    flops_fraction: float
    speedup: float


@dataclass
class LatencyReport:
    rows: list[LatencyRow]

    def row(self, n: int) -> LatencyRow:
        for r in self.rows:
            if r.n == n:
                return r
        raise KeyError(n)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "worst_case_ms", "expected_ms", "flops_fraction", "speedup"])
        for r in self.rows:
            w.writerow([r.n, repr(r.worst_case_ms), repr(r.expected_ms), repr(r.flops_fraction), repr(r.speedup)])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps([asdict(r) for r in self.rows], indent=1)


def latency_report(model: LatencyModel, ns, with_state: bool = False) -> LatencyReport:
    """Rows for each slice count; speedup is relative to the n=1 worst case."""
    ns = list(ns)
    if not ns:
        raise InvalidInputError("need at least one slice count")
    base = worst_case_latency(model, 1)
    rows = []
    for n in ns:
        wc = worst_case_latency(model, n)
        rows.append(LatencyRow(int(n), wc, expected_latency(model, n),
                               peak_flops_fraction(n, with_state and n > 1, model), base / wc))
    return LatencyReport(rows)
