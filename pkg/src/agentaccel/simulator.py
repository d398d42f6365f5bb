"""Analytical latency model and pipeline replayer.

Stage model, per query:
  prefill   compute-bound:  2 * params * uncached_tokens / (TOPS * utilization)
  decode    bandwidth-bound: params_bytes / mem_bw per token; a k-token
            verification pass costs that times tax_curve(k)
  ssd_load  reused-prefix bytes / ssd bandwidth
  others    constant-time tool retrieval and tool execution

Replaying a trace produces one latency breakdown per optimization cell
(baseline, prompt reconstruction, speculative decode, both) from the same
per-query token accounting and decode statistics, so speedups are pure
functions of (trace, config).

The shipped pipeline configuration charges verification passes at the ideal
(width-independent) cost.  The measured two-token tax is exposed separately
via `lm.MEASURED_TAX` for the draft-model trade-off analysis, where it is
the whole point; see the calibration notes in the README for why the two
defaults differ.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .clusterplan import select_combinations
from .kvstore import ModelGeometry, kv_size
from .lm import IDEAL_TAX, TaxCurve

STAGES = (
    "toolrag",
    "planner_prefill",
    "planner_decode",
    "tool_exec",
    "arbiter_prefill",
    "arbiter_decode",
    "ssd_load",
)

CELLS = ("baseline", "pw", "es", "pw_es")

DEFAULT_TOOL_SECONDS = 0.4
DEFAULT_TOOLRAG_SECONDS = 0.66


class TraceError(ValueError):
    """Trace or configuration record failed schema validation."""


@dataclass(frozen=True)
class DeviceSpec:
    name: str
    compute_tops: float  # INT8 tera-ops per second
    mem_bw: float        # bytes per second
    ssd_bw: float        # bytes per second
    prefill_utilization: float = 0.35

    def __post_init__(self):
        if min(self.compute_tops, self.mem_bw, self.ssd_bw) <= 0:
            raise ValueError("device rates must be positive")
        if not (0 < self.prefill_utilization <= 1):
            raise ValueError("prefill_utilization must be in (0, 1]")

    @classmethod
    def from_dict(cls, doc: dict) -> "DeviceSpec":
        return cls(
            name=doc["name"],
            compute_tops=doc["compute_tops"],
            mem_bw=doc["mem_bw"],
            ssd_bw=doc["ssd_bw"],
            prefill_utilization=doc.get("prefill_utilization", 0.35),
        )


def _load_data_json(filename: str) -> dict:
    path = resources.files("agentaccel") / "data" / filename
    return json.loads(path.read_text())


def device_presets() -> dict[str, DeviceSpec]:
    doc = _load_data_json("devices.json")
    return {name: DeviceSpec.from_dict({"name": name, **spec}) for name, spec in doc.items()}


def geometry_presets() -> dict[str, ModelGeometry]:
    doc = _load_data_json("geometries.json")
    return {name: ModelGeometry.from_dict(spec) for name, spec in doc.items()}


def prefill_latency(uncached_tokens: int, geometry: ModelGeometry, device: DeviceSpec) -> float:
    """Seconds to prefill the uncached portion of a prompt."""
    if uncached_tokens < 0:
        raise ValueError("token count must be non-negative")
    flops = 2.0 * geometry.params * uncached_tokens
    return flops / (device.compute_tops * 1e12 * device.prefill_utilization)


def decode_token_latency(geometry: ModelGeometry, device: DeviceSpec) -> float:
    """Seconds per autoregressive decode step (weight-read bound)."""
    return geometry.params_bytes / device.mem_bw


def verify_latency(k: int, geometry: ModelGeometry, device: DeviceSpec, tax_curve: TaxCurve) -> float:
    """Seconds for one verification pass over k tokens."""
    return decode_token_latency(geometry, device) * tax_curve(k)


def ssd_load_latency(loaded_bytes: int, device: DeviceSpec) -> float:
    if loaded_bytes < 0:
        raise ValueError("byte count must be non-negative")
    return loaded_bytes / device.ssd_bw


def specdec_speedup(
    target_size: float,
    draft_size: float,
    alpha: float,
    n_draft: int,
    tax_curve: TaxCurve,
) -> float:
    """Projected decode speedup of draft-based speculation.

    Under per-token acceptance probability `alpha`, a round of `n_draft`
    drafts lands E = sum_i alpha^i accepted tokens plus the guaranteed
    corrected token.  The round costs n_draft sequential draft steps (scaled
    by model size, decode being bandwidth-bound) plus one verification pass
    over n_draft+1 tokens.  Passing the ideal tax curve gives the
    zero-overhead upper bound.
    """
    if not (0.0 <= alpha <= 1.0):
        raise ValueError("alpha must be in [0, 1]")
    if n_draft < 1:
        raise ValueError("n_draft must be at least 1")
    if target_size <= 0 or draft_size < 0:
        raise ValueError("model sizes must be positive (draft may be 0)")
    expected_accepted = sum(alpha**i for i in range(1, n_draft + 1))
    draft_cost = n_draft * (draft_size / target_size)
    round_cost = draft_cost + tax_curve(n_draft + 1)
    tokens_per_round = expected_accepted + 1.0
    return tokens_per_round / round_cost


@dataclass
class RoleTrace:
    """Per-query token accounting and decode statistics for one LLM role."""

    baseline_total: int
    baseline_uncacheable: int
    weaver_total: int
    weaver_uncacheable: int
    output_tokens: int
    decode: dict = field(default_factory=dict)

    _REQUIRED = (
        "baseline_total",
        "baseline_uncacheable",
        "weaver_total",
        "weaver_uncacheable",
        "output_tokens",
    )

    @classmethod
    def from_dict(cls, doc: dict, where: str) -> "RoleTrace":
        for key in cls._REQUIRED:
            if key not in doc:
                raise TraceError(f"{where}: missing field '{key}'")
        role = cls(**{k: int(doc[k]) for k in cls._REQUIRED}, decode=dict(doc.get("decode", {})))
        if role.baseline_uncacheable > role.baseline_total or role.weaver_uncacheable > role.weaver_total:
            raise TraceError(f"{where}: uncacheable tokens exceed prompt total")
        return role

    def to_dict(self) -> dict:
        return {
            "baseline_total": self.baseline_total,
            "baseline_uncacheable": self.baseline_uncacheable,
            "weaver_total": self.weaver_total,
            "weaver_uncacheable": self.weaver_uncacheable,
            "output_tokens": self.output_tokens,
            "decode": self.decode,
        }


@dataclass
class TraceRecord:
    query_id: str
    tool_count: int
    planner: RoleTrace
    arbiter: RoleTrace

    @classmethod
    def from_dict(cls, doc: dict) -> "TraceRecord":
        for key in ("query_id", "tool_count", "planner", "arbiter"):
            if key not in doc:
                raise TraceError(f"trace record: missing field '{key}'")
        qid = str(doc["query_id"])
        return cls(
            query_id=qid,
            tool_count=int(doc["tool_count"]),
            planner=RoleTrace.from_dict(doc["planner"], f"record {qid} planner"),
            arbiter=RoleTrace.from_dict(doc["arbiter"], f"record {qid} arbiter"),
        )

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "tool_count": self.tool_count,
            "planner": self.planner.to_dict(),
            "arbiter": self.arbiter.to_dict(),
        }


def load_trace(path) -> list[TraceRecord]:
    records = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        if doc.get("kind") == "header":
            continue
        records.append(TraceRecord.from_dict(doc))
    if not records:
        raise TraceError(f"{path}: no trace records")
    return records


@dataclass
class SimConfig:
    device: DeviceSpec
    geometry: ModelGeometry
    verify_tax: TaxCurve = field(default_factory=lambda: IDEAL_TAX)
    tool_seconds: float = DEFAULT_TOOL_SECONDS
    toolrag_seconds: float = DEFAULT_TOOLRAG_SECONDS


@dataclass
class LatencyBreakdown:
    seconds: dict[str, float]

    def __post_init__(self):
        for stage in STAGES:
            self.seconds.setdefault(stage, 0.0)

    @property
    def total(self) -> float:
        return sum(self.seconds.values())

    @property
    def fractions(self) -> dict[str, float]:
        total = self.total
        if total == 0:
            return {stage: 0.0 for stage in STAGES}
        return {stage: self.seconds[stage] / total for stage in STAGES}

    def add(self, stage: str, value: float):
        self.seconds[stage] += value

    def to_dict(self) -> dict:
        return {
            "seconds": {s: self.seconds[s] for s in STAGES},
            "total": self.total,
            "fractions": self.fractions,
        }


def _decode_seconds(role: RoleTrace, config: SimConfig, speculative: bool) -> float:
    t1 = decode_token_latency(config.geometry, config.device)
    if not speculative:
        return role.output_tokens * t1
    stats = role.decode
    if not stats:
        raise TraceError("speculative cell requested but the record carries no decode stats")
    for key in ("rounds", "fallbacks", "draft_len"):
        if key not in stats:
            raise TraceError(f"decode stats missing field '{key}'")
    drafting_rounds = int(stats["rounds"]) - int(stats["fallbacks"])
    if drafting_rounds < 0:
        raise TraceError("decode stats: fallbacks exceed rounds")
    width = int(stats["draft_len"]) + 1
    pass_cost = verify_latency(width, config.geometry, config.device, config.verify_tax)
    return drafting_rounds * pass_cost + int(stats["fallbacks"]) * t1


def _cell_breakdown(records: list[TraceRecord], config: SimConfig, reconstructed: bool, speculative: bool) -> LatencyBreakdown:
    bd = LatencyBreakdown(seconds={})
    for rec in records:
        bd.add("toolrag", config.toolrag_seconds)
        bd.add("tool_exec", rec.tool_count * config.tool_seconds)
        for role, prefix in ((rec.planner, "planner"), (rec.arbiter, "arbiter")):
            uncached = role.weaver_uncacheable if reconstructed else role.baseline_uncacheable
            bd.add(f"{prefix}_prefill", prefill_latency(uncached, config.geometry, config.device))
            bd.add(f"{prefix}_decode", _decode_seconds(role, config, speculative))
            if reconstructed:
                loaded_tokens = role.weaver_total - role.weaver_uncacheable
                bd.add("ssd_load", ssd_load_latency(kv_size(loaded_tokens, config.geometry), config.device))
    return bd


@dataclass
class PipelineReport:
    cells: dict[str, LatencyBreakdown]
    speedups: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "cells": {name: bd.to_dict() for name, bd in self.cells.items()},
            "speedups": self.speedups,
        }

    def to_csv(self) -> str:
        lines = ["cell,stage,seconds,fraction"]
        for name in CELLS:
            bd = self.cells[name]
            fr = bd.fractions
            for stage in STAGES:
                lines.append(f"{name},{stage},{bd.seconds[stage]:.9g},{fr[stage]:.9g}")
            lines.append(f"{name},total,{bd.total:.9g},1")
        for name, value in self.speedups.items():
            lines.append(f"{name},speedup,{value:.9g},")
        return "\n".join(lines) + "\n"


def simulate_pipeline(records: list[TraceRecord], config: SimConfig) -> PipelineReport:
    """Replay a trace under all four optimization cells."""
    cells = {
        "baseline": _cell_breakdown(records, config, reconstructed=False, speculative=False),
        "pw": _cell_breakdown(records, config, reconstructed=True, speculative=False),
        "es": _cell_breakdown(records, config, reconstructed=False, speculative=True),
        "pw_es": _cell_breakdown(records, config, reconstructed=True, speculative=True),
    }
    base = cells["baseline"].total
    speedups = {name: (base / cells[name].total if cells[name].total > 0 else float("inf")) for name in ("pw", "es", "pw_es")}
    return PipelineReport(cells=cells, speedups=speedups)


@dataclass(frozen=True)
class CoveragePoint:
    budget: int
    coverage_fraction: float
    storage_bytes: int


def coverage_curve(
    sequences,
    cluster_tokens: dict[int, int],
    budgets,
    geometry: ModelGeometry,
    static_prefix_tokens: int,
    extra_static_tokens: int = 0,
) -> list[CoveragePoint]:
    """Token-weighted coverage and storage cost per cache budget.

    Coverage weights each covered cluster by its example length, so the
    fraction reflects how much of the activated few-shot region loads from
    cache rather than recomputing.  Storage counts the always-cached static
    prefixes plus one full blob per selected combination (each combination
    entry embeds the static planner prefix ahead of its cluster examples).

    One greedy run at the largest budget supplies every smaller budget,
    since the selection sequence is incremental.
    """
    sequences = [tuple(s) for s in sequences]
    budgets = sorted(set(int(b) for b in budgets))
    if budgets and budgets[0] < 0:
        raise ValueError("budgets must be non-negative")
    full = select_combinations(budgets[-1] if budgets else 0, sequences)

    def token_weight(seq) -> int:
        return sum(cluster_tokens[cid] for cid in seq)

    denom = sum(token_weight(seq) for seq in sequences)
    points = []
    base_storage = kv_size(static_prefix_tokens + extra_static_tokens, geometry)
    for budget in budgets:
        chosen = full[:budget]
        chosen_set = set(chosen)
        covered = 0
        for seq in sequences:
            for length in range(len(seq), 0, -1):
                if seq[:length] in chosen_set:
                    covered += token_weight(seq[:length])
                    break
        storage = base_storage
        for combo in chosen:
            storage += kv_size(static_prefix_tokens + token_weight(combo), geometry)
        points.append(
            CoveragePoint(
                budget=budget,
                coverage_fraction=(covered / denom if denom else 0.0),
                storage_bytes=storage,
            )
        )
    return points


def coverage_saturation_budget(sequences) -> int:
    """Budget at which every distinct activation sequence is fully cached.

    Selection builds prefixes one extension at a time, so saturation needs
    the whole prefix closure of the distinct sequences.
    """
    closure = set()
    for seq in sequences:
        seq = tuple(seq)
        for length in range(1, len(seq) + 1):
            closure.add(seq[:length])
    return len(closure)


def calibration_trace() -> list[TraceRecord]:
    """The averaged-workload record the cost model is calibrated against.

    Token counts and decode statistics follow the measured on-device agent
    profile bundled with the device presets: a long planner prompt whose
    reconstruction leaves roughly thirty percent of it uncached, a shorter
    arbiter prompt that is almost entirely static, and selective decoding
    statistics with about one accepted draft token per verification pass.
    """
    doc = {
        "query_id": "calibration-average",
        "tool_count": 3,
        "planner": {
            "baseline_total": 1739,
            "baseline_uncacheable": 1711,
            "weaver_total": 3790,
            "weaver_uncacheable": 519,
            "output_tokens": 113,
            "decode": {
                "rounds": 65,
                "fallbacks": 17,
                "drafts_generated": 192,
                "drafts_accepted": 48,
                "draft_len": 4,
                "output_tokens": 113,
                "selective": True,
            },
        },
        "arbiter": {
            "baseline_total": 790,
            "baseline_uncacheable": 790,
            "weaver_total": 790,
            "weaver_uncacheable": 88,
            "output_tokens": 147,
            "decode": {
                "rounds": 91,
                "fallbacks": 37,
                "drafts_generated": 216,
                "drafts_accepted": 56,
                "draft_len": 4,
                "output_tokens": 147,
                "selective": True,
            },
        },
    }
    return [TraceRecord.from_dict(doc)]
