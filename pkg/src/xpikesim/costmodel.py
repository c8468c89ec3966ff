"""Analytical op-count, energy, and pipeline-latency model.

Closed-form accounting for one inference of an encoder/decoder backbone
on four implementations:

    xpikeformer    hybrid accelerator: crossbar feed-forward + stochastic
                   attention engine, binary activations over T steps
    ann_quant      fully digital INT8 transformer accelerator
    ann_quant_aimc ann_quant with the static linear layers moved onto
                   crossbars (bit-serial over 8 input slices); attention,
                   softmax, and layernorm stay digital
    snn_digi_opt   idealized digital spiking transformer: masked integer
                   adds gated by input spikes, integer score scaling

Counts are closed-form in the model shape, never simulated, and all
spiking counts are exactly linear in the spike-train length. Energy is a
dot product of counts with a per-op energy table (picojoules); memory
traffic is runtime SRAM bytes only (weights are assumed resident, so
parameter loading is excluded). Spiking pre-activations in the digital
baseline are stored at 8-bit width; the hybrid design's row-block mapping
keeps crossbar pre-activations inside the engine, so only binary
activation matrices cross its SRAM boundary.

Latency is an analytical pipeline model, not an event simulation: the
crossbar engine retires one token per ADC multiplexer round-robin behind
a full pipeline of layer stages, and each attention head costs
(T + 1) * d_k cycles (fill plus one output phase per step). Cycle counts
for the digital baselines are coarse throughput estimates and are
labelled approximate in reports.

The committed "paper-calib" energy table is produced once by
tools/fit_energy_table.py (anchored digital constants plus a small
least-squares fit; see that script for the procedure) and is loaded here
as a package resource.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from math import ceil
from typing import Dict, Optional

__all__ = [
    "CostConfig",
    "OpCounts",
    "EnergyTable",
    "CostReport",
    "BaselineComparison",
    "IMPLEMENTATIONS",
    "OP_TYPES",
    "count_ops",
    "estimate_energy",
    "estimate_latency",
    "build_report",
    "compare_baselines",
]

IMPLEMENTATIONS = ("xpikeformer", "ann_quant", "ann_quant_aimc", "snn_digi_opt")

# Every op type an EnergyTable must price (pJ per op; sram_byte is pJ per
# byte moved, either direction).
OP_TYPES = (
    "mac_int8",
    "add_int8",
    "masked_add_int8",
    "mult_int8",
    "lif_update",
    "and_gate",
    "counter_inc",
    "comparator",
    "lfsr_byte",
    "column_read",
    "periphery_access",
    "adc_convert",
    "residual_add",
    "softmax_elem",
    "layernorm_elem",
    "sram_byte",
)

# Bit-serial input slices when INT8 activations drive a binary-input
# crossbar (ann_quant_aimc).
_INT8_SLICES = 8


@dataclass(frozen=True)
class CostConfig:
    """Model shape plus the per-implementation spike-train lengths.

    t_steps is the minimum encoding length the hybrid design needs for
    converged accuracy; t_steps_snn is the same quantity for the digital
    spiking baseline (always shorter in practice). assumed_rate is the
    mean firing rate used to discount masked additions in the digital
    spiking baseline; the binary-activation traffic of both spiking
    implementations is counted at full width regardless.
    """

    depth: int
    d_model: int
    heads: int
    n_tokens: int
    t_steps: int
    t_steps_snn: int
    ffn_dim: int = 0
    assumed_rate: float = 0.15
    tile_dim: int = 128
    adc_sharing: int = 8

    def __post_init__(self) -> None:
        if self.ffn_dim == 0:
            object.__setattr__(self, "ffn_dim", 4 * self.d_model)
        for name in ("depth", "d_model", "heads", "n_tokens", "t_steps",
                     "t_steps_snn", "ffn_dim", "tile_dim", "adc_sharing"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.d_model % self.heads != 0:
            raise ValueError(
                f"d_model {self.d_model} not divisible by heads {self.heads}")
        if not 0.0 < self.assumed_rate <= 1.0:
            raise ValueError(f"assumed_rate must be in (0, 1], got {self.assumed_rate}")

    @property
    def d_k(self) -> int:
        return self.d_model // self.heads

    @classmethod
    def preset(cls, name: str) -> "CostConfig":
        if name not in PRESETS:
            known = ", ".join(sorted(PRESETS))
            raise ValueError(f"unknown preset {name!r}; known presets: {known}")
        return replace(PRESETS[name])


# ImageNet-scale vision transformer workloads. n_tokens = 196 patch
# tokens; spike-train lengths are the minimum-T convention for each
# implementation at converged accuracy.
PRESETS: Dict[str, CostConfig] = {
    "vit_8_768": CostConfig(depth=8, d_model=768, heads=12, n_tokens=196,
                            t_steps=7, t_steps_snn=4),
    "vit_6_512": CostConfig(depth=6, d_model=512, heads=8, n_tokens=196,
                            t_steps=8, t_steps_snn=6),
}


@dataclass(frozen=True)
class OpCounts:
    """Per-component operation counts for one inference.

    components maps a component name (e.g. "aimc_periphery", "ssa",
    "memory") to a dict of op type -> count. Counts may be fractional
    where an expected activity factor applies (masked additions); all
    counts are nonnegative.
    """

    impl: str
    components: Dict[str, Dict[str, float]]

    def __post_init__(self) -> None:
        if self.impl not in IMPLEMENTATIONS:
            raise ValueError(f"unknown implementation id {self.impl!r}")
        for comp, ops in self.components.items():
            for op, count in ops.items():
                if op not in OP_TYPES:
                    raise ValueError(f"unknown op type {op!r} in component {comp!r}")
                if count < 0:
                    raise ValueError(
                        f"negative count {count} for {comp}/{op}")

    def total_by_op(self) -> Dict[str, float]:
        """Merge all components into one op -> count dict."""
        merged: Dict[str, float] = {}
        for ops in self.components.values():
            for op, count in ops.items():
                merged[op] = merged.get(op, 0.0) + count
        return merged

    def component_names(self) -> tuple:
        return tuple(self.components)


@dataclass(frozen=True)
class EnergyTable:
    """Per-op energies in picojoules, plus a preset name."""

    name: str
    entries: Dict[str, float]

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("energy table needs a nonempty name")
        for op, value in self.entries.items():
            if value <= 0:
                raise ValueError(f"energy for {op!r} must be > 0, got {value}")

    def energy(self, op: str) -> float:
        if op not in self.entries:
            raise ValueError(f"missing op type {op!r} in energy table {self.name!r}")
        return self.entries[op]

    def to_json(self, path: str) -> None:
        payload = {"name": self.name, "entries_pj": dict(sorted(self.entries.items()))}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path: str) -> "EnergyTable":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        return cls._from_payload(payload)

    @classmethod
    def _from_payload(cls, payload: dict) -> "EnergyTable":
        if "name" not in payload or "entries_pj" not in payload:
            raise ValueError("energy table file needs 'name' and 'entries_pj'")
        entries = {str(k): float(v) for k, v in payload["entries_pj"].items()}
        return cls(name=str(payload["name"]), entries=entries)

    @classmethod
    def preset(cls, name: str = "paper-calib") -> "EnergyTable":
        """Load a packaged energy table by preset name."""
        filename = name.replace("-", "_") + ".json"
        ref = resources.files("xpikesim").joinpath("energy", filename)
        try:
            payload = json.loads(ref.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ValueError(f"unknown energy table preset {name!r}") from None
        return cls._from_payload(payload)


@dataclass(frozen=True)
class CostReport:
    """Energy and latency summary for one implementation.

    Energies are picojoules. shares normalizes the compute components
    (everything except "memory") to sum to 1; aimc_shares does the same
    within the crossbar engine when one is present. Cycle counts are
    analytical approximations.
    """

    impl: str
    table_name: str
    component_energy: Dict[str, float]
    compute_energy: float
    memory_energy: float
    total_energy: float
    shares: Dict[str, float]
    aimc_shares: Dict[str, float]
    cycles: Optional[int] = None
    stage_cycles: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "impl": self.impl,
            "table": self.table_name,
            "component_energy_pj": dict(self.component_energy),
            "compute_energy_pj": self.compute_energy,
            "memory_energy_pj": self.memory_energy,
            "total_energy_pj": self.total_energy,
            "compute_shares": dict(self.shares),
            "aimc_shares": dict(self.aimc_shares),
            "cycles_approx": self.cycles,
            "stage_cycles_approx": dict(self.stage_cycles),
        }

    def to_text(self) -> str:
        """Render an aligned text table of the energy breakdown."""
        lines = [f"implementation: {self.impl}   energy table: {self.table_name}"]
        width = max(len(name) for name in self.component_energy)
        for name, energy in self.component_energy.items():
            share = self.shares.get(name)
            tail = f"  {100.0 * share:6.2f}% of compute" if share is not None else ""
            lines.append(f"  {name:<{width}}  {energy:14.1f} pJ{tail}")
        lines.append(f"  {'compute total':<{width}}  {self.compute_energy:14.1f} pJ")
        lines.append(f"  {'total':<{width}}  {self.total_energy:14.1f} pJ")
        if self.aimc_shares:
            sub = "  ".join(f"{k.split('_', 1)[1]} {100.0 * v:.1f}%"
                            for k, v in self.aimc_shares.items())
            lines.append(f"  crossbar engine breakdown: {sub}")
        if self.cycles is not None:
            lines.append(f"  pipeline cycles (approx): {self.cycles}")
        return "\n".join(lines)


@dataclass(frozen=True)
class BaselineComparison:
    """Total-energy ratios of every implementation against the hybrid."""

    reports: Dict[str, CostReport]
    energies: Dict[str, float]
    ratios: Dict[str, float]

    def to_dict(self) -> dict:
        return {
            "total_energy_pj": dict(self.energies),
            "ratio_vs_xpikeformer": dict(self.ratios),
            "reports": {impl: rep.to_dict() for impl, rep in self.reports.items()},
        }


def _blocks(dim: int, tile: int) -> int:
    return ceil(dim / tile)


def _linear_shapes(cfg: CostConfig) -> list:
    """(out_dim, in_dim) of the six static linear layers in one block."""
    d, f = cfg.d_model, cfg.ffn_dim
    return [(d, d), (d, d), (d, d), (d, d), (f, d), (d, f)]


def _crossbar_counts(cfg: CostConfig, steps: int) -> Dict[str, Dict[str, float]]:
    """Crossbar-engine counts for all static linears over `steps` passes.

    One column read per physical output column per token pass; the ADC
    digitizes each column once per pass (shared via the multiplexer), the
    periphery (decoders, muxes, drivers, buffers) is exercised once per
    column read, and the carry-save adders combine one partial sum per
    extra input row-block.
    """
    tile = cfg.tile_dim
    col_reads = 0
    csa_adds = 0
    for out_dim, in_dim in _linear_shapes(cfg):
        cols = _blocks(out_dim, tile) * tile
        col_reads += cols
        csa_adds += cols * (_blocks(in_dim, tile) - 1)
    passes = steps * cfg.n_tokens * cfg.depth
    return {
        "aimc_core": {"column_read": float(passes * col_reads)},
        "aimc_periphery": {"periphery_access": float(passes * col_reads)},
        "aimc_adc": {"adc_convert": float(passes * col_reads)},
        "aimc_accumulation": {"add_int8": float(passes * csa_adds)},
    }


def _binary_traffic_bytes(cfg: CostConfig, steps: int) -> float:
    """SRAM bytes for binary activation matrices over `steps` time steps.

    Each matrix that crosses an engine boundary is written once and read
    once at 1 bit per element: the block input feeds the crossbar engine
    (read only; it was written by the previous stage), Q/K/V feed the
    attention engine, the attention output returns to the crossbar
    engine, and the two feed-forward activations hand over between
    layers.
    """
    d, f, n = cfg.d_model, cfg.ffn_dim, cfg.n_tokens
    bits_per_block = n * (
        d            # block input, read by the Q/K/V crossbars
        + 3 * 2 * d  # Q, K, V written then read
        + 2 * d      # attention output written then read
        + 2 * d      # post-attention activation into the FFN
        + 2 * f      # FFN hidden activation
        + 2 * d      # block output
    )
    encode_bits = 2 * n * d  # input spike plane written once, read once
    return steps * (cfg.depth * bits_per_block + encode_bits) / 8.0


def _count_xpikeformer(cfg: CostConfig) -> OpCounts:
    t, n, dk = cfg.t_steps, cfg.n_tokens, cfg.d_k
    comps = _crossbar_counts(cfg, t)

    lif_sites = sum(out for out, _ in _linear_shapes(cfg))
    comps["aimc_accumulation"]["lif_update"] = float(t * n * cfg.depth * lif_sites)

    # Attention engine: every score cell ANDs one Q/K bit pair per query
    # dimension and every output cell ANDs one score/V bit pair per key
    # token, each AND feeding a counter; one comparator draw (one PRN
    # byte) per sampled bit.
    per_head_ands = n * n * dk + n * dk * n
    per_head_draws = n * n + n * dk
    ands = float(cfg.depth * cfg.heads * t * per_head_ands)
    draws = float(cfg.depth * cfg.heads * t * per_head_draws)
    comps["ssa"] = {
        "and_gate": ands,
        "counter_inc": ands,
        "comparator": draws,
        "lfsr_byte": draws,
    }

    # Residual units inject the skip path into two junctions per block;
    # the input encoder is one comparator draw per input element per step.
    comps["other"] = {
        "residual_add": float(2 * cfg.depth * t * n * cfg.d_model),
        "comparator": float(t * n * cfg.d_model),
        "lfsr_byte": float(t * n * cfg.d_model),
    }

    comps["memory"] = {"sram_byte": _binary_traffic_bytes(cfg, t)}
    return OpCounts(impl="xpikeformer", components=comps)


def _ann_linear_macs(cfg: CostConfig) -> float:
    """Dense INT8 MACs of the six static linears across all blocks."""
    per_block = sum(out * inp for out, inp in _linear_shapes(cfg))
    return float(cfg.depth * cfg.n_tokens * per_block)


def _ann_attention_macs(cfg: CostConfig) -> float:
    """Score and context matmuls: 2 * N^2 * d_model per block."""
    return float(cfg.depth * 2 * cfg.n_tokens ** 2 * cfg.d_model)


def _ann_memory_bytes(cfg: CostConfig) -> float:
    """INT8 SRAM bytes per inference for the digital ANN pipeline.

    Every operator reads its activation operands and writes its result
    once (weights stay resident). Identical for ann_quant and
    ann_quant_aimc: moving the matmuls into crossbars does not change
    what crosses SRAM.
    """
    d, f, n, h = cfg.d_model, cfg.ffn_dim, cfg.n_tokens, cfg.heads
    scores = h * n * n
    per_block = (
        n * d * 3 + n * d * 3      # Q/K/V projections: read x 3 times, write 3 outputs
        + n * d * 2 + scores       # score matmul: read Q and K, write scores
        + scores * 3               # softmax: read, write, then re-read as weights
        + n * d + n * d            # context matmul: read V, write context
        + n * d * 2                # output projection: read context, write out
        + n * d * 3 * 2            # two residual adds: two reads and a write each
        + n * d * 2 * 2            # two layernorms: read and write each
        + n * d + n * f            # FFN first matmul: read in, write hidden
        + n * f + n * d            # FFN second matmul: read hidden, write out
    )
    return float(cfg.depth * per_block)


def _count_ann_quant(cfg: CostConfig) -> OpCounts:
    n, d, h = cfg.n_tokens, cfg.d_model, cfg.heads
    comps = {
        "matmul": {"mac_int8": _ann_linear_macs(cfg) + _ann_attention_macs(cfg)},
        "softmax": {"softmax_elem": float(cfg.depth * h * n * n)},
        "layernorm": {"layernorm_elem": float(2 * cfg.depth * n * d)},
        "other": {"add_int8": float(2 * cfg.depth * n * d)},
        "memory": {"sram_byte": _ann_memory_bytes(cfg)},
    }
    return OpCounts(impl="ann_quant", components=comps)


def _count_ann_quant_aimc(cfg: CostConfig) -> OpCounts:
    comps = _crossbar_counts(cfg, _INT8_SLICES)
    # Recombining the 8 bit slices costs one shift-add per output element
    # per slice.
    recombine = float(_INT8_SLICES * cfg.n_tokens * cfg.depth
                      * sum(out for out, _ in _linear_shapes(cfg)))
    comps["aimc_accumulation"]["add_int8"] += recombine

    n, d, h = cfg.n_tokens, cfg.d_model, cfg.heads
    comps["matmul"] = {"mac_int8": _ann_attention_macs(cfg)}
    comps["softmax"] = {"softmax_elem": float(cfg.depth * h * n * n)}
    comps["layernorm"] = {"layernorm_elem": float(2 * cfg.depth * n * d)}
    comps["other"] = {"add_int8": float(2 * cfg.depth * n * d)}
    comps["memory"] = {"sram_byte": _ann_memory_bytes(cfg)}
    return OpCounts(impl="ann_quant_aimc", components=comps)


def _count_snn_digi_opt(cfg: CostConfig) -> OpCounts:
    ts, n, d, h, f = cfg.t_steps_snn, cfg.n_tokens, cfg.d_model, cfg.heads, cfg.ffn_dim
    rate = cfg.assumed_rate
    lif_linear = sum(out for out, _ in _linear_shapes(cfg))

    comps = {
        # Static linears as spike-gated INT8 accumulations.
        "feedforward": {
            "masked_add_int8": rate * ts * _ann_linear_macs(cfg),
            "lif_update": float(ts * cfg.depth * n * lif_linear),
        },
        # Score/context matmuls as masked adds, plus one integer scaling
        # multiply per score element per step, with LIF stages after both
        # attention matmuls.
        "attention": {
            "masked_add_int8": rate * ts * _ann_attention_macs(cfg),
            "mult_int8": float(ts * cfg.depth * h * n * n),
            "lif_update": float(ts * cfg.depth * (h * n * n + n * d)),
        },
        "other": {
            "add_int8": float(2 * ts * cfg.depth * n * d),
            "comparator": float(ts * n * d),
            "lfsr_byte": float(ts * n * d),
        },
    }

    # Non-binary pre-activations are accumulated to SRAM at 8-bit width
    # (one write and one read per site per step), on top of the binary
    # activation traffic.
    preact_sites = cfg.depth * (n * lif_linear + h * n * n + n * d)
    preact_bytes = float(2 * ts * preact_sites)
    comps["memory"] = {
        "sram_byte": preact_bytes + _binary_traffic_bytes(cfg, ts),
    }
    return OpCounts(impl="snn_digi_opt", components=comps)


_COUNTERS = {
    "xpikeformer": _count_xpikeformer,
    "ann_quant": _count_ann_quant,
    "ann_quant_aimc": _count_ann_quant_aimc,
    "snn_digi_opt": _count_snn_digi_opt,
}


def count_ops(cfg: CostConfig, impl: str) -> OpCounts:
    """Closed-form op counts for one inference of `impl` at shape `cfg`."""
    if impl not in _COUNTERS:
        known = ", ".join(IMPLEMENTATIONS)
        raise ValueError(f"unknown implementation id {impl!r}; known: {known}")
    return _COUNTERS[impl](cfg)


_AIMC_COMPONENTS = ("aimc_core", "aimc_periphery", "aimc_accumulation", "aimc_adc")


def estimate_energy(counts: OpCounts, table: EnergyTable) -> CostReport:
    """Price counts against the table and compute breakdown shares."""
    component_energy: Dict[str, float] = {}
    for comp, ops in counts.components.items():
        component_energy[comp] = sum(count * table.energy(op)
                                     for op, count in ops.items())

    memory_energy = component_energy.get("memory", 0.0)
    compute_energy = sum(e for name, e in component_energy.items()
                         if name != "memory")
    total = compute_energy + memory_energy

    shares: Dict[str, float] = {}
    if compute_energy > 0:
        shares = {name: e / compute_energy
                  for name, e in component_energy.items() if name != "memory"}

    aimc_shares: Dict[str, float] = {}
    aimc_total = sum(component_energy.get(c, 0.0) for c in _AIMC_COMPONENTS)
    if aimc_total > 0:
        aimc_shares = {c: component_energy.get(c, 0.0) / aimc_total
                       for c in _AIMC_COMPONENTS}

    return CostReport(
        impl=counts.impl,
        table_name=table.name,
        component_energy=component_energy,
        compute_energy=compute_energy,
        memory_energy=memory_energy,
        total_energy=total,
        shares=shares,
        aimc_shares=aimc_shares,
    )


# Digital throughput assumptions for the approximate baseline latency
# models: a 128x128 INT8 MAC array and a 128-lane integer vector unit.
_MAC_ARRAY_LANES = 128 * 128
_VECTOR_LANES = 128


def _aimc_readout_cycles(cfg: CostConfig, steps: int) -> int:
    """Multiplexer rounds to retire one inference through the crossbars.

    Each token occupies a layer stage for adc_sharing readout rounds;
    with all depth * 6 linear stages pipelined, the last token drains
    after (n_tokens + stages - 1) rounds per step.
    """
    stages = 6 * cfg.depth
    return steps * cfg.adc_sharing * (cfg.n_tokens + stages - 1)


def estimate_latency(cfg: CostConfig, impl: str) -> "tuple[int, Dict[str, int]]":
    """Approximate pipeline cycles and a per-stage breakdown."""
    if impl == "xpikeformer":
        stages = {
            "aimc_readout": _aimc_readout_cycles(cfg, cfg.t_steps),
            "ssa": cfg.depth * (cfg.t_steps + 1) * cfg.d_k,
        }
    elif impl == "ann_quant":
        macs = _ann_linear_macs(cfg) + _ann_attention_macs(cfg)
        elems = cfg.depth * (cfg.heads * cfg.n_tokens ** 2
                             + 2 * cfg.n_tokens * cfg.d_model)
        stages = {
            "mac_array": ceil(macs / _MAC_ARRAY_LANES),
            "vector_unit": ceil(elems / _VECTOR_LANES),
        }
    elif impl == "ann_quant_aimc":
        elems = cfg.depth * (cfg.heads * cfg.n_tokens ** 2
                             + 2 * cfg.n_tokens * cfg.d_model)
        stages = {
            "aimc_readout": _aimc_readout_cycles(cfg, _INT8_SLICES),
            "mac_array": ceil(_ann_attention_macs(cfg) / _MAC_ARRAY_LANES),
            "vector_unit": ceil(elems / _VECTOR_LANES),
        }
    elif impl == "snn_digi_opt":
        counts = _count_snn_digi_opt(cfg).total_by_op()
        work = (counts["masked_add_int8"] + counts["mult_int8"]
                + counts["lif_update"])
        stages = {"vector_unit": ceil(work / _VECTOR_LANES)}
    else:
        known = ", ".join(IMPLEMENTATIONS)
        raise ValueError(f"unknown implementation id {impl!r}; known: {known}")
    return sum(stages.values()), stages


def build_report(cfg: CostConfig, impl: str,
                 table: Optional[EnergyTable] = None) -> CostReport:
    """count_ops + estimate_energy + estimate_latency in one call."""
    if table is None:
        table = EnergyTable.preset()
    report = estimate_energy(count_ops(cfg, impl), table)
    cycles, stage_cycles = estimate_latency(cfg, impl)
    return replace(report, cycles=cycles, stage_cycles=stage_cycles)


def compare_baselines(cfg: CostConfig,
                      table: Optional[EnergyTable] = None) -> BaselineComparison:
    """Total-energy ratios of every implementation against the hybrid."""
    if table is None:
        table = EnergyTable.preset()
    reports = {impl: build_report(cfg, impl, table) for impl in IMPLEMENTATIONS}
    energies = {impl: rep.total_energy for impl, rep in reports.items()}
    base = energies["xpikeformer"]
    ratios = {impl: energy / base for impl, energy in energies.items()}
    return BaselineComparison(reports=reports, energies=energies, ratios=ratios)
