"""Spiking-transformer assembly: encoder-only and decoder-only networks
built from the AIMC linear layers and the SSA attention engine.

One block computes, on spike trains and with no normalization anywhere:

    q, k, v = LIF(W_Q x), LIF(W_K x), LIF(W_V x)        (AIMC + LIF)
    u = LIF(W_O concat_heads(SSA(q, k, v)) [+ x])        (residual merge)
    h = LIF(W_1 u)
    z = LIF(W_2 h [+ u])                                 (residual merge)

The residual merge has two modes. membrane_add (default) injects the
residual spike as +1 current into the next LIF's pre-activation, keeping
all inter-layer signals binary. spike_or ORs the residual spike into the
layer's output train instead.

Determinism: every stochastic site has a fixed unit id. Input-encoding
lanes take unit ids [0, n_tokens*d_model); block b head h takes the span
starting at n_tokens*d_model + (b*heads + h)*units_per_head. Crossbar
tiles are numbered in construction order (per block: W_Q, W_K, W_V, W_O,
W_1, W_2, then the head layer). Given (seed, hardware config, t_now) the
whole run is reproducible bit for bit, for any thread count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .aimc import AimcConfig, AimcLayer
from .spikecore import StreamBank, bernoulli_encode_batch
from .ssa import SsaConfig, mhsa, units_per_head

__all__ = [
    "ModelConfig",
    "LayerWeights",
    "InferenceResult",
    "Network",
    "encode_inputs",
    "run_inference",
    "lif_attention_baseline",
    "default_threshold",
]


def _is_power_of_two(value: int) -> bool:
    return value >= 1 and (value & (value - 1)) == 0


@dataclass(frozen=True)
class ModelConfig:
    """Architecture shape shared by the simulator and the cost model."""

    arch: str                     # "encoder" or "decoder"
    depth: int
    d_model: int
    heads: int
    n_tokens: int
    t_steps: int
    ffn_dim: int = 0              # 0 -> 4 * d_model
    residual_mode: str = "membrane_add"

    def __post_init__(self):
        if self.arch not in ("encoder", "decoder"):
            raise ValueError(f"arch must be encoder or decoder, got {self.arch!r}")
        if self.residual_mode not in ("membrane_add", "spike_or"):
            raise ValueError(f"unknown residual_mode {self.residual_mode!r}")
        if self.depth < 1 or self.d_model < 1 or self.t_steps < 1:
            raise ValueError("depth, d_model, t_steps must be positive")
        if self.d_model % self.heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by "
                             f"{self.heads} heads")
        if self.ffn_dim == 0:
            object.__setattr__(self, "ffn_dim", 4 * self.d_model)
        # engine limits: the SSA comparators need power-of-two normalizers
        if not _is_power_of_two(self.n_tokens) or not 2 <= self.n_tokens <= 128:
            raise ValueError(f"n_tokens must be a power of two in [2, 128], "
                             f"got {self.n_tokens}")
        if not _is_power_of_two(self.d_k) or self.d_k > 256:
            raise ValueError(f"d_k = d_model/heads must be a power of two "
                             f"<= 256, got {self.d_k}")

    @property
    def d_k(self) -> int:
        return self.d_model // self.heads

    @property
    def causal(self) -> bool:
        return self.arch == "decoder"


@dataclass
class LayerWeights:
    """Integer weights and LIF thresholds for one block.

    Matrices follow the (out_dim, in_dim) layout: w_q/w_k/w_v/w_o are
    (d_model, d_model), w_1 is (ffn_dim, d_model), w_2 is (d_model,
    ffn_dim). Thresholds are positive integers in membrane units.
    """

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    w_1: np.ndarray
    w_2: np.ndarray
    thresholds: dict = field(default_factory=dict)

    _FIELDS = ("w_q", "w_k", "w_v", "w_o", "w_1", "w_2")

    def threshold(self, name: str) -> int:
        return int(self.thresholds.get(name, 1))

    def validate(self, cfg: ModelConfig):
        shapes = {
            "w_q": (cfg.d_model, cfg.d_model), "w_k": (cfg.d_model, cfg.d_model),
            "w_v": (cfg.d_model, cfg.d_model), "w_o": (cfg.d_model, cfg.d_model),
            "w_1": (cfg.ffn_dim, cfg.d_model), "w_2": (cfg.d_model, cfg.ffn_dim),
        }
        for name, want in shapes.items():
            w = np.asarray(getattr(self, name))
            if w.shape != want:
                raise ValueError(f"{name} has shape {w.shape}, expected {want}")
            if np.abs(w).max(initial=0) > 15:
                raise ValueError(f"{name} entries exceed [-15, 15]")


@dataclass
class InferenceResult:
    """Time-decoded network output."""

    output_rates: np.ndarray              # (n_tokens, d_model)
    class_scores: np.ndarray | None       # (classes,) or None
    trace: list = field(default_factory=list)
    cycles: int = 0

    @property
    def decision(self) -> int | None:
        if self.class_scores is None:
            return None
        return int(np.argmax(self.class_scores))


def default_threshold(fan_in: int, mean_rate: float) -> int:
    """Mid-range firing threshold for random-weight experiments."""
    return max(1, int(round(0.25 * fan_in * mean_rate)))


def encode_inputs(batch_rates: np.ndarray, t_steps: int, global_seed: int,
                  pos_embed: np.ndarray | None = None) -> np.ndarray:
    """Bernoulli-encode a (n_tokens, d_model) rate matrix.

    The optional positional embedding is added in the rate domain and the
    sum clipped to [0, 1] before encoding. Lane (token, dim) owns unit id
    token * d_model + dim. Returns (n_tokens, d_model, t_steps) uint8.
    """
    rates = np.asarray(batch_rates, dtype=np.float64)
    if rates.ndim != 2:
        raise ValueError(f"expected a (tokens, d_model) matrix, got {rates.shape}")
    if rates.min() < 0.0 or rates.max() > 1.0:
        raise ValueError("input rates must lie in [0, 1]")
    if pos_embed is not None:
        rates = np.clip(rates + pos_embed, 0.0, 1.0)
    n_tokens, d_model = rates.shape
    bank = StreamBank.from_units(global_seed, np.arange(n_tokens * d_model))
    flat = bernoulli_encode_batch(rates.reshape(-1), t_steps, bank)
    return flat.reshape(n_tokens, d_model, t_steps)


class Network:
    """A programmed spiking transformer ready to run.

    Crossbars are programmed (with the configured non-idealities) at
    construction; run() encodes inputs and streams them through the
    blocks. Calibrate with .calibrate(t_now) to apply GDC before runs.
    """

    def __init__(self, config: ModelConfig, layers: list[LayerWeights],
                 hw: AimcConfig, global_seed: int,
                 head: tuple[np.ndarray, int] | None = None,
                 pos_embed: np.ndarray | None = None):
        if len(layers) != config.depth:
            raise ValueError(f"got {len(layers)} layer weight sets for "
                             f"depth {config.depth}")
        self.config = config
        self.hw = hw
        self.global_seed = global_seed
        self.pos_embed = pos_embed
        cfg = config

        tile_counter = 0

        def make_layer(w, threshold):
            nonlocal tile_counter
            layer = AimcLayer(w, threshold, hw, global_seed,
                              tile_base=tile_counter)
            tile_counter += layer.plan.n_tiles
            return layer

        self.blocks = []
        for weights in layers:
            weights.validate(cfg)
            self.blocks.append({
                name: make_layer(getattr(weights, name), weights.threshold(name))
                for name in LayerWeights._FIELDS
            })
        self.head_layer = None
        if head is not None:
            w_head, thr_head = head
            if np.asarray(w_head).shape[1] != cfg.d_model:
                raise ValueError("head weights must consume d_model features")
            self.head_layer = make_layer(np.asarray(w_head), int(thr_head))

        span = units_per_head(SsaConfig(n_tokens=cfg.n_tokens, d_k=cfg.d_k))
        self._attn_base = [cfg.n_tokens * cfg.d_model + b * cfg.heads * span
                           for b in range(cfg.depth)]

    def all_layers(self):
        for block in self.blocks:
            yield from block.values()
        if self.head_layer is not None:
            yield self.head_layer

    def calibrate(self, t_now: float, probe_count: int = 8):
        """One shared GDC gain over every tile in the network."""
        from .aimc import gdc_calibrate
        tiles = [t for layer in self.all_layers() for t in layer.tile_list()]
        return gdc_calibrate(tiles, t_now, probe_count)

    def _merge(self, layer: AimcLayer, x: np.ndarray, residual: np.ndarray,
               t_now: float) -> np.ndarray:
        if self.config.residual_mode == "membrane_add":
            return layer.forward(x, t_now, residual=residual.astype(np.int64))
        return layer.forward(x, t_now) | residual

    def transformer_block(self, index: int, x: np.ndarray,
                          t_now: float = 0.0) -> tuple[np.ndarray, int]:
        """Run block `index` on (tokens, d_model, t_steps) spikes."""
        cfg = self.config
        block = self.blocks[index]
        q = block["w_q"].forward(x, t_now)
        k = block["w_k"].forward(x, t_now)
        v = block["w_v"].forward(x, t_now)
        attn, cycles = mhsa(
            q.transpose(1, 0, 2), k.transpose(1, 0, 2), v.transpose(1, 0, 2),
            heads=cfg.heads, global_seed=self.global_seed,
            base_unit=self._attn_base[index], causal=cfg.causal)
        u = self._merge(block["w_o"], attn.transpose(1, 0, 2), x, t_now)
        h = block["w_1"].forward(u, t_now)
        z = self._merge(block["w_2"], h, u, t_now)
        return z, cycles

    def run(self, batch_rates: np.ndarray, t_steps: int | None = None,
            t_now: float = 0.0, collect_trace: bool = False) -> InferenceResult:
        cfg = self.config
        t_steps = cfg.t_steps if t_steps is None else int(t_steps)
        batch_rates = np.asarray(batch_rates, dtype=np.float64)
        if batch_rates.shape != (cfg.n_tokens, cfg.d_model):
            raise ValueError(f"input shape {batch_rates.shape} does not match "
                             f"({cfg.n_tokens}, {cfg.d_model})")

        trace: list = []

        def record(stage, spikes):
            if collect_trace:
                trace.append({"stage": stage,
                              "mean_rate": float(spikes.mean()),
                              "per_token_rate": spikes.mean(axis=(1, 2)).round(6).tolist()})

        x = encode_inputs(batch_rates, t_steps, self.global_seed, self.pos_embed)
        record("encode", x)
        total_cycles = 0
        for b in range(cfg.depth):
            x, cycles = self.transformer_block(b, x, t_now)
            total_cycles += cycles
            record(f"block_{b}", x)

        class_scores = None
        if self.head_layer is not None:
            head_spikes = self.head_layer.forward(x, t_now)
            record("head", head_spikes)
            per_token = head_spikes.mean(axis=2)
            class_scores = per_token[-1] if cfg.causal else per_token.mean(axis=0)

        return InferenceResult(output_rates=x.mean(axis=2),
                               class_scores=class_scores,
                               trace=trace, cycles=total_cycles)


def run_inference(config: ModelConfig, layers: list[LayerWeights],
                  batch_rates: np.ndarray, seed: int, hw: AimcConfig,
                  t_now: float = 0.0,
                  head: tuple[np.ndarray, int] | None = None,
                  pos_embed: np.ndarray | None = None,
                  t_steps: int | None = None, calibrate: bool = False,
                  collect_trace: bool = False) -> InferenceResult:
    """Build, optionally calibrate, and run a network in one call."""
    net = Network(config, layers, hw, seed, head=head, pos_embed=pos_embed)
    if calibrate:
        net.calibrate(t_now)
    return net.run(batch_rates, t_steps=t_steps, t_now=t_now,
                   collect_trace=collect_trace)


def lif_attention_baseline(q: np.ndarray, k: np.ndarray, v: np.ndarray,
                           threshold_s: int = 1, threshold_a: int = 1,
                           leak: int = 1) -> np.ndarray:
    """Digital spiking attention baseline: LIF(LIF(Q K^T) V).

    Inputs are (d_k, n, t_steps) spike trains. Per step, the integer score
    matrix Q^T K drives an (n, n) LIF bank; the resulting score bits
    multiply V and drive a (d_k, n) LIF bank. Membranes persist across
    steps within a call. This is the attention used by the digital SNN
    baseline in the cost model; its inner products are masked additions,
    not AND-gate samples.
    """
    if q.shape != k.shape or q.shape != v.shape or q.ndim != 3:
        raise ValueError("q, k, v must share a (d_k, n, t) shape")
    d_k, n, t_steps = q.shape
    s_mem = np.zeros((n, n), dtype=np.int64)
    a_mem = np.zeros((d_k, n), dtype=np.int64)
    out = np.zeros((d_k, n, t_steps), dtype=np.uint8)
    for t in range(t_steps):
        s_int = q[:, :, t].astype(np.int64).T @ k[:, :, t].astype(np.int64)
        s_mem = (s_mem >> leak) + s_int
        s_bits = s_mem >= threshold_s
        s_mem[s_bits] = 0
        a_int = v[:, :, t].astype(np.int64) @ s_bits.astype(np.int64).T
        a_mem = (a_mem >> leak) + a_int
        a_bits = a_mem >= threshold_a
        a_mem[a_bits] = 0
        out[:, :, t] = a_bits
    return out
