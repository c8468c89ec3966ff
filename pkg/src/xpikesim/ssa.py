"""Stochastic spiking attention (SSA).

Attention over spike trains without multipliers or softmax. At each time
step, for each head:

    S[i, j] ~ Bernoulli( (1/d_k) * sum_d Q[d, i] AND K[d, j] )
    A[d, n] ~ Bernoulli( (1/n)   * sum_j S[n, j] AND V[d, j] )

Both stages are integer comparators against uniform PRN bytes, so d_k and
the token count must be powers of two (the uniform draw is a masked LFSR
byte). Every sampling site is a dedicated unit with its own PRN stream;
unit ids are laid out per head as

    score unit (i, j):  head_base + i * n + j
    output unit (d, n): head_base + n * n + n_idx * d_k + d

Two evaluation paths produce bit-identical outputs: a vectorized
functional path (bulk einsum over all time steps) and a streaming path
that walks the tile dataflow cycle by cycle with bounded buffers. They
agree because each unit consumes exactly one byte per time step in draw
order, and comparator bytes are always consumed even when the causal mask
discards the sampled bit.
"""

from __future__ import annotations

import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .spikecore import StreamBank

__all__ = [
    "SsaConfig",
    "HeadActivations",
    "SsaStreams",
    "units_per_head",
    "head_streams",
    "ssa_attend",
    "ssa_attend_streaming",
    "mhsa",
    "thread_count",
]


def _is_power_of_two(value: int) -> bool:
    return value >= 1 and (value & (value - 1)) == 0


@dataclass(frozen=True)
class SsaConfig:
    """Shape parameters for one attention head.

    n_tokens: sequence length, power of two in [2, 128].
    d_k: head dimension, power of two in [2, 256].
    """

    n_tokens: int
    d_k: int

    def __post_init__(self):
        if not _is_power_of_two(self.n_tokens) or not 2 <= self.n_tokens <= 128:
            raise ValueError(
                f"n_tokens must be a power of two in [2, 128], got {self.n_tokens}")
        if not _is_power_of_two(self.d_k) or not 2 <= self.d_k <= 256:
            raise ValueError(
                f"d_k must be a power of two in [2, 256], got {self.d_k}")


def units_per_head(config: SsaConfig) -> int:
    """PRN units one head consumes: n^2 score units + n*d_k output units."""
    n = config.n_tokens
    return n * n + n * config.d_k


@dataclass
class HeadActivations:
    """Q/K/V spike trains for one head, each (d_k, n_tokens, t_steps) uint8."""

    q: np.ndarray
    k: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        shapes = {a.shape for a in (self.q, self.k, self.v)}
        if len(shapes) != 1 or self.q.ndim != 3:
            raise ValueError(f"q, k, v must share a (d_k, n, t) shape, got "
                             f"{[a.shape for a in (self.q, self.k, self.v)]}")
        for name in ("q", "k", "v"):
            arr = getattr(self, name)
            if arr.dtype != np.uint8:
                setattr(self, name, arr.astype(np.uint8))

    @property
    def d_k(self) -> int:
        return self.q.shape[0]

    @property
    def n_tokens(self) -> int:
        return self.q.shape[1]

    @property
    def t_steps(self) -> int:
        return self.q.shape[2]


@dataclass
class SsaStreams:
    """PRN byte sources for one head: one bank row per sampling unit."""

    score_bank: StreamBank
    out_bank: StreamBank
    config: SsaConfig


def head_streams(global_seed: int, head_base: int, config: SsaConfig) -> SsaStreams:
    """Build the per-unit stream banks for one head.

    head_base is the first unit id of the head's region; regions of
    distinct heads must not overlap (see units_per_head).
    """
    n, d_k = config.n_tokens, config.d_k
    score_units = head_base + np.arange(n * n, dtype=np.uint64)
    out_units = head_base + n * n + np.arange(n * d_k, dtype=np.uint64)
    return SsaStreams(
        score_bank=StreamBank.from_units(global_seed, score_units),
        out_bank=StreamBank.from_units(global_seed, out_units),
        config=config,
    )


def _check_inputs(acts: HeadActivations, streams: SsaStreams) -> SsaConfig:
    cfg = streams.config
    if acts.d_k != cfg.d_k or acts.n_tokens != cfg.n_tokens:
        raise ValueError(
            f"activations ({acts.d_k}, {acts.n_tokens}) do not match stream "
            f"config ({cfg.d_k}, {cfg.n_tokens})")
    return cfg


def ssa_attend(acts: HeadActivations, streams: SsaStreams,
               causal: bool = False) -> np.ndarray:
    """Functional SSA for one head. Returns (d_k, n, t_steps) output spikes.

    All time steps are evaluated at once: integer AND-counts by einsum,
    then one comparator byte per unit per step drawn in bulk.
    """
    cfg = _check_inputs(acts, streams)
    n, d_k, t_steps = cfg.n_tokens, cfg.d_k, acts.t_steps

    q = acts.q.astype(np.int64)
    k = acts.k.astype(np.int64)
    v = acts.v.astype(np.int64)

    # score stage: counts[i, j, t] = sum_d Q[d, i, t] AND K[d, j, t]
    s_counts = np.einsum("dit,djt->ijt", q, k)
    s_bytes = streams.score_bank.take(t_steps).reshape(n, n, t_steps)
    s_bits = (s_counts > (s_bytes & (d_k - 1))).astype(np.int64)
    if causal:
        s_bits *= np.tril(np.ones((n, n), dtype=np.int64))[:, :, None]

    # output stage: counts[d, n, t] = sum_j S[n, j, t] AND V[d, j, t]
    a_counts = np.einsum("njt,djt->dnt", s_bits, v)
    a_bytes = streams.out_bank.take(t_steps).reshape(n, d_k, t_steps)
    a_bytes = a_bytes.transpose(1, 0, 2)
    return (a_counts > (a_bytes & (n - 1))).astype(np.uint8)


def ssa_attend_streaming(acts: HeadActivations, streams: SsaStreams,
                         causal: bool = False) -> tuple[np.ndarray, int]:
    """Cycle-level SSA for one head. Returns (output spikes, cycle count).

    Models the tile dataflow directly: Q/K/V arrive bit-serially over the
    head dimension, one slice per cycle. Score counters accumulate for d_k
    cycles, then the comparators fire and the sampled S row latches while
    the buffered V slices drain through the output stage. The output stage
    for step t overlaps the score phase for step t+1, so a T-step train
    costs (T + 1) * d_k cycles: T score phases plus one drain phase.
    """
    cfg = _check_inputs(acts, streams)
    n, d_k, t_steps = cfg.n_tokens, cfg.d_k, acts.t_steps
    causal_mask = np.tril(np.ones((n, n), dtype=np.uint8))

    out = np.zeros((d_k, n, t_steps), dtype=np.uint8)
    cycles = 0
    for t in range(t_steps):
        # score phase: one AND-and-count cycle per head dimension
        counters = np.zeros((n, n), dtype=np.int64)
        v_fifo: deque[np.ndarray] = deque(maxlen=d_k)
        for c in range(d_k):
            counters += np.outer(acts.q[c, :, t], acts.k[c, :, t]).astype(np.int64)
            v_fifo.append(acts.v[c, :, t])
            cycles += 1

        # comparators: bytes are consumed whether or not the mask keeps the bit
        s_bytes = streams.score_bank.take_one().reshape(n, n)
        held_s = (counters > (s_bytes & (d_k - 1))).astype(np.uint8)
        if causal:
            held_s &= causal_mask

        # output phase (overlapped with the next score phase in hardware):
        # drain the V buffer against the held S row, one token per lane
        a_counts = np.zeros((d_k, n), dtype=np.int64)
        v_step = np.array(v_fifo)  # (d_k, n), the buffered slices
        for j in range(n):
            a_counts += np.outer(v_step[:, j], held_s[:, j]).astype(np.int64)
        a_bytes = streams.out_bank.take_one().reshape(n, d_k).T
        out[:, :, t] = (a_counts > (a_bytes & (n - 1))).astype(np.uint8)

    cycles += d_k  # drain of the final output phase
    return out, cycles


def thread_count() -> int:
    """Worker threads for head-parallel evaluation (XPIKESIM_THREADS, default 1)."""
    raw = os.environ.get("XPIKESIM_THREADS", "1")
    try:
        value = int(raw)
    except ValueError as exc:
        raise ValueError(f"XPIKESIM_THREADS must be an integer, got {raw!r}") from exc
    return max(1, value)


def mhsa(q: np.ndarray, k: np.ndarray, v: np.ndarray, heads: int,
         global_seed: int, base_unit: int, causal: bool = False,
         streaming: bool = False) -> tuple[np.ndarray, int]:
    """Multi-head SSA over full-width activations.

    q, k, v are (d_model, n, t_steps) spike arrays; d_model must divide
    evenly into `heads` slices. Heads run on a thread pool sized by
    XPIKESIM_THREADS and are reassembled in head order, so results do not
    depend on the worker count. Returns (concatenated (d_model, n, t)
    output, cycle count of one head; heads run in parallel tiles).
    """
    d_model, n, t_steps = q.shape
    if d_model % heads != 0:
        raise ValueError(f"d_model {d_model} not divisible by {heads} heads")
    d_k = d_model // heads
    cfg = SsaConfig(n_tokens=n, d_k=d_k)
    span = units_per_head(cfg)

    def run_head(h: int) -> tuple[np.ndarray, int]:
        sl = slice(h * d_k, (h + 1) * d_k)
        acts = HeadActivations(q=q[sl], k=k[sl], v=v[sl])
        streams = head_streams(global_seed, base_unit + h * span, cfg)
        if streaming:
            return ssa_attend_streaming(acts, streams, causal=causal)
        return ssa_attend(acts, streams, causal=causal), (t_steps + 1) * d_k

    workers = thread_count()
    if workers == 1:
        results = [run_head(h) for h in range(heads)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_head, range(heads)))

    out = np.concatenate([r[0] for r in results], axis=0)
    return out, results[0][1]
