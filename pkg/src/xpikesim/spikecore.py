"""Spike coding primitives: LFSR bitstreams, Bernoulli encoders, LIF neurons.

Conventions used throughout the package:

- A spike train is a 1-D numpy uint8 array of 0/1 values, one entry per
  encoding step. A rate is a float in [0, 1].
- Every stochastic consumer (encoder lane, sampling unit) owns a private
  32-bit LFSR stream seeded from (global_seed, unit_id). This makes results
  independent of scheduling or thread count: the byte a unit sees depends
  only on its seed and its own draw index.
- The LFSR advances 32 steps per draw and all four register bytes are used,
  so one register state yields four pseudo-random bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "CounterOverflowError",
    "DEFAULT_TAPS",
    "LfsrStream",
    "StreamBank",
    "lfsr_next_bytes",
    "bernoulli_encode",
    "bernoulli_encode_batch",
    "BernoulliEncoder",
    "bernoulli_sample_int",
    "LifNeuron",
    "lif_step",
    "LifArray",
    "stochastic_and",
    "rate_of",
    "mix_seed",
]

_M32 = 0xFFFFFFFF
_M64 = 0xFFFFFFFFFFFFFFFF

# Maximal-length taps for a 32-bit Fibonacci LFSR (polynomial exponents).
DEFAULT_TAPS = (32, 22, 2, 1)


class CounterOverflowError(ValueError):
    """Raised when an integer fed to a Bernoulli sampler exceeds its range."""


def taps_to_mask(taps) -> int:
    """Convert 1-indexed polynomial tap positions to a register bitmask."""
    mask = 0
    for pos in taps:
        if not 1 <= pos <= 32:
            raise ValueError(f"tap position {pos} outside 1..32")
        mask |= 1 << (pos - 1)
    return mask


DEFAULT_TAP_MASK = taps_to_mask(DEFAULT_TAPS)


def lfsr_step(register: int, tap_mask: int = DEFAULT_TAP_MASK) -> int:
    """Advance a Fibonacci LFSR by one bit step.

    The feedback bit is the XOR (parity) of the tapped register bits and is
    shifted into the LSB.
    """
    feedback = (register & tap_mask).bit_count() & 1
    return ((register << 1) & _M32) | feedback


@lru_cache(maxsize=8)
def _advance_tables(tap_mask: int):
    """Byte-indexed lookup tables for a 32-step LFSR advance.

    The 32-step advance is linear over GF(2), so it decomposes into four
    256-entry tables XORed together. Returns (python lists, numpy arrays);
    the list form is fastest for scalar streams, the array form vectorizes
    across many streams in lockstep.
    """
    basis = []
    for bit in range(32):
        reg = 1 << bit
        for _ in range(32):
            reg = lfsr_step(reg, tap_mask)
        basis.append(reg)
    tables = []
    for k in range(4):
        table = [0] * 256
        for value in range(1, 256):
            low = value & -value
            table[value] = table[value ^ low] ^ basis[8 * k + low.bit_length() - 1]
        tables.append(table)
    np_tables = tuple(np.asarray(t, dtype=np.uint32) for t in tables)
    return tuple(tables), np_tables


def _advance32(register: int, tables) -> int:
    t0, t1, t2, t3 = tables
    return (
        t0[register & 0xFF]
        ^ t1[(register >> 8) & 0xFF]
        ^ t2[(register >> 16) & 0xFF]
        ^ t3[register >> 24]
    )


def mix_seed(global_seed: int, unit_id: int) -> int:
    """Derive a nonzero 32-bit LFSR seed from (global_seed, unit_id).

    SplitMix64-style finalizer; distinct unit ids give uncorrelated seeds
    for the same global seed.
    """
    x = ((global_seed & _M64) ^ ((unit_id & _M64) * 0xD1B54A32D192ED03)) & _M64
    x = (x + 0x9E3779B97F4A7C15) & _M64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _M64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _M64
    x ^= x >> 31
    seed = x & _M32
    return seed if seed != 0 else 0x9E3779B9


def _mix_seed_np(global_seed: int, unit_ids: np.ndarray) -> np.ndarray:
    """Vectorized mix_seed for arrays of unit ids (bit-identical results)."""
    gs = np.uint64(global_seed & _M64)
    x = np.asarray(unit_ids, dtype=np.uint64) * np.uint64(0xD1B54A32D192ED03)
    x = gs ^ x
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x ^= x >> np.uint64(30)
    x = x * np.uint64(0xBF58476D1CE4E5B9)
    x ^= x >> np.uint64(27)
    x = x * np.uint64(0x94D049BB133111EB)
    x ^= x >> np.uint64(31)
    seeds = (x & np.uint64(_M32)).astype(np.uint32)
    seeds[seeds == 0] = np.uint32(0x9E3779B9)
    return seeds


class LfsrStream:
    """A 32-bit Fibonacci LFSR producing a byte stream, 4 bytes per advance.

    The stream is a single-owner state machine. Bytes are emitted in
    most-significant-first register order: a register of 0x00000001 yields
    the bytes (0x00, 0x00, 0x00, 0x01) before the first advance.

    Attributes:
        register: current 32-bit state (never zero)
        tap_mask: feedback tap bitmask
        unit_id:  owner id, recorded for diagnostics
        draws:    count of bytes consumed so far
    """

    __slots__ = ("register", "tap_mask", "unit_id", "draws", "_tables", "_pending")

    def __init__(self, register: int, tap_mask: int = DEFAULT_TAP_MASK, unit_id: int = 0):
        register = int(register) & _M32
        if register == 0:
            raise ValueError("LFSR register must be nonzero (all-zero state is absorbing)")
        if tap_mask == 0 or tap_mask & ~_M32:
            raise ValueError("tap mask must be a nonzero 32-bit value")
        self.register = register
        self.tap_mask = tap_mask
        self.unit_id = unit_id
        self.draws = 0
        self._tables = _advance_tables(tap_mask)[0]
        self._pending: list[int] = []

    @classmethod
    def from_seed(cls, global_seed: int, unit_id: int, tap_mask: int = DEFAULT_TAP_MASK) -> "LfsrStream":
        return cls(mix_seed(global_seed, unit_id), tap_mask, unit_id)

    def _refill(self) -> None:
        reg = self.register
        self._pending = [reg >> 24, (reg >> 16) & 0xFF, (reg >> 8) & 0xFF, reg & 0xFF]
        self.register = _advance32(reg, self._tables)

    def next_byte(self) -> int:
        if not self._pending:
            self._refill()
        self.draws += 1
        return self._pending.pop(0)

    def next_bytes(self) -> tuple[int, int, int, int]:
        """Return the next four stream bytes (one full register advance)."""
        return (self.next_byte(), self.next_byte(), self.next_byte(), self.next_byte())

    def take(self, count: int) -> np.ndarray:
        """Consume `count` bytes as a numpy uint8 array."""
        if count < 0:
            raise ValueError("byte count must be nonnegative")
        out = np.empty(count, dtype=np.uint8)
        pos = 0
        while self._pending and pos < count:
            out[pos] = self._pending.pop(0)
            pos += 1
        remaining = count - pos
        if remaining > 0:
            n_regs = (remaining + 3) // 4
            regs = np.empty(n_regs, dtype=np.uint32)
            reg = self.register
            tables = self._tables
            t0, t1, t2, t3 = tables
            for i in range(n_regs):
                regs[i] = reg
                reg = t0[reg & 0xFF] ^ t1[(reg >> 8) & 0xFF] ^ t2[(reg >> 16) & 0xFF] ^ t3[reg >> 24]
            self.register = reg
            stream = np.empty((n_regs, 4), dtype=np.uint8)
            stream[:, 0] = (regs >> np.uint32(24)).astype(np.uint8)
            stream[:, 1] = ((regs >> np.uint32(16)) & np.uint32(0xFF)).astype(np.uint8)
            stream[:, 2] = ((regs >> np.uint32(8)) & np.uint32(0xFF)).astype(np.uint8)
            stream[:, 3] = (regs & np.uint32(0xFF)).astype(np.uint8)
            flat = stream.reshape(-1)
            out[pos:] = flat[:remaining]
            self._pending = [int(b) for b in flat[remaining:]]
        self.draws += count
        return out


def lfsr_next_bytes(stream: LfsrStream) -> tuple[int, int, int, int]:
    """Draw the next four bytes from the stream (advances one register step)."""
    return stream.next_bytes()


class StreamBank:
    """Many per-unit LFSR streams advanced in lockstep (vectorized).

    Produces byte-identical sequences to the equivalent LfsrStream objects;
    used where a group of units (SAC array, encoder lanes) draws together.
    """

    __slots__ = ("registers", "unit_ids", "_np_tables", "_buf", "_bufpos", "draws")

    def __init__(self, registers: np.ndarray, unit_ids: np.ndarray, tap_mask: int = DEFAULT_TAP_MASK):
        registers = np.asarray(registers, dtype=np.uint32)
        if np.any(registers == 0):
            raise ValueError("LFSR register must be nonzero")
        self.registers = registers.copy()
        self.unit_ids = np.asarray(unit_ids)
        self._np_tables = _advance_tables(tap_mask)[1]
        self._buf = np.empty((registers.shape[0], 4), dtype=np.uint8)
        self._bufpos = 4
        self.draws = 0

    @classmethod
    def from_units(cls, global_seed: int, unit_ids, tap_mask: int = DEFAULT_TAP_MASK) -> "StreamBank":
        unit_ids = np.asarray(unit_ids, dtype=np.uint64)
        return cls(_mix_seed_np(global_seed, unit_ids), unit_ids, tap_mask)

    def __len__(self) -> int:
        return self.registers.shape[0]

    def _advance_all(self) -> None:
        t0, t1, t2, t3 = self._np_tables
        regs = self.registers
        self._buf[:, 0] = (regs >> np.uint32(24)).astype(np.uint8)
        self._buf[:, 1] = ((regs >> np.uint32(16)) & np.uint32(0xFF)).astype(np.uint8)
        self._buf[:, 2] = ((regs >> np.uint32(8)) & np.uint32(0xFF)).astype(np.uint8)
        self._buf[:, 3] = (regs & np.uint32(0xFF)).astype(np.uint8)
        self.registers = (
            t0[regs & np.uint32(0xFF)]
            ^ t1[(regs >> np.uint32(8)) & np.uint32(0xFF)]
            ^ t2[(regs >> np.uint32(16)) & np.uint32(0xFF)]
            ^ t3[regs >> np.uint32(24)]
        )
        self._bufpos = 0

    def take(self, count: int) -> np.ndarray:
        """Consume `count` bytes per unit; returns shape (units, count)."""
        units = self.registers.shape[0]
        out = np.empty((units, count), dtype=np.uint8)
        pos = 0
        while pos < count:
            if self._bufpos == 4:
                self._advance_all()
            grab = min(4 - self._bufpos, count - pos)
            out[:, pos:pos + grab] = self._buf[:, self._bufpos:self._bufpos + grab]
            self._bufpos += grab
            pos += grab
        self.draws += count
        return out

    def take_one(self) -> np.ndarray:
        return self.take(1)[:, 0]


def _rate_to_q(x: float) -> int:
    """Quantize a rate to the encoder's 0..256 comparison threshold."""
    q = int(np.floor(x * 256.0 + 0.5))
    return min(max(q, 0), 256)


def bernoulli_encode(x: float, t_steps: int, stream: LfsrStream) -> np.ndarray:
    """Encode a rate into a Bernoulli spike train of length t_steps.

    Each step compares q = round(x * 256) against one stream byte r and
    emits 1 iff q > r, so the spike probability is exactly q / 256.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"rate {x} outside [0, 1]")
    if t_steps < 0:
        raise ValueError("t_steps must be nonnegative")
    q = _rate_to_q(x)
    r = stream.take(t_steps)
    return (r < q).astype(np.uint8)


def bernoulli_encode_batch(rates: np.ndarray, t_steps: int, bank: StreamBank) -> np.ndarray:
    """Vectorized bernoulli_encode over a bank of per-lane streams.

    rates has shape (lanes,); returns (lanes, t_steps). Lane i consumes
    bytes from bank stream i, identically to a scalar per-lane encode.
    """
    rates = np.asarray(rates, dtype=np.float64)
    if rates.ndim != 1 or rates.shape[0] != len(bank):
        raise ValueError("rates must be 1-D with one entry per bank stream")
    if np.any(rates < 0.0) or np.any(rates > 1.0):
        raise ValueError("rates outside [0, 1]")
    q = np.floor(rates * 256.0 + 0.5).astype(np.int32)
    np.clip(q, 0, 256, out=q)
    r = bank.take(t_steps)
    return (r < q[:, None]).astype(np.uint8)


@dataclass
class BernoulliEncoder:
    """Comparator-based Bernoulli sampler for integers against i_max.

    i_max must be a power of two in 2..256; the sampler takes the low
    log2(i_max) bits of one stream byte as a uniform draw r and emits
    1 iff value > r, giving an exact probability of value / i_max.
    """

    i_max: int
    stream: LfsrStream

    def __post_init__(self):
        i_max = self.i_max
        if i_max < 2 or i_max > 256 or i_max & (i_max - 1):
            raise ValueError(f"i_max must be a power of two in 2..256, got {i_max}")

    def sample(self, value: int) -> int:
        if value < 0 or value > self.i_max:
            raise CounterOverflowError(
                f"counter overflow: value {value} outside 0..{self.i_max}"
            )
        r = self.stream.next_byte() & (self.i_max - 1)
        return 1 if value > r else 0


def bernoulli_sample_int(value: int, encoder: BernoulliEncoder) -> int:
    """Draw one Bernoulli(value / i_max) bit through the encoder."""
    return encoder.sample(value)


class LifNeuron:
    """Leaky integrate-and-fire neuron with shift-based leak.

    Per step: V <- (V >> leak) + I; if V >= threshold the neuron emits a
    spike and resets V to 0. leak=1 halves the retained potential (beta 0.5).
    Potential is kept as a python int, so it cannot overflow.
    """

    __slots__ = ("potential", "threshold", "leak")

    def __init__(self, threshold: int, leak: int = 1, potential: int = 0):
        if threshold < 1:
            raise ValueError("threshold must be a positive integer")
        if leak < 0:
            raise ValueError("leak shift must be nonnegative")
        self.potential = int(potential)
        self.threshold = int(threshold)
        self.leak = int(leak)

    def step(self, current: int) -> int:
        v = (self.potential >> self.leak) + int(current)
        if v >= self.threshold:
            self.potential = 0
            return 1
        self.potential = v
        return 0

    def reset(self) -> None:
        self.potential = 0


def lif_step(neuron: LifNeuron, current: int) -> tuple[LifNeuron, int]:
    """Advance a LIF neuron one step; returns (neuron, spike bit)."""
    return neuron, neuron.step(current)


class LifArray:
    """A bank of independent LIF neurons with shared threshold semantics.

    Potentials are int64; the constructor asserts that the configured
    fan-in cannot overflow that width even with maximal weights.
    """

    def __init__(self, shape, threshold, leak: int = 1, fan_in: int = 0):
        self.potential = np.zeros(shape, dtype=np.int64)
        threshold_arr = np.asarray(threshold, dtype=np.int64)
        if np.any(threshold_arr < 1):
            raise ValueError("thresholds must be positive integers")
        self.threshold = threshold_arr
        self.leak = int(leak)
        # worst-case per-step drive must fit with headroom in int64
        assert fan_in * 15 < (1 << 56), "fan-in too large for int64 potential"

    def step(self, current: np.ndarray) -> np.ndarray:
        v = (self.potential >> self.leak) + current
        fired = v >= self.threshold
        v[fired] = 0
        self.potential = v
        return fired.astype(np.uint8)

    def reset(self) -> None:
        self.potential[:] = 0


def stochastic_and(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Bitwise AND of two spike trains (rate product for independent trains)."""
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    if a.shape != b.shape:
        raise ValueError(f"spike train length mismatch: {a.shape} vs {b.shape}")
    return a & b

def rate_of(train: np.ndarray) -> float:
    """Empirical firing rate of a spike train (mean over steps)."""
    train = np.asarray(train)
    if train.size == 0:
        raise ValueError("cannot take the rate of an empty train")
    return float(np.mean(train))
