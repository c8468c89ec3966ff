"""Analog in-memory compute: PCM crossbar tiles for binary-input MVMs.

A weight matrix W (out_dim, in_dim; 5-bit signed integers in [-w_max,
w_max]) is split by ceil-division into tile-sized blocks, zero padded at
the ragged edges. Each block is programmed onto one crossbar tile as a
differential pair of 4-bit conductance levels per weight:

    w >= 0  ->  (g_plus, g_minus) = (w, 0)
    w <  0  ->  (g_plus, g_minus) = (0, -w)

Crossbar rows carry inputs and columns carry outputs, so a tile stores the
transposed weight block. Spike inputs select rows; each column integrates
current, a per-column gain (from drift calibration) scales it, and the ADC
digitizes. Partial results for the same output block are then summed
digitally across the input blocks, and one LIF bank per output block
thresholds the total.

Non-idealities, all per device: programming noise N(0, prog_sigma) on the
target level (clamped at zero conductance), read noise N(0, read_sigma)
per access, and conductance drift g(dt) = g0 * ((dt + t0)/t0)^(-nu) with
nu ~ N(nu_mean, nu_sigma) clamped at zero. Read noise for a column read is
drawn with variance scaled by the number of selected rows, which matches
summing independent per-device draws. Every tile owns one RNG seeded from
(global_seed, tile_id), and draws in a fixed order: programming noise
(plus then minus array), drift exponents (plus then minus), then one draw
per subsequent read.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .spikecore import mix_seed

__all__ = [
    "NoiseModel",
    "DriftModel",
    "AimcConfig",
    "PcmDevice",
    "MappingPlan",
    "CalibrationRecord",
    "CrossbarTile",
    "AimcLayer",
    "build_mapping",
    "quantize_weights",
    "program_levels",
    "drift_factor",
    "round_half_away",
    "gdc_apply",
    "gdc_calibrate",
    "gdc_calibrate_per_tile",
    "calibrate_adc_step",
]


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian device noise, in conductance-level units."""

    prog_sigma: float = 0.45
    read_sigma: float = 0.15


@dataclass(frozen=True)
class DriftModel:
    """Power-law conductance drift with per-device exponents."""

    nu_mean: float = 0.05
    nu_sigma: float = 0.01
    t0: float = 1.0


@dataclass(frozen=True)
class AimcConfig:
    """Tile geometry, weight precision, and converter settings."""

    tile_rows: int = 128          # inputs per tile
    tile_cols: int = 128          # outputs per tile
    w_max: int = 15               # weights live in [-w_max, w_max]
    g_levels: int = 16            # conductance levels 0 .. g_levels-1
    adc_bits: int = 5
    adc_share: int = 8            # columns multiplexed onto one ADC
    adc_mode: str = "ideal"       # "ideal" or "quantized"
    adc_step: float = 4.0
    noise: NoiseModel = NoiseModel()
    drift: DriftModel = DriftModel()

    def __post_init__(self):
        if self.tile_rows < 1 or self.tile_cols < 1:
            raise ValueError("tile dimensions must be positive")
        if self.w_max != self.g_levels - 1:
            raise ValueError("w_max must equal the top conductance level")
        if self.adc_mode not in ("ideal", "quantized"):
            raise ValueError(f"unknown adc_mode {self.adc_mode!r}")
        if self.adc_step < 1 or not float(self.adc_step).is_integer():
            raise ValueError("adc_step must be a positive integer (the whole "
                             "digital path works in integer units)")

    @property
    def adc_min(self) -> int:
        return -(1 << (self.adc_bits - 1))

    @property
    def adc_max(self) -> int:
        return (1 << (self.adc_bits - 1)) - 1

    @classmethod
    def ideal(cls, **overrides) -> "AimcConfig":
        """Noise-free, drift-free configuration with an ideal ADC."""
        base = dict(noise=NoiseModel(0.0, 0.0),
                    drift=DriftModel(0.0, 0.0, 1.0), adc_mode="ideal")
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return {
            "tile_rows": self.tile_rows, "tile_cols": self.tile_cols,
            "w_max": self.w_max, "g_levels": self.g_levels,
            "adc_bits": self.adc_bits, "adc_share": self.adc_share,
            "adc_mode": self.adc_mode, "adc_step": self.adc_step,
            "prog_sigma": self.noise.prog_sigma,
            "read_sigma": self.noise.read_sigma,
            "drift_nu_mean": self.drift.nu_mean,
            "drift_nu_sigma": self.drift.nu_sigma,
            "drift_t0": self.drift.t0,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "AimcConfig":
        known = {"tile_rows", "tile_cols", "w_max", "g_levels", "adc_bits",
                 "adc_share", "adc_mode", "adc_step"}
        kwargs = {k: v for k, v in raw.items() if k in known}
        kwargs["noise"] = NoiseModel(
            prog_sigma=raw.get("prog_sigma", 0.45),
            read_sigma=raw.get("read_sigma", 0.15))
        kwargs["drift"] = DriftModel(
            nu_mean=raw.get("drift_nu_mean", 0.05),
            nu_sigma=raw.get("drift_nu_sigma", 0.01),
            t0=raw.get("drift_t0", 1.0))
        return cls(**kwargs)


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round halves away from zero (np.round rounds halves to even)."""
    x = np.asarray(x)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def quantize_weights(weights: np.ndarray, w_max: int = 15) -> tuple[np.ndarray, float]:
    """Scale float weights onto the signed integer grid [-w_max, w_max].

    Returns (int8 weights, scale) with scale = max |w| / w_max, so
    w_float ~ w_int * scale. A zero matrix maps to scale 1.0.
    """
    w = np.asarray(weights, dtype=np.float64)
    peak = float(np.abs(w).max()) if w.size else 0.0
    scale = peak / w_max if peak > 0 else 1.0
    w_int = np.clip(round_half_away(w / scale), -w_max, w_max).astype(np.int8)
    return w_int, scale


def program_levels(weights: np.ndarray, w_max: int = 15) -> tuple[np.ndarray, np.ndarray]:
    """Split signed integer weights into differential conductance levels."""
    w = np.asarray(weights, dtype=np.int64)
    if np.abs(w).max(initial=0) > w_max:
        raise ValueError(f"weights exceed [-{w_max}, {w_max}]")
    g_plus = np.where(w > 0, w, 0)
    g_minus = np.where(w < 0, -w, 0)
    return g_plus, g_minus


def drift_factor(nu, delta_t: float, t0: float = 1.0):
    """Multiplicative conductance decay after delta_t seconds."""
    if delta_t < 0:
        raise ValueError("delta_t must be non-negative")
    return ((delta_t + t0) / t0) ** -np.asarray(nu, dtype=np.float64)


@dataclass
class PcmDevice:
    """Single-device reference model; tiles use the vectorized equivalent."""

    target_level: int
    prog_sigma: float = 0.45
    read_sigma: float = 0.15
    nu: float = 0.05
    t0: float = 1.0
    g0: float = field(init=False, default=0.0)

    def program(self, rng: np.random.Generator) -> float:
        self.g0 = max(self.target_level + rng.normal(0.0, self.prog_sigma), 0.0) \
            if self.prog_sigma > 0 else float(self.target_level)
        return self.g0

    def read(self, delta_t: float, rng: np.random.Generator) -> float:
        g = self.g0 * float(drift_factor(self.nu, delta_t, self.t0))
        if self.read_sigma > 0:
            g += rng.normal(0.0, self.read_sigma)
        return g


@dataclass(frozen=True)
class MappingPlan:
    """Tile grid for one weight matrix.

    grid_rows output blocks by grid_cols input blocks. Each output block
    gets one neuron tile holding grid_cols synaptic arrays plus the column
    summation logic and a LIF bank.
    """

    out_dim: int
    in_dim: int
    tile_rows: int
    tile_cols: int
    grid_rows: int
    grid_cols: int

    @property
    def n_tiles(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def neuron_tiles(self) -> int:
        return self.grid_rows

    @property
    def arrays_per_neuron_tile(self) -> int:
        return self.grid_cols

    def out_span(self, block: int) -> tuple[int, int]:
        start = block * self.tile_cols
        return start, min(start + self.tile_cols, self.out_dim)

    def in_span(self, block: int) -> tuple[int, int]:
        start = block * self.tile_rows
        return start, min(start + self.tile_rows, self.in_dim)


def build_mapping(out_dim: int, in_dim: int, config: AimcConfig) -> MappingPlan:
    """Ceil-divide a weight matrix onto the tile grid."""
    if out_dim < 1 or in_dim < 1:
        raise ValueError("matrix dimensions must be positive")
    grid_rows = -(-out_dim // config.tile_cols)
    grid_cols = -(-in_dim // config.tile_rows)
    return MappingPlan(out_dim=out_dim, in_dim=in_dim,
                       tile_rows=config.tile_rows, tile_cols=config.tile_cols,
                       grid_rows=grid_rows, grid_cols=grid_cols)


@dataclass(frozen=True)
class CalibrationRecord:
    """Result of one global drift compensation pass on one tile."""

    alpha: float
    t_cal: float
    probe_columns: np.ndarray
    ideal_sum: float
    measured_sum: float


class CrossbarTile:
    """One crossbar storing a transposed weight block.

    `weights_block` is (out, in) as sliced from the layer matrix; the tile
    keeps it as (rows=in, cols=out) with zero padding up to the tile size.
    """

    def __init__(self, weights_block: np.ndarray, config: AimcConfig,
                 global_seed: int, tile_id: int):
        self.config = config
        self.tile_id = tile_id
        out_b, in_b = weights_block.shape
        if in_b > config.tile_rows or out_b > config.tile_cols:
            raise ValueError(f"block {weights_block.shape} exceeds tile "
                             f"({config.tile_cols}, {config.tile_rows})")
        slab = np.zeros((config.tile_rows, config.tile_cols), dtype=np.int64)
        slab[:in_b, :out_b] = np.asarray(weights_block, dtype=np.int64).T
        self.target = slab
        self.rng = np.random.default_rng(mix_seed(global_seed, tile_id))
        self.calibration: CalibrationRecord | None = None
        self._program()
        self._g_eff_cache: tuple[float, np.ndarray] | None = None

    def _program(self):
        noise, drift = self.config.noise, self.config.drift
        g_plus, g_minus = program_levels(self.target, self.config.w_max)
        shape = self.target.shape
        if noise.prog_sigma > 0:
            g_plus = np.maximum(g_plus + self.rng.normal(0, noise.prog_sigma, shape), 0.0)
            g_minus = np.maximum(g_minus + self.rng.normal(0, noise.prog_sigma, shape), 0.0)
        else:
            g_plus = g_plus.astype(np.float64)
            g_minus = g_minus.astype(np.float64)
        if drift.nu_sigma > 0:
            nu_plus = np.maximum(self.rng.normal(drift.nu_mean, drift.nu_sigma, shape), 0.0)
            nu_minus = np.maximum(self.rng.normal(drift.nu_mean, drift.nu_sigma, shape), 0.0)
        else:
            nu_plus = np.full(shape, drift.nu_mean)
            nu_minus = np.full(shape, drift.nu_mean)
        self.g_plus, self.g_minus = g_plus, g_minus
        self.nu_plus, self.nu_minus = nu_plus, nu_minus

    def g_effective(self, t_now: float) -> np.ndarray:
        """Differential conductance matrix after drift, cached per t_now."""
        if self._g_eff_cache is not None and self._g_eff_cache[0] == t_now:
            return self._g_eff_cache[1]
        t0 = self.config.drift.t0
        g = (self.g_plus * drift_factor(self.nu_plus, t_now, t0)
             - self.g_minus * drift_factor(self.nu_minus, t_now, t0))
        self._g_eff_cache = (t_now, g)
        return g

    def _currents(self, x: np.ndarray, t_now: float) -> np.ndarray:
        """Pre-ADC column currents for binary inputs x of shape (batch, rows)."""
        x = np.asarray(x, dtype=np.float64)
        currents = x @ self.g_effective(t_now)
        sigma = self.config.noise.read_sigma
        if sigma > 0:
            active = np.sqrt(x.sum(axis=1, keepdims=True))
            currents = currents + self.rng.standard_normal(currents.shape) * sigma * active
        return currents

    def _digitize(self, currents: np.ndarray) -> np.ndarray:
        cfg = self.config
        if self.calibration is not None:
            currents = currents * self.calibration.alpha
        if cfg.adc_mode == "ideal":
            return round_half_away(currents)
        codes = np.clip(round_half_away(currents / cfg.adc_step),
                        cfg.adc_min, cfg.adc_max)
        return codes * int(cfg.adc_step)

    def mvm_batch(self, x: np.ndarray, t_now: float = 0.0) -> np.ndarray:
        """Digitized MVM for (batch, tile_rows) binary inputs."""
        if x.ndim != 2 or x.shape[1] != self.config.tile_rows:
            raise ValueError(f"input shape {x.shape} does not match "
                             f"tile rows {self.config.tile_rows}")
        if x.size and not np.isin(x, (0, 1)).all():
            raise ValueError("crossbar inputs must be binary spike values")
        return self._digitize(self._currents(x, t_now))

    def mvm(self, x: np.ndarray, t_now: float = 0.0) -> np.ndarray:
        """Digitized MVM for one (tile_rows,) binary input vector."""
        return self.mvm_batch(x[None, :], t_now)[0]


def gdc_calibrate(tiles, t_now: float, probe_count: int = 8) -> CalibrationRecord:
    """Global drift compensation: estimate one shared gain for a tile set.

    Applies an all-ones probe vector to every tile and compares measured
    pre-ADC column currents against the ideal integer column sums (the
    programmed levels, no drift or noise). Columns are pooled across tiles
    and ranked by ideal column sum (descending): the largest sums give the
    gain estimate the best signal-to-noise ratio and avoid near-cancelled
    columns whose ratio is dominated by noise. alpha = sum(ideal) /
    sum(measured) over the probe columns. Drift shifts conductance
    globally, so one alpha serves all tiles; the record is stored on each
    so later reads are rescaled before digitization. Probe reads consume
    one read-noise draw per tile, in the given tile order. For a per-tile
    gain (experimental, for drift that varies across the chip) see
    gdc_calibrate_per_tile.
    """
    tiles = [tiles] if isinstance(tiles, CrossbarTile) else list(tiles)
    if not tiles:
        raise ValueError("need at least one tile to calibrate")
    measured_cols = []
    ideal_cols = []
    for tile in tiles:
        probe = np.ones((1, tile.config.tile_rows), dtype=np.float64)
        measured_cols.append(tile._currents(probe, t_now)[0])
        ideal_cols.append(tile.target.sum(axis=0).astype(np.float64))
    measured_cols = np.concatenate(measured_cols)
    ideal_cols = np.concatenate(ideal_cols)

    order = np.argsort(ideal_cols)[::-1]
    chosen = order[:max(1, min(probe_count, ideal_cols.size))]
    ideal_sum = float(ideal_cols[chosen].sum())
    measured_sum = float(measured_cols[chosen].sum())

    if measured_sum == 0.0:
        warnings.warn("zero probe current across calibration columns, "
                      "defaulting drift gain to 1", RuntimeWarning)
        alpha = 1.0
    else:
        alpha = ideal_sum / measured_sum

    record = CalibrationRecord(alpha=alpha, t_cal=t_now,
                               probe_columns=chosen.copy(),
                               ideal_sum=ideal_sum, measured_sum=measured_sum)
    for tile in tiles:
        tile.calibration = record
    return record


def gdc_calibrate_per_tile(tiles, t_now: float,
                           probe_count: int = 8) -> list[CalibrationRecord]:
    """Experimental per-tile variant of gdc_calibrate.

    Fits an independent gain for every tile, for scenarios where drift is
    not uniform across the chip. The shared-gain form is the default.
    """
    tiles = [tiles] if isinstance(tiles, CrossbarTile) else list(tiles)
    return [gdc_calibrate(tile, t_now, probe_count) for tile in tiles]


def gdc_apply(column_sums: np.ndarray, alpha: float) -> np.ndarray:
    """Rescale analog column sums by the calibration gain and digitize."""
    return round_half_away(np.asarray(column_sums, dtype=np.float64) * alpha)


def calibrate_adc_step(sample_currents: np.ndarray, adc_bits: int = 5,
                       coverage: float = 99.5) -> int:
    """Pick an integer ADC step so the coverage percentile of |currents|
    stays inside the converter range."""
    peak = float(np.percentile(np.abs(sample_currents), coverage))
    top_code = (1 << (adc_bits - 1)) - 1
    return max(int(np.ceil(peak / top_code)), 1)


class AimcLayer:
    """A full linear layer mapped onto a tile grid, followed by LIF neurons.

    weights is (out_dim, in_dim). Forward consumes (tokens, in_dim,
    t_steps) spike trains and returns the same layout with out_dim. Each
    token has an independent LIF membrane; the time loop is sequential (as
    the membrane requires), tokens evaluate in parallel within each step.
    """

    def __init__(self, weights: np.ndarray, threshold: int, config: AimcConfig,
                 global_seed: int, tile_base: int, leak: int = 1):
        weights = np.asarray(weights, dtype=np.int64)
        self.out_dim, self.in_dim = weights.shape
        self.threshold = int(threshold)
        self.leak = int(leak)
        if self.threshold < 1:
            raise ValueError("threshold must be >= 1")
        self.config = config
        self.plan = build_mapping(self.out_dim, self.in_dim, config)
        self.tiles: dict[tuple[int, int], CrossbarTile] = {}
        for r in range(self.plan.grid_rows):
            o0, o1 = self.plan.out_span(r)
            for c in range(self.plan.grid_cols):
                i0, i1 = self.plan.in_span(c)
                tile_id = tile_base + r * self.plan.grid_cols + c
                self.tiles[(r, c)] = CrossbarTile(
                    weights[o0:o1, i0:i1], config, global_seed, tile_id)

    def tile_list(self) -> list[CrossbarTile]:
        """Tiles in tile-id order."""
        return [self.tiles[(r, c)] for r in range(self.plan.grid_rows)
                for c in range(self.plan.grid_cols)]

    def calibrate(self, t_now: float, probe_count: int = 8,
                  per_tile: bool = False):
        """Run GDC across the layer: one shared gain by default."""
        if per_tile:
            return gdc_calibrate_per_tile(self.tile_list(), t_now, probe_count)
        return gdc_calibrate(self.tile_list(), t_now, probe_count)

    def drive(self, x_bits: np.ndarray, t_now: float = 0.0) -> np.ndarray:
        """Digitized pre-neuron sums for (batch, in_dim) binary inputs.

        Per output block, partial tile results are summed across input
        blocks (the neuron tile's column summation); blocks concatenate
        into the (batch, out_dim) drive.
        """
        if x_bits.ndim != 2 or x_bits.shape[1] != self.in_dim:
            raise ValueError(f"input shape {x_bits.shape} does not match "
                             f"in_dim {self.in_dim}")
        batch = x_bits.shape[0]
        padded = np.zeros((batch, self.plan.grid_cols * self.config.tile_rows),
                          dtype=np.int64)
        padded[:, :self.in_dim] = x_bits
        drive = np.zeros((batch, self.out_dim), dtype=np.int64)
        for r in range(self.plan.grid_rows):
            o0, o1 = self.plan.out_span(r)
            acc = np.zeros((batch, self.config.tile_cols), dtype=np.int64)
            for c in range(self.plan.grid_cols):
                i0 = c * self.config.tile_rows
                part = self.tiles[(r, c)].mvm_batch(
                    padded[:, i0:i0 + self.config.tile_rows], t_now)
                acc += np.asarray(part, dtype=np.int64)
            drive[:, o0:o1] = acc[:, :o1 - o0]
        return drive

    def forward(self, x_spikes: np.ndarray, t_now: float = 0.0,
                residual: np.ndarray | None = None) -> np.ndarray:
        """LIF-thresholded layer output for (tokens, in_dim, t_steps) spikes."""
        tokens, in_dim, t_steps = x_spikes.shape
        if in_dim != self.in_dim:
            raise ValueError(f"input dim {in_dim} does not match {self.in_dim}")
        out = np.zeros((tokens, self.out_dim, t_steps), dtype=np.uint8)
        potential = np.zeros((tokens, self.out_dim), dtype=np.int64)
        for t in range(t_steps):
            current = self.drive(x_spikes[:, :, t], t_now)
            if residual is not None:
                current = current + residual[:, :, t]
            v = (potential >> self.leak) + current
            fired = v >= self.threshold
            v[fired] = 0
            potential = v
            out[:, :, t] = fired
        return out
