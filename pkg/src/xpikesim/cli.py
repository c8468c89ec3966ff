"""Command-line entry point.

Subcommands:

    run        load a model directory, run spiking inference on a rates
               file, write an InferenceResult JSON (and optional JSONL
               trace of per-stage firing rates)
    cost       op counts, energy, and latency for a workload preset or
               config file, single implementation or all four
    calibrate  run global drift compensation against a model's crossbars
               at a simulated wall-clock time and write the record
    sweep-t    rerun inference across a list of spike-train lengths and
               report the gap to the Monte-Carlo reference per T
    selftest   fast built-in oracle checks, one pass/fail line each

All outputs are deterministic functions of (seed, hw config, t-now):
JSON is written with sorted keys and fixed indentation, so identical
invocations produce byte-identical files. XPIKESIM_THREADS caps engine
parallelism without changing results.

Exit codes: 0 success; 2 malformed manifest/config/input or bad usage;
3 input dimensions inconsistent with the model.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .aimc import AimcConfig, CalibrationRecord
from .costmodel import (
    IMPLEMENTATIONS,
    CostConfig,
    EnergyTable,
    build_report,
    compare_baselines,
)
from .manifest import ManifestError, load_manifest
from .model import Network
from .oracle import reference_network

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DIMENSION = 3


class CliError(Exception):
    """User-facing failure with an exit code."""

    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _dump_json(payload, path: "str | None") -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _load_hw(path: "str | None") -> AimcConfig:
    if path is None:
        return AimcConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return AimcConfig.from_dict(raw)
    except (OSError, json.JSONDecodeError, ValueError, TypeError) as exc:
        raise CliError(f"bad hardware config {path}: {exc}") from exc


def _load_bundle(model_dir: str):
    try:
        return load_manifest(model_dir)
    except ManifestError as exc:
        raise CliError(f"bad model manifest in {model_dir}: {exc}") from exc


def _load_inputs(path: str, config) -> np.ndarray:
    """Read a rates file: one (n_tokens, d_model) matrix or a list of
    them. Returns (batch, n_tokens, d_model)."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read input file {path}: {exc}") from exc
    try:
        rates = np.asarray(raw, dtype=np.float64)
    except ValueError as exc:
        raise CliError(f"input file {path} is not a numeric array: {exc}") from exc
    if rates.ndim == 2:
        rates = rates[None, :, :]
    if rates.ndim != 3:
        raise CliError(f"input must be one rate matrix or a list of them, "
                       f"got array of rank {rates.ndim}")
    if rates.shape[1:] != (config.n_tokens, config.d_model):
        raise CliError(
            f"input shape {rates.shape[1:]} does not match the model's "
            f"(n_tokens, d_model) = ({config.n_tokens}, {config.d_model})",
            code=EXIT_DIMENSION)
    if rates.min() < 0.0 or rates.max() > 1.0:
        raise CliError("input rates must lie in [0, 1]")
    return rates


def _record_payload(record: CalibrationRecord) -> dict:
    return {
        "alpha": record.alpha,
        "t_cal": record.t_cal,
        "probe_columns": np.asarray(record.probe_columns).tolist(),
        "ideal_sum": record.ideal_sum,
        "measured_sum": record.measured_sum,
    }


def cmd_run(args) -> int:
    bundle = _load_bundle(args.model)
    hw = _load_hw(args.hw)
    inputs = _load_inputs(args.input, bundle.config)
    t_steps = args.timesteps if args.timesteps is not None else bundle.config.t_steps
    if t_steps < 1:
        raise CliError(f"--timesteps must be positive, got {t_steps}")

    net = Network(bundle.config, bundle.layers, hw, args.seed,
                  head=bundle.head)
    results = []
    trace_lines = []
    for index, rates in enumerate(inputs):
        res = net.run(rates, t_steps=t_steps, t_now=args.t_now,
                      collect_trace=args.trace is not None)
        row = {
            "input_index": index,
            "output_rates": res.output_rates.tolist(),
            "class_scores": None if res.class_scores is None
            else res.class_scores.tolist(),
            "decision": res.decision,
            "cycles": res.cycles,
        }
        results.append(row)
        for record in res.trace:
            trace_lines.append({"input_index": index, **record})

    if args.trace is not None:
        with open(args.trace, "w", encoding="utf-8") as fh:
            for line in trace_lines:
                fh.write(json.dumps(line, sort_keys=True) + "\n")

    payload = {
        "format": "xpikesim-result",
        "seed": args.seed,
        "t_steps": t_steps,
        "t_now": args.t_now,
        "hw": hw.to_dict(),
        "results": results,
    }
    _dump_json(payload, args.out)
    return EXIT_OK


def _load_cost_config(spec: str) -> CostConfig:
    if os.path.exists(spec):
        try:
            with open(spec, encoding="utf-8") as fh:
                raw = json.load(fh)
            return CostConfig(**raw)
        except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
            raise CliError(f"bad cost config file {spec}: {exc}") from exc
    try:
        return CostConfig.preset(spec)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def cmd_cost(args) -> int:
    cfg = _load_cost_config(args.config)
    table = EnergyTable.preset() if args.table is None \
        else EnergyTable.from_json(args.table)

    if args.impl == "all":
        comparison = compare_baselines(cfg, table)
        payload = comparison.to_dict()
        if args.out is None:
            for impl in IMPLEMENTATIONS:
                sys.stdout.write(comparison.reports[impl].to_text() + "\n")
            sys.stdout.write("total energy ratios vs xpikeformer: "
                             + json.dumps(payload["ratio_vs_xpikeformer"],
                                          sort_keys=True) + "\n")
        else:
            _dump_json(payload, args.out)
    else:
        report = build_report(cfg, args.impl, table)
        if args.out is None:
            sys.stdout.write(report.to_text() + "\n")
        else:
            _dump_json(report.to_dict(), args.out)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    bundle = _load_bundle(args.model)
    hw = _load_hw(args.hw)
    net = Network(bundle.config, bundle.layers, hw, args.seed,
                  head=bundle.head)
    record = net.calibrate(args.t_now, probe_count=args.probe_count)
    _dump_json(_record_payload(record), args.out)
    return EXIT_OK


def cmd_sweep_t(args) -> int:
    if not args.timesteps:
        raise CliError("need at least one T value to sweep")
    if any(t < 1 for t in args.timesteps):
        raise CliError("all T values must be positive")
    bundle = _load_bundle(args.model)
    hw = _load_hw(args.hw)
    inputs = _load_inputs(args.input, bundle.config)

    # Monte-Carlo reference at a finer time base than any swept T; the
    # gap per row then tracks the simulator's own convergence.
    t_ref = 4 * max(args.timesteps)
    oracle_weights = _oracle_weights(bundle)
    references = [
        reference_network(oracle_weights, rates, t_steps=t_ref,
                          seed=args.seed + 1, causal=bundle.config.causal)
        for rates in inputs
    ]

    net = Network(bundle.config, bundle.layers, hw, args.seed,
                  head=bundle.head)
    rows = []
    for t_steps in args.timesteps:
        gaps = []
        for rates, ref in zip(inputs, references):
            res = net.run(rates, t_steps=t_steps, t_now=args.t_now)
            gaps.append(np.abs(res.output_rates - ref["output_rates"]))
        gaps = np.concatenate([g.reshape(-1) for g in gaps])
        rows.append({
            "t_steps": t_steps,
            "median_gap": float(np.median(gaps)),
            "max_gap": float(gaps.max()),
        })

    payload = {"format": "xpikesim-sweep", "seed": args.seed,
               "reference_t_steps": t_ref, "rows": rows}
    if args.out is None:
        sys.stdout.write(f"{'T':>8} {'median_gap':>12} {'max_gap':>10}\n")
        for row in rows:
            sys.stdout.write(f"{row['t_steps']:>8} {row['median_gap']:>12.5f} "
                             f"{row['max_gap']:>10.5f}\n")
    else:
        _dump_json(payload, args.out)
    return EXIT_OK


def _oracle_weights(bundle) -> list:
    weights = []
    for lw in bundle.layers:
        entry = {fld: (getattr(lw, fld), lw.threshold(fld))
                 for fld in type(lw)._FIELDS}
        entry["heads"] = bundle.config.heads
        weights.append(entry)
    if bundle.head is not None:
        weights.append({"head": bundle.head})
    return weights


def cmd_selftest(args) -> int:
    from . import oracle, spikecore
    from .aimc import CrossbarTile, DriftModel, NoiseModel, gdc_calibrate
    from .ssa import HeadActivations, SsaConfig, head_streams, ssa_attend

    checks = []

    def check(name, fn):
        checks.append((name, fn))

    def prn_bytes():
        stream = spikecore.LfsrStream(register=1)
        got = tuple(stream.next_byte() for _ in range(4))
        assert got == (0, 0, 0, 1), f"first draw {got}"

    def lif_trace():
        neuron = spikecore.LifNeuron(threshold=3, leak=1)
        spikes = [neuron.step(2) for _ in range(4)]
        assert spikes == [0, 1, 0, 1], f"trace {spikes}"

    def sampler_exact():
        for value in range(9):
            rate = oracle.brute_force_bernoulli(value, 8)
            assert rate == value / 8, f"value {value}: {rate}"

    def crossbar_oracle():
        rng = np.random.default_rng(7)
        w = rng.integers(-15, 16, size=(64, 64))
        tile = CrossbarTile(w, AimcConfig.ideal(tile_rows=64, tile_cols=64),
                            global_seed=3, tile_id=0)
        x = rng.integers(0, 2, size=(5, 64))
        want = (x @ w.T).astype(np.int64)
        got = tile.mvm_batch(x.astype(np.float64), t_now=0.0)
        assert np.array_equal(got, want), "ideal tile diverged from oracle"

    def gdc_uniform():
        cfg = AimcConfig(noise=NoiseModel(0.0, 0.0),
                         drift=DriftModel(nu_mean=float(-np.log(0.8) / np.log(5.0)),
                                          nu_sigma=0.0, t0=1.0))
        tile = CrossbarTile(np.full((4, 4), 5), cfg, global_seed=1, tile_id=0)
        record = gdc_calibrate([tile], t_now=4.0)
        assert abs(record.alpha - 1.25) < 1e-12, f"alpha {record.alpha}"

    def ssa_expectation():
        cfg = SsaConfig(n_tokens=2, d_k=2)
        rng = np.random.default_rng(11)
        q, k, v = (rng.integers(0, 2, size=(2, 2, 2048)).astype(np.uint8)
                   for _ in range(3))
        acts = HeadActivations(q=q, k=k, v=v)
        out = ssa_attend(acts, head_streams(5, 0, cfg))
        want = oracle.rate_attention(q.mean(axis=2), k.mean(axis=2),
                                     v.mean(axis=2))[1]
        gap = np.abs(out.mean(axis=2) - want).max()
        assert gap <= 0.06, f"gap {gap}"

    check("prn generator first bytes", prn_bytes)
    check("lif hand trace", lif_trace)
    check("integer sampler exact rates", sampler_exact)
    check("ideal crossbar equals integer oracle", crossbar_oracle)
    check("uniform drift calibration gain", gdc_uniform)
    check("attention expectation near rate oracle", ssa_expectation)

    failed = 0
    for name, fn in checks:
        try:
            fn()
        except AssertionError as exc:
            sys.stdout.write(f"FAIL - {name}: {exc}\n")
            failed += 1
        else:
            sys.stdout.write(f"ok - {name}\n")
    sys.stdout.write(f"{len(checks) - failed}/{len(checks)} self tests passed\n")
    return EXIT_OK if failed == 0 else 1


def _seed(text: str) -> int:
    value = int(text, 0)
    if value < 0:
        raise argparse.ArgumentTypeError("seed must be nonnegative")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xpikesim",
        description="Bit-accurate simulator and cost model for a hybrid "
                    "analog-digital spiking transformer accelerator.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run spiking inference on a model directory")
    run_p.add_argument("--model", required=True, help="model directory")
    run_p.add_argument("--input", required=True, help="JSON rates file")
    run_p.add_argument("--timesteps", type=int, default=None,
                       help="spike-train length (default: manifest value)")
    run_p.add_argument("--seed", type=_seed, default=1)
    run_p.add_argument("--hw", default=None, help="hardware config JSON")
    run_p.add_argument("--t-now", dest="t_now", type=float, default=0.0,
                       help="seconds since crossbar programming")
    run_p.add_argument("--trace", default=None, help="write JSONL firing-rate trace")
    run_p.add_argument("--out", default=None, help="result JSON (default stdout)")
    run_p.set_defaults(fn=cmd_run)

    cost_p = sub.add_parser("cost", help="analytical energy and latency report")
    cost_p.add_argument("--config", required=True,
                        help="workload preset name or CostConfig JSON file")
    cost_p.add_argument("--impl", default="all",
                        choices=list(IMPLEMENTATIONS) + ["all"])
    cost_p.add_argument("--table", default=None,
                        help="energy table JSON (default: paper-calib preset)")
    cost_p.add_argument("--out", default=None, help="report JSON (default stdout)")
    cost_p.set_defaults(fn=cmd_cost)

    cal_p = sub.add_parser("calibrate", help="global drift compensation")
    cal_p.add_argument("--model", required=True)
    cal_p.add_argument("--hw", default=None)
    cal_p.add_argument("--seed", type=_seed, default=1)
    cal_p.add_argument("--t-now", dest="t_now", type=float, default=0.0)
    cal_p.add_argument("--probe-count", type=int, default=8)
    cal_p.add_argument("--out", default=None,
                       help="calibration record JSON (default stdout)")
    cal_p.set_defaults(fn=cmd_calibrate)

    sweep_p = sub.add_parser("sweep-t", help="convergence table over T")
    sweep_p.add_argument("--model", required=True)
    sweep_p.add_argument("--input", required=True)
    sweep_p.add_argument("--timesteps", type=int, nargs="+", required=True)
    sweep_p.add_argument("--seed", type=_seed, default=1)
    sweep_p.add_argument("--hw", default=None)
    sweep_p.add_argument("--t-now", dest="t_now", type=float, default=0.0)
    sweep_p.add_argument("--out", default=None)
    sweep_p.set_defaults(fn=cmd_sweep_t)

    self_p = sub.add_parser("selftest", help="built-in oracle checks")
    self_p.set_defaults(fn=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.code
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
