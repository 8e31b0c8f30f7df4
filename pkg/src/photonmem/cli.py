"""Command-line interface: simulate, analyze, fit, magic.

Every command is deterministic given its inputs and seed, writes
delimited output (JSON/CSV) into --out-dir, and optionally renders
figures next to it with --plot.  Exit codes: 0 success, 2 usage,
3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import estimators, fitting, io
from .atomic import (
    find_magic_detuning,
    format_level_scheme,
    parse_level_scheme,
    raman_coupling_doppler,
    raman_coupling_static,
)
from .cesium import cs_d1_fwm_scheme
from .errors import DataError, EstimationError, NumericsError
from .model import ModelParams, WriteNoiseLine
from .simulate import ClickDataset, SimConfig, simulate, simulate_sweep

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

FIT_KINDS = ("write-spectrum", "read-spectrum", "noise-line", "decay-g2", "decay-eta", "efficiencies")


def _out_dir(args) -> Path:
    out = args.out_dir or os.environ.get("PHOTONMEM_OUT_DIR") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# simulate


def _sim_config_from_dict(cfg: dict, seed_override: int | None, base_dir: Path | None = None):
    if "model" not in cfg:
        raise DataError("simulate config must contain a 'model' section")
    try:
        if isinstance(cfg["model"], str):
            # flat key-value parameter file, shared with the fitters
            path = Path(cfg["model"])
            if not path.is_absolute() and base_dir is not None:
                path = base_dir / path
            try:
                model = ModelParams.from_config_text(path.read_text())
            except FileNotFoundError:
                raise DataError(f"model config not found: {path}") from None
            except ValueError as exc:
                raise DataError(f"{path}: {exc}") from None
        else:
            model = ModelParams(**cfg["model"])
    except TypeError as exc:
        raise DataError(f"bad model section: {exc}") from None
    sweep_delays = cfg.get("delays_us")
    include_no_write = bool(cfg.get("include_no_write", False))
    fields = {
        k: cfg[k]
        for k in (
            "n_sequences",
            "delay_us",
            "memory_tau_us",
            "read_window_us",
            "read_pulse_us",
            "envelope_decay_us",
            "write_pulse_present",
            "rng_seed",
            "time_tags",
        )
        if k in cfg
    }
    if "noise_growth" in cfg:
        from .simulate import NoiseGrowth

        fields["noise_growth"] = NoiseGrowth(**cfg["noise_growth"])
    if seed_override is not None:
        fields["rng_seed"] = seed_override
    if fields.get("memory_tau_us") is None:
        fields.pop("memory_tau_us", None)
    try:
        base = SimConfig(model=model, **fields)
    except (TypeError, ValueError) as exc:
        raise DataError(f"bad simulate config: {exc}") from None
    return base, sweep_delays, include_no_write


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    cfg = io.read_json(args.config)
    base, sweep_delays, include_no_write = _sim_config_from_dict(
        cfg, args.seed, base_dir=Path(args.config).parent
    )
    if sweep_delays:
        data = simulate_sweep(base, sweep_delays, include_no_write, n_workers=args.workers)
    else:
        data = simulate(base, n_workers=args.workers)
    dataset_path = out / "dataset.jsonl"
    io.write_dataset_jsonl(data, dataset_path)
    if args.format == "csv":
        io.write_dataset_csv(data, out / "dataset.csv")
    io.write_manifest(
        out / "dataset.manifest.json",
        config_echo=data.meta.get("config", {}),
        seed=base.rng_seed,
        extra={"groups": data.meta.get("groups", []), "n_records": len(data)},
    )
    print(f"wrote {len(data)} records to {dataset_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# analyze


def _stat_block(delay, window, name, result) -> dict:
    block = {"delay_us": delay, "window_us": window, "statistic": name}
    block.update(result.to_dict())
    return block


def analyze_dataset(data: ClickDataset, windows, bin_us: float | None = None) -> dict:
    """All estimators, grouped per delay and integration window."""
    blocks = []
    for delay in data.delays():
        group = data.select(delay_us=delay)
        has_write = bool(group.write_pulse.any())
        has_no_write = bool((~group.write_pulse).any())
        for window in windows:
            if has_write:
                sub = group.select(write_pulse=True)
                n = len(sub)
                reads = estimators._reads(sub, window)
                mean_w = sub.write_clicks.sum() / n
                mean_r = reads.sum() / n
                blocks.append(
                    _stat_block(
                        delay,
                        window,
                        "mean_write",
                        estimators.CorrelationResult(mean_w, math.sqrt(mean_w / n), n, "unconditional"),
                    )
                )
                blocks.append(
                    _stat_block(
                        delay,
                        window,
                        "mean_read",
                        estimators.CorrelationResult(mean_r, math.sqrt(mean_r / n), n, "unconditional"),
                    )
                )
                for name, fn in (
                    ("g2_cross", lambda: estimators.estimate_g2_cross(group, window)),
                    ("g2_ww", lambda: estimators.estimate_g2_unconditional(group, "write")),
                    ("g2_rr", lambda: estimators.estimate_g2_unconditional(group, "read", window)),
                    ("g2_rr_conditional", lambda: estimators.estimate_g2_conditional(group, window)),
                    ("cauchy_schwarz", lambda: estimators.cauchy_schwarz_from_data(group, window)),
                ):
                    try:
                        blocks.append(_stat_block(delay, window, name, fn()))
                    except EstimationError:
                        pass
                if has_no_write:
                    try:
                        blocks.append(
                            _stat_block(
                                delay,
                                window,
                                "retrieval_efficiency",
                                estimators.estimate_retrieval_efficiency(group, window),
                            )
                        )
                    except EstimationError:
                        pass
            if has_no_write:
                noise = group.select(write_pulse=False)
                n = len(noise)
                reads = estimators._reads(noise, window)
                mean_r = reads.sum() / n
                blocks.append(
                    _stat_block(
                        delay,
                        window,
                        "noise_mean_read",
                        estimators.CorrelationResult(mean_r, math.sqrt(mean_r / n), n, "no write"),
                    )
                )
                try:
                    blocks.append(
                        _stat_block(
                            delay,
                            window,
                            "noise_g2_rr",
                            estimators._g2_auto(reads, n, "no write"),
                        )
                    )
                except EstimationError:
                    pass
    result = {"schema": io.RESULTS_SCHEMA, "blocks": blocks}
    if bin_us and data.has_time_tags:
        hists = {}
        for conditioning in ("heralded", "no_write"):
            try:
                h = estimators.histogram_time_tags(data, bin_us, conditioning)
            except (EstimationError, ValueError):
                continue
            hists[conditioning] = {
                "bin_edges_us": h.bin_edges.tolist(),
                "rate": h.rate.tolist(),
                "std_err": h.std_err.tolist(),
                "n_sequences": h.n_sequences,
            }
        if hists:
            result["histograms"] = {"bin_us": bin_us, "curves": hists}
    return result


def cmd_analyze(args) -> int:
    out = _out_dir(args)
    data = io.read_dataset_jsonl(args.dataset, args.manifest)
    if args.window_us:
        windows = [None if w <= 0 else w for w in args.window_us]
    elif data.has_time_tags:
        cfg = data.meta.get("config") or {}
        windows = [cfg.get("read_window_us")]
    else:
        windows = [None]
    result = analyze_dataset(data, windows, args.bin_us)
    io.write_json(out / "results.json", result)
    cols = {
        "delay_us": [b["delay_us"] for b in result["blocks"]],
        "window_us": [(-1.0 if b["window_us"] is None else b["window_us"]) for b in result["blocks"]],
        "statistic": [b["statistic"] for b in result["blocks"]],
        "value": [b["value"] for b in result["blocks"]],
        "std_err": [b["std_err"] for b in result["blocks"]],
        "n": [b["n"] for b in result["blocks"]],
    }
    _write_table_csv(out / "results.csv", cols)
    if args.plot:
        from . import plots

        plots.save_delay_analysis_figure(out / "results.png", result["blocks"])
        if "histograms" in result:
            hists = {
                label: estimators.TagHistogram(
                    np.array(h["bin_edges_us"]), np.array(h["rate"]), np.array(h["std_err"]),
                    h["n_sequences"], label,
                )
                for label, h in result["histograms"]["curves"].items()
            }
            plots.save_histogram_figure(out / "histograms.png", hists, result["histograms"]["bin_us"])
    print(f"wrote {len(result['blocks'])} result blocks to {out / 'results.json'}")
    return EXIT_OK


def _write_table_csv(path, cols: dict) -> None:
    import csv as _csv

    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(list(cols))
        for row in zip(*cols.values()):
            writer.writerow(row)


# ---------------------------------------------------------------------------
# fit


def _load_xy_err(path, what: str):
    _, cols = io.read_curve_csv(path, min_columns=2)
    if len(cols) >= 3:
        return cols[0], cols[1], cols[2]
    return cols[0], cols[1], None


def cmd_fit(args) -> int:
    out = _out_dir(args)
    kind = args.kind
    plot = args.plot
    if kind == "write-spectrum":
        x, y, err = _load_xy_err(args.inputs[0], kind)
        scan = fitting.SpectrumScan(x, y, err_with_write=err)
        fit = fitting.fit_write_spectrum(scan, larmor_mhz=args.larmor_mhz)
        eta_w, eta_w_err = fitting.write_efficiency(fit)
        report = {
            "schema": io.FIT_SCHEMA,
            "kind": kind,
            "params": fit.to_dict(),
            "write_efficiency": {"value": eta_w, "std_err": eta_w_err},
        }
        model = fitting.write_spectrum_model(
            x, [fit.a_narr, fit.a_broad, fit.a_lkg, fit.a_bg, fit.fwhm_1, fit.fwhm_2, fit.fwhm_broad],
            fit.larmor_mhz,
        )
        curve = {
            "detuning_mhz": x,
            "counts": y,
            "err": err if err is not None else np.full_like(x, float("nan")),
            "model": model,
            "residual": y - model,
        }
        if plot:
            from . import plots

            plots.save_spectrum_figure(
                out / f"fit_{kind}.png", x, {"write": y}, {"fit": model}, fit.larmor_mhz
            )
    elif kind == "read-spectrum":
        _, cols = io.read_curve_csv(args.inputs[0], min_columns=3)
        if len(cols) >= 5:
            x, y_w, e_w, y_nw, e_nw = cols[:5]
        else:
            x, y_w, y_nw = cols[:3]
            e_w = e_nw = None
        scan = fitting.SpectrumScan(x, y_w, counts_no_write=y_nw, err_with_write=e_w, err_no_write=e_nw)
        fit = fitting.fit_read_spectrum(scan, larmor_mhz=args.larmor_mhz)
        report = {"schema": io.FIT_SCHEMA, "kind": kind, "params": fit.to_dict()}
        params = [
            fit.a_narr, fit.a_narr_no_write, fit.a_broad, fit.a_lkg, fit.a_bg,
            fit.fwhm_1, fit.fwhm_2, fit.fwhm_broad,
        ]
        m_w, m_nw = fitting.read_spectrum_model(x, params, fit.larmor_mhz)
        curve = {
            "detuning_mhz": x,
            "counts_with_write": y_w,
            "counts_no_write": y_nw,
            "model_with_write": m_w,
            "model_no_write": m_nw,
            "residual_with_write": y_w - m_w,
            "residual_no_write": y_nw - m_nw,
        }
        if plot:
            from . import plots

            plots.save_spectrum_figure(
                out / f"fit_{kind}.png",
                x,
                {"with write": y_w, "no write": y_nw},
                {"fit (write)": m_w, "fit (no write)": m_nw},
                fit.larmor_mhz,
            )
    elif kind == "noise-line":
        x, y, err = _load_xy_err(args.inputs[0], kind)
        fit = fitting.fit_noise_line(x, y, err)
        report = {"schema": io.FIT_SCHEMA, "kind": kind, "params": fit.to_dict()}
        model = fit.line(x)
        curve = {
            "n_w_mean": x,
            "noise": y,
            "err": err if err is not None else np.full_like(x, float("nan")),
            "model": model,
            "residual": y - model,
        }
        if plot:
            from . import plots

            plots.save_curve_figure(
                out / f"fit_{kind}.png", x, y, err, model,
                xlabel="mean write counts", ylabel="write noise counts",
            )
    elif kind in ("decay-g2", "decay-eta"):
        x, y, err = _load_xy_err(args.inputs[0], kind)
        model_name = "g2_offset1" if kind == "decay-g2" else "plain_exp"
        fit = fitting.fit_memory_decay(x, y, err, model=model_name)
        report = {"schema": io.FIT_SCHEMA, "kind": kind, "params": fit.to_dict()}
        crossings = {}
        if kind == "decay-g2":
            for name, threshold in (("bell_g2_5p7", args.bell_threshold), ("nonclassical_g2_2", 2.0)):
                try:
                    crossings[name] = fitting.threshold_crossing(fit, threshold)
                except NumericsError:
                    crossings[name] = None
            if args.g2_ww is not None and args.g2_rr is not None:
                try:
                    crossings["cauchy_schwarz_1"] = fitting.threshold_crossing(
                        fit, 1.0, combine=(args.g2_ww, args.g2_rr)
                    )
                except NumericsError:
                    crossings["cauchy_schwarz_1"] = None
        if crossings:
            report["crossings_us"] = crossings
        model = fit(x)
        curve = {
            "delay_us": x,
            "value": y,
            "err": err if err is not None else np.full_like(x, float("nan")),
            "model": model,
            "residual": y - model,
        }
        if plot:
            from . import plots

            lines = [(args.bell_threshold, "Bell limit")] if kind == "decay-g2" else []
            plots.save_decay_figure(
                out / f"fit_{kind}.png", x, y,
                err if err is not None else None, fit, lines,
            )
    elif kind == "efficiencies":
        spec = io.read_json(args.inputs[0])
        try:
            curves = {}
            base = Path(args.inputs[0]).parent
            for name, rel in spec["curves"].items():
                path = Path(rel)
                if not path.is_absolute():
                    path = base / path
                curves[name] = _load_xy_err(path, name)
            line = WriteNoiseLine(**spec["noise_line"])
            lambda_b = float(spec["lambda_b"])
            g2_bb = float(spec["g2_bb"])
            g2_aa = float(spec.get("g2_aa", 1.0))
        except (KeyError, TypeError) as exc:
            raise DataError(f"bad efficiencies config: missing {exc}") from None
        fit = fitting.fit_detection_efficiencies(curves, line, lambda_b, g2_bb, g2_aa)
        report = {"schema": io.FIT_SCHEMA, "kind": kind, "params": fit.to_dict()}
        x = curves[next(iter(curves))][0]
        g2, eta_r, mean_r = fitting._model_curves(
            np.asarray(x, dtype=float), fit.eta_x, fit.eta_y, line, lambda_b, g2_bb, g2_aa
        )
        curve = {"n_w_mean": x, "model_g2_cross": g2, "model_retrieval_efficiency": eta_r, "model_mean_read": mean_r}
        if plot:
            from . import plots

            for name, (cx, cy, cerr) in curves.items():
                pred = {"g2_cross": g2, "retrieval_efficiency": eta_r, "mean_read": mean_r}[name]
                plots.save_curve_figure(
                    out / f"fit_{kind}_{name}.png", cx, cy, cerr, pred,
                    xlabel="mean write counts", ylabel=name, logx=True,
                )
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(f"unknown fit kind {kind}")

    io.write_json(out / f"fit_{kind}.json", report)
    io.write_curve_csv(out / f"fit_{kind}_curve.csv", curve)
    print(f"wrote fit report to {out / f'fit_{kind}.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# magic detuning


def cmd_magic(args) -> int:
    out = _out_dir(args)
    if args.scheme == "cesium":
        scheme = cs_d1_fwm_scheme(temperature_c=args.temperature_c)
    else:
        try:
            text = Path(args.scheme).read_text()
        except FileNotFoundError:
            raise DataError(f"scheme file not found: {args.scheme}") from None
        scheme = parse_level_scheme(text)
    lo, hi = args.range_mhz
    if not hi > lo:
        raise ValueError("--range requires lo < hi")
    result = find_magic_detuning(
        scheme, (lo, hi), profile=args.profile, grid_mhz=args.grid_mhz
    )
    coupling = raman_coupling_doppler if args.profile == "doppler" else raman_coupling_static
    grid = np.linspace(lo, hi, max(int(round((hi - lo) / args.grid_mhz)), 8) + 1)
    values = coupling(scheme, grid)
    io.write_curve_csv(
        out / "coupling.csv",
        {
            "detuning_mhz": grid,
            "re": values.real,
            "im": values.imag,
            "abs": np.abs(values),
        },
    )
    report = {
        "schema": io.FIT_SCHEMA,
        "kind": "magic-detuning",
        "scheme": {
            "offsets_mhz": list(scheme.offsets_mhz),
            "couplings": list(scheme.couplings),
            "gamma_mhz": scheme.gamma_mhz,
            "doppler_mhz": scheme.doppler_mhz,
        },
        "result": result.to_dict(),
    }
    io.write_json(out / "magic.json", report)
    if args.plot:
        from . import plots

        plots.save_coupling_figure(out / "coupling.png", grid, np.abs(values), result)
    flag = "outside" if result.outside_doppler_width else "inside"
    print(
        f"coupling minimum at {result.detuning_mhz:.3f} MHz "
        f"(|R| = {result.coupling_abs:.3e}), {flag} the Doppler width"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="photonmem",
        description="Heralded photon source with memory: simulate, analyze, fit, magic detuning.",
    )
    parser.add_argument("--out-dir", default=None, help="output directory (default: $PHOTONMEM_OUT_DIR or .)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a synthetic click dataset")
    p_sim.add_argument("--config", required=True, help="JSON simulation config")
    p_sim.add_argument("--seed", type=int, default=None, help="override the config RNG seed")
    p_sim.add_argument("--format", choices=("json", "csv"), default="json",
                       help="also write a counts-only CSV with 'csv'")
    p_sim.add_argument("--workers", type=int, default=1, help="parallel chunk workers")
    p_sim.set_defaults(func=cmd_simulate)

    p_an = sub.add_parser("analyze", help="estimate statistics from a dataset")
    p_an.add_argument("dataset", help="JSONL dataset path")
    p_an.add_argument("--manifest", default=None, help="manifest path (default: <dataset>.manifest.json)")
    p_an.add_argument("--window-us", type=float, action="append", default=None,
                      help="read integration window; <= 0 means full pulse; repeatable")
    p_an.add_argument("--bin-us", type=float, default=7.0, help="time-tag histogram binning")
    p_an.add_argument("--plot", action="store_true", help="render figures next to the output")
    p_an.set_defaults(func=cmd_analyze)

    p_fit = sub.add_parser("fit", help="fit a model curve to data files")
    p_fit.add_argument("kind", choices=FIT_KINDS)
    p_fit.add_argument("inputs", nargs="+", help="input CSV/JSON file(s)")
    p_fit.add_argument("--larmor-mhz", type=float, default=fitting.DEFAULT_LARMOR_MHZ)
    p_fit.add_argument("--bell-threshold", type=float, default=5.7)
    p_fit.add_argument("--g2-ww", type=float, default=None, help="averaged write autocorrelation")
    p_fit.add_argument("--g2-rr", type=float, default=None, help="averaged read autocorrelation")
    p_fit.add_argument("--plot", action="store_true")
    p_fit.set_defaults(func=cmd_fit)

    p_magic = sub.add_parser("magic", help="coupling-versus-detuning table and its minimum")
    p_magic.add_argument("--scheme", required=True, help="level-scheme file, or 'cesium'")
    p_magic.add_argument("--range", dest="range_mhz", type=float, nargs=2, required=True,
                         metavar=("LO", "HI"), help="search range in MHz")
    p_magic.add_argument("--grid-mhz", type=float, default=1.0)
    p_magic.add_argument("--profile", choices=("doppler", "static"), default="doppler")
    p_magic.add_argument("--temperature-c", type=float, default=43.0)
    p_magic.add_argument("--plot", action="store_true")
    p_magic.set_defaults(func=cmd_magic)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"invalid arguments: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
