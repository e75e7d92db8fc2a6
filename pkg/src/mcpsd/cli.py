"""Batch command line: ``mcpsd {gen,sample,psd,pattern,roc,bench,compare}``.

Exit codes: 0 success, 2 configuration error, 3 failed precondition,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, evaluation, experiments, io, multicoset
from .baselines import IllConditioned, RankDeficient
from .config import ConfigError, ExperimentConfig, load_config
from .fastpsd import NumericalFailure

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3
EXIT_NUMERICAL = 4


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, FileNotFoundError)):
        return EXIT_CONFIG
    if isinstance(exc, (NumericalFailure, ArithmeticError, IllConditioned, RankDeficient)):
        return EXIT_NUMERICAL
    if isinstance(exc, ValueError):
        return EXIT_PRECONDITION
    raise exc


# ---------------------------------------------------------------- helpers


def _overrides(args) -> dict:
    return {
        "seed": args.seed,
        "output_dir": args.out,
        "corr_fft_len": _parse_fft_len(args.fft_len),
    }


def _parse_fft_len(value):
    if value is None or value == "exact":
        return value
    try:
        n = int(value)
    except ValueError:
        raise ConfigError(f"--fft-len must be an integer or 'exact', got {value!r}") from None
    if n < 1:
        raise ConfigError("--fft-len must be positive")
    return n


def _require_config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError(f"'{args.command}' needs --config")
    return load_config(args.config, _overrides(args))


def _header(cfg: ExperimentConfig, **extra) -> dict:
    h = {
        "config_hash": io.config_hash({"config": cfg.raw, "fft_len": cfg.settings.corr_fft_len}),
        "code_version": __version__,
    }
    h.update(extra)
    return h


def _fmt_num(v) -> str:
    if v is None:
        return "none"
    return f"{v:g}".replace("-", "m").replace(".", "p")


def _cell_name(prefix, method, pattern, snr, duration, seed) -> str:
    return (
        f"{prefix}_{method}_N{pattern.n_factor}M{pattern.m}_snr{_fmt_num(snr)}"
        f"_dur{_fmt_num(duration)}_seed{seed}.csv"
    )


def _noise_cells(cfg: ExperimentConfig):
    """``(noise_index, snr, duration)``; the index is shared by every method."""
    pairs = itertools.product(cfg.snr_list, cfg.require_durations())
    return [(i, snr, dur) for i, (snr, dur) in enumerate(pairs)]


def _sweep_cells(cfg: ExperimentConfig):
    cells = []
    for seed in cfg.seeds:
        for noise_index, snr, dur in _noise_cells(cfg):
            for pattern in cfg.patterns:
                for method in cfg.methods:
                    cells.append(
                        {
                            "method": method.value,
                            "pattern": pattern,
                            "snr_db": snr,
                            "duration_s": dur,
                            "seed": seed,
                            "noise_index": noise_index,
                        }
                    )
    return cells


# ---------------------------------------------------------------- commands


def cmd_gen(args) -> int:
    cfg = _require_config(args)
    longest = max(cfg.require_durations())
    for seed in cfg.seeds:
        for noise_index, snr, dur in _noise_cells(cfg):
            clean, x = experiments.cell_signal(
                cfg.scenario, snr, dur, seed, noise_index, longest
            )
            name = f"signal_snr{_fmt_num(snr)}_dur{_fmt_num(dur)}_seed{seed}.f64"
            path = io.write_signal(cfg.output_dir / name, _with_provenance(x, cfg))
            realized = experiments.realized_snr_db(clean, x)
            print(f"{path}: N_t={x.samples.size} realized_snr_db={realized:.4f}")
    return EXIT_OK


def _with_provenance(x, cfg):
    from .siggen import NyquistSignal

    return NyquistSignal(x.samples, x.fs_hz, {"components": cfg.scenario.to_list()}, x.noise_var)


def cmd_sample(args) -> int:
    if not args.signal:
        raise ConfigError("'sample' needs --signal")
    x = io.read_signal(args.signal)
    if args.pattern_file:
        pattern = io.read_pattern(args.pattern_file)
    else:
        pattern = _require_config(args).pattern
    L = args.L or x.samples.size // pattern.n_factor
    y = multicoset.sample(x, pattern, L)
    out = Path(args.out or ".") / "coset_samples.f64"
    out.parent.mkdir(parents=True, exist_ok=True)
    np.asarray(y.y, dtype="<f8").tofile(out)
    side = {
        "N": pattern.n_factor,
        "delays": list(pattern.delays),
        "M": pattern.m,
        "L": y.L,
        "fs_channel_hz": y.fs_channel_hz,
        "fs_hz": y.fs_hz,
        "layout": "row-major M x L",
    }
    Path(str(out) + ".json").write_text(json.dumps(side, indent=2))
    print(f"{out}: M={pattern.m} L={y.L} fs_channel_hz={y.fs_channel_hz:g}")
    return EXIT_OK


def cmd_psd(args) -> int:
    cfg = _require_config(args)
    s = cfg.settings
    written = []
    if args.signal:
        x = io.read_signal(args.signal)
        inputs = [(x, {"signal_file": str(args.signal)}, cfg.seeds[0])]
    else:
        longest = max(cfg.require_durations())
        inputs = []
        for seed in cfg.seeds:
            for noise_index, snr, dur in _noise_cells(cfg):
                _, x = experiments.cell_signal(cfg.scenario, snr, dur, seed, noise_index, longest)
                inputs.append((x, {"snr_db": snr, "duration_s": dur}, seed))
    for x, info, seed in inputs:
        for pattern in cfg.patterns:
            for method in cfg.methods:
                psd, est, elapsed = experiments.estimate(method, x, pattern, s, seed)
                name = _cell_name(
                    "psd", method.value, pattern, info.get("snr_db"),
                    x.samples.size / x.fs_hz, seed,
                )
                head = _header(cfg, seed=seed, **info, wall_time_s=elapsed)
                written.append(io.write_psd_csv(cfg.output_dir / name, psd, head))
                if args.autocorr and est is not None:
                    io.write_autocorr_csv(
                        cfg.output_dir / name.replace("psd_", "autocorr_", 1),
                        est, s.truncation, head,
                    )
    for path in written:
        print(path)
    return EXIT_OK


def cmd_pattern(args) -> int:
    if args.N is None:
        raise ConfigError("'pattern' needs --N")
    if args.delays is not None:
        delays = [int(v) for v in args.delays.split(",") if v.strip()]
    elif args.delays_s is not None:
        if args.fs is None:
            raise ConfigError("--delays-s needs --fs")
        delays = multicoset.delays_from_seconds(
            [float(v) for v in args.delays_s.split(",") if v.strip()], args.fs
        )
    elif args.M is not None:
        found = multicoset.search_pattern(args.N, args.M, args.max_n)
        if found is None:
            print(f"no valid pattern exists for N={args.N}, M={args.M}")
            return EXIT_PRECONDITION
        delays = list(found.delays)
        print(f"pattern N={args.N} delays={delays}")
    else:
        raise ConfigError("'pattern' needs --delays, --delays-s or --M")
    report = multicoset.validate_pattern(args.N, delays, allow_wrap=not args.linear)
    print(report.table())
    kind = "linear" if args.linear else "circular"
    if report.is_circular_ruler:
        print(f"VALID {kind} sparse ruler")
        if args.out:
            path = io.write_pattern(
                Path(args.out) / "pattern.json", multicoset.MulticosetPattern(args.N, delays)
            )
            print(path)
        return EXIT_OK
    print(f"INVALID {kind} sparse ruler: missing residues {report.missing}")
    return EXIT_PRECONDITION


def _run_scored_cell(job):
    """Worker body: one cell in, files written, summary row out."""
    cfg, cell, kind = job
    try:
        res = experiments.run_cell(
            cfg.scenario,
            cell["method"],
            cell["pattern"],
            cfg.settings,
            snr_db=cell["snr_db"],
            duration_s=cell["duration_s"],
            seed=cell["seed"],
            noise_index=cell["noise_index"],
            signal_duration_s=max(cfg.require_durations()),
        )
    except Exception as exc:  # recorded per cell, the sweep continues
        code = _exit_code(exc)
        return {**_cell_row(cell), "status": f"error {code}: {exc}"}, code
    head = _header(
        cfg, seed=cell["seed"], snr_db=cell["snr_db"], duration_s=cell["duration_s"],
        nmse=res.nmse, auc=res.auc, wall_time_s=res.wall_time_s,
    )
    name = _cell_name(kind, cell["method"], cell["pattern"], cell["snr_db"],
                      cell["duration_s"], cell["seed"])
    if kind == "roc":
        io.write_roc_csv(cfg.output_dir / name, res.roc, head)
    else:
        io.write_psd_csv(cfg.output_dir / name, res.psd, head)
    row = {**_cell_row(cell), **res.summary_row(), "status": "ok"}
    return row, EXIT_OK


def _cell_row(cell) -> dict:
    p = cell["pattern"]
    return {
        "method": cell["method"], "N": p.n_factor, "M": p.m, "snr_db": cell["snr_db"],
        "duration_s": cell["duration_s"], "seed": cell["seed"],
        "nmse": None, "auc": None, "wall_time_s": None, "realized_snr_db": None,
    }


SUMMARY_COLUMNS = (
    "method", "N", "M", "snr_db", "duration_s", "seed",
    "nmse", "auc", "wall_time_s", "realized_snr_db", "status",
)


def _sweep(args, kind: str) -> int:
    cfg = _require_config(args)
    cells = _sweep_cells(cfg)
    jobs = [(cfg, c, kind) for c in cells]
    workers = max(1, int(args.threads or 1))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_run_scored_cell, jobs))
    else:
        results = [_run_scored_cell(j) for j in jobs]
    if kind == "psd":
        truth = experiments.truth_psd(cfg.scenario, 0.0, cfg.settings)
        io.write_psd_csv(cfg.output_dir / "truth_noiseless.csv", truth, _header(cfg))
    rows = [[r.get(c) for c in SUMMARY_COLUMNS] for r, _ in results]
    summary = cfg.output_dir / ("roc_summary.csv" if kind == "roc" else "compare.csv")
    io.write_csv(summary, SUMMARY_COLUMNS, rows, _header(cfg))
    for r, _ in results:
        auc = "nan" if r["auc"] is None else f"{r['auc']:.4f}"
        nmse = "nan" if r["nmse"] is None else f"{r['nmse']:.4g}"
        print(f"{r['method']:>12} N={r['N']:<3} snr={r['snr_db']} dur={r['duration_s']} "
              f"seed={r['seed']} nmse={nmse} auc={auc} {r['status']}")
    print(summary)
    failures = [code for _, code in results if code]
    return failures[0] if failures else EXIT_OK


def cmd_roc(args) -> int:
    return _sweep(args, "roc")


def cmd_compare(args) -> int:
    return _sweep(args, "psd")


def cmd_bench(args) -> int:
    cfg = _require_config(args)
    if not cfg.bench:
        raise ConfigError("'bench' needs a 'bench' section in the config")
    records = []
    seed = cfg.seeds[0]
    for entry in cfg.bench:
        records += evaluation.bench(
            entry["method"], entry["grid"], entry.get("repeats", 5), seed,
            single_thread=True, fs_hz=entry.get("fs_hz", cfg.fs_hz),
        )
    path = io.write_bench_csv(cfg.output_dir / "bench.csv", records, _header(cfg, seed=seed))
    for r in records:
        t = "skipped" if r.wall_time_s is None else f"{r.wall_time_s:.4g}s"
        print(f"{r.method:>12} M={r.M} N={r.N} L={r.L} P={r.P} {t} {r.status}")
    print(path)
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "sample": cmd_sample,
    "psd": cmd_psd,
    "pattern": cmd_pattern,
    "roc": cmd_roc,
    "bench": cmd_bench,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment configuration")
    common.add_argument("--seed", type=int, help="replace the config seed list")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--threads", type=int, default=1, help="parallel sweep workers")
    common.add_argument(
        "--fft-len",
        help="correlation transform length, or 'exact' for 2LN-1 (default: next fast size)",
    )

    parser = argparse.ArgumentParser(
        prog="mcpsd", description="Power spectrum estimation from multicoset samples."
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen", parents=[common], help="generate signal files")
    p = sub.add_parser("sample", parents=[common], help="multicoset-sample a signal file")
    p.add_argument("--signal", required=True)
    p.add_argument("--pattern-file")
    p.add_argument("--L", type=int, help="sampling periods (default: whole record)")
    p = sub.add_parser("psd", parents=[common], help="estimate power spectra")
    p.add_argument("--signal", help="use this signal file instead of generating")
    p.add_argument("--autocorr", action="store_true", help="also dump the autocorrelation")
    p = sub.add_parser("pattern", parents=[common], help="validate or search a delay set")
    p.add_argument("--N", type=int)
    p.add_argument("--M", type=int, help="search for a pattern with M delays")
    p.add_argument("--delays", help="comma-separated grid delays")
    p.add_argument("--delays-s", help="comma-separated delays in seconds")
    p.add_argument("--fs", type=float, help="Nyquist rate for --delays-s")
    p.add_argument("--linear", action="store_true", help="check the linear ruler condition")
    p.add_argument("--max-n", type=int, default=multicoset.DEFAULT_SEARCH_MAX_N)
    sub.add_parser("roc", parents=[common], help="ROC sweep")
    sub.add_parser("bench", parents=[common], help="runtime benchmarks")
    sub.add_parser("compare", parents=[common], help="NMSE/AUC/runtime comparison")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:
        code = _exit_code(exc)
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
