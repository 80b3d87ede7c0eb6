"""Command-line entry point wiring configs, training, sampling, sweeps,
ablations, and reports.

Exit codes: 0 ok, 2 config error, 3 numeric abort (non-finite loss),
4 I/O or format error. Flags override config-file values.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, checkpoint_load, checkpoint_save
from .data import GAUSS8_STD, data_shape, gauss8_centers, make_dataset
from .diffusion import ddim_sample
from .errors import ConfigError, FormatError, NumericAbort
from .evaluation import (denoise_sweep, diffusion_objective, energy_distance,
                         flow_objective, mode_coverage, samples_to_csv,
                         svg_line_plot, sweep_to_csv)
from .flow import ode_sample
from .interpolant import export_lambda_csv
from .training import (RunConfig, config_from_text, config_to_text,
                       resolve_config, restore_model, train, write_metrics_csv)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

# protocol seeds: evaluation draws never collide with training streams
EVAL_NOISE_SEED = 1234
HELDOUT_SEED = 9090
REFERENCE_SEED = 7070


def _load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    return config_from_text(Path(path).read_text())


_OVERRIDE_FIELDS = ("framework", "conditioning", "dataset", "arch", "iterations",
                    "batch_size", "microbatch", "lr_params", "lr_phi", "seed",
                    "lambda_mode", "scope", "grid_size", "timesteps", "dual_init")


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    updates = {}
    for name in _OVERRIDE_FIELDS:
        val = getattr(args, name, None)
        if val is not None:
            updates[name] = val
    return replace(cfg, **updates) if updates else cfg


def _add_override_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file; flags take precedence")
    p.add_argument("--framework", choices=["diffusion", "flow"])
    p.add_argument("--conditioning",
                   choices=["none", "tmap", "sigmamap", "film", "ncsnv2", "dpi"])
    p.add_argument("--dataset")
    p.add_argument("--arch", choices=["auto", "mlp", "unet"])
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--microbatch", type=int)
    p.add_argument("--lr-params", dest="lr_params", type=float)
    p.add_argument("--lr-phi", dest="lr_phi", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--lambda-mode", dest="lambda_mode",
                   choices=["exact_endpoint", "paper_cumsum", "fixed_linear"])
    p.add_argument("--scope")
    p.add_argument("--grid-size", dest="grid_size", type=int)
    p.add_argument("--timesteps", type=int)
    p.add_argument("--dual-init", dest="dual_init", choices=["independent", "clone"])


def _write_run_artifacts(out: Path, cfg: RunConfig, ckpt: Checkpoint, metrics) -> None:
    out.mkdir(parents=True, exist_ok=True)
    checkpoint_save(ckpt, out / "checkpoint.dpi")
    write_metrics_csv(metrics, out / "metrics.csv")
    (out / "config.txt").write_text(config_to_text(cfg))
    if cfg.conditioning == "dpi":
        model, _, _ = restore_model(ckpt, use_ema=True)
        interp = model.dual.interpolant
        export_lambda_csv(interp, out / "lambda.csv")
        svg_line_plot([("lambda", interp.grid_scalars(), interp.lambda_table())],
                      out / "lambda.svg", title="Learned interpolation map",
                      xlabel="s", ylabel="lambda(s)")


def cmd_train(args) -> int:
    cfg = resolve_config(_apply_overrides(_load_config(args.config), args))
    ckpt, metrics = train(cfg)
    _write_run_artifacts(Path(args.out), cfg, ckpt, metrics)
    return EXIT_OK


def _strategy_label(cfg: RunConfig) -> str:
    if cfg.conditioning == "dpi" and cfg.lambda_mode == "fixed_linear":
        return "dpi-linear"
    return cfg.conditioning


def cmd_sample(args) -> int:
    ckpt = checkpoint_load(args.ckpt)
    model, cfg, sched = restore_model(ckpt, use_ema=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    shape = data_shape(cfg.dataset)
    seed = cfg.seed if args.seed is None else args.seed
    rng = np.random.default_rng([seed, 99])
    if args.n == 0:
        samples = np.zeros((0, 2)) if len(shape) == 1 else np.zeros((0,) + shape)
    elif cfg.framework == "diffusion":
        samples = ddim_sample(model, sched, args.n, shape, rng, n_steps=args.steps)
    else:
        samples = ode_sample(model, args.n, shape, rng, n_steps=args.steps)

    if len(shape) == 1:
        samples_to_csv(samples, out / "samples.csv")
    else:
        checkpoint_save(Checkpoint(config_text="kind = samples\n",
                                   tensors={"samples": samples}),
                        out / "samples.bin")

    rows = [["metric", "value"]]
    if len(shape) == 1 and args.n > 0:
        reference = make_dataset(cfg.dataset, args.reference_n, [REFERENCE_SEED])
        rows.append(["energy_distance", repr(energy_distance(samples, reference))])
        if cfg.dataset == "gauss8":
            _, covered = mode_coverage(samples, gauss8_centers(), 3 * GAUSS8_STD)
            rows.append(["mode_coverage", repr(covered)])
    with open(out / "sample_metrics.csv", "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    if cfg.conditioning == "dpi":
        export_lambda_csv(model.dual.interpolant, out / "lambda.csv")
    return EXIT_OK


def cmd_sweep_denoise(args) -> int:
    paths = [p for p in args.ckpts.split(",") if p]
    loaded = []
    for p in paths:
        ckpt = checkpoint_load(p)
        model, cfg, sched = restore_model(ckpt, use_ema=True)
        if cfg.framework != "diffusion":
            raise ConfigError(f"{p}: denoising sweep needs a diffusion checkpoint")
        loaded.append((model, cfg, sched))
    key = [(c.dataset, c.timesteps, c.beta_min, c.beta_max) for _, c, _ in loaded]
    if len(set(key)) != 1:
        raise ConfigError("sweep checkpoints must share dataset and schedule")
    cfg0, sched0 = loaded[0][1], loaded[0][2]
    test_x0 = make_dataset(cfg0.dataset, args.test_n, [HELDOUT_SEED])
    reports = [denoise_sweep(model, sched0, test_x0, n_seeds=args.eval_seeds,
                             base_seed=EVAL_NOISE_SEED, strategy_label=_strategy_label(cfg))
               for model, cfg, _ in loaded]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sweep_to_csv(reports, out / "sweep.csv")
    series = [(rep.strategy, [r.t for r in rep.rows],
               [r.noise_scaled_mse for r in rep.rows]) for rep in reports]
    svg_line_plot(series, out / "sweep.svg", title="Denoising error by noise level",
                  xlabel="t", ylabel="noise-scaled MSE", logy=True)
    return EXIT_OK


_ABLATION_MODES = {"learnable": "exact_endpoint", "linear": "fixed_linear"}


def cmd_ablate_lambda(args) -> int:
    modes = [m for m in args.modes.split(",") if m]
    for m in modes:
        if m not in _ABLATION_MODES:
            raise ConfigError(f"unknown ablation mode {m!r}; pick from learnable,linear")
    seeds = [int(s) for s in args.seeds.split(",") if s]
    base = _apply_overrides(_load_config(args.config), args)
    base = replace(base, conditioning="dpi")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    heldout = make_dataset(base.dataset, args.test_n, [HELDOUT_SEED])
    results = []
    for seed in seeds:
        for mode in modes:
            cfg = resolve_config(replace(base, seed=seed,
                                         lambda_mode=_ABLATION_MODES[mode]))
            ckpt, metrics = train(cfg)
            run_dir = out / f"{mode}_seed{seed}"
            _write_run_artifacts(run_dir, cfg, ckpt, metrics)
            model, _, sched = restore_model(ckpt, use_ema=True)
            if cfg.framework == "diffusion":
                obj = diffusion_objective(model, sched, heldout,
                                          n_seeds=args.eval_seeds,
                                          base_seed=EVAL_NOISE_SEED)
            else:
                obj = flow_objective(model, heldout, n_seeds=args.eval_seeds,
                                     base_seed=EVAL_NOISE_SEED)
            results.append((mode, seed, obj))
    with open(out / "comparison.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode", "seed", "objective"])
        for mode, seed, obj in results:
            writer.writerow([mode, seed, repr(obj)])
        for mode in modes:
            vals = [obj for m, _, obj in results if m == mode]
            writer.writerow([f"{mode}_mean", "", repr(float(np.mean(vals)))])
    return EXIT_OK


def cmd_report(args) -> int:
    run_dirs = [Path(p) for p in args.runs.split(",") if p]
    rows = []
    for run in run_dirs:
        cfg = config_from_text((run / "config.txt").read_text())
        entry = {"run": run.name, "framework": cfg.framework,
                 "conditioning": cfg.conditioning, "dataset": cfg.dataset,
                 "iterations": cfg.iterations, "seed": cfg.seed,
                 "lambda_mode": cfg.lambda_mode, "final_loss": "",
                 "energy_distance": "", "mode_coverage": ""}
        metrics_path = run / "metrics.csv"
        if metrics_path.exists():
            with open(metrics_path, newline="") as fh:
                recs = list(csv.DictReader(fh))
            if recs:
                entry["final_loss"] = recs[-1]["loss"]
        sm = run / "sample_metrics.csv"
        if sm.exists():
            with open(sm, newline="") as fh:
                for rec in csv.DictReader(fh):
                    if rec["metric"] in entry:
                        entry[rec["metric"]] = rec["value"]
        rows.append(entry)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    cols = ["run", "framework", "conditioning", "dataset", "iterations", "seed",
            "lambda_mode", "final_loss", "energy_distance", "mode_coverage"]
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for entry in rows:
            writer.writerow([entry[c] for c in cols])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpilab",
        description="Scalar-conditioned generative models with deep parameter "
                    "interpolation, at desk scale.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one model; writes checkpoint, "
                                           "metrics CSV, resolved config")
    _add_override_flags(p_train)
    p_train.add_argument("--out", required=True)
    p_train.set_defaults(fn=cmd_train)

    p_sample = sub.add_parser("sample", help="sample a trained checkpoint and "
                                             "score the samples")
    p_sample.add_argument("--ckpt", required=True)
    p_sample.add_argument("--n", type=int, default=10000)
    p_sample.add_argument("--steps", type=int, default=200)
    p_sample.add_argument("--seed", type=int)
    p_sample.add_argument("--reference-n", dest="reference_n", type=int, default=10000)
    p_sample.add_argument("--out", required=True)
    p_sample.set_defaults(fn=cmd_sample)

    p_sweep = sub.add_parser("sweep-denoise", help="denoising error sweep over "
                                                   "noise levels, shared realizations")
    p_sweep.add_argument("--ckpts", required=True, help="comma-separated checkpoints")
    p_sweep.add_argument("--test-n", dest="test_n", type=int, default=500)
    p_sweep.add_argument("--eval-seeds", dest="eval_seeds", type=int, default=20)
    p_sweep.add_argument("--out", required=True)
    p_sweep.set_defaults(fn=cmd_sweep_denoise)

    p_abl = sub.add_parser("ablate-lambda", help="matched-budget learnable vs "
                                                 "fixed-linear interpolation runs")
    _add_override_flags(p_abl)
    p_abl.add_argument("--modes", default="learnable,linear")
    p_abl.add_argument("--seeds", default="0,1,2")
    p_abl.add_argument("--test-n", dest="test_n", type=int, default=500)
    p_abl.add_argument("--eval-seeds", dest="eval_seeds", type=int, default=20)
    p_abl.add_argument("--out", required=True)
    p_abl.set_defaults(fn=cmd_ablate_lambda)

    p_rep = sub.add_parser("report", help="merge run directories into one "
                                          "comparison table")
    p_rep.add_argument("--runs", required=True, help="comma-separated run dirs")
    p_rep.add_argument("--out", required=True)
    p_rep.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericAbort as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        for key, val in exc.diagnostics.items():
            print(f"  {key}: {val}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
