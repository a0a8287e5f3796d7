"""Command-line entry point: ``sinkgan <subcommand> ...``.

Exit status is 0 on success, 1 on a usage error and 2 when a run fails.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import checkpoint, config as cfgmod, evaluation, plotting
from .latent import sample_model
from .measure import MeasureError, make_measure, read_csv, write_csv
from .sinkhorn import SinkhornWarning, sinkhorn_divergence
from .synthdata import EXPERIMENTS, ExperimentSpec
from .training import FittedModel, fit, write_metrics_csv

log = logging.getLogger("sinkgan")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _figure_path(csv_path, suffix: str = ".svg") -> Path:
    p = Path(csv_path)
    return p.with_suffix(suffix)


def _experiment(name: str) -> str:
    if name not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {name!r}; valid: {', '.join(sorted(EXPERIMENTS))}")
    return name


def _load_run_config(args) -> cfgmod.RunConfig:
    rc = cfgmod.resolve(args.config) if args.config else cfgmod.RunConfig()
    overrides = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, val = (s.strip() for s in item.split("=", 1))
        if key not in cfgmod.all_keys():
            raise UsageError(f"unknown key {key!r}")
        try:
            overrides[key] = cfgmod.convert(key, val)
        except ValueError as e:
            raise UsageError(f"bad value for {key}: {e}") from None
    return rc.replace(**overrides) if overrides else rc


def _target(rc: cfgmod.RunConfig):
    if rc.target_csv:
        return read_csv(rc.target_csv)
    return rc.experiment_spec().train_sample()


def _model(path) -> FittedModel:
    net, lat, _ = checkpoint.load(path)
    return FittedModel(net, lat, [])


# --- subcommands -------------------------------------------------------------

def cmd_gen_data(args) -> int:
    spec = ExperimentSpec(_experiment(args.experiment), n_train=args.n, seed=args.seed, noise=args.noise)
    mu = spec.train_sample()
    write_csv(mu, args.out)
    if args.figure:
        plotting.scatter([mu.points], [spec.name], _figure_path(args.out))
    print(f"wrote {mu.size} points of dimension {mu.dim} to {args.out}")
    return 0


def cmd_fit(args) -> int:
    rc = _load_run_config(args)
    if args.max_iters is not None:
        rc = rc.replace(max_iters=args.max_iters)
    if args.fixed_latent:
        # frozen N(0, I) particles: the standard Sinkhorn-GAN baseline
        rc = rc.replace(fixed_latent=True, lr_particles=0.0, init_scale=1.0, init_center=0.0)
    if args.target:
        rc = rc.replace(target_csv=args.target)
    ckpt = args.checkpoint or rc.checkpoint
    metrics_path = args.metrics or rc.metrics
    rho = _target(rc)
    state = checkpoint.load_state(args.resume) if args.resume else None
    if state is not None and state.net.layer_dims != rc.train.layer_dims:
        raise UsageError(f"checkpoint network {state.net.layer_dims} does not match config {rc.train.layer_dims}")
    model = fit(rho, rc.train, state=state)
    checkpoint.save_state(ckpt, model.state)
    new_rows = model.metrics[len(state.metrics):] if state is not None else model.metrics
    write_metrics_csv(new_rows, metrics_path)
    if new_rows:
        plotting.training_curve(new_rows, _figure_path(metrics_path))
    st = model.state
    print(f"iterations={st.iteration} rejected={st.rejected} unconverged_solves={st.unconverged}")
    print(f"checkpoint={ckpt} metrics={metrics_path}")
    return 0


def cmd_eval(args) -> int:
    rc = _load_run_config(args)
    model = _model(args.checkpoint)
    eps = args.eps if args.eps is not None else rc.effective_eval_eps
    n_gen = args.n_gen or rc.eval_n
    seed = args.seed if args.seed is not None else rc.data_seed
    sampler = None if args.target else rc.experiment_spec().sampler()
    gen, test = evaluation.gap_samples(model, sampler, args.n_test or rc.n_test, n_gen, seed)
    if test is None:
        test = read_csv(args.target)
    if test.dim != gen.dim:
        raise UsageError(f"target has dimension {test.dim}, model outputs {gen.dim}")
    gap = sinkhorn_divergence(gen, test, eps, rc.eval_tol, rc.eval_max_iter)
    print(f"gap={gap!r}")
    if args.out:
        Path(args.out).write_text(f"gap,epsilon,n_gen,n_test,seed\n{gap!r},{eps!r},{n_gen},{test.size},{seed}\n")
        plotting.scatter([test.points, gen.points], ["target", "model"], _figure_path(args.out),
                         title=f"S_eps = {gap:.4g} (eps={eps:g})")
    return 0


def cmd_sample(args) -> int:
    model = _model(args.checkpoint)
    mu = sample_model(model.net, model.latent, args.n, args.seed)
    write_csv(mu, args.out)
    if args.figure:
        plotting.scatter([mu.points], ["model"], _figure_path(args.out))
    print(f"wrote {mu.size} points to {args.out}")
    return 0


def cmd_sweep_n(args) -> int:
    rc = _load_run_config(args)
    name = _experiment(args.experiment or rc.experiment)
    sampler = ExperimentSpec(name).sampler()
    if args.mu:
        mu = read_csv(args.mu)
        if mu.dim != sampler.dim:
            raise UsageError(f"--mu has dimension {mu.dim}, target has {sampler.dim}")
    else:
        mu = make_measure(np.random.default_rng(args.mu_seed).standard_normal((args.mu_size, sampler.dim)))
    ns = [int(v) for v in args.ns.split(",")]
    res = evaluation.rate_sweep(mu, sampler, ns, args.trials, args.eps, args.seed)
    evaluation.write_sweep_csv(res, args.out)
    plotting.rate_plot(res.ns, res.mean_dev, res.std_dev, res.slope, res.intercept, _figure_path(args.out))
    print(f"slope={res.slope!r} intercept={res.intercept!r}")
    return 0


def cmd_sweep_delta(args) -> int:
    rc = _load_run_config(args)
    deltas = [float(v) for v in args.deltas.split(",")]
    spec = rc.experiment_spec()
    eps = args.eps if args.eps is not None else rc.effective_eval_eps
    if args.checkpoint:
        rows = evaluation.perturbation_sweep(spec, deltas, model=_model(args.checkpoint), eps=eps,
                                             n_gen=rc.eval_n, tol=rc.eval_tol, max_iter=rc.eval_max_iter)
    else:
        rows = evaluation.perturbation_sweep(spec, deltas, config=rc.train, eps=eps, n_gen=rc.eval_n,
                                             tol=rc.eval_tol, max_iter=rc.eval_max_iter)
    evaluation.write_delta_csv(rows, args.out)
    plotting.delta_plot(rows, _figure_path(args.out))
    for d, g in rows:
        print(f"delta={d!r} gap={g!r}")
    return 0


def cmd_plot(args) -> int:
    clouds = [read_csv(p) for p in args.files]
    dims = {c.dim for c in clouds}
    if len(dims) > 1:
        raise UsageError(f"files have different dimensions {sorted(dims)}")
    if max(dims) > 3:
        raise UsageError(f"cannot plot {max(dims)}-dimensional points (at most 3)")
    labels = args.labels.split(",") if args.labels else [Path(p).stem for p in args.files]
    plotting.scatter([c.points for c in clouds], labels, args.out, title=args.title or "")
    print(f"wrote {args.out}")
    return 0


# --- parser ------------------------------------------------------------------

def _config_flags(p):
    p.add_argument("--config", help="config file or preset name (spiral, swissroll, helix)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key; repeatable")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sinkgan", description="Latent-distribution Sinkhorn GAN toolkit.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write a synthetic target sample as CSV")
    p.add_argument("--experiment", required=True, help=f"one of {', '.join(sorted(EXPERIMENTS))}")
    p.add_argument("--n", type=int, default=1000, help="number of points")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0, help="std of additive Gaussian noise")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--figure", action="store_true", help="also write a scatter SVG next to the CSV")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("fit", help="train a generator and latent particles")
    _config_flags(p)
    p.add_argument("--target", help="target CSV (overrides the experiment sampler)")
    p.add_argument("--max-iters", type=int, help="iterations to run in this call")
    p.add_argument("--fixed-latent", action="store_true", help="freeze N(0, I) particles (baseline)")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--checkpoint", help="output checkpoint (default from config)")
    p.add_argument("--metrics", help="output metrics CSV (default from config)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="held-out gap of a checkpoint")
    _config_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--target", help="held-out target CSV instead of fresh experiment draws")
    p.add_argument("--eps", type=float, help="regularization (default: eps_floor of the config)")
    p.add_argument("--n-test", type=int, help="fresh target points")
    p.add_argument("--n-gen", type=int, help="model points")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="one-line CSV; a scatter SVG is written next to it")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample", help="draw points from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--figure", action="store_true", help="also write a scatter SVG next to the CSV")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("sweep-n", help="sample-complexity sweep of |S(mu, rho_n) - S(mu, rho)|")
    _config_flags(p)
    p.add_argument("--experiment", help="target experiment (default from config)")
    p.add_argument("--mu", help="CSV for the fixed measure mu")
    p.add_argument("--mu-size", type=int, default=50, help="points of N(0, I) mu when --mu is absent")
    p.add_argument("--mu-seed", type=int, default=0)
    p.add_argument("--ns", default="50,100,200,400,800,1600", help="comma-separated sample sizes")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="sweep CSV; a log-log SVG is written next to it")
    p.set_defaults(func=cmd_sweep_n)

    p = sub.add_parser("sweep-delta", help="gap against noise-convolved targets")
    _config_flags(p)
    p.add_argument("--checkpoint", help="evaluate this model for every delta instead of retraining")
    p.add_argument("--deltas", default="0,0.05,0.1,0.2")
    p.add_argument("--eps", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep_delta)

    p = sub.add_parser("plot", help="scatter SVG of one or more point CSVs (dimension <= 3)")
    p.add_argument("files", nargs="+", help="point CSVs; several files are overlaid")
    p.add_argument("--out", required=True, help="output figure (.svg, .png or .pdf)")
    p.add_argument("--labels", help="comma-separated legend labels")
    p.add_argument("--title")
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", SinkhornWarning)
    try:
        return args.func(args)
    except (UsageError, cfgmod.ConfigError) as e:
        print(f"sinkgan {args.command}: error: {e}", file=sys.stderr)
        return 1
    except KeyError as e:
        print(f"sinkgan {args.command}: error: {e.args[0] if e.args else e}", file=sys.stderr)
        return 1
    except (MeasureError, checkpoint.CheckpointError, plotting.PlotError, ValueError,
            OSError, FloatingPointError) as e:
        print(f"sinkgan {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
