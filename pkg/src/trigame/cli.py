"""Command-line entry point: ``trigame {simulate,spectrum,sweep,gan,recipes}``.

Exit codes: 0 success (diverged runs included), 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import plotting
from .dynamics import (Order, ScheduleConfig, classify_equilibrium, parse_permutation, run,
                       write_trajectory_csv)
from .games import GameSpec, PlayerState
from .spectral import RootFindingError, analyze
from .squidgan import (MixtureSpec, NonFiniteGradientError, SquidGAN, sample_real,
                       write_samples_csv)
from .sweep import SweepConfig, run_sweep, summarize, write_summary_json, write_sweep_csv


class UsageError(Exception):
    pass


def _floats(text, n=None, name="value"):
    try:
        vals = tuple(float(v) for v in str(text).split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"{name} must be comma-separated numbers, got {text!r}")
    if n is not None and len(vals) != n:
        raise argparse.ArgumentTypeError(f"{name} needs {n} comma-separated values, got {text!r}")
    if not all(np.isfinite(vals)):
        raise argparse.ArgumentTypeError(f"{name} must be finite")
    return vals


def triad(text):
    return _floats(text, 3, "triad")


def view(text):
    return _floats(text, 2, "view (elev,azim)")


def span(text):
    lo, hi, n = _floats(text, 3, "range lo,hi,n")
    if n < 1 or n != int(n):
        raise argparse.ArgumentTypeError("range count must be a positive integer")
    return lo, hi, int(n)


def positive_int(text):
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def nonneg_int(text):
    n = int(text)
    if n < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return n


def _out_dir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("TRIGAME_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"TRIGAME_SEED must be an integer, got {env!r}")


def _game(args):
    if args.game_file:
        with open(args.game_file) as fh:
            return GameSpec.from_dict(json.load(fh))
    return GameSpec.from_dict({"kind": args.game, "scalar": True})


def cmd_simulate(args):
    game = _game(args)
    if args.start is None:
        start = PlayerState.from_vector(np.ones(game.size), game.dims)
    else:
        start = PlayerState.from_vector(np.asarray(args.start, float), game.dims)
    cfg = ScheduleConfig(order=args.order, eta=args.eta, beta=args.beta, max_iters=args.iters,
                         record_stride=args.stride, permutation=args.permutation)
    traj = run(game, start, cfg)
    report = classify_equilibrium(traj)
    out = _out_dir(args.out_dir)
    write_trajectory_csv(traj, out / f"{args.name}.csv")
    title = f"{game.kind.value} {cfg.order.value} eta={cfg.eta:g} beta={cfg.beta}"
    if game.is_scalar:
        plotting.trajectory_svg(traj.as_array(), out / f"{args.name}.svg", view=args.view, title=title)
    print(report.to_json())
    return 0


def _scan(args, path):
    etas = np.linspace(*args.eta_range)
    betas = np.linspace(*args.beta_range)
    game = GameSpec.dual_bilinear()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["eta", "beta", "spectral_radius", "transverse_radius", "stable"])
        for eta in etas:
            for beta in betas:
                rep = analyze(game, eta, (beta,) * 3, args.history_sign)
                writer.writerow([repr(float(eta)), repr(float(beta)), repr(rep.spectral_radius),
                                 repr(rep.transverse_radius), str(rep.stable).lower()])


def cmd_spectrum(args):
    if args.eta < 0:
        raise UsageError("--eta must be >= 0")
    game = _game(args) if args.game_file else GameSpec.dual_bilinear()
    try:
        report = analyze(game, args.eta, args.beta, args.history_sign)
        if args.scan:
            _scan(args, args.scan)
    except RootFindingError as exc:
        print(f"root finding failed: {exc}", file=sys.stderr)
        print("residuals: " + ", ".join(f"{r:.3e}" for r in exc.residuals), file=sys.stderr)
        return 1
    print(report.to_json())
    return 0


def cmd_sweep(args):
    doc = {}
    if args.manifest:
        with open(args.manifest) as fh:
            doc = json.load(fh)
    for key in ("grid", "schedules", "eta", "iters"):
        val = getattr(args, key)
        if val is not None:
            doc[key] = val
    cfg = SweepConfig.from_dict(doc)
    out = _out_dir(args.out_dir)
    cells = run_sweep(cfg, n_jobs=args.jobs)
    summary = summarize(cells, args.epsilon)
    write_sweep_csv(cells, out / "sweep.csv")
    write_summary_json(summary, out / "summary.json", epsilon=args.epsilon, eta=cfg.eta,
                       iters=cfg.iters, n_cells=len(cells))
    if not args.no_plots:
        for order in cfg.schedules:
            subset = [c for c in cells if c.schedule is order]
            plotting.sweep_svg(subset, out / f"sweep_{order.value}.svg", view=args.view,
                               title=f"{order.value} (eta={cfg.eta:g}, {cfg.iters} iters)")
    print(json.dumps({"n_cells": len(cells), "summary": summary}, indent=2, sort_keys=True))
    return 0


def cmd_gan(args):
    seed = _seed(args)
    mix = MixtureSpec.default(seed=seed)
    X, y = sample_real(mix, args.n_data, np.random.default_rng(seed))
    est = SquidGAN(eta=args.eta, beta=args.beta, order=args.order, n_iter=args.iters,
                   batch_size=args.batch, literal_utilities=args.literal_utilities,
                   log_every=args.log_every, random_state=seed)
    try:
        est.fit(X, y, mixture=mix)
    except NonFiniteGradientError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return 1
    out = _out_dir(args.out_dir)
    est.save(out / "checkpoint.json")
    est.log_.write_csv(out / "log.csv")
    labels = np.repeat(np.arange(mix.k), args.n_samples)
    points = est.sample(labels, random_state=seed + 1)
    write_samples_csv(labels, points, out / "samples.csv")
    background = X[: 60 * mix.k]
    plotting.gan_svg(mix.means, mix.covs, labels, points, out / "gan.svg", background=background,
                     title=f"generated samples after {args.iters} iterations")
    metrics = est.evaluate(mix, n=args.n_samples, random_state=seed + 2)
    print(json.dumps({"iters": args.iters, "seed": seed, **metrics}, indent=2, sort_keys=True))
    return 0


def load_recipes():
    text = resources.files("trigame").joinpath("recipes.json").read_text()
    recipes = json.loads(text)["recipes"]
    names = [r["name"] for r in recipes]
    if len(set(names)) != len(names):
        raise ValueError("recipe names must be unique")
    return recipes


def recipe_argv(recipe, out_dir=None):
    argv = [recipe["command"]]
    for key, val in recipe["args"].items():
        flag = "--" + key.replace("_", "-")
        if isinstance(val, bool):
            if val:
                argv.append(flag)
        elif isinstance(val, list):
            argv += [flag, ",".join(str(v) for v in val)]
        else:
            argv += [flag, str(val)]
    if out_dir is not None:
        argv += ["--out-dir", str(out_dir)]
    if recipe["command"] == "simulate":
        argv += ["--name", recipe["name"]]
    return argv


def cmd_recipes(args):
    recipes = load_recipes()
    if args.action == "list":
        for r in recipes:
            print(f"{r['name']:<32} {r['description']}")
        return 0
    by_name = {r["name"]: r for r in recipes}
    if args.recipe not in by_name:
        raise UsageError(f"unknown recipe {args.recipe!r}; try 'recipes list'")
    recipe = by_name[args.recipe]
    if args.show:
        print(json.dumps(recipe, indent=2))
        return 0
    return main(recipe_argv(recipe, args.out_dir))


def build_parser():
    parser = argparse.ArgumentParser(prog="trigame", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def schedule_flags(p, default_order="alternating"):
        p.add_argument("--order", choices=[o.value for o in Order], default=default_order)
        p.add_argument("--eta", type=float, default=2e-2)
        p.add_argument("--beta", type=triad, default=(0.0, 0.0, 0.0),
                       help="momentum triad beta_theta,beta_phi,beta_psi")

    p = sub.add_parser("simulate", help="run one trajectory, write CSV + SVG, print report")
    p.add_argument("--game", choices=["dual_bilinear", "trilinear"], required=True)
    p.add_argument("--game-file", help="JSON game document (overrides the scalar game)")
    schedule_flags(p)
    p.add_argument("--iters", type=positive_int, default=100_000)
    p.add_argument("--start", type=lambda s: _floats(s, name="start"), default=None)
    p.add_argument("--permutation", type=parse_permutation, default=("theta", "phi", "psi"))
    p.add_argument("--stride", type=positive_int, default=100, help="record every N iterations")
    p.add_argument("--view", type=view, default=(25.0, -60.0), help="elev,azim in degrees")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--name", default="trajectory", help="output file stem")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("spectrum", help="spectral report of the alternating dual-game update")
    p.add_argument("--game-file", help="JSON dual_bilinear game document (default scalar)")
    p.add_argument("--eta", type=float, default=2e-2)
    p.add_argument("--beta", type=triad, default=(0.0, 0.0, 0.0))
    p.add_argument("--history-sign", type=int, choices=[-1, 1], default=-1,
                   help="sign of the minimizers' momentum columns in the operator")
    p.add_argument("--scan", help="write a CSV of spectral radius over --eta-range x --beta-range")
    p.add_argument("--eta-range", type=span, default=(0.01, 0.5, 50))
    p.add_argument("--beta-range", type=span, default=(-1.0, 1.0, 41))
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("sweep", help="momentum grid search on the trilinear game")
    p.add_argument("--manifest", help="JSON sweep configuration; flags override it")
    p.add_argument("--grid", type=positive_int, default=None, help="values per player (default 20)")
    p.add_argument("--schedules", type=lambda s: [Order(x.strip()).value for x in s.split(",")],
                   default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--iters", type=positive_int, default=None)
    p.add_argument("--jobs", type=positive_int, default=1)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--view", type=view, default=(25.0, -60.0))
    p.add_argument("--no-plots", action="store_true")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gan", help="train the three-player GAN on the Gaussian mixture")
    p.add_argument("--seed", type=int, default=None, help="defaults to $TRIGAME_SEED, then 0")
    p.add_argument("--iters", type=nonneg_int, default=20_000)
    p.add_argument("--batch", type=positive_int, default=64)
    p.add_argument("--eta", type=float, default=1e-3)
    p.add_argument("--beta", type=triad, default=(-0.5, 0.5, 0.5), help="beta_D,beta_C,beta_G")
    p.add_argument("--order", choices=[o.value for o in Order], default="alternating")
    p.add_argument("--literal-utilities", action="store_true",
                   help="ascend the classifier/generator utilities exactly as written")
    p.add_argument("--log-every", type=positive_int, default=1000)
    p.add_argument("--n-data", type=positive_int, default=60_000)
    p.add_argument("--n-samples", type=positive_int, default=200, help="generated points per class")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_gan)

    p = sub.add_parser("recipes", help="list or run the bundled figure recipes")
    p.add_argument("action", choices=["list", "run"])
    p.add_argument("recipe", nargs="?")
    p.add_argument("--show", action="store_true", help="print the recipe instead of running it")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_recipes)
    return parser


# Flags whose comma-separated values may start with '-' ("--beta -0.9,-0.9,-0.9").
LIST_FLAGS = {"--beta", "--start", "--view", "--eta-range", "--beta-range"}


def _join_list_flags(argv):
    out, i = [], 0
    while i < len(argv):
        if argv[i] in LIST_FLAGS and i + 1 < len(argv):
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv=None):
    parser = build_parser()
    argv = _join_list_flags(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "recipes" and args.action == "run" and not args.recipe:
        parser.print_usage(sys.stderr)
        print("trigame: error: recipes run needs a recipe name", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (UsageError, ValueError) as exc:
        parser.print_usage(sys.stderr)
        print(f"trigame: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"trigame: {exc}", file=sys.stderr)
        return 1


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
