"""Command-line entry point: ``sgan {train,eval,gap,duality,verify,plot}``.

Exit codes: 0 on success, 1 on a validation error (bad flag, config or
file), 2 on a numeric failure (divergence, failed verification).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import gan_core, metrics, verify
from .config import ConfigError, RunConfig, env_seed, load_config
from .duality.family import QuadraticFamily, sweep
from .plot import emit_scatter_svg
from .rng import Rng
from .synthdata import (DEFAULT_RADIUS, DEFAULT_STD, IDXFormatError, load_idx, make_ring_mixture,
                        sample_real)

log = logging.getLogger("sgan")

DUALITY_FIELDS = ("I", "w_star", "q_star", "gap", "delta_worst", "bound", "holds")


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def parse_range(spec: str) -> list[int]:
    """``"5"`` -> [5]; ``"1:64"`` -> [1, ..., 64] (inclusive)."""
    try:
        if ":" in spec:
            lo, hi = (int(s) for s in spec.split(":"))
        else:
            lo = hi = int(spec)
    except ValueError:
        raise UsageError(f"--I expects N or A:B, got {spec!r}") from None
    if lo < 1 or hi < lo:
        raise UsageError(f"--I range must satisfy 1 <= A <= B, got {spec!r}")
    return list(range(lo, hi + 1))


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    print(path)


def _seed(args) -> int | None:
    return args.seed if args.seed is not None else env_seed()


# -- data ---------------------------------------------------------------------------------------


def mixture_of(cfg: RunConfig):
    return make_ring_mixture(cfg.k_modes, DEFAULT_RADIUS if cfg.radius is None else cfg.radius,
                             DEFAULT_STD if cfg.std is None else cfg.std)


def data_source(cfg: RunConfig):
    if cfg.task == "mixture":
        spec = mixture_of(cfg)
        return lambda n, r: sample_real(spec, n, r)
    ds = load_idx(cfg.images, cfg.labels)
    if cfg.subset is not None:
        ds = ds.subset(cfg.subset)
    return ds.sample


def _checkpoint(args, cfg_out: Path) -> Path:
    p = Path(args.checkpoint) if args.checkpoint else cfg_out / "checkpoint.json"
    if not p.is_file():
        raise FileNotFoundError(f"checkpoint not found: {p} (run 'sgan train' first or pass --checkpoint)")
    return p


def _resolve(args) -> tuple[RunConfig, Path]:
    cfg = load_config(args.config, seed=_seed(args))
    out = Path(args.out) if args.out else Path(cfg.out_dir)
    return cfg, out


# -- commands -----------------------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg, out = _resolve(args)
    data = data_source(cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    gan_core.train(cfg.train, data, out_dir=out,
                   progress=lambda info: log.info("step %d objective %.6f", info["step"], info["objective"]))
    for name in ("config.json", "metrics.csv", "checkpoint.json"):
        print(out / name)
    return 0


def _load_game(args, out):
    state, tcfg, _ = gan_core.load_checkpoint(_checkpoint(args, out))
    return state, gan_core.NetGame(tcfg)


def cmd_eval(args) -> int:
    cfg, out = _resolve(args)
    if cfg.task != "mixture":
        raise ConfigError("eval scores mode coverage and only supports the mixture task")
    state, game = _load_game(args, out)
    spec = mixture_of(cfg)
    pts, labels = gan_core.sample(state, cfg.eval_samples, Rng(cfg.seed).fork(), game)
    rep = metrics.assign_and_score(pts, labels, spec, n_generators=game.n_players)
    bal = metrics.generator_balance(rep)
    _write_csv(out / "eval.csv", ("modes_covered", "hq_fraction", "entropy", "every_mode_dominated"),
               [(rep.modes_covered, float(rep.hq_fraction), float(bal.entropy),
                 metrics.every_mode_dominated(bal, spec.k))])
    _write_csv(out / "eval_modes.csv", ("mode", "hq_count"),
               [(k, int(c)) for k, c in enumerate(rep.hq_counts)])
    return 0


def cmd_gap(args) -> int:
    cfg, out = _resolve(args)
    state, game = _load_game(args, out)
    rep = gan_core.empirical_gap(state, data_source(cfg), args.K, args.probe_lr, Rng(cfg.seed).fork(),
                                 game, n_eval=args.n_eval)
    if not rep.valid:
        raise FloatingPointError("gap probes produced a non-finite value")
    _write_csv(out / "gap.csv", ("I", "K", "probe_lr", "start", "w_hat", "q_hat", "gap_proxy"),
               [(game.n_players, rep.K, float(rep.probe_lr), float(rep.start), float(rep.w_hat),
                 float(rep.q_hat), float(rep.gap_proxy))])
    return 0


def cmd_duality(args) -> int:
    Is = parse_range(args.I)
    if args.family == "pm1":
        fam = QuadraticFamily.pm1()
    else:
        seed = _seed(args)
        fam = QuadraticFamily.random(Rng(0 if seed is None else seed))
    reports = sweep(fam, Is)
    out = Path(args.out or ".")
    _write_csv(out / "duality.csv", DUALITY_FIELDS,
               [(r.I, float(r.w_star), float(r.q_star), float(r.gap), float(r.delta_worst),
                 float(r.bound), bool(r.holds)) for r in reports])
    return 0 if all(r.holds for r in reports) else 2


def cmd_verify(args) -> int:
    names = list(verify.SUITES) if args.suite == "all" else [args.suite]
    if args.suite != "all" and args.suite not in verify.SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; choose from {', '.join(verify.SUITES)} or all")
    seed = _seed(args)
    results = verify.run_suites(names, 0 if seed is None else seed)
    for p in verify.write_reports(results, Path(args.out or ".")):
        print(p)
    for r in results:
        log.info("%s: %d cases, %d failures", r.name, len(r.rows), r.failures)
    return 0 if all(r.passed for r in results) else 2


def cmd_plot(args) -> int:
    cfg, out = _resolve(args)
    if cfg.task != "mixture":
        raise ConfigError("plot renders 2-D samples and only supports the mixture task")
    state, game = _load_game(args, out)
    pts, labels = gan_core.sample(state, args.n, Rng(cfg.seed).fork(), game)
    print(emit_scatter_svg(pts, labels, mixture_of(cfg), out / "samples.svg"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sgan", description="Stackelberg GAN experiments and duality checks.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config=True, checkpoint=False):
        if config:
            sp.add_argument("--config", required=True, help="JSON run configuration")
        if checkpoint:
            sp.add_argument("--checkpoint", help="checkpoint JSON (default: <out>/checkpoint.json)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=_u64, help="overrides the config seed")

    common(sub.add_parser("train", help="train an ensemble"))
    common(sub.add_parser("eval", help="mode coverage of a checkpoint"), checkpoint=True)
    g = sub.add_parser("gap", help="empirical duality-gap proxy of a checkpoint")
    common(g, checkpoint=True)
    g.add_argument("--K", type=int, default=200)
    g.add_argument("--probe-lr", type=float, default=1e-3)
    g.add_argument("--n-eval", type=int, default=None)
    d = sub.add_parser("duality", help="exact w*, q* and gap bound for a quadratic family")
    common(d, config=False)
    d.add_argument("--family", choices=("pm1", "random"), default="pm1")
    d.add_argument("--I", default="1:16")
    v = sub.add_parser("verify", help="run property suites")
    common(v, config=False)
    v.add_argument("--suite", default="all")
    pl = sub.add_parser("plot", help="SVG scatter of generated samples")
    common(pl, checkpoint=True)
    pl.add_argument("--n", type=int, default=2000)
    return p


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "gap": cmd_gap, "duality": cmd_duality,
            "verify": cmd_verify, "plot": cmd_plot}


def dispatch(argv) -> int:
    try:
        args = build_parser().parse_args(list(argv))
    except UsageError as exc:
        print(f"sgan: error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except FloatingPointError as exc:
        print(f"sgan: numeric failure: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, UsageError, IDXFormatError, FileNotFoundError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"sgan: error: {msg}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
