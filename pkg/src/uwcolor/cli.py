"""Command-line entry point: ``uwcolor <command> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Hyper-parameters come from the config file; flags override it. The seed is
taken from ``--seed``, else the ``UWCOLOR_SEED`` environment variable, else
the config file.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, TrainConfig, load_config, reference_config, save_config
from .data import DatasetError, make_toy_domains, scan_domains

SEED_ENV = "UWCOLOR_SEED"

log = logging.getLogger("uwcolor")


class UsageError(Exception):
    pass


def _env_seed() -> int | None:
    raw = os.environ.get(SEED_ENV)
    if raw in (None, ""):
        return None
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None


def cmd_train(args) -> int:
    from .trainer import train

    if args.resume:
        state = load_checkpoint(args.resume)
        cfg = state.config
        if args.config:
            log.warning("--resume given: using the configuration stored in the checkpoint, not %s", args.config)
    else:
        state = None
        cfg = load_config(args.config) if args.config else TrainConfig()
        seed = args.seed if args.seed is not None else _env_seed()
        if seed is not None:
            cfg = cfg.with_overrides(train={"seed": seed})
    if args.steps is not None:
        cfg = cfg.with_overrides(train={"steps": args.steps})
        if state is not None:
            state.config = cfg
    dataset = scan_domains(args.domain_x, args.domain_y, cfg.arch.image_size, cfg.train.seed, cfg.data.batch_size)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.ini")
    result = train(cfg, dataset, out_dir=out, state=state)
    print(f"trained to step {result.state.step}; wrote {len(result.checkpoints)} checkpoint(s) and {result.log_path}")
    return 0


def cmd_infer(args) -> int:
    from .evaluate import Corrector, correct_directory

    corrector = Corrector.from_checkpoint(args.checkpoint)
    written = correct_directory(corrector, args.input, args.output)
    print(f"wrote {len(written)} image(s) to {args.output}")
    return 0


def cmd_eval(args) -> int:
    from .evaluate import evaluate_directory

    summary = evaluate_directory(args.checkpoint, args.dir, report=args.report, strips_dir=args.strips)
    if summary.count == 0:
        print(f"warning: no images in {args.dir}", file=sys.stderr)
        return 0
    print(f"images {summary.count}  ssim_lum {summary.ssim_lum:.4f}  "
          f"grayworld {summary.grayworld_in:.4f} -> {summary.grayworld_out:.4f} (proxy for colour cast)"
          + ("" if summary.cycle_l1 is None else f"  cycle_l1 {summary.cycle_l1:.4f}"))
    return 0


def _gains(text: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"gains must be three comma-separated numbers, got {text!r}") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"gains must be three comma-separated numbers, got {text!r}")
    return parts


def cmd_make_toy(args) -> int:
    seed = args.seed if args.seed is not None else (_env_seed() or 0)
    info = make_toy_domains(args.out, args.n, args.size, args.gains, seed)
    print(f"X: {info['dir_x']} channel means {[round(v, 4) for v in info['X']]}")
    print(f"Y: {info['dir_y']} channel means {[round(v, 4) for v in info['Y']]}")
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return 0 if run_selftest() else 1


def cmd_config(args) -> int:
    text = reference_config()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uwcolor", description="Unpaired colour correction of underwater images.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train both generators and discriminators")
    p.add_argument("--config", help="INI config file ([data] [arch] [loss] [optim] [train])")
    p.add_argument("--domain-x", required=True, help="directory of source-domain (underwater) images")
    p.add_argument("--domain-y", required=True, help="directory of target-domain (air) images")
    p.add_argument("--out", required=True, help="output directory for checkpoints, loss log and config snapshot")
    p.add_argument("--seed", type=int, help=f"overrides train.seed (default: ${SEED_ENV}, then the config)")
    p.add_argument("--steps", type=int, help="overrides train.steps")
    p.add_argument("--resume", metavar="CKPT", help="continue from a checkpoint (its stored config is used)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="correct one image or a directory of images")
    p.add_argument("--checkpoint", required=True, help="trained checkpoint")
    p.add_argument("--input", required=True, help="image file or directory")
    p.add_argument("--output", required=True, help="output directory (PNG, '<name>_corrected.png')")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score corrections of a directory of images")
    p.add_argument("--checkpoint", required=True, help="trained checkpoint")
    p.add_argument("--dir", required=True, help="directory of images to evaluate")
    p.add_argument("--report", help="tab-separated report path")
    p.add_argument("--strips", help="directory for side-by-side input|output PNGs")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("make-toy", help="write synthetic colour-cast (X) and clean (Y) domains")
    p.add_argument("--out", required=True, help="output directory; X/ and Y/ are created inside")
    p.add_argument("--n", type=int, default=64, help="images per domain (default 64)")
    p.add_argument("--size", type=int, default=64, help="image side in pixels (default 64)")
    p.add_argument("--gains", type=_gains, default=(0.3, 0.9, 1.0), help="R,G,B gains for domain X (default 0.3,0.9,1.0)")
    p.add_argument("--seed", type=int, help=f"generator seed (default: ${SEED_ENV}, then 0)")
    p.set_defaults(func=cmd_make_toy)

    p = sub.add_parser("selftest", help="run the oracle and gradient suites")
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("config", help="print the documented default configuration")
    p.add_argument("--out", help="write to this file instead of stdout")
    p.set_defaults(func=cmd_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if args.command in ("train", "eval", "infer") else 1
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
