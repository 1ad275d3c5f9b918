"""``fsat`` command line: fuse, train, eval, bench, gradcheck.

Every flag can also be given in a UTF-8 ``key=value`` file passed with
``--config``; keys are flag names without the leading dashes (``n-fsat`` and
``n_fsat`` both work). Flags on the command line win over the file.

Exit codes: 0 success, 2 usage error, 3 data error, 4 verification failure.
"""
from __future__ import annotations

import argparse
import sys
import time
import warnings
from pathlib import Path

from .dataset import DataError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file with defaults for any flag")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fsat", description="Infrared/visible image fusion.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fuse", help="fuse one IR/VI pair")
    p.add_argument("--ir", required=True, help="infrared PGM")
    p.add_argument("--vi", required=True, help="visible PGM, or PPM with --rgb")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="output PGM (PPM with --rgb)")
    p.add_argument("--rgb", action="store_true", help="visible input is RGB; fuse its luma")
    _add_common(p)

    p = sub.add_parser("train", help="train a model on a paired directory")
    p.add_argument("--data", required=True, help="directory with ir/ and vi/")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--patch", type=int, default=224)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=None, help="fixed step count (overrides --epochs)")
    p.add_argument("--ablation", choices=("full", "no_fsam", "no_itm", "reverse"), default="full")
    p.add_argument("--n-fsat", type=int, default=2)
    p.add_argument("--trace", default=None, help="loss trace CSV (default: <out>.trace.csv)")
    _add_common(p)

    p = sub.add_parser("eval", help="score a model on a paired directory")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--csv", required=True)
    _add_common(p)

    p = sub.add_parser("bench", help="single-threaded fusion timing")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--repeats", type=int, default=1)
    _add_common(p)

    p = sub.add_parser("gradcheck", help="verify network gradients by finite differences")
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)
    return parser


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:  # noqa: SLF001
        if name in action.choices:
            return action.choices[name]
    raise UsageError(f"unknown command {name!r}")


def read_config(path) -> dict[str, str]:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("_", "-")] = value
    return out


def config_argv(sub: argparse.ArgumentParser, cfg: dict[str, str]) -> list[str]:
    """Turn config entries into flags understood by ``sub``."""
    flags = {}
    for action in sub._actions:  # noqa: SLF001
        for opt in action.option_strings:
            if opt.startswith("--"):
                flags[opt[2:]] = action
    argv = []
    for key, value in cfg.items():
        action = flags.get(key)
        if action is None or key == "config":
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):  # noqa: SLF001
            if value.lower() in ("1", "true", "yes", "on"):
                argv.append(f"--{key}")
            elif value.lower() not in ("0", "false", "no", "off"):
                raise UsageError(f"config key {key!r} expects true/false, got {value!r}")
        else:
            argv += [f"--{key}", value]
    return argv


def _config_path(argv: list[str]) -> str | None:
    for i, a in enumerate(argv):
        if a == "--config":
            if i + 1 >= len(argv):
                raise UsageError("--config needs a file name")
            return argv[i + 1]
        if a.startswith("--config="):
            return a.split("=", 1)[1]
    return None


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    path = _config_path(argv)
    if path is None or not argv or argv[0].startswith("-"):
        return parser.parse_args(argv)
    extra = config_argv(_subparser(parser, argv[0]), read_config(path))
    # file values go first so that explicit flags, parsed later, override them
    return parser.parse_args(argv[:1] + extra + argv[1:])


# -- commands -----------------------------------------------------------------------
def cmd_fuse(args) -> int:
    from .imageio import load_pgm, load_ppm, save_pgm, save_ppm
    from .network import load_params
    from .pipeline import fuse_gray, fuse_rgb_pipeline

    params = load_params(args.model)
    ir = load_pgm(args.ir)
    if args.rgb:
        out = fuse_rgb_pipeline(ir, load_ppm(args.vi), params)
        save_ppm(out, args.out)
    else:
        vi = load_pgm(args.vi)
        if ir.size != vi.size:
            raise DataError(f"IR is {ir.width}x{ir.height} but VI is {vi.width}x{vi.height}")
        save_pgm(fuse_gray(ir, vi, params), args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .dataset import DatasetIndex
    from .network import NetworkConfig, save_params
    from .train import TrainConfig, train_loop

    cfg = TrainConfig(epochs=args.epochs, batch=args.batch, lr=args.lr, patch=args.patch,
                      seed=args.seed, steps=args.steps,
                      network=NetworkConfig(n_fsat=args.n_fsat, ablation=args.ablation))
    trace = args.trace or str(Path(args.out).with_suffix(".trace.csv"))
    result = train_loop(DatasetIndex.scan(args.data), cfg, trace_path=trace)
    save_params(result.params, args.out)
    first, last = result.trace[0].total, result.trace[-1].total
    print(f"trained {len(result.trace)} steps on {len(result.names)} pairs "
          f"({len(result.skipped)} skipped); loss {first:.4f} -> {last:.4f}")
    print(f"wrote {args.out} and {trace}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .dataset import DatasetIndex
    from .network import load_params
    from .pipeline import evaluate_dataset

    report = evaluate_dataset(DatasetIndex.scan(args.data), load_params(args.model))
    if not report.rows:
        raise DataError("no readable pairs to evaluate")
    report.to_csv(args.csv)
    m = report.mean()
    print(f"{len(report.rows)} pairs: MI {m.mi:.4f}  NCIE {m.ncie:.4f}  "
          f"Qabf {m.qabf:.4f}  SSIM {m.ssim:.4f}")
    print(f"wrote {args.csv}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .dataset import DatasetIndex
    from .network import load_params
    from .pipeline import bench_runtime

    if args.repeats < 1:
        raise UsageError("--repeats must be >= 1")
    report = bench_runtime(DatasetIndex.scan(args.data), load_params(args.model), args.repeats)
    print("\n".join(report.lines()))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import network_gradcheck

    tol = 1e-5
    t0 = time.perf_counter()
    report = network_gradcheck(seed=args.seed, tol=tol)
    elapsed = time.perf_counter() - t0
    for name, err in report.items():
        print(f"{'ok  ' if err < tol else 'FAIL'} {name:28s} {err:.3e}")
    worst = max(report.values())
    ok = worst < tol
    print(f"{'PASS' if ok else 'FAIL'}: worst relative error {worst:.3e} "
          f"(tolerance {tol:g}) in {elapsed:.1f} s")
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {"fuse": cmd_fuse, "train": cmd_train, "eval": cmd_eval,
            "bench": cmd_bench, "gradcheck": cmd_gradcheck}


def main(argv: list[str] | None = None) -> int:
    from .imageio import ImageFormatError
    from .network import ModelFileError

    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse reports usage problems this way
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    except UsageError as exc:
        print(f"fsat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = _show_warning
            return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"fsat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ImageFormatError, ModelFileError, OSError) as exc:
        print(f"fsat: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"fsat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"fsat: warning: {message}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
