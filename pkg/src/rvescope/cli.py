"""rve-scope command line.

Sub-commands::

    rve-scope run --input m.pgm --ls 21 --model logistic --a diag
    rve-scope generate --kind boolean-disks --vf 0.1 --radius 6 --size 512 --output m.pgm
    rve-scope curve --csv m_rve.csv

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 generation
error, 5 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import __version__
from .generate import GenerationError, GeneratorSpec, generate
from .micrograph import ImageFormatError, load_micrograph, save_pgm, write_meta
from .model import FitError, OptimizerSettings, save_model
from .report import curve_svg, read_csv, report_text, write_csv
from .rve import ElbowError, SweepConfig, check_sizes, curve_from_stats, default_sizes, linear_sizes, run_sweep

log = logging.getLogger("rvescope")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_GENERATE, EXIT_NUMERIC = 0, 2, 3, 4, 5


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = "run"
    # run
    input: str | None = None
    threshold: float | None = None
    scale: float | None = None
    ls: int = 21
    model: str = "logistic"
    lam: float = 1e-4
    a_mode: str = "diag"
    sizes: str | None = None
    size_min: int | None = None
    size_max: int | None = None
    size_count: int | None = None
    spacing: str | None = None
    stride: int = 1
    ridge_eps: float = 1e-8
    cv_folds: int = 3
    seed: int = 0
    batch_size: int = 4096
    sgd_epochs: int | None = None
    learning_rate: float | None = None
    tol: float = 1e-6
    max_polish: int = 100
    csv: str | None = None
    svg: str | None = None
    report: str | None = None
    save_model: str | None = None
    threads: int | None = None
    # generate
    output: str | None = None
    kind: str = "boolean-disks"
    vf: float = 0.10
    radius: int = 6
    height: int = 512
    width: int = 512
    region_vfs: str = "0.05,0.20"
    offspring_count: float = 8.0
    cluster_radius: int = 20
    # curve
    curve_csv: str | None = None

    def to_text(self):
        """Flat `key = value` text; reading it back gives the same config."""
        keys = _COMMAND_KEYS[self.command]
        out = [f"command = {self.command}"]
        for k in keys:
            v = getattr(self, k)
            out.append(f"{k} = {'' if v is None else v}")
        return "\n".join(out) + "\n"

    def optimizer(self):
        return OptimizerSettings(self.batch_size, self.sgd_epochs, self.learning_rate,
                                 self.tol, self.max_polish, self.seed)

    def generator_spec(self):
        return GeneratorSpec(kind=self.kind, target_vf=self.vf, particle_radius=self.radius,
                             offspring_count=self.offspring_count, cluster_radius=self.cluster_radius,
                             region_vfs=_pair(self.region_vfs), seed=self.seed)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_RUN_KEYS = ["input", "threshold", "scale", "ls", "model", "lam", "a_mode", "sizes", "size_min",
             "size_max", "size_count", "spacing", "stride", "ridge_eps", "cv_folds", "seed",
             "batch_size", "sgd_epochs", "learning_rate", "tol", "max_polish", "csv", "svg",
             "report", "save_model", "threads"]
_GEN_KEYS = ["output", "kind", "vf", "radius", "height", "width", "region_vfs",
             "offspring_count", "cluster_radius", "seed", "scale"]
_COMMAND_KEYS = {"run": _RUN_KEYS, "generate": _GEN_KEYS, "curve": ["curve_csv", "scale", "svg", "report"]}


def _pair(text):
    try:
        a, b = (float(v) for v in str(text).split(","))
    except ValueError:
        raise ConfigError(f"region_vfs must be two comma-separated fractions, got {text!r}") from None
    return a, b


def _convert(key, raw):
    if raw is None:
        return None
    kind = _FIELD_TYPES[key]
    text = str(raw).strip()
    if text == "" and "None" in kind:
        return None
    try:
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None
    return text


def read_config_file(path):
    values = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        if key == "command":
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _convert(key, value)
    return values


def _parser():
    p = argparse.ArgumentParser(prog="rve-scope", description="RVE size from a two-phase micrograph via Fisher scores")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    run = sub.add_parser("run", help="estimate the RVE size of a micrograph", argument_default=S)
    run.add_argument("--config", help="flat key = value config file (flags override it)")
    run.add_argument("--input", help="PGM (P2/P5) or grayscale PNG micrograph")
    run.add_argument("--threshold", type=float, help="binarisation level (default: Otsu)")
    run.add_argument("--scale", type=float, help="um per pixel (default: sidecar .meta or 1.0)")
    run.add_argument("--ls", type=int, help="odd neighbourhood size (default 21)")
    run.add_argument("--model", choices=["logistic", "mlp"])
    run.add_argument("--lambda", dest="lam", type=float, help="ridge strength (default 1e-4)")
    run.add_argument("--a", dest="a_mode", choices=["diag", "full"], help="scaling matrix A")
    run.add_argument("--sizes", help="START:STOP:STEP or comma-separated window sizes")
    run.add_argument("--size-min", type=int)
    run.add_argument("--size-max", type=int)
    run.add_argument("--size-count", type=int)
    run.add_argument("--spacing", choices=["geometric", "linear"])
    run.add_argument("--stride", type=int, help="window position subsampling (default 1)")
    run.add_argument("--ridge-eps", type=float)
    run.add_argument("--cv-folds", type=int, help="folds for balanced accuracy (0 skips)")
    run.add_argument("--seed", type=int)
    run.add_argument("--batch-size", type=int)
    run.add_argument("--sgd-epochs", type=int)
    run.add_argument("--learning-rate", type=float)
    run.add_argument("--tol", type=float)
    run.add_argument("--max-polish", type=int)
    run.add_argument("--csv")
    run.add_argument("--svg")
    run.add_argument("--report")
    run.add_argument("--save-model")
    run.add_argument("--threads", type=int, help="cap on BLAS threads (env RVE_SCOPE_THREADS)")
    run.add_argument("-v", "--verbose", action="store_true")

    gen = sub.add_parser("generate", help="write a synthetic micrograph", argument_default=S)
    gen.add_argument("--config")
    gen.add_argument("--output", help="PGM path; a .meta sidecar is written next to it")
    gen.add_argument("--kind", choices=["boolean-disks", "two-region", "clustered"])
    gen.add_argument("--vf", type=float)
    gen.add_argument("--radius", type=int)
    gen.add_argument("--size", type=int, help="shorthand for equal height and width")
    gen.add_argument("--height", type=int)
    gen.add_argument("--width", type=int)
    gen.add_argument("--region-vfs")
    gen.add_argument("--offspring-count", type=float)
    gen.add_argument("--cluster-radius", type=int)
    gen.add_argument("--seed", type=int)
    gen.add_argument("--scale", type=float)

    cur = sub.add_parser("curve", help="re-run elbow detection on a curve CSV", argument_default=S)
    cur.add_argument("--csv", dest="curve_csv", required=True)
    cur.add_argument("--svg")
    cur.add_argument("--report")
    return p


def parse_config(argv=None) -> RunConfig:
    """Resolve defaults, then the config file, then command-line flags."""
    ns = vars(_parser().parse_args(argv))
    command = ns.pop("command")
    ns.pop("verbose", None)
    values = {}
    cfg_path = ns.pop("config", None)
    if cfg_path:
        values.update(read_config_file(cfg_path))
    size = ns.pop("size", None)
    if size is not None:
        values["height"] = values["width"] = size
    values.update(ns)
    cfg = RunConfig(command=command, **values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if cfg.command == "run":
        if not cfg.input:
            raise ConfigError("run needs --input")
        if cfg.ls < 3 or cfg.ls % 2 == 0:
            raise ConfigError(f"--ls must be an odd integer >= 3, got {cfg.ls}")
        if cfg.model not in ("logistic", "mlp"):
            raise ConfigError(f"--model must be logistic or mlp, got {cfg.model!r}")
        if cfg.a_mode not in ("diag", "full"):
            raise ConfigError(f"--a must be diag or full, got {cfg.a_mode!r}")
        if cfg.lam < 0 or cfg.ridge_eps < 0:
            raise ConfigError("--lambda and --ridge-eps must be >= 0")
        if cfg.stride < 1:
            raise ConfigError("--stride must be >= 1")
        if cfg.cv_folds not in (0, None) and cfg.cv_folds < 2:
            raise ConfigError("--cv-folds must be 0 (skip) or >= 2")
        if cfg.scale is not None and not cfg.scale > 0:
            raise ConfigError("--scale must be positive")
        ranged = [cfg.size_min, cfg.size_max, cfg.size_count, cfg.spacing]
        if cfg.sizes and any(v is not None for v in ranged):
            raise ConfigError("--sizes conflicts with --size-min/--size-max/--size-count/--spacing; give one form")
        if cfg.sizes:
            parse_sizes(cfg.sizes)
        if cfg.threads is not None and cfg.threads < 1:
            raise ConfigError("--threads must be >= 1")
    elif cfg.command == "generate":
        if not cfg.output:
            raise ConfigError("generate needs --output")
        try:
            cfg.generator_spec()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if cfg.height < 1 or cfg.width < 1:
            raise ConfigError("image size must be positive")


def parse_sizes(text):
    text = str(text).strip()
    try:
        if ":" in text:
            parts = [int(v) for v in text.split(":")]
            if len(parts) != 3:
                raise ValueError
            sizes = linear_sizes(*parts)
        else:
            sizes = [int(v) for v in text.split(",") if v.strip()]
        return check_sizes(sizes)
    except ValueError as exc:
        msg = str(exc) or "expected START:STOP:STEP or a comma-separated list"
        raise ConfigError(f"--sizes {text!r}: {msg}") from None


def resolve_sizes(cfg: RunConfig, field_shape):
    if cfg.sizes:
        return parse_sizes(cfg.sizes)
    if all(v is None for v in (cfg.size_min, cfg.size_max, cfg.size_count, cfg.spacing)):
        return default_sizes(field_shape, cfg.ls)
    lo = cfg.size_min if cfg.size_min is not None else max(8, 2 * cfg.ls)
    hi = cfg.size_max if cfg.size_max is not None else min(field_shape) // 2
    count = cfg.size_count if cfg.size_count is not None else 12
    if (cfg.spacing or "geometric") == "geometric":
        sizes = np.unique(np.rint(np.geomspace(lo, hi, count)).astype(int))
    else:
        sizes = np.unique(np.rint(np.linspace(lo, hi, count)).astype(int))
    try:
        return check_sizes(sizes.tolist())
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _default_out(cfg, ext):
    root = os.path.splitext(os.path.basename(cfg.input))[0]
    return f"{root}_rve.{ext}"


def emit_outputs(curve, cfg: RunConfig, volume_fraction=None):
    """Write the CSV, SVG and report; returns the paths written."""
    csv_path = cfg.csv or _default_out(cfg, "csv")
    svg_path = cfg.svg or _default_out(cfg, "svg")
    rep_path = cfg.report or _default_out(cfg, "txt")
    text = report_text(curve, cfg.to_text(), volume_fraction)
    write_csv(csv_path, curve)
    with open(svg_path, "w", newline="\n") as fh:
        fh.write(curve_svg(curve))
    with open(rep_path, "w", newline="\n") as fh:
        fh.write(text)
    return csv_path, svg_path, rep_path, text


def _threads(cfg):
    if cfg.threads is not None:
        return cfg.threads
    env = os.environ.get("RVE_SCOPE_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"RVE_SCOPE_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError("RVE_SCOPE_THREADS must be >= 1")
        return n
    return None


def cmd_run(cfg: RunConfig):
    from threadpoolctl import threadpool_limits

    threads = _threads(cfg)
    m = load_micrograph(cfg.input, cfg.threshold, cfg.scale)
    if m.scale != cfg.scale:
        cfg = dataclasses.replace(cfg, scale=m.scale)
    if cfg.ls > min(m.shape):
        raise ConfigError(f"--ls {cfg.ls} exceeds the image side {min(m.shape)}")
    field_shape = (m.height - cfg.ls + 1, m.width - cfg.ls + 1)
    sizes = resolve_sizes(cfg, field_shape)
    if sizes[-1] > min(field_shape):
        raise ConfigError(
            f"largest window size {sizes[-1]} exceeds the score field side {min(field_shape)} "
            f"(image side minus l_s - 1)"
        )
    sweep = SweepConfig(ls=cfg.ls, model=cfg.model, lam=cfg.lam, opt=cfg.optimizer(),
                        a_mode=cfg.a_mode, sizes=tuple(sizes), stride=cfg.stride,
                        ridge_eps=cfg.ridge_eps, cv_folds=cfg.cv_folds or None)
    with threadpool_limits(limits=threads):
        curve = run_sweep(m, sweep, keep_model=bool(cfg.save_model))
    if cfg.save_model:
        save_model(cfg.save_model, curve.model)
    *_, text = emit_outputs(curve, cfg, m.volume_fraction)
    sys.stdout.write(text)


def cmd_generate(cfg: RunConfig):
    spec = cfg.generator_spec()
    m = generate(spec, cfg.height, cfg.width, 1.0 if cfg.scale is None else cfg.scale)
    save_pgm(cfg.output, m)
    write_meta(cfg.output, m.scale)
    print(f"wrote {cfg.output} ({m.height}x{m.width}, realized vf {m.volume_fraction:.6f})")


def cmd_curve(cfg: RunConfig):
    stats, scale = read_csv(cfg.curve_csv)
    curve = curve_from_stats(stats, scale if cfg.scale is None else cfg.scale)
    text = report_text(curve, cfg.to_text())
    if cfg.svg:
        with open(cfg.svg, "w", newline="\n") as fh:
            fh.write(curve_svg(curve))
    if cfg.report:
        with open(cfg.report, "w", newline="\n") as fh:
            fh.write(text)
    sys.stdout.write(text)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    logging.basicConfig(level=logging.INFO if ("-v" in argv or "--verbose" in argv) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(argv)
        handler = {"run": cmd_run, "generate": cmd_generate, "curve": cmd_curve}[cfg.command]
        handler(cfg)
    except SystemExit as exc:  # argparse usage errors exit with 2 already
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    except ConfigError as exc:
        print(f"rve-scope: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GenerationError as exc:
        print(f"rve-scope: generation failed: {exc}", file=sys.stderr)
        return EXIT_GENERATE
    except (FitError, ElbowError) as exc:
        print(f"rve-scope: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ImageFormatError, OSError) as exc:
        print(f"rve-scope: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"rve-scope: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
