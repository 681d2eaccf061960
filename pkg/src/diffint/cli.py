"""Command-line entry point.

Subcommands tie together dataset generation, training, evaluation, the
convergence study, statistical checks and plot emission.  Options can come
from a flat ``key = value`` config file (``--config``); explicit flags
override file values, and every run prints its fully resolved configuration
before executing.  Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass

import numpy as np

from . import harness, sampling, training
from .fileio import atomic_write_text
from .harness import means_path_for, read_means
from .problems import PROBLEM_IDS, generate_dataset, get_problem, write_dataset
from .training import TrainConfig, TrainedModel


class UsageError(ValueError):
    """Invalid command line or config file content (exit code 2)."""


_DEFAULT_SIZES = "1024,2048,4096,8192,16384,32768,65536"

# defaults shared by commands; per-command subsets are listed in _COMMAND_KEYS
_DEFAULTS = {
    "problem": None,
    "size": None,
    "sizes": _DEFAULT_SIZES,
    "trials": 10,
    "mode": "dml",
    "seed": 0,
    "epochs": 128,
    "batch": 1024,
    "out": None,
    "model": None,
    "test-size": harness.DEFAULT_TEST_SIZE,
    "jobs": 1,
    "means": None,
    "points": 5,
    "samples": 1_000_000,
    "stream": None,
}

_COMMAND_KEYS = {
    "gen": ("problem", "size", "seed", "stream", "out"),
    "train": ("problem", "size", "mode", "seed", "epochs", "batch", "out"),
    "eval": ("model", "problem", "test-size", "seed"),
    "converge": ("problem", "sizes", "trials", "seed", "epochs", "batch",
                 "test-size", "jobs", "out"),
    "proptest": ("problem", "points", "samples", "seed", "size", "trials",
                 "epochs", "batch", "jobs"),
    "plot": ("means", "out"),
}

_REQUIRED = {
    "gen": ("problem", "size", "out"),
    "train": ("problem", "size", "out"),
    "eval": ("model",),
    "converge": ("problem", "out"),
    "proptest": ("problem",),
    "plot": ("means", "out"),
}

_INT_KEYS = {"size", "trials", "seed", "epochs", "batch", "test-size", "jobs",
             "points", "samples", "stream"}


@dataclass(frozen=True)
class Command:
    name: str
    options: dict


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffint",
        description="Learn parametric-integral maps from single-draw Monte Carlo "
                    "labels and their gradients.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    descriptions = {
        "gen": "generate a labeled dataset file",
        "train": "train a surrogate and write the model file",
        "eval": "evaluate a model file against the oracle test set",
        "converge": "run the MSE-vs-training-size study for both modes",
        "proptest": "statistical checks: label unbiasedness, dml-vs-ann errors",
        "plot": "render a means file as a log-log vector-graphics chart",
    }
    for name, keys in _COMMAND_KEYS.items():
        p = sub.add_parser(name, help=descriptions[name])
        for key in keys:
            flag = "--" + key
            if key == "mode":
                p.add_argument(flag, choices=("ann", "dml"), default=None)
            elif key == "problem":
                p.add_argument(flag, choices=PROBLEM_IDS, default=None, metavar="ID")
            elif key in _INT_KEYS:
                p.add_argument(flag, type=int, default=None)
            else:
                p.add_argument(flag, default=None)
        p.add_argument("--config", default=None, help="key = value file; flags win")
    return parser


def _read_config_file(path: str) -> dict:
    values = {}
    try:
        with open(path, "r") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    for ln, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        key, eq, value = (part.strip() for part in text.partition("="))
        if eq != "=" or not key:
            raise UsageError(f"{path}:{ln}: expected 'key = value', got {text!r}")
        values[key] = value
    return values


def parse(argv) -> Command:
    """Resolve a command line (plus optional config file) into a Command.

    Precedence: explicit flag > config file > built-in default.  Unknown
    flags and unknown config keys are rejected.
    """
    parser = _build_parser()
    ns = parser.parse_args(argv)
    if ns.command is None:
        parser.print_usage(sys.stderr)
        raise SystemExit(2)
    keys = _COMMAND_KEYS[ns.command]
    options = {k: _DEFAULTS[k] for k in keys}

    if ns.config is not None:
        file_values = _read_config_file(ns.config)
        for key, raw in file_values.items():
            if key not in keys:
                raise UsageError(f"config key {key!r} is not valid for '{ns.command}'")
            if key in _INT_KEYS:
                try:
                    options[key] = int(raw)
                except ValueError as exc:
                    raise UsageError(f"config key {key!r} needs an integer, got {raw!r}") from exc
            elif key == "mode" and raw not in ("ann", "dml"):
                raise UsageError(f"config key 'mode' must be ann or dml, got {raw!r}")
            elif key == "problem" and raw not in PROBLEM_IDS:
                raise UsageError(f"config key 'problem' must be one of {', '.join(PROBLEM_IDS)}")
            else:
                options[key] = raw

    for key in keys:
        flag_value = getattr(ns, key.replace("-", "_"))
        if flag_value is not None:
            options[key] = flag_value

    missing = [k for k in _REQUIRED[ns.command] if options.get(k) is None]
    if missing:
        raise UsageError(f"'{ns.command}' requires {', '.join('--' + k for k in missing)}")
    return Command(name=ns.command, options=options)


def _print_resolved(cmd: Command) -> None:
    print(f"resolved config ({cmd.name}):")
    for key in sorted(cmd.options):
        print(f"  {key} = {cmd.options[key]}")


def _train_config(opt: dict, mode: str | None = None) -> TrainConfig:
    return TrainConfig(mode=mode or opt.get("mode", "dml"), seed=opt["seed"],
                       epochs=opt["epochs"], batch_size=opt["batch"])


# ---------------------------------------------------------------------------
# subcommand bodies

def _cmd_gen(opt):
    problem = get_problem(opt["problem"])
    stream = opt["stream"]
    if stream is None:
        stream = sampling.substream("train-data", problem.id, opt["size"])
    dataset = generate_dataset(problem, opt["size"], sampling.RngState(opt["seed"], stream))
    write_dataset(opt["out"], dataset)
    print(f"wrote {opt['size']} samples of {problem.id} to {opt['out']}")


def _cmd_train(opt):
    model = training.train_fresh(opt["problem"], opt["size"], _train_config(opt))
    model.save(opt["out"])
    print(f"trained {opt['mode']} surrogate for {opt['problem']} "
          f"(final loss {model.loss_trace[-1]:.6g}); model written to {opt['out']}")


def _cmd_eval(opt):
    model = TrainedModel.load(opt["model"])
    pid = opt["problem"] or model.problem_id
    if not pid:
        raise UsageError("model file carries no problem id; pass --problem")
    problem = get_problem(pid)
    testset = harness.make_testset(problem, opt["test-size"], opt["seed"])
    mse = harness.evaluate_mse(model, testset)
    print(f"test MSE ({pid}, {len(testset)} points): {mse:.6e}")
    if problem.output_dim > 1:
        print(f"cumulative MSE over {problem.output_dim} outputs: "
              f"{mse * problem.output_dim:.6e}")


def _cmd_converge(opt):
    problem = get_problem(opt["problem"])
    sizes = _parse_sizes(opt["sizes"])
    table = harness.run_convergence(problem, sizes, opt["trials"], opt["seed"],
                                    config=_train_config(opt, mode="dml"),
                                    jobs=opt["jobs"], test_size=opt["test-size"])
    harness.write_table(opt["out"], table)
    means_path = means_path_for(opt["out"])
    harness.write_means(means_path, table)
    print(f"table: {opt['out']}\nmeans: {means_path}")
    for p, m, j, v in table.means():
        line = f"  {p} {m} J={j}: mean MSE {v:.6e}"
        if problem.output_dim > 1:
            line += f" (cumulative {v * problem.output_dim:.6e})"
        print(line)


def _parse_sizes(text) -> list:
    try:
        sizes = [int(s) for s in str(text).split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"--sizes must be a comma-separated integer list, got {text!r}") from exc
    if not sizes:
        raise UsageError("--sizes must name at least one size")
    return sizes


def _cmd_proptest(opt):
    problem = get_problem(opt["problem"])
    report = harness.proposition_tests(
        problem, point_count=opt["points"], samples_per_point=opt["samples"],
        seed=opt["seed"], train_size=opt["size"], trials=opt["trials"],
        config=_train_config(opt, mode="dml"), jobs=opt["jobs"])
    for line in report.summary_lines():
        print(line)
    if not report.all_unbiased:
        raise RuntimeError("unbiasedness checks failed")
    print("unbiasedness checks passed")


def _cmd_plot(opt):
    emit_plot(opt["means"], opt["out"])
    print(f"plot written to {opt['out']}")


# ---------------------------------------------------------------------------
# plot emission: minimal deterministic SVG, no styling dependencies

_SERIES_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_W, _H = 720, 540
_ML, _MR, _MT, _MB = 80, 150, 40, 64


def _svg_text(x, y, text, anchor="middle", size=13):
    return (f'<text x="{x:.2f}" y="{y:.2f}" font-family="monospace" '
            f'font-size="{size}" text-anchor="{anchor}">{text}</text>')


def emit_plot(means_path: str, out_path: str) -> None:
    """Render a means file as a log-log SVG line chart (one series per mode).

    Output is deterministic: identical input bytes give identical output
    bytes (no timestamps, fixed float formatting).
    """
    rows = read_means(means_path)
    series: dict[tuple, list] = {}
    for problem, mode, size, mse in rows:
        if np.isfinite(mse) and mse > 0 and size > 0:
            series.setdefault((problem, mode), []).append((math.log2(size), math.log10(mse)))
    series = {k: sorted(v) for k, v in series.items() if v}
    if not series:
        raise ValueError(f"means file {means_path!r} has no plottable rows")

    pts = [p for v in series.values() for p in v]
    x0 = math.floor(min(p[0] for p in pts))
    x1 = math.ceil(max(p[0] for p in pts))
    y0 = math.floor(min(p[1] for p in pts))
    y1 = math.ceil(max(p[1] for p in pts))
    x1 += x1 == x0
    y1 += y1 == y0
    pw, ph = _W - _ML - _MR, _H - _MT - _MB

    def px(x):
        return _ML + (x - x0) / (x1 - x0) * pw

    def py(y):
        return _MT + (y1 - y) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}">',
           f'<rect width="{_W}" height="{_H}" fill="white"/>',
           f'<rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}" fill="none" '
           f'stroke="black" stroke-width="1"/>']
    for k in range(x0, x1 + 1):
        out.append(f'<line x1="{px(k):.2f}" y1="{py(y0):.2f}" x2="{px(k):.2f}" '
                   f'y2="{py(y0) + 5:.2f}" stroke="black"/>')
        out.append(_svg_text(px(k), py(y0) + 20, f"2^{k}"))
    for e in range(y0, y1 + 1):
        out.append(f'<line x1="{px(x0) - 5:.2f}" y1="{py(e):.2f}" x2="{px(x0):.2f}" '
                   f'y2="{py(e):.2f}" stroke="black"/>')
        out.append(_svg_text(px(x0) - 10, py(e) + 4, f"1e{e}", anchor="end"))
    out.append(_svg_text(_ML + pw / 2, _H - 16, "J", size=15))
    out.append(f'<text x="20" y="{_MT + ph / 2:.2f}" font-family="monospace" '
               f'font-size="15" text-anchor="middle" '
               f'transform="rotate(-90 20 {_MT + ph / 2:.2f})">MSE</text>')

    single_problem = len({p for p, _ in series}) == 1
    for idx, ((problem, mode), vals) in enumerate(sorted(series.items())):
        color = _SERIES_COLORS[idx % len(_SERIES_COLORS)]
        path = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in vals)
        out.append(f'<polyline points="{path}" fill="none" stroke="{color}" '
                   f'stroke-width="2"/>')
        for x, y in vals:
            out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="{color}"/>')
        label = mode if single_problem else f"{problem}/{mode}"
        ly = _MT + 16 + 22 * idx
        out.append(f'<line x1="{_W - _MR + 12}" y1="{ly - 4}" x2="{_W - _MR + 44}" '
                   f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(_svg_text(_W - _MR + 52, ly, label, anchor="start", size=12))
    if single_problem:
        out.append(_svg_text(_ML + pw / 2, 24, next(iter(series))[0], size=15))
    out.append("</svg>")
    atomic_write_text(out_path, "\n".join(out) + "\n")


_DISPATCH = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "converge": _cmd_converge,
    "proptest": _cmd_proptest,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    try:
        cmd = parse(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else int(exc.code)
    _print_resolved(cmd)
    try:
        _DISPATCH[cmd.name](cmd.options)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - single reporting point for the CLI
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
