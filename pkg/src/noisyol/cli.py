"""Command-line front end: ``run``, ``sweep``, ``verify`` and ``bounds``."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import harness as H
from . import learners as L
from . import noise_channel as nc
from .sim_core import ConfigError

EXIT_OK, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2

HEADER = (
    "setting", "learner", "adversary", "K", "T", "eps_or_dist", "eta", "theta",
    "seed_count", "mean_regret", "stderr", "theoretical_bound", "fitted_exponent",
)


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def read_raw(path, overrides: Sequence[str] = ()) -> dict:
    """Load a flat TOML file and apply ``key=value`` overrides on top."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {item!r}: expected key=value")
        raw[key.strip()] = _parse_value(value.strip())
    nested = [k for k, v in raw.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"{nested[0]}: tables are not supported, use flat keys")
    return raw


def parse_config(path, overrides: Sequence[str] = ()) -> H.ExperimentConfig:
    return H.build_config(read_raw(path, overrides))


def _load(path, overrides) -> list[H.ExperimentConfig]:
    raw = read_raw(path, overrides)
    if raw.get("learner") == "all":
        return H.builtin_learner_configs(H.build_config(dict(raw, learner="ews")))
    return [H.build_config(raw)]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _noise_label(config: H.ExperimentConfig) -> str:
    if isinstance(config.noise, nc.Constant):
        return repr(config.noise.eps)
    return config.noise.label()


def summary_row(s: H.RegretSummary) -> tuple:
    c = s.config
    return (
        c.setting_label, c.learner.label, c.adversary.name, c.K, c.T, _noise_label(c),
        L.learner_eta(c.learner), L.learner_theta(c.learner), len(s.per_seed),
        s.mean_regret, s.stderr, s.theoretical_bound, s.fitted_exponent,
    )


def render_csv(summaries: Sequence[H.RegretSummary]) -> str:
    if not summaries:
        raise ValueError("no summary rows to write")
    rows = sorted((summary_row(s) for s in summaries), key=lambda r: (r[4], r[3], r[1]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


def emit_csv(summaries: Sequence[H.RegretSummary], out_path) -> None:
    _write(out_path, render_csv(summaries))


def _report_defaults(configs, err) -> None:
    for c in configs:
        for key, source in sorted(c.sources.items()):
            value = L.learner_eta(c.learner) if key == "eta" else L.learner_theta(c.learner)
            print(f"# {c.learner.label}: {key} = {value!r} from {source}", file=err)


def _write(path, text) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def _output(text: str, out_path: Optional[str]) -> None:
    if out_path:
        _write(out_path, text)
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    configs = _load(args.config, args.set)
    _report_defaults(configs, sys.stderr)
    summaries = H.compare_learners(configs) if len(configs) > 1 else [H.replicate(configs[0])]
    _output(render_csv(summaries), args.out)
    return EXIT_OK


def _parse_grid(text: str) -> list[int]:
    key, sep, values = text.partition("=")
    if key.strip() != "T" or not sep:
        raise ConfigError(f"grid: expected T=v1,v2,..., got {text!r}")
    try:
        grid = sorted({int(float(v)) for v in values.split(",") if v.strip()})
    except ValueError:
        raise ConfigError(f"grid: non-numeric horizon in {values!r}") from None
    if len(grid) < 4:
        raise ConfigError(f"grid: need at least 4 horizons for an exponent fit, got {len(grid)}")
    return grid


def cmd_sweep(args) -> int:
    grid = _parse_grid(args.grid)
    configs = _load(args.config, args.set)
    summaries = []
    for c in configs:
        rows, (slope, _, r2) = H.sweep(c, grid)
        print(f"# {c.learner.label}: fitted exponent {slope!r} (r^2 {r2:.4f})", file=sys.stderr)
        summaries.extend(rows)
    _output(render_csv(summaries), args.out)
    return EXIT_OK


def cmd_bounds(args) -> int:
    c = _load(args.config, args.set)[0]
    b = H.theoretical_bound(c.setting, c.eps, c.T, c.K, c.dist, c.noise_known)
    value = "none" if b.value is None else f"{b.value!r}"
    line = f"{c.setting_label} K={c.K} T={c.T} noise={_noise_label(c)}: bound {value} [{b.formula}]"
    if b.warning:
        line += f" warning: {b.warning}"
    print(line)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import verify_suite

    return EXIT_OK if verify_suite() else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="noisyol", description="Online learning with noisy feedback: experiments and checks.")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("-c", "--config", required=True, help="flat TOML experiment file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        return sp

    run = with_config(sub.add_parser("run", help="replicate one configuration"))
    run.add_argument("-o", "--out", help="CSV output path (default stdout)")
    run.set_defaults(func=cmd_run)

    sw = with_config(sub.add_parser("sweep", help="replicate across horizons and fit the regret exponent"))
    sw.add_argument("--grid", required=True, help="horizons, e.g. T=1000,3000,10000,30000")
    sw.add_argument("-o", "--out", help="CSV output path (default stdout)")
    sw.set_defaults(func=cmd_sweep)

    b = with_config(sub.add_parser("bounds", help="print the theoretical regret bound"))
    b.set_defaults(func=cmd_bounds)

    v = sub.add_parser("verify", help="run the oracle self checks")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
