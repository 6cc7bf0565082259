"""Command-line entry point: ``entspec <command> [flags]``.

Every command resolves an effective configuration from built-in defaults,
an optional TOML file (``--config``) and explicit flags, in that order of
precedence, and echoes it in the output header.  Outputs contain no
timestamps, so a fixed command line and seed reproduce them byte for byte.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

from . import __version__
from .entropy import (bundle_entropy_curve, hitting_distribution_mc, prefix_phi, total_variation)
from .errors import ConfigError, EntspecError, TreeLikenessViolation
from .flags import entropy_spectrum, parse_lambda, poset_dot
from .lyapunov import load_matrix_distribution, lyapunov_qr
from .schreier import make_oracle, materialize_ball, sample_cover, verify_tree_like
from .words import RngStream, StepDistribution

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

DEFAULTS = {
    "spectrum": {"format": "json", "steps": 100_000, "replicas": 16},
    "free-entropy": {"ell": 2, "p": 1.0, "mu": "srw:2", "nmax": 10, "samples": 64, "threads": 1, "format": "csv"},
    "sweep": {"ell": 2, "mu": "srw:2", "p_grid": "0:1:0.1", "nmax": 10, "samples": 64, "threads": 1,
              "format": "csv"},
    "ball": {"oracle": "trivial", "radius": 2, "format": "dot"},
    "shadows": {"ell": 2, "p": 0.5, "mu": "srw:2", "sphere": 2, "t": "32,64,128", "horizon": 400, "margin": 8,
                "samples": 20_000, "format": "csv"},
    "lyapunov": {"steps": 100_000, "replicas": 16, "qr_period": 1, "burn_in": 0.1, "format": "csv"},
}


# ---------------------------------------------------------------------------
# configuration


def _load_config_file(path: str | None, command: str) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} not found")
    try:
        doc = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}")
    flat = {k.replace("-", "_"): v for k, v in doc.items() if not isinstance(v, dict)}
    section = doc.get(command) or doc.get(command.replace("-", "_")) or {}
    flat.update({k.replace("-", "_"): v for k, v in section.items()})
    return flat


def effective_config(command: str, args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[command])
    cfg.update(_load_config_file(args.config, command))
    for key, value in vars(args).items():
        if key in ("command", "config", "func") or value is None:
            continue
        cfg[key] = value
    return cfg


def _require(cfg: dict, *keys: str):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _int(cfg: dict, key: str, lo: int | None = None) -> int:
    try:
        v = int(cfg[key])
    except (TypeError, ValueError):
        raise ConfigError(f"--{key.replace('_', '-')} must be an integer, got {cfg[key]!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"--{key.replace('_', '-')} must be >= {lo}, got {v}")
    return v


def _prob(cfg: dict, key: str = "p") -> float:
    try:
        v = float(cfg[key])
    except (TypeError, ValueError):
        raise ConfigError(f"--{key} must be a number, got {cfg[key]!r}")
    if not 0.0 <= v <= 1.0:
        raise ConfigError(f"--{key} must lie in [0, 1], got {v}")
    return v


def parse_grid(spec: str) -> list[float]:
    """``lo:hi:step`` to an increasing grid that includes ``hi`` when it is hit."""
    try:
        lo, hi, step = (float(x) for x in str(spec).split(":"))
    except ValueError:
        raise ConfigError(f"--p-grid must look like lo:hi:step, got {spec!r}")
    if step <= 0 or lo > hi or lo < 0 or hi > 1:
        raise ConfigError(f"--p-grid {spec!r}: need 0 <= lo <= hi <= 1 and step > 0")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 12) for i in range(count)]


def _header(command: str, cfg: dict, prefix: str = "# ") -> str:
    lines = [f"entspec {__version__} {command}", "units: nats"]
    lines += [f"{k}={cfg[k]}" for k in sorted(cfg)]
    return "".join(prefix + line + "\n" for line in lines)


def _fmt(x: float) -> str:
    return repr(float(x))


def _csv(rows: list[list]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _emit(text: str, cfg: dict):
    out = cfg.get("out")
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _json_config(cfg: dict) -> dict:
    return {k: cfg[k] for k in sorted(cfg)}


# ---------------------------------------------------------------------------
# commands


def cmd_spectrum(cfg: dict) -> str:
    fmt = cfg["format"]
    if fmt not in ("json", "dot", "csv"):
        raise ConfigError(f"spectrum supports --format json|dot|csv, got {fmt}")
    if cfg.get("lambda") is not None:
        lam = parse_lambda(str(cfg["lambda"]))
        d = _int(cfg, "d", 2) if cfg.get("d") is not None else len(lam)
    elif cfg.get("dist") is not None:
        dist = load_matrix_distribution(str(cfg["dist"]))
        if dist.atoms is None or len(dist.atoms) > 1:
            _require(cfg, "seed")
        spec = lyapunov_qr(dist, _int(cfg, "steps", 1), 1, _int(cfg, "replicas", 1),
                           RngStream(int(cfg.get("seed") or 0)))
        lam = [float(x) for x in spec.exponents]
        lam = [x - sum(lam) / len(lam) for x in lam]  # project onto the zero-sum hyperplane
        d = dist.d
        cfg = dict(cfg, lambda_estimated=",".join(_fmt(x) for x in lam))
    else:
        raise ConfigError("spectrum needs --lambda or --dist")
    if len(lam) != d:
        raise ConfigError(f"--d {d} but {len(lam)} exponents given")
    report = entropy_spectrum(lam, d)
    if fmt == "dot":
        return _header("spectrum", cfg, "// ") + poset_dot(d)
    if fmt == "json":
        return report.to_json(_json_config(cfg))
    rows = [["I", "blocks", "fI", "h_lo", "h_hi"]]
    for r in report.rows:
        rows.append([" ".join(map(str, sorted(r["I"]))), " ".join(map(str, r["blocks"])),
                     " ".join(map(str, sorted(r["fI"]))), _fmt(r["h_lo"]), _fmt(r["h_hi"])])
    summary = "".join(f"# merged=[{_fmt(lo)},{_fmt(hi)}]\n" for lo, hi in report.merged)
    summary += "".join(f"# point={_fmt(p)}\n" for p in report.points)
    return _header("spectrum", cfg) + summary + _csv(rows)


def _mu(cfg: dict) -> StepDistribution:
    return StepDistribution.parse(str(cfg["mu"]))


def cmd_free_entropy(cfg: dict) -> str:
    _require(cfg, "seed")
    ell, p = _int(cfg, "ell", 2), _prob(cfg)
    curve = bundle_entropy_curve(ell, p, _mu(cfg), _int(cfg, "nmax", 1), _int(cfg, "samples", 1),
                                 int(cfg["seed"]), threads=_int(cfg, "threads", 1))
    n, _, inc, ci = curve.rows[-1]
    rows = [["n", "H_n", "increment", "ci"]] + [[r[0], _fmt(r[1]), _fmt(r[2]), _fmt(r[3])] for r in curve.rows]
    summary = f"# summary: estimate={_fmt(inc)} ci={_fmt(ci)} n={n}\n"
    return _header("free-entropy", cfg) + summary + _csv(rows)


def cmd_sweep(cfg: dict) -> str:
    _require(cfg, "seed")
    ell, mu = _int(cfg, "ell", 2), _mu(cfg)
    nmax, samples = _int(cfg, "nmax", 1), _int(cfg, "samples", 1)
    rows = [["p", "estimate", "ci", "diff_prev"]]
    prev = None
    for p in parse_grid(cfg["p_grid"]):
        curve = bundle_entropy_curve(ell, p, mu, nmax, samples, int(cfg["seed"]),
                                     threads=_int(cfg, "threads", 1))
        _, _, inc, ci = curve.rows[-1]
        rows.append([_fmt(p), _fmt(inc), _fmt(ci), "" if prev is None else _fmt(abs(inc - prev))])
        prev = inc
    return _header("sweep", cfg) + _csv(rows)


def cmd_ball(cfg: dict) -> str:
    spec = str(cfg["oracle"])
    if spec.startswith(("cover", "bernoulli")):
        _require(cfg, "seed")
    oracle = make_oracle(spec, 2, None if cfg.get("seed") is None else int(cfg["seed"]))
    ball = materialize_ball(oracle, _int(cfg, "radius", 0))
    if not verify_tree_like(ball):
        raise TreeLikenessViolation(f"ball of {oracle.describe()} is not tree-like")
    fmt = cfg["format"]
    if fmt == "dot":
        return _header("ball", cfg, "// ") + ball.to_dot()
    if fmt == "csv":
        rows = [["vertex", "letter", "target", "is_loop"]]
        rows += [[v or "e", s, t or "e", loop] for v, s, t, loop in ball.to_rows()]
        return _header("ball", cfg) + _csv(rows)
    doc = {"config": _json_config(cfg), "radius": ball.radius, "vertices": ball.vertices,
           "edges": [{"vertex": v, "letter": s, "target": t, "is_loop": bool(loop)}
                     for v, s, t, loop in ball.to_rows()]}
    return json.dumps(doc, indent=2) + "\n"


def cmd_shadows(cfg: dict) -> str:
    _require(cfg, "seed")
    ell, p, mu = _int(cfg, "ell", 2), _prob(cfg), _mu(cfg)
    n, horizon, margin = _int(cfg, "sphere", 1), _int(cfg, "horizon", 1), _int(cfg, "margin", 0)
    samples, seed = _int(cfg, "samples", 1), int(cfg["seed"])
    try:
        ts = [int(x) for x in str(cfg["t"]).split(",")]
    except ValueError:
        raise ConfigError(f"--t must be a comma-separated list of integers, got {cfg['t']!r}")
    oracle = sample_cover(ell, p, seed, 0)
    hit = hitting_distribution_mc(oracle, mu, n, horizon, margin, samples, RngStream(seed, 1))
    rows = [["t", "cell", "prefix_phi", "hitting_mc", "tv", "undecided_phi", "undecided_hit"]]
    for t in ts:
        phi = prefix_phi(oracle, mu, n, t, samples, RngStream(seed, 2))
        tv = total_variation(phi.masses, hit.masses)
        for cell in sorted(set(phi.masses) | set(hit.masses)):
            rows.append([t, cell, _fmt(phi.masses.get(cell, 0.0)), _fmt(hit.masses.get(cell, 0.0)), _fmt(tv),
                         _fmt(phi.undecided_fraction), _fmt(hit.undecided_fraction)])
    warn = "# warning: more than half of the hitting samples undecided\n" if hit.warning else ""
    return _header("shadows", cfg) + f"# oracle={oracle.describe()}\n" + warn + _csv(rows)


def cmd_lyapunov(cfg: dict) -> str:
    _require(cfg, "dist")
    dist = load_matrix_distribution(str(cfg["dist"]))
    if dist.atoms is None or len(dist.atoms) > 1:
        _require(cfg, "seed")
    spec = lyapunov_qr(dist, _int(cfg, "steps", 1), _int(cfg, "qr_period", 1), _int(cfg, "replicas", 1),
                       RngStream(int(cfg.get("seed") or 0)), burn_in=float(cfg["burn_in"]))
    if cfg["format"] == "json":
        doc = {"config": _json_config(cfg), "exponents": [float(x) for x in spec.exponents],
               "ci": [float(c) for c in spec.ci_halfwidths], "steps_used": spec.steps_used}
        return json.dumps(doc, indent=2) + "\n"
    rows = [["index", "value", "ci"]] + [[i, _fmt(x), _fmt(c)] for i, x, c in spec.rows()]
    return _header("lyapunov", cfg) + _csv(rows)


COMMANDS = {
    "spectrum": cmd_spectrum,
    "free-entropy": cmd_free_entropy,
    "sweep": cmd_sweep,
    "ball": cmd_ball,
    "shadows": cmd_shadows,
    "lyapunov": cmd_lyapunov,
}


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="entspec", description="Furstenberg entropy spectra experiments.")
    parser.add_argument("--version", action="version", version=f"entspec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML file with default options; flags override it")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output file (default stdout)")
        p.add_argument("--format", choices=["csv", "json", "dot"])
        return p

    p = common(sub.add_parser("spectrum", help="entropy spectrum of SL(d,R) from exponents"))
    p.add_argument("--d", type=int)
    p.add_argument("--lambda", dest="lambda", help="comma-separated exponents, e.g. 1,0,-1")
    p.add_argument("--dist", help="matrix distribution to estimate exponents from")
    p.add_argument("--steps", type=int)
    p.add_argument("--replicas", type=int)

    for name in ("free-entropy", "sweep"):
        p = common(sub.add_parser(name, help="Poisson-bundle entropy of Bernoulli covers"))
        p.add_argument("--ell", type=int)
        p.add_argument("--mu")
        p.add_argument("--nmax", type=int)
        p.add_argument("--samples", type=int)
        p.add_argument("--threads", type=int)
        if name == "free-entropy":
            p.add_argument("--p", type=float)
        else:
            p.add_argument("--p-grid", dest="p_grid")

    p = common(sub.add_parser("ball", help="Schreier graph ball"))
    p.add_argument("--oracle")
    p.add_argument("--radius", type=int)

    p = common(sub.add_parser("shadows", help="shadow masses: prefix approximation vs hitting distribution"))
    p.add_argument("--ell", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--mu")
    p.add_argument("--sphere", type=int)
    p.add_argument("--t")
    p.add_argument("--horizon", type=int)
    p.add_argument("--margin", type=int)
    p.add_argument("--samples", type=int)

    p = common(sub.add_parser("lyapunov", help="Lyapunov spectrum by QR"))
    p.add_argument("--dist")
    p.add_argument("--steps", type=int)
    p.add_argument("--replicas", type=int)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = effective_config(args.command, args)
        text = COMMANDS[args.command](cfg)
        _emit(text, cfg)
    except EntspecError as exc:
        print(f"entspec: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"entspec: error: {exc}", file=sys.stderr)
        return 2
    except AssertionError as exc:
        print(f"entspec: internal assertion failed: {exc}", file=sys.stderr)
        return 4
    return 0
