"""Command-line front end.

Every command evaluates one quantity per seed (in parallel when ``--jobs``
allows), collects the rows in seed order and writes a single CSV or JSON
document whose header records all parameters.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np

from . import __version__, anderson, noise, schtau, stats

COMMANDS = (
    "schtau-simulate",
    "schtau-intensity",
    "schtau-resolvent",
    "shape-sample",
    "anderson-spectrum",
    "anderson-shape",
    "compare-critical",
    "top-regime",
    "norm-demo",
)
E_RULES = ("L/tau", "L^2")
SEED_OFFSET_ENV = "SCHTAU_SEED_OFFSET"


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    tau: float | None = None
    L: float | None = None
    E: float | None = None
    E_rule: str | None = None
    window: tuple[float, float] | None = None
    n_steps: int = 10_000
    N: int | None = None
    seeds: tuple[int, int] = (1, 1)
    output: str | None = None
    format: str = "csv"
    jobs: int | None = None
    z: complex = 1j
    E_prime: float | None = None
    n: int = 0
    lattice: bool = False

    def energy(self) -> float:
        if self.E is not None:
            return self.E
        if self.E_rule == "L/tau":
            return self.L / self.tau
        return self.L ** 2

    def seed_list(self) -> list[int]:
        return list(range(self.seeds[0], self.seeds[1] + 1))


# ---------------------------------------------------------------- parsing

_KEY_ALIASES = {"e-rule": "E_rule", "e_rule": "E_rule", "n-steps": "n_steps", "e-prime": "E_prime", "e_prime": "E_prime"}
_FIELD_NAMES = {f.name for f in fields(ExperimentConfig)}


def _canonical_key(key: str) -> str:
    k = key.strip()
    if k in _FIELD_NAMES:
        return k
    low = k.lower()
    if low in _KEY_ALIASES:
        return _KEY_ALIASES[low]
    for name in _FIELD_NAMES:
        if name.lower() == low.replace("-", "_"):
            return name
    raise ConfigError(f"unknown configuration key: {key!r}")


def parse_seeds(text: str) -> tuple[int, int]:
    s = str(text).strip()
    if ".." in s:
        a, b = s.split("..", 1)
        lo, hi = int(a), int(b)
    else:
        lo = hi = int(s)
    if hi < lo:
        raise ConfigError(f"empty seed range {s!r}")
    return lo, hi


def parse_complex(text: str) -> complex:
    s = str(text).strip().replace(" ", "")
    if s.endswith("i"):
        s = s[:-1] + "j"
        if s in ("j", "+j", "-j"):
            s = s.replace("j", "1j")
    return complex(s)


def _convert(key: str, value):
    if value is None:
        return None
    try:
        if key in ("tau", "L", "E", "E_prime"):
            return float(value)
        if key in ("n_steps", "N", "jobs", "n"):
            return int(value)
        if key == "window":
            if isinstance(value, str):
                value = value.replace(",", " ").split()
            a, b = (float(v) for v in value)
            return (a, b)
        if key == "seeds":
            return value if isinstance(value, tuple) else parse_seeds(value)
        if key == "z":
            return parse_complex(value)
        if key == "lattice":
            if isinstance(value, bool):
                return value
            return str(value).strip().lower() in ("1", "true", "yes", "on")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value for {key}: {value!r}") from exc
    return str(value)


def read_config_file(path: str) -> dict:
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[_canonical_key(key)] = value.strip()
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cstau", description="Simulate critical random spectra.")
    p.add_argument("command", nargs="?", choices=COMMANDS)
    p.add_argument("--config", help="plain-text file of 'key = value' lines")
    p.add_argument("--tau", type=float)
    p.add_argument("--L", type=float)
    energy = p.add_mutually_exclusive_group()
    energy.add_argument("--E", type=float)
    energy.add_argument("--E-rule", dest="E_rule", choices=E_RULES)
    p.add_argument("--window", type=float, nargs=2, metavar=("A", "B"))
    p.add_argument("--n-steps", dest="n_steps", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--seeds", help="inclusive range a..b or a single seed")
    p.add_argument("--output", "-o")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--jobs", type=int)
    p.add_argument("--z", help="nonreal spectral parameter, e.g. 1j or 0.5+2i")
    p.add_argument("--E-prime", dest="E_prime", type=float)
    p.add_argument("--n", type=int, help="winding class of the shape sampler")
    p.add_argument("--lattice", action="store_const", const=True, default=None, help="recentre with the lattice dispersion")
    return p


def _validate(cfg: ExperimentConfig) -> None:
    c = cfg.command

    def need(*names):
        for name in names:
            if getattr(cfg, name) is None:
                raise ConfigError(f"{c} requires {name}")

    if cfg.format not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {cfg.format!r}")
    if cfg.E is not None and cfg.E_rule is not None:
        raise ConfigError("E and E_rule are mutually exclusive")
    if cfg.E_rule is not None and cfg.E_rule not in E_RULES:
        raise ConfigError(f"E_rule must be one of {E_RULES}")
    if cfg.n_steps < 1:
        raise ConfigError("n_steps must be positive")
    if cfg.jobs is not None and cfg.jobs < 1:
        raise ConfigError("jobs must be positive")
    if cfg.window is not None and not cfg.window[0] < cfg.window[1]:
        raise ConfigError("window must satisfy a < b")
    if c in ("schtau-simulate", "schtau-intensity"):
        need("tau", "window")
    if c in ("schtau-resolvent", "shape-sample", "norm-demo"):
        need("tau")
    if c in ("anderson-spectrum", "anderson-shape", "compare-critical", "top-regime"):
        need("L")
        if cfg.E is None and cfg.E_rule is None and c != "top-regime":
            raise ConfigError(f"{c} requires E or E_rule")
        if cfg.E_rule == "L/tau" or c == "compare-critical":
            need("tau")
    if c == "norm-demo":
        need("E_prime")
    for name in ("tau", "L", "E", "N", "E_prime"):
        v = getattr(cfg, name)
        if v is None:
            continue
        if name == "tau" and v < 0:
            raise ConfigError("tau must be >= 0")
        if name != "tau" and v <= 0:
            raise ConfigError(f"{name} must be positive")
    if c in ("schtau-intensity", "shape-sample", "compare-critical", "schtau-resolvent", "norm-demo") and cfg.tau is not None and cfg.tau <= 0:
        raise ConfigError(f"{c} requires tau > 0")
    if c in ("schtau-resolvent", "norm-demo") and cfg.z.imag == 0:
        raise ConfigError("z must be nonreal")


def parse_config(argv, config_file: str | None = None) -> ExperimentConfig:
    """Merge a config file (if any) with command-line flags; flags win."""
    args = build_parser().parse_args(list(argv))
    values = {}
    path = args.config or config_file
    if path:
        values.update(read_config_file(path))
    for key, val in vars(args).items():
        if key == "config" or val is None:
            continue
        values[key] = val
    if "command" not in values:
        raise ConfigError("no command given")
    if values["command"] not in COMMANDS:
        raise ConfigError(f"unknown command {values['command']!r}")
    kwargs = {}
    for key, val in values.items():
        key = _canonical_key(key)
        kwargs[key] = _convert(key, val) if key != "command" else val
    kwargs = {k: v for k, v in kwargs.items() if v is not None}
    cfg = ExperimentConfig(**kwargs)
    _validate(cfg)
    return cfg


def _format_value(v) -> str:
    if isinstance(v, tuple) and len(v) == 2 and all(isinstance(x, int) for x in v):
        return f"{v[0]}..{v[1]}"
    if isinstance(v, tuple):
        return " ".join(repr(float(x)) for x in v)
    if isinstance(v, complex):
        return repr(v).strip("()")
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_config(cfg: ExperimentConfig) -> str:
    """Config-file text that parses back to ``cfg``."""
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if v is None:
            continue
        lines.append(f"{f.name} = {_format_value(v)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- workers


def _sim_worker(args):
    seed, cfg = args
    b = noise.sample_bundle(seed, cfg.n_steps)
    lams = schtau.locate_eigenvalues(b, cfg.tau, cfg.window)
    return [(seed, i, float(x)) for i, x in enumerate(lams)]


def _resolvent_worker(args):
    seed, cfg = args
    b = noise.sample_bundle(seed, cfg.n_steps)
    rows = []
    for lam in schtau.locate_eigenvalues(b, cfg.tau, cfg.window):
        sp = schtau.eigenvector(b, cfg.tau, lam)
        out = schtau.resolvent_apply(b, cfg.tau, cfg.z, sp.psi)
        err = out - sp.psi / (lam - cfg.z)
        rel = math.sqrt(float(np.trapezoid(np.sum(np.abs(err) ** 2, axis=1), sp.grid)))
        rows.append((seed, float(lam), rel))
    return rows


def _shape_worker(args):
    seed, cfg = args
    s = schtau.sample_universal_shape(cfg.tau, cfg.n, seed, cfg.n_steps)
    prof = np.sum(s.X ** 2, axis=1)
    fit = stats.shape_fit(prof, s.grid)
    return [(seed, s.U, fit.center_hat, fit.decay_rate_hat)]


def _anderson_N(cfg: ExperimentConfig) -> int:
    return cfg.N if cfg.N is not None else anderson.default_N(cfg.L, cfg.energy())


def _anderson_worker(args):
    seed, cfg = args
    E = cfg.energy()
    N = _anderson_N(cfg)
    m = anderson.discretize(cfg.L, N, seed)
    rc = anderson.recentring(E, cfg.L, m.h if cfg.lattice else None)
    lo, hi = rc.to_mu(cfg.window[0]), rc.to_mu(cfg.window[1])
    pairs = anderson.eigen_window(m, float(lo), float(hi))
    if cfg.command == "anderson-spectrum":
        return [(seed, p.mu, float(rc.to_lambda(p.mu))) for p in pairs]
    rows = []
    for p in pairs:
        r = anderson.rescale_pair(p, rc, N)
        fit = stats.shape_fit(r.profile, r.grid)
        rows.append((seed, r.lam, fit.center_hat, fit.decay_rate_hat, int(p.converged)))
    return rows


def _values_worker(args):
    seed, cfg = args
    E = cfg.energy()
    return anderson.spectrum_values(cfg.L, E, _anderson_N(cfg), seed, cfg.window, cfg.lattice)


def _sch_values_worker(args):
    seed, cfg = args
    return schtau.locate_eigenvalues(noise.sample_bundle(seed, cfg.n_steps), cfg.tau, cfg.window)


def _norm_worker(args):
    seed, cfg = args
    b = noise.sample_bundle(seed, cfg.n_steps)
    ext, lim = stats.norm_resolvent_demo(b, cfg.tau, cfg.E_prime, cfg.z)
    return [(seed, ext, lim)]


def _map(fn, cfg: ExperimentConfig, seeds) -> list:
    jobs = cfg.jobs or os.cpu_count() or 1
    items = [(s, cfg) for s in seeds]
    if jobs == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


# ---------------------------------------------------------------- output


def _flatten(chunks):
    return [row for chunk in chunks for row in chunk]


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render(meta: dict, columns, rows, fmt: str) -> str:
    if fmt == "json":
        doc = {"metadata": meta, "columns": list(columns), "rows": [list(r) for r in rows]}
        return json.dumps(doc, indent=1, sort_keys=False) + "\n"
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}: {v}\n")
    buf.write(",".join(columns) + "\n")
    for r in rows:
        buf.write(",".join(_cell(v) for v in r) + "\n")
    return buf.getvalue()


def _metadata(cfg: ExperimentConfig, offset: int) -> dict:
    meta = {"version": __version__, "command": cfg.command}
    for f in fields(cfg):
        if f.name in ("command", "output", "format", "jobs"):
            continue
        v = getattr(cfg, f.name)
        if v is not None:
            meta[f.name] = _format_value(v)
    meta["seed_offset"] = offset
    meta.update(noise.metadata())
    return meta


def execute(cfg: ExperimentConfig) -> tuple[dict, list, list]:
    """Run one command; returns metadata, column names and rows."""
    offset = int(os.environ.get(SEED_OFFSET_ENV, "0"))
    seeds = [s + offset for s in cfg.seed_list()]
    meta = _metadata(cfg, offset)
    c = cfg.command

    if c in ("anderson-spectrum", "anderson-shape", "compare-critical", "top-regime"):
        if c == "top-regime" and cfg.E is None and cfg.E_rule is None:
            cfg = replace(cfg, E_rule="L^2")
        if cfg.window is None:
            cfg = replace(cfg, window=(-4 * math.pi, 4 * math.pi))
        E = cfg.energy()
        N = _anderson_N(cfg)
        rc = anderson.recentring(E, cfg.L, cfg.L / (N + 1) if cfg.lattice else None)
        meta.update(E=repr(E), N=N, ell_E=repr(rc.ell_E), E_prime=repr(rc.E_prime))
        meta["window"] = _format_value(cfg.window)

    if c == "schtau-simulate":
        return meta, ("seed", "index", "lambda"), _flatten(_map(_sim_worker, cfg, seeds))
    if c == "schtau-intensity":
        lams = np.linspace(cfg.window[0], cfg.window[1], 1001)
        prof = schtau.intensity_density(cfg.tau, lams)
        meta["truncation_N"] = prof.truncation_N
        return meta, ("lambda", "density"), [(float(a), float(b)) for a, b in zip(lams, prof.density)]
    if c == "schtau-resolvent":
        if cfg.window is None:
            cfg = replace(cfg, window=(-math.pi, math.pi))
            meta["window"] = _format_value(cfg.window)
        return meta, ("seed", "lambda", "rel_error"), _flatten(_map(_resolvent_worker, cfg, seeds))
    if c == "shape-sample":
        return meta, ("seed", "U", "center_hat", "decay_rate_hat"), _flatten(_map(_shape_worker, cfg, seeds))
    if c == "anderson-spectrum":
        return meta, ("seed", "mu", "lambda"), _flatten(_map(_anderson_worker, cfg, seeds))
    if c == "anderson-shape":
        cols = ("seed", "lambda", "center_hat", "decay_rate_hat", "converged")
        return meta, cols, _flatten(_map(_anderson_worker, cfg, seeds))
    if c == "top-regime":
        vals = _map(_values_worker, cfg, seeds)
        rows = [(s, len(v), stats.picket_fence_deviation(v)) for s, v in zip(seeds, vals)]
        return meta, ("seed", "n_points", "deviation"), rows
    if c == "compare-critical":
        and_vals = _map(_values_worker, cfg, seeds)
        sch_vals = _map(_sch_values_worker, cfg, seeds)
        ga = stats.pooled_spacings(and_vals, cfg.window)
        gs = stats.pooled_spacings(sch_vals, cfg.window)
        ks = stats.ks_distance(ga, gs) if ga.size and gs.size else float("nan")
        return meta, ("L", "n_anderson_gaps", "n_sch_gaps", "ks"), [(cfg.L, int(ga.size), int(gs.size), ks)]
    if c == "norm-demo":
        meta["g_norm_squared"] = repr(stats.g_E_norm_squared(cfg.E_prime))
        return meta, ("seed", "norm_extended", "norm_limit"), _flatten(_map(_norm_worker, cfg, seeds))
    raise ConfigError(f"unknown command {c!r}")


def run(cfg: ExperimentConfig) -> int:
    meta, cols, rows = execute(cfg)
    text = render(meta, cols, rows, cfg.format)
    if cfg.output in (None, "-"):
        sys.stdout.write(text)
        return 0
    with open(cfg.output, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    try:
        cfg = parse_config(argv)
    except SystemExit as exc:  # argparse already printed usage
        return int(exc.code or 0)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"cstau: error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(cfg)
    except (OSError, ArithmeticError, ValueError, RuntimeError) as exc:
        print(f"cstau: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
