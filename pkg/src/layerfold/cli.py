"""Command line entry point.

    layerfold <subcommand> [--config FILE] [--key value ...] --out DIR

Parameters come from a flat JSON object in ``--config``; ``--key value``
flags override file values.  Every subcommand writes CSV files and a
``manifest.json`` into ``--out``.

Exit codes: 0 success, 1 solver failure, 2 invariant violation,
3 configuration error (nothing is written).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, InvariantViolation, SolverError

EXIT_OK, EXIT_SOLVER, EXIT_INVARIANT, EXIT_CONFIG = 0, 1, 2, 3
REQUIRED = object()


@dataclass(frozen=True)
class Param:
    kind: type
    default: object = REQUIRED
    check: object = None  # callable returning an error string or None
    choices: tuple = ()


def _positive(v):
    return None if v > 0 else "must be > 0"


def _nonnegative(v):
    return None if v >= 0 else "must be >= 0"


def _odd_nodes(v):
    return None if v >= 5 and v % 2 == 1 else "must be an odd integer >= 5"


def _at_least(n):
    return lambda v: None if v >= n else f"must be >= {n}"


def _friction(v):
    return None if 0 < v <= 2 else "must lie in (0, 2]"


MODE = Param(str, "nonlinear", choices=("nonlinear", "linearized"))
KINK = {
    "b": Param(float, 1.0, _positive),
    "t": Param(float, 0.01, _positive),
    "n_layers": Param(int, 100, _positive),
    "k": Param(float, 1.0, _positive),
    "q": Param(float, 1.0, _positive),
    "mu": Param(float, 0.57, _friction),
}

SCHEMAS: dict[str, dict[str, Param]] = {
    "solve-single": {
        "B": Param(float, REQUIRED, _positive),
        "q": Param(float, REQUIRED, _positive),
        "m": Param(float, REQUIRED, _nonnegative),
        "mode": MODE,
        "n_nodes": Param(int, None, _odd_nodes),
        "half_width": Param(float, None, _positive),
        "nodes_per_void": Param(int, 200, _at_least(10)),
        "domain_factor": Param(float, 3.0, _at_least(1.5)),
        "max_iter": Param(int, 1000, _at_least(1)),
    },
    "sweep-scaling": {
        "B": Param(float, 1.0, _positive),
        "m": Param(float, 0.3, _positive),
        "q_min": Param(float, 1.0, _positive),
        "q_max": Param(float, 100.0, _positive),
        "n_points": Param(int, 9, _at_least(1)),
        "mode": MODE,
        "nodes_per_void": Param(int, 200, _at_least(10)),
        "domain_factor": Param(float, 3.0, _at_least(1.5)),
    },
    "kinkband-path": {
        **KINK,
        "alpha_min": Param(float, 0.01, _positive),
        "alpha_max": Param(float, 1.5, _positive),
        "n_points": Param(int, 150, _at_least(2)),
    },
    "kinkband-maxwell": dict(KINK),
    "multilayer-solve": {
        "K": Param(int, 6, _at_least(1)),
        "B": Param(float, 1.0, _positive),
        "t": Param(float, 0.02, _positive),
        "q": Param(float, 1.0, _positive),
        "m": Param(float, 0.3, _nonnegative),
        "mode": MODE,
        "n_nodes": Param(int, 401, _odd_nodes),
        "domain_factor": Param(float, 3.0, _at_least(1.5)),
        "max_iter": Param(int, 1000, _at_least(1)),
    },
    "packet-optimum": {
        "c_bend": Param(float, 0.01, _nonnegative),
        "c_void": Param(float, 1.0, _nonnegative),
        "B": Param(float, 1.0, _positive),
        "q": Param(float, 1.0, _positive),
        "m": Param(float, 1.0, _positive),
        "n_max": Param(int, 1000, _at_least(2)),
    },
}
COMMON = {"seed": Param(int, 0)}


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    parameters: dict
    output_dir: Path
    seed: int = 0
    sources: dict = field(default_factory=dict)


def _coerce(name, raw, spec: Param):
    if raw is None:
        return None
    if spec.kind is str:
        val = str(raw)
    elif spec.kind is int:
        if isinstance(raw, bool):
            raise ValueError(f"{name}: expected an integer, got {raw!r}")
        val = float(raw) if isinstance(raw, str) else raw
        if isinstance(val, float):
            if not val.is_integer():
                raise ValueError(f"{name}: expected an integer, got {raw!r}")
            val = int(val)
        elif not isinstance(val, int):
            raise ValueError(f"{name}: expected an integer, got {raw!r}")
    else:
        if isinstance(raw, bool):
            raise ValueError(f"{name}: expected a number, got {raw!r}")
        try:
            val = float(raw)
        except (TypeError, ValueError):
            raise ValueError(f"{name}: expected a number, got {raw!r}") from None
        if not math.isfinite(val):
            raise ValueError(f"{name}: must be finite")
    return val


def _parse_flags(tokens) -> dict:
    out, problems = {}, []
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or len(tok) == 2:
            problems.append(f"unexpected argument {tok!r}")
            i += 1
            continue
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        elif i + 1 < len(tokens):
            val = tokens[i + 1]
            i += 2
        else:
            problems.append(f"flag --{key} has no value")
            i += 1
            continue
        out[key] = val
    if problems:
        raise ConfigError(problems)
    return out


def parse_config(subcommand: str, config_file=None, overrides=None, output_dir=None) -> RunConfig:
    """Merge file values and flag overrides, then validate everything at once.

    Raises :class:`ConfigError` listing every problem found.
    """
    if subcommand not in SCHEMAS:
        raise ConfigError(f"unknown subcommand {subcommand!r}; choose from {sorted(SCHEMAS)}")
    schema = {**SCHEMAS[subcommand], **COMMON}
    problems = []
    values, sources = {}, {}
    if config_file is not None:
        try:
            data = json.loads(Path(config_file).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {config_file}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a single JSON object")
        for k, v in data.items():
            values[k], sources[k] = v, "file"
    for k, v in (overrides or {}).items():
        values[k], sources[k] = v, "flag"

    unknown = sorted(set(values) - set(schema))
    if unknown:
        problems.append(f"unknown keys for {subcommand}: {', '.join(unknown)}")
    params = {}
    missing = []
    for name, spec in schema.items():
        if name not in values:
            if spec.default is REQUIRED:
                missing.append(name)
                continue
            params[name] = spec.default
            sources.setdefault(name, "default")
            continue
        try:
            val = _coerce(name, values[name], spec)
        except ValueError as exc:
            problems.append(str(exc))
            continue
        if val is not None:
            if spec.choices and val not in spec.choices:
                problems.append(f"{name}: must be one of {', '.join(spec.choices)}, got {val!r}")
                continue
            if spec.check is not None:
                err = spec.check(val)
                if err:
                    problems.append(f"{name}={val}: {err}")
                    continue
        params[name] = val
    if missing:
        problems.append(f"missing required keys for {subcommand}: {', '.join(missing)}")
    problems.extend(_cross_checks(subcommand, params))
    if output_dir is None:
        problems.append("missing --out directory")
    if problems:
        raise ConfigError(problems)
    seed = params.pop("seed")
    return RunConfig(subcommand, params, Path(output_dir), seed, sources)


def _cross_checks(sub, p):
    out = []
    if sub == "sweep-scaling" and {"q_min", "q_max"} <= p.keys() and p["q_max"] <= p["q_min"]:
        out.append("q_max must exceed q_min")
    if sub == "kinkband-path" and {"alpha_min", "alpha_max"} <= p.keys():
        if not p["alpha_min"] < p["alpha_max"] < math.pi / 2:
            out.append("need 0 < alpha_min < alpha_max < pi/2")
    if sub == "packet-optimum" and {"c_bend", "c_void"} <= p.keys() and p["c_bend"] + p["c_void"] == 0:
        out.append("c_bend and c_void cannot both be zero")
    return out


# --- output -------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


# --- subcommands ----------------------------------------------------------------

def _solve_single(p, out):
    from .model import ElasticaProblem
    from .solver import SolverOptions, certify, solve

    prob = ElasticaProblem.from_parameters(
        p["B"], p["q"], p["m"], mode=p["mode"], half_width=p["half_width"],
        n_nodes=p["n_nodes"], nodes_per_void=p["nodes_per_void"], domain_factor=p["domain_factor"])
    opts = SolverOptions(max_iter=p["max_iter"])
    sol = solve(prob, opts)
    checks = certify(sol, opts)
    if not checks["single_interval"]:
        raise InvariantViolation("void set is not a single interval")
    iv, e = sol.void_interval, sol.energy
    write_csv(out / "solution.csv",
              ["B", "q", "m", "mode", "n_nodes", "half_width", "void_left", "void_right",
               "void_length", "corner_gap", "bending", "pressure", "energy", "iterations",
               "converged", "convex", "kkt_residual"],
              [[prob.B, prob.q, prob.obstacle.slope, prob.mode, prob.n_nodes, prob.half_width,
                iv.x_left, iv.x_right, iv.length, sol.corner_gap, e.bending, e.pressure, e.total,
                sol.iterations, sol.converged, checks["convex"], sol.kkt.worst]])
    write_csv(out / "field.csv", ["x", "w", "f", "gap", "multiplier"],
              zip(prob.x, sol.w.values, prob.f, sol.gap, sol.multipliers))
    return ["solution.csv", "field.csv"], EXIT_OK


def _sweep_scaling(p, out):
    from .scaling import scaling_sweep

    records, fit = scaling_sweep(
        B=p["B"], m=p["m"], q_min=p["q_min"], q_max=p["q_max"], n_points=p["n_points"],
        mode=p["mode"], nodes_per_void=p["nodes_per_void"], domain_factor=p["domain_factor"])
    write_csv(out / "sweep.csv", ["B", "q", "m", "void_length", "corner_gap", "energy", "converged"],
              [[r.B, r.q, r.m, r.void_length, r.corner_gap, r.total_energy, r.converged]
               for r in records])
    files = ["sweep.csv"]
    if fit is not None:
        write_csv(out / "fit.csv", ["exponent", "stderr", "r2", "n_points"],
                  [[fit.exponent, fit.stderr, fit.r2, fit.n_points]])
        files.append("fit.csv")
    ok = all(r.converged for r in records)
    return files, EXIT_OK if ok else EXIT_SOLVER


def _kink_params(p):
    from .kinkband import KinkBandParams
    return KinkBandParams(**{k: p[k] for k in KINK})


def _kinkband_path(p, out):
    from .kinkband import equilibrium_path

    params = _kink_params(p)
    alphas = np.linspace(p["alpha_min"], p["alpha_max"], p["n_points"])
    path = equilibrium_path(params, alphas)
    write_csv(out / "path.csv", ["alpha", "beta", "Delta", "P", "energy"],
              [[pt.alpha, pt.beta, pt.Delta, pt.P, pt.energy] for pt in path])
    return ["path.csv"], EXIT_OK


def _kinkband_maxwell(p, out):
    from .kinkband import CRITICAL_ANGLE, maxwell_displacement, minimum_load

    params = _kink_params(p)
    mp = maxwell_displacement(params)
    write_csv(out / "maxwell.csv", ["Delta_M", "alpha_M", "beta_M", "P_min", "alpha_min_load"],
              [[mp.Delta_M, mp.alpha_M, mp.beta_M, minimum_load(params), CRITICAL_ANGLE]])
    return ["maxwell.csv"], EXIT_OK


def _multilayer_solve(p, out):
    from .multilayer import MultilayerProblem, solve_multilayer, void_census
    from .solver import SolverOptions

    prob = MultilayerProblem.from_parameters(p["K"], p["B"], p["t"], p["q"], p["m"], mode=p["mode"],
                                             n_nodes=p["n_nodes"], domain_factor=p["domain_factor"])
    sol = solve_multilayer(prob, SolverOptions(max_iter=p["max_iter"]))
    census = void_census(sol)
    write_csv(out / "census.csv", ["interface", "void_length", "void_area", "runs"],
              [[r.interface, r.void_length, r.void_area, r.runs] for r in census.interfaces])
    write_csv(out / "multilayer.csv",
              ["K", "energy", "pattern", "outer_iterations", "iterations", "converged", "kkt_residual"],
              [[prob.K, sol.energy, census.pattern, sol.outer_iterations, sol.iterations,
                sol.converged, sol.kkt.worst]])
    write_csv(out / "layers.csv", ["x"] + [f"w{j + 1}" for j in range(prob.K)],
              zip(prob.x, *[w.values for w in sol.fields]))
    return ["census.csv", "multilayer.csv", "layers.csv"], EXIT_OK


def _packet_optimum(p, out):
    from .multilayer import (PacketCoefficients, continuous_packet_optimum, optimal_packet,
                             packet_energy)

    coeffs = PacketCoefficients(p["c_bend"], p["c_void"])
    ns = np.arange(1, p["n_max"] + 1)
    e = packet_energy(ns, coeffs, p["B"], p["q"], p["m"])
    opt = optimal_packet(coeffs, p["B"], p["q"], p["m"], p["n_max"])
    write_csv(out / "packet.csv", ["n", "energy"], zip(ns, e))
    write_csv(out / "optimum.csv", ["n_star", "energy", "at_lower", "at_upper", "n_continuous"],
              [[opt.n_star, opt.energy, opt.at_lower, opt.at_upper,
                continuous_packet_optimum(coeffs, p["B"], p["q"], p["m"])]])
    return ["packet.csv", "optimum.csv"], EXIT_OK


HANDLERS = {
    "solve-single": _solve_single,
    "sweep-scaling": _sweep_scaling,
    "kinkband-path": _kinkband_path,
    "kinkband-maxwell": _kinkband_maxwell,
    "multilayer-solve": _multilayer_solve,
    "packet-optimum": _packet_optimum,
}


def run(config: RunConfig) -> int:
    """Execute a validated config; returns the process exit code."""
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    files, code, error = [], EXIT_OK, None
    try:
        files, code = HANDLERS[config.subcommand](config.parameters, out)
    except InvariantViolation as exc:
        code, error = EXIT_INVARIANT, str(exc)
    except SolverError as exc:
        code, error = EXIT_SOLVER, str(exc)
    manifest = {
        "tool": "layerfold",
        "version": __version__,
        "subcommand": config.subcommand,
        "parameters": config.parameters,
        "parameter_sources": config.sources,
        "seed": config.seed,
        "outputs": files,
        "exit_code": code,
        "error": error,
        "wall_time_s": time.perf_counter() - start,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _describe_schemas() -> str:
    lines = ["subcommand parameters (default, or REQUIRED):"]
    for name, schema in SCHEMAS.items():
        items = ", ".join(f"{k}={'REQUIRED' if spec.default is REQUIRED else spec.default}"
                          for k, spec in {**schema, **COMMON}.items())
        lines.append(f"  {name}: {items}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="layerfold", description=__doc__.split("\n\n")[0],
                     epilog=_describe_schemas(), formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("subcommand", choices=sorted(SCHEMAS))
    parser.add_argument("--config", type=Path, default=None, help="flat JSON object of parameters")
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        if any(a in ("-h", "--help") for a in argv):
            build_parser().print_help()
            return EXIT_OK
        args, rest = build_parser().parse_known_args(argv)
        config = parse_config(args.subcommand, args.config, _parse_flags(rest), args.out)
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return EXIT_CONFIG
    code = run(config)
    if code != EXIT_OK:
        print(f"layerfold {config.subcommand} failed with exit code {code}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
