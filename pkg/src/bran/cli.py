"""Command-line front end: ``bran <subcommand> [flags]``.

Parameters resolve in three layers: built-in defaults, then ``--config``
(a JSON object), then explicit flags. Output goes to stdout unless
``--out-dir`` is given, in which case every product is written to a file
and described by one line in ``manifest.jsonl``.

Exit codes: 0 success, 2 invalid input, 3 unstable configuration,
4 numerical failure. Errors are reported on stderr as one JSON line
``{"error": CODE, "message": ...}``.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np

from . import __version__, bounds, ctmc, dessim, mining, security, tradeoff
from .core import (
    AttackerProfile,
    ConfigError,
    ConfirmationPolicy,
    SystemConfig,
    UnstableConfig,
    load_config,
    normalize_give_up,
)

EXIT_OK, EXIT_USAGE, EXIT_UNSTABLE, EXIT_NUMERIC = 0, 2, 3, 4

RANGE_HELP = "integer range a:b (inclusive)"
FLOAT_RANGE_HELP = "float range a:b:step (inclusive of b)"


class UsageError(ConfigError):
    def __init__(self, message: str):
        super().__init__(message, code="USAGE")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D401 - argparse hook
        raise UsageError(message)


@dataclass
class Report:
    """What a subcommand produced: an optional JSON summary and named CSV tables."""

    name: str
    summary: Optional[dict[str, Any]] = None
    tables: dict[str, tuple[Sequence[str], list[Sequence[Any]]]] = field(default_factory=dict)
    default_format: str = "json"


# --- formatting -------------------------------------------------------------


def _json_value(v: Any) -> Any:
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    return v


def render_json(obj: dict[str, Any]) -> str:
    return json.dumps(_json_value(obj), allow_nan=False) + "\n"


def _csv_cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render_csv(header: Sequence[str], rows: list[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_csv_cell(v) for v in row])
    return buf.getvalue()


# --- argument helpers -------------------------------------------------------


def parse_int_range(text: str) -> list[int]:
    try:
        a, b = (int(x) for x in text.split(":"))
    except ValueError:
        raise UsageError(f"expected {RANGE_HELP}, got {text!r}") from None
    if b < a:
        raise UsageError(f"empty range {text!r}")
    return list(range(a, b + 1))


def parse_float_range(text: str) -> list[float]:
    parts = text.split(":")
    try:
        if len(parts) == 2:
            a, b = float(parts[0]), float(parts[1])
            return [a] if a == b else [a, b]
        a, b, step = (float(x) for x in parts)
    except ValueError:
        raise UsageError(f"expected {FLOAT_RANGE_HELP}, got {text!r}") from None
    if step <= 0 or b < a:
        raise UsageError(f"bad float range {text!r}")
    count = int(math.floor((b - a) / step + 1e-9)) + 1
    return [round(a + k * step, 12) for k in range(count)]


def _give_up_arg(text: str):
    try:
        return normalize_give_up(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


_UNSET = object()


def _common(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("configuration (flags override --config)")
    g.add_argument("--config", help="JSON config file")
    g.add_argument("--lambda-a", "--lambda_a", dest="lambda_a", type=float, help="request arrival rate")
    g.add_argument("--lambda-b", "--lambda_b", dest="lambda_b", type=float, help="block generation rate")
    g.add_argument("--lambda-c", "--lambda_c", dest="lambda_c", type=float, help="per-link service rate (default 1)")
    g.add_argument("--s", dest="s", type=int, help="number of access links")
    g.add_argument("--n-confirmations", "--n_confirmations", dest="n_confirmations", type=int,
                   help="required confirmations N (default 1)")
    g.add_argument("--beta", type=float, help="attacker mining rate relative to the honest network")
    g.add_argument("--give-up", "--give_up", dest="give_up", type=_give_up_arg, default=_UNSET,
                   help="attacker give-up deficit; 'inf' for never")
    o = parser.add_argument_group("output")
    o.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    o.add_argument("--out-dir", help="write products and manifest.jsonl here instead of stdout")
    o.add_argument("--format", choices=("csv", "json"), help="stdout format")


def resolve(args: argparse.Namespace) -> dict[str, Any]:
    params: dict[str, Any] = {"lambda_c": 1.0, "n_confirmations": 1, "give_up": None}
    if args.config:
        params.update(load_config(args.config))
    for key in ("lambda_a", "lambda_b", "lambda_c", "s", "n_confirmations", "beta"):
        value = getattr(args, key, None)
        if value is not None:
            params[key] = value
    if args.give_up is not _UNSET:
        params["give_up"] = args.give_up
    params["give_up"] = normalize_give_up(params.get("give_up"))
    params["seed"] = args.seed if args.seed is not None else params.get("seed", 0)
    return params


def _require(params: dict[str, Any], *keys: str) -> None:
    missing = [k for k in keys if params.get(k) is None]
    if missing:
        raise ConfigError(f"missing parameter(s): {', '.join(missing)}", code="MISSING_PARAMETER")


def system_config(params: dict[str, Any]) -> SystemConfig:
    _require(params, "lambda_a", "lambda_b", "s")
    return SystemConfig(
        lambda_a=float(params["lambda_a"]),
        lambda_b=float(params["lambda_b"]),
        lambda_c=float(params["lambda_c"]),
        s=int(params["s"]),
    )


def _n(params: dict[str, Any]) -> int:
    return ConfirmationPolicy(int(params["n_confirmations"])).n_confirmations


def _attacker(params: dict[str, Any]) -> AttackerProfile:
    _require(params, "beta")
    return AttackerProfile(float(params["beta"]), params["give_up"])


# --- subcommands ------------------------------------------------------------


def cmd_mining(args, params) -> Report:
    rate = args.rate if args.rate is not None else params.get("lambda_b")
    if rate is None:
        raise ConfigError("missing parameter: --rate (or lambda_b)", code="MISSING_PARAMETER")
    if args.count < 1:
        raise ConfigError("--count must be >= 1")
    sample = mining.sample_block_times(mining.MiningProcess(float(rate)), args.count, params["seed"])
    params["rate"] = float(rate)
    rep = Report("mining", default_format="csv")
    rep.tables["block_times"] = (("block_time",), [(float(x),) for x in sample.durations])
    if args.histogram:
        rep.tables["histogram"] = (("bin_left", "bin_right", "count"), mining.histogram(sample, args.histogram))
    rep.summary = {"rate": float(rate), "count": len(sample), "mean": sample.mean, "expected_mean": 1.0 / rate}
    return rep


def cmd_steady_state(args, params) -> Report:
    cfg = system_config(params)
    cfg.require_stable()
    if args.i_max is not None or args.j_max is not None:
        base = ctmc.Truncation.default(cfg)
        trunc = ctmc.Truncation(args.i_max or base.i_max, args.j_max or base.j_max)
        w = ctmc.steady_state(cfg, trunc, args.tol)
    else:
        w = ctmc.steady_state(cfg, None, args.tol)
    rows = [(int(i), int(j), float(p)) for i, j, p in zip(w.i, w.j, w.p)]
    return Report(
        "steady_state",
        summary={
            "mean_outstanding": ctmc.mean_outstanding(w),
            "boundary_mass": w.boundary_mass,
            "residual": w.residual,
            "i_max": w.truncation.i_max,
            "j_max": w.truncation.j_max,
        },
        tables={"steady_state": (("i", "j", "probability"), rows)},
        default_format="csv",
    )


def cmd_latency(args, params) -> Report:
    cfg = system_config(params)
    n = _n(params)
    w = ctmc.steady_state(cfg)
    summary = {
        "latency": ctmc.latency_from_distribution(w, cfg, n),
        "sojourn": ctmc.sojourn_time(w, cfg) + cfg.t_b * (n - 1),
        "relative_to": "T_c",
    }
    if args.shifted_variant:
        summary["shifted_latency"] = ctmc.latency_shifted_variant(w, cfg) + cfg.t_b * (n - 1)
    return Report("latency", summary=summary)


def cmd_bounds(args, params) -> Report:
    cfg = system_config(params)
    cfg.require_stable()
    n = _n(params)
    return Report("bounds", summary={
        "lower_block": bounds.latency_lower_block(n, cfg),
        "lower_mms": bounds.latency_lower_mms(n, cfg),
        "upper": bounds.latency_upper(n, cfg),
    })


def cmd_security(args, params) -> Report:
    att = _attacker(params)
    n = _n(params)
    p = security.attack_success_prob(n, att.beta, att.give_up)
    summary: dict[str, Any] = {"analytic": p, "monte_carlo": None, "trials": 0, "three_sigma": None}
    if args.mc_trials:
        if args.mc_trials < 0:
            raise ConfigError("--mc-trials must be >= 0")
        if att.beta > 0:
            race = security.simulate_attack_race(n, att.beta, att.give_up, args.mc_trials, params["seed"])
            summary["monte_carlo"] = race.probability
        else:
            summary["monte_carlo"] = 0.0
        summary["trials"] = args.mc_trials
        summary["three_sigma"] = 3.0 * math.sqrt(p * (1.0 - p) / args.mc_trials)
    return Report("security", summary=summary)


def cmd_security_sweep(args, params) -> Report:
    betas = parse_float_range(args.beta_range)
    ns = parse_int_range(args.n_range)
    give_up = params["give_up"]
    rows = []
    for b in betas:
        AttackerProfile(b, give_up)
        for n in ns:
            ConfirmationPolicy(n)
            rows.append((b, n, math.inf if give_up is None else give_up,
                         security.attack_success_prob(n, b, give_up)))
    return Report("security_sweep", tables={"security_sweep": (("beta", "n", "give_up", "probability"), rows)},
                  default_format="csv")


def cmd_simulate(args, params) -> Report:
    cfg = system_config(params)
    n = _n(params)
    if args.served < 1:
        raise ConfigError("--served must be >= 1")
    res = dessim.run_simulation(cfg, n, args.served, args.warmup, params["seed"], engine=args.engine)
    rep = Report("simulate", summary={
        "mean_latency": res.mean_latency,
        "ci95": res.ci95_halfwidth,
        "served": res.served_count,
        "horizon": res.horizon,
        "stable": cfg.stable,
    })
    if args.dump_latencies:
        rows = list(zip(res.ids.tolist(), res.arrival.tolist(), res.service_start.tolist(), res.service_end.tolist()))
        rep.tables["latencies"] = (("id", "arrival", "service_start", "service_end"), rows)
    return rep


def validation_rows(cfg: SystemConfig, ns: Sequence[int], served: int, seed: int, warmup: float = 0.1):
    """Analytic latency against the simulator; one shared seed across ``ns``."""
    cfg.require_stable()
    w = ctmc.steady_state(cfg)
    rows = []
    for n in ns:
        analytic = ctmc.latency_from_distribution(w, cfg, n)
        res = dessim.run_simulation(cfg, n, served, warmup, seed)
        inside = abs(res.mean_latency - analytic) <= res.ci95_halfwidth
        rows.append((n, analytic, res.mean_latency, res.ci95_halfwidth, inside))
    return rows


def cmd_validate(args, params) -> Report:
    cfg = system_config(params)
    rows = validation_rows(cfg, parse_int_range(args.n_range), args.served, params["seed"])
    return Report("validate", tables={"validate": (("n", "analytic", "sim_mean", "sim_ci95", "inside_ci"), rows)},
                  default_format="csv")


def cmd_tradeoff(args, params) -> Report:
    cfg = system_config(params)
    att = _attacker(params)
    pts = tradeoff.tradeoff_curve(cfg, att.beta, args.n_max)
    rows = [(p.n, p.latency, p.attack_prob) for p in pts]
    return Report("tradeoff", tables={"tradeoff": (("n", "latency", "attack_prob"), rows)}, default_format="csv")


# --- parser and dispatch ----------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bran", description="Queueing, latency-bound and double-spend analysis toolkit.")
    parser.add_argument("--version", action="version", version=f"bran {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name: str, func: Callable, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, description=help_text)
        _common(p)
        p.set_defaults(func=func)
        return p

    p = add("mining", cmd_mining, "Sample exponential block times (CSV column block_time).")
    p.add_argument("--rate", type=float, help="block generation rate (default: lambda_b)")
    p.add_argument("--count", type=int, default=10000, help="number of block times")
    p.add_argument("--histogram", type=int, metavar="BINS", help="also emit a histogram table")

    p = add("steady-state", cmd_steady_state, "Steady-state distribution of the one-confirmation chain.")
    p.add_argument("--i-max", type=int, help="pending-count truncation")
    p.add_argument("--j-max", type=int, help="confirmed-count truncation")
    p.add_argument("--tol", type=float, default=ctmc.DEFAULT_TOL, help="residual tolerance")

    p = add("latency", cmd_latency, "Analytic mean latency for N confirmations.")
    p.add_argument("--shifted-variant", action="store_true",
                   help="also report the (j-1)^+ latency expression for comparison")

    add("bounds", cmd_bounds, "Closed-form latency bounds (upper is null when unbounded).")

    p = add("security", cmd_security, "Attack success probability, optionally with a Monte Carlo check.")
    p.add_argument("--mc-trials", type=int, default=0, help="Monte Carlo trials (0 = analytic only)")

    p = add("security-sweep", cmd_security_sweep, "Attack success probability over a beta x N grid.")
    p.add_argument("--beta-range", required=True, help=FLOAT_RANGE_HELP)
    p.add_argument("--n-range", required=True, help=RANGE_HELP)

    p = add("simulate", cmd_simulate, "Discrete-event simulation of the access workflow.")
    p.add_argument("--served", type=int, default=100000, help="served requests after warm-up")
    p.add_argument("--warmup", type=float, default=0.1, help="warm-up fraction of --served")
    p.add_argument("--engine", choices=("vectorized", "events"), default="vectorized")
    p.add_argument("--dump-latencies", metavar="PATH", help="write per-request CSV here")

    p = add("validate", cmd_validate, "Compare analytic latency with the simulator over a range of N.")
    p.add_argument("--n-range", default="1:6", help=RANGE_HELP)
    p.add_argument("--served", type=int, default=100000, help="served requests per N")

    p = add("tradeoff", cmd_tradeoff, "Latency / attack-probability trade-off points.")
    p.add_argument("--n-max", type=int, default=tradeoff.DEFAULT_N_MAX, help="largest N")
    return parser


def _emit(rep: Report, args, params, stdout) -> None:
    products: list[tuple[str, str]] = []
    for name, (header, rows) in rep.tables.items():
        products.append((f"{name}.csv", render_csv(header, rows)))
    if rep.summary is not None:
        products.append((f"{rep.name}.json", render_json(rep.summary)))

    dump_path = getattr(args, "dump_latencies", None)
    if dump_path and "latencies" in rep.tables:
        text = render_csv(*rep.tables["latencies"])
        Path(dump_path).write_text(text, encoding="utf-8")
        _manifest_line(Path(dump_path), text, args.command, params, Path(dump_path).parent)
        products = [p for p in products if p[0] != "latencies.csv"]

    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for fname, text in products:
            (out / fname).write_text(text, encoding="utf-8")
            _manifest_line(out / fname, text, args.command, params, out)
        if rep.summary is not None:
            stdout.write(render_json(rep.summary))
        return

    fmt = args.format or rep.default_format
    csv_products = [text for fname, text in products if fname.endswith(".csv")]
    if fmt == "json" and rep.summary is not None:
        stdout.write(render_json(rep.summary))
    elif fmt == "csv" and csv_products:
        stdout.write("\n".join(csv_products))
    elif rep.summary is not None:
        stdout.write(render_csv(list(rep.summary), [list(rep.summary.values())]))
    else:
        header, rows = next(iter(rep.tables.values()))
        stdout.write(render_json({"columns": list(header), "rows": [list(r) for r in rows]}))


def _manifest_line(path: Path, text: str, command: str, params: dict, out_dir: Path) -> None:
    record = {
        "subcommand": command,
        "file": path.name,
        "params": {k: v for k, v in params.items() if k != "seed"},
        "seed": params.get("seed"),
        "version": __version__,
        "sha256": hashlib.sha256(text.encode("utf-8")).hexdigest(),
        "timestamp": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
    }
    with open(out_dir / "manifest.jsonl", "a", encoding="utf-8") as fh:
        fh.write(render_json(record))


def _fail(stderr, code: str, message: str, status: int) -> int:
    stderr.write(json.dumps({"error": code, "message": message}) + "\n")
    return status


def main(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        params = resolve(args)
        rep = args.func(args, params)
        _emit(rep, args, params, stdout)
    except UnstableConfig as exc:
        return _fail(stderr, exc.code, str(exc), EXIT_UNSTABLE)
    except ConfigError as exc:
        return _fail(stderr, exc.code, str(exc), EXIT_USAGE)
    except (ctmc.NonConvergence, ctmc.TruncationTooSmall, dessim.TooFewSamples) as exc:
        return _fail(stderr, exc.code, str(exc), EXIT_NUMERIC)
    except ValueError as exc:
        return _fail(stderr, "INVALID_ARGUMENT", str(exc), EXIT_USAGE)
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        devnull = os.open(os.devnull, os.O_WRONLY)
        os.dup2(devnull, sys.stdout.fileno())
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
