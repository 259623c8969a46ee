"""Command-line entry point: ``hdrips <command> [options]``.

Exit status is 0 on success, 2 for an invalid configuration and 1 for a
failure while running; in both error cases a JSON record is written to
stderr.  Outputs go to ``--out`` through a temporary file that is renamed
into place, or to stdout.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import warnings
from dataclasses import asdict, dataclass, field

from . import __version__
from .analytic import (DELTA_MAX, Phase, PhaseLabel, RipsParams, Schedule, analytic_csv,
                       analytic_rows, check_radius_decay, classify_phase,
                       derivative_moment_bound, expectation_bounds, integral_IE, integral_IV,
                       rate_diagnostics, schedule_intensity, variance_bounds)
from .decomp import constants_csv, constants_table, enumerate_classes
from .errors import ParameterError
from .geometry import cloud_from_json, cloud_to_json, sample_poisson
from .montecarlo import (dumps, phase_sweep, resolve_threads, run_experiment, summary_to_dict,
                         sweep_csv, sweep_to_dict)
from .rips import f_vector

COMMANDS = ("sample", "count", "analytic", "decomp", "mc", "sweep")
FORMATS = ("json", "csv")


@dataclass
class ExperimentConfig:
    """Fully resolved description of one invocation; embedded in every output record."""

    command: str
    params: dict = field(default_factory=dict)
    schedule: dict | None = None
    R: int | None = None
    seed: int | None = None
    output: str | None = None
    format: str = "json"
    threads: int | None = None
    options: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ParameterError("config must be a JSON object")
        extra = set(data) - set(cls.__dataclass_fields__)
        if extra:
            raise ParameterError(f"unknown config fields {sorted(extra)}")
        if "command" not in data:
            raise ParameterError("config needs a command")
        return cls(**data)


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def validate(config: ExperimentConfig) -> list[dict]:
    """All problems with a config, as ``{"level": "error" | "warning", "message": ...}``."""
    out = []

    def err(msg):
        out.append({"level": "error", "message": msg})

    def warn(msg):
        out.append({"level": "warning", "message": msg})

    if config.command not in COMMANDS:
        err(f"unknown command {config.command!r}")
    if config.format not in FORMATS:
        err(f"format must be one of {FORMATS}")
    if config.command in ("mc", "sweep", "sample") and config.seed is None:
        err("randomized commands need an explicit seed")
    if config.R is not None and (not isinstance(config.R, int) or config.R < 2):
        err(f"R must be an integer >= 2, got {config.R!r}")
    if config.threads is not None and (not isinstance(config.threads, int) or config.threads < 1):
        err(f"threads must be a positive integer, got {config.threads!r}")
    p = config.params
    if "d" in p and (not isinstance(p["d"], int) or p["d"] < 1):
        err(f"d must be an integer >= 1, got {p['d']!r}")
    if "k" in p and (not isinstance(p["k"], int) or p["k"] < 1):
        err(f"k must be an integer >= 1, got {p['k']!r}")
    if "t" in p and p["t"] is not None and not (isinstance(p["t"], (int, float)) and p["t"] > 0
                                                and math.isfinite(p["t"])):
        err(f"t must be positive and finite, got {p['t']!r}")
    if "delta" in p and p["delta"] is not None:
        dl = p["delta"]
        if not (isinstance(dl, (int, float)) and 0 < dl < 1):
            err(f"delta must lie in (0, 1), got {dl!r}")
        elif dl >= DELTA_MAX:
            warn(f"delta={dl} outside analytic range (0, 1/4)")
    if config.schedule is not None:
        try:
            sched = Schedule.from_dict(config.schedule)
        except (ParameterError, TypeError) as exc:
            err(f"schedule: {exc}")
        else:
            d_max = max([50] + list(config.options.get("d_list", [])))
            status, msg = check_radius_decay(sched, d_max)
            if status == "reject":
                err(f"schedule violates d*delta_d -> 0: {msg}")
            elif status == "warn":
                warn(f"schedule: {msg} (d*delta_d -> 0 required)")
    elif config.command == "sweep":
        err("sweep needs a schedule")
    return out


def _atomic_write(path: str, text: str):
    target = os.path.abspath(path)
    folder = os.path.dirname(target)
    fd, tmp = tempfile.mkstemp(prefix="." + os.path.basename(target) + ".", dir=folder)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(config: ExperimentConfig, text: str):
    if not text.endswith("\n"):
        text += "\n"
    if config.output:
        _atomic_write(config.output, text)
    else:
        sys.stdout.write(text)


def _record(config: ExperimentConfig, payload: dict) -> dict:
    return {"version": __version__, "config": asdict(config), **payload}


# ---------------------------------------------------------------------------
# commands


def _params(config: ExperimentConfig) -> RipsParams:
    p = config.params
    missing = [key for key in ("d", "t", "delta", "k") if p.get(key) is None]
    if missing:
        raise ParameterError(f"missing parameters {missing}")
    return RipsParams(p["d"], float(p["t"]), float(p["delta"]), p["k"])


def _cmd_sample(config):
    p = config.params
    cloud = sample_poisson(p["d"], float(p["t"]), config.seed)
    _emit(config, cloud_to_json(cloud, float(p["t"]), p.get("delta"), config.seed))


def _cmd_count(config):
    p = config.params
    opts = config.options
    if opts.get("cloud"):
        with open(opts["cloud"]) as fh:
            cloud, header = cloud_from_json(fh.read())
    else:
        if config.seed is None:
            raise ParameterError("sampling a cloud needs an explicit seed")
        cloud = sample_poisson(p["d"], float(p["t"]), config.seed)
    k_max = int(opts.get("k_max", p.get("k", 1)))
    fv = f_vector(cloud, float(p["delta"]), k_max)
    if config.format == "csv":
        _emit(config, "k,count\n" + "".join(f"{k},{c}\n" for k, c in enumerate(fv.as_tuple())))
    else:
        _emit(config, dumps(_record(config, {"points": len(cloud), "f_vector": list(fv.as_tuple())})))


def _cmd_analytic(config):
    p = config.params
    which = config.options.get("which", "bounds")
    d, k = p.get("d"), p.get("k")
    if which == "IE":
        print(_fmt(integral_IE(d, k)))
        return
    if which == "IV":
        print(_fmt(integral_IV(d, k, int(config.options.get("r", 0)))))
        return
    if which == "intensity":
        print(_fmt(schedule_intensity(float(config.options.get("theta", 1.0)), k, d,
                                      float(p["delta"]))))
        return
    if which == "table":
        if config.schedule is None:
            raise ParameterError("the analytic table needs a schedule")
        sched = Schedule.from_dict(config.schedule)
        d_list = config.options.get("d_list") or list(range(1, 51))
        rows = analytic_rows(sched, k, [x for x in d_list if sched.delta(x) < DELTA_MAX])
        if config.format == "csv":
            _emit(config, analytic_csv(rows))
        else:
            _emit(config, dumps(_record(config, {"rows": rows})))
        return
    if which == "phase":
        if config.schedule is None:
            raise ParameterError("phase classification needs a schedule")
        label = classify_phase(Schedule.from_dict(config.schedule), k,
                               int(config.options.get("d_max", 50)))
        _emit(config, dumps(_record(config, {"phase": label.phase.value, "theta": label.theta})))
        return
    prm = _params(config)
    if which == "bounds":
        e = expectation_bounds(prm)
        v = variance_bounds(prm)
        payload = {"E_lower": e.lower, "E_upper": e.upper, "V_lower": v.lower,
                   "V_upper": v.upper, "inner_volume": e.inner_volume}
    elif which == "rate":
        diag = rate_diagnostics(prm, config.options.get("regime", "0"),
                                Phase(config.options.get("phase", "GAUSSIAN")),
                                config.options.get("theta"))
        payload = {"gamma1": diag.gamma1_order, "gamma2": diag.gamma2_order,
                   "gamma3": diag.gamma3_order, "rate": diag.rate_order,
                   "regime": diag.regime.value, "phase": diag.phase.value}
    elif which in ("D1", "D1D1m1", "D2"):
        payload = {"bound": derivative_moment_bound(prm, int(config.options.get("order", 4)), which)}
    else:
        raise ParameterError(f"unknown analytic quantity {which!r}")
    if config.format == "csv":
        keys = sorted(payload)
        _emit(config, ",".join(keys) + "\n" + ",".join(_fmt(payload[x]) for x in keys))
    else:
        _emit(config, dumps(_record(config, payload)))


def _cmd_decomp(config):
    opts = config.options
    if opts.get("n_max"):
        rows = constants_table(int(opts["n_max"]))
    else:
        n, p = int(opts["n"]), int(opts["p"])
        rows = [(p, n, t.signature.label(), t.constant.numerator, t.constant.denominator)
                for t in enumerate_classes(n, p).terms]
    if config.format == "json":
        keys = ("p", "n", "signature", "numerator", "denominator")
        _emit(config, dumps(_record(config, {"constants": [dict(zip(keys, r)) for r in rows]})))
    else:
        _emit(config, constants_csv(rows))


def _cmd_mc(config):
    prm = _params(config)
    theta = config.options.get("theta")
    s = run_experiment(prm, config.R, config.seed, theta, config.threads)
    if config.format == "csv":
        _emit(config, "replication,count\n" + "".join(f"{i},{c}\n" for i, c in enumerate(s.samples)))
    else:
        _emit(config, dumps(summary_to_dict(s, asdict(config))))


def _cmd_sweep(config):
    sched = Schedule.from_dict(config.schedule)
    k = int(config.params.get("k", 1))
    d_list = config.options.get("d_list")
    if not d_list:
        raise ParameterError("sweep needs d_list")
    phase = None
    if config.options.get("phase"):
        phase = PhaseLabel(Phase(config.options["phase"]), config.options.get("theta"))
    result = phase_sweep(sched, k, d_list, config.R, config.seed, phase, config.threads,
                         float(config.options.get("max_points", 1e5)))
    if config.format == "csv":
        _emit(config, sweep_csv(result))
    else:
        _emit(config, dumps(sweep_to_dict(result, asdict(config))))


HANDLERS = {"sample": _cmd_sample, "count": _cmd_count, "analytic": _cmd_analytic,
            "decomp": _cmd_decomp, "mc": _cmd_mc, "sweep": _cmd_sweep}


def run(config: ExperimentConfig) -> int:
    problems = validate(config)
    errors = [p for p in problems if p["level"] == "error"]
    if errors:
        _fail(2, "invalid configuration", errors)
        return 2
    for p in problems:
        print(json.dumps({"warning": p["message"]}), file=sys.stderr)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # already reported by validate
            HANDLERS[config.command](config)
    except (ParameterError, KeyError, TypeError) as exc:
        _fail(2, f"{type(exc).__name__}: {exc}")
        return 2
    except Exception as exc:  # noqa: BLE001
        _fail(1, f"{type(exc).__name__}: {exc}")
        return 1
    return 0


def _fail(code, message, details=None):
    rec = {"error": message, "exit_code": code, "version": __version__}
    if details:
        rec["violations"] = details
    print(json.dumps(rec), file=sys.stderr)


# ---------------------------------------------------------------------------
# argument parsing


def _add_model(sp, need=("d",)):
    sp.add_argument("--d", type=int, required="d" in need)
    sp.add_argument("--t", type=float, required="t" in need)
    sp.add_argument("--delta", type=float, required="delta" in need)
    sp.add_argument("--k", type=int, required="k" in need)


def _add_io(sp, default_format="json"):
    sp.add_argument("--out", help="output path (stdout if omitted)")
    sp.add_argument("--format", choices=FORMATS, default=default_format)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hdrips", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--threads", type=int, default=None,
                    help="worker cap (default: $RIPS_THREADS or 1)")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sample", help="sample a Poisson cloud to JSON")
    _add_model(sp, need=("d", "t"))
    sp.add_argument("--seed", type=int, required=True)
    _add_io(sp)

    sp = sub.add_parser("count", help="f-vector of a sampled or stored cloud")
    _add_model(sp, need=("delta",))
    sp.add_argument("--cloud", help="cloud JSON written by 'sample'")
    sp.add_argument("--k-max", type=int, default=3)
    sp.add_argument("--seed", type=int)
    _add_io(sp)

    sp = sub.add_parser("analytic", help="closed-form integrals, bounds, phases, rates")
    _add_model(sp, need=("d", "k"))
    sp.add_argument("--which", default="bounds",
                    choices=("IE", "IV", "bounds", "intensity", "phase", "table", "rate",
                             "D1", "D1D1m1", "D2"))
    sp.add_argument("--r", type=int, default=0)
    sp.add_argument("--theta", type=float)
    sp.add_argument("--order", type=int, default=4)
    sp.add_argument("--regime", choices=("0", "c", "inf"), default="0")
    sp.add_argument("--phase", choices=("GAUSSIAN", "POISSON"), default="GAUSSIAN")
    sp.add_argument("--schedule", help="schedule JSON object or path")
    sp.add_argument("--d-max", type=int, default=50)
    sp.add_argument("--d-list", type=int, nargs="+")
    _add_io(sp)

    sp = sub.add_parser("decomp", help="exact decomposition constants")
    sp.add_argument("--n", type=int)
    sp.add_argument("--p", type=int, choices=(2, 3, 4))
    sp.add_argument("--n-max", type=int)
    _add_io(sp, default_format="csv")

    sp = sub.add_parser("mc", help="replicated simulation of F_k")
    _add_model(sp, need=("d", "t", "delta", "k"))
    sp.add_argument("--R", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--theta", type=float)
    _add_io(sp)

    sp = sub.add_parser("sweep", help="phase sweep driven by a JSON config")
    sp.add_argument("--config", required=True, help="sweep config JSON file")
    sp.add_argument("--out")

    sp = sub.add_parser("validate", help="check a config without running it")
    sp.add_argument("--config", help="config JSON file")
    _add_model(sp, need=())
    sp.add_argument("--schedule", help="schedule JSON object or path")
    sp.add_argument("--R", type=int)
    sp.add_argument("--seed", type=int)
    return ap


def _load_json_arg(text):
    if text is None:
        return None
    if os.path.exists(text):
        with open(text) as fh:
            text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParameterError(f"cannot parse JSON: {exc}") from exc


def _load_config_file(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return ExperimentConfig.from_json(fh.read())
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise ParameterError(f"cannot read config {path}: {exc}") from exc


def config_from_args(args) -> ExperimentConfig:
    threads = args.threads
    if args.command == "sweep":
        cfg = _load_config_file(args.config)
        cfg.command = "sweep"
        if args.out:
            cfg.output = args.out
        if threads is not None:
            cfg.threads = threads
        return cfg
    params = {key: getattr(args, key) for key in ("d", "t", "delta", "k")
              if getattr(args, key, None) is not None}
    options = {}
    schedule = None
    if args.command == "count":
        options = {"cloud": args.cloud, "k_max": args.k_max}
    elif args.command == "analytic":
        options = {"which": args.which, "r": args.r, "theta": args.theta, "order": args.order,
                   "regime": args.regime, "phase": args.phase, "d_max": args.d_max,
                   "d_list": args.d_list}
        schedule = _load_json_arg(args.schedule)
    elif args.command == "decomp":
        options = {"n": args.n, "p": args.p, "n_max": args.n_max}
        if not args.n_max and (args.n is None or args.p is None):
            raise ParameterError("decomp needs --n and --p, or --n-max")
    elif args.command == "mc":
        options = {"theta": args.theta}
    return ExperimentConfig(command=args.command, params=params, schedule=schedule,
                            R=getattr(args, "R", None), seed=getattr(args, "seed", None),
                            output=getattr(args, "out", None),
                            format=getattr(args, "format", "json"),
                            threads=resolve_threads(threads) if threads is not None else None,
                            options=options)


def _run_validate(args) -> int:
    if args.config:
        cfg = _load_config_file(args.config)
    else:
        params = {key: getattr(args, key) for key in ("d", "t", "delta", "k")
                  if getattr(args, key) is not None}
        cfg = ExperimentConfig(command="mc", params=params, schedule=_load_json_arg(args.schedule),
                               R=args.R, seed=args.seed if args.seed is not None else 0)
    problems = validate(cfg)
    print(json.dumps({"violations": problems}, indent=2))
    return 2 if any(p["level"] == "error" for p in problems) else 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            return _run_validate(args)
        config = config_from_args(args)
    except ParameterError as exc:
        _fail(2, str(exc))
        return 2
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
