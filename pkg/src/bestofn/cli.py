"""Command-line experiment harness.

A JSON experiment spec names the problem (inline ``instance`` or a
``scenario`` file), the swarm parameters and the command to run. Results
go to ``runs.csv``, ``trajectory.csv``, ``absorption.csv`` or
``sweep.csv`` plus a ``summary.json`` that echoes the resolved config.
Run seeds are ``seed + r`` for ``r = 0..repetitions-1``; every stream is
PCG64-based, see ``bestofn.rng``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import re
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

from . import __version__
from .errors import BestOfNError, ParseError, UnknownKey, ValidationError
from .meanfield import exact_absorption, initial_state, integrate, opinion_fractions, ssa_runner
from .meanfield.ctmc import DEFAULT_STATE_LIMIT
from .problem import ProblemInstance, validate
from .scenarios import build, scenario_from_dict
from .simulator import ENGINES, INITIAL_PHASES, SwarmConfig, batch, run
from .strategy import DecisionRule

COMMANDS = ("simulate", "ssa", "meanfield", "absorb", "sweep")
CONFIG_KEYS = ("N", "g", "G", "sigma", "q_min", "tau", "max_time", "seed",
               "with_replacement", "initial_phase", "sample_dt", "initial_opinions",
               "engine")
SPEC_KEYS = frozenset(CONFIG_KEYS + (
    "command", "instance", "scenario", "rule", "include_self", "repetitions",
    "trajectory", "horizon", "dt", "state_limit", "workers", "sweep", "out",
))
SWEEPABLE = ("N", "g", "G", "sigma", "q_min", "tau", "max_time", "include_self")
_OPTION_PARAM = re.compile(r"^([qc])_(\d+)$")


@dataclass(frozen=True)
class Sweep:
    parameter: str
    values: tuple
    command: str = "simulate"


@dataclass
class ExperimentSpec:
    instance: ProblemInstance
    problem_echo: dict
    config: SwarmConfig = field(default_factory=SwarmConfig)
    command: str = "simulate"
    repetitions: int = 100
    trajectory: bool = False
    horizon: Optional[float] = None
    dt: float = 0.1
    state_limit: int = DEFAULT_STATE_LIMIT
    workers: int = 1
    sweep: Optional[Sweep] = None
    out: Optional[str] = None

    def resolved(self) -> dict:
        """Fully resolved settings, defaults included, for the summary echo."""
        cfg = config_to_dict(self.config)
        return {
            "command": self.command,
            "problem": self.problem_echo,
            "config": cfg,
            "repetitions": self.repetitions,
            "trajectory": self.trajectory,
            "horizon": self.effective_horizon,
            "dt": self.dt,
            "state_limit": self.state_limit,
            "sweep": None if self.sweep is None else {
                "parameter": self.sweep.parameter,
                "values": list(self.sweep.values),
                "command": self.sweep.command,
            },
        }

    @property
    def effective_horizon(self) -> float:
        return 10 * self.config.g if self.horizon is None else self.horizon


def config_to_dict(config: SwarmConfig) -> dict:
    d = asdict(config)
    d["rule"] = config.rule.kind
    d["include_self"] = config.rule.include_self
    if d["initial_opinions"] is not None:
        d["initial_opinions"] = list(d["initial_opinions"])
    return d


def _require(cond, name, message):
    if not cond:
        raise ValidationError(name, message)


def _number(raw, name, integer=False):
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ValidationError(name, "must be a number")
    if integer and int(raw) != raw:
        raise ValidationError(name, "must be an integer")
    return int(raw) if integer else float(raw)


def _load_problem(raw: dict, base: Path):
    if ("instance" in raw) == ("scenario" in raw):
        raise ValidationError("instance", "give exactly one of 'instance' or 'scenario'")
    if "instance" in raw:
        d = raw["instance"]
        _require(isinstance(d, dict), "instance", "must be a JSON object")
        extra = set(d) - {"n", "quality", "cost", "interaction", "qualitySchedule"}
        if extra:
            raise UnknownKey(f"instance.{sorted(extra)[0]}", "unknown key")
        try:
            inst = ProblemInstance.from_dict(d)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError("instance", str(exc)) from exc
        return inst, {"instance": inst.to_dict()}
    src = raw["scenario"]
    if isinstance(src, str):
        path = (base / src) if not Path(src).is_absolute() else Path(src)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ValidationError("scenario", f"cannot read {path}: {exc}") from exc
        src = _parse_json(text)
    _require(isinstance(src, dict), "scenario", "must be a path or a JSON object")
    try:
        inst = build(scenario_from_dict(src))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError("scenario", str(exc)) from exc
    return inst, {"scenario": src, "instance": inst.to_dict()}


def _parse_json(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from exc


def _build_config(raw: dict, n: int) -> SwarmConfig:
    kw: dict[str, Any] = {}
    for key in ("N", "G", "seed"):
        if key in raw:
            kw[key] = _number(raw[key], key, integer=True)
    for key in ("g", "sigma", "q_min", "tau", "max_time"):
        if key in raw:
            kw[key] = _number(raw[key], key)
    if "sample_dt" in raw and raw["sample_dt"] is not None:
        kw["sample_dt"] = _number(raw["sample_dt"], "sample_dt")
    if "with_replacement" in raw:
        _require(isinstance(raw["with_replacement"], bool), "with_replacement",
                 "must be true or false")
        kw["with_replacement"] = raw["with_replacement"]
    if "engine" in raw:
        _require(raw["engine"] in ENGINES, "engine", f"must be one of {', '.join(ENGINES)}")
        kw["engine"] = raw["engine"]
    if "initial_phase" in raw:
        _require(raw["initial_phase"] in INITIAL_PHASES, "initial_phase",
                 f"must be one of {', '.join(INITIAL_PHASES)}")
        kw["initial_phase"] = raw["initial_phase"]
    rule = raw.get("rule", "voter")
    _require(rule in ("voter", "majority"), "rule", "must be 'voter' or 'majority'")
    include_self = raw.get("include_self", True)
    _require(isinstance(include_self, bool), "include_self", "must be true or false")
    kw["rule"] = DecisionRule(rule, include_self)
    fractions = raw.get("initial_opinions")
    if fractions is None:
        fractions = [1.0 / n] * n
    _require(isinstance(fractions, list) and len(fractions) == n, "initial_opinions",
             f"must be a list of {n} fractions")
    kw["initial_opinions"] = tuple(_number(f, "initial_opinions") for f in fractions)
    return SwarmConfig(**kw)


def _build_sweep(raw, instance: ProblemInstance) -> Sweep:
    _require(isinstance(raw, dict), "sweep", "must be a JSON object")
    extra = set(raw) - {"parameter", "values", "command"}
    if extra:
        raise UnknownKey(f"sweep.{sorted(extra)[0]}", "unknown key")
    param = raw.get("parameter")
    m = _OPTION_PARAM.match(param or "")
    ok = param in SWEEPABLE or (m is not None and 1 <= int(m.group(2)) <= instance.n)
    _require(ok, "sweep.parameter",
             f"{param!r} is not a swarm parameter or q_i/c_i with i in 1..{instance.n}")
    values = raw.get("values")
    _require(isinstance(values, list) and values, "sweep.values", "must be a non-empty list")
    command = raw.get("command", "simulate")
    _require(command in ("simulate", "ssa", "meanfield", "absorb"), "sweep.command",
             "must be simulate, ssa, meanfield or absorb")
    return Sweep(param, tuple(values), command)


def load_spec(path) -> ExperimentSpec:
    """Parse and validate an experiment spec file, applying defaults."""
    path = Path(path)
    raw = _parse_json(path.read_text())
    if not isinstance(raw, dict):
        raise ParseError("experiment spec must be a JSON object")
    return spec_from_dict(raw, path.parent)


def spec_from_dict(raw: dict, base: Path = Path(".")) -> ExperimentSpec:
    unknown = sorted(set(raw) - SPEC_KEYS)
    if unknown:
        raise UnknownKey(unknown[0], "unknown key")
    instance, echo = _load_problem(raw, base)
    config = _build_config(raw, instance.n)
    command = raw.get("command", "simulate")
    _require(command in COMMANDS, "command", f"must be one of {', '.join(COMMANDS)}")
    spec = ExperimentSpec(instance, echo, config, command)
    if "repetitions" in raw:
        spec.repetitions = _number(raw["repetitions"], "repetitions", integer=True)
        _require(spec.repetitions >= 1, "repetitions", "must be at least 1")
    if "trajectory" in raw:
        _require(isinstance(raw["trajectory"], bool), "trajectory", "must be true or false")
        spec.trajectory = raw["trajectory"]
    if raw.get("horizon") is not None:
        spec.horizon = _number(raw["horizon"], "horizon")
        _require(spec.horizon > 0, "horizon", "must be positive")
    if "dt" in raw:
        spec.dt = _number(raw["dt"], "dt")
        _require(spec.dt > 0, "dt", "must be positive")
    if "state_limit" in raw:
        spec.state_limit = _number(raw["state_limit"], "state_limit", integer=True)
    if "workers" in raw:
        spec.workers = _number(raw["workers"], "workers", integer=True)
        _require(spec.workers >= 1, "workers", "must be at least 1")
    if "out" in raw:
        _require(isinstance(raw["out"], str), "out", "must be a directory path")
        spec.out = raw["out"]
    if command == "sweep" or "sweep" in raw:
        _require("sweep" in raw, "sweep", "the sweep command needs a sweep axis")
        spec.sweep = _build_sweep(raw["sweep"], instance)
        for value in spec.sweep.values:
            override(spec.config, spec.instance, spec.sweep.parameter, value)
    return spec


def override(config: SwarmConfig, instance: ProblemInstance, parameter: str, value):
    """Return ``(config, instance)`` with one sweep parameter replaced."""
    m = _OPTION_PARAM.match(parameter)
    if m:
        vec = "quality" if m.group(1) == "q" else "cost"
        values = list(getattr(instance, vec))
        values[int(m.group(2)) - 1] = _number(value, f"sweep.{parameter}")
        # A scenario-specific sampler would ignore the overridden quality.
        changed = instance.replace(**{vec: tuple(values)}, quality_sampler=None)
        try:
            validate(changed)
        except ValueError as exc:
            raise ValidationError(f"sweep.{parameter}", str(exc)) from exc
        return config, changed
    if parameter == "include_self":
        _require(isinstance(value, bool), "sweep.include_self", "must be true or false")
        return replace(config, rule=DecisionRule(config.rule.kind, value)), instance
    integer = parameter in ("N", "G")
    return replace(config, **{parameter: _number(value, f"sweep.{parameter}", integer)}), instance


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x):
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return x


def _clean(x):
    if isinstance(x, float) and math.isnan(x):
        return None
    return x


def _run_batch(spec, config, instance, command):
    runner = ssa_runner if command == "ssa" else None
    return batch(config, instance, spec.repetitions, config.seed,
                 workers=spec.workers, runner=runner)


def _absorb(spec, config, instance):
    res = exact_absorption(instance, config, limit=spec.state_limit)
    return res, {
        "exit_probability": [float(p) for p in res.probabilities],
        "mean_decision_time": res.mean_time,
        "conditional_decision_time": [_clean(float(t)) for t in res.conditional_time],
        "states": res.n_states,
    }


def _meanfield(spec, config, instance):
    y0 = initial_state(instance, config.opinion_fractions(instance.n), config.g,
                       config.initial_phase, config.q_min)
    times, Y = integrate(instance, config.g, config.rule, config.G, y0,
                         spec.effective_horizon, spec.dt, config.q_min)
    final = opinion_fractions(Y[-1], instance.n)[0]
    return (times, Y), {
        "final_state": [float(v) for v in Y[-1]],
        "final_opinion_fractions": [float(v) for v in final],
    }


def _sweep_row(parameter, value, command, results, n):
    row = {"parameter": parameter, "value": value}
    if command in ("simulate", "ssa"):
        row.update(
            repetitions=results["repetitions"],
            decided=results["decided"],
            non_decision_rate=results["non_decision_rate"],
            mean_decision_time=results["mean_decision_time"],
            mean_decision_time_se=results["mean_decision_time_se"],
        )
        for i in range(n):
            row[f"E_{i + 1}"] = results["exit_probability"][i]
            row[f"E_{i + 1}_se"] = results["exit_probability_se"][i]
    elif command == "absorb":
        row["mean_decision_time"] = results["mean_decision_time"]
        for i in range(n):
            row[f"E_{i + 1}"] = results["exit_probability"][i]
    else:
        for i in range(n):
            row[f"x_{i + 1}"] = results["final_opinion_fractions"][i]
    return row


def execute(spec: ExperimentSpec, out_dir=None, quiet: bool = True) -> int:
    """Run the experiment and write its output files. Returns 0 on success."""
    out = Path(out_dir or spec.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    config, instance = spec.config, spec.instance
    n = instance.n
    summary = {
        "artifact": "bestofn",
        "version": __version__,
        "seed": config.seed,
        "resolved": spec.resolved(),
    }
    files = []

    if spec.command in ("simulate", "ssa"):
        metrics = _run_batch(spec, config, instance, spec.command)
        _write_csv(out / "runs.csv", ["seed", "decided", "winner", "decision_time"],
                   [[r.seed, int(r.decided), r.winner if r.decided else "",
                     _fmt(r.decision_time)] for r in metrics.records])
        files.append("runs.csv")
        summary["results"] = metrics.summary()
        if spec.trajectory:
            traced = replace(config, sample_dt=config.sample_dt or 1.0)
            runner = ssa_runner if spec.command == "ssa" else run
            rec = runner(traced, instance)
            header = ["time"] + [f"E_{i + 1}" for i in range(n)] + [f"D_{i + 1}" for i in range(n)]
            rows = [[repr(float(v[0]))] + [int(x) for x in v[1:]] for v in rec.trajectory]
            _write_csv(out / "trajectory.csv", header, rows)
            files.append("trajectory.csv")
    elif spec.command == "meanfield":
        (times, Y), summary["results"] = _meanfield(spec, config, instance)
        header = ["time"] + [f"e_{i + 1}" for i in range(n)] + [f"d_{i + 1}" for i in range(n)]
        _write_csv(out / "trajectory.csv", header,
                   [[repr(float(t))] + [repr(float(v)) for v in y] for t, y in zip(times, Y)])
        files.append("trajectory.csv")
    elif spec.command == "absorb":
        res, summary["results"] = _absorb(spec, config, instance)
        _write_csv(out / "absorption.csv", ["option", "probability", "mean_time"],
                   [[i + 1, repr(float(res.probabilities[i])), _fmt(float(res.conditional_time[i]))]
                    for i in range(n)])
        files.append("absorption.csv")
    else:
        sweep = spec.sweep
        records, rows = [], []
        for value in sweep.values:
            cfg, inst = override(config, instance, sweep.parameter, value)
            if sweep.command in ("simulate", "ssa"):
                results = _run_batch(spec, cfg, inst, sweep.command).summary()
            elif sweep.command == "absorb":
                results = _absorb(spec, cfg, inst)[1]
            else:
                results = _meanfield(spec, cfg, inst)[1]
            records.append({"parameter": sweep.parameter, "value": value, "results": results})
            rows.append(_sweep_row(sweep.parameter, value, sweep.command, results, n))
        header = list(rows[0])
        _write_csv(out / "sweep.csv", header,
                   [[_fmt(r[h]) if r[h] is not None else "nan" for h in header] for r in rows])
        files.append("sweep.csv")
        summary["results"] = records

    summary["files"] = files + ["summary.json"]
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if not quiet:
        print(f"wrote {', '.join(summary['files'])} to {out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bestofn",
        description="Best-of-n collective decision experiments.",
    )
    parser.add_argument("command", nargs="?", choices=COMMANDS,
                        help="override the command named in the spec")
    parser.add_argument("--spec", required=True, help="experiment spec (JSON)")
    parser.add_argument("--out", help="output directory (default: spec 'out' or .)")
    parser.add_argument("--seed", type=int, help="base seed, overrides the spec")
    parser.add_argument("--repetitions", type=int, help="runs per batch, overrides the spec")
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)
    try:
        spec = load_spec(args.spec)
        if args.command:
            if args.command == "sweep" and spec.sweep is None:
                raise ValidationError("sweep", "the sweep command needs a sweep axis")
            spec.command = args.command
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ValidationError("seed", "must be an unsigned 64-bit integer")
            spec.config = replace(spec.config, seed=args.seed)
        if args.repetitions is not None:
            if args.repetitions < 1:
                raise ValidationError("repetitions", "must be at least 1")
            spec.repetitions = args.repetitions
        return execute(spec, args.out, quiet=args.quiet)
    except BestOfNError as exc:
        print(f"bestofn: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"bestofn: I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
