"""Command-line experiment runner.

Subcommands: solve, simulate, compare, sweep, zero-wait-check. Each reads a
JSON experiment config (see README for the schema) and writes JSON or CSV to
``--out`` or stdout. Exit codes: 0 success, 2 bad configuration, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional

from . import __version__
from .errors import AgeOptError, ConfigError
from .optimizer import SolveConfig, solve, zero_wait_check
from .penalty import penalty_from_dict
from .policy import DISCRETE, TIME_MODES, Uniform, ZeroWait, uniform_for_rate
from .service import ExpectationEngine, service_from_dict
from .simulator import simulate
from .sources import mi_penalty, source_from_dict

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

SWEEP_AXES = ("a", "q", "f_max", "alpha_exp", "sigma")
POLICIES = ("uniform", "zero_wait", "optimal")
COMPARE_COLUMNS = ["policy", "feasible", "avg_penalty", "utility", "avg_interval", "se", "beta"]
SWEEP_COLUMNS = ["axis", "value"] + COMPARE_COLUMNS
DEFAULT_N_CYCLES = 100_000


def _parse_rate(x) -> float:
    if isinstance(x, str):
        if x.strip().lower() in ("inf", "infinity"):
            return math.inf
        raise ConfigError(f"f_max must be a number or 'inf', got {x!r}")
    if x is None:
        return math.inf
    return float(x)


def _dump_rate(x: float):
    return "inf" if math.isinf(x) else x


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one CLI run needs.

    ``penalty`` may be omitted when ``source`` is given, in which case the
    penalty is the negative mutual information of the source.
    """

    service: dict
    penalty: Optional[dict] = None
    source: Optional[dict] = None
    mode: str = "continuous"
    f_max: float = math.inf
    horizon: Optional[float] = None
    n_cycles: int = DEFAULT_N_CYCLES
    n_mc: int = 100_000
    eps: Optional[float] = None
    seed: int = 0
    sweep: Optional[dict] = None
    policy: str = "optimal"
    out: Optional[str] = None
    trajectory_out: Optional[str] = None
    workers: int = 1

    _KEYS = ("service", "penalty", "source", "mode", "f_max", "horizon", "n_cycles", "n_mc",
             "eps", "seed", "sweep", "policy", "out", "trajectory_out", "workers")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - set(cls._KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "service" not in d:
            raise ConfigError("config needs a 'service' spec")
        try:
            cfg = cls(
                service=dict(d["service"]),
                penalty=None if d.get("penalty") is None else dict(d["penalty"]),
                source=None if d.get("source") is None else dict(d["source"]),
                mode=str(d.get("mode", "continuous")),
                f_max=_parse_rate(d.get("f_max", "inf")),
                horizon=None if d.get("horizon") is None else float(d["horizon"]),
                n_cycles=int(d.get("n_cycles", DEFAULT_N_CYCLES)),
                n_mc=int(d.get("n_mc", 100_000)),
                eps=None if d.get("eps") is None else float(d["eps"]),
                seed=int(d.get("seed", 0)),
                sweep=None if d.get("sweep") is None else dict(d["sweep"]),
                policy=str(d.get("policy", "optimal")),
                out=d.get("out"),
                trajectory_out=d.get("trajectory_out"),
                workers=int(d.get("workers", 1)),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad config value: {exc}") from exc
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {
            "service": self.service, "penalty": self.penalty, "source": self.source,
            "mode": self.mode, "f_max": _dump_rate(self.f_max), "horizon": self.horizon,
            "n_cycles": self.n_cycles, "n_mc": self.n_mc, "eps": self.eps, "seed": self.seed,
            "sweep": self.sweep, "policy": self.policy, "out": self.out,
            "trajectory_out": self.trajectory_out, "workers": self.workers,
        }

    def validate(self) -> None:
        if self.mode not in TIME_MODES:
            raise ConfigError(f"mode must be one of {TIME_MODES}")
        if not self.f_max > 0.0:
            raise ConfigError("f_max must be positive")
        if self.penalty is None and self.source is None:
            raise ConfigError("config needs a 'penalty' or a 'source'")
        if self.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}")
        if self.n_cycles < 1 or self.n_mc < 1 or self.workers < 1:
            raise ConfigError("n_cycles, n_mc and workers must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.sweep is not None:
            axis = self.sweep.get("axis")
            if axis not in SWEEP_AXES:
                raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
            values = self.sweep.get("values")
            if not isinstance(values, list) or not values:
                raise ConfigError("sweep needs a non-empty 'values' list")
        self.build()

    def build(self):
        """Parse the specs into (penalty, service law), checking the time mode."""
        dist = service_from_dict(self.service)
        if self.penalty is not None:
            p = penalty_from_dict(self.penalty)
        else:
            p = mi_penalty(source_from_dict(self.source))
        if self.mode == DISCRETE and not dist.is_discrete:
            raise ConfigError("discrete mode needs an integer-valued service law")
        return p, dist

    def solve_config(self) -> SolveConfig:
        return SolveConfig(f_max=self.f_max, mode=self.mode, eps=self.eps, n_mc=self.n_mc, seed=self.seed)

    def at(self, axis: str, value) -> "ExperimentConfig":
        """Copy of this config with one sweep axis set to ``value``."""
        if axis == "a":
            return replace(self, penalty={"kind": "neg_mi_gauss", "a": float(value)}, source=None)
        if axis == "q":
            return replace(self, penalty={"kind": "neg_mi_binary", "q": float(value)}, source=None)
        if axis == "alpha_exp":
            return replace(self, penalty={"kind": "exponential", "alpha": float(value)}, source=None)
        if axis == "sigma":
            return replace(self, service={"kind": "discretized_lognormal", "sigma": float(value)})
        if axis == "f_max":
            return replace(self, f_max=_parse_rate(value))
        raise ConfigError(f"unknown sweep axis {axis!r}")


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path!r}: {exc}") from exc
    return ExperimentConfig.from_dict(raw)


# -- commands ----------------------------------------------------------------

def cmd_solve(cfg: ExperimentConfig) -> dict:
    p, dist = cfg.build()
    return solve(p, dist, cfg.solve_config()).to_dict()


def _uniform_policy(cfg: ExperimentConfig, dist):
    """Periodic sampling at f_max; without a rate limit the period is E[Y]."""
    if math.isinf(cfg.f_max):
        period = dist.mean
        if cfg.mode == DISCRETE:
            period = float(math.ceil(period - 1e-9))
        return Uniform(period)
    return uniform_for_rate(cfg.f_max, cfg.mode)


def _simulate(cfg, pol, dist, p):
    kwargs = {"seed": cfg.seed, "mode": cfg.mode}
    if cfg.horizon is not None:
        kwargs["horizon"] = cfg.horizon
    else:
        kwargs["n_cycles"] = cfg.n_cycles
    return simulate(pol, dist, p, **kwargs)


def _policy_row(cfg: ExperimentConfig, name: str, p, dist, solved=None) -> dict:
    beta = ""
    feasible = True
    if name == "optimal":
        res = solved if solved is not None else solve(p, dist, cfg.solve_config())
        pol, beta = res.policy, res.beta
    elif name == "zero_wait":
        pol = ZeroWait()
        feasible = not (cfg.f_max < 1.0 / dist.mean)
    else:
        pol = _uniform_policy(cfg, dist)
    sim = _simulate(cfg, pol, dist, p)
    return {"policy": name, "feasible": feasible, "avg_penalty": sim.avg_penalty,
            "utility": -sim.avg_penalty, "avg_interval": sim.avg_interval, "se": sim.se,
            "beta": beta}


def cmd_compare(cfg: ExperimentConfig) -> List[dict]:
    p, dist = cfg.build()
    return [_policy_row(cfg, name, p, dist) for name in POLICIES]


def cmd_simulate(cfg: ExperimentConfig) -> dict:
    p, dist = cfg.build()
    row = _policy_row(cfg, cfg.policy, p, dist)
    if cfg.trajectory_out:
        pol = {"optimal": None, "zero_wait": ZeroWait()}.get(cfg.policy, _uniform_policy(cfg, dist))
        if pol is None:
            pol = solve(p, dist, cfg.solve_config()).policy
        _simulate(cfg, pol, dist, p).trajectory.to_csv(cfg.trajectory_out)
    sim = {k: row[k] for k in ("policy", "avg_penalty", "avg_interval", "se")}
    sim.update({"cycles": cfg.n_cycles if cfg.horizon is None else None, "seed": cfg.seed,
                "feasible": row["feasible"]})
    return sim


def _sweep_point(args):
    cfg, axis, value = args
    rows = cmd_compare(cfg.at(axis, value))
    return [dict(row, axis=axis, value=value) for row in rows]


def cmd_sweep(cfg: ExperimentConfig) -> List[dict]:
    if cfg.sweep is None:
        raise ConfigError("sweep needs a 'sweep' section with 'axis' and 'values'")
    axis = cfg.sweep["axis"]
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}")
    jobs = [(cfg, axis, v) for v in cfg.sweep["values"]]
    for _, _, v in jobs:
        cfg.at(axis, v).validate()
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            # map preserves submission order, so rows stay in axis order
            chunks = list(ex.map(_sweep_point, jobs))
    else:
        chunks = [_sweep_point(j) for j in jobs]
    return [row for chunk in chunks for row in chunk]


def cmd_zero_wait_check(cfg: ExperimentConfig) -> dict:
    p, dist = cfg.build()
    ev = ExpectationEngine(p, dist, cfg.mode, n_mc=cfg.n_mc, seed=cfg.seed)
    return zero_wait_check(p, dist, cfg.mode, ev).to_dict()


# -- output ------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return "" if v is None else str(v)


def to_csv(rows: List[dict], columns: List[str]) -> str:
    buf = io.StringIO()
    buf.write(f"# age-opt v{__version__}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_json_safe(v) for v in obj]
    return obj


def to_json(obj) -> str:
    return json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n"


COMMANDS = {
    "solve": (cmd_solve, "json"),
    "simulate": (cmd_simulate, "json"),
    "compare": (cmd_compare, "csv"),
    "sweep": (cmd_sweep, "csv"),
    "zero-wait-check": (cmd_zero_wait_check, "json"),
}


def render(command: str, result, fmt: str) -> str:
    if fmt == "json":
        return to_json(result)
    if isinstance(result, dict):
        return to_csv([result], list(result))
    columns = SWEEP_COLUMNS if command == "sweep" else COMPARE_COLUMNS
    return to_csv(result, columns)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="age-opt", description="Age-optimal sampling experiments.")
    ap.add_argument("--version", action="version", version=f"age-opt {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="experiment config (JSON)")
        sp.add_argument("--out", help="output path (default: stdout or config 'out')")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--format", choices=("csv", "json"), help="output format")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fn, default_fmt = COMMANDS[args.command]
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
            cfg.validate()
        result = fn(cfg)
    except ConfigError as exc:
        print(f"age-opt: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AgeOptError, ArithmeticError, ValueError) as exc:
        print(f"age-opt: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    text = render(args.command, result, args.format or default_fmt)
    out = args.out or cfg.out
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
