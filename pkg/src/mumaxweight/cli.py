"""Command-line entry point: configuration, single runs, sweeps and audits.

Exit status is 0 on success, 2 on a configuration error and 3 when a run
fails.
"""
from __future__ import annotations

import argparse
import dataclasses
import inspect
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import audit as audit_mod
from .fields import CostFunction, Perturbation
from .metrics import (SUMMARY_COLUMNS, OutageBand, queue_outage_frequency, write_csv,
                      write_rows)
from .policies import POLICIES, make_scheduler
from .scenarios import (build_crosslayer, build_energy, build_multimedia, build_tandem,
                        default_cost_weights)
from .simulate import POWER_MODES, simulate, simulate_crosslayer

log = logging.getLogger("mumaxweight")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
BUILDERS = {
    "tandem": build_tandem,
    "multimedia": build_multimedia,
    "energy": build_energy,
    "crosslayer": build_crosslayer,
}
COST_KINDS = ("linear", "shifted_quadratic", "composite")
PERTURBATIONS = ("coupled", "exponential", "logarithmic")
AUDIT_CONDITIONS = ("A1", "A2", "C1", "C2", "D1D2", "CondLog")
SWEEP_COLUMNS = ("sweep_key", "sweep_value") + SUMMARY_COLUMNS


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass
class RunConfig:
    scenario: str
    policy: str
    scenario_params: dict = field(default_factory=dict)
    cost: str = "composite"
    weights: Optional[list] = None
    target: float = 20.0
    perturbation: Optional[str] = None  # None: the policy's default
    theta: float = 1.0
    clip_negative: bool = False
    slots: int = 20000
    seed: int = 0
    repeats: int = 1
    pac_iterations: int = 100
    power: str = "sca"
    warm_start: bool = False
    band: list = field(default_factory=lambda: [10.0, 30.0])
    smoothing_window: int = 100
    stability_window: int = 100
    stability_tol: float = 1e-3
    stability_queues: object = "auto"  # "auto" | "all" | "app" | list of indices
    sweep: Optional[str] = None
    out: str = "results"
    audit: list = field(default_factory=list)
    audit_samples: int = 200
    workers: int = 1

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


CONFIG_KEYS = tuple(f.name for f in dataclasses.fields(RunConfig))


def parse_sweep(text: str) -> tuple:
    """``KEY=A:B:STEP`` -> (key, values), both ends inclusive."""
    try:
        key, rng = text.split("=", 1)
        a, b, step = (float(v) for v in rng.split(":"))
    except ValueError as exc:
        raise ConfigError(f"sweep must look like KEY=A:B:STEP, got {text!r}") from exc
    if not key or step <= 0 or b < a or not all(np.isfinite([a, b, step])):
        raise ConfigError(f"sweep range must be finite with STEP > 0 and A <= B: {text!r}")
    n = int(np.floor((b - a) / step + 1e-9)) + 1
    values = [round(a + k * step, 12) for k in range(n)]
    return key.strip(), values


def validate(cfg: RunConfig) -> RunConfig:
    if cfg.scenario not in BUILDERS:
        raise ConfigError(f"unknown scenario {cfg.scenario!r}; valid options: {', '.join(BUILDERS)}")
    if cfg.policy not in POLICIES:
        raise ConfigError(f"unknown policy {cfg.policy!r}; valid options: {', '.join(POLICIES)}")
    if not isinstance(cfg.scenario_params, dict):
        raise ConfigError("scenario_params must be a mapping")
    allowed = inspect.signature(BUILDERS[cfg.scenario]).parameters
    bad = sorted(set(cfg.scenario_params) - set(allowed))
    if bad:
        raise ConfigError(f"unknown {cfg.scenario} parameters: {', '.join(bad)}")
    if cfg.cost not in COST_KINDS:
        raise ConfigError(f"unknown cost {cfg.cost!r}; valid options: {', '.join(COST_KINDS)}")
    if cfg.perturbation is not None and cfg.perturbation not in PERTURBATIONS:
        raise ConfigError(f"unknown perturbation {cfg.perturbation!r}; "
                          f"valid options: {', '.join(PERTURBATIONS)}")
    if cfg.theta <= 0:
        raise ConfigError("theta must be positive")
    for name in ("slots", "repeats", "pac_iterations", "workers", "smoothing_window",
                 "stability_window", "audit_samples"):
        v = getattr(cfg, name)
        if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
            raise ConfigError(f"{name} must be an integer >= 1")
    if isinstance(cfg.seed, bool) or not isinstance(cfg.seed, (int, np.integer)) or cfg.seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    if cfg.power not in POWER_MODES:
        raise ConfigError(f"power must be one of {', '.join(POWER_MODES)}")
    if cfg.scenario == "crosslayer" and cfg.policy in ("mu_maxweight_pac", "h_maxweight"):
        raise ConfigError("the cross-layer scenario uses backpressure link weights; "
                          "choose maxweight or mu_maxweight")
    sq = cfg.stability_queues
    if not (sq in ("auto", "all", "app") or (isinstance(sq, list) and sq
                                               and all(isinstance(i, int) and i >= 0 for i in sq))):
        raise ConfigError("stability_queues must be 'auto', 'all', 'app' or a list of queue indices")
    if len(cfg.band) != 2:
        raise ConfigError("band must be [lower, upper]")
    try:
        OutageBand(*map(float, cfg.band))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    bad = sorted(set(cfg.audit) - set(AUDIT_CONDITIONS))
    if bad:
        raise ConfigError(f"unknown audit conditions {bad}; valid options: {', '.join(AUDIT_CONDITIONS)}")
    if cfg.sweep is not None:
        key, _ = parse_sweep(cfg.sweep)
        if key not in allowed and key not in ("theta", "target", "seed"):
            raise ConfigError(f"cannot sweep {key!r}: not a {cfg.scenario} parameter, "
                              "theta, target or seed")
    return cfg


def parse_config(source) -> RunConfig:
    """Validated configuration from a YAML file path or a mapping."""
    if isinstance(source, dict):
        raw = dict(source)
    else:
        path = Path(source)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a mapping")
    unknown = sorted(set(raw) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for key in ("scenario", "policy"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")
    if isinstance(raw.get("audit"), bool):
        raw["audit"] = ["C1", "C2"] if raw["audit"] else []
    return validate(RunConfig(**raw))


@dataclass(frozen=True)
class RunSpec:
    config: RunConfig
    seed: int
    sweep_key: Optional[str] = None
    sweep_value: Optional[float] = None

    @property
    def run_id(self) -> str:
        rid = f"{self.config.scenario}_{self.config.policy}"
        if self.sweep_key is not None:
            rid += f"_{self.sweep_key}{self.sweep_value:g}"
        return f"{rid}_seed{self.seed}"


def _apply(cfg: RunConfig, key: str, value) -> RunConfig:
    if key in ("theta", "target"):
        return dataclasses.replace(cfg, **{key: float(value)})
    if key == "seed":
        return dataclasses.replace(cfg, seed=int(value))
    return dataclasses.replace(cfg, scenario_params={**cfg.scenario_params, key: value})


def plan_runs(cfg: RunConfig) -> list:
    """One spec per (sweep value, repeat), in a fixed order."""
    points = [(None, None)]
    if cfg.sweep is not None:
        key, values = parse_sweep(cfg.sweep)
        points = [(key, v) for v in values]
    specs = []
    for key, value in points:
        c = cfg if key is None else _apply(cfg, key, value)
        for r in range(cfg.repeats):
            specs.append(RunSpec(c, c.seed + r, key, value))
    return specs


def build_network(cfg: RunConfig):
    params = dict(cfg.scenario_params)
    if cfg.scenario == "multimedia":
        params.setdefault("target", cfg.target)
        params.setdefault("band", OutageBand(*map(float, cfg.band)))
    return BUILDERS[cfg.scenario](**params)


def _weights(cfg: RunConfig, net) -> np.ndarray:
    if cfg.weights is not None:
        w = np.asarray(cfg.weights, dtype=float)
        if w.shape != (net.m,):
            raise ConfigError(f"weights must list {net.m} values for {cfg.scenario}")
        return w
    return default_cost_weights(net, cfg.cost)


def evaluation_cost(cfg: RunConfig, net) -> CostFunction:
    target = 0.0 if cfg.cost == "linear" else cfg.target
    return CostFunction(cfg.cost, _weights(cfg, net), target=target,
                        app_queues=tuple(net.app_queues))


def build_scheduler(cfg: RunConfig, net, seed: int):
    params = dict(cost=cfg.cost, weights=_weights(cfg, net), target=cfg.target,
                  theta=cfg.theta, clip_negative=cfg.clip_negative)
    if cfg.perturbation is not None:
        params["perturbation"] = cfg.perturbation
    return make_scheduler(cfg.policy, pac_iterations=cfg.pac_iterations, random_state=seed,
                          **params)


def monitored_queues(cfg: RunConfig, net) -> np.ndarray:
    """Queues whose summed backlog decides the stability verdict.

    ``auto`` watches the application buffer of the tandem, whose upstream
    queue absorbs the surplus by construction, and every queue elsewhere.
    """
    sq = cfg.stability_queues
    if sq == "auto":
        sq = "app" if cfg.scenario == "tandem" else "all"
    if sq == "all":
        return np.arange(net.m)
    if sq == "app":
        if not len(net.app_queues):
            raise ConfigError(f"{cfg.scenario} has no application queues")
        return np.asarray(net.app_queues)
    idx = np.asarray(sq)
    if idx.max() >= net.m:
        raise ConfigError(f"stability_queues index out of range for {net.m} queues")
    return idx


def execute_run(spec: RunSpec) -> dict:
    """Simulate one run, write its CSVs and return the summary row."""
    cfg = spec.config
    net = build_network(cfg)
    cost = evaluation_cost(cfg, net)
    band = OutageBand(*map(float, cfg.band))
    scheduler = build_scheduler(cfg, net, spec.seed)
    if cfg.scenario == "crosslayer":
        fld = scheduler.field_for(net.m, net.app_queues)
        res = simulate_crosslayer(net, fld, cfg.slots, power=cfg.power, seed=spec.seed,
                                  cost=cost, warm_start=cfg.warm_start)
    else:
        res = simulate(net, scheduler, cfg.slots, seed=spec.seed, cost=cost, band=band)
    ledger = res.ledger
    if cfg.scenario != "crosslayer":
        ledger.band = band
    watched = res.trajectory[:, monitored_queues(cfg, net)].sum(axis=1)
    verdict = audit_mod.empirical_stability(watched, cfg.stability_window, cfg.stability_tol)
    summary = {
        "policy": cfg.policy,
        "scenario": cfg.scenario,
        "seed": spec.seed,
        "alpha": float(np.max(net.alpha)),
        "avg_cost": ledger.average_cost,
        "p_out": queue_outage_frequency(ledger) if ledger.app_queues else 0.0,
        "underflow_freq": ledger.underflow_freq,
        "overflow_freq": ledger.overflow_freq,
        "sum_idle": ledger.sum_idle,
        "stability_verdict": "stable" if verdict.stable else "unstable",
        "slope": verdict.slope,
        "config": json.dumps({**cfg.to_dict(), "seed": spec.seed}, sort_keys=True),
    }
    write_csv(summary, res.trajectory, cfg.out, spec.run_id, cfg.smoothing_window)
    if cfg.audit:
        run_audit(cfg, spec.run_id, net=net)
    return summary


def run_audit(cfg: RunConfig, run_id: Optional[str] = None, net=None) -> Path:
    """Check the configured field and write ``{run_id}_audit.csv``."""
    net = build_network(cfg) if net is None else net
    run_id = run_id or f"{cfg.scenario}_{cfg.policy}"
    scheduler = build_scheduler(cfg, net, cfg.seed)
    inner = getattr(scheduler, "scheduler", None) or scheduler
    fld = inner.field_for(net.m, net.app_queues)
    rng = np.random.default_rng(cfg.seed)
    n = cfg.audit_samples
    rows = []
    for cond in cfg.audit or ["C1", "C2"]:
        if cond == "A1":
            reports = [audit_mod.check_A1(fld, net.m, 0.5, 1.0, rng, samples=n)]
        elif cond == "A2":
            reports = [audit_mod.check_A2(fld, net.m, 0.5, 1.0, rng, samples=n)]
        elif cond == "C1":
            reports = [audit_mod.check_C1(fld, net.m, 1.0, rng, samples=n)]
        elif cond == "C2":
            reports = [audit_mod.check_C2(fld, net.m, rng, samples=max(n, 1000))]
        elif cond == "CondLog":
            reports = [audit_mod.check_cond_log(evaluation_cost(cfg, net))]
        else:
            kind = cfg.perturbation or "logarithmic"
            if kind == "coupled":
                raise ConfigError("D1/D2 need a separable perturbation")
            reports = list(audit_mod.check_D1_D2(Perturbation(kind, cfg.theta),
                                                 evaluation_cost(cfg, net)))
        for rep in reports:
            rows.extend(rep.rows())
    return write_rows(rows, audit_mod.AUDIT_COLUMNS, Path(cfg.out) / f"{run_id}_audit.csv")


def run(cfg: RunConfig) -> list:
    """Execute every planned run; sweeps also write a collation CSV."""
    specs = plan_runs(cfg)
    if cfg.workers > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            summaries = list(pool.map(execute_run, specs))
    else:
        summaries = [execute_run(s) for s in specs]
    if cfg.sweep is not None:
        key = specs[0].sweep_key
        rows = [{"sweep_key": s.sweep_key, "sweep_value": s.sweep_value, **summ}
                for s, summ in zip(specs, summaries)]
        write_rows(rows, SWEEP_COLUMNS, Path(cfg.out) / f"sweep_{key}.csv")
    return summaries


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mumaxweight",
                                 description="Simulate cost-driven MaxWeight scheduling.")
    ap.add_argument("--config", help="YAML run configuration")
    ap.add_argument("--scenario", choices=tuple(BUILDERS))
    ap.add_argument("--policy", help=f"one of {', '.join(POLICIES)}")
    ap.add_argument("--slots", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--sweep", metavar="KEY=A:B:STEP")
    ap.add_argument("--out", metavar="DIR")
    ap.add_argument("--audit", action="store_true",
                    help="audit the configured field instead of simulating")
    ap.add_argument("--workers", type=int)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def config_from_args(args) -> RunConfig:
    raw = {}
    if args.config:
        raw = parse_config(args.config).to_dict()
    for key in ("scenario", "policy", "slots", "seed", "sweep", "out", "workers"):
        v = getattr(args, key)
        if v is not None:
            raw[key] = v
    return parse_config(raw)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad usage already
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.audit:
            path = run_audit(cfg)
            log.info("audit written to %s", path)
        else:
            for s in run(cfg):
                log.info("%s seed %s: %s (slope %.3g)", s["scenario"], s["seed"],
                         s["stability_verdict"], s["slope"])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any failure maps to the runtime status
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
