"""Command-line entry point.

Verbs:
  run          simulate one policy and write a one-row CSV
  sweep        Cartesian (policy x regime x rate) experiment grid to CSV
  solve-stage1 print the closed-form shares for a density vector
  validate     check a config file and echo the resolved parameter set
  oracle-check run the built-in cross-check solvers and report deviations

Every flag can also be supplied through an environment variable with the
``V2XALLOC_`` prefix (for example ``V2XALLOC_SEED``); explicit flags win.
Outputs are overwritten unless ``--append`` is given, and every CSV gets a
``.meta.json`` sidecar recording the config hash, seed and package version.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, oracles, sim, stage1, stage2
from .errors import ConfigurationError
from .mobility import TdiVector
from .model import ScenarioConfig, config_digest, config_items, load_config
from .stage1 import UtilityParams

ENV_PREFIX = "V2XALLOC_"


def _env_default(name: str, fallback=None):
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"),
                          fallback)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="v2xalloc",
        description="Two-stage radio-resource allocation simulator",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, with_out=True):
        p.add_argument("--config", default=_env_default("config"),
                       help="scenario config file (defaults to built-ins)")
        p.add_argument("--seed", type=int,
                       default=_env_default("seed"),
                       help="override the config RNG seed")
        if with_out:
            p.add_argument("--out", default=_env_default("out"),
                           help="output CSV path")
            p.add_argument("--append", action="store_true",
                           default=bool(_env_default("append")),
                           help="append to an existing CSV instead of "
                            "overwriting")

    p_run = sub.add_parser("run", help="single simulation run")
    common(p_run)
    p_run.add_argument("--policy", default=_env_default("policy", "two_stage"),
                       choices=sim.POLICY_KINDS)
    p_run.add_argument("--regime", default=_env_default("regime", "low"),
                       choices=["low", "high"])
    p_run.add_argument("--horizon", type=int,
                       default=_env_default("horizon"),
                       help="slots to simulate (default: two TDI intervals)")
    p_run.add_argument("--warm-start", default=_env_default("warm_start"),
                       help="value-table file to seed the first solve")

    p_sweep = sub.add_parser("sweep", help="experiment grid")
    common(p_sweep)
    p_sweep.add_argument("--policy",
                         default=_env_default("policy",
                                              "two_stage,full_optimal,random"),
                         help="comma-separated policy list")
    p_sweep.add_argument("--rates",
                         default=_env_default("rates", "5,10,15,20,25,30"),
                         help="comma-separated arrival rates in packets/s")
    p_sweep.add_argument("--regime", default=_env_default("regime", "both"),
                         choices=["low", "high", "both"])
    p_sweep.add_argument("--reps", type=int,
                         default=int(_env_default("reps", "5")))
    p_sweep.add_argument("--horizon", type=int,
                         default=_env_default("horizon"))
    p_sweep.add_argument("--workers", type=int,
                         default=int(_env_default("workers", "1")))

    p_s1 = sub.add_parser("solve-stage1",
                          help="closed-form stage-one shares for a TDI vector")
    common(p_s1, with_out=False)
    p_s1.add_argument("--kappa", default=_env_default("kappa"),
                      help="comma-separated densities (default: config "
                           "tdi_fixed or 1,1,1,1)")

    p_val = sub.add_parser("validate", help="resolve and echo a config")
    common(p_val, with_out=False)

    p_oc = sub.add_parser("oracle-check",
                          help="independent solver cross-checks")
    common(p_oc, with_out=False)
    return parser


def _load(args) -> ScenarioConfig:
    config = load_config(args.config) if args.config else ScenarioConfig()
    if args.seed is not None:
        config = replace(config, rng_seed=int(args.seed))
    return config


def _write_csv(path: str, lines: list[str], config: ScenarioConfig,
               append: bool) -> None:
    mode = "a" if append else "w"
    out = Path(path)
    skip_header = append and out.exists() and out.stat().st_size > 0
    with open(out, mode, encoding="utf-8") as fh:
        for i, line in enumerate(lines):
            if i == 0 and skip_header:
                continue
            fh.write(line + "\n")
    sidecar = {
        "config_sha256_16": config_digest(config),
        "seed": config.rng_seed,
        "version": __version__,
    }
    with open(str(out) + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_run(args) -> int:
    config = _load(args)
    horizon = (int(args.horizon) if args.horizon
               else 2 * config.slots_per_tdi)
    warm = None
    if args.warm_start:
        _, warm, _, _ = stage2.load_value_table(args.warm_start)
    report = sim.run(config, horizon, args.policy, regime=args.regime,
                     warm_start_values=warm)
    lines = [sim.CSV_HEADER, report.csv_row()]
    if args.out:
        _write_csv(args.out, lines, config, args.append)
    else:
        print("\n".join(lines))
    return 0


def _cmd_sweep(args) -> int:
    config = _load(args)
    rates = [float(x) for x in args.rates.split(",") if x]
    regimes = (["low", "high"] if args.regime == "both" else [args.regime])
    policies = [p.strip() for p in args.policy.split(",") if p.strip()]
    for p in policies:
        if p not in sim.POLICY_KINDS:
            raise ConfigurationError(f"unknown policy {p!r}")
    horizon = int(args.horizon) if args.horizon else None
    lines, _ = sim.sweep(config, rates, regimes, args.reps,
                         policies=policies, horizon=horizon,
                         workers=args.workers)
    if args.out:
        _write_csv(args.out, lines, config, args.append)
    else:
        print("\n".join(lines))
    return 0


def _cmd_solve_stage1(args) -> int:
    config = _load(args)
    raw = args.kappa or config.tdi_fixed or "1,1,1,1"
    kappa = np.array([float(x) for x in raw.split(",")])
    params = UtilityParams(c1=config.c1, c2=config.c2,
                           kappa_jam=config.kappa_jam)
    shares = stage1.allocate_shares(TdiVector(kappa), params)
    print("subregion,kappa,epsilon,active_count,omega")
    for i in range(4):
        print(f"{i + 1},{float(kappa[i])!r},{float(shares.epsilon[i])!r},"
              f"{shares.active_count},{float(shares.multiplier)!r}")
    return 0


def _cmd_validate(args) -> int:
    config = _load(args)
    print(f"# resolved scenario (hash {config_digest(config)})")
    for key, _, value in config_items(config):
        print(f"{key} = {value}")
    return 0


def _cmd_oracle_check(args) -> int:
    config = _load(args)
    params = UtilityParams(c1=config.c1, c2=config.c2,
                           kappa_jam=config.kappa_jam)
    rng = np.random.default_rng(config.rng_seed)
    worst_eps = worst_util = 0.0
    for lo, hi in ((0.0, 0.5), (0.8, 1.2)):
        kappas = rng.uniform(lo, hi, size=(200, 4))
        closed = np.array([
            stage1.allocate_shares(TdiVector(k), params).epsilon
            for k in kappas
        ])
        numeric = oracles.pgd_share_solver(kappas, params)
        worst_eps = max(worst_eps, float(np.abs(closed - numeric).max()))
        for k, a, b in zip(kappas, closed, numeric):
            worst_util = max(worst_util, abs(
                stage1.utility_sum(k, a, params)
                - stage1.utility_sum(k, b, params)))
    print(f"stage1 max |share deviation| = {worst_eps:.3e}")
    print(f"stage1 max |utility deviation| = {worst_util:.3e}")

    toy = oracles.ToyMdp()
    theta_enum, _ = oracles.enumerate_toy_policies(toy)
    solved = oracles.solve_toy_full(toy)
    dev = abs(solved.theta - theta_enum)
    print(f"stage2 toy |theta(value iteration) - theta(enumeration)| = {dev:.3e}")

    ok = worst_eps <= 1e-6 and worst_util <= 1e-9 and dev <= 1e-6
    print("oracle-check:", "PASS" if ok else "FAIL")
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {
            "run": _cmd_run,
            "sweep": _cmd_sweep,
            "solve-stage1": _cmd_solve_stage1,
            "validate": _cmd_validate,
            "oracle-check": _cmd_oracle_check,
        }[args.verb]
        return handler(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
