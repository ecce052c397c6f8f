"""Command-line entry points: ``validate``, ``match``, ``experiment``.

Exit codes: 0 success, 2 schema problem, 3 no admissible pairs, 4 internal
error.  Failures emit a machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import balance_report, causal_test
from .core import (MatchConstraints, SchemaError, load_dataset, save_pairs)
from .experiments import ExperimentConfig, run_experiment
from .genetic import GaConfig, LossSpec, evolve_weights
from .matcher import MatchingError, NoAdmissiblePairsError, infer_regime
from .stochastic import MonteCarloConfig

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_NO_PAIRS = 3
EXIT_INTERNAL = 4


def _fail(code: str, message: str, exit_code: int) -> int:
    print(json.dumps({"error": code, "message": message}), file=sys.stderr)
    return exit_code


def _load_json_config(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise SchemaError(f"config not found: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"config is not valid JSON: {exc}") from exc


def cmd_validate(args) -> int:
    try:
        ds = load_dataset(args.dataset, format=args.format)
    except SchemaError as exc:
        return _fail("schema", str(exc), EXIT_SCHEMA)
    print(json.dumps({"ok": True, "n_units": ds.n_units,
                      "n_confounders": ds.n_confounders,
                      "has_outcome": ds.outcome is not None,
                      "binary_treatment": ds.is_binary_treatment}))
    return EXIT_OK


def cmd_match(args) -> int:
    try:
        dataset = load_dataset(args.dataset, format=args.format)
        raw = _load_json_config(args.config) if args.config else {}
        constraints = MatchConstraints.from_dict(raw["constraints"]) \
            if "constraints" in raw else MatchConstraints()
        ga = GaConfig.from_dict(raw["ga"]) if "ga" in raw else GaConfig()
        loss = LossSpec.from_dict(raw["loss"]) if "loss" in raw else LossSpec()
        alpha = float(raw.get("alpha", 0.05))
        seed = int(args.seed if args.seed is not None else raw.get("seed", ga.seed))
        method = raw.get("method", "probgenmatch")
        if method not in ("probgenmatch", "genmatch"):
            raise SchemaError(f"match supports probgenmatch or genmatch, got {method!r}")
    except SchemaError as exc:
        return _fail("schema", str(exc), EXIT_SCHEMA)
    try:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        regime = infer_regime(dataset)
        from dataclasses import replace
        result = evolve_weights(dataset, regime, constraints, loss,
                                replace(ga, seed=seed),
                                probabilistic=(method == "probgenmatch"),
                                mc=MonteCarloConfig(seed=seed))
        save_pairs(result.pairs, out / "pairs.csv")
        run_info = {
            "method": method,
            "regime": regime.value,
            "seed": seed,
            "weights": [float(w) for w in result.weights.diag],
            "loss": result.loss,
            "n_pairs": len(result.pairs),
            "config_hash": _hash_obj(raw),
        }
        report = balance_report(result.pairs, dataset, k_count=loss.k_count,
                                epsilon=constraints.epsilon)
        balance_doc = {"config_hash": run_info["config_hash"], "seed": seed,
                       **report.to_dict()}
        (out / "balance.json").write_text(json.dumps(balance_doc, indent=1))
        if dataset.outcome is not None:
            test = causal_test(result.pairs, dataset, alpha, constraints.epsilon)
            ate_doc = {"config_hash": run_info["config_hash"], "seed": seed,
                       **test.to_dict()}
            (out / "ate.json").write_text(json.dumps(ate_doc, indent=1))
        (out / "run.json").write_text(json.dumps(run_info, indent=1))
        print(json.dumps({"ok": True, "out": str(out), "n_pairs": len(result.pairs)}))
        return EXIT_OK
    except NoAdmissiblePairsError as exc:
        return _fail("no_pairs", str(exc), EXIT_NO_PAIRS)
    except MatchingError as exc:
        return _fail("no_pairs", str(exc), EXIT_NO_PAIRS)
    except SchemaError as exc:
        return _fail("schema", str(exc), EXIT_SCHEMA)
    except Exception as exc:  # pragma: no cover - defensive
        return _fail("internal", f"{type(exc).__name__}: {exc}", EXIT_INTERNAL)


def _hash_obj(obj) -> str:
    import hashlib
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:12]


def cmd_experiment(args) -> int:
    try:
        raw = _load_json_config(args.config)
        cfg = ExperimentConfig.from_dict(raw)
        if args.seed is not None:
            from dataclasses import replace
            cfg = replace(cfg, seed=int(args.seed))
    except (SchemaError, ValueError, TypeError) as exc:
        return _fail("schema", str(exc), EXIT_SCHEMA)
    try:
        run_experiment(cfg, args.out, threads=args.threads, full_grid=args.full_grid)
        print(json.dumps({"ok": True, "out": str(args.out),
                          "config_hash": cfg.config_hash()}))
        return EXIT_OK
    except NoAdmissiblePairsError as exc:
        return _fail("no_pairs", str(exc), EXIT_NO_PAIRS)
    except Exception as exc:  # pragma: no cover - defensive
        return _fail("internal", f"{type(exc).__name__}: {exc}", EXIT_INTERNAL)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="probmatch",
        description="Matching-based causal inference with noisy variables.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="validate a dataset file")
    p_val.add_argument("dataset")
    p_val.add_argument("--format", choices=("csv", "json"), default=None)
    p_val.set_defaults(func=cmd_validate)

    p_match = sub.add_parser("match", help="match a dataset and report balance")
    p_match.add_argument("dataset")
    p_match.add_argument("--config", default=None, help="JSON matching config")
    p_match.add_argument("--out", required=True, help="output directory")
    p_match.add_argument("--seed", type=int, default=None)
    p_match.add_argument("--format", choices=("csv", "json"), default=None)
    p_match.set_defaults(func=cmd_match)

    p_exp = sub.add_parser("experiment", help="run a simulation study grid")
    p_exp.add_argument("--config", required=True,
                       help="JSON experiment config (or a previous manifest)")
    p_exp.add_argument("--out", required=True, help="output directory")
    p_exp.add_argument("--seed", type=int, default=None)
    p_exp.add_argument("--full-grid", action="store_true",
                       help="use the reference 10x100 replication protocol")
    p_exp.add_argument("--threads", type=int, default=1)
    p_exp.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
