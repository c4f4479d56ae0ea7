"""Command-line front end: fit, synth, eval, and baseline subcommands.

Exit codes: 0 success, 2 configuration/input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from typing import Optional

import numpy as np

from . import io
from .baseline import em_fit, viterbi_decode
from .config import default_config, load_config, load_synth_spec
from .errors import ConfigError, NumericalError
from .metrics import nmi, switch_count
from .model import rescale_observations, validate_config
from .synth import sample_slds
from .vbem import FitOptions, fit


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sldseg",
        description="Unsupervised mode segmentation of multichannel sensor streams",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit the switching model to CSV data")
    p_fit.add_argument("--config", help="flat key-value configuration file")
    p_fit.add_argument("--data", action="append", required=True,
                       help="sensor CSV; repeat for synchronized sequences")
    p_fit.add_argument("--out", required=True, help="output directory")
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--restarts", type=int, default=20)
    p_fit.add_argument("--max-iters", type=int, default=500)

    p_synth = sub.add_parser("synth", help="sample a synthetic benchmark dataset")
    p_synth.add_argument("--spec", required=True, help="synthetic spec file")
    p_synth.add_argument("--out", required=True, help="output directory")

    p_eval = sub.add_parser("eval", help="score predictions against labels")
    p_eval.add_argument("--pred", required=True,
                        help="prediction CSV (or directory of CSVs)")
    p_eval.add_argument("--labels", required=True,
                        help="ground-truth labels CSV (or directory)")

    p_base = sub.add_parser("baseline", help="fit the Gaussian HMM baseline")
    p_base.add_argument("--config", help="flat key-value configuration file")
    p_base.add_argument("--data", action="append", required=True)
    p_base.add_argument("--out", required=True)
    p_base.add_argument("--n-states", type=int, required=True)
    p_base.add_argument("--seed", type=int, default=0)
    p_base.add_argument("--max-iters", type=int, default=200)
    return parser


def _load_data(paths: list[str], config_path: Optional[str]):
    parts = [io.load_csv(p) for p in paths]
    obs = io.merge_observation_sets(parts)
    if config_path is not None:
        hp, run = load_config(config_path, dim_z=obs.dim_z)
    else:
        hp, run = default_config(obs.dim_z)
    if run.rescale_mode == "unit_variance":
        obs = rescale_observations(obs)
    else:
        obs = rescale_observations(obs, run.channel_scales)
    return obs, hp, run


def _cmd_fit(args) -> int:
    obs, hp, _ = _load_data(args.data, args.config)
    validate_config(hp, obs)
    opts = FitOptions(
        max_iters=args.max_iters, restarts=args.restarts, seed=args.seed
    )
    result = fit(obs, hp, opts)
    io.ensure_dir(args.out)
    io.write_modes_csv(os.path.join(args.out, "modes.csv"), result.map_modes)
    io.write_elbo_trace(os.path.join(args.out, "elbo_trace.csv"), result.elbo_trace)
    payload = {
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "seed": int(result.seed),
        "iterations": int(result.iterations),
        "converged": bool(result.converged),
        "final_elbo": float(result.elbo_trace[-1]),
        "map_modes": [int(m) for m in result.map_modes],
        "mode_marginals": [[float(v) for v in row] for row in result.mode_marginals],
        "config": {
            "source": args.config,
            "trunc_k": hp.trunc_k,
            "dim_x": hp.dim_x,
            "dim_z": hp.dim_z,
            "gamma": hp.gamma,
            "alpha0": hp.alpha0,
            "alpha": hp.alpha,
            "kappa": hp.kappa,
            "update_concentrations": hp.update_concentrations,
            "restarts": args.restarts,
            "max_iters": args.max_iters,
        },
    }
    io.write_result_json(os.path.join(args.out, "result.json"), payload)
    return 0


def _cmd_synth(args) -> int:
    spec = load_synth_spec(args.spec)
    obs, modes, _ = sample_slds(spec)
    io.ensure_dir(args.out)
    for n in range(obs.n_sequences):
        io.write_csv(os.path.join(args.out, f"data_{n:03d}.csv"), obs.sequences[n])
    io.write_labels(os.path.join(args.out, "labels.csv"), modes)
    return 0


def _eval_pair(pred_path: str, label_path: str) -> dict:
    pred = io.load_label_column(pred_path)
    truth = io.load_label_column(label_path)
    if pred.shape[0] != truth.shape[0]:
        raise ConfigError(
            f"length mismatch: {pred.shape[0]} predictions vs {truth.shape[0]} labels"
        )
    return {
        "nmi": nmi(pred, truth),
        "switch_count_pred": switch_count(pred),
        "switch_count_true": switch_count(truth),
    }


def _cmd_eval(args) -> int:
    if os.path.isdir(args.pred):
        names = sorted(f for f in os.listdir(args.pred) if f.endswith(".csv"))
        if not names:
            raise ConfigError(f"{args.pred}: no CSV files")
        runs = []
        for name in names:
            label_path = (
                os.path.join(args.labels, name) if os.path.isdir(args.labels) else args.labels
            )
            entry = _eval_pair(os.path.join(args.pred, name), label_path)
            entry["pred"] = name
            runs.append(entry)
        report = {"runs": runs, "median_nmi": float(np.median([r["nmi"] for r in runs]))}
    else:
        report = _eval_pair(args.pred, args.labels)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_baseline(args) -> int:
    obs, _, _ = _load_data(args.data, args.config)
    if obs.n_sequences != 1:
        raise ConfigError("the baseline trains on exactly one sequence")
    model, _ = em_fit(
        obs.sequences[0], n_states=args.n_states, seed=args.seed, max_iters=args.max_iters
    )
    path = viterbi_decode(model, obs.sequences[0])
    io.ensure_dir(args.out)
    io.write_modes_csv(os.path.join(args.out, "modes.csv"), path)
    return 0


_COMMANDS = {
    "fit": _cmd_fit,
    "synth": _cmd_synth,
    "eval": _cmd_eval,
    "baseline": _cmd_baseline,
}


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
