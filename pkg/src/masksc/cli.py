"""Command-line front end.

Subcommands: ``gen`` (dataset generation), ``train`` (one training run),
``sweep`` (multi-seed experiment grids), ``verify`` (theorem checks), and
``metrics`` (one-shot recovery/coherence/RIP report on saved matrices).

Exit codes: 0 success, 1 configuration error, 2 runtime or numeric error,
3 a verification assertion failed.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import experiments
from .decode import Mask
from .errors import (
    BudgetError,
    ContractError,
    DatasetFormatError,
    NumericalError,
)
from .linalg import gaussian_matrix
from .metrics import mutual_coherence, recovery_error, rip_delta
from .model import GroundTruthModel, generate_dataset, load_dataset, save_dataset
from .rng import RngStream
from .theory import verify_theorem_masking, verify_theorem_overfit
from .train import TrainConfig, train

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_VERIFY = 3

GEN_KEYS = {
    "d", "p", "k", "sigma_z", "normalize_codes", "noise_var",
    "n", "n_holdout", "seed",
}
TRAIN_KEYS = set(TrainConfig.__dataclass_fields__)
VERIFY_KEYS = {
    "d", "p", "k", "sigma_z", "normalize_codes", "noise_var", "seed",
    "n_eval", "gamma1", "gamma2", "column_budget",
    "mask_size", "sigma_z_grid", "trials",
}


def _load_config(path, allowed: set, label: str) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ContractError(f"cannot read {label} config {path}: {e}") from e
    if not isinstance(data, dict):
        raise ContractError(f"{label} config must be a JSON object")
    unknown = set(data) - allowed
    if unknown:
        raise ContractError(f"{label} config has unknown keys: {sorted(unknown)}")
    return data


def _write_json(path, payload) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2))


def cmd_gen(args) -> int:
    cfg = _load_config(args.config, GEN_KEYS, "gen")
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    d, p, k = int(cfg["d"]), int(cfg["p"]), int(cfg["k"])
    rng = RngStream(seed)
    A = gaussian_matrix(rng.child("ground_truth"), d, p)
    model = GroundTruthModel(
        A=A, k=k,
        sigma_z=float(cfg.get("sigma_z", 1.0)),
        normalize_codes=bool(cfg.get("normalize_codes", True)),
        noise_var=float(cfg.get("noise_var", 0.0)),
    )
    ds = generate_dataset(
        rng.child("data"), model, int(cfg.get("n", 1000)), int(cfg.get("n_holdout", 0))
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, out)
    print(f"wrote {out} (d={d}, p={p}, k={k}, n={ds.n}, holdout={ds.n_holdout}, seed={seed})")
    return EXIT_OK


def cmd_train(args) -> int:
    raw = _load_config(args.config, TRAIN_KEYS, "train") if args.config else {}
    if args.seed is not None:
        raw["seed"] = args.seed
    dataset = load_dataset(args.dataset)
    raw.setdefault("k", dataset.model.k)
    raw.setdefault("p_prime", dataset.model.p)
    cfg = TrainConfig(**raw)
    result = train(dataset, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.save(out / "run.json")
    lines = ["epoch,loss,d_r_cosine,d_r_euclidean"]
    for e in range(len(result.loss_history)):
        lines.append(
            f"{e},{result.loss_history[e]!r},"
            f"{result.d_r_cosine_history[e]!r},{result.d_r_euclidean_history[e]!r}"
        )
    (out / "epochs.csv").write_text("\n".join(lines) + "\n")
    if not args.no_plots:
        from .plots import render_training_figure

        render_training_figure(result, out / "training.png")
    print(
        f"trained {cfg.algorithm} ({cfg.init} init, p'={cfg.p_prime}) for "
        f"{cfg.epochs} epochs: final d_R cosine {result.final_d_r_cosine:.6f}"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.config:
        allowed = set(experiments.ExperimentConfig.__dataclass_fields__)
        cfg = experiments.ExperimentConfig.from_dict(
            _load_config(args.config, allowed, "sweep")
        )
    else:
        preset = experiments.paper_preset if args.paper_scale else experiments.reduced_preset
        cfg = preset(args.experiment)
    if args.seed is not None:
        cfg.seeds = [args.seed + i for i in range(len(cfg.seeds))]
    result = experiments.run_sweep(cfg, threads=args.threads)
    paths = experiments.write_sweep_outputs(result, args.out, master_seed=args.seed)
    if not args.no_plots:
        from .plots import render_sweep_figure

        fig = render_sweep_figure(
            result.aggregates, cfg.axis_name,
            Path(args.out) / "sweep.png", title=cfg.experiment,
        )
        paths["figure"] = fig
    print(f"swept {len(result.rows)} cells -> {paths['csv']}")
    return EXIT_OK


def _verify_model(cfg: dict, defaults: dict, rng: RngStream):
    merged = dict(defaults)
    merged.update(cfg)
    A = gaussian_matrix(rng.child("ground_truth"), int(merged["d"]), int(merged["p"]))
    model = GroundTruthModel(
        A=A, k=int(merged["k"]), sigma_z=float(merged["sigma_z"]),
        normalize_codes=bool(merged["normalize_codes"]),
        noise_var=float(merged["noise_var"]),
    )
    return model, merged


def cmd_verify(args) -> int:
    cfg = _load_config(args.config, VERIFY_KEYS, "verify") if args.config else {}
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    rng = RngStream(seed)
    out = Path(args.out)

    if args.theorem == "overfit":
        defaults = dict(
            d=8, p=4, k=1, sigma_z=1.0, normalize_codes=True, noise_var=0.05,
            n_eval=2000, gamma1=3.0, gamma2=0.5, column_budget=1_000_000,
        )
        model, merged = _verify_model(cfg, defaults, rng)
        report = verify_theorem_overfit(
            model.A, model, n_eval=int(merged["n_eval"]), rng=rng.child("verify"),
            gamma1=float(merged["gamma1"]), gamma2=float(merged["gamma2"]),
            column_budget=int(merged["column_budget"]),
        )
        figure_fn = "render_overfit_figure"
    else:
        defaults = dict(
            d=60, p=30, k=3, sigma_z=1.0, normalize_codes=False, noise_var=1.0 / 60,
            mask_size=54, sigma_z_grid=[1.0, 4.0, 16.0, 64.0], trials=5000,
        )
        model, merged = _verify_model(cfg, defaults, rng)
        mask = Mask.draw(rng.child("mask"), model.d, int(merged["mask_size"]))
        try:
            report = verify_theorem_masking(
                model, mask, merged["sigma_z_grid"], int(merged["trials"]),
                rng.child("verify"), strict=args.strict,
            )
        except IncoherenceError as e:
            _write_json(out, {
                "theorem": args.theorem,
                "params": {k: v for k, v in merged.items()},
                "seed": seed,
                "error": str(e),
                "pass": False,
            })
            print(f"verify {args.theorem}: precondition failed -> {out}", file=sys.stderr)
            return EXIT_CONFIG
        figure_fn = "render_masking_figure"

    payload = {
        "theorem": args.theorem,
        "params": {k: v for k, v in merged.items()},
        "seed": seed,
        "report": report,
    }
    _write_json(out, payload)
    if not args.no_plots:
        from . import plots

        getattr(plots, figure_fn)(report, out.with_suffix(".png"))
    print(f"verify {args.theorem}: pass={report['pass']} -> {out}")
    return EXIT_OK if report["pass"] else EXIT_VERIFY


def _load_matrix(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path)
    if path.suffix == ".npz":
        return load_dataset(path).model.A
    if path.suffix == ".json":
        return np.asarray(json.loads(path.read_text())["final_dictionary"])
    if path.suffix == ".csv":
        return np.loadtxt(path, delimiter=",")
    raise ContractError(f"cannot infer matrix format from {path}")


def cmd_metrics(args) -> int:
    A = _load_matrix(args.matrix_a)
    report: dict = {"matrix_a": str(args.matrix_a), "shape_a": list(A.shape)}
    norms_ok = bool(np.max(np.abs(np.linalg.norm(A, axis=0) - 1.0)) <= 1e-8)
    report["mutual_coherence_a"] = mutual_coherence(A) if norms_ok else None
    if args.matrix_b:
        B = _load_matrix(args.matrix_b)
        rec = recovery_error(A, B)
        report.update({
            "matrix_b": str(args.matrix_b),
            "shape_b": list(B.shape),
            "d_r_euclidean": rec.d_r_euclidean,
            "d_r_cosine": rec.d_r_cosine,
        })
    if args.rip_s:
        rng = RngStream(args.seed if args.seed is not None else 0)
        total = math.comb(A.shape[1], args.rip_s)
        mode = "exact" if total <= args.rip_budget else "sampled"
        delta, lower = rip_delta(A, args.rip_s, mode, args.rip_budget, rng)
        report.update({"rip_s": args.rip_s, "rip_delta": delta, "rip_is_lower_bound": lower})
    _write_json(args.out, report)
    print(json.dumps(report, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="masksc",
        description="Sparse dictionary learning with masked objectives",
    )
    default_threads = int(os.environ.get("MASKSC_THREADS", "1"))
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a dataset file")
    g.add_argument("--config", required=True)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen)

    t = sub.add_parser("train", help="run one training configuration")
    t.add_argument("--dataset", required=True)
    t.add_argument("--config", default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out", required=True)
    t.add_argument("--no-plots", action="store_true")
    t.set_defaults(fn=cmd_train)

    s = sub.add_parser("sweep", help="run a multi-seed experiment grid")
    s.add_argument("--experiment", choices=experiments.EXPERIMENTS[:-1],
                   default="scale_overrealization")
    s.add_argument("--config", default=None)
    s.add_argument("--paper-scale", action="store_true",
                   help="full-scale preset (multi-hour budget)")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--threads", type=int, default=default_threads)
    s.add_argument("--out", required=True)
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(fn=cmd_sweep)

    v = sub.add_parser("verify", help="run a theorem verification")
    v.add_argument("--theorem", choices=("overfit", "masking"), required=True)
    v.add_argument("--config", default=None)
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--strict", action="store_true")
    v.add_argument("--out", required=True)
    v.add_argument("--no-plots", action="store_true")
    v.set_defaults(fn=cmd_verify)

    m = sub.add_parser("metrics", help="recovery/coherence/RIP report on saved matrices")
    m.add_argument("--matrix-a", required=True)
    m.add_argument("--matrix-b", default=None)
    m.add_argument("--rip-s", type=int, default=None)
    m.add_argument("--rip-budget", type=int, default=100_000)
    m.add_argument("--seed", type=int, default=None)
    m.add_argument("--out", required=True)
    m.set_defaults(fn=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ContractError, DatasetFormatError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, BudgetError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
