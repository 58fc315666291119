"""Experiment presets and the multi-seed sweep runner.

A sweep enumerates (axis value, algorithm, init, seed) cells in a fixed
order, trains each cell from a stream derived from its seed, and emits one
CSV row per cell plus a JSON aggregate of per-cell means and standard
deviations. Cell enumeration order fixes the CSV row order regardless of how
many workers execute the cells.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError
from .linalg import gaussian_matrix
from .model import Dataset, GroundTruthModel, generate_dataset
from .rng import RngStream
from .train import ALGORITHMS, INITS, RunResult, TrainConfig, train

EXPERIMENTS = ("scale_overrealization", "scale_all", "noise_sweep", "custom")
AXIS_NAMES = {
    "scale_overrealization": "p_prime",
    "scale_all": "d",
    "noise_sweep": "noise_var",
    "custom": "p_prime",
}
CSV_COLUMNS = (
    "experiment", "axis_value", "algorithm", "init", "seed",
    "final_d_r_cosine", "final_d_r_euclidean", "final_loss", "wall_time_s",
)


@dataclass
class ExperimentConfig:
    experiment: str = "custom"
    d: int = 50
    p: int = 100
    k: int = 3
    noise_var: float = 0.02
    normalize_codes: bool = True
    sigma_z: float = 1.0
    n: int = 500
    axis_values: list = field(default_factory=lambda: [100, 200, 400])
    algorithms: list = field(default_factory=lambda: ["baseline", "masked"])
    inits: list = field(default_factory=lambda: ["samples"])
    seeds: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    epochs: int = 100
    batch_size: int = 200
    lr: float = 0.001
    mask_size: int | None = None
    p_prime: int | None = None     # fixed p' for noise_sweep / custom

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ContractError(f"unknown experiment {self.experiment!r}")
        if not self.axis_values:
            raise ContractError("sweep axis must be non-empty")
        # plain python scalars so CSV/JSON formatting is locale- and dtype-free
        self.axis_values = [
            v.item() if hasattr(v, "item") else v for v in self.axis_values
        ]
        self.seeds = [int(s) for s in self.seeds]
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise ContractError("seeds must be a non-empty list of distinct values")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ContractError(f"unknown algorithm {a!r}")
        for i in self.inits:
            if i not in INITS:
                raise ContractError(f"unknown init {i!r}")

    @property
    def axis_name(self) -> str:
        return AXIS_NAMES[self.experiment]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        allowed = set(cls.__dataclass_fields__)
        unknown = set(data) - allowed
        if unknown:
            raise ContractError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def reduced_preset(experiment: str) -> ExperimentConfig:
    """Desk-scale presets sized to run in minutes."""
    if experiment == "scale_overrealization":
        return ExperimentConfig(
            experiment=experiment, d=50, p=100, k=3, noise_var=1.0 / 50,
            n=500, axis_values=[100, 200, 400], inits=["samples", "local"],
            epochs=100,
        )
    if experiment == "scale_all":
        return ExperimentConfig(
            experiment=experiment, d=40, p=80, k=2, noise_var=0.0,  # per-cell values derived
            n=500, axis_values=[40, 60, 80], inits=["samples", "local"],
            epochs=100, seeds=[1, 2, 3],
        )
    if experiment == "noise_sweep":
        d = 50
        return ExperimentConfig(
            experiment=experiment, d=d, p=100, k=3, noise_var=1.0 / d,
            n=500, axis_values=list(np.linspace(1.0 / d**2, 1.0 / d, 5)),
            inits=["samples", "local"], epochs=100, p_prime=400,
        )
    raise ContractError(f"no preset for {experiment!r}")


def paper_preset(experiment: str) -> ExperimentConfig:
    """Full-scale presets; a sweep at this scale takes hours."""
    if experiment == "scale_overrealization":
        return ExperimentConfig(
            experiment=experiment, d=100, p=200, k=5, noise_var=1.0 / 100,
            n=1000, axis_values=[200, 400, 600, 800, 1000],
            inits=["samples", "local"], epochs=500,
        )
    if experiment == "scale_all":
        return ExperimentConfig(
            experiment=experiment, d=100, p=200, k=5, noise_var=0.0,
            n=1000, axis_values=[100, 150, 200, 250],
            inits=["samples", "local"], epochs=500,
        )
    if experiment == "noise_sweep":
        d = 100
        return ExperimentConfig(
            experiment=experiment, d=d, p=200, k=5, noise_var=1.0 / d,
            n=1000, axis_values=[s**2 for s in (0.01, 0.0325, 0.055, 0.0775, 0.1)],
            inits=["samples", "local"], epochs=500, p_prime=1000,
        )
    raise ContractError(f"no preset for {experiment!r}")


@dataclass(frozen=True)
class Cell:
    axis_value: float
    algorithm: str
    init: str
    seed: int


def cells(cfg: ExperimentConfig) -> list[Cell]:
    return [
        Cell(ax, alg, init, seed)
        for ax in cfg.axis_values
        for alg in cfg.algorithms
        for init in cfg.inits
        for seed in cfg.seeds
    ]


def _cell_problem(cfg: ExperimentConfig, cell: Cell):
    """Resolve the model dimensions and p' for one cell."""
    if cfg.experiment == "scale_overrealization":
        d, p, k, noise_var, p_prime = cfg.d, cfg.p, cfg.k, cfg.noise_var, int(cell.axis_value)
    elif cfg.experiment == "scale_all":
        d = int(cell.axis_value)
        p, k = 2 * d, max(d // 20, 1)
        noise_var, p_prime = 1.0 / d, 4 * d
    elif cfg.experiment == "noise_sweep":
        d, p, k = cfg.d, cfg.p, cfg.k
        noise_var = float(cell.axis_value)
        p_prime = cfg.p_prime if cfg.p_prime is not None else cfg.p
    else:
        d, p, k, noise_var = cfg.d, cfg.p, cfg.k, cfg.noise_var
        p_prime = int(cell.axis_value) if cfg.p_prime is None else cfg.p_prime
    return d, p, k, noise_var, p_prime


def cell_dataset(cfg: ExperimentConfig, cell: Cell) -> Dataset:
    d, p, k, noise_var, p_prime = _cell_problem(cfg, cell)
    rng = RngStream(cell.seed)
    A = gaussian_matrix(rng.child("ground_truth"), d, p)
    model = GroundTruthModel(
        A=A, k=k, sigma_z=cfg.sigma_z,
        normalize_codes=cfg.normalize_codes, noise_var=noise_var,
    )
    return generate_dataset(rng.child("data"), model, cfg.n, p_prime)


def run_cell(cfg: ExperimentConfig, cell: Cell, dataset: Dataset | None = None):
    """Train one cell; returns (row dict, RunResult)."""
    d, p, k, noise_var, p_prime = _cell_problem(cfg, cell)
    if dataset is None:
        dataset = cell_dataset(cfg, cell)
    tc = TrainConfig(
        k=k, p_prime=p_prime, algorithm=cell.algorithm, epochs=cfg.epochs,
        batch_size=min(cfg.batch_size, cfg.n), lr=cfg.lr,
        mask_size=cfg.mask_size, init=cell.init, seed=cell.seed,
    )
    t0 = time.perf_counter()
    result = train(dataset, tc)
    wall = time.perf_counter() - t0
    row = {
        "experiment": cfg.experiment,
        "axis_value": cell.axis_value,
        "algorithm": cell.algorithm,
        "init": cell.init,
        "seed": cell.seed,
        "final_d_r_cosine": result.final_d_r_cosine,
        "final_d_r_euclidean": result.final_d_r_euclidean,
        "final_loss": result.final_loss,
        "wall_time_s": wall,
    }
    return row, result


def _run_cell_worker(args):
    cfg_dict, cell = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    row, _ = run_cell(cfg, cell)
    return row


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def aggregate_rows(rows) -> list[dict]:
    """Per (axis_value, algorithm, init): mean and std of the final cosine error."""
    groups: dict[tuple, list[float]] = {}
    for row in rows:
        key = (row["axis_value"], row["algorithm"], row["init"])
        groups.setdefault(key, []).append(float(row["final_d_r_cosine"]))
    out = []
    for (ax, alg, init), vals in groups.items():
        arr = np.asarray(vals)
        out.append({
            "axis_value": ax,
            "algorithm": alg,
            "init": init,
            "n_seeds": len(vals),
            "mean_final_d_r_cosine": float(arr.mean()),
            "std_final_d_r_cosine": float(arr.std(ddof=1)) if len(vals) > 1 else 0.0,
        })
    return out


@dataclass
class SweepResult:
    config: ExperimentConfig
    rows: list[dict]

    @property
    def aggregates(self) -> list[dict]:
        return aggregate_rows(self.rows)

    def mean_final(self, axis_value, algorithm, init) -> float:
        for agg in self.aggregates:
            if (agg["axis_value"], agg["algorithm"], agg["init"]) == (axis_value, algorithm, init):
                return agg["mean_final_d_r_cosine"]
        raise KeyError((axis_value, algorithm, init))


def run_sweep(cfg: ExperimentConfig, threads: int = 1) -> SweepResult:
    """Run every cell; rows come back in cell enumeration order."""
    all_cells = cells(cfg)
    if threads > 1:
        args = [(asdict(cfg), c) for c in all_cells]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_run_cell_worker, args))
    else:
        rows = [run_cell(cfg, cell)[0] for cell in all_cells]
    return SweepResult(cfg, rows)


def write_sweep_outputs(result: SweepResult, out_dir, master_seed=None) -> dict:
    """Write rows.csv, aggregate.json, and manifest.json; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "rows.csv"
    csv_path.write_text(rows_to_csv(result.rows))
    agg_path = out_dir / "aggregate.json"
    payload = {
        "experiment": result.config.experiment,
        "config": asdict(result.config),
        "master_seed": master_seed,
        "aggregates": result.aggregates,
    }
    agg_path.write_text(json.dumps(payload, indent=2))
    manifest = out_dir / "manifest.json"
    manifest.write_text(json.dumps(
        {"config": asdict(result.config), "master_seed": master_seed,
         "csv_columns": list(CSV_COLUMNS)}, indent=2))
    return {"csv": csv_path, "aggregate": agg_path, "manifest": manifest}
