"""The synthetic data-generating process y = A z + eps and dataset persistence.

Latents (the true code and noise of every sample) are stored alongside y for
support-recovery diagnostics; training code only ever sees the measurement
stack returned by :func:`train_ys`.
"""

from __future__ import annotations

import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .decode import SparseVector
from .errors import ContractError, DatasetFormatError, SchemaVersionError
from .linalg import as_matrix, column_norms
from .rng import RngStream

SCHEMA_VERSION = 1


@dataclass
class GroundTruthModel:
    """Ground-truth dictionary plus code and noise distributions."""

    A: np.ndarray
    k: int
    sigma_z: float = 1.0
    normalize_codes: bool = True
    noise_var: float = 0.0
    support_dist: str = "uniform"

    def __post_init__(self):
        self.A = as_matrix(self.A, "A")
        if not (1 <= self.k <= self.p):
            raise ContractError(f"k={self.k} must lie in [1, p={self.p}]")
        if self.sigma_z <= 0:
            raise ContractError("sigma_z must be positive")
        if self.noise_var < 0:
            raise ContractError("noise_var must be non-negative")
        if self.support_dist != "uniform":
            raise ContractError(f"unknown support distribution {self.support_dist!r}")
        norms = column_norms(self.A)
        if np.max(np.abs(norms - 1.0)) > 1e-8:
            raise ContractError("ground-truth dictionary must have unit-norm columns")

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.A.shape[1]

    def signal(self, supports, values) -> np.ndarray:
        """Noiseless signals A z for a batch of codes, shape (n, d).

        This is the one canonical evaluation of A z; dataset generation and
        the latent-consistency check both call it so the identity
        y = signal + eps holds bitwise.
        """
        cols = self.A[:, supports]            # (d, n, k)
        return np.einsum("dnk,nk->nd", cols, values)


@dataclass
class Sample:
    """One measurement with its retained latents."""

    y: np.ndarray
    z_true: SparseVector
    eps_true: np.ndarray


@dataclass
class Dataset:
    """Generated samples plus the holdout pool used for initialization."""

    model: GroundTruthModel
    seed: int
    Y: np.ndarray
    Z_support: np.ndarray
    Z_values: np.ndarray
    EPS: np.ndarray
    Y_holdout: np.ndarray
    Zh_support: np.ndarray
    Zh_values: np.ndarray
    EPS_holdout: np.ndarray

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def n_holdout(self) -> int:
        return self.Y_holdout.shape[0]

    def _sample(self, Y, S, V, E, i) -> Sample:
        order = np.argsort(S[i])
        z = SparseVector(self.model.p, S[i][order], V[i][order])
        return Sample(Y[i], z, E[i])

    @property
    def samples(self) -> list[Sample]:
        return [
            self._sample(self.Y, self.Z_support, self.Z_values, self.EPS, i)
            for i in range(self.n)
        ]

    @property
    def holdout(self) -> list[Sample]:
        return [
            self._sample(self.Y_holdout, self.Zh_support, self.Zh_values, self.EPS_holdout, i)
            for i in range(self.n_holdout)
        ]


def train_ys(ds: Dataset) -> np.ndarray:
    """Train-facing view: measurements only, never latents."""
    return ds.Y


def holdout_ys(ds: Dataset) -> np.ndarray:
    return ds.Y_holdout


def draw_codes(rng: RngStream, model: GroundTruthModel, n: int):
    """Draw n sparse codes: uniform size-k supports, i.i.d. N(0, sigma_z^2) values.

    Returns (supports, values), each (n, k), supports row-sorted. With
    ``normalize_codes`` every value row is rescaled to unit Euclidean norm.
    """
    p, k = model.p, model.k
    # uniform k-subsets: first k entries of a uniform random permutation
    keys = rng.gen.random((n, p))
    supports = np.sort(np.argsort(keys, axis=1)[:, :k], axis=1).astype(np.int64)
    values = model.sigma_z * rng.gen.standard_normal((n, k))
    if model.normalize_codes:
        norms = np.linalg.norm(values, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise ContractError("cannot normalize a zero code vector")
        values = values / norms
    return supports, values


def sample_code(rng: RngStream, model: GroundTruthModel) -> SparseVector:
    """Draw a single sparse code from the model."""
    supports, values = draw_codes(rng, model, 1)
    return SparseVector(model.p, supports[0], values[0])


def draw_batch(rng: RngStream, model: GroundTruthModel, n: int):
    """Draw n full samples; returns (Y, supports, values, EPS)."""
    supports, values = draw_codes(rng, model, n)
    eps = np.sqrt(model.noise_var) * rng.gen.standard_normal((n, model.d))
    Y = model.signal(supports, values) + eps
    return Y, supports, values, eps


def generate_dataset(rng: RngStream, model: GroundTruthModel, n: int, n_holdout: int = 0) -> Dataset:
    """Generate the main samples, then the holdout pool, from one stream."""
    if n < 1:
        raise ContractError("need at least one sample")
    if n_holdout < 0:
        raise ContractError("n_holdout must be non-negative")
    Y, S, V, E = draw_batch(rng, model, n)
    Yh, Sh, Vh, Eh = draw_batch(rng, model, n_holdout)
    return Dataset(model, rng.seed, Y, S, V, E, Yh, Sh, Vh, Eh)


def save_dataset(ds: Dataset, path) -> None:
    """Write a self-describing .npz container; numeric round-trip is exact."""
    path = Path(path)
    m = ds.model
    with open(path, "wb") as fh:
        np.savez(
            fh,
            schema_version=np.int64(SCHEMA_VERSION),
            d=np.int64(m.d), p=np.int64(m.p), k=np.int64(m.k),
            sigma_z=np.float64(m.sigma_z),
            normalize_codes=np.int64(m.normalize_codes),
            noise_var=np.float64(m.noise_var),
            seed=np.uint64(ds.seed),
            n=np.int64(ds.n), n_holdout=np.int64(ds.n_holdout),
            A=m.A,
            Y=ds.Y, Z_support=ds.Z_support, Z_values=ds.Z_values, EPS=ds.EPS,
            Y_holdout=ds.Y_holdout, Zh_support=ds.Zh_support,
            Zh_values=ds.Zh_values, EPS_holdout=ds.EPS_holdout,
        )


_ARRAY_KEYS = (
    "A", "Y", "Z_support", "Z_values", "EPS",
    "Y_holdout", "Zh_support", "Zh_values", "EPS_holdout",
)


def load_dataset(path) -> Dataset:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as f:
            if "schema_version" not in f:
                raise DatasetFormatError(f"{path}: not a dataset file (no schema_version)")
            version = int(f["schema_version"])
            if version != SCHEMA_VERSION:
                raise SchemaVersionError(
                    f"{path}: schema version {version} unsupported (expected {SCHEMA_VERSION})"
                )
            missing = [k for k in _ARRAY_KEYS if k not in f]
            if missing:
                raise DatasetFormatError(f"{path}: missing arrays {missing}")
            model = GroundTruthModel(
                A=f["A"], k=int(f["k"]), sigma_z=float(f["sigma_z"]),
                normalize_codes=bool(int(f["normalize_codes"])),
                noise_var=float(f["noise_var"]),
            )
            return Dataset(
                model, int(f["seed"]),
                f["Y"], f["Z_support"], f["Z_values"], f["EPS"],
                f["Y_holdout"], f["Zh_support"], f["Zh_values"], f["EPS_holdout"],
            )
    except (zipfile.BadZipFile, OSError, KeyError, ValueError) as e:
        raise DatasetFormatError(f"{path}: unreadable dataset file ({e})") from e
