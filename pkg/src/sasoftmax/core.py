"""Shared data model: samples, datasets, batches, prototype matrices, loss results.

Column layout of the modality prototype matrix is fixed as visible-first:
columns [0, N) are visible prototypes, columns [N, 2N) are infrared ones.
All label arithmetic in the package relies on this layout.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import ContractViolation


class Modality(IntEnum):
    VIS = 0
    NIR = 1


_MODALITY_CODE = {Modality.VIS: "V", Modality.NIR: "N"}
_CODE_MODALITY = {"V": Modality.VIS, "N": Modality.NIR}


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    identity: int
    modality: Modality

    def __post_init__(self):
        if not np.all(np.isfinite(self.features)):
            raise ContractViolation("sample features must be finite")
        if self.identity < 0:
            raise ContractViolation("identity must be non-negative")


@dataclass(frozen=True)
class Dataset:
    """Column-oriented sample store.

    features: M x D_in, identities: length M ints in [0, N), modalities:
    length M ints (Modality values). Identity labels must be dense.
    """

    features: np.ndarray
    identities: np.ndarray
    modalities: np.ndarray
    num_identities: int
    input_dim: int

    def __post_init__(self):
        if self.features.shape != (len(self.identities), self.input_dim):
            raise ContractViolation("feature matrix shape mismatch")
        if len(self.identities) != len(self.modalities):
            raise ContractViolation("identity / modality length mismatch")
        if len(self.identities) and (
            self.identities.min() < 0 or self.identities.max() >= self.num_identities
        ):
            raise ContractViolation("identity labels out of range")

    def __len__(self) -> int:
        return len(self.identities)

    @staticmethod
    def from_samples(samples: list[Sample]) -> "Dataset":
        if not samples:
            raise ContractViolation("cannot build an empty dataset")
        dim = len(samples[0].features)
        feats = np.stack([s.features for s in samples]).astype(float)
        ids = np.array([s.identity for s in samples], dtype=int)
        mods = np.array([int(s.modality) for s in samples], dtype=int)
        n = int(ids.max()) + 1
        present = set(ids.tolist())
        if present != set(range(n)):
            raise ContractViolation("identity labels must be dense 0..N-1")
        return Dataset(feats, ids, mods, n, dim)

    def indices_of(self, identity: int, modality: Modality) -> np.ndarray:
        return np.nonzero(
            (self.identities == identity) & (self.modalities == int(modality))
        )[0]


@dataclass(frozen=True)
class Batch:
    embeddings: np.ndarray  # B x d
    identities: np.ndarray
    modalities: np.ndarray

    def __post_init__(self):
        b = self.embeddings.shape[0]
        if len(self.identities) != b or len(self.modalities) != b:
            raise ContractViolation("batch label arrays must match batch size")


@dataclass
class ModalityPrototypeMatrix:
    """d x 2N matrix [W^v | W^n]; column j < N is visible, j >= N infrared."""

    W: np.ndarray

    def __post_init__(self):
        if self.W.ndim != 2 or self.W.shape[1] % 2 != 0:
            raise ContractViolation("modality prototypes need an even column count")
        if not np.all(np.isfinite(self.W)):
            raise ContractViolation("prototype entries must be finite")

    @property
    def num_identities(self) -> int:
        return self.W.shape[1] // 2

    @property
    def dim(self) -> int:
        return self.W.shape[0]

    def visible(self) -> np.ndarray:
        return self.W[:, : self.num_identities]

    def infrared(self) -> np.ndarray:
        return self.W[:, self.num_identities :]


@dataclass
class IdentityPrototypeMatrix:
    """d x N matrix, one column per identity."""

    W: np.ndarray

    def __post_init__(self):
        if self.W.ndim != 2:
            raise ContractViolation("identity prototypes must be a 2-d matrix")
        if not np.all(np.isfinite(self.W)):
            raise ContractViolation("prototype entries must be finite")

    @property
    def num_identities(self) -> int:
        return self.W.shape[1]

    @property
    def dim(self) -> int:
        return self.W.shape[0]


@dataclass
class LossResult:
    """Loss value plus gradients, with absent gradients encoding routing.

    grad_embeddings / grad_prototypes are None exactly when the loss does
    not flow to that target.
    """

    value: float
    grad_embeddings: np.ndarray | None = None
    grad_prototypes: np.ndarray | None = None
    extras: dict = field(default_factory=dict)


def rewrite_labels(identity: int, modality: Modality, num_identities: int):
    """Spectral label rewriting: prototype-side target keeps the sample's own
    modality column, feature-side target is the cross-modality column.

    Returns (yW, yF), both in [0, 2N)."""
    if not 0 <= identity < num_identities:
        raise ContractViolation(
            f"identity {identity} out of range [0, {num_identities})"
        )
    if modality == Modality.VIS:
        return identity, identity + num_identities
    return identity + num_identities, identity


def rewrite_labels_batch(
    identities: np.ndarray, modalities: np.ndarray, num_identities: int
):
    """Vectorized rewrite_labels. Returns (yW, yF) integer arrays."""
    ids = np.asarray(identities, dtype=int)
    mods = np.asarray(modalities, dtype=int)
    if ids.size and (ids.min() < 0 or ids.max() >= num_identities):
        raise ContractViolation("identity out of range")
    own = ids + mods * num_identities
    cross = ids + (1 - mods) * num_identities
    return own, cross


def save_dataset_csv(dataset: Dataset, path) -> None:
    """Write the `id,modality,f0..` CSV format (modality coded V/N)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["id", "modality"] + [f"f{i}" for i in range(dataset.input_dim)]
        )
        for i in range(len(dataset)):
            writer.writerow(
                [int(dataset.identities[i]), _MODALITY_CODE[Modality(dataset.modalities[i])]]
                + [repr(float(v)) for v in dataset.features[i]]
            )


def load_dataset_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["id", "modality"]:
            raise ContractViolation(f"unexpected dataset header in {path}")
        dim = len(header) - 2
        ids, mods, rows = [], [], []
        for row in reader:
            ids.append(int(row[0]))
            if row[1] not in _CODE_MODALITY:
                raise ContractViolation(f"unknown modality code {row[1]!r}")
            mods.append(int(_CODE_MODALITY[row[1]]))
            rows.append([float(v) for v in row[2:]])
    if not rows:
        raise ContractViolation(f"empty dataset file {path}")
    feats = np.array(rows, dtype=float)
    if feats.shape[1] != dim:
        raise ContractViolation("ragged feature rows")
    ids_arr = np.array(ids, dtype=int)
    return Dataset(feats, ids_arr, np.array(mods, dtype=int), int(ids_arr.max()) + 1, dim)
