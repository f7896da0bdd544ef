"""Mapping between raw SUT input values and the [-1, 1] feature domain.

Integer variables map affinely from [lo, hi]; categorical variables are
first replaced by their declaration index, then mapped the same way.
Decoding rounds half-up and clamps, so any real vector decodes to a valid
test point.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class InputVariableSpec:
    name: str
    kind: str = "integer-range"
    lo: int = 0
    hi: int = 0
    categories: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.kind == "integer-range":
            if not self.lo < self.hi:
                raise DomainError(f"{self.name}: need lo < hi, got [{self.lo}, {self.hi}]")
        elif self.kind == "categorical":
            cats = tuple(self.categories)
            object.__setattr__(self, "categories", cats)
            if not cats or len(set(cats)) != len(cats):
                raise DomainError(f"{self.name}: categories must be non-empty and unique")
        else:
            raise DomainError(f"{self.name}: unknown kind {self.kind!r}")

    @classmethod
    def integer(cls, name: str, lo: int, hi: int) -> "InputVariableSpec":
        return cls(name, "integer-range", int(lo), int(hi))

    @classmethod
    def categorical(cls, name: str, categories: Sequence[str]) -> "InputVariableSpec":
        return cls(name, "categorical", categories=tuple(categories))

    @property
    def cardinality(self) -> int:
        if self.kind == "integer-range":
            return self.hi - self.lo + 1
        return len(self.categories)

    def to_index(self, value) -> int:
        if self.kind == "categorical":
            try:
                return self.categories.index(value)
            except ValueError:
                raise DomainError(f"{self.name}: unknown category {value!r}") from None
        if isinstance(value, bool) or int(value) != value or not self.lo <= value <= self.hi:
            raise DomainError(f"{self.name}: {value!r} outside [{self.lo}, {self.hi}]")
        return int(value) - self.lo

    def from_index(self, idx: int):
        if self.kind == "categorical":
            return self.categories[idx]
        return self.lo + int(idx)

    def to_dict(self) -> dict:
        if self.kind == "categorical":
            return {"name": self.name, "kind": self.kind, "categories": list(self.categories)}
        return {"name": self.name, "kind": self.kind, "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, d: dict) -> "InputVariableSpec":
        if d.get("kind", "integer-range") == "categorical":
            return cls.categorical(d["name"], d["categories"])
        return cls.integer(d["name"], d["lo"], d["hi"])


@dataclass(frozen=True)
class InputSpace:
    variables: tuple[InputVariableSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        if not self.variables:
            raise DomainError("input space needs at least one variable")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise DomainError(f"duplicate variable names in {names}")

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    @property
    def n_features(self) -> int:
        return len(self.variables)

    @property
    def cardinalities(self) -> np.ndarray:
        return np.array([v.cardinality for v in self.variables], dtype=np.int64)

    @property
    def size(self) -> int:
        return int(np.prod(self.cardinalities))

    def to_dict(self) -> dict:
        return {"variables": [v.to_dict() for v in self.variables]}

    @classmethod
    def from_dict(cls, d: dict) -> "InputSpace":
        return cls(tuple(InputVariableSpec.from_dict(v) for v in d["variables"]))

    # -- vectorised index representation -------------------------------------
    def point_to_indices(self, point: Sequence) -> np.ndarray:
        if len(point) != self.n_features:
            raise DomainError(f"expected {self.n_features} values, got {len(point)}")
        return np.array([v.to_index(x) for v, x in zip(self.variables, point)], dtype=np.int64)

    def indices_to_point(self, idx: Sequence[int]) -> tuple:
        return tuple(v.from_index(i) for v, i in zip(self.variables, idx))

    def sample_indices(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Uniform i.i.d. index rows, shape (count, n_features)."""
        return rng.integers(0, self.cardinalities, size=(count, self.n_features))

    def all_indices(self) -> np.ndarray:
        """Every combination in lexicographic order, shape (size, n_features)."""
        grids = np.meshgrid(*[np.arange(k) for k in self.cardinalities], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)


def default_space() -> InputSpace:
    """Four-variable search/view/user request space of the auction benchmark."""
    return InputSpace((
        InputVariableSpec.integer("CID", 1, 20),
        InputVariableSpec.integer("RID", 1, 62),
        InputVariableSpec.integer("IID", 1, 50),
        InputVariableSpec.integer("UID", 1, 50),
    ))


def encode_indices(space: InputSpace, idx: np.ndarray) -> np.ndarray:
    idx = np.asarray(idx)
    span = np.maximum(space.cardinalities - 1, 1)
    return 2.0 * idx / span - 1.0


def decode_indices(space: InputSpace, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.shape[-1] != space.n_features:
        raise DomainError(f"expected {space.n_features} features, got {features.shape[-1]}")
    k = space.cardinalities
    pos = (features + 1.0) / 2.0 * (k - 1)
    # half-up rounding, then clamp into the domain
    idx = np.floor(np.nan_to_num(pos, nan=0.0, posinf=1e18, neginf=-1e18) + 0.5)
    return np.clip(idx, 0, k - 1).astype(np.int64)


def encode(space: InputSpace, point: Sequence) -> np.ndarray:
    return encode_indices(space, space.point_to_indices(point))


def decode(space: InputSpace, features) -> tuple:
    return space.indices_to_point(decode_indices(space, np.asarray(features, dtype=np.float64)))
