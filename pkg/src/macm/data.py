"""Tabular data loading, min-max scaling and fold assignment."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, ValidationError

DEFAULT_NA_VALUES = ("", "NA")


@dataclass(frozen=True)
class FeatureSpec:
    """How one input column is parsed and where its raw bounds live.

    ``encoding`` maps categorical labels to numeric codes and is ignored for
    numeric features. ``raw_min``/``raw_max`` are filled in by
    :func:`minmax_normalize` and used to map curves back to the raw axis.
    """

    name: str
    kind: str = "numeric"
    encoding: tuple[tuple[str, float], ...] = ()
    raw_min: float | None = None
    raw_max: float | None = None

    def __post_init__(self):
        if self.kind not in ("numeric", "categorical"):
            raise ValidationError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical":
            labels = [label for label, _ in self.encoding]
            if not labels:
                raise ValidationError(f"categorical feature {self.name!r} has no encoding")
            if len(set(labels)) != len(labels):
                raise ValidationError(f"categorical feature {self.name!r} repeats a label")

    @property
    def codes(self) -> dict[str, float]:
        return {label: float(code) for label, code in self.encoding}

    @property
    def has_bounds(self) -> bool:
        return self.raw_min is not None and self.raw_max is not None

    def to_dict(self) -> dict:
        out: dict = {"name": self.name, "kind": self.kind}
        if self.kind == "categorical":
            out["encoding"] = [[label, float(code)] for label, code in self.encoding]
        if self.has_bounds:
            out["raw_min"] = float(self.raw_min)
            out["raw_max"] = float(self.raw_max)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        enc = d.get("encoding", ())
        if isinstance(enc, dict):
            enc = list(enc.items())
        return cls(
            name=d["name"],
            kind=d.get("kind", "numeric"),
            encoding=tuple((str(label), float(code)) for label, code in enc),
            raw_min=None if d.get("raw_min") is None else float(d["raw_min"]),
            raw_max=None if d.get("raw_max") is None else float(d["raw_max"]),
        )


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    target: np.ndarray
    specs: tuple[FeatureSpec, ...]
    normalized: bool = False
    row_ids: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64)
        y = np.array(self.target, dtype=np.float64).reshape(-1)
        if X.ndim != 2:
            raise ValidationError("features must be a 2-d matrix")
        if X.shape[0] != y.shape[0]:
            raise ValidationError(f"{X.shape[0]} feature rows but {y.shape[0]} targets")
        if X.shape[1] != len(self.specs):
            raise ValidationError(f"{X.shape[1]} feature columns but {len(self.specs)} specs")
        ids = np.arange(X.shape[0]) if self.row_ids is None else np.array(self.row_ids)
        for arr in (X, y, ids):
            arr.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "target", y)
        object.__setattr__(self, "specs", tuple(self.specs))
        object.__setattr__(self, "row_ids", ids)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def feature_names(self) -> list[str]:
        return [s.name for s in self.specs]

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return replace(self, features=self.features[idx], target=self.target[idx],
                       row_ids=self.row_ids[idx])

    def is_binary(self) -> bool:
        return bool(np.all((self.target == 0.0) | (self.target == 1.0)))


def _parse_cell(raw: str, spec: FeatureSpec, line: int) -> float:
    if spec.kind == "categorical":
        codes = spec.codes
        if raw not in codes:
            raise DataError(f"line {line}: label {raw!r} of {spec.name!r} is not in its encoding")
        return codes[raw]
    try:
        value = float(raw)
    except ValueError:
        raise DataError(f"line {line}: non-numeric value {raw!r} in column {spec.name!r}") from None
    if not math.isfinite(value):
        raise DataError(f"line {line}: non-finite value {raw!r} in column {spec.name!r}")
    return value


def read_rows(path, columns: Sequence[str], na_values=DEFAULT_NA_VALUES):
    """Yield ``(line_number, cells)`` for the requested columns.

    Rows where any requested cell is missing are skipped.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    na = set(na_values)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, header row expected") from None
        missing = [c for c in columns if c not in header]
        if missing:
            raise DataError(f"{path}: unknown column(s) {missing}")
        pos = [header.index(c) for c in columns]
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {line} has {len(row)} cells, expected {len(header)}")
            cells = [row[p].strip() for p in pos]
            if any(c in na for c in cells):
                continue
            yield line, cells


def infer_specs(path, target_column: str) -> list[FeatureSpec]:
    """Treat every non-target header column as a numeric feature."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        header = [h.strip() for h in next(csv.reader(fh), [])]
    return [FeatureSpec(name) for name in header if name != target_column]


def load_csv(
    path,
    target_column: str,
    specs: Sequence[FeatureSpec] | None = None,
    *,
    na_values=DEFAULT_NA_VALUES,
    target_scale: float = 1.0,
    target_offset: float = 0.0,
    target_encoding: dict[str, float] | None = None,
) -> Dataset:
    """Load a CSV into a :class:`Dataset`.

    Only the columns named by ``specs`` (all non-target columns when omitted)
    and the target are read. Rows with a missing cell in any of them are
    dropped. The target is mapped through ``target * target_scale +
    target_offset`` after optional label encoding.
    """
    if specs is None:
        specs = infer_specs(path, target_column)
    specs = list(specs)
    if target_column in [s.name for s in specs]:
        raise ValidationError(f"target column {target_column!r} is also listed as a feature")
    columns = [s.name for s in specs] + [target_column]
    X, y, ids = [], [], []
    for line, cells in read_rows(path, columns, na_values):
        X.append([_parse_cell(c, s, line) for c, s in zip(cells, specs)])
        raw_t = cells[-1]
        if target_encoding is not None:
            if raw_t not in target_encoding:
                raise DataError(f"line {line}: target label {raw_t!r} is not in the target encoding")
            t = float(target_encoding[raw_t])
        else:
            t = _parse_cell(raw_t, FeatureSpec(target_column), line)
        y.append(t * target_scale + target_offset)
        ids.append(line)
    X_arr = np.array(X, dtype=np.float64).reshape(len(X), len(specs))
    return Dataset(X_arr, np.array(y, dtype=np.float64), tuple(specs), False, np.array(ids))


def load_features(path, specs: Sequence[FeatureSpec], na_values=DEFAULT_NA_VALUES):
    """Read only the feature columns; returns ``(X_raw, line_numbers)``."""
    specs = list(specs)
    X, ids = [], []
    for line, cells in read_rows(path, [s.name for s in specs], na_values):
        X.append([_parse_cell(c, s, line) for c, s in zip(cells, specs)])
        ids.append(line)
    return np.array(X, dtype=np.float64).reshape(len(X), len(specs)), np.array(ids)


def minmax_normalize(data: Dataset) -> tuple[Dataset, list[tuple[float, float]]]:
    """Scale every feature to [-1, 1] and record the raw bounds in its spec."""
    if data.normalized:
        raise ValidationError("dataset is already normalized")
    if data.n_samples == 0:
        raise DataError("cannot normalize an empty dataset")
    X = data.features
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    for j, spec in enumerate(data.specs):
        if not hi[j] > lo[j]:
            raise DataError(f"feature {spec.name!r} is constant ({lo[j]!r}); cannot scale it")
    specs = tuple(replace(s, raw_min=float(a), raw_max=float(b)) for s, a, b in zip(data.specs, lo, hi))
    Xn = 2.0 * (X - lo) / (hi - lo) - 1.0
    # pin the extremes exactly
    Xn[X == lo] = -1.0
    Xn[X == hi] = 1.0
    bounds = [(float(a), float(b)) for a, b in zip(lo, hi)]
    return replace(data, features=Xn, specs=specs, normalized=True), bounds


def normalize_values(x, raw_min: float, raw_max: float):
    x = np.asarray(x, dtype=np.float64)
    return 2.0 * (x - raw_min) / (raw_max - raw_min) - 1.0


def denormalize_values(x, raw_min: float, raw_max: float):
    x = np.asarray(x, dtype=np.float64)
    return (x + 1.0) / 2.0 * (raw_max - raw_min) + raw_min


def apply_normalization(X_raw, specs: Sequence[FeatureSpec], clip: bool = True):
    """Scale raw features with stored bounds.

    Returns ``(X_normalized, n_clamped_rows)``. Values outside the stored
    range are clamped to [-1, 1] when ``clip`` is set.
    """
    X_raw = np.asarray(X_raw, dtype=np.float64)
    if X_raw.ndim != 2 or X_raw.shape[1] != len(specs):
        raise ValidationError(
            f"expected {len(specs)} feature columns, got {X_raw.shape[1] if X_raw.ndim == 2 else X_raw.shape}"
        )
    out = np.empty_like(X_raw)
    for j, s in enumerate(specs):
        if not s.has_bounds:
            raise ValidationError(f"feature {s.name!r} has no stored normalization bounds")
        out[:, j] = normalize_values(X_raw[:, j], s.raw_min, s.raw_max)
    outside = np.any((out < -1.0) | (out > 1.0), axis=1)
    if clip:
        np.clip(out, -1.0, 1.0, out=out)
    return out, int(outside.sum())


@dataclass(frozen=True)
class FoldSplit:
    fold_count: int
    assignments: np.ndarray
    seed: int

    def __post_init__(self):
        a = np.array(self.assignments, dtype=np.int64)
        a.setflags(write=False)
        object.__setattr__(self, "assignments", a)

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def sizes(self) -> list[int]:
        return np.bincount(self.assignments, minlength=self.fold_count).tolist()


def kfold_split(n_samples: int, fold_count: int, seed: int) -> FoldSplit:
    """Shuffled fold assignment with fold sizes differing by at most one."""
    if fold_count < 2:
        raise ValidationError(f"fold_count must be at least 2, got {fold_count}")
    if fold_count > n_samples:
        raise ValidationError(f"fold_count {fold_count} exceeds n_samples {n_samples}")
    perm = np.random.default_rng(seed).permutation(n_samples)
    assignments = np.empty(n_samples, dtype=np.int64)
    assignments[perm] = np.arange(n_samples) % fold_count
    return FoldSplit(fold_count, assignments, seed)


def train_test_split(n_samples: int, test_fraction: float = 0.2, seed: int = 0):
    """Shuffled ``(train_idx, test_idx)``; both sorted."""
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError("test_fraction must lie in (0, 1)")
    n_test = int(round(n_samples * test_fraction))
    if n_test < 1 or n_test >= n_samples:
        raise ValidationError(f"cannot hold out {test_fraction:.0%} of {n_samples} samples")
    perm = np.random.default_rng(seed).permutation(n_samples)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


# -- dataset configs ---------------------------------------------------------

@dataclass
class DatasetConfig:
    """Where a dataset lives and how to parse it.

    Keys of the JSON form: ``path``, ``target``, ``features`` (list of
    FeatureSpec dicts, or null to read every other column as numeric),
    ``na_values``, ``target_scale``, ``target_offset``, ``target_encoding``
    and ``preset`` (name of a shipped preset whose keys are used as
    defaults).
    """

    path: str | None = None
    target: str | None = None
    features: list[FeatureSpec] | None = None
    na_values: tuple[str, ...] = DEFAULT_NA_VALUES
    target_scale: float = 1.0
    target_offset: float = 0.0
    target_encoding: dict[str, float] | None = None
    preset: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        d = dict(d)
        if d.get("preset"):
            base = load_preset(d["preset"])
            base.update({k: v for k, v in d.items() if v is not None})
            d = base
        feats = d.get("features")
        return cls(
            path=d.get("path"),
            target=d.get("target"),
            features=None if feats is None else [FeatureSpec.from_dict(f) for f in feats],
            na_values=tuple(d.get("na_values", DEFAULT_NA_VALUES)),
            target_scale=float(d.get("target_scale", 1.0)),
            target_offset=float(d.get("target_offset", 0.0)),
            target_encoding=d.get("target_encoding"),
            preset=d.get("preset"),
        )

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "target": self.target,
            "features": None if self.features is None else [f.to_dict() for f in self.features],
            "na_values": list(self.na_values),
            "target_scale": self.target_scale,
            "target_offset": self.target_offset,
            "target_encoding": self.target_encoding,
            "preset": self.preset,
        }

    def load(self) -> Dataset:
        if not self.path:
            raise ValidationError("dataset config has no path")
        if not self.target:
            raise ValidationError("dataset config has no target column")
        return load_csv(
            self.path,
            self.target,
            self.features,
            na_values=self.na_values,
            target_scale=self.target_scale,
            target_offset=self.target_offset,
            target_encoding=self.target_encoding,
        )


def preset_names() -> list[str]:
    root = resources.files("macm") / "presets"
    return sorted(p.name[len("dataset_"):-5] for p in root.iterdir()
                  if p.name.startswith("dataset_") and p.name.endswith(".json"))


def load_preset(name: str) -> dict:
    """Return the raw dict of a shipped dataset preset."""
    res = resources.files("macm") / "presets" / f"dataset_{name}.json"
    if not res.is_file():
        raise ValidationError(f"unknown dataset preset {name!r}; available: {preset_names()}")
    return json.loads(res.read_text(encoding="utf-8"))
