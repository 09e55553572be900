"""CSV ingestion and run configuration for the command line."""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import DataError
from .gmm import OMEGA_MODES, BasisConfig
from .surrogate import KINDS

FORMAT_VERSION = 1
MISSING = {"", "na", "nan", "null", "none", "?"}


class ConfigError(ValueError):
    """The run configuration is malformed."""


@dataclass(frozen=True)
class RunConfig:
    """Resolved settings for one analysis run.

    ``kinds`` maps every secondary column name to ``binary``,
    ``polytomous`` or ``continuous``. ``alpha = None`` means ``1/n^2``.
    """

    primary: tuple[str, ...]
    secondary: tuple[str, ...]
    kinds: dict[str, str] = field(default_factory=dict)
    alpha: float | None = None
    gamma: int = 1
    q_star: float = 0.05
    omega: str = "identity"
    degree: int = 2
    standardize: bool = True
    max_columns: int = 256
    augment: bool = True
    seed: int = 0

    def __post_init__(self):
        primary = tuple(self.primary)
        secondary = tuple(self.secondary)
        if not primary or not secondary:
            raise ConfigError("both 'primary' and 'secondary' column lists must be nonempty")
        for role, names in (("primary", primary), ("secondary", secondary)):
            if len(set(names)) != len(names):
                raise ConfigError(f"duplicate column in '{role}'")
        shared = set(primary) & set(secondary)
        if shared:
            raise ConfigError(f"columns {sorted(shared)} are listed as both primary and secondary")
        kinds = dict(self.kinds)
        extra = set(kinds) - set(secondary)
        if extra:
            raise ConfigError(f"kinds given for non-secondary columns {sorted(extra)}")
        for name in secondary:
            kinds.setdefault(name, "continuous")
        bad = {k: v for k, v in kinds.items() if v not in KINDS}
        if bad:
            raise ConfigError(f"unknown kinds {bad}; expected one of {KINDS}")
        if self.alpha is not None and not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.q_star < 1.0:
            raise ConfigError(f"q_star must lie in (0, 1), got {self.q_star}")
        if self.gamma < 1 or self.degree < 1 or self.max_columns < 1:
            raise ConfigError("gamma, degree and max_columns must be positive")
        if self.omega not in OMEGA_MODES:
            raise ConfigError(f"omega must be one of {OMEGA_MODES}, got {self.omega!r}")
        object.__setattr__(self, "primary", primary)
        object.__setattr__(self, "secondary", secondary)
        object.__setattr__(self, "kinds", {name: kinds[name] for name in secondary})

    @property
    def basis(self) -> BasisConfig:
        return BasisConfig(
            kinds=[self.kinds[name] for name in self.secondary],
            degree=self.degree,
            standardize=self.standardize,
            max_columns=self.max_columns,
        )

    def to_dict(self) -> dict:
        out = asdict(self)
        out["primary"] = list(self.primary)
        out["secondary"] = list(self.secondary)
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> RunConfig:
        if not isinstance(data, Mapping):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
        missing = {"primary", "secondary"} - set(data)
        if missing:
            raise ConfigError(f"missing configuration keys {sorted(missing)}")
        values = dict(data)
        kinds = values.get("kinds", {})
        if isinstance(kinds, str):
            kinds = dict.fromkeys(values["secondary"], kinds)
        values["kinds"] = kinds
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def with_overrides(self, **overrides) -> RunConfig:
        values = self.to_dict()
        values.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig.from_dict(values)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return RunConfig.from_dict(data)


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    secondary: tuple[str, ...]
    primary: tuple[str, ...]


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Numeric CSV with a header row. Errors name the offending line."""
    try:
        handle = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read data file {path}: {exc.strerror}") from None
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names in header")
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}, line {line}: expected {len(header)} fields, found {len(row)}")
            values = []
            for name, cell in zip(header, row):
                cell = cell.strip()
                if cell.lower() in MISSING:
                    raise DataError(f"{path}, line {line}: missing value in column '{name}'")
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(f"{path}, line {line}: column '{name}' holds non-numeric {cell!r}") from None
                if not math.isfinite(value):
                    raise DataError(f"{path}, line {line}: column '{name}' is not finite")
                values.append(value)
            rows.append(values)
    if len(rows) < 2:
        raise DataError(f"{path}: need at least 2 data rows, found {len(rows)}")
    return header, np.asarray(rows, dtype=np.float64)


def load_dataset(path, config: RunConfig) -> Dataset:
    header, table = read_table(path)
    position = {name: i for i, name in enumerate(header)}
    absent = [name for name in config.primary + config.secondary if name not in position]
    if absent:
        raise DataError(f"{path}: columns {absent} named in the config are not in the header")
    X = table[:, [position[name] for name in config.secondary]]
    Y = table[:, [position[name] for name in config.primary]]
    for c, name in enumerate(config.secondary):
        kind = config.kinds[name]
        col = X[:, c]
        if kind == "binary" and not np.isin(col, (0.0, 1.0)).all():
            row = int(np.flatnonzero(~np.isin(col, (0.0, 1.0)))[0])
            raise DataError(
                f"{path}, line {row + 2}: column '{name}' is declared binary but holds {float(col[row]):g}"
            )
        if np.unique(col).size < 2:
            raise DataError(f"{path}: column '{name}' is constant")
    return Dataset(X=X, Y=Y, secondary=config.secondary, primary=config.primary)


def write_matrix_csv(path, matrix, row_names, col_names):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([""] + list(col_names))
        for name, row in zip(row_names, np.asarray(matrix)):
            writer.writerow([name] + [repr(float(v)) if isinstance(v, float | np.floating) else int(v) for v in row])


def write_json(path, payload):
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def write_dataset_csv(path, X, Y, secondary, primary):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(list(secondary) + list(primary))
        for xr, yr in zip(X, Y):
            writer.writerow([repr(float(v)) for v in xr] + [repr(float(v)) for v in yr])
