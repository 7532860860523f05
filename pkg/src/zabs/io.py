"""Dataset ingestion and run configuration.

Run configurations are TOML files::

    response = "y"

    [model]
    mean = "log ~ x1 + x2"
    precision = "identity ~ 1"
    zeroprob = "probit ~ x1 + x2 + x3"   # omit for a plain BS regression

    [fit]
    max_iter = 200

    [diagnostics]
    replicates = 100
    band = 0.95
    seed = 20240101

Formula right-hand sides are ``1`` (intercept only), a ``+``-separated
list of columns (intercept added unless ``0 +`` or ``- 1`` is present), or
the builtin ``exp_ratio(col)``.  ``"nonlinear exp_ratio(w)"`` is shorthand
for ``"identity ~ exp_ratio(w)"``.
"""

from __future__ import annotations

import csv
import re
import sys
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .estimation import FitOptions
from .links import POSITIVE, UNIT, get_link
from .model import Component, ModelSpec, exp_ratio, linear

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

MISSING = {"", "na", "nan", "null", "none", "."}


class Dataset(Mapping):
    """Named numeric columns plus the response name."""

    def __init__(self, columns: dict, response: str = "y"):
        self.columns = {k: np.asarray(v, dtype=float) for k, v in columns.items()}
        self.response = response
        lengths = {v.size for v in self.columns.values()}
        if len(lengths) > 1:
            raise DataError("columns have different lengths")
        if response not in self.columns:
            raise DataError(f"response column {response!r} not found")
        y = self.columns[response]
        if np.any(y < 0):
            rows = (np.flatnonzero(y < 0) + 1).tolist()
            raise DataError(f"negative response at data rows {rows[:10]}")

    def __getitem__(self, key):
        return self.columns[key]

    def __iter__(self):
        return iter(self.columns)

    def __len__(self):
        return len(self.columns)

    @property
    def n(self) -> int:
        return self.columns[self.response].size

    @property
    def n0(self) -> int:
        return int(np.sum(self.columns[self.response] == 0))

    def subset(self, keep: np.ndarray) -> "Dataset":
        return Dataset({k: v[keep] for k, v in self.columns.items()}, self.response)


def read_csv(path, columns, response: str) -> Dataset:
    """Read the named numeric ``columns`` from a headed, comma-separated file.

    Unparseable or missing cells raise :class:`DataError` naming the data
    row (1-based, header excluded) and column.
    """
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open data file {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        wanted = list(dict.fromkeys(columns))
        missing = [c for c in wanted if c not in header]
        if missing:
            raise ConfigError(f"columns {missing} not in {path} (have {header})")
        pos = {c: header.index(c) for c in wanted}
        values = {c: [] for c in wanted}
        missing_rows = []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"data row {row_no}: expected {len(header)} cells, found {len(row)}"
                )
            for c in wanted:
                cell = row[pos[c]].strip()
                if cell.lower() in MISSING:
                    missing_rows.append((row_no, c))
                    continue
                try:
                    values[c].append(float(cell))
                except ValueError:
                    raise DataError(
                        f"data row {row_no}, column {c!r}: cannot parse {cell!r} as a number"
                    ) from None
        if missing_rows:
            shown = ", ".join(f"row {r} ({c})" for r, c in missing_rows[:20])
            raise DataError(f"missing values in referenced columns: {shown}")
    data = {c: np.array(v, dtype=float) for c, v in values.items()}
    if data[response].size == 0:
        raise DataError(f"{path} has no data rows")
    for c, v in data.items():
        if not np.all(np.isfinite(v)):
            bad = (np.flatnonzero(~np.isfinite(v)) + 1).tolist()
            raise DataError(f"non-finite values in column {c!r} at rows {bad[:10]}")
    return Dataset(data, response)


_NONLINEAR = re.compile(r"^exp_ratio\(\s*([A-Za-z_][\w.]*)\s*\)$")
_IDENT = re.compile(r"^[A-Za-z_][\w.]*$")


def parse_formula(text: str, domain: str) -> Component:
    """Parse ``"<link> ~ <terms>"`` or ``"nonlinear exp_ratio(col)"``."""
    text = text.strip()
    if text.startswith("nonlinear"):
        if domain != POSITIVE:
            raise ConfigError("nonlinear shorthand is only available for mean/precision")
        link_name, rhs = "identity", text[len("nonlinear"):].strip()
    else:
        if "~" not in text:
            raise ConfigError(f"formula {text!r} must look like '<link> ~ <terms>'")
        link_name, rhs = (part.strip() for part in text.split("~", 1))
    try:
        link = get_link(link_name, domain)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    m = _NONLINEAR.match(rhs)
    if m:
        return Component(link, exp_ratio(m.group(1)))
    intercept = True
    terms = []
    for raw in re.sub(r"-\s*1\b", "+ 0", rhs).split("+"):
        term = raw.strip()
        if term in ("", "1"):
            continue
        if term == "0":
            intercept = False
            continue
        if not _IDENT.match(term):
            raise ConfigError(f"cannot parse term {term!r} in formula {text!r}")
        terms.append(term)
    if not intercept and not terms:
        raise ConfigError(f"formula {text!r} has no terms")
    return Component(link, linear(*terms, intercept=intercept))


@dataclass
class DiagnosticsOptions:
    replicates: int = 100
    band: float = 0.95
    seed: int | None = None
    level: float = 0.95


@dataclass
class RunConfig:
    model: ModelSpec
    fit: FitOptions = field(default_factory=FitOptions)
    diagnostics: DiagnosticsOptions = field(default_factory=DiagnosticsOptions)
    data: str | None = None
    raw: dict = field(default_factory=dict)


_FIT_KEYS = {"tol_score": float, "tol_loglik": float, "max_iter": int,
             "max_halvings": int, "separate": bool, "covariance": str,
             "lambda_method": str}
_DIAG_KEYS = {"replicates": int, "band": float, "seed": int, "level": float}


def _typed(section: dict, spec: dict, where: str) -> dict:
    out = {}
    for key, value in section.items():
        if key not in spec:
            raise ConfigError(f"unknown key {key!r} in [{where}]")
        kind = spec[key]
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if (kind is int and isinstance(value, bool)) or not isinstance(value, kind):
            raise ConfigError(f"[{where}] {key} must be of type {kind.__name__}")
        out[key] = value
    return out


def config_from_dict(raw: dict) -> RunConfig:
    try:
        model_sec = raw["model"]
        mean = parse_formula(model_sec["mean"], POSITIVE)
    except KeyError as exc:
        raise ConfigError(f"missing config entry {exc}") from None
    except TypeError:
        raise ConfigError("[model] must be a table of formula strings") from None
    precision = parse_formula(model_sec.get("precision", "log ~ 1"), POSITIVE)
    zp_text = model_sec.get("zeroprob")
    zeroprob = parse_formula(zp_text, UNIT) if zp_text else None
    unknown = set(model_sec) - {"mean", "precision", "zeroprob"}
    if unknown:
        raise ConfigError(f"unknown keys in [model]: {sorted(unknown)}")
    response = raw.get("response", "y")
    if not isinstance(response, str):
        raise ConfigError("response must be a column name")
    model = ModelSpec(mean, precision, zeroprob, response)
    try:
        fit_opts = FitOptions(**_typed(raw.get("fit", {}), _FIT_KEYS, "fit"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    diag = DiagnosticsOptions(**_typed(raw.get("diagnostics", {}), _DIAG_KEYS, "diagnostics"))
    if diag.replicates < 19:
        raise ConfigError("[diagnostics] replicates must be >= 19")
    if not 0 < diag.band < 1 or not 0 < diag.level < 1:
        raise ConfigError("[diagnostics] band and level must lie in (0, 1)")
    data = raw.get("data")
    return RunConfig(model, fit_opts, diag, data, raw)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    cfg = config_from_dict(raw)
    if cfg.data is not None and not Path(cfg.data).is_absolute():
        cfg.data = str((path.parent / cfg.data).resolve())
    return cfg


def bundled_biaxial() -> Dataset:
    """The 46-specimen biaxial fatigue data; ``y`` is cycles to failure / 100."""
    path = Path(__file__).with_name("data") / "biaxial.csv"
    return read_csv(path, ["w", "N", "y"], "y")
