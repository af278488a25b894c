"""Loading prediction tables and deriving targets / subgroup categories.

A prediction table is a UTF-8 CSV with one scored case per row.  Required
columns are ``id``, a score (``score`` and/or ``score_1..score_K``) and a
target (``label`` and/or ``birads``).  Every other column is an attribute.
"""
from __future__ import annotations

import csv
import io
import json
import os
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "AGE_GROUPS",
    "BIRADS_FINDINGS",
    "DENSITY_CATEGORIES",
    "EXCLUDED",
    "UNKNOWN",
    "DataError",
    "Dataset",
    "PredictionRecord",
    "bin_age",
    "derive_label",
    "dump_dataset",
    "exclude_category",
    "load_dataset",
    "load_schema",
    "with_age_groups",
    "write_dataset",
]

#: BIRADS assessment code -> finding.
BIRADS_FINDINGS: dict[int, str] = {
    0: "additional evaluation required",
    1: "normal tissue",
    2: "benign findings",
    3: "probably benign",
    4: "suspicious",
    5: "highly suspicious",
    6: "proven malignancy",
}

#: Tissue density code -> description. Code 5 (male tissue) is not analysed.
DENSITY_CATEGORIES: dict[str, str] = {
    "1": "almost entirely fatty",
    "2": "scattered fibroglandular densities",
    "3": "heterogeneously dense",
    "4": "extremely dense",
    "5": "male tissue",
}

AGE_GROUPS: tuple[str, ...] = ("<40", "40-49", "50-59", "60-69", "70-79", "80+")
UNKNOWN = "Unknown"

_NEGATIVE_BIRADS = frozenset({1, 2})
_POSITIVE_BIRADS = frozenset({4, 5, 6})
_REPLICATE_RE = re.compile(r"^score_(\d+)$")
_RESERVED = {"id", "score", "label", "birads"}


class _Excluded:
    """Sentinel for cases removed from the binary task."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "EXCLUDED"

    def __reduce__(self):
        return (_Excluded, ())


EXCLUDED = _Excluded()


class DataError(ValueError):
    """Raised for malformed or out-of-contract input data."""


def derive_label(birads: int):
    """Map a BIRADS code to 0 (negative), 1 (positive) or ``EXCLUDED``.

    Codes 1-2 are negative, 4-6 positive.  0 needs follow-up imaging and 3
    belongs to neither class, so both are excluded.
    """
    if isinstance(birads, bool) or not isinstance(birads, (int, np.integer)):
        raise DataError(f"BIRADS code must be an integer, got {birads!r}")
    if birads not in BIRADS_FINDINGS:
        raise DataError(f"BIRADS code {birads} outside 0..6")
    if birads in _NEGATIVE_BIRADS:
        return 0
    if birads in _POSITIVE_BIRADS:
        return 1
    return EXCLUDED


def bin_age(age: int) -> str:
    """Age in years -> one of :data:`AGE_GROUPS`."""
    if age < 0:
        raise DataError(f"age must be non-negative, got {age}")
    if age < 40:
        return AGE_GROUPS[0]
    if age >= 80:
        return AGE_GROUPS[-1]
    return AGE_GROUPS[int(age // 10) - 3]


@dataclass(frozen=True)
class PredictionRecord:
    id: str
    score: float
    label: int | None = None
    birads: int | None = None
    attributes: Mapping[str, str] = field(default_factory=dict)
    replicate_scores: tuple[float, ...] | None = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise DataError(f"score {self.score} out of range for record {self.id!r}")
        if self.replicate_scores is not None:
            for s in self.replicate_scores:
                if not 0.0 <= s <= 1.0:
                    raise DataError(f"replicate score {s} out of range for record {self.id!r}")
        if self.label is not None and self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1 for record {self.id!r}")
        if self.label is None and self.birads is None:
            raise DataError(f"record {self.id!r} has neither label nor birads")

    @property
    def excluded(self) -> bool:
        return self.label is None


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of prediction records plus the attribute schema.

    ``attribute_schema`` maps attribute name to its ordered categories.
    Attributes listed in ``ordinal`` have a meaningful category order.
    """

    records: tuple[PredictionRecord, ...]
    attribute_schema: Mapping[str, tuple[str, ...]]
    ordinal: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(
            self, "attribute_schema", {k: tuple(v) for k, v in self.attribute_schema.items()}
        )
        object.__setattr__(self, "ordinal", frozenset(self.ordinal))
        seen = set()
        for r in self.records:
            if r.id in seen:
                raise DataError(f"duplicate record id {r.id!r}")
            seen.add(r.id)
            for name, value in r.attributes.items():
                cats = self.attribute_schema.get(name)
                if cats is None:
                    raise DataError(f"record {r.id!r} has undeclared attribute {name!r}")
                if value not in cats:
                    raise DataError(f"unknown category {value!r} for attribute {name!r}")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def attributes(self) -> tuple[str, ...]:
        return tuple(self.attribute_schema)

    @cached_property
    def scores(self) -> np.ndarray:
        return np.array([r.score for r in self.records], dtype=float)

    @cached_property
    def labels(self) -> np.ndarray:
        """Binary labels; -1 marks excluded records."""
        return np.array([-1 if r.label is None else r.label for r in self.records], dtype=int)

    def column(self, attribute: str) -> np.ndarray:
        if attribute not in self.attribute_schema:
            raise DataError(f"unknown attribute {attribute!r}")
        return np.array([r.attributes.get(attribute, UNKNOWN) for r in self.records], dtype=object)

    @property
    def n_excluded(self) -> int:
        return int(np.sum(self.labels < 0))

    def subset(self, mask_or_index) -> "Dataset":
        idx = np.arange(len(self.records))[mask_or_index]
        return Dataset(
            tuple(self.records[i] for i in idx), self.attribute_schema, self.ordinal
        )

    def labeled(self) -> "Dataset":
        """Records that take part in the binary task."""
        if self.n_excluded == 0:
            return self
        return self.subset(self.labels >= 0)

    def has_replicates(self) -> bool:
        return bool(self.records) and all(
            r.replicate_scores is not None and len(r.replicate_scores) >= 2 for r in self.records
        )


def _sort_categories(values: Iterable[str]) -> tuple[str, ...]:
    values = set(values)
    if values <= set(AGE_GROUPS) | {UNKNOWN}:
        order = [g for g in AGE_GROUPS if g in values]
    else:
        def key(v):
            try:
                return (0, float(v), v)
            except ValueError:
                return (1, 0.0, v)
        order = sorted((v for v in values if v != UNKNOWN), key=key)
    if UNKNOWN in values:
        order.append(UNKNOWN)
    return tuple(order)


def load_schema(path: str | os.PathLike) -> tuple[dict[str, tuple[str, ...]], frozenset[str]]:
    """Read an attribute declaration file.

    The file is JSON: ``{"attributes": {name: [categories...]}, "ordinal": [names]}``.
    """
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    attrs = raw.get("attributes")
    if not isinstance(attrs, dict) or not attrs:
        raise DataError(f"{path}: schema needs a non-empty 'attributes' object")
    schema = {str(k): tuple(str(c) for c in v) for k, v in attrs.items()}
    ordinal = frozenset(raw.get("ordinal", ()))
    if not ordinal <= set(schema):
        raise DataError(f"{path}: ordinal names not declared: {sorted(ordinal - set(schema))}")
    return schema, ordinal


def _parse_float(text: str, what: str, row: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"malformed {what} {text!r} at row {row}") from None
    if not np.isfinite(value):
        raise DataError(f"malformed {what} {text!r} at row {row}")
    return value


def _parse_int(text: str, what: str, row: int) -> int:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"malformed {what} {text!r} at row {row}") from None
    if not value.is_integer():
        raise DataError(f"malformed {what} {text!r} at row {row}")
    return int(value)


def _read_rows(text: str, source: str, schema, ordinal) -> Dataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError(f"{source}: empty file") from None
    if len(set(header)) != len(header):
        raise DataError(f"{source}: duplicate column names in header")
    if "id" not in header:
        raise DataError(f"{source}: missing required column 'id'")
    replicate_cols = sorted(
        (int(m.group(1)), i) for i, h in enumerate(header) if (m := _REPLICATE_RE.match(h))
    )
    if "score" not in header and not replicate_cols:
        raise DataError(f"{source}: need a 'score' column or score_1..score_K")
    if replicate_cols and [k for k, _ in replicate_cols] != list(range(1, len(replicate_cols) + 1)):
        raise DataError(f"{source}: replicate columns must be numbered score_1..score_K")
    if "label" not in header and "birads" not in header:
        raise DataError(f"{source}: need a 'label' or 'birads' column")
    attr_cols = [
        (i, h) for i, h in enumerate(header)
        if h not in _RESERVED and not _REPLICATE_RE.match(h)
    ]
    if schema is not None:
        declared, found = set(schema), {h for _, h in attr_cols}
        if declared != found:
            raise DataError(
                f"{source}: header attributes {sorted(found)} do not match schema {sorted(declared)}"
            )
    col = {h: i for i, h in enumerate(header)}

    records = []
    for row_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{source}: malformed row {row_no}: expected {len(header)} fields, got {len(row)}")
        cells = [c.strip() for c in row]
        rid = cells[col["id"]]
        if not rid:
            raise DataError(f"{source}: missing id at row {row_no}")
        replicates = None
        if replicate_cols:
            replicates = tuple(
                _parse_float(cells[i], f"score_{k}", row_no) for k, i in replicate_cols
            )
            for v in replicates:
                if not 0.0 <= v <= 1.0:
                    raise DataError(f"replicate score out of range at row {row_no}")
        if "score" in col and cells[col["score"]]:
            score = _parse_float(cells[col["score"]], "score", row_no)
        elif replicates:
            score = float(np.mean(replicates))
        else:
            raise DataError(f"{source}: missing score at row {row_no}")
        if not 0.0 <= score <= 1.0:
            raise DataError(f"score out of range at row {row_no}")
        birads = None
        if "birads" in col and cells[col["birads"]]:
            birads = _parse_int(cells[col["birads"]], "birads", row_no)
            if birads not in BIRADS_FINDINGS:
                raise DataError(f"birads {birads} outside 0..6 at row {row_no}")
        label = None
        if "label" in col and cells[col["label"]]:
            label = _parse_int(cells[col["label"]], "label", row_no)
            if label not in (0, 1):
                raise DataError(f"label {label} not in {{0,1}} at row {row_no}")
        elif birads is not None:
            derived = derive_label(birads)
            label = None if derived is EXCLUDED else derived
        else:
            raise DataError(f"{source}: row {row_no} has neither label nor birads")
        attrs = {}
        for i, name in attr_cols:
            value = cells[i] or UNKNOWN
            if schema is not None and value not in schema[name] and value != UNKNOWN:
                raise DataError(f"unknown category {value!r} for attribute {name!r} at row {row_no}")
            attrs[name] = value
        records.append(PredictionRecord(rid, score, label, birads, attrs, replicates))

    if schema is None:
        schema = {
            name: _sort_categories(r.attributes[name] for r in records) for _, name in attr_cols
        }
        ordinal = ordinal or frozenset(n for n in schema if n in ("age_group", "density"))
    else:
        schema = dict(schema)
        for name in schema:
            if any(r.attributes[name] == UNKNOWN for r in records) and UNKNOWN not in schema[name]:
                schema[name] = tuple(schema[name]) + (UNKNOWN,)
    return Dataset(tuple(records), schema, ordinal or frozenset())


def load_dataset(
    path: str | os.PathLike,
    schema: Mapping[str, Sequence[str]] | str | os.PathLike | None = None,
    ordinal: Iterable[str] = (),
) -> Dataset:
    """Load a prediction table.

    Parameters
    ----------
    path : path to the CSV file.
    schema : attribute declaration, either a mapping ``name -> categories`` or
        a path to a JSON schema file (see :func:`load_schema`).  When omitted
        the categories are inferred from the data.
    ordinal : names of ordinal attributes (ignored when ``schema`` is a file).

    Missing attribute cells become ``"Unknown"``.  Any malformed row raises
    :class:`DataError` with its row number.
    """
    if isinstance(schema, (str, os.PathLike)):
        schema, ordinal = load_schema(schema)
    elif schema is not None:
        schema = {k: tuple(v) for k, v in schema.items()}
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    text = path.read_text(encoding="utf-8-sig")
    return _read_rows(text, str(path), schema, frozenset(ordinal))


def _fmt(x: float) -> str:
    return repr(float(x))


def dump_dataset(dataset: Dataset) -> str:
    """Serialise ``dataset`` to CSV text that :func:`load_dataset` reads back."""
    k = max((len(r.replicate_scores or ()) for r in dataset.records), default=0)
    has_birads = any(r.birads is not None for r in dataset.records)
    header = ["id", "score"] + [f"score_{i}" for i in range(1, k + 1)] + ["label"]
    if has_birads:
        header.append("birads")
    header += list(dataset.attributes)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in dataset.records:
        row = [r.id, _fmt(r.score)]
        reps = list(r.replicate_scores or ())
        row += [_fmt(v) for v in reps] + [""] * (k - len(reps))
        row.append("" if r.label is None else str(r.label))
        if has_birads:
            row.append("" if r.birads is None else str(r.birads))
        row += [r.attributes.get(a, UNKNOWN) for a in dataset.attributes]
        w.writerow(row)
    return buf.getvalue()


def write_dataset(dataset: Dataset, path: str | os.PathLike) -> None:
    Path(path).write_text(dump_dataset(dataset), encoding="utf-8")


def with_age_groups(dataset: Dataset, source: str = "age", target: str = "age_group") -> Dataset:
    """Replace a raw integer age attribute by its binned age group."""
    if source not in dataset.attribute_schema:
        raise DataError(f"unknown attribute {source!r}")
    records = []
    for r in dataset.records:
        attrs = dict(r.attributes)
        raw = attrs.pop(source, UNKNOWN)
        if raw == UNKNOWN:
            attrs[target] = UNKNOWN
        else:
            try:
                attrs[target] = bin_age(int(float(raw)))
            except ValueError:
                raise DataError(f"record {r.id!r}: age {raw!r} is not a number") from None
        records.append(
            PredictionRecord(r.id, r.score, r.label, r.birads, attrs, r.replicate_scores)
        )
    schema = {}
    for name, cats in dataset.attribute_schema.items():
        if name == source:
            schema[target] = _sort_categories(rec.attributes[target] for rec in records)
        else:
            schema[name] = cats
    ordinal = (dataset.ordinal - {source}) | {target}
    return Dataset(tuple(records), schema, ordinal)


def exclude_category(dataset: Dataset, attribute: str, category: str) -> Dataset:
    """Drop records whose ``attribute`` equals ``category`` and remove it from the schema."""
    col = dataset.column(attribute)
    out = dataset.subset(col != category)
    schema = dict(out.attribute_schema)
    schema[attribute] = tuple(c for c in schema[attribute] if c != category)
    return Dataset(out.records, schema, out.ordinal)
