"""File formats: point CSVs, partitions, model specs and result tables.

Model specs are JSON documents::

    {"version": 1, "dimension": 2, "labels": 2,
     "clusters": [{"m": [0, 0], "nu": 1, "kappa": 4, "psi": [[1, 0], [0, 1]]}, ...]}

``"shared": {...}`` may replace ``"clusters"`` to use one block for every
label. An ``"uncertainty"`` entry turns the spec into a finite uncertainty
class: ``{"states": [{"id": "a", "weight": 0.5, "clusters": [...]}, ...]}``;
each state may also use ``"shared"``.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .gaussian import EffectiveRlpp, NiwModel, UncertaintyClass
from .partitions import Partition

__all__ = ["FormatError", "SPEC_VERSION", "read_points_csv", "write_points_csv",
           "parse_partition", "read_partition", "partition_to_dict", "load_model_spec",
           "model_from_spec", "parse_sizes"]

SPEC_VERSION = 1


class FormatError(ValueError):
    """Malformed input file; the message names the offending location."""


def read_points_csv(path) -> np.ndarray:
    """Read an ``n x d`` numeric CSV with an optional header row."""
    text = Path(path).read_text()
    rows = list(csv.reader(io.StringIO(text)))
    while rows and not any(cell.strip() for cell in rows[-1]):
        rows.pop()
    if not rows:
        raise FormatError(f"{path}: no data rows")
    out = []
    width = None
    for lineno, row in enumerate(rows, start=1):
        try:
            values = [float(cell) for cell in row]
        except ValueError:
            if lineno == 1 and not out:
                width = len(row)
                continue
            raise FormatError(f"{path}: line {lineno}: non-numeric value") from None
        if not values:
            raise FormatError(f"{path}: line {lineno}: empty row")
        if not np.all(np.isfinite(values)):
            raise FormatError(f"{path}: line {lineno}: non-finite value")
        if width is None:
            width = len(values)
        if len(values) != width:
            raise FormatError(f"{path}: line {lineno}: expected {width} columns, "
                              f"found {len(values)}")
        out.append(values)
    if not out:
        raise FormatError(f"{path}: no data rows")
    return np.array(out)


def write_points_csv(path, points, header: bool = False) -> None:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow([f"x{j + 1}" for j in range(points.shape[1])])
        for row in points:
            w.writerow([repr(float(v)) for v in row])


def partition_to_dict(p: Partition) -> dict:
    """Structured form: 0-based index blocks plus the 1-based line."""
    return {"line": p.line(), "blocks": [list(b) for b in p.blocks]}


def parse_partition(text: str) -> Partition:
    """Parse either format: a JSON object with ``blocks`` or a label line."""
    text = text.strip()
    if not text:
        raise FormatError("empty partition")
    if text.startswith("{"):
        try:
            data = json.loads(text)
            return Partition.from_blocks(data["blocks"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad structured partition: {exc}") from None
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) != 1:
        raise FormatError("a line-format partition is a single line of labels")
    try:
        labels = [int(tok) for tok in lines[0].replace(",", " ").split()]
    except ValueError:
        raise FormatError(f"non-integer label in {lines[0]!r}") from None
    if min(labels) < 1:
        raise FormatError("labels are 1-based")
    return Partition.from_labels(labels)


def read_partition(path) -> Partition:
    try:
        return parse_partition(Path(path).read_text())
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


def parse_sizes(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(s) for s in text.split(","))
    except ValueError:
        raise FormatError(f"sizes must be comma-separated integers, got {text!r}") from None
    if not sizes or any(s < 0 for s in sizes):
        raise FormatError("sizes must be nonnegative")
    return sizes


def _niw_block(block: dict, d: int) -> tuple:
    try:
        m = np.asarray(block.get("m", np.zeros(d)), dtype=float).reshape(d)
        psi = np.asarray(block.get("psi", np.eye(d)), dtype=float).reshape(d, d)
        nu = float(block.get("nu", 1.0))
        kappa = float(block.get("kappa", d + 2))
    except (TypeError, ValueError) as exc:
        raise FormatError(f"bad cluster hyperparameters: {exc}") from None
    return m, nu, kappa, psi


def _niw_from(entry: dict, d: int, l: int) -> NiwModel:
    if "shared" in entry:
        blocks = [entry["shared"]] * l
    elif "clusters" in entry:
        blocks = entry["clusters"]
        if len(blocks) != l:
            raise FormatError(f"expected {l} cluster blocks, found {len(blocks)}")
    else:
        raise FormatError("a model needs 'clusters' or 'shared'")
    parts = [_niw_block(b, d) for b in blocks]
    try:
        return NiwModel(m=np.array([p[0] for p in parts]), nu=np.array([p[1] for p in parts]),
                        kappa=np.array([p[2] for p in parts]), psi=np.array([p[3] for p in parts]))
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def model_from_spec(spec: dict) -> NiwModel | EffectiveRlpp:
    if not isinstance(spec, dict):
        raise FormatError("model spec must be a JSON object")
    if spec.get("version", SPEC_VERSION) != SPEC_VERSION:
        raise FormatError(f"unsupported model spec version {spec.get('version')!r}")
    try:
        d = int(spec["dimension"])
        l = int(spec["labels"])
    except (KeyError, TypeError, ValueError):
        raise FormatError("model spec needs integer 'dimension' and 'labels'") from None
    if d < 1 or l < 1:
        raise FormatError("dimension and labels must be positive")
    if "uncertainty" not in spec:
        return _niw_from(spec, d, l)
    states = spec["uncertainty"].get("states", [])
    if not states:
        raise FormatError("uncertainty class has no states")
    models = [_niw_from(s, d, l) for s in states]
    try:
        weights = [float(s["weight"]) for s in states]
        uc = UncertaintyClass(tuple(models), tuple(weights),
                              tuple(str(s.get("id", k)) for k, s in enumerate(states)))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad uncertainty class: {exc}") from None
    return EffectiveRlpp(uc)


def load_model_spec(path) -> NiwModel | EffectiveRlpp:
    try:
        spec = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    try:
        return model_from_spec(spec)
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None
