#!/usr/bin/env python

"""
udp_certify/helperfunc.py

===============================================================================

    Copyright (C) 2024 The udp_certify authors.

    This file is part of udp_certify.

    This is free software: you can redistribute it and/or modify
    it under the terms of the GNU General Public License as published by
    the Free Software Foundation, either version 3 of the License, or
    (at your option) any later version.

    This software is distributed in the hope that it will be useful,
    but WITHOUT ANY WARRANTY; without even the implied warranty of
    MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE. See the
    GNU General Public License for more details.

    You should have received a copy of the GNU General Public License
    along with this software. If not, see <https://www.gnu.org/licenses/>.

===============================================================================

Helper functions: CSV and JSON input/output, seeding, small array helpers.

"""

import csv
import json
import logging
import math
import os
from typing import Any, Dict, List, Optional, Sequence, TextIO, Union

import jsonschema
from mip import Constr, Model, Var
from mip.exceptions import SolutionNotAvailable
import numpy as np

from udp_certify.constants import JSON_INDENT
from udp_certify.errors import InputError

log = logging.getLogger(__name__)

THIS_DIR = os.path.dirname(os.path.realpath(__file__))
SCHEMA_DIR = os.path.join(THIS_DIR, "schemas")


# =============================================================================
# Randomness
# =============================================================================


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """
    A generator for one named stream of a seed. Different streams of the same
    seed are statistically independent.
    """
    return np.random.default_rng([int(seed), int(stream)])


# =============================================================================
# Arrays
# =============================================================================


def top_s_indices(v: np.ndarray, s: int) -> List[int]:
    """
    Indices of the ``s`` largest entries of ``|v|``, ties broken by lower
    index, returned in ascending index order.
    """
    order = np.argsort(-np.abs(v), kind="stable")
    return sorted(int(i) for i in order[:s])


def sorted_magnitudes(v: np.ndarray) -> np.ndarray:
    """
    ``|v|`` sorted in descending order.
    """
    return np.sort(np.abs(v))[::-1]


def as_float_list(v: Optional[np.ndarray]) -> Optional[List[float]]:
    if v is None:
        return None
    return [float(x) for x in np.asarray(v).ravel()]


def require_finite(a: np.ndarray, what: str) -> None:
    """
    Raise :exc:`InputError` unless every entry is finite.
    """
    if not np.all(np.isfinite(a)):
        raise InputError(f"{what} contains non-finite values")


# =============================================================================
# CSV
# =============================================================================


def _parse_csv_rows(path: str, header: bool) -> List[List[float]]:
    if not os.path.isfile(path):
        raise InputError(f"No such file: {path!r}")
    rows = []  # type: List[List[float]]
    with open(path, newline="") as f:
        reader = csv.reader(f)
        for lineno, row in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            cells = [c.strip() for c in row]
            if not any(cells):
                continue
            try:
                # float() is locale-independent: "." is always the decimal
                # separator.
                rows.append([float(c) for c in cells])
            except ValueError:
                raise InputError(
                    f"{path}, line {lineno}: non-numeric value in {row!r}"
                )
    return rows


def read_matrix_csv(path: str, header: bool = False) -> np.ndarray:
    """
    Reads a dense matrix: one row per line, comma-separated decimals.

    Args:
        path:
            filename
        header:
            skip the first line?
    """
    rows = _parse_csv_rows(path, header)
    if not rows:
        raise InputError(f"{path}: no data")
    widths = set(len(r) for r in rows)
    if len(widths) != 1:
        raise InputError(f"{path}: ragged rows (widths {sorted(widths)})")
    m = np.array(rows, dtype=float)
    require_finite(m, path)
    log.debug(f"Read {m.shape[0]}×{m.shape[1]} matrix from {path}")
    return m


def read_vector_csv(path: str, header: bool = False) -> np.ndarray:
    """
    Reads a vector, written either as one value per line or as a single row.
    """
    rows = _parse_csv_rows(path, header)
    if not rows:
        raise InputError(f"{path}: no data")
    if len(rows) == 1:
        v = np.array(rows[0], dtype=float)
    elif all(len(r) == 1 for r in rows):
        v = np.array([r[0] for r in rows], dtype=float)
    else:
        raise InputError(f"{path}: expected a single row or a single column")
    require_finite(v, path)
    return v


def write_matrix_csv(path: str, m: np.ndarray) -> None:
    """
    Writes a matrix (or a vector, as one column) in the format
    :func:`read_matrix_csv` reads.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for row in m:
            writer.writerow([repr(float(x)) for x in row])
    log.debug(f"Wrote {path}")


def write_dict_rows_csv(
    path: str, fieldnames: Sequence[str], rows: List[Dict[str, Any]]
) -> None:
    """
    Writes records with a title row.
    """
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(fieldnames))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    log.info(f"Wrote {len(rows)} rows to {path}")


# =============================================================================
# JSON
# =============================================================================


def jsonable(x: Any) -> Any:
    """
    Converts numpy scalars/arrays (recursively) to plain Python values.
    Non-finite floats become ``None`` (JSON null).
    """
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    return x


def json_text(doc: Dict[str, Any], pretty: bool = False) -> str:
    """
    Deterministic JSON: sorted keys; indented if ``pretty``.
    """
    return json.dumps(
        jsonable(doc),
        sort_keys=True,
        indent=JSON_INDENT if pretty else None,
        allow_nan=False,
    )


def write_json(
    doc: Dict[str, Any],
    path: Optional[str] = None,
    pretty: bool = False,
    stream: Optional[TextIO] = None,
) -> None:
    """
    Writes a JSON document to a file, or to ``stream`` if no path is given.
    """
    text = json_text(doc, pretty=pretty)
    if path:
        with open(path, "w") as f:
            f.write(text + "\n")
        log.info(f"Wrote {path}")
    else:
        assert stream is not None, "Bug: no path and no stream"
        stream.write(text + "\n")
        stream.flush()


def read_json(path: str) -> Union[Dict[str, Any], List[Any]]:
    if not os.path.isfile(path):
        raise InputError(f"No such file: {path!r}")
    with open(path) as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise InputError(f"{path}: invalid JSON: {e}")


def schema_path(name: str) -> str:
    """
    Filename of a published schema, e.g. ``schema_path("udp_certificate")``.
    """
    return os.path.join(SCHEMA_DIR, f"{name}.schema.json")


def validate_json(doc: Dict[str, Any], name: str) -> None:
    """
    Checks a document, as it would be written, against a published schema.
    Raises :exc:`InputError` if it doesn't conform.
    """
    schema = read_json(schema_path(name))
    instance = json.loads(json_text(doc))
    try:
        jsonschema.validate(instance=instance, schema=schema)
    except jsonschema.ValidationError as e:
        raise InputError(f"Document fails schema {name!r}: {e.message}")


# =============================================================================
# Linear programs
# =============================================================================


def report_on_model(
    m: Model, loglevel: int = logging.DEBUG, solution_only: bool = False
) -> None:
    """
    Shows detail of a MIP model to the log.
    """
    if not log.isEnabledFor(loglevel):
        return
    lines = ["Model:", "", "- Variables:", ""]
    try:
        for v in m.vars:  # type: Var
            lines.append(f"{v.name} == {v.x}")
    except SolutionNotAvailable:
        if solution_only:
            raise
        for v in m.vars:  # type: Var
            lines.append(f"{v.name}")
    if not solution_only:
        lines += ["", "- Objective:", ""]
        lines.append(str(m.objective.sense))
        lines.append(str(m.objective))
        lines += ["", "- Constraints:", ""]
        for c in m.constrs:  # type: Constr
            lines.append(str(c))
    log.log(loglevel, "\n".join(lines))
