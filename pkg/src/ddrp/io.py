"""Dataset readers/writers and the JSON results document.

Formats:

* dense CSV -- comma separated, ``.`` decimal, UTF-8, rows are samples;
* libsvm    -- ``label idx:val idx:val ...`` with 1-based, strictly
  increasing indices (stored 0-based internally);
* results   -- JSON with ``schema_version`` "1". Every real is written as
  ``%.16e`` (17 significant digits) so parse -> serialize is byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ParseError, SchemaError
from .fmm import TrialStats
from .learn import LabeledDataset, SweepCell
from .preprocess import PhiReport

SCHEMA_VERSION = "1"


# ---------------------------------------------------------------- dense CSV

def _parse_float(text, line, path):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"non-numeric cell {text.strip()!r}", line, path) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite cell {text.strip()!r}", line, path)
    return value


def read_dense_csv(path, has_header=False, label_column=None):
    """Matrix of samples, or a :class:`LabeledDataset` when ``label_column`` is set."""
    rows = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if has_header and lineno == 1:
                continue
            if not record or all(not c.strip() for c in record):
                continue
            if width is None:
                width = len(record)
            elif len(record) != width:
                raise ParseError(f"expected {width} columns, found {len(record)}", lineno, path)
            rows.append([_parse_float(c, lineno, path) for c in record])
    data = np.array(rows, dtype=np.float64).reshape(len(rows), width or 0)
    if label_column is None:
        return data
    col = label_column if label_column >= 0 else data.shape[1] + label_column
    if not 0 <= col < data.shape[1]:
        raise ParseError(f"label column {label_column} out of range", None, path)
    labels = data[:, col]
    features = np.delete(data, col, axis=1)
    return LabeledDataset(features, labels)


def format_real(value):
    return "%.16e" % value


def write_dense_csv(path, matrix, labels=None, header=None):
    matrix = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header:
            fh.write(",".join(header) + "\n")
        for i, row in enumerate(matrix):
            cells = [format_real(v) for v in row]
            if labels is not None:
                cells.append(format_real(labels[i]))
            fh.write(",".join(cells) + "\n")


# ---------------------------------------------------------------- libsvm

def read_libsvm(path, n_features=None):
    """CSR dataset from a libsvm file; dimension is the max index unless pinned."""
    labels, indptr, indices, values = [], [0], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            labels.append(_parse_float(parts[0], lineno, path))
            last = 0
            for token in parts[1:]:
                idx_text, sep, val_text = token.partition(":")
                if not sep:
                    raise ParseError(f"malformed feature {token!r}", lineno, path)
                try:
                    idx = int(idx_text)
                except ValueError:
                    raise ParseError(f"non-integer index {idx_text!r}", lineno, path) from None
                if idx < 1:
                    raise ParseError(f"index {idx} is not 1-based", lineno, path)
                if idx <= last:
                    raise ParseError(
                        f"index {idx} is duplicate or out of order (after {last})", lineno, path)
                if n_features is not None and idx > n_features:
                    raise ParseError(f"index {idx} exceeds dimension {n_features}", lineno, path)
                last = idx
                indices.append(idx - 1)
                values.append(_parse_float(val_text, lineno, path))
            indptr.append(len(indices))
    if not labels:
        raise ParseError("file contains no samples", None, path)
    dim = n_features if n_features is not None else (max(indices) + 1 if indices else 0)
    features = sp.csr_matrix(
        (np.array(values, dtype=np.float64), np.array(indices, dtype=np.int64),
         np.array(indptr, dtype=np.int64)), shape=(len(labels), dim))
    return LabeledDataset(features, np.array(labels))


def write_libsvm(path, dataset):
    features = sp.csr_matrix(dataset.features)
    features.sort_indices()
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(features.shape[0]):
            start, stop = features.indptr[i], features.indptr[i + 1]
            label = dataset.labels[i]
            head = "%+d" % label if label in (-1.0, 1.0) else format_real(label)
            cells = [f"{j + 1}:{format_real(v)}"
                     for j, v in zip(features.indices[start:stop], features.data[start:stop])]
            fh.write(" ".join([head] + cells) + "\n")


def read_dataset(path, label_column=-1, has_header=False, n_features=None):
    """Dispatch on extension: ``.svm``/``.libsvm``/``.txt`` are libsvm, else CSV."""
    suffix = Path(path).suffix.lower()
    if suffix in (".svm", ".libsvm", ".txt"):
        return read_libsvm(path, n_features)
    return read_dense_csv(path, has_header, label_column)


# ---------------------------------------------------------------- results

@dataclass
class ResultsDocument:
    command: str
    config: dict = field(default_factory=dict)
    results: list = field(default_factory=list)
    schema_version: str = SCHEMA_VERSION


def _result_dict(item):
    if isinstance(item, dict):
        return item
    return item.to_dict()


def _emit(value, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(value, bool) or value is None:
        return json.dumps(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            raise SchemaError(f"cannot serialize non-finite real {value!r}")
        return format_real(value)
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {_emit(v, indent, level + 1)}"
                 for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(value, (list, tuple, np.ndarray)):
        if len(value) == 0:
            return "[]"
        items = [pad + _emit(v, indent, level + 1) for v in value]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise SchemaError(f"cannot serialize value of type {type(value).__name__}")


def dumps_results(doc):
    payload = {"schema_version": doc.schema_version, "command": doc.command,
               "config": doc.config, "results": [_result_dict(r) for r in doc.results]}
    return _emit(payload, 2, 0) + "\n"


def loads_results(text):
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    if not isinstance(payload, dict):
        raise SchemaError("results document must be a JSON object")
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION!r})")
    for key in ("command", "config", "results"):
        if key not in payload:
            raise SchemaError(f"results document lacks {key!r}")
    return ResultsDocument(payload["command"], payload["config"], payload["results"], version)


def write_results(doc, path=None):
    """Write to ``path`` (or return the text when ``path`` is None)."""
    text = dumps_results(doc)
    if path is None:
        return text
    Path(path).write_text(text, encoding="utf-8")
    return text


def read_results(path):
    return loads_results(Path(path).read_text(encoding="utf-8"))


def typed_results(doc):
    """Rebuild TrialStats / SweepCell / PhiReport objects from a parsed document."""
    out = []
    for r in doc.results:
        kind = r.get("type")
        if kind == "trial_stats":
            out.append(TrialStats.from_dict(r))
        elif kind == "sweep_cell":
            out.append(SweepCell.from_dict(r))
        elif kind == "phi_report":
            out.append(PhiReport.from_dict(r))
        else:
            out.append(r)
    return out


TRIAL_COLUMNS = ("method", "k", "trials", "mean", "std")
SWEEP_COLUMNS = ("lambda", "k", "trials", "mean", "std")


def results_csv(doc):
    """Flat plotting CSV: one row per (method, k) or (lambda, k) cell."""
    rows = [_result_dict(r) for r in doc.results]
    trial = [r for r in rows if r.get("type") == "trial_stats"]
    sweep = [r for r in rows if r.get("type") == "sweep_cell"]
    lines = []
    if trial:
        lines.append(",".join(TRIAL_COLUMNS))
        for r in trial:
            lines.append(",".join([r["method"], str(r["k"]), str(r["trials"]),
                                   format_real(r["mean_sq_error"]),
                                   format_real(r["std_sq_error"])]))
    if sweep:
        lines.append(",".join(SWEEP_COLUMNS))
        for r in sweep:
            lines.append(",".join([format_real(r["lambda"]), str(r["k"]), str(r["trials"]),
                                   format_real(r["mean"]), format_real(r["std"])]))
    return "\n".join(lines) + ("\n" if lines else "")


def sweep_table_csv(cells):
    """k-by-lambda table of ``mean +- std`` cells (rows k, columns lambda)."""
    cells = [SweepCell.from_dict(c) if isinstance(c, dict) else c for c in cells]
    lambdas = sorted({c.lam for c in cells})
    ks = sorted({c.k for c in cells})
    table = {(c.lam, c.k): c for c in cells}
    lines = ["k," + ",".join("%g" % lam for lam in lambdas)]
    for k in ks:
        row = [str(k)]
        for lam in lambdas:
            c = table.get((lam, k))
            row.append("" if c is None else "%.6g +- %.3g" % (c.mean, c.std))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
