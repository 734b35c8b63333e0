"""CSV datasets and JSON models.

Dataset CSV: header ``t,u1..um,y1..yr``, one row per sample, UTF-8, ``.``
decimal separator. Floats are written with ``repr`` so a round trip is
exact. Model JSON holds ``n, m, r, p, f`` and the matrices ``A, B, C, K``
as row-major nested lists, plus a ``provenance`` block.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import re
import tempfile
from pathlib import Path

import numpy as np

from pbsid import __version__
from pbsid.core import DataError, InnovationModel, SignalDataset

_COL = re.compile(r"^([uy])(\d+)$")


def atomic_write(path, data) -> None:
    """Write text or bytes via a temporary file and rename."""
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc
    try:
        kwargs = {} if mode == "wb" else {"encoding": "utf-8", "newline": ""}
        with os.fdopen(fd, mode, **kwargs) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_header(m: int, r: int):
    return ["t"] + [f"u{i + 1}" for i in range(m)] + [f"y{i + 1}" for i in range(r)]


def _fmt(x) -> str:
    return repr(float(x))


def dataset_to_csv(dataset: SignalDataset | None, m: int | None = None, r: int | None = None) -> str:
    """CSV text for ``dataset``; with ``dataset=None`` only the header for (m, r)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if dataset is None:
        w.writerow(csv_header(m, r))
        return buf.getvalue()
    w.writerow(csv_header(dataset.m, dataset.r))
    data = np.hstack([dataset.timestamps[:, None], dataset.inputs, dataset.outputs])
    for row in data:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def write_dataset(dataset: SignalDataset, path) -> None:
    atomic_write(path, dataset_to_csv(dataset))


def parse_dataset(text: str, source: str = "<csv>") -> SignalDataset:
    rows = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(rows)]
    except StopIteration:
        raise DataError(f"{source}: empty file (missing header)") from None
    if not header or header[0] != "t":
        raise DataError(f"{source}:1: header must start with 't', got {header[:1]}")
    kinds = []
    for name in header[1:]:
        mt = _COL.match(name)
        if not mt:
            raise DataError(f"{source}:1: unexpected column {name!r}")
        kinds.append(mt.group(1))
    m = kinds.count("u")
    r = kinds.count("y")
    if kinds != ["u"] * m + ["y"] * r:
        raise DataError(f"{source}:1: columns must be ordered t,u1..um,y1..yr")
    if r == 0:
        raise DataError(f"{source}:1: no output columns")
    values, lines = [], []
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{source}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            vals = [float(c) for c in row]
        except ValueError as exc:
            raise DataError(f"{source}:{lineno}: {exc}") from None
        if not all(math.isfinite(v) for v in vals):
            raise DataError(f"{source}:{lineno}: non-finite value")
        values.append(vals)
        lines.append(lineno)
    if not values:
        raise DataError(f"{source}: no data rows")
    arr = np.array(values)
    t = arr[:, 0]
    bad = np.flatnonzero(np.diff(t) <= 0)
    if bad.size:
        raise DataError(f"{source}:{lines[bad[0] + 1]}: timestamps must be strictly increasing")
    period = float(np.median(np.diff(t))) if len(t) > 1 else 1.0
    labels = header[1:]
    try:
        return SignalDataset(arr[:, 1 : 1 + m], arr[:, 1 + m :], period, t, labels)
    except DataError as exc:
        raise DataError(f"{source}: {exc}") from None


def read_dataset(path) -> SignalDataset:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return parse_dataset(text, str(path))


def dataset_hash(dataset: SignalDataset) -> str:
    return hashlib.sha256(dataset_to_csv(dataset).encode()).hexdigest()


def _jsonable(x):
    """Non-finite floats become ``None`` (JSON has no inf/nan)."""
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def model_to_dict(model: InnovationModel, provenance: dict | None = None) -> dict:
    d = {
        "n": model.n,
        "m": model.m,
        "r": model.r,
        "p": model.p_used,
        "f": model.f_used,
        "A": model.A.tolist(),
        "B": model.B.tolist(),
        "C": model.C.tolist(),
        "K": model.K.tolist(),
        "provenance": {"tool": "pbsid", "version": __version__, **(provenance or {})},
    }
    return _jsonable(d)


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, allow_nan=False) + "\n"


def write_model(model: InnovationModel, path, provenance: dict | None = None) -> None:
    atomic_write(path, dumps(model_to_dict(model, provenance)))


def model_from_dict(d: dict) -> InnovationModel:
    try:
        n, m, r = int(d["n"]), int(d["m"]), int(d["r"])
        mats = {k: np.array(d[k], dtype=float).reshape(shape) for k, shape in
                (("A", (n, n)), ("B", (n, m)), ("C", (r, n)), ("K", (n, r)))}
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"invalid model JSON: {exc}") from None
    p = d.get("p")
    f = d.get("f")
    return InnovationModel(mats["A"], mats["B"], mats["C"], mats["K"],
                           None if f is None else int(f), None if p is None else int(p))


def read_model(path) -> InnovationModel:
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc
    return model_from_dict(d)
