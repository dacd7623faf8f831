"""Atomic CSV and JSON output with content hashes."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _finite(obj):
    """Replace non-finite floats by strings so the JSON stays standard."""
    if isinstance(obj, float) and not np.isfinite(obj):
        return "nan" if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, no NaN literals."""
    plain = json.loads(json.dumps(obj, default=_default))
    return json.dumps(_finite(plain), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def atomic_write(path: str | Path, data: str) -> str:
    """Write UTF-8 ``data`` via a temporary file and rename; returns its sha256."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return sha256_text(data)


def csv_text(header, rows) -> str:
    """RFC-4180 text: CRLF line ends, minimal quoting, ``repr`` floats."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> str:
    return atomic_write(path, csv_text(header, rows))


def read_csv(path):
    """Header and rows of a CSV written by :func:`write_csv` (values as strings)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_report(path, command: str, resolved: dict, results: dict, checks: list) -> dict:
    """JSON report embedding the resolved config, its hash and a hash of the content."""
    config_hash = sha256_text(canonical_json(resolved))
    body = {"command": command, "config": resolved, "config_sha256": config_hash,
            "results": results, "checks": checks,
            "passed": bool(all(c["passed"] for c in checks))}
    body["content_sha256"] = sha256_text(canonical_json(body))
    atomic_write(path, canonical_json(body) + "\n")
    return body


def check(name: str, value, threshold, passed: bool, relation: str = "<=") -> dict:
    return {"name": name, "value": value, "threshold": threshold, "relation": relation,
            "passed": bool(passed)}
