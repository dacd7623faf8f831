"""Run configuration: one JSON document per experiment.

Top-level keys::

    operator     {"N", "c", "a"}  or  {"N", "c", "Q", "b"} for the general operator
    grid         {"Ly", "ny", "Lx", "nx", "grading"}  (N and c come from the operator)
    propagation  PropagatorConfig fields
    experiment   command-specific parameters (see EXPERIMENT_DEFAULTS)
    output       {"dir"}
    seed         integer seed for random scans

Unknown keys are rejected at every level; missing required blocks or
keys raise :class:`ConfigError` naming the key.  Loading re-runs every
invariant check of the underlying library types.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bounds import FORMS
from .domain import GridSpec
from .operator import GeneralCoeffs, OperatorCoeffs
from .semigroup import PropagatorConfig
from .sobolev import FAMILIES, SobolevParams, gn_theta, sobolev_exponent

COMMANDS = ("kernel", "validate", "fit", "sobolev", "scaling")
TOP_KEYS = ("operator", "grid", "propagation", "experiment", "output", "seed")
DEFAULT_SEED = 20240101

# blocks each command needs; propagation and output are always optional
REQUIRED_BLOCKS = {
    "kernel": ("operator", "grid", "experiment"),
    "validate": ("operator", "grid", "experiment"),
    "fit": ("operator", "grid", "experiment"),
    "sobolev": ("operator", "experiment"),
    "scaling": ("operator", "grid", "experiment"),
}

REQUIRED = object()

EXPERIMENT_DEFAULTS = {
    "kernel": {"t": REQUIRED, "sources": REQUIRED, "side": "forward", "source": "cell"},
    "validate": {"t": REQUIRED, "source": REQUIRED, "levels": REQUIRED, "oracle_c": None,
                 "max_rel_error": 0.02, "min_order": 1.5},
    "fit": {"check": "fit", "form": "refined", "t": REQUIRED, "sources": None, "envelope_c": None,
            "threshold": 2.0, "min_raw_over_tilde": 5.0, "probes": None, "max_deviation": 0.03},
    "sobolev": {"scans": [], "witness": None, "n": 200, "families": list(FAMILIES)},
    "scaling": {"t": REQUIRED, "s": REQUIRED, "probes": REQUIRED, "scaled_grid": None,
                "max_deviation": 0.01, "oracle": False},
}

SCAN_DEFAULTS = {
    "sobolev": {"scales": [0.25, 0.5, 2.0, 4.0], "max_drift": 1e-6},
    "gn": {"q": REQUIRED, "measure": "c", "theta": None, "full_norm": False},
    "holder": {"q": REQUIRED},
    "mazya": {"p": 2, "alpha": REQUIRED, "beta": REQUIRED, "q": REQUIRED},
    "local": {"r": REQUIRED, "q": REQUIRED},
}
WITNESS_DEFAULTS = {"scales": [1, 2, 4, 8, 16], "min_growth": 2.0}
FIT_CHECKS = ("fit", "stability", "tilde", "oblique")


class ConfigError(ValueError):
    """Invalid configuration; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message

    def to_dict(self) -> dict:
        return {"error": "config", "key": self.key, "message": self.message}


def _block(raw: dict, name: str, required: bool) -> dict:
    if name not in raw:
        if required:
            raise ConfigError(name, "required block is missing")
        return {}
    val = raw[name]
    if not isinstance(val, dict):
        raise ConfigError(name, "must be a JSON object")
    return val


def _fill(block: dict, defaults: dict, path: str) -> dict:
    unknown = sorted(set(block) - set(defaults))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}", f"unknown key (allowed: {sorted(defaults)})")
    out = {}
    for key, default in defaults.items():
        if key in block:
            out[key] = copy.deepcopy(block[key])
        elif default is REQUIRED:
            raise ConfigError(f"{path}.{key}", "required key is missing")
        else:
            out[key] = copy.deepcopy(default)
    return out


def _wrap(path: str, fn, *args, **kwargs):
    """Run a library constructor, re-raising its validation errors as ConfigError."""
    try:
        return fn(*args, **kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from None


def _times(val, path) -> list:
    ts = val if isinstance(val, list) else [val]
    if not ts:
        raise ConfigError(path, "empty t-set")
    if not all(isinstance(t, (int, float)) and t > 0 for t in ts):
        raise ConfigError(path, "times must be positive numbers")
    return [float(t) for t in ts]


def _point(val, N, path) -> list:
    arr = np.asarray(val, dtype=float) if isinstance(val, list) else None
    if arr is None or arr.shape != (N + 1,):
        raise ConfigError(path, f"expected a point with {N + 1} coordinates")
    if arr[-1] < 0:
        raise ConfigError(path, "the y coordinate must be non-negative")
    return arr.tolist()


def _points(val, N, path) -> list:
    if not isinstance(val, list) or not val:
        raise ConfigError(path, "expected a non-empty list of points")
    return [_point(p, N, f"{path}[{i}]") for i, p in enumerate(val)]


@dataclass
class RunConfig:
    command: str
    operator: object
    grid: GridSpec | None
    propagation: PropagatorConfig
    experiment: dict
    out_dir: str | None
    seed: int
    resolved: dict = field(repr=False)

    @property
    def N(self) -> int:
        return self.operator.N

    @property
    def general(self) -> bool:
        return isinstance(self.operator, GeneralCoeffs)


def _operator(op: dict):
    if "Q" in op:
        blk = _fill(op, {"N": REQUIRED, "c": REQUIRED, "Q": REQUIRED, "b": None}, "operator")
        N = blk["N"]
        Q = np.asarray(blk["Q"], dtype=float)
        if Q.shape != (N + 1, N + 1):
            raise ConfigError("operator.Q", f"expected a {N + 1}x{N + 1} matrix")
        if not np.allclose(Q, Q.T):
            raise ConfigError("operator.Q", "must be symmetric")
        if blk["b"] is None:
            blk["b"] = [0.0] * N
        gc = _wrap("operator", GeneralCoeffs.from_matrix, Q, float(blk["c"]), np.asarray(blk["b"], float))
        return gc, blk
    blk = _fill(op, {"N": REQUIRED, "c": REQUIRED, "a": None}, "operator")
    N = blk["N"]
    if not isinstance(N, int) or N < 0:
        raise ConfigError("operator.N", "must be a non-negative integer")
    if blk["a"] is None:
        blk["a"] = [0.0] * N
    if not isinstance(blk["a"], list) or len(blk["a"]) != N:
        raise ConfigError("operator.a", f"expected a list of {N} numbers")
    oc = _wrap("operator", OperatorCoeffs, float(blk["c"]), tuple(float(v) for v in blk["a"]))
    return oc, blk


GRID_DEFAULTS = {"Ly": REQUIRED, "ny": REQUIRED, "Lx": 1.0, "nx": 2, "grading": 2.0}


def grid_spec(block: dict, N: int, m: float, path: str = "grid") -> tuple[GridSpec, dict]:
    blk = _fill(block, GRID_DEFAULTS, path)
    return _wrap(path, GridSpec, N=N, c=m, **blk), blk


def _experiment(command: str, exp: dict, N: int, c: float, general: bool) -> dict:
    blk = _fill(exp, EXPERIMENT_DEFAULTS[command], "experiment")
    if command == "kernel":
        blk["t"] = _times(blk["t"], "experiment.t")
        blk["sources"] = _points(blk["sources"], N, "experiment.sources")
        if blk["side"] not in ("forward", "adjoint"):
            raise ConfigError("experiment.side", "must be 'forward' or 'adjoint'")
        if blk["source"] not in ("cell", "interpolated"):
            raise ConfigError("experiment.source", "must be 'cell' or 'interpolated'")
    elif command == "validate":
        blk["t"] = _times(blk["t"], "experiment.t")[0]
        blk["source"] = _point(blk["source"], N, "experiment.source")
        lv = blk["levels"]
        if not isinstance(lv, list) or len(lv) < 2 or not all(isinstance(n, int) and n > 1 for n in lv):
            raise ConfigError("experiment.levels", "expected at least two integer ny levels")
        if general:
            raise ConfigError("operator", "validate needs the reduced operator (N, c, a)")
    elif command == "fit":
        if blk["check"] not in FIT_CHECKS:
            raise ConfigError("experiment.check", f"must be one of {FIT_CHECKS}")
        if blk["form"] not in FORMS:
            raise ConfigError("experiment.form", f"invalid form tag {blk['form']!r}; expected one of {FORMS}")
        blk["t"] = _times(blk["t"], "experiment.t")
        if blk["check"] == "oblique":
            if not general:
                raise ConfigError("operator", "the oblique check needs the general operator (Q, b)")
            blk["sources"] = _points(blk["sources"], N, "experiment.sources")[:1]
            blk["probes"] = _points(blk["probes"], N, "experiment.probes")
        else:
            blk["sources"] = _points(blk["sources"], N, "experiment.sources")
            if general:
                raise ConfigError("operator", f"check {blk['check']!r} needs the reduced operator (N, c, a)")
    elif command == "scaling":
        blk["t"] = _times(blk["t"], "experiment.t")[0]
        if not isinstance(blk["s"], (int, float)) or not blk["s"] > 0:
            raise ConfigError("experiment.s", "must be a positive number")
        pr = blk["probes"]
        if not isinstance(pr, list) or not pr:
            raise ConfigError("experiment.probes", "expected a non-empty list of [z1, z2] pairs")
        blk["probes"] = [[_point(p[0], N, f"experiment.probes[{i}][0]"),
                          _point(p[1], N, f"experiment.probes[{i}][1]")]
                         if isinstance(p, list) and len(p) == 2 else
                         _point(None, N, f"experiment.probes[{i}]") for i, p in enumerate(pr)]
        if general:
            raise ConfigError("operator", "scaling needs the reduced operator (N, c, a)")
    elif command == "sobolev":
        blk = _sobolev_experiment(blk, N, c)
    return blk


def _sobolev_experiment(blk: dict, N: int, c: float) -> dict:
    if N < 1:
        raise ConfigError("operator.N", "the Sobolev scans need N >= 1")
    fams = blk["families"]
    if not isinstance(fams, list) or not fams or any(f not in FAMILIES for f in fams):
        raise ConfigError("experiment.families", f"expected a non-empty subset of {FAMILIES}")
    if not isinstance(blk["n"], int) or blk["n"] < 1:
        raise ConfigError("experiment.n", "must be a positive integer")
    scans = []
    for i, sc in enumerate(blk["scans"]):
        path = f"experiment.scans[{i}]"
        if not isinstance(sc, dict) or sc.get("quotient") not in SCAN_DEFAULTS:
            raise ConfigError(f"{path}.quotient", f"must be one of {sorted(SCAN_DEFAULTS)}")
        kind = sc["quotient"]
        rest = {k: v for k, v in sc.items() if k != "quotient"}
        full = {"quotient": kind, **_fill(rest, SCAN_DEFAULTS[kind], path)}
        crit = sobolev_exponent(N, c)
        if kind == "sobolev" and crit == math.inf:
            raise ConfigError(path, "2*_c is infinite for N + c <= 1; the critical quotient is undefined")
        if kind == "gn":
            q = float(full["q"])
            th = gn_theta(N, c, q) if full["theta"] is None else float(full["theta"])
            if not 0 < th <= 1 or (full["theta"] is None and N == 1 and c <= 0 and th >= 1):
                raise ConfigError(f"{path}.q", f"theta = {th} out of range for q = {q}")
            if full["measure"] not in ("c", "nu"):
                raise ConfigError(f"{path}.measure", "must be 'c' or 'nu'")
        if kind == "holder" and not 2 < float(full["q"]) < float(crit):
            raise ConfigError(f"{path}.q", f"need 2 < q < 2*_c = {float(crit)}")
        if kind == "mazya":
            from .sobolev import mazya_check
            _wrap(path, mazya_check, full["p"], N, float(full["alpha"]), float(full["beta"]),
                  float(full["q"]))
        if kind == "local":
            _wrap(path, SobolevParams, N, c, float(full["q"]), r=float(full["r"]))
            if not float(full["r"]) > 0:
                raise ConfigError(f"{path}.r", "must be positive")
        scans.append(full)
    blk["scans"] = scans
    if blk["witness"] is not None:
        if blk["witness"] is True:
            blk["witness"] = {}
        if not isinstance(blk["witness"], dict):
            raise ConfigError("experiment.witness", "expected true or an object")
        if c >= 0:
            raise ConfigError("experiment.witness", "the global-failure witness needs c < 0")
        blk["witness"] = _fill(blk["witness"], WITNESS_DEFAULTS, "experiment.witness")
    if not scans and blk["witness"] is None:
        raise ConfigError("experiment.scans", "no scans and no witness requested")
    return blk


def parse_config(raw: dict, command: str, out_dir: str | None = None, seed: int | None = None) -> RunConfig:
    """Validate ``raw`` for ``command`` and fill every default."""
    if command not in COMMANDS:
        raise ConfigError("command", f"unknown command {command!r}")
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "the configuration must be a JSON object")
    unknown = sorted(set(raw) - set(TOP_KEYS))
    if unknown:
        raise ConfigError(unknown[0], f"unknown key (allowed: {list(TOP_KEYS)})")
    need = REQUIRED_BLOCKS[command]
    op, op_blk = _operator(_block(raw, "operator", True))
    N = op.N
    m = op.m if isinstance(op, GeneralCoeffs) else op.c
    grid, grid_blk = (None, None)
    if "grid" in need or "grid" in raw:
        grid, grid_blk = grid_spec(_block(raw, "grid", "grid" in need), N, m)
    prop_blk = _block(raw, "propagation", False)
    pdefaults = asdict(PropagatorConfig())
    prop_blk = _fill(prop_blk, pdefaults, "propagation")
    prop = _wrap("propagation", PropagatorConfig, **prop_blk)
    exp = _experiment(command, _block(raw, "experiment", True), N, op.c, isinstance(op, GeneralCoeffs))
    if command == "scaling" and exp["scaled_grid"] is not None:
        _, exp["scaled_grid"] = grid_spec(exp["scaled_grid"], N, m, "experiment.scaled_grid")
    out_blk = _fill(_block(raw, "output", False), {"dir": None}, "output")
    out = out_dir if out_dir is not None else out_blk["dir"]
    if seed is None:
        seed = raw.get("seed", DEFAULT_SEED)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed", "must be a non-negative integer")
    resolved = {"command": command, "operator": op_blk, "propagation": prop_blk,
                "experiment": exp, "seed": seed}
    if grid_blk is not None:
        resolved["grid"] = grid_blk
    return RunConfig(command, op, grid, prop, exp, out, seed, resolved)


def load_config(path: str | Path, command: str, out_dir: str | None = None, seed: int | None = None) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON: {exc}") from None
    return parse_config(raw, command, out_dir, seed)
