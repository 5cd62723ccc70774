"""CSV and JSON formats shared by the command line tools.

Every file starts with a ``# config: {...}`` line echoing the run settings.
Floats are written with 17 significant digits so values survive a round trip.
"""
from __future__ import annotations

import csv
import json
import math
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .errors import DomainError, SchemaError
from .games import GamePath, game_times

SERIES_COLUMNS = ["series_id", "t", "y"]
PROB_COLUMNS = ["series_id", "t", "p", "d"]
VOLATILITY_COLUMNS = ["series_id", "t", "S", "V"]
GAME_COLUMNS = ["game_id", "season", "i", "t_min", "score_diff", "home_win"]
SCATTER_COLUMNS = ["lag_s", "lag_t", "x", "y"]
BOXPLOT_COLUMNS = ["series_id", "stat", "value"]


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def _config_line(config: dict | None) -> str:
    return "# config: " + json.dumps(config or {}, sort_keys=True, default=str)


def write_csv(path, columns: list, rows, config: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(_config_line(config) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path, columns: list) -> list:
    """Rows as dicts; comment lines are skipped and the header must contain ``columns``.

    Row numbers in errors count data rows from 1.
    """
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{path}: no such file", row=0)
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError(f"{path}: file is empty", row=0) from None
    missing = [c for c in columns if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}", row=0)
    rows = []
    for k, rec in enumerate(reader, start=1):
        if len(rec) != len(header):
            raise SchemaError(f"{path}: expected {len(header)} fields, got {len(rec)}", row=k)
        rows.append(dict(zip(header, rec)))
    if not rows:
        raise SchemaError(f"{path}: no data rows", row=0)
    return rows


def _num(rec: dict, key: str, row: int, path, kind=float):
    try:
        return kind(rec[key])
    except ValueError:
        raise SchemaError(f"{path}: column {key!r} has unparseable value {rec[key]!r}",
                          row=row) from None


def _clean(obj):
    """JSON-safe copy: arrays to lists, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    return obj


def write_json(path, obj: dict, config: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"config": config or {}, **_clean(obj)}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{path}: no such file", row=0)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc.msg})", row=exc.lineno) from None


# ---------------------------------------------------------------------------
# probability paths
# ---------------------------------------------------------------------------

def prob_rows(series_ids, prob_paths):
    for sid, probs in zip(series_ids, prob_paths):
        probs = np.asarray(probs, dtype=float)
        for t, p in enumerate(probs):
            yield sid, t, p, (probs[t] - probs[t - 1]) if t else None


def read_prob_paths(path) -> "OrderedDict[str, np.ndarray]":
    """Probability paths keyed by series id, checking that t runs 0, 1, 2, ..."""
    rows = read_csv(path, ["series_id", "t", "p"])
    out: "OrderedDict[str, list]" = OrderedDict()
    for k, rec in enumerate(rows, start=1):
        sid = rec["series_id"]
        t = _num(rec, "t", k, path, int)
        p = _num(rec, "p", k, path)
        seq = out.setdefault(sid, [])
        if t != len(seq):
            raise SchemaError(f"{path}: series {sid} expected t={len(seq)}, got t={t}", row=k)
        if not 0.0 <= p <= 1.0:
            raise SchemaError(f"{path}: probability {p} outside [0, 1]", row=k)
        seq.append(p)
    return OrderedDict((k, np.asarray(v)) for k, v in out.items())


# ---------------------------------------------------------------------------
# games
# ---------------------------------------------------------------------------

def game_rows(games):
    for g in games:
        for i, (t, x) in enumerate(zip(g.times, g.score_diff)):
            yield g.game_id, g.season, i, t, x, g.home_win


def read_games(path) -> list:
    """Games from the canonical score-path CSV, in file order."""
    rows = read_csv(path, GAME_COLUMNS)
    raw: "OrderedDict[str, dict]" = OrderedDict()
    for k, rec in enumerate(rows, start=1):
        gid = rec["game_id"]
        g = raw.setdefault(gid, {"season": rec["season"], "i": [], "t": [], "x": [],
                                 "y": set(), "first_row": k})
        g["i"].append(_num(rec, "i", k, path, int))
        g["t"].append(_num(rec, "t_min", k, path))
        x = _num(rec, "score_diff", k, path)
        if x != round(x):
            raise SchemaError(f"{path}: game {gid} has non-integer score difference {x}", row=k)
        g["x"].append(x)
        g["y"].add(_num(rec, "home_win", k, path, int))
    games = []
    for gid, g in raw.items():
        n = len(g["i"]) - 1
        if g["i"] != list(range(n + 1)) or n < 1:
            raise SchemaError(f"{path}: game {gid} rows must run i = 0..n in order",
                              row=g["first_row"])
        if not np.allclose(g["t"], game_times(n), rtol=0, atol=1e-6):
            raise SchemaError(f"{path}: game {gid} time grid does not match the standard grid",
                              row=g["first_row"])
        if len(g["y"]) != 1:
            raise SchemaError(f"{path}: game {gid} has conflicting home_win labels",
                              row=g["first_row"])
        try:
            games.append(GamePath(gid, g["season"], game_times(n), g["x"], g["y"].pop()))
        except DomainError as exc:
            raise SchemaError(f"{path}: {exc}", row=g["first_row"]) from None
    return games
