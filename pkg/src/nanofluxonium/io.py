"""File formats: device JSON, data CSVs and provenance-headed outputs.

Every output CSV begins with one line ``#`` + JSON provenance, followed by a
header row and data rows. JSON outputs carry the same record under the
``"provenance"`` key. Units are encoded in key and column names.

Device JSON (all sections optional except as required by a command)::

    {"name": "device1",
     "E_C_GHz": 0.89, "E_L_GHz": 1.37, "E_J_GHz": 10.95,
     "phi_ext_rad": -1.445,
     "two_mode": {"C_eff_F": [...], "L_eff_H": [...], "E_J_GHz": 10.95, "q_offset": [0, 0]},
     "topology": {"L_nw_H": 1.21e-7, "C_nw_F": 3.54e-14, "C_0_F": 2e-14,
                  "C_g_F": 0, "C_J_F": 4e-15, "n_cells": 64},
     "geometry": {"length_m": 7.3e-4, "width_m": 1.1e-7, "thickness_m": 1.5e-8, "n_s_per_m3": 3e25},
     "resonator": {"omega_r_GHz": 6.08, "Q_loaded": 8400, "g_GHz": 0.1},
     "loss": {"Q_L": 39000, "Q_C": 15100, "temperature_K": 0.02}}
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .circuit import ResonatorParams, SingleModeParams, TwoModeParams
from .dynamics import DrivePlan, DriveTone
from .errors import ParameterError
from .fitting import SpectroscopyDataset, SpectroscopyPoint
from .loss import LossModel
from .nanowire import CircuitTopology, NanowireGeometry


@dataclass
class DeviceConfig:
    name: str = ""
    single: SingleModeParams | None = None
    two_mode: TwoModeParams | None = None
    topology: CircuitTopology | None = None
    geometry: NanowireGeometry | None = None
    resonator: ResonatorParams | None = None
    loss: LossModel | None = None
    phi_ext: float | None = None

    def require(self, section):
        value = getattr(self, section)
        if value is None:
            raise ParameterError(f"device file has no {section!r} section")
        return value


def _num(d, key, default=None, required=True):
    if key not in d:
        if required and default is None:
            raise ParameterError(f"missing key {key!r}")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParameterError(f"{key!r} must be a number")
    return float(v)


def device_from_dict(d):
    if not isinstance(d, dict):
        raise ParameterError("device document must be a JSON object")
    cfg = DeviceConfig(name=str(d.get("name", "")))
    if "E_C_GHz" in d:
        cfg.single = SingleModeParams(_num(d, "E_C_GHz"), _num(d, "E_L_GHz"), _num(d, "E_J_GHz"))
    if "two_mode" in d:
        t = d["two_mode"]
        cfg.two_mode = TwoModeParams(
            c_eff=tuple(float(x) for x in t["C_eff_F"]), l_eff=tuple(float(x) for x in t["L_eff_H"]),
            e_j=_num(t, "E_J_GHz"), q_offset=tuple(float(x) for x in t.get("q_offset", [0.0] * len(t["C_eff_F"]))))
    if "topology" in d:
        t = d["topology"]
        cfg.topology = CircuitTopology(
            l_nw=_num(t, "L_nw_H"), c_nw=_num(t, "C_nw_F"), c_0=_num(t, "C_0_F", 0.0, False),
            c_g=_num(t, "C_g_F", 0.0, False), c_j=_num(t, "C_J_F", 4e-15, False),
            n_cells=int(t.get("n_cells", 64)))
    if "geometry" in d:
        g = d["geometry"]
        cfg.geometry = NanowireGeometry(_num(g, "length_m"), _num(g, "width_m"), _num(g, "thickness_m"),
                                        _num(g, "n_s_per_m3", required=False))
    if "resonator" in d:
        r = d["resonator"]
        cfg.resonator = ResonatorParams(_num(r, "omega_r_GHz"), _num(r, "Q_loaded"), _num(r, "g_GHz", 0.0, False))
    if "loss" in d:
        m = d["loss"]
        cfg.loss = LossModel(_num(m, "Q_L"), _num(m, "Q_C"), _num(m, "temperature_K", 0.02, False))
    if "phi_ext_rad" in d:
        cfg.phi_ext = _num(d, "phi_ext_rad")
    return cfg


def load_json(path):
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParameterError(f"{path}: invalid JSON ({exc})") from exc


def load_device(path):
    try:
        return device_from_dict(load_json(path))
    except (KeyError, TypeError) as exc:
        raise ParameterError(f"{path}: malformed device file ({exc})") from exc


def single_to_dict(p):
    return {"E_C_GHz": p.e_c, "E_L_GHz": p.e_l, "E_J_GHz": p.e_j}


def two_mode_to_dict(p):
    return {"C_eff_F": list(p.c_eff), "L_eff_H": list(p.l_eff), "E_J_GHz": p.e_j, "q_offset": list(p.q_offset)}


def topology_to_dict(t):
    return {"L_nw_H": t.l_nw, "C_nw_F": t.c_nw, "C_0_F": t.c_0, "C_g_F": t.c_g, "C_J_F": t.c_j,
            "n_cells": t.n_cells}


# -- provenance -------------------------------------------------------------


def config_hash(config):
    """SHA-256 of the canonical JSON form of ``config``."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def provenance(command, config, seed):
    return {"tool": "nanofluxonium", "version": __version__, "command": command,
            "config_hash": config_hash(config), "seed": seed}


def fmt(x):
    """Shortest round-tripping text for numbers; other values pass through."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return repr(x) if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    return "" if x is None else str(x)


def jsonable(o):
    """Plain JSON types; non-finite floats become the strings used in CSVs."""
    if isinstance(o, dict):
        return {str(k): jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return jsonable(o.tolist())
    if isinstance(o, (bool, np.bool_)):
        return bool(o)
    if isinstance(o, (int, np.integer)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        return float(o) if math.isfinite(o) else fmt(o)
    if o is None or isinstance(o, str):
        return o
    return str(o)


def csv_text(header, columns, rows):
    buf = io.StringIO()
    buf.write("#" + json.dumps(jsonable(header), sort_keys=True, allow_nan=False) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def write_csv(path, header, columns, rows):
    Path(path).write_text(csv_text(header, columns, rows))


def read_csv(path):
    """Parse an output CSV into ``(header, columns, rows)``; rows are string lists."""
    lines = Path(path).read_text().splitlines()
    header = {}
    if lines and lines[0].startswith("#"):
        header = json.loads(lines[0][1:])
        lines = lines[1:]
    reader = csv.reader(lines)
    columns = next(reader, [])
    return header, columns, [r for r in reader]


def write_json(path, header, payload):
    doc = jsonable({"provenance": header, **payload})
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n")


# -- datasets ---------------------------------------------------------------

DATASET_COLUMNS = ["phi_ext_rad", "freq_GHz", "photon_order", "label_hint", "weight"]


def _data_rows(path, required):
    _, columns, rows = read_csv(path)
    missing = [c for c in required if c not in columns]
    if missing:
        raise ParameterError(f"{path}: missing columns {missing}")
    return [dict(zip(columns, r)) for r in rows if r]


def read_dataset(path):
    pts = []
    for row in _data_rows(path, ["phi_ext_rad", "freq_GHz"]):
        try:
            pts.append(SpectroscopyPoint(
                float(row["phi_ext_rad"]), float(row["freq_GHz"]), int(row.get("photon_order") or 1),
                row.get("label_hint") or None, float(row.get("weight") or 1.0)))
        except ValueError as exc:
            raise ParameterError(f"{path}: bad row {row} ({exc})") from exc
    return SpectroscopyDataset(pts)


def dataset_rows(data):
    return [[p.phi_ext, p.freq, p.photon_order, p.label_hint or "", p.weight] for p in data.points]


def write_dataset(path, data, header=None):
    write_csv(path, header or {}, DATASET_COLUMNS, dataset_rows(data))


def read_t1_data(path):
    """(freq_GHz, t1_s) pairs; an optional sigma_t1_s column is returned as a third list."""
    rows = _data_rows(path, ["freq_GHz", "t1_s"])
    try:
        pairs = [(float(r["freq_GHz"]), float(r["t1_s"])) for r in rows]
        sig = [float(r["sigma_t1_s"]) for r in rows] if rows and "sigma_t1_s" in rows[0] else None
    except ValueError as exc:
        raise ParameterError(f"{path}: bad T1 row ({exc})") from exc
    return pairs, sig


# -- drive plans ------------------------------------------------------------


def plan_from_dict(d):
    try:
        tones = []
        for t in d["tones"]:
            target = t.get("target")
            if target is not None:
                target = (target[0], target[1], int(target[2]) if len(target) > 2 else 1)
            tones.append(DriveTone(float(t["freq_GHz"]), float(t["amp_GHz"]), target, str(t.get("name", ""))))
        return DrivePlan(tones=tones, level_count=int(d.get("level_count", 8)),
                         frame=str(d.get("frame", "multi-rotating")))
    except (KeyError, TypeError, IndexError) as exc:
        raise ParameterError(f"malformed drive plan ({exc})") from exc


def plan_to_dict(plan):
    return {"tones": [{"freq_GHz": t.frequency, "amp_GHz": t.amplitude, "name": t.name,
                       "target": list(t.target) if t.target else None} for t in plan.tones],
            "level_count": plan.level_count, "frame": plan.frame}
