"""File-backed framework database.

Layout under a store root::

    registry.json            sensors, protocols, signatures, capabilities
    rates/<sensor>.json      rate entries of one sensor
    weights/<signature>.json perceptron weights of one signature
    metas/<name>.jsonl       meta-alert logs
    history/<signature>.tsv  training convergence series

Every write goes to a temporary file that then replaces the target, so readers
never see a half-written file. Floats go through ``json`` which emits the
shortest repr that round-trips exactly.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .ingest import format_timestamp, parse_timestamp
from .learning import RateTable
from .model import (Label, MetaAlert, MlpWeights, ModelError, Protocol, RateEntry, Registry,
                    Sensor, SensorCapability, Signature, SocketPair, Tag, TrainConfig,
                    validate_registry)

ENV_VAR = "METALERT_STORE"
_SAFE_NAME = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


class StoreError(ValueError):
    def __init__(self, path, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path


class NotFoundError(StoreError, KeyError):
    def __str__(self):
        return ValueError.__str__(self)


def default_root(explicit: Optional[str] = None) -> Path:
    root = explicit or os.environ.get(ENV_VAR)
    if not root:
        raise StoreError("<store>", f"no store given (use --store or set {ENV_VAR})")
    return Path(root)


@dataclass(frozen=True)
class StoreLayout:
    root: Path

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))

    @property
    def registry(self) -> Path:
        return self.root / "registry.json"

    @property
    def rates_dir(self) -> Path:
        return self.root / "rates"

    @property
    def weights_dir(self) -> Path:
        return self.root / "weights"

    @property
    def metas_dir(self) -> Path:
        return self.root / "metas"

    @property
    def history_dir(self) -> Path:
        return self.root / "history"

    @property
    def run_info(self) -> Path:
        return self.root / "run.json"


def _file_name(key: str, suffix: str) -> str:
    if not _SAFE_NAME.match(key):
        raise ModelError(f"id {key!r} cannot be used as a file name")
    return key + suffix


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _load_json(path: Path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise NotFoundError(path, "not found") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise StoreError(path, f"corrupt file ({exc})") from None


# -- registry ---------------------------------------------------------------

def registry_to_dict(reg: Registry) -> dict:
    return {
        "sensors": [{"sensor_id": s.sensor_id, "name": s.name} for s in reg.sensors],
        "protocols": [{"protocol_id": p.protocol_id} for p in reg.protocols],
        "signatures": [
            {"signature_id": s.signature_id, "protocol_id": s.protocol_id, "description": s.description}
            for s in reg.signatures
        ],
        "capabilities": [
            {"sensor_id": c.sensor_id, "signature_id": c.signature_id} for c in reg.capabilities
        ],
    }


def registry_from_dict(data: dict) -> Registry:
    return validate_registry(
        [Sensor(**s) for s in data.get("sensors", [])],
        [Protocol(**p) for p in data.get("protocols", [])],
        [Signature(**s) for s in data.get("signatures", [])],
        [SensorCapability(**c) for c in data.get("capabilities", [])],
    )


def read_registry(path) -> Registry:
    data = _load_json(Path(path))
    try:
        return registry_from_dict(data)
    except (TypeError, AttributeError) as exc:
        raise StoreError(path, f"malformed registry ({exc})") from None


def write_registry(reg: Registry, path) -> None:
    atomic_write(Path(path), _dump(registry_to_dict(reg)))


def save_registry(reg: Registry, layout: StoreLayout) -> None:
    write_registry(reg, layout.registry)


def load_registry(layout: StoreLayout) -> Registry:
    return read_registry(layout.registry)


# -- rates ------------------------------------------------------------------

_RATE_FIELDS = ("protocol_id", "signature_id", "rtp", "rfp", "rfn", "rtn", "pm")


def save_rates(table: RateTable, layout: StoreLayout) -> None:
    """One file per sensor; files of sensors no longer in the table are removed."""
    per_sensor: dict[str, dict] = {}
    for entry in table:
        rec = per_sensor.setdefault(entry.sensor_id, {"sensor_id": entry.sensor_id, "entries": [], "flagged": []})
        rec["entries"].append({f: getattr(entry, f) for f in _RATE_FIELDS})
    for sensor, proto, sig in table.flagged:
        rec = per_sensor.setdefault(sensor, {"sensor_id": sensor, "entries": [], "flagged": []})
        rec["flagged"].append({"protocol_id": proto, "signature_id": sig})
    layout.rates_dir.mkdir(parents=True, exist_ok=True)
    keep = set()
    for sensor, rec in sorted(per_sensor.items()):
        name = _file_name(sensor, ".json")
        keep.add(name)
        atomic_write(layout.rates_dir / name, _dump(rec))
    for stale in layout.rates_dir.glob("*.json"):
        if stale.name not in keep:
            stale.unlink()


def load_rates(layout: StoreLayout) -> RateTable:
    return read_rates(layout.rates_dir)


def read_rates(directory) -> RateTable:
    directory = Path(directory)
    entries, flagged = [], []
    if not directory.is_dir():
        return RateTable()
    for path in sorted(directory.glob("*.json")):
        data = _load_json(path)
        try:
            sensor = data["sensor_id"]
            for rec in data["entries"]:
                entries.append(RateEntry(sensor_id=sensor, **{f: rec[f] for f in _RATE_FIELDS}))
            for rec in data.get("flagged", []):
                flagged.append((sensor, rec["protocol_id"], rec["signature_id"]))
        except (KeyError, TypeError, ModelError) as exc:
            raise StoreError(path, f"malformed rate file ({exc!r})") from None
    return RateTable(entries, flagged)


# -- weights ----------------------------------------------------------------

def weights_to_dict(w: MlpWeights, trained_at: Optional[str] = None,
                    config: Optional[TrainConfig] = None) -> dict:
    return {
        "signature_id": w.signature_id,
        "hidden": [list(row) for row in w.hidden],
        "output": [list(w.output)],
        "trained_at": trained_at,
        "config": None if config is None else {
            "learning_rate": config.learning_rate,
            "momentum": config.momentum,
            "goal": config.goal,
            "max_iterations": config.max_iterations,
            "seed": config.seed,
        },
    }


def weights_from_dict(data: dict) -> MlpWeights:
    return MlpWeights(data["signature_id"], tuple(map(tuple, data["hidden"])), tuple(data["output"][0]))


def save_weights(w: MlpWeights, layout: StoreLayout, trained_at: Optional[str] = None,
                 config: Optional[TrainConfig] = None) -> Path:
    path = layout.weights_dir / _file_name(w.signature_id, ".json")
    atomic_write(path, _dump(weights_to_dict(w, trained_at, config)))
    return path


def load_weight_record(layout: StoreLayout, signature_id: str) -> dict:
    path = layout.weights_dir / _file_name(signature_id, ".json")
    data = _load_json(path)
    try:
        weights_from_dict(data)
    except (KeyError, TypeError, IndexError, ModelError) as exc:
        raise StoreError(path, f"malformed weight file ({exc!r})") from None
    return data


def load_weights(layout: StoreLayout, signature_id: str) -> MlpWeights:
    return weights_from_dict(load_weight_record(layout, signature_id))


class WeightsDir(Mapping):
    """Read-only mapping signature_id -> MlpWeights over a weights directory."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self._cache: dict[str, MlpWeights] = {}

    def __getitem__(self, signature_id: str) -> MlpWeights:
        if signature_id not in self._cache:
            path = self.directory / _file_name(signature_id, ".json")
            if not path.exists():
                raise KeyError(signature_id)
            data = _load_json(path)
            try:
                self._cache[signature_id] = weights_from_dict(data)
            except (KeyError, TypeError, IndexError, ModelError) as exc:
                raise StoreError(path, f"malformed weight file ({exc!r})") from None
        return self._cache[signature_id]

    def __iter__(self):
        return iter(sorted(p.stem for p in self.directory.glob("*.json")))

    def __len__(self) -> int:
        return sum(1 for _ in self)


# -- meta-alerts ------------------------------------------------------------

def meta_to_record(m: MetaAlert) -> dict:
    return {
        "meta_id": m.meta_id,
        "signature_id": m.signature_id,
        "src_ip": m.socket.src_ip,
        "src_port": m.socket.src_port,
        "dst_ip": m.socket.dst_ip,
        "dst_port": m.socket.dst_port,
        "window_start": format_timestamp(m.window_start),
        "alerted": list(m.alerted),
        "silent": list(m.silent),
        "sessions": list(m.sessions),
        "open": m.open,
        "ptrue": m.ptrue,
        "pfalse": m.pfalse,
        "tag": m.tag.value,
        "label": None if m.label is None else m.label.value,
    }


def meta_from_record(rec: dict) -> MetaAlert:
    meta = MetaAlert(
        meta_id=rec["meta_id"],
        signature_id=rec["signature_id"],
        socket=SocketPair(rec["src_ip"], rec["src_port"], rec["dst_ip"], rec["dst_port"]),
        window_start=parse_timestamp(rec["window_start"]),
        alerted=list(rec["alerted"]),
        silent=list(rec["silent"]),
        sessions=list(rec["sessions"]),
        open=bool(rec["open"]),
        ptrue=rec["ptrue"],
        pfalse=rec["pfalse"],
        tag=Tag(rec["tag"]),
        label=None if rec.get("label") is None else Label(rec["label"]),
    )
    meta.validate()
    return meta


def dump_metas(metas: Iterable[MetaAlert]) -> str:
    return "".join(json.dumps(meta_to_record(m)) + "\n" for m in metas)


def write_metas(metas: Iterable[MetaAlert], path) -> None:
    atomic_write(Path(path), dump_metas(metas))


def read_metas(path) -> list[MetaAlert]:
    path = Path(path)
    metas = []
    try:
        fh = open(path, encoding="utf-8")
    except FileNotFoundError:
        raise NotFoundError(path, "not found") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                metas.append(meta_from_record(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise StoreError(path, f"line {lineno}: {exc}") from None
    return metas


def save_metas(metas: Iterable[MetaAlert], layout: StoreLayout, name: str = "metas") -> Path:
    path = layout.metas_dir / _file_name(name, ".jsonl")
    write_metas(metas, path)
    return path


def load_metas(layout: StoreLayout, name: str = "metas") -> list[MetaAlert]:
    return read_metas(layout.metas_dir / _file_name(name, ".jsonl"))


# -- convergence history ----------------------------------------------------

def format_history(history: Iterable[float]) -> str:
    return "".join(f"{i}\t{pi!r}\n" for i, pi in enumerate(history, start=1))


def save_history(history: Iterable[float], layout: StoreLayout, signature_id: str) -> Path:
    path = layout.history_dir / _file_name(signature_id, ".tsv")
    atomic_write(path, format_history(history))
    return path


def load_history(layout: StoreLayout, signature_id: str) -> list[float]:
    path = layout.history_dir / _file_name(signature_id, ".tsv")
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise NotFoundError(path, "not found") from None
    try:
        return [float(line.split("\t")[1]) for line in lines if line]
    except (IndexError, ValueError) as exc:
        raise StoreError(path, f"malformed history ({exc})") from None


def save_run_info(info: dict, layout: StoreLayout) -> None:
    atomic_write(layout.run_info, _dump(info))


def load_run_info(layout: StoreLayout) -> dict:
    return _load_json(layout.run_info)
