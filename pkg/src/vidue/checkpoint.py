"""Self-describing checkpoint archives.

A checkpoint is a zip holding one .npy entry per named array plus a
meta.json with the format version, the full run configuration, per-array
shape/dtype/digest records, and an overall checksum.  Loading verifies every
digest, so a corrupted byte is detected before any parameter is used.
Writes are atomic (temp file + rename).
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import tempfile
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import ModelSpec, TrainConfig, from_dict, to_dict
from .errors import ConfigError, DataError
from .model import RestorationModel, build_model

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    version: int
    config: dict
    params: dict[str, np.ndarray]
    optimizer: dict[str, np.ndarray] = field(default_factory=dict)

    def model_spec(self) -> ModelSpec:
        if "model" not in self.config:
            raise ConfigError("checkpoint config carries no model spec")
        return from_dict(ModelSpec, self.config["model"])


def _digest(arr: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(str(arr.dtype).encode())
    h.update(str(arr.shape).encode())
    h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.save(buf, arr, allow_pickle=False)
    return buf.getvalue()


def save_checkpoint(
    path: str | Path,
    params: dict[str, np.ndarray],
    config: dict,
    optimizer: dict[str, np.ndarray] | None = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    groups = {"params": params, "optim": optimizer or {}}
    meta = {"version": FORMAT_VERSION, "config": config}
    digests = []
    for group, arrays in groups.items():
        records = []
        for name in sorted(arrays):
            arr = np.asarray(arrays[name])
            d = _digest(arr)
            records.append(
                {"name": name, "shape": list(arr.shape), "dtype": str(arr.dtype), "sha256": d}
            )
            digests.append(d)
        meta[group] = records
    meta["checksum"] = hashlib.sha256("".join(digests).encode()).hexdigest()

    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    os.close(fd)
    try:
        with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_DEFLATED) as zf:
            zf.writestr("meta.json", json.dumps(meta, indent=2))
            for group, arrays in groups.items():
                for name in sorted(arrays):
                    zf.writestr(f"{group}/{name}.npy", _npy_bytes(np.asarray(arrays[name])))
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"checkpoint {path} not found")
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json"))
            if meta.get("version") != FORMAT_VERSION:
                raise ConfigError(
                    f"checkpoint format {meta.get('version')} unsupported "
                    f"(expected {FORMAT_VERSION})"
                )
            groups = {}
            digests = []
            for group in ("params", "optim"):
                arrays = {}
                for record in meta.get(group, []):
                    raw = zf.read(f"{group}/{record['name']}.npy")
                    arr = np.load(io.BytesIO(raw), allow_pickle=False)
                    d = _digest(arr)
                    if d != record["sha256"]:
                        raise DataError(
                            f"checksum mismatch for {group}/{record['name']}: "
                            "checkpoint is corrupted"
                        )
                    arrays[record["name"]] = arr
                    digests.append(d)
                groups[group] = arrays
            overall = hashlib.sha256("".join(digests).encode()).hexdigest()
            if overall != meta.get("checksum"):
                raise DataError("overall checksum mismatch: checkpoint is corrupted")
    except zipfile.BadZipFile as exc:
        raise DataError(f"checkpoint {path} is not a valid archive") from exc
    except KeyError as exc:
        raise DataError(f"checkpoint {path} is missing entry {exc}") from exc
    return Checkpoint(
        version=meta["version"],
        config=meta["config"],
        params=groups["params"],
        optimizer=groups["optim"],
    )


# ---------------------------------------------------------------------------
# Model-level helpers


def state_arrays(module: torch.nn.Module) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy() for k, v in module.state_dict().items()}


def optimizer_arrays(optimizer: torch.optim.Optimizer) -> dict[str, np.ndarray]:
    out = {}
    for gi, group in enumerate(optimizer.state_dict()["state"].items()):
        pid, state = group
        for key, val in state.items():
            if isinstance(val, torch.Tensor):
                out[f"{pid}/{key}"] = val.detach().cpu().numpy()
            else:
                out[f"{pid}/{key}"] = np.asarray(val)
    return out


def save_model_checkpoint(
    path: str | Path,
    model: RestorationModel,
    train_config: TrainConfig | None = None,
    optimizer: torch.optim.Optimizer | None = None,
    extra_config: dict | None = None,
) -> Path:
    config = {"model": to_dict(model.spec)}
    if train_config is not None:
        config["train"] = to_dict(train_config)
        config["preset"] = train_config.preset
    if extra_config:
        config.update(extra_config)
    opt_arrays = optimizer_arrays(optimizer) if optimizer is not None else None
    return save_checkpoint(path, state_arrays(model), config, optimizer=opt_arrays)


def load_model_checkpoint(path: str | Path, expect_preset: str | None = None) -> RestorationModel:
    ckpt = load_checkpoint(path)
    if expect_preset is not None:
        found = ckpt.config.get("preset")
        if found is not None and found != expect_preset:
            raise ConfigError(
                f"checkpoint was trained with preset {found!r}, refusing to load it "
                f"into a {expect_preset!r} model"
            )
    model = build_model(ckpt.model_spec())
    load_into_module(model, ckpt.params)
    model.eval()
    return model


def load_into_module(module: torch.nn.Module, params: dict[str, np.ndarray]) -> None:
    state = {k: torch.from_numpy(np.ascontiguousarray(v)) for k, v in params.items()}
    expected = module.state_dict()
    missing = set(expected) - set(state)
    unexpected = set(state) - set(expected)
    if missing or unexpected:
        raise ConfigError(
            f"parameter names do not match the instantiated model "
            f"(missing {sorted(missing)[:3]}..., unexpected {sorted(unexpected)[:3]}...)"
            if len(missing) + len(unexpected) > 6
            else f"parameter names do not match (missing {sorted(missing)}, "
            f"unexpected {sorted(unexpected)})"
        )
    for name, tensor in state.items():
        if tuple(tensor.shape) != tuple(expected[name].shape):
            raise ConfigError(
                f"shape mismatch for {name}: checkpoint {tuple(tensor.shape)}, "
                f"model {tuple(expected[name].shape)}"
            )
    module.load_state_dict(state)
