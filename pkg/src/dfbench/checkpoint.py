"""Self-describing checkpoint container.

A checkpoint is a zip archive holding:

* ``meta.json`` -- format name, version integer, config echo, epoch counter,
  metric history, and per-array descriptors (shape, dtype, sha256 of the raw
  bytes);
* one ``arrays/<name>.npy`` entry per tensor (model weights under ``model/``,
  optimizer state under ``optim/``).

Raw bytes are stored unmodified, so a save/load round trip reproduces every
weight bit-for-bit. Checksums and the version field make truncation,
corruption and format drift explicit errors.
"""

from __future__ import annotations

import hashlib
import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

FORMAT_NAME = "dfbench-checkpoint"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    """Raised for unreadable, corrupt or unsupported checkpoint files."""


@dataclass
class Checkpoint:
    """Deserialized checkpoint: named arrays plus metadata."""

    weights: dict[str, np.ndarray]
    optimizer: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    epoch: int = 0
    history: list = field(default_factory=list)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.save(buf, arr, allow_pickle=False)
    return buf.getvalue()


def _tensor_state(module: torch.nn.Module) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy() for k, v in module.state_dict().items()}


def _optimizer_arrays(optimizer: torch.optim.Optimizer) -> tuple[dict, dict[str, np.ndarray]]:
    """Split optimizer state into JSON-safe scalars and named arrays."""
    state = optimizer.state_dict()
    arrays: dict[str, np.ndarray] = {}
    meta_state: dict[str, dict] = {}
    for pid, entry in state["state"].items():
        meta_entry = {}
        for key, value in entry.items():
            if isinstance(value, torch.Tensor):
                if value.dim() == 0:
                    meta_entry[key] = {"scalar_tensor": value.item()}
                else:
                    name = f"{pid}/{key}"
                    arrays[name] = value.detach().cpu().numpy()
                    meta_entry[key] = {"array": name}
            else:
                meta_entry[key] = {"value": value}
        meta_state[str(pid)] = meta_entry
    meta = {"param_groups": state["param_groups"], "state": meta_state}
    return meta, arrays


def _rebuild_optimizer_state(meta: dict, arrays: dict[str, np.ndarray]) -> dict:
    state = {}
    for pid, entry in meta["state"].items():
        rebuilt = {}
        for key, desc in entry.items():
            if "array" in desc:
                rebuilt[key] = torch.from_numpy(arrays[desc["array"]].copy())
            elif "scalar_tensor" in desc:
                rebuilt[key] = torch.tensor(desc["scalar_tensor"])
            else:
                rebuilt[key] = desc["value"]
        state[int(pid)] = rebuilt
    return {"param_groups": meta["param_groups"], "state": state}


def save_checkpoint(
    path: str | Path,
    model: torch.nn.Module,
    optimizer: Optional[torch.optim.Optimizer] = None,
    config: Optional[dict] = None,
    epoch: int = 0,
    history: Optional[list] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays: dict[str, np.ndarray] = {
        f"model/{k}": v for k, v in _tensor_state(model).items()
    }
    optim_meta: dict = {}
    if optimizer is not None:
        optim_meta, optim_arrays = _optimizer_arrays(optimizer)
        arrays.update({f"optim/{k}": v for k, v in optim_arrays.items()})
    descriptors = {}
    payloads = {}
    for name, arr in arrays.items():
        data = _npy_bytes(arr)
        payloads[name] = data
        descriptors[name] = {
            "shape": list(arr.shape),
            "dtype": str(arr.dtype),
            "sha256": _sha256(data),
        }
    meta = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "config": config or {},
        "epoch": epoch,
        "history": history or [],
        "optimizer": optim_meta,
        "arrays": descriptors,
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        zf.writestr("meta.json", json.dumps(meta, indent=1))
        for name, data in payloads.items():
            zf.writestr(f"arrays/{name}.npy", data)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    try:
        with zipfile.ZipFile(path, "r") as zf:
            try:
                meta = json.loads(zf.read("meta.json"))
            except KeyError as exc:
                raise CheckpointError(f"{path}: missing meta.json") from exc
            if meta.get("format") != FORMAT_NAME:
                raise CheckpointError(f"{path}: not a {FORMAT_NAME} file")
            if meta.get("version") != FORMAT_VERSION:
                raise CheckpointError(
                    f"{path}: unsupported checkpoint version {meta.get('version')!r} "
                    f"(supported: {FORMAT_VERSION})"
                )
            arrays: dict[str, np.ndarray] = {}
            for name, desc in meta["arrays"].items():
                data = zf.read(f"arrays/{name}.npy")
                if _sha256(data) != desc["sha256"]:
                    raise CheckpointError(f"{path}: checksum mismatch for {name!r}")
                arrays[name] = np.load(io.BytesIO(data), allow_pickle=False)
    except (zipfile.BadZipFile, OSError, KeyError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt or unreadable checkpoint: {exc}") from exc
    weights = {
        name[len("model/"):]: arr
        for name, arr in arrays.items()
        if name.startswith("model/")
    }
    optim_arrays = {
        name[len("optim/"):]: arr
        for name, arr in arrays.items()
        if name.startswith("optim/")
    }
    optimizer = {}
    if meta.get("optimizer"):
        optimizer = _rebuild_optimizer_state(meta["optimizer"], optim_arrays)
    return Checkpoint(
        weights=weights,
        optimizer=optimizer,
        config=meta.get("config", {}),
        epoch=meta.get("epoch", 0),
        history=meta.get("history", []),
    )


def load_into(
    ckpt: Checkpoint,
    model: torch.nn.Module,
    optimizer: Optional[torch.optim.Optimizer] = None,
) -> None:
    """Copy checkpoint weights (and optimizer state, if present) into place."""
    state = {k: torch.from_numpy(v.copy()) for k, v in ckpt.weights.items()}
    model.load_state_dict(state)
    if optimizer is not None and ckpt.optimizer:
        optimizer.load_state_dict(ckpt.optimizer)


def load_named_weights(module: torch.nn.Module, path: str | Path) -> list[str]:
    """Pretrained-weight hook: copy arrays from a checkpoint into a module by
    layer name, skipping names the module does not have. Returns the names
    actually loaded.
    """
    ckpt = load_checkpoint(path)
    own = module.state_dict()
    loaded = []
    for name, arr in ckpt.weights.items():
        if name in own and tuple(own[name].shape) == arr.shape:
            own[name] = torch.from_numpy(arr.copy())
            loaded.append(name)
    module.load_state_dict(own)
    return loaded
