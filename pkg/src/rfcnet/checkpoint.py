"""Binary checkpoint format.

Layout:
    bytes 0..7    magic "RFCNETCK"
    bytes 8..11   format version (u32 LE)
    bytes 12..19  JSON header length (u64 LE)
    JSON header   spec echo, epoch, best val mIoU, optimizer metadata,
                  named tensor directory (dtype/shape/offset per tensor)
    raw blob      tensor payloads, little-endian, in directory order

Model parameters and buffers round-trip bit-exactly (raw float32/int64
bytes), so a reloaded network reproduces forward scores bit-identically.
"""

from __future__ import annotations

import base64
import dataclasses
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import BadSpec, DataMissing
from .models import ModelSpec, build

CKPT_MAGIC = b"RFCNETCK"
CKPT_VERSION = 1

_DTYPES = {
    torch.float32: "<f4",
    torch.float64: "<f8",
    torch.int64: "<i8",
    torch.int32: "<i4",
    torch.uint8: "u1",
}
_TORCH_DTYPES = {v: k for k, v in _DTYPES.items()}


@dataclass
class CheckpointMeta:
    spec: ModelSpec
    epoch: int
    best_val_miou: float
    has_optimizer: bool


def _tensor_bytes(t: torch.Tensor) -> tuple[bytes, str, tuple[int, ...]]:
    t = t.detach().cpu().contiguous()
    dtype = _DTYPES[t.dtype]
    return t.numpy().astype(dtype, copy=False).tobytes(), dtype, tuple(t.shape)


def save_checkpoint(path: str | Path, net: torch.nn.Module, optimizer=None,
                    epoch: int = 0, best_val_miou: float = 0.0) -> None:
    spec: ModelSpec = net.spec
    directory = []
    blob = bytearray()

    def add(name: str, tensor: torch.Tensor):
        data, dtype, shape = _tensor_bytes(tensor)
        directory.append({"name": name, "dtype": dtype, "shape": list(shape),
                          "offset": len(blob), "nbytes": len(data)})
        blob.extend(data)

    for name, tensor in net.state_dict().items():
        add(f"model.{name}", tensor)

    optim_meta = None
    if optimizer is not None:
        param_names = [n for n, _ in net.named_parameters()]
        params = [p for _, p in net.named_parameters()]
        optim_meta = {"param_groups": [], "steps": {}}
        state = optimizer.state_dict()["state"]
        id_of = {id(p): i for i, p in enumerate(params)}
        for group in optimizer.param_groups:
            meta_group = {k: v for k, v in group.items() if k != "params"}
            meta_group["params"] = [id_of[id(p)] for p in group["params"]]
            optim_meta["param_groups"].append(meta_group)
        for idx, slot in state.items():
            pname = param_names[idx]
            for key, value in slot.items():
                if torch.is_tensor(value) and value.dim() > 0:
                    add(f"optim.{pname}.{key}", value)
                elif torch.is_tensor(value):
                    optim_meta["steps"][f"{pname}.{key}"] = value.item()
                else:
                    optim_meta["steps"][f"{pname}.{key}"] = value

    header = {
        "spec": dataclasses.asdict(spec),
        "epoch": epoch,
        "best_val_miou": best_val_miou,
        "rng": {"torch": base64.b64encode(
            torch.get_rng_state().numpy().tobytes()).decode("ascii")},
        "optim": optim_meta,
        "tensors": directory,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", CKPT_VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(bytes(blob))


class LoadedCheckpoint:
    def __init__(self, net: torch.nn.Module, meta: CheckpointMeta, header: dict,
                 blob: memoryview):
        self.net = net
        self.meta = meta
        self._header = header
        self._blob = blob

    def _read(self, entry) -> torch.Tensor:
        raw = np.frombuffer(self._blob, dtype=entry["dtype"],
                            count=int(np.prod(entry["shape"])) if entry["shape"] else 1,
                            offset=entry["offset"])
        return torch.from_numpy(raw.copy().reshape(entry["shape"]))

    def restore_optimizer(self, optimizer) -> None:
        """Rebuild Adam moments and step counters saved alongside the model."""
        meta = self._header.get("optim")
        if meta is None:
            raise DataMissing("checkpoint holds no optimizer state")
        param_names = [n for n, _ in self.net.named_parameters()]
        name_index = {n: i for i, n in enumerate(param_names)}
        entries = {e["name"]: e for e in self._header["tensors"]}
        state: dict[int, dict] = {}
        for key, value in meta["steps"].items():
            pname, field = key.rsplit(".", 1)
            state.setdefault(name_index[pname], {})[field] = torch.tensor(value)
        for name, entry in entries.items():
            if not name.startswith("optim."):
                continue
            pname, field = name[len("optim."):].rsplit(".", 1)
            state.setdefault(name_index[pname], {})[field] = self._read(entry)
        groups = []
        for group in meta["param_groups"]:
            group = dict(group)
            for key, value in group.items():
                if key != "params" and isinstance(value, list):
                    group[key] = tuple(value)  # JSON turned tuples into lists
            groups.append(group)
        optimizer.load_state_dict({"state": state, "param_groups": groups})

    def restore_rng(self) -> None:
        raw = base64.b64decode(self._header["rng"]["torch"])
        torch.set_rng_state(torch.from_numpy(np.frombuffer(raw, dtype=np.uint8).copy()))


def load_checkpoint(path: str | Path) -> LoadedCheckpoint:
    path = Path(path)
    if not path.exists():
        raise DataMissing(f"no checkpoint at {path}")
    data = path.read_bytes()
    if data[:8] != CKPT_MAGIC:
        raise BadSpec(f"{path} is not a checkpoint (bad magic)")
    version = struct.unpack("<I", data[8:12])[0]
    if version != CKPT_VERSION:
        raise BadSpec(f"unsupported checkpoint version {version}")
    header_len = struct.unpack("<Q", data[12:20])[0]
    header = json.loads(data[20:20 + header_len].decode("utf-8"))
    blob = memoryview(data)[20 + header_len:]

    spec_fields = dict(header["spec"])
    if spec_fields.get("hidden_kernel_sizes") is not None:
        spec_fields["hidden_kernel_sizes"] = tuple(spec_fields["hidden_kernel_sizes"])
    spec = ModelSpec(**spec_fields)
    net = build(spec)
    state = {}
    for entry in header["tensors"]:
        if entry["name"].startswith("model."):
            raw = np.frombuffer(blob, dtype=entry["dtype"],
                                count=int(np.prod(entry["shape"])) if entry["shape"] else 1,
                                offset=entry["offset"]).copy().reshape(entry["shape"])
            state[entry["name"][len("model."):]] = torch.from_numpy(raw)
    net.load_state_dict(state)
    meta = CheckpointMeta(spec=spec, epoch=header["epoch"],
                          best_val_miou=header["best_val_miou"],
                          has_optimizer=header.get("optim") is not None)
    return LoadedCheckpoint(net=net, meta=meta, header=header, blob=blob)
