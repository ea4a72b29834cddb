"""
Checkpoint Repository
Versioned binary container for network, target, optimizer and noise-generator tensors.

Layout (little-endian):
    magic  b"MXEVCKPT"
    u32    format version
    u32    metadata length, then UTF-8 JSON metadata
    u32    entry count
    per entry: u16 name length, name, u8 ndim, u32 per dim, u64 element count
    payloads: float32 values of every entry in manifest order
"""

import json
import struct
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np
import torch

from app.core.exceptions import CheckpointError
from app.core.logging import get_logger
from app.repositories.base import FileRepository
from app.services.network import RainbowNetwork
from app.services.trainer import RainbowTrainer

logger = get_logger(__name__)

MAGIC = b"MXEVCKPT"
FORMAT_VERSION = 1
LATEST = "latest.ckpt"
FINAL = "final.ckpt"
# generator bytes are stored as float32 like every other entry
NOISE_ENTRY = "noise.online"


def encode_checkpoint(tensors: Mapping[str, Any], metadata: Mapping[str, Any]) -> bytes:
    """Serialize named arrays and JSON metadata."""
    meta = json.dumps(dict(metadata), sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(meta)), meta]
    arrays = []
    parts.append(struct.pack("<I", len(tensors)))
    for name, value in tensors.items():
        if isinstance(value, torch.Tensor):
            value = value.detach().cpu().numpy()
        array = np.asarray(value, dtype="<f4")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", array.ndim))
        parts.append(struct.pack(f"<{array.ndim}I", *array.shape))
        parts.append(struct.pack("<Q", array.size))
        arrays.append(array)
    parts.extend(np.ascontiguousarray(a).tobytes() for a in arrays)
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise CheckpointError(
                "Checkpoint is truncated",
                details={"offset": self.offset, "wanted": size, "length": len(self.data)},
            )
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> Tuple[Any, ...]:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(data: bytes) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """Inverse of ``encode_checkpoint``."""
    reader = _Reader(data)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("Not a checkpoint file (bad magic)")
    version, meta_length = reader.unpack("<II")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"Unsupported checkpoint version {version}",
            details={"supported": FORMAT_VERSION},
        )
    try:
        metadata = json.loads(reader.take(meta_length).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError("Checkpoint metadata is unreadable", details={"error": str(e)})

    (count,) = reader.unpack("<I")
    manifest = []
    for _ in range(count):
        (name_length,) = reader.unpack("<H")
        name = reader.take(name_length).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I") if ndim else ()
        (elements,) = reader.unpack("<Q")
        if int(np.prod(shape, dtype=np.int64)) != elements:
            raise CheckpointError(
                f"Manifest entry '{name}' disagrees with its shape",
                details={"shape": list(shape), "elements": elements},
            )
        manifest.append((name, tuple(shape), elements))

    tensors: Dict[str, np.ndarray] = {}
    for name, shape, elements in manifest:
        payload = reader.take(4 * elements)
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    if reader.offset != len(data):
        raise CheckpointError("Trailing bytes after checkpoint payloads")
    return metadata, tensors


def _prefixed(prefix: str, state: Mapping[str, torch.Tensor]) -> Dict[str, torch.Tensor]:
    return {f"{prefix}.{name}": value for name, value in state.items()}


def _strip(prefix: str, tensors: Mapping[str, np.ndarray]) -> Dict[str, np.ndarray]:
    start = len(prefix) + 1
    return {name[start:]: value for name, value in tensors.items() if name.startswith(prefix + ".")}


def _load_state(net: RainbowNetwork, arrays: Mapping[str, np.ndarray]) -> None:
    reference = net.state_dict()
    missing = sorted(set(reference) - set(arrays))
    unexpected = sorted(set(arrays) - set(reference))
    if missing or unexpected:
        raise CheckpointError(
            "Checkpoint does not match the network",
            details={"missing": missing, "unexpected": unexpected},
        )
    state = {}
    for name, ref in reference.items():
        value = torch.from_numpy(np.asarray(arrays[name], dtype=np.float32))
        if tuple(value.shape) != tuple(ref.shape):
            raise CheckpointError(
                f"Shape mismatch for '{name}'",
                details={"expected": list(ref.shape), "found": list(value.shape)},
            )
        if ref.dtype.is_floating_point:
            state[name] = value.to(ref.dtype)
        else:
            state[name] = value.round().to(ref.dtype)
    net.load_state_dict(state)


class CheckpointRepository(FileRepository):
    """Reads and writes checkpoints below ``<run>/checkpoints``."""

    def __init__(self, run_dir: str | Path):
        super().__init__(Path(run_dir) / "checkpoints")

    def path(self, name: str = LATEST) -> Path:
        return self.root / name

    def save_network(self, network: RainbowNetwork, name: str = FINAL,
                     extra: Optional[Dict[str, Any]] = None) -> Path:
        """Write only the online network (enough for evaluation)."""
        self.ensure_dir()
        metadata = {"kind": "network", **network.describe(), **(extra or {})}
        data = encode_checkpoint(_prefixed("online", network.state_dict()), metadata)
        path = self.write_bytes_atomic(self.path(name), data)
        logger.info("Checkpoint written", path=str(path), kind="network")
        return path

    def save_training(self, trainer: RainbowTrainer, counters: Dict[str, Any],
                      name: str = LATEST,
                      sampler_state: Optional[Dict[str, Any]] = None) -> Path:
        """Write online, target, optimizer moments, noise generator and loop counters."""
        self.ensure_dir()
        tensors: Dict[str, torch.Tensor] = {}
        tensors.update(_prefixed("online", trainer.online.state_dict()))
        tensors.update(_prefixed("target", trainer.target.state_dict()))
        tensors.update(_prefixed("optim", trainer.optimizer_state()))
        tensors[NOISE_ENTRY] = trainer.online.noise_state()
        metadata = {
            "kind": "training",
            **trainer.online.describe(),
            "sampler_state": sampler_state,
            "counters": {
                **counters,
                "update_count": trainer.update_count,
                "updates_since_sync": trainer.dual.updates_since_sync,
                "syncs": trainer.dual.syncs,
            },
        }
        path = self.write_bytes_atomic(self.path(name), encode_checkpoint(tensors, metadata))
        logger.info("Checkpoint written", path=str(path), kind="training", **counters)
        return path

    @staticmethod
    def read(path: str | Path) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
        path = Path(path)
        try:
            data = path.read_bytes()
        except OSError as e:
            raise CheckpointError(f"Cannot read checkpoint '{path}'", details={"error": str(e)})
        return decode_checkpoint(data)

    @classmethod
    def load_network(cls, path: str | Path) -> RainbowNetwork:
        """Rebuild the online network stored in ``path``."""
        metadata, tensors = cls.read(path)
        try:
            network = RainbowNetwork.from_description(metadata)
        except (KeyError, ValueError) as e:
            raise CheckpointError("Checkpoint metadata lacks the network shape",
                                  details={"error": str(e)})
        _load_state(network, _strip("online", tensors))
        network.eval()
        return network

    @classmethod
    def restore_training(cls, path: str | Path, trainer: RainbowTrainer) -> Dict[str, Any]:
        """Load a training checkpoint into ``trainer``.

        Returns the loop counters, plus ``sampler_state`` when one was stored.
        """
        metadata, tensors = cls.read(path)
        if metadata.get("kind") != "training":
            raise CheckpointError("Checkpoint has no training state", details={"path": str(path)})
        _load_state(trainer.online, _strip("online", tensors))
        _load_state(trainer.target, _strip("target", tensors))
        trainer.load_optimizer_state(
            {k: torch.from_numpy(v) for k, v in _strip("optim", tensors).items()}
        )
        if NOISE_ENTRY in tensors:
            trainer.online.set_noise_state(torch.from_numpy(np.rint(tensors[NOISE_ENTRY])))
        counters = dict(metadata["counters"])
        trainer.update_count = int(counters.pop("update_count"))
        trainer.dual.updates_since_sync = int(counters.pop("updates_since_sync"))
        trainer.dual.syncs = int(counters.pop("syncs"))
        if metadata.get("sampler_state") is not None:
            counters["sampler_state"] = metadata["sampler_state"]
        logger.info("Checkpoint restored", path=str(path), update_count=trainer.update_count)
        return counters
