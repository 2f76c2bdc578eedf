"""Binary policy checkpoints.

Layout (little-endian)::

    b"MRRL" | u32 format version | u32 metadata length | metadata JSON | float32 payload

The payload holds, in order, actor (W1, b1, W2, b2, W3, b3), log_std and
critic (W1, b1, W2, b2, W3, b3), each flattened row-major with weights
shaped ``(fan_in, fan_out)``.
"""
from __future__ import annotations

import hashlib
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..sensing import OBS_DIM, OBS_VERSION
from .mlp import MlpParams
from .policy import PolicyParams

MAGIC = b"MRRL"
FORMAT_VERSION = 1
_HEAD = struct.Struct("<4sII")


class CheckpointError(Exception):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class PolicyCheckpoint:
    policy: PolicyParams
    step: int = 0
    config: dict = field(default_factory=dict)
    normalization: dict = field(default_factory=lambda: {
        "positions": "scene bounds center/half-extent", "ray_length": 5.0, "user_distance": 10.0, "max_speed": 3.0})
    obs_version: int = OBS_VERSION

    @property
    def obs_length(self) -> int:
        return self.policy.obs_dim


def _layout(policy: PolicyParams) -> list[list[int]]:
    return [list(a.shape) for a in policy.arrays()]


def to_bytes(ckpt: PolicyCheckpoint) -> bytes:
    arrays = ckpt.policy.arrays()
    payload = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for a in arrays)
    meta = {
        "obs_length": ckpt.obs_length,
        "obs_version": ckpt.obs_version,
        "actor_dims": ckpt.policy.actor.dims,
        "critic_dims": ckpt.policy.critic.dims,
        "shapes": _layout(ckpt.policy),
        "step": int(ckpt.step),
        "normalization": ckpt.normalization,
        "config": ckpt.config,
        "payload_bytes": len(payload),
        "payload_crc32": zlib.crc32(payload),
    }
    blob = json.dumps(meta, sort_keys=True).encode()
    return _HEAD.pack(MAGIC, FORMAT_VERSION, len(blob)) + blob + payload


def save_checkpoint(ckpt: PolicyCheckpoint, path) -> str:
    """Write the checkpoint; returns its sha256 hex digest."""
    data = to_bytes(ckpt)
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)
    return hashlib.sha256(data).hexdigest()


def read_metadata(data: bytes) -> tuple[dict, int]:
    if len(data) < _HEAD.size:
        raise CheckpointError("header", "file too short for checkpoint header (corrupt header)")
    magic, version, meta_len = _HEAD.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError("header", f"bad magic {magic!r} (corrupt header)")
    if version != FORMAT_VERSION:
        raise CheckpointError("version", f"unsupported format version {version}, expected {FORMAT_VERSION}")
    end = _HEAD.size + meta_len
    if len(data) < end:
        raise CheckpointError("header", "metadata block truncated (corrupt header)")
    try:
        meta = json.loads(data[_HEAD.size:end].decode())
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CheckpointError("header", "metadata is not valid JSON (corrupt header)") from None
    if len(data) - end != meta.get("payload_bytes"):
        raise CheckpointError("header", "payload length disagrees with header (corrupt header)")
    return meta, end


def from_bytes(data: bytes, expected_obs: int = OBS_DIM) -> PolicyCheckpoint:
    meta, offset = read_metadata(data)
    if meta.get("obs_length") != expected_obs:
        raise CheckpointError("obs_length", f"checkpoint observes {meta.get('obs_length')} values, "
                              f"this build produces {expected_obs} (shape mismatch)")
    if meta.get("obs_version") != OBS_VERSION:
        raise CheckpointError("obs_version", f"observation layout {meta.get('obs_version')} != {OBS_VERSION}")
    payload = data[offset:]
    if zlib.crc32(payload) != meta.get("payload_crc32"):
        raise CheckpointError("payload", "checksum mismatch")
    shapes = [tuple(s) for s in meta["shapes"]]
    arrays, pos = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        arrays.append(np.frombuffer(payload, "<f4", size, pos).reshape(shape).astype(np.float32))
        pos += 4 * size
    n_actor = 2 * (len(meta["actor_dims"]) - 1)
    actor = MlpParams(arrays[0:n_actor:2], arrays[1:n_actor:2])
    log_std = arrays[n_actor]
    critic_arrays = arrays[n_actor + 1:]
    critic = MlpParams(critic_arrays[0::2], critic_arrays[1::2])
    if actor.dims != meta["actor_dims"] or critic.dims != meta["critic_dims"]:
        raise CheckpointError("shapes", "layer shapes disagree with recorded dims")
    return PolicyCheckpoint(PolicyParams(actor, log_std, critic), meta["step"], meta["config"],
                            meta["normalization"], meta["obs_version"])


def load_checkpoint(path, expected_obs: int = OBS_DIM) -> PolicyCheckpoint:
    return from_bytes(Path(path).read_bytes(), expected_obs)


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
