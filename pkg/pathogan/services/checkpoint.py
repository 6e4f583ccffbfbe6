"""
Single-file checkpoints: every network by role, optimizer and replay state,
RNG state, the config echo and the epoch/step counters.
"""
import hashlib
import io
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict

import torch

from pathogan.errors import PathoGANError
from pathogan.models.pathogan import ROLES

logger = logging.getLogger(__name__)

MAGIC = "PATHOGAN-CKPT-1"
REQUIRED_KEYS = ("magic", "networks", "config", "config_hash", "epoch", "step")


class CheckpointError(PathoGANError):
    """Custom exception for checkpoint files"""
    pass


def _dump(record: Dict[str, Any]) -> bytes:
    buffer = io.BytesIO()
    torch.save(record, buffer)
    return buffer.getvalue()


def _read(source: Any) -> Any:
    return torch.load(source, map_location="cpu", weights_only=True)


def encode_checkpoint(payload: Dict[str, Any]) -> bytes:
    record = {"magic": MAGIC, **payload}
    if isinstance(record.get("config"), dict):
        record["config"] = json.dumps(record["config"], sort_keys=True)
    # a decoded graph shares objects exactly where its stream has memo refs,
    # so encoding it again is a fixed point of save -> load -> save
    return _dump(_read(io.BytesIO(_dump(record))))


def save_checkpoint(payload: Dict[str, Any], path: Path) -> Path:
    """Write atomically; the bytes depend only on the payload"""
    path = Path(path)
    data = encode_checkpoint(payload)
    tmp = path.with_name(path.name + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp.write_bytes(data)
        os.replace(tmp, path)
    except OSError as e:
        raise CheckpointError(f"Cannot write checkpoint {path}: {e}") from e
    logger.debug("Saved checkpoint %s (%d bytes)", path, len(data))
    return path


def load_checkpoint(path: Path) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"Checkpoint {path} does not exist")
    try:
        payload = _read(path)
    except Exception as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e
    if not isinstance(payload, dict) or payload.get("magic") != MAGIC:
        found = payload.get("magic") if isinstance(payload, dict) else type(payload).__name__
        raise CheckpointError(f"{path} is not a {MAGIC} checkpoint (found {found!r})")
    missing = [key for key in REQUIRED_KEYS if key not in payload]
    missing += [f"networks.{role}" for role in ROLES if role not in payload["networks"]]
    if missing:
        raise CheckpointError(f"Checkpoint {path} lacks {', '.join(missing)}")
    if isinstance(payload["config"], str):
        try:
            payload["config"] = json.loads(payload["config"])
        except json.JSONDecodeError as e:
            raise CheckpointError(f"Checkpoint {path} has an unreadable config echo: {e}") from e
    return payload


def checkpoint_digest(path: Path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e
