"""
Shared resources for every command: device, seeded generators and models
loaded from checkpoints.
"""
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import torch

from pathogan.config import RunConfig, config_from_echo
from pathogan.models.pathogan import ROLES, PathoGAN
from pathogan.services.checkpoint import CheckpointError, load_checkpoint

logger = logging.getLogger(__name__)


def get_device(name: str = "auto") -> torch.device:
    if name == "auto":
        return torch.device("cuda" if torch.cuda.is_available() else "cpu")
    if name == "cuda" and not torch.cuda.is_available():
        logger.warning("CUDA requested but not available, using the CPU")
        return torch.device("cpu")
    return torch.device(name)


def make_generator(seed: int, device: torch.device = torch.device("cpu")) -> torch.Generator:
    return torch.Generator(device=device).manual_seed(seed)


def load_model(
    path: Path, device: Optional[str] = None
) -> Tuple[PathoGAN, RunConfig, Dict[str, Any]]:
    """
    Model in eval mode, the configuration it was trained with, and the raw checkpoint.

    device defaults to train.device of that configuration.
    """
    payload = load_checkpoint(path)
    config = config_from_echo(payload["config"])
    model = PathoGAN.from_config(config)
    dtype = torch.float64 if payload.get("dtype") == "float64" else torch.float32
    model = model.to(device=get_device(device or config.train.device), dtype=dtype)
    try:
        for role in ROLES:
            model.nets[role].load_state_dict(payload["networks"][role])
    except RuntimeError as e:
        raise CheckpointError(f"Checkpoint {path} does not match its own configuration: {e}") from e
    model.eval()
    logger.info("Loaded %s (epoch %d, step %d)", path, payload["epoch"], payload["step"])
    return model, config, payload
