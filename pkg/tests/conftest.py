from pathlib import Path
from typing import Any, Dict

import numpy as np
import pytest
import torch

from pathogan.config import RunConfig, config_from_echo

TINY_ARCH = {
    "encoder": "c3-4,d4,d4,C1-2,Q2F,l(z*i)t,l(2*z)",
    "decoder": "l(i*i)e,l(i*i),F2Q,c3-4,u4,u4,C3-r",
    "zb": "c3-4,d4,R4,u4,C3-r",
    "discriminator": "S4-4l,s4-8l,n4-8l,C4-1",
}


def tiny_echo(run_dir: Path, **sections: Dict[str, Any]) -> Dict[str, Any]:
    """2-channel 8x8 configuration with a 4-dim latent, float64"""
    echo = {
        "data": {"slice_lo": 0, "slice_hi": 3, "counts": {"healthy": 4, "pathological": 4}},
        "augment": {"enabled": False},
        "model": {"n_channels": 2, "image_size": 8, "latent_size": 4},
        "arch": dict(TINY_ARCH),
        "train": {
            "epochs": 1,
            "batch_size": 2,
            "buffer_capacity": 4,
            "float64": True,
            "device": "cpu",
            "run_dir": str(run_dir),
            "log_every": 1,
        },
    }
    for name, values in sections.items():
        echo[name] = {**echo.get(name, {}), **values}
    return echo


def tiny_config(run_dir: Path, **sections: Dict[str, Any]) -> RunConfig:
    return config_from_echo(tiny_echo(run_dir, **sections))


@pytest.fixture
def config(tmp_path) -> RunConfig:
    return tiny_config(tmp_path / "run")


@pytest.fixture
def model(config):
    from pathogan.models.pathogan import PathoGAN

    return PathoGAN.from_config(config).double()


@pytest.fixture
def images():
    """Batch of two 2-channel 8x8 images in [-1, 1]"""
    generator = torch.Generator().manual_seed(7)
    return torch.rand((2, 2, 8, 8), generator=generator, dtype=torch.float64) * 2 - 1


@pytest.fixture
def rng():
    return np.random.default_rng(0)
