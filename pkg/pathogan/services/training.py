"""
Optimization loop: alternating generator/discriminator updates, replay
buffers, CSV logging, checkpoints and resume.
"""
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

import torch
from torch import nn
from tqdm import tqdm

from pathogan.config import RUN_LENGTH_KEYS, RunConfig, dump_toml
from pathogan.errors import PathoGANError
from pathogan.models.domain import Mode
from pathogan.models.pathogan import DISCRIMINATOR_ROLES, PRIOR, ROLES, ZERO, ChannelMismatch, PathoGAN
from pathogan.schemas.losses import LossReport, LossWeights
from pathogan.services.checkpoint import load_checkpoint, save_checkpoint
from pathogan.services.datasets import EpochPairs, TrainingSet, make_loader
from pathogan.services.losses import (
    DirectionLosses,
    cycle_loss,
    gan_loss_d,
    gan_loss_g,
    identity_loss,
    kl_loss,
    relevancy_loss,
    total_objective,
    vae_loss,
)
from pathogan.services.netspec import ShapeMismatch
from pathogan.services.replay import ReplayBuffer

logger = logging.getLogger(__name__)

LOG_NAME = "train_log.csv"
LOCK_NAME = ".lock"
CHECKPOINT_DIR = "checkpoints"
FINAL_NAME = "final.ckpt"
BUFFER_SEED_OFFSET = 1000
LOG_COLUMNS = ["iteration", "epoch", "seconds"] + list(LossReport.model_fields)


class TrainingError(PathoGANError):
    """Custom exception for training runs"""
    pass


class NonFiniteLoss(TrainingError):
    def __init__(self, term: str, values: Dict[str, float]):
        dump = ", ".join(f"{name}={value:.6g}" for name, value in values.items())
        super().__init__(f"Non-finite {term} at this step; terms: {dump}")
        self.term = term
        self.values = values


class ResumeMismatch(TrainingError):
    pass


class RunDirectoryLocked(TrainingError):
    pass


@dataclass
class TrainState:
    model: PathoGAN
    opt_g: torch.optim.Adam
    opt_d: torch.optim.Adam
    buffer_A: ReplayBuffer  # past G_B outputs, judged by disc_A
    buffer_B: ReplayBuffer  # past G_A outputs, judged by disc_B
    generator: torch.Generator
    epoch: int = 0
    step: int = 0

    @property
    def dtype(self) -> torch.dtype:
        return next(self.model.parameters()).dtype

    @property
    def device(self) -> torch.device:
        return next(self.model.parameters()).device


def create_train_state(config: RunConfig, device: Optional[torch.device] = None) -> TrainState:
    device = device or torch.device("cpu")
    train = config.train
    dtype = torch.float64 if train.float64 else torch.float32
    model = PathoGAN.from_config(config).to(device=device, dtype=dtype)
    betas = tuple(train.momentum_pair)
    return TrainState(
        model=model,
        opt_g=torch.optim.Adam(model.generator_parameters(), lr=train.step_size, betas=betas),
        opt_d=torch.optim.Adam(model.discriminator_parameters(), lr=train.step_size, betas=betas),
        buffer_A=ReplayBuffer(train.buffer_capacity, seed=train.seed + BUFFER_SEED_OFFSET),
        buffer_B=ReplayBuffer(train.buffer_capacity, seed=train.seed + BUFFER_SEED_OFFSET + 1),
        generator=torch.Generator(device=device).manual_seed(train.seed),
    )


def _set_requires_grad(modules: List[nn.Module], flag: bool) -> None:
    for module in modules:
        for parameter in module.parameters():
            parameter.requires_grad_(flag)


def _check_finite(report: LossReport, terms: List[str]) -> None:
    values = report.model_dump()
    for term in terms:
        if not math.isfinite(values[term]):
            raise NonFiniteLoss(term, values)


def _check_outputs(outputs: Dict[str, torch.Tensor]) -> None:
    """Reject non-finite generator outputs before any loss term is built from them"""
    values = {name: float(tensor.detach().abs().max()) for name, tensor in outputs.items()}
    for name, value in values.items():
        if not math.isfinite(value):
            raise NonFiniteLoss(name, values)


def _check_gradients(parameters, name: str, report: LossReport) -> None:
    for parameter in parameters:
        if parameter.grad is not None and not torch.isfinite(parameter.grad).all():
            raise NonFiniteLoss(f"{name} gradient", report.model_dump())


def train_step(
    batch_A: torch.Tensor,
    batch_B: torch.Tensor,
    state: TrainState,
    weights: LossWeights,
) -> LossReport:
    """One generator update on the full objective, then one discriminator update"""
    model, generator = state.model, state.generator
    x_A = batch_A.to(device=state.device, dtype=state.dtype)
    x_B = batch_B.to(device=state.device, dtype=state.dtype)
    discriminators = [model.nets[role] for role in DISCRIMINATOR_ROLES]
    identity_delta = PRIOR if weights.identity_delta == "prior" else ZERO

    # generator phase
    _set_requires_grad(discriminators, False)
    hat_a, tilde_a = model.cycle_A(x_A, Mode.TRAIN, generator)
    hat_b, tilde_b = model.cycle_B(x_B, Mode.TRAIN, generator)
    _check_outputs({
        "output_ab": hat_a.output,
        "labelmap_ab": hat_a.labelmap,
        "gamma_mean": hat_a.latent_gamma.mean,
        "gamma_logvar": hat_a.latent_gamma.logvar,
        "output_aba": tilde_a.output,
        "labelmap_aba": tilde_a.labelmap,
        "output_ba": hat_b.output,
        "labelmap_ba": hat_b.labelmap,
        "output_bab": tilde_b.output,
        "labelmap_bab": tilde_b.labelmap,
        "delta_mean": tilde_b.latent_delta.mean,
        "delta_logvar": tilde_b.latent_delta.logvar,
    })
    _, vae_ab = vae_loss(x_A, x_B, hat_a, hat_b, tilde_b, weights)
    _, vae_ba = vae_loss(x_B, x_A, hat_b, hat_a, tilde_a, weights)
    ab = DirectionLosses(
        gan_g=gan_loss_g(model.discriminate("disc_B", hat_a.output)),
        cc=cycle_loss(x_A, tilde_a.output, weights),
        vae=vae_ab,
        idt=identity_loss(
            lambda x: model.generator_A_forward(x, identity_delta, Mode.TRAIN, generator), x_B, weights
        ),
        relevancy=relevancy_loss(x_A, hat_a, weights),
    )
    ba = DirectionLosses(
        gan_g=gan_loss_g(model.discriminate("disc_A", hat_b.output)),
        cc=cycle_loss(x_B, tilde_b.output, weights),
        vae=vae_ba,
        idt=identity_loss(lambda x: model.generator_B_forward(x, Mode.TRAIN, generator), x_A, weights),
        relevancy=relevancy_loss(x_B, hat_b, weights),
    )
    kl = kl_loss(hat_a.latent_gamma, tilde_b.latent_delta)
    total_g, report = total_objective(ab, ba, kl, weights)
    _check_finite(report, [name for name in type(report).model_fields if name not in ("gan_d", "total_d")])

    state.opt_g.zero_grad(set_to_none=True)
    total_g.backward()
    _check_gradients(model.generator_parameters(), "generator", report)
    state.opt_g.step()

    # discriminator phase
    _set_requires_grad(discriminators, True)
    fake_A = state.buffer_A.push_and_pop(hat_b.output.detach())
    fake_B = state.buffer_B.push_and_pop(hat_a.output.detach())
    total_d = (
        gan_loss_d(model.discriminate("disc_A", x_A), model.discriminate("disc_A", fake_A))
        + gan_loss_d(model.discriminate("disc_B", x_B), model.discriminate("disc_B", fake_B))
    )
    report.gan_d = report.total_d = float(total_d.detach())
    _check_finite(report, ["gan_d"])

    state.opt_d.zero_grad(set_to_none=True)
    total_d.backward()
    _check_gradients(model.discriminator_parameters(), "discriminator", report)
    state.opt_d.step()

    state.step += 1
    return report


def snapshot(state: TrainState, config: RunConfig) -> Dict[str, Any]:
    return {
        "networks": {role: state.model.nets[role].state_dict() for role in ROLES},
        "optimizers": {"generator": state.opt_g.state_dict(), "discriminator": state.opt_d.state_dict()},
        "buffers": {"A": state.buffer_A.state_dict(), "B": state.buffer_B.state_dict()},
        "rng": {"train": state.generator.get_state()},
        "dtype": str(state.dtype).replace("torch.", ""),
        "config": config.echo(),
        "config_hash": config.config_hash,
        "resume_hash": config.resume_hash,
        "epoch": state.epoch,
        "step": state.step,
    }


def restore_state(state: TrainState, payload: Dict[str, Any]) -> None:
    for role in ROLES:
        state.model.nets[role].load_state_dict(payload["networks"][role])
    state.opt_g.load_state_dict(payload["optimizers"]["generator"])
    state.opt_d.load_state_dict(payload["optimizers"]["discriminator"])
    state.buffer_A.load_state_dict(payload["buffers"]["A"])
    state.buffer_B.load_state_dict(payload["buffers"]["B"])
    state.generator.set_state(payload["rng"]["train"])
    state.epoch = payload["epoch"]
    state.step = payload["step"]


class RunLock:
    """Exclusive lock file; one training process per run directory"""

    def __init__(self, run_dir: Path):
        self.path = Path(run_dir) / LOCK_NAME

    def __enter__(self) -> "RunLock":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError as e:
            raise RunDirectoryLocked(
                f"{self.path.parent} is in use by another run (remove {self.path} if that run is gone)"
            ) from e
        with os.fdopen(fd, "w") as handle:
            handle.write(str(os.getpid()))
        return self

    def __exit__(self, *exc) -> None:
        self.path.unlink(missing_ok=True)


class TrainLog:
    """train_log.csv, one row per step"""

    def __init__(self, path: Path, keep_until: Optional[int] = None):
        self.path = Path(path)
        rows = []
        if keep_until is not None and self.path.exists():
            with open(self.path, newline="") as handle:
                rows = [row for row in csv.DictReader(handle) if int(row["iteration"]) <= keep_until]
        self.handle = open(self.path, "w", newline="")
        self.writer = csv.DictWriter(self.handle, fieldnames=LOG_COLUMNS)
        self.writer.writeheader()
        self.writer.writerows(rows)
        self.handle.flush()

    def write(self, iteration: int, epoch: int, seconds: float, report: LossReport) -> None:
        self.writer.writerow({"iteration": iteration, "epoch": epoch, "seconds": f"{seconds:.3f}", **report.model_dump()})
        self.handle.flush()

    def close(self) -> None:
        self.handle.close()


def read_train_log(path: Path) -> List[Dict[str, float]]:
    with open(path, newline="") as handle:
        return [{key: float(value) for key, value in row.items()} for row in csv.DictReader(handle)]


def check_training_set(training_set: TrainingSet, config: RunConfig) -> None:
    expected = (config.model.n_channels, config.model.image_size, config.model.image_size)
    for s in training_set.healthy[:1] + training_set.pathological[:1]:
        if s.data.shape[0] != expected[0]:
            raise ChannelMismatch(f"Slices have {s.data.shape[0]} channel(s), model.n_channels={expected[0]}")
        if tuple(s.data.shape) != expected:
            raise ShapeMismatch(f"Slices are {tuple(s.data.shape)}, configuration expects {expected}")


def run_training(
    config: RunConfig,
    training_set: TrainingSet,
    resume: Optional[Path] = None,
    device: Optional[torch.device] = None,
) -> Path:
    """Train to config.train.epochs; returns the final checkpoint path"""
    train = config.train
    run_dir = Path(train.run_dir)
    check_training_set(training_set, config)

    with RunLock(run_dir):
        state = create_train_state(config, device)
        if resume is not None:
            payload = load_checkpoint(resume)
            if payload.get("resume_hash") != config.resume_hash:
                raise ResumeMismatch(
                    f"Checkpoint {resume} was written with a different configuration "
                    f"(only {', '.join(RUN_LENGTH_KEYS)} may change on resume)"
                )
            restore_state(state, payload)
            logger.info("Resuming from %s at epoch %d, step %d", resume, state.epoch, state.step)

        (run_dir / "config.json").write_text(json.dumps(config.echo(), indent=2, sort_keys=True) + "\n")
        (run_dir / "config.toml").write_text(dump_toml(config))

        pairs = EpochPairs(training_set, config.augment, train.seed, dtype=state.dtype)
        loader = make_loader(pairs, train.batch_size, config.data.workers)
        log = TrainLog(run_dir / LOG_NAME, keep_until=state.step if resume is not None else None)
        started = time.perf_counter()
        logger.info(
            "Training %d epoch(s) of %d step(s) on %s (%s)",
            train.epochs, len(loader), state.device, str(state.dtype).replace("torch.", ""),
        )
        try:
            for epoch in range(state.epoch, train.epochs):
                pairs.set_epoch(epoch)
                progress = tqdm(loader, desc=f"epoch {epoch + 1}/{train.epochs}", disable=not sys.stderr.isatty())
                for x_A, x_B in progress:
                    report = train_step(x_A, x_B, state, config.loss)
                    log.write(state.step, epoch, time.perf_counter() - started, report)
                    if state.step % train.log_every == 0:
                        logger.info(
                            "step %d: total_g=%.4f total_d=%.4f cc=%.4f relevancy=%.4f",
                            state.step, report.total_g, report.total_d, report.cc, report.relevancy,
                        )
                state.epoch = epoch + 1
                if state.epoch % train.checkpoint_every == 0 or state.epoch == train.epochs:
                    path = save_checkpoint(
                        snapshot(state, config), run_dir / CHECKPOINT_DIR / f"epoch_{state.epoch}.ckpt"
                    )
                    logger.info("Epoch %d done, checkpoint %s", state.epoch, path)
        finally:
            log.close()

        final = save_checkpoint(snapshot(state, config), run_dir / FINAL_NAME)
        logger.info("Training finished after %d step(s): %s", state.step, final)
        return final
