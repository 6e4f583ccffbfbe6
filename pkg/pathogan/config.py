import hashlib
import json
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Optional

import tomli
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from pathogan.errors import ConfigError
from pathogan.schemas.data import AugmentationConfig, DomainCounts
from pathogan.schemas.losses import LossWeights
from pathogan.schemas.training import TrainConfig

ENCODER_ARCH = "c7-64,d128,d256,d512,d1024,C1-15,Q2F,l(z*i)t,l(2*z)"
DECODER_ARCH = (
    "l(i*i)e,l(i*i),F2Q,c3-1024,u512,u256,C7-256e,R256,R256,R256,"
    "R256,R256,R256,R256,R256,R256,u128,u64,C7-r"
)
ZB_ARCH = "c7-64,d128,d256,R256,R256,R256,R256,R256,R256,R256,R256,R256,u128,u64,C7-r"
DISCRIMINATOR_ARCH = "S4-64l,s4-128l,s4-256l,n4-512l,C4-1"

# keys that only change how long a run lasts; resuming may change them
RUN_LENGTH_KEYS = ("train.epochs", "train.checkpoint_every")


class DataSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    manifest: Optional[str] = None
    split: Literal["train", "test", "all"] = "train"
    slice_lo: int = Field(default=60, ge=0)  # inclusive
    slice_hi: int = Field(default=100, ge=0)  # inclusive
    pathology_threshold: int = Field(default=20, ge=0)  # pixels
    counts: DomainCounts = DomainCounts()
    workers: int = Field(default=0, ge=0)


class ModelSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_channels: PositiveInt = 4
    image_size: PositiveInt = 240
    latent_size: PositiveInt = 256


class ArchSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    encoder: str = ENCODER_ARCH
    decoder: str = DECODER_ARCH
    zb: str = ZB_ARCH
    discriminator: str = DISCRIMINATOR_ARCH


class EvalSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    threshold: float = Field(default=0.5, gt=0.0, lt=1.0)
    batch_size: PositiveInt = 8
    split: Literal["train", "test", "all"] = "test"


class RunConfig(BaseSettings):
    """Merged view of data/model/training/eval keys"""
    model_config = SettingsConfigDict(
        env_prefix="PATHOGAN_",
        env_nested_delimiter="__",
        env_file=".env",
        extra="forbid",
    )

    data: DataSettings = DataSettings()
    augment: AugmentationConfig = AugmentationConfig()
    model: ModelSettings = ModelSettings()
    arch: ArchSettings = ArchSettings()
    loss: LossWeights = LossWeights()
    train: TrainConfig = TrainConfig()
    eval: EvalSettings = EvalSettings()
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"

    def echo(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    @property
    def config_hash(self) -> str:
        return _digest(self.echo())

    @property
    def resume_hash(self) -> str:
        flat = flatten(self.echo())
        for key in RUN_LENGTH_KEYS:
            flat.pop(key, None)
        return _digest(flat)

    def symbols(self) -> Dict[str, int]:
        """Symbols z, i, r of the architecture strings"""
        from pathogan.services.netspec import count_downsampling

        downs = count_downsampling(self.arch.encoder)
        size = self.model.image_size
        if size % (2 ** downs):
            raise ConfigError(
                f"model.image_size={size} is not divisible by 2^{downs} "
                f"(downsampling layers in arch.encoder)"
            )
        return {
            "z": self.model.latent_size,
            "i": size // (2 ** downs),
            "r": self.model.n_channels + 1,
        }


def _digest(data: Dict[str, Any]) -> str:
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def flatten(data: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    """Nested dict -> dotted keys"""
    flat = {}
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten(value, f"{name}."))
        else:
            flat[name] = value
    return flat


def describe_keys() -> List[str]:
    """Every configuration key with its default, for --help"""
    defaults = flatten(RunConfig.model_validate({}).echo())
    return [f"{key} = {json.dumps(value)}" for key, value in sorted(defaults.items())]


def load_toml(path: Path) -> Dict[str, Any]:
    try:
        with open(path, "rb") as handle:
            return tomli.load(handle)
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e
    except tomli.TOMLDecodeError as e:
        raise ConfigError(f"Invalid TOML in {path}: {e}") from e


def _parse_value(raw: str) -> Any:
    try:
        return tomli.loads(f"value = {raw}")["value"]
    except tomli.TOMLDecodeError:
        return raw


def toml_value(value: Any) -> str:
    """TOML literal for a scalar or list; JSON string escapes are valid TOML basic-string escapes"""
    return json.dumps(value, ensure_ascii=False)


def override(key: str, value: Any) -> str:
    return f"{key}={toml_value(value)}"


def apply_overrides(data: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Apply `section.key=value` overrides in place; values use TOML syntax, bare words are strings"""
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"Override '{item}' is not of the form section.key=value")
        parts = key.strip().split(".")
        node = data
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"Override '{item}' descends into non-table key '{part}'")
            node = child
        node[parts[-1]] = _parse_value(raw.strip())
    return data


def load_run_config(path: Optional[Path] = None, overrides: Iterable[str] = ()) -> RunConfig:
    """Defaults < environment/.env < TOML file < overrides"""
    data: Dict[str, Any] = load_toml(Path(path)) if path else {}
    apply_overrides(data, overrides)
    try:
        return RunConfig(**data)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration:\n{e}") from e


def config_from_echo(data: Dict[str, Any]) -> RunConfig:
    """Rebuild a config stored in a checkpoint or report, ignoring the environment"""
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Stored configuration is invalid:\n{e}") from e


def dump_toml(config: RunConfig) -> str:
    """Minimal TOML writer for the flat two-level layout of RunConfig"""
    lines: List[str] = []
    top = config.echo()
    scalars = {k: v for k, v in top.items() if not isinstance(v, dict)}
    for key, value in scalars.items():
        if value is not None:
            lines.append(f"{key} = {toml_value(value)}")
    for section, values in top.items():
        if not isinstance(values, dict):
            continue
        for table, entries in _tables(section, values):
            lines.append("")
            lines.append(f"[{table}]")
            for key, value in entries.items():
                if value is not None:  # TOML has no null
                    lines.append(f"{key} = {toml_value(value)}")
    return "\n".join(lines) + "\n"


def _tables(name: str, values: Dict[str, Any]):
    scalars = {k: v for k, v in values.items() if not isinstance(v, dict)}
    yield name, scalars
    for key, value in values.items():
        if isinstance(value, dict):
            yield from _tables(f"{name}.{key}", value)


@lru_cache
def get_settings() -> RunConfig:
    return RunConfig()
