from enum import Enum
from typing import Dict, List, Optional
from pydantic import BaseModel, ConfigDict, PositiveInt, model_validator


class LayerKind(str, Enum):
    CONV = "Conv"
    NORM_ACT_CONV = "NormActConv"
    DOWN = "Down"
    UP = "Up"
    FC = "FC"
    RES_BLOCK = "ResBlock"
    RESHAPE_Q2F = "ReshapeQ2F"
    RESHAPE_F2Q = "ReshapeF2Q"
    # Patch discriminator extension
    STRIDED_CONV = "StridedConv"
    STRIDED_NORM_CONV = "StridedNormConv"
    NORM_CONV = "NormConv"


class Activation(str, Enum):
    NONE = "none"
    TANH = "tanh"
    ELU = "elu"
    LEAKY = "leaky"


KERNEL_KINDS = frozenset({
    LayerKind.CONV,
    LayerKind.NORM_ACT_CONV,
    LayerKind.STRIDED_CONV,
    LayerKind.STRIDED_NORM_CONV,
    LayerKind.NORM_CONV,
})
RESHAPE_KINDS = frozenset({LayerKind.RESHAPE_Q2F, LayerKind.RESHAPE_F2Q})
STRIDE2_KINDS = frozenset({LayerKind.DOWN, LayerKind.STRIDED_CONV, LayerKind.STRIDED_NORM_CONV})

# token prefix per kind, used by the pretty-printer
TOKEN_PREFIX = {
    LayerKind.CONV: "C",
    LayerKind.NORM_ACT_CONV: "c",
    LayerKind.STRIDED_CONV: "S",
    LayerKind.STRIDED_NORM_CONV: "s",
    LayerKind.NORM_CONV: "n",
    LayerKind.DOWN: "d",
    LayerKind.UP: "u",
    LayerKind.RES_BLOCK: "R",
}
ACTIVATION_SUFFIX = {
    Activation.NONE: "",
    Activation.TANH: "t",
    Activation.ELU: "e",
    Activation.LEAKY: "l",
}


class LayerSpec(BaseModel):
    """One token of an architecture string"""
    model_config = ConfigDict(frozen=True)

    kind: LayerKind
    kernel: Optional[PositiveInt] = None
    out_expr: Optional[str] = None  # as written, e.g. "64", "z*i", "r"
    out_features: Optional[PositiveInt] = None  # out_expr evaluated against the symbols
    trailing_activation: Activation = Activation.NONE

    @model_validator(mode="after")
    def check_fields(self) -> "LayerSpec":
        if (self.kernel is not None) != (self.kind in KERNEL_KINDS):
            raise ValueError(f"kernel must be given exactly for {sorted(k.value for k in KERNEL_KINDS)}")
        has_out = self.out_expr is not None and self.out_features is not None
        if has_out == (self.kind in RESHAPE_KINDS):
            raise ValueError(f"{self.kind.value} output features mismatch")
        return self

    def token(self) -> str:
        suffix = ACTIVATION_SUFFIX[self.trailing_activation]
        if self.kind == LayerKind.RESHAPE_Q2F:
            return "Q2F"
        if self.kind == LayerKind.RESHAPE_F2Q:
            return "F2Q"
        if self.kind == LayerKind.FC:
            return f"l({self.out_expr}){suffix}"
        prefix = TOKEN_PREFIX[self.kind]
        if self.kind in KERNEL_KINDS:
            return f"{prefix}{self.kernel}-{self.out_expr}{suffix}"
        return f"{prefix}{self.out_expr}{suffix}"


class NetSpec(BaseModel):
    """Parsed architecture string"""
    model_config = ConfigDict(frozen=True)

    layers: List[LayerSpec]
    symbols: Dict[str, int]

    def pretty(self) -> str:
        return ",".join(layer.token() for layer in self.layers)

    @property
    def downsampling_count(self) -> int:
        return sum(1 for layer in self.layers if layer.kind in STRIDE2_KINDS)
