"""
Architecture shorthand: parsing, shape inference and network construction.

Tokens are comma separated:

    Ck-f    conv, stride 1, kernel k, f output maps
    ck-f    conv + instance norm + ELU
    df      stride-2 conv, kernel 3 + instance norm + ELU
    uf      transposed conv (kernel 3, stride 2) + instance norm + ELU
    l(f)    fully connected
    Rf      residual block
    Q2F     square image -> vector
    F2Q     vector -> square image
    Sk-f    stride-2 conv                      (patch discriminator)
    sk-f    stride-2 conv + instance norm      (patch discriminator)
    nk-f    conv + instance norm               (patch discriminator)

A trailing t, e or l adds a tanh, ELU or leaky ReLU. f is a product of
integers and declared symbols (z, i, r).
"""
import logging
import re
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import torch
from torch import nn

from pathogan.errors import PathoGANError
from pathogan.models.networks import LEAKY_SLOPE, ResidualBlock, SpecNetwork, init_weights, same_conv
from pathogan.schemas.netspec import (
    KERNEL_KINDS,
    STRIDE2_KINDS,
    Activation,
    LayerKind,
    LayerSpec,
    NetSpec,
)

logger = logging.getLogger(__name__)

Shape = Tuple[int, ...]


class NetSpecError(PathoGANError):
    """Custom exception for architecture string errors"""
    pass


class UnknownToken(NetSpecError):
    pass


class UnknownSymbol(NetSpecError):
    pass


class StructureError(NetSpecError):
    pass


class ShapeMismatch(NetSpecError):
    def __init__(self, message: str, layer_index: Optional[int] = None):
        if layer_index is not None:
            message = f"layer {layer_index}: {message}"
        super().__init__(message)
        self.layer_index = layer_index


_ATOM = r"(?:\d+|[A-Za-z])"
_EXPR = rf"{_ATOM}(?:\*{_ATOM})*"
_WIDE_ATOM = r"(?:\d+|[A-Za-z_]\w*)"
_WIDE_EXPR = rf"{_WIDE_ATOM}(?:\*{_WIDE_ATOM})*"
_ACT = r"(?P<act>[tel])?"

_TOKEN_PATTERNS = [
    (LayerKind.CONV, re.compile(rf"C(?P<k>\d+)-(?P<f>{_EXPR}){_ACT}")),
    (LayerKind.NORM_ACT_CONV, re.compile(rf"c(?P<k>\d+)-(?P<f>{_EXPR}){_ACT}")),
    (LayerKind.STRIDED_CONV, re.compile(rf"S(?P<k>\d+)-(?P<f>{_EXPR}){_ACT}")),
    (LayerKind.STRIDED_NORM_CONV, re.compile(rf"s(?P<k>\d+)-(?P<f>{_EXPR}){_ACT}")),
    (LayerKind.NORM_CONV, re.compile(rf"n(?P<k>\d+)-(?P<f>{_EXPR}){_ACT}")),
    (LayerKind.DOWN, re.compile(rf"d(?P<f>{_EXPR}){_ACT}")),
    (LayerKind.UP, re.compile(rf"u(?P<f>{_EXPR}){_ACT}")),
    (LayerKind.RES_BLOCK, re.compile(rf"R(?P<f>{_EXPR}){_ACT}")),
    (LayerKind.FC, re.compile(rf"l\((?P<f>{_WIDE_EXPR})\){_ACT}")),
    (LayerKind.RESHAPE_Q2F, re.compile(r"Q2F")),
    (LayerKind.RESHAPE_F2Q, re.compile(r"F2Q")),
]
_ACTIVATIONS = {None: Activation.NONE, "t": Activation.TANH, "e": Activation.ELU, "l": Activation.LEAKY}

_SPATIAL, _VECTOR = "spatial", "vector"


def normalize(text: str) -> str:
    """Drop whitespace and a trailing period"""
    compact = re.sub(r"\s+", "", text)
    return compact[:-1] if compact.endswith(".") else compact


def evaluate_expression(expr: str, symbols: Mapping[str, int]) -> int:
    value = 1
    for atom in expr.split("*"):
        if atom.isdigit():
            value *= int(atom)
        elif atom in symbols:
            value *= int(symbols[atom])
        else:
            raise UnknownSymbol(f"Symbol '{atom}' in '{expr}' is not declared (known: {sorted(symbols)})")
    return value


def _parse_token(token: str, index: int, symbols: Mapping[str, int]) -> LayerSpec:
    for kind, pattern in _TOKEN_PATTERNS:
        match = pattern.fullmatch(token)
        if match is None:
            continue
        groups = match.groupdict()
        if kind in (LayerKind.RESHAPE_Q2F, LayerKind.RESHAPE_F2Q):
            return LayerSpec(kind=kind)
        out_features = evaluate_expression(groups["f"], symbols)
        if out_features < 1:
            raise UnknownToken(f"Token {index} '{token}' has no output features")
        kernel = int(groups["k"]) if kind in KERNEL_KINDS else None
        if kernel is not None and kernel < 1:
            raise UnknownToken(f"Token {index} '{token}' has kernel size 0")
        return LayerSpec(
            kind=kind,
            kernel=kernel,
            out_expr=groups["f"],
            out_features=out_features,
            trailing_activation=_ACTIVATIONS[groups.get("act")],
        )
    raise UnknownToken(f"Token {index} '{token}' is not part of the architecture notation")


def _initial_mode(layers: Sequence[LayerSpec]) -> str:
    if layers and layers[0].kind in (LayerKind.FC, LayerKind.RESHAPE_F2Q):
        return _VECTOR
    return _SPATIAL


def _check_structure(layers: Sequence[LayerSpec]) -> None:
    mode = _initial_mode(layers)
    seen_q2f = False
    for index, layer in enumerate(layers):
        if layer.kind == LayerKind.RESHAPE_Q2F:
            if mode != _SPATIAL:
                raise StructureError(f"Q2F at layer {index} but the input there is already a vector")
            mode, seen_q2f = _VECTOR, True
        elif layer.kind == LayerKind.RESHAPE_F2Q:
            if mode != _VECTOR:
                where = "after" if seen_q2f else "before any"
                raise StructureError(f"F2Q at layer {index} {where} Q2F on a spatial input")
            mode = _SPATIAL
        elif layer.kind == LayerKind.FC:
            if mode != _VECTOR:
                raise StructureError(f"l(...) at layer {index} needs a vector input (insert Q2F first)")
        elif mode != _SPATIAL:
            raise StructureError(f"{layer.token()} at layer {index} needs a spatial input (insert F2Q first)")


def parse_netspec(text: str, symbols: Mapping[str, int]) -> NetSpec:
    normalized = normalize(text)
    if not normalized:
        raise UnknownToken("Empty architecture string")
    layers = [
        _parse_token(token, index, symbols)
        for index, token in enumerate(normalized.split(","))
    ]
    _check_structure(layers)
    return NetSpec(layers=layers, symbols=dict(symbols))


def count_downsampling(text: str) -> int:
    """Number of stride-2 layers, readable without symbol values"""
    count = 0
    for token in normalize(text).split(","):
        if token[:1] in ("d", "S", "s"):
            count += 1
    return count


def _layer_output_shape(layer: LayerSpec, shape: Shape, index: int, side: Optional[int]) -> Shape:
    kind = layer.kind
    if kind == LayerKind.FC:
        if len(shape) != 1:
            raise ShapeMismatch(f"l(...) expects a vector, got {shape}", index)
        return (layer.out_features,)
    if kind == LayerKind.RESHAPE_F2Q:
        if len(shape) != 1:
            raise ShapeMismatch(f"F2Q expects a vector, got {shape}", index)
        if side is None:
            raise ShapeMismatch("F2Q needs the symbol i", index)
        if shape[0] % (side * side):
            raise ShapeMismatch(f"F2Q cannot fold {shape[0]} features into {side}x{side} maps", index)
        return (shape[0] // (side * side), side, side)

    if len(shape) != 3:
        raise ShapeMismatch(f"{layer.token()} expects (channels, height, width), got {shape}", index)
    channels, height, width = shape
    if kind == LayerKind.RESHAPE_Q2F:
        if side is None:
            raise ShapeMismatch("Q2F needs the symbol i", index)
        if (height, width) != (side, side):
            raise ShapeMismatch(f"Q2F expects {side}x{side} maps (i={side}), got {height}x{width}", index)
        return (channels * height * width,)
    if kind in STRIDE2_KINDS:
        if height % 2 or width % 2:
            raise ShapeMismatch(f"{layer.token()} halves {height}x{width}, which is not even", index)
        return (layer.out_features, height // 2, width // 2)
    if kind == LayerKind.UP:
        return (layer.out_features, height * 2, width * 2)
    if kind == LayerKind.RES_BLOCK and channels != layer.out_features:
        raise ShapeMismatch(f"{layer.token()} needs {layer.out_features} input maps, got {channels}", index)
    return (layer.out_features, height, width)


def infer_shapes(spec: NetSpec, input_shape: Sequence[int]) -> List[Shape]:
    """Output shape of every layer for one (unbatched) input"""
    shape: Shape = tuple(int(s) for s in input_shape)
    side = spec.symbols.get("i")
    shapes = []
    for index, layer in enumerate(spec.layers):
        shape = _layer_output_shape(layer, shape, index, side)
        shapes.append(shape)
    return shapes


def _trailing(activation: Activation) -> List[nn.Module]:
    if activation == Activation.TANH:
        return [nn.Tanh()]
    if activation == Activation.ELU:
        return [nn.ELU()]
    if activation == Activation.LEAKY:
        return [nn.LeakyReLU(LEAKY_SLOPE)]
    return []


def _build_layer(layer: LayerSpec, width: int, index: int, side: Optional[int]) -> Tuple[nn.Module, int]:
    """Module for one layer and its output channel/feature count"""
    kind, out = layer.kind, layer.out_features
    if kind == LayerKind.RESHAPE_Q2F:
        return nn.Flatten(1), width * side * side
    if kind == LayerKind.RESHAPE_F2Q:
        if side is None or width % (side * side):
            raise ShapeMismatch(f"F2Q cannot fold {width} features into {side}x{side} maps", index)
        return nn.Unflatten(1, (width // (side * side), side, side)), width // (side * side)

    if kind == LayerKind.FC:
        modules = [nn.Linear(width, out)]
    elif kind == LayerKind.CONV:
        modules = [same_conv(width, out, layer.kernel)]
    elif kind == LayerKind.NORM_ACT_CONV:
        modules = [same_conv(width, out, layer.kernel), nn.InstanceNorm2d(out), nn.ELU()]
    elif kind == LayerKind.DOWN:
        modules = [same_conv(width, out, 3, stride=2), nn.InstanceNorm2d(out), nn.ELU()]
    elif kind == LayerKind.UP:
        modules = [
            nn.ConvTranspose2d(width, out, 3, stride=2, padding=1, output_padding=1),
            nn.InstanceNorm2d(out),
            nn.ELU(),
        ]
    elif kind == LayerKind.RES_BLOCK:
        if width != out:
            raise ShapeMismatch(f"{layer.token()} needs {out} input maps, got {width}", index)
        modules = [ResidualBlock(out)]
    elif kind == LayerKind.STRIDED_CONV:
        modules = [same_conv(width, out, layer.kernel, stride=2)]
    elif kind == LayerKind.STRIDED_NORM_CONV:
        modules = [same_conv(width, out, layer.kernel, stride=2), nn.InstanceNorm2d(out)]
    else:  # NORM_CONV
        modules = [same_conv(width, out, layer.kernel), nn.InstanceNorm2d(out)]
    modules += _trailing(layer.trailing_activation)
    return nn.Sequential(*modules), out


def build_network(spec: NetSpec, input_channels: int, seed: int) -> SpecNetwork:
    """Parameterized network for spec; input_channels is the feature count for vector inputs"""
    side = spec.symbols.get("i")
    width = input_channels
    modules = []
    for index, layer in enumerate(spec.layers):
        if layer.kind in (LayerKind.RESHAPE_Q2F, LayerKind.RESHAPE_F2Q) and side is None:
            raise ShapeMismatch(f"{layer.token()} needs the symbol i", index)
        module, width = _build_layer(layer, width, index, side)
        modules.append(module)
    network = SpecNetwork(spec, input_channels, nn.ModuleList(modules))
    init_weights(network, torch.Generator().manual_seed(seed))
    logger.debug("Built %s: %d parameters", spec.pretty()[:60], network.parameter_count)
    return network


def describe(spec: NetSpec, input_shape: Optional[Sequence[int]] = None) -> str:
    """Text table of the IR, with the shape trace when input_shape is given"""
    shapes = infer_shapes(spec, input_shape) if input_shape is not None else [None] * len(spec.layers)
    symbols = ", ".join(f"{k}={v}" for k, v in sorted(spec.symbols.items()))
    lines = [f"symbols: {symbols}"]
    if input_shape is not None:
        lines.append(f"input: {tuple(input_shape)}")
    for index, (layer, shape) in enumerate(zip(spec.layers, shapes)):
        details = [layer.kind.value]
        if layer.kernel is not None:
            details.append(f"k={layer.kernel}")
        if layer.out_features is not None:
            details.append(f"out={layer.out_features}")
        if layer.trailing_activation != Activation.NONE:
            details.append(layer.trailing_activation.value)
        trace = "" if shape is None else f"  -> {shape}"
        lines.append(f"{index:3d}  {layer.token():<12} {' '.join(details):<32}{trace}")
    return "\n".join(lines)


def symbol_map(pairs: Sequence[str], base: Optional[Dict[str, int]] = None) -> Dict[str, int]:
    """`name=value` strings merged over base"""
    symbols = dict(base or {})
    for pair in pairs:
        name, sep, value = pair.partition("=")
        if not sep or not value.strip().isdigit():
            raise NetSpecError(f"Symbol override '{pair}' is not of the form name=integer")
        symbols[name.strip()] = int(value)
    return symbols
