"""Forward execution of an ArchSpec over a WeightStore."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arch import INPUT_NAME, ArchSpec, FireConfig
from .errors import MissingBlobError, ShapeError, SpecError, TinySSDError
from .ops import ConvParams, PoolParams, concat_channels, conv2d, maxpool2d, relu
from .tensor import Tensor


@dataclass(frozen=True)
class HeadOutput:
    """Gathered multibox predictions: loc (n, priors, 4) and conf logits
    (n, priors, classes), rows ordered scale-major then row-major spatial
    with the per-cell prior index innermost."""

    loc: np.ndarray
    conf: np.ndarray

    @property
    def prior_count(self) -> int:
        return self.loc.shape[1]


def _blob(store, name: str) -> np.ndarray:
    try:
        return store[name]
    except KeyError:
        raise MissingBlobError(f"weight blob {name!r} not found in store") from None


def _conv_params(geometry, store, prefix: str) -> ConvParams:
    bias = _blob(store, f"{prefix}/b") if geometry.has_bias else None
    return ConvParams(
        out_channels=geometry.out_channels,
        kernel=geometry.kernel,
        stride=geometry.stride,
        pad=geometry.pad,
        has_bias=geometry.has_bias,
        weights=_blob(store, f"{prefix}/w"),
        bias=bias,
    )


def fire_forward(x: Tensor, cfg: FireConfig, store, name: str = "fire") -> Tensor:
    """Squeeze to cfg.squeeze channels, then concatenate the two expand paths.

    ``store`` must hold ``<name>/squeeze``, ``<name>/expand1x1`` and
    ``<name>/expand3x3`` weight/bias blobs. Spatial extents are preserved;
    output channels are expand1x1 + expand3x3.
    """
    squeeze = ConvParams(cfg.squeeze, (1, 1), pad=0,
                         weights=_blob(store, f"{name}/squeeze/w"),
                         bias=_blob(store, f"{name}/squeeze/b"))
    e1 = ConvParams(cfg.expand1x1, (1, 1), pad=0,
                    weights=_blob(store, f"{name}/expand1x1/w"),
                    bias=_blob(store, f"{name}/expand1x1/b"))
    e3 = ConvParams(cfg.expand3x3, (3, 3), pad=1,
                    weights=_blob(store, f"{name}/expand3x3/w"),
                    bias=_blob(store, f"{name}/expand3x3/b"))
    h = relu(conv2d(x, squeeze, layer=f"{name}/squeeze"))
    a = relu(conv2d(h, e1, layer=f"{name}/expand1x1"))
    b = relu(conv2d(h, e3, layer=f"{name}/expand3x3"))
    return concat_channels([a, b], layer=name)


def _run_layer(layer, x: Tensor, store) -> Tensor:
    if layer.kind == "conv":
        out = conv2d(x, _conv_params(layer.geometry, store, layer.name), layer=layer.name)
        if layer.geometry.activation == "relu":
            out = relu(out)
        return out
    if layer.kind == "pool":
        g = layer.geometry
        return maxpool2d(x, PoolParams(g.kernel, g.stride, g.rounding), layer=layer.name)
    if layer.kind == "fire":
        return fire_forward(x, layer.geometry, store, name=layer.name)
    raise SpecError(f"{layer.name}: cannot execute layer kind {layer.kind!r}")


def activations(spec: ArchSpec, store, image: Tensor) -> dict[str, Tensor]:
    """Run every layer in declared order and return all named outputs.

    Any failure is reported with the offending layer's name.
    """
    computed = {INPUT_NAME: image}
    for layer in spec.layers:
        upstream = layer.inputs[0]
        if upstream not in computed:
            raise SpecError(f"{layer.name}: input {upstream!r} not computed (malformed graph)")
        try:
            computed[layer.name] = _run_layer(layer, computed[upstream], store)
        except TinySSDError as e:
            if str(e).startswith(layer.name):
                raise
            raise type(e)(f"{layer.name}: {e}") from None
    return computed


def _prior_rows(t: Tensor, width: int, name: str) -> np.ndarray:
    """(n, b*width, h, w) -> (n, h*w*b, width) with prior index innermost."""
    n, c, h, w = t.shape
    if c % width:
        raise ShapeError(f"{name}: {c} channels not divisible by {width} values per prior")
    b = c // width
    return t.data.transpose(0, 2, 3, 1).reshape(n, h * w * b, width)


def forward(spec: ArchSpec, store, image: Tensor) -> HeadOutput:
    """Full forward pass; conf logits are returned un-softmaxed."""
    if not spec.heads:
        raise SpecError("spec declares no detection heads")
    want = (spec.input_channels, spec.input_size, spec.input_size)
    if image.shape[1:] != want:
        raise ShapeError(f"input image shape {image.shape[1:]} != expected {want}")
    acts = activations(spec, store, image)
    loc = [_prior_rows(acts[h.loc], 4, h.loc) for h in spec.heads]
    conf = [_prior_rows(acts[h.conf], spec.class_count, h.conf) for h in spec.heads]
    return HeadOutput(loc=np.concatenate(loc, axis=1), conf=np.concatenate(conf, axis=1))
