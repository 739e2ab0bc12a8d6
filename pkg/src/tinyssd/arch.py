"""Declarative description of the Tiny SSD graph: layer table, validation,
static shape inference, the parameter manifest, and text/JSON rendering."""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import GeometryError, SpecError
from .ops import conv_out_extent, pool_out_extent

VOC_CLASSES = (
    "aeroplane", "bicycle", "bird", "boat", "bottle",
    "bus", "car", "cat", "chair", "cow",
    "diningtable", "dog", "horse", "motorbike", "person",
    "pottedplant", "sheep", "sofa", "train", "tvmonitor",
)
CLASS_COUNT = len(VOC_CLASSES) + 1  # fixed background class 0
INPUT_SIZE = 300
INPUT_CHANNELS = 3
INPUT_NAME = "image"  # reserved upstream name for the network input


@dataclass(frozen=True)
class FireConfig:
    """Filter counts of one fire module: squeeze 1x1, expand 1x1, expand 3x3."""

    squeeze: int
    expand1x1: int
    expand3x3: int

    def __post_init__(self):
        if min(self.squeeze, self.expand1x1, self.expand3x3) < 1:
            raise SpecError(f"fire filter counts must be >= 1, got {self}")

    @property
    def out_channels(self) -> int:
        return self.expand1x1 + self.expand3x3


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of one convolution layer (weights live in the WeightStore)."""

    out_channels: int
    kernel: tuple[int, int] = (3, 3)
    stride: int = 1
    pad: int = 1
    has_bias: bool = True
    activation: str = "relu"  # "relu" or "none"

    def __post_init__(self):
        if self.out_channels < 1 or min(self.kernel) < 1 or self.stride < 1 or self.pad < 0:
            raise SpecError(f"invalid conv geometry: {self}")
        if self.activation not in ("relu", "none"):
            raise SpecError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class PoolSpec:
    """Geometry of one max-pooling layer."""

    kernel: tuple[int, int] = (3, 3)
    stride: int = 2
    rounding: str = "ceil"

    def __post_init__(self):
        if min(self.kernel) < 1 or self.stride < 1:
            raise SpecError(f"invalid pool geometry: {self}")
        if self.rounding not in ("ceil", "floor"):
            raise SpecError(f"pool rounding must be 'ceil' or 'floor', got {self.rounding!r}")


@dataclass(frozen=True)
class LayerSpec:
    """One named node of the graph. inputs name previously declared layers
    (or the reserved input name), so any valid spec is already in
    topological order."""

    name: str
    kind: str  # "conv" | "pool" | "fire"
    geometry: object
    inputs: tuple[str, ...]


@dataclass(frozen=True)
class HeadSpec:
    """One detection scale: a source feature layer and its loc/conf predictors."""

    source: str
    loc: str
    conf: str
    priors_per_cell: int


@dataclass(frozen=True)
class ArchSpec:
    """Whole-network description; immutable and shareable across threads."""

    layers: tuple[LayerSpec, ...]
    heads: tuple[HeadSpec, ...] = ()
    class_count: int = CLASS_COUNT
    input_size: int = INPUT_SIZE
    input_channels: int = INPUT_CHANNELS

    @property
    def detection_sources(self) -> tuple[str, ...]:
        return tuple(h.source for h in self.heads)

    def layer(self, name: str) -> LayerSpec:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise SpecError(f"no layer named {name!r}")


_GEOMETRY_KINDS = {"conv": ConvSpec, "pool": PoolSpec, "fire": FireConfig}

# Fire stack filter counts (squeeze, expand 1x1, expand 3x3), in layer order.
_FIRE_CONFIGS = {
    "fire1": (15, 49, 53),
    "fire2": (15, 54, 52),
    "fire3": (29, 92, 94),
    "fire4": (29, 90, 83),
    "fire5": (44, 166, 161),
    "fire6": (45, 155, 146),
    "fire7": (49, 163, 171),
    "fire8": (25, 29, 54),
    "fire9": (37, 45, 56),
    "fire10": (38, 41, 44),
}

# Detection scales: (source layer, priors per cell), large maps first.
_HEAD_SOURCES = (
    ("fire4", 4),
    ("fire8", 6),
    ("fire9", 6),
    ("fire10", 6),
    ("conv12_2", 6),
    ("conv13_2", 4),
)


def tiny_ssd_spec() -> ArchSpec:
    """The canonical 300x300 Tiny SSD graph: a 57-filter stem, ten fire
    modules with interleaved ceil-mode pools, four auxiliary convolutions,
    and twelve multibox predictor heads over six scales."""
    layers = []
    prev = INPUT_NAME

    def add(name, kind, geometry):
        nonlocal prev
        layers.append(LayerSpec(name, kind, geometry, (prev,)))
        prev = name

    def fire(name):
        add(name, "fire", FireConfig(*_FIRE_CONFIGS[name]))

    add("conv1", "conv", ConvSpec(57, stride=2, pad=0))
    add("pool1", "pool", PoolSpec())
    fire("fire1")
    fire("fire2")
    add("pool3", "pool", PoolSpec())
    fire("fire3")
    fire("fire4")
    add("pool5", "pool", PoolSpec())
    fire("fire5")
    fire("fire6")
    fire("fire7")
    fire("fire8")
    add("pool9", "pool", PoolSpec())
    fire("fire9")
    add("pool10", "pool", PoolSpec())
    fire("fire10")
    add("conv12_1", "conv", ConvSpec(51, stride=2))
    add("conv12_2", "conv", ConvSpec(46))
    add("conv13_1", "conv", ConvSpec(55))
    add("conv13_2", "conv", ConvSpec(85, stride=2))

    heads = []
    for source, priors in _HEAD_SOURCES:
        loc = f"{source}_mbox_loc"
        conf = f"{source}_mbox_conf"
        layers.append(LayerSpec(loc, "conv", ConvSpec(priors * 4, activation="none"), (source,)))
        layers.append(
            LayerSpec(conf, "conv", ConvSpec(priors * CLASS_COUNT, activation="none"), (source,))
        )
        heads.append(HeadSpec(source, loc, conf, priors))

    return ArchSpec(layers=tuple(layers), heads=tuple(heads))


def validate(spec: ArchSpec) -> None:
    """Structural validation: unique names, known kinds, acyclic single-input
    wiring, and head predictors consistent with priors-per-cell."""
    if spec.class_count < 2:
        raise SpecError(f"class_count must be >= 2, got {spec.class_count}")
    if spec.input_size < 1 or spec.input_channels < 1:
        raise SpecError("input size and channels must be positive")
    seen = set()
    for layer in spec.layers:
        if layer.name == INPUT_NAME:
            raise SpecError(f"layer name {INPUT_NAME!r} is reserved for the network input")
        if layer.name in seen:
            raise SpecError(f"duplicate layer name {layer.name!r}")
        expected = _GEOMETRY_KINDS.get(layer.kind)
        if expected is None:
            raise SpecError(f"{layer.name}: unknown layer kind {layer.kind!r}")
        if not isinstance(layer.geometry, expected):
            raise SpecError(
                f"{layer.name}: kind {layer.kind!r} needs {expected.__name__} geometry, "
                f"got {type(layer.geometry).__name__}"
            )
        if len(layer.inputs) != 1:
            raise SpecError(f"{layer.name}: expected exactly one input, got {layer.inputs}")
        upstream = layer.inputs[0]
        if upstream != INPUT_NAME and upstream not in seen:
            raise SpecError(
                f"{layer.name}: input {upstream!r} is not declared earlier "
                "(cycle or forward reference)"
            )
        seen.add(layer.name)

    for head in spec.heads:
        for role, name in (("source", head.source), ("loc", head.loc), ("conf", head.conf)):
            if name not in seen:
                raise SpecError(f"head {role} layer {name!r} is not declared")
        if head.priors_per_cell < 1:
            raise SpecError(f"head at {head.source}: priors_per_cell must be >= 1")
        for role, name, per_prior in (
            ("loc", head.loc, 4),
            ("conf", head.conf, spec.class_count),
        ):
            layer = spec.layer(name)
            if layer.kind != "conv":
                raise SpecError(f"head {role} layer {name!r} must be a conv layer")
            if layer.inputs != (head.source,):
                raise SpecError(f"head {role} layer {name!r} does not read from {head.source!r}")
            want = head.priors_per_cell * per_prior
            if layer.geometry.out_channels != want:
                raise SpecError(
                    f"head {role} layer {name!r} has {layer.geometry.out_channels} channels, "
                    f"expected {want} for {head.priors_per_cell} priors"
                )


_CANONICAL_SIZES = (37, 18, 9, 4, 2, 1)
_CANONICAL_PRIORS = (4, 6, 6, 6, 6, 4)


def validate_canonical(spec: ArchSpec) -> None:
    """Full validation for the shipping architecture: ten fire modules and
    exactly six detection scales at spatial sizes 37/18/9/4/2/1 with
    4/6/6/6/6/4 priors per cell."""
    validate(spec)
    fire_count = sum(1 for layer in spec.layers if layer.kind == "fire")
    if fire_count != 10:
        raise SpecError(f"expected exactly 10 fire layers, found {fire_count}")
    if len(spec.heads) != 6:
        raise SpecError(f"expected exactly 6 detection sources, found {len(spec.heads)}")
    if spec.class_count != CLASS_COUNT or spec.input_size != INPUT_SIZE:
        raise SpecError("canonical spec must use 21 classes on a 300x300 input")
    shapes = dict(intermediate_shapes(spec))
    for head, size, priors in zip(spec.heads, _CANONICAL_SIZES, _CANONICAL_PRIORS):
        _, h, w = shapes[head.source]
        if (h, w) != (size, size):
            raise SpecError(
                f"head source {head.source!r} is {h}x{w}, expected {size}x{size}"
            )
        if head.priors_per_cell != priors:
            raise SpecError(
                f"head at {head.source!r} has {head.priors_per_cell} priors per cell, "
                f"expected {priors}"
            )


def intermediate_shapes(spec: ArchSpec, input_size: int | None = None) -> list[tuple[str, tuple[int, int, int]]]:
    """Static (channels, height, width) output shape of every layer, in order.

    Runs without weights; raises GeometryError if any layer's output extent
    would be non-positive.
    """
    size = spec.input_size if input_size is None else input_size
    shapes: dict[str, tuple[int, int, int]] = {INPUT_NAME: (spec.input_channels, size, size)}
    out = []
    for layer in spec.layers:
        c, h, w = shapes[layer.inputs[0]]
        g = layer.geometry
        if layer.kind == "conv":
            oh = conv_out_extent(h, g.kernel[0], g.stride, g.pad)
            ow = conv_out_extent(w, g.kernel[1], g.stride, g.pad)
            shape = (g.out_channels, oh, ow)
        elif layer.kind == "pool":
            oh = pool_out_extent(h, g.kernel[0], g.stride, g.rounding)
            ow = pool_out_extent(w, g.kernel[1], g.stride, g.rounding)
            shape = (c, oh, ow)
        else:  # fire: 1x1 and pad-1 3x3 sublayers preserve the spatial extents
            shape = (g.out_channels, h, w)
        if shape[1] < 1 or shape[2] < 1:
            raise GeometryError(f"{layer.name}: output extent {shape[1]}x{shape[2]} on {h}x{w} input")
        shapes[layer.name] = shape
        out.append((layer.name, shape))
    return out


def input_channel_counts(spec: ArchSpec) -> dict[str, int]:
    """Channel count seen by each layer, derived from static shape inference."""
    shapes = dict(intermediate_shapes(spec))
    shapes[INPUT_NAME] = (spec.input_channels, spec.input_size, spec.input_size)
    return {layer.name: shapes[layer.inputs[0]][0] for layer in spec.layers}


def param_manifest(spec: ArchSpec) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (blob name, shape) list of every parameter the graph needs.

    Conv layers own ``<name>/w`` and ``<name>/b``; fire layers own the same
    pair under ``<name>/squeeze``, ``<name>/expand1x1`` and ``<name>/expand3x3``.
    """
    in_channels = input_channel_counts(spec)
    manifest: list[tuple[str, tuple[int, ...]]] = []

    def conv_blobs(prefix, out_c, in_c, kernel, has_bias):
        manifest.append((f"{prefix}/w", (out_c, in_c, kernel[0], kernel[1])))
        if has_bias:
            manifest.append((f"{prefix}/b", (out_c,)))

    for layer in spec.layers:
        g = layer.geometry
        if layer.kind == "conv":
            conv_blobs(layer.name, g.out_channels, in_channels[layer.name], g.kernel, g.has_bias)
        elif layer.kind == "fire":
            in_c = in_channels[layer.name]
            conv_blobs(f"{layer.name}/squeeze", g.squeeze, in_c, (1, 1), True)
            conv_blobs(f"{layer.name}/expand1x1", g.expand1x1, g.squeeze, (1, 1), True)
            conv_blobs(f"{layer.name}/expand3x3", g.expand3x3, g.squeeze, (3, 3), True)
    return manifest


def display_name(name: str) -> str:
    """Machine name to table row label: conv12_1 -> Conv12-1, fire4_mbox_loc -> Fire4-mbox-loc."""
    head, *rest = name.split("_")
    return "-".join([head.capitalize()] + rest)


def _filter_column(layer: LayerSpec) -> str:
    g = layer.geometry
    if layer.kind == "conv":
        return f"{g.kernel[0]}x{g.kernel[1]}x{g.out_channels}"
    if layer.kind == "pool":
        return f"{g.kernel[0]}x{g.kernel[1]}"
    return f"{g.squeeze}@S -- {g.expand1x1}@E1 -- {g.expand3x3}@E3"


def describe_text(spec: ArchSpec) -> str:
    """Plain-text layer table (Type / Stride, Filter Shapes, Input Size)."""
    shapes = dict(intermediate_shapes(spec))
    shapes[INPUT_NAME] = (spec.input_channels, spec.input_size, spec.input_size)
    rows = [("Type / Stride", "Filter Shapes", "Input Size")]
    for layer in spec.layers:
        label = display_name(layer.name)
        stride = getattr(layer.geometry, "stride", 1)
        if stride > 1:
            label += f" / s{stride}"
        _, h, w = shapes[layer.inputs[0]]
        rows.append((label, _filter_column(layer), f"{h}x{w}"))
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in rows]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines) + "\n"


def spec_to_json(spec: ArchSpec) -> str:
    """Machine-readable dump; round-trips through :func:`spec_from_json`."""
    layers = []
    for layer in spec.layers:
        entry = {"name": layer.name, "kind": layer.kind, "inputs": list(layer.inputs)}
        g = layer.geometry
        if layer.kind == "conv":
            entry.update(
                out_channels=g.out_channels, kernel=list(g.kernel), stride=g.stride,
                pad=g.pad, bias=g.has_bias, activation=g.activation,
            )
        elif layer.kind == "pool":
            entry.update(kernel=list(g.kernel), stride=g.stride, rounding=g.rounding)
        else:
            entry.update(squeeze=g.squeeze, expand1x1=g.expand1x1, expand3x3=g.expand3x3)
        layers.append(entry)
    doc = {
        "format": "tinyssd-arch",
        "version": 1,
        "input_size": spec.input_size,
        "input_channels": spec.input_channels,
        "class_count": spec.class_count,
        "layers": layers,
        "heads": [
            {"source": h.source, "loc": h.loc, "conf": h.conf, "priors_per_cell": h.priors_per_cell}
            for h in spec.heads
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def spec_from_json(text: str) -> ArchSpec:
    """Parse a :func:`spec_to_json` dump back into an ArchSpec."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecError(f"not valid JSON: {e}") from None
    if not isinstance(doc, dict) or doc.get("format") != "tinyssd-arch":
        raise SpecError("missing 'tinyssd-arch' format marker")
    if doc.get("version") != 1:
        raise SpecError(f"unsupported arch dump version {doc.get('version')!r}")
    try:
        layers = []
        for entry in doc["layers"]:
            kind = entry["kind"]
            if kind == "conv":
                g = ConvSpec(
                    out_channels=entry["out_channels"], kernel=tuple(entry["kernel"]),
                    stride=entry["stride"], pad=entry["pad"], has_bias=entry["bias"],
                    activation=entry["activation"],
                )
            elif kind == "pool":
                g = PoolSpec(
                    kernel=tuple(entry["kernel"]), stride=entry["stride"],
                    rounding=entry["rounding"],
                )
            elif kind == "fire":
                g = FireConfig(entry["squeeze"], entry["expand1x1"], entry["expand3x3"])
            else:
                raise SpecError(f"unknown layer kind {kind!r}")
            layers.append(LayerSpec(entry["name"], kind, g, tuple(entry["inputs"])))
        heads = tuple(
            HeadSpec(h["source"], h["loc"], h["conf"], h["priors_per_cell"])
            for h in doc["heads"]
        )
        spec = ArchSpec(
            layers=tuple(layers), heads=heads, class_count=doc["class_count"],
            input_size=doc["input_size"], input_channels=doc["input_channels"],
        )
    except (KeyError, TypeError) as e:
        raise SpecError(f"malformed arch dump: {e!r}") from None
    validate(spec)
    return spec
