"""Layer-manifest model representation, the lightweight 8-emotion CNN, and
top-k prediction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import ShapeError
from .labels import EMOTION_NAMES, EmotionLabel
from .ops import BatchNormParams, ConvParams, GradTape

INPUT_HEIGHT = 224
INPUT_WIDTH = 224
INPUT_CHANNELS = 3

LAYER_KINDS = ("conv", "relu", "maxpool", "batchnorm", "flatten", "dense", "softmax")


@dataclass(frozen=True)
class LayerSpec:
    """One layer descriptor: a kind plus its hyperparameters."""

    kind: str
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unsupported layer kind {self.kind!r}")


@dataclass(frozen=True)
class ModelSpec:
    """Ordered layer manifest with a fixed input geometry and label table."""

    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]
    labels: tuple[str, ...] = tuple(EMOTION_NAMES)

    def shape_chain(self) -> list[tuple[int, ...]]:
        """Per-layer output shapes (excluding the batch axis), validated."""
        shape = tuple(self.input_shape)
        chain = [shape]
        for i, layer in enumerate(self.layers):
            shape = _propagate(shape, layer, i)
            chain.append(shape)
        if len(shape) != 1:
            raise ShapeError(f"model output must be a vector, got shape {shape}")
        if shape[0] != len(self.labels):
            raise ShapeError(
                f"output width {shape[0]} != number of labels {len(self.labels)}"
            )
        return chain

    def parameter_shapes(self) -> dict[str, tuple[int, ...]]:
        """Named trainable-tensor shapes in layer order."""
        shapes: dict[str, tuple[int, ...]] = {}
        chain = self.shape_chain()
        for i, layer in enumerate(self.layers):
            prefix = f"layers.{i}"
            in_shape = chain[i]
            if layer.kind == "conv":
                k = layer.config["kernel_size"]
                cout = layer.config["out_channels"]
                shapes[f"{prefix}.kernel"] = (k, k, in_shape[2], cout)
                shapes[f"{prefix}.bias"] = (cout,)
            elif layer.kind == "batchnorm":
                c = in_shape[2]
                shapes[f"{prefix}.gamma"] = (c,)
                shapes[f"{prefix}.beta"] = (c,)
            elif layer.kind == "dense":
                units = layer.config["units"]
                shapes[f"{prefix}.weight"] = (in_shape[0], units)
                shapes[f"{prefix}.bias"] = (units,)
        return shapes

    def stat_shapes(self) -> dict[str, tuple[int, ...]]:
        """Named batch-norm running-statistic shapes in layer order."""
        shapes: dict[str, tuple[int, ...]] = {}
        chain = self.shape_chain()
        for i, layer in enumerate(self.layers):
            if layer.kind == "batchnorm":
                c = chain[i][2]
                shapes[f"layers.{i}.running_mean"] = (c,)
                shapes[f"layers.{i}.running_var"] = (c,)
        return shapes


def _propagate(shape: tuple[int, ...], layer: LayerSpec, index: int) -> tuple[int, ...]:
    kind = layer.kind
    if kind == "conv":
        if len(shape) != 3:
            raise ShapeError(f"layer {index}: conv needs a HxWxC input, got {shape}")
        k = layer.config["kernel_size"]
        h, w, _ = shape
        if h < k or w < k:
            raise ShapeError(f"layer {index}: spatial extent {h}x{w} smaller than kernel {k}")
        return (h - k + 1, w - k + 1, layer.config["out_channels"])
    if kind == "maxpool":
        if len(shape) != 3:
            raise ShapeError(f"layer {index}: maxpool needs a HxWxC input, got {shape}")
        h, w, c = shape
        if h < 2 or w < 2:
            raise ShapeError(f"layer {index}: maxpool needs H,W >= 2, got {h}x{w}")
        return (h // 2, w // 2, c)
    if kind == "batchnorm":
        if len(shape) != 3:
            raise ShapeError(f"layer {index}: batchnorm needs a HxWxC input, got {shape}")
        return shape
    if kind == "flatten":
        return (int(np.prod(shape)),)
    if kind == "dense":
        if len(shape) != 1:
            raise ShapeError(f"layer {index}: dense needs a flat input, got {shape}")
        return (layer.config["units"],)
    # relu and softmax preserve shape
    return shape


@dataclass
class ClassificationResult:
    """Ranked (label, confidence) prefix plus the full 8-way distribution."""

    top: list[tuple[EmotionLabel, float]]
    distribution: np.ndarray


class ModelTape:
    """Reverse-order tape for one train-mode forward pass."""

    def __init__(self, records: list[tuple[int, str, GradTape]]):
        self._records = records
        self._consumed = False

    def backward(self, d_logits: np.ndarray) -> dict[str, np.ndarray]:
        """Walk the layers in reverse from a gradient wrt the softmax logits;
        returns gradients for every trainable parameter."""
        if self._consumed:
            raise RuntimeError("backward already invoked for this tape")
        self._consumed = True
        grads: dict[str, np.ndarray] = {}
        d = d_logits
        for index, kind, tape in reversed(self._records):
            prefix = f"layers.{index}"
            if kind == "conv":
                d, grads[f"{prefix}.kernel"], grads[f"{prefix}.bias"] = tape.backward(d)
            elif kind == "batchnorm":
                d, grads[f"{prefix}.gamma"], grads[f"{prefix}.beta"] = tape.backward(d)
            elif kind == "dense":
                d, grads[f"{prefix}.weight"], grads[f"{prefix}.bias"] = tape.backward(d)
            else:
                d = tape.backward(d)
        return grads


class Model:
    """A layer manifest bound to concrete parameter tensors.

    Treat instances as immutable outside a training session; train-mode
    forward mutates the batch-norm running statistics.
    """

    def __init__(self, spec: ModelSpec, params: dict[str, np.ndarray], stats: dict[str, np.ndarray]):
        expected_params = spec.parameter_shapes()
        expected_stats = spec.stat_shapes()
        for name, shape in expected_params.items():
            if name not in params:
                raise ShapeError(f"missing parameter tensor {name}")
            if tuple(params[name].shape) != shape:
                raise ShapeError(
                    f"parameter {name} has shape {tuple(params[name].shape)}, expected {shape}"
                )
        for name, shape in expected_stats.items():
            if name not in stats:
                raise ShapeError(f"missing statistic tensor {name}")
            if tuple(stats[name].shape) != shape:
                raise ShapeError(
                    f"statistic {name} has shape {tuple(stats[name].shape)}, expected {shape}"
                )
        extra = set(params) - set(expected_params)
        if extra:
            raise ShapeError(f"unexpected parameter tensors: {sorted(extra)}")
        self.spec = spec
        self.params = params
        self.stats = stats

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values()) + sum(
            s.size for s in self.stats.values()
        )

    def copy(self) -> "Model":
        return Model(
            self.spec,
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.stats.items()},
        )

    def forward(self, batch: np.ndarray, mode: str = "infer"):
        """Run the full layer stack on an NHWC batch.

        Infer mode returns the (N, K) probability rows and is side-effect
        free. Train mode returns ``(probs, ModelTape)`` and updates the
        batch-norm running statistics.
        """
        if mode not in ("train", "infer"):
            raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
        expected = (batch.shape[0],) + tuple(self.spec.input_shape)
        if batch.ndim != 4 or tuple(batch.shape) != expected:
            raise ShapeError(
                f"input batch shape {tuple(batch.shape)} != expected {expected}"
            )
        records: list[tuple[int, str, GradTape]] = []
        x = batch
        for i, layer in enumerate(self.spec.layers):
            prefix = f"layers.{i}"
            kind = layer.kind
            if kind == "conv":
                x, tape = ops.conv2d(
                    x, ConvParams(self.params[f"{prefix}.kernel"], self.params[f"{prefix}.bias"])
                )
            elif kind == "relu":
                x, tape = ops.relu(x)
            elif kind == "maxpool":
                x, tape = ops.maxpool2(x)
            elif kind == "batchnorm":
                bn = BatchNormParams(
                    gamma=self.params[f"{prefix}.gamma"],
                    beta=self.params[f"{prefix}.beta"],
                    running_mean=self.stats[f"{prefix}.running_mean"],
                    running_var=self.stats[f"{prefix}.running_var"],
                    momentum=layer.config.get("momentum", 0.9),
                    epsilon=layer.config.get("epsilon", 1e-5),
                )
                x, tape = ops.batch_norm(x, bn, mode=mode)
            elif kind == "flatten":
                in_shape = x.shape
                x = x.reshape(in_shape[0], -1)
                tape = GradTape(lambda d, s=in_shape: d.reshape(s))
            elif kind == "dense":
                x, tape = ops.dense(
                    x, self.params[f"{prefix}.weight"], self.params[f"{prefix}.bias"]
                )
            else:  # softmax: the loss tape carries its backward
                x = ops.softmax(x)
                continue
            if mode == "train":
                records.append((i, kind, tape))
        if mode == "train":
            return x, ModelTape(records)
        return x

    def predict_topk(self, image: np.ndarray, k: int = 3) -> ClassificationResult:
        """Infer-mode prediction on a single image, ranked by descending
        confidence with ties broken by ascending label index."""
        n_classes = len(self.spec.labels)
        if not 1 <= k <= n_classes:
            raise ValueError(f"k must lie in [1, {n_classes}], got {k}")
        probs = self.forward(image[None, ...], mode="infer")[0]
        order = sorted(range(n_classes), key=lambda i: (-probs[i], i))
        top = [(EmotionLabel(i), float(probs[i])) for i in order[:k]]
        return ClassificationResult(top=top, distribution=probs)


def table1_spec() -> ModelSpec:
    """The lightweight five-block CNN manifest for 224x224x3 inputs.

    Each block is conv -> relu -> maxpool -> batchnorm with kernel sizes
    stepping down 9, 7, 5, 3, 3; the head flattens to 2048 and runs two
    1024-unit ReLU dense layers into an 8-way softmax.
    """
    layers: list[LayerSpec] = []
    for kernel_size, out_channels in ((9, 16), (7, 32), (5, 64), (3, 128), (3, 128)):
        layers.append(LayerSpec("conv", {"kernel_size": kernel_size, "out_channels": out_channels}))
        layers.append(LayerSpec("relu"))
        layers.append(LayerSpec("maxpool"))
        layers.append(LayerSpec("batchnorm"))
    layers.append(LayerSpec("flatten"))
    layers.append(LayerSpec("dense", {"units": 1024}))
    layers.append(LayerSpec("relu"))
    layers.append(LayerSpec("dense", {"units": 1024}))
    layers.append(LayerSpec("relu"))
    layers.append(LayerSpec("dense", {"units": 8}))
    layers.append(LayerSpec("softmax"))
    spec = ModelSpec(
        input_shape=(INPUT_HEIGHT, INPUT_WIDTH, INPUT_CHANNELS), layers=tuple(layers)
    )
    flatten_width = spec.shape_chain()[layers.index(LayerSpec("flatten")) + 1][0]
    assert flatten_width == 2048, f"flatten width {flatten_width} != 2048"
    return spec


def build_model(spec: ModelSpec, seed: int) -> Model:
    """Initialize a model from a manifest: fan-in-scaled Gaussian weights
    (variance 2/fan_in), zero biases, unit gamma. Identical seeds give
    bit-identical parameters."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in spec.parameter_shapes().items():
        leaf = name.rsplit(".", 1)[1]
        if leaf == "kernel":
            fan_in = shape[0] * shape[1] * shape[2]
            params[name] = (rng.standard_normal(shape, dtype=np.float32)
                            * np.float32(np.sqrt(2.0 / fan_in)))
        elif leaf == "weight":
            fan_in = shape[0]
            params[name] = (rng.standard_normal(shape, dtype=np.float32)
                            * np.float32(np.sqrt(2.0 / fan_in)))
        elif leaf == "gamma":
            params[name] = np.ones(shape, dtype=np.float32)
        else:  # bias, beta
            params[name] = np.zeros(shape, dtype=np.float32)
    stats = {
        name: (np.ones(shape, dtype=np.float32) if name.endswith("running_var")
               else np.zeros(shape, dtype=np.float32))
        for name, shape in spec.stat_shapes().items()
    }
    return Model(spec, params, stats)


def build_table1_model(seed: int) -> Model:
    return build_model(table1_spec(), seed)
