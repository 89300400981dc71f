"""Uniform adapter over pretrained image-classification backbones.

The two CNN backbones (resnet50, inception_resnet_v2) are consumed from
Keras applications.  The three YOLO classification backbones are consumed
through the external ``ultralytics`` provider, which is not integrated in
this build; loading them raises :class:`MissingDependencyError` (their spec
metadata still validates, so configs naming them parse and dry-run).

A "layer" for freezing purposes is a weight-owning layer of the provider's
flat layer list, in graph order; parameterless layers (activations, adds,
pooling) are not counted.  The binary head is a separate Dense layer and is
always trainable.

Pretrained weights are fetched through the Keras cache (content-hashed
files under ``~/.keras`` by default; override with ``KERAS_HOME``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._tfsetup import keras, tf
from .errors import IntegrityError, MissingDependencyError, ShapeError
from .registry import (  # noqa: F401  (re-exported)
    BACKBONE_TABLE,
    CNN_FAMILY,
    WEIGHT_SOURCES,
    YOLO_FAMILY,
    BackboneSpec,
    backbone_spec,
)

_U64 = 0xFFFFFFFFFFFFFFFF


@dataclass
class ModelHandle:
    """A backbone plus (optionally) its binary classification head."""

    spec: BackboneSpec
    base: "keras.Model"
    head: "keras.layers.Dense | None" = None
    model: "keras.Model | None" = None  # composed input -> base -> head
    head_attached: bool = False
    _groups: list = field(default_factory=list, repr=False)

    @property
    def layer_names(self) -> list[str]:
        return [layer.name for layer in self._groups]

    @property
    def layers(self) -> list[tuple[str, bool]]:
        """(name, trainable) per parameter group, in graph order."""
        return [(layer.name, bool(layer.trainable)) for layer in self._groups]

    @property
    def trainable_layer_names(self) -> list[str]:
        return [layer.name for layer in self._groups if layer.trainable]

    @property
    def parameter_count(self) -> int:
        target = self.model if self.model is not None else self.base
        return int(target.count_params())

    def preprocess(self, batch: np.ndarray) -> "tf.Tensor":
        """Per-provider input scaling of a uint8/float NHWC batch."""
        x = batch.astype(np.float32)
        if self.spec.name == "resnet50":
            x = keras.applications.resnet50.preprocess_input(x)
        elif self.spec.name == "inception_resnet_v2":
            x = keras.applications.inception_resnet_v2.preprocess_input(x)
        else:
            x = x / 255.0
        return tf.convert_to_tensor(x)


def _build_cnn_base(spec: BackboneSpec) -> "keras.Model":
    weights = None if spec.weights_source == "random" else "imagenet"
    builders = {
        "resnet50": keras.applications.ResNet50,
        "inception_resnet_v2": keras.applications.InceptionResNetV2,
    }
    builder = builders[spec.name]
    try:
        return builder(
            weights=weights, include_top=False, input_shape=spec.input_size, pooling="avg"
        )
    except Exception as exc:
        if weights is None:
            raise
        msg = str(exc)
        if "hash" in msg.lower() or "incomplete" in msg.lower():
            raise IntegrityError(f"pretrained checkpoint failed verification: {msg}") from exc
        raise RuntimeError(
            f"could not obtain pretrained weights for {spec.name}: {msg}. "
            "Populate the Keras cache (KERAS_HOME) or use weights_source='random'."
        ) from exc


def load_backbone(spec: BackboneSpec, init_seed: int | None = None) -> ModelHandle:
    """Build the backbone with every layer frozen.

    ``init_seed`` fixes the random initialization when
    ``weights_source == "random"`` (it seeds the global Keras RNG).
    """
    if spec.name not in BACKBONE_TABLE:
        raise ValueError(f"unknown backbone {spec.name!r}")
    if spec.family == YOLO_FAMILY:
        raise MissingDependencyError(
            f"backbone {spec.name!r} is consumed through the external 'ultralytics' "
            "provider, which is not integrated in this build; use resnet50 or "
            "inception_resnet_v2, or train through the provider directly"
        )
    if spec.weights_source == "random" and init_seed is not None:
        keras.utils.set_random_seed(init_seed & 0x7FFFFFFF)
    base = _build_cnn_base(spec)
    for layer in base.layers:
        layer.trainable = False
    groups = [layer for layer in base.layers if layer.weights]
    return ModelHandle(spec=spec, base=base, _groups=groups)


def _glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = float(np.sqrt(6.0 / (fan_in + fan_out)))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(np.float32)


def attach_binary_head(handle: ModelHandle, seed: int = 0) -> ModelHandle:
    """Add the 2-class Dense head with a seeded glorot-uniform init."""
    if handle.head_attached:
        raise ValueError("binary head already attached")
    feat_dim = int(handle.base.output_shape[-1])
    head = keras.layers.Dense(handle.spec.head_classes, name="binary_head")
    inputs = keras.Input(shape=handle.spec.input_size, name="pixels")
    logits = head(handle.base(inputs))
    model = keras.Model(inputs, logits, name=f"{handle.spec.name}_binary")
    rng = np.random.Generator(np.random.Philox(key=np.array([seed & _U64, 2], dtype=np.uint64)))
    head.set_weights([
        _glorot_uniform(rng, feat_dim, handle.spec.head_classes),
        np.zeros(handle.spec.head_classes, dtype=np.float32),
    ])
    head.trainable = True
    handle.head = head
    handle.model = model
    handle.head_attached = True
    return handle


def unfreeze_last(handle: ModelHandle, n: int) -> ModelHandle:
    """Make exactly the final ``n`` parameter groups trainable (head stays trainable)."""
    groups = handle._groups
    if not (0 <= n <= len(groups)):
        raise ValueError(f"n={n} outside [0, {len(groups)}]")
    cut = len(groups) - n
    for i, layer in enumerate(groups):
        layer.trainable = i >= cut
    if handle.head is not None:
        handle.head.trainable = True
    return handle


def forward(handle: ModelHandle, batch: np.ndarray) -> np.ndarray:
    """Inference-mode class scores, shape (batch, 2), float32."""
    if not handle.head_attached or handle.model is None:
        raise ValueError("attach_binary_head before calling forward")
    batch = np.asarray(batch)
    if batch.ndim != 4 or tuple(batch.shape[1:]) != handle.spec.input_size:
        raise ShapeError(
            f"batch shape {batch.shape} does not match input size {handle.spec.input_size}"
        )
    logits = handle.model(handle.preprocess(batch), training=False)
    return np.asarray(logits, dtype=np.float32)
