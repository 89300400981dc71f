import numpy as np
import pytest

from hemopipe.backbones import (
    BACKBONE_TABLE,
    attach_binary_head,
    backbone_spec,
    forward,
    load_backbone,
    unfreeze_last,
)
from hemopipe.errors import MissingDependencyError, ShapeError


@pytest.fixture(scope="module")
def resnet_handle():
    handle = load_backbone(backbone_spec("resnet50", "random"), init_seed=1234)
    return attach_binary_head(handle, seed=99)


def test_spec_input_sizes():
    assert backbone_spec("resnet50").input_size == (224, 224, 3)
    assert backbone_spec("inception_resnet_v2").input_size == (299, 299, 3)
    for name in ("yolov8s", "yolov11n", "yolov11s"):
        assert backbone_spec(name).input_size == (224, 224, 3)


def test_unknown_backbone_name_rejected():
    with pytest.raises(ValueError, match="resnet34"):
        backbone_spec("resnet34")
    with pytest.raises(ValueError):
        backbone_spec("resnet50", weights_source="laplace")


def test_resnet_handle_input_size(resnet_handle):
    assert resnet_handle.spec.input_size == (224, 224, 3)
    assert resnet_handle.parameter_count > 20_000_000


def test_yolo_backbones_need_external_provider():
    for name in ("yolov8s", "yolov11n", "yolov11s"):
        with pytest.raises(MissingDependencyError, match="ultralytics"):
            load_backbone(backbone_spec(name))


def test_inception_loads_offline_with_random_weights():
    handle = load_backbone(backbone_spec("inception_resnet_v2", "random"), init_seed=5)
    assert handle.spec.input_size == (299, 299, 3)
    assert all(not trainable for _, trainable in handle.layers)
    attach_binary_head(handle, seed=5)
    scores = forward(handle, np.zeros((1, 299, 299, 3), dtype=np.uint8))
    assert scores.shape == (1, 2)
    assert np.isfinite(scores).all()


def test_load_starts_fully_frozen():
    handle = load_backbone(backbone_spec("resnet50", "random"), init_seed=1)
    assert len(handle.layers) == len(handle.layer_names)
    assert all(not trainable for _, trainable in handle.layers)


def test_head_init_is_seed_deterministic():
    a = attach_binary_head(load_backbone(backbone_spec("resnet50", "random"), init_seed=1), seed=7)
    b = attach_binary_head(load_backbone(backbone_spec("resnet50", "random"), init_seed=1), seed=7)
    for wa, wb in zip(a.head.get_weights(), b.head.get_weights()):
        assert np.array_equal(wa, wb)
    c = attach_binary_head(load_backbone(backbone_spec("resnet50", "random"), init_seed=1), seed=8)
    assert not np.array_equal(a.head.get_weights()[0], c.head.get_weights()[0])


def test_head_cannot_attach_twice(resnet_handle):
    with pytest.raises(ValueError, match="already"):
        attach_binary_head(resnet_handle, seed=0)


def test_unfreeze_boundaries_and_counts():
    handle = attach_binary_head(
        load_backbone(backbone_spec("resnet50", "random"), init_seed=2), seed=2
    )
    total = len(handle.layer_names)

    unfreeze_last(handle, 0)
    assert handle.trainable_layer_names == []
    assert handle.head.trainable  # head is always trainable

    unfreeze_last(handle, 10)
    assert len(handle.trainable_layer_names) == 10
    assert handle.trainable_layer_names == handle.layer_names[-10:]

    unfreeze_last(handle, total)
    assert len(handle.trainable_layer_names) == total

    with pytest.raises(ValueError):
        unfreeze_last(handle, total + 1)
    with pytest.raises(ValueError):
        unfreeze_last(handle, -1)


def test_unfreeze_monotonicity():
    handle = load_backbone(backbone_spec("resnet50", "random"), init_seed=3)
    previous: set[str] = set()
    for n in (0, 3, 10, 25):
        unfreeze_last(handle, n)
        current = set(handle.trainable_layer_names)
        assert previous <= current
        previous = current


def test_forward_contracts(resnet_handle):
    black = np.zeros((1, 224, 224, 3), dtype=np.uint8)
    scores = forward(resnet_handle, black)
    assert scores.shape == (1, 2)
    assert np.isfinite(scores).all()

    batch = np.zeros((5, 224, 224, 3), dtype=np.uint8)
    assert forward(resnet_handle, batch).shape == (5, 2)

    again = forward(resnet_handle, batch)
    assert np.array_equal(forward(resnet_handle, batch), again)

    with pytest.raises(ShapeError):
        forward(resnet_handle, np.zeros((1, 128, 128, 3), dtype=np.uint8))


def test_forward_requires_head():
    handle = load_backbone(backbone_spec("resnet50", "random"), init_seed=4)
    with pytest.raises(ValueError, match="head"):
        forward(handle, np.zeros((1, 224, 224, 3), dtype=np.uint8))


def test_one_step_changes_no_frozen_parameter():
    from hemopipe._tfsetup import keras, tf

    handle = attach_binary_head(
        load_backbone(backbone_spec("resnet50", "random"), init_seed=6), seed=6
    )
    unfreeze_last(handle, 10)
    frozen_layers = [
        layer for layer in handle._groups if not layer.trainable
    ]
    before = {
        layer.name: [w.copy() for w in layer.get_weights()] for layer in frozen_layers
    }

    model = handle.model
    opt = keras.optimizers.SGD(learning_rate=0.05, momentum=0.9)
    lossfn = keras.losses.SparseCategoricalCrossentropy(from_logits=True)
    x = handle.preprocess(
        np.random.default_rng(0).integers(0, 256, size=(4, 224, 224, 3), dtype=np.uint8)
    )
    y = tf.constant([0, 1, 0, 1])
    with tf.GradientTape() as tape:
        loss = lossfn(y, model(x, training=True))
    grads = tape.gradient(loss, model.trainable_variables)
    opt.apply_gradients(zip(grads, model.trainable_variables))

    max_delta = 0.0
    for layer in frozen_layers:
        for w_before, w_after in zip(before[layer.name], layer.get_weights()):
            max_delta = max(max_delta, float(np.max(np.abs(w_after - w_before))))
    assert max_delta == 0.0
