"""Static backbone registry (no framework imports).

A "layer" for freezing purposes is a weight-owning layer of the provider's
flat layer list; see :mod:`hemopipe.backbones` for the loading adapter.
"""

from __future__ import annotations

from dataclasses import dataclass

CNN_FAMILY = "keras"
YOLO_FAMILY = "yolo"

# name -> (input size WxHxC, family)
BACKBONE_TABLE: dict[str, tuple[tuple[int, int, int], str]] = {
    "yolov8s": ((224, 224, 3), YOLO_FAMILY),
    "yolov11n": ((224, 224, 3), YOLO_FAMILY),
    "yolov11s": ((224, 224, 3), YOLO_FAMILY),
    "resnet50": ((224, 224, 3), CNN_FAMILY),
    "inception_resnet_v2": ((299, 299, 3), CNN_FAMILY),
}

WEIGHT_SOURCES = ("random", "imagenet")


@dataclass(frozen=True)
class BackboneSpec:
    name: str
    input_size: tuple[int, int, int]
    weights_source: str = "random"
    head_classes: int = 2

    @property
    def family(self) -> str:
        return BACKBONE_TABLE[self.name][1]


def backbone_spec(name: str, weights_source: str = "random") -> BackboneSpec:
    if name not in BACKBONE_TABLE:
        raise ValueError(
            f"unknown backbone {name!r}; choose one of {sorted(BACKBONE_TABLE)}"
        )
    if weights_source not in WEIGHT_SOURCES:
        raise ValueError(f"unknown weights_source {weights_source!r}")
    return BackboneSpec(name=name, input_size=BACKBONE_TABLE[name][0], weights_source=weights_source)
