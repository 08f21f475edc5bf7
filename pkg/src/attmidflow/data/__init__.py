"""Synthetic flow data, ``.flo`` files, images and flow visualisation."""

from .dataset import (
    Augment,
    collate,
    dataset,
    flow_to_chw,
    flow_to_hwc,
    hflip,
    images_to_input,
    load_flyingchairs,
    photometric_jitter,
    read_manifest,
    sample_seeds,
    train_eval_split,
    write_dataset,
)
from .flo import read_flo, write_flo
from .imageio import read_image, write_image
from .synth import Layer, SamplePair, SceneSpec, Texture, generate, random_scene, translation_scene
from .viz import flow_to_color

__all__ = [
    "Augment", "collate", "dataset", "flow_to_chw", "flow_to_hwc", "hflip", "images_to_input",
    "load_flyingchairs", "photometric_jitter", "read_manifest", "sample_seeds", "train_eval_split",
    "write_dataset", "read_flo", "write_flo", "read_image", "write_image", "Layer", "SamplePair",
    "SceneSpec", "Texture", "generate", "random_scene", "translation_scene", "flow_to_color",
]
