"""JSON (de)serialization of the harness configuration blocks.

A config file is one JSON object with optional sections ``dataset``,
``scene``, ``noise``, ``postprocess`` and ``encoder``, each mirroring the
fields of the corresponding dataclass.  Unknown keys are rejected so typos
fail loudly.
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path

from panoptic.core import DatasetSpec, PanopticError, cityscapes_like_spec
from panoptic.harness.noise import NoiseConfig
from panoptic.harness.scenes import SceneConfig
from panoptic.postprocess import PostprocessParams
from panoptic.targets import EncoderParams

SECTIONS = ("dataset", "scene", "noise", "postprocess", "encoder")


def _build(cls, data: dict, section: str, convert=None):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise PanopticError(f"unknown keys in '{section}' config: {sorted(unknown)}")
    kwargs = dict(data)
    if convert:
        for key, fn in convert.items():
            if key in kwargs:
                kwargs[key] = fn(kwargs[key])
    return cls(**kwargs)


def dataset_spec_from_dict(data: dict) -> DatasetSpec:
    return _build(
        DatasetSpec,
        data,
        "dataset",
        convert={"thing_classes": frozenset, "stuff_classes": frozenset},
    )


def scene_config_from_dict(data: dict) -> SceneConfig:
    return _build(
        SceneConfig,
        data,
        "scene",
        convert={
            "num_instances": tuple,
            "size_range": tuple,
            "stuff_classes": tuple,
            "thing_classes": tuple,
        },
    )


def noise_config_from_dict(data: dict) -> NoiseConfig:
    return _build(NoiseConfig, data, "noise")


def postprocess_params_from_dict(data: dict) -> PostprocessParams:
    return _build(PostprocessParams, data, "postprocess")


def encoder_params_from_dict(data: dict) -> EncoderParams:
    return _build(EncoderParams, data, "encoder")


def dataset_spec_to_dict(spec: DatasetSpec) -> dict:
    return {
        "num_classes": spec.num_classes,
        "thing_classes": sorted(spec.thing_classes),
        "stuff_classes": sorted(spec.stuff_classes),
        "void_label": spec.void_label,
        "label_divisor": spec.label_divisor,
        "stuff_area_threshold": spec.stuff_area_threshold,
    }


def scene_config_to_dict(config: SceneConfig) -> dict:
    out = dataclasses.asdict(config)
    for key in ("num_instances", "size_range", "stuff_classes", "thing_classes"):
        out[key] = list(out[key])
    return out


@dataclasses.dataclass(frozen=True)
class HarnessConfig:
    """All configuration blocks with their defaults resolved."""

    dataset: DatasetSpec
    scene: SceneConfig
    noise: NoiseConfig
    postprocess: PostprocessParams
    encoder: EncoderParams


def load_config(path=None, overrides: dict | None = None) -> HarnessConfig:
    """Loads a config file, falling back to defaults for absent sections.

    ``overrides`` maps section names to dicts merged on top of the file's
    values (CLI flags use this).
    """
    raw: dict = {}
    if path is not None:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise PanopticError("config file must contain a JSON object")
        unknown = set(raw) - set(SECTIONS)
        if unknown:
            raise PanopticError(f"unknown config sections: {sorted(unknown)}")
    merged: dict[str, dict] = {}
    for section in SECTIONS:
        merged[section] = dict(raw.get(section, {}))
        if overrides and section in overrides:
            merged[section].update(overrides[section])
    dataset = (
        dataset_spec_from_dict(merged["dataset"])
        if merged["dataset"]
        else cityscapes_like_spec()
    )
    return HarnessConfig(
        dataset=dataset,
        scene=scene_config_from_dict(merged["scene"]),
        noise=noise_config_from_dict(merged["noise"]),
        postprocess=postprocess_params_from_dict(merged["postprocess"]),
        encoder=encoder_params_from_dict(merged["encoder"]),
    )
