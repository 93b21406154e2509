"""Pipeline configuration document: JSON, schema-validated, unknown keys rejected.

Environment variables may override paths only: BINSE_DATASET_DIR,
BINSE_MANIFEST, BINSE_CHECKPOINT_DIR.
"""

import json
import os
from dataclasses import dataclass, field

import jsonschema

from . import binaural
from .dsp import StftConfig
from .errors import InvalidConfigError
from .model import BOTTLENECK_KINDS, MB_CONV_MODES, ModelConfig
from .train import TrainConfig

_SCENARIO_SIDE = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "azimuth": {"type": "number", "minimum": -90, "maximum": 90},
        "phase_invert_right": {"type": "boolean"},
        "brir_file": {"type": "string"},
    },
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "stft": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "window_len": {"type": "integer", "minimum": 1},
                "hop": {"type": "integer", "minimum": 1},
                "fft_size": {"type": "integer", "minimum": 1},
                "centered": {"type": "boolean"},
            },
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_ssm_pairs": {"type": "integer", "minimum": 1},
                "n_render_blocks": {"type": "integer", "minimum": 1},
                "base_channels": {"type": "integer", "minimum": 1},
                "mb_kernel": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
                "mb_dilations": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "bsd_encoder_channels": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "n_ctfa": {"type": "integer", "minimum": 1},
                "ctfa_hidden": {"type": "integer", "minimum": 1},
                "mb_conv_mode": {"enum": list(MB_CONV_MODES)},
                "bottleneck": {"enum": list(BOTTLENECK_KINDS)},
                "use_cross_attention": {"type": "boolean"},
                "use_ifm": {"type": "boolean"},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "batch_size": {"type": "integer", "minimum": 1},
                "max_steps": {"type": "integer", "minimum": 0},
                "grad_clip_norm": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer"},
                "beta1": {"type": "number"},
                "beta2": {"type": "number"},
                "adam_eps": {"type": "number"},
                "gamma": {"type": "number"},
                "eval_every": {"type": "integer", "minimum": 0},
                "checkpoint_dir": {"type": "string"},
                "lr_cosine_decay": {"type": "boolean"},
            },
        },
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "manifest": {"type": "string"},
            },
        },
        "scenarios": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                kind: {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"speech": _SCENARIO_SIDE, "noise": _SCENARIO_SIDE},
                }
                for kind in binaural.SCENARIO_KINDS
            },
        },
    },
}


@dataclass
class PipelineConfig:
    stft: StftConfig = field(default_factory=StftConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    dataset_dir: str = "dataset"
    manifest_path: str = "manifest.jsonl"
    scenario_overrides: dict = field(default_factory=dict)

    def scenarios(self) -> dict:
        """Default scenario map with any configured overrides applied."""
        out = binaural.default_scenarios()
        for kind, sides in self.scenario_overrides.items():
            speech = _side_to_brir(sides.get("speech"))
            noise = _side_to_brir(sides.get("noise"))
            base = out[kind]
            out[kind] = binaural.ScenarioSpec(
                kind, speech or base.speech_brir, noise or base.noise_brir)
        return out


def _side_to_brir(side: dict | None):
    if not side:
        return None
    if "brir_file" in side:
        return binaural.load_brir(side["brir_file"])
    return binaural.synth_brir(binaural.SyntheticBrirParams(
        azimuth=side.get("azimuth", 0.0),
        phase_invert_right=side.get("phase_invert_right", False),
    ))


def validate_document(doc: dict):
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        key = "/".join(str(p) for p in exc.absolute_path) or "(root)"
        raise InvalidConfigError(f"config key '{key}': {exc.message}") from exc


def load_config(path) -> PipelineConfig:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    validate_document(doc)
    stft = StftConfig(**doc.get("stft", {}))
    model_doc = dict(doc.get("model", {}))
    for key in ("mb_kernel", "mb_dilations", "bsd_encoder_channels"):
        if key in model_doc:
            model_doc[key] = tuple(model_doc[key])
    model_cfg = ModelConfig(**model_doc)
    train_cfg = TrainConfig(**doc.get("train", {}))
    dataset_doc = doc.get("dataset", {})
    cfg = PipelineConfig(
        stft=stft,
        model=model_cfg,
        train=train_cfg,
        dataset_dir=os.environ.get("BINSE_DATASET_DIR", dataset_doc.get("dir", "dataset")),
        manifest_path=os.environ.get("BINSE_MANIFEST", dataset_doc.get("manifest", "manifest.jsonl")),
        scenario_overrides=doc.get("scenarios", {}),
    )
    ckpt_override = os.environ.get("BINSE_CHECKPOINT_DIR")
    if ckpt_override:
        cfg.train.checkpoint_dir = ckpt_override
    return cfg
