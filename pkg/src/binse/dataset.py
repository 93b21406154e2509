"""Manifest-driven generation and loading of training examples.

A manifest is a JSON-lines file of fully materialized recipes; generating it
twice from the same manifest produces byte-identical output files. Each
example directory holds y.wav (monaural mixture), yl.wav/yr.wav (binaural
targets) and s.wav (scaled clean reference).
"""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import audio_io, binaural
from .binaural import SCENARIO_KINDS, ScenarioSpec
from .dsp import DEFAULT_SAMPLE_RATE, Waveform
from .errors import BinseError, CorruptDatasetError, InvalidInputError

EXAMPLE_FILES = ("y.wav", "yl.wav", "yr.wav", "s.wav")


@dataclass
class MixtureRecipe:
    """Deterministic description of one training example."""

    speech_path: str
    noise_path: str
    epsilon_db: float
    snr_db: float
    scenario_kind: str
    segment_len: int = 40000
    seed: int = 0
    recipe_id: str = ""

    def __post_init__(self):
        if self.scenario_kind not in SCENARIO_KINDS:
            raise InvalidInputError(f"unknown scenario kind: {self.scenario_kind}")
        if not self.recipe_id:
            self.recipe_id = self.digest()[:12]

    def digest(self) -> str:
        payload = json.dumps(
            [self.speech_path, self.noise_path, self.epsilon_db, self.snr_db,
             self.scenario_kind, self.segment_len, self.seed],
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()


@dataclass
class Manifest:
    """Ordered recipe list plus a hash of the generating configuration."""

    recipes: list = field(default_factory=list)
    config_hash: str = ""

    def __post_init__(self):
        seen = set()
        for r in self.recipes:
            key = (r.speech_path, r.noise_path, r.seed)
            if key in seen:
                raise InvalidInputError(f"duplicate (speech, noise, seed) triple: {key}")
            seen.add(key)
        if not self.config_hash:
            self.config_hash = hashlib.sha256(
                "\n".join(r.digest() for r in self.recipes).encode()
            ).hexdigest()[:16]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"config_hash": self.config_hash}) + "\n")
            for r in self.recipes:
                fh.write(json.dumps(asdict(r), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            lines = [json.loads(ln) for ln in fh if ln.strip()]
        if not lines:
            raise CorruptDatasetError(f"{path}: empty manifest")
        header = lines[0]
        recipes = [MixtureRecipe(**entry) for entry in lines[1:]]
        return cls(recipes, header.get("config_hash", ""))


def synthesize_example(recipe: MixtureRecipe, scenarios: dict[str, ScenarioSpec] | None = None):
    """Run the synthesis chain for one recipe, entirely in memory.

    Order: trim/loop noise -> scale speech -> scale noise -> monaural sum ->
    binaural rendering. Returns {"y", "yl", "yr", "s"} waveforms.
    """
    scenarios = scenarios or binaural.default_scenarios()
    rng = np.random.default_rng(recipe.seed)
    x = audio_io.read_wav(recipe.speech_path)
    v = audio_io.read_wav(recipe.noise_path)
    x = binaural.trim_or_loop(x, recipe.segment_len, rng)
    v = binaural.trim_or_loop(v, recipe.segment_len, rng)
    x_hat = binaural.scale_speech(x, recipe.epsilon_db)
    v_hat = binaural.scale_noise(v, x_hat, recipe.snr_db)
    y = binaural.make_monaural_mixture(x_hat, v_hat)
    y_l, y_r = binaural.render_binaural(x_hat, v_hat, scenarios[recipe.scenario_kind])
    return {"y": y, "yl": y_l, "yr": y_r, "s": x_hat}


def generate_dataset(manifest: Manifest, out_dir, scenarios=None, wav_format: str = "float32"):
    """Write every recipe's example files under out_dir/<recipe_id>/.

    Per-recipe failures are recorded in the summary and generation continues.
    An index.jsonl is written once at the end (successful entries only).
    """
    os.makedirs(out_dir, exist_ok=True)
    scenarios = scenarios or binaural.default_scenarios()
    index, failures = [], []
    for recipe in manifest.recipes:
        try:
            example = synthesize_example(recipe, scenarios)
            example_dir = os.path.join(out_dir, recipe.recipe_id)
            os.makedirs(example_dir, exist_ok=True)
            for name, wave in example.items():
                audio_io.write_wav(os.path.join(example_dir, f"{name}.wav"), wave, wav_format)
            entry = asdict(recipe)
            entry["dir"] = recipe.recipe_id
            index.append(entry)
        except (BinseError, OSError, ValueError) as exc:
            failures.append({"recipe_id": recipe.recipe_id, "error": str(exc)})
    index_path = os.path.join(out_dir, "index.jsonl")
    with open(index_path, "w", encoding="utf-8") as fh:
        for entry in index:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    return {
        "n_requested": len(manifest.recipes),
        "n_written": len(index),
        "failures": failures,
        "index_path": index_path,
        "config_hash": manifest.config_hash,
    }


def load_index(out_dir):
    path = os.path.join(out_dir, "index.jsonl")
    if not os.path.exists(path):
        raise CorruptDatasetError(f"missing dataset index: {path}")
    with open(path, encoding="utf-8") as fh:
        return [json.loads(ln) for ln in fh if ln.strip()]


def load_example(out_dir, index_entry) -> dict[str, Waveform]:
    """Load the four waveforms of one generated example, checking consistency."""
    example_dir = os.path.join(out_dir, index_entry["dir"])
    segment_len = int(index_entry["segment_len"])
    out = {}
    for fname in EXAMPLE_FILES:
        path = os.path.join(example_dir, fname)
        if not os.path.exists(path):
            raise CorruptDatasetError(f"missing file: {path}")
        w = audio_io.read_wav(path, target_rate=DEFAULT_SAMPLE_RATE)
        if len(w) != segment_len:
            raise CorruptDatasetError(
                f"{path}: expected {segment_len} samples, found {len(w)}"
            )
        out[fname.split(".")[0]] = w
    return out
