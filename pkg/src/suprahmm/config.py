"""Experiment configuration: one JSON document, validated up front.

Every command consumes the same document; command-line flags override
individual keys, and the resolved configuration is echoed into every
output for provenance.  The environment variable SUPRAHMM_SEED, when set,
overrides the configured seed.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .classifiers import DEFAULT_GMM_COMPONENTS, DEFAULT_VQ_CODEBOOK, TrainOptions
from .features import MfccConfig
from .suprasegmental import DEFAULT_ALPHA, SuprasegmentalLayout

SEED_ENV_VAR = "SUPRAHMM_SEED"


class ConfigError(Exception):
    """Invalid or inconsistent experiment configuration."""


_FEATURE_KEYS = {
    "preemphasis_coeff": 0.97,
    "frame_length_ms": 25.0,
    "frame_shift_ms": 10.0,
    "fft_size": 512,
    "num_mel_filters": 26,
    "num_cepstra": 16,
    "delta_window": 2,
    "sample_rate_hz": 16000,
}

_MODEL_KEYS = {
    "num_states": 6,
    "num_mixtures": 3,
    "train_iters": [6, 6, 8],
    "tol": 1e-4,
    "alpha": DEFAULT_ALPHA,
    "supra_layout": None,
    "gmm_components": DEFAULT_GMM_COMPONENTS,
    "vq_codebook_size": DEFAULT_VQ_CODEBOOK,
}


@dataclass
class ExperimentConfig:
    features: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    split: dict | None = None
    labels: list | None = None
    seed: int = 0
    output_dir: str | None = None

    def __post_init__(self):
        if self.labels is not None:
            if not self.labels or len(set(self.labels)) != len(self.labels):
                raise ConfigError("labels must be a non-empty list without duplicates")
            self.labels = [str(l) for l in self.labels]
        self.features = {**_FEATURE_KEYS, **(self.features or {})}
        self.model = {**_MODEL_KEYS, **(self.model or {})}
        unknown = set(self.features) - set(_FEATURE_KEYS)
        if unknown:
            raise ConfigError("unknown feature keys: %s" % sorted(unknown))
        unknown = set(self.model) - set(_MODEL_KEYS)
        if unknown:
            raise ConfigError("unknown model keys: %s" % sorted(unknown))
        try:
            self.mfcc_config()
            self.train_options()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")

    def mfcc_config(self) -> MfccConfig:
        f = self.features
        return MfccConfig(
            preemphasis_coeff=f["preemphasis_coeff"],
            frame_length_ms=f["frame_length_ms"],
            frame_shift_ms=f["frame_shift_ms"],
            fft_size=f["fft_size"],
            num_mel_filters=f["num_mel_filters"],
            num_cepstra=f["num_cepstra"],
            delta_window=f["delta_window"],
        )

    def train_options(self) -> TrainOptions:
        m = self.model
        layout = m["supra_layout"]
        iters = m["train_iters"]
        if len(iters) != 3:
            raise ConfigError("train_iters must list three stage counts")
        return TrainOptions(
            num_states=m["num_states"],
            num_mixtures=m["num_mixtures"],
            iters=tuple(int(i) for i in iters),
            tol=m["tol"],
            seed=self.seed,
            alpha=m["alpha"],
            layout=SuprasegmentalLayout(tuple(layout)) if layout else None,
            gmm_components=m["gmm_components"],
            vq_codebook_size=m["vq_codebook_size"],
        )

    def to_dict(self) -> dict:
        return {
            "features": dict(self.features),
            "model": dict(self.model),
            "split": self.split,
            "labels": self.labels,
            "seed": self.seed,
            "output_dir": self.output_dir,
        }


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Read the config document, apply overrides, honor SUPRAHMM_SEED."""
    doc = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError("cannot read config %s: %s" % (path, exc)) from exc
        except json.JSONDecodeError as exc:
            raise ConfigError("config %s is not valid JSON: %s" % (path, exc)) from exc
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if "." in key:
            section, sub = key.split(".", 1)
            doc.setdefault(section, {})[sub] = value
        else:
            doc[key] = value
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            doc["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError("%s must be an integer" % SEED_ENV_VAR) from exc
    known = {"features", "model", "split", "labels", "seed", "output_dir"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError("unknown config sections: %s" % sorted(unknown))
    return ExperimentConfig(
        features=doc.get("features", {}),
        model=doc.get("model", {}),
        split=doc.get("split"),
        labels=doc.get("labels"),
        seed=doc.get("seed", 0),
        output_dir=doc.get("output_dir"),
    )
