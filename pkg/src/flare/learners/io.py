"""Versioned text serialization for trained models.

Models persist as JSON: ``{"format": "flare-model", "version": 1,
"kind": <model kind>, "payload": {...}}``. Floats round-trip exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

from .boosting import GbtModel
from .forest import RandomForest
from .linear import LogisticModel
from .tree import DecisionTree

FORMAT_NAME = "flare-model"
FORMAT_VERSION = 1

_KINDS = {
    "tree": DecisionTree,
    "forest": RandomForest,
    "logreg": LogisticModel,
    "gbt": GbtModel,
}


def model_kind(model) -> str:
    for kind, cls in _KINDS.items():
        if isinstance(model, cls):
            return kind
    raise TypeError(f"unknown model type {type(model).__name__}")


def model_to_dict(model) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "kind": model_kind(model),
        "payload": model.to_dict(),
    }


def model_from_dict(data: dict):
    if data.get("format") != FORMAT_NAME:
        raise ValueError("not a flare model record")
    if data.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {data.get('version')}")
    cls = _KINDS.get(data.get("kind", ""))
    if cls is None:
        raise ValueError(f"unknown model kind {data.get('kind')!r}")
    return cls.from_dict(data["payload"])


def save_model(model, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path: str | Path):
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
