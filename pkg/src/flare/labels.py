"""Architecture family labels attached to traces and windows."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class ModelFamily(str, Enum):
    CNN = "cnn"
    RNN = "rnn"
    OTHER = "other"


# Known model-name -> family assignments. Labels constructed with a name that
# is registered here must carry the matching family; unregistered names are
# accepted as-is (open world).
MODEL_FAMILY_REGISTRY: dict[str, ModelFamily] = {
    "resnet18": ModelFamily.CNN,
    "mobilenetv2": ModelFamily.CNN,
    "densenet": ModelFamily.CNN,
    "bilstm": ModelFamily.RNN,
    "gru": ModelFamily.RNN,
    "lstm": ModelFamily.RNN,
    "vanilla_rnn": ModelFamily.RNN,
    "lstm_gru": ModelFamily.RNN,
}


def register_model_family(name: str, family: ModelFamily) -> None:
    """Register (or re-pin) the family of a model name."""
    MODEL_FAMILY_REGISTRY[name] = ModelFamily(family)


@dataclass(frozen=True)
class ArchLabel:
    """Ground-truth label of a trace: family plus provenance metadata."""

    family: ModelFamily
    model_name: str
    dataset_name: str = ""

    def __post_init__(self):
        registered = MODEL_FAMILY_REGISTRY.get(self.model_name)
        if registered is not None and registered != self.family:
            raise ValueError(
                f"model {self.model_name!r} is registered as {registered.value}, "
                f"got {self.family.value}"
            )
