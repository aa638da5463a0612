"""Named bundles of ensemble, receiver and schedule."""

from __future__ import annotations

from dataclasses import dataclass

from .core import HADAMARD, Ensemble, Unitary2, canonical_ensembles
from .network import ExtractionSchedule, NetworkConfig
from .receivers import gu_receiver, tetrad_receiver

IDEAL = ExtractionSchedule(0.3)
EXPERIMENTAL = ExtractionSchedule.experimental()
SCHEDULES = {"ideal": IDEAL, "experimental": EXPERIMENTAL}


def named_receiver(name: str) -> tuple[Unitary2, Unitary2]:
    if name == "binary":
        return HADAMARD, HADAMARD
    if name == "gu":
        return gu_receiver()
    if name == "tetrad":
        return tetrad_receiver()
    if name == "identity":
        return Unitary2.identity(), Unitary2.identity()
    raise KeyError(f"unknown receiver {name!r}; choose binary, gu, tetrad or identity")


@dataclass(frozen=True)
class Preset:
    ensemble: str
    receiver: str

    def build(self, schedule: ExtractionSchedule = IDEAL, max_loops: int = 12) -> tuple[Ensemble, NetworkConfig]:
        uf, ub = named_receiver(self.receiver)
        return canonical_ensembles()[self.ensemble], NetworkConfig(uf, ub, schedule, max_loops)


PRESETS = {
    "binary": Preset("binary", "binary"),
    "gu": Preset("gu", "gu"),
    "tetrad": Preset("tetrad", "tetrad"),
    "orthogonal": Preset("orthogonal", "identity"),
}
