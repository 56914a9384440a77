"""Operating modes: the proposed design and its benchmark variants."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .config import SystemConfig


@dataclass(frozen=True)
class ModeSpec:
    """Structural switches of one benchmark mode.

    Passive-surface modes run with sigma_z2 = 0 and a_max = 1 (see
    :func:`effective_config`) and no surface power constraint; the sensing-only
    bound drops all rate service and transmits a single full-power beam.
    """

    name: str
    common_stream: bool
    rate_constraints: bool
    active_ris: bool
    ris_power_constraint: bool

    def n_streams(self, U: int) -> int:
        if not self.rate_constraints:
            return 1
        return U + 1 if self.common_stream else U


MODES: dict[str, ModeSpec] = {
    "aris_rsma": ModeSpec("aris_rsma", True, True, True, True),
    "aris_sdma": ModeSpec("aris_sdma", False, True, True, True),
    "pris_rsma": ModeSpec("pris_rsma", True, True, False, False),
    "pris_sdma": ModeSpec("pris_sdma", False, True, False, False),
    "only_sensing": ModeSpec("only_sensing", False, False, True, True),
}


def effective_config(cfg: SystemConfig, mode: ModeSpec) -> SystemConfig:
    """Config as seen by the optimizer under the given mode."""
    if mode.active_ris:
        return cfg
    return replace(cfg, sigma_z2=0.0, a_max=1.0)
