"""Carrier-signal constants and measurement-set definitions.

Wavelengths derive from the nominal carrier frequencies; synthetic wide-lane
carriers are integer combinations of the raw ones, introduced by a unimodular
mixing of the phase measurements (and congruently of their ambiguities and
errors). A measurement set lists which phase combinations and which code signals
enter the model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from ..lattice import UnimodularTransform

SPEED_OF_LIGHT = 299_792_458.0  # m/s

FREQ_HZ = {
    "L1": 1.57542e9,
    "L2": 1.2276e9,
    "L5": 1.17645e9,
}
BASE_SIGNALS = ("L1", "L2", "L5")

WAVELENGTH_M = {q: SPEED_OF_LIGHT / f for q, f in FREQ_HZ.items()}

# iono delay is measured in meters at L1; signal q sees it scaled by (lambda_q/lambda_L1)^2
IONO_SCALE = {q: (WAVELENGTH_M[q] / WAVELENGTH_M["L1"]) ** 2 for q in BASE_SIGNALS}

# phase combinations over (L1, L2, L5)
PHASE_COMBO = {
    "L1": np.array([1, 0, 0]),
    "L2": np.array([0, 1, 0]),
    "L5": np.array([0, 0, 1]),
    "W": np.array([1, -1, 0]),
    "EW": np.array([0, 1, -1]),
}


def wide_lane_transform() -> UnimodularTransform:
    """The 3x3 integer mixing taking (L1, L2, L5) phases to (L1, W, EW)."""
    return UnimodularTransform([[1, 0, 0], [1, -1, 0], [0, 1, -1]])


def effective_wavelength(combo: np.ndarray) -> float:
    """c over the combination's effective frequency sum_q u_q f_q."""
    f = sum(int(u) * FREQ_HZ[q] for u, q in zip(combo, BASE_SIGNALS))
    if f == 0:
        raise ValidationError("phase combination has zero effective frequency")
    return SPEED_OF_LIGHT / f


@dataclass(frozen=True)
class MeasurementSet:
    """Phase combination names and raw code signals of one measurement set."""

    name: str
    phase_types: tuple
    code_types: tuple

    @property
    def n_phase(self) -> int:
        return len(self.phase_types)

    def phase_combos(self) -> np.ndarray:
        return np.array([PHASE_COMBO[t] for t in self.phase_types])


MEASUREMENT_SETS = {
    "L1": MeasurementSet("L1", ("L1",), ("L1",)),
    "L1+L2": MeasurementSet("L1+L2", ("L1", "L2"), ("L1", "L2")),
    "L1+L2+L5": MeasurementSet("L1+L2+L5", ("L1", "L2", "L5"), ("L1", "L2", "L5")),
    "LW": MeasurementSet("LW", ("W",), ("L1", "L2")),
    "LW+LEW": MeasurementSet("LW+LEW", ("W", "EW"), ("L1", "L2", "L5")),
}


def measurement_set(name: str) -> MeasurementSet:
    try:
        return MEASUREMENT_SETS[name]
    except KeyError:
        raise ValidationError(
            f"unknown measurement set {name!r}; choose from {sorted(MEASUREMENT_SETS)}"
        ) from None
