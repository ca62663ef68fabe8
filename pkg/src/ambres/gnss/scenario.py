"""Measurement scenario: signals, noise processes, priors, satellite geometry.

A scenario is a plain configuration object; model assembly lives in builder.py.
Scenario files are YAML documents; line-of-sight vectors may be given inline,
loaded from a CSV (epoch, satellite-id, ex, ey, ez), or generated synthetically.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from ..errors import ValidationError
from .constellation import synthetic_constellation
from .signals import measurement_set

UNIT_NORM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Scenario:
    """Inputs of one ambiguity-resolution computation.

    Noise sigmas are per component (time-varying, time-constant); the two
    components are independent and add, so the total error std is each value
    times sqrt(2) when they are equal. Carrier noise is in cycles, code noise in
    meters, the single-differenced iono prior sigma in meters at L1.
    """

    satellites: np.ndarray              # (n_epochs, K, 3) unit LOS
    measurement_set: str = "L1+L2+L5"
    epoch_interval: float = 1.0
    carrier_noise: tuple = (0.02, 0.02)
    code_noise: tuple = (0.5, 0.5)
    ar1_phase: float = 0.95
    ar1_code: float = 0.5
    sigma_delta_iono: float = 0.0
    coordinates_prior: str = "kinematic"   # or "static"
    windup_informed: bool = False
    interfreq_bias_prior: str = "non_informative"  # or "informative"
    iono_prior_override: np.ndarray | None = None  # info matrix over iono block
    bias_prior_override: np.ndarray | None = None  # info over (iono+bias) or bias
    pre_measurement_epochs: int = 0

    def __post_init__(self):
        los = np.asarray(self.satellites, dtype=float)
        if los.ndim != 3 or los.shape[2] != 3:
            raise ValidationError(f"satellites must be (n_epochs, K, 3), got {los.shape}")
        norms = np.linalg.norm(los, axis=2)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            raise ValidationError("line-of-sight vectors must be unit-norm within 1e-9")
        los.flags.writeable = False
        object.__setattr__(self, "satellites", los)
        measurement_set(self.measurement_set)
        for name, coef in (("ar1_phase", self.ar1_phase), ("ar1_code", self.ar1_code)):
            if not (-1.0 < coef < 1.0):
                raise ValidationError(f"{name} = {coef} is not stationary")
        for name, pair in (("carrier_noise", self.carrier_noise),
                           ("code_noise", self.code_noise)):
            if len(pair) != 2 or any(s < 0 for s in pair):
                raise ValidationError(f"{name} must be two nonnegative sigmas")
        if self.sigma_delta_iono < 0:
            raise ValidationError("sigma_delta_iono must be nonnegative")
        if self.coordinates_prior not in ("kinematic", "static"):
            raise ValidationError("coordinates_prior must be kinematic or static")
        if self.interfreq_bias_prior not in ("non_informative", "informative"):
            raise ValidationError("interfreq_bias_prior must be non_informative or informative")
        if self.n_epochs < 1:
            raise ValidationError("need at least one epoch")
        if self.pre_measurement_epochs < 0:
            raise ValidationError("pre_measurement_epochs must be nonnegative")

    @property
    def n_epochs(self) -> int:
        return self.satellites.shape[0]

    @property
    def n_satellites(self) -> int:
        return self.satellites.shape[1]

    def with_changes(self, **kwargs) -> "Scenario":
        return replace(self, **kwargs)


def load_los_csv(path: str | Path, n_epochs: int | None = None) -> np.ndarray:
    """Read (epoch, satellite-id, ex, ey, ez) rows into an LOS array."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].lstrip().startswith("#") or rec[0] == "epoch":
                continue
            if len(rec) != 5:
                raise ValidationError(f"{path}: expected 5 columns, got {rec}")
            rows.append((int(rec[0]), str(rec[1]), float(rec[2]), float(rec[3]), float(rec[4])))
    if not rows:
        raise ValidationError(f"{path}: no LOS rows")
    epochs = sorted({r[0] for r in rows})
    sats = sorted({r[1] for r in rows})
    if n_epochs is not None:
        epochs = epochs[:n_epochs]
    los = np.zeros((len(epochs), len(sats), 3))
    seen = np.zeros((len(epochs), len(sats)), bool)
    ei = {e: i for i, e in enumerate(epochs)}
    si = {s: i for i, s in enumerate(sats)}
    for e, s, x, y, z in rows:
        if e in ei:
            los[ei[e], si[s]] = (x, y, z)
            seen[ei[e], si[s]] = True
    if not np.all(seen):
        raise ValidationError(f"{path}: missing LOS entries for some (epoch, satellite)")
    return los


def load_scenario(path: str | Path) -> Scenario:
    """Read and validate a YAML scenario file."""
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: scenario file must be a mapping")
    sat_spec = doc.pop("satellites", None)
    if sat_spec is None:
        raise ValidationError(f"{path}: missing 'satellites'")
    n_epochs = int(doc.pop("n_epochs", 0)) or None
    if isinstance(sat_spec, dict):
        if "los_csv" in sat_spec:
            los = load_los_csv(Path(path).parent / sat_spec["los_csv"], n_epochs)
        elif sat_spec.get("kind") == "synthetic":
            n = n_epochs or int(sat_spec.get("n_epochs", 10))
            interval = float(doc.get("epoch_interval", 1.0))
            los = synthetic_constellation(
                int(sat_spec.get("n_sat", 7)),
                duration=(n - 1) * interval,
                seed=int(sat_spec.get("seed", 0)),
                interval=interval,
            )
        else:
            raise ValidationError(f"{path}: satellites must give los_csv or kind: synthetic")
    else:
        los = np.asarray(sat_spec, dtype=float)
        if los.ndim == 2:
            los = los[None, :, :]
        norms = np.linalg.norm(los, axis=2, keepdims=True)
        los = los / norms
        if n_epochs and los.shape[0] == 1:
            los = np.repeat(los, n_epochs, axis=0)
    known = {
        "measurement_set", "epoch_interval", "carrier_noise", "code_noise",
        "ar1_phase", "ar1_code", "sigma_delta_iono", "coordinates_prior",
        "windup_informed", "interfreq_bias_prior", "pre_measurement_epochs",
    }
    extra = set(doc) - known
    if extra:
        raise ValidationError(f"{path}: unknown scenario fields {sorted(extra)}")
    for key in ("carrier_noise", "code_noise"):
        if key in doc:
            doc[key] = tuple(float(v) for v in doc[key])
    return Scenario(satellites=los, **doc)
