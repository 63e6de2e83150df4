"""Experiment configuration: defaults, validation and unit conversion.

Configs are flat mappings read from YAML or JSON.  Power constraints are
given in dB and the beamwidth in degrees; everything else is linear.  The
conversion to linear units happens here and nowhere else.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .antenna import BeamPatternModel
from .errors import ConfigError
from .optimizer import Constraints
from .scenario import Scenario
from .sensing import PriorModel

__all__ = ["ExperimentConfig", "load_config", "db_to_linear", "SWEEP_AXES"]

SWEEP_AXES = ("P_bar_dB", "I_bar_dB", "n_b")


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


@dataclass(frozen=True)
class ExperimentConfig:
    """All inputs of a run; defaults reproduce the reference simulation setup.

    ``orientation`` is ``"fixed"`` (use ``m_PU_star`` and an SU_Rx at the
    boresight of ``m_SR_star``) or ``"average"`` (uniform grids of
    ``n_phi_SR`` by ``n_phi_PU`` angles).  ``n_b=None`` requests the
    perfect-CSI limit.  ``sweep`` maps axis names from :data:`SWEEP_AXES` to
    value lists; the run covers their Cartesian product.
    """

    A0: float = 1.0
    A1: float = 0.01
    phi_3dB_deg: float = 20.0
    M: int = 8
    omni: bool = False
    gamma: float = 1.0
    gamma_ss: float = 3.0
    gamma_sp: float = 1.0
    pi1: float = 0.3
    P_p: float = 1.0
    sigma_w2: float = 1.0
    T_f: float = 20e-3
    T_train: float = 1e-3
    T_s: float = 1e-6
    target_pd: float = 0.9
    n_b: Optional[int] = 4
    P_bar_dB: float = 12.0
    I_bar_dB: float = -6.0
    orientation: str = "fixed"
    m_PU_star: int = 1
    m_SR_star: int = 1
    n_phi_SR: int = 64
    n_phi_PU: int = 64
    rho: float = 4.0
    compare_omni: bool = True
    N_fixed: Optional[int] = None
    sweep: dict = field(default_factory=dict)
    seed: int = 0
    trials: int = 1_000_000
    detector_trials: int = 1_000_000

    def __post_init__(self):
        bad = []
        def need(cond, key):
            if not cond:
                bad.append(key)
        need(self.A0 > 0, "A0")
        need(self.A1 >= 0, "A1")
        need(0 < self.phi_3dB_deg < 180, "phi_3dB_deg")
        need(isinstance(self.M, int) and self.M >= 1, "M")
        for key in ("gamma", "gamma_ss", "gamma_sp", "P_p", "sigma_w2", "T_f", "T_s", "rho"):
            need(isinstance(getattr(self, key), (int, float)) and getattr(self, key) > 0, key)
        need(0 < self.pi1 < 1, "pi1")
        need(0 <= self.T_train < self.T_f, "T_train")
        need(0 < self.target_pd < 1, "target_pd")
        need(self.n_b is None or (isinstance(self.n_b, int) and self.n_b >= 0), "n_b")
        for key in ("P_bar_dB", "I_bar_dB"):
            need(isinstance(getattr(self, key), (int, float)) and math.isfinite(getattr(self, key)), key)
        need(self.orientation in ("fixed", "average"), "orientation")
        need(isinstance(self.m_PU_star, int) and 1 <= self.m_PU_star <= self.M, "m_PU_star")
        need(isinstance(self.m_SR_star, int) and 1 <= self.m_SR_star <= self.M, "m_SR_star")
        need(isinstance(self.n_phi_SR, int) and self.n_phi_SR >= 1, "n_phi_SR")
        need(isinstance(self.n_phi_PU, int) and self.n_phi_PU >= 1, "n_phi_PU")
        need(self.N_fixed is None or (isinstance(self.N_fixed, int) and self.N_fixed >= 1), "N_fixed")
        need(isinstance(self.seed, int) and self.seed >= 0, "seed")
        need(isinstance(self.trials, int) and self.trials >= 1, "trials")
        need(isinstance(self.detector_trials, int) and self.detector_trials >= 1, "detector_trials")
        if not isinstance(self.sweep, dict):
            bad.append("sweep")
        else:
            for axis, values in self.sweep.items():
                ok = axis in SWEEP_AXES and isinstance(values, (list, tuple)) and len(values) > 0
                if ok and axis == "n_b":
                    ok = all(v is None or (isinstance(v, int) and v >= 0) for v in values)
                elif ok:
                    ok = all(isinstance(v, (int, float)) and math.isfinite(v) for v in values)
                need(ok, f"sweep.{axis}")
        if bad:
            raise ConfigError(f"invalid config values: {', '.join(bad)}", bad)

    @classmethod
    def from_mapping(cls, data: Optional[dict]) -> "ExperimentConfig":
        """Validate a plain mapping; unknown keys raise :class:`ConfigError`."""
        data = dict(data or {})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}", unknown)
        if data.get("n_b") in ("inf", "none", "None"):
            data["n_b"] = None
        if isinstance(data.get("sweep"), dict) and "n_b" in data["sweep"]:
            data["sweep"] = dict(data["sweep"])
            data["sweep"]["n_b"] = [None if v in ("inf", "none", "None") else v
                                    for v in data["sweep"]["n_b"]]
        for key in ("T_f", "T_train", "T_s", "A0", "A1", "gamma", "gamma_ss", "gamma_sp",
                    "pi1", "P_p", "sigma_w2", "target_pd", "rho", "P_bar_dB", "I_bar_dB",
                    "phi_3dB_deg"):
            if isinstance(data.get(key), int) and not isinstance(data.get(key), bool):
                data[key] = float(data[key])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc), []) from exc

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form; changes iff a value changes."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    # conversions at the boundary
    def model(self) -> BeamPatternModel:
        m = BeamPatternModel.from_degrees(self.A0, self.A1, self.phi_3dB_deg, self.M)
        if self.omni:
            from .antenna import make_omni_equivalent
            m = make_omni_equivalent(m)
        return m

    def prior(self) -> PriorModel:
        return PriorModel(pi1=self.pi1, P_p=self.P_p, gamma=self.gamma,
                          gamma_sp=self.gamma_sp, sigma_w2=self.sigma_w2)

    def scenario(self) -> Scenario:
        return Scenario(self.model(), self.prior(), self.gamma_ss, self.T_f, self.T_train,
                        self.T_s, self.target_pd)

    def constraints(self) -> Constraints:
        return Constraints(db_to_linear(self.P_bar_dB), db_to_linear(self.I_bar_dB))

    def phi_SR(self) -> float:
        return 2.0 * math.pi * (self.m_SR_star - 1) / self.M

    def sweep_points(self) -> list:
        """Cartesian product of the sweep axes in :data:`SWEEP_AXES` order."""
        points = [{}]
        for axis in SWEEP_AXES:
            if axis in self.sweep:
                points = [dict(p, **{axis: v}) for p in points for v in self.sweep[axis]]
        return [self.replace(**p) for p in points]


def load_config(path: Optional[str]) -> ExperimentConfig:
    """Read a YAML or JSON file (YAML is a superset); ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig()
    text = Path(path).read_text()
    try:
        data: Any = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}", []) from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError("config must be a mapping", [])
    return ExperimentConfig.from_mapping(data)
