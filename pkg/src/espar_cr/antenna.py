"""Sectorized Gaussian beampattern of an ESPAR antenna.

Each of the ``M`` switchable beams has the same Gaussian main lobe on top of a
constant floor, rotated to boresight ``kappa_m = 2*pi*(m-1)/M``.  An
omni-directional reference antenna is represented by the same type with
``omni=True``; it has a single "sector" with a constant gain.

Angles are in radians everywhere in this module.  Sector indices in the public
functions are 1-based, matching the usual ``m = 1..M`` notation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from .errors import DomainError, NumericalError

__all__ = [
    "BeamPatternModel",
    "SectorIntegrals",
    "wrap_angle",
    "pattern_gain",
    "compute_sector_integrals",
    "make_omni_equivalent",
]

LN2 = math.log(2.0)
TWO_PI = 2.0 * math.pi


def wrap_angle(phi):
    """Map angles to ``[-pi, pi)`` as ``mod(phi + pi, 2*pi) - pi``."""
    return np.mod(np.asarray(phi, dtype=float) + math.pi, TWO_PI) - math.pi


@dataclass(frozen=True)
class BeamPatternModel:
    """Gaussian sector pattern ``p(phi) = A1 + A0*exp(-B*(wrap(phi)/phi_3dB)**2)``.

    Parameters
    ----------
    A0 : float
        Main-lobe amplitude above the floor.
    A1 : float
        Floor (side-lobe) gain.
    phi_3dB : float
        3-dB beamwidth in radians.
    M : int
        Number of sectors.  ``M=1`` is a single beam at boresight 0.
    B : float
        Shape constant, ``ln 2`` so that the lobe is at half amplitude at
        ``phi_3dB``.
    omni : bool
        If true the pattern is the constant ``omni_gain`` and ``M`` is 1.
    omni_gain : float
        Constant gain used in omni mode.
    """

    A0: float
    A1: float
    phi_3dB: float
    M: int = 8
    B: float = LN2
    omni: bool = False
    omni_gain: float = 0.0
    kappa: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.A0 > 0:
            raise DomainError(f"A0 must be positive, got {self.A0}")
        if not self.A1 >= 0:
            raise DomainError(f"A1 must be non-negative, got {self.A1}")
        if not 0 < self.phi_3dB < math.pi:
            raise DomainError(f"phi_3dB must lie in (0, pi), got {self.phi_3dB}")
        if int(self.M) != self.M or self.M < 1:
            raise DomainError(f"M must be a positive integer, got {self.M}")
        if self.omni:
            if self.M != 1:
                raise DomainError("omni-mode models have exactly one sector")
            if not self.omni_gain > 0:
                raise DomainError("omni-mode models need a positive omni_gain")
        kappa = tuple(TWO_PI * m / self.M for m in range(int(self.M)))
        object.__setattr__(self, "kappa", kappa)

    @classmethod
    def from_degrees(cls, A0, A1, phi_3dB_deg, M=8):
        """Build a directional model with the beamwidth given in degrees."""
        return cls(A0=A0, A1=A1, phi_3dB=math.radians(phi_3dB_deg), M=M)

    @property
    def kappa_array(self) -> np.ndarray:
        return np.asarray(self.kappa)

    @property
    def peak_gain(self) -> float:
        return self.omni_gain if self.omni else self.A1 + self.A0

    def base_pattern(self, phi):
        """Pattern of the first sector, vectorized over ``phi``."""
        phi = np.asarray(phi, dtype=float)
        if self.omni:
            return np.full(phi.shape, self.omni_gain)
        x = wrap_angle(phi) / self.phi_3dB
        return self.A1 + self.A0 * np.exp(-self.B * x * x)

    def gains(self, phi):
        """Gains of all sectors toward ``phi``; shape ``phi.shape + (M,)``."""
        phi = np.asarray(phi, dtype=float)
        return self.base_pattern(phi[..., None] - self.kappa_array)

    def sector_of(self, phi):
        """1-based index of the sector arc ``[2pi(m-3/2)/M, 2pi(m-1/2)/M)`` holding ``phi``."""
        width = TWO_PI / self.M
        idx = np.floor(np.mod(np.asarray(phi, dtype=float) + width / 2, TWO_PI) / width)
        return (idx.astype(int) % self.M) + 1


@dataclass(frozen=True)
class SectorIntegrals:
    """Mean pattern gain and the sector overlap matrix.

    ``E_cross[m, m']`` is the angular mean of ``p_m * p_m'`` (0-based array),
    ``E_B`` its diagonal value and ``E_A`` the angular mean of ``p``.
    """

    E_A: float
    E_B: float
    E_cross: np.ndarray


def pattern_gain(model: BeamPatternModel, sector: int, angle):
    """Gain of sector ``sector`` (1-based) toward ``angle`` radians.

    Raises
    ------
    DomainError
        If ``sector`` is not in ``1..M``.
    """
    if int(sector) != sector or not 1 <= sector <= model.M:
        raise DomainError(f"sector index must be in 1..{model.M}, got {sector}")
    angle = np.asarray(angle, dtype=float)
    if not np.all(np.isfinite(angle)):
        raise DomainError("angle must be finite")
    out = model.base_pattern(angle - model.kappa[int(sector) - 1])
    return float(out) if out.ndim == 0 else out


def _panel_rule(panels: int, order: int):
    """Composite Gauss-Legendre nodes/weights on ``[-pi, pi)``."""
    x, w = special.roots_legendre(order)
    h = TWO_PI / panels
    left = -math.pi + h * np.arange(panels)
    nodes = (left[:, None] + h * (x[None, :] + 1.0) / 2.0).ravel()
    weights = np.tile(w * h / 2.0, panels)
    return nodes, weights


def _integrals_on_rule(model, panels, order):
    nodes, weights = _panel_rule(panels, order)
    G = model.gains(nodes)  # (K, M)
    E_A = float(weights @ model.base_pattern(nodes)) / TWO_PI
    E_cross = (G * weights[:, None]).T @ G / TWO_PI
    return E_A, E_cross


def compute_sector_integrals(model: BeamPatternModel, panels: int = 2048,
                             order: int = 4, rtol: float = 1e-8) -> SectorIntegrals:
    """Angular means ``E_A`` and ``E_{mm'}`` by composite Gauss-Legendre quadrature.

    The result is checked against the same rule with twice as many panels;
    a relative disagreement above ``rtol`` raises :class:`NumericalError`.
    """
    if model.omni:
        g = model.omni_gain
        return SectorIntegrals(E_A=g, E_B=g * g, E_cross=np.array([[g * g]]))
    E_A, E_cross = _integrals_on_rule(model, panels, order)
    E_A2, E_cross2 = _integrals_on_rule(model, 2 * panels, order)
    err = max(abs(E_A - E_A2) / abs(E_A2),
              float(np.max(np.abs(E_cross - E_cross2))) / float(np.max(np.abs(E_cross2))))
    if err > rtol:
        raise NumericalError(
            f"pattern quadrature did not converge: relative change {err:.3e} "
            f"between {panels} and {2 * panels} panels exceeds {rtol:.1e}")
    E_cross2 = 0.5 * (E_cross2 + E_cross2.T)
    return SectorIntegrals(E_A=E_A2, E_B=float(E_cross2[0, 0]), E_cross=E_cross2)


def make_omni_equivalent(model: BeamPatternModel) -> BeamPatternModel:
    """Omni-directional model whose constant gain equals the mean gain ``E_A`` of ``model``."""
    if model.omni:
        return model
    E_A = compute_sector_integrals(model).E_A
    return replace(model, M=1, omni=True, omni_gain=E_A)
