"""Assembly of the design statistics for a physical scenario.

A :class:`Scenario` fixes the antenna, priors, channel means and frame timing.
For every sensing length ``N`` it produces the :class:`~espar_cr.optimizer.LinkProblem`
seen by the optimizer at a given SU_Rx angle and PU sector, caching the
detector design and the PU error matrix by ``N``.
"""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .antenna import BeamPatternModel, SectorIntegrals, TWO_PI, compute_sector_integrals, \
    make_omni_equivalent
from .beamsel_pu import PuErrorMatrix, average_error_matrix
from .beamsel_sr import beam_probabilities, sector_means_from_geometry
from .errors import DomainError
from .optimizer import Constraints, LinkProblem, interference_coefficient, solve_P2
from .sensing import DetectorDesign, FramePlan, PriorModel, design_detector

__all__ = ["Scenario", "OrientationAverage", "orientation_average"]


@dataclass(frozen=True)
class Scenario:
    """Physical setup of one experiment (linear units, radians, seconds)."""

    model: BeamPatternModel
    prior: PriorModel = PriorModel()
    gamma_ss: float = 3.0
    T_f: float = 20e-3
    T_train: float = 1e-3
    T_s: float = 1e-6
    target_pd: float = 0.9
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False,
                                  repr=False, compare=False)

    def __post_init__(self):
        if not self.gamma_ss > 0:
            raise DomainError("gamma_ss must be positive")
        if not 0 <= self.T_train < self.T_f:
            raise DomainError("T_train must lie in [0, T_f)")

    @cached_property
    def integrals(self) -> SectorIntegrals:
        return compute_sector_integrals(self.model)

    @cached_property
    def _detectors(self) -> dict:
        return {}

    @cached_property
    def _matrices(self) -> dict:
        return {}

    @property
    def N_max(self) -> int:
        """Largest sample count per sector leaving room for training and data."""
        n = int(math.floor((self.T_f - self.T_train) / (self.model.M * self.T_s)))
        while n >= 1 and n * self.model.M * self.T_s >= self.T_f - self.T_train:
            n -= 1
        return n

    def omni(self) -> "Scenario":
        """Same scenario with the omni-directional antenna of equal mean gain."""
        return Scenario(make_omni_equivalent(self.model), self.prior, self.gamma_ss,
                        self.T_f, self.T_train, self.T_s, self.target_pd)

    def plan(self, N: int) -> FramePlan:
        return FramePlan.from_samples(N, self.model.M, self.T_f, self.T_train, self.T_s)

    def detector(self, N: int) -> DetectorDesign:
        with self._lock:
            d = self._detectors.get(N)
        if d is None:
            d = design_detector(self.plan(N), self.prior, self.integrals, self.target_pd)
            with self._lock:
                self._detectors[N] = d
        return d

    def error_matrix(self, N: int) -> PuErrorMatrix:
        with self._lock:
            D = self._matrices.get(N)
        if D is None:
            D = average_error_matrix(self.model, self.prior, N)
            with self._lock:
                self._matrices[N] = D
        return D

    def problem(self, N: int, phi_SR: float = 0.0, m_PU: int = 1) -> LinkProblem:
        """Design statistics at ``N`` samples per sector."""
        plan = self.plan(N)
        det = self.detector(N)
        dist = sector_means_from_geometry(self.model, self.gamma_ss, phi_SR)
        if self.model.M == 1:
            b0 = det.beta0 * self.prior.gamma_sp * self.model.peak_gain
        else:
            b0 = interference_coefficient(beam_probabilities(dist), self.error_matrix(N), m_PU,
                                          self.model, det.beta0, self.prior.gamma_sp)
        return LinkProblem(dist=dist, alpha0=det.alpha0, beta0=det.beta0, b0=b0, D_t=plan.D_t,
                           sigma_w2=self.prior.sigma_w2, sigma_p2=self.prior.sigma_p2,
                           T_sen=plan.T_sen, N=N, P_fa=det.P_fa)

    def solve(self, constraints: Constraints, n_b: Optional[int], phi_SR: float = 0.0,
              m_PU: int = 1, N_fixed: Optional[int] = None):
        """:func:`~espar_cr.optimizer.solve_P2` for this scenario."""
        return solve_P2(lambda N: self.problem(N, phi_SR, m_PU), constraints, n_b,
                        N_max=self.N_max, N_fixed=N_fixed)


@dataclass
class OrientationAverage:
    """Orientation-averaged ESPAR design against the omni baseline."""

    C_mean: float
    C_omni: float
    P_out_mean: float
    P_e_mean: float
    P_out_omni: float
    P_e_omni: float
    all_converged: bool
    points: list

    @property
    def Lambda(self) -> float:
        return self.C_mean / self.C_omni if self.C_omni > 0 else math.inf


def _orientation_grid(M: int, n_SR: int, n_PU: int):
    """Weighted ``(phi_SR, m_PU)`` pairs covering the uniform angle grids.

    When both grid sizes are multiples of ``M`` rotational symmetry reduces the
    SU_Rx angles to the first sector.
    """
    phi_SR = TWO_PI * np.arange(n_SR) / n_SR
    phi_PU = TWO_PI * np.arange(n_PU) / n_PU
    width = TWO_PI / M
    m_PU = (np.floor(np.mod(phi_PU + width / 2, TWO_PI) / width).astype(int) % M) + 1
    counts = np.bincount(m_PU - 1, minlength=M) / n_PU
    if n_SR % M == 0 and n_PU % M == 0:
        phi_SR = phi_SR[np.mod(phi_SR + width / 2, TWO_PI) < width]
        phi_SR = np.where(phi_SR >= math.pi, phi_SR - TWO_PI, phi_SR)
    w_SR = 1.0 / len(phi_SR)
    return [(float(p), m + 1, w_SR * counts[m]) for p in phi_SR for m in range(M) if counts[m] > 0]


def orientation_average(scenario: Scenario, constraints: Constraints, n_b: Optional[int] = None,
                        n_phi_SR: int = 64, n_phi_PU: int = 64, rho: float = 4.0,
                        threads: int = 1) -> OrientationAverage:
    """Average the optimized design over uniform SU_Rx angles and PU directions."""
    from .metrics import outage_probability, symbol_error_probability

    def metrics_of(sc, phi, m):
        pol, rep = sc.solve(constraints, n_b, phi, m)
        prob = sc.problem(rep.N, phi, m)
        P_out = outage_probability(pol, prob.dist)
        P_e = symbol_error_probability(pol, prob.dist, prob.alpha0, prob.beta0, rho,
                                       prob.sigma_w2, prob.sigma_p2)
        return rep.C_LB, P_out, P_e, rep.converged, rep.N

    grid = _orientation_grid(scenario.model.M, n_phi_SR, n_phi_PU)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(lambda g: metrics_of(scenario, g[0], g[1]), grid))
    else:
        results = [metrics_of(scenario, g[0], g[1]) for g in grid]
    w = np.array([g[2] for g in grid])
    arr = np.array([r[:3] for r in results])
    C_o, Pout_o, Pe_o, conv_o, _ = metrics_of(scenario.omni(), 0.0, 1)
    points = [{"phi_SR": g[0], "m_PU": g[1], "weight": g[2], "C_LB": r[0], "N": r[4]}
              for g, r in zip(grid, results)]
    return OrientationAverage(
        C_mean=float(w @ arr[:, 0]), C_omni=C_o, P_out_mean=float(w @ arr[:, 1]),
        P_e_mean=float(w @ arr[:, 2]), P_out_omni=Pout_o, P_e_omni=Pe_o,
        all_converged=bool(all(r[3] for r in results) and conv_o), points=points)
