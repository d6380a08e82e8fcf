"""Variance-based separability bounds and entanglement verdicts for finite-dimensional states.

Every discrete criterion is evaluated from an `ObservableMoments` table, so the
CLI, the witness search and direct library calls report identical numbers.
A violated criterion certifies entanglement; a satisfied one certifies nothing.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from operators import (
    DimensionMismatchError,
    ObservablePair,
    commutator_obs,
    op_norm,
    tensor,
)
from states import (
    CriterionConfig,
    DensityMatrix,
    SeparableEnsemble,
    complex_expectation,
    expectation,
    reduced_state,
    variance,
)

logger = logging.getLogger(__name__)

VIOLATION_TOLERANCE = 1e-9

Pairs = Tuple[ObservablePair, ObservablePair]


class ConsistencyError(RuntimeError):
    """The generic uncertainty relation failed: an implementation or input bug, never a verdict."""


class CriterionId(str, Enum):
    HEISENBERG = 'heisenberg'
    GENERAL_ENSEMBLE = 'general_ensemble'
    GENERAL_MEASURABLE = 'general_measurable'
    GENERAL_STRONG = 'general_strong'
    SUM = 'sum'
    PRL02_PRODUCT = 'prl02_product'
    LINEAR_FAMILY = 'linear_family'
    CV_PRODUCT = 'cv_product'
    CV_SUM = 'cv_sum'


class OtildeSource(str, Enum):
    ENSEMBLE = 'ensemble'
    MEASURABLE = 'measurable'
    STRONG = 'strong'


_SOURCE_CRITERION = {
    OtildeSource.ENSEMBLE: CriterionId.GENERAL_ENSEMBLE,
    OtildeSource.MEASURABLE: CriterionId.GENERAL_MEASURABLE,
    OtildeSource.STRONG: CriterionId.GENERAL_STRONG,
}

# criteria that need nothing beyond the state itself
MEASURABLE_CRITERIA = (
    CriterionId.GENERAL_MEASURABLE,
    CriterionId.SUM,
    CriterionId.PRL02_PRODUCT,
    CriterionId.LINEAR_FAMILY,
)


@dataclass(frozen=True)
class CriterionVerdict:
    criterion_id: CriterionId
    lhs: float
    bound: float
    violated: bool
    margin: float
    config: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'criterion': self.criterion_id.value,
            'lhs': self.lhs,
            'bound': self.bound,
            'violated': self.violated,
            'margin': self.margin,
            'config': dict(self.config),
        }


def make_verdict(criterion_id: CriterionId, lhs: float, bound: float,
                 config: Optional[Dict[str, Any]] = None, tol: float = VIOLATION_TOLERANCE) -> CriterionVerdict:
    return CriterionVerdict(
        criterion_id=CriterionId(criterion_id),
        lhs=float(lhs),
        bound=float(bound),
        violated=bool(lhs < bound - tol),
        margin=float(bound - lhs),
        config=dict(config or {}),
    )


@dataclass(frozen=True)
class OtildeBound:
    otilde: float
    otilde1: float
    otilde2: float
    source: OtildeSource

    @classmethod
    def assemble(cls, cfg: CriterionConfig, otilde1: float, otilde2: float,
                 source: OtildeSource) -> 'OtildeBound':
        otilde = (abs(cfg.a1 * cfg.b1) * otilde1 + abs(cfg.a2 * cfg.b2) * otilde2) / 2
        return cls(float(otilde), float(otilde1), float(otilde2), OtildeSource(source))


@dataclass(frozen=True)
class ObservableMoments:
    """First and second moments of the local observables on one state.

    r11, r12, r22 form the covariance matrix of (r1 (x) I, I (x) r2); s11..s22
    likewise for the s observables. c1, c2 are <C_j> and c12 is <C1 (x) C2>.
    """

    dims: Tuple[int, int]
    r11: float
    r12: float
    r22: float
    s11: float
    s12: float
    s22: float
    c1: float
    c2: float
    c12: float
    norm1: float
    norm2: float

    def variance_u(self, a1: float, a2: float) -> float:
        return max(0.0, a1 * a1 * self.r11 + 2 * a1 * a2 * self.r12 + a2 * a2 * self.r22)

    def variance_v(self, b1: float, b2: float) -> float:
        return max(0.0, b1 * b1 * self.s11 + 2 * b1 * b2 * self.s12 + b2 * b2 * self.s22)

    def measurable_otilde(self, a1: float, a2: float, b1: float, b2: float) -> float:
        return (abs(a1 * b1) * abs(self.c1) + abs(a2 * b2) * abs(self.c2)) / 2

    def prl02_bound(self, a1: float, a2: float, b1: float, b2: float) -> float:
        norms = self.norm1 * self.norm2
        if norms == 0:
            return 0.0
        return abs(a1 * a2 * b1 * b2) * self.c12 * self.c12 / norms


def _cross_covariance(rho: DensityMatrix, x1, x2, mean1: float, mean2: float) -> float:
    return expectation(rho, tensor(x1, x2)) - mean1 * mean2


def collect_moments(rho: DensityMatrix, pairs: Pairs) -> ObservableMoments:
    pair1, pair2 = pairs
    if not rho.is_bipartite:
        raise DimensionMismatchError("Criteria need a bipartite state")
    if (pair1.dim, pair2.dim) != rho.dims:
        raise DimensionMismatchError(f"Observable dims {(pair1.dim, pair2.dim)} do not match state dims {rho.dims}")
    rho1, rho2 = reduced_state(rho, 1), reduced_state(rho, 2)
    mean_r1, mean_r2 = expectation(rho1, pair1.r), expectation(rho2, pair2.r)
    mean_s1, mean_s2 = expectation(rho1, pair1.s), expectation(rho2, pair2.s)
    c1_op, c2_op = commutator_obs(pair1), commutator_obs(pair2)
    return ObservableMoments(
        dims=rho.dims,
        r11=variance(rho1, pair1.r),
        r12=_cross_covariance(rho, pair1.r, pair2.r, mean_r1, mean_r2),
        r22=variance(rho2, pair2.r),
        s11=variance(rho1, pair1.s),
        s12=_cross_covariance(rho, pair1.s, pair2.s, mean_s1, mean_s2),
        s22=variance(rho2, pair2.s),
        c1=expectation(rho1, c1_op),
        c2=expectation(rho2, c2_op),
        c12=expectation(rho, tensor(c1_op, c2_op)),
        norm1=op_norm(c1_op),
        norm2=op_norm(c2_op),
    )


def lhs_and_bound(criterion_id: CriterionId, moments: ObservableMoments,
                  a1: float, a2: float, b1: float, b2: float,
                  alpha: float = 1.0, beta: float = 1.0) -> Tuple[float, float]:
    """(tested quantity, separable bound) of a state-only criterion at raw coefficients."""
    vu, vv = moments.variance_u(a1, a2), moments.variance_v(b1, b2)
    if criterion_id == CriterionId.HEISENBERG:
        mixed = a1 * b1 * moments.c1 + a2 * b2 * moments.c2
        return vu * vv, mixed * mixed / 4
    if criterion_id == CriterionId.GENERAL_MEASURABLE:
        otilde = moments.measurable_otilde(a1, a2, b1, b2)
        return vu * vv, otilde * otilde
    if criterion_id == CriterionId.SUM:
        return vu + vv, abs(a1 * b1) * abs(moments.c1) + abs(a2 * b2) * abs(moments.c2)
    if criterion_id == CriterionId.PRL02_PRODUCT:
        return vu * vv, moments.prl02_bound(a1, a2, b1, b2)
    if criterion_id == CriterionId.LINEAR_FAMILY:
        otilde = moments.measurable_otilde(a1, a2, b1, b2)
        return alpha * vu + beta * vv, 2 * math.sqrt(alpha * beta) * otilde
    raise ValueError(f"Criterion '{CriterionId(criterion_id).value}' cannot be evaluated from the state alone")


def evaluate_criterion(criterion_id: CriterionId, moments: ObservableMoments, cfg: CriterionConfig,
                       tol: float = VIOLATION_TOLERANCE, alpha: float = 1.0,
                       beta: float = 1.0) -> CriterionVerdict:
    criterion_id = CriterionId(criterion_id)
    lhs, bound = lhs_and_bound(criterion_id, moments, cfg.a1, cfg.a2, cfg.b1, cfg.b2, alpha, beta)
    config = _discrete_config(cfg)
    if criterion_id == CriterionId.LINEAR_FAMILY:
        config.update(alpha=alpha, beta=beta, otilde_source=OtildeSource.MEASURABLE.value)
    elif criterion_id == CriterionId.GENERAL_MEASURABLE:
        config.update(otilde_source=OtildeSource.MEASURABLE.value)
    verdict = make_verdict(criterion_id, lhs, bound, config, tol)
    if criterion_id == CriterionId.HEISENBERG and lhs < bound - tol * max(1.0, bound):
        raise ConsistencyError(
            f"Uncertainty relation violated (lhs={lhs!r} < bound={bound!r}); moments or observables are corrupted")
    return verdict


def _discrete_config(cfg: CriterionConfig) -> Dict[str, Any]:
    return {'a1': cfg.a1, 'a2': cfg.a2, 'b1': cfg.b1, 'b2': cfg.b2}


def heisenberg_bound(rho: DensityMatrix, pairs: Pairs, cfg: CriterionConfig,
                     tol: float = VIOLATION_TOLERANCE) -> CriterionVerdict:
    return evaluate_criterion(CriterionId.HEISENBERG, collect_moments(rho, pairs), cfg, tol)


def otilde_from_ensemble(ensemble: SeparableEnsemble, pairs: Pairs, cfg: CriterionConfig) -> OtildeBound:
    """O~_j = sum_k w_k |<C_j>_k| over the ensemble's product factors."""
    c_ops = [commutator_obs(pair) for pair in pairs]
    sums = [0.0, 0.0]
    for term in ensemble.terms:
        for j, rho_j in enumerate((term.rho1, term.rho2)):
            sums[j] += term.w * abs(expectation(rho_j, c_ops[j]))
    return OtildeBound.assemble(cfg, sums[0], sums[1], OtildeSource.ENSEMBLE)


def _centered_product(rho: DensityMatrix, pair: ObservablePair) -> complex:
    """<Delta r Delta s> with both deviations taken about this state's means."""
    eye = np.eye(pair.dim)
    dr = pair.r.entries - expectation(rho, pair.r) * eye
    ds = pair.s.entries - expectation(rho, pair.s) * eye
    return complex_expectation(rho, dr @ ds)


def otilde_strong_from_ensemble(ensemble: SeparableEnsemble, pairs: Pairs, cfg: CriterionConfig) -> OtildeBound:
    """O~_j = 2 sum_k w_k |<Delta r_j Delta s_j>_k| (modulus of the full complex expectation)."""
    sums = [0.0, 0.0]
    for term in ensemble.terms:
        for j, rho_j in enumerate((term.rho1, term.rho2)):
            sums[j] += term.w * abs(_centered_product(rho_j, pairs[j]))
    return OtildeBound.assemble(cfg, 2 * sums[0], 2 * sums[1], OtildeSource.STRONG)


def otilde_measurable(rho: DensityMatrix, pairs: Pairs, cfg: CriterionConfig) -> OtildeBound:
    moments = collect_moments(rho, pairs)
    return OtildeBound.assemble(cfg, abs(moments.c1), abs(moments.c2), OtildeSource.MEASURABLE)


def product_criterion_check(rho: DensityMatrix, otilde: OtildeBound, pairs: Pairs, cfg: CriterionConfig,
                            tol: float = VIOLATION_TOLERANCE) -> CriterionVerdict:
    """Var(u) Var(v) >= O~^2; only sound when O~ is measurable or comes from rho's own ensemble."""
    moments = collect_moments(rho, pairs)
    lhs = moments.variance_u(cfg.a1, cfg.a2) * moments.variance_v(cfg.b1, cfg.b2)
    config = _discrete_config(cfg)
    config['otilde_source'] = otilde.source.value
    return make_verdict(_SOURCE_CRITERION[otilde.source], lhs, otilde.otilde ** 2, config, tol)


def sum_criterion_check(rho: DensityMatrix, pairs: Pairs, cfg: CriterionConfig,
                        tol: float = VIOLATION_TOLERANCE) -> CriterionVerdict:
    return evaluate_criterion(CriterionId.SUM, collect_moments(rho, pairs), cfg, tol)


def prl02_product_check(rho: DensityMatrix, pairs: Pairs, cfg: CriterionConfig,
                        tol: float = VIOLATION_TOLERANCE) -> CriterionVerdict:
    return evaluate_criterion(CriterionId.PRL02_PRODUCT, collect_moments(rho, pairs), cfg, tol)


def linear_family_check(rho: DensityMatrix, pairs: Pairs, cfg: CriterionConfig, alpha: float, beta: float,
                        otilde: OtildeBound, tol: float = VIOLATION_TOLERANCE) -> CriterionVerdict:
    """alpha Var(u) + beta Var(v) >= 2 sqrt(alpha beta) O~."""
    if alpha < 0 or beta < 0:
        raise ValueError(f"alpha and beta must be nonnegative, got {alpha}, {beta}")
    moments = collect_moments(rho, pairs)
    lhs = alpha * moments.variance_u(cfg.a1, cfg.a2) + beta * moments.variance_v(cfg.b1, cfg.b2)
    bound = 2 * math.sqrt(alpha * beta) * otilde.otilde
    config = _discrete_config(cfg)
    config.update(alpha=alpha, beta=beta, otilde_source=otilde.source.value)
    return make_verdict(CriterionId.LINEAR_FAMILY, lhs, bound, config, tol)


def stokes_check(rho: DensityMatrix, pairs: Pairs, sign_a: int = 1, sign_b: int = 1,
                 tol: float = VIOLATION_TOLERANCE) -> CriterionVerdict:
    """Var(u) + Var(v) >= |<C1>| + |<C2>| with a = (1, +-1), b = (1, +-1)."""
    if sign_a not in (1, -1) or sign_b not in (1, -1):
        raise ValueError("sign_a and sign_b must be +1 or -1")
    cfg = CriterionConfig(1.0, float(sign_a), 1.0, float(sign_b))
    return linear_family_check(rho, pairs, cfg, 1.0, 1.0, otilde_measurable(rho, pairs, cfg), tol)


@dataclass(frozen=True)
class EnvelopePoint:
    variance_u: float
    variance_v: float
    tangent_alpha_over_beta: float


def _sample_range(n_points: int, lo: float, hi: float) -> np.ndarray:
    if n_points < 1:
        raise ValueError(f"n_points must be >= 1, got {n_points}")
    if not (lo > 0 and hi >= lo and math.isfinite(hi)):
        raise ValueError(f"Range must satisfy 0 < lo <= hi, got ({lo}, {hi})")
    return np.linspace(lo, hi, n_points)


def boundary_envelope(otilde: float, n_points: int, lo: float, hi: float) -> List[EnvelopePoint]:
    """Points of Var(u) Var(v) = O~^2, each with the alpha/beta of the linear bound tangent there."""
    if otilde < 0 or not math.isfinite(otilde):
        raise ValueError(f"otilde must be a finite nonnegative number, got {otilde}")
    points = []
    for vu in _sample_range(n_points, lo, hi):
        vv = otilde * otilde / vu
        points.append(EnvelopePoint(float(vu), float(vv), float(vv / vu)))
    return points


@dataclass(frozen=True)
class PartitionRow:
    variance_u: float
    general: float
    prl02: float
    sum_line: float


@dataclass(frozen=True)
class Partition:
    """Curves splitting the (Var u, Var v) plane: separable states lie above `general`."""

    rows: List[PartitionRow]
    state_point: Tuple[float, float]
    general_bound: float
    prl02_bound: float
    sum_bound: float


def partition_curves(moments: ObservableMoments, cfg: CriterionConfig, n_points: int,
                     lo: float, hi: float) -> Partition:
    otilde = moments.measurable_otilde(cfg.a1, cfg.a2, cfg.b1, cfg.b2)
    general = otilde * otilde
    prl02 = moments.prl02_bound(cfg.a1, cfg.a2, cfg.b1, cfg.b2)
    _, sum_bound = lhs_and_bound(CriterionId.SUM, moments, cfg.a1, cfg.a2, cfg.b1, cfg.b2)
    rows = [PartitionRow(float(vu), float(general / vu), float(prl02 / vu), float(sum_bound - vu))
            for vu in _sample_range(n_points, lo, hi)]
    if prl02 > general:
        logger.debug("prl02 hyperbola lies above the measurable general hyperbola for this state")
    state_point = (moments.variance_u(cfg.a1, cfg.a2), moments.variance_v(cfg.b1, cfg.b2))
    return Partition(rows, state_point, general, prl02, sum_bound)
