"""Witness search: maximize a criterion's margin over its coefficients.

Margins are reported at sup-normalized coefficients (largest |a| = 1 and
largest |b| = 1), so results are comparable across criteria and states.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import norm, qmc

from criteria import (
    MEASURABLE_CRITERIA,
    CriterionId,
    CriterionVerdict,
    VIOLATION_TOLERANCE,
    collect_moments,
    evaluate_criterion,
    lhs_and_bound,
)
from gaussian import CV_CHECKS, CVConfig, GaussianState
from operators import ObservablePair
from states import CriterionConfig, DensityMatrix

logger = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5) - 1) / 2
INV_PHI_SQUARE = (3 - math.sqrt(5)) / 2
GOLDEN_TOLERANCE = 1e-10


class ParameterDomain(str, Enum):
    DISCRETE = 'discrete'
    CV = 'cv'


@dataclass(frozen=True)
class SearchConfig:
    grid_resolution: int = 8
    refine_iters: int = 1
    seed: int = 0
    criterion_id: CriterionId = CriterionId.PRL02_PRODUCT
    parameter_domain: Optional[ParameterDomain] = None

    def __post_init__(self):
        if self.grid_resolution < 4:
            raise ValueError(f"grid_resolution must be >= 4, got {self.grid_resolution}")
        if self.refine_iters < 0:
            raise ValueError(f"refine_iters must be >= 0, got {self.refine_iters}")
        criterion_id = CriterionId(self.criterion_id)
        object.__setattr__(self, 'criterion_id', criterion_id)
        expected = ParameterDomain.CV if criterion_id in CV_CHECKS else ParameterDomain.DISCRETE
        domain = expected if self.parameter_domain is None else ParameterDomain(self.parameter_domain)
        if domain != expected:
            raise ValueError(f"Criterion '{criterion_id.value}' is searched over the {expected.value} domain")
        object.__setattr__(self, 'parameter_domain', domain)


@dataclass(frozen=True)
class SearchResult:
    best_config: Union[CriterionConfig, CVConfig]
    best_margin: float
    verdict: CriterionVerdict
    evaluations: int

    def to_dict(self):
        return {
            'best_config': self.best_config.to_dict(),
            'best_margin': self.best_margin,
            'verdict': self.verdict.to_dict(),
            'evaluations': self.evaluations,
        }


class _CountingObjective:
    def __init__(self, fn: Callable[..., float]):
        self.fn = fn
        self.calls = 0

    def __call__(self, *args) -> float:
        self.calls += 1
        return self.fn(*args)


def golden_section_search(f: Callable[[float], float], lo: float, hi: float,
                          tol: float = GOLDEN_TOLERANCE) -> Tuple[float, float]:
    """Maximize f on [lo, hi]; returns the best evaluated (x, f(x)), endpoints included.

    Assumes nothing about unimodality: the returned point is simply the best
    one visited, so callers can compare it against their incumbent.
    """
    lo, hi = min(lo, hi), max(lo, hi)
    best_x, best_f = lo, f(lo)
    f_hi = f(hi)
    if f_hi > best_f:
        best_x, best_f = hi, f_hi
    h = hi - lo
    if h <= tol:
        return best_x, best_f

    steps = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))
    c, d = lo + INV_PHI_SQUARE * h, lo + INV_PHI * h
    fc, fd = f(c), f(d)
    for x, fx in ((c, fc), (d, fd)):
        if fx > best_f:
            best_x, best_f = x, fx
    for _ in range(steps - 1):
        h *= INV_PHI
        if fc > fd:
            d, fd = c, fc
            c = lo + INV_PHI_SQUARE * h
            fc = f(c)
            x, fx = c, fc
        else:
            lo = c
            c, fc = d, fd
            d = lo + INV_PHI * h
            fd = f(d)
            x, fx = d, fd
        if fx > best_f:
            best_x, best_f = x, fx
    return best_x, best_f


def van_der_corput(index: int, base: int = 2) -> float:
    value, denom = 0.0, 1.0
    while index:
        index, digit = divmod(index, base)
        denom *= base
        value += digit / denom
    return value


def nested_angle_grid(n: int) -> List[float]:
    """n angles in [0, 2 pi); the grid for n is a prefix of the grid for any larger n."""
    if n < 1:
        raise ValueError(f"Grid size must be >= 1, got {n}")
    return [2 * math.pi * van_der_corput(i) for i in range(n)]


def sup_normalized(values: Sequence[float]) -> np.ndarray:
    vector = np.asarray(values, dtype=float)
    peak = float(np.max(np.abs(vector)))
    if peak == 0:
        raise ValueError("Cannot normalize a zero coefficient vector")
    return vector / peak


def angle_coefficients(theta: float) -> Tuple[float, float]:
    c, s = math.cos(theta), math.sin(theta)
    peak = max(abs(c), abs(s))
    return c / peak, s / peak


def angles_to_config(theta_a: float, theta_b: float) -> CriterionConfig:
    a1, a2 = angle_coefficients(theta_a)
    b1, b2 = angle_coefficients(theta_b)
    return CriterionConfig(a1, a2, b1, b2)


def _grid_incumbents(values: np.ndarray, angles: Sequence[float]) -> List[Tuple[int, int, int]]:
    """(i, j, prefix) for each cell that is the best of some nested prefix grid, in order of appearance.

    `values[i, j]` is the margin at (angles[i], angles[j]) in nested-grid order and
    the prefix grid of length l is values[:l, :l]. Ties go to the smallest (theta_a, theta_b).
    """
    def key(cell: Tuple[int, int]):
        i, j = cell
        return (-values[i, j], angles[i], angles[j])

    n = len(angles)
    best = None
    incumbents = []
    for length in range(1, n + 1):
        new_cells = [(length - 1, j) for j in range(length)] + [(i, length - 1) for i in range(length - 1)]
        for cell in new_cells:
            if best is None or key(cell) < key(best):
                best = cell
        if length >= 4 and (not incumbents or incumbents[-1][:2] != best):
            incumbents.append((best[0], best[1], length))
    return incumbents


def optimize_violation(rho: DensityMatrix, pairs: Tuple[ObservablePair, ObservablePair], sc: SearchConfig,
                       tol: float = VIOLATION_TOLERANCE) -> SearchResult:
    """Grid-scan both angles, then refine from every incumbent of the nested prefix grids.

    The grid of resolution n is a prefix of every larger one and each incumbent is
    refined in a window set by the prefix where it first led, so the best margin
    never decreases as grid_resolution or refine_iters grow.
    """
    if sc.criterion_id not in MEASURABLE_CRITERIA:
        raise ValueError(f"Criterion '{sc.criterion_id.value}' cannot be searched from the state alone; "
                         f"expected one of {[c.value for c in MEASURABLE_CRITERIA]}")
    moments = collect_moments(rho, pairs)

    def margin(theta_a: float, theta_b: float) -> float:
        a1, a2 = angle_coefficients(theta_a)
        b1, b2 = angle_coefficients(theta_b)
        lhs, bound = lhs_and_bound(sc.criterion_id, moments, a1, a2, b1, b2)
        return bound - lhs

    objective = _CountingObjective(margin)
    angles = nested_angle_grid(sc.grid_resolution)
    values = np.array([[objective(theta_a, theta_b) for theta_b in angles] for theta_a in angles])
    incumbents = _grid_incumbents(values, angles)
    logger.debug(f"Grid for {sc.criterion_id.value}: {len(incumbents)} incumbents, "
                 f"best margin {values[incumbents[-1][0], incumbents[-1][1]]:.6g}")

    candidates = []
    for i, j, prefix in incumbents:
        theta_a, theta_b, value = angles[i], angles[j], float(values[i, j])
        width = 2 * math.pi / prefix
        for round_index in range(sc.refine_iters):
            half = width / 2 ** round_index
            x, fx = golden_section_search(lambda t: objective(t, theta_b), theta_a - half, theta_a + half)
            if fx > value:
                theta_a, value = x, fx
            x, fx = golden_section_search(lambda t: objective(theta_a, t), theta_b - half, theta_b + half)
            if fx > value:
                theta_b, value = x, fx
        candidates.append((-value, theta_a, theta_b))
    _, theta_a, theta_b = min(candidates)

    cfg = angles_to_config(theta_a, theta_b)
    verdict = evaluate_criterion(sc.criterion_id, moments, cfg, tol)
    return SearchResult(cfg, verdict.margin, verdict, objective.calls)


def canonical_epr_configs() -> List[CVConfig]:
    """u = q1 +- q2 against v = p1 +- p2, and u = q1 +- p2 against v = p1 +- q2."""
    configs = []
    for s1 in (-1.0, 1.0):
        for s2 in (1.0, -1.0):
            configs.append(CVConfig.from_vectors((1.0, s1, 0.0, 0.0), (1.0, s2, 0.0, 0.0)))
    for s1 in (-1.0, 1.0):
        for s2 in (-1.0, 1.0):
            configs.append(CVConfig.from_vectors((1.0, 0.0, 0.0, s1), (1.0, 0.0, 0.0, s2)))
    return configs


def _cv_config(vector: Sequence[float]) -> Optional[CVConfig]:
    """Sup-normalize each half of an 8-vector (a1..a4, b1..b4); None when it is not a valid config."""
    vector = np.asarray(vector, dtype=float)
    a, b = vector[:4], vector[4:]
    if (a[0] == 0 and a[1] == 0) or (b[0] == 0 and b[1] == 0):
        return None
    return CVConfig.from_vectors(sup_normalized(a), sup_normalized(b))


def sobol_directions(count: int, seed: int) -> np.ndarray:
    """Scrambled Sobol points pushed through the normal quantile, i.e. directions spread over both spheres."""
    m = max(0, int(math.ceil(math.log2(count))))
    sampler = qmc.Sobol(d=8, scramble=True, seed=seed)
    points = sampler.random_base2(m)
    return norm.ppf(np.clip(points, 1e-12, 1 - 1e-12))


def optimize_cv(gs: GaussianState, sc: SearchConfig, tol: float = VIOLATION_TOLERANCE) -> SearchResult:
    if sc.criterion_id not in CV_CHECKS:
        raise ValueError(f"Criterion '{sc.criterion_id.value}' is not a continuous-variable criterion")
    check = CV_CHECKS[sc.criterion_id]

    def margin(vector: np.ndarray) -> float:
        cfg = _cv_config(vector)
        if cfg is None:
            return -math.inf
        return check(gs, cfg, tol).margin

    def as_vector(cfg: CVConfig) -> np.ndarray:
        values = cfg.to_dict()
        return np.array([values[name] for name in ('a1', 'a2', 'a3', 'a4', 'b1', 'b2', 'b3', 'b4')])

    objective = _CountingObjective(margin)
    candidates = [as_vector(cfg) for cfg in canonical_epr_configs()]
    candidates.extend(sobol_directions(sc.grid_resolution ** 2, sc.seed))
    # every running best of the sample sequence; a larger grid only appends samples
    incumbents = []
    best_margin = -math.inf
    for vector in candidates:
        value = objective(vector)
        if value > best_margin:
            best_margin = value
            incumbents.append((np.array(vector, dtype=float), value))

    best_vector, best_margin = None, -math.inf
    for vector, value in incumbents:
        for round_index in range(sc.refine_iters):
            half = 0.5 / 2 ** round_index
            for k in range(8):
                def along(t: float, k: int = k) -> float:
                    trial = vector.copy()
                    trial[k] = t
                    return objective(trial)

                x, fx = golden_section_search(along, vector[k] - half, vector[k] + half)
                if fx > value:
                    vector[k], value = x, fx
        if value > best_margin:
            best_vector, best_margin = vector, value

    cfg = _cv_config(best_vector)
    verdict = check(gs, cfg, tol)
    logger.debug(f"CV search {sc.criterion_id.value}: margin={verdict.margin:.6g} after {objective.calls} evaluations")
    return SearchResult(cfg, verdict.margin, verdict, objective.calls)
