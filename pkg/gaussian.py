"""Two-mode Gaussian states over quadratures (q1, p1, q2, p2) with [q, p] = i.

Vacuum has covariance I/2. States are represented only by their first and
second moments; the CV criteria need nothing more.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Sequence, Tuple

import numpy as np

from criteria import CriterionId, CriterionVerdict, VIOLATION_TOLERANCE, make_verdict
from operators import SchemaError
from states import CriterionConfig

logger = logging.getLogger(__name__)

BONA_FIDE_TOLERANCE = 1e-9
SYMMETRY_TOLERANCE = 1e-12
VACUUM_LEVEL = 0.5

OMEGA = np.kron(np.eye(2), np.array([[0.0, 1.0], [-1.0, 0.0]]))
# p2 -> -p2, the phase-space image of the partial transpose on mode 2
MOMENTUM_REFLECTION = np.diag([1.0, 1.0, 1.0, -1.0])


class InvalidCovarianceError(ValueError):
    pass


def _check_bona_fide(cov: np.ndarray):
    smallest = float(np.linalg.eigvalsh(cov + 0.5j * OMEGA)[0])
    if smallest < -BONA_FIDE_TOLERANCE:
        raise InvalidCovarianceError(
            f"Covariance violates the uncertainty condition (min eigenvalue {smallest:.3e})")


@dataclass(frozen=True, eq=False)
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float)
        cov = np.array(self.cov, dtype=float)
        if mean.shape != (4,) or cov.shape != (4, 4):
            raise InvalidCovarianceError(
                f"Two-mode state needs a 4-vector mean and a 4x4 covariance, got {mean.shape} and {cov.shape}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InvalidCovarianceError("Gaussian state has non-finite entries")
        asymmetry = float(np.max(np.abs(cov - cov.T)))
        if asymmetry > SYMMETRY_TOLERANCE * max(1.0, float(np.max(np.abs(cov)))):
            raise InvalidCovarianceError(f"Covariance is not symmetric (deviation {asymmetry:.3e})")
        cov = (cov + cov.T) / 2
        _check_bona_fide(cov)
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, 'mean', mean)
        object.__setattr__(self, 'cov', cov)

    def to_dict(self) -> Dict[str, Any]:
        return {'mean': [float(x) for x in self.mean], 'cov': [[float(x) for x in row] for row in self.cov]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: Tuple[str, ...] = ()) -> 'GaussianState':
        if not isinstance(data, dict):
            raise SchemaError("Gaussian state must be a JSON object", path)
        cov = data.get('cov')
        if (not isinstance(cov, list) or len(cov) != 4
                or not all(isinstance(row, list) and len(row) == 4 and all(_is_number(x) for x in row)
                           for row in cov)):
            raise SchemaError("'cov' must be a 4x4 array of numbers", path + ('cov',))
        mean = data.get('mean', [0.0] * 4)
        if not isinstance(mean, list) or len(mean) != 4 or not all(_is_number(x) for x in mean):
            raise SchemaError("'mean' must be a list of 4 numbers", path + ('mean',))
        try:
            return cls(np.array(mean, dtype=float), np.array(cov, dtype=float))
        except InvalidCovarianceError as e:
            raise SchemaError(str(e), path + ('cov',)) from e


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


_CV_FIELDS = ('a1', 'a2', 'a3', 'a4', 'b1', 'b2', 'b3', 'b4')


@dataclass(frozen=True)
class CVConfig:
    a1: float
    a2: float
    a3: float
    a4: float
    b1: float
    b2: float
    b3: float
    b4: float

    def __post_init__(self):
        for name in _CV_FIELDS:
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"Coefficient {name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.a1 == 0 and self.a2 == 0:
            raise ValueError("At least one of a1, a2 must be nonzero")
        if self.b1 == 0 and self.b2 == 0:
            raise ValueError("At least one of b1, b2 must be nonzero")

    @property
    def u_vector(self) -> np.ndarray:
        """u = a1 q1 + a3 p1 + a2 q2 + a4 p2."""
        return np.array([self.a1, self.a3, self.a2, self.a4])

    @property
    def v_vector(self) -> np.ndarray:
        """v = b3 q1 + b1 p1 + b4 q2 + b2 p2."""
        return np.array([self.b3, self.b1, self.b4, self.b2])

    @property
    def commutator_weights(self) -> Tuple[float, float]:
        return abs(self.a1 * self.b1 - self.a3 * self.b3), abs(self.a2 * self.b2 - self.a4 * self.b4)

    def scaled(self, lam: float, mu: float) -> 'CVConfig':
        return CVConfig(lam * self.a1, lam * self.a2, lam * self.a3, lam * self.a4,
                        mu * self.b1, mu * self.b2, mu * self.b3, mu * self.b4)

    def to_dict(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in _CV_FIELDS}

    @classmethod
    def from_config(cls, cfg: CriterionConfig) -> 'CVConfig':
        return cls(cfg.a1, cfg.a2, cfg.a3, cfg.a4, cfg.b1, cfg.b2, cfg.b3, cfg.b4)

    @classmethod
    def from_vectors(cls, a: Sequence[float], b: Sequence[float]) -> 'CVConfig':
        """Build from (a1, a2, a3, a4) and (b1, b2, b3, b4)."""
        return cls(a[0], a[1], a[2], a[3], b[0], b[1], b[2], b[3])


EPR_CONFIG = CVConfig(1.0, -1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0)


def cv_variance(gs: GaussianState, coeffs: Sequence[float]) -> float:
    c = np.asarray(coeffs, dtype=float)
    if c.shape != (4,):
        raise ValueError(f"Quadrature coefficients must be a 4-vector, got shape {c.shape}")
    return max(0.0, float(c @ gs.cov @ c))


def vacuum() -> GaussianState:
    return GaussianState(np.zeros(4), np.eye(4) / 2)


def thermal_state(n1: float, n2: float) -> GaussianState:
    if n1 < 0 or n2 < 0:
        raise ValueError(f"Thermal occupations must be nonnegative, got {n1}, {n2}")
    return GaussianState(np.zeros(4), np.diag([n1 + 0.5, n1 + 0.5, n2 + 0.5, n2 + 0.5]))


def two_mode_squeezing(r: float) -> np.ndarray:
    z = np.diag([1.0, -1.0])
    ch, sh = math.cosh(r), math.sinh(r)
    return np.block([[ch * np.eye(2), sh * z], [sh * z, ch * np.eye(2)]])


def two_mode_squeezed(r: float, n_th: float = 0.0) -> GaussianState:
    if n_th < 0:
        raise ValueError(f"n_th must be nonnegative, got {n_th}")
    scale = n_th + 0.5
    z = np.diag([1.0, -1.0])
    diag = scale * math.cosh(2 * r) * np.eye(2)
    off = scale * math.sinh(2 * r) * z
    return GaussianState(np.zeros(4), np.block([[diag, off], [off, diag]]))


def _local(s1: np.ndarray, s2: np.ndarray) -> np.ndarray:
    return np.block([[s1, np.zeros((2, 2))], [np.zeros((2, 2)), s2]])


def _squeezer(s: float) -> np.ndarray:
    return np.diag([math.exp(-s), math.exp(s)])


def _rotation(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, s], [-s, c]])


def _beam_splitter(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.block([[c * np.eye(2), s * np.eye(2)], [-s * np.eye(2), c * np.eye(2)]])


def random_gaussian_state(seed: int, max_squeezing: float = 1.0, max_thermal: float = 1.0) -> GaussianState:
    """Thermal spectrum conjugated by seeded local squeezers, rotations, a beam splitter and a two-mode squeezer."""
    rng = np.random.default_rng(seed)
    n1, n2 = rng.uniform(0.0, max_thermal, size=2)
    cov = np.diag([n1 + 0.5, n1 + 0.5, n2 + 0.5, n2 + 0.5])
    symplectic = (
        _local(_rotation(rng.uniform(0, 2 * math.pi)), _rotation(rng.uniform(0, 2 * math.pi)))
        @ two_mode_squeezing(rng.uniform(-max_squeezing, max_squeezing))
        @ _beam_splitter(rng.uniform(0, 2 * math.pi))
        @ _local(_squeezer(rng.uniform(-max_squeezing, max_squeezing)),
                 _squeezer(rng.uniform(-max_squeezing, max_squeezing)))
    )
    mean = rng.normal(0.0, 1.0, size=4)
    return GaussianState(mean, symplectic @ cov @ symplectic.T)


def symplectic_eigenvalues(cov: np.ndarray) -> np.ndarray:
    """Ascending symplectic spectrum: moduli of the eigenvalues of i Omega cov, which come in equal pairs."""
    moduli = np.sort(np.abs(np.linalg.eigvals(1j * OMEGA @ np.asarray(cov, dtype=float))))
    return moduli[::2]


def partially_transposed(gs: GaussianState) -> np.ndarray:
    """Covariance of the partial transpose; it need not be bona fide, so a raw array is returned."""
    return MOMENTUM_REFLECTION @ gs.cov @ MOMENTUM_REFLECTION


def cv_product_check(gs: GaussianState, cfg: CVConfig, tol: float = VIOLATION_TOLERANCE) -> CriterionVerdict:
    w1, w2 = cfg.commutator_weights
    lhs = cv_variance(gs, cfg.u_vector) * cv_variance(gs, cfg.v_vector)
    return make_verdict(CriterionId.CV_PRODUCT, lhs, (w1 + w2) ** 2 / 4, cfg.to_dict(), tol)


def cv_sum_check(gs: GaussianState, cfg: CVConfig, tol: float = VIOLATION_TOLERANCE) -> CriterionVerdict:
    w1, w2 = cfg.commutator_weights
    lhs = cv_variance(gs, cfg.u_vector) + cv_variance(gs, cfg.v_vector)
    return make_verdict(CriterionId.CV_SUM, lhs, w1 + w2, cfg.to_dict(), tol)


CV_CHECKS = {
    CriterionId.CV_PRODUCT: cv_product_check,
    CriterionId.CV_SUM: cv_sum_check,
}


class GaussianOracleVerdict(str, Enum):
    SEPARABLE_SIDE = 'separable-side'
    ENTANGLED = 'entangled'


@dataclass(frozen=True)
class SimonResult:
    verdict: GaussianOracleVerdict
    nu: float

    @property
    def entangled(self) -> bool:
        return self.verdict == GaussianOracleVerdict.ENTANGLED

    def to_dict(self) -> Dict[str, Any]:
        return {'verdict': self.verdict.value, 'symplectic_eigenvalue': self.nu}


def simon_ppt_oracle(gs: GaussianState, tol: float = BONA_FIDE_TOLERANCE) -> SimonResult:
    """Entangled iff the smallest symplectic eigenvalue of the partial transpose drops below 1/2."""
    _check_bona_fide(gs.cov)
    nu = float(symplectic_eigenvalues(partially_transposed(gs))[0])
    verdict = GaussianOracleVerdict.ENTANGLED if nu < VACUUM_LEVEL - tol else GaussianOracleVerdict.SEPARABLE_SIDE
    logger.debug(f"Simon oracle: nu={nu:.6g} -> {verdict.value}")
    return SimonResult(verdict, nu)
