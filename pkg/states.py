"""Density matrices, separable ensembles, criterion coefficients and state constructors."""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy import linalg

from operators import (
    DimensionMismatchError,
    HermiticityError,
    HermitianOperator,
    SchemaError,
    decode_complex_matrix,
    encode_complex_matrix,
    symmetrized,
)

TRACE_TOLERANCE = 1e-10
PSD_TOLERANCE = 1e-9
WEIGHT_TOLERANCE = 1e-10
IMAGINARY_TOLERANCE = 1e-10
MAX_ENSEMBLE_TERMS = 64


class InvalidStateError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """A unit-trace PSD matrix on one subsystem (dims=(d,)) or two (dims=(d1, d2))."""

    dims: Tuple[int, ...]
    entries: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) not in (1, 2) or any(d < 1 for d in dims):
            raise InvalidStateError(f"dims must hold one or two positive integers, got {self.dims}")
        try:
            matrix = symmetrized(self.entries)
        except HermiticityError as e:
            raise InvalidStateError(f"Density matrix is not Hermitian: {e}") from e
        if matrix.shape[0] != math.prod(dims):
            raise DimensionMismatchError(f"Matrix of size {matrix.shape[0]} does not match dims {dims}")
        trace = float(np.trace(matrix).real)
        if abs(trace - 1.0) > TRACE_TOLERANCE:
            raise InvalidStateError(f"Density matrix trace is {trace!r}, expected 1")
        smallest = float(linalg.eigvalsh(matrix)[0])
        if smallest < -PSD_TOLERANCE:
            raise InvalidStateError(f"Density matrix has negative eigenvalue {smallest:.3e}")
        object.__setattr__(self, 'dims', dims)
        object.__setattr__(self, 'entries', matrix)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def is_bipartite(self) -> bool:
        return len(self.dims) == 2

    def to_dict(self) -> Dict[str, Any]:
        return {'dims': list(self.dims), 'entries': encode_complex_matrix(self.entries)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: Tuple[str, ...] = ()) -> 'DensityMatrix':
        if not isinstance(data, dict):
            raise SchemaError("State must be a JSON object", path)
        if 'entries' not in data:
            raise SchemaError("State is missing 'entries'", path + ('entries',))
        entries = decode_complex_matrix(data['entries'], path + ('entries',))
        dims = data.get('dims', [entries.shape[0]])
        if (not isinstance(dims, list) or len(dims) not in (1, 2)
                or not all(isinstance(d, int) and not isinstance(d, bool) and d >= 1 for d in dims)):
            raise SchemaError(f"'dims' must be a list of one or two positive integers, got {dims!r}",
                              path + ('dims',))
        try:
            return cls(tuple(dims), entries)
        except ValueError as e:
            raise SchemaError(str(e), path + ('entries',)) from e


@dataclass(frozen=True, eq=False)
class EnsembleTerm:
    w: float
    rho1: DensityMatrix
    rho2: DensityMatrix


@dataclass(frozen=True, eq=False)
class SeparableEnsemble:
    """Convex mixture of product states, sum_k w_k rho_k1 (x) rho_k2."""

    terms: Tuple[EnsembleTerm, ...]

    def __post_init__(self):
        terms = tuple(self.terms)
        if not 1 <= len(terms) <= MAX_ENSEMBLE_TERMS:
            raise InvalidStateError(f"Ensemble needs 1..{MAX_ENSEMBLE_TERMS} terms, got {len(terms)}")
        for k, term in enumerate(terms):
            if not math.isfinite(term.w) or term.w < 0:
                raise InvalidStateError(f"Term {k} has invalid weight {term.w!r}")
            if term.rho1.is_bipartite or term.rho2.is_bipartite:
                raise InvalidStateError(f"Term {k} factors must be single-subsystem states")
            if (term.rho1.dim, term.rho2.dim) != (terms[0].rho1.dim, terms[0].rho2.dim):
                raise DimensionMismatchError(f"Term {k} factor dims differ from term 0")
        total = math.fsum(term.w for term in terms)
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise InvalidStateError(f"Ensemble weights sum to {total!r}, expected 1")
        object.__setattr__(self, 'terms', terms)

    @property
    def dims(self) -> Tuple[int, int]:
        return self.terms[0].rho1.dim, self.terms[0].rho2.dim

    @property
    def weights(self) -> np.ndarray:
        return np.array([term.w for term in self.terms])

    def to_dict(self) -> Dict[str, Any]:
        return {
            'dims': list(self.dims),
            'terms': [{'w': term.w, 'rho1': term.rho1.to_dict(), 'rho2': term.rho2.to_dict()}
                      for term in self.terms],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: Tuple[str, ...] = ()) -> 'SeparableEnsemble':
        if not isinstance(data, dict) or not isinstance(data.get('terms'), list):
            raise SchemaError("Ensemble must be an object with a 'terms' list", path + ('terms',))
        terms = []
        for k, raw in enumerate(data['terms']):
            where = path + ('terms', str(k))
            if not isinstance(raw, dict):
                raise SchemaError(f"Term {k} must be an object", where)
            w = raw.get('w')
            if not isinstance(w, (int, float)) or isinstance(w, bool):
                raise SchemaError(f"Term {k} weight must be a number", where + ('w',))
            rho1 = DensityMatrix.from_dict(raw.get('rho1'), where + ('rho1',))
            rho2 = DensityMatrix.from_dict(raw.get('rho2'), where + ('rho2',))
            terms.append(EnsembleTerm(float(w), rho1, rho2))
        try:
            ensemble = cls(tuple(terms))
        except ValueError as e:
            raise SchemaError(str(e), path + ('terms',)) from e
        declared = data.get('dims')
        if declared is not None and list(declared) != list(ensemble.dims):
            raise SchemaError(f"Declared dims {declared} do not match terms {list(ensemble.dims)}",
                              path + ('dims',))
        return ensemble


@dataclass(frozen=True)
class CriterionConfig:
    """Real coefficients of u = a1 r1 + a2 r2 and v = b1 s1 + b2 s2 (a3..b4 for CV)."""

    a1: float
    a2: float
    b1: float
    b2: float
    a3: float = 0.0
    a4: float = 0.0
    b3: float = 0.0
    b4: float = 0.0

    def __post_init__(self):
        for name in ('a1', 'a2', 'b1', 'b2', 'a3', 'a4', 'b3', 'b4'):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"Coefficient {name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.a1 == 0 and self.a2 == 0:
            raise ValueError("At least one of a1, a2 must be nonzero")
        if self.b1 == 0 and self.b2 == 0:
            raise ValueError("At least one of b1, b2 must be nonzero")

    def scaled(self, lam: float, mu: float) -> 'CriterionConfig':
        return CriterionConfig(lam * self.a1, lam * self.a2, mu * self.b1, mu * self.b2,
                               lam * self.a3, lam * self.a4, mu * self.b3, mu * self.b4)

    def to_dict(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in ('a1', 'a2', 'b1', 'b2', 'a3', 'a4', 'b3', 'b4')}

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: Tuple[str, ...] = ()) -> 'CriterionConfig':
        if not isinstance(data, dict):
            raise SchemaError("Config must be a JSON object", path)
        values = {}
        for name in ('a1', 'a2', 'b1', 'b2', 'a3', 'a4', 'b3', 'b4'):
            if name not in data:
                if name in ('a1', 'a2', 'b1', 'b2'):
                    raise SchemaError(f"Config is missing '{name}'", path + (name,))
                continue
            value = data[name]
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise SchemaError(f"'{name}' must be a number, got {value!r}", path + (name,))
            values[name] = float(value)
        try:
            return cls(**values)
        except ValueError as e:
            raise SchemaError(str(e), path) from e


class BellState(Enum):
    PHI_PLUS = 'phi+'
    PHI_MINUS = 'phi-'
    PSI_PLUS = 'psi+'
    PSI_MINUS = 'psi-'


_BELL_VECTORS = {
    BellState.PHI_PLUS: (1, 0, 0, 1),
    BellState.PHI_MINUS: (1, 0, 0, -1),
    BellState.PSI_PLUS: (0, 1, 1, 0),
    BellState.PSI_MINUS: (0, 1, -1, 0),
}


def _check_dims(rho: DensityMatrix, op_dim: int):
    if rho.dim != op_dim:
        raise DimensionMismatchError(f"Operator dim {op_dim} does not match state dim {rho.dim}")


def complex_expectation(rho: DensityMatrix, matrix: np.ndarray) -> complex:
    """Tr[M rho] for an arbitrary (not necessarily Hermitian) matrix M."""
    _check_dims(rho, matrix.shape[0])
    return complex(np.einsum('ij,ji->', matrix, rho.entries))


def expectation(rho: DensityMatrix, op: HermitianOperator) -> float:
    value = complex_expectation(rho, op.entries)
    scale = max(1.0, float(np.max(np.abs(op.entries))))
    if abs(value.imag) > IMAGINARY_TOLERANCE * scale:
        raise ValueError(f"Expectation has imaginary residue {value.imag:.3e}")
    return value.real


def variance(rho: DensityMatrix, op: HermitianOperator) -> float:
    """<O^2> - <O>^2, clamped to zero when rounding pushes it slightly negative."""
    mean = expectation(rho, op)
    second = complex_expectation(rho, op.entries @ op.entries).real
    value = second - mean * mean
    if value < 0:
        if value < -IMAGINARY_TOLERANCE * max(1.0, second):
            raise ValueError(f"Variance is negative ({value:.3e}); state or operator is corrupted")
        value = 0.0
    return value


def reduced_state(rho: DensityMatrix, slot: int) -> DensityMatrix:
    """Partial trace keeping subsystem `slot`."""
    if not rho.is_bipartite:
        raise ValueError("reduced_state needs a bipartite state")
    d1, d2 = rho.dims
    blocks = rho.entries.reshape(d1, d2, d1, d2)
    if slot == 1:
        return DensityMatrix((d1,), np.einsum('ijkj->ik', blocks))
    if slot == 2:
        return DensityMatrix((d2,), np.einsum('ijil->jl', blocks))
    raise ValueError(f"slot must be 1 or 2, got {slot}")


def partial_transpose(rho: DensityMatrix, slot: int = 2) -> np.ndarray:
    """Transpose the indices of one tensor factor; the result may be non-PSD."""
    if not rho.is_bipartite:
        raise ValueError("partial_transpose needs a bipartite state")
    if slot not in (1, 2):
        raise ValueError(f"slot must be 1 or 2, got {slot}")
    d1, d2 = rho.dims
    blocks = rho.entries.reshape(d1, d2, d1, d2)
    axes = (2, 1, 0, 3) if slot == 1 else (0, 3, 2, 1)
    return blocks.transpose(axes).reshape(d1 * d2, d1 * d2)


def product_state(rho1: DensityMatrix, rho2: DensityMatrix) -> DensityMatrix:
    return DensityMatrix((rho1.dim, rho2.dim), np.kron(rho1.entries, rho2.entries))


def ensemble_to_density(ensemble: SeparableEnsemble) -> DensityMatrix:
    d1, d2 = ensemble.dims
    total = np.zeros((d1 * d2, d1 * d2), dtype=complex)
    for term in ensemble.terms:
        total += term.w * np.kron(term.rho1.entries, term.rho2.entries)
    return DensityMatrix((d1, d2), total)


def pure_state(vector: Any, dims: Tuple[int, ...]) -> DensityMatrix:
    psi = np.asarray(vector, dtype=complex)
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise InvalidStateError("Zero vector is not a state")
    psi = psi / norm
    return DensityMatrix(tuple(dims), np.outer(psi, psi.conj()))


def computational_state(i: int, j: int, dims: Tuple[int, int] = (2, 2)) -> DensityMatrix:
    """|i j><i j|."""
    psi = np.zeros(dims[0] * dims[1], dtype=complex)
    psi[i * dims[1] + j] = 1.0
    return pure_state(psi, dims)


def maximally_mixed(dims: Tuple[int, ...]) -> DensityMatrix:
    dim = math.prod(dims)
    return DensityMatrix(tuple(dims), np.eye(dim, dtype=complex) / dim)


def bell_state(which: BellState) -> DensityMatrix:
    return pure_state(_BELL_VECTORS[BellState(which)], (2, 2))


def werner_state(p: float) -> DensityMatrix:
    """p |psi-><psi-| + (1 - p) I/4."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"Werner parameter must lie in [0, 1], got {p}")
    singlet = bell_state(BellState.PSI_MINUS).entries
    return DensityMatrix((2, 2), p * singlet + (1 - p) * np.eye(4) / 4)


def purity(rho: DensityMatrix) -> float:
    return float(np.real(np.einsum('ij,ji->', rho.entries, rho.entries)))


def random_pure_vector(dim: int, rng: np.random.Generator) -> np.ndarray:
    psi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return psi / np.linalg.norm(psi)


def random_single_state(dim: int, rng: np.random.Generator) -> DensityMatrix:
    """Mixture of at most `dim` random pure states with simplex-uniform weights."""
    count = int(rng.integers(1, dim + 1))
    weights = rng.dirichlet(np.ones(count))
    matrix = np.zeros((dim, dim), dtype=complex)
    for w in weights:
        psi = random_pure_vector(dim, rng)
        matrix += w * np.outer(psi, psi.conj())
    return DensityMatrix((dim,), matrix / np.trace(matrix).real)


def random_product_ensemble(dims: Tuple[int, int], k: int, seed: int) -> SeparableEnsemble:
    if not 1 <= k <= MAX_ENSEMBLE_TERMS:
        raise ValueError(f"Ensemble size must be in 1..{MAX_ENSEMBLE_TERMS}, got {k}")
    rng = np.random.default_rng(seed)
    weights = rng.dirichlet(np.ones(k))
    weights = weights / math.fsum(weights)
    terms = tuple(
        EnsembleTerm(float(w), random_single_state(dims[0], rng), random_single_state(dims[1], rng))
        for w in weights
    )
    return SeparableEnsemble(terms)


def random_density_matrix(dims: Tuple[int, int], seed: int, rank: Optional[int] = None) -> DensityMatrix:
    """G G† / Tr for a complex Gaussian G of the given rank (full rank by default)."""
    dim = dims[0] * dims[1]
    rank = dim if rank is None else rank
    if not 1 <= rank <= dim:
        raise ValueError(f"rank must be in 1..{dim}, got {rank}")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    matrix = g @ g.conj().T
    return DensityMatrix(tuple(dims), matrix / np.trace(matrix).real)
