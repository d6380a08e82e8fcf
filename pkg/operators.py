"""Dense Hermitian-operator algebra on finite-dimensional bipartite spaces."""

from dataclasses import dataclass
from typing import Any, Dict, List, Tuple

import numpy as np
from scipy import linalg

HERMITIAN_TOLERANCE = 1e-12
SYMMETRIZE_TOLERANCE = 1e-10


class DimensionMismatchError(ValueError):
    pass


class HermiticityError(ValueError):
    pass


class SchemaError(ValueError):
    """Malformed JSON document; `path` is the key path of the offending value."""

    def __init__(self, message: str, path: Tuple[str, ...] = ()):
        super().__init__(message)
        self.path = path


def hermitian_deviation(matrix: np.ndarray) -> float:
    """Max absolute entry deviation of `matrix` from its conjugate transpose."""
    if matrix.size == 0:
        return 0.0
    return float(np.max(np.abs(matrix - matrix.conj().T)))


def _as_square(entries: Any) -> np.ndarray:
    matrix = np.array(entries, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < 1:
        raise DimensionMismatchError(f"Expected a non-empty square matrix, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise ValueError("Matrix has non-finite entries")
    return matrix


def symmetrized(entries: Any) -> np.ndarray:
    """Return (A + A†)/2 if A is Hermitian up to SYMMETRIZE_TOLERANCE, else raise."""
    matrix = _as_square(entries)
    deviation = hermitian_deviation(matrix)
    if deviation >= SYMMETRIZE_TOLERANCE:
        raise HermiticityError(f"Matrix is not Hermitian (deviation {deviation:.3e})")
    matrix = (matrix + matrix.conj().T) / 2
    matrix.flags.writeable = False
    return matrix


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    entries: np.ndarray

    # numpy scalars must defer `scalar * operator` to __rmul__
    __array_ufunc__ = None

    def __post_init__(self):
        object.__setattr__(self, 'entries', symmetrized(self.entries))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __add__(self, other: 'HermitianOperator') -> 'HermitianOperator':
        if not isinstance(other, HermitianOperator):
            return NotImplemented
        if other.dim != self.dim:
            raise DimensionMismatchError(f"Cannot add operators of dim {self.dim} and {other.dim}")
        return HermitianOperator(self.entries + other.entries)

    def __sub__(self, other: 'HermitianOperator') -> 'HermitianOperator':
        return self + (-1.0) * other

    def __rmul__(self, scalar: float) -> 'HermitianOperator':
        if isinstance(scalar, complex) or not np.isreal(scalar):
            return NotImplemented
        return HermitianOperator(float(scalar) * self.entries)

    def __neg__(self) -> 'HermitianOperator':
        return (-1.0) * self

    def allclose(self, other: 'HermitianOperator', atol: float = 1e-12) -> bool:
        return self.dim == other.dim and bool(np.allclose(self.entries, other.entries, atol=atol, rtol=0))

    def to_dict(self) -> Dict[str, Any]:
        return {'dim': self.dim, 'entries': encode_complex_matrix(self.entries)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: Tuple[str, ...] = ()) -> 'HermitianOperator':
        if not isinstance(data, dict):
            raise SchemaError("Observable must be a JSON object", path)
        for key in ('dim', 'entries'):
            if key not in data:
                raise SchemaError(f"Observable is missing '{key}'", path + (key,))
        dim = data['dim']
        if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
            raise SchemaError(f"'dim' must be a positive integer, got {dim!r}", path + ('dim',))
        entries = decode_complex_matrix(data['entries'], path + ('entries',))
        if entries.shape != (dim, dim):
            raise SchemaError(f"'entries' has shape {entries.shape}, expected ({dim}, {dim})", path + ('entries',))
        try:
            return cls(entries)
        except HermiticityError as e:
            raise SchemaError(str(e), path + ('entries',)) from e


@dataclass(frozen=True, eq=False)
class ObservablePair:
    r: HermitianOperator
    s: HermitianOperator

    def __post_init__(self):
        if self.r.dim != self.s.dim:
            raise DimensionMismatchError(f"Pair observables differ in dim: r={self.r.dim}, s={self.s.dim}")

    @property
    def dim(self) -> int:
        return self.r.dim


@dataclass(frozen=True, eq=False)
class CollectiveObservables:
    u: HermitianOperator
    v: HermitianOperator
    dims: Tuple[int, int]

    def __post_init__(self):
        total = self.dims[0] * self.dims[1]
        if self.u.dim != total or self.v.dim != total:
            raise DimensionMismatchError(
                f"Collective observables must act on dim {total}, got u={self.u.dim}, v={self.v.dim}")


def encode_complex_matrix(matrix: np.ndarray) -> List[List[List[float]]]:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(matrix)]


def decode_complex_matrix(rows: Any, path: Tuple[str, ...] = ()) -> np.ndarray:
    """Parse row-major [[ [re, im], ... ], ...] into a complex matrix."""
    if not isinstance(rows, list) or not rows:
        raise SchemaError("Matrix must be a non-empty list of rows", path)
    width = None
    parsed = []
    for i, row in enumerate(rows):
        if not isinstance(row, list):
            raise SchemaError(f"Row {i} is not a list", path + (str(i),))
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise SchemaError(f"Row {i} has {len(row)} entries, expected {width}", path + (str(i),))
        values = []
        for j, entry in enumerate(row):
            if (not isinstance(entry, list) or len(entry) != 2
                    or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in entry)):
                raise SchemaError(f"Entry ({i}, {j}) must be a [re, im] pair of numbers", path + (str(i), str(j)))
            values.append(complex(entry[0], entry[1]))
        parsed.append(values)
    return np.array(parsed, dtype=complex)


def identity(dim: int) -> HermitianOperator:
    return HermitianOperator(np.eye(dim, dtype=complex))


def tensor(a: HermitianOperator, b: HermitianOperator) -> HermitianOperator:
    return HermitianOperator(np.kron(a.entries, b.entries))


def embed(a: HermitianOperator, slot: int, dims: Tuple[int, int]) -> HermitianOperator:
    """Lift a single-subsystem operator to the bipartite space: A⊗I (slot 1) or I⊗A (slot 2)."""
    if slot not in (1, 2):
        raise ValueError(f"slot must be 1 or 2, got {slot}")
    if a.dim != dims[slot - 1]:
        raise DimensionMismatchError(f"Operator dim {a.dim} does not match subsystem {slot} dim {dims[slot - 1]}")
    if slot == 1:
        return tensor(a, identity(dims[1]))
    return tensor(identity(dims[0]), a)


def commutator_obs(pair: ObservablePair) -> HermitianOperator:
    """C = i[r, s], Hermitian whenever r and s are."""
    r, s = pair.r.entries, pair.s.entries
    raw = 1j * (r @ s - s @ r)
    scale = max(1.0, float(np.max(np.abs(raw))))
    deviation = hermitian_deviation(raw)
    if deviation >= HERMITIAN_TOLERANCE * scale * pair.dim:
        raise HermiticityError(f"Commutator lost Hermiticity (deviation {deviation:.3e}); inputs are corrupted")
    return HermitianOperator(raw)


def op_norm(c: HermitianOperator) -> float:
    """Operator norm sup|<psi|C|psi>|, i.e. the spectral radius for Hermitian C."""
    eigenvalues = linalg.eigvalsh(c.entries)
    return float(np.max(np.abs(eigenvalues)))


def build_uv(pair1: ObservablePair, pair2: ObservablePair, cfg) -> CollectiveObservables:
    """u = a1 r1 + a2 r2, v = b1 s1 + b2 s2 on H1⊗H2."""
    dims = (pair1.dim, pair2.dim)
    u = cfg.a1 * embed(pair1.r, 1, dims) + cfg.a2 * embed(pair2.r, 2, dims)
    v = cfg.b1 * embed(pair1.s, 1, dims) + cfg.b2 * embed(pair2.s, 2, dims)
    return CollectiveObservables(u=u, v=v, dims=dims)


def spin_operators(dim: int) -> Tuple[HermitianOperator, HermitianOperator, HermitianOperator]:
    """(2Jx, 2Jy, 2Jz) for spin j=(dim-1)/2; the Pauli matrices when dim=2."""
    if dim < 2:
        raise ValueError(f"Spin operators need dim >= 2, got {dim}")
    j = (dim - 1) / 2
    m = j - np.arange(dim)
    raising = np.zeros((dim, dim), dtype=complex)
    for k in range(1, dim):
        raising[k - 1, k] = np.sqrt(j * (j + 1) - m[k] * (m[k] + 1))
    lowering = raising.conj().T
    jx = (raising + lowering) / 2
    jy = (raising - lowering) / 2j
    jz = np.diag(m).astype(complex)
    return HermitianOperator(2 * jx), HermitianOperator(2 * jy), HermitianOperator(2 * jz)


PRESET_NAMES = ('x', 'y', 'z', 'id')
PRESET_PAIRS = {'xy': ('x', 'y'), 'yz': ('y', 'z'), 'zx': ('z', 'x')}


def preset_operator(name: str, dim: int) -> HermitianOperator:
    if name == 'id':
        return identity(dim)
    if name not in PRESET_NAMES:
        raise ValueError(f"Unknown preset observable '{name}'; expected one of {PRESET_NAMES}")
    sx, sy, sz = spin_operators(dim)
    return {'x': sx, 'y': sy, 'z': sz}[name]


def preset_pairs(dim: int) -> Dict[str, ObservablePair]:
    return {key: ObservablePair(preset_operator(r, dim), preset_operator(s, dim))
            for key, (r, s) in PRESET_PAIRS.items()}


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> HermitianOperator:
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return HermitianOperator(scale * (g + g.conj().T) / 2)


def observable_from_json(value: Any, dim: int, path: Tuple[str, ...] = ()) -> HermitianOperator:
    """An observable entry is either a preset name ("x", "y", "z", "id") or an operator object."""
    if isinstance(value, str):
        try:
            return preset_operator(value, dim)
        except ValueError as e:
            raise SchemaError(str(e), path) from e
    op = HermitianOperator.from_dict(value, path)
    if op.dim != dim:
        raise SchemaError(f"Observable has dim {op.dim}, subsystem needs {dim}", path + ('dim',))
    return op


def pairs_from_json(data: Any, dims: Tuple[int, int],
                    path: Tuple[str, ...] = ()) -> Tuple[ObservablePair, ObservablePair]:
    """Parse {"pair1": {"r": .., "s": ..}, "pair2": {...}} for subsystems of `dims`."""
    if not isinstance(data, dict):
        raise SchemaError("Observables document must be a JSON object", path)
    pairs = []
    for slot, key in enumerate(('pair1', 'pair2')):
        entry = data.get(key)
        if not isinstance(entry, dict):
            raise SchemaError(f"Missing or invalid '{key}'", path + (key,))
        ops = []
        for name in ('r', 's'):
            if name not in entry:
                raise SchemaError(f"'{key}' is missing '{name}'", path + (key, name))
            ops.append(observable_from_json(entry[name], dims[slot], path + (key, name)))
        pairs.append(ObservablePair(ops[0], ops[1]))
    return pairs[0], pairs[1]


def pairs_to_json(pairs: Tuple[ObservablePair, ObservablePair]) -> Dict[str, Any]:
    return {key: {'r': pair.r.to_dict(), 's': pair.s.to_dict()}
            for key, pair in zip(('pair1', 'pair2'), pairs)}
