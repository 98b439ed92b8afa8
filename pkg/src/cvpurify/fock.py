"""Truncated Fock-space states and operations.

Every mode of a register is truncated at the same maximal occupation
``cutoff``.  Basis states are occupation tuples enumerated
lexicographically with mode 0 varying slowest, which is exactly C order of
an array of shape ``(cutoff + 1,) * mode_count``; flat amplitude vectors
can therefore be reshaped into that tensor without copying.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

# Dense kets are cheap; dense density matrices cost 16 * dim**2 bytes.
MAX_KET_DIM = 1 << 24
MAX_DENSITY_DIM = 5000

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-10


class FockError(ValueError):
    """Invalid occupation, mode, or state for a Fock-space operation."""


class CapacityError(FockError):
    """The requested register is too large for a dense representation."""


@dataclass(frozen=True)
class FockRegister:
    mode_count: int
    cutoff: int

    def __post_init__(self):
        if int(self.mode_count) != self.mode_count or self.mode_count < 1:
            raise FockError(f"mode_count must be a positive integer, got {self.mode_count!r}")
        if int(self.cutoff) != self.cutoff or self.cutoff < 1:
            raise FockError(f"cutoff must be an integer >= 1, got {self.cutoff!r}")

    @property
    def levels(self) -> int:
        return self.cutoff + 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.levels,) * self.mode_count

    @property
    def dim(self) -> int:
        # python ints: exact for any mode count
        return self.levels ** self.mode_count

    def check_mode(self, mode: int) -> int:
        if int(mode) != mode or not 0 <= mode < self.mode_count:
            raise FockError(f"mode {mode!r} out of range for {self.mode_count} modes")
        return int(mode)

    def check_modes(self, modes: Iterable[int]) -> tuple[int, ...]:
        out = tuple(sorted({self.check_mode(k) for k in modes}))
        if not out:
            raise FockError("mode set must be non-empty")
        return out

    def index(self, occupations: Sequence[int]) -> int:
        occupations = tuple(occupations)
        if len(occupations) != self.mode_count:
            raise FockError(
                f"expected {self.mode_count} occupations, got {len(occupations)}")
        for k, n in enumerate(occupations):
            if int(n) != n or n < 0:
                raise FockError(f"occupation of mode {k} must be a non-negative integer")
            if n > self.cutoff:
                raise FockError(
                    f"occupation {n} of mode {k} exceeds cutoff {self.cutoff}")
        idx = 0
        for n in occupations:
            idx = idx * self.levels + int(n)
        return idx

    def occupations(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.dim:
            raise FockError(f"basis index {index} out of range")
        return tuple(int(v) for v in np.unravel_index(index, self.shape))

    def basis(self) -> Iterator[tuple[int, ...]]:
        return itertools.product(range(self.levels), repeat=self.mode_count)

    def number_grid(self, modes: Iterable[int]) -> np.ndarray:
        """Flat array of the total occupation of ``modes`` for each basis index."""
        modes = self.check_modes(modes)
        total = np.zeros(self.shape, dtype=np.int64)
        n = np.arange(self.levels)
        for k in modes:
            shape = [1] * self.mode_count
            shape[k] = self.levels
            total = total + n.reshape(shape)
        return total.reshape(-1)

    def concat(self, other: "FockRegister") -> "FockRegister":
        if other.cutoff != self.cutoff:
            raise FockError(
                f"cannot combine registers with cutoffs {self.cutoff} and {other.cutoff}")
        return FockRegister(self.mode_count + other.mode_count, self.cutoff)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StateVector:
    """A (possibly unnormalized) ket on a truncated register.

    ``tail_weight`` is the probability that was discarded when the state
    was truncated from an infinite expansion; it is bookkeeping only.
    """

    register: FockRegister
    amplitudes: np.ndarray
    tail_weight: float = 0.0

    def __post_init__(self):
        if self.register.dim > MAX_KET_DIM:
            raise CapacityError(
                f"ket dimension {self.register.dim} exceeds cap {MAX_KET_DIM}")
        amps = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.size != self.register.dim:
            raise FockError(
                f"amplitude length {amps.size} does not match register dimension "
                f"{self.register.dim}")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def is_null(self) -> bool:
        """True for the (representable, but flagged) zero vector."""
        return self.norm == 0.0

    @property
    def is_normalized(self) -> bool:
        return abs(self.norm - 1.0) <= NORM_TOL

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.register.shape)

    def amplitude(self, occupations: Sequence[int]) -> complex:
        return complex(self.amplitudes[self.register.index(occupations)])

    def normalize(self) -> "StateVector":
        nrm = self.norm
        if nrm == 0.0:
            raise FockError("cannot normalize the zero vector")
        return StateVector(self.register, self.amplitudes / nrm, self.tail_weight)

    def overlap(self, other: "StateVector") -> complex:
        if other.register != self.register:
            raise FockError("overlap requires identical registers")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: "StateVector") -> float:
        """|<self|other>|^2 for normalized inputs."""
        return abs(self.overlap(other)) ** 2

    def mean_number(self, mode: int) -> float:
        grid = self.register.number_grid([mode])
        return float(np.sum(grid * np.abs(self.amplitudes) ** 2))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    register: FockRegister
    matrix: np.ndarray

    def __post_init__(self):
        dim = self.register.dim
        if dim > MAX_DENSITY_DIM:
            raise CapacityError(
                f"density-matrix dimension {dim} exceeds cap {MAX_DENSITY_DIM}")
        mat = np.array(self.matrix, dtype=np.complex128)
        if mat.shape != (dim, dim):
            raise FockError(f"matrix shape {mat.shape} does not match dimension {dim}")
        object.__setattr__(self, "matrix", _frozen(mat))

    @classmethod
    def from_ket(cls, state: StateVector) -> "DensityMatrix":
        psi = state.amplitudes
        return cls(state.register, np.outer(psi, psi.conj()))

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def tensor(self) -> np.ndarray:
        return self.matrix.reshape(self.register.shape * 2)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0))

    def eigenvalues(self) -> np.ndarray:
        herm = 0.5 * (self.matrix + self.matrix.conj().T)
        return np.linalg.eigvalsh(herm)

    def validate(self, check_positive: bool = True) -> "DensityMatrix":
        """Raise FockError unless Hermitian, unit trace and (optionally) PSD."""
        if self.hermiticity_error() > HERMITIAN_TOL:
            raise FockError(f"matrix not Hermitian (error {self.hermiticity_error():.3g})")
        if abs(self.trace - 1.0) > TRACE_TOL:
            raise FockError(f"trace {self.trace!r} differs from 1")
        if check_positive:
            lo = float(self.eigenvalues()[0])
            if lo < -POSITIVITY_TOL:
                raise FockError(f"negative eigenvalue {lo:.3g}")
        return self

    def mean_number(self, mode: int) -> float:
        grid = self.register.number_grid([mode])
        return float(np.sum(grid * np.diag(self.matrix).real))

    def fidelity(self, state: StateVector) -> float:
        """<psi|rho|psi> against a pure reference."""
        if state.register != self.register:
            raise FockError("fidelity requires identical registers")
        psi = state.amplitudes
        return float(np.vdot(psi, self.matrix @ psi).real)


def number_ket(register: FockRegister, occupations: Sequence[int]) -> StateVector:
    amps = np.zeros(register.dim, dtype=np.complex128)
    amps[register.index(occupations)] = 1.0
    return StateVector(register, amps)


def vacuum(register: FockRegister) -> StateVector:
    return number_ket(register, (0,) * register.mode_count)


def lower_axis(tensor: np.ndarray, axis: int) -> np.ndarray:
    """Apply a|n> = sqrt(n)|n-1> along one axis of a Fock tensor."""
    levels = tensor.shape[axis]
    out = np.zeros_like(tensor)
    dst = [slice(None)] * tensor.ndim
    src = [slice(None)] * tensor.ndim
    dst[axis] = slice(0, levels - 1)
    src[axis] = slice(1, levels)
    shape = [1] * tensor.ndim
    shape[axis] = levels - 1
    out[tuple(dst)] = tensor[tuple(src)] * np.sqrt(np.arange(1, levels)).reshape(shape)
    return out


def annihilate(state: StateVector, mode: int) -> StateVector:
    """Unnormalized a_mode |state>; its squared norm equals <n_mode>."""
    mode = state.register.check_mode(mode)
    return StateVector(state.register, lower_axis(state.tensor(), mode), state.tail_weight)


def tensor(a: StateVector, b: StateVector) -> StateVector:
    register = a.register.concat(b.register)
    tail = 1.0 - (1.0 - a.tail_weight) * (1.0 - b.tail_weight)
    return StateVector(register, np.kron(a.amplitudes, b.amplitudes), tail)


def permute_modes(state: StateVector, order: Sequence[int]) -> StateVector:
    """Reorder modes so that new mode ``i`` is old mode ``order[i]``."""
    order = tuple(order)
    if sorted(order) != list(range(state.register.mode_count)):
        raise FockError(f"{order!r} is not a permutation of the register modes")
    return StateVector(
        state.register, np.ascontiguousarray(state.tensor().transpose(order)),
        state.tail_weight)


def _keep_modes(register: FockRegister, keep: Iterable[int]) -> tuple[int, ...]:
    keep = tuple(keep)
    if not keep:
        raise FockError("keep set must be non-empty")
    return register.check_modes(keep)


def partial_trace(rho: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    """Reduced state on ``keep``; kept modes retain their relative order."""
    reg = rho.register
    keep = _keep_modes(reg, keep)
    n = reg.mode_count
    rows = list(range(n))
    cols = [k if k not in keep else n + k for k in range(n)]
    out = [k for k in keep] + [n + k for k in keep]
    reduced = np.einsum(rho.tensor(), rows + cols, out)
    sub = FockRegister(len(keep), reg.cutoff)
    return DensityMatrix(sub, reduced.reshape(sub.dim, sub.dim))


def _bipartition(state: StateVector, keep: Iterable[int]) -> np.ndarray:
    reg = state.register
    keep = _keep_modes(reg, keep)
    rest = [k for k in range(reg.mode_count) if k not in keep]
    t = state.tensor().transpose(list(keep) + rest)
    return t.reshape(reg.levels ** len(keep), -1)


def reduced_density(state: StateVector, keep: Iterable[int]) -> DensityMatrix:
    """Partial trace of |psi><psi| without forming the full density matrix."""
    keep = _keep_modes(state.register, keep)
    m = _bipartition(state, keep)
    return DensityMatrix(FockRegister(len(keep), state.register.cutoff), m @ m.conj().T)


def schmidt_coefficients(state: StateVector, keep: Iterable[int]) -> np.ndarray:
    """Squared Schmidt coefficients across the ``keep`` | rest cut, descending."""
    mat = _bipartition(state, keep)
    # all-zero rows and columns carry no singular value; projected states are sparse
    mat = mat[np.any(mat != 0, axis=1)][:, np.any(mat != 0, axis=0)]
    if mat.size == 0:
        return np.zeros(1)
    s = np.linalg.svd(mat, compute_uv=False)
    return s ** 2


def _entropy_bits(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(max(0.0, -np.sum(p * np.log2(p))))


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """Entropy in bits, with 0 log 0 = 0."""
    if rho.hermiticity_error() > 1e-10:
        raise FockError("von Neumann entropy requires a Hermitian matrix")
    p = np.clip(rho.eigenvalues(), 0.0, None)
    return _entropy_bits(p)


def entanglement_entropy(state: StateVector, keep: Iterable[int]) -> float:
    """Entropy of entanglement (bits) of a normalized pure state."""
    return _entropy_bits(schmidt_coefficients(state, keep))


def total_number_distribution(state: StateVector, modes: Iterable[int]) -> np.ndarray:
    """Weights ||P_j psi||^2 for j = 0 .. len(modes) * cutoff."""
    modes = state.register.check_modes(modes)
    grid = state.register.number_grid(modes)
    weights = np.abs(state.amplitudes) ** 2
    return np.bincount(grid, weights=weights, minlength=len(modes) * state.register.cutoff + 1)


def total_number_project(state: StateVector, modes: Iterable[int], j: int) -> StateVector:
    """Unnormalized P_j |psi> for the total occupation of ``modes``."""
    grid = state.register.number_grid(modes)
    return StateVector(state.register, np.where(grid == j, state.amplitudes, 0.0),
                       state.tail_weight)


def total_number_projector_apply(
    state: StateVector, modes: Iterable[int], j: int
) -> tuple[float, StateVector]:
    """Project onto total occupation ``j``.

    Returns ``(probability, post_state)``.  A zero-probability branch
    returns the zero vector, which callers can detect via ``is_null``.
    """
    if j < 0:
        raise FockError("total number j must be non-negative")
    projected = total_number_project(state, modes, j)
    prob = projected.norm ** 2
    if prob == 0.0:
        return 0.0, projected
    return prob, projected.normalize()


def sample_total_number(state: StateVector, modes: Iterable[int],
                        rng: np.random.Generator) -> int:
    """Draw an outcome j from the projector weights using one uniform variate."""
    probs = total_number_distribution(state, modes)
    cdf = np.cumsum(probs)
    u = rng.random() * cdf[-1]
    return int(min(np.searchsorted(cdf, u, side="right"), probs.size - 1))


def project_density(rho: DensityMatrix, mode_sets: Sequence[Iterable[int]],
                    totals: Sequence[int]) -> DensityMatrix:
    """Unnormalized P rho P for a product of total-number projectors."""
    keep = np.ones(rho.register.dim, dtype=bool)
    for modes, j in zip(mode_sets, totals):
        keep &= rho.register.number_grid(modes) == j
    mat = np.where(keep[:, None] & keep[None, :], rho.matrix, 0.0)
    return DensityMatrix(rho.register, mat)
