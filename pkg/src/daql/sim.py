"""Dense state-vector simulation core for up to ~13 qubits.

Conventions used throughout the package:

* qubit 0 is the most significant bit of the computational basis index,
  so ``amplitudes.reshape([2] * n)`` puts qubit ``j`` on axis ``j``;
* Hamiltonian entries are angular frequencies in rad/us, times in us,
  and hbar = 1, so propagators are ``exp(-i H t)`` with no extra units.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .rng import RngStream

NORM_ATOL = 1e-10
HERMITICITY_ATOL = 1e-10
#: reduced-density-matrix eigenvalues below this contribute zero entropy
ENTROPY_EIGENVALUE_FLOOR = 1e-14

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


class SimulationError(RuntimeError):
    """Numerical failure (eigensolver non-convergence, residual too large)."""


@dataclass(frozen=True)
class QuantumState:
    """Normalized complex amplitude vector over ``n`` qubits."""

    n: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.ascontiguousarray(self.amplitudes, dtype=complex)
        if amps.shape != (2**self.n,):
            raise ValueError(
                f"amplitude vector has length {amps.shape}, expected 2**{self.n}"
            )
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_ATOL:
            raise ValueError(f"state norm {norm!r} deviates from 1 beyond {NORM_ATOL}")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zero(cls, n: int) -> "QuantumState":
        amps = np.zeros(2**n, dtype=complex)
        amps[0] = 1.0
        return cls(n, amps)

    @classmethod
    def basis(cls, n: int, index: int) -> "QuantumState":
        amps = np.zeros(2**n, dtype=complex)
        amps[index] = 1.0
        return cls(n, amps)

    @classmethod
    def from_bits(cls, bits: Sequence[int]) -> "QuantumState":
        n = len(bits)
        index = 0
        for b in bits:
            index = (index << 1) | (int(b) & 1)
        return cls.basis(n, index)

    @classmethod
    def product(cls, factors: Sequence[np.ndarray]) -> "QuantumState":
        """Tensor product of single-qubit vectors; factor 0 is qubit 0 (MSB)."""
        amps = np.array([1.0 + 0j])
        for f in factors:
            amps = np.kron(amps, np.asarray(f, dtype=complex))
        amps = amps / np.linalg.norm(amps)
        return cls(len(factors), amps)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def apply_on_targets(amps: np.ndarray, op: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """Apply a ``2^k x 2^k`` operator to the target qubits of a state array.

    ``amps`` may be a single state of shape ``(2**n,)`` or a batch of
    column states ``(2**n, b)``.  No unitarity check; callers validate.
    """
    k = len(targets)
    batch_shape = amps.shape[1:]
    work = amps.reshape([2] * n + list(batch_shape))
    work = np.moveaxis(work, list(targets), range(k))
    moved_shape = work.shape
    work = op @ work.reshape(2**k, -1)
    work = np.moveaxis(work.reshape(moved_shape), range(k), list(targets))
    return np.ascontiguousarray(work.reshape(amps.shape))


def _check_unitary(gate: np.ndarray, atol: float = 1e-10) -> None:
    d = gate.shape[0]
    if gate.shape != (d, d) or (d & (d - 1)) != 0:
        raise ValueError(f"gate shape {gate.shape} is not a square power of two")
    dev = np.abs(gate.conj().T @ gate - np.eye(d)).max()
    if dev > atol:
        raise ValueError(f"gate is not unitary: max deviation {dev:.2e} > {atol}")


def apply_gate(state: QuantumState, gate: np.ndarray, targets: Sequence[int]) -> QuantumState:
    """Apply a unitary on the given target qubits, leaving the rest untouched."""
    gate = np.asarray(gate, dtype=complex)
    _check_unitary(gate)
    k = int(np.log2(gate.shape[0]))
    if len(targets) != k:
        raise ValueError(f"gate acts on {k} qubits but {len(targets)} targets given")
    if len(set(targets)) != len(targets):
        raise IndexError(f"duplicate target qubits: {tuple(targets)}")
    for t in targets:
        if not 0 <= t < state.n:
            raise IndexError(f"target qubit {t} out of range for n={state.n}")
    return QuantumState(state.n, apply_on_targets(state.amplitudes, gate, targets, state.n))


class HermitianOperator:
    """Hermitian matrix on ``2**n`` dimensions with a cached eigendecomposition.

    The matrix may be stored dense or as a scipy sparse matrix; the spectral
    decomposition is computed lazily from the dense form on first use and
    reused for all subsequent evolutions under the same instance.
    """

    def __init__(self, matrix, validate: bool = True):
        if sp.issparse(matrix):
            self._sparse = matrix.tocsr().astype(complex)
            self._dense = None
            dim = self._sparse.shape[0]
        else:
            self._dense = np.ascontiguousarray(matrix, dtype=complex)
            self._sparse = None
            dim = self._dense.shape[0]
        if (dim & (dim - 1)) != 0:
            raise ValueError(f"dimension {dim} is not a power of two")
        self.dim = dim
        self._eig: tuple[np.ndarray, np.ndarray] | None = None
        if validate:
            dev = self._hermiticity_deviation()
            if dev > HERMITICITY_ATOL:
                raise ValueError(f"matrix is not Hermitian: max |M - M^dag| = {dev:.2e}")

    def _hermiticity_deviation(self) -> float:
        if self._sparse is not None:
            diff = self._sparse - self._sparse.getH()
            return 0.0 if diff.nnz == 0 else np.abs(diff.data).max()
        return float(np.abs(self._dense - self._dense.conj().T).max())

    def dense(self) -> np.ndarray:
        if self._dense is None:
            self._dense = self._sparse.toarray()
        return self._dense

    def apply(self, vec: np.ndarray) -> np.ndarray:
        if self._sparse is not None and self._eig is None:
            return self._sparse @ vec
        return self.dense() @ vec

    def eigensystem(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues (ascending) and eigenvector columns, cached."""
        if self._eig is None:
            try:
                w, v = np.linalg.eigh(self.dense())
            except np.linalg.LinAlgError as exc:
                raise SimulationError(f"eigh failed on dim={self.dim}: {exc}") from exc
            self._eig = (w, v)
        return self._eig

    def reconstruction_error(self) -> float:
        """Relative Frobenius error of V diag(w) V^dag against the matrix."""
        w, v = self.eigensystem()
        rebuilt = (v * w) @ v.conj().T
        return float(np.linalg.norm(rebuilt - self.dense()) / max(np.linalg.norm(self.dense()), 1e-300))

    def norm_bound(self) -> float:
        """Upper bound on the spectral norm (max absolute row sum)."""
        if self._sparse is not None:
            return float(np.abs(self._sparse).sum(axis=1).max())
        return float(np.abs(self.dense()).sum(axis=1).max())

    def propagate(self, t: float, amps: np.ndarray, method: str = "spectral") -> np.ndarray:
        """Return ``exp(-i H t) @ amps`` (any real t; batched columns allowed).

        ``spectral`` uses the cached eigendecomposition; ``krylov`` uses
        scipy's expm_multiply without densifying, which is cheaper when the
        operator is applied only once or twice (e.g. per-draw noisy layers).
        """
        if method == "spectral" or self._eig is not None:
            w, v = self.eigensystem()
            phases = np.exp(-1j * w * t)
            if amps.ndim == 1:
                return v @ (phases * (v.conj().T @ amps))
            return v @ (phases[:, None] * (v.conj().T @ amps))
        if method != "krylov":
            raise ValueError(f"unknown propagation method {method!r}")
        op = self._sparse if self._sparse is not None else self._dense
        return spla.expm_multiply((-1j * t) * op, amps)


def evolve(H: HermitianOperator, t: float, state: QuantumState) -> QuantumState:
    """Evolve a state for time ``t`` under ``exp(-i H t)``."""
    if t < 0:
        raise ValueError(f"evolution time must be nonnegative, got {t}")
    if H.dim != state.amplitudes.shape[0]:
        raise ValueError(f"dimension mismatch: H dim {H.dim}, state dim {state.amplitudes.shape[0]}")
    return QuantumState(state.n, H.propagate(t, state.amplitudes))


def expectation(state: QuantumState, O: HermitianOperator) -> float:
    """Return <psi|O|psi>; the (tiny) imaginary residue is checked and dropped."""
    if O.dim != state.amplitudes.shape[0]:
        raise ValueError(f"dimension mismatch: O dim {O.dim}, state dim {state.amplitudes.shape[0]}")
    val = np.vdot(state.amplitudes, O.apply(state.amplitudes))
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise SimulationError(f"expectation has non-negligible imaginary part {val.imag:.2e}")
    return float(val.real)


def sample_bitstrings(state: QuantumState, shots: int, rng: RngStream) -> np.ndarray:
    """Sample measurement outcomes; returns a (shots, n) array of bits.

    Column j holds qubit j (qubit 0 = most significant bit of the index).
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    probs = state.probabilities()
    probs = probs / probs.sum()
    gen = rng.generator()
    outcomes = gen.choice(len(probs), size=shots, p=probs)
    shifts = np.arange(state.n - 1, -1, -1)
    return ((outcomes[:, None] >> shifts[None, :]) & 1).astype(np.uint8)


def entanglement_entropy(state: QuantumState, subsystem: Iterable[int]) -> float:
    """Von Neumann entropy (nats) of the reduced state on ``subsystem``."""
    sub = sorted(set(int(q) for q in subsystem))
    if not sub or len(sub) >= state.n:
        raise ValueError("subsystem must be a nonempty proper subset of the qubits")
    if sub[0] < 0 or sub[-1] >= state.n:
        raise IndexError(f"subsystem {sub} out of range for n={state.n}")
    k = len(sub)
    work = state.amplitudes.reshape([2] * state.n)
    work = np.moveaxis(work, sub, range(k)).reshape(2**k, -1)
    # Schmidt coefficients via SVD; rho_A eigenvalues are their squares.
    svals = np.linalg.svd(work, compute_uv=False)
    p = svals**2
    p = p[p > ENTROPY_EIGENVALUE_FLOOR]
    return float(-(p * np.log(p)).sum())


def _lanczos_start_vector(dim: int) -> np.ndarray:
    # Fixed generic vector: deterministic and not orthogonal to typical
    # ground spaces (no zero entries, no lattice symmetry).
    v = np.cos(0.37 * np.arange(dim) + 0.123) + 0.5
    return v / np.linalg.norm(v)


def ground_state(H: HermitianOperator) -> tuple[float, QuantumState]:
    """Lowest eigenpair of ``H``.

    Dense diagonalization is used up to dim 1024; larger problems fall back
    to an implicitly restarted Lanczos solve on the operator action.  On a
    degenerate ground space any representative may be returned, but the
    result is deterministic for fixed inputs.
    """
    n = int(np.log2(H.dim))
    if H.dim <= 1024:
        w, v = H.eigensystem()
        energy, vec = float(w[0]), v[:, 0]
    else:
        op = spla.LinearOperator((H.dim, H.dim), matvec=H.apply, dtype=complex)
        try:
            w, v = spla.eigsh(op, k=1, which="SA", v0=_lanczos_start_vector(H.dim))
        except spla.ArpackNoConvergence as exc:
            raise SimulationError(f"Lanczos failed to converge at dim={H.dim}: {exc}") from exc
        energy, vec = float(w[0]), v[:, 0]
    vec = vec / np.linalg.norm(vec)
    residual = np.linalg.norm(H.apply(vec) - energy * vec)
    bound = 1e-8 * max(H.norm_bound(), 1.0)
    if residual > bound:
        raise SimulationError(f"ground-state residual {residual:.2e} exceeds {bound:.2e}")
    return energy, QuantumState(n, vec)


def haar_random_state(n: int, rng: RngStream) -> QuantumState:
    """Haar-random pure state: normalized i.i.d. complex Gaussian vector."""
    if n < 1:
        raise ValueError("need at least one qubit")
    gen = rng.generator()
    vec = gen.standard_normal(2**n) + 1j * gen.standard_normal(2**n)
    return QuantumState(n, vec / np.linalg.norm(vec))
