"""Digital-analog and digital ansatz circuits.

A circuit is an alternation of trainable single-qubit Euler-rotation layers
with fixed entangling layers: either one global quench under a shared chain
Hamiltonian (digital-analog) or a chain of n-1 generalized controlled-NOT
gates applied on ascending nearest-neighbor pairs (digital).  A depth-l
circuit has l+1 rotation layers and 3n(l+1) trainable angles, stored flat
in layer-major order (layer, then qubit, then alpha/beta/gamma).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict, field
from pathlib import Path
import numpy as np

from .hamiltonians import OMEGA_DEFAULT, RydbergParams, build_rydberg
from .sim import HermitianOperator, QuantumState, apply_on_targets

TWO_PI = 2.0 * np.pi

EULER_CONVENTION = "zyz"
CX_CHAIN_ORDER = "ascending"


def rz(theta: float) -> np.ndarray:
    h = theta / 2.0
    return np.array([[np.exp(-1j * h), 0], [0, np.exp(1j * h)]])


def ry(theta: float) -> np.ndarray:
    h = theta / 2.0
    return np.array([[np.cos(h), -np.sin(h)], [np.sin(h), np.cos(h)]], dtype=complex)


def euler_rotation(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """ZYZ Euler rotation Rz(alpha) Ry(beta) Rz(gamma); an SU(2) element."""
    return rz(alpha) @ ry(beta) @ rz(gamma)


def _drz(theta: float) -> np.ndarray:
    h = theta / 2.0
    return np.array([[-0.5j * np.exp(-1j * h), 0], [0, 0.5j * np.exp(1j * h)]])


def _dry(theta: float) -> np.ndarray:
    h = theta / 2.0
    return 0.5 * np.array([[-np.sin(h), -np.cos(h)], [np.cos(h), -np.sin(h)]], dtype=complex)


def euler_rotation_derivative(alpha: float, beta: float, gamma: float, axis: int) -> np.ndarray:
    """Derivative of the ZYZ rotation w.r.t. angle ``axis`` (0=alpha,1=beta,2=gamma)."""
    factors = [rz(alpha), ry(beta), rz(gamma)]
    derivs = [_drz(alpha), _dry(beta), _drz(gamma)]
    factors[axis] = derivs[axis]
    return factors[0] @ factors[1] @ factors[2]


def generalized_cnot(phi: float) -> np.ndarray:
    """Two-qubit gate exp(-i phi (I - Z_1)(I - X_2)); equals CNOT at phi = pi/4.

    The exponent vanishes on the control-0 block; on the control-1 block the
    commuting factorization reduces it to e^{-2 i phi} e^{2 i phi X}.
    """
    c, s = np.cos(2.0 * phi), np.sin(2.0 * phi)
    gate = np.eye(4, dtype=complex)
    gate[2:, 2:] = np.exp(-2j * phi) * np.array([[c, 1j * s], [1j * s, c]])
    return gate


@dataclass(frozen=True)
class DAHyperparams:
    """Fixed (non-trainable) knobs of the digital-analog ansatz."""

    n: int
    layers: int
    omega: float = OMEGA_DEFAULT
    delta_over_omega: float = 0.8
    rb_over_a: float = 0.87
    t: float = None  # quench time (us); defaults to one Rabi period

    def __post_init__(self):
        if self.layers < 0:
            raise ValueError("layer count must be nonnegative")
        if self.t is None:
            object.__setattr__(self, "t", TWO_PI / self.omega)

    @property
    def delta(self) -> float:
        return self.delta_over_omega * self.omega

    def rydberg_params(self) -> RydbergParams:
        return RydbergParams.chain(self.n, self.rb_over_a, self.delta_over_omega, self.omega)

    def hamiltonian(self) -> HermitianOperator:
        return build_rydberg(self.rydberg_params())


@dataclass(frozen=True)
class DigitalHyperparams:
    """Fixed knobs of the digital ansatz: entangler angle phi in [0, pi/4]."""

    n: int
    layers: int
    phi: float = np.pi / 4

    def __post_init__(self):
        if self.layers < 0:
            raise ValueError("layer count must be nonnegative")


def rotation_param_count(n: int, layers: int) -> int:
    return 3 * n * (layers + 1)


def reshape_rotation_params(params: np.ndarray, n: int, layers: int) -> np.ndarray:
    """Validate and view flat parameters as (layers + 1, n, 3)."""
    params = np.asarray(params, dtype=float)
    expected = rotation_param_count(n, layers)
    if params.size != expected:
        raise ValueError(f"expected {expected} rotation parameters, got {params.size}")
    if not np.all(np.isfinite(params)):
        raise ValueError("rotation parameters must be finite")
    return params.reshape(layers + 1, n, 3)


def random_rotation_params(n: int, layers: int, rng) -> np.ndarray:
    """Uniform(-pi, pi) initialization of all rotation angles."""
    gen = rng.generator() if hasattr(rng, "generator") else rng
    return gen.uniform(-np.pi, np.pi, rotation_param_count(n, layers))


@dataclass(frozen=True)
class RotationLayer:
    angles: np.ndarray  # (n, 3)
    mats: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self, "mats", tuple(euler_rotation(*row) for row in self.angles)
        )

    @property
    def n(self) -> int:
        return self.angles.shape[0]

    def apply(self, amps: np.ndarray) -> np.ndarray:
        for q, m in enumerate(self.mats):
            amps = apply_on_targets(amps, m, (q,), self.n)
        return amps

    def apply_adjoint(self, amps: np.ndarray) -> np.ndarray:
        for q, m in enumerate(self.mats):
            amps = apply_on_targets(amps, m.conj().T, (q,), self.n)
        return amps

    def derivative_factor(self, qubit: int, axis: int) -> np.ndarray:
        """2x2 operator D with dR/dangle = D R, i.e. D = R' R^dag."""
        d = euler_rotation_derivative(*self.angles[qubit], axis)
        return d @ self.mats[qubit].conj().T


@dataclass(frozen=True)
class AnalogLayer:
    hamiltonian: HermitianOperator
    t: float
    method: str = "spectral"

    def apply(self, amps: np.ndarray) -> np.ndarray:
        if self.t == 0.0:
            return amps
        return self.hamiltonian.propagate(self.t, amps, self.method)

    def apply_adjoint(self, amps: np.ndarray) -> np.ndarray:
        if self.t == 0.0:
            return amps
        return self.hamiltonian.propagate(-self.t, amps, self.method)


@dataclass(frozen=True)
class EntanglerChain:
    """Generalized-CNOT chain, control i -> target i+1 for ascending i."""

    angles: np.ndarray  # (n - 1,)
    n: int
    gates: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(generalized_cnot(a) for a in self.angles))

    def apply(self, amps: np.ndarray) -> np.ndarray:
        for i, g in enumerate(self.gates):
            amps = apply_on_targets(amps, g, (i, i + 1), self.n)
        return amps

    def apply_adjoint(self, amps: np.ndarray) -> np.ndarray:
        for i in range(len(self.gates) - 1, -1, -1):
            amps = apply_on_targets(amps, self.gates[i].conj().T, (i, i + 1), self.n)
        return amps


@dataclass(frozen=True)
class Circuit:
    """Immutable gate program: rotation layers alternating with entanglers."""

    n: int
    ops: tuple

    @property
    def depth(self) -> int:
        return len(self.ops)

    def apply(self, amps: np.ndarray) -> np.ndarray:
        for op in self.ops:
            amps = op.apply(amps)
        return amps


def build_da_circuit(hp: DAHyperparams, params: np.ndarray,
                     hamiltonian=None, method: str = "spectral") -> Circuit:
    """Rotation layer 0, then ``layers`` repetitions of [quench, rotation layer].

    ``hamiltonian`` may be a single shared instance (default: built from the
    hyperparameters) or one instance per layer (e.g. independent noisy draws).
    """
    angles = reshape_rotation_params(params, hp.n, hp.layers)
    if hamiltonian is None:
        hamiltonian = hp.hamiltonian() if hp.layers > 0 else None
    if isinstance(hamiltonian, HermitianOperator) or hamiltonian is None:
        hams = [hamiltonian] * hp.layers
    else:
        hams = list(hamiltonian)
        if len(hams) != hp.layers:
            raise ValueError(f"need {hp.layers} Hamiltonians, got {len(hams)}")
    ops = [RotationLayer(angles[0])]
    for j in range(hp.layers):
        ops.append(AnalogLayer(hams[j], hp.t, method))
        ops.append(RotationLayer(angles[j + 1]))
    return Circuit(hp.n, tuple(ops))


def build_digital_circuit(hp: DigitalHyperparams, params: np.ndarray,
                          gate_angles: np.ndarray | None = None) -> Circuit:
    """Rotation layer 0, then ``layers`` repetitions of [CX chain, rotation layer].

    ``gate_angles`` of shape (layers, n - 1) overrides the shared phi per
    gate (used for independent per-gate noise draws).
    """
    angles = reshape_rotation_params(params, hp.n, hp.layers)
    if gate_angles is None:
        gate_angles = np.full((hp.layers, hp.n - 1), hp.phi)
    else:
        gate_angles = np.asarray(gate_angles, dtype=float)
        if gate_angles.shape != (hp.layers, hp.n - 1):
            raise ValueError(
                f"gate_angles must have shape ({hp.layers}, {hp.n - 1}), got {gate_angles.shape}"
            )
    ops = [RotationLayer(angles[0])]
    for j in range(hp.layers):
        ops.append(EntanglerChain(gate_angles[j], hp.n))
        ops.append(RotationLayer(angles[j + 1]))
    return Circuit(hp.n, tuple(ops))


def run_circuit(circuit: Circuit, state: QuantumState) -> QuantumState:
    if state.n != circuit.n:
        raise ValueError(f"circuit acts on {circuit.n} qubits, state has {state.n}")
    return QuantumState(circuit.n, circuit.apply(state.amplitudes))


def save_trained_params(path, ansatz: str, hp, params: np.ndarray, seed: int) -> None:
    """Serialize trained rotation parameters with their full circuit config."""
    hyper = asdict(hp)
    hyper["euler_convention"] = EULER_CONVENTION
    if ansatz == "digital":
        hyper["cx_chain_order"] = CX_CHAIN_ORDER
    doc = {
        "n": hp.n,
        "layers": hp.layers,
        "ansatz": ansatz,
        "hyperparams": hyper,
        "params": np.asarray(params, dtype=float).ravel().tolist(),
        "seed": seed,
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def load_trained_params(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc["ansatz"] not in ("da", "digital"):
        raise ValueError(f"unknown ansatz {doc['ansatz']!r}")
    doc["params"] = np.asarray(doc["params"], dtype=float)
    expected = rotation_param_count(doc["n"], doc["layers"])
    if doc["params"].size != expected:
        raise ValueError(f"parameter count {doc['params'].size} != {expected}")
    return doc
