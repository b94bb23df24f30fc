"""Loss functions, exact gradients, and the AdaGrad training loop.

Gradients with respect to the rotation angles are computed by a reverse
sweep over the circuit: one forward pass records the state after every
operation, one backward pass pulls the observable-weighted adjoint state
back through the adjoint gates, and each angle's derivative is an inner
product with a single-qubit derivative factor.  This is exact state-vector
differentiation; parameter-shift and central finite differences are
provided as independent cross-checks.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .circuits import Circuit, RotationLayer
from .hamiltonians import occupation_table
from .rng import RngStream
from .sim import QuantumState, apply_on_targets

FD_STEP = 1e-5
PROB_CLAMP = 1e-10


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, record: "TrainRecord | None" = None):
        super().__init__(message)
        self.record = record


@lru_cache(maxsize=32)
def density_diagonal(n: int) -> np.ndarray:
    """Diagonal of the mean-excitation observable: popcount(basis) / n."""
    return occupation_table(n).sum(axis=1) / n


@lru_cache(maxsize=32)
def qubit0_excited_diagonal(n: int) -> np.ndarray:
    """Diagonal of the projector onto qubit 0 being excited."""
    diag = np.zeros(2**n)
    diag[2 ** (n - 1):] = 1.0
    return diag


def rydberg_density_loss(state: QuantumState) -> float:
    """Mean excited-state population over all qubits, in [0, 1]."""
    return float(np.real(np.vdot(state.amplitudes, density_diagonal(state.n) * state.amplitudes)))


def cross_entropy_loss(labels, probs, two_term: bool = True) -> float:
    """Binary cross-entropy with probabilities clamped away from 0 and 1.

    ``two_term`` uses the standard -[y ln q + (1-y) ln(1-q)] form; the
    one-term -y ln q variant (which carries no gradient on class-0 samples)
    is kept for literal comparison runs.
    """
    y = np.asarray(labels, dtype=float)
    if y.size == 0:
        raise ValueError("empty batch")
    q = np.clip(np.asarray(probs, dtype=float), PROB_CLAMP, 1.0 - PROB_CLAMP)
    if two_term:
        return float(-np.mean(y * np.log(q) + (1.0 - y) * np.log(1.0 - q)))
    return float(-np.mean(y * np.log(q)))


def run_with_tape(circuit: Circuit, amps: np.ndarray) -> list[np.ndarray]:
    states = [amps]
    for op in circuit.ops:
        amps = op.apply(amps)
        states.append(amps)
    return states


def rotation_gradient(circuit: Circuit, states: list[np.ndarray], lam: np.ndarray) -> np.ndarray:
    """Backward sweep; returns the flat gradient in canonical parameter order.

    ``lam`` is the output-side adjoint (observable times output state, with
    any per-sample chain-rule weights already folded in).  Batched column
    states are supported; contributions sum over the batch.
    """
    reversed_grads = []
    for k in range(len(circuit.ops) - 1, -1, -1):
        op = circuit.ops[k]
        if isinstance(op, RotationLayer):
            psi_after = states[k + 1]
            g = np.empty((op.n, 3))
            for q in range(op.n):
                for axis in range(3):
                    d = op.derivative_factor(q, axis)
                    v = apply_on_targets(psi_after, d, (q,), circuit.n)
                    g[q, axis] = 2.0 * np.real(np.vdot(lam, v))
            reversed_grads.append(g)
        lam = op.apply_adjoint(lam)
    return np.concatenate([g.ravel() for g in reversed(reversed_grads)])


def _batch_probs(diag: np.ndarray, outs: np.ndarray) -> np.ndarray:
    mags = np.abs(outs) ** 2
    if outs.ndim == 1:
        return np.array([float(diag @ mags)])
    return diag @ mags


class DensityObjective:
    """Mean excitation density of the circuit output for a fixed input state.

    ``circuit_builder(params) -> Circuit`` must close over any fixed noise
    draw so that loss and gradient see the same circuit instance.
    """

    supports_analytic = True

    def __init__(self, circuit_builder, input_amps: np.ndarray, n: int):
        self.circuit_builder = circuit_builder
        self.input_amps = input_amps
        self.n = n
        self.diag = density_diagonal(n)

    def loss(self, params: np.ndarray) -> float:
        out = self.circuit_builder(params).apply(self.input_amps)
        return float(np.real(np.vdot(out, self.diag * out)))

    def loss_and_grad(self, params: np.ndarray):
        circuit = self.circuit_builder(params)
        states = run_with_tape(circuit, self.input_amps)
        out = states[-1]
        loss = float(np.real(np.vdot(out, self.diag * out)))
        grad = rotation_gradient(circuit, states, self.diag * out)
        return loss, grad

    def parameter_shift_grad(self, params: np.ndarray) -> np.ndarray:
        # the loss is itself an expectation value, so the shift rule applies directly
        return parameter_shift(self.loss, params)


class ClassifierObjective:
    """Cross-entropy of the qubit-0 excitation probability over a sample batch."""

    supports_analytic = True

    def __init__(self, circuit_builder, inputs: np.ndarray, labels: np.ndarray,
                 n: int, two_term: bool = True):
        if inputs.ndim != 2:
            raise ValueError("inputs must be a (dim, batch) array of column states")
        self.circuit_builder = circuit_builder
        self.inputs = inputs
        self.labels = np.asarray(labels, dtype=float)
        self.n = n
        self.two_term = two_term
        self.diag = qubit0_excited_diagonal(n)

    def probabilities(self, params: np.ndarray) -> np.ndarray:
        outs = self.circuit_builder(params).apply(self.inputs)
        return _batch_probs(self.diag, outs)

    def loss(self, params: np.ndarray) -> float:
        return cross_entropy_loss(self.labels, self.probabilities(params), self.two_term)

    def _weights(self, q: np.ndarray) -> np.ndarray:
        qc = np.clip(q, PROB_CLAMP, 1.0 - PROB_CLAMP)
        m = self.labels.size
        if self.two_term:
            return (-(self.labels / qc) + (1.0 - self.labels) / (1.0 - qc)) / m
        return -(self.labels / qc) / m

    def loss_and_grad(self, params: np.ndarray):
        circuit = self.circuit_builder(params)
        states = run_with_tape(circuit, self.inputs)
        outs = states[-1]
        q = _batch_probs(self.diag, outs)
        loss = cross_entropy_loss(self.labels, q, self.two_term)
        lam = (self.diag[:, None] * outs) * self._weights(q)[None, :]
        grad = rotation_gradient(circuit, states, lam)
        return loss, grad

    def parameter_shift_grad(self, params: np.ndarray) -> np.ndarray:
        # shift rule on the per-sample expectations q, then chain rule at
        # the unshifted probabilities
        w = self._weights(self.probabilities(params))
        grad = np.empty(params.size)
        for i in range(params.size):
            shifted = params.copy()
            shifted[i] += np.pi / 2
            q_plus = self.probabilities(shifted)
            shifted[i] -= np.pi
            q_minus = self.probabilities(shifted)
            grad[i] = w @ ((q_plus - q_minus) / 2.0)
        return grad


def parameter_shift(fn, params: np.ndarray) -> np.ndarray:
    """Exact +-pi/2 shift rule for expectation-valued functions of the angles."""
    grad = np.empty(params.size)
    for i in range(params.size):
        shifted = params.copy()
        shifted[i] += np.pi / 2
        f_plus = fn(shifted)
        shifted[i] -= np.pi
        f_minus = fn(shifted)
        grad[i] = 0.5 * (f_plus - f_minus)
    return grad


def finite_difference_gradient(fn, params: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    grad = np.empty(params.size)
    for i in range(params.size):
        shifted = params.copy()
        shifted[i] += step
        f_plus = fn(shifted)
        shifted[i] -= 2.0 * step
        f_minus = fn(shifted)
        grad[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def gradient(objective, params: np.ndarray, mode: str = "analytic") -> np.ndarray:
    """Gradient of the objective loss w.r.t. all rotation parameters."""
    params = np.asarray(params, dtype=float)
    if mode in ("analytic", "parameter-shift") and not objective.supports_analytic:
        raise ValueError(
            f"{mode} gradients are unavailable for shot-based losses; "
            "use finite differences with a shared shot seed"
        )
    if mode == "analytic":
        return objective.loss_and_grad(params)[1]
    if mode == "parameter-shift":
        return objective.parameter_shift_grad(params)
    if mode == "finite-difference":
        return finite_difference_gradient(objective.loss, params)
    raise ValueError(f"unknown gradient mode {mode!r}")


@dataclass
class OptimizerState:
    """AdaGrad state: per-parameter accumulated squared gradients."""

    learning_rate: float = 0.1
    epsilon: float = 1e-8
    accumulator: np.ndarray | None = None


def adagrad_step(state: OptimizerState, params: np.ndarray, grad: np.ndarray):
    """One AdaGrad update; returns (new_params, new_state)."""
    params = np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if params.shape != grad.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, grad {grad.shape}")
    if not np.all(np.isfinite(grad)):
        raise TrainingDiverged("non-finite gradient")
    acc = grad**2 if state.accumulator is None else state.accumulator + grad**2
    new_params = params - state.learning_rate * grad / (np.sqrt(acc) + state.epsilon)
    return new_params, OptimizerState(state.learning_rate, state.epsilon, acc)


@dataclass
class TrainRecord:
    """Per-epoch training trace for one run."""

    seed: int
    stream: int
    losses: list
    grad_norms: list
    param_hashes: list
    wall_clock_s: float = 0.0

    def to_jsonl(self) -> str:
        lines = [
            json.dumps({"epoch": e, "loss": l, "grad_norm": g, "seed": self.seed})
            for e, (l, g) in enumerate(zip(self.losses, self.grad_norms))
        ]
        return "\n".join(lines) + "\n"


def _param_hash(params: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(params).tobytes()).hexdigest()[:16]


def train(step_fn, initial_params: np.ndarray, epochs: int, rng: RngStream,
          learning_rate: float = 0.1):
    """Run the AdaGrad loop; returns (final_params, TrainRecord).

    ``step_fn(params, epoch, epoch_rng) -> (loss, grad)`` performs one loss
    and gradient evaluation; it draws any batch and noise from ``epoch_rng``
    and must use the same draw for both (shared noise per step).
    """
    if epochs < 1:
        raise ValueError("need at least one epoch")
    params = np.array(initial_params, dtype=float)
    opt = OptimizerState(learning_rate=learning_rate)
    losses, norms, hashes = [], [], []
    started = time.perf_counter()
    for epoch in range(epochs):
        loss, grad = step_fn(params, epoch, rng.child(epoch))
        if not np.isfinite(loss):
            record = TrainRecord(rng.seed, rng.stream, losses, norms, hashes,
                                 time.perf_counter() - started)
            raise TrainingDiverged(f"loss diverged at epoch {epoch}", record)
        params, opt = adagrad_step(opt, params, grad)
        losses.append(float(loss))
        norms.append(float(np.linalg.norm(grad)))
        hashes.append(_param_hash(params))
    record = TrainRecord(rng.seed, rng.stream, losses, norms, hashes,
                         time.perf_counter() - started)
    return params, record
