import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from daql.hamiltonians import RydbergParams, build_rydberg
from daql.rng import RngStream
from daql.sim import (
    PAULI_X,
    PAULI_Z,
    HermitianOperator,
    QuantumState,
    apply_gate,
    apply_on_targets,
    entanglement_entropy,
    evolve,
    expectation,
    ground_state,
    haar_random_state,
    sample_bitstrings,
)

HADAMARD = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def random_unitary(dim, gen):
    m = gen.standard_normal((dim, dim)) + 1j * gen.standard_normal((dim, dim))
    q, r = np.linalg.qr(m)
    return q * (np.diag(r) / np.abs(np.diag(r)))


class TestQuantumState:
    def test_zero_state(self):
        s = QuantumState.zero(3)
        assert s.amplitudes[0] == 1.0
        assert np.all(s.amplitudes[1:] == 0.0)

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError, match="norm"):
            QuantumState(1, np.array([1.0, 1.0]))

    def test_rejects_wrong_length(self):
        with pytest.raises(ValueError, match="length"):
            QuantumState(2, np.array([1.0, 0.0]))

    def test_from_bits_msb_ordering(self):
        # qubit 0 is the most significant bit of the basis index
        s = QuantumState.from_bits([1, 0])
        assert s.amplitudes[2] == 1.0

    def test_product(self):
        plus = np.array([1, 1]) / np.sqrt(2)
        s = QuantumState.product([plus, np.array([1, 0])])
        assert np.allclose(s.probabilities(), [0.5, 0, 0.5, 0])


class TestApplyGate:
    def test_x_on_qubit0(self):
        out = apply_gate(QuantumState.zero(2), PAULI_X, (0,))
        assert out.amplitudes[2] == pytest.approx(1.0)

    def test_hadamard_involution(self):
        rng = RngStream(3)
        state = haar_random_state(3, rng)
        out = apply_gate(apply_gate(state, HADAMARD, (1,)), HADAMARD, (1,))
        assert np.abs(out.amplitudes - state.amplitudes).max() < 1e-12

    def test_cnot_on_10(self):
        out = apply_gate(QuantumState.from_bits([1, 0]), CNOT, (0, 1))
        assert out.amplitudes[3] == pytest.approx(1.0)

    def test_rejects_non_unitary(self):
        with pytest.raises(ValueError, match="unitary"):
            apply_gate(QuantumState.zero(1), np.array([[1, 0], [0, 2.0]]), (0,))

    def test_rejects_out_of_range_target(self):
        with pytest.raises(IndexError):
            apply_gate(QuantumState.zero(2), PAULI_X, (2,))

    def test_rejects_duplicate_targets(self):
        with pytest.raises(IndexError):
            apply_gate(QuantumState.zero(2), CNOT, (1, 1))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 5))
    def test_norm_preserved_random_two_qubit_gate(self, seed, n):
        gen = np.random.default_rng(seed)
        gate = random_unitary(4, gen)
        targets = tuple(gen.choice(n, size=2, replace=False))
        out = apply_gate(haar_random_state(n, RngStream(seed)), gate, targets)
        assert abs(np.linalg.norm(out.amplitudes) - 1.0) < 1e-10

    def test_two_qubit_gate_matches_dense_embedding(self):
        # oracle: build the full 2^n x 2^n matrix by kron + basis permutation
        gen = np.random.default_rng(11)
        n = 5
        gate = random_unitary(4, gen)
        for targets in [(0, 1), (1, 3), (4, 2), (3, 0)]:
            state = haar_random_state(n, RngStream(17))
            out = apply_gate(state, gate, targets)
            big = np.eye(1, dtype=complex)
            order = list(targets) + [q for q in range(n) if q not in targets]
            big = np.kron(gate, np.eye(2 ** (n - 2), dtype=complex))
            perm = np.argsort(order)
            axes = perm.tolist()
            full = big.reshape([2] * (2 * n))
            full = np.transpose(full, axes + [a + n for a in axes]).reshape(2**n, 2**n)
            expected = full @ state.amplitudes
            assert np.abs(out.amplitudes - expected).max() < 1e-12


class TestHermitianOperator:
    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError, match="Hermitian"):
            HermitianOperator(np.array([[0, 1], [0, 0]], dtype=complex))

    def test_reconstruction(self):
        gen = np.random.default_rng(5)
        m = gen.standard_normal((16, 16)) + 1j * gen.standard_normal((16, 16))
        H = HermitianOperator(m + m.conj().T)
        assert H.reconstruction_error() < 1e-8


class TestEvolve:
    def test_t_zero_is_identity(self):
        state = haar_random_state(3, RngStream(2))
        H = HermitianOperator(np.diag(np.arange(8.0)).astype(complex))
        out = evolve(H, 0.0, state)
        assert np.abs(out.amplitudes - state.amplitudes).max() < 1e-12

    def test_negative_time_rejected(self):
        H = HermitianOperator(PAULI_Z)
        with pytest.raises(ValueError, match="nonnegative"):
            evolve(H, -1.0, QuantumState.zero(1))

    def test_full_rabi_oscillation_gives_global_minus(self):
        omega = 2 * np.pi * 4
        H = HermitianOperator((omega / 2) * PAULI_X)
        out = evolve(H, 2 * np.pi / omega, QuantumState.zero(1))
        assert np.abs(out.amplitudes - np.array([-1.0, 0.0])).max() < 1e-12

    def test_dimension_mismatch(self):
        H = HermitianOperator(PAULI_Z)
        with pytest.raises(ValueError, match="mismatch"):
            evolve(H, 1.0, QuantumState.zero(2))

    def test_additivity(self):
        params = RydbergParams.chain(4)
        H = build_rydberg(params)
        state = haar_random_state(4, RngStream(8))
        one = evolve(H, 0.3, state)
        two = evolve(H, 0.2, evolve(H, 0.1, state))
        fidelity = abs(np.vdot(one.amplitudes, two.amplitudes)) ** 2
        assert fidelity > 1 - 1e-9

    def test_krylov_matches_spectral(self):
        params = RydbergParams.chain(5)
        state = haar_random_state(5, RngStream(4))
        spectral = build_rydberg(params).propagate(0.25, state.amplitudes)
        krylov = build_rydberg(params).propagate(0.25, state.amplitudes, method="krylov")
        assert np.abs(spectral - krylov).max() < 1e-11

    def test_matches_trotter_oracle(self):
        # independent oracle: 4th-order Suzuki splitting into the diagonal
        # part and the single-qubit drive, both exponentiated in closed form
        n, t, steps = 4, 0.25, 10_000
        params = RydbergParams.chain(n)
        H = build_rydberg(params)
        state = haar_random_state(n, RngStream(123))

        dense = H.dense()
        diag = np.real(np.diag(dense))
        omega = params.omega

        def drive_halfstep(amps, dt):
            c, s = np.cos(omega * dt / 2), -1j * np.sin(omega * dt / 2)
            gate = np.array([[c, s], [s, c]])
            for q in range(n):
                amps = apply_on_targets(amps, gate, (q,), n)
            return amps

        def strang(amps, dt):
            amps = np.exp(-1j * diag * dt / 2) * amps
            amps = drive_halfstep(amps, dt)
            return np.exp(-1j * diag * dt / 2) * amps

        # Suzuki 4th order from three Strang steps
        p = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
        dt = t / steps
        amps = state.amplitudes
        for _ in range(steps):
            amps = strang(amps, p * dt)
            amps = strang(amps, (1 - 2 * p) * dt)
            amps = strang(amps, p * dt)

        out = evolve(H, t, state)
        fidelity = abs(np.vdot(amps, out.amplitudes)) ** 2
        assert fidelity > 1 - 1e-6


class TestExpectation:
    def test_z_on_zero(self):
        assert expectation(QuantumState.zero(1), HermitianOperator(PAULI_Z)) == pytest.approx(1.0)

    def test_x_on_plus(self):
        plus = QuantumState(1, np.array([1, 1]) / np.sqrt(2))
        assert expectation(plus, HermitianOperator(PAULI_X)) == pytest.approx(1.0)

    def test_half_filled_density(self):
        state = QuantumState.from_bits([1, 0, 1, 0])
        occ = np.array([bin(i).count("1") for i in range(16)], dtype=float)
        proj = HermitianOperator(np.diag(occ).astype(complex))
        assert expectation(state, proj) / 4 == pytest.approx(0.5)


class TestSampling:
    def test_zero_state_all_zeros(self):
        bits = sample_bitstrings(QuantumState.zero(4), 50, RngStream(0))
        assert bits.shape == (50, 4)
        assert not bits.any()

    def test_plus_state_balance(self):
        plus = QuantumState(1, np.array([1, 1]) / np.sqrt(2))
        bits = sample_bitstrings(plus, 10_000, RngStream(1))
        assert bits.mean() == pytest.approx(0.5, abs=0.02)

    def test_biased_state(self):
        state = QuantumState(1, np.array([np.sqrt(0.25), np.sqrt(0.75)]))
        bits = sample_bitstrings(state, 10_000, RngStream(2))
        assert bits.mean() == pytest.approx(0.75, abs=0.02)

    def test_shots_validated(self):
        with pytest.raises(ValueError):
            sample_bitstrings(QuantumState.zero(1), 0, RngStream(0))


class TestEntropy:
    def test_product_state_zero(self):
        state = QuantumState.product([np.array([0.6, 0.8]), np.array([1, 1j]) / np.sqrt(2), np.array([1, 0])])
        for cut in [(0,), (1,), (0, 1), (2,)]:
            assert entanglement_entropy(state, cut) < 1e-10

    def test_bell_pair(self):
        bell = QuantumState(2, np.array([1, 0, 0, 1]) / np.sqrt(2))
        assert entanglement_entropy(bell, (0,)) == pytest.approx(np.log(2), abs=1e-10)

    def test_ghz_13_qubits_six_cut(self):
        amps = np.zeros(2**13, dtype=complex)
        amps[0] = amps[-1] = 1 / np.sqrt(2)
        ghz = QuantumState(13, amps)
        assert entanglement_entropy(ghz, range(6)) == pytest.approx(np.log(2), abs=1e-10)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_complement_symmetry(self, seed):
        gen = np.random.default_rng(seed)
        n = int(gen.integers(2, 6))
        k = int(gen.integers(1, n))
        sub = tuple(gen.choice(n, size=k, replace=False))
        comp = tuple(q for q in range(n) if q not in sub)
        state = haar_random_state(n, RngStream(seed, 1))
        assert entanglement_entropy(state, sub) == pytest.approx(
            entanglement_entropy(state, comp), abs=1e-9
        )

    def test_rejects_trivial_subsystems(self):
        state = QuantumState.zero(2)
        with pytest.raises(ValueError):
            entanglement_entropy(state, ())
        with pytest.raises(ValueError):
            entanglement_entropy(state, (0, 1))


class TestGroundState:
    def test_single_qubit_z(self):
        energy, state = ground_state(HermitianOperator(PAULI_Z))
        assert energy == pytest.approx(-1.0)
        assert abs(state.amplitudes[1]) == pytest.approx(1.0)

    def test_detuned_single_atom(self):
        omega = 2 * np.pi * 4
        delta = 10 * omega
        H = HermitianOperator(np.diag([0.0, -delta]).astype(complex))
        energy, state = ground_state(H)
        assert energy == pytest.approx(-delta)
        assert abs(state.amplitudes[1]) == pytest.approx(1.0)

    def test_variational_bound(self):
        H = build_rydberg(RydbergParams.chain(5))
        energy, _ = ground_state(H)
        for k in range(100):
            psi = haar_random_state(5, RngStream(77, k))
            assert energy <= expectation(psi, H) + 1e-9

    def test_lanczos_path_matches_dense(self):
        # force the iterative path by exceeding the dense-dim threshold
        H = build_rydberg(RydbergParams.chain(11))
        energy, state = ground_state(H)
        w = np.linalg.eigvalsh(H.dense())
        assert energy == pytest.approx(w[0], abs=1e-8 * max(1, abs(w[0])))
        residual = np.linalg.norm(H.apply(state.amplitudes) - energy * state.amplitudes)
        assert residual < 1e-8 * H.norm_bound()


class TestHaarRandom:
    def test_norm_one(self):
        for k in range(20):
            state = haar_random_state(3, RngStream(5, k))
            assert abs(np.linalg.norm(state.amplitudes) - 1.0) < 1e-12

    def test_second_moment_closed_form(self):
        # E_psi |<psi|V|psi>|^2 = (|Tr V|^2 + d) / (d (d + 1)) for unitary V
        gen = np.random.default_rng(42)
        v = random_unitary(4, gen)
        expected = (abs(np.trace(v)) ** 2 + 4) / 20.0
        total = 0.0
        draws = 100_000
        root = RngStream(900)
        for k in range(draws):
            psi = haar_random_state(2, root.child(k)).amplitudes
            total += abs(np.vdot(psi, v @ psi)) ** 2
        assert total / draws == pytest.approx(expected, abs=0.005)


class TestRngStream:
    def test_reproducible(self):
        a = RngStream(1, 2).generator().standard_normal(5)
        b = RngStream(1, 2).generator().standard_normal(5)
        assert np.array_equal(a, b)

    def test_children_independent_of_order(self):
        root = RngStream(7)
        first = root.child(3).generator().standard_normal(4)
        _ = root.child(1).generator().standard_normal(4)
        again = root.child(3).generator().standard_normal(4)
        assert np.array_equal(first, again)

    def test_distinct_children_differ(self):
        root = RngStream(7)
        a = root.child(0).generator().standard_normal(4)
        b = root.child(1).generator().standard_normal(4)
        assert not np.array_equal(a, b)
