"""Acceptance criteria, one test per criterion, each printing one summary line.

Run with ``pytest tests/test_acceptance.py -s``; criterion 10 carries the
``slow`` marker (multi-hour) and can be deselected with ``-m "not slow"``.

Criteria 5-7 operate on digit data.  They run on genuine MNIST when
``DAQL_MNIST_DIR`` points at the four IDX files and otherwise on the real
handwritten-digit corpus bundled with scikit-learn, pushed through the same
IDX pipeline with identical protocols.  The stated thresholds are asserted
either way; printed lines name the corpus in use.  The threshold magnitudes
were calibrated against the 28x28 MNIST task, so on the smaller 8x8 fallback
corpus (where the digit pairs saturate near their accuracy ceiling) the
directional effects survive but the gap magnitudes need not.
"""
import time

import numpy as np
import pytest

from daql.circuits import (
    DAHyperparams,
    DigitalHyperparams,
    build_da_circuit,
    build_digital_circuit,
    generalized_cnot,
    random_rotation_params,
)
from daql.mnist import ClassifierConfig, train_classifier
from daql.noise import (
    AnalogNoiseModel,
    DigitalNoiseModel,
    analog_layer_fidelity,
    calibrate_digital_sigma,
    digital_layer_fidelity,
    single_cx_mean_fidelity,
)
from daql.phase import (
    CONTOUR_PERCENT,
    boundary_nodes,
    build_mesh,
    chebyshev_distance_to,
    contour_mask,
    diagram_sharpness,
    order_parameter_map,
    order_parameters,
    rydberg_mesh_spec,
    sharpness,
    train_anomaly_detector,
    xxz_mesh_spec,
)
from daql.rng import RngStream
from daql.sim import QuantumState, entanglement_entropy, evolve, haar_random_state

from oracles import suzuki4_rydberg_evolution

pytestmark = pytest.mark.acceptance

CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)

XXZ_POINTS = {
    "zafm": (0.01, 0.2184),
    "qzafm": (0.01, 0.9479),
    "xy_qlro": (1.8447, 0.1663),
    "vbs": (1.5826, 0.6353),
}
TRAINED_PHASE_CONTOUR = {"zafm": "zafm", "qzafm": "qzafm", "xy_qlro": "xafm", "vbs": "vbs"}


def report(num: int, ok: bool, detail: str) -> bool:
    print(f"\nACCEPTANCE {num} {'PASS' if ok else 'FAIL'}: {detail}")
    return ok


@pytest.fixture(scope="session")
def xxz_mesh(tmp_path_factory):
    cache = tmp_path_factory.mktemp("meshes") / "xxz8.bin"
    return build_mesh(xxz_mesh_spec(n=8), cache_path=cache)


@pytest.fixture(scope="session")
def rydberg_mesh(tmp_path_factory):
    cache = tmp_path_factory.mktemp("meshes-ryd") / "ryd9.bin"
    return build_mesh(rydberg_mesh_spec(n=9), cache_path=cache)


def test_criterion_1_generalized_cnot_identity():
    dev = np.abs(generalized_cnot(np.pi / 4) - CNOT).max()
    ok = dev <= 1e-12
    assert report(1, ok, f"max |CX(pi/4) - CNOT| = {dev:.2e} (need <= 1e-12)"), dev


def test_criterion_2_sigma_calibration():
    sigma = calibrate_digital_sigma(0.99)
    fid = single_cx_mean_fidelity(0.065)
    ok = 0.060 <= sigma <= 0.070 and abs(fid - 0.990) <= 0.001
    assert report(2, ok, f"sigma(0.99) = {sigma:.4f} in [0.060, 0.070]; "
                         f"closed-form fidelity at 0.065 = {fid:.6f} (need 0.990 +- 0.001)")


def test_criterion_3_layer_fidelities():
    digital_mean, _ = digital_layer_fidelity(8, np.pi / 8, DigitalNoiseModel(sigma=0.065),
                                             n_noise=500, rng=RngStream(301))
    da_mean, _ = analog_layer_fidelity(DAHyperparams(n=8, layers=1), AnalogNoiseModel(),
                                       n_noise=500, rng=RngStream(302))
    ok = abs(digital_mean - 0.918) <= 0.010 and abs(da_mean - 0.971) <= 0.010
    assert report(3, ok, f"digital layer = {digital_mean:.4f} (need 0.918 +- 0.010); "
                         f"DA layer at 0.87 = {da_mean:.4f} (need 0.971 +- 0.010)")


def test_criterion_4_fidelity_trends():
    analog = AnalogNoiseModel()
    digital = DigitalNoiseModel()
    root = RngStream(400)
    f = {}
    for i, rba in enumerate((0.80, 0.87, 0.98)):
        f[rba], _ = analog_layer_fidelity(DAHyperparams(n=8, layers=1, rb_over_a=rba),
                                          analog, n_noise=300, rng=root.child(1, i))
    f_dig8, _ = digital_layer_fidelity(8, np.pi / 8, digital, n_noise=300, rng=root.child(2))
    trend_a = f[0.80] > f[0.87] > f[0.98] and abs(f[0.98] - f_dig8) < 0.02

    da_n, dig_n = {}, {}
    for i, n in enumerate((4, 6, 8, 10)):
        da_n[n], _ = analog_layer_fidelity(DAHyperparams(n=n, layers=1), analog,
                                           n_noise=200, rng=root.child(3, i))
        dig_n[n], _ = digital_layer_fidelity(n, np.pi / 8, digital, n_noise=200,
                                             rng=root.child(4, i))
    decreasing = all(dig_n[a] > dig_n[b] for a, b in ((4, 6), (6, 8), (8, 10)))
    da_above = all(da_n[n] > dig_n[n] for n in (4, 6, 8, 10))
    ok = trend_a and decreasing and da_above
    assert report(4, ok,
                  f"F(0.80)={f[0.80]:.4f} > F(0.87)={f[0.87]:.4f} > F(0.98)={f[0.98]:.4f}; "
                  f"|F(0.98)-F_dig|={abs(f[0.98] - f_dig8):.4f} (<0.02); "
                  f"digital decreasing over n: {decreasing}; DA above digital: {da_above}")


def _run_pair(corpus, digits, seed, **kw):
    train_ds, test_ds, _ = corpus
    config = ClassifierConfig(digits=digits, n=8, restarts=5, seed=seed, **kw)
    result = train_classifier(config, train_ds, test_ds)
    return result.summary()["test_accuracy_mean"]


def test_criterion_5_quench_time_optimum(digit_corpus):
    name = digit_corpus[2]
    acc_fast = _run_pair(digit_corpus, (3, 8), 500, layers=12, t=0.05)
    acc_opt = _run_pair(digit_corpus, (3, 8), 500, layers=12, t=0.25)
    gap = acc_opt - acc_fast
    ok = gap >= 0.05
    assert report(5, ok, f"[corpus={name}] 3v8 l=12 noiseless: acc(t=0.25)={acc_opt:.4f}, "
                         f"acc(t=0.05)={acc_fast:.4f}, gap={100 * gap:+.1f} pts (need >= +5)")


def test_criterion_6_noise_robustness_gap(digit_corpus):
    # digital circuit pinned at phi = pi/8 in both modes so the drop
    # isolates the noise (the noiseless pi/4 reference would conflate an
    # entangler-angle change with the noise response)
    name = digit_corpus[2]
    gaps = {}
    for pair in ((3, 8), (1, 9)):
        da_clean = _run_pair(digit_corpus, pair, 601, layers=12, ansatz="da")
        da_noisy = _run_pair(digit_corpus, pair, 601, layers=12, ansatz="da", noise=True)
        dig_clean = _run_pair(digit_corpus, pair, 602, layers=12, ansatz="digital",
                              phi=np.pi / 8)
        dig_noisy = _run_pair(digit_corpus, pair, 602, layers=12, ansatz="digital",
                              phi=np.pi / 8, noise=True)
        gaps[pair] = (dig_clean - dig_noisy) - (da_clean - da_noisy)
    mean_gap = float(np.mean(list(gaps.values())))
    ok = mean_gap >= 0.03
    assert report(6, ok, f"[corpus={name}] digital-drop minus DA-drop: "
                         f"3v8={100 * gaps[(3, 8)]:+.1f} pts, 1v9={100 * gaps[(1, 9)]:+.1f} pts, "
                         f"mean={100 * mean_gap:+.1f} pts (need >= +3)")


def test_criterion_7_phi_sweep(digit_corpus):
    name = digit_corpus[2]
    pairs = ((3, 8), (1, 9), (0, 6))
    acc = {phi: [] for phi in (np.pi / 8, np.pi / 4)}
    for pair in pairs:
        for phi in acc:
            acc[phi].append(_run_pair(digit_corpus, pair, 700, layers=16,
                                      ansatz="digital", noise=True, phi=phi))
    gap = float(np.mean(acc[np.pi / 8]) - np.mean(acc[np.pi / 4]))
    ok = gap >= 0.05
    assert report(7, ok, f"[corpus={name}] noisy digital l=16 over {len(pairs)} pairs: "
                         f"acc(pi/8)={np.mean(acc[np.pi / 8]):.4f}, "
                         f"acc(pi/4)={np.mean(acc[np.pi / 4]):.4f}, "
                         f"gap={100 * gap:+.1f} pts (need >= +5)")


def test_criterion_8_zero_layer_separations(xxz_mesh, rydberg_mesh):
    xxz_diag = train_anomaly_detector(
        xxz_mesh, xxz_mesh.nearest_node(*XXZ_POINTS["zafm"]),
        DAHyperparams(n=8, layers=0), runs=20, rng=RngStream(801))
    xxz_mean = float(xxz_diag.losses.mean())
    xxz_sd = float(xxz_diag.losses.std())
    xxz_ok = 0.45 <= xxz_mean <= 0.55 and xxz_sd < 0.05

    ryd_diag = train_anomaly_detector(
        rydberg_mesh, rydberg_mesh.nearest_node(0.6, 1.3),
        DAHyperparams(n=9, layers=0), runs=20, rng=RngStream(802))
    spread = ryd_diag.spread()
    ryd_ok = spread >= 0.2
    ok = xxz_ok and ryd_ok
    assert report(8, ok, f"XXZ l=0: node-mean={xxz_mean:.4f} (in [0.45, 0.55]), "
                         f"node-SD={xxz_sd:.4f} (< 0.05); Rydberg l=0 n=9: "
                         f"spread={spread:.4f} (need >= 0.2)")


def test_criterion_9_xxz_da_learning(xxz_mesh):
    """Known red: the training-node-loss clause is unattainable at these
    hyperparameters.  Multi-restart L-BFGS global searches over the full
    3n(l+1)-parameter space bottom out at 0.12-0.31 across the four points
    (see the build notes), an order above the stated 0.05; the spread and
    contour-localization clauses do hold and are reported alongside.
    """
    maps = order_parameter_map(xxz_mesh)
    xs, ys = xxz_mesh.x_values(), xxz_mesh.y_values()
    hp = DAHyperparams(n=8, layers=2)
    lines, all_ok = [], True
    for i, (phase, point) in enumerate(XXZ_POINTS.items()):
        node = xxz_mesh.nearest_node(*point)
        diagram = train_anomaly_detector(xxz_mesh, node, hp, runs=20,
                                         rng=RngStream(901 + i))
        node_loss = diagram.training_node_loss()
        spread = diagram.spread()
        gx, gy = np.gradient(diagram.losses, xs, ys)
        peak = np.unravel_index(np.argmax(gx**2 + gy**2), diagram.losses.shape)
        contour = contour_mask(maps[TRAINED_PHASE_CONTOUR[phase]],
                               CONTOUR_PERCENT[TRAINED_PHASE_CONTOUR[phase]])
        distance = chebyshev_distance_to(boundary_nodes(contour), *peak)
        point_ok = node_loss < 0.05 and spread >= 0.2 and distance <= 1
        all_ok &= point_ok
        lines.append(f"{phase}: node-loss={node_loss:.4f} (<0.05), spread={spread:.4f} "
                     f"(>=0.2), grad-peak distance={distance} cells (<=1)")
    assert report(9, all_ok, "; ".join(lines))


@pytest.mark.slow
def test_criterion_10_sharpness_comparison(xxz_mesh):
    node = xxz_mesh.nearest_node(*XXZ_POINTS["zafm"])
    means = {}
    root = RngStream(1000)
    for si, (kind, value) in enumerate((("da", 0.87), ("digital", np.pi / 8), ("da", 0.98))):
        if kind == "da":
            hp = DAHyperparams(n=8, layers=14, rb_over_a=value)
        else:
            hp = DigitalHyperparams(n=8, layers=14, phi=value)
        vals = []
        for rep in range(5):
            diagram = train_anomaly_detector(xxz_mesh, node, hp, runs=20, noisy=True,
                                             rng=root.child(si, rep))
            vals.append(diagram_sharpness(diagram))
        means[(kind, value)] = float(np.mean(vals))
    good = means[("da", 0.87)] > means[("digital", np.pi / 8)]
    bad_loses = not (means[("da", 0.98)] > means[("digital", np.pi / 8)])
    ok = good and bad_loses
    assert report(10, ok, f"l=14 noisy sharpness: DA(0.87)={means[('da', 0.87)]:.4f} > "
                          f"digital(pi/8)={means[('digital', np.pi / 8)]:.4f}: {good}; "
                          f"DA(0.98)={means[('da', 0.98)]:.4f} does not exceed digital: {bad_loses}")


def test_criterion_11_property_suites_fast():
    started = time.perf_counter()

    # unitarity / normalization across gates and evolutions
    hp = DAHyperparams(n=4, layers=2)
    H = hp.hamiltonian()
    for k in range(5):
        params = random_rotation_params(4, 2, RngStream(1101, k))
        state = haar_random_state(4, RngStream(1102, k))
        out = build_da_circuit(hp, params, H).apply(state.amplitudes)
        assert abs(np.linalg.norm(out) - 1.0) < 1e-10
        g = generalized_cnot(float(RngStream(1103, k).generator().uniform(0, np.pi)))
        assert np.abs(g.conj().T @ g - np.eye(4)).max() < 1e-12

    # analytic gradient vs central finite differences, A_2^4 and D_3^5
    from daql.training import DensityObjective, finite_difference_gradient

    obj_da = DensityObjective(lambda p: build_da_circuit(hp, p, H),
                              QuantumState.zero(4).amplitudes, 4)
    hp_d = DigitalHyperparams(n=5, layers=3, phi=np.pi / 8)
    obj_d = DensityObjective(lambda p: build_digital_circuit(hp_d, p),
                             QuantumState.zero(5).amplitudes, 5)
    for obj, n, layers in ((obj_da, 4, 2), (obj_d, 5, 3)):
        params = random_rotation_params(n, layers, RngStream(1104, n))
        _, ga = obj.loss_and_grad(params)
        gf = finite_difference_gradient(obj.loss, params)
        assert np.abs(ga - gf).max() / max(np.abs(ga).max(), 1e-8) <= 1e-5

    # evolution against the 4th-order Trotter oracle
    hp4 = DAHyperparams(n=4, layers=1)
    H4 = hp4.hamiltonian()
    state = haar_random_state(4, RngStream(1105))
    oracle = suzuki4_rydberg_evolution(H4, hp4.omega, 4, 0.25, 10_000, state.amplitudes)
    fid = abs(np.vdot(oracle, evolve(H4, 0.25, state).amplitudes)) ** 2
    assert fid > 1 - 1e-6

    # order-parameter and entropy trivial values
    neel = QuantumState.from_bits([0, 1, 0, 1, 0, 1, 0, 1])
    assert order_parameters(neel).zafm == pytest.approx(8.0, abs=1e-10)
    assert order_parameters(QuantumState.zero(8)).zafm == pytest.approx(0.0, abs=1e-10)
    product = QuantumState.product([np.array([0.8, 0.6])] * 4)
    assert entanglement_entropy(product, (0, 1)) < 1e-10
    bell = QuantumState(2, np.array([1, 0, 0, 1]) / np.sqrt(2))
    assert entanglement_entropy(bell, (1,)) == pytest.approx(np.log(2), abs=1e-10)

    # sharpness zero cases
    xs = ys = np.linspace(0, 1, 5)
    assert sharpness(np.full((5, 5), 0.3), xs, ys) == pytest.approx(0.0)
    assert sharpness(np.tile(xs[:, None], (1, 5)), xs, ys) == pytest.approx(0.0, abs=1e-12)

    elapsed = time.perf_counter() - started
    ok = elapsed < 300
    assert report(11, ok, f"property capsule ran in {elapsed:.1f}s (< 300s)")
