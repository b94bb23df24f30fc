"""Unsupervised phase-boundary learning on Hamiltonian parameter meshes.

A mesh holds the exact ground state at every node of a 2-d parameter grid
(XXZ chain over (J3/J6, alpha) with J6 = 1, or Rydberg chain over
(Delta/Omega, R_b/a)).  An anomaly detector is a variational circuit
trained to minimize the mean excitation density of its output on a single
node's ground state; evaluating the trained loss across the mesh yields a
learned phase diagram whose gradient structure localizes the boundaries.
"""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .circuits import (
    DAHyperparams,
    DigitalHyperparams,
    build_da_circuit,
    build_digital_circuit,
    random_rotation_params,
)
from .hamiltonians import (
    OMEGA_DEFAULT,
    RydbergParams,
    XXZParams,
    build_rydberg,
    build_xxz,
    chain_positions,
    occupation_table,
)
from .noise import (
    AnalogNoiseModel,
    DigitalNoiseModel,
    noisy_analog_hamiltonians,
    noisy_gate_angles,
)
from .parallel import pmap
from .rng import RngStream
from .sim import QuantumState, entanglement_entropy, ground_state
from .training import DensityObjective, density_diagonal, train

log = logging.getLogger(__name__)

MESH_MAGIC = b"DAQLGS01"
GROUND_STATE_TOL = 1e-8
DEFAULT_CENTRAL_SITE = 2

NOISELESS_EPOCHS = 50
NOISY_EPOCHS = 70

#: top-percent contour conventions per order parameter
CONTOUR_PERCENT = {"zafm": 18.0, "qzafm": 3.0, "xafm": 50.0, "vbs": 9.0}


@dataclass(frozen=True)
class MeshAxis:
    name: str
    lo: float
    hi: float
    count: int

    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.count)


@dataclass(frozen=True)
class MeshSpec:
    model: str  # "xxz" | "rydberg"
    n: int
    axis_x: MeshAxis
    axis_y: MeshAxis
    omega: float = OMEGA_DEFAULT

    def __post_init__(self):
        if self.model not in ("xxz", "rydberg"):
            raise ValueError(f"unknown mesh model {self.model!r}")

    @property
    def boundary(self) -> str:
        return "periodic" if self.model == "xxz" else "open"

    def header(self) -> dict:
        return {
            "model": self.model,
            "n": self.n,
            "boundary": self.boundary,
            "omega": self.omega,
            "axis_x": self.axis_x.__dict__,
            "axis_y": self.axis_y.__dict__,
            "solver_tol": GROUND_STATE_TOL,
            "bit_order": "qubit 0 = most significant bit",
        }


def xxz_mesh_spec(n: int = 8, count_x: int = 20, count_y: int = 20) -> MeshSpec:
    return MeshSpec("xxz", n, MeshAxis("j3_over_j6", 0.01, 2.0, count_x),
                    MeshAxis("alpha", 0.0, 1.0, count_y))


def rydberg_mesh_spec(n: int = 9, count_x: int = 21, count_y: int = 21) -> MeshSpec:
    return MeshSpec("rydberg", n, MeshAxis("delta_over_omega", 0.0, 4.0, count_x),
                    MeshAxis("rb_over_a", 1.0, 3.0, count_y))


def node_hamiltonian(spec: MeshSpec, x: float, y: float):
    if spec.model == "xxz":
        return build_xxz(XXZParams(n=spec.n, j3=float(x), j6=1.0, alpha=float(y)))
    params = RydbergParams(n=spec.n, omega=spec.omega, delta=float(x) * spec.omega,
                           positions=chain_positions(spec.n, float(y), spec.omega))
    return build_rydberg(params)


@dataclass
class PhaseMesh:
    spec: MeshSpec
    energies: np.ndarray  # (nx, ny)
    states: np.ndarray  # (nx, ny, 2**n) complex
    solves_performed: int = 0

    @property
    def shape(self) -> tuple:
        return self.energies.shape

    def x_values(self) -> np.ndarray:
        return self.spec.axis_x.values()

    def y_values(self) -> np.ndarray:
        return self.spec.axis_y.values()

    def state(self, ix: int, iy: int) -> QuantumState:
        return QuantumState(self.spec.n, self.states[ix, iy])

    def nearest_node(self, x: float, y: float) -> tuple:
        ix = int(np.argmin(np.abs(self.x_values() - x)))
        iy = int(np.argmin(np.abs(self.y_values() - y)))
        return ix, iy


def _solve_node(args):
    spec, x, y = args
    energy, state = ground_state(node_hamiltonian(spec, x, y))
    return energy, state.amplitudes


def build_mesh(spec: MeshSpec, cache_path=None, processes: int = 1) -> PhaseMesh:
    """Compute (or load from cache) the ground state at every mesh node."""
    if cache_path is not None and Path(cache_path).exists():
        mesh = load_mesh(cache_path)
        if mesh.spec == spec:
            log.info("mesh cache hit at %s", cache_path)
            return mesh
        log.warning("mesh cache at %s does not match requested spec; rebuilding", cache_path)
    xs, ys = spec.axis_x.values(), spec.axis_y.values()
    jobs = [(spec, x, y) for x in xs for y in ys]
    solved = pmap(_solve_node, jobs, processes)
    d = 2**spec.n
    energies = np.empty((xs.size, ys.size))
    states = np.empty((xs.size, ys.size, d), dtype=complex)
    k = 0
    for ix in range(xs.size):
        for iy in range(ys.size):
            energies[ix, iy], states[ix, iy] = solved[k]
            k += 1
    mesh = PhaseMesh(spec, energies, states, solves_performed=len(jobs))
    if cache_path is not None:
        save_mesh(mesh, cache_path)
    return mesh


def save_mesh(mesh: PhaseMesh, path) -> None:
    """Binary node cache: magic, JSON header, then per-node energy and
    interleaved re/im amplitudes as little-endian float64, row-major in
    (ix, iy)."""
    header = json.dumps(mesh.spec.header(), sort_keys=True).encode()
    nx, ny = mesh.shape
    d = mesh.states.shape[-1]
    records = np.empty((nx * ny, 1 + 2 * d))
    flat_e = mesh.energies.reshape(-1)
    flat_s = mesh.states.reshape(nx * ny, d)
    records[:, 0] = flat_e
    records[:, 1::2] = flat_s.real
    records[:, 2::2] = flat_s.imag
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MESH_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(records.astype("<f8").tobytes())


def load_mesh(path) -> PhaseMesh:
    raw = Path(path).read_bytes()
    if raw[:8] != MESH_MAGIC:
        raise ValueError(f"{path}: bad mesh cache magic {raw[:8]!r}")
    (header_len,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + header_len].decode())
    spec = MeshSpec(header["model"], header["n"],
                    MeshAxis(**header["axis_x"]), MeshAxis(**header["axis_y"]),
                    omega=header.get("omega", OMEGA_DEFAULT))
    nx, ny, d = spec.axis_x.count, spec.axis_y.count, 2 ** header["n"]
    body = np.frombuffer(raw[12 + header_len:], dtype="<f8")
    expected = nx * ny * (1 + 2 * d)
    if body.size != expected:
        raise ValueError(f"{path}: payload size {body.size} != expected {expected}")
    records = body.reshape(nx * ny, 1 + 2 * d)
    energies = records[:, 0].reshape(nx, ny).copy()
    states = (records[:, 1::2] + 1j * records[:, 2::2]).reshape(nx, ny, d)
    return PhaseMesh(spec, energies, states, solves_performed=0)


def _site_mask(n: int, site: int) -> int:
    return 1 << (n - 1 - (site % n))


def _pair_swap_apply(amps: np.ndarray, n: int, i: int, j: int) -> np.ndarray:
    """(X_i X_j + Y_i Y_j + Z_i Z_j) |psi> for distinct sites."""
    occ = occupation_table(n)
    z = 1.0 - 2.0 * occ
    out = (z[:, i % n] * z[:, j % n]) * amps
    idx = np.arange(amps.shape[0])
    mask = occ[:, i % n] != occ[:, j % n]
    flip = idx[mask] ^ _site_mask(n, i) ^ _site_mask(n, j)
    out[idx[mask]] += 2.0 * amps[flip]
    return out


def _dimer_apply(amps: np.ndarray, n: int, site: int) -> np.ndarray:
    """D(s) |psi> with D(s) = sigma_s . sigma_{s+1} - sigma_{s-1} . sigma_s."""
    return _pair_swap_apply(amps, n, site, site + 1) - _pair_swap_apply(amps, n, site - 1, site)


def correlators(state: QuantumState, kind: str, central_site: int = DEFAULT_CENTRAL_SITE) -> np.ndarray:
    """Two-point correlators C(r), r = 1..n, anchored at the central site.

    ``z``: <Z_c Z_{c+r}>; ``x``: <X_c X_{c+r}>; ``vbs``: dimer-dimer
    correlator of bond differences, reference bond at the central site.
    Site indices wrap periodically.
    """
    n, amps = state.n, state.amplitudes
    c = central_site % n
    rs = np.arange(1, n + 1)
    if kind == "z":
        z = 1.0 - 2.0 * occupation_table(n)
        probs = np.abs(amps) ** 2
        return np.array([float(probs @ (z[:, c] * z[:, (c + r) % n])) for r in rs])
    if kind == "x":
        idx = np.arange(amps.shape[0])
        out = np.empty(n)
        for k, r in enumerate(rs):
            j = (c + r) % n
            if j == c:
                out[k] = 1.0
                continue
            flipped = idx ^ _site_mask(n, c) ^ _site_mask(n, j)
            out[k] = float(np.real(np.vdot(amps, amps[flipped])))
        return out
    if kind == "vbs":
        if n < 5:
            raise ValueError("VBS correlator needs n >= 5 so neighbor bonds stay distinct")
        ref = _dimer_apply(amps, n, c)
        out = np.empty(n)
        for k, r in enumerate(rs):
            out[k] = float(np.real(np.vdot(ref, _dimer_apply(amps, n, c + r))))
        return out
    raise ValueError(f"unknown correlator kind {kind!r}")


@dataclass(frozen=True)
class OrderParameters:
    zafm: float
    qzafm: float
    xafm: float
    vbs: float
    imag_residues: dict = field(default_factory=dict)
    magnitude_fallback: bool = False

    def as_dict(self) -> dict:
        return {"zafm": self.zafm, "qzafm": self.qzafm, "xafm": self.xafm, "vbs": self.vbs}


def order_parameters(state: QuantumState, central_site: int = DEFAULT_CENTRAL_SITE) -> OrderParameters:
    """Staggered sums of the correlators; real for lattice-symmetric states.

    An imaginary residue above 1e-8 trips the magnitude fallback flag and
    the magnitude is stored instead of the real part.
    """
    n = state.n
    rs = np.arange(1, n + 1)
    cz = correlators(state, "z", central_site)
    cx = correlators(state, "x", central_site)
    cv = correlators(state, "vbs", central_site)
    staggered = (-1.0) ** rs
    quarter = np.exp(1j * np.pi * rs / 2.0)
    raw = {
        "zafm": complex(np.sum(staggered * cz)),
        "qzafm": complex(np.sum(quarter * cz)),
        "xafm": complex(np.sum(staggered * cx)),
        "vbs": complex(np.sum(staggered * cv)),
    }
    residues = {k: abs(v.imag) for k, v in raw.items()}
    fallback = any(res > 1e-8 for res in residues.values())
    values = {k: (abs(v) if fallback else v.real) for k, v in raw.items()}
    return OrderParameters(values["zafm"], values["qzafm"], values["xafm"], values["vbs"],
                           imag_residues=residues, magnitude_fallback=fallback)


def order_parameter_map(mesh: PhaseMesh, central_site: int = DEFAULT_CENTRAL_SITE) -> dict:
    """Per-node order parameters: dict of (nx, ny) arrays keyed by name."""
    nx, ny = mesh.shape
    maps = {k: np.empty((nx, ny)) for k in ("zafm", "qzafm", "xafm", "vbs")}
    for ix in range(nx):
        for iy in range(ny):
            ops = order_parameters(mesh.state(ix, iy), central_site)
            for k, v in ops.as_dict().items():
                maps[k][ix, iy] = v
    return maps


def contour_mask(values: np.ndarray, top_percent: float) -> np.ndarray:
    """Nodes whose |value| falls in the top given percent of the mesh."""
    mags = np.abs(values)
    cutoff = np.quantile(mags, 1.0 - top_percent / 100.0)
    return mags >= cutoff


def boundary_nodes(mask: np.ndarray) -> np.ndarray:
    """In-mask nodes with at least one 4-neighbor outside the mask."""
    padded = np.pad(mask, 1, mode="edge")
    neighbor_out = (
        ~padded[:-2, 1:-1] | ~padded[2:, 1:-1] | ~padded[1:-1, :-2] | ~padded[1:-1, 2:]
    )
    return mask & neighbor_out


def chebyshev_distance_to(mask: np.ndarray, ix: int, iy: int) -> int:
    """Grid-cell (Chebyshev) distance from a node to the nearest True node."""
    points = np.argwhere(mask)
    if points.size == 0:
        raise ValueError("mask is empty")
    return int(np.min(np.maximum(np.abs(points[:, 0] - ix), np.abs(points[:, 1] - iy))))


def entropy_map(mesh: PhaseMesh) -> np.ndarray:
    """Half-chain entanglement entropy (first floor(n/2) sites) per node."""
    nx, ny = mesh.shape
    cut = range(mesh.spec.n // 2)
    out = np.empty((nx, ny))
    for ix in range(nx):
        for iy in range(ny):
            out[ix, iy] = entanglement_entropy(mesh.state(ix, iy), cut)
    return out


@dataclass
class LearnedPhaseDiagram:
    mesh_spec: MeshSpec
    losses: np.ndarray  # (nx, ny) mean over runs
    run_count: int
    training_node: tuple
    ansatz: str
    layers: int
    noisy: bool
    final_training_losses: np.ndarray  # (runs,)
    training_failed: bool = False  # no run dropped below 0.2
    config: dict = field(default_factory=dict)

    def training_node_loss(self) -> float:
        return float(self.losses[self.training_node])

    def spread(self) -> float:
        return float(self.losses.max() - self.losses.min())


def _epoch_circuit_builder(hp, ansatz: str, noisy: bool, epoch_rng,
                           shared_ham, analog_model, digital_model):
    if not noisy:
        if ansatz == "da":
            return lambda p: build_da_circuit(hp, p, shared_ham)
        return lambda p: build_digital_circuit(hp, p)
    if ansatz == "da":
        hams, _ = noisy_analog_hamiltonians(hp, analog_model, epoch_rng)
        return lambda p: build_da_circuit(hp, p, hams, method="krylov")
    angles = noisy_gate_angles(hp.layers, hp.n, hp.phi, digital_model, epoch_rng)
    return lambda p: build_digital_circuit(hp, p, angles)


def _detector_run(mesh: PhaseMesh, node: tuple, hp, ansatz: str, noisy: bool,
                  epochs: int, run_rng: RngStream,
                  analog_model, digital_model):
    """One training run plus a full-mesh loss evaluation."""
    n = mesh.spec.n
    input_amps = mesh.states[node]
    shared_ham = hp.hamiltonian() if (ansatz == "da" and hp.layers > 0 and not noisy) else None
    diag = density_diagonal(n)

    def step(params, epoch, epoch_rng):
        builder = _epoch_circuit_builder(hp, ansatz, noisy, epoch_rng,
                                         shared_ham, analog_model, digital_model)
        return DensityObjective(builder, input_amps, n).loss_and_grad(params)

    params0 = random_rotation_params(n, hp.layers, run_rng.child(10**6))
    params, record = train(step, params0, epochs, run_rng)

    nx, ny = mesh.shape
    losses = np.empty((nx, ny))
    if not noisy:
        circuit = _epoch_circuit_builder(hp, ansatz, False, None, shared_ham, None, None)(params)
        outs = circuit.apply(mesh.states.reshape(nx * ny, -1).T)
        losses = (diag @ (np.abs(outs) ** 2)).reshape(nx, ny)
    else:
        for ix in range(nx):
            for iy in range(ny):
                node_rng = run_rng.child(5_000_000 + ix * ny + iy)
                builder = _epoch_circuit_builder(hp, ansatz, True, node_rng,
                                                 None, analog_model, digital_model)
                out = builder(params).apply(mesh.states[ix, iy])
                losses[ix, iy] = float(diag @ (np.abs(out) ** 2))
    return losses, float(min(record.losses))


def _detector_run_packed(args):
    return _detector_run(*args)


def train_anomaly_detector(mesh: PhaseMesh, training_node: tuple, hp,
                           runs: int = 20, epochs: int | None = None,
                           rng: RngStream = RngStream(0), noisy: bool = False,
                           analog_model: AnalogNoiseModel | None = None,
                           digital_model: DigitalNoiseModel | None = None,
                           processes: int = 1) -> LearnedPhaseDiagram:
    """Train ``runs`` independent detectors at one node and average the
    per-node evaluation losses into a learned phase diagram.

    In noisy mode every training epoch shares one fresh draw between loss
    and gradient, and every mesh-node evaluation uses an independent draw.
    """
    ix, iy = training_node
    nx, ny = mesh.shape
    if not (0 <= ix < nx and 0 <= iy < ny):
        raise ValueError(f"training node {training_node} outside mesh {mesh.shape}")
    ansatz = "da" if isinstance(hp, DAHyperparams) else "digital"
    if hp.n != mesh.spec.n:
        raise ValueError(f"circuit has n={hp.n} but mesh has n={mesh.spec.n}")
    if epochs is None:
        epochs = NOISY_EPOCHS if noisy else NOISELESS_EPOCHS
    analog_model = analog_model or AnalogNoiseModel()
    digital_model = digital_model or DigitalNoiseModel()

    jobs = [(mesh, (ix, iy), hp, ansatz, noisy, epochs, rng.child(run), analog_model, digital_model)
            for run in range(runs)]
    outcomes = pmap(_detector_run_packed, jobs, processes)
    all_losses = np.stack([loss for loss, _ in outcomes])
    best_training = np.array([best for _, best in outcomes])
    failed = bool(np.all(best_training >= 0.2))
    if failed:
        log.warning("training loss never dropped below 0.2 in any of %d runs", runs)
    return LearnedPhaseDiagram(
        mesh_spec=mesh.spec, losses=all_losses.mean(axis=0), run_count=runs,
        training_node=(ix, iy), ansatz=ansatz, layers=hp.layers, noisy=noisy,
        final_training_losses=best_training, training_failed=failed,
        config={"epochs": epochs, "seed": rng.seed, "stream": rng.stream},
    )


def sharpness(losses: np.ndarray, x_values: np.ndarray, y_values: np.ndarray) -> float:
    """Sample standard deviation over the mesh of the squared gradient norm.

    Gradients are central finite differences at interior nodes and one-sided
    at the edges, taken with respect to the two physical axis coordinates.
    """
    if losses.shape[0] < 3 or losses.shape[1] < 3:
        raise ValueError(f"mesh {losses.shape} too small for sharpness (need 3x3)")
    gx, gy = np.gradient(losses, x_values, y_values)
    squared_norm = gx**2 + gy**2
    return float(squared_norm.std(ddof=1))


def diagram_sharpness(diagram: LearnedPhaseDiagram) -> float:
    return sharpness(diagram.losses, diagram.mesh_spec.axis_x.values(),
                     diagram.mesh_spec.axis_y.values())


def sharpness_vs_depth(mesh: PhaseMesh, training_node: tuple, schemes: list,
                       layer_values: list, repeats: int = 5, runs: int = 20,
                       rng: RngStream = RngStream(0), noisy: bool = True,
                       epochs: int | None = None, processes: int = 1) -> list[dict]:
    """Mean/std of the learned-diagram sharpness per (scheme, depth).

    ``schemes`` entries are ("da", rb_over_a) or ("digital", phi).  Each
    repeat trains ``runs`` detectors, averages their diagram, and takes the
    sharpness of that mean diagram.
    """
    rows = []
    for si, (kind, value) in enumerate(schemes):
        for li, layers in enumerate(layer_values):
            if kind == "da":
                hp = DAHyperparams(n=mesh.spec.n, layers=layers, rb_over_a=value)
            elif kind == "digital":
                hp = DigitalHyperparams(n=mesh.spec.n, layers=layers, phi=value)
            else:
                raise ValueError(f"unknown scheme {kind!r}")
            values = []
            for rep in range(repeats):
                diagram = train_anomaly_detector(
                    mesh, training_node, hp, runs=runs, epochs=epochs,
                    rng=rng.child(si, li, rep), noisy=noisy, processes=processes)
                values.append(diagram_sharpness(diagram))
            values = np.array(values)
            rows.append({
                "scheme": kind, "scheme_value": value, "layers": layers,
                "sharpness_mean": float(values.mean()), "sharpness_std": float(values.std()),
                "repeats": repeats, "runs": runs, "seed": rng.seed,
            })
    return rows
