"""Binary handwritten-digit classification: IDX ingestion, PCA, angle
encoding into product states, classifier training, and accuracy grids.

The classifier measures qubit 0 of the circuit output: q is the excited
probability, and the sample is labeled as the second digit of the pair
when q >= 0.5.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .circuits import (
    DAHyperparams,
    DigitalHyperparams,
    build_da_circuit,
    build_digital_circuit,
    random_rotation_params,
)
from .hamiltonians import OMEGA_DEFAULT
from .noise import (
    AnalogNoiseModel,
    DigitalNoiseModel,
    noisy_analog_hamiltonians,
    noisy_gate_angles,
)
from .persist import DiskCache, config_hash
from .rng import RngStream
from .training import ClassifierObjective, cross_entropy_loss, qubit0_excited_diagonal, train

log = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

DEFAULT_NOISY_PHI = np.pi / 8
DEFAULT_NOISELESS_PHI = np.pi / 4


class IdxFormatError(ValueError):
    pass


def read_idx(path) -> np.ndarray:
    """Parse a big-endian IDX file into a uint8 array (labels or images)."""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise IdxFormatError(f"{path}: truncated header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic == IDX_LABELS_MAGIC:
        ndim = 1
    elif magic == IDX_IMAGES_MAGIC:
        ndim = 3
    else:
        raise IdxFormatError(f"{path}: bad magic 0x{magic:08x}")
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise IdxFormatError(f"{path}: truncated dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:header_len])
    expected = header_len + int(np.prod(dims))
    if len(raw) != expected:
        raise IdxFormatError(
            f"{path}: payload length mismatch, expected {expected} bytes, found {len(raw)}"
        )
    return np.frombuffer(raw[header_len:], dtype=np.uint8).reshape(dims)


def write_idx(path, array: np.ndarray) -> None:
    """Serialize labels (1-d) or images (3-d) back to IDX, byte-exact."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    if array.ndim == 1:
        magic = IDX_LABELS_MAGIC
    elif array.ndim == 3:
        magic = IDX_IMAGES_MAGIC
    else:
        raise IdxFormatError(f"cannot serialize array of ndim {array.ndim}")
    with open(path, "wb") as fh:
        fh.write(struct.pack(f">{1 + array.ndim}I", magic, *array.shape))
        fh.write(array.tobytes())


@dataclass(frozen=True)
class MnistDataset:
    images: np.ndarray  # (count, rows, cols) uint8
    labels: np.ndarray  # (count,) uint8
    split: str

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"{self.images.shape[0]} images but {self.labels.shape[0]} labels"
            )

    @property
    def count(self) -> int:
        return self.images.shape[0]

    def select_digits(self, a: int, b: int):
        """Images of the two digits with binary labels: a -> 0, b -> 1."""
        if a == b:
            raise ValueError("digit pair must be distinct")
        mask = (self.labels == a) | (self.labels == b)
        if not mask.any():
            raise ValueError(f"no samples for digits {a} or {b} in split {self.split!r}")
        images = self.images[mask]
        labels = (self.labels[mask] == b).astype(np.uint8)
        if labels.min() == labels.max():
            raise ValueError(f"one class is empty for pair ({a}, {b})")
        return images, labels


def load_dataset(images_path, labels_path, split: str) -> MnistDataset:
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.ndim != 3:
        raise IdxFormatError(f"{images_path} is not an image file")
    if labels.ndim != 1:
        raise IdxFormatError(f"{labels_path} is not a label file")
    return MnistDataset(images, labels, split)


PCA_MAGIC = b"DAQLPCA1"


@dataclass(frozen=True)
class PCAModel:
    """Top principal components plus training-split projection ranges."""

    mean: np.ndarray  # (features,)
    components: np.ndarray  # (n_components, features), orthonormal rows
    explained_variance: np.ndarray  # (n_components,)
    proj_min: np.ndarray
    proj_max: np.ndarray

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def project(self, flat: np.ndarray) -> np.ndarray:
        return (flat - self.mean) @ self.components.T


def fit_pca(images: np.ndarray, n_components: int) -> PCAModel:
    """Mean-centered covariance eigendecomposition on flattened images.

    Components are ordered by decreasing explained variance with a fixed
    sign convention (largest-magnitude entry positive) so fits are
    reproducible bit-for-bit.
    """
    flat = images.reshape(images.shape[0], -1).astype(float)
    n_samples, n_features = flat.shape
    if n_components > n_features:
        raise ValueError(f"cannot extract {n_components} components from {n_features} features")
    if n_samples < n_components:
        raise ValueError(f"need at least {n_components} samples, got {n_samples}")
    mean = flat.mean(axis=0)
    centered = flat - mean
    cov = (centered.T @ centered) / max(n_samples - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:n_components]
    components = eigvecs[:, order].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    variances = np.maximum(eigvals[order], 0.0)
    proj = centered @ components.T
    return PCAModel(mean, components, variances, proj.min(axis=0), proj.max(axis=0))


def save_pca(path, model: PCAModel) -> None:
    with open(path, "wb") as fh:
        fh.write(PCA_MAGIC)
        fh.write(struct.pack("<II", model.components.shape[1], model.n_components))
        for arr in (model.mean, model.components, model.explained_variance,
                    model.proj_min, model.proj_max):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_pca(path) -> PCAModel:
    raw = Path(path).read_bytes()
    if raw[:8] != PCA_MAGIC:
        raise ValueError(f"{path}: bad PCA blob magic {raw[:8]!r}")
    n_features, n_components = struct.unpack("<II", raw[8:16])
    body = np.frombuffer(raw[16:], dtype="<f8")
    sizes = [n_features, n_components * n_features, n_components, n_components, n_components]
    if body.size != sum(sizes):
        raise ValueError(f"{path}: payload size {body.size} != expected {sum(sizes)}")
    parts = np.split(body, np.cumsum(sizes)[:-1])
    return PCAModel(parts[0], parts[1].reshape(n_components, n_features),
                    parts[2], parts[3], parts[4])


@dataclass(frozen=True)
class EncodedSample:
    """Rotation angles of one product-state encoding; theta in [0, pi],
    phi in [0, 2*pi] (2*pi is the same phase as 0)."""

    theta: np.ndarray  # (n,)
    phi: np.ndarray  # (n,)
    label: int | None = None


def encode(image: np.ndarray, pca: PCAModel, label: int | None = None) -> EncodedSample:
    """Project onto 2n components and min-max map to rotation angles.

    The first n components become polar angles theta, the last n become
    azimuthal phases phi; projections outside the training range clamp to
    the boundary.
    """
    proj = pca.project(image.reshape(-1).astype(float))
    span = pca.proj_max - pca.proj_min
    span = np.where(span > 0, span, 1.0)
    scaled = np.clip((proj - pca.proj_min) / span, 0.0, 1.0)
    n = pca.n_components // 2
    return EncodedSample(theta=scaled[:n] * np.pi, phi=scaled[n:] * 2.0 * np.pi, label=label)


def encoded_amplitudes(theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Product state with qubit j in cos(theta_j/2)|0> + e^{i phi_j} sin(theta_j/2)|1>."""
    amps = np.ones(1, dtype=complex)
    for th, ph in zip(theta, phi):
        qubit = np.array([np.cos(th / 2.0), np.exp(1j * ph) * np.sin(th / 2.0)])
        amps = np.kron(amps, qubit)
    return amps


def encode_batch(images: np.ndarray, pca: PCAModel) -> np.ndarray:
    """Encode many images at once; returns a (2**n, count) column-state matrix."""
    flat = images.reshape(images.shape[0], -1).astype(float)
    proj = pca.project(flat)
    span = pca.proj_max - pca.proj_min
    span = np.where(span > 0, span, 1.0)
    scaled = np.clip((proj - pca.proj_min) / span, 0.0, 1.0)
    n = pca.n_components // 2
    theta, phi = scaled[:, :n] * np.pi, scaled[:, n:] * 2.0 * np.pi
    amps = np.ones((images.shape[0], 1), dtype=complex)
    for j in range(n):
        qubit = np.stack([np.cos(theta[:, j] / 2.0),
                          np.exp(1j * phi[:, j]) * np.sin(theta[:, j] / 2.0)], axis=1)
        amps = (amps[:, :, None] * qubit[:, None, :]).reshape(images.shape[0], -1)
    return amps.T.copy()


def excited_probability(amps: np.ndarray) -> np.ndarray | float:
    """P(qubit 0 = 1) for a single state or each column of a batch."""
    n = int(np.log2(amps.shape[0]))
    mags = np.abs(amps) ** 2
    half = qubit0_excited_diagonal(n)
    if amps.ndim == 1:
        return float(half @ mags)
    return half @ mags


def classify(q) -> np.ndarray | int:
    """Label rule: second digit of the pair iff q >= 0.5 (ties go to it)."""
    if np.isscalar(q):
        return int(q >= 0.5)
    return (np.asarray(q) >= 0.5).astype(int)


@dataclass(frozen=True)
class ClassifierConfig:
    digits: tuple
    ansatz: str = "da"  # "da" | "digital"
    n: int = 8
    layers: int = 12
    omega: float = OMEGA_DEFAULT
    delta_over_omega: float = 0.8
    rb_over_a: float = 0.87
    t: float | None = None
    phi: float | None = None  # digital entangler angle; defaults by noise mode
    noise: bool = False
    epochs: int = 70
    batch_size: int = 100
    restarts: int = 1
    test_samples: int = 2000
    two_term_loss: bool = True
    shots: int | None = None
    seed: int = 0
    detuning_noise_angular: bool = True

    def resolved_phi(self) -> float:
        if self.phi is not None:
            return self.phi
        return DEFAULT_NOISY_PHI if self.noise else DEFAULT_NOISELESS_PHI

    def hyperparams(self):
        if self.ansatz == "da":
            kwargs = {} if self.t is None else {"t": self.t}
            return DAHyperparams(n=self.n, layers=self.layers, omega=self.omega,
                                 delta_over_omega=self.delta_over_omega,
                                 rb_over_a=self.rb_over_a, **kwargs)
        if self.ansatz == "digital":
            return DigitalHyperparams(n=self.n, layers=self.layers, phi=self.resolved_phi())
        raise ValueError(f"unknown ansatz {self.ansatz!r}")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["digits"] = list(self.digits)
        d["phi"] = self.resolved_phi() if self.ansatz == "digital" else None
        return d


@dataclass
class RestartResult:
    params: np.ndarray
    train_accuracy: float
    test_accuracy: float
    final_loss: float
    record: object


@dataclass
class ClassifierResult:
    config: ClassifierConfig
    restarts: list
    pca: PCAModel

    @property
    def test_accuracies(self) -> np.ndarray:
        return np.array([r.test_accuracy for r in self.restarts])

    @property
    def train_accuracies(self) -> np.ndarray:
        return np.array([r.train_accuracy for r in self.restarts])

    def summary(self) -> dict:
        return {
            "test_accuracy_mean": float(self.test_accuracies.mean()),
            "test_accuracy_std": float(self.test_accuracies.std()),
            "train_accuracy_mean": float(self.train_accuracies.mean()),
            "train_accuracy_std": float(self.train_accuracies.std()),
            "restarts": len(self.restarts),
        }


def _circuit_builder(config: ClassifierConfig, hp, epoch_rng: RngStream | None,
                     method: str = "spectral"):
    """Builder closure for one shared draw; noiseless when epoch_rng is None.

    ``method`` picks the noisy-quench propagation: spectral pays one
    diagonalization per layer draw and is cheapest when the propagator hits
    a whole batch (training); krylov is cheapest for one-shot single-state
    evaluations.
    """
    if not config.noise or epoch_rng is None:
        if config.ansatz == "da":
            ham = hp.hamiltonian() if hp.layers else None
            return lambda p: build_da_circuit(hp, p, ham)
        return lambda p: build_digital_circuit(hp, p)
    if config.ansatz == "da":
        model = AnalogNoiseModel.aquila(config.detuning_noise_angular)
        hams, _ = noisy_analog_hamiltonians(hp, model, epoch_rng)
        return lambda p: build_da_circuit(hp, p, hams, method=method)
    model = DigitalNoiseModel()
    angles = noisy_gate_angles(hp.layers, hp.n, hp.phi, model, epoch_rng)
    return lambda p: build_digital_circuit(hp, p, angles)


def _accuracy(config: ClassifierConfig, hp, params, states, labels, rng: RngStream) -> float:
    """Fraction classified correctly; fresh noise per sample in noisy mode."""
    if not config.noise:
        builder = _circuit_builder(config, hp, None)
        q = excited_probability(builder(params).apply(states))
        return float((classify(q) == labels).mean())
    correct = 0
    for i in range(states.shape[1]):
        builder = _circuit_builder(config, hp, rng.child(i), method="krylov")
        q = excited_probability(builder(params).apply(states[:, i]))
        correct += int(classify(q) == labels[i])
    return correct / states.shape[1]


def _shot_estimate(q, shots: int, gen: np.random.Generator) -> np.ndarray:
    return gen.binomial(shots, np.clip(q, 0.0, 1.0)) / shots


def train_classifier(config: ClassifierConfig, train_ds: MnistDataset,
                     test_ds: MnistDataset) -> ClassifierResult:
    """Full per-pair pipeline: PCA fit, encoding, restarts of the training
    loop, and train/test accuracy evaluation on held-out data."""
    a, b = config.digits
    train_images, train_labels = train_ds.select_digits(a, b)
    test_images, test_labels = test_ds.select_digits(a, b)
    pca = fit_pca(train_images, 2 * config.n)

    train_states = encode_batch(train_images, pca)
    k = min(config.test_samples, test_images.shape[0])
    test_states = encode_batch(test_images[:k], pca)
    test_labels = test_labels[:k]
    k_train = min(config.test_samples, train_states.shape[1])

    hp = config.hyperparams()
    root = RngStream(config.seed)
    results = []
    for restart in range(config.restarts):
        run_rng = root.child(restart)
        params0 = random_rotation_params(config.n, config.layers, run_rng.child(10**6))

        def step(params, epoch, epoch_rng):
            gen = epoch_rng.generator()
            batch = gen.choice(train_states.shape[1],
                               size=min(config.batch_size, train_states.shape[1]),
                               replace=False)
            builder = _circuit_builder(config, hp, epoch_rng.child(1))
            objective = ClassifierObjective(builder, train_states[:, batch],
                                            train_labels[batch], config.n,
                                            config.two_term_loss)
            if config.shots is None:
                return objective.loss_and_grad(params)
            # shot mode: estimated loss with a shared shot seed, central FD
            shot_seed = epoch_rng.child(2)

            def shot_loss(p):
                q = objective.probabilities(p)
                q_hat = _shot_estimate(q, config.shots, shot_seed.generator())
                return cross_entropy_loss(train_labels[batch], q_hat, config.two_term_loss)

            from .training import finite_difference_gradient

            return shot_loss(params), finite_difference_gradient(shot_loss, params)

        params, record = train(step, params0, config.epochs, run_rng)
        train_acc = _accuracy(config, hp, params, train_states[:, :k_train],
                              train_labels[:k_train], run_rng.child(7001))
        test_acc = _accuracy(config, hp, params, test_states, test_labels, run_rng.child(7002))
        results.append(RestartResult(params, train_acc, test_acc, record.losses[-1], record))
    return ClassifierResult(config, results, pca)


def _grid_cell_key(config: ClassifierConfig, corpus_fingerprint: str) -> str:
    return config_hash({"cell": config.to_dict(), "corpus": corpus_fingerprint})


def corpus_fingerprint(train_ds: MnistDataset, test_ds: MnistDataset) -> str:
    import hashlib

    h = hashlib.sha256()
    for ds in (train_ds, test_ds):
        h.update(ds.images.tobytes())
        h.update(ds.labels.tobytes())
    return h.hexdigest()


def accuracy_grid(cells: list[ClassifierConfig], train_ds: MnistDataset,
                  test_ds: MnistDataset, cache_dir=None) -> list[dict]:
    """Run (or fetch from cache) one classifier per cell config.

    Returns one row per cell with the pair, the mean/std test accuracy over
    restarts, and the cell's config hash (which also keys the disk cache).
    """
    cache = DiskCache(cache_dir) if cache_dir else None
    fingerprint = corpus_fingerprint(train_ds, test_ds)
    rows = []
    for config in cells:
        key = _grid_cell_key(config, fingerprint)
        cached = cache.get(key) if cache else None
        if cached is not None:
            log.info("accuracy grid cache hit %s", key[:12])
            rows.append(cached)
            continue
        result = train_classifier(config, train_ds, test_ds)
        summary = result.summary()
        row = {
            "pair": f"{config.digits[0]}v{config.digits[1]}",
            "ansatz": config.ansatz,
            "layers": config.layers,
            "t": config.hyperparams().t if config.ansatz == "da" else None,
            "phi": config.resolved_phi() if config.ansatz == "digital" else None,
            "noise": config.noise,
            "accuracy_mean": summary["test_accuracy_mean"],
            "accuracy_std": summary["test_accuracy_std"],
            "train_accuracy_mean": summary["train_accuracy_mean"],
            "config_hash": key,
        }
        if cache:
            cache.put(key, row)
        rows.append(row)
    return rows


def all_digit_pairs() -> list[tuple]:
    return [(a, b) for a in range(10) for b in range(a + 1, 10)]
