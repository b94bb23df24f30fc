import os
from pathlib import Path

import numpy as np
import pytest

from daql.mnist import load_dataset, write_idx

MNIST_FILE_NAMES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def _mnist_paths():
    root = os.environ.get("DAQL_MNIST_DIR")
    if not root:
        return None
    paths = {k: Path(root) / v for k, v in MNIST_FILE_NAMES.items()}
    if all(p.exists() for p in paths.values()):
        return paths
    return None


def _sklearn_digit_corpus(out_dir: Path):
    """Real handwritten digits bundled with scikit-learn (8x8, labels 0-9),
    written to IDX files and read back through the package's own parser.

    Stand-in corpus for environments without the 28x28 MNIST files; the
    acceptance criteria that reference digit data are all relative
    comparisons, so they run on either corpus.
    """
    from sklearn.datasets import load_digits

    raw = load_digits()
    images = np.clip(np.rint(raw.images * (255.0 / 16.0)), 0, 255).astype(np.uint8)
    labels = raw.target.astype(np.uint8)

    rng = np.random.default_rng(20240601)
    train_idx, test_idx = [], []
    for digit in range(10):
        members = np.flatnonzero(labels == digit)
        members = members[rng.permutation(members.size)]
        cut = int(round(0.75 * members.size))
        train_idx.extend(members[:cut])
        test_idx.extend(members[cut:])
    train_idx, test_idx = np.sort(train_idx), np.sort(test_idx)

    paths = {k: out_dir / v for k, v in MNIST_FILE_NAMES.items()}
    write_idx(paths["train_images"], images[train_idx])
    write_idx(paths["train_labels"], labels[train_idx])
    write_idx(paths["test_images"], images[test_idx])
    write_idx(paths["test_labels"], labels[test_idx])
    return paths


@pytest.fixture(scope="session")
def digit_corpus(tmp_path_factory):
    """(train dataset, test dataset, corpus name)."""
    paths = _mnist_paths()
    name = "mnist"
    if paths is None:
        paths = _sklearn_digit_corpus(tmp_path_factory.mktemp("digit-corpus"))
        name = "sklearn-digits"
    train = load_dataset(paths["train_images"], paths["train_labels"], "train")
    test = load_dataset(paths["test_images"], paths["test_labels"], "test")
    return train, test, name


@pytest.fixture(scope="session")
def digit_corpus_paths(tmp_path_factory):
    paths = _mnist_paths()
    if paths is None:
        paths = _sklearn_digit_corpus(tmp_path_factory.mktemp("digit-corpus-cli"))
    return paths
