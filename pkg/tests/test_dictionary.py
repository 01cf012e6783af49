import numpy as np
import pytest

from stllc.dictionary import (
    config_digest,
    kmeans_fit,
    load_dictionary,
    save_dictionary,
    sorted_descriptors,
)
from stllc.errors import ChecksumMismatchError, NonFiniteError, TooFewDescriptorsError


def _blobs(rng, n=300, dim=48, sigma=0.05):
    m1, m2 = rng.normal(size=dim), rng.normal(size=dim) + 5
    X = np.vstack([m1 + sigma * rng.normal(size=(n, dim)), m2 + sigma * rng.normal(size=(n, dim))])
    return X, m1, m2


def test_duplicates_recovered_exactly(rng):
    distinct = rng.normal(size=(5, 6))
    X = np.repeat(distinct, 40, axis=0)
    d = kmeans_fit(X, n_s=5, seed=1)
    assert d.inertia < 1e-20
    got = sorted_descriptors(d.atoms.T)
    np.testing.assert_allclose(got, sorted_descriptors(distinct), atol=1e-14)


def test_blob_means(rng):
    n, sigma = 300, 0.05
    X, m1, m2 = _blobs(rng, n=n, sigma=sigma)
    d = kmeans_fit(X, n_s=2, seed=0)
    atoms = sorted(d.atoms.T, key=lambda a: a.sum())
    truth = [X[:n].mean(axis=0), X[n:].mean(axis=0)]
    truth.sort(key=lambda a: a.sum())
    for a, t in zip(atoms, truth):
        np.testing.assert_allclose(a, t, atol=1e-12)
    for a, m in zip(atoms, sorted([m1, m2], key=lambda a: a.sum())):
        assert np.max(np.abs(a - m)) < 3 * 4 * sigma / np.sqrt(n)


def test_deterministic(rng):
    X = rng.random((400, 8))
    a = kmeans_fit(X, n_s=20, seed=9)
    b = kmeans_fit(X, n_s=20, seed=9)
    assert a == b
    assert a.inertia_history == b.inertia_history


def test_permutation_invariant(rng):
    X = rng.random((400, 8))
    a = kmeans_fit(X, n_s=15, seed=2)
    b = kmeans_fit(X[rng.permutation(400)], n_s=15, seed=2)
    assert a == b
    assert abs(a.inertia - b.inertia) <= 1e-6 * a.inertia


def test_inertia_non_increasing_and_means(rng):
    X = rng.random((500, 12))
    d = kmeans_fit(X, n_s=30, seed=4)
    h = np.array(d.inertia_history)
    assert np.all(np.diff(h) <= 1e-9 * h[:-1])
    Xs = sorted_descriptors(X)
    for k in range(d.n_s):
        np.testing.assert_allclose(d.atoms[:, k], Xs[d.labels == k].mean(axis=0), atol=1e-9)


def test_atoms_distinct_and_finite(rng):
    X = np.repeat(rng.random((40, 4)), 3, axis=0)
    d = kmeans_fit(X, n_s=40, seed=0)
    assert d.atoms.shape == (4, 40)
    assert np.all(np.isfinite(d.atoms))
    diffs = np.linalg.norm(d.atoms[:, :, None] - d.atoms[:, None, :], axis=0)
    assert np.min(diffs + np.eye(40)) > 1e-12


def test_too_few(rng):
    with pytest.raises(TooFewDescriptorsError):
        kmeans_fit(rng.random((5, 3)), n_s=6)
    with pytest.raises(TooFewDescriptorsError):
        kmeans_fit(np.ones((50, 3)), n_s=2)


def test_non_finite():
    X = np.ones((10, 2))
    X[3, 1] = np.nan
    with pytest.raises(NonFiniteError):
        kmeans_fit(X, n_s=2)


def test_save_load(tmp_path, rng):
    d = kmeans_fit(rng.random((100, 6)), n_s=10, seed=0, digest=config_digest("a=1\n"))
    path = tmp_path / "d.stld"
    save_dictionary(d, path)
    back = load_dictionary(path)
    assert back == d
    data = bytearray(path.read_bytes())
    data[40] ^= 1
    path.write_bytes(bytes(data))
    with pytest.raises(ChecksumMismatchError):
        load_dictionary(path)
