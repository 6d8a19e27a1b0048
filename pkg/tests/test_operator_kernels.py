import numpy as np
import pytest

from gradmatch.exceptions import ConfigurationError, ValidationError
from gradmatch.kernels import GaussianKernel
from gradmatch.operator_kernels import (
    FAMILIES,
    OperatorKernel,
    StructureMatrix,
    block_gram,
    cross_block_gram,
    eval_block,
)


def _kernel(family, gamma, p, rng):
    if family == "transformable":
        return OperatorKernel(family, gamma)
    B = rng.normal(size=(p, p))
    return OperatorKernel(family, gamma, B @ B.T)


def _naive_gram(kernel, A, B):
    p = A.shape[1]
    out = np.zeros((A.shape[0] * p, B.shape[0] * p))
    for l, x in enumerate(A):
        for s, z in enumerate(B):
            k = np.exp(-kernel.gamma * np.sum((x - z) ** 2))
            dc = k * kernel.C if kernel.C is not None else None
            tf = np.array([[np.exp(-kernel.gamma * (x[i] - z[j]) ** 2) for j in range(p)] for i in range(p)])
            blk = {"decomposable": dc, "transformable": tf, "hadamard": None}[kernel.family]
            if blk is None:
                blk = dc * tf
            out[l * p:(l + 1) * p, s * p:(s + 1) * p] = blk
    return out


def test_structure_matrix_validation():
    with pytest.raises(ValidationError):
        StructureMatrix([[1, 2], [0, 1]])
    with pytest.raises(ValidationError):
        StructureMatrix([[1, 0], [0, -1]])
    with pytest.raises(ValidationError):
        StructureMatrix(np.ones((2, 3)))
    assert StructureMatrix.identity(3) == StructureMatrix(np.eye(3))
    assert StructureMatrix(2.0).p == 1


def test_family_configuration():
    with pytest.raises(ConfigurationError):
        OperatorKernel("decomposable", 1.0)
    with pytest.raises(ConfigurationError):
        OperatorKernel("hadamard", 1.0)
    with pytest.raises(ConfigurationError):
        OperatorKernel("transformable", 1.0, np.eye(2))
    with pytest.raises(ConfigurationError):
        OperatorKernel("polynomial", 1.0, np.eye(2))


def test_decomposable_examples(rng):
    C = np.array([[2.0, 0.5], [0.5, 1.0]])
    k = OperatorKernel("decomposable", 0.7, C)
    x, z = rng.normal(size=2), rng.normal(size=2)
    np.testing.assert_array_equal(eval_block(k, x, x), C)
    ki = OperatorKernel("decomposable", 0.7, np.eye(2))
    np.testing.assert_allclose(eval_block(ki, x, z), GaussianKernel(0.7)(x, z) * np.eye(2), atol=1e-15)


def test_transformable_example():
    e = np.exp(-1.0)
    K = eval_block(OperatorKernel("transformable", 1.0), [0.0, 1.0], [1.0, 0.0])
    np.testing.assert_allclose(K, [[e, 1.0], [1.0, e]], atol=1e-15)


def test_hadamard_is_entrywise_product(rng):
    C = np.array([[1.0, 0.3], [0.3, 2.0]])
    x, z = rng.normal(size=2), rng.normal(size=2)
    had = eval_block(OperatorKernel("hadamard", 0.4, C), x, z)
    dc = eval_block(OperatorKernel("decomposable", 0.4, C), x, z)
    tf = eval_block(OperatorKernel("transformable", 0.4), x, z)
    np.testing.assert_array_equal(had, dc * tf)


@pytest.mark.parametrize("family", FAMILIES)
def test_hermitian(family, rng):
    k = _kernel(family, 0.6, 3, rng)
    for _ in range(10):
        x, z = rng.normal(size=3), rng.normal(size=3)
        np.testing.assert_allclose(eval_block(k, x, z), eval_block(k, z, x).T, atol=1e-12)


@pytest.mark.parametrize("family", FAMILIES)
def test_block_gram_matches_naive(family, rng):
    k = _kernel(family, 0.5, 2, rng)
    X = rng.normal(size=(5, 2))
    np.testing.assert_allclose(block_gram(k, X), _naive_gram(k, X, X), atol=1e-12)
    Y = rng.normal(size=(3, 2))
    np.testing.assert_allclose(cross_block_gram(k, X, Y), _naive_gram(k, X, Y), atol=1e-12)
    np.testing.assert_allclose(cross_block_gram(k, X, Y), cross_block_gram(k, Y, X).T, atol=1e-12)
    np.testing.assert_allclose(cross_block_gram(k, X[:1], Y[:1]), eval_block(k, X[0], Y[0]), atol=1e-15)


@pytest.mark.parametrize("family", FAMILIES)
def test_block_gram_psd(family, rng):
    for _ in range(10):
        p, m = rng.integers(1, 6), rng.integers(1, 11)
        k = _kernel(family, rng.uniform(0.05, 3), p, rng)
        G = block_gram(k, rng.normal(size=(m, p)))
        np.testing.assert_array_equal(G, G.T)
        assert np.linalg.eigvalsh(G).min() >= -1e-8 * np.trace(G)


def test_m1_decomposable_is_C():
    C = np.array([[3.0, 1.0], [1.0, 2.0]])
    np.testing.assert_array_equal(block_gram(OperatorKernel("decomposable", 1.0, C), [[0.2, 0.1]]), C)


def test_dimension_checks():
    k = OperatorKernel("decomposable", 1.0, np.eye(2))
    with pytest.raises(ValidationError):
        eval_block(k, [0, 0, 0], [0, 0, 0])
    with pytest.raises(ValidationError):
        eval_block(k, [0, 0], [0, 0, 0])
    with pytest.raises(ValidationError):
        cross_block_gram(k, np.zeros((2, 2)), np.zeros((2, 3)))
