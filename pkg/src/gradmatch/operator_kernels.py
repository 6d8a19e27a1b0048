"""Matrix-valued kernels on R^p and their block Gram matrices.

Three families are supported:

* ``decomposable``:  K(x, z) = k(x, z) C
* ``transformable``: K(x, z)[i, j] = k(x_i, z_j), the scalar kernel applied
  to single coordinates
* ``hadamard``:      entrywise product of the two above

A block Gram matrix over points ``x_1..x_m`` is the ``(m p, m p)`` matrix
whose ``(l, s)`` block of size ``p x p`` is ``K(x_l, x_s)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, ValidationError
from .kernels import GaussianKernel

__all__ = [
    "FAMILIES",
    "StructureMatrix",
    "OperatorKernel",
    "eval_block",
    "block_gram",
    "cross_block_gram",
]

FAMILIES = ("decomposable", "transformable", "hadamard")


@dataclass(frozen=True, eq=False)
class StructureMatrix:
    """Symmetric positive semi-definite ``p x p`` output-dependency matrix."""

    C: np.ndarray

    def __post_init__(self):
        C = np.array(self.C, dtype=float)
        if C.ndim == 0:
            C = C.reshape(1, 1)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ValidationError(f"structure matrix must be square, got shape {C.shape}")
        if not np.all(np.isfinite(C)):
            raise ValidationError("structure matrix must be finite")
        if not np.allclose(C, C.T, rtol=0, atol=1e-12):
            raise ValidationError("structure matrix must be symmetric")
        C = 0.5 * (C + C.T)
        eig_min = np.linalg.eigvalsh(C)[0]
        if eig_min < -1e-10 * max(np.trace(C), 1.0):
            raise ValidationError(
                f"structure matrix must be PSD, smallest eigenvalue is {eig_min:.3g}"
            )
        C.flags.writeable = False
        object.__setattr__(self, "C", C)

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def __eq__(self, other):
        if not isinstance(other, StructureMatrix):
            return NotImplemented
        return np.array_equal(self.C, other.C)

    def __hash__(self):
        return hash(self.C.tobytes())

    @classmethod
    def identity(cls, p: int) -> "StructureMatrix":
        return cls(np.eye(p))


def _coerce_structure(C):
    if C is None or isinstance(C, StructureMatrix):
        return C
    return StructureMatrix(C)


@dataclass(frozen=True)
class OperatorKernel:
    """A matrix-valued kernel built on a Gaussian scalar kernel.

    Parameters
    ----------
    family : {"decomposable", "transformable", "hadamard"}
    gamma : float
        Bandwidth of the underlying Gaussian kernel.
    structure : StructureMatrix or array-like, optional
        Required for the decomposable and Hadamard families, forbidden for
        the transformable one.
    """

    family: str = "decomposable"
    gamma: float = 1.0
    structure: StructureMatrix | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(
                f"unknown kernel family {self.family!r}; expected one of {FAMILIES}"
            )
        structure = _coerce_structure(self.structure)
        if self.family == "transformable" and structure is not None:
            raise ConfigurationError("the transformable kernel takes no structure matrix")
        if self.family != "transformable" and structure is None:
            raise ConfigurationError(f"the {self.family} kernel needs a structure matrix")
        object.__setattr__(self, "structure", structure)
        object.__setattr__(self, "gamma", GaussianKernel(self.gamma).gamma)

    @property
    def scalar(self) -> GaussianKernel:
        return GaussianKernel(self.gamma)

    @property
    def C(self) -> np.ndarray | None:
        return None if self.structure is None else self.structure.C

    def with_structure(self, C) -> "OperatorKernel":
        return OperatorKernel(self.family, self.gamma, _coerce_structure(C))

    def _check_dim(self, p: int) -> None:
        if self.structure is not None and self.structure.p != p:
            raise ValidationError(
                f"state dimension {p} does not match the {self.structure.p}x{self.structure.p} "
                "structure matrix"
            )

    def __call__(self, x, z) -> np.ndarray:
        return eval_block(self, x, z)

    def gram(self, points_a, points_b=None) -> np.ndarray:
        if points_b is None:
            return block_gram(self, points_a)
        return cross_block_gram(self, points_a, points_b)


def _transformable_blocks(gamma: float, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    # (m_a, p, m_b, p) with entry [l, i, s, j] = k(A[l, i], B[s, j])
    d = A[:, :, None, None] - B[None, None, :, :]
    return np.exp(-gamma * d * d)


def eval_block(kernel: OperatorKernel, x, z) -> np.ndarray:
    """The ``p x p`` matrix ``K(x, z)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if x.ndim != 1 or x.shape != z.shape:
        raise ValidationError(f"expected two p-vectors, got shapes {x.shape} and {z.shape}")
    kernel._check_dim(x.shape[0])
    if kernel.family == "decomposable":
        return kernel.scalar(x, z) * kernel.C
    tf = np.exp(-kernel.gamma * (x[:, None] - z[None, :]) ** 2)
    if kernel.family == "transformable":
        return tf
    return kernel.scalar(x, z) * kernel.C * tf


def _as_point_array(points) -> np.ndarray:
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[None, :]
    if P.ndim != 2 or P.shape[0] < 1:
        raise ValidationError(f"expected a non-empty (m, p) array of points, got shape {P.shape}")
    return P


def cross_block_gram(kernel: OperatorKernel, points_a, points_b) -> np.ndarray:
    """``(m_a p, m_b p)`` matrix with block ``(l, s) = K(points_a[l], points_b[s])``."""
    A = _as_point_array(points_a)
    B = _as_point_array(points_b)
    if A.shape[1] != B.shape[1]:
        raise ValidationError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    (ma, p), mb = A.shape, B.shape[0]
    kernel._check_dim(p)
    if kernel.family == "decomposable":
        return np.kron(kernel.scalar.gram(A, B), kernel.C)
    tf = _transformable_blocks(kernel.gamma, A, B).reshape(ma * p, mb * p)
    if kernel.family == "transformable":
        return tf
    return np.kron(kernel.scalar.gram(A, B), kernel.C) * tf


def block_gram(kernel: OperatorKernel, points) -> np.ndarray:
    """Symmetric ``(m p, m p)`` block Gram matrix of ``kernel`` on ``points``."""
    G = cross_block_gram(kernel, points, points)
    return 0.5 * (G + G.T)
