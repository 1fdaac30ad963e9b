"""Pointwise Hermitian form primitives.

A real (1,1)-form at a point is carried by the Hermitian matrix of its
coefficients in a fixed coordinate frame.  This module provides that
carrier, positive definite metrics, the generalized eigenproblem
``det(T - lambda * omega) = 0`` whose solutions are the eigenvalues of a
form relative to a metric, and the algebraic passage from a real Hessian
in coordinates ``x_1, y_1, ..., x_n, y_n`` to the complex Hessian
``u_{j kbar} = d2u / dz_j dzbar_k``.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg

from .errors import DimensionMismatchError, NotHermitianError, NotPositiveDefiniteError

# Hermitian-symmetry defect tolerated on construction (relative to scale).
HERMITIAN_TOL = 1e-14
# Real-symmetry defect tolerated on real Hessian input.
SYMMETRY_TOL = 1e-10
# A metric is rejected when its smallest eigenvalue is below this fraction
# of the largest one.
POSDEF_TOL = 1e-12


def _as_square_complex(entries) -> np.ndarray:
    a = np.array(entries, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionMismatchError(f"expected a square matrix, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class HermitianMatrix:
    """Coefficient matrix of a real (1,1)-form in a fixed frame."""

    entries: np.ndarray

    def __post_init__(self):
        a = _as_square_complex(self.entries)
        scale = max(1.0, float(np.abs(a).max()))
        defect = float(np.abs(a - a.conj().T).max())
        if defect > HERMITIAN_TOL * scale:
            raise NotHermitianError(
                f"Hermitian symmetry defect {defect:.3e} exceeds tolerance"
            )
        a = 0.5 * (a + a.conj().T)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def diagonal(cls, values) -> "HermitianMatrix":
        return cls(np.diag(np.asarray(values, dtype=float)))

    @classmethod
    def identity(cls, n: int) -> "HermitianMatrix":
        return cls(np.eye(n))

    def scaled(self, alpha: float) -> "HermitianMatrix":
        return HermitianMatrix(float(alpha) * self.entries)

    def plus(self, other: "HermitianMatrix") -> "HermitianMatrix":
        if self.dim != other.dim:
            raise DimensionMismatchError("cannot add forms of different dimension")
        return HermitianMatrix(self.entries + other.entries)


@dataclass(frozen=True)
class MetricMatrix:
    """Positive definite Hermitian matrix of a metric in a fixed frame."""

    base: HermitianMatrix

    def __post_init__(self):
        w = np.linalg.eigvalsh(self.base.entries)
        if w[-1] <= 0 or w[0] <= POSDEF_TOL * w[-1]:
            raise NotPositiveDefiniteError(
                f"metric eigenvalues [{w[0]:.3e}, {w[-1]:.3e}] fail the "
                f"positive definiteness threshold"
            )

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def entries(self) -> np.ndarray:
        return self.base.entries

    @cached_property
    def cholesky(self) -> np.ndarray:
        """Lower triangular C with entries = C @ C^H."""
        return np.linalg.cholesky(self.base.entries)

    @classmethod
    def identity(cls, n: int) -> "MetricMatrix":
        return cls(HermitianMatrix.identity(n))

    @classmethod
    def diagonal(cls, values) -> "MetricMatrix":
        return cls(HermitianMatrix.diagonal(values))


@dataclass(frozen=True)
class RelativeSpectrum:
    """Eigenvalues of a form relative to a metric, with diagonalizing basis.

    The basis columns b_k satisfy ``basis^H omega basis = Id`` and
    ``basis^H T basis = diag(lambdas)``, with lambdas sorted ascending.
    """

    lambdas: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)


def reduce_to_metric_frame(T_entries: np.ndarray, omega: MetricMatrix) -> np.ndarray:
    """Return C^{-1} T C^{-H} for the Cholesky factor C of the metric.

    The ordinary Hermitian spectrum of the result equals the spectrum of T
    relative to the metric.
    """
    C = omega.cholesky
    Y = scipy.linalg.solve_triangular(C, T_entries, lower=True)
    M = scipy.linalg.solve_triangular(C, Y.conj().T, lower=True).conj().T
    return 0.5 * (M + M.conj().T)


def relative_eigenvalues(T: HermitianMatrix, omega: MetricMatrix) -> RelativeSpectrum:
    """Solve the pencil det(T - lambda*omega) = 0 via Cholesky reduction."""
    if T.dim != omega.dim:
        raise DimensionMismatchError(
            f"form has dimension {T.dim}, metric has dimension {omega.dim}"
        )
    M = reduce_to_metric_frame(T.entries, omega)
    lam, V = np.linalg.eigh(M)
    basis = scipy.linalg.solve_triangular(omega.cholesky.conj().T, V, lower=False)
    return RelativeSpectrum(lambdas=lam, basis=basis)


def complex_hessian_point(second_derivs) -> HermitianMatrix:
    """Complex Hessian u_{j kbar} from a real Hessian in x_1,y_1,...,x_n,y_n.

    Uses d/dz = (d/dx - i d/dy)/2, so
    ``u_{j kbar} = (u_{x_j x_k} + u_{y_j y_k} + i(u_{x_j y_k} - u_{y_j x_k})) / 4``.
    The output is Hermitian by construction.
    """
    S = np.asarray(second_derivs, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {S.shape}")
    if S.shape[0] % 2 != 0:
        raise DimensionMismatchError("real Hessian must have even size 2n")
    scale = max(1.0, float(np.abs(S).max()))
    if float(np.abs(S - S.T).max()) > SYMMETRY_TOL * scale:
        raise NotHermitianError("real Hessian is not symmetric within tolerance")
    xx = S[0::2, 0::2]
    yy = S[1::2, 1::2]
    xy = S[0::2, 1::2]
    yx = S[1::2, 0::2]
    H = 0.25 * (xx + yy + 1j * (xy - yx))
    return HermitianMatrix(0.5 * (H + H.conj().T))


def matrix_to_json(mat) -> dict:
    """Structured-text form of a (Hermitian or metric) matrix."""
    e = mat.entries
    return {"n": int(e.shape[0]), "re": e.real.tolist(), "im": e.imag.tolist()}


def matrix_from_json(data: dict) -> HermitianMatrix:
    n = int(data["n"])
    re = np.asarray(data["re"], dtype=float)
    im = np.asarray(data.get("im", np.zeros((n, n))), dtype=float)
    if re.shape != (n, n) or im.shape != (n, n):
        raise DimensionMismatchError("matrix payload shape does not match n")
    return HermitianMatrix(re + 1j * im)
