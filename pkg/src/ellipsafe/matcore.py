"""Dense symmetric-matrix primitives for the SDP solver and verification oracles.

Everything here operates on small dense symmetric matrices (the largest blocks
in this package are ~15x15), so the implementations favour transparent and
deterministic algorithms: a pivot-indexed Cholesky, a cyclic Jacobi
eigensolver, and triangular solves built on the Cholesky factor. Tolerances
are expressed relative to 1 + ||S||_F so they behave sanely near zero
matrices.

All values are immutable after construction and every operation is pure, so
concurrent use needs no locking.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "DimensionMismatch",
    "NoConvergence",
    "NotPositiveDefinite",
    "SymMatrix",
    "cholesky",
    "min_eigenvalue",
    "solve_spd",
    "sym_eig",
]


class NotPositiveDefinite(Exception):
    """A factorization pivot was <= 0: the matrix is not positive definite."""

    def __init__(self, pivot_index: int):
        super().__init__(f"not positive definite: pivot {pivot_index} is <= 0")
        self.pivot_index = pivot_index


class NoConvergence(Exception):
    """The Jacobi sweep budget ran out before the off-diagonal norm vanished."""

    def __init__(self, iterations: int):
        super().__init__(f"eigensolver did not converge within {iterations} sweeps")
        self.iterations = iterations


class DimensionMismatch(ValueError):
    """Operands have inconsistent shapes."""


class SymMatrix:
    """Immutable dense symmetric matrix.

    Construction symmetrizes the input (S <- (S + S^T) / 2), so the stored
    entries satisfy ``entries[i, j] == entries[j, i]`` exactly. Full dense
    storage: the problems served here are far too small for packed formats
    to matter.
    """

    __slots__ = ("_mat",)

    def __init__(self, entries) -> None:
        mat = np.array(entries, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {mat.shape}")
        if mat.shape[0] < 1:
            raise DimensionMismatch("dimension must be at least 1")
        if not np.all(np.isfinite(mat)):
            raise ValueError("matrix entries must all be finite")
        mat = 0.5 * (mat + mat.T)
        mat.flags.writeable = False
        self._mat = mat

    @property
    def mat(self) -> np.ndarray:
        """Read-only (dim, dim) float64 view of the entries."""
        return self._mat

    @property
    def dim(self) -> int:
        return self._mat.shape[0]

    @staticmethod
    def identity(dim: int) -> "SymMatrix":
        return SymMatrix(np.eye(dim))

    @staticmethod
    def diagonal(values) -> "SymMatrix":
        return SymMatrix(np.diag(np.asarray(values, dtype=float)))

    def __repr__(self) -> str:
        return f"SymMatrix({self._mat.tolist()!r})"


def _as_symmetric(s, what: str = "matrix") -> np.ndarray:
    """Coerce a SymMatrix or array-like to a symmetric float64 array."""
    if isinstance(s, SymMatrix):
        return s.mat
    arr = np.asarray(s, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatch(f"{what} must be square, got shape {arr.shape}")
    skew = np.max(np.abs(arr - arr.T)) if arr.size else 0.0
    if skew > 1e-8 * (1.0 + float(np.linalg.norm(arr))):
        raise DimensionMismatch(f"{what} is not symmetric (max asymmetry {skew:.3e})")
    return 0.5 * (arr + arr.T)


def cholesky(s) -> np.ndarray:
    """Lower-triangular L with S = L L^T.

    Raises NotPositiveDefinite with the index of the first non-positive pivot,
    which identifies the leading principal minor that failed.
    """
    a = _as_symmetric(s, "cholesky input")
    n = a.shape[0]
    lower = np.zeros((n, n))
    for j in range(n):
        pivot = a[j, j] - lower[j, :j] @ lower[j, :j]
        if not pivot > 0.0:  # also catches NaN
            raise NotPositiveDefinite(j)
        ljj = np.sqrt(pivot)
        lower[j, j] = ljj
        if j + 1 < n:
            lower[j + 1 :, j] = (a[j + 1 :, j] - lower[j + 1 :, :j] @ lower[j, :j]) / ljj
    return lower


def sym_eig(s, max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Full symmetric eigendecomposition by cyclic Jacobi rotations.

    Returns (eigenvalues ascending, eigenvectors as orthonormal columns).
    Jacobi is unconditionally stable for dense symmetric matrices and, with a
    fixed sweep order, fully deterministic; it converges quadratically, so the
    sweep budget is generous for the matrix sizes used here.
    """
    a = _as_symmetric(s, "sym_eig input").copy()
    n = a.shape[0]
    vecs = np.eye(n)
    scale = 1.0 + float(np.linalg.norm(a))
    stop = 1e-14 * scale

    def off_norm(mat: np.ndarray) -> float:
        # summed directly over off-diagonal entries; the trace-subtraction
        # shortcut cancels catastrophically once the entries are tiny
        off = mat.copy()
        np.fill_diagonal(off, 0.0)
        return float(np.linalg.norm(off))

    converged = False
    for _ in range(max_sweeps):
        if off_norm(a) <= stop:
            converged = True
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-18 * scale:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(1.0 + theta * theta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                sn = t * c
                # two-sided rotation in the (p, q) plane: A <- J^T A J
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - sn * col_q
                a[:, q] = sn * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - sn * row_q
                a[q, :] = sn * row_p + c * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                vec_p = vecs[:, p].copy()
                vec_q = vecs[:, q].copy()
                vecs[:, p] = c * vec_p - sn * vec_q
                vecs[:, q] = sn * vec_p + c * vec_q
    else:
        if off_norm(a) > 1e-11 * scale:
            raise NoConvergence(max_sweeps)
        converged = True
    if not converged:  # pragma: no cover - loop either breaks or raises
        raise NoConvergence(max_sweeps)
    eigvals = np.diag(a).copy()
    order = np.argsort(eigvals, kind="stable")
    eigvals = eigvals[order]
    vecs = vecs[:, order]
    # deterministic sign convention: largest-magnitude component positive
    for k in range(n):
        pivot = int(np.argmax(np.abs(vecs[:, k])))
        if vecs[pivot, k] < 0.0:
            vecs[:, k] = -vecs[:, k]
    return eigvals, vecs


def min_eigenvalue(s) -> float:
    """Smallest eigenvalue: the first entry of sym_eig's ascending spectrum."""
    return float(sym_eig(s)[0][0])


def solve_spd(s, rhs) -> np.ndarray:
    """Solve S X = rhs for symmetric positive definite S via Cholesky.

    rhs may be a vector (n,) or a matrix (n, k); the result has the same
    shape. NotPositiveDefinite propagates from the factorization.
    """
    lower = cholesky(s)
    n = lower.shape[0]
    b = np.asarray(rhs, dtype=float)
    vector_rhs = b.ndim == 1
    if vector_rhs:
        b = b[:, None]
    if b.ndim != 2 or b.shape[0] != n:
        raise DimensionMismatch(f"rhs has shape {np.shape(rhs)}, expected leading dim {n}")
    y = np.zeros_like(b)
    for i in range(n):
        y[i] = (b[i] - lower[i, :i] @ y[:i]) / lower[i, i]
    x = np.zeros_like(b)
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - lower[i + 1 :, i] @ x[i + 1 :]) / lower[i, i]
    return x[:, 0] if vector_rhs else x
