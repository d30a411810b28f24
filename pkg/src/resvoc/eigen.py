"""PCA of RN signatures (no dimensionality reduction).

The PCA coordinates decorrelate the RN coefficients so they can be modeled
with diagonal covariances; decoding maps generated coordinates back to a
unit-energy RN target.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codebook import RN_SIZE
from .errors import InvalidArgument


def jacobi_eigh(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a small symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, vectors)`` with eigenvectors in the columns of
    ``vectors``, unsorted. Sweeps stop once the off-diagonal Frobenius norm
    falls below ``tol`` times the matrix norm.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise InvalidArgument("matrix must be square")
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n), v
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                g = 100.0 * abs(apq)
                if abs(a[p, p]) + g == abs(a[p, p]) and abs(a[q, q]) + g == abs(a[q, q]):
                    a[p, q] = a[q, p] = 0.0
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                elif theta == 0:
                    t = 1.0
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
    return np.diag(a).copy(), v


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self):
        for name in ("mean", "basis", "eigenvalues"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.basis.shape != (RN_SIZE, RN_SIZE) or self.mean.shape != (RN_SIZE,):
            raise InvalidArgument("PCA model must be 20-dimensional")


def fit_pca(points) -> PcaModel:
    """Sample-covariance PCA; rows of ``basis`` sorted by decreasing variance.

    Each eigenvector is oriented so its largest-magnitude component is
    positive.
    """
    x = np.asarray(points, dtype=np.float64).reshape(-1, RN_SIZE)
    if len(x) < RN_SIZE + 1:
        raise InvalidArgument(f"PCA needs at least {RN_SIZE + 1} points, got {len(x)}")
    # Shifting by the first point first keeps identical inputs exactly at
    # zero variance.
    shifted = x - x[0]
    mean = x[0] + shifted.mean(axis=0)
    centred = shifted - shifted.mean(axis=0)
    cov = np.einsum("ni,nj->ij", centred, centred) / (len(x) - 1)
    cov = 0.5 * (cov + cov.T)
    vals, vecs = jacobi_eigh(cov)
    order = np.argsort(-vals, kind="stable")
    vals = np.maximum(vals[order], 0.0)
    basis = vecs[:, order].T.copy()
    for row in basis:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaModel(mean, basis, vals)


def encode(m: PcaModel, x) -> np.ndarray:
    return m.basis @ (np.asarray(x, dtype=np.float64) - m.mean)


def decode(m: PcaModel, y) -> np.ndarray:
    return m.basis.T @ np.asarray(y, dtype=np.float64) + m.mean


def decode_rn(m: PcaModel, y) -> np.ndarray:
    """Decode and project back onto unit energy, ready for selection."""
    x = decode(m, y)
    norm = np.sqrt(np.dot(x, x))
    if norm == 0.0:
        raise InvalidArgument("decoded RN vector is zero")
    return x / norm


def eigen_frame(m: PcaModel, i: int) -> np.ndarray:
    if not 0 <= i < RN_SIZE:
        raise InvalidArgument(f"eigen-frame index must be in [0, {RN_SIZE}), got {i}")
    return m.basis[i].copy()
