"""Generalized low-rank approximation of a matrix collection.

Finds shared column-orthonormal bases A (p x p0) and B (q x q0)
maximizing sum_i ||A' X_i B||_F^2 by alternating eigendecompositions:
with B fixed, A spans the top eigenvectors of sum_i X_i B B' X_i';
with A fixed, B spans the top eigenvectors of sum_i X_i' A A' X_i.
The captured-variation objective is nondecreasing across sweeps.

Matrices are centered by their per-entry sample mean before fitting
(disable with center=False); the centering matrix travels with the
bases so projections at predict time reuse it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .errors import ValidationError

__all__ = ["GlramBases", "glram_fit", "glram_project", "reconstruction_error"]


@dataclass(frozen=True)
class GlramBases:
    A: np.ndarray  # p x p0, orthonormal columns
    B: np.ndarray  # q x q0, orthonormal columns
    centering: np.ndarray  # p x q matrix subtracted before projection
    objective_trace: tuple[float, ...]

    def __post_init__(self):
        for name, m in (("A", self.A), ("B", self.B)):
            g = m.T @ m
            if not np.allclose(g, np.eye(m.shape[1]), atol=1e-10):
                raise ValidationError(f"{name} columns are not orthonormal")
        if self.centering.shape != (self.A.shape[0], self.B.shape[0]):
            raise ValidationError("centering matrix shape does not match bases")


def _top_eigvecs(scatter: np.ndarray, k: int) -> np.ndarray:
    dim = scatter.shape[0]
    _, vecs = eigh(scatter, subset_by_index=(dim - k, dim - 1))
    vecs = vecs[:, ::-1]  # descending eigenvalue order
    # sign convention: largest-magnitude entry of each column positive
    picks = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[picks, np.arange(k)])
    signs[signs == 0] = 1.0
    return vecs * signs


def glram_fit(
    matrices: np.ndarray,
    p0: int,
    q0: int,
    tol: float = 1e-8,
    max_iter: int = 200,
    center: bool = True,
) -> GlramBases:
    """Alternating maximization of the captured variation.

    ``matrices`` is (n, p, q).  B starts from the leading q0 identity
    columns, so runs are deterministic.  Iteration stops when the
    relative objective change drops below ``tol``.
    """
    x = np.asarray(matrices, dtype=float)
    if x.ndim != 3:
        raise ValidationError(f"matrices must be (n, p, q), got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("matrices contain non-finite entries")
    n, p, q = x.shape
    if not (1 <= p0 <= p and 1 <= q0 <= q):
        raise ValidationError(f"(p0, q0)=({p0}, {q0}) out of range for (p, q)=({p}, {q})")
    mean = x.mean(axis=0) if center else np.zeros((p, q))
    x = x - mean

    b = np.eye(q)[:, :q0]
    a = np.empty((p, p0))
    trace: list[float] = []
    prev = -np.inf
    for _ in range(max_iter):
        xb = x @ b                                    # (n, p, q0)
        a = _top_eigvecs(np.einsum("nik,njk->ij", xb, xb), p0)
        ax = np.einsum("pa,npq->naq", a, x)           # (n, p0, q) = A' X_i
        b = _top_eigvecs(np.einsum("nki,nkj->ij", ax, ax), q0)
        core = ax @ b                                 # (n, p0, q0) = A' X_i B
        objective = float(np.einsum("nij,nij->", core, core))
        trace.append(objective)
        if prev > -np.inf and abs(objective - prev) <= tol * max(1.0, abs(prev)):
            break
        prev = objective
    return GlramBases(A=a, B=b, centering=mean, objective_trace=tuple(trace))


def glram_project(bases: GlramBases, x: np.ndarray) -> np.ndarray:
    """A' (x - centering) B for one matrix or a stack of them."""
    x = np.asarray(x, dtype=float)
    if x.shape[-2:] != bases.centering.shape:
        raise ValidationError(
            f"matrix shape {x.shape} does not match bases input {bases.centering.shape}")
    xc = x - bases.centering
    return bases.A.T @ xc @ bases.B


def reconstruction_error(bases: GlramBases, matrices: np.ndarray) -> float:
    """sum_i ||X_i - A (A' X_i B) B'||_F^2 on the centered matrices.

    Equals the total centered energy minus the captured variation, so it
    is nonincreasing in (p0, q0).
    """
    x = np.asarray(matrices, dtype=float)
    if x.ndim != 3 or x.shape[-2:] != bases.centering.shape:
        raise ValidationError("matrices do not match the bases' input shape")
    xc = x - bases.centering
    core = np.einsum("pa,npq,qb->nab", bases.A, xc, bases.B)
    recon = np.einsum("pa,nab,qb->npq", bases.A, core, bases.B)
    return float(np.einsum("nij,nij->", xc - recon, xc - recon))
