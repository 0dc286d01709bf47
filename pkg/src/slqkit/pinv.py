"""Moore-Penrose pseudoinverse with explicit rank control, plus the
regularized-limit construction and the solvability predicates built on it.

The pseudoinverse is SVD-based: singular values at or below the cutoff are
treated as exact zeros.  ``pinv_limit`` computes the Tikhonov approximation
``(M^T M + delta I)^{-1} M^T``, which converges to the pseudoinverse as
``delta -> 0+``; both routes are kept available so each can check the other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, SlqError

__all__ = ["PinvResult", "pinv", "pinv_limit", "range_inclusion", "psd_check"]


@dataclass(frozen=True)
class PinvResult:
    """Outcome of a pseudoinverse computation.

    Attributes
    ----------
    pinv : numpy.ndarray
        The pseudoinverse, shape ``(cols, rows)`` of the input.
    rank : int
        Number of singular values strictly above the cutoff.
    singular_values : numpy.ndarray
        All singular values, descending.
    tol_used : float
        The cutoff actually applied.
    """

    pinv: np.ndarray = field(repr=False)
    rank: int
    singular_values: np.ndarray = field(repr=False)
    tol_used: float


def _as_matrix(M, name: str) -> np.ndarray:
    A = np.asarray(M, dtype=np.float64)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    elif A.ndim == 1:
        A = A.reshape(-1, 1)
    if A.ndim != 2:
        raise InvalidArgumentError(f"{name} must be at most 2-dimensional, got shape {A.shape}")
    if A.size == 0:
        raise InvalidArgumentError(f"{name} must be non-empty")
    if not np.isfinite(A).all():
        raise InvalidArgumentError(f"{name} contains non-finite entries")
    return A


def pinv(M, tol: float | None = None) -> PinvResult:
    """SVD pseudoinverse with an explicit singular-value cutoff.

    Parameters
    ----------
    M : array_like
        Real matrix (scalars and vectors are promoted to 2-d).
    tol : float, optional
        Absolute singular-value cutoff.  Defaults to
        ``max(rows, cols) * machine_eps * sigma_max``, the conventional
        rank-revealing threshold.  Singular values ``<= tol`` are dropped.

    Returns
    -------
    PinvResult
    """
    A = _as_matrix(M, "M")
    if tol is not None:
        tol = float(tol)
        if not np.isfinite(tol) or tol < 0:
            raise InvalidArgumentError(f"tol must be a finite non-negative real, got {tol!r}")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    smax = s[0] if s.size else 0.0
    tol_used = tol if tol is not None else max(A.shape) * np.finfo(np.float64).eps * smax
    keep = s > tol_used
    rank = int(np.count_nonzero(keep))
    inv_s = np.zeros_like(s)
    inv_s[keep] = 1.0 / s[keep]
    Ainv = (Vt.T * inv_s) @ U.T
    return PinvResult(pinv=Ainv, rank=rank, singular_values=s, tol_used=float(tol_used))


def pinv_limit(M, delta: float) -> np.ndarray:
    """Tikhonov-regularized pseudoinverse ``(M^T M + delta I)^{-1} M^T``.

    Converges to ``pinv(M)`` monotonically as ``delta -> 0+``.  Raises
    :class:`SlqError` if the (theoretically SPD) normal-equation matrix fails
    to factorize numerically.
    """
    A = _as_matrix(M, "M")
    delta = float(delta)
    if not np.isfinite(delta) or delta <= 0:
        raise InvalidArgumentError(f"delta must be a finite positive real, got {delta!r}")
    n = A.shape[1]
    G = A.T @ A + delta * np.eye(n)
    try:
        return np.linalg.solve(G, A.T)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
        raise SlqError(f"regularized normal equations failed to factorize: {exc}") from exc


def _symmetrize_checked(K, tol: float, name: str) -> np.ndarray:
    A = _as_matrix(K, name)
    if A.shape[0] != A.shape[1]:
        raise InvalidArgumentError(f"{name} must be square, got shape {A.shape}")
    scale = 1.0 + np.abs(A).max()
    asym = np.abs(A - A.T).max()
    if asym > tol * scale:
        raise InvalidArgumentError(
            f"{name} is not symmetric within tolerance (max asymmetry {asym:.3e})"
        )
    return 0.5 * (A + A.T)


def range_inclusion(K, L, tol: float = 1e-8) -> bool:
    """Check that the columns of ``L`` lie in the range of symmetric ``K``.

    Uses the projector residual ``||(I - K K^+) L||_F <= tol * (1 + ||L||_F)``.
    ``K`` is symmetrized if its asymmetry is below ``tol``-scale, otherwise an
    :class:`InvalidArgumentError` is raised.
    """
    tol = float(tol)
    if not np.isfinite(tol) or tol < 0:
        raise InvalidArgumentError(f"tol must be a finite non-negative real, got {tol!r}")
    Ks = _symmetrize_checked(K, tol, "K")
    Lm = _as_matrix(L, "L")
    if Lm.shape[0] != Ks.shape[0]:
        raise InvalidArgumentError(
            f"L has {Lm.shape[0]} rows but K is {Ks.shape[0]}x{Ks.shape[0]}"
        )
    Kd = pinv(Ks).pinv
    resid = np.linalg.norm(Lm - Ks @ (Kd @ Lm))
    return bool(resid <= tol * (1.0 + np.linalg.norm(Lm)))


def psd_check(K, tol: float = 1e-8) -> bool:
    """Check positive semidefiniteness of symmetric ``K`` within ``tol``.

    True iff the smallest eigenvalue is ``>= -tol * (1 + max|K|)``.
    """
    tol = float(tol)
    if not np.isfinite(tol) or tol < 0:
        raise InvalidArgumentError(f"tol must be a finite non-negative real, got {tol!r}")
    Ks = _symmetrize_checked(K, tol, "K")
    lam_min = np.linalg.eigvalsh(Ks)[0]
    return bool(lam_min >= -tol * (1.0 + np.abs(Ks).max()))
