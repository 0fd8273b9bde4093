"""Small shared linear-algebra helpers used across the package."""

import numpy as np


def sym(M):
    """Exactly symmetric part of a square matrix."""
    return (M + M.T) / 2.0


def frob(M):
    return float(np.linalg.norm(M, "fro"))


def logdet_pd(M):
    """log(det(M)) for symmetric positive definite M.

    Raises ValueError if M is not positive definite (never returns NaN).
    """
    try:
        C = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise ValueError("matrix is not positive definite (Cholesky failed)")
    return 2.0 * float(np.sum(np.log(np.diag(C))))


def psd_factor(Sigma, tol=1e-10):
    """Factor A with A @ A.T = Sigma, tolerant of semidefinite input.

    Eigenvalues in [-tol * max_eig, 0) are clipped to zero; anything more
    negative raises. Cholesky is deliberately avoided so that numerically
    singular conditional covariances remain factorable.
    """
    Sigma = sym(np.asarray(Sigma, dtype=float))
    w, Q = np.linalg.eigh(Sigma)
    floor = -tol * max(w[-1], 0.0) if w.size else 0.0
    if w.size and w[0] < floor - 1e-300:
        raise ValueError(
            "matrix is not positive semidefinite: min eigenvalue %g" % w[0]
        )
    w = np.clip(w, 0.0, None)
    return Q * np.sqrt(w)


def principal_angles(B1, B2):
    """Principal angles (radians) between the column spaces of B1 and B2.

    Columns of each basis must be orthonormal. Singular values are clamped
    to [0, 1] before arccos for numerical safety at angle 0.
    """
    B1 = np.atleast_2d(np.asarray(B1, dtype=float))
    B2 = np.atleast_2d(np.asarray(B2, dtype=float))
    if B1.shape[1] == 0 or B2.shape[1] == 0:
        return np.zeros(0)
    s = np.linalg.svd(B1.T @ B2, compute_uv=False)
    return np.arccos(np.clip(s, 0.0, 1.0))
