"""Stiefel / Grassmann primitives used by the curvilinear search.

Frames are plain ``(p, q)`` float arrays with orthonormal columns. Nothing
here keeps state; random draws take an explicit ``numpy.random.Generator``.
"""

import numpy as np

from .errors import InvalidArgumentError, InvalidDimensionError

ORTHO_TOL = 1e-10


def check_frame(V, tol=ORTHO_TOL):
    """Return ``V`` as a 2-D float array after checking ``V^T V = I``."""
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    if V.ndim != 2:
        raise InvalidDimensionError(f"frame must be 2-D, got shape {V.shape}")
    p, q = V.shape
    if q < 1 or q > p:
        raise InvalidDimensionError(f"frame shape {V.shape} needs 1 <= q <= p")
    dev = orthonormality_error(V)
    if dev > tol:
        raise InvalidDimensionError(f"frame is not orthonormal (|V'V - I| = {dev:.3e})")
    return V


def orthonormality_error(V):
    """Frobenius norm of ``V^T V - I``."""
    V = np.asarray(V, dtype=float)
    return float(np.linalg.norm(V.T @ V - np.eye(V.shape[1])))


def projection(V):
    """Orthogonal projection ``V V^T`` onto the column span of a frame."""
    V = np.asarray(V, dtype=float)
    return V @ V.T


def _qr_positive(A):
    Q, R = np.linalg.qr(A)
    s = np.sign(np.diag(R))
    s[s == 0] = 1.0
    return Q * s


def random_stiefel(p, q, rng):
    """Draw a frame from the invariant (uniform) measure on S(p, q).

    The Q-factor of a standard normal ``p x q`` matrix, with the sign of each
    column fixed so that ``diag(R) >= 0``.
    """
    p, q = int(p), int(q)
    if q < 1 or q > p:
        raise InvalidDimensionError(f"need 1 <= q <= p, got p={p}, q={q}")
    return _qr_positive(rng.standard_normal((p, q)))


def skew_generator(V, G):
    """``W = G V^T - V G^T`` (skew-symmetric by construction)."""
    return G @ V.T - V @ G.T


def cayley_step(V, G, tau):
    """Cayley retraction ``(I + tau W)^{-1} (I - tau W) V``.

    Parameters
    ----------
    V : ndarray (p, q)
        Current frame.
    G : ndarray (p, q)
        Ambient (Euclidean) gradient at ``V``.
    tau : float
        Step size, ``tau >= 0``.
    """
    V = np.asarray(V, dtype=float)
    G = np.asarray(G, dtype=float)
    if V.ndim != 2 or G.shape != V.shape:
        raise InvalidArgumentError(f"shape mismatch: V {V.shape}, G {G.shape}")
    if not tau >= 0:
        raise InvalidArgumentError(f"step size must be nonnegative, got {tau}")
    if tau == 0:
        return V.copy()
    p = V.shape[0]
    tW = tau * skew_generator(V, G)
    I = np.eye(p)
    Vn = np.linalg.solve(I + tW, V - tW @ V)
    # the solve loses orthonormality roughly as eps * cond(I + tau W)
    if orthonormality_error(Vn) > 1e-13:
        Vn = _qr_positive(Vn)
    return Vn


def orth_complement(V):
    """Orthonormal basis ``U`` (p x (p - q)) of ``span{V}^perp``."""
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    p, q = V.shape
    if q >= p:
        raise InvalidDimensionError(f"frame spans R^{p}; complement is empty")
    # trailing left singular vectors of the full SVD span the complement
    U_full, _, _ = np.linalg.svd(V, full_matrices=True)
    U = U_full[:, q:]
    return _qr_positive(U - V @ (V.T @ U))


def subspace_distance(A, B):
    """Frobenius distance ``||P_A - P_B||`` between column-span projections."""
    return float(np.linalg.norm(projection(A) - projection(B)))


def subspace_error(B, Bhat):
    """Normalized subspace error ``||P_B - P_Bhat|| / sqrt(2k)`` in ``[0, 1]``."""
    B = np.asarray(B, dtype=float)
    Bhat = np.asarray(Bhat, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if Bhat.ndim == 1:
        Bhat = Bhat[:, None]
    if B.shape != Bhat.shape:
        raise InvalidArgumentError(f"rank/shape mismatch: {B.shape} vs {Bhat.shape}")
    k = B.shape[1]
    return subspace_distance(B, Bhat) / np.sqrt(2 * k)


def principal_angle(A, B):
    """Largest principal angle (radians) between two equal-rank column spans."""
    A = _qr_positive(np.atleast_2d(np.asarray(A, dtype=float).T).T)
    B = _qr_positive(np.atleast_2d(np.asarray(B, dtype=float).T).T)
    s = np.linalg.svd(A.T @ B, compute_uv=False)
    return float(np.arccos(np.clip(s.min(), -1.0, 1.0)))
