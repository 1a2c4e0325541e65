"""Domain types and structural tests for SISO plants, exosystems and filters.

Conventions
-----------
The internal-model parameter ``theta = (theta_1, ..., theta_d)`` defines the
monic polynomial

    p(lambda, theta) = lambda^d + theta_d lambda^(d-1) + ... + theta_2 lambda + theta_1

and ``companion(theta)`` is the matrix whose characteristic polynomial is
``p``: ones on the superdiagonal and ``-theta`` on the last row.

Numerical rank decisions use a relative singular-value threshold
(``sigma > RANK_RTOL * sigma_max``).
"""
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

RANK_RTOL = 1e-8


def _as_matrix(M, name):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got shape {M.shape}")
    return M


def _as_vector(v, name):
    v = np.asarray(v, dtype=float).reshape(-1)
    return v


@dataclass
class LtiPlant:
    """SISO plant ``x' = A x + B u``, ``y = C x``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        self.A = _as_matrix(self.A, "A")
        self.B = _as_vector(self.B, "B")
        self.C = _as_vector(self.C, "C")
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape != (n,) or self.C.shape != (n,):
            raise DimensionError(
                f"inconsistent plant dimensions A{self.A.shape} B{self.B.shape} C{self.C.shape}"
            )

    @property
    def n(self):
        return self.A.shape[0]


@dataclass
class Exosystem:
    """Reference generator ``w' = S w``, ``y_r = C_r w``, started at ``w0``."""

    S: np.ndarray
    C_r: np.ndarray
    w0: np.ndarray

    def __post_init__(self):
        self.S = _as_matrix(self.S, "S")
        self.C_r = _as_vector(self.C_r, "C_r")
        self.w0 = _as_vector(self.w0, "w0")
        d = self.S.shape[0]
        if self.S.shape != (d, d) or self.C_r.shape != (d,) or self.w0.shape != (d,):
            raise DimensionError(
                f"inconsistent exosystem dimensions S{self.S.shape} "
                f"C_r{self.C_r.shape} w0{self.w0.shape}"
            )

    @property
    def d(self):
        return self.S.shape[0]

    def has_simple_imaginary_spectrum(self, tol=1e-9):
        """True if the eigenvalues of S are pairwise distinct and on the imaginary axis."""
        eig = np.linalg.eigvals(self.S)
        scale = max(1.0, np.max(np.abs(eig)))
        if np.any(np.abs(eig.real) > tol * scale):
            return False
        gaps = np.abs(eig[:, None] - eig[None, :]) + np.eye(len(eig))
        return bool(np.all(gaps > tol * scale))


@dataclass
class ThetaBox:
    """Componentwise box ``lo <= theta <= hi`` of admissible parameters."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = _as_vector(self.lo, "lo")
        self.hi = _as_vector(self.hi, "hi")
        if self.lo.shape != self.hi.shape:
            raise DimensionError("box bounds must have equal length")
        if np.any(self.lo > self.hi):
            raise ValueError("empty box: lo > hi in some component")

    @property
    def d(self):
        return self.lo.size

    def contains(self, theta):
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.lo) and np.all(theta <= self.hi))

    def corners(self):
        """All 2^d vertices of the box."""
        grids = np.meshgrid(*[(l, h) for l, h in zip(self.lo, self.hi)], indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=1)


@dataclass
class FilterParams:
    """Diagonal filter ``zeta' = Lambda_F zeta + L s``.

    ``lam`` holds the diagonal of Lambda_F: strictly negative and pairwise
    distinct. Every entry of ``L`` must be nonzero so that the pair is
    controllable.
    """

    lam: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        self.lam = _as_vector(self.lam, "lam")
        self.L = _as_vector(self.L, "L")
        if self.lam.shape != self.L.shape:
            raise DimensionError("lam and L must have the same length")
        if np.any(self.lam >= 0):
            raise ValueError("filter eigenvalues must be strictly negative")
        if len(np.unique(self.lam)) != len(self.lam):
            raise ValueError("filter eigenvalues must be distinct")
        if np.any(self.L == 0):
            raise ValueError("(Lambda_F, L) is not controllable: L has a zero entry")

    @property
    def n(self):
        return self.lam.size

    @property
    def F(self):
        return np.diag(self.lam)


def companion(theta):
    """Companion matrix with characteristic polynomial ``p(., theta)``.

    >>> companion([4.0, 0.0])
    array([[ 0.,  1.],
           [-4., -0.]])
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    d = theta.size
    if d == 0:
        raise DimensionError("companion() needs at least one coefficient")
    Phi = np.eye(d, k=1)
    Phi[-1, :] = -theta
    return Phi


def input_vector(d):
    """The injection vector ``G = (0, ..., 0, 1)`` paired with ``companion``."""
    G = np.zeros(d)
    G[-1] = 1.0
    return G


def char_poly_theta(S):
    """Coefficients ``theta`` with ``det(lambda I - S) = p(lambda, theta)``."""
    S = _as_matrix(S, "S")
    if S.shape[0] != S.shape[1]:
        raise DimensionError(f"S must be square, got {S.shape}")
    # np.poly returns [1, c_{d-1}, ..., c_0], highest degree first
    coeffs = np.real_if_close(np.poly(S)) if S.size else np.array([1.0])
    return np.asarray(coeffs[1:][::-1], dtype=float)


def theta_roots(theta):
    """Roots of ``p(., theta)``, computed as eigenvalues of ``companion(theta)``."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.size == 0:
        return np.array([], dtype=complex)
    return np.linalg.eigvals(companion(theta))


def singular_values(M):
    M = np.atleast_2d(M)
    if M.size == 0:
        return np.array([])
    return np.linalg.svd(M, compute_uv=False)


def numerical_rank(M, rtol=RANK_RTOL):
    s = singular_values(M)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def controllability_matrix(A, B):
    A = _as_matrix(A, "A")
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def observability_matrix(C, A):
    A = _as_matrix(A, "A")
    C = np.asarray(C, dtype=float).reshape(-1, A.shape[0])
    return controllability_matrix(A.T, C.T).T


@dataclass
class StructureReport:
    controllable: bool
    observable: bool

    def __bool__(self):
        return self.controllable and self.observable


def check_structure(plant, rtol=RANK_RTOL):
    """Kalman rank tests for controllability of (A, B) and observability of (C, A)."""
    n = plant.n
    ctrb = numerical_rank(controllability_matrix(plant.A, plant.B), rtol) == n
    obsv = numerical_rank(observability_matrix(plant.C, plant.A), rtol) == n
    return StructureReport(controllable=ctrb, observable=obsv)


def _full_rank_at(M, rtol):
    s = singular_values(M)
    return s.size > 0 and s[0] > 0 and s[-1] > rtol * s[0] and len(s) == min(M.shape)


def rosenbrock(A, B, C, lam):
    """System matrix ``[[A - lam I, B], [C, 0]]`` (complex)."""
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    top = np.hstack([A - lam * np.eye(n), np.asarray(B, dtype=complex).reshape(n, 1)])
    bottom = np.hstack([np.asarray(C, dtype=complex).reshape(1, n), np.zeros((1, 1))])
    return np.vstack([top, bottom])


def pbh_nonresonance(plant, theta, tol=RANK_RTOL):
    """True if the plant has no transmission zero at any root of ``p(., theta)``."""
    for lam in theta_roots(theta):
        if not _full_rank_at(rosenbrock(plant.A, plant.B, plant.C, lam), tol):
            return False
    return True


def pbh_cascade(calA, calB, calC, theta, tol=RANK_RTOL):
    """Non-resonance of the filter realization ``(calA, calB, calC)`` at ``sigma(Phi(theta))``.

    Equivalent to stabilizability of the internal-model/filter cascade for
    this ``theta`` when ``(calA, calB)`` is itself stabilizable.
    """
    calA = _as_matrix(calA, "calA")
    calB = _as_vector(calB, "calB")
    calC = _as_vector(calC, "calC")
    for lam in theta_roots(theta):
        if not _full_rank_at(rosenbrock(calA, calB, calC, lam), tol):
            return False
    return True


def is_stabilizable(A, B, tol=RANK_RTOL):
    """PBH test ``rank [A - lam I, B] = n`` for every eigenvalue with Re(lam) >= 0."""
    A = _as_matrix(A, "A")
    n = A.shape[0]
    Bc = np.asarray(B, dtype=complex).reshape(n, -1)
    for lam in np.linalg.eigvals(A):
        if lam.real < 0:
            continue
        M = np.hstack([A - lam * np.eye(n), Bc])
        if numerical_rank(M, tol) < n:
            return False
    return True


def spectral_abscissa(M):
    M = _as_matrix(M, "M")
    return float(np.max(np.linalg.eigvals(M).real))


def is_hurwitz(M, margin=0.0):
    """True if every eigenvalue of ``M`` has real part below ``-margin``."""
    M = _as_matrix(M, "M")
    if M.shape[0] != M.shape[1]:
        raise DimensionError(f"M must be square, got {M.shape}")
    return spectral_abscissa(M) < -margin
