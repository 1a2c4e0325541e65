"""Data-driven stabilizing-gain synthesis for the internal-model/filter cascade.

Stacked state ordering is ``z = (eta, zeta_y, zeta_u)`` with sizes ``(d, n, n)``.
The control law is ``u = -K z`` with ``K = R^-1 Bc' P``, so that
``A_hat - Bc K`` is the closed-loop matrix.
"""
import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InsufficientDataError, SynthesisError
from .model import companion, input_vector, is_stabilizable, numerical_rank, spectral_abscissa
from .postproc import equilibrate_rows

PINV_RTOL = 1e-10


@dataclass
class CascadeConstants:
    calBc: np.ndarray
    calD: np.ndarray
    An_theta: np.ndarray


def cascade_constants(theta, fp):
    theta = np.asarray(theta, dtype=float).reshape(-1)
    d, n = theta.size, fp.n
    zd, zn = np.zeros(d), np.zeros(n)
    return CascadeConstants(
        calBc=np.concatenate([zd, zn, fp.L]),
        calD=np.concatenate([input_vector(d), fp.L, zn]),
        An_theta=scipy.linalg.block_diag(companion(theta), fp.F, fp.F),
    )


def coupling_selector(d, n):
    """``[0_{2n x d}  I_{2n}]``: places the estimated coupling on the filter columns."""
    return np.hstack([np.zeros((2 * n, d)), np.eye(2 * n)])


def estimate_H(dm, theta, fp, tol=PINV_RTOL):
    """Least-squares estimate of the unknown coupling ``D [H1 H2]`` from data.

    The residual ``Z_plus - An Z - Bc U`` equals ``D [C_cal  M_rho] [Z_zeta; X]``
    on exact data; a right inverse of ``[Z_zeta; X]`` recovers the bracket and
    its first ``2n`` columns are returned.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    n = fp.n
    cc = cascade_constants(theta, fp)
    residual = dm.Z_plus - cc.An_theta @ dm.Z - np.outer(cc.calBc, dm.U[0])

    stacked = np.vstack([dm.Z_zeta, dm.X])
    scaled, row_scale = equilibrate_rows(stacked)
    if numerical_rank(scaled, tol) < 3 * n:
        raise InsufficientDataError(
            f"rank [Z_zeta; X] = {numerical_rank(scaled, tol)} < 3n = {3 * n}; "
            "the coupling cannot be recovered"
        )
    # right inverse of the unscaled matrix: pinv(D M) D
    right_inv = np.linalg.pinv(scaled, rcond=tol) * row_scale[None, :]
    coupling = residual @ right_inv
    return coupling[:, : 2 * n]


def assemble_Ahat(H_hat, theta, fp):
    theta = np.asarray(theta, dtype=float).reshape(-1)
    d, n = theta.size, fp.n
    if H_hat.shape != (d + 2 * n, 2 * n):
        raise ValueError(f"H_hat must be {(d + 2 * n, 2 * n)}, got {H_hat.shape}")
    return cascade_constants(theta, fp).An_theta + H_hat @ coupling_selector(d, n)


def care_residual(A, B, Q, R, P):
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    R = np.atleast_2d(R)
    return A.T @ P + P @ A - P @ B @ np.linalg.solve(R, B.T @ P) + Q


def _care_schur(A, B, Q, R):
    n = A.shape[0]
    G = B @ np.linalg.solve(R, B.T)
    H = np.block([[A, -G], [-Q, -A.T]])
    eig = np.linalg.eigvals(H)
    scale = max(1.0, np.max(np.abs(eig)))
    if np.min(np.abs(eig.real)) < 1e-10 * scale:
        raise SynthesisError("Hamiltonian has eigenvalues on the imaginary axis")
    T, U, sdim = scipy.linalg.schur(H, output="real", sort="lhp")
    if sdim != n:
        raise SynthesisError(f"stable invariant subspace has dimension {sdim}, expected {n}")
    U11, U21 = U[:n, :n], U[n:, :n]
    if np.linalg.cond(U11) > 1e12:
        raise SynthesisError("stable subspace is not a graph; Riccati solution does not exist")
    P = np.linalg.solve(U11.T, U21.T).T
    return (P + P.T) / 2


def newton_kleinman(A, B, Q, R, K0, tol=1e-10, max_iter=50):
    """Newton-Kleinman iteration from a stabilizing gain ``K0``.

    Each step solves ``(A - B K)' P + P (A - B K) + Q + K' R K = 0`` and sets
    ``K = R^-1 B' P``. Stops when successive ``P`` differ by less than
    ``tol`` relative to ``|P|``.
    """
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    R = np.atleast_2d(R)
    K = np.atleast_2d(K0)
    P_prev = None
    for _ in range(max_iter):
        Acl = A - B @ K
        if spectral_abscissa(Acl) >= 0:
            raise SynthesisError("Newton-Kleinman iterate lost stability")
        P = scipy.linalg.solve_continuous_lyapunov(Acl.T, -(Q + K.T @ R @ K))
        P = (P + P.T) / 2
        K = np.linalg.solve(R, B.T @ P)
        if P_prev is not None and np.linalg.norm(P - P_prev) <= tol * np.linalg.norm(P):
            return P, K
        P_prev = P
    raise SynthesisError(
        f"Newton-Kleinman did not converge; residual "
        f"{np.abs(care_residual(A, B, Q, R, P)).max():.3e}"
    )


def solve_care(A, B, Q, R):
    """Stabilizing solution of ``A'P + PA - P B R^-1 B' P + Q = 0``.

    Hamiltonian ordered-Schur solve, then Newton-Kleinman refinement.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P0 = _care_schur(A, B, Q, R)
    K0 = np.linalg.solve(R, B.T @ P0)
    return newton_kleinman(A, B, Q, R, K0)[0]


def stabilizing_gain(A_hat, calBc, Q=None, R=1.0):
    """``(P, K)`` with ``P`` the stabilizing CARE solution and ``K = R^-1 Bc' P``."""
    A_hat = np.atleast_2d(A_hat)
    m = A_hat.shape[0]
    Q = np.eye(m) if Q is None else np.atleast_2d(Q)
    if not float(R) > 0:
        raise ValueError("R must be positive")
    if not is_stabilizable(A_hat, calBc):
        raise SynthesisError("(A_hat, Bc) is not stabilizable: the nominal cascade resonates")
    P = solve_care(A_hat, calBc, Q, R)
    K = (np.asarray(calBc, dtype=float) @ P) / float(R)
    if np.min(np.linalg.eigvalsh(P)) <= 0:
        raise SynthesisError("Riccati solution is not positive definite")
    return P, K


@dataclass
class SynthesisResult:
    theta: np.ndarray
    H_hat: np.ndarray
    A_hat: np.ndarray
    calBc: np.ndarray
    P: np.ndarray
    K: np.ndarray
    QR_used: tuple
    shift: float = 0.0

    @property
    def closed_loop(self):
        return self.A_hat - np.outer(self.calBc, self.K)

    @property
    def care_residual(self):
        Q, R = self.QR_used
        shifted = self.A_hat + self.shift * np.eye(self.A_hat.shape[0])
        return care_residual(shifted, self.calBc, Q, R, self.P)

    @property
    def margin(self):
        """Distance of the closed-loop spectrum from the imaginary axis."""
        return -spectral_abscissa(self.closed_loop)

    def report(self):
        eig = np.linalg.eigvals(self.closed_loop)
        eig = eig[np.argsort(eig.real)]
        res = np.abs(self.care_residual).max()
        lines = [
            f"theta          : {np.array2string(self.theta, precision=6)}",
            f"K              : {np.array2string(self.K, precision=6, max_line_width=200)}",
            f"min eig(P)     : {np.min(np.linalg.eigvalsh(self.P)):.6e}",
            f"CARE residual  : {res:.3e} (max|P| = {np.abs(self.P).max():.3e})",
            f"stability margin: {self.margin:.6f}",
            "closed-loop eigenvalues:",
        ]
        lines += [f"  {z.real:+.6f} {z.imag:+.6f}j" for z in eig]
        return "\n".join(lines)

    def gain_to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"gain_{i + 1}" for i in range(self.K.size)])
            writer.writerow([repr(float(k)) for k in self.K])


def synthesize(dm, theta, fp, Q=None, R=1.0, tol=PINV_RTOL, shift=0.0):
    """Coupling estimate, model assembly and Riccati gain for one ``theta``.

    With ``shift > 0`` the Riccati equation is solved for ``A_hat + shift I``,
    which pushes every closed-loop eigenvalue left of ``-shift``.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if not shift >= 0:
        raise ValueError("shift must be nonnegative")
    H_hat = estimate_H(dm, theta, fp, tol)
    A_hat = assemble_Ahat(H_hat, theta, fp)
    m = A_hat.shape[0]
    Q = np.eye(m) if Q is None else np.atleast_2d(Q)
    calBc = cascade_constants(theta, fp).calBc
    P, K = stabilizing_gain(A_hat + shift * np.eye(m), calBc, Q, R)
    return SynthesisResult(
        theta=theta.copy(), H_hat=H_hat, A_hat=A_hat, calBc=calBc, P=P, K=K,
        QR_used=(Q, float(R)), shift=float(shift),
    )
