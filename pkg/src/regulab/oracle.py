"""Model-based ground truth for verification. Uses the true plant; never imported by the regulator.

Builds the filter realization of the plant (the ``Pi`` matrices), the
decaying-mode output map ``M_rho``, the exact cascade matrix and the
steady-state map ``Psi`` of the regulated closed loop, each with the
residuals of its defining equations.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import OracleError, ResonanceError
from .model import (
    char_poly_theta,
    companion,
    input_vector,
    numerical_rank,
    observability_matrix,
)
from .sim import rk4_autonomous


@dataclass
class PiSolution:
    Pi1: np.ndarray
    Pi2: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    V: np.ndarray  # eigenvectors of A - Pi1 L C, column i for lam[i]

    def residuals(self, plant, fp):
        A, B, C = plant.A, plant.B, plant.C
        F, L = fp.F, fp.L
        M = A - np.outer(self.Pi1 @ L, C)
        return {
            "Pi1 F = (A - Pi1 L C) Pi1": np.abs(self.Pi1 @ F - M @ self.Pi1).max(),
            "H1 = C Pi1": np.abs(self.H1 - C @ self.Pi1).max(),
            "Pi2 F = (A - Pi1 L C) Pi2": np.abs(self.Pi2 @ F - M @ self.Pi2).max(),
            "Pi2 L = B": np.abs(self.Pi2 @ L - B).max(),
            "H2 = C Pi2": np.abs(self.H2 - C @ self.Pi2).max(),
        }


def observer_gain(plant, poles):
    """Ackermann gain ``k`` with ``sigma(A - k C) = poles``."""
    A, C = plant.A, plant.C
    n = plant.n
    O = observability_matrix(C, A)
    if numerical_rank(O) < n:
        raise OracleError("(C, A) is not observable; observer placement impossible")
    coeffs = np.real_if_close(np.poly(poles))
    pA = np.zeros_like(A)
    for c in coeffs:
        pA = pA @ A + c * np.eye(n)
    e_n = np.zeros(n)
    e_n[-1] = 1.0
    return pA @ np.linalg.solve(O, e_n)


def _null_vector(M):
    _, s, Vh = np.linalg.svd(M)
    v = Vh[-1].conj()
    return v / np.linalg.norm(v)


def solve_pi(plant, fp):
    """Matrices realizing the plant state as ``x = Pi1 zeta_y + Pi2 zeta_u``.

    The product ``Pi1 L`` is an observer gain placing ``sigma(A - Pi1 L C)``
    on ``diag(Lambda_F)``. With ``V`` the matching eigenvectors, both
    ``Pi1`` and ``Pi2`` are ``V`` times a diagonal fixed by ``Pi1 L`` and
    ``Pi2 L = B``.
    """
    A, B, C = plant.A, plant.B, plant.C
    lam, L = fp.lam, fp.L
    k = observer_gain(plant, lam)
    M = A - np.outer(k, C)
    n = plant.n
    V = np.column_stack([_null_vector(M - l * np.eye(n)) for l in lam]).real
    if numerical_rank(V) < n:
        raise OracleError("A - Pi1 L C is not diagonalizable onto Lambda_F")
    Pi1 = V @ np.diag(np.linalg.solve(V, k) / L)
    Pi2 = V @ np.diag(np.linalg.solve(V, B) / L)
    if numerical_rank(np.hstack([Pi1, Pi2])) < n:
        raise OracleError("[Pi1 Pi2] is not full row rank")
    return PiSolution(Pi1=Pi1, Pi2=Pi2, H1=C @ Pi1, H2=C @ Pi2, V=V)


@dataclass
class MRhoSolution:
    M_rho: np.ndarray
    T_rho: np.ndarray
    rho0: np.ndarray


def solve_m_rho(plant, Pi1, fp, rho0=None):
    """Output map ``M_rho`` with ``C rho(t) = M_rho chi(t)``, ``chi = exp(Lambda_F t) 1``.

    ``T_rho`` diagonalizes ``A - Pi1 L C`` onto ``Lambda_F`` and is scaled so
    that ``T_rho rho0 = 1``. Without ``rho0`` the unit-eigenvector scaling is
    used and ``rho0 = T_rho^-1 1`` is returned.
    """
    n = plant.n
    M = plant.A - np.outer(Pi1 @ fp.L, plant.C)
    V = np.column_stack([_null_vector(M - l * np.eye(n)) for l in fp.lam]).real
    if numerical_rank(V) < n:
        raise OracleError("eigenvalues of A - Pi1 L C coincide; no diagonalizing T_rho")
    T = np.linalg.inv(V)
    if rho0 is None:
        rho0 = V @ np.ones(n)
    rho0 = np.asarray(rho0, dtype=float).reshape(n)
    modal = T @ rho0
    M_rho = (plant.C @ V) * modal
    if np.all(np.abs(modal) > 1e-14 * max(1.0, np.abs(modal).max())):
        T = T / modal[:, None]
    return MRhoSolution(M_rho=M_rho, T_rho=T, rho0=rho0)


def filter_realization(H1, H2, fp):
    """``(calA, calB, calC)`` of the two-filter realization of the plant."""
    F, L = fp.F, fp.L
    n = fp.n
    calA = np.block([[F + np.outer(L, H1), np.outer(L, H2)], [np.zeros((n, n)), F]])
    calB = np.concatenate([np.zeros(n), L])
    calC = np.concatenate([H1, H2])
    return calA, calB, calC


def cascade_matrix(theta, H1, H2, fp):
    """Exact ``Ac(theta) = [[Phi(theta), G calC], [0, calA]]``."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    d = theta.size
    calA, _, calC = filter_realization(H1, H2, fp)
    top = np.hstack([companion(theta), np.outer(input_vector(d), calC)])
    bottom = np.hstack([np.zeros((2 * fp.n, d)), calA])
    return np.vstack([top, bottom])


def error_closed_loop(plant, fp, theta, K, pi):
    """Matrix of the closed loop in ``(rho_e, eta_e, zeta_e, zeta_u)`` with ``u = -K z``."""
    A, C = plant.A, plant.C
    F, L = fp.F, fp.L
    theta = np.asarray(theta, dtype=float).reshape(-1)
    d, n = theta.size, plant.n
    G = input_vector(d)
    K = np.asarray(K, dtype=float).reshape(-1)
    K_eta, K_ze, K_zu = -K[:d], -K[d : d + n], -K[d + n :]
    Z = np.zeros
    return np.block(
        [
            [A - np.outer(pi.Pi1 @ L, C), Z((n, d)), Z((n, n)), Z((n, n))],
            [np.outer(G, C), companion(theta), np.outer(G, pi.H1), np.outer(G, pi.H2)],
            [np.outer(L, C), Z((n, d)), F + np.outer(L, pi.H1), np.outer(L, pi.H2)],
            [Z((n, n)), np.outer(L, K_eta), np.outer(L, K_ze), F + np.outer(L, K_zu)],
        ]
    )


def exosystem_forcing(plant, exo, fp, pi, d):
    """Coefficient of ``w`` in the error closed loop, stacked like ``error_closed_loop``."""
    L, C_r = fp.L, exo.C_r
    n = plant.n
    return np.vstack(
        [
            np.outer(pi.Pi1 @ L, C_r),
            -np.outer(input_vector(d), C_r),
            -np.outer(L, C_r),
            np.zeros((n, exo.d)),
        ]
    )


@dataclass
class PsiSolution:
    Psi_rho: np.ndarray
    Psi_eta: np.ndarray
    Psi_zeta_e: np.ndarray
    Psi_zeta_u: np.ndarray
    residuals: dict = field(default_factory=dict)

    @property
    def Psi(self):
        """``col(Psi_eta, Psi_zeta_e, Psi_zeta_u)``, the map onto the controller state."""
        return np.vstack([self.Psi_eta, self.Psi_zeta_e, self.Psi_zeta_u])


def sylvester_psi(plant, exo, fp, theta, K, pi=None):
    """Steady-state map ``Psi`` of the regulated loop for fixed ``theta`` and gain ``K``.

    Solves ``Psi S = Acl Psi + Bw`` as one Kronecker-structured linear system
    and reports the residual of each block equation and of the chain
    identities on the internal-model rows.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    d, n = theta.size, plant.n
    if exo.d != d:
        raise ValueError(f"exosystem order {exo.d} differs from len(theta) = {d}")
    pi = solve_pi(plant, fp) if pi is None else pi
    Acl = error_closed_loop(plant, fp, theta, K, pi)
    Bw = exosystem_forcing(plant, exo, fp, pi, d)
    S = exo.S
    m = Acl.shape[0]
    # vec(Acl X - X S) = (I_d kron Acl - S' kron I_m) vec(X)
    kron = np.kron(np.eye(d), Acl) - np.kron(S.T, np.eye(m))
    if np.linalg.cond(kron) > 1e12:
        raise ResonanceError("closed-loop spectrum overlaps the exosystem spectrum")
    X = np.linalg.solve(kron, -Bw.reshape(-1, order="F")).reshape(m, d, order="F")
    sol = PsiSolution(
        Psi_rho=X[:n],
        Psi_eta=X[n : n + d],
        Psi_zeta_e=X[n + d : 2 * n + d],
        Psi_zeta_u=X[2 * n + d :],
    )
    sol.residuals = psi_residuals(plant, exo, fp, theta, K, pi, sol)
    return sol


def psi_residuals(plant, exo, fp, theta, K, pi, sol):
    A, C = plant.A, plant.C
    F, L = fp.F, fp.L
    S, C_r = exo.S, exo.C_r
    d = theta.size
    n = plant.n
    G = input_vector(d)
    Phi = companion(theta)
    K = np.asarray(K, dtype=float).reshape(-1)
    K_eta, K_ze, K_zu = -K[:d], -K[d : d + n], -K[d + n :]
    Pr, Pe, Pz, Pu = sol.Psi_rho, sol.Psi_eta, sol.Psi_zeta_e, sol.Psi_zeta_u
    M = A - np.outer(pi.Pi1 @ L, C)
    out = {
        "rho_e block": Pr @ S - M @ Pr - np.outer(pi.Pi1 @ L, C_r),
        "eta_e block": Pe @ S
        - Phi @ Pe
        - np.outer(G, pi.H1 @ Pz + pi.H2 @ Pu + C @ Pr - C_r),
        "zeta_e block": Pz @ S
        - (F + np.outer(L, pi.H1)) @ Pz
        - np.outer(L, pi.H2 @ Pu + C @ Pr - C_r),
        "zeta_u block": Pu @ S - np.outer(L, K_eta @ Pe + K_ze @ Pz) - (F + np.outer(L, K_zu)) @ Pu,
    }
    out = {k: float(np.abs(v).max()) for k, v in out.items()}
    # internal-model chain: row i of Psi_eta times S is row i+1
    chain = [np.abs(Pe[i] @ S - Pe[i + 1]).max() for i in range(d - 1)]
    out["eta chain"] = float(max(chain)) if chain else 0.0
    forcing = pi.H1 @ Pz + pi.H2 @ Pu + C @ Pr - C_r
    out["eta last row"] = float(np.abs(Pe[-1] @ S - (-theta @ Pe + forcing)).max())
    return out


@dataclass
class OracleBundle:
    Pi1: np.ndarray
    Pi2: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    M_rho: np.ndarray
    theta_star: np.ndarray
    Ac_theta: np.ndarray
    Psi: np.ndarray
    DC: np.ndarray
    residuals: dict

    def report(self, tolerance=1e-8):
        return residual_table(self.residuals, tolerance)


def coupling_oracle(pi, fp, d):
    """Exact ``D [H1 H2]`` for internal-model order ``d``."""
    calD = np.concatenate([input_vector(d), fp.L, np.zeros(fp.n)])
    return np.outer(calD, np.concatenate([pi.H1, pi.H2]))


def build_oracle(plant, exo, fp, theta, K, rho0=None):
    """All model-based quantities for one configuration with their residuals."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    pi = solve_pi(plant, fp)
    mr = solve_m_rho(plant, pi.Pi1, fp, rho0)
    psi = sylvester_psi(plant, exo, fp, theta, K, pi)
    residuals = {f"Pi: {k}": v for k, v in pi.residuals(plant, fp).items()}
    M = plant.A - np.outer(pi.Pi1 @ fp.L, plant.C)
    residuals["T_rho diagonalizes A - Pi1 L C"] = float(
        np.abs(mr.T_rho @ M @ np.linalg.inv(mr.T_rho) - fp.F).max()
    )
    residuals.update({f"Psi: {k}": v for k, v in psi.residuals.items()})
    theta_star = char_poly_theta(exo.S)
    return OracleBundle(
        Pi1=pi.Pi1,
        Pi2=pi.Pi2,
        H1=pi.H1,
        H2=pi.H2,
        M_rho=mr.M_rho,
        theta_star=theta_star,
        Ac_theta=cascade_matrix(theta, pi.H1, pi.H2, fp),
        Psi=psi.Psi,
        DC=coupling_oracle(pi, fp, theta.size),
        residuals=residuals,
    )


def residual_table(residuals, tolerance=1e-8):
    """Plain-text table: relation, residual, tolerance, pass/fail."""
    width = max(len(k) for k in residuals) if residuals else 10
    lines = [f"{'relation':<{width}}  {'residual':>10}  {'tol':>8}  result"]
    for key, val in residuals.items():
        ok = val < tolerance
        lines.append(f"{key:<{width}}  {val:10.3e}  {tolerance:8.1e}  {'pass' if ok else 'FAIL'}")
    return "\n".join(lines)


@dataclass
class DecayReport:
    rate: float
    times: np.ndarray
    norms: np.ndarray

    @property
    def is_zero(self):
        return bool(np.all(self.norms == 0))


def transverse_decay(plant, fp, Pi1, rho0, T, h=1e-3):
    """Simulate ``rho' = (A - Pi1 L C) rho`` and fit the decay rate of ``|rho|``.

    The rate is the negative slope of ``log|rho|`` over the second half of
    the horizon, where the slowest mode dominates.
    """
    M = plant.A - np.outer(Pi1 @ fp.L, plant.C)
    steps = int(round(T / h))
    X = rk4_autonomous(M, np.asarray(rho0, dtype=float), h, steps)
    t = h * np.arange(steps + 1)
    norms = np.linalg.norm(X, axis=1)
    if np.all(norms == 0):
        return DecayReport(rate=float("inf"), times=t, norms=norms)
    tail = t >= T / 2
    slope = np.polyfit(t[tail], np.log(norms[tail]), 1)[0]
    return DecayReport(rate=float(-slope), times=t, norms=norms)
