"""Discrete-time least-squares identifier with forgetting and box projection.

At each jump the identifier absorbs one regression sample ``(alpha, beta)``
and re-solves the weighted least-squares problem

    min_theta  sum_i mu^(j-i-1) (beta_i - theta' alpha_i)^2

through its sufficient statistics ``(R, v)``; the minimizer ``R^+ v`` is
then projected onto the admissible box.
"""
import csv
import dataclasses
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RegressionSample:
    alpha: np.ndarray
    beta: float

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(alpha)) and np.isfinite(self.beta)):
            raise ValueError("regression sample must be finite")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", float(self.beta))


def regression_sample(eta_e, e, theta):
    """Sample built from the internal-model state and regulation error at a jump.

    With ``eta_e' = Phi(theta) eta_e + G e``, the last component obeys
    ``eta_{e,d}' = -theta' eta_e + e``. On the steady-state manifold
    ``-eta_{e,d}' = theta*' eta_e``, so ``beta = theta' eta_e - e`` is a
    linear regression on ``alpha = eta_e`` with the exosystem coefficients
    as its exact solution.
    """
    eta_e = np.asarray(eta_e, dtype=float).reshape(-1)
    return RegressionSample(alpha=eta_e.copy(), beta=float(np.dot(theta, eta_e) - e))


def project_box(theta_raw, box):
    """Euclidean projection onto ``box`` (componentwise clamp)."""
    return np.clip(np.asarray(theta_raw, dtype=float), box.lo, box.hi)


@dataclass(frozen=True)
class IdentifierState:
    R: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    mu: float
    box: object
    j: int = 0

    def __post_init__(self):
        if not 0 < self.mu < 1:
            raise ValueError("forgetting factor must lie in (0, 1)")

    @classmethod
    def initial(cls, theta0, mu, box):
        theta0 = np.asarray(theta0, dtype=float).reshape(-1)
        d = theta0.size
        return cls(R=np.zeros((d, d)), v=np.zeros(d), theta=project_box(theta0, box), mu=mu, box=box)

    @property
    def d(self):
        return self.theta.size

    def least_squares(self):
        """Unprojected minimizer ``R^+ v``."""
        return np.linalg.pinv(self.R) @ self.v

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def jump(state, sample):
    """One identifier update. Pure: returns a new state."""
    a = sample.alpha
    R = state.mu * state.R + np.outer(a, a)
    R = (R + R.T) / 2
    v = state.mu * state.v + a * sample.beta
    if np.any(R):
        theta = project_box(np.linalg.pinv(R) @ v, state.box)
    else:
        # nothing observed yet: keep the current parameter
        theta = state.theta
    return state.replace(R=R, v=v, theta=theta, j=state.j + 1)


def weighted_gramian(alphas, mu):
    """``sum_i mu^(J-i-1) alpha_i alpha_i'`` over the given (oldest first) regressors."""
    alphas = np.atleast_2d(alphas)
    J = alphas.shape[0]
    w = mu ** np.arange(J - 1, -1, -1, dtype=float)
    return (alphas * w[:, None]).T @ alphas


def pe_metric(history, mu, J):
    """Smallest eigenvalue of the discounted Gramian of the last ``J`` regressors.

    Returns ``nan`` while fewer than ``J`` samples are available.
    """
    if J < 1 or len(history) < J:
        return float("nan")
    alphas = np.array([s.alpha for s in history[-J:]])
    return float(np.linalg.eigvalsh(weighted_gramian(alphas, mu))[0])


def cost_J(history, mu, theta):
    """Discounted squared prediction error of ``theta`` over the whole history."""
    if not history:
        return 0.0
    alphas = np.array([s.alpha for s in history])
    betas = np.array([s.beta for s in history])
    w = mu ** np.arange(len(history) - 1, -1, -1, dtype=float)
    err = betas - alphas @ np.asarray(theta, dtype=float)
    return float(np.sum(w * err**2))


def write_jump_log(path, rows):
    """CSV ``j,t,theta_1..d,pe_metric,cost`` from dicts with those keys."""
    rows = list(rows)
    d = len(rows[0]["theta"]) if rows else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["j", "t"] + [f"theta_{i + 1}" for i in range(d)] + ["pe_metric", "cost"])
        for r in rows:
            writer.writerow(
                [r["j"], repr(float(r["t"]))]
                + [repr(float(x)) for x in r["theta"]]
                + [repr(float(r["pe_metric"])), repr(float(r["cost"]))]
            )
