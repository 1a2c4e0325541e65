"""Offline replay of filters and internal model over a recorded dataset.

The replay produces the signals available to the controller (filter states,
the decaying mode vector ``chi`` and the nominal internal-model state) and
samples them into the matrices of the data equation

    Z_plus = Ac Z + Bc U + D M_rho X.

Derivative columns are evaluated from the known right-hand sides, never by
differencing.
"""
import csv
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError
from .model import companion, input_vector, numerical_rank, RANK_RTOL
from .sim import rk4_forced


@dataclass
class PostProcessed:
    grid: np.ndarray
    zeta_y: np.ndarray
    zeta_u: np.ndarray
    chi: np.ndarray
    eta_y: np.ndarray
    theta_used: np.ndarray

    def to_csv(self, path):
        n = self.zeta_y.shape[1]
        d = self.eta_y.shape[1]
        header = (
            ["t"]
            + [f"zeta_y_{i + 1}" for i in range(n)]
            + [f"zeta_u_{i + 1}" for i in range(n)]
            + [f"chi_{i + 1}" for i in range(n)]
            + [f"eta_y_{i + 1}" for i in range(d)]
        )
        table = np.column_stack([self.grid, self.zeta_y, self.zeta_u, self.chi, self.eta_y])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in table:
                writer.writerow([repr(float(v)) for v in row])


@dataclass
class DataMatrices:
    Y: np.ndarray
    U: np.ndarray
    Z_eta: np.ndarray
    Z_eta_plus: np.ndarray
    Z_zeta: np.ndarray
    Z_zeta_plus: np.ndarray
    X: np.ndarray
    sample_times: np.ndarray

    @property
    def Z(self):
        return np.vstack([self.Z_eta, self.Z_zeta])

    @property
    def Z_plus(self):
        return np.vstack([self.Z_eta_plus, self.Z_zeta_plus])

    @property
    def columns(self):
        return self.Y.shape[1]


def replay_filters(ds, fp):
    """Filter states driven by the recorded ``y`` and ``u``, plus ``chi = exp(Lambda_F t) 1``.

    Returns ``(zeta_y, zeta_u, chi)``, each of shape ``(len(ds), n)``.
    """
    zeros = np.zeros(fp.n)
    zeta_y = rk4_forced(fp.F, fp.L, zeros, ds.y, ds.dt, ds.t0)
    zeta_u = rk4_forced(fp.F, fp.L, zeros, ds.u, ds.dt, ds.t0)
    chi = np.exp(np.outer(ds.t - ds.t0, fp.lam))
    return zeta_y, zeta_u, chi


def replay_internal_model(ds, theta):
    """Nominal internal model ``eta' = Phi(theta) eta + G y`` from ``eta(0) = 0``."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    d = theta.size
    return rk4_forced(companion(theta), input_vector(d), np.zeros(d), ds.y, ds.dt, ds.t0)


def postprocess(ds, fp, theta, filters=None):
    """Full replay for one ``theta``; pass cached ``filters`` to skip the theta-free part."""
    if filters is None:
        filters = replay_filters(ds, fp)
    zeta_y, zeta_u, chi = filters
    eta_y = replay_internal_model(ds, theta)
    return PostProcessed(
        grid=ds.t,
        zeta_y=zeta_y,
        zeta_u=zeta_u,
        chi=chi,
        eta_y=eta_y,
        theta_used=np.asarray(theta, dtype=float).reshape(-1).copy(),
    )


def assemble_matrices(pp, ds, fp, sample_idx):
    """Sample the post-processed record at ``sample_idx`` into data matrices."""
    idx = np.asarray(sample_idx, dtype=int)
    n = fp.n
    if idx.size < 3 * n:
        raise InsufficientDataError(f"{idx.size} samples, need at least 3n = {3 * n}")
    if idx.min() < 0 or idx.max() >= len(ds):
        raise IndexError("sample index outside the dataset grid")
    theta = pp.theta_used
    Phi = companion(theta)
    G = input_vector(theta.size)

    y = ds.y[idx]
    u = ds.u[idx]
    eta = pp.eta_y[idx].T
    zy = pp.zeta_y[idx].T
    zu = pp.zeta_u[idx].T
    F, L = fp.F, fp.L[:, None]

    return DataMatrices(
        Y=y[None, :],
        U=u[None, :],
        Z_eta=eta,
        Z_eta_plus=Phi @ eta + G[:, None] * y[None, :],
        Z_zeta=np.vstack([zy, zu]),
        Z_zeta_plus=np.vstack([F @ zy + L * y[None, :], F @ zu + L * u[None, :]]),
        X=pp.chi[idx].T,
        sample_times=ds.t[idx],
    )


def equilibrate_rows(M):
    """Scale each nonzero row to unit norm. Rank and row space are unchanged."""
    norms = np.linalg.norm(M, axis=1)
    scale = np.where(norms > 0, 1.0 / np.where(norms > 0, norms, 1.0), 1.0)
    return M * scale[:, None], scale


@dataclass
class ExcitationReport:
    rank: int
    required: int
    sigma_ratio: float = float("nan")  # smallest over largest singular value

    @property
    def satisfied(self):
        return self.rank == self.required


def excitation_rank(dm, tol=RANK_RTOL):
    """Numerical rank of ``[Z_zeta; X]`` after row equilibration."""
    stacked = np.vstack([dm.Z_zeta, dm.X])
    scaled, _ = equilibrate_rows(stacked)
    sv = np.linalg.svd(scaled, compute_uv=False)
    ratio = float(sv[-1] / sv[0]) if sv.size and sv[0] > 0 else 0.0
    if scaled.shape[0] > scaled.shape[1]:
        ratio = 0.0
    return ExcitationReport(rank=numerical_rank(scaled, tol), required=stacked.shape[0], sigma_ratio=ratio)
