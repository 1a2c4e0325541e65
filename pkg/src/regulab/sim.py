"""Fixed-step simulation: RK4 integration, excitation signals, offline data records."""
import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DivergenceError

DEFAULT_STEP = 1e-3


@dataclass
class Dataset:
    """Uniformly sampled input/output record starting at ``t0`` with spacing ``dt``."""

    t0: float
    dt: float
    u: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float).reshape(-1)
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.u.shape != self.y.shape:
            raise DimensionError("u and y must have equal length")
        if self.u.size < 2:
            raise ValueError("a dataset needs at least two samples")

    def __len__(self):
        return self.u.size

    @property
    def t(self):
        return self.t0 + self.dt * np.arange(len(self))

    @property
    def t_end(self):
        return self.t0 + self.dt * (len(self) - 1)

    def sample_indices(self, tau_s, t_burn=0.0):
        """Indices of the uniform ``tau_s`` grid over ``[t0 + t_burn, t_end]``."""
        stride = int(round(tau_s / self.dt))
        if stride < 1 or not math.isclose(stride * self.dt, tau_s, rel_tol=1e-9):
            raise ValueError(f"tau_s={tau_s} is not a multiple of dt={self.dt}")
        start = int(round(t_burn / self.dt))
        return np.arange(start, len(self), stride)

    def head(self, count):
        return Dataset(self.t0, self.dt, self.u[:count], self.y[:count])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "u", "y"])
            for t, u, y in zip(self.t, self.u, self.y):
                writer.writerow([repr(float(t)), repr(float(u)), repr(float(y))])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if [h.strip() for h in header] != ["t", "u", "y"]:
                raise ValueError(f"{path}: expected header t,u,y, got {header}")
            rows = np.array([[float(v) for v in row] for row in reader if row])
        if rows.shape[0] < 2:
            raise ValueError(f"{path}: need at least two rows")
        t = rows[:, 0]
        dt = (t[-1] - t[0]) / (len(t) - 1)
        if not np.allclose(np.diff(t), dt, rtol=1e-6, atol=1e-12):
            raise ValueError(f"{path}: sample times are not uniform")
        return cls(t0=float(t[0]), dt=float(dt), u=rows[:, 1], y=rows[:, 2])


@dataclass
class ExcitationSpec:
    """Multisine ``sum_k a_k sin(k * omega1 * t)``."""

    amplitudes: tuple = (1.0, 2.0, 3.0, 4.0)
    omega1: float = 5.0

    def __post_init__(self):
        self.amplitudes = tuple(float(a) for a in self.amplitudes)
        if not all(math.isfinite(a) for a in self.amplitudes):
            raise ValueError("excitation amplitudes must be finite")
        if not self.omega1 > 0:
            raise ValueError("omega1 must be positive")


def excitation(spec, t):
    """Evaluate the multisine at scalar or array ``t``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for k, a in enumerate(spec.amplitudes, start=1):
        out = out + a * np.sin(k * spec.omega1 * t)
    return out if out.ndim else float(out)


def time_grid(t0, t1, h):
    if not h > 0:
        raise ValueError("step must be positive")
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    steps = int(math.ceil((t1 - t0) / h - 1e-9))
    grid = t0 + h * np.arange(steps + 1)
    grid[-1] = t1
    return grid


def rk4_integrate(f, x0, t0, t1, h):
    """Classical RK4 with fixed step ``h``; the last step is shortened to hit ``t1``.

    Returns ``(times, states)`` with ``states[k]`` the state at ``times[k]``.
    Raises DivergenceError at the first non-finite state.
    """
    times = time_grid(t0, t1, h)
    x = np.array(x0, dtype=float).reshape(-1)
    states = np.empty((times.size, x.size))
    states[0] = x
    for k in range(times.size - 1):
        t = times[k]
        step = times[k + 1] - t
        k1 = f(t, x)
        k2 = f(t + step / 2, x + step / 2 * k1)
        k3 = f(t + step / 2, x + step / 2 * k2)
        k4 = f(t + step, x + step * k3)
        x = x + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(times[k + 1])
        states[k + 1] = x
    return times, states


def rk4_linear_coefficients(M, b, h):
    """One RK4 step of ``x' = M x + b s(t)`` written as a linear map.

    Returns ``(P, g0, gm, g1)`` such that the RK4 update is
    ``x+ = P x + g0 s(t) + gm s(t + h/2) + g1 s(t + h)``. Algebraically
    identical to the stage-by-stage formula.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = M.shape[0]
    b = np.asarray(b, dtype=float).reshape(n, -1)
    p = b.shape[1]

    def step(X, s0, sm, s1):
        k1 = M @ X + b @ s0
        k2 = M @ (X + h / 2 * k1) + b @ sm
        k3 = M @ (X + h / 2 * k2) + b @ sm
        k4 = M @ (X + h * k3) + b @ s1
        return X + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    Z = np.zeros((p, p))
    I = np.eye(p)
    P = step(np.eye(n), np.zeros((p, n)), np.zeros((p, n)), np.zeros((p, n)))
    g0 = step(np.zeros((n, p)), I, Z, Z)
    gm = step(np.zeros((n, p)), Z, I, Z)
    g1 = step(np.zeros((n, p)), Z, Z, I)
    return P, g0, gm, g1


def _lagrange_weights(nodes, x):
    w = np.ones(len(nodes))
    for i, xi in enumerate(nodes):
        for j, xj in enumerate(nodes):
            if i != j:
                w[i] *= (x - xj) / (xi - xj)
    return w


def midpoint_values(s, order=6):
    """Values of a sampled signal halfway between consecutive samples.

    Uses a local ``order``-point Lagrange interpolant (centered where
    possible), so the interpolation error is ``O(dt^order)``.
    """
    s = np.asarray(s, dtype=float)
    N = s.shape[0]
    p = min(order, N)
    half = (p - 1) // 2
    starts = np.clip(np.arange(N - 1) - half, 0, N - p)
    offsets = np.arange(N - 1) - starts
    out = np.empty((N - 1,) + s.shape[1:])
    # the weights depend only on the position inside the stencil
    for off in np.unique(offsets):
        ks = np.flatnonzero(offsets == off)
        w = _lagrange_weights(np.arange(p), off + 0.5)
        out[ks] = sum(w[i] * s[starts[ks] + i] for i in range(p))
    return out


def rk4_forced(M, b, x0, signal, dt, t0=0.0):
    """RK4 replay of ``x' = M x + b s(t)`` driven by a sampled signal.

    ``signal`` has one row per sample on the uniform grid ``t0 + k dt``;
    one RK4 step is taken per sample interval with the midpoint value from
    :func:`midpoint_values`. Returns the state at every sample, shape
    ``(len(signal), n)``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = M.shape[0]
    s = np.asarray(signal, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    N = s.shape[0]
    P, g0, gm, g1 = rk4_linear_coefficients(M, b, dt)
    forcing = s[:-1] @ g0.T + midpoint_values(s) @ gm.T + s[1:] @ g1.T

    X = np.empty((N, n))
    X[0] = np.asarray(x0, dtype=float).reshape(n)
    x = X[0]
    for k in range(N - 1):
        x = P @ x + forcing[k]
        X[k + 1] = x
    if not np.all(np.isfinite(X)):
        bad = int(np.argmax(~np.all(np.isfinite(X), axis=1)))
        raise DivergenceError(t0 + bad * dt)
    return X


def rk4_autonomous(M, x0, h, steps):
    """``steps`` RK4 steps of ``x' = M x``; returns all ``steps + 1`` states."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = M.shape[0]
    P = rk4_linear_coefficients(M, np.zeros((n, 1)), h)[0]
    X = np.empty((steps + 1, n))
    X[0] = x0
    for k in range(steps):
        X[k + 1] = P @ X[k]
    if not np.all(np.isfinite(X)):
        bad = int(np.argmax(~np.all(np.isfinite(X), axis=1)))
        raise DivergenceError(bad * h)
    return X


def random_initial_state(n, seed, low=-1.0, high=1.0):
    """Uniform draw in ``[low, high]^n`` from a seeded generator."""
    return np.random.default_rng(seed).uniform(low, high, size=n)


def collect_offline(plant, x0, spec, t_star, dt=DEFAULT_STEP, return_states=False):
    """Run the open-loop plant under the multisine and record ``(u, y)`` every ``dt``."""
    A, B, C = plant.A, plant.B, plant.C

    def f(t, x):
        return A @ x + B * excitation(spec, t)

    steps = int(round(t_star / dt))
    if steps < 1 or not math.isclose(steps * dt, t_star, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"dt={dt} does not divide t_star={t_star}")
    times, X = rk4_integrate(f, x0, 0.0, t_star, dt)
    ds = Dataset(t0=0.0, dt=dt, u=excitation(spec, times), y=X @ C)
    if return_states:
        return ds, X
    return ds


def simulate_exosystem(exo, t1, dt=DEFAULT_STEP):
    """Trajectory ``(times, w, y_r)`` of the exosystem over ``[0, t1]``."""
    steps = int(math.ceil(t1 / dt - 1e-9))
    if steps * dt > t1 + 1e-12:
        times, W = rk4_integrate(lambda t, w: exo.S @ w, exo.w0, 0.0, t1, dt)
    else:
        W = rk4_autonomous(exo.S, exo.w0, dt, steps)
        times = dt * np.arange(steps + 1)
    return times, W, W @ exo.C_r
