"""Hybrid adaptive regulator: closed-loop flows interleaved with identifier jumps.

During a flow the plant, exosystem, filters and error internal model evolve
under ``u = -K col(eta_e, zeta_y - zeta_r, zeta_u)`` with ``(theta, K)``
frozen. Every ``T2`` seconds a jump feeds ``(eta_e, e)`` to the identifier;
when ``theta`` moves, the offline dataset is post-processed again for the
new ``theta`` and a new gain is synthesized from data.

The plant and exosystem matrices are used only to simulate the physical
loop; the controller side touches nothing but the dataset and measured
signals.
"""
import csv
import dataclasses
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import identifier as ident
from .errors import AssumptionError, DivergenceError, RegulabError
from .model import ThetaBox, companion, input_vector
from .postproc import assemble_matrices, excitation_rank, postprocess, replay_filters
from .sim import rk4_linear_coefficients
from .synth import synthesize

log = logging.getLogger(__name__)


@dataclass
class RegulatorConfig:
    fp: object
    box: ThetaBox
    theta0: np.ndarray
    mu: float = 0.9
    Q: np.ndarray = None
    R: float = 1.0
    q_scale: float = 100.0
    T1: float = 10.0
    T2: float = 1.3
    N_I: int = 70
    delta: float = 1e-8
    tau_s: float = 0.1
    h: float = 1e-3
    t_final: float = 100.0
    pe_window: int = 4
    t_burn: float = 0.0
    first_dwell: float = 0.0
    shift: float = 0.5

    def __post_init__(self):
        self.theta0 = np.asarray(self.theta0, dtype=float).reshape(-1)
        if self.Q is None:
            m = self.theta0.size + 2 * self.fp.n
            self.Q = self.q_scale * np.eye(m)
        if not self.T2 > 0:
            raise ValueError("T2 must be positive")
        if not self.shift >= 0:
            raise ValueError("shift must be nonnegative")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not 0 < self.mu < 1:
            raise ValueError("mu must lie in (0, 1)")
        if self.N_I < 0:
            raise ValueError("N_I must be nonnegative")
        if not math.isclose(round(self.T2 / self.h) * self.h, self.T2, rel_tol=1e-9):
            raise ValueError("T2 must be a multiple of the integration step")


@dataclass
class ClosedLoopState:
    x: np.ndarray
    w: np.ndarray
    eta_e: np.ndarray
    zeta_y: np.ndarray
    zeta_u: np.ndarray
    zeta_r: np.ndarray
    ident: ident.IdentifierState
    K: np.ndarray
    tau: float = 0.0
    step: int = 0  # integration steps since t = 0
    j: int = 0

    @property
    def theta(self):
        return self.ident.theta

    @property
    def z(self):
        """Controller state ``col(eta_e, zeta_y - zeta_r, zeta_u)``."""
        return np.concatenate([self.eta_e, self.zeta_y - self.zeta_r, self.zeta_u])

    def pack(self):
        return np.concatenate([self.x, self.w, self.eta_e, self.zeta_y, self.zeta_u, self.zeta_r])

    def unpack(self, vec, n, d):
        cuts = np.cumsum([n, d, d, n, n])
        x, w, eta, zy, zu, zr = np.split(vec, cuts)
        return dataclasses.replace(self, x=x, w=w, eta_e=eta, zeta_y=zy, zeta_u=zu, zeta_r=zr)


class DataDrivenDesigner:
    """Gain synthesis from the offline dataset, memoized by ``theta``."""

    def __init__(self, ds, fp, tau_s, Q=None, R=1.0, t_burn=0.0, shift=0.0):
        self.ds = ds
        self.fp = fp
        self.Q = Q
        self.R = R
        self.shift = shift
        self.idx = ds.sample_indices(tau_s, t_burn)
        self.filters = replay_filters(ds, fp)
        self._cache = {}

    def data_matrices(self, theta):
        pp = postprocess(self.ds, self.fp, theta, filters=self.filters)
        return assemble_matrices(pp, self.ds, self.fp, self.idx)

    def check_excitation(self, theta):
        report = excitation_rank(self.data_matrices(theta))
        if not report.satisfied:
            raise AssumptionError(
                "excitation condition",
                f"rank [Z_zeta; X] = {report.rank} < {report.required}",
            )
        return report

    def synthesize(self, theta):
        key = tuple(np.asarray(theta, dtype=float).tolist())
        if key not in self._cache:
            self._cache[key] = synthesize(
                self.data_matrices(theta), theta, self.fp, self.Q, self.R, shift=self.shift
            )
        return self._cache[key]


def loop_matrix(plant, exo, fp, theta, K):
    """Linear flow map of ``(x, w, eta_e, zeta_y, zeta_u, zeta_r)`` under ``u = -K z``."""
    A, B, C = plant.A, plant.B, plant.C
    S, C_r = exo.S, exo.C_r
    F, L = fp.F, fp.L
    n, d = plant.n, exo.d
    G = input_vector(d)
    K = np.asarray(K, dtype=float).reshape(-1)
    K_eta, K_zeta_e, K_zeta_u = K[:d], K[d : d + n], K[d + n :]
    # u = -K_eta eta - K_zeta_e (zeta_y - zeta_r) - K_zeta_u zeta_u
    U = np.concatenate([np.zeros(n), np.zeros(d), -K_eta, -K_zeta_e, -K_zeta_u, K_zeta_e])
    E = np.concatenate([C, -C_r, np.zeros(d + 3 * n)])  # e = C x - C_r w
    m = U.size
    M = np.zeros((m, m))
    ix = slice(0, n)
    iw = slice(n, n + d)
    ie = slice(n + d, n + 2 * d)
    iy = slice(n + 2 * d, 2 * n + 2 * d)
    iu = slice(2 * n + 2 * d, 3 * n + 2 * d)
    ir = slice(3 * n + 2 * d, 4 * n + 2 * d)
    M[ix, ix] = A
    M[ix] += np.outer(B, U)
    M[iw, iw] = S
    M[ie, ie] = companion(theta)
    M[ie] += np.outer(G, E)
    M[iy, iy] = F
    M[iy, ix] += np.outer(L, C)
    M[iu, iu] = F
    M[iu] += np.outer(L, U)
    M[ir, ir] = F
    M[ir, iw] += np.outer(L, C_r)
    return M


@dataclass
class RunLog:
    t: list = field(default_factory=list)
    j: list = field(default_factory=list)
    e: list = field(default_factory=list)
    u: list = field(default_factory=list)
    y: list = field(default_factory=list)
    y_r: list = field(default_factory=list)
    theta: list = field(default_factory=list)
    jumps: list = field(default_factory=list)
    stop_reason: str = ""
    final_state: ClosedLoopState = None
    sign_note: str = (
        "theta holds the coefficients of p(s) = s^d + theta_d s^(d-1) + ... + theta_1; "
        "an exosystem with spectrum {+-2j} corresponds to theta = (4, 0)"
    )

    def arrays(self):
        return {k: np.asarray(getattr(self, k)) for k in ("t", "j", "e", "u", "y", "y_r", "theta")}

    def tail_mean_abs_error(self, fraction=0.1):
        t = np.asarray(self.t)
        e = np.abs(np.asarray(self.e))
        cutoff = t[-1] - fraction * (t[-1] - t[0])
        return float(e[t >= cutoff - 1e-12].mean())

    @property
    def final_theta(self):
        return np.asarray(self.theta[-1])

    def summary(self):
        lines = [
            f"stop reason      : {self.stop_reason}",
            f"jumps            : {len(self.jumps)}",
            f"final theta      : {np.array2string(self.final_theta, precision=8)}",
            f"mean |e| last 10%: {self.tail_mean_abs_error():.3e}",
            f"theta convention : {self.sign_note}",
        ]
        return "\n".join(lines)

    def to_csv(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        arr = self.arrays()
        d = arr["theta"].shape[1]
        with open(os.path.join(out_dir, "trace.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "j", "e", "u", "y", "y_r"] + [f"theta_{i + 1}" for i in range(d)])
            for k in range(arr["t"].size):
                writer.writerow(
                    [repr(float(arr["t"][k])), int(arr["j"][k])]
                    + [repr(float(arr[c][k])) for c in ("e", "u", "y", "y_r")]
                    + [repr(float(v)) for v in arr["theta"][k]]
                )
        m = len(self.jumps[0]["K"]) if self.jumps else 0
        with open(os.path.join(out_dir, "jumps.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["j", "t"]
                + [f"theta_{i + 1}" for i in range(d)]
                + [f"gain_{i + 1}" for i in range(m)]
                + ["pe_metric", "stop_reason"]
            )
            for k, rec in enumerate(self.jumps):
                last = k == len(self.jumps) - 1
                writer.writerow(
                    [rec["j"], repr(float(rec["t"]))]
                    + [repr(float(v)) for v in rec["theta"]]
                    + [repr(float(v)) for v in rec["K"]]
                    + [repr(float(rec["pe_metric"])), self.stop_reason if last else ""]
                )


class HybridRegulator:
    """Closed loop of a simulated plant/exosystem with the data-driven adaptive regulator."""

    def __init__(self, plant, exo, ds, cfg, designer=None):
        if exo.d != cfg.theta0.size:
            raise ValueError("theta0 length must equal the exosystem order")
        if plant.n != cfg.fp.n:
            raise ValueError("filter dimension must equal the plant order")
        self.plant = plant
        self.exo = exo
        self.cfg = cfg
        self.designer = designer or DataDrivenDesigner(
            ds, cfg.fp, cfg.tau_s, cfg.Q, cfg.R, cfg.t_burn, cfg.shift
        )
        self.history = []
        self._flow_maps = {}
        self.log_stride = max(1, int(round(cfg.tau_s / cfg.h)))

    def initial_state(self, x0, K=None):
        n, d = self.plant.n, self.exo.d
        st = ident.IdentifierState.initial(self.cfg.theta0, self.cfg.mu, self.cfg.box)
        if K is None:
            K = self.designer.synthesize(st.theta).K
        zn = np.zeros(n)
        return ClosedLoopState(
            x=np.asarray(x0, dtype=float).copy(),
            w=self.exo.w0.copy(),
            eta_e=np.zeros(d),
            zeta_y=zn.copy(),
            zeta_u=zn.copy(),
            zeta_r=zn.copy(),
            ident=st,
            K=np.asarray(K, dtype=float),
        )

    def _step_map(self, theta, K):
        key = (tuple(theta.tolist()), tuple(np.asarray(K).tolist()))
        if key not in self._flow_maps:
            M = loop_matrix(self.plant, self.exo, self.cfg.fp, theta, K)
            self._flow_maps[key] = rk4_linear_coefficients(M, np.zeros((M.shape[0], 1)), self.cfg.h)[0]
        return self._flow_maps[key]

    def _record(self, log_, state):
        C, C_r = self.plant.C, self.exo.C_r
        y = float(C @ state.x)
        y_r = float(C_r @ state.w)
        log_.t.append(state.step * self.cfg.h)
        log_.j.append(state.j)
        log_.e.append(y - y_r)
        log_.u.append(float(-state.K @ state.z))
        log_.y.append(y)
        log_.y_r.append(y_r)
        log_.theta.append(state.theta.copy())

    def flow(self, state, duration, log_=None):
        """Integrate the loop for ``duration`` seconds with ``(theta, K)`` frozen."""
        steps = int(round(duration / self.cfg.h))
        P = self._step_map(state.theta, state.K)
        n, d = self.plant.n, self.exo.d
        vec = state.pack()
        k0 = state.step
        for k in range(1, steps + 1):
            vec = P @ vec
            if (k0 + k) % self.log_stride == 0:
                if not np.all(np.isfinite(vec)):
                    raise DivergenceError((k0 + k) * self.cfg.h, "closed loop diverged")
                if log_ is not None:
                    self._record(log_, dataclasses.replace(state.unpack(vec, n, d), step=k0 + k))
        return dataclasses.replace(
            state.unpack(vec, n, d), step=k0 + steps, tau=state.tau + steps * self.cfg.h
        )

    def jump(self, state):
        """Identifier update followed by a gain redesign when ``theta`` moves.

        Returns ``(new_state, record)``. If synthesis fails for the new
        ``theta``, the previous ``(theta, K)`` pair is retained.
        """
        e = float(self.plant.C @ state.x - self.exo.C_r @ state.w)
        sample = ident.regression_sample(state.eta_e, e, state.theta)
        self.history.append(sample)
        new_ident = ident.jump(state.ident, sample)
        K = state.K
        accepted = True
        design = self.designer.synthesize(state.theta)
        if not np.array_equal(new_ident.theta, state.theta):
            try:
                design = self.designer.synthesize(new_ident.theta)
                K = design.K
            except RegulabError as exc:
                log.warning("synthesis failed at theta=%s (%s); keeping previous gain", new_ident.theta, exc)
                new_ident = new_ident.replace(theta=state.theta)
                accepted = False
        new_state = dataclasses.replace(state, ident=new_ident, K=K, tau=0.0, j=state.j + 1)
        record = {
            "j": new_state.j,
            "t": state.step * self.cfg.h,
            "theta": new_ident.theta.copy(),
            "K": np.asarray(K, dtype=float).copy(),
            "pe_metric": ident.pe_metric(self.history, self.cfg.mu, self.cfg.pe_window),
            "cost": ident.cost_J(self.history, self.cfg.mu, new_ident.theta),
            "accepted": accepted,
            "step": float(np.linalg.norm(new_ident.theta - state.theta)),
            "margin": design.margin,
            "care_residual": float(np.linalg.norm(design.care_residual, 2) / np.linalg.norm(design.P, 2)),
        }
        return new_state, record

    def run(self, x0, log_=None):
        """Simulate over ``[0, t_final]``; jumps stop once ``theta`` settles or after ``N_I``.

        Pass ``log_`` to keep the partial record if the run raises.
        """
        cfg = self.cfg
        self.history = []
        state = self.initial_state(x0)
        out = RunLog() if log_ is None else log_
        self._record(out, state)
        total = int(round(cfg.t_final / cfg.h))
        per_flow = int(round(cfg.T2 / cfg.h))
        first = int(round(cfg.first_dwell / cfg.h))
        stop = "max_jumps" if cfg.N_I == 0 else ""
        while state.step < total:
            if stop:
                state = self.flow(state, (total - state.step) * cfg.h, out)
                break
            dwell = per_flow + (first if state.j == 0 else 0)
            chunk = min(dwell, total - state.step)
            state = self.flow(state, chunk * cfg.h, out)
            if chunk < dwell:
                break
            state, rec = self.jump(state)
            out.jumps.append(rec)
            if rec["accepted"] and rec["step"] < cfg.delta:
                stop = "converged"
            elif state.j >= cfg.N_I:
                stop = "max_jumps"
        out.stop_reason = stop or "horizon"
        out.final_state = state
        return out


def run(plant, exo, ds, cfg, x0):
    """Convenience wrapper around :class:`HybridRegulator`."""
    return HybridRegulator(plant, exo, ds, cfg).run(x0)
