"""JSON experiment configuration.

Matrices are row-major nested lists. Every numeric field is validated on
load; errors carry the dotted path of the offending field.
"""
import json
import math
import os
import re
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .model import Exosystem, FilterParams, LtiPlant, ThetaBox
from .sim import ExcitationSpec

SEED_ENV = "REGULAB_SEED"


def _matrix(raw, path):
    if not isinstance(raw, list) or not raw or not all(isinstance(r, list) for r in raw):
        raise ConfigError(f"{path}: expected a non-empty list of rows")
    width = len(raw[0])
    for i, row in enumerate(raw):
        if len(row) != width:
            raise ConfigError(f"{path}[{i}]: row has {len(row)} entries, expected {width}")
        for k, v in enumerate(row):
            _number(v, f"{path}[{i}][{k}]")
    return [[float(v) for v in row] for row in raw]


def _vector(raw, path):
    if not isinstance(raw, list) or not raw:
        raise ConfigError(f"{path}: expected a non-empty list of numbers")
    return [_number(v, f"{path}[{i}]") for i, v in enumerate(raw)]


def _number(raw, path):
    if isinstance(raw, bool) or not isinstance(raw, (int, float)) or not math.isfinite(raw):
        raise ConfigError(f"{path}: expected a finite number, got {raw!r}")
    return float(raw)


def _section(raw, name):
    sec = raw.get(name)
    if not isinstance(sec, dict):
        raise ConfigError(f"{name}: missing or not an object")
    return sec


def _get(sec, key, path, kind, default=None):
    if key not in sec:
        if default is not None:
            return default
        raise ConfigError(f"{path}.{key}: missing")
    return kind(sec[key], f"{path}.{key}")


@dataclass
class ExperimentConfig:
    A: list
    B: list
    C: list
    S: list
    C_r: list
    w0: list
    filter_lambda: list
    filter_L: list
    amplitudes: list = field(default_factory=lambda: [1.0, 2.0, 3.0, 4.0])
    omega1: float = 5.0
    t_star: float = 10.0
    tau_s: float = 0.1
    internal_h: float = 1e-3
    mu: float = 0.9
    theta0: list = field(default_factory=lambda: [1.0, -1.0])
    box_lo: list = field(default_factory=lambda: [-10.0, -10.0])
    box_hi: list = field(default_factory=lambda: [10.0, 10.0])
    Q_scale: float = 100.0
    R_scale: float = 1.0
    shift: float = 0.5
    T2: float = 1.3
    N_I: int = 70
    delta: float = 1e-8
    t_final: float = 100.0
    seed: int = 0

    def __post_init__(self):
        try:
            plant, exo, fp = self.plant(), self.exosystem(), self.filters()
        except (DimensionError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if fp.n != plant.n:
            raise ConfigError(f"filter.lambda: length {fp.n} must equal the plant order {plant.n}")
        for name in ("theta0", "box_lo", "box_hi"):
            if len(getattr(self, name)) != exo.d:
                raise ConfigError(f"identifier.{name}: length must equal the exosystem order {exo.d}")
        if not 0 < self.mu < 1:
            raise ConfigError("identifier.mu: must lie in (0, 1)")
        for name in ("t_star", "tau_s", "internal_h", "T2", "delta", "t_final", "Q_scale", "R_scale"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name}: must be positive")
        if not self.shift >= 0:
            raise ConfigError("synthesis.shift: must be nonnegative")
        if self.N_I < 0:
            raise ConfigError("regulator.N_I: must be nonnegative")

    # domain objects

    def plant(self):
        return LtiPlant(self.A, self.B, self.C)

    def exosystem(self):
        return Exosystem(self.S, self.C_r, self.w0)

    def filters(self):
        return FilterParams(self.filter_lambda, self.filter_L)

    def excitation(self):
        return ExcitationSpec(tuple(self.amplitudes), self.omega1)

    def box(self):
        return ThetaBox(self.box_lo, self.box_hi)

    def effective_seed(self):
        env = os.environ.get(SEED_ENV)
        if env is None or env == "":
            return self.seed
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}: not an integer: {env!r}") from None

    def initial_states(self):
        """``(x0 for data collection, x0 for the closed-loop run)`` from the seed."""
        rng = np.random.default_rng(self.effective_seed())
        draws = rng.uniform(-1.0, 1.0, size=(2, len(self.A)))
        return draws[0], draws[1]

    def regulator_config(self):
        from .regulator import RegulatorConfig

        fp = self.filters()
        m = len(self.theta0) + 2 * fp.n
        return RegulatorConfig(
            fp=fp,
            box=self.box(),
            theta0=np.array(self.theta0),
            mu=self.mu,
            Q=self.Q_scale * np.eye(m),
            R=self.R_scale,
            shift=self.shift,
            T1=self.t_star,
            T2=self.T2,
            N_I=self.N_I,
            delta=self.delta,
            tau_s=self.tau_s,
            h=self.internal_h,
            t_final=self.t_final,
        )

    # serialization

    def to_dict(self):
        d = asdict(self)
        return {
            "plant": {"A": d["A"], "B": d["B"], "C": d["C"]},
            "exosystem": {"S": d["S"], "C_r": d["C_r"], "w0": d["w0"]},
            "filter": {"lambda": d["filter_lambda"], "L": d["filter_L"]},
            "excitation": {"amplitudes": d["amplitudes"], "omega1": d["omega1"]},
            "sampling": {"t_star": d["t_star"], "tau_s": d["tau_s"], "internal_h": d["internal_h"]},
            "identifier": {
                "mu": d["mu"],
                "theta0": d["theta0"],
                "box_lo": d["box_lo"],
                "box_hi": d["box_hi"],
            },
            "synthesis": {"Q_scale": d["Q_scale"], "R_scale": d["R_scale"], "shift": d["shift"]},
            "regulator": {
                "T2": d["T2"],
                "N_I": d["N_I"],
                "delta": d["delta"],
                "t_final": d["t_final"],
            },
            "seed": d["seed"],
        }

    def dumps(self):
        text = json.dumps(self.to_dict(), indent=2)
        # keep numeric rows on one line
        return re.sub(r"\[\s*([^\[\]{}]*?)\s*\]", lambda m: "[" + re.sub(r"\s*\n\s*", " ", m.group(1)) + "]", text)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps() + "\n")

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("top level: expected an object")
        p = _section(raw, "plant")
        e = _section(raw, "exosystem")
        f = _section(raw, "filter")
        exc = raw.get("excitation", {})
        smp = raw.get("sampling", {})
        idf = raw.get("identifier", {})
        syn = raw.get("synthesis", {})
        reg = raw.get("regulator", {})
        seed = raw.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise ConfigError(f"seed: expected an integer, got {seed!r}")
        n_i = reg.get("N_I", 70)
        if isinstance(n_i, bool) or not isinstance(n_i, int):
            raise ConfigError(f"regulator.N_I: expected an integer, got {n_i!r}")
        defaults = cls.__dataclass_fields__
        return cls(
            A=_matrix(p.get("A"), "plant.A"),
            B=_get(p, "B", "plant", _vector),
            C=_get(p, "C", "plant", _vector),
            S=_matrix(e.get("S"), "exosystem.S"),
            C_r=_get(e, "C_r", "exosystem", _vector),
            w0=_get(e, "w0", "exosystem", _vector),
            filter_lambda=_get(f, "lambda", "filter", _vector),
            filter_L=_get(f, "L", "filter", _vector),
            amplitudes=_get(exc, "amplitudes", "excitation", _vector, [1.0, 2.0, 3.0, 4.0]),
            omega1=_get(exc, "omega1", "excitation", _number, defaults["omega1"].default),
            t_star=_get(smp, "t_star", "sampling", _number, defaults["t_star"].default),
            tau_s=_get(smp, "tau_s", "sampling", _number, defaults["tau_s"].default),
            internal_h=_get(smp, "internal_h", "sampling", _number, defaults["internal_h"].default),
            mu=_get(idf, "mu", "identifier", _number, defaults["mu"].default),
            theta0=_get(idf, "theta0", "identifier", _vector, [1.0, -1.0]),
            box_lo=_get(idf, "box_lo", "identifier", _vector, [-10.0, -10.0]),
            box_hi=_get(idf, "box_hi", "identifier", _vector, [10.0, 10.0]),
            Q_scale=_get(syn, "Q_scale", "synthesis", _number, defaults["Q_scale"].default),
            R_scale=_get(syn, "R_scale", "synthesis", _number, defaults["R_scale"].default),
            shift=_get(syn, "shift", "synthesis", _number, defaults["shift"].default),
            T2=_get(reg, "T2", "regulator", _number, defaults["T2"].default),
            N_I=n_i,
            delta=_get(reg, "delta", "regulator", _number, defaults["delta"].default),
            t_final=_get(reg, "t_final", "regulator", _number, defaults["t_final"].default),
            seed=seed,
        )

    @classmethod
    def loads(cls, text):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from None
        return cls.loads(text)


def benchmark_config():
    """The three-state non-minimum-phase benchmark tracking a 2 rad/s sinusoid."""
    return ExperimentConfig(
        A=[[1.0, 1.0, 1.0], [-1.0, 0.0, 1.0], [1.0, 1.0, 0.0]],
        B=[0.0, 1.0, 2.0],
        C=[-1.0, 1.0, 0.0],
        S=[[0.0, -2.0], [2.0, 0.0]],
        C_r=[-2.0, -50.0 / math.pi**2],
        w0=[1.0, 1.0],
        filter_lambda=[-1.0, -2.0, -3.0],
        filter_L=[1.0, 2.0, 3.0],
    )
