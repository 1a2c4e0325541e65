import numpy as np
import pytest

from regulab.config import benchmark_config
from regulab.model import FilterParams, LtiPlant, check_structure, pbh_nonresonance
from regulab.postproc import assemble_matrices, excitation_rank, postprocess
from regulab.sim import ExcitationSpec, collect_offline

THETA_STAR = np.array([4.0, 0.0])


@pytest.fixture(scope="session")
def bench_cfg():
    return benchmark_config()


@pytest.fixture(scope="session")
def bench(bench_cfg):
    """(plant, exosystem, filters) of the benchmark."""
    return bench_cfg.plant(), bench_cfg.exosystem(), bench_cfg.filters()


@pytest.fixture(scope="session")
def bench_x0(bench_cfg):
    return bench_cfg.initial_states()


@pytest.fixture(scope="session")
def bench_data(bench, bench_x0):
    plant = bench[0]
    return collect_offline(plant, bench_x0[0], ExcitationSpec(), 10.0, 1e-3)


@pytest.fixture(scope="session")
def bench_matrices(bench, bench_data):
    fp = bench[2]
    pp = postprocess(bench_data, fp, THETA_STAR)
    return assemble_matrices(pp, bench_data, fp, bench_data.sample_indices(0.1))


def random_admissible(rng, n=3, d=2):
    """Random controllable/observable plant, filter and non-resonant theta.

    ``A`` has unit-order entries so that 10 s of open-loop data stays
    numerically tame.
    """
    while True:
        A = rng.normal(size=(n, n)) / np.sqrt(n)
        plant = LtiPlant(A, rng.normal(size=n), rng.normal(size=n))
        lam = -np.sort(rng.uniform(0.5, 4.0, n))
        if np.min(np.abs(np.diff(lam))) < 0.2:
            continue
        fp = FilterParams(lam, rng.uniform(0.5, 3.0, n) * rng.choice([-1.0, 1.0], n))
        theta = rng.uniform(0.5, 6.0, d)
        if check_structure(plant) and pbh_nonresonance(plant, theta):
            return plant, fp, theta


def excited_case(rng):
    """Random admissible triple together with its dataset and data matrices."""
    while True:
        plant, fp, theta = random_admissible(rng)
        x0 = rng.uniform(-1.0, 1.0, plant.n)
        ds = collect_offline(plant, x0, ExcitationSpec(), 10.0, 1e-3)
        dm = assemble_matrices(postprocess(ds, fp, theta), ds, fp, ds.sample_indices(0.1))
        if excitation_rank(dm).satisfied and np.abs(ds.y).max() < 1e5:
            return plant, fp, theta, x0, ds, dm
