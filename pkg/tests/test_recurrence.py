import numpy as np
import pytest
from scipy import stats

from eaton_lab import kernels, recurrence
from eaton_lab.kernels import TransitionKernel, WeightConfig
from eaton_lab.recurrence import ChainConfig, TargetSet, drift_check, simulate_chain


@pytest.fixture(scope="module")
def default_report():
    from eaton_lab.model import PriorParams
    k = kernels.weighted_eaton_kernel(PriorParams(3, 1.0, 1.5), WeightConfig())
    return drift_check(k, sup_ns=(1, 10))


def test_default_drift_passes(default_report):
    rep = default_report
    assert rep.n0 is not None and rep.n0_alpha <= 100
    assert rep.ratio_bounded(10, 1e4)
    assert rep.cond1_decreasing()
    assert all(recurrence.sup_condition_passes(v) for v in rep.sup_check.values())
    assert not rep.failures


def test_drift_asymptotics(default_report):
    rep = default_report
    # m1 -> 4 and m3/m2 -> 24 for p = 3 with c = 1
    assert rep.m1[-1] == pytest.approx(4.0, rel=0.01)
    assert rep.m3[-1] / rep.m2[-1] == pytest.approx(24.0, rel=0.01)


def test_moment_algebra_matches_direct_integration(params):
    k = kernels.weighted_eaton_kernel(params)
    m = recurrence.weighted_eaton_moments(np.array([5.0, 300.0]), params)
    for i, a in enumerate((5.0, 300.0)):
        for j in (1, 2, 3):
            direct = recurrence.transition_moment(k, a, j)
            assert direct == pytest.approx(m[j - 1][i], rel=1e-9, abs=1e-9)


def test_lebesgue_image_contrast():
    grid = np.geomspace(1.0, 1e5, 25)
    p1 = drift_check(kernels.lebesgue_image_kernel(1, 1.0), grid)
    p3 = drift_check(kernels.lebesgue_image_kernel(3, 1.0), grid)
    assert p1.n0 is not None
    assert p3.n0 is None


def test_drift_grid_validation(params):
    k = kernels.weighted_eaton_kernel(params)
    with pytest.raises(ValueError):
        drift_check(k, np.array([1.0, 2.0, 3.0]))
    with pytest.raises(ValueError):
        drift_check(k, np.array([1.0, 1e3, 10.0]))


def test_sup_condition_probe_validation(params):
    k = kernels.weighted_eaton_kernel(params)
    with pytest.raises(ValueError):
        recurrence.sup_condition_check(k, 5, probe_grid=[6.0])


def _gauss_walk():
    inc = lambda rng, shape: rng.standard_normal(tuple(np.atleast_1d(shape)) + (1,))
    return TransitionKernel("gauss", lambda t, f: None, lambda f, rng: f + rng.standard_normal(f.shape),
                            lambda x: 1.0, "euclidean", 1, increment_sampler=inc)


def test_first_step_return_probability():
    conf = ChainConfig(7, 4000, 50, np.zeros(1), TargetSet.ball(1.0))
    k = _gauss_walk()
    # horizon 1: the return fraction is the one-step probability of landing in [-1, 1]
    st = simulate_chain(k, ChainConfig(7, 4000, 1, np.zeros(1), TargetSet.ball(1.0)))
    p = stats.norm.cdf(1) - stats.norm.cdf(-1)
    se = np.sqrt(p * (1 - p) / 4000)
    assert abs(st.return_fraction - p) < 4 * se
    st50 = simulate_chain(k, conf)
    assert st50.return_fraction > st.return_fraction
    assert st50.returned + st50.censored == 4000


def test_deterministic_chain_hit_time():
    k = TransitionKernel("shift", lambda t, f: None, lambda f, rng: f + 1.0, lambda x: 1.0)
    st = simulate_chain(k, ChainConfig(1, 10, 100, 0.0, TargetSet(5.0, 6.0)))
    assert st.returned == 10
    assert st.mean_return_time_given_return == 5.0
    cens = simulate_chain(k, ChainConfig(1, 10, 3, 0.0, TargetSet(5.0, 6.0)))
    assert cens.censored == 10 and np.isnan(cens.mean_return_time_given_return)


def test_simulation_thread_independent(tmp_path):
    k = kernels.fullspace_T_kernel(2, 1.0)
    conf = ChainConfig(11, 300, 2000, np.zeros(2), TargetSet.ball(2.0), group_size=32, dump_paths=2)
    a = simulate_chain(k, conf, threads=1, path_csv=tmp_path / "a.csv")
    b = simulate_chain(k, conf, threads=4, path_csv=tmp_path / "b.csv")
    assert a == b
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "path_id,step,state_0,state_1"


def test_weighted_eaton_chain_small(params):
    k = kernels.weighted_eaton_kernel(params)
    st = simulate_chain(k, ChainConfig(3, 32, 200, 0.0, TargetSet(0.0, 10.0), group_size=16))
    assert st.label == "diagnostic"
    assert 0.5 < st.return_fraction <= 1.0


def test_chain_config_validation():
    with pytest.raises(ValueError):
        ChainConfig(1, 0, 10)
