import numpy as np
import pytest

from roughmf.cocycle import (
    FlowRun,
    JointState,
    cocycle_defect,
    continuity_probe,
    flow_details,
    frozen_coefficient_field,
    joint_flow,
    wong_zakai_run,
)
from roughmf.grids import TimeGrid
from roughmf.meanfield import FrozenLawConfig, simulate_frozen_law
from roughmf.measures import EmpiricalMeasure
from roughmf.models import build_model
from roughmf.rde import linear_coefficients
from roughmf.roughpath import NoisePath


def make_run(seed=0, n=100, n_freeze=8, T=1.0, model_name="eks-gaussian"):
    params = {"Sigma": np.diag([1.0, 4.0])} if model_name == "eks-gaussian" else None
    model = build_model(model_name, params)
    cfg = FrozenLawConfig(n_freeze, inner=2, seed=seed)
    mu0 = EmpiricalMeasure(np.random.default_rng(seed).normal(size=(n, model.d)))
    run = FlowRun(model, cfg, T)
    e0 = JointState(np.zeros(model.d), mu0)
    return run, e0


def test_joint_state_validation():
    mu = EmpiricalMeasure(np.zeros((4, 2)))
    with pytest.raises(ValueError):
        JointState(np.zeros(3), mu)
    e = JointState([1.0, 2.0], mu)
    assert e.point.shape == (2,)


def test_frozen_field_piecewise_constant():
    model = build_model("landau-maxwell")
    mu0 = EmpiricalMeasure(np.random.default_rng(0).normal(size=(50, 3)))
    curve = simulate_frozen_law(model, mu0, FrozenLawConfig(4, seed=0), T=1.0)
    coeff = frozen_coefficient_field(model, curve)
    y = np.array([0.1, -0.2, 0.3])
    # constant inside a freeze window, jumps across the boundary
    assert np.array_equal(coeff.sigma(0.30, y), coeff.sigma(0.49, y))
    assert not np.array_equal(coeff.sigma(0.49, y), coeff.sigma(0.51, y))
    # linear structure is declared for the state-linear Landau field
    assert coeff.linear is not None
    a0 = coeff.linear[0]
    assert np.array_equal(
        coeff.sigma(0.1, y),
        np.einsum("ikj,j->ik", a0, y) + coeff.sigma(0.1, np.zeros(3)),
    )


def test_flow_horizon_must_sit_on_freeze_grid():
    run, e0 = make_run()
    with pytest.raises(ValueError):
        flow_details(run, e0, 0.3)
    with pytest.raises(ValueError):
        flow_details(run, e0, 1.5)


def test_joint_flow_identity_at_zero():
    run, e0 = make_run()
    out = joint_flow(run, e0, 0.0)
    assert out is e0


def test_flow_details_state_lookup():
    run, e0 = make_run(n=60, n_freeze=4)
    det = flow_details(run, e0, 1.0)
    end = det.state_at(1.0)
    assert np.array_equal(end.point, det.solution.Y[-1])
    assert end.law is det.curve.measures[-1]


def test_driver_noise_cached():
    run, _ = make_run()
    assert run.driver_noise() is run.driver_noise()


# ---------------------------------------------------------------------------
# cocycle property
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("model_name", ["eks-gaussian", "landau-maxwell"])
def test_cocycle_law_defect_exactly_zero(model_name):
    run, e0 = make_run(seed=1, n=80, model_name=model_name)
    det = flow_details(run, e0, 1.0)
    out = cocycle_defect(run, e0, 0.5, 0.5, details=det)
    assert out["law_defect"] == 0.0
    assert out["law_upper"] == 0.0


def test_cocycle_point_defect_within_scheme_scale():
    run, e0 = make_run(seed=2, n=80)
    det = flow_details(run, e0, 1.0)
    for s, t in [(0.25, 0.75), (0.5, 0.5), (0.75, 0.25)]:
        out = cocycle_defect(run, e0, s, t, details=det)
        assert out["point_defect"] <= 3.0 * out["self_defect"], out


def test_cocycle_trivial_legs():
    run, e0 = make_run(seed=3, n=40, n_freeze=4)
    det = flow_details(run, e0, 1.0)
    for s, t in [(0.0, 1.0), (1.0, 0.0)]:
        out = cocycle_defect(run, e0, s, t, details=det)
        assert out["point_defect"] == 0.0 and out["law_defect"] == 0.0


def test_cocycle_off_grid_rejected():
    run, e0 = make_run(n=20, n_freeze=4)
    with pytest.raises(ValueError):
        cocycle_defect(run, e0, 0.3, 0.7)


# ---------------------------------------------------------------------------
# Wong-Zakai
# ---------------------------------------------------------------------------

def wz_setup(seed, fine=1 << 10):
    noise = NoisePath.generate(seed, TimeGrid.regular(0.0, 1.0, fine), 1)
    coeff = linear_coefficients(np.ones((1, 1, 1)))  # sigma(y) = y
    return noise, coeff


def test_wz_level_alignment():
    noise, coeff = wz_setup(0, fine=100)
    with pytest.raises(ValueError):
        wong_zakai_run(coeff, noise, 3, False, 1.0)


def test_wz_uncorrected_targets_stratonovich():
    noise, coeff = wz_setup(1)
    ts, Y = wong_zakai_run(coeff, noise, 8, False, 1.0)
    W = noise.values()[:, 0]
    strat = np.exp(W)
    ito = np.exp(W - 0.5 * ts)
    err_s = np.mean((Y[:, 0] - strat) ** 2)
    err_i = np.mean((Y[:, 0] - ito) ** 2)
    assert err_s < err_i


def test_wz_corrected_targets_ito():
    noise, coeff = wz_setup(2)
    ts, Y = wong_zakai_run(coeff, noise, 8, True, 1.0)
    W = noise.values()[:, 0]
    strat = np.exp(W)
    ito = np.exp(W - 0.5 * ts)
    assert np.mean((Y[:, 0] - ito) ** 2) < np.mean((Y[:, 0] - strat) ** 2)


def test_wz_defect_halves_per_level():
    # time-averaged squared deviation from the limit trajectory, median
    # ratio over seeds about 2^{-1} per dyadic level
    ratios = []
    for seed in range(5):
        noise, coeff = wz_setup(seed, fine=1 << 12)
        W = noise.values()[:, 0]
        strat = np.exp(W)
        defects = []
        for level in (5, 6, 7, 8):
            _, Y = wong_zakai_run(coeff, noise, level, False, 1.0)
            defects.append(np.mean((Y[:, 0] - strat) ** 2))
        defects = np.array(defects)
        ratios.append(defects[1:] / defects[:-1])
    med = np.median(np.array(ratios), axis=0)
    assert np.all(med <= 0.8), med


# ---------------------------------------------------------------------------
# continuity of the flow
# ---------------------------------------------------------------------------

def test_continuity_probe_slopes():
    run, e0 = make_run(seed=4, n=60, n_freeze=4)
    out = continuity_probe(run, e0, 1.0, epsilons=(1e-1, 1e-2, 1e-3))
    for channel in ("point", "law", "noise"):
        rec = out[channel]
        assert np.all(np.diff(rec["dist"]) < 0)  # smaller input gap, smaller output
        assert rec["slope"] > 0.5, (channel, rec)
