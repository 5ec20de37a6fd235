import numpy as np
import pytest

from roughmf.meanfield import (
    FrozenLawConfig,
    MeasureCurve,
    feynman_kac_duality,
    moment_bound_check,
    particle_noise,
    save_curve,
    save_curve_summary,
    semigroup_check,
    simulate_frozen_law,
    stability_check,
    time_regularity_check,
    weak_solution_residual,
)
from roughmf.measures import EmpiricalMeasure, ScalarFunc, load_measure, moment
from roughmf.models import (
    build_model,
    covariance,
    eks_gaussian_moment_ode,
    landau_moment_oracle,
)


def gauss_init(seed, n, d, cov=None):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d))
    if cov is not None:
        x = x @ np.linalg.cholesky(cov).T
    return EmpiricalMeasure(x)


def phi_sq(d):
    return ScalarFunc(
        "sq",
        lambda y: float(y @ y),
        lambda y: 2.0 * y,
        lambda y: 2.0 * np.eye(d),
    )


def test_config_validation():
    with pytest.raises(ValueError):
        FrozenLawConfig(0)
    with pytest.raises(ValueError):
        FrozenLawConfig(4, inner=2, fine_cells=12)  # not a multiple of 8
    cfg = FrozenLawConfig(4, inner=2)
    assert cfg.steps == 8 and cfg.fine_cells == 8


def test_measure_curve_validation():
    m = EmpiricalMeasure(np.zeros((3, 1)))
    with pytest.raises(ValueError):
        MeasureCurve(np.array([0.0, 1.0]), [m])
    with pytest.raises(ValueError):
        MeasureCurve(
            np.array([0.0, 1.0]), [m, EmpiricalMeasure(np.zeros((4, 1)))]
        )
    c = MeasureCurve(np.array([0.0, 1.0]), [m, m])
    assert c.index_of(1.0) == 1
    with pytest.raises(ValueError):
        c.at(0.3)


# ---------------------------------------------------------------------------
# noise streams
# ---------------------------------------------------------------------------

def test_particle_noise_tail_replay_bitwise():
    full = particle_noise(0, 5, 16, 2, h_fine=0.1)
    tail = particle_noise(0, 5, 16, 2, h_fine=0.1, fine_offset=10)
    assert np.array_equal(full[:, 10:, :], tail)


def test_particle_noise_member_offset_independent():
    a = particle_noise(0, 3, 8, 1, h_fine=0.1)
    b = particle_noise(0, 3, 8, 1, h_fine=0.1, member_offset=100)
    assert not np.array_equal(a, b)
    # offsetting by k shifts which stream each slot reads
    c = particle_noise(0, 4, 8, 1, h_fine=0.1)
    d = particle_noise(0, 3, 8, 1, h_fine=0.1, member_offset=1)
    assert np.array_equal(c[1:], d)


# ---------------------------------------------------------------------------
# frozen-law runs
# ---------------------------------------------------------------------------

def test_simulate_shapes_and_meta():
    model = build_model("eks-gaussian", {"Sigma": np.diag([1.0, 4.0])})
    mu0 = gauss_init(0, 50, 2)
    cfg = FrozenLawConfig(8, inner=4, seed=3, fine_cells=8 * 4 * 2)
    curve = simulate_frozen_law(model, mu0, cfg, T=0.5)
    assert len(curve.times) == 9  # freeze boundaries only
    assert curve.times[-1] == pytest.approx(0.5)
    assert curve.meta["seed"] == 3
    inner = simulate_frozen_law(model, mu0, cfg, T=0.5, record_inner=True)
    assert len(inner.times) == 33


def test_simulate_dimension_mismatch():
    model = build_model("landau-maxwell")
    with pytest.raises(ValueError):
        simulate_frozen_law(model, gauss_init(0, 10, 2), FrozenLawConfig(2), 1.0)


def test_refinement_consistency_common_noise():
    # doubling n_freeze at fixed fine grid changes the law only through the
    # freezing error, which should shrink as the freeze window halves
    model = build_model("eks-gaussian", {"Sigma": np.eye(2)})
    mu0 = gauss_init(1, 200, 2)
    fine = 64
    curves = {}
    for nf in (8, 16, 32):
        cfg = FrozenLawConfig(nf, inner=fine // nf, seed=0, fine_cells=fine)
        curves[nf] = simulate_frozen_law(model, mu0, cfg, T=1.0, h_fine=1.0 / fine)
    from roughmf.measures import wasserstein_p

    d8 = wasserstein_p(curves[8].measures[-1], curves[32].measures[-1], 2.0)
    d16 = wasserstein_p(curves[16].measures[-1], curves[32].measures[-1], 2.0)
    assert d16 < d8


def test_eks_tracks_moment_ode():
    Sigma = np.diag([1.0, 4.0])
    model = build_model("eks-gaussian", {"Sigma": Sigma})
    C0 = 0.25 * np.eye(2)
    mu0 = gauss_init(2, 4000, 2, cov=C0)
    cfg = FrozenLawConfig(32, inner=2, seed=1)
    T = 1.0
    curve = simulate_frozen_law(model, mu0, cfg, T)
    _, ms, Cs = eks_gaussian_moment_ode(Sigma, mu0.mean(), covariance(mu0), T)
    got_C = covariance(curve.measures[-1])
    se = np.linalg.norm(Cs[-1]) * np.sqrt(2.0 / mu0.n)
    assert np.linalg.norm(got_C - Cs[-1]) <= 3.0 * se + 0.05
    assert np.linalg.norm(curve.measures[-1].mean() - ms[-1]) <= 3.0 / np.sqrt(mu0.n)


def test_landau_variance_decay():
    model = build_model("landau-maxwell")
    mu0 = gauss_init(3, 3000, 3)
    cfg = FrozenLawConfig(32, inner=2, seed=2)
    T = 0.5
    curve = simulate_frozen_law(model, mu0, cfg, T)
    m_ref, v_ref = landau_moment_oracle(
        mu0.mean(), moment(mu0, 2.0) - float(mu0.mean() @ mu0.mean()), T
    )
    end = curve.measures[-1]
    v_got = moment(end, 2.0) - float(end.mean() @ end.mean())
    assert np.allclose(end.mean(), m_ref, atol=5e-2)  # mean conserved
    assert abs(v_got - v_ref) <= 4.0 * v_ref / np.sqrt(mu0.n) + 0.05


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def test_weak_solution_residual_small():
    model = build_model("eks-gaussian", {"Sigma": np.eye(2)})
    mu0 = gauss_init(4, 500, 2)
    cfg = FrozenLawConfig(16, inner=4, seed=5)
    curve = simulate_frozen_law(model, mu0, cfg, T=0.5, record_inner=True)
    res = weak_solution_residual(curve, model, phi_sq(2), 0.5)
    # scales like the Euler step + MC noise of the time integral
    assert res <= 0.2, res


def test_moment_bound_check_uniform_in_refinement():
    model = build_model("eks-gaussian", {"Sigma": np.eye(2)})
    mu0 = gauss_init(5, 300, 2)
    curves = [
        simulate_frozen_law(model, mu0, FrozenLawConfig(nf, seed=0), T=1.0)
        for nf in (8, 16, 32, 64)
    ]
    out = moment_bound_check(curves, 4.0)
    sups = np.array(out["sup_moments"])
    assert np.all(sups < 10 * sups[0])
    assert abs(out["trend_slope"]) <= 2.0


def test_time_regularity_check():
    model = build_model("eks-gaussian", {"Sigma": np.eye(2)})
    mu0 = gauss_init(6, 400, 2)
    curve = simulate_frozen_law(
        model, mu0, FrozenLawConfig(32, seed=1), T=1.0
    )
    out = time_regularity_check(curve, 2.0)
    assert set(out["lag_medians"]) == {1, 2, 4}
    ups = [out["lag_medians"][k] for k in (1, 2, 4)]
    assert ups[0] <= ups[1] <= ups[2]  # larger lags move further
    assert 0.0 < out["scaling_exponent"] <= 1.5
    assert out["lipschitz"] > 0


def test_stability_check_common_noise():
    model = build_model("eks-gaussian", {"Sigma": np.eye(2)})
    mu0 = gauss_init(7, 300, 2)
    rho0 = EmpiricalMeasure(mu0.atoms + np.array([0.5, 0.0]))
    out = stability_check(model, mu0, rho0, FrozenLawConfig(16, seed=2), 1.0, 2.0)
    assert out["ratios"][0] == pytest.approx(1.0)
    assert out["max_ratio"] <= 10.0
    same = stability_check(model, mu0, mu0, FrozenLawConfig(16, seed=2), 1.0, 2.0)
    assert same["max_ratio"] == 0.0


# ---------------------------------------------------------------------------
# duality and semigroup
# ---------------------------------------------------------------------------

def test_duality_within_monte_carlo_error():
    model = build_model("eks-gaussian", {"Sigma": np.diag([1.0, 4.0])})
    mu0 = gauss_init(8, 2000, 2)
    cfg = FrozenLawConfig(16, inner=2, seed=3)
    out = feynman_kac_duality(model, mu0, phi_sq(2), cfg, T=0.5)
    assert out["residual"] <= 3.0 * out["se"] + 0.05, out


def test_semigroup_zero_defect_common_noise():
    model = build_model("landau-maxwell")
    mu0 = gauss_init(9, 200, 3)
    cfg = FrozenLawConfig(16, inner=2, seed=4, fine_cells=64)
    for s in (0.25, 0.5, 0.75):
        out = semigroup_check(model, mu0, cfg, s=s, T=1.0)
        assert out["defect"] == 0.0, out


def test_semigroup_fresh_noise_positive():
    model = build_model("eks-gaussian", {"Sigma": np.eye(2)})
    mu0 = gauss_init(10, 200, 2)
    cfg = FrozenLawConfig(16, seed=5)
    out = semigroup_check(model, mu0, cfg, s=0.5, T=1.0, common_noise=False)
    assert 0.0 < out["defect"] < 1.0


def test_semigroup_off_grid_restart_rejected():
    model = build_model("eks-gaussian", {"Sigma": np.eye(2)})
    mu0 = gauss_init(11, 50, 2)
    with pytest.raises(ValueError):
        semigroup_check(model, mu0, FrozenLawConfig(16, seed=0), s=0.3, T=1.0)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def test_save_curve_and_summary(tmp_path):
    model = build_model("eks-gaussian", {"Sigma": np.eye(2)})
    mu0 = gauss_init(12, 20, 2)
    curve = simulate_frozen_law(model, mu0, FrozenLawConfig(4, seed=0), T=1.0)
    p1 = tmp_path / "curve.txt"
    save_curve(curve, p1)
    text = p1.read_text().splitlines()
    assert text[0].startswith("# roughmf-curve v1 ")
    data = np.loadtxt(p1)
    assert data.shape == (5 * 20, 4)  # (time, id, y1, y2)
    p2 = tmp_path / "summary.txt"
    save_curve_summary(curve, p2)
    summ = np.loadtxt(p2)
    assert summ.shape == (5, 1 + 2 + 2 + 4)
    assert np.allclose(summ[0, 3:5], mu0.mean())
