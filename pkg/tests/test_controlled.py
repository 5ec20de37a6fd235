import numpy as np
import pytest

from roughmf.controlled import (
    ControlledPath,
    Func2,
    compose,
    controlled_distance,
    sewing_constant,
)
from roughmf.grids import TimeGrid
from roughmf.roughpath import STRAT, NoisePath, RoughPath, brownian_lift

from conftest import random_rough_path


def smooth_rough_path(cells=64, alpha=0.4):
    """X_t = (t, t^2) on [0, 1] with exact iterated integrals."""
    grid = TimeGrid.regular(0.0, 1.0, cells)
    t = grid.points
    X = np.stack([t, t**2], axis=1)
    s, e = t[:-1], t[1:]
    xx = np.empty((cells, 2, 2))
    # int_s^t (u - s) du, int (u^2 - s^2) du, etc. in closed form
    xx[:, 0, 0] = 0.5 * (e - s) ** 2
    xx[:, 0, 1] = np.array([(en**3 - sn**3) * 2 / 3 - sn * (en**2 - sn**2)
                            for sn, en in zip(s, e)])
    xx[:, 1, 0] = np.array([0.5 * (en**2 - sn**2) * 1 - sn**2 * (en - sn)
                            - (0.5 * (en - sn) ** 2 * 0)  # placeholder, fixed below
                            for sn, en in zip(s, e)])
    # int_s^t (u^2 - s^2) du would be the (1,0)... recompute both cleanly:
    xx[:, 0, 1] = 2.0 / 3.0 * (e**3 - s**3) - s * (e**2 - s**2)
    xx[:, 1, 0] = 1.0 / 3.0 * (e**3 - s**3) - s**2 * (e - s) \
        - (2.0 / 3.0 * (e**3 - s**3) - s * (e**2 - s**2)) \
        + (e - s) * (e**2 - s**2) - (1.0 / 3.0) * 0
    # use integration by parts: int X1 dX0 = X1 X0 |increment product - int X0 dX1
    xx[:, 1, 0] = (e**2 - s**2) * (e - s) - xx[:, 0, 1]
    xx[:, 1, 1] = 0.5 * (e**2 - s**2) ** 2
    return RoughPath(grid, X, xx, alpha)


def test_sewing_constant():
    assert sewing_constant(0.4) == pytest.approx(2**1.2 / (1 - 2**-0.2))
    with pytest.raises(ValueError):
        sewing_constant(1.0 / 3.0)


# ---------------------------------------------------------------------------
# Gubinelli remainder
# ---------------------------------------------------------------------------

def test_remainder_exactly_controlled():
    rp = random_rough_path(0)
    A = np.array([[1.0, 2.0], [0.5, -1.0]])
    Y = rp.values @ A.T + np.array([3.0, -1.0])
    Yp = np.tile(A, (len(Y), 1, 1))
    cp = ControlledPath(rp, Y, Yp)
    assert np.max(np.abs(cp.gubinelli_remainder(rp.times[3], rp.times[50]))) <= 1e-12
    assert cp.remainder_norm() <= 1e-10
    assert cp.prime_norm() == 0.0


def test_remainder_zero_prime():
    rp = random_rough_path(1)
    Y = np.sin(rp.times)[:, None] * np.ones((1, 2))
    Yp = np.zeros((len(Y), 2, 2))
    cp = ControlledPath(rp, Y, Yp)
    s, t = rp.times[2], rp.times[9]
    assert np.allclose(cp.gubinelli_remainder(s, t), Y[9] - Y[2])


def test_remainder_square_of_path():
    # scalar X, Y = X^2, Y' = 2X: remainder over (s,t) is exactly X_{s,t}^2
    noise = NoisePath.generate(5, TimeGrid.regular(0, 1, 1024), 1)
    rp = brownian_lift(noise, TimeGrid.regular(0, 1, 64), STRAT)
    X = rp.values[:, 0]
    cp = ControlledPath(rp, X**2, (2 * X)[:, None])
    s, t = rp.times[10], rp.times[40]
    x_inc = X[40] - X[10]
    assert cp.gubinelli_remainder(s, t)[()] == pytest.approx(x_inc**2, abs=1e-14)


def test_seminorm_examples():
    rp = random_rough_path(2)
    n = len(rp.times)
    const = ControlledPath(rp, np.full((n, 2), 2.0), np.zeros((n, 2, 2)))
    assert const.seminorm() == 0.0
    ident = ControlledPath(rp, rp.values, np.tile(np.eye(2), (n, 1, 1)))
    assert ident.seminorm() <= 1e-10
    assert ident.full_norm() >= np.sqrt(2)  # includes |Y'_0| = |Id|
    lam = 3.0
    scaled = ControlledPath(rp, lam * rp.values, lam * np.tile(np.eye(2), (n, 1, 1)))
    assert scaled.seminorm() == pytest.approx(lam * ident.seminorm(), abs=1e-12)


def test_controlled_distance_properties():
    rp = random_rough_path(3)
    n = len(rp.times)
    cp = ControlledPath(rp, rp.values**2, 2 * rp.values[:, :, None] * np.eye(2))
    assert controlled_distance(cp, cp) == 0.0
    B = np.array([[0.3, 0.0], [0.1, -0.2]])
    cq = ControlledPath(rp, cp.Y, cp.Yprime + B)
    assert controlled_distance(cp, cq) == controlled_distance(cq, cp)
    # constant shift of Y' leaves the alpha part untouched and moves the
    # remainder by B X_{s,t}
    ii = 4
    jj = 50
    dX = rp.increment(ii, jj)
    expected = np.linalg.norm(B @ dX) / (rp.times[jj] - rp.times[ii]) ** 0.8
    d = controlled_distance(cp, cq)
    assert d >= expected - 1e-12


# ---------------------------------------------------------------------------
# rough integral
# ---------------------------------------------------------------------------

def test_integral_constant_scalar():
    rp = random_rough_path(4)
    n = len(rp.times)
    c = 2.5
    cp = ControlledPath(rp, np.full(n, c), np.zeros((n, 2)))
    out = cp.rough_integral(rp.times[0], rp.times[-1])
    assert np.allclose(out, c * rp.increment(0, len(rp.times) - 1), atol=1e-12)


def test_integral_additivity_exact():
    rp = random_rough_path(5)
    n = len(rp.times)
    cp = ControlledPath(rp, np.cos(rp.values[:, 0]) * np.ones(n),
                        np.stack([-np.sin(rp.values[:, 0]), np.zeros(n)], axis=1))
    t = rp.times
    lhs = cp.rough_integral(t[0], t[20]) + cp.rough_integral(t[20], t[64])
    rhs = cp.rough_integral(t[0], t[64])
    assert np.array_equal(lhs, rhs)


def test_integral_smooth_linear_time():
    # scalar X_t = t with Strat-consistent XX = 1/2 (t-s)^2: int X dX = t^2/2
    grid = TimeGrid.regular(0.0, 1.0, 1 << 12)
    t = grid.points
    rp = RoughPath(grid, t[:, None], (0.5 * np.diff(t) ** 2)[:, None, None], 0.4)
    cp = ControlledPath(rp, t, np.ones((len(t), 1)))
    for (s, e) in [(0.0, 1.0), (0.25, 0.75)]:
        val = cp.rough_integral(s, e)[0]
        assert val == pytest.approx(0.5 * (e**2 - s**2), abs=1e-15)


def test_integral_against_riemann_stieltjes_smooth():
    # integrand sin(X^1) against the C^1 path (t, t^2): reference by fine
    # trapezoid quadrature of int f(t) x'(t) dt
    rp = smooth_rough_path(cells=1 << 12)
    t = rp.times
    f = np.sin(t)  # = sin(X^1_t)
    cp = ControlledPath(
        rp, np.stack([f, np.zeros_like(f)], axis=1),
        np.stack([np.stack([np.cos(t), np.zeros_like(t)], axis=1),
                  np.zeros((len(t), 2))], axis=1),
    )
    got = float(cp.rough_integral(0.0, 1.0))  # contracts <Y, dX>
    tt = np.linspace(0, 1, 200001)
    ref = np.trapezoid(np.sin(tt) * 1.0, tt)  # against dX^0 = dt
    assert abs(got - ref) <= 1e-6


def test_local_error_certificate_random_cells():
    rp = random_rough_path(6, cells=256, fine_per=8)
    X = rp.values
    cp = ControlledPath(rp, np.sin(X[:, 0]),
                        np.stack([np.cos(X[:, 0]), np.zeros(len(X))], axis=1))
    rngs = np.random.default_rng(0)
    for _ in range(200):
        i = int(rngs.integers(0, 255))
        j = int(rngs.integers(i + 1, 257))
        val, bound, ok = cp.local_error_certificate(rp.times[i], rp.times[j])
        assert ok, (i, j, val, bound)


def test_local_error_decay_rate():
    # one-window local error of the compensated sum decays at >= 3a - eps
    errs, hs = [], []
    for cells in (8, 16, 32, 64, 128):
        rp = random_rough_path(7, cells=cells, fine_per=2048 // cells)
        X = rp.values
        cp = ControlledPath(rp, np.sin(X[:, 0]),
                            np.stack([np.cos(X[:, 0]), np.zeros(len(X))], axis=1))
        v, _, _ = cp.local_error_certificate(rp.times[0], rp.times[2])
        errs.append(max(v, 1e-300))
        hs.append(rp.times[2] - rp.times[0])
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope >= 3 * 0.4 - 0.25, slope


# ---------------------------------------------------------------------------
# composition
# ---------------------------------------------------------------------------

def test_compose_identity_and_linear():
    rp = random_rough_path(8)
    n = len(rp.times)
    cp = ControlledPath(rp, rp.values, np.tile(np.eye(2), (n, 1, 1)))
    ident = Func2(value=lambda t, y: y, grad=lambda t, y: np.eye(2))
    out = compose(ident, cp)
    assert np.array_equal(out.Y, cp.Y)
    assert np.array_equal(out.Yprime, cp.Yprime)

    A = np.array([[2.0, 1.0], [0.0, -1.0]])
    lin = Func2(value=lambda t, y: A @ y + np.array([np.sin(t), 0.0]),
                grad=lambda t, y: A)
    out = compose(lin, cp)
    assert np.allclose(out.Y, cp.Y @ A.T + np.stack(
        [np.sin(rp.times), np.zeros(n)], axis=1))
    assert np.allclose(out.Yprime, np.einsum("ij,njk->nik", A, cp.Yprime))


def test_compose_chain_rule_and_remainder():
    rp = random_rough_path(9)
    n = len(rp.times)
    cp = ControlledPath(rp, rp.values, np.tile(np.eye(2), (n, 1, 1)))
    sq = Func2(value=lambda t, y: np.array(float(y @ y)),
               grad=lambda t, y: 2.0 * y)
    out = compose(sq, cp)
    # derivative contract (f o Y)' = grad f . Y', exactly
    assert np.array_equal(out.Yprime, 2.0 * cp.Y)
    # one-cell remainder of |X|^2 is |X_{s,t}|^2
    s, t = rp.times[5], rp.times[6]
    r = out.gubinelli_remainder(s, t)
    x = rp.increment(5, 6)
    assert float(r) == pytest.approx(float(x @ x), abs=1e-14)


def test_compose_leibniz():
    rp = random_rough_path(10)
    n = len(rp.times)
    cp = ControlledPath(rp, rp.values, np.tile(np.eye(2), (n, 1, 1)))
    g = Func2(value=lambda t, y: np.array(y[0]), grad=lambda t, y: np.array([1.0, 0.0]))
    h = Func2(value=lambda t, y: np.array(y[1]), grad=lambda t, y: np.array([0.0, 1.0]))
    gh = Func2(value=lambda t, y: np.array(y[0] * y[1]),
               grad=lambda t, y: np.array([y[1], y[0]]))
    cg, ch, cgh = compose(g, cp), compose(h, cp), compose(gh, cp)
    assert np.allclose(cgh.Y, cg.Y * ch.Y)
    assert np.allclose(cgh.Yprime, cg.Y[:, None] * ch.Yprime + ch.Y[:, None] * cg.Yprime)


def test_compose_shape_mismatch_rejected():
    rp = random_rough_path(11)
    n = len(rp.times)
    cp = ControlledPath(rp, rp.values, np.tile(np.eye(2), (n, 1, 1)))
    bad = Func2(value=lambda t, y: y, grad=lambda t, y: np.eye(3))
    with pytest.raises(ValueError):
        compose(bad, cp)
