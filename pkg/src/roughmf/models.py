"""Concrete mean-field models: the ensemble Kalman sampler (EKS) and the
Maxwell-molecule Landau system, plus the PSD matrix square root, sampling
audits of the coefficient assumptions, and the closed-form moment ODES used
as oracles by the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .measures import EmpiricalMeasure, dp_bracket, moment


def covariance(mu: EmpiricalMeasure) -> np.ndarray:
    """Weighted covariance sum w_i (y_i - m)(y_i - m)^T; exactly symmetric."""
    m = mu.mean()
    z = mu.atoms - m
    C = np.einsum("n,ni,nj->ij", mu.weights, z, z)
    return 0.5 * (C + C.T)


def psd_sqrt(A: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix via eigendecomposition.

    Round-off negative eigenvalues are clamped to zero; eigenvalues below
    -1e-12 * trace mean the input is genuinely indefinite and are an error.
    """
    A = np.asarray(A, dtype=float)
    if not np.allclose(A, A.T, atol=1e-10):
        raise ValueError("psd_sqrt expects a symmetric matrix")
    w, V = np.linalg.eigh(A)
    floor = -1e-12 * max(np.trace(A), 1.0)
    if np.any(w < floor):
        raise ValueError(f"matrix is indefinite: min eigenvalue {w.min():g}")
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


@dataclass
class MeanFieldModel:
    """Coefficient pair (b, sigma) on state x measure, with derivatives.

    sigma_y returns the (d, d, d) tensor [i, k, j] = d sigma_{ik} / d y_j at
    frozen measure; constants carries the declared assumption envelopes
    (keys: "F" Lipschitz-in-measure envelope, "C" growth/coercivity
    constant, "kappa" the moment index used by the audit).
    """

    name: str
    d: int
    b: Callable[[np.ndarray, EmpiricalMeasure], np.ndarray]
    sigma: Callable[[np.ndarray, EmpiricalMeasure], np.ndarray]
    sigma_y: Callable[[np.ndarray, EmpiricalMeasure], np.ndarray]
    b_y: Optional[Callable[[np.ndarray, EmpiricalMeasure], np.ndarray]] = None
    constants: dict = field(default_factory=dict)
    # optional vectorised forms over a whole ensemble (N, d); the particle
    # simulator falls back to per-particle calls when these are absent
    b_batch: Optional[Callable[[np.ndarray, EmpiricalMeasure], np.ndarray]] = None
    sigma_dw_batch: Optional[
        Callable[[np.ndarray, EmpiricalMeasure, np.ndarray], np.ndarray]
    ] = None
    # when sigma(y, mu) = linear_a0 . y + sigma(0, mu), the (d, d, d) tensor
    # of the state-linear part; unlocks exact affine flows in the RDE layer
    linear_a0: Optional[np.ndarray] = None


# ---------------------------------------------------------------------------
# ensemble Kalman sampler
# ---------------------------------------------------------------------------

@dataclass
class Potential:
    """V with analytic derivatives, for the EKS drift -Cov(mu) grad V."""

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]


def quadratic_potential(Sigma: np.ndarray) -> Potential:
    """V(y) = 1/2 y^T Sigma^{-1} y, the Gaussian-target potential."""
    Sigma = np.asarray(Sigma, dtype=float)
    P = np.linalg.inv(Sigma)
    return Potential(
        value=lambda y: 0.5 * float(y @ P @ y),
        grad=lambda y: P @ y,
        hess=lambda y: P,
    )


def eks_coefficients(pot: Potential, y: np.ndarray, mu: EmpiricalMeasure):
    """b = -Cov(mu) grad V(y), sigma = sqrt(2 Cov(mu)) (state-independent)."""
    C = covariance(mu)
    return -C @ pot.grad(y), psd_sqrt(2.0 * C)


def eks_model(pot: Potential, d: int, name: str = "eks-custom") -> MeanFieldModel:
    def b(y, mu):
        return -covariance(mu) @ pot.grad(y)

    def sig(y, mu):
        return psd_sqrt(2.0 * covariance(mu))

    def sig_y(y, mu):
        return np.zeros((d, d, d))

    def b_y(y, mu):
        return -covariance(mu) @ pot.hess(y)

    def b_batch(Y, mu):
        C = covariance(mu)
        return -np.stack([pot.grad(y) for y in Y]) @ C.T

    def sigma_dw_batch(Y, mu, dW):
        return dW @ psd_sqrt(2.0 * covariance(mu)).T

    return MeanFieldModel(
        name=name,
        d=d,
        b=b,
        sigma=sig,
        sigma_y=sig_y,
        b_y=b_y,
        constants={"F": 8.0 * d, "C": 8.0 * d, "kappa": 2.0},
        b_batch=b_batch,
        sigma_dw_batch=sigma_dw_batch,
        linear_a0=np.zeros((d, d, d)),
    )


def eks_gaussian_model(Sigma: np.ndarray) -> MeanFieldModel:
    Sigma = np.asarray(Sigma, dtype=float)
    m = eks_model(quadratic_potential(Sigma), Sigma.shape[0], name="eks-gaussian")
    m.constants["Sigma"] = Sigma
    P = np.linalg.inv(Sigma)

    def b_batch(Y, mu, P=P):
        return -(Y @ P.T) @ covariance(mu).T

    m.b_batch = b_batch
    return m


# ---------------------------------------------------------------------------
# Landau, Maxwell molecules (d = 3)
# ---------------------------------------------------------------------------

#: tensor of the linear matrix field: sigma0(y)_{ik} = sum_j S0[i,k,j] y_j
LANDAU_S0 = np.zeros((3, 3, 3))
LANDAU_S0[0, 0, 1] = 1.0
LANDAU_S0[0, 2, 2] = 1.0
LANDAU_S0[1, 0, 0] = -1.0
LANDAU_S0[1, 1, 2] = 1.0
LANDAU_S0[2, 1, 1] = -1.0
LANDAU_S0[2, 2, 0] = -1.0


def sigma0(y: np.ndarray) -> np.ndarray:
    """Linear matrix field with sigma0(y) sigma0(y)^T = |y|^2 Id - y (x) y."""
    y = np.asarray(y, dtype=float)
    if y.shape != (3,):
        raise ValueError("sigma0 is defined on R^3")
    return np.einsum("ikj,j->ik", LANDAU_S0, y)


def landau_coefficients(y: np.ndarray, mu: EmpiricalMeasure):
    """b = -2y + 2 m(mu); sigma = sigma0(y) - sigma0(m(mu)).

    sigma0 is linear, so its measure average equals its value at the mean.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (3,) or mu.d != 3:
        raise ValueError("the Maxwell-molecule system lives in R^3")
    m = mu.mean()
    return -2.0 * y + 2.0 * m, sigma0(y - m)


def landau_model() -> MeanFieldModel:
    def b(y, mu):
        return landau_coefficients(y, mu)[0]

    def sig(y, mu):
        return landau_coefficients(y, mu)[1]

    def sig_y(y, mu):
        return LANDAU_S0

    def b_y(y, mu):
        return -2.0 * np.eye(3)

    def b_batch(Y, mu):
        return -2.0 * Y + 2.0 * mu.mean()

    def sigma_dw_batch(Y, mu, dW):
        return np.einsum("ikj,nj,nk->ni", LANDAU_S0, Y - mu.mean(), dW)

    return MeanFieldModel(
        name="landau-maxwell",
        d=3,
        b=b,
        sigma=sig,
        sigma_y=sig_y,
        b_y=b_y,
        constants={"F": 16.0, "C": 16.0, "kappa": 2.0},
        b_batch=b_batch,
        sigma_dw_batch=sigma_dw_batch,
        linear_a0=LANDAU_S0,
    )


# ---------------------------------------------------------------------------
# assumption audit
# ---------------------------------------------------------------------------

def assumption_audit(model: MeanFieldModel, corpus) -> dict:
    """Evaluate the declared coefficient inequalities on a sample corpus.

    corpus: iterable of (y, mu, nu) triples.  Checks, with declared
    constants F and C and the conservative dual-metric upper bound:
      (i)   |b(y,mu)-b(y,nu)| + |sigma(y,mu)-sigma(y,nu)|
              <= F (1 + |y|) * upper-bracket(mu, nu)
      (ii)  <b(y,mu), y> <= C (1 + |y|^2 + M_2(mu))
      (iii) |sigma(y,mu)|^2 <= C (1 + |y|^2 + M_2(mu))
    Returns per-check violation lists (empty lists mean a clean audit).
    """
    F = model.constants.get("F", 1.0)
    C = model.constants.get("C", 1.0)
    kappa = model.constants.get("kappa", 2.0)
    viol = {"measure_lipschitz": [], "coercivity": [], "growth": []}
    for idx, (y, mu, nu) in enumerate(corpus):
        y = np.asarray(y, dtype=float)
        lhs = np.linalg.norm(model.b(y, mu) - model.b(y, nu)) + np.linalg.norm(
            model.sigma(y, mu) - model.sigma(y, nu)
        )
        _, upper, _ = dp_bracket(mu, nu, kappa)
        if lhs > F * (1.0 + np.linalg.norm(y)) * upper + 1e-9:
            viol["measure_lipschitz"].append(idx)
        env = C * (1.0 + float(y @ y) + moment(mu, 2.0))
        if float(model.b(y, mu) @ y) > env + 1e-9:
            viol["coercivity"].append(idx)
        if np.linalg.norm(model.sigma(y, mu)) ** 2 > env + 1e-9:
            viol["growth"].append(idx)
    viol["clean"] = not any(viol[k] for k in ("measure_lipschitz", "coercivity", "growth"))
    return viol


# ---------------------------------------------------------------------------
# moment-ODE oracles (closed-form mean/covariance dynamics)
# ---------------------------------------------------------------------------

def _rk4(f, y0, T, steps):
    y = np.asarray(y0, dtype=float).copy()
    h = T / steps
    out = [y.copy()]
    t = 0.0
    for _ in range(steps):
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
        out.append(y.copy())
    return np.array(out)


def eks_gaussian_moment_ode(Sigma, m0, C0, T: float, steps: int = 4000):
    """Mean/covariance dynamics of the Gaussian-target EKS:

        dm/dt = -C Sigma^{-1} m,   dC/dt = -2 C Sigma^{-1} C + 2 C,

    integrated by RK4.  Returns (times, means, covariances).
    """
    Sigma = np.asarray(Sigma, dtype=float)
    P = np.linalg.inv(Sigma)
    d = Sigma.shape[0]

    def f(t, state):
        m = state[:d]
        C = state[d:].reshape(d, d)
        dm = -C @ P @ m
        dC = -2.0 * C @ P @ C + 2.0 * C
        return np.concatenate([dm, dC.ravel()])

    state0 = np.concatenate([np.asarray(m0, float), np.asarray(C0, float).ravel()])
    traj = _rk4(f, state0, T, steps)
    times = np.linspace(0.0, T, steps + 1)
    return times, traj[:, :d], traj[:, d:].reshape(-1, d, d)


def landau_moment_oracle(m0, v0, t):
    """Maxwell-molecule moments: the mean is conserved and the scalar
    variance v = M_2 - |m|^2 decays as v0 e^{-2t}."""
    return np.asarray(m0, dtype=float), float(v0) * np.exp(-2.0 * np.asarray(t))


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

def build_model(name: str, params: Optional[dict] = None) -> MeanFieldModel:
    params = params or {}
    if name == "eks-gaussian":
        Sigma = np.asarray(params.get("Sigma", np.eye(int(params.get("d", 2)))))
        return eks_gaussian_model(Sigma)
    if name == "eks-custom":
        pot = params["potential"]
        return eks_model(pot, int(params["d"]))
    if name == "landau-maxwell":
        return landau_model()
    raise ValueError(f"unknown model {name!r}")
