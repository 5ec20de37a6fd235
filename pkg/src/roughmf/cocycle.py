"""Joint state-law flow and numerical verification of the perfect-cocycle
property.

The flow advances a distinguished point by an RDE whose time-dependent
coefficients are read off a frozen-law particle curve, while the law itself
advances by the particle scheme.  The cocycle check compares the one-shot
flow over s + t with the two-stage flow that restarts at s under the
time-shifted noise; the shift replays the exact noise tails, so the defect
measures only floating-point re-anchoring and scheme self-consistency.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng
from .grids import TimeGrid
from .measures import EmpiricalMeasure, dp_bracket, wasserstein_p
from .meanfield import FrozenLawConfig, MeasureCurve, simulate_frozen_law
from .models import MeanFieldModel
from .rde import CoefficientField, RdeSolution, doss_sussmann_solve, linear_coefficients
from .roughpath import STRAT, NoisePath, RoughPath, brownian_lift, shift


@dataclass(frozen=True)
class JointState:
    point: np.ndarray
    law: EmpiricalMeasure

    def __post_init__(self):
        object.__setattr__(self, "point", np.atleast_1d(np.asarray(self.point, float)))
        if self.point.shape != (self.law.d,):
            raise ValueError("point and law dimensions must agree")


@dataclass
class FlowRun:
    model: MeanFieldModel
    cfg: FrozenLawConfig  # law-freeze layout over the full horizon
    T: float
    alpha: float = 0.4
    rde_per_freeze: Optional[int] = None  # rough cells per freeze interval
    driver_fine_per: int = 8  # fine noise cells per rough cell
    _noise: Optional[NoisePath] = field(default=None, repr=False)

    def __post_init__(self):
        if self.rde_per_freeze is None:
            self.rde_per_freeze = self.cfg.inner

    @property
    def rde_cells(self) -> int:
        return self.cfg.n_freeze * self.rde_per_freeze

    def driver_noise(self) -> NoisePath:
        if self._noise is None:
            fine = TimeGrid.regular(0.0, self.T, self.rde_cells * self.driver_fine_per)
            self._noise = NoisePath.generate(
                self.cfg.seed, fine, self.model.d, lane=rng.DRIVER_LANE
            )
        return self._noise


def frozen_coefficient_field(
    model: MeanFieldModel, curve: MeasureCurve
) -> CoefficientField:
    """Time-dependent RDE coefficients from a frozen-law curve: the measure
    argument is held at the curve state of the enclosing freeze interval."""
    t0 = float(curve.times[0])
    delta = float(curve.times[1] - curve.times[0])
    n = len(curve.measures) - 1

    def measure_at(t: float) -> EmpiricalMeasure:
        idx = int(np.clip(np.floor((t - t0) / delta + 1e-9), 0, n - 1))
        return curve.measures[idx]

    def b(t, y):
        return model.b(y, measure_at(t))

    if model.linear_a0 is not None:
        d = model.d
        zero = np.zeros(d)

        def a1(t):
            return model.sigma(zero, measure_at(t))

        return linear_coefficients(model.linear_a0, a1, None, b=b, d=d)

    return CoefficientField(
        sigma=lambda t, y: model.sigma(y, measure_at(t)),
        sigma_y=lambda t, y: model.sigma_y(y, measure_at(t)),
        b=b,
    )


@dataclass
class FlowDetails:
    curve: MeasureCurve
    solution: RdeSolution
    rough: RoughPath
    coeff: CoefficientField

    def state_at(self, t: float) -> JointState:
        i = self.solution.path.base.grid.index_of(t)
        return JointState(self.solution.Y[i], self.curve.at(t))


def _sub_cfg(run: FlowRun, k_freeze: int) -> FrozenLawConfig:
    per = run.cfg.fine_cells // run.cfg.steps
    return FrozenLawConfig(
        n_freeze=k_freeze,
        inner=run.cfg.inner,
        seed=run.cfg.seed,
        fine_cells=k_freeze * run.cfg.inner * per,
    )


def flow_details(run: FlowRun, e0: JointState, t: float) -> FlowDetails:
    """Run the joint flow on [0, t] and keep all intermediate structure."""
    delta = run.T / run.cfg.n_freeze
    k = int(round(t / delta))
    if abs(k * delta - t) > 1e-9 or k < 1 or t > run.T + 1e-9:
        raise ValueError("flow horizon must sit on the law-freeze grid")
    h_fine_law = run.T / run.cfg.fine_cells
    curve = simulate_frozen_law(
        run.model, e0.law, _sub_cfg(run, k), t, h_fine=h_fine_law
    )
    coeff = frozen_coefficient_field(run.model, curve)
    grid = TimeGrid.regular(0.0, t, k * run.rde_per_freeze)
    rp = brownian_lift(run.driver_noise(), grid, STRAT, run.alpha)
    sol = doss_sussmann_solve(coeff, rp, e0.point)
    return FlowDetails(curve, sol, rp, coeff)


def joint_flow(run: FlowRun, e0: JointState, t: float) -> JointState:
    if t == 0.0:
        return e0
    det = flow_details(run, e0, t)
    return JointState(det.solution.Y[-1], det.curve.measures[-1])


def cocycle_defect(
    run: FlowRun,
    e0: JointState,
    s: float,
    t: float,
    p: float = 2.0,
    details: Optional[FlowDetails] = None,
) -> dict:
    """Compare phi(s+t, omega, e0) with phi(t, theta_s omega, phi(s, omega, e0)).

    The second stage restarts the law particles from their state at s with
    the replayed noise tails and solves the point RDE against the shifted
    rough driver.  Reports point and law defects plus the single-run
    self-consistency defect used as the tolerance scale.
    """
    delta = run.T / run.cfg.n_freeze
    ks, kt = int(round(s / delta)), int(round(t / delta))
    if abs(ks * delta - s) > 1e-9 or abs(kt * delta - t) > 1e-9:
        raise ValueError("s and t must sit on the law-freeze grid")
    if details is None:
        details = flow_details(run, e0, s + t)
    end_lhs = details.state_at(s + t)
    if s == 0.0 or t == 0.0:
        return {
            "point_defect": 0.0,
            "law_defect": 0.0,
            "law_upper": 0.0,
            "self_defect": details.solution.integral_defect(),
            "s": s,
            "t": t,
        }
    mid = details.state_at(s)

    # law leg: restart at s with the replayed noise tails, rebased to [0, t]
    h_fine_law = run.T / run.cfg.fine_cells
    fine_offset = int(round(s / h_fine_law))
    lawB = simulate_frozen_law(
        run.model,
        mid.law,
        _sub_cfg(run, kt),
        t,
        t0=0.0,
        fine_offset=fine_offset,
        h_fine=h_fine_law,
    )
    coeffB = frozen_coefficient_field(run.model, lawB)

    # point leg: shift the driver, restrict to [0, t], solve from the mid point
    full_grid = details.rough.grid
    i_s = full_grid.index_of(s)
    i_end = full_grid.index_of(s + t)
    rpB = shift(details.rough, s).restrict(i_s, i_end)
    solB = doss_sussmann_solve(coeffB, rpB, mid.point)

    point_defect = float(np.linalg.norm(solB.Y[-1] - end_lhs.point))
    law_defect = wasserstein_p(lawB.measures[-1], end_lhs.law, p)
    _, law_upper, _ = dp_bracket(lawB.measures[-1], end_lhs.law, p)
    return {
        "point_defect": point_defect,
        "law_defect": float(law_defect),
        "law_upper": float(law_upper),
        "self_defect": details.solution.integral_defect(),
        "s": s,
        "t": t,
    }


# ---------------------------------------------------------------------------
# Wong-Zakai ODE approximation
# ---------------------------------------------------------------------------

def wong_zakai_run(
    coeff: CoefficientField,
    noise: NoisePath,
    level: int,
    corrected: bool,
    xi,
) -> tuple[np.ndarray, np.ndarray]:
    """Heun integration of dY = b dt + sigma Wdot^n dt - (corrected ?
    (1/2)(grad sigma) sigma dt : 0) against the level-n piecewise-linear
    noise; corrected runs target the Ito solution, uncorrected the
    Stratonovich/rough one.  Returns (times, trajectory on the fine grid)."""
    M = noise.fine_grid.n_cells
    cells_per = M // (1 << level)
    if cells_per * (1 << level) != M:
        raise ValueError("2^level dyadic cells must align with the fine grid")
    W = noise.values()
    ts = noise.fine_grid.points
    nodes = np.arange(0, M + 1, cells_per)
    vel = np.empty((M, noise.d))
    for c in range(1 << level):
        a, b_ = nodes[c], nodes[c + 1]
        vel[a:b_] = (W[b_] - W[a]) / (ts[b_] - ts[a])
    xi = np.atleast_1d(np.asarray(xi, float))

    def rhs(t, y, v):
        dy = coeff.sigma(t, y) @ v
        if coeff.b is not None:
            dy = dy + coeff.b(t, y)
        if corrected:
            sig = coeff.sigma(t, y)
            gs = coeff.sigma_y(t, y)
            dy = dy - 0.5 * np.einsum("ikj,jk->i", gs, sig)
        return dy

    Y = np.empty((M + 1, len(xi)))
    Y[0] = xi
    for k in range(M):
        h = ts[k + 1] - ts[k]
        v = vel[k]
        k1 = rhs(ts[k], Y[k], v)
        k2 = rhs(ts[k] + 0.5 * h, Y[k] + 0.5 * h * k1, v)
        k3 = rhs(ts[k] + 0.5 * h, Y[k] + 0.5 * h * k2, v)
        k4 = rhs(ts[k + 1], Y[k] + h * k3, v)
        Y[k + 1] = Y[k] + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return ts, Y


# ---------------------------------------------------------------------------
# continuity of the flow map
# ---------------------------------------------------------------------------

def _joint_distance(a: JointState, b: JointState, p: float = 2.0) -> float:
    return float(np.linalg.norm(a.point - b.point)) + wasserstein_p(a.law, b.law, p)


def continuity_probe(
    run: FlowRun,
    e0: JointState,
    t: float,
    epsilons=(1e-1, 1e-2, 1e-3, 1e-4),
) -> dict:
    """Empirical modulus of continuity of the flow in each input channel.

    Perturbs the initial point, the initial cloud (rigid translation), and
    the driving noise (uniform-norm drift bump of size eps), and fits the
    log-log slope of output distance against eps."""
    base = joint_flow(run, e0, t)
    d = run.model.d
    u = np.ones(d) / np.sqrt(d)
    out = {}
    for channel in ("point", "law", "noise"):
        dists = []
        for eps in epsilons:
            if channel == "point":
                e1 = JointState(e0.point + eps * u, e0.law)
                pert = joint_flow(run, e1, t)
            elif channel == "law":
                e1 = JointState(
                    e0.point, EmpiricalMeasure(e0.law.atoms + eps * u, e0.law.weights)
                )
                pert = joint_flow(run, e1, t)
            else:
                noise = run.driver_noise()
                widths = noise.fine_grid.widths[:, None]
                bumped = NoisePath(
                    noise.seed,
                    noise.fine_grid,
                    noise.increments + eps * widths / run.T * np.ones(d),
                    noise.lane,
                    noise.member,
                )
                run2 = FlowRun(
                    run.model, run.cfg, run.T, run.alpha,
                    run.rde_per_freeze, run.driver_fine_per,
                )
                run2._noise = bumped
                pert = joint_flow(run2, e0, t)
            dists.append(max(_joint_distance(pert, base), 1e-300))
        le = np.log(np.asarray(epsilons))
        ld = np.log(np.asarray(dists))
        slope = float(np.polyfit(le, ld, 1)[0])
        out[channel] = {"eps": list(epsilons), "dist": dists, "slope": slope}
    return out
