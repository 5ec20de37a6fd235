"""Frozen-law particle approximation of the nonlinear Fokker-Planck flow.

On each law-freeze sub-interval the measure argument of the coefficients is
held at the empirical measure of the ensemble at the sub-interval start, so
the particles solve a classical SDE within the interval, advanced by
Euler-Maruyama.  Per-particle noise comes from counter-based streams keyed
by (seed, lane, particle index) and is drawn on a fine grid that nests
across refinements and restarts: a restart at a freeze boundary replays the
exact tail of each particle's noise row.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import rng
from .measures import EmpiricalMeasure, dp_bracket, moment, wasserstein_p
from .models import MeanFieldModel, covariance


@dataclass(frozen=True)
class FrozenLawConfig:
    n_freeze: int  # law-freeze sub-intervals over the horizon
    inner: int = 1  # Euler steps per sub-interval
    seed: int = 0
    fine_cells: Optional[int] = None  # noise resolution; default = total steps

    def __post_init__(self):
        if self.n_freeze < 1 or self.inner < 1:
            raise ValueError("need n_freeze >= 1 and inner >= 1")
        steps = self.n_freeze * self.inner
        fc = steps if self.fine_cells is None else self.fine_cells
        if fc % steps != 0:
            raise ValueError("fine_cells must be a multiple of the Euler steps")
        object.__setattr__(self, "fine_cells", fc)

    @property
    def steps(self) -> int:
        return self.n_freeze * self.inner


@dataclass
class MeasureCurve:
    times: np.ndarray
    measures: list  # EmpiricalMeasure per time
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.times) != len(self.measures):
            raise ValueError("one measure per time point required")
        ns = {m.n for m in self.measures}
        if len(ns) != 1:
            raise ValueError("particle count must be constant along the curve")

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > tol:
            raise ValueError(f"time {t} is not on the curve grid")
        return i

    def at(self, t: float) -> EmpiricalMeasure:
        return self.measures[self.index_of(t)]

    def means(self) -> np.ndarray:
        return np.stack([m.mean() for m in self.measures])

    def covariances(self) -> np.ndarray:
        return np.stack([covariance(m) for m in self.measures])


def particle_noise(
    seed: int,
    n_particles: int,
    fine_total: int,
    d: int,
    h_fine: float,
    fine_offset: int = 0,
    fine_count: Optional[int] = None,
    member_offset: int = 0,
) -> np.ndarray:
    """Per-particle Gaussian increments, shape (N, fine_count, d).

    Each particle owns one counter-based stream; a nonzero offset replays
    the same row and slices its tail, which is what makes restarted runs
    bitwise-identical to the corresponding segment of a full run.
    """
    if fine_count is None:
        fine_count = fine_total - fine_offset
    out = np.empty((n_particles, fine_count, d))
    for i in range(n_particles):
        g = rng.stream(seed, rng.PARTICLE_LANE, member_offset + i).standard_normal(
            (fine_offset + fine_count, d)
        )
        out[i] = g[fine_offset:]
    return out * np.sqrt(h_fine)


def _drift_batch(model: MeanFieldModel, Y: np.ndarray, mu: EmpiricalMeasure):
    if model.b_batch is not None:
        return model.b_batch(Y, mu)
    return np.stack([model.b(y, mu) for y in Y])


def _noise_batch(model, Y, mu, dW):
    if model.sigma_dw_batch is not None:
        return model.sigma_dw_batch(Y, mu, dW)
    return np.stack([model.sigma(y, mu) @ w for y, w in zip(Y, dW)])


def simulate_frozen_law(
    model: MeanFieldModel,
    mu0: EmpiricalMeasure,
    cfg: FrozenLawConfig,
    T: float,
    t0: float = 0.0,
    fine_offset: int = 0,
    h_fine: Optional[float] = None,
    record_inner: bool = False,
    member_offset: int = 0,
) -> MeasureCurve:
    """Run the frozen-law scheme on [t0, t0 + T].

    h_fine fixes the underlying noise resolution (defaults to the run's own
    fine grid); restarted legs pass the parent run's h_fine and the fine
    index of the restart time so the noise nests.
    """
    if model.d != mu0.d:
        raise ValueError("model and initial measure dimension mismatch")
    N, d = mu0.n, mu0.d
    steps = cfg.steps
    if h_fine is None:
        h_fine = T / cfg.fine_cells
    fine_count = int(round(T / h_fine))
    if abs(fine_count * h_fine - T) > 1e-9 * max(T, 1.0) or fine_count % steps != 0:
        raise ValueError("fine grid must tile the horizon and the Euler steps")
    per = fine_count // steps
    inc = particle_noise(
        cfg.seed, N, fine_offset + fine_count, d, h_fine,
        fine_offset=fine_offset, fine_count=fine_count,
        member_offset=member_offset,
    )
    dW = inc.reshape(N, steps, per, d).sum(axis=2)
    h = T / steps
    Y = mu0.atoms.copy()
    w = mu0.weights
    times = [t0]
    measures = [EmpiricalMeasure(Y.copy(), w)]
    frozen = None
    for j in range(steps):
        if j % cfg.inner == 0:
            frozen = EmpiricalMeasure(Y.copy(), w)
        B = _drift_batch(model, Y, frozen)
        S = _noise_batch(model, Y, frozen, dW[:, j, :])
        Y = Y + h * B + S
        if not np.all(np.isfinite(Y)):
            raise RuntimeError(f"non-finite particle state at step {j}")
        if record_inner or (j + 1) % cfg.inner == 0:
            times.append(t0 + (j + 1) * h)
            measures.append(EmpiricalMeasure(Y.copy(), w))
    return MeasureCurve(
        np.array(times),
        measures,
        meta={
            "model": model.name,
            "seed": cfg.seed,
            "n_freeze": cfg.n_freeze,
            "inner": cfg.inner,
            "h_fine": h_fine,
            "t0": t0,
            "T": T,
            "fine_offset": fine_offset,
        },
    )


# ---------------------------------------------------------------------------
# diagnostics on curves
# ---------------------------------------------------------------------------

def weak_solution_residual(
    curve: MeasureCurve, model: MeanFieldModel, phi, t: float
) -> float:
    """|int phi dmu_t - int phi dmu_0 - int_0^t int L phi dmu_s ds| with the
    generator L phi = <b, grad phi> + 1/2 sigma sigma^T : D^2 phi and a
    trapezoid rule in time on the curve grid."""
    j = curve.index_of(t)
    gen = np.empty(j + 1)
    for k in range(j + 1):
        mu = curve.measures[k]
        acc = 0.0
        for wgt, y in zip(mu.weights, mu.atoms):
            bv = model.b(y, mu)
            sg = model.sigma(y, mu)
            acc += wgt * (
                float(bv @ phi.grad(y)) + 0.5 * float(np.sum((sg @ sg.T) * phi.hess(y)))
            )
        gen[k] = acc
    ts = curve.times[: j + 1]
    time_integral = float(np.trapezoid(gen, ts))
    lhs = curve.measures[j].integrate(phi.value) - curve.measures[0].integrate(phi.value)
    return abs(lhs - time_integral)


def moment_bound_check(curves: Sequence[MeasureCurve], p: float) -> dict:
    """Sup-in-time p-th moments across refinement levels, with a trend fit."""
    sups = np.array([max(moment(m, p) for m in c.measures) for c in curves])
    ns = np.array([c.meta.get("n_freeze", k + 1) for k, c in enumerate(curves)], float)
    slope = float(np.polyfit(np.log(ns), sups, 1)[0]) if len(curves) > 1 else 0.0
    return {"sup_moments": sups.tolist(), "trend_slope": slope}


def time_regularity_check(curve: MeasureCurve, p: float) -> dict:
    """Dual-metric upper bounds between curve points at dyadic time lags,
    with a log-log scaling fit and the implied Lipschitz constant."""
    n = len(curve.times) - 1
    lag_stats = {}
    for lag in (1, 2, 4):
        if lag > n:
            break
        ups = []
        for i in range(0, n - lag + 1, lag):
            _, up, _ = dp_bracket(curve.measures[i], curve.measures[i + lag], p)
            ups.append(up)
        lag_stats[lag] = float(np.median(ups))
    lags = np.array(sorted(lag_stats))
    meds = np.array([lag_stats[l] for l in lags])
    slope = (
        float(np.polyfit(np.log(lags), np.log(np.maximum(meds, 1e-300)), 1)[0])
        if len(lags) > 1 and np.all(meds > 0)
        else 1.0
    )
    dt = float(curve.times[1] - curve.times[0])
    lip = lag_stats[1] / dt if 1 in lag_stats else 0.0
    return {"lag_medians": {int(k): v for k, v in lag_stats.items()},
            "scaling_exponent": slope, "lipschitz": lip}


def stability_check(
    model: MeanFieldModel,
    mu0: EmpiricalMeasure,
    rho0: EmpiricalMeasure,
    cfg: FrozenLawConfig,
    T: float,
    p: float,
) -> dict:
    """Common-noise two-initial-condition run; distance ratios against the
    initial distance at every freeze boundary."""
    c1 = simulate_frozen_law(model, mu0, cfg, T)
    c2 = simulate_frozen_law(model, rho0, cfg, T)
    d0 = wasserstein_p(mu0, rho0, p)
    if d0 == 0.0:
        return {"initial": 0.0, "ratios": [0.0] * len(c1.times), "max_ratio": 0.0}
    ratios = [
        wasserstein_p(a, b, p) / d0 for a, b in zip(c1.measures, c2.measures)
    ]
    return {"initial": d0, "ratios": ratios, "max_ratio": float(max(ratios))}


# ---------------------------------------------------------------------------
# Feynman-Kac duality and the semigroup defect
# ---------------------------------------------------------------------------

def simulate_dual_sde(
    model: MeanFieldModel,
    curve: MeasureCurve,
    atoms0: np.ndarray,
    cfg: FrozenLawConfig,
    T: float,
    member_offset: int,
) -> np.ndarray:
    """Advance independent particles through the linear SDE whose
    time-dependent coefficients come from the frozen curve.  Used to
    Monte-Carlo the dual value function; the noise lane is offset so it is
    independent of the curve's own particles."""
    N, d = atoms0.shape
    steps = cfg.steps
    h = T / steps
    h_fine = curve.meta.get("h_fine", h)
    fine_count = int(round(T / h_fine))
    per = fine_count // steps
    inc = particle_noise(
        cfg.seed, N, fine_count, d, h_fine, member_offset=member_offset
    )
    dW = inc.reshape(N, steps, per, d).sum(axis=2)
    Y = atoms0.copy()
    for j in range(steps):
        mu = curve.measures[j // cfg.inner]
        B = _drift_batch(model, Y, mu)
        S = _noise_batch(model, Y, mu, dW[:, j, :])
        Y = Y + h * B + S
    return Y


def feynman_kac_duality(
    model: MeanFieldModel,
    mu0: EmpiricalMeasure,
    phi,
    cfg: FrozenLawConfig,
    T: float,
) -> dict:
    """Compare int phi dmu_T against the dual average E[phi(xi_T)] where xi
    solves the curve-frozen linear SDE from mu0-distributed starts with
    independent noise.  Reports both sides and a combined standard error."""
    curve = simulate_frozen_law(model, mu0, cfg, T)
    muT = curve.measures[-1]
    lhs_vals = np.array([phi.value(y) for y in muT.atoms])
    lhs = float(muT.weights @ lhs_vals)
    xiT = simulate_dual_sde(model, curve, mu0.atoms, cfg, T, member_offset=mu0.n + 1)
    rhs_vals = np.array([phi.value(y) for y in xiT])
    rhs = float(mu0.weights @ rhs_vals)
    se = float(
        np.sqrt(np.var(lhs_vals) / muT.n + np.var(rhs_vals) / len(rhs_vals))
    )
    return {"lhs": lhs, "rhs": rhs, "residual": abs(lhs - rhs), "se": se,
            "curve": curve}


def semigroup_check(
    model: MeanFieldModel,
    mu0: EmpiricalMeasure,
    cfg: FrozenLawConfig,
    s: float,
    T: float,
    p: float = 2.0,
    common_noise: bool = True,
) -> dict:
    """Distance between the direct T-run and the restart-at-s run.

    With common noise the restart leg replays the exact noise tail and the
    defect is zero to the bit; with fresh noise it measures the splitting +
    Monte Carlo spread."""
    full = simulate_frozen_law(model, mu0, cfg, T)
    delta = T / cfg.n_freeze
    k = int(round(s / delta))
    if abs(k * delta - s) > 1e-9:
        raise ValueError("restart time must sit on the law-freeze grid")
    mus = full.at(s)
    n2 = cfg.n_freeze - k
    if n2 == 0:
        return {"defect": 0.0, "s": s}
    h_fine = full.meta["h_fine"]
    fine_offset = int(round(s / h_fine))
    cfg2 = FrozenLawConfig(
        n_freeze=n2,
        inner=cfg.inner,
        seed=cfg.seed,
        fine_cells=n2 * cfg.inner * (cfg.fine_cells // cfg.steps),
    )
    leg2 = simulate_frozen_law(
        model,
        mus,
        cfg2,
        T - s,
        t0=s,
        fine_offset=fine_offset if common_noise else 0,
        h_fine=h_fine,
        member_offset=0 if common_noise else 7919,
    )
    defect = wasserstein_p(full.measures[-1], leg2.measures[-1], p)
    return {"defect": float(defect), "s": s, "common_noise": common_noise}


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def save_curve(curve: MeasureCurve, path) -> None:
    """Rows of (time, particle id, coordinates)."""
    rows = []
    for t, m in zip(curve.times, curve.measures):
        for i, y in enumerate(m.atoms):
            rows.append([t, float(i), *y])
    with open(path, "w") as fh:
        fh.write("# roughmf-curve v1 " + json.dumps(curve.meta, sort_keys=True, default=str) + "\n")
        np.savetxt(fh, np.array(rows), fmt="%.17g")


def save_curve_summary(curve: MeasureCurve, path, p: float = 4.0) -> None:
    """Rows of (time, M_2, M_p, mean components, covariance entries)."""
    rows = []
    for t, m in zip(curve.times, curve.measures):
        C = covariance(m)
        rows.append([t, moment(m, 2.0), moment(m, p), *m.mean(), *C.ravel()])
    with open(path, "w") as fh:
        fh.write("# roughmf-curve-summary v1\n")
        np.savetxt(fh, np.array(rows), fmt="%.17g")
