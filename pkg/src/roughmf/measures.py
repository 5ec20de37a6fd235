"""Empirical measures, Wasserstein distances, and two-sided surrogates for
the dual-pairing metric over C^2 test functions with polynomially bounded
derivatives.

The dual metric sup_phi int phi d(mu - nu) over the class {phi : |grad phi|,
|D^2 phi| <= 1 + |y|^{p-1}} is not computable; the module ships a bracket:
a lower bound from a finite certified test family and an upper bound from a
mean-value estimate along a transport coupling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog

ASSIGNMENT_CAP = 512  # exact bipartite matching up to this many atoms
LP_CELL_CAP = 40000  # exact transport LP up to this many coupling cells


@dataclass(frozen=True)
class EmpiricalMeasure:
    atoms: np.ndarray  # (N, d)
    weights: Optional[np.ndarray] = None  # (N,), defaults to uniform

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        if a.ndim != 2 or a.shape[0] < 1:
            raise ValueError("need at least one atom")
        if self.weights is None:
            w = np.full(a.shape[0], 1.0 / a.shape[0])
        else:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (a.shape[0],) or np.any(w < 0):
                raise ValueError("weights must be nonnegative, one per atom")
            if abs(w.sum() - 1.0) > 1e-12:
                raise ValueError("weights must sum to 1 within 1e-12")
        object.__setattr__(self, "atoms", a)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def d(self) -> int:
        return self.atoms.shape[1]

    @property
    def uniform(self) -> bool:
        return bool(np.allclose(self.weights, 1.0 / self.n, rtol=0, atol=1e-14))

    def mean(self) -> np.ndarray:
        return self.weights @ self.atoms

    def integrate(self, phi: Callable[[np.ndarray], float]) -> float:
        return float(sum(w * phi(y) for w, y in zip(self.weights, self.atoms)))


def moment(mu: EmpiricalMeasure, p: float) -> float:
    """p-th absolute moment int |y|^p dmu."""
    if p < 1:
        raise ValueError("p >= 1 required")
    return float(mu.weights @ np.linalg.norm(mu.atoms, axis=1) ** p)


# ---------------------------------------------------------------------------
# Wasserstein distance
# ---------------------------------------------------------------------------

def _coupling_1d(mu: EmpiricalMeasure, nu: EmpiricalMeasure):
    """Quantile coupling (exact optimal in one dimension for every p)."""
    ix = np.argsort(mu.atoms[:, 0])
    iy = np.argsort(nu.atoms[:, 0])
    x, wx = mu.atoms[ix, 0], mu.weights[ix]
    y, wy = nu.atoms[iy, 0], nu.weights[iy]
    cx = np.cumsum(wx)
    cy = np.cumsum(wy)
    qs = np.unique(np.concatenate([cx, cy, [1.0]]))
    qs = qs[qs <= 1.0 + 1e-15]
    lo = np.concatenate([[0.0], qs[:-1]])
    mass = qs - lo
    mid = 0.5 * (qs + lo)
    xi = np.searchsorted(cx, mid, side="left").clip(0, len(x) - 1)
    yi = np.searchsorted(cy, mid, side="left").clip(0, len(y) - 1)
    keep = mass > 1e-15
    return (
        x[xi[keep]].reshape(-1, 1),
        y[yi[keep]].reshape(-1, 1),
        mass[keep],
    )


def _coupling_assignment(mu, nu, p):
    cost = np.linalg.norm(mu.atoms[:, None, :] - nu.atoms[None, :, :], axis=2) ** p
    rows, cols = linear_sum_assignment(cost)
    mass = np.full(len(rows), 1.0 / len(rows))
    return mu.atoms[rows], nu.atoms[cols], mass


def _coupling_lp(mu, nu, p):
    N, M = mu.n, nu.n
    cost = (
        np.linalg.norm(mu.atoms[:, None, :] - nu.atoms[None, :, :], axis=2) ** p
    ).ravel()
    A_eq = []
    for i in range(N):
        row = np.zeros(N * M)
        row[i * M : (i + 1) * M] = 1.0
        A_eq.append(row)
    for j in range(M):
        row = np.zeros(N * M)
        row[j::M] = 1.0
        A_eq.append(row)
    b_eq = np.concatenate([mu.weights, nu.weights])
    res = linprog(cost, A_eq=np.array(A_eq), b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    pi = res.x.reshape(N, M)
    ii, jj = np.nonzero(pi > 1e-14)
    return mu.atoms[ii], nu.atoms[jj], pi[ii, jj]


def _subsample(mu: EmpiricalMeasure, k: int) -> EmpiricalMeasure:
    # deterministic stride subsample after a lexicographic sort
    order = np.lexsort(mu.atoms.T[::-1])
    idx = order[np.linspace(0, mu.n - 1, k).round().astype(int)]
    return EmpiricalMeasure(mu.atoms[idx])


def wasserstein_p(
    mu: EmpiricalMeasure, nu: EmpiricalMeasure, p: float, return_info: bool = False
):
    """Wasserstein-p distance between atomic measures.

    Exact in d = 1 (quantile coupling) and for uniform equal-size supports
    up to the assignment cap (optimal bipartite matching); small non-uniform
    problems go through the transport LP; anything bigger falls back to a
    subsampled matching, flagged as approximate in the info record.
    """
    if p < 1:
        raise ValueError("p >= 1 required")
    if mu.d != nu.d:
        raise ValueError("dimension mismatch")
    info = {"mode": None, "exact": True}
    if mu.d == 1:
        xs, ys, mass = _coupling_1d(mu, nu)
        info["mode"] = "quantile-1d"
    elif mu.uniform and nu.uniform and mu.n == nu.n and mu.n <= ASSIGNMENT_CAP:
        xs, ys, mass = _coupling_assignment(mu, nu, p)
        info["mode"] = "assignment"
    elif mu.n * nu.n <= LP_CELL_CAP:
        xs, ys, mass = _coupling_lp(mu, nu, p)
        info["mode"] = "transport-lp"
    else:
        k = min(ASSIGNMENT_CAP, mu.n, nu.n)
        xs, ys, mass = _coupling_assignment(_subsample(mu, k), _subsample(nu, k), p)
        info["mode"] = "subsample-assignment"
        info["exact"] = False
    value = float((mass @ np.linalg.norm(xs - ys, axis=1) ** p) ** (1.0 / p))
    if return_info:
        info["coupling"] = (xs, ys, mass)
        return value, info
    return value


def flat_metric_bound(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """Certified upper bound for the bounded-Lipschitz-type metric: d_1."""
    return wasserstein_p(mu, nu, 1.0)


# ---------------------------------------------------------------------------
# test function families and the dual-metric bracket
# ---------------------------------------------------------------------------

@dataclass
class ScalarFunc:
    """phi with analytic gradient and Hessian."""

    name: str
    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]


@dataclass
class TestFunctionFamily:
    funcs: list
    p: float

    def certify(self, sampler: Callable[[int], np.ndarray], n: int = 1000) -> bool:
        """Sample-check |grad phi| <= 1 + |y|^{p-1}, |D^2 phi| <= 1 + |y|^{p-1}.

        The Hessian is measured in operator norm, so e.g. the identity
        Hessian of |y|^2/2 has size 1 in any dimension.
        """
        pts = sampler(n)
        env = 1.0 + np.linalg.norm(pts, axis=1) ** (self.p - 1.0)
        for f in self.funcs:
            for y, e in zip(pts, env):
                if np.linalg.norm(f.grad(y)) > e + 1e-12:
                    return False
                if np.linalg.norm(f.hess(y), 2) > e + 1e-12:
                    return False
        return True


def _bump(center: np.ndarray, radius: float, scale: float) -> ScalarFunc:
    c = np.asarray(center, dtype=float)

    def val(y):
        r2 = np.sum((y - c) ** 2) / radius**2
        return scale * np.exp(-1.0 / (1.0 - r2)) if r2 < 1.0 else 0.0

    def grad(y):
        r2 = np.sum((y - c) ** 2) / radius**2
        if r2 >= 1.0 - 1e-12:
            return np.zeros_like(c)
        g = -2.0 * (y - c) / radius**2 / (1.0 - r2) ** 2
        return val(y) * g

    def hess(y):
        d = len(c)
        r2 = np.sum((y - c) ** 2) / radius**2
        if r2 >= 1.0 - 1e-12:
            return np.zeros((d, d))
        u = (y - c) / radius**2
        q = 1.0 / (1.0 - r2) ** 2
        g = -2.0 * u * q
        # d/dy_j q = 4 u_j (1 - r2)^{-3}
        dg = -2.0 / radius**2 * (
            np.eye(d) * q + np.outer(y - c, 4.0 * u / (1.0 - r2) ** 3)
        )
        return val(y) * (np.outer(g, g) + dg)

    return ScalarFunc(f"bump@{np.round(c, 3)}", val, grad, hess)


def default_test_family(
    p: float, clouds: Sequence[EmpiricalMeasure] = (), d: Optional[int] = None
) -> TestFunctionFamily:
    """Coordinates, the power witness |y|^p / p, data-centred bumps, and
    pairwise-difference direction witnesses."""
    if d is None:
        if not clouds:
            raise ValueError("need a dimension or at least one cloud")
        d = clouds[0].d
    funcs = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        funcs.append(
            ScalarFunc(
                f"coord{i}",
                lambda y, e=e: float(e @ y),
                lambda y, e=e: e,
                lambda y, d=d: np.zeros((d, d)),
            )
        )

    def pow_val(y):
        return float(np.linalg.norm(y) ** p / p)

    def pow_grad(y):
        r = np.linalg.norm(y)
        return y * r ** (p - 2.0) if r > 0 else np.zeros_like(y)

    def pow_hess(y):
        r = np.linalg.norm(y)
        if r == 0:
            return np.zeros((len(y), len(y)))
        return r ** (p - 2.0) * np.eye(len(y)) + (p - 2.0) * r ** (p - 4.0) * np.outer(
            y, y
        )

    funcs.append(ScalarFunc("power", pow_val, pow_grad, pow_hess))
    centers = []
    for c in clouds:
        centers.append(c.mean())
    for c in centers:
        funcs.append(_bump(c, radius=1.0, scale=0.25))
    if len(centers) >= 2:
        for a in range(len(centers)):
            for b in range(a + 1, len(centers)):
                v = centers[b] - centers[a]
                nv = np.linalg.norm(v)
                if nv > 1e-12:
                    u = v / nv
                    funcs.append(
                        ScalarFunc(
                            f"dir{a}-{b}",
                            lambda y, u=u: float(u @ y),
                            lambda y, u=u: u,
                            lambda y, d=d: np.zeros((d, d)),
                        )
                    )
    return TestFunctionFamily(funcs, p)


def dp_bracket(
    mu: EmpiricalMeasure,
    nu: EmpiricalMeasure,
    p: float,
    fam: Optional[TestFunctionFamily] = None,
):
    """Two-sided bracket for the dual metric over the certified class.

    lower: best |int phi d(mu - nu)| over the finite family (the class is
    closed under negation, so the absolute value is admissible).
    upper: mean-value bound sum_pi (1 + |x|^{p-1} + |x-y|^{p-1}) |x-y| on
    the coupling returned by wasserstein_p; approximate couplings make the
    upper bound approximate, and the flag says so.
    """
    if fam is None:
        fam = default_test_family(p, clouds=[mu, nu])
    lower = 0.0
    for f in fam.funcs:
        gap = abs(mu.integrate(f.value) - nu.integrate(f.value))
        lower = max(lower, gap)
    _, info = wasserstein_p(mu, nu, p, return_info=True)
    xs, ys, mass = info["coupling"]
    sep = np.linalg.norm(xs - ys, axis=1)
    env = 1.0 + np.linalg.norm(xs, axis=1) ** (p - 1.0) + sep ** (p - 1.0)
    upper = float(mass @ (env * sep))
    upper = max(upper, lower)  # the bracket must always close
    return lower, upper, {"exact_upper": info["exact"], "mode": info["mode"]}


def topology_equivalence_probe(
    sequence: Sequence[EmpiricalMeasure],
    limit: EmpiricalMeasure,
    p: float,
    tol_w: float = 1e-3,
    tol_b: float = 1e-2,
) -> dict:
    """Check that d_p and the bracket vanish together along a sequence."""
    ws, lowers, uppers = [], [], []
    for m in sequence:
        ws.append(wasserstein_p(m, limit, p))
        lo, up, _ = dp_bracket(m, limit, p)
        lowers.append(lo)
        uppers.append(up)
    ws = np.array(ws)
    uppers = np.array(uppers)
    agree = bool(np.all((ws <= tol_w) == (uppers <= tol_b)))
    return {
        "d_p": ws.tolist(),
        "bracket_lower": lowers,
        "bracket_upper": uppers.tolist(),
        "tolerances": (tol_w, tol_b),
        "agree": agree,
    }


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_MAGIC = "# roughmf-measure v1 "


def save_measure(mu: EmpiricalMeasure, path) -> None:
    """Rows of (weight, coordinates)."""
    with open(path, "w") as fh:
        fh.write(_MAGIC + json.dumps({"d": mu.d, "n": mu.n}) + "\n")
        np.savetxt(fh, np.hstack([mu.weights[:, None], mu.atoms]), fmt="%.17g")


def load_measure(path) -> EmpiricalMeasure:
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith(_MAGIC):
            raise ValueError("not a roughmf measure file")
        table = np.atleast_2d(np.loadtxt(fh))
    return EmpiricalMeasure(table[:, 1:], table[:, 0])
