"""Controlled rough paths and the compensated-Riemann-sum rough integral.

A path Y is controlled by the rough path X when Y_{s,t} = Y'_s X_{s,t} + R_{s,t}
with a remainder R of order |t-s|^{2a}.  Values may carry any trailing shape
(scalars, vectors, matrices); the Gubinelli derivative always adds one final
axis of length d contracting against driver increments.  The rough integral
sums the compensated one-cell terms Y_u X_{u,v} + Y'_u XX_{u,v}; its local
error obeys the sewing bound with constant C = 2^{3a} / (1 - 2^{1-3a}),
valid since 3a > 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .roughpath import RoughPath, _pair_indices


def sewing_constant(alpha: float) -> float:
    """Constant in the local sewing estimate, for regularity 3*alpha > 1."""
    if 3.0 * alpha <= 1.0:
        raise ValueError("sewing constant requires 3*alpha > 1")
    return 2.0 ** (3.0 * alpha) / (1.0 - 2.0 ** (1.0 - 3.0 * alpha))


@dataclass
class Func2:
    """A time-dependent map f(t, y) with analytic derivatives.

    ``grad`` is the state derivative with one extra trailing axis over the
    state components; ``hess`` adds a second one; ``tderiv`` is the partial
    time derivative.  Derivatives are supplied in closed form — finite
    differences are reserved for test oracles.
    """

    value: Callable[[float, np.ndarray], np.ndarray]
    grad: Callable[[float, np.ndarray], np.ndarray]
    hess: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    tderiv: Optional[Callable[[float, np.ndarray], np.ndarray]] = None


class ControlledPath:
    """(Y, Y') controlled by a rough path, sampled on the base grid.

    Y has shape (M+1, *S); Yprime has shape (M+1, *S, d).
    """

    def __init__(self, base: RoughPath, Y, Yprime):
        Y = np.asarray(Y, dtype=float)
        Yp = np.asarray(Yprime, dtype=float)
        M, d = base.grid.n_cells, base.d
        if Y.shape[0] != M + 1 or Yp.shape != Y.shape + (d,):
            raise ValueError("controlled path arrays do not match the base grid")
        self.base = base
        self.Y = Y
        self.Yprime = Yp
        self._cumint = None
        self._prime_norm = None
        self._remainder_norm = None

    @property
    def val_shape(self) -> tuple:
        return self.Y.shape[1:]

    # -- remainder and seminorms -------------------------------------------

    def gubinelli_remainder(self, s: float, t: float):
        """R_{s,t} = Y_{s,t} - Y'_s X_{s,t} for grid times s, t."""
        i = self.base.grid.index_of(s)
        j = self.base.grid.index_of(t)
        dX = self.base.increment(i, j)
        return self.Y[j] - self.Y[i] - self.Yprime[i] @ dX

    def _pair_data(self):
        ii, jj = _pair_indices(self.base.grid.n_cells)
        dt = self.base.times[jj] - self.base.times[ii]
        return ii, jj, dt

    def prime_norm(self) -> float:
        """Discrete alpha-Hölder norm of the Gubinelli derivative."""
        if self._prime_norm is None:
            ii, jj, dt = self._pair_data()
            diff = (self.Yprime[jj] - self.Yprime[ii]).reshape(len(ii), -1)
            self._prime_norm = float(
                np.max(np.linalg.norm(diff, axis=1) / dt**self.base.alpha)
            )
        return self._prime_norm

    def remainder_norm(self) -> float:
        """Discrete 2*alpha-Hölder norm of the remainder."""
        if self._remainder_norm is None:
            ii, jj, dt = self._pair_data()
            dX = self.base.values[jj] - self.base.values[ii]
            R = (
                self.Y[jj]
                - self.Y[ii]
                - np.einsum("p...d,pd->p...", self.Yprime[ii], dX)
            ).reshape(len(ii), -1)
            self._remainder_norm = float(
                np.max(np.linalg.norm(R, axis=1) / dt ** (2.0 * self.base.alpha))
            )
        return self._remainder_norm

    def seminorm(self) -> float:
        """||Y'||_a + ||R^Y||_{2a} (no dependence on initial values)."""
        return self.prime_norm() + self.remainder_norm()

    def full_norm(self) -> float:
        """Banach norm: |Y_0| + |Y'_0| + seminorm."""
        return (
            float(np.linalg.norm(self.Y[0].ravel()))
            + float(np.linalg.norm(self.Yprime[0].ravel()))
            + self.seminorm()
        )

    # -- rough integral -----------------------------------------------------

    def _cumulative_integral(self) -> np.ndarray:
        if self._cumint is None:
            Y, Yp = self.Y, self.Yprime
            dX = np.diff(self.base.values, axis=0)
            XX = self.base.cells
            if self.val_shape == ():
                # scalar integrand: the integral is driver-valued
                cells = Y[:-1, None] * dX + np.einsum("ml,mlk->mk", Yp[:-1], XX)
            elif self.val_shape[-1] == self.base.d:
                # operator-valued integrand contracting the last axis with dX;
                # the derivative axis pairs with the first slot of XX
                cells = np.einsum("m...k,mk->m...", Y[:-1], dX) + np.einsum(
                    "m...kl,mlk->m...", Yp[:-1], XX
                )
            else:
                raise ValueError(
                    "rough integral needs a scalar integrand or a trailing "
                    "axis matching the driver dimension"
                )
            cum = np.concatenate(
                [np.zeros((1,) + cells.shape[1:]), np.cumsum(cells, axis=0)]
            )
            self._cumint = cum
        return self._cumint

    def rough_integral(self, s: float, t: float):
        """Compensated Riemann sum of Y against the base rough path on [s, t].

        Exactly additive over adjacent windows (differences of one running sum).
        """
        i = self.base.grid.index_of(s)
        j = self.base.grid.index_of(t)
        if i > j:
            raise ValueError("rough_integral requires s <= t")
        cum = self._cumulative_integral()
        return cum[j] - cum[i]

    def local_error_certificate(self, s: float, t: float):
        """One-window sewing check.

        Returns (value, bound, ok) where value is
        |int_s^t Y dX - Y_s X_{s,t} - Y'_s XX_{s,t}| and bound is
        C (||X||_a ||R^Y||_{2a} + ||XX||_{2a} ||Y'||_a) |t-s|^{3a}.
        """
        i = self.base.grid.index_of(s)
        j = self.base.grid.index_of(t)
        if i >= j:
            raise ValueError("certificate needs s < t")
        dX = self.base.increment(i, j)
        XX = self.base.second_level(i, j)
        if self.val_shape == ():
            head = self.Y[i] * dX + np.einsum("l,lk->k", self.Yprime[i], XX)
        else:
            head = np.einsum("...k,k->...", self.Y[i], dX) + np.einsum(
                "...kl,lk->...", self.Yprime[i], XX
            )
        value = float(np.linalg.norm((self.rough_integral(s, t) - head).ravel()))
        nx, nxx = self.base.holder_norms()
        C = sewing_constant(self.base.alpha)
        dt = self.base.times[j] - self.base.times[i]
        bound = (
            C
            * (nx * self.remainder_norm() + nxx * self.prime_norm())
            * dt ** (3.0 * self.base.alpha)
        )
        return value, bound, value <= bound


def controlled_distance(cp: ControlledPath, cq: ControlledPath) -> float:
    """||Y' - Z'||_a + ||R^Y - R^Z||_{2a} over the common grid."""
    if cp.Y.shape != cq.Y.shape or not np.allclose(cp.base.times, cq.base.times):
        raise ValueError("controlled paths must share grid and value shape")
    ii, jj, dt = cp._pair_data()
    a = cp.base.alpha
    dYp = (cp.Yprime - cq.Yprime)[jj] - (cp.Yprime - cq.Yprime)[ii]
    d1 = float(
        np.max(np.linalg.norm(dYp.reshape(len(ii), -1), axis=1) / dt**a)
    )
    dXp = cp.base.values[jj] - cp.base.values[ii]
    dXq = cq.base.values[jj] - cq.base.values[ii]
    Rp = cp.Y[jj] - cp.Y[ii] - np.einsum("p...d,pd->p...", cp.Yprime[ii], dXp)
    Rq = cq.Y[jj] - cq.Y[ii] - np.einsum("p...d,pd->p...", cq.Yprime[ii], dXq)
    d2 = float(
        np.max(
            np.linalg.norm((Rp - Rq).reshape(len(ii), -1), axis=1)
            / dt ** (2.0 * a)
        )
    )
    return d1 + d2


def compose(f: Func2, cp: ControlledPath) -> ControlledPath:
    """Push a controlled path through a C^2 map: (f(t,Y), grad f(t,Y) Y').

    The input must have vector (or scalar) values; f may produce any shape,
    with grad carrying one extra trailing axis over input components.
    """
    if len(cp.val_shape) > 1:
        raise ValueError("compose expects scalar- or vector-valued input paths")
    times = cp.base.times
    Yv = cp.Y if cp.val_shape else cp.Y[:, None]
    Yp = cp.Yprime if cp.val_shape else cp.Yprime[:, None, :]
    out_vals = []
    out_primes = []
    for k, t in enumerate(times):
        y = Yv[k]
        val = np.asarray(f.value(t, y), dtype=float)
        g = np.asarray(f.grad(t, y), dtype=float)
        if g.shape != val.shape + y.shape:
            raise ValueError("grad shape must be value shape plus one state axis")
        out_vals.append(val)
        out_primes.append(np.tensordot(g, Yp[k], axes=([-1], [0])))
    return ControlledPath(cp.base, np.stack(out_vals), np.stack(out_primes))
