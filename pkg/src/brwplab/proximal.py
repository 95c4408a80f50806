"""Kernel formula of the regularized Wasserstein proximal operator.

The operator maps a density rho0 to

    rho_T(x) = exp(-beta*V(x)/2) * Integral G_T(x,y) * rho0(y) / D(y) dy,
    D(y)     = (beta/(4*pi*T))^{d/2} * Integral exp(-(beta/2)(V(z) + |z-y|^2/(2T))) dz,

where G_T is the heat kernel with variance 2T/beta per axis. Both integrals
use the same Gaussian blur, which factorizes across axes; the grid backend
therefore precomputes one 1-D trapezoid blur matrix per axis and caches the
denominator, so a step costs O(d * G * n) instead of O(G^2).

Backends: "quadrature" computes D by grid quadrature (exact up to trapezoid
error), "laplace_denominator" uses the second-order closed form
D ~ exp(-(beta/2)(V(s)+|s-y|^2/(2T))) / (1 + (T/2)*Lap V(s)), s = y - T*grad V(y),
and "particle" evaluates the kernel on an empirical rho0 with the Laplace
denominator (the only dimension-scalable variant).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .density import GridDensity, ParticleEnsemble, central_diff, trapezoid_weights
from .errors import (DegenerateDensityError, IsolatedParticleError,
                     ParameterError, StepsizeError, TruncationError)
from .potentials import Potential

BACKENDS = ("quadrature", "laplace_denominator", "particle")
DENOM_TAIL_TOL = 1e-10        # pointwise denominator: boundary integrand vs peak
LAPLACE_GUARD = 0.1           # refuse when 1 + (T/2)*Lap V(s) <= this
LAPLACE_WARN = 0.5            # warn when T * sup Lap V over query points exceeds this
MASS_TOL = 5e-3               # pre-renormalization mass must stay within 1 +/- this
LOG_UNDERFLOW = np.log(1e-300)


@dataclass
class ProxParams:
    """Proximal stepsize T, inverse temperature beta, denominator grid."""

    T: float
    beta: float = 1.0
    z_axes: Optional[tuple] = None   # denominator quadrature grid; defaults to the density grid

    def __post_init__(self):
        if self.T <= 0:
            raise ParameterError(f"T must be positive, got {self.T}")
        if self.beta <= 0:
            raise ParameterError(f"beta must be positive, got {self.beta}")
        if self.z_axes is not None:
            self.z_axes = tuple(np.asarray(a, dtype=float) for a in self.z_axes)


def denominator_exact(y, target: Potential, p: ProxParams) -> float:
    """Scaled normalization integral D(y) by tensor-grid trapezoid quadrature."""
    if p.z_axes is None:
        raise ParameterError("denominator_exact needs z_axes in ProxParams")
    axes = p.z_axes
    d = len(axes)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.size != d or d != target.dim:
        raise ParameterError(f"y of size {y.size} vs grid/potential dim {d}/{target.dim}")
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
    expo = -(p.beta / 2) * (target.eval_fn(pts)
                            + np.sum((pts - y) ** 2, axis=1) / (2 * p.T))
    integrand = np.exp(expo).reshape([a.size for a in axes])
    peak = integrand.max()
    boundary = 0.0
    for i in range(d):
        sl = [slice(None)] * d
        for j in (0, -1):
            sl[i] = j
            boundary = max(boundary, float(integrand[tuple(sl)].max()))
    if peak <= 0 or boundary > DENOM_TAIL_TOL * peak:
        raise TruncationError(
            f"denominator integrand tail {boundary:.2e} exceeds {DENOM_TAIL_TOL:.0e} "
            "of its peak; widen z_axes")
    w = trapezoid_weights(axes[0])
    for a in axes[1:]:
        w = np.multiply.outer(w, trapezoid_weights(a))
    return float((p.beta / (4 * np.pi * p.T)) ** (d / 2) * np.sum(w * integrand))


def denominator_laplace(y, target: Potential, p: ProxParams) -> float:
    """Closed-form Laplace approximation of D(y); error O(T^2)."""
    y = np.atleast_1d(np.asarray(y, dtype=float)).reshape(1, -1)
    if y.size != target.dim:
        raise ParameterError(f"y of size {y.size} vs potential dim {target.dim}")
    val = _denominator_laplace_batch(y, target, p)
    return float(val[0])


def _denominator_laplace_batch(ys: np.ndarray, target: Potential, p: ProxParams,
                               log: bool = False):
    s = ys - p.T * target.grad_fn(ys)
    lap = np.atleast_1d(target.laplacian_fn(s) if target.laplacian_fn is not None
                        else target._fd_laplacian(s))
    corr = 1.0 + (p.T / 2) * lap
    if np.any(corr <= LAPLACE_GUARD):
        raise StepsizeError(
            f"Laplace correction factor min {corr.min():.3f} <= {LAPLACE_GUARD}; "
            "T too large for this potential region")
    if p.T * lap.max() > LAPLACE_WARN:
        warnings.warn(
            f"T*LapV reaches {p.T * lap.max():.2f} > {LAPLACE_WARN}; Laplace "
            "denominator accuracy degrades (its hypothesis needs T*LapV <= 1)",
            stacklevel=3)
    log_val = -(p.beta / 2) * (target.eval_fn(s)
                               + np.sum((s - ys) ** 2, axis=1) / (2 * p.T)) - np.log(corr)
    return log_val if log else np.exp(log_val)


class GridProxOperator:
    """Cached kernel-formula operator on a fixed tensor grid."""

    def __init__(self, axes, target: Potential, p: ProxParams,
                 backend: str = "quadrature"):
        if backend not in ("quadrature", "laplace_denominator"):
            raise ParameterError(f"grid backend must be quadrature or "
                                 f"laplace_denominator, got {backend!r}")
        self.axes = tuple(np.asarray(a, dtype=float) for a in axes)
        self.d = len(self.axes)
        if target.dim != self.d:
            raise ParameterError(f"potential dim {target.dim} != grid dim {self.d}")
        self.target = target
        self.p = p
        self.backend = backend
        shape = [a.size for a in self.axes]
        mesh = np.meshgrid(*self.axes, indexing="ij")
        self._coords = [m for m in mesh]
        pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
        self._grad_v = target.grad_fn(pts)
        self.e_v = np.exp(-p.beta / 2 * target.eval_fn(pts)).reshape(shape)
        self._blur = [self._blur_matrix(a) for a in self.axes]
        if backend == "quadrature":
            self.denom = self.apply_blur(self.e_v)
        else:
            self.denom = _denominator_laplace_batch(pts, target, p).reshape(shape)
        if np.any(self.denom <= 0) or not np.all(np.isfinite(self.denom)):
            raise DegenerateDensityError("denominator table has nonpositive entries")

    def _blur_matrix(self, axis):
        beta, T = self.p.beta, self.p.T
        w = trapezoid_weights(axis)
        diff = axis[:, None] - axis[None, :]
        return np.sqrt(beta / (4 * np.pi * T)) * np.exp(-beta * diff**2 / (4 * T)) * w[None, :]

    def apply_blur(self, vals: np.ndarray) -> np.ndarray:
        for i in range(self.d):
            vals = np.moveaxis(np.tensordot(self._blur[i], vals, axes=(1, i)), 0, i)
        return vals

    def step_raw(self, rho0_values: np.ndarray) -> np.ndarray:
        return self.e_v * self.apply_blur(rho0_values / self.denom)

    def step(self, rho0: GridDensity):
        """One proximal step; returns (normalized rho_T, pre-normalization mass)."""
        raw = self.step_raw(rho0.values)
        g = GridDensity(self.axes, raw, rho0.log_floor)
        mass = g.mass()
        if not np.isfinite(mass) or mass <= 0:
            raise DegenerateDensityError(f"proximal output has mass {mass}")
        if abs(mass - 1.0) > MASS_TOL:
            warnings.warn(f"pre-renormalization mass {mass:.6f} outside 1 +/- {MASS_TOL}; "
                          "grid may be too narrow or T too large", stacklevel=2)
        return GridDensity(self.axes, raw / mass, rho0.log_floor), mass

    def gradient(self, rho0: GridDensity, normalization: float = 1.0) -> list:
        """Gradient of the kernel formula output (divided by `normalization`).

        grad rho_T = -beta*(grad V/2 + x/(2T)) rho_T + (beta/2T) * e_V * Blur[y_i * rho0/D]
        """
        beta, T = self.p.beta, self.p.T
        raw = self.step_raw(rho0.values)
        ratio = rho0.values / self.denom
        shape = raw.shape
        out = []
        for i in range(self.d):
            blurred = self.apply_blur(self._coords[i] * ratio)
            gi = (-beta * (self._grad_v[:, i].reshape(shape) / 2
                           + self._coords[i] / (2 * T)) * raw
                  + beta / (2 * T) * self.e_v * blurred)
            out.append(gi / normalization)
        return out

    def score_of_step(self, rho0: GridDensity):
        """(rho_T normalized, pre-mass, per-axis score grad log rho_T)."""
        rho_t, mass = self.step(rho0)
        grads = self.gradient(rho0, normalization=mass)
        floor = rho_t.log_floor
        score = [g / np.maximum(rho_t.values, floor) for g in grads]
        return rho_t, mass, score


def prox_step(rho0: GridDensity, target: Potential, p: ProxParams,
              backend: str = "quadrature"):
    """Functional one-shot proximal step; see GridProxOperator for the cached form."""
    op = GridProxOperator(rho0.axes, target, p, backend)
    return op.step(rho0)


def prox_gradient(rho0: GridDensity, rho_t: GridDensity, target: Potential,
                  p: ProxParams, backend: str = "quadrature") -> list:
    """Per-axis gradient of the (normalized) proximal output rho_t."""
    op = GridProxOperator(rho0.axes, target, p, backend)
    raw = op.step_raw(rho0.values)
    mass = GridDensity(rho0.axes, raw).mass()
    return op.gradient(rho0, normalization=mass)


def prox_particle_score(ensemble: ParticleEnsemble, target: Potential,
                        p: ProxParams, query: Optional[np.ndarray] = None):
    """Scores grad log rho_T at query points for empirical rho0 = mean of deltas.

    Query defaults to the ensemble itself. The softmax structure of the
    score cancels exp(-beta V(x)/2): with w_j(x) = exp(-beta|x-y_j|^2/(4T))/D(y_j),

        score(x) = -beta/2 * grad V(x) + (beta/2T) * (sum_j w_j y_j / sum_j w_j - x).

    Also returns log rho_T at the query points; underflow below 1e-300
    raises IsolatedParticleError.
    """
    if ensemble.n < 2:
        raise ParameterError("particle score needs at least 2 particles")
    y = ensemble.points
    x = y if query is None else np.asarray(query, dtype=float)
    if x.ndim == 1:
        x = x[:, None] if ensemble.dim == 1 else x[None, :]
    beta, T = p.beta, p.T
    d = ensemble.dim
    log_d = _denominator_laplace_batch(y, target, p, log=True)
    sq_x = np.sum(x * x, axis=1)
    sq_y = np.sum(y * y, axis=1)
    d2 = sq_x[:, None] + sq_y[None, :] - 2.0 * (x @ y.T)
    np.maximum(d2, 0.0, out=d2)
    logw = -beta * d2 / (4 * T) - log_d[None, :]
    m = logw.max(axis=1, keepdims=True)
    wt = np.exp(logw - m)
    sw = wt.sum(axis=1)
    ybar = (wt @ y) / sw[:, None]
    log_rho = (m[:, 0] + np.log(sw) - np.log(ensemble.n)
               - beta / 2 * target.eval_fn(x)
               + 0.5 * d * np.log(beta / (4 * np.pi * T)))
    if np.any(log_rho < LOG_UNDERFLOW):
        i = int(np.argmin(log_rho))
        raise IsolatedParticleError(
            f"density underflow at query {i}: log rho_T = {log_rho[i]:.1f} "
            "(particle too far from the ensemble)")
    score = -beta / 2 * target.grad_fn(x) + beta / (2 * T) * (ybar - x)
    return score, log_rho


def first_order_expansion(rho0: GridDensity, target: Potential, beta: float,
                          T: float) -> GridDensity:
    """Small-T expansion rho0*[1 - beta*T*grad(V-V0).grad(V0) + T*Lap(V-V0)].

    V0 = -log(rho0)/beta with grid central differences for its derivatives;
    algebraically identical to rho0 + T*fp_rhs(rho0) up to O(T^2) and grid
    error. The bracket can dip below zero in far tails; output values are
    clamped at zero.
    """
    if T < 0:
        raise ParameterError(f"T must be nonnegative, got {T}")
    if np.any(rho0.values <= 0):
        raise DegenerateDensityError("first_order_expansion needs strictly positive rho0")
    shape = rho0.values.shape
    pts = rho0.points()
    v0 = -np.log(rho0.values) / beta
    grad_v = target.grad_fn(pts)
    lap_v = target.laplacian(pts).reshape(shape)
    cross = np.zeros(shape)
    lap_v0 = np.zeros(shape)
    for i in range(rho0.dim):
        dv0 = central_diff(v0, rho0.spacing[i], i)
        cross += (grad_v[:, i].reshape(shape) - dv0) * dv0
        lap_v0 += central_diff(dv0, rho0.spacing[i], i)
    bracket = 1.0 - beta * T * cross + T * (lap_v - lap_v0)
    return GridDensity(rho0.axes, np.maximum(rho0.values * bracket, 0.0), rho0.log_floor)
