"""Particle update schemes: semi-implicit kernel-proximal variants, ULA, explicit flow.

All schemes advance every particle synchronously from one shared score
snapshot. The kernel-proximal ("brwp") variants differ in where that
score comes from:

  brwp_kde        score of Prox_T(kde(ensemble))       (closed loop via KDE)
  brwp_successive score of a proximal density chain     (open loop: the chain
                  rho~_{k+1} = Prox_T(rho~_k) never sees the particles; over
                  horizons ~1/h the particle law drifts O(h) from the chain,
                  so run diagnostics report the chain itself)
  brwp_particle   score of Prox_T(empirical measure), Laplace denominator
  explicit_flow   score of kde(ensemble) itself (no proximal step)
  ula             explicit Euler of Langevin dynamics with Gaussian noise

`evolve_law` propagates the law of the closed-loop scheme directly on a
1-D grid (pushforward through the particle map); it is the deterministic,
estimator-free realization used by stepsize sweeps and stability checks.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import theory
from .density import (DiagnosticsReport, GridDensity, ParticleEnsemble,
                      central_diff, fisher_information, fourth_moment_m0, kde,
                      kl_divergence, tv_distance, uniform_axis, w2_grids_1d,
                      w2_to_target_1d, target_density)
from .errors import DegenerateDensityError, EvaluationError, ParameterError
from .potentials import Potential, make_gaussian_mixture, make_quadratic
from .proximal import GridProxOperator, ProxParams, prox_particle_score

METHODS = ("brwp_kde", "brwp_successive", "brwp_particle", "ula", "explicit_flow")
CLAMP_FRACTION_ABORT = 0.01


@dataclass
class SamplerConfig:
    method: str = "brwp_successive"
    h: float = 0.05
    T: Optional[float] = None          # proximal stepsize; defaults to h
    beta: float = 1.0
    n_particles: int = 500
    n_steps: int = 50
    seed: int = 0
    backend: str = "quadrature"
    kde_bandwidth: object = "auto"
    init_mean: float = 0.0
    init_sigma_sq: float = 2.0
    grid: tuple = ((-12.0, 12.0, 2401),)  # per-dim (lo, hi, n) for densities/diagnostics
    diag_every: int = 1
    record_timing: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"unknown method {self.method!r}; known: {METHODS}")
        if self.h <= 0:
            raise ParameterError(f"h must be positive, got {self.h}")
        if self.T is None:
            self.T = self.h
        if not (0.0 < self.T <= self.h):
            raise ParameterError(f"T must lie in (0, h], got T={self.T}, h={self.h}")
        if self.n_steps < 0 or self.n_particles < 2:
            raise ParameterError("n_steps must be >= 0 and n_particles >= 2")
        if self.diag_every < 1:
            raise ParameterError("diag_every must be >= 1")

    def axes(self) -> tuple:
        return tuple(uniform_axis(lo, hi, n) for lo, hi, n in self.grid)


@dataclass
class DensityState:
    """Per-run cached grid machinery (and the chain for the successive mode)."""

    operator: Optional[GridProxOperator] = None
    chain: Optional[GridDensity] = None


def ula_step(ensemble: ParticleEnsemble, target: Potential, h: float,
             beta: float, rng) -> ParticleEnsemble:
    """x <- x - h*grad V(x) + sqrt(2h/beta)*z with z ~ N(0, I)."""
    if h <= 0:
        raise ParameterError(f"h must be positive, got {h}")
    noise = rng.standard_normal(ensemble.points.shape)
    pts = ensemble.points - h * target.grad_fn(ensemble.points) \
        + np.sqrt(2.0 * h / beta) * noise
    return ParticleEnsemble(pts, ensemble.step_index + 1, ensemble.seed)


def interp_at(axes, field: np.ndarray, pts: np.ndarray):
    """Multilinear interpolation of a grid field at points, clamped to the grid.

    Returns (values, n_clamped). Clamped points use the nearest cell edge.
    """
    d = len(axes)
    n_pts = pts.shape[0]
    idx = []
    frac = []
    clamped = np.zeros(n_pts, dtype=bool)
    for i in range(d):
        a = axes[i]
        dx = a[1] - a[0]
        t = (pts[:, i] - a[0]) / dx
        clamped |= (t < 0) | (t > a.size - 1)
        t = np.clip(t, 0.0, a.size - 1 - 1e-12)
        i0 = np.floor(t).astype(int)
        idx.append(i0)
        frac.append(t - i0)
    out = np.zeros(n_pts)
    for corner in range(2**d):
        w = np.ones(n_pts)
        ind = []
        for i in range(d):
            hi = (corner >> i) & 1
            w *= frac[i] if hi else (1.0 - frac[i])
            ind.append(idx[i] + hi)
        out += w * field[tuple(ind)]
    return out, int(clamped.sum())


def _interp_score(axes, score_fields, pts: np.ndarray) -> np.ndarray:
    out = np.empty_like(pts)
    total_clamped = 0
    for i, f in enumerate(score_fields):
        vals, n_clamped = interp_at(axes, f, pts)
        out[:, i] = vals
        total_clamped = max(total_clamped, n_clamped)
    if total_clamped > 0:
        frac = total_clamped / pts.shape[0]
        if frac > CLAMP_FRACTION_ABORT:
            raise EvaluationError(
                f"{frac:.1%} of particles left the score grid (> "
                f"{CLAMP_FRACTION_ABORT:.0%}); widen the grid")
        warnings.warn(f"{total_clamped} particle(s) clamped to the score grid edge",
                      stacklevel=2)
    return out


def brwp_step(ensemble: ParticleEnsemble, target: Potential, cfg: SamplerConfig,
              state: DensityState):
    """One synchronous semi-implicit update; score per cfg.method."""
    h, beta = cfg.h, cfg.beta
    p = ProxParams(T=cfg.T, beta=beta)
    if cfg.method == "brwp_particle":
        score, _ = prox_particle_score(ensemble, target, p)
    else:
        axes = cfg.axes()
        if state.operator is None:
            backend = "quadrature" if cfg.backend == "particle" else cfg.backend
            state.operator = GridProxOperator(axes, target, p, backend)
        if cfg.method == "brwp_successive":
            if state.chain is None:
                raise ParameterError("successive mode needs an initial chain density")
            rho_t, _, fields = state.operator.score_of_step(state.chain)
            state.chain = rho_t
        elif cfg.method == "brwp_kde":
            rho_k = kde(ensemble, cfg.kde_bandwidth, axes)
            _, _, fields = state.operator.score_of_step(rho_k)
        else:
            raise ParameterError(f"brwp_step cannot run method {cfg.method!r}")
        score = _interp_score(axes, fields, ensemble.points)
    pts = ensemble.points - h * (target.grad_fn(ensemble.points) + score / beta)
    return ParticleEnsemble(pts, ensemble.step_index + 1, ensemble.seed), state


def explicit_flow_step(ensemble: ParticleEnsemble, target: Potential,
                       cfg: SamplerConfig) -> ParticleEnsemble:
    """Explicit Euler of the score flow: the score is of kde(ensemble) itself."""
    axes = cfg.axes()
    rho_k = kde(ensemble, cfg.kde_bandwidth, axes)
    score = _interp_score(axes, rho_k.score(), ensemble.points)
    pts = ensemble.points - cfg.h * (target.grad_fn(ensemble.points) + score / cfg.beta)
    return ParticleEnsemble(pts, ensemble.step_index + 1, ensemble.seed)


def initial_ensemble(cfg: SamplerConfig, dim: int, rng) -> ParticleEnsemble:
    pts = cfg.init_mean + np.sqrt(cfg.init_sigma_sq) * rng.standard_normal(
        (cfg.n_particles, dim))
    return ParticleEnsemble(pts, 0, cfg.seed)


def initial_grid_density(cfg: SamplerConfig, axes) -> GridDensity:
    mesh = np.meshgrid(*axes, indexing="ij")
    sq = sum((m - cfg.init_mean) ** 2 for m in mesh)
    vals = np.exp(-sq / (2.0 * cfg.init_sigma_sq))
    return GridDensity(axes, vals).normalize()


def marginal_target(target: Potential) -> Optional[Potential]:
    """1-D first-axis marginal of a product-structured catalog target."""
    if target.dim == 1:
        return target
    if target.name == "quadratic":
        return make_quadratic(target.params["alpha"], 1)
    if target.name == "gaussian_mixture":
        a = target.params["a"]
        return make_gaussian_mixture(a[0], target.params["sigma"], dim=1,
                                     beta=target.params["beta"])
    return None


@dataclass
class RunResult:
    reports: list = field(default_factory=list)
    ensemble: Optional[ParticleEnsemble] = None
    density: Optional[GridDensity] = None
    masses: list = field(default_factory=list)   # pre-renormalization prox masses


def _diagnose(cfg: SamplerConfig, target: Potential, ensemble: ParticleEnsemble,
              state: DensityState, k: int, t0: float,
              bound_ctx: Optional[dict]) -> DiagnosticsReport:
    beta = cfg.beta
    marg1d = marginal_target(target)
    # measurement density + matching target
    if cfg.method == "brwp_successive":
        g, meas_target = state.chain, target
    elif target.dim <= 3 and len(cfg.grid) == target.dim:
        g = kde(ensemble, cfg.kde_bandwidth, cfg.axes())
        meas_target = target
    elif marg1d is not None:
        marg = ParticleEnsemble(ensemble.points[:, :1], ensemble.step_index,
                                ensemble.seed)
        g = kde(marg, cfg.kde_bandwidth, (cfg.axes()[0],))
        meas_target = marg1d
    else:
        return DiagnosticsReport(k, *([float("nan")] * 5))
    kl = kl_divergence(g, meas_target, beta)
    fi = fisher_information(g, meas_target, beta)
    m0 = fourth_moment_m0(g, meas_target, beta)
    tv = tv_distance(g, meas_target, beta)
    # W2 in the first dimension, exact quantile coupling
    if cfg.method == "brwp_successive":
        w2 = w2_grids_1d(g.marginal_first(),
                         target_density(marg1d if marg1d is not None else target,
                                        (g.axes[0],), beta, check_truncation=False)) \
            if (marg1d is not None or target.dim == 1) else float("nan")
    elif marg1d is not None:
        w2 = w2_to_target_1d(ensemble.points[:, 0], marg1d, beta, (cfg.axes()[0],))
    else:
        w2 = float("nan")
    bound = float("nan")
    if bound_ctx is not None:
        if "inputs" not in bound_ctx:
            bound_ctx["inputs"] = theory.BoundInputs(
                alpha=target.alpha, beta=beta, h=cfg.h, s=cfg.T / cfg.h,
                kl0=max(kl, 0.0), m0=max(m0, 0.0))
        bound = theory.kl_k_bound(k, bound_ctx["inputs"])
    ms = (time.perf_counter() - t0) * 1000.0 if cfg.record_timing else 0.0
    return DiagnosticsReport(k, kl, fi, m0, tv, w2, bound, ms)


def run(cfg: SamplerConfig, target: Potential, diag_every: Optional[int] = None,
        init_points: Optional[np.ndarray] = None,
        init_density: Optional[GridDensity] = None) -> RunResult:
    """Execute cfg.n_steps synchronous steps, recording diagnostics.

    Deterministic for a fixed config: the RNG is seeded from cfg.seed and
    the semi-implicit modes draw no noise after initialization.
    """
    if diag_every is None:
        diag_every = cfg.diag_every
    if target.alpha is not None and cfg.h > theory.max_stepsize(target.alpha):
        warnings.warn(f"h={cfg.h} exceeds the maximum stable stepsize "
                      f"2/(3*alpha)={theory.max_stepsize(target.alpha):.4f}",
                      stacklevel=2)
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    if init_points is not None:
        ens = ParticleEnsemble(np.array(init_points, dtype=float), 0, cfg.seed)
    else:
        ens = initial_ensemble(cfg, target.dim, rng)
    state = DensityState()
    if cfg.method == "brwp_successive":
        if target.dim > 3:
            raise ParameterError("successive mode needs a full grid (dim <= 3)")
        state.chain = init_density if init_density is not None \
            else initial_grid_density(cfg, cfg.axes())
    bound_ctx = {} if target.alpha is not None else None
    result = RunResult()
    result.reports.append(_diagnose(cfg, target, ens, state, 0, t0, bound_ctx))
    for k in range(1, cfg.n_steps + 1):
        if cfg.method == "ula":
            ens = ula_step(ens, target, cfg.h, cfg.beta, rng)
        elif cfg.method == "explicit_flow":
            ens = explicit_flow_step(ens, target, cfg)
        else:
            ens, state = brwp_step(ens, target, cfg, state)
        if k % diag_every == 0 or k == cfg.n_steps:
            result.reports.append(_diagnose(cfg, target, ens, state, k, t0, bound_ctx))
    result.ensemble = ens
    result.density = state.chain
    return result


# ------------------------------------------------------- law-level evolution

@dataclass
class LawTrace:
    reports: list
    density: GridDensity
    folded: bool          # particle map lost monotonicity at some step


def evolve_law(cfg: SamplerConfig, target: Potential,
               init_density: Optional[GridDensity] = None) -> LawTrace:
    """Deterministic evolution of the closed-loop particle law on a 1-D grid.

    Each step scores Prox_T of the current law and pushes the law through
    x -> x - h*(grad V + score/beta) by the 1-D change of variables. This
    is the density the one-step analysis of the scheme tracks, free of
    particle/KDE estimator noise.
    """
    if target.dim != 1:
        raise ParameterError("evolve_law supports dim=1 grids only")
    axes = cfg.axes()
    x = axes[0]
    w_dx = x[1] - x[0]
    p = ProxParams(T=cfg.T, beta=cfg.beta)
    backend = "quadrature" if cfg.backend == "particle" else cfg.backend
    op = GridProxOperator(axes, target, p, backend)
    rho = init_density if init_density is not None else initial_grid_density(cfg, axes)
    grad_v = target.grad_fn(x[:, None])[:, 0]
    t0 = time.perf_counter()
    reports = [_law_report(cfg, target, rho, 0, t0)]
    folded = False
    for k in range(1, cfg.n_steps + 1):
        _, _, fields = op.score_of_step(rho)
        m = x - cfg.h * (grad_v + fields[0] / cfg.beta)
        dm = central_diff(m, w_dx, 0)
        if np.any(dm <= 0):
            folded = True
        vals = np.where(np.abs(dm) > 1e-300, rho.values / np.abs(dm), 0.0)
        order = np.argsort(m)
        new_vals = np.interp(x, m[order], vals[order], left=0.0, right=0.0)
        try:
            rho = GridDensity(axes, np.maximum(new_vals, 0.0)).normalize()
        except DegenerateDensityError:
            folded = True
            break
        if k % cfg.diag_every == 0 or k == cfg.n_steps:
            reports.append(_law_report(cfg, target, rho, k, t0))
    return LawTrace(reports, rho, folded)


def _law_report(cfg, target, rho, k, t0) -> DiagnosticsReport:
    kl = kl_divergence(rho, target, cfg.beta)
    fi = fisher_information(rho, target, cfg.beta)
    m0 = fourth_moment_m0(rho, target, cfg.beta)
    tv = tv_distance(rho, target, cfg.beta)
    w2 = w2_grids_1d(rho, target_density(target, rho.axes, cfg.beta,
                                         check_truncation=False))
    ms = (time.perf_counter() - t0) * 1000.0 if cfg.record_timing else 0.0
    return DiagnosticsReport(k, kl, fi, m0, tv, w2, float("nan"), ms)
