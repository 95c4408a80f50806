"""Density representations and divergence diagnostics.

GridDensity holds a nonnegative tensor-grid density (d <= 3) with uniform
axes and trapezoid-quadrature mass ~ 1. ParticleEnsemble is the sampler
state. All divergences (KL, relative Fisher information, fourth-moment
functional M0, total variation) are trapezoid estimates against the Gibbs
target exp(-beta*V)/Z with Z computed on the same grid.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
import numpy as np

from .errors import DegenerateDensityError, ParameterError, TruncationError
from .potentials import Potential

TAIL_MASS_TOL = 1e-8      # refused if more target mass than this lies off-grid
GRID_EXTENSION = 0.25     # fractional span appended per side for the tail check
DEFAULT_LOG_FLOOR = 1e-300


def uniform_axis(lo: float, hi: float, n: int) -> np.ndarray:
    if not (hi > lo) or n < 2:
        raise ParameterError(f"bad axis spec lo={lo} hi={hi} n={n}")
    return np.linspace(lo, hi, int(n))


def trapezoid_weights(axis: np.ndarray) -> np.ndarray:
    w = np.full(axis.size, axis[1] - axis[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def _weight_tensor(axes) -> np.ndarray:
    w = trapezoid_weights(axes[0])
    for ax in axes[1:]:
        w = np.multiply.outer(w, trapezoid_weights(ax))
    return w


def central_diff(values: np.ndarray, dx: float, axis: int) -> np.ndarray:
    """Second-order interior central difference, first-order one-sided ends."""
    g = np.empty_like(values)
    sl = [slice(None)] * values.ndim

    def at(idx):
        s = list(sl)
        s[axis] = idx
        return tuple(s)

    g[at(slice(1, -1))] = (values[at(slice(2, None))] - values[at(slice(None, -2))]) / (2 * dx)
    g[at(0)] = (values[at(1)] - values[at(0)]) / dx
    g[at(-1)] = (values[at(-1)] - values[at(-2)]) / dx
    return g


@dataclass
class GridDensity:
    """Nonnegative density values on a uniform tensor grid (d <= 3)."""

    axes: tuple
    values: np.ndarray
    log_floor: float = DEFAULT_LOG_FLOOR

    def __post_init__(self):
        self.axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        if len(self.axes) < 1 or len(self.axes) > 3:
            raise ParameterError(f"grid densities support 1 <= d <= 3, got d={len(self.axes)}")
        for a in self.axes:
            if a.ndim != 1 or a.size < 2:
                raise ParameterError("each axis must be a 1-D array with >= 2 points")
            steps = np.diff(a)
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
                raise ParameterError("axes must be uniformly spaced")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != tuple(a.size for a in self.axes):
            raise ParameterError(
                f"values shape {self.values.shape} does not match axes "
                f"{tuple(a.size for a in self.axes)}")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise DegenerateDensityError("density values must be finite and nonnegative")

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def spacing(self) -> tuple:
        return tuple(float(a[1] - a[0]) for a in self.axes)

    def weights(self) -> np.ndarray:
        return _weight_tensor(self.axes)

    def points(self) -> np.ndarray:
        """All grid points as an (N, d) array (ij meshgrid order)."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def mass(self) -> float:
        return float(np.sum(self.weights() * self.values))

    def normalize(self) -> "GridDensity":
        m = self.mass()
        if not np.isfinite(m) or m <= 0:
            raise DegenerateDensityError(f"cannot normalize density with mass {m}")
        return GridDensity(self.axes, self.values / m, self.log_floor)

    def log_values(self) -> np.ndarray:
        return np.log(np.maximum(self.values, self.log_floor))

    def score(self) -> list:
        """Per-axis central-difference gradient of log(density)."""
        logv = self.log_values()
        return [central_diff(logv, self.spacing[i], i) for i in range(self.dim)]

    def marginal_first(self) -> "GridDensity":
        """First-axis marginal (trapezoid over remaining axes)."""
        if self.dim == 1:
            return self
        vals = self.values
        for i in range(self.dim - 1, 0, -1):
            vals = np.tensordot(vals, trapezoid_weights(self.axes[i]), axes=([i], [0]))
        return GridDensity((self.axes[0],), vals, self.log_floor).normalize()

    # --- serialization: axis rows, then value rows (row-major over leading axes) ---
    def to_csv(self, path) -> None:
        path = Path(path)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            for a in self.axes:
                writer.writerow([repr(float(v)) for v in a])
            flat = self.values.reshape(-1, self.axes[-1].size)
            for row in flat:
                writer.writerow([repr(float(v)) for v in row])
        sidecar = {
            "axes": [{"lo": float(a[0]), "hi": float(a[-1]), "n": int(a.size)} for a in self.axes],
            "shape": [int(s) for s in self.values.shape],
            "log_floor": self.log_floor,
            "csv": path.name,
        }
        with open(path.with_suffix(path.suffix + ".json"), "w") as f:
            json.dump(sidecar, f, indent=1, sort_keys=True)
            f.write("\n")

    @staticmethod
    def from_csv(path) -> "GridDensity":
        path = Path(path)
        with open(path.with_suffix(path.suffix + ".json")) as f:
            meta = json.load(f)
        with open(path) as f:
            rows = [[float(v) for v in row] for row in csv.reader(f)]
        d = len(meta["axes"])
        axes = tuple(np.asarray(rows[i]) for i in range(d))
        values = np.asarray(rows[d:]).reshape(meta["shape"])
        return GridDensity(axes, values, meta.get("log_floor", DEFAULT_LOG_FLOOR))


@dataclass
class ParticleEnsemble:
    """N weighted-equal particles in R^d plus RNG seed lineage."""

    points: np.ndarray
    step_index: int = 0
    seed: int = 0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        if self.points.shape[0] < 2:
            raise ParameterError("ensembles need at least 2 particles")
        if not np.all(np.isfinite(self.points)):
            raise DegenerateDensityError("particle coordinates must be finite")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass
class DiagnosticsReport:
    """One diagnostics row of a sampling run."""

    iter: int
    kl: float
    fisher: float
    m0: float
    tv: float
    w2: float
    kl_bound: float = float("nan")
    wallclock_ms: float = 0.0

    CSV_HEADER = "iter,kl,fisher,m0,tv,w2,kl_bound,wallclock_ms"

    def csv_row(self) -> str:
        vals = [self.kl, self.fisher, self.m0, self.tv, self.w2,
                self.kl_bound, self.wallclock_ms]
        return ",".join([str(self.iter)] + [repr(float(v)) for v in vals])


# ---------------------------------------------------------------- targets

def target_density(target: Potential, axes, beta: float,
                   check_truncation: bool = True) -> GridDensity:
    """exp(-beta*V)/Z on the grid; refuses grids that truncate target mass."""
    axes = tuple(np.asarray(a, dtype=float) for a in axes)
    vals = _unnormalized_target(target, axes, beta)
    z = float(np.sum(_weight_tensor(axes) * vals))
    if not np.isfinite(z) or z <= 0:
        raise DegenerateDensityError("target has non-finite or zero grid mass")
    if check_truncation:
        ext_axes = []
        for a in axes:
            dx = a[1] - a[0]
            extra = int(np.ceil(GRID_EXTENSION * (a[-1] - a[0]) / dx))
            lo = a[0] - extra * dx
            ext_axes.append(np.linspace(lo, a[-1] + extra * dx, a.size + 2 * extra))
        vals_ext = _unnormalized_target(target, tuple(ext_axes), beta)
        z_ext = float(np.sum(_weight_tensor(tuple(ext_axes)) * vals_ext))
        if (z_ext - z) / z_ext > TAIL_MASS_TOL:
            raise TruncationError(
                f"target mass outside grid is {(z_ext - z) / z_ext:.3e} "
                f"(> {TAIL_MASS_TOL:.1e}); widen the grid")
    return GridDensity(axes, vals / z)


def _unnormalized_target(target: Potential, axes, beta: float) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
    v = target.eval_fn(pts)
    v = v - v.min()  # stabilize the exponential; cancels in normalization
    return np.exp(-beta * v).reshape([a.size for a in axes])


# ------------------------------------------------------------ estimators

def kde(ensemble: ParticleEnsemble, bandwidth, query_axes) -> GridDensity:
    """Gaussian-product-kernel density estimate, normalized on the grid.

    bandwidth: positive float, per-axis array, or "auto" for the Silverman
    rule (4/(d+2))^{1/(d+4)} N^{-1/(d+4)} * per-axis sample std, which in
    1-D is exactly (4/(3N))^{1/5} * std.
    """
    if ensemble.n < 2:
        raise ParameterError("kde needs at least 2 particles")
    axes = tuple(np.asarray(a, dtype=float) for a in query_axes)
    d = len(axes)
    if ensemble.dim != d:
        raise ParameterError(f"ensemble dim {ensemble.dim} != query grid dim {d}")
    if isinstance(bandwidth, str):
        if bandwidth != "auto":
            raise ParameterError(f"unknown bandwidth spec {bandwidth!r}")
        bw = silverman_bandwidth(ensemble.points)
    else:
        bw = np.broadcast_to(np.asarray(bandwidth, dtype=float), (d,)).copy()
    if np.any(bw <= 0):
        raise ParameterError(f"bandwidth must be positive, got {bw}")

    kernels = []
    for i in range(d):
        diff = axes[i][:, None] - ensemble.points[None, :, i]
        kernels.append(np.exp(-diff**2 / (2 * bw[i] ** 2)) / (bw[i] * np.sqrt(2 * np.pi)))
    if d == 1:
        vals = kernels[0].mean(axis=1)
    elif d == 2:
        vals = np.einsum("aj,bj->ab", kernels[0], kernels[1]) / ensemble.n
    else:
        vals = np.einsum("aj,bj,cj->abc", kernels[0], kernels[1], kernels[2]) / ensemble.n
    return GridDensity(axes, vals).normalize()


def silverman_bandwidth(points: np.ndarray) -> np.ndarray:
    n, d = points.shape
    factor = (4.0 / (d + 2.0)) ** (1.0 / (d + 4.0)) * n ** (-1.0 / (d + 4.0))
    return factor * points.std(axis=0, ddof=1)


# ------------------------------------------------------------ divergences

def kl_divergence(g: GridDensity, target: Potential, beta: float) -> float:
    rs = target_density(target, g.axes, beta)
    ratio_log = g.log_values() - rs.log_values()
    integrand = np.where(g.values > 0, g.values * ratio_log, 0.0)
    return float(np.sum(g.weights() * integrand))


def _relative_score(g: GridDensity, target: Potential, beta: float) -> np.ndarray:
    """|grad log(g/rho*)|^2 on the grid; target part analytic (-beta*grad V)."""
    grads = g.score()
    gv = target.grad_fn(g.points())
    sq = np.zeros_like(g.values)
    shape = g.values.shape
    for i in range(g.dim):
        s = grads[i] + beta * gv[:, i].reshape(shape)
        sq += s * s
    return sq


def fisher_information(g: GridDensity, target: Potential, beta: float) -> float:
    sq = _relative_score(g, target, beta)
    target_density(target, g.axes, beta)  # truncation pre-check, same as KL
    return float(np.sum(g.weights() * sq * g.values))


def fourth_moment_m0(g: GridDensity, target: Potential, beta: float) -> float:
    sq = _relative_score(g, target, beta)
    target_density(target, g.axes, beta)
    return float(beta ** (-2) * np.sum(g.weights() * sq * sq * g.values))


def tv_distance(g: GridDensity, target: Potential, beta: float) -> float:
    """Total variation in the unhalved convention: integral of |g - rho*| (range [0,2])."""
    rs = target_density(target, g.axes, beta)
    return float(np.sum(g.weights() * np.abs(g.values - rs.values)))


def w2_1d(samples_a: np.ndarray, samples_b: np.ndarray) -> float:
    """Quantile-coupling Wasserstein-2 distance of two sorted 1-D samples."""
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    if a.ndim != 1 or b.ndim != 1 or a.size != b.size or a.size == 0:
        raise ParameterError("w2_1d needs two equal-length 1-D sample arrays")
    if np.any(np.diff(a) < 0) or np.any(np.diff(b) < 0):
        raise ParameterError("w2_1d inputs must be sorted ascending")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def grid_quantiles(g: GridDensity, probs: np.ndarray) -> np.ndarray:
    """Quantile function of a 1-D grid density via its trapezoid CDF."""
    if g.dim != 1:
        raise ParameterError("grid_quantiles requires a 1-D density")
    x = g.axes[0]
    dx = g.spacing[0]
    mid = 0.5 * (g.values[1:] + g.values[:-1]) * dx
    cdf = np.concatenate([[0.0], np.cumsum(mid)])
    cdf /= cdf[-1]
    return np.interp(probs, cdf, x)


def w2_to_target_1d(samples: np.ndarray, target: Potential, beta: float,
                    axes) -> float:
    """W2 between a 1-D sample and the target, via exact quantile coupling."""
    rs = target_density(target, (axes[0],), beta, check_truncation=False)
    s = np.sort(np.asarray(samples, dtype=float))
    q = grid_quantiles(rs, (np.arange(s.size) + 0.5) / s.size)
    return w2_1d(s, np.sort(q))


def w2_grids_1d(g: GridDensity, other: GridDensity, n_quantiles: int = 512) -> float:
    probs = (np.arange(n_quantiles) + 0.5) / n_quantiles
    qa = grid_quantiles(g, probs)
    qb = grid_quantiles(other, probs)
    return w2_1d(np.sort(qa), np.sort(qb))


# --------------------------------------------------------- FP right side

def fp_rhs(g: GridDensity, target: Potential, beta: float) -> np.ndarray:
    """div(rho*grad V) + beta^{-1}*Laplacian(rho), in conservative flux form.

    Central differences inside, one-sided at the boundary; the flux form
    keeps the discrete integral of the output near zero.
    """
    if any(a.size < 5 for a in g.axes):
        raise ParameterError("fp_rhs needs at least 5 points per axis")
    shape = g.values.shape
    gv = target.grad_fn(g.points())
    rhs = np.zeros_like(g.values)
    for i in range(g.dim):
        flux = g.values * gv[:, i].reshape(shape) \
            + central_diff(g.values, g.spacing[i], i) / beta
        rhs += central_diff(flux, g.spacing[i], i)
    return rhs
