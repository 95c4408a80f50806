"""Target potentials V defining rho* ∝ exp(-beta*V), with gradients and Laplacians.

Every potential is vectorized over batches of points: callables accept an
(N, d) array and return (N,) for scalar fields or (N, d) for gradients.
The public methods also accept a bare scalar (d=1) or a single (d,) point
and return correspondingly squeezed results.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ParameterError

FD_REL_STEP = 1e-4  # stencil width factor: delta = FD_REL_STEP * (1 + |x|)


def _logsumexp(a, axis=None):
    m = np.max(a, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


@dataclass
class Potential:
    """A potential V with gradient, Laplacian and regularity metadata.

    alpha is the strong log-concavity constant (Hessian >= alpha*I) when
    known; lipschitz_grad bounds the Hessian norm. Both are optional and
    purely informational for samplers/theory.
    """

    dim: int
    eval_fn: Callable[[np.ndarray], np.ndarray]
    grad_fn: Callable[[np.ndarray], np.ndarray]
    laplacian_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    alpha: Optional[float] = None
    lipschitz_grad: Optional[float] = None
    name: str = "potential"
    params: dict = field(default_factory=dict)

    def _as_batch(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        if scalar:
            if self.dim != 1:
                raise ParameterError(f"scalar input requires dim=1, have dim={self.dim}")
            x = x.reshape(1, 1)
        elif x.ndim == 1:
            if x.size == self.dim:
                x = x.reshape(1, self.dim)
            elif self.dim == 1:
                x = x.reshape(-1, 1)
                return x, "vector1d"
            else:
                raise ParameterError(f"point of size {x.size} does not match dim={self.dim}")
        elif x.ndim != 2 or x.shape[1] != self.dim:
            raise ParameterError(f"expected (N,{self.dim}) array, got shape {x.shape}")
        return x, ("scalar" if scalar else ("point" if x.shape[0] == 1 else "batch"))

    def eval(self, x):
        xb, kind = self._as_batch(x)
        v = self.eval_fn(xb)
        if kind in ("scalar", "point"):
            return float(v[0])
        return v

    def grad(self, x):
        xb, kind = self._as_batch(x)
        g = self.grad_fn(xb)
        if kind == "scalar":
            return float(g[0, 0])
        if kind == "point":
            return g[0]
        if kind == "vector1d":
            return g[:, 0]
        return g

    def laplacian(self, x):
        xb, kind = self._as_batch(x)
        if self.laplacian_fn is not None:
            lap = self.laplacian_fn(xb)
        else:
            lap = self._fd_laplacian(xb)
        if kind in ("scalar", "point"):
            return float(lap[0])
        return lap

    def _fd_laplacian(self, xb):
        """Central-difference Laplacian, median over three shifted centers.

        The shift makes the estimate robust next to kinks of nonsmooth
        potentials: a kink contaminates at most one of the three stencils.
        """
        delta = FD_REL_STEP * (1.0 + np.linalg.norm(xb, axis=1))
        total = np.zeros((3, xb.shape[0]))
        for shift_idx, shift in enumerate((0.0, 3.0, -3.0)):
            acc = np.zeros(xb.shape[0])
            for i in range(self.dim):
                e = np.zeros(self.dim)
                e[i] = 1.0
                c = xb + (shift * delta)[:, None] * e
                vp = self.eval_fn(c + delta[:, None] * e)
                vm = self.eval_fn(c - delta[:, None] * e)
                v0 = self.eval_fn(c)
                acc += (vp - 2.0 * v0 + vm) / delta**2
            total[shift_idx] = acc
        return np.median(total, axis=0)


def make_quadratic(alpha: float, dim: int) -> Potential:
    """V(x) = (alpha/2)|x|^2 with exact gradient alpha*x and Laplacian alpha*d."""
    if alpha <= 0:
        raise ParameterError(f"alpha must be positive, got {alpha}")
    if dim < 1:
        raise ParameterError(f"dim must be >= 1, got {dim}")
    return Potential(
        dim=dim,
        eval_fn=lambda x: 0.5 * alpha * np.sum(x * x, axis=1),
        grad_fn=lambda x: alpha * x,
        laplacian_fn=lambda x: np.full(x.shape[0], alpha * dim),
        alpha=float(alpha),
        lipschitz_grad=float(alpha),
        name="quadratic",
        params={"alpha": float(alpha), "dim": dim},
    )


def make_zero(dim: int) -> Potential:
    """V ≡ 0 (free heat flow); handy fixture for kernel-formula reductions."""
    return Potential(
        dim=dim,
        eval_fn=lambda x: np.zeros(x.shape[0]),
        grad_fn=lambda x: np.zeros_like(x),
        laplacian_fn=lambda x: np.zeros(x.shape[0]),
        name="zero",
        params={"dim": dim},
    )


def make_gaussian_mixture(a, sigma: float = 1.0, dim: Optional[int] = None,
                          beta: float = 1.0) -> Potential:
    """Symmetric two-component Gaussian mixture target.

    rho*(x) = [N(x; a, sigma^2 I) + N(x; -a, sigma^2 I)] / 2 and
    V = -log(rho*)/beta, so exp(-beta*V) is exactly the normalized mixture.
    `a` may be a vector, or a scalar interpreted as a*e_1 when dim > 1.
    """
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        d = 1 if dim is None else int(dim)
        a_vec = np.zeros(d)
        a_vec[0] = float(a)
    else:
        a_vec = a.astype(float)
        d = a_vec.size
        if dim is not None and dim != d:
            raise ParameterError(f"dim={dim} conflicts with a of size {d}")
    s2 = sigma * sigma
    log_norm = np.log(2.0) + 0.5 * d * np.log(2.0 * np.pi * s2)
    a_sq = float(np.dot(a_vec, a_vec))

    def _branches(x):
        e1 = -np.sum((x - a_vec) ** 2, axis=1) / (2 * s2)
        e2 = -np.sum((x + a_vec) ** 2, axis=1) / (2 * s2)
        return e1, e2

    def eval_fn(x):
        e1, e2 = _branches(x)
        return -(_logsumexp(np.stack([e1, e2]), axis=0) - log_norm) / beta

    def grad_fn(x):
        e1, e2 = _branches(x)
        m = np.maximum(e1, e2)
        w1 = np.exp(e1 - m)
        w2 = np.exp(e2 - m)
        num = w1[:, None] * (x - a_vec) + w2[:, None] * (x + a_vec)
        return num / ((w1 + w2)[:, None] * s2 * beta)

    def laplacian_fn(x):
        e1, e2 = _branches(x)
        m = np.maximum(e1, e2)
        w1 = np.exp(e1 - m)
        w2 = np.exp(e2 - m)
        ww = w1 * w2 / (w1 + w2) ** 2
        return (d / s2 - ww * 4.0 * a_sq / s2**2) / beta

    return Potential(
        dim=d,
        eval_fn=eval_fn,
        grad_fn=grad_fn,
        laplacian_fn=laplacian_fn,
        name="gaussian_mixture",
        params={"a": a_vec.tolist(), "sigma": float(sigma), "beta": float(beta)},
    )


def _sqrt_abs_reg(t, eps):
    # |t|^{1/2} regularized as (t^2 + eps^2)^{1/4}
    return (t * t + eps * eps) ** 0.25


def make_nonsmooth_mixture(kind: str, sigma: float = 1.0, b: float = 0.25,
                           dim: int = 1, beta: float = 1.0,
                           eps: float = 1e-6) -> Potential:
    """Nonsmooth mixture targets centered at ±2*e_1.

    kind="l1_l12":      rho* ∝ exp(-|x+2e1|_1) + exp(-|x-2e1|_{1/2}^2)/2
    kind="gauss_laplace": rho* ∝ exp(-|x-2e1|^2/(2 sigma^2)) + exp(-|x+2e1|_1/(2b))

    Gradients are subgradients (sign(0)=0 at kinks); the L_{1/2} quasi-norm
    uses |t|^{1/2} -> (t^2+eps^2)^{1/4}. Laplacians fall back to the shifted
    finite-difference stencil of Potential.
    """
    if sigma <= 0 or b <= 0 or eps <= 0:
        raise ParameterError("sigma, b, eps must all be positive")
    if dim < 1:
        raise ParameterError(f"dim must be >= 1, got {dim}")
    c = np.zeros(dim)
    c[0] = 2.0

    if kind == "l1_l12":
        def branch_exponents(x):
            g1 = np.sum(np.abs(x + c), axis=1)                       # L1 branch
            half = np.sum(_sqrt_abs_reg(x - c, eps), axis=1) ** 2     # |.|_{1/2}
            g2 = half * half                                         # squared quasi-norm
            return -g1, -g2 + np.log(0.5)

        def branch_grads(x):
            gr1 = np.sign(x + c)
            u = x - c
            s = np.sum(_sqrt_abs_reg(u, eps), axis=1)
            # d/du_i (s^4) = 4 s^3 * d/du_i (u_i^2+eps^2)^{1/4}
            ds = 0.5 * u * (u * u + eps * eps) ** (-0.75)
            gr2 = 4.0 * (s**3)[:, None] * ds
            return gr1, gr2

        # closed-form normalization known in 1-D only; higher d normalize on-grid
        log_norm = np.log(2.0 + 0.5 * np.sqrt(np.pi) * np.exp(-eps * eps)) \
            if dim == 1 else 0.0
    elif kind == "gauss_laplace":
        def branch_exponents(x):
            g1 = np.sum((x - c) ** 2, axis=1) / (2 * sigma**2)
            g2 = np.sum(np.abs(x + c), axis=1) / (2 * b)
            return -g1, -g2

        def branch_grads(x):
            gr1 = (x - c) / sigma**2
            gr2 = np.sign(x + c) / (2 * b)
            return gr1, gr2

        log_norm = np.log((sigma * np.sqrt(2 * np.pi)) ** dim + (4.0 * b) ** dim)
    else:
        raise ParameterError(f"unknown nonsmooth mixture kind {kind!r}")

    def eval_fn(x):
        e1, e2 = branch_exponents(x)
        return -(_logsumexp(np.stack([e1, e2]), axis=0) - log_norm) / beta

    def grad_fn(x):
        e1, e2 = branch_exponents(x)
        m = np.maximum(e1, e2)
        w1 = np.exp(e1 - m)
        w2 = np.exp(e2 - m)
        gr1, gr2 = branch_grads(x)
        return (w1[:, None] * gr1 + w2[:, None] * gr2) / ((w1 + w2)[:, None] * beta)

    return Potential(
        dim=dim,
        eval_fn=eval_fn,
        grad_fn=grad_fn,
        laplacian_fn=None,
        name=kind,
        params={"sigma": float(sigma), "b": float(b), "dim": dim,
                "beta": float(beta), "eps": float(eps)},
    )


def make_tabulated(xs, values) -> Potential:
    """1-D potential interpolated linearly from a table of (x, V(x)) pairs."""
    xs = np.asarray(xs, dtype=float)
    values = np.asarray(values, dtype=float)
    if xs.ndim != 1 or xs.size < 2 or xs.shape != values.shape:
        raise ParameterError("tabulated potential needs matching 1-D arrays with >= 2 rows")
    if np.any(np.diff(xs) <= 0):
        raise ParameterError("tabulated abscissae must be strictly increasing")
    slopes = np.diff(values) / np.diff(xs)

    def eval_fn(x):
        return np.interp(x[:, 0], xs, values)

    def grad_fn(x):
        idx = np.clip(np.searchsorted(xs, x[:, 0]) - 1, 0, slopes.size - 1)
        return slopes[idx][:, None]

    return Potential(dim=1, eval_fn=eval_fn, grad_fn=grad_fn, name="tabulated",
                     params={"n_table": int(xs.size)})


CATALOG = {
    "quadratic": lambda p: make_quadratic(alpha=p.get("alpha", 1.0), dim=int(p.get("dim", 1))),
    "gaussian_mixture": lambda p: make_gaussian_mixture(
        a=p["a_vec"] if "a_vec" in p else p.get("a", 2.0),
        sigma=p.get("sigma", 1.0),
        dim=int(p.get("dim", 1)),
        beta=p.get("beta", 1.0)),
    "l1_l12": lambda p: make_nonsmooth_mixture(
        "l1_l12", dim=int(p.get("dim", 1)), beta=p.get("beta", 1.0),
        eps=p.get("eps", 1e-6)),
    "gauss_laplace": lambda p: make_nonsmooth_mixture(
        "gauss_laplace", sigma=p.get("sigma", 1.0), b=p.get("b", 0.25),
        dim=int(p.get("dim", 1)), beta=p.get("beta", 1.0)),
}


def from_catalog(target_id: str, params: Optional[dict] = None) -> Potential:
    """Build a catalog potential from its string id and parameter dict."""
    if target_id not in CATALOG:
        raise ParameterError(
            f"unknown target id {target_id!r}; known: {sorted(CATALOG)}")
    p = dict(params or {})
    if target_id == "gaussian_mixture" and p.get("a_mode") == "ones":
        d = int(p.get("dim", 1))
        p["a_vec"] = [float(p.get("a", 2.0))] * d
    return CATALOG[target_id](p)
