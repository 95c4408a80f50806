"""Acceptance suite: one test per shipping criterion, each printing a
PASS/FAIL line (run with `pytest tests/test_acceptance.py -s` to see them).

Criterion 6's ULA leg is expected to fail: measured at the density level
(exact invariant density of the ULA transition kernel, no estimator noise),
ULA's stationary KL bias on the quadratic target is exactly
(s-1-ln s)/2 with s = 1/(1-alpha*h/2), which scales as h^2, not h; KL is
quadratic around its minimum, so any scheme whose invariant density is
rho*(1+O(h)) has O(h^2) KL bias. The criterion is asserted as stated and
fails honestly; the h-vs-h^2 gap does hold in W2 (see the companion test).
"""

import time

import numpy as np
import pytest

from brwplab.density import (GridDensity, ParticleEnsemble, kl_divergence,
                             target_density, uniform_axis, w2_grids_1d)
from brwplab.potentials import (from_catalog, make_gaussian_mixture,
                                make_quadratic, make_zero)
from brwplab.proximal import (GridProxOperator, ProxParams, denominator_exact,
                              denominator_laplace, first_order_expansion,
                              prox_step)
from brwplab.samplers import (DensityState, SamplerConfig, brwp_step,
                              evolve_law, run)
from brwplab.theory import sequence_bound_check

from conftest import gaussian_grid

AXIS = uniform_axis(-12.0, 12.0, 2401)
QUAD = make_quadratic(1.0, 1)


def _report(num, label, ok, detail=""):
    print(f"ACCEPTANCE {num} [{'PASS' if ok else 'FAIL'}] {label} {detail}")


def _slope(xs, ys):
    return float(np.polyfit(np.log(np.asarray(xs)), np.log(np.asarray(ys)), 1)[0])


def ula_invariant_density(target, beta, h, axes, tol=2e-14, max_iter=6000):
    """Exact stationary density of the ULA chain by power iteration of its
    Gaussian transition kernel on the grid (deterministic, estimator-free)."""
    x = axes[0]
    w = np.full(x.size, x[1] - x[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    mu = x - h * target.grad_fn(x[:, None])[:, 0]
    var = 2.0 * h / beta
    kernel = np.exp(-(x[:, None] - mu[None, :]) ** 2 / (2 * var)) \
        / np.sqrt(2 * np.pi * var)
    pi = target_density(target, axes, beta).values
    for it in range(max_iter):
        nxt = kernel @ (w * pi)
        nxt /= np.sum(w * nxt)
        if it % 20 == 19 and np.max(np.abs(nxt - pi)) < tol:
            return GridDensity(axes, nxt)
        pi = nxt
    return GridDensity(axes, pi)


def successive_chain_plateau(target, beta, t_step, axes, tol=1e-13,
                             max_iter=4000):
    op = GridProxOperator(axes, target, ProxParams(T=t_step, beta=beta))
    g = target_density(target, axes, beta)
    prev = np.inf
    for it in range(max_iter):
        g, _ = op.step(g)
        if it % 25 == 24:
            kl = kl_divergence(g, target, beta)
            if abs(prev - kl) < tol:
                break
            prev = kl
    return g


def test_acceptance_1_order_two_consistency():
    t0 = time.perf_counter()
    rho0 = gaussian_grid(AXIS, var=4.0)
    t_list = [0.2, 0.1, 0.05, 0.025]
    errs = []
    for t_step in t_list:
        rho_t, _ = prox_step(rho0, QUAD, ProxParams(T=t_step, beta=1.0))
        foe = first_order_expansion(rho0, QUAD, 1.0, t_step)
        errs.append(float(np.max(np.abs(rho_t.values - foe.values))))
    slope = _slope(t_list, errs)
    elapsed = time.perf_counter() - t0
    ok = 1.7 <= slope <= 2.3 and elapsed < 30
    _report(1, "order-2 consistency of the kernel step", ok,
            f"slope={slope:.3f} errs={['%.2e' % e for e in errs]} ({elapsed:.1f}s)")
    assert 1.7 <= slope <= 2.3
    assert elapsed < 30


def test_acceptance_2_laplace_denominator_accuracy():
    t0 = time.perf_counter()
    slopes = {}
    for y in (-2.0, 0.0, 2.0):
        t_list = [0.2, 0.1, 0.05, 0.025]
        errs = []
        for t_step in t_list:
            p = ProxParams(T=t_step, beta=1.0, z_axes=(AXIS,))
            errs.append(abs(denominator_exact([y], QUAD, p)
                            - denominator_laplace([y], QUAD, p)))
        slopes[y] = _slope(t_list, errs)
    p = ProxParams(T=0.1, beta=1.0, z_axes=(AXIS,))
    exact = denominator_exact([0.0], QUAD, p)
    lap = denominator_laplace([0.0], QUAD, p)
    elapsed = time.perf_counter() - t0
    ok = (all(s >= 1.7 for s in slopes.values())
          and abs(exact - 0.953462589) <= 1e-6
          and abs(lap - 0.952380952) <= 1e-6 and elapsed < 5)
    _report(2, "Laplace denominator accuracy", ok,
            f"slopes={ {k: round(v, 3) for k, v in slopes.items()} } "
            f"exact={exact:.9f} laplace={lap:.9f} ({elapsed:.1f}s)")
    assert all(s >= 1.7 for s in slopes.values())
    assert abs(exact - 0.953462589) <= 1e-6
    assert abs(lap - 0.952380952) <= 1e-6
    assert elapsed < 5


def test_acceptance_3_heat_kernel_reduction():
    t0 = time.perf_counter()
    rho0 = gaussian_grid(AXIS, var=1.0)
    rho_t, _ = prox_step(rho0, make_zero(1), ProxParams(T=0.5, beta=2.0))
    ref = np.exp(-AXIS**2 / 3.0) / np.sqrt(3.0 * np.pi)
    err = float(np.max(np.abs(rho_t.values - ref)))
    elapsed = time.perf_counter() - t0
    ok = err <= 1e-4 and elapsed < 5
    _report(3, "heat-kernel reduction at V=0", ok,
            f"max_err={err:.2e} ({elapsed:.1f}s)")
    assert err <= 1e-4
    assert elapsed < 5


def test_acceptance_4_pure_prox_kl_decay():
    t0 = time.perf_counter()
    t_step, alpha = 0.01, 1.0
    op = GridProxOperator((AXIS,), QUAD, ProxParams(T=t_step, beta=1.0))
    g = gaussian_grid(AXIS, var=2.0)
    kl0 = kl_divergence(g, QUAD, 1.0)
    worst_margin = np.inf
    ok = True
    for k in range(1, 201):
        g, _ = op.step(g)
        kl = kl_divergence(g, QUAD, 1.0)
        bound = kl0 * np.exp(-2.0 * alpha * k * t_step) + 0.05 * kl0
        worst_margin = min(worst_margin, bound - kl)
        ok &= kl <= bound
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 60
    _report(4, "pure proximal-iteration KL decay", ok,
            f"min_margin={worst_margin:.2e} terminal_kl={kl:.2e} ({elapsed:.1f}s)")
    assert ok
    assert elapsed < 60


def test_acceptance_5_semi_implicit_vs_theory_bound():
    t0 = time.perf_counter()
    cfg = SamplerConfig(method="brwp_successive", h=0.05, n_particles=2000,
                        n_steps=200, seed=0, diag_every=1)
    result = run(cfg, QUAD)
    kl0 = result.reports[0].kl
    slack = 0.1 * kl0 * cfg.h
    violations = [r.iter for r in result.reports if r.kl > r.kl_bound + slack]
    terminal = result.reports[-1].kl
    elapsed = time.perf_counter() - t0
    ok = not violations and terminal <= 5e-3 and elapsed < 300
    _report(5, "measured KL below the decay bound", ok,
            f"violations={violations[:5]} terminal_kl={terminal:.2e} ({elapsed:.0f}s)")
    assert not violations
    assert terminal <= 5e-3
    assert elapsed < 300


H_BIAS = [0.1, 0.05, 0.025]


def _brwp_plateau_kls():
    return [kl_divergence(successive_chain_plateau(QUAD, 1.0, h, (AXIS,)),
                          QUAD, 1.0) for h in H_BIAS]


def _ula_plateau_kls():
    return [kl_divergence(ula_invariant_density(QUAD, 1.0, h, (AXIS,)),
                          QUAD, 1.0) for h in H_BIAS]


def test_acceptance_6_bias_order_brwp_leg():
    t0 = time.perf_counter()
    kls = _brwp_plateau_kls()
    slope = _slope(H_BIAS, kls)
    elapsed = time.perf_counter() - t0
    ok = slope >= 1.6 and elapsed < 600
    _report(6, "bias order, proximal chain leg (slope >= 1.6)", ok,
            f"slope={slope:.3f} kls={['%.2e' % k for k in kls]} ({elapsed:.0f}s)")
    assert slope >= 1.6
    assert elapsed < 600


def test_acceptance_6_bias_order_ula_leg():
    """Expected honest failure: ULA's stationary KL bias is Theta(h^2) on a
    Gaussian target (exactly (s-1-ln s)/2, s = 1/(1-h/2)), so its log-log
    slope is ~2.0, outside the required [0.7, 1.3]. The power-iteration
    measurement is cross-checked against that closed form below before the
    criterion is asserted as stated.
    """
    t0 = time.perf_counter()
    kls = _ula_plateau_kls()
    for h, measured in zip(H_BIAS, kls):
        s = 1.0 / (1.0 - h / 2.0)
        analytic = 0.5 * (s - 1.0 - np.log(s))
        assert measured == pytest.approx(analytic, rel=0.02), \
            "power-iteration invariant disagrees with the AR(1) closed form"
    slope = _slope(H_BIAS, kls)
    elapsed = time.perf_counter() - t0
    ok = 0.7 <= slope <= 1.3
    _report(6, "bias order, ULA leg (slope in [0.7, 1.3])", ok,
            f"slope={slope:.3f} kls={['%.2e' % k for k in kls]} "
            f"(Theta(h^2) analytically; criterion unattainable) ({elapsed:.0f}s)")
    assert 0.7 <= slope <= 1.3, (
        f"ULA stationary KL slope is {slope:.3f}, matching the exact "
        f"Theta(h^2) law of its Gaussian invariant density; a slope in "
        f"[0.7, 1.3] is not attainable by any noise-free measurement")


def test_bias_order_w2_exhibits_h_vs_h2_gap():
    """Companion evidence (not an acceptance criterion): in Wasserstein-2 the
    bias gap is real: ULA's stationary W2 scales like h while the law of the
    closed-loop semi-implicit scheme scales like h^2."""
    ula_w2, law_w2 = [], []
    for h in H_BIAS:
        pi = ula_invariant_density(QUAD, 1.0, h, (AXIS,))
        rs = target_density(QUAD, (AXIS,), 1.0)
        ula_w2.append(w2_grids_1d(pi, rs, 2048))
        cfg = SamplerConfig(method="brwp_successive", h=h, n_steps=400,
                            n_particles=100, seed=0, diag_every=400)
        trace = evolve_law(cfg, QUAD)
        law_w2.append(trace.reports[-1].w2)
    s_ula = _slope(H_BIAS, ula_w2)
    s_law = _slope(H_BIAS, law_w2)
    print(f"W2 bias slopes: ula={s_ula:.3f} law={s_law:.3f}")
    assert 0.8 <= s_ula <= 1.2
    assert s_law >= 1.6


def test_acceptance_7_stepsize_rule():
    t0 = time.perf_counter()
    threshold = 1e-3
    hits, stats = {}, {}
    for h in (1.0 / 6.0, 1.0 / 3.0, 0.6, 1.0):
        cfg = SamplerConfig(method="brwp_successive", h=h, n_steps=200,
                            n_particles=100, seed=0, diag_every=1)
        trace = evolve_law(cfg, QUAD)
        kls = [r.kl for r in trace.reports]
        hits[h] = next((r.iter for r in trace.reports if r.kl <= threshold), None)
        stats[h] = (all(np.isfinite(kls)) and not trace.folded
                    and kls[-1] <= kls[0])
    elapsed = time.perf_counter() - t0
    ok = (hits[1.0 / 3.0] is not None and hits[1.0 / 6.0] is not None
          and hits[1.0 / 3.0] < hits[1.0 / 6.0]
          and stats[0.6] and not stats[1.0] and elapsed < 300)
    _report(7, "stepsize rule (1/3 beats 1/6; 0.6 stable; 1.0 unstable)", ok,
            f"steps_to_threshold={ {round(k, 3): v for k, v in hits.items()} } "
            f"stable={ {round(k, 3): v for k, v in stats.items()} } ({elapsed:.0f}s)")
    assert hits[1.0 / 3.0] < hits[1.0 / 6.0]
    assert stats[0.6]
    assert not stats[1.0]
    assert elapsed < 300


@pytest.mark.parametrize("dim", [1, 10])
def test_acceptance_8_mode_balance(dim):
    t0 = time.perf_counter()
    target = make_gaussian_mixture(2.0, 1.0, dim=dim)
    cfg = SamplerConfig(method="brwp_particle", h=0.02, n_particles=500,
                        n_steps=50, seed=0, diag_every=50)
    result = run(cfg, target)
    x0 = result.ensemble.points[:, 0]
    balance = float(np.mean(x0 > 0))
    mean0 = float(np.mean(x0))
    elapsed = time.perf_counter() - t0
    ok = 0.3 <= balance <= 0.7 and abs(mean0) <= 0.3 and elapsed < 300
    _report(8, f"particle-backend mode balance (d={dim})", ok,
            f"balance={balance:.3f} mean={mean0:+.3f} ({elapsed:.0f}s)")
    assert 0.3 <= balance <= 0.7
    assert abs(mean0) <= 0.3
    assert elapsed < 300


def test_acceptance_9_sequence_lemma():
    t0 = time.perf_counter()
    for c1 in (0.5, 1.0, 2.0):
        for c3 in (1.0, 4.0, 8.0):
            for h in (0.05, 0.1, 0.2):
                for c2 in (0.0, 1.0):
                    assert sequence_bound_check(c1, c2, c3, h, 1.0, 1000), \
                        (c1, c2, c3, h)
    elapsed = time.perf_counter() - t0
    ok = elapsed < 1
    _report(9, "sequence recursion bound on the 27-point grid", ok,
            f"({elapsed:.2f}s)")
    assert elapsed < 1


def test_acceptance_10_property_suites():
    t0 = time.perf_counter()
    # mass conservation + positivity across the catalog
    presets = [
        ("quadratic", {"dim": 1}, (-12.0, 12.0, 2401)),
        ("gaussian_mixture", {"dim": 1}, (-12.0, 12.0, 2401)),
        ("l1_l12", {"dim": 1}, (-24.0, 24.0, 4801)),
        ("gauss_laplace", {"dim": 1}, (-24.0, 24.0, 4801)),
    ]
    for tid, params, (lo, hi, n) in presets:
        target = from_catalog(tid, params)
        ax = uniform_axis(lo, hi, n)
        rho0 = gaussian_grid(ax, var=2.0)
        for t_step in (0.1, 0.05):
            rho_t, mass = prox_step(rho0, target, ProxParams(T=t_step, beta=1.0))
            assert np.all(rho_t.values >= 0), (tid, t_step)
            assert abs(mass - 1.0) <= 5e-3, (tid, t_step, mass)
    # gradient-dominated inequality on random grid densities
    rng = np.random.default_rng(17)
    from brwplab.density import fisher_information
    for _ in range(20):
        g = gaussian_grid(AXIS, mean=rng.uniform(-1.5, 1.5),
                          var=rng.uniform(0.4, 3.0))
        assert fisher_information(g, QUAD, 1.0) >= \
            2.0 * kl_divergence(g, QUAD, 1.0) - 1e-6
    # stationarity fixed point: chain started at the target stays at its floor
    rs = target_density(QUAD, (AXIS,), 1.0)
    op = GridProxOperator((AXIS,), QUAD, ProxParams(T=0.02, beta=1.0))
    g = rs
    for _ in range(10):
        g, _ = op.step(g)
        assert kl_divergence(g, QUAD, 1.0) <= 5e-5
    # and stationary particles barely move in one synchronous step
    cfg = SamplerConfig(method="brwp_successive", h=0.02, n_particles=500,
                        n_steps=1, seed=5)
    pts = np.random.default_rng(5).standard_normal((500, 1))
    out, _ = brwp_step(ParticleEnsemble(pts), QUAD, cfg, DensityState(chain=rs))
    assert np.mean(np.abs(out.points - pts)) <= 2e-2 * cfg.h
    # determinism: byte-identical reruns
    for method in ("ula", "brwp_successive"):
        cfg = SamplerConfig(method=method, h=0.05, n_steps=10, n_particles=200,
                            seed=42, diag_every=5)
        rows_a = [r.csv_row() for r in run(cfg, QUAD).reports]
        rows_b = [r.csv_row() for r in run(cfg, QUAD).reports]
        assert rows_a == rows_b
    elapsed = time.perf_counter() - t0
    ok = elapsed < 300
    _report(10, "property suites (mass, positivity, PL, stationarity, determinism)",
            ok, f"({elapsed:.0f}s)")
    assert elapsed < 300
