"""Experiment runner: config parsing, presets, persistence, SVG figures.

Subcommands: prox-evolve, sample, order-check, denominator-check,
decay-check, stepsize-sweep. Configuration is a flat key-value file with
dotted section keys (e.g. ``sampler.h = 0.02``); any key can be overridden
on the command line as ``--sampler.h 0.02``.

Exit codes: 0 success / assertion pass, 1 assertion fail,
2 configuration error, 3 numerical abort.

Heavy imports happen inside main() so that --threads can pin the BLAS
thread count before numpy loads (thread count affects speed only).
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time
from pathlib import Path

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULTS = {
    "target.id": "quadratic",
    "target.alpha": 1.0,
    "target.a": 2.0,
    "target.a_mode": "e1",
    "target.sigma": 1.0,
    "target.b": 0.25,
    "target.dim": 1,
    "target.beta": 1.0,
    "sampler.method": "brwp_successive",
    "sampler.h": 0.05,
    "sampler.T": None,
    "sampler.n_particles": 500,
    "sampler.n_steps": 50,
    "sampler.seed": 0,
    "sampler.backend": "quadrature",
    "sampler.kde_bandwidth": "auto",
    "sampler.init_mean": 0.0,
    "sampler.init_sigma_sq": 2.0,
    "sampler.diag_every": 1,
    "grid.lo": None,
    "grid.hi": None,
    "grid.n": None,
    "prox.T": 0.05,
    "prox.iters": 50,
    "prox.save_every": 1,
    "order.t_list": [0.2, 0.1, 0.05, 0.025],
    "order.min_slope": 1.7,
    "denominator.y_list": [-2.0, 0.0, 2.0],
    "denominator.t_list": [0.2, 0.1, 0.05, 0.025],
    "sweep.h_list": [1.0 / 6.0, 1.0 / 3.0, 0.6, 1.0],
    "sweep.threshold": 1e-3,
    "sweep.n_steps": 200,
    "decay.slack_factor": 0.1,
    "plot": True,
    "timing.record": False,
}

# wide default grids for the heavy-tailed nonsmooth presets
GRID_PRESETS = {
    "quadratic": (-12.0, 12.0, 2401),
    "gaussian_mixture": (-12.0, 12.0, 2401),
    "gauss_laplace": (-24.0, 24.0, 4801),
    "l1_l12": (-24.0, 24.0, 4801),
}
GRID_N_BY_DIM = {1: None, 2: 161, 3: 41}


def parse_value(text: str):
    t = text.strip()
    if t.lower() in ("true", "false"):
        return t.lower() == "true"
    if t.lower() in ("none", ""):
        return None
    if "," in t:
        try:
            return [float(v) for v in t.split(",") if v.strip()]
        except ValueError:
            return t
    for cast in (int, float):
        try:
            return cast(t)
        except ValueError:
            pass
    return t


def load_config(path) -> dict:
    cfg = {}
    with open(path) as f:
        for line_no, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected 'key = value'")
            key, value = line.split("=", 1)
            cfg[key.strip()] = parse_value(value)
    return cfg


def resolve_config(args, overrides) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        for k, v in load_config(args.config).items():
            cfg[k] = v
    cfg.update(overrides)
    if args.seed is not None:
        cfg["sampler.seed"] = args.seed
    return cfg


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=10)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def write_manifest(outdir: Path, cfg: dict, command: str, extra=None):
    from . import __version__
    manifest = {
        "command": command,
        "config": {k: cfg[k] for k in sorted(cfg)},
        "git_describe": _git_describe(),
        "seed": cfg["sampler.seed"],
        "backend": cfg["sampler.backend"],
        "version": __version__,
    }
    if extra:
        manifest.update(extra)
    with open(outdir / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")


def build_target(cfg):
    from .potentials import from_catalog
    tid = cfg["target.id"]
    params = {
        "alpha": cfg["target.alpha"], "a": cfg["target.a"],
        "a_mode": cfg["target.a_mode"], "sigma": cfg["target.sigma"],
        "b": cfg["target.b"], "dim": cfg["target.dim"], "beta": cfg["target.beta"],
    }
    return from_catalog(tid, params)


def grid_spec(cfg, dim: int) -> tuple:
    lo, hi, n = cfg["grid.lo"], cfg["grid.hi"], cfg["grid.n"]
    plo, phi, pn = GRID_PRESETS.get(cfg["target.id"], (-12.0, 12.0, 2401))
    lo = plo if lo is None else lo
    hi = phi if hi is None else hi
    if n is None:
        n = pn if dim == 1 else GRID_N_BY_DIM.get(dim, 41)
    return tuple((float(lo), float(hi), int(n)) for _ in range(min(dim, 3)))


def sampler_config(cfg, dim: int):
    from .samplers import SamplerConfig
    return SamplerConfig(
        method=cfg["sampler.method"], h=float(cfg["sampler.h"]),
        T=None if cfg["sampler.T"] is None else float(cfg["sampler.T"]),
        beta=float(cfg["target.beta"]), n_particles=int(cfg["sampler.n_particles"]),
        n_steps=int(cfg["sampler.n_steps"]), seed=int(cfg["sampler.seed"]),
        backend=cfg["sampler.backend"], kde_bandwidth=cfg["sampler.kde_bandwidth"],
        init_mean=float(cfg["sampler.init_mean"]),
        init_sigma_sq=float(cfg["sampler.init_sigma_sq"]),
        grid=grid_spec(cfg, dim), diag_every=int(cfg["sampler.diag_every"]),
        record_timing=bool(cfg["timing.record"]))


def write_run_csv(path: Path, reports):
    from .density import DiagnosticsReport
    with open(path, "w", newline="") as f:
        f.write(DiagnosticsReport.CSV_HEADER + "\n")
        for r in reports:
            f.write(r.csv_row() + "\n")


def _fit_slope(xs, ys):
    import numpy as np
    return float(np.polyfit(np.log(np.asarray(xs)), np.log(np.asarray(ys)), 1)[0])


# ------------------------------------------------------------- subcommands

def cmd_prox_evolve(cfg, outdir: Path) -> int:
    import numpy as np
    from .density import kl_divergence, target_density, uniform_axis
    from .proximal import GridProxOperator, ProxParams
    from .samplers import initial_grid_density
    target = build_target(cfg)
    if target.dim > 3:
        raise _config_error("prox-evolve needs a full grid (target.dim <= 3)")
    axes = tuple(uniform_axis(lo, hi, n) for lo, hi, n in grid_spec(cfg, target.dim))
    scfg = sampler_config(cfg, target.dim)
    rho = initial_grid_density(scfg, axes)
    op = GridProxOperator(axes, target, ProxParams(T=float(cfg["prox.T"]),
                                                   beta=float(cfg["target.beta"])),
                          "quadrature" if cfg["sampler.backend"] == "particle"
                          else cfg["sampler.backend"])
    rs = target_density(target, axes, float(cfg["target.beta"]))
    iters = int(cfg["prox.iters"])
    save_every = max(1, int(cfg["prox.save_every"]))
    rows = []
    w = rho.weights()
    rho.to_csv(outdir / "density_iter_0000.csv")
    for k in range(1, iters + 1):
        rho, mass = op.step(rho)
        l1 = float(np.sum(w * np.abs(rho.values - rs.values)))
        rows.append((k, l1, kl_divergence(rho, target, float(cfg["target.beta"])), mass))
        if k % save_every == 0 or k == iters:
            rho.to_csv(outdir / f"density_iter_{k:04d}.csv")
    with open(outdir / "l1_error.csv", "w", newline="") as f:
        f.write("iter,l1,kl,prenorm_mass\n")
        for row in rows:
            f.write(",".join([str(row[0])] + [repr(v) for v in row[1:]]) + "\n")
    if cfg["plot"]:
        from .svgfig import line_plot
        gm = rho.marginal_first()
        tm = rs.marginal_first()
        line_plot(outdir / "overlay.svg",
                  [(gm.axes[0], gm.values, "computed"),
                   (tm.axes[0], tm.values, "target")],
                  title=f"kernel-proximal evolution, T={cfg['prox.T']}, "
                        f"{iters} iterations",
                  xlabel="x", ylabel="density")
        line_plot(outdir / "l1_error.svg",
                  [([r[0] for r in rows], [r[1] for r in rows], "L1 error")],
                  title="L1 distance to target", xlabel="iteration",
                  ylabel="log10 L1", logy=True)
    write_manifest(outdir, cfg, "prox-evolve",
                   {"final_l1": rows[-1][1] if rows else None})
    return EXIT_OK


def cmd_sample(cfg, outdir: Path) -> int:
    import numpy as np
    from .density import target_density, uniform_axis
    from .samplers import marginal_target, run
    target = build_target(cfg)
    scfg = sampler_config(cfg, target.dim)
    result = run(scfg, target)
    write_run_csv(outdir / "run.csv", result.reports)
    pts = result.ensemble.points
    with open(outdir / "ensemble_final.csv", "w", newline="") as f:
        f.write(",".join(f"x{i}" for i in range(pts.shape[1])) + "\n")
        for row in pts:
            f.write(",".join(repr(float(v)) for v in row) + "\n")
    if cfg["plot"]:
        from .svgfig import histogram
        overlay = None
        marg = marginal_target(target)
        if marg is not None:
            ax = uniform_axis(-6.0, 6.0, 481)
            rs = target_density(marg, (ax,), float(cfg["target.beta"]),
                                check_truncation=False)
            overlay = (ax, rs.values, "target")
        histogram(outdir / "histogram.svg", pts[:, 0], bins=40, lo=-6.0, hi=6.0,
                  overlay=overlay,
                  title=f"{scfg.method}, N={scfg.n_particles}, "
                        f"{scfg.n_steps} steps, h={scfg.h}", xlabel="x[0]")
    write_manifest(outdir, cfg, "sample",
                   {"final_kl": result.reports[-1].kl,
                    "mode_balance": float(np.mean(pts[:, 0] > 0))})
    return EXIT_OK


def cmd_order_check(cfg, outdir: Path) -> int:
    import numpy as np
    from .density import uniform_axis
    from .proximal import ProxParams, first_order_expansion, prox_step
    from .samplers import initial_grid_density
    target = build_target(cfg)
    t_list = _as_float_list(cfg["order.t_list"])
    if len(t_list) < 3:
        raise _config_error("order-check needs at least 3 stepsizes to fit a slope")
    axes = tuple(uniform_axis(lo, hi, n) for lo, hi, n in grid_spec(cfg, target.dim))
    scfg = sampler_config(cfg, target.dim)
    scfg.init_sigma_sq = float(cfg["sampler.init_sigma_sq"])
    rho0 = initial_grid_density(scfg, axes)
    beta = float(cfg["target.beta"])
    rows = []
    for t_step in t_list:
        rho_t, _ = prox_step(rho0, target, ProxParams(T=t_step, beta=beta))
        foe = first_order_expansion(rho0, target, beta, t_step)
        rows.append((t_step, float(np.max(np.abs(rho_t.values - foe.values)))))
    slope = _fit_slope([r[0] for r in rows], [r[1] for r in rows])
    with open(outdir / "order_check.csv", "w", newline="") as f:
        f.write("T,max_err\n")
        for t_step, err in rows:
            f.write(f"{t_step!r},{err!r}\n")
    if cfg["plot"]:
        from .svgfig import line_plot
        line_plot(outdir / "order_check.svg",
                  [([r[0] for r in rows], [r[1] for r in rows], "max err")],
                  title=f"order check, slope={slope:.3f}", xlabel="T",
                  ylabel="log10 err", logy=True)
    ok = slope >= float(cfg["order.min_slope"])
    write_manifest(outdir, cfg, "order-check", {"slope": slope, "pass": ok})
    print(f"order-check slope={slope:.3f} (pass iff >= {cfg['order.min_slope']}): "
          f"{'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_ASSERT


def cmd_denominator_check(cfg, outdir: Path) -> int:
    from .density import uniform_axis
    from .proximal import ProxParams, denominator_exact, denominator_laplace
    target = build_target(cfg)
    y_list = _as_float_list(cfg["denominator.y_list"])
    t_list = _as_float_list(cfg["denominator.t_list"])
    if len(t_list) < 3:
        raise _config_error("denominator-check needs at least 3 stepsizes")
    axes = tuple(uniform_axis(lo, hi, n) for lo, hi, n in grid_spec(cfg, target.dim))
    beta = float(cfg["target.beta"])
    rows, slopes = [], {}
    for y in y_list:
        errs = []
        for t_step in t_list:
            p = ProxParams(T=t_step, beta=beta, z_axes=axes)
            exact = denominator_exact([y] * target.dim, target, p)
            lap = denominator_laplace([y] * target.dim, target, p)
            errs.append(abs(exact - lap))
            rows.append((y, t_step, exact, lap, errs[-1]))
        slopes[y] = _fit_slope(t_list, errs)
    with open(outdir / "denominator_check.csv", "w", newline="") as f:
        f.write("y,T,exact,laplace,abs_err\n")
        for row in rows:
            f.write(",".join(repr(float(v)) for v in row) + "\n")
    ok = all(s >= float(cfg["order.min_slope"]) for s in slopes.values())
    write_manifest(outdir, cfg, "denominator-check",
                   {"slopes": {str(k): v for k, v in slopes.items()}, "pass": ok})
    for y, s in slopes.items():
        print(f"denominator-check y={y}: slope={s:.3f}")
    return EXIT_OK if ok else EXIT_ASSERT


def cmd_decay_check(cfg, outdir: Path) -> int:
    from .samplers import run
    target = build_target(cfg)
    if target.alpha is None:
        raise _config_error("decay-check needs a target with known alpha")
    cfg = dict(cfg)
    cfg["sampler.method"] = "brwp_successive"
    scfg = sampler_config(cfg, target.dim)
    result = run(scfg, target)
    write_run_csv(outdir / "run.csv", result.reports)
    kl0 = result.reports[0].kl
    slack = float(cfg["decay.slack_factor"]) * kl0 * scfg.h
    violations = [r.iter for r in result.reports if r.kl > r.kl_bound + slack]
    if cfg["plot"]:
        from .svgfig import line_plot
        its = [r.iter for r in result.reports]
        line_plot(outdir / "decay_check.svg",
                  [(its, [max(r.kl, 1e-300) for r in result.reports], "measured KL"),
                   (its, [max(r.kl_bound + slack, 1e-300) for r in result.reports],
                    "bound + slack")],
                  title="KL decay vs bound", xlabel="iteration",
                  ylabel="log10 KL", logy=True)
    ok = not violations
    write_manifest(outdir, cfg, "decay-check",
                   {"violations": violations[:20], "pass": ok,
                    "terminal_kl": result.reports[-1].kl})
    print(f"decay-check: {'PASS' if ok else f'FAIL at iters {violations[:5]}'}")
    return EXIT_OK if ok else EXIT_ASSERT


def cmd_stepsize_sweep(cfg, outdir: Path) -> int:
    from .samplers import evolve_law
    target = build_target(cfg)
    h_list = _as_float_list(cfg["sweep.h_list"])
    if not h_list:
        raise _config_error("stepsize-sweep needs a nonempty h list")
    if target.dim != 1:
        raise _config_error("stepsize-sweep runs on 1-D targets")
    threshold = float(cfg["sweep.threshold"])
    summary = []
    for h in h_list:
        c = dict(cfg)
        c["sampler.h"] = h
        c["sampler.T"] = h
        c["sampler.n_steps"] = int(cfg["sweep.n_steps"])
        scfg = sampler_config(c, 1)
        trace = evolve_law(scfg, target)
        kls = [r.kl for r in trace.reports]
        hit = next((r.iter for r in trace.reports if r.kl <= threshold), -1)
        stable = all(k == k and k != float("inf") for k in kls) \
            and kls[-1] <= kls[0] and not trace.folded
        summary.append((h, hit, stable, kls[-1], min(kls)))
        write_run_csv(outdir / f"law_h_{h:.6g}.csv", trace.reports)
    with open(outdir / "sweep.csv", "w", newline="") as f:
        f.write("h,steps_to_threshold,stable,terminal_kl,min_kl\n")
        for h, hit, stable, term, lo in summary:
            f.write(f"{h!r},{hit},{str(stable).lower()},{term!r},{lo!r}\n")
    write_manifest(outdir, cfg, "stepsize-sweep",
                   {"summary": [{"h": h, "steps_to_threshold": hit, "stable": stable,
                                 "terminal_kl": term} for h, hit, stable, term, _ in summary]})
    for h, hit, stable, term, _ in summary:
        print(f"sweep h={h:.4f}: steps_to_{threshold:g}={hit} stable={stable} "
              f"terminal_kl={term:.3e}")
    return EXIT_OK


def _as_float_list(value) -> list:
    if value is None:
        return []
    if isinstance(value, list):
        return [float(v) for v in value]
    return [float(value)]


def _config_error(msg: str):
    from .errors import ParameterError
    return ParameterError(msg)


COMMANDS = {
    "prox-evolve": cmd_prox_evolve,
    "sample": cmd_sample,
    "order-check": cmd_order_check,
    "denominator-check": cmd_denominator_check,
    "decay-check": cmd_decay_check,
    "stepsize-sweep": cmd_stepsize_sweep,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    # honor --threads before numpy is imported anywhere
    if "--threads" in argv:
        n = argv[argv.index("--threads") + 1]
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, n)
    parser = argparse.ArgumentParser(prog="brwplab", description=__doc__)
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", default=None, help="flat key=value config file")
    parser.add_argument("--out", default="out", help="artifact directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None,
                        help="BLAS thread budget (speed only, never results)")
    args, rest = parser.parse_known_args(argv)
    overrides = {}
    i = 0
    while i < len(rest):
        tok = rest[i]
        if not tok.startswith("--"):
            print(f"unexpected argument {tok!r}", file=sys.stderr)
            return EXIT_CONFIG
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
        else:
            if i + 1 >= len(rest):
                print(f"missing value for --{key}", file=sys.stderr)
                return EXIT_CONFIG
            val = rest[i + 1]
            i += 1
        overrides[key] = parse_value(val)
        i += 1

    from .errors import NumericalError, ParameterError
    try:
        cfg = resolve_config(args, overrides)
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        t_start = time.perf_counter()
        code = COMMANDS[args.command](cfg, outdir)
        if bool(cfg.get("timing.record")):
            print(f"total {1000 * (time.perf_counter() - t_start):.0f} ms")
        return code
    except (ParameterError, ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
