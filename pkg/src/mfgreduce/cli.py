"""Scenario-driven batch runner.

Usage: mfgreduce <task> [key=value ...] [--config FILE] [--out DIR]
                 [--seed N] [--quiet]

Tasks: solve-finite, verify-reduction, solve-reduced-master, solve-fb,
verify-consistency, solve-mfgc, solve-mfgc-reduced, solve-pq, check-abc,
check-monotone, noise-solve, noise-expansion, noise-stability, convergence.

Configs are flat JSON documents ({"task": ..., "model": ..., ...}); key=value
arguments override config entries.  Unknown tasks, models, or keys are usage
errors (exit 64); malformed configs exit 1 with the offending detail; any
embedded check failing exits 2; success exits 0.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import checks, controls, finite, master, noise
from .core import ParticleCloud, moments
from .exceptions import InputError
from .io import write_csv, write_json, write_manifest, write_reports
from .models import build_demo_models, make_noise_model, make_power_controls, make_power_master
from .noise import GridSpec
from .odes import IntegratorSpec, ShootingSpec

USAGE_EXIT = 64
CHECK_EXIT = 2
ERROR_EXIT = 1


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _times(T, n):
    return np.linspace(0.0, T, int(n))


def _quantile_rows(ts, clouds, levels=(0.05, 0.25, 0.5, 0.75, 0.95)):
    rows = []
    for t, cloud in zip(ts, clouds):
        q = np.quantile(cloud.points[:, 0], levels)
        rows.append([t, *q])
    header = ["t"] + [f"q{int(100 * l):02d}" for l in levels]
    return header, rows


def run_solve_finite(p, outdir, seed, quiet):
    entry = build_demo_models()[p["model"]]
    model = entry.model
    integ = IntegratorSpec(dt=p["dt"])
    grid = finite.make_grid(p["grid_lo"], p["grid_hi"], p["grid_n"], model.N)
    t_eval = _times(p["T"], p["times_n"])
    fld = finite.solve_characteristics(model, grid, p["T"], integ, t_eval)
    rows = []
    for k, t in enumerate(fld.ts):
        for b in range(grid.shape[0]):
            rows.append([t, b, *fld.X[k, b], *fld.V[k, b]])
    write_csv(outdir / "trajectories.csv",
              ["t", "seed"] + [f"X{i}" for i in range(model.N)] + [f"V{i}" for i in range(model.N)],
              rows)
    reports = [finite.monotone_pairing_check(fld)]
    return reports


def run_verify_reduction(p, outdir, seed, quiet):
    entry = build_demo_models()[p["model"]]
    model, rmap = entry.model, entry.aux["reduction_map"]
    integ = IntegratorSpec(dt=p["dt"])
    pair_rep, reduced = checks.check_pair_reduction(model, rmap, samples=p["samples"],
                                                    seed=seed)
    grid = finite.make_grid(p["grid_lo"], p["grid_hi"], p["grid_n"], rmap.N)
    ident_rep, per_time = finite.verify_reduction_identity(
        model, rmap, reduced, grid, _times(p["T"], p["times_n"]), integ, tol=p["tol"])
    fiber_rep = finite.fiber_evolution_check(model, rmap, p["T"], n_pairs=p["fiber_pairs"],
                                             seed=seed, integ=integ)
    tang_rep = finite.tangential_motion_check(model, rmap, p["T"], seed=seed, integ=integ)
    mono_rep = checks.check_monotone(
        lambda yw: np.concatenate([reduced.G(yw[..., :rmap.n], yw[..., rmap.n:]),
                                   reduced.F(yw[..., :rmap.n], yw[..., rmap.n:])], axis=-1),
        2 * rmap.n, samples=p["samples"], seed=seed)
    mono_rep.name = "extracted-pair-monotone"
    write_csv(outdir / "identity_error.csv", ["t", "sup_error"],
              list(zip(_times(p["T"], p["times_n"]), per_time)))
    return [pair_rep, ident_rep, fiber_rep, tang_rep, mono_rep]


def _master_model(p):
    if p["model"] == "demo-power" or p.get("family") == "power":
        over = {k: p[k] for k in ("q", "a", "b", "c", "g") if k in p}
        if over:
            return make_power_master(q=over.get("q", 2.0),
                                     a_name=over.get("a", "one"),
                                     b_name=over.get("b", "zero"),
                                     c_name=over.get("c", "neg-z"),
                                     g_name=over.get("g", "identity"))
    return build_demo_models()[p["model"]].model


def run_solve_reduced_master(p, outdir, seed, quiet):
    model = _master_model(p)
    integ = IntegratorSpec(dt=p["dt"])
    if model.m_feat == 1:
        z_grid = np.linspace(p["z_lo"], p["z_hi"], p["z_n"])
    else:
        z1 = np.linspace(-1.0, 1.0, p["z_n"])
        z_grid = np.stack([np.ones_like(z1), z1, 0.5 * z1**2 + p.get("z_gap", 0.5)], -1)
    sol = master.solve_reduced_master(model, z_grid, p["T"], integ,
                                      t_eval=_times(p["T"], p["times_n"]))
    rows = []
    for k, t in enumerate(sol.ts):
        for b in range(sol.seeds.shape[0]):
            rows.append([t, b, *sol.Z[k, b], *sol.U[k, b]])
    m = model.m_feat
    write_csv(outdir / "characteristics.csv",
              ["t", "seed"] + [f"z{i}" for i in range(m)] + [f"u{i}" for i in range(m)],
              rows)
    boundary_rep = master.boundary_invariance_check(model, T=p["T"], integ=integ,
                                                    tol=p["boundary_tol"])
    h_rep, g_rep = master.verify_hypotheses(model, seed=seed)
    mono_margin = sol.seed_monotonicity_margin()
    mono_rep = checks.CheckReport("seed-map-strict-monotone", mono_margin > 0,
                                  mono_margin, {}, sol.seeds.shape[0], seed, 0.0)
    reports = [boundary_rep, h_rep, g_rep, mono_rep]
    if m == 3:
        chain = checks.check_quadratic_chain(model, samples=p["samples"], seed=seed)
        write_json(outdir / "quadratic_chain.json",
                   {k: r.to_dict() for k, r in chain.items()})
        reports += [chain["corrected"], chain["monotone"]]
    return reports


def run_solve_fb(p, outdir, seed, quiet):
    model = _master_model(p)
    integ = IntegratorSpec(dt=p["dt"])
    fb = master.solve_fb_reduced(model, p["z0"], p["T"], ShootingSpec(), integ)
    write_csv(outdir / "fb_paths.csv",
              ["t"] + [f"z{i}" for i in range(model.m_feat)]
              + [f"psi{i}" for i in range(model.m_feat)],
              [[t, *fb.z[k], *fb.psi[k]] for k, t in enumerate(fb.ts)])
    rep = checks.CheckReport("fb-shooting", fb.converged and fb.residual <= 1e-10,
                             -fb.residual, {"iterations": fb.iterations}, 1, seed, 1e-10)
    return [rep]


def run_verify_consistency(p, outdir, seed, quiet):
    model = _master_model(p)
    integ = IntegratorSpec(dt=p["dt"])
    m0 = ParticleCloud.uniform_quantiles(p["m0_lo"], p["m0_hi"], p["M"])
    z0 = moments(m0, model.feature)
    fb = master.solve_fb_reduced(model, z0, p["T"], ShootingSpec(), integ)
    rep, ts, gaps, clouds = master.verify_moment_consistency(
        model, fb, m0, integ, t_eval=_times(p["T"], p["times_n"]), tol=p["tol"])
    write_csv(outdir / "moment_gap.csv", ["t", "z", "particle_moment", "gap"],
              [[t, fb.z[int(np.argmin(np.abs(fb.ts - t))), 0],
                moments(clouds[k], model.feature), gaps[k]] for k, t in enumerate(ts)])
    header, rows = _quantile_rows(ts, clouds)
    write_csv(outdir / "quantiles.csv", header, rows)
    return [rep]


def run_solve_mfgc(p, outdir, seed, quiet):
    entry = build_demo_models()[p["model"]]
    model = entry.model
    m0 = ParticleCloud.uniform_quantiles(p["m0_lo"], p["m0_hi"], p["M"])
    res = controls.fixed_point_solve(model, m0, p["T"], damping=p["damping"],
                                     tol=p["tol"], max_iter=p["max_iter"],
                                     nx=p["nx"], box=p["box"], dt=p["dt"])
    write_csv(outdir / "picard_gaps.csv", ["iter", "gap"],
              list(enumerate(res.gaps)))
    state = res.state
    write_csv(outdir / "phi_path.csv", ["t"] + [f"phi{i}" for i in range(model.m_feat)],
              [[t, *state.phi[k]] for k, t in enumerate(state.ts)])
    header, rows = _quantile_rows(state.out_ts, state.clouds)
    write_csv(outdir / "quantiles.csv", header, rows)
    eq_rep = controls.equivalence_check(model, state, tol=p["eq_tol"])
    conv_rep = checks.CheckReport("picard-converged", res.converged, -res.gaps[-1],
                                  {"iterations": res.iterations}, len(res.gaps), seed,
                                  p["tol"])
    convex_rep = checks.CheckReport(
        "value-convexity", state.diagnostics["d2u_min"] >= -1e-8,
        state.diagnostics["d2u_min"], state.diagnostics, 1, seed, 1e-8)
    reports = [conv_rep, eq_rep, convex_rep]
    if "closed_form_u" in entry.aux:
        sel = np.abs(state.xs) <= p["interior"]
        worst = max(float(np.abs(state.u[k] - entry.aux["closed_form_u"](t, state.xs, p["T"]))[sel].max())
                    for k, t in enumerate(state.ts))
        reports.append(checks.CheckReport("closed-form-value", worst <= p["u_tol"],
                                          -worst, {"interior_radius": p["interior"]},
                                          state.u.size, seed, p["u_tol"]))
    return reports


def _power_controls_model(p):
    if p["model"] in ("demo-power-controls", "demo-pq-small", "demo-pq-large"):
        base = build_demo_models()[p["model"]].model
        if not any(k in p for k in ("a", "g", "delta", "p_exp")):
            return base
    return make_power_controls(p=p.get("p_exp", 2.0), q=p.get("q_exp", 2.0),
                               a_name=p.get("a", "zero"), g_name=p.get("g", "one"),
                               delta=p.get("delta", 0.05))


def run_solve_mfgc_reduced(p, outdir, seed, quiet):
    model = _power_controls_model(p)
    sol = controls.solve_reduced_controls(model, p["T"], dt=p["dt"])
    write_csv(outdir / "reduced_paths.csv", ["t", "psi", "z", "phi"],
              [[t, sol.psi[k], sol.z[k], sol.phi[k]] for k, t in enumerate(sol.ts)])
    conv_rep = checks.CheckReport("reduced-shooting", sol.converged, -sol.residual,
                                  {"band": sol.band}, 1, seed, 1e-10)
    return [conv_rep, sol.band_report]


def run_solve_pq(p, outdir, seed, quiet):
    model = _power_controls_model(p)
    states, report = controls.solve_pq(model, p["T"], dt=p["dt"], n_starts=p["n_starts"])
    for i, s in enumerate(states):
        write_csv(outdir / f"pq_path_{i}.csv", ["t", "psi", "z", "phi", "trace", "det"],
                  [[t, s.psi[k], s.z[k], s.phi[k], s.trace[k], s.det[k]]
                   for k, t in enumerate(s.ts)])
    write_json(outdir / "verdict.json", report)
    rep = checks.CheckReport("pq-uniqueness-criterion",
                             report["verdict"] == "unique-consistent",
                             report["pairwise_sup_gap"] if report["criteria"]["starts_agree"] else -1.0,
                             report, len(states), seed, 1e-6)
    return [rep]


def run_check_abc(p, outdir, seed, quiet):
    model = _master_model(dict(p, model=p.get("model", "demo-power"), family="power"))
    abc_rep = checks.check_abc(model)
    h_rep = checks.check_h_monotone(model, samples=p["samples"], seed=seed)
    return [abc_rep, h_rep]


def run_check_monotone(p, outdir, seed, quiet):
    name = p["map"]
    if name in ("pair", "u0"):
        model = build_demo_models()[p["model"]].model
        N = model.N
        if name == "pair":
            fn = lambda xu: np.concatenate([model.G(xu[..., :N], xu[..., N:]),
                                            model.F(xu[..., :N], xu[..., N:])], axis=-1)
            dim = 2 * N
        else:
            fn, dim = model.U0, N
    elif name == "identity":
        fn, dim = (lambda x: x), p["dim"]
    elif name == "rotation90":
        R = np.array([[0.0, -1.0], [1.0, 0.0]])
        fn, dim = (lambda x: x @ R.T), 2
    elif name == "negate":
        fn, dim = (lambda x: -x), p["dim"]
    else:
        raise InputError(f"unknown map preset {name!r}")
    rep = checks.check_monotone(fn, dim, box=p["box"], samples=p["samples"],
                                seed=seed, strict_margin=p["strict"])
    return [rep]


def _noise_model(p):
    if p["model"] in ("demo-noise", "demo-noise-wavy"):
        u0 = "wavy" if p["model"].endswith("wavy") else "identity"
        return make_noise_model(u0_name=u0, lam=p.get("lam", 0.5))
    raise InputError(f"unknown noise model {p['model']!r}")


def run_noise_solve(p, outdir, seed, quiet):
    model = _noise_model(p)
    spec = GridSpec(box_radius=p["box"], resolution=p["resolution"], dt=p["dt"], T=p["T"])
    sol = noise.solve_noisy(model, lam=p.get("lam", model.lam), spec=spec)
    nodes = spec.nodes(model.N)
    write_csv(outdir / "final_grid.csv",
              [f"x{i}" for i in range(model.N)] + [f"U{i}" for i in range(model.N)],
              [[*nodes[i], *sol.final()[i]] for i in range(len(nodes))])
    rep = checks.CheckReport("noise-march", True, 0.0,
                             {"lipschitz": sol.lipschitz,
                              "flagged_nodes": int(sol.flags.sum())},
                             len(nodes), seed, 0.0)
    return [rep]


def run_noise_expansion(p, outdir, seed, quiet):
    model = _noise_model(p)
    spec = GridSpec(box_radius=p["box"], resolution=p["resolution"], dt=p["dt"], T=p["T"])
    sups, slope = noise.expansion_study(model, p["eps"], spec=spec)
    write_csv(outdir / "expansion.csv", ["eps", "sup_error"], list(zip(p["eps"], sups)))
    write_json(outdir / "slope.json", {"slope": slope, "band": [1.8, 2.2]})
    rep = checks.CheckReport("expansion-slope", 1.8 <= slope <= 2.2, slope,
                             {"sups": list(sups)}, len(p["eps"]), seed, 0.0)
    return [rep]


def run_noise_stability(p, outdir, seed, quiet):
    model = _noise_model(p)
    spec = GridSpec(box_radius=p["box"], resolution=p["resolution"], dt=p["dt"], T=p["T"])
    rep = noise.stability_check(model, p["magnitudes"], lam=p.get("lam", model.lam),
                                spec=spec, allowance=p["allowance"])
    write_csv(outdir / "stability.csv", ["magnitude", "gap", "bound"],
              [[r["magnitude"], r["gap"], r["bound"]] for r in rep.witness["rows"]])
    return [rep]


def run_convergence(p, outdir, seed, quiet):
    study = p["study"]
    if study == "verify-reduction":
        entry = build_demo_models()[p["model"]]
        model, rmap = entry.model, entry.aux["reduction_map"]
        reduced = entry.aux["reduced_closed_form"]
        grid = finite.make_grid(p["grid_lo"], p["grid_hi"], p["grid_n"], rmap.N)
        times = _times(p["T"], p["times_n"])
        oracle = entry.aux.get("exact_eval")
        rows = []
        idents, oracles = [], []
        for dt in p["dts"]:
            integ = IntegratorSpec(dt=dt)
            rep, _ = finite.verify_reduction_identity(model, rmap, reduced, grid,
                                                      times, integ, tol=p["tol"])
            idents.append(-rep.worst_margin)
            err = np.nan
            if oracle is not None:
                err = 0.0
                for t in times[1:]:
                    U = finite.eval_U(model, float(t), grid, integ, tol=1e-12)
                    err = max(err, float(np.abs(U - oracle(float(t), grid)).max()))
                oracles.append(err)
            rows.append([dt, idents[-1], err])
        write_csv(outdir / "refinement.csv", ["dt", "identity_sup", "solver_error"], rows)
        reports = [checks.CheckReport("identity-at-all-dt",
                                      all(e <= p["tol"] for e in idents),
                                      -max(idents), {"dts": p["dts"]}, len(idents),
                                      seed, p["tol"])]
        if oracles:
            ratio = oracles[0] / oracles[1] if oracles[1] > 0 else np.inf
            reports.append(checks.CheckReport(
                "rk4-order-ratio", ratio >= 8.0, ratio,
                {"solver_errors": oracles,
                 "identity_errors_at_noise_floor": idents}, len(oracles), seed, 8.0))
        return reports
    if study == "verify-consistency":
        model = _master_model(p)
        builder = lambda M: ParticleCloud.uniform_quantiles(p["m0_lo"], p["m0_hi"], M)
        levels = [tuple(level) for level in p["levels"]]
        sups = master.moment_consistency_refinement(model, builder, p["T"], levels)
        write_csv(outdir / "refinement.csv", ["dt", "M", "sup_gap"],
                  [[dt, M, s] for (dt, M), s in zip(levels, sups)])
        dec = all(a > b for a, b in zip(sups, sups[1:]))
        return [checks.CheckReport("consistency-refinement-decreasing", dec,
                                   min(a - b for a, b in zip(sups, sups[1:])),
                                   {"sups": sups}, len(sups), seed, 0.0)]
    raise InputError(f"unknown convergence study {study!r}")


TASKS = {
    "solve-finite": (run_solve_finite,
                     {"model": "demo-finite-A", "T": 1.0, "dt": 1e-3, "grid_lo": -2.0,
                      "grid_hi": 2.0, "grid_n": 3, "times_n": 11}),
    "verify-reduction": (run_verify_reduction,
                         {"model": "demo-finite-A", "T": 1.0, "dt": 1e-3, "grid_lo": -2.0,
                          "grid_hi": 2.0, "grid_n": 9, "times_n": 11, "tol": 1e-6,
                          "samples": 10000, "fiber_pairs": 20}),
    "solve-reduced-master": (run_solve_reduced_master,
                             {"model": "demo-power", "T": 1.0, "dt": 1e-3, "z_lo": 0.0,
                              "z_hi": 2.0, "z_n": 9, "times_n": 11, "boundary_tol": 1e-8,
                              "samples": 10000}),
    "solve-fb": (run_solve_fb,
                 {"model": "demo-power", "T": 1.0, "dt": 1e-3, "z0": 1.0}),
    "verify-consistency": (run_verify_consistency,
                           {"model": "demo-power", "T": 1.0, "dt": 1e-3, "M": 10000,
                            "m0_lo": 0.0, "m0_hi": 1.0, "times_n": 11, "tol": 1e-3}),
    "solve-mfgc": (run_solve_mfgc,
                   {"model": "demo-controls-quad", "T": 1.0, "dt": 1e-3, "nx": 401,
                    "box": 6.0, "M": 10000, "m0_lo": -1.0, "m0_hi": 1.0, "damping": 1.0,
                    "tol": 1e-4, "max_iter": 30, "eq_tol": 5e-3, "u_tol": 1e-4,
                    "interior": 4.0}),
    "solve-mfgc-reduced": (run_solve_mfgc_reduced,
                           {"model": "demo-power-controls", "T": 1.0, "dt": 1e-3}),
    "solve-pq": (run_solve_pq,
                 {"model": "demo-pq-small", "T": 1.0, "dt": 1e-3, "n_starts": 5}),
    "check-abc": (run_check_abc,
                  {"model": "demo-power", "samples": 10000}),
    "check-monotone": (run_check_monotone,
                       {"model": "demo-finite-A", "map": "pair", "dim": 2, "box": 5.0,
                        "samples": 10000, "strict": False}),
    "noise-solve": (run_noise_solve,
                    {"model": "demo-noise", "T": 1.0, "dt": 2.5e-4, "box": 4.0,
                     "resolution": 81, "lam": 0.5}),
    "noise-expansion": (run_noise_expansion,
                        {"model": "demo-noise", "T": 1.0, "dt": 2.5e-4, "box": 4.0,
                         "resolution": 81, "eps": [0.02, 0.04, 0.08, 0.16, 0.32]}),
    "noise-stability": (run_noise_stability,
                        {"model": "demo-noise", "T": 1.0, "dt": 2.5e-4, "box": 4.0,
                         "resolution": 81, "lam": 0.5, "magnitudes": [0.05, 0.1, 0.2],
                         "allowance": 1.05}),
    "convergence": (run_convergence,
                    {"study": "verify-reduction", "model": "demo-finite-A", "T": 1.0,
                     "grid_lo": -2.0, "grid_hi": 2.0, "grid_n": 9, "times_n": 11,
                     "tol": 1e-6, "dts": [1e-3, 5e-4], "m0_lo": 0.0, "m0_hi": 1.0,
                     "levels": [[4e-2, 2500], [2e-2, 5000], [1e-2, 10000]]}),
}

KNOWN_MODELS = {"demo-finite-A", "demo-finite-stationary", "demo-power", "demo-quadratic",
                "demo-controls-quad", "demo-power-controls", "demo-pq-small",
                "demo-pq-large", "demo-noise", "demo-noise-wavy"}
EXTRA_KEYS = {"q", "a", "b", "c", "g", "family", "delta", "p_exp", "q_exp", "lam",
              "z_gap", "task", "seed"}


def _build_params(task, config, overrides):
    runner, defaults = TASKS[task]
    params = dict(defaults)
    merged = dict(config)
    merged.update(overrides)
    for key, val in merged.items():
        if key in ("task", "seed"):
            continue
        if key not in defaults and key not in EXTRA_KEYS:
            raise InputError(f"unknown key {key!r} for task {task!r}")
        params[key] = val
    if "model" in params and params["model"] not in KNOWN_MODELS:
        raise InputError(f"unknown model {params['model']!r}")
    return runner, params


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mfgreduce", add_help=True,
                                     description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("task", nargs="?", help="task name or set in --config")
    parser.add_argument("overrides", nargs="*", help="key=value overrides")
    parser.add_argument("--config", type=str, default=None)
    parser.add_argument("--out", type=str, default="out")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)

    config = {}
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            print(f"error: config file not found: {args.config}", file=sys.stderr)
            return ERROR_EXIT
        except json.JSONDecodeError as e:
            print(f"error: malformed config {args.config}: line {e.lineno}: {e.msg}",
                  file=sys.stderr)
            return ERROR_EXIT
        if not isinstance(config, dict):
            print("error: config must be a JSON object", file=sys.stderr)
            return ERROR_EXIT

    task = args.task or config.get("task")
    if task not in TASKS:
        print(f"usage error: unknown task {task!r}; known: {sorted(TASKS)}",
              file=sys.stderr)
        return USAGE_EXIT

    overrides = {}
    for item in args.overrides:
        if "=" not in item:
            print(f"usage error: override {item!r} is not key=value", file=sys.stderr)
            return USAGE_EXIT
        key, _, raw = item.partition("=")
        overrides[key] = _parse_value(raw)

    seed = int(config.get("seed", args.seed))
    try:
        runner, params = _build_params(task, config, overrides)
    except InputError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return USAGE_EXIT

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        reports = runner(params, outdir, seed, args.quiet)
    except InputError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return USAGE_EXIT
    except Exception as e:  # execution failure: report and exit 1
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return ERROR_EXIT
    wall = time.perf_counter() - t0
    ok = write_reports(outdir / "reports.json", reports)
    write_manifest(outdir / "manifest.json", dict(params, task=task), seed, wall)
    if not args.quiet:
        for r in reports:
            state = {True: "PASS", False: "FAIL", None: "INDETERMINATE"}[r.passed]
            print(f"[{state}] {r.name}: worst_margin={r.worst_margin:.3e}")
    return 0 if ok else CHECK_EXIT


if __name__ == "__main__":
    sys.exit(main())
