"""Batch command-line front end.

Subcommands: sigma, classify, solve, continue, envelope, harnack, volume,
verify.  Outputs are CSV (17 significant digits) and JSON summaries carrying
a run manifest, so identical inputs and seed reproduce byte-identical files.

Exit codes: 0 success, 1 verification failure, 2 solver non-convergence,
3 malformed input.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import __version__, analysis, conformal, radial, solver, symfunc
from .symfunc import ConeParams

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_NO_CONVERGENCE = 2
EXIT_BAD_INPUT = 3

_FMT = "{:.16e}"


def _manifest(command: str, args: dict, seed=None) -> dict:
    recorded = {k: v for k, v in sorted(args.items())
                if v is not None and not callable(v) and k != "func"}
    return {
        "command": command,
        "arguments": recorded,
        "seed": seed,
        "tool_version": __version__,
    }


def _write_json(path, payload: dict):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def _write_csv(path, header, columns):
    rows = len(columns[0])
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(rows):
            fh.write(",".join(_FMT.format(c[i]) for c in columns) + "\n")


# ---------------------------------------------------------------------------
# sigma
# ---------------------------------------------------------------------------

def cmd_sigma(args) -> int:
    if args.lam is not None:
        lam = np.array([float(x) for x in args.lam.split(",")])
    elif args.csv is not None:
        lam = np.loadtxt(args.csv, delimiter=",").ravel()
    else:
        raise ValueError("supply eigenvalues with --lambda or --csv")
    k = args.k
    if not 1 <= k <= len(lam):
        raise ValueError(f"k={k} out of range for {len(lam)} eigenvalues")
    e = symfunc.sigma_all(lam, k)
    for j in range(1, k + 1):
        print(f"sigma_{j} = {e[j]:.12g}")
    in_open = symfunc.in_gamma_k(lam, k)
    print(f"in Gamma_{k}: {str(in_open).lower()}")
    n = len(lam)
    if k >= 2 and n >= 3:
        delta = ConeParams(n, k).delta_gv
        print(f"in Sigma_delta (delta={delta:.6g}): "
              f"{str(symfunc.in_sigma_delta(lam, delta)).lower()}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# classify
# ---------------------------------------------------------------------------

def cmd_classify(args) -> int:
    profile = radial.load_profile_csv(args.profile, args.n, args.k)
    try:
        report = radial.classify_singularity(profile)
    except ValueError as exc:
        print(f"classification failed: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    payload = {
        "class": report.klass,
        "C": report.C,
        "alpha_est": report.alpha_est,
        "saturated": report.saturated,
        "diagnostics": report.diagnostics,
        "manifest": _manifest("classify", vars(args)),
    }
    text = json.dumps(payload, indent=2, sort_keys=True, default=float)
    print(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve / continue
# ---------------------------------------------------------------------------

def _load_problem(path):
    problem, config, _ = _load_problem_spec(path)
    return problem, config


def _load_problem_spec(path):
    with open(path) as fh:
        spec = json.load(fh)
    cone = ConeParams(int(spec["n"]), int(spec["k"]))
    dom_spec = spec["domain"]
    kind = dom_spec["type"].lower()
    if kind == "annulus":
        bc = dom_spec["bc"]
        domain = solver.Annulus(float(dom_spec["r0"]), float(dom_spec["r1"]),
                                float(bc[0]), float(bc[1]))
    elif kind == "ball":
        domain = solver.Ball(float(dom_spec["r1"]), float(dom_spec["bc"]))
    elif kind == "sphere_constant":
        domain = solver.SphereConstant()
    else:
        raise ValueError(f"unknown domain type {kind!r}")
    rhs_spec = spec.get("rhs", {})
    if "f_table" in rhs_spec:
        table = np.asarray(rhs_spec["f_table"], dtype=float)
        f = lambda r: np.interp(np.asarray(r, dtype=float), table[:, 0], table[:, 1])
    else:
        f = float(rhs_spec.get("f_const", 1.0))
    problem = solver.RadialProblem(cone, domain, float(spec["p"]), f)
    sconf = spec.get("solver", {})
    cconf = spec.get("continuation", {})
    config = solver.SolverConfig(
        N=int(sconf.get("N", 129)),
        tol=float(sconf.get("tol", 1e-10)),
        max_iter=int(sconf.get("max_iter", 50)),
        delta0=float(cconf.get("delta0", 1.0)),
        ds0=float(cconf.get("step", 0.05)),
        ds_min=float(cconf.get("min_step", 1e-12)),
        t_start=cconf.get("t_start"),
        t_max=float(cconf.get("t_max", 10.0)),
        after_fold_frac=float(cconf.get("after_fold_frac", 0.7)),
    )
    return problem, config, spec


def _solution_csv(path, problem, config, w, system, rhs):
    res = system.residual(w, rhs)
    v = np.exp(-0.5 * (problem.cone.n - 2) * w)
    _write_csv(path, ["r", "w", "v", "residual"], [system.r, w, v, res])


def _terminal_order(history):
    """Observed contraction order from the last usable residual triple."""
    usable = [h for h in history if h > 1e-14]
    if len(usable) < 3:
        return None
    r0, r1, r2 = usable[-3], usable[-2], usable[-1]
    if r1 >= r0 or r2 >= r1:
        return None
    return math.log(r2 / r1) / math.log(r1 / r0)


def cmd_solve(args) -> int:
    problem, config, spec = _load_problem_spec(args.problem)
    n, k, p = problem.cone.n, problem.cone.k, problem.p
    if p > k:
        # Vanishing-floor device: a small delta0 keeps the fold beyond t = 1
        # so both branches cross it; ride back far enough to bracket t = 1.
        cconf = spec.get("continuation", {})
        if "delta0" not in cconf:
            config.delta0 = 1e-3
        if "after_fold_frac" not in cconf:
            config.after_fold_frac = 0.45
    summary = {"n": n, "k": k, "p": p,
               "manifest": _manifest("solve", {"problem": args.problem})}
    system = solver.RadialSystem(problem, config.N)
    try:
        if p < k:
            sol = solver.solve_subcritical(problem, config)
            w = sol.w
            rhs = solver.vpower_rhs(problem.f, n, k, p)
            summary["regime"] = "subcritical"
            summary["newton_iterations"] = sol.newton.iterations
            summary["residual"] = sol.newton.residual
            summary["terminal_order"] = _terminal_order(sol.newton.residual_history)
        elif p == k:
            eig = solver.solve_eigenvalue(problem, config)
            w = eig.w
            conv = eig.theta * conformal.wgauge_rhs_amplitude(1.0, n, k)
            if callable(problem.f):
                rhs = solver.ExpRHS(
                    lambda r, _f=problem.f, _c=conv: _c * np.asarray(_f(r), dtype=float),
                    0.0)
            else:
                rhs = solver.ExpRHS(conv * float(problem.f), 0.0)
            summary["regime"] = "eigenvalue"
            summary["theta"] = eig.theta
            summary["theta_sequence"] = eig.theta_sequence
            summary["residual"] = eig.residual_check
        else:
            branch = solver.continuation_supercritical(problem, config)
            sols = branch.solutions_at(1.0)
            if not sols:
                print("no solution found at t = 1 on the computed branch", file=sys.stderr)
                return EXIT_NO_CONVERGENCE
            beta = 0.5 * (n - 2)
            w = max(sols, key=lambda ww: float(np.exp(-beta * ww).max()))
            rhs = solver._FrozenT(
                solver.ContinuationRHS(problem.cone, p, problem.f, config.delta0), 1.0)
            summary["regime"] = "supercritical"
            summary["t_star"] = branch.t_star
            summary["solutions_at_t1"] = len(sols)
    except solver.AdmissibilityError as exc:
        print(f"admissibility failure: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except solver.SolverError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    _solution_csv(args.out_prefix + "_solution.csv", problem, config, w, system, rhs)
    _write_json(args.out_prefix + "_summary.json", summary)
    print(json.dumps({k: v for k, v in summary.items() if k != "manifest"},
                     sort_keys=True, default=float))
    return EXIT_OK


def cmd_continue(args) -> int:
    problem, config = _load_problem(args.problem)
    if problem.p <= problem.cone.k:
        print("continuation requires p > k", file=sys.stderr)
        return EXIT_BAD_INPUT
    try:
        branch = solver.continuation_supercritical(problem, config)
    except solver.SolverError as exc:
        print(f"continuation failed: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    rows_t = [s.t for s in branch.samples]
    rows_d = [s.delta_t for s in branch.samples]
    rows_v = [s.v_probe for s in branch.samples]
    rows_it = [float(s.newton_iters) for s in branch.samples]
    fold_ts = {round(f.t_star, 15) for f in branch.folds}
    rows_fold = [1.0 if round(s.t, 15) in fold_ts else 0.0 for s in branch.samples]
    _write_csv(args.out_prefix + "_branch.csv",
               ["t", "delta_t", "v_at_probe", "newton_iters", "fold_flag"],
               [rows_t, rows_d, rows_v, rows_it, rows_fold])
    summary = {
        "t_star": branch.t_star,
        "n_folds": len(branch.folds),
        "n_samples": len(branch.samples),
        "termination": branch.termination,
        "manifest": _manifest("continue", {"problem": args.problem}),
    }
    _write_json(args.out_prefix + "_summary.json", summary)
    print(json.dumps({k: v for k, v in summary.items() if k != "manifest"},
                     sort_keys=True, default=float))
    return EXIT_OK


# ---------------------------------------------------------------------------
# envelope / harnack / volume
# ---------------------------------------------------------------------------

def cmd_envelope(args) -> int:
    field = radial.GridField.load_raw(args.grid)
    center = np.array([float(x) for x in args.center.split(",")])
    radii = None
    if args.step:
        lo = field.origin
        hi = field.origin + field.spacing * (np.array(field.values.shape) - 1.0)
        rmax = float(min((center - lo).min(), (hi - center).min()))
        radii = args.step * np.arange(1, int(rmax / args.step) + 1)
    env = radial.radial_envelope(field, center, radii=radii)
    _write_csv(args.out, ["r", "wtilde", "r_attained"],
               [env.r, env.wtilde, env.r_attained])
    if args.n and args.k:
        check = radial.envelope_viscosity_check(env, ConeParams(args.n, args.k))
        print(f"viscosity check: {len(check.violations)} violation(s)")
        for v in check.violations[:10]:
            print(f"  r={v[1]:.6g} {v[2]} margin={v[3]:.3e}")
    return EXIT_OK


def cmd_harnack(args) -> int:
    cone = ConeParams(args.n, args.k)
    profile = radial.load_profile_csv(args.profile, args.n, args.k)
    est = analysis.harnack_from_w_profile(profile, min_sep=args.min_sep)
    payload = {
        "c_est": est.c_est,
        "alpha": est.alpha,
        "pair": list(est.pair),
        "pair_radii": [float(profile.r[est.pair[0]]), float(profile.r[est.pair[1]])],
        "manifest": _manifest("harnack", vars(args)),
    }
    text = json.dumps(payload, indent=2, sort_keys=True, default=float)
    print(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    return EXIT_OK


def _metric_from_spec(spec):
    kind = spec["kind"].lower()
    if kind == "sphere_stereographic":
        return lambda t: math.log((1.0 + t * t) / 2.0)
    if kind == "euclidean":
        return lambda t: 0.0
    if kind == "fundamental_log":
        return lambda t: 2.0 * math.log(t)
    if kind == "truncated_log":
        K = float(spec.get("K", 2.0))
        return lambda t: max(2.0 * math.log(t), -K) if t > 0 else -K
    raise ValueError(f"unknown metric kind {kind!r}")


def cmd_volume(args) -> int:
    with open(args.metric) as fh:
        spec = json.load(fh)
    n = int(spec.get("n", 3))
    w = _metric_from_spec(spec)
    mode = spec.get("mode", "origin")
    s_lo = float(spec.get("s_min", 0.05))
    s_hi = float(spec.get("s_max", 0.5))
    count = int(spec.get("num", 25))
    s = np.linspace(s_lo, s_hi, count)
    curve = analysis.volume_ratio(w, n, s, mode=mode,
                                  rho_ref=float(spec.get("rho_ref", 1.0)))
    _write_csv(args.out, ["r", "Q"], [curve.r, curve.Q])
    q0, c2 = analysis.fit_volume_expansion(curve)
    ends = analysis.end_count(curve)
    payload = {
        "n": n,
        "mode": mode,
        "q0": q0,
        "quadratic_coefficient": c2,
        "end_count": ends.m,
        "end_ratio": ends.ratio,
        "end_status": ends.status,
        "manifest": _manifest("volume", {"metric": args.metric, "out": args.out}),
    }
    if args.summary:
        _write_json(args.summary, payload)
    print(json.dumps({k: v for k, v in payload.items() if k != "manifest"},
                     sort_keys=True, default=float))
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def _verify_checks(seed: int):
    """Deterministic identity/property suite; yields (name, passed, detail)."""
    rng = np.random.default_rng(seed)

    # 1. sigma recurrence vs subset enumeration
    import itertools
    worst = 0.0
    for _ in range(400):
        n = int(rng.integers(2, 9))
        lam = rng.normal(size=n)
        j = int(rng.integers(0, n + 1))
        brute = sum(math.prod(c) for c in itertools.combinations(lam, j)) if j else 1.0
        scale = max(1.0, sum(abs(math.prod(c)) for c in itertools.combinations(np.abs(lam), j))
                    if j else 1.0)
        worst = max(worst, abs(symfunc.sigma(lam, j) - brute) / scale)
    yield "sigma recurrence vs enumeration", worst <= 1e-12, f"max rel diff {worst:.2e}"

    # 2. gradient vs deletion oracle
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 8))
        lam = rng.normal(size=n)
        k = int(rng.integers(1, n + 1))
        grad = symfunc.sigma_gradient(lam, k)
        oracle = np.array([symfunc.sigma(np.delete(lam, i), k - 1) for i in range(n)])
        worst = max(worst, np.abs(grad - oracle).max())
    yield "sigma gradient vs deletion oracle", worst <= 1e-12, f"max diff {worst:.2e}"

    # 3. cone embedding Gamma_k in Sigma_delta
    bad = 0
    count = 0
    while count < 10000:
        n = int(rng.integers(3, 7))
        k = int(rng.integers(2, n + 1))
        lam = rng.normal(size=n) + rng.uniform(0, 1.5)
        if not symfunc.in_gamma_k(lam, k):
            continue
        count += 1
        if not symfunc.in_sigma_delta(lam, ConeParams(n, k).delta_gv):
            bad += 1
    yield "Gamma_k in Sigma_delta embedding", bad == 0, f"{bad} failures / 10000"

    # 4. orthogonal invariance of sigma_of_matrix
    worst = 0.0
    for _ in range(60):
        n = int(rng.integers(2, 7))
        S = rng.normal(size=(n, n))
        S = 0.5 * (S + S.T)
        Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
        k = int(rng.integers(1, n + 1))
        s1 = symfunc.sigma_of_matrix(S, k)
        s2 = symfunc.sigma_of_matrix(Q @ S @ Q.T, k)
        worst = max(worst, abs(s1 - s2) / max(1.0, abs(s1)))
    yield "sigma_of_matrix orthogonal invariance", worst <= 1e-10, f"max rel diff {worst:.2e}"

    # 5. arrow minor identity
    worst = 0.0
    for _ in range(300):
        n = int(rng.integers(2, 7))
        S = np.diag(rng.normal(size=n))
        S[:-1, -1] = rng.normal(size=n - 1)
        S[-1, :-1] = S[:-1, -1]
        k = int(rng.integers(1, n + 1))
        worst = max(worst, symfunc.bordered_minor_identity_residual(S, k))
    yield "bordered minor identity", worst <= 1e-10, f"max residual {worst:.2e}"

    # 6. gauge round trips and identities
    worst_rt = worst_v = worst_u = 0.0
    for _ in range(200):
        n = int(rng.integers(3, 6))
        bg = [conformal.Background.flat(n), conformal.Background.round_sphere(n)][int(rng.integers(2))]
        H = rng.normal(size=(n, n))
        jet = conformal.ConformalJet(conformal.Gauge.W, float(rng.normal()),
                                     rng.normal(size=n), 0.5 * (H + H.T), bg)
        ju = conformal.convert_gauge(jet, conformal.Gauge.U)
        jv = conformal.convert_gauge(jet, conformal.Gauge.V)
        back = conformal.convert_gauge(conformal.convert_gauge(ju, conformal.Gauge.CHI),
                                       conformal.Gauge.W)
        worst_rt = max(worst_rt, abs(back.value - jet.value),
                       np.abs(back.hess - jet.hess).max())
        W = conformal.matrix_W(jet)
        V = conformal.matrix_V(jv)
        U = conformal.matrix_U(ju)
        sc = max(1.0, np.abs(V).max())
        worst_v = max(worst_v, np.abs(V - 0.5 * (n - 2) * jv.value * W).max() / sc)
        worst_u = max(worst_u, np.abs(U - math.exp(jet.value) * W).max()
                      / max(1.0, np.abs(U).max()))
    yield "gauge round trips", worst_rt <= 1e-12, f"max diff {worst_rt:.2e}"
    yield "V = (n-2)/2 v W identity", worst_v <= 1e-12, f"max rel diff {worst_v:.2e}"
    yield "U = e^w W identity", worst_u <= 1e-12, f"max rel diff {worst_u:.2e}"

    # 7. Kelvin involution
    r = np.geomspace(0.3, 3.0, 40)
    v = np.exp(rng.normal(size=40) * 0.1) + 0.5
    s, vs = conformal.kelvin_transform(r, v, 4)
    r2, v2 = conformal.kelvin_transform(s, vs, 4)
    err = max(np.abs(r2 - r).max(), np.abs(v2 - v).max() / np.abs(v).max())
    yield "Kelvin involution", err <= 1e-12, f"max rel diff {err:.2e}"

    # 8. radial factorization vs matrix route
    worst = 0.0
    for _ in range(400):
        n = int(rng.integers(3, 7))
        k = int(rng.integers(1, n + 1))
        a, b = rng.normal(size=2)
        direct = float(radial.sigma_k_radial(radial.RadialAB(np.array([a]), np.array([b])),
                                             ConeParams(n, k))[0])
        mat = symfunc.sigma_of_matrix(np.diag(np.r_[np.full(n - 1, b), a]), k)
        worst = max(worst, abs(direct - mat) / max(1.0, abs(mat)))
    yield "radial sigma_k vs matrix route", worst <= 1e-12, f"max rel diff {worst:.2e}"

    # 9. fundamental singular solution
    r = np.geomspace(0.1, 10.0, 60)
    p = radial.RadialProfile.from_callables(r, 3, 2, lambda t: 2 * np.log(t),
                                            lambda t: 2.0 / t, lambda t: -2.0 / t**2)
    ab = radial.ab_reduce(p)
    sig = radial.sigma_k_radial(ab, p.cone)
    errs = max(np.abs(ab.a).max(), np.abs(ab.b).max(), np.abs(sig).max())
    rep = radial.classify_singularity(
        radial.RadialProfile.from_callables(radial.geometric_grid(1.0, 1e-6), 3, 2,
                                            lambda t: 2 * np.log(t) + 5.0,
                                            lambda t: 2.0 / t, lambda t: -2.0 / t**2))
    ok = errs <= 1e-12 and rep.klass == "fundamental" and abs(rep.C - 5.0) <= 1e-10
    yield "fundamental solution a=b=sigma=0 and classify", ok, f"max {errs:.2e}, C err {abs(rep.C - 5.0):.2e}"

    # 10. Pucci barrier annihilation
    worst = 0.0
    for (n, k) in [(3, 2), (4, 3), (5, 3), (5, 4)]:
        rr = np.geomspace(1e-3, 1.0, 40)
        _, rad, tan = analysis.holder_barrier(rr, n, k)
        delta = analysis.pucci_delta(n, k)
        alpha = 2.0 - n / k
        for i in range(len(rr)):
            P = analysis.pucci_min(np.r_[rad[i], np.full(n - 1, tan[i])], delta)
            worst = max(worst, abs(P) / rr[i] ** (alpha - 2.0))
    yield "Pucci annihilates the barrier", worst <= 1e-12, f"max scaled |P| {worst:.2e}"

    # 11. volume diagnostics
    s = np.linspace(0.05, 0.5, 15)
    curve = analysis.volume_ratio(lambda t: math.log((1 + t * t) / 2), 3, s)
    _, c2 = analysis.fit_volume_expansion(curve)
    vol_err = abs(analysis.annulus_volume(lambda t: 2 * math.log(t), 0.1, 0.5, 3)
                  - (4 * math.pi / 3) * (0.1**-3 - 0.5**-3))
    ok = abs(c2 + 0.2) <= 0.01 and vol_err <= 1e-6 and np.all(np.diff(curve.Q) <= 1e-6)
    yield "volume curve and annulus volume", ok, f"c2 {c2:.4f}, annulus err {vol_err:.2e}"

    # 12. scalar solver: eigenvalue and fold
    prob = solver.RadialProblem(ConeParams(3, 2), solver.SphereConstant(), p=2.0, f=1.0)
    eig = solver.solve_eigenvalue(prob, solver.SolverConfig(N=1))
    prob4 = solver.RadialProblem(ConeParams(3, 2), solver.SphereConstant(), p=4.0, f=1.0)
    br = solver.continuation_supercritical(
        prob4, solver.SolverConfig(N=1, ds0=0.02, t_start=0.005, after_fold_frac=0.6))
    ok = abs(eig.theta - 3 / 16) <= 1e-4 and br.t_star is not None \
        and abs(br.t_star - 3 / 32) <= 1e-8
    yield "scalar eigenvalue and fold", ok, (
        f"theta err {abs(eig.theta - 3/16):.2e}, "
        f"t* err {abs((br.t_star or 0) - 3/32):.2e}")


def cmd_verify(args) -> int:
    failures = 0
    for name, passed, detail in _verify_checks(args.seed):
        tag = "PASS" if passed else "FAIL"
        print(f"[{tag}] {name}: {detail}")
        if not passed:
            failures += 1
    print(f"{'all checks passed' if failures == 0 else f'{failures} check(s) failed'}")
    return EXIT_OK if failures == 0 else EXIT_VERIFY_FAIL


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="khessian",
        description="Cone algebra, radial diagnostics, and continuation solvers "
                    "for conformal k-Hessian equations.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sigma", help="evaluate sigma_1..sigma_k and cone membership")
    p.add_argument("--lambda", dest="lam", help="comma-separated eigenvalues")
    p.add_argument("--csv", help="file with eigenvalues (one row or column)")
    p.add_argument("--k", type=int, required=True)
    p.set_defaults(func=cmd_sigma)

    p = sub.add_parser("classify", help="classify a radial profile near r -> 0")
    p.add_argument("--profile", required=True, help="CSV with columns r,w[,dw,d2w]")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", help="write the report JSON here")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("solve", help="solve a radial problem (p < k, p = k, or p > k)")
    p.add_argument("--problem", required=True, help="problem JSON")
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("continue", help="supercritical continuation with fold detection")
    p.add_argument("--problem", required=True, help="problem JSON")
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_continue)

    p = sub.add_parser("envelope", help="radial envelope of a grid field")
    p.add_argument("--grid", required=True, help="raw grid file")
    p.add_argument("--center", required=True, help="comma-separated coordinates")
    p.add_argument("--step", type=float, help="radial step (default: grid spacing)")
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_envelope)

    p = sub.add_parser("harnack", help="empirical Harnack constant of a profile")
    p.add_argument("--profile", required=True, help="CSV with columns r,w[,dw,d2w]")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--min-sep", type=float, default=0.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_harnack)

    p = sub.add_parser("volume", help="volume-ratio curve of a radial metric")
    p.add_argument("--metric", required=True, help="metric JSON")
    p.add_argument("--out", required=True, help="CSV output (r, Q)")
    p.add_argument("--summary", help="JSON summary output")
    p.set_defaults(func=cmd_volume)

    p = sub.add_parser("verify", help="run the identity/property suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_BAD_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
