"""Command-line pipeline: spectrum, heteroclinic, profile, validate, verify.

Each stage writes its artifacts to the output directory.  Upstream
artifacts written by an earlier run with the same model and tolerances are
reused; anything missing is computed inline.

Exit codes: 0 success, 2 hypothesis evidence failure, 3 numerical
non-convergence, 4 configuration error.
"""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import heteroclinic as het_mod
from . import profile as prof_mod
from .errors import ConfigError, ConvergenceFailure, HypothesisFailure, WavefrontError
from .heteroclinic import DecayFit, check_positive, compute_heteroclinic, fit_decay
from .io import RunConfig, dump_json, load_json, write_rows
from .models import Chemostat, LogisticDistributed, check_h1, h3_evidence, positivity_margin
from .pde import validate_profile
from .profile import WaveProfile, solve_profile, verify_front, wave_params
from .spectrum import analyze


def _tag(c) -> str:
    return f"{c:g}"


def _path(out, name):
    return os.path.join(out, name)


def _workers() -> int:
    raw = os.environ.get("WAVEFRONT_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"WAVEFRONT_WORKERS must be an integer, got {raw!r}") from exc
    return max(1, n)


def _original_rows(model, t, values, derivs):
    """Chemostat states mapped back to ``(S, u)``; the S-derivative flips sign."""
    orig = model.to_original(values)
    d = np.array(derivs, dtype=float)
    d[:, 0] = -d[:, 0]
    return np.column_stack([t, orig, d])


# ---------------------------------------------------------------------------
# stages

def stage_spectrum(cfg: RunConfig, out, speeds):
    report = analyze(cfg.model, speeds, cfg.tol)
    data = report.to_dict()
    data["certified"] = report.certified
    data["model"] = cfg.model.describe()
    data["digest"] = cfg.digest("spectrum", sorted(speeds))
    dump_json(_path(out, "spectrum.json"), data)
    return report


def _require_certified(report):
    if not report.certified:
        flags = {k: getattr(report, k) for k in ("simple", "dominant", "positive")}
        raise HypothesisFailure(f"(H4) not satisfied at the zero state: {flags}")


def stage_heteroclinic(cfg: RunConfig, out, spectrum=None):
    """Compute, check and write the heteroclinic; returns ``(trajectory, fit)``."""
    digest = cfg.digest("heteroclinic")
    meta_path = _path(out, "heteroclinic.json")
    csv_path = _path(out, "heteroclinic.csv")
    if cfg.reuse and os.path.exists(meta_path) and os.path.exists(csv_path):
        meta = load_json(meta_path)
        if meta.get("digest") == digest and meta.get("positive"):
            traj = het_mod.read_csv(csv_path)
            return traj, DecayFit(**meta["decay_fit"])
    if spectrum is None:
        spectrum = analyze(cfg.model, [], cfg.tol)
    _require_certified(spectrum)
    model = cfg.model
    traj = compute_heteroclinic(model, spectrum.lambda0, spectrum.v, cfg.tol)
    ok, where = check_positive(traj)
    fit = fit_decay(traj, K=model.K, tol=cfg.tol)
    het_mod.write_csv(csv_path, traj)
    lam0 = spectrum.lambda0
    meta = {
        "digest": digest,
        "lambda0": lam0,
        "v": np.asarray(spectrum.v).tolist(),
        "positive": ok,
        "violation": where,
        "decay_fit": fit.to_dict(),
        "lambda_rel_error": abs(fit.lambda_fit - lam0) / lam0,
        "remainder_ratio": fit.remainder_slope / lam0,
        "achieved_tol": traj.achieved_tol,
        "t_star": traj.info.get("t_star"),
        "seed": traj.seed,
        "h": traj.h,
        "t_range": [float(traj.t[0]), float(traj.t[-1])],
    }
    if isinstance(model, Chemostat):
        rows = _original_rows(model, traj.t, traj.values, traj.derivs)
        write_rows(_path(out, "heteroclinic_original.csv"), ["t", "S", "u", "dS", "du"], rows)
        meta["original"] = {"washout": [model.S0, 0.0], "survival": [model.S_bar, float(model.K[1])]}
    dump_json(meta_path, meta)
    if not ok:
        raise HypothesisFailure(f"heteroclinic is not positive: {where}")
    return traj, fit


def _solve_task(args):
    raw, c, spectrum, traj, fit = args
    cfg = RunConfig(raw)
    try:
        params = wave_params(c, cfg.model, spectrum, cfg.tol)
        prof = solve_profile(cfg.model, c, traj, fit, params=params, tol=cfg.tol)
    except ConvergenceFailure as exc:
        return c, None, None, {"error": str(exc), "ratios": (exc.payload or {}).get("ratios", [])[-10:]}
    return c, prof, params, None


def _front_payload(cfg, prof, params, report, digest):
    d = prof.diagnostics
    data = report.to_dict()
    data.update({
        "c": prof.c,
        "epsilon": params.epsilon,
        "mu": params.mu,
        "alpha": params.alpha.tolist(),
        "beta": params.beta.tolist(),
        "iterations": d["iterations"],
        "rho_final": d["rho_final"],
        "residual_scaled": d["residual_scaled"],
        "tail_mismatch": d["tail_mismatch"],
        "t_star": d["t_star"],
        "grid": [float(prof.t[0]), float(prof.t[-1]), prof.h],
        "tail": {"amp": prof.tail_amp, "lambda": prof.lambda_eps, "v1": np.asarray(prof.v1).tolist()},
        "digest": digest,
    })
    model = cfg.model
    if isinstance(model, Chemostat):
        S = model.S0 - prof.psi[:, 0]
        data["original"] = {"S_range": [float(S.min()), float(S.max())],
                            "within_0_S0": bool(np.all((S > 0) & (S < model.S0))),
                            "survival": [model.S_bar, float(model.K[1])]}
    return data


def stage_profile(cfg: RunConfig, out, speeds):
    if not speeds:
        raise ConfigError("no speeds given (use --speeds or pipeline.speeds)")
    spectrum = stage_spectrum(cfg, out, speeds)
    _require_certified(spectrum)
    traj, fit = stage_heteroclinic(cfg, out, spectrum)
    tasks = [(cfg.raw, c, spectrum, traj, fit) for c in speeds]
    n = min(_workers(), len(tasks))
    if n > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_solve_task, tasks))
    else:
        results = [_solve_task(t) for t in tasks]
    rows, failures, bad_fronts = [], [], []
    profiles = {}
    for c, prof, params, err in results:
        if prof is None:
            failures.append({"c": c, **err})
            rows.append({"c": c, "converged": False, "error": err["error"]})
            continue
        report = verify_front(prof, params, cfg.tol)
        digest = cfg.digest("profile", c)
        prof_mod.write_csv(_path(out, f"profile_c{_tag(c)}.csv"), prof)
        if isinstance(cfg.model, Chemostat):
            write_rows(_path(out, f"profile_c{_tag(c)}_original.csv"), ["t", "S", "u", "dS", "du"],
                       _original_rows(cfg.model, prof.t, prof.psi, prof.dpsi))
        dump_json(_path(out, f"front_c{_tag(c)}.json"), _front_payload(cfg, prof, params, report, digest))
        profiles[c] = prof
        rows.append({"c": c, "converged": True, "rho_final": prof.diagnostics["rho_final"],
                     "residual": report.residual, "positive": report.positive,
                     "monotone_left": report.monotone_left, "lambda_fit": report.lambda_fit,
                     "lambda_eps": report.lambda_eps, "ok": report.ok})
        if not report.ok:
            bad_fronts.append(c)
    dump_json(_path(out, "profile_summary.json"), {"speeds": speeds, "rows": rows, "failures": failures})
    _print_table(rows)
    if not profiles:
        raise ConvergenceFailure("no speed converged; the contraction regime needs a larger speed c")
    if bad_fronts:
        raise HypothesisFailure(f"front checks failed at c = {bad_fronts}")
    return profiles


def _print_table(rows):
    print(f"{'c':>8} {'conv':>5} {'rho':>7} {'residual':>10} {'pos':>5} {'lambda_fit':>12} {'lambda_eps':>12}")
    for r in rows:
        if not r["converged"]:
            print(f"{r['c']:>8g} {'no':>5}  {r['error']}")
            continue
        print(f"{r['c']:>8g} {'yes':>5} {r['rho_final']:>7.4f} {r['residual']:>10.3e} {str(r['positive']):>5} "
              f"{r['lambda_fit']:>12.8f} {r['lambda_eps']:>12.8f}")


def _load_profile(cfg, out, c):
    meta_path = _path(out, f"front_c{_tag(c)}.json")
    csv_path = _path(out, f"profile_c{_tag(c)}.csv")
    if not (cfg.reuse and os.path.exists(meta_path) and os.path.exists(csv_path)):
        return None
    meta = load_json(meta_path)
    if meta.get("digest") != cfg.digest("profile", c):
        return None
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    N = cfg.model.N
    tail = meta["tail"]
    return WaveProfile(data[:, 0], data[:, 1:1 + N], data[:, 1 + N:], c, tail["amp"], tail["lambda"],
                       np.asarray(tail["v1"]), np.asarray(cfg.model.K, dtype=float), {})


def stage_validate(cfg: RunConfig, out, speeds):
    opts = cfg.validate
    if speeds:
        c = speeds[0]
    elif "c" in opts:
        c = float(opts["c"])
    elif cfg.speeds:
        c = cfg.speeds[0]
    else:
        raise ConfigError("validate needs a speed (pipeline.validate.c, pipeline.speeds or --speeds)")
    prof = _load_profile(cfg, out, c)
    if prof is None:
        prof = stage_profile(cfg, out, [c])[c]
    report, hist = validate_profile(cfg.model, prof, c, cfg.tol, t_end=opts.get("t_end"), dx=opts.get("dx"),
                                    snapshot_dt=opts.get("snapshot_dt"))
    series = report["series"]
    write_rows(_path(out, f"front_series_c{_tag(c)}.csv"), ["t", "x_front"],
               zip(series["t"], series["x_front"]))
    if opts.get("write_snapshots"):
        hist.write(_path(out, f"snapshots_c{_tag(c)}"))
    dump_json(_path(out, f"validate_c{_tag(c)}.json"), report)
    print(f"c={c:g}: measured speed {report['speed']:.6f}, relative L2 drift {report['l2_rel_final']:.3e}, "
          f"{'PASS' if report['pass'] else 'FAIL'}")
    if not report["pass"]:
        raise ConvergenceFailure(f"PDE cross-check failed at c={c:g}")
    return report


def stage_verify(cfg: RunConfig, out, seed):
    model, tol = cfg.model, cfg.tol
    verdicts = {}
    h1 = check_h1(model, tol)
    ev = h1.to_dict()
    if isinstance(model, Chemostat):
        ev["survival_condition"] = model.survival_condition()
    verdicts["H1"] = {"verdict": "pass" if h1.ok else "fail", "evidence": ev}
    if model.K is not None:
        M = model.box
        beta = positivity_margin(model, M, tol, seed=seed)
        verdicts["H2"] = {"verdict": "pass" if beta is not None else "fail",
                          "evidence": {"beta": beta, "M": M, "samples": tol.positivity_samples}}
    else:
        verdicts["H2"] = {"verdict": "fail", "evidence": {"message": "no equilibrium K; box undefined"}}
    if h1.ok:
        h3 = h3_evidence(model, tol, seed=seed)
        entry = {"verdict": "pass" if h3["ok"] else "fail", "evidence": h3}
        if isinstance(model, LogisticDistributed):
            cond = model.delay_condition()
            entry["condition"] = cond
            if not cond["met"]:
                entry["note"] = "condition b*tau <= 3/2 not met; simulation evidence may still pass"
        verdicts["H3"] = entry
    else:
        verdicts["H3"] = {"verdict": "fail", "evidence": {"message": "skipped: (H1) failed"}}
    try:
        sr = analyze(model, [], tol)
        verdicts["H4"] = {"verdict": "pass" if sr.certified else "fail", "evidence": sr.to_dict()}
    except (HypothesisFailure, ConvergenceFailure) as exc:
        verdicts["H4"] = {"verdict": "fail", "evidence": {"message": str(exc)}}
    report = {"model": model.describe(), "seed": seed, "hypotheses": verdicts,
              "all_pass": all(v["verdict"] == "pass" for v in verdicts.values())}
    dump_json(_path(out, "verify.json"), report)
    for k, v in verdicts.items():
        print(f"{k}: {v['verdict']}" + (f" ({v['note']})" if "note" in v else ""))
    if not report["all_pass"]:
        failed = [k for k, v in verdicts.items() if v["verdict"] != "pass"]
        raise HypothesisFailure(f"hypothesis evidence failed: {failed}")
    return report


# ---------------------------------------------------------------------------

def _speeds(text):
    try:
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad speed list {text!r}") from exc
    if any(not v > 0 for v in vals):
        raise argparse.ArgumentTypeError("speeds must be positive")
    return vals


def build_parser():
    p = argparse.ArgumentParser(prog="wavefront", description="Travelling waves of delayed reaction-diffusion systems.")
    p.add_argument("command", choices=["spectrum", "heteroclinic", "profile", "validate", "verify"])
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", help="output directory (default: config 'output' or ./out)")
    p.add_argument("--speeds", type=_speeds, help="comma-separated wave speeds")
    p.add_argument("--seed", type=int, help="seed for randomized evidence checks")
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 4
    try:
        cfg = RunConfig.load(args.config)
        out = args.out or cfg.output
        os.makedirs(out, exist_ok=True)
        speeds = args.speeds if args.speeds is not None else cfg.speeds
        seed = args.seed if args.seed is not None else cfg.seed
        if args.command == "spectrum":
            rep = stage_spectrum(cfg, out, speeds)
            print(f"lambda0 = {rep.lambda0:.12g}, v = {np.asarray(rep.v).tolist()}, certified = {rep.certified}")
            for e in rep.lambda_eps:
                print(f"  c = {1 / e['epsilon']:g}: lambda(eps) = {e['lambda']:.12g}")
            _require_certified(rep)
        elif args.command == "heteroclinic":
            traj, fit = stage_heteroclinic(cfg, out)
            print(f"heteroclinic on [{traj.t[0]:.4g}, {traj.t[-1]:.4g}], lambda_fit = {fit.lambda_fit:.10g}")
        elif args.command == "profile":
            stage_profile(cfg, out, speeds)
        elif args.command == "validate":
            stage_validate(cfg, out, args.speeds)
        else:
            stage_verify(cfg, out, seed)
    except WavefrontError as exc:
        print(f"wavefront {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
