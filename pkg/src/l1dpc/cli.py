"""Command-line entry point: ``l1dpc <command> --config run.json --out DIR``.

Exit codes: 0 success, 2 configuration or schema error, 3 numerical
failure, 4 a verification suite failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import experiments
from .atomgeo import SpanError, atomic_norm, l1_synthesis_cost, lemma_predicates, prune_dictionary
from .config import RunConfig, load_config
from .numsolve import SolverError
from .ocp import OcpSpec, pruning_equivalence, solve
from .predictor import (compare_scaled_regions, coverage, enumerate_pwa, evaluate_pwa,
                        mpqp_form, region_pairing, solve_pointwise, verify_scaling,
                        verify_symmetry)
from .simcore import (RNG_ALGORITHM, ExcitationSpec, LTIPlant, PolynomialPlant,
                      ScalarQuadraticPlant, collect, prediction_error_map, run_closed_loop)
from .trajdata import DataDictionary, build_dictionary, read_trajectory_csv

EXIT_OK, EXIT_SCHEMA, EXIT_NUMERICAL, EXIT_VERIFY = 0, 2, 3, 4


class ConfigError(ValueError):
    """Configuration that passes the schema but cannot be acted on."""


# -- output helpers ---------------------------------------------------------------

def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, (set, frozenset, tuple)):
        return list(o)
    raise TypeError(f"not serializable: {type(o)}")


# -- pipeline pieces ---------------------------------------------------------------

def data_seed(cfg: RunConfig, default: int) -> int:
    return default if cfg.seed is None else cfg.seed


def make_plant(cfg: RunConfig):
    pc = cfg.plant
    if pc.kind == "scalar_quadratic":
        return ScalarQuadraticPlant()
    if pc.kind == "polynomial":
        if not pc.coeffs:
            raise ConfigError("polynomial plant needs coeffs")
        return PolynomialPlant({(i, j): c for i, j, c in pc.coeffs})
    if pc.A is None:
        return experiments.example_lti()
    if pc.B is None or pc.C is None:
        raise ConfigError("lti plant needs A, B and C")
    return LTIPlant(pc.A, pc.B, pc.C, pc.D)


def load_dictionary(cfg: RunConfig) -> DataDictionary:
    d = cfg.data
    if d.source == "fig1":
        return experiments.fig1_dictionary(data_seed(cfg, experiments.FIG1_SEED), d.count or 8)
    if d.source == "fig3":
        return experiments.fig3_dictionary(data_seed(cfg, experiments.FIG3_SEED), d.count or 20)
    if d.source == "lti":
        return experiments.lti_dictionary(data_seed(cfg, experiments.LTI_SEED), d.length,
                                          cfg.dims.n_past, cfg.dims.horizon, d.noise_std)
    if d.source == "dictionary":
        return DataDictionary.from_json(Path(d.path).read_text())
    if d.source == "csv":
        bank = read_trajectory_csv(d.path, d.setting)
    else:
        plant = make_plant(cfg)
        e = cfg.excitation
        exc = ExcitationSpec(seed=data_seed(cfg, 0), distribution=e.distribution, low=e.low,
                             high=e.high, mean=e.mean, std=e.std, levels=tuple(e.levels),
                             horizon=e.horizon, records=e.records, noise_std=e.noise_std)
        bank = collect(plant, exc)
    n_past = 0 if bank.setting == "state_space" else cfg.dims.n_past
    return build_dictionary(bank, n_past, cfg.dims.horizon)


def make_spec(cfg: RunConfig, dd: DataDictionary, lam=None) -> OcpSpec:
    return OcpSpec(dd, Q=cfg.Q, R=cfg.R, lam=cfg.lam if lam is None else lam,
                   u_bounds=cfg.u_bounds, y_bounds=cfg.y_bounds,
                   allow_unregularized=(cfg.lam if lam is None else lam) == 0)


def _probes(cfg: RunConfig, rng, dim: int, n=None) -> np.ndarray:
    lo, hi = cfg.probe_box
    return rng.uniform(lo, hi, (cfg.probes if n is None else n, dim))


def _span_probes(dd: DataDictionary, rng, n: int) -> np.ndarray:
    return (dd.matrix @ rng.standard_normal((dd.n_cols, n))).T


# -- subcommands -------------------------------------------------------------------

def cmd_prune(cfg: RunConfig, out: Path, args) -> int:
    dd = load_dictionary(cfg)
    pd = prune_dictionary(dd, cfg.prune_method, cfg.tol())
    write_atomic(out / "pruned_dictionary.json", pd.dictionary.to_json())
    write_atomic(out / "pruning_report.json", pd.report.to_json(include_timing=False) + "\n")
    print(f"retained {len(pd.report.retained)} of {dd.n_cols} columns")
    return EXIT_OK


def cmd_gauge(cfg: RunConfig, out: Path, args) -> int:
    dd = load_dictionary(cfg)
    tol = cfg.tol()
    pd = prune_dictionary(dd, cfg.prune_method, tol)
    if args.w:
        W = np.atleast_2d(np.loadtxt(args.w, delimiter=",", ndmin=2))
    else:
        W = _span_probes(dd, cfg.rng(), cfg.probes)
    lam = cfg.lam
    rows, worst = [], 0.0
    for i, w in enumerate(W):
        try:
            g = atomic_norm(w, pd.pruned_mirrored, tol).value
            full = l1_synthesis_cost(w, dd.matrix, tol)
        except SpanError:
            rows.append([i, "", "", "", "", "span_violation"])
            continue
        disc = abs(lam * full - lam * g)
        worst = max(worst, disc)
        rows.append([i, repr(g), repr(lam * g), repr(lam * full), repr(disc), ""])
    write_atomic(out / "gauge.csv", _csv_text(
        ["id", "atomic_norm", "lambda_times_norm", "full_dict_lp", "discrepancy", "error"], rows))
    print(f"{len(rows)} trajectories, max discrepancy {worst:.3e}")
    return EXIT_OK


def cmd_solve(cfg: RunConfig, out: Path, args) -> int:
    dd = load_dictionary(cfg)
    xi = args.xi if args.xi is not None else cfg.xi
    xi = np.zeros(dd.n_w) if xi is None else np.asarray(xi, float)
    spec = make_spec(cfg, dd)
    sol = solve(spec, xi, cfg.tol())
    doc = json.loads(sol.to_json())
    if args.compare_pruned:
        pd = prune_dictionary(dd, cfg.prune_method, cfg.tol())
        rep = pruning_equivalence(spec, pd.report.retained, [xi], tol=cfg.tol())
        doc["pruning_equivalence"] = rep.as_dict()
        print(f"pruned vs full: cost delta {rep.max_cost_delta:.3e}, "
              f"(u, y) delta {rep.max_uy_delta:.3e}")
    write_atomic(out / "solution.json", _dump(doc))
    print(f"cost {sol.cost:.10g}")
    return EXIT_OK


def _pwa(cfg: RunConfig, pd, dd: DataDictionary, lam: float, scale: float = 1.0):
    P = pd.pruned_mirrored
    lo, hi = cfg.param_box
    return enumerate_pwa(P.atoms, dd.n_z, cfg.Q, lam, (scale * lo, scale * hi), labels=P.labels)


def _region_rows(pwa) -> list:
    rows = []
    for i, reg in enumerate(pwa.regions):
        sup = ";".join(str(s) for s in reg.support)
        for c, dv in zip(reg.C, reg.d):
            rows.append([i, sup] + [repr(float(v)) for v in c] + [repr(float(dv))])
    return rows


def cmd_explicit(cfg: RunConfig, out: Path, args) -> int:
    dd = load_dictionary(cfg)
    tol = cfg.tol()
    pd = prune_dictionary(dd, cfg.prune_method, tol)
    pwa = _pwa(cfg, pd, dd, cfg.lam)
    write_atomic(out / "pwa.json", pwa.to_json() + "\n")
    write_atomic(out / "regions.csv", _csv_text(
        ["region", "support"] + [f"c{i + 1}" for i in range(dd.n_z)] + ["d"], _region_rows(pwa)))
    lo, hi = cfg.param_box
    probes = cfg.rng().uniform(lo, hi, (cfg.probes, dd.n_z))
    form = mpqp_form(pd.pruned_mirrored.atoms, dd.n_z, cfg.Q, cfg.lam)
    uncovered = coverage(pwa, probes)
    dev = 0.0
    for z in probes:
        try:
            y, _ = evaluate_pwa(pwa, z)
        except LookupError:
            continue
        dev = max(dev, float(np.abs(y - solve_pointwise(form, z, tol).y).max()))
    report = {"regions": len(pwa.regions), "candidates": pwa.candidates,
              "complete": pwa.complete, "probes": len(probes),
              "uncovered": len(uncovered), "max_deviation": dev,
              "region_pairing": region_pairing(pwa)["passed"]}
    status = EXIT_OK
    if args.reference:
        from .predictor import PwaFunction
        ref = PwaFunction.from_json(Path(args.reference).read_text())
        eta = cfg.lam / ref.lam
        report["scaling_vs_reference"] = {"eta": eta, **compare_scaled_regions(ref, pwa, eta)}
        if not report["scaling_vs_reference"]["passed"]:
            status = EXIT_VERIFY
    write_atomic(out / "explicit_report.json", _dump(report))
    print(f"{len(pwa.regions)} regions, {len(uncovered)} uncovered probes, "
          f"max deviation {dev:.3e}")
    return status


def run_verification(cfg: RunConfig, dd: DataDictionary) -> dict:
    """Pruning equivalence, atomic-norm identity, membership lemma, scaling and oddness."""
    tol = cfg.tol()
    rng = cfg.rng()
    pd = prune_dictionary(dd, cfg.prune_method, tol)
    lam = cfg.lam if cfg.lam > 0 else 1.0
    spec = make_spec(cfg, dd, lam)
    xis = _probes(cfg, rng, dd.n_w)
    eq = pruning_equivalence(spec, pd.report.retained, xis, tol=tol).as_dict()

    W = _span_probes(dd, rng, cfg.probes)
    worst = 0.0
    for w in W:
        full = lam * l1_synthesis_cost(w, dd.matrix, tol)
        worst = max(worst, abs(full - lam * atomic_norm(w, pd.pruned_mirrored, tol).value))
    gauge = {"probes": len(W), "max_discrepancy": worst, "passed": worst <= 1e-7}

    disagree = 0
    for w in _probes(cfg, rng, dd.n_rows):
        if len(set(lemma_predicates(w, pd, tol))) != 1:
            disagree += 1
    lemma = {"probes": cfg.probes, "disagreements": disagree, "passed": disagree == 0}

    atoms = pd.pruned_mirrored.atoms
    Z = _probes(cfg, rng, dd.n_z)
    scaling = [verify_scaling(atoms, dd.n_z, cfg.Q, lam, eta, Z, solver_tol=tol).as_dict()
               for eta in cfg.etas]
    sym = verify_symmetry(atoms, dd.n_z, cfg.Q, lam, Z, solver_tol=tol).as_dict()
    sym["origin_passed"] = sym["origin_value"] <= 1e-8
    sym["passed"] = sym["passed"] and sym["origin_passed"]
    suites = {"pruning_equivalence": eq, "atomic_norm": gauge, "membership": lemma,
              "scaling": {"per_eta": scaling, "passed": all(s["passed"] for s in scaling)},
              "symmetry": sym}
    suites["passed"] = all(s["passed"] for s in suites.values())
    return suites


def cmd_verify(cfg: RunConfig, out: Path, args) -> int:
    dd = load_dictionary(cfg)
    report = run_verification(cfg, dd)
    write_atomic(out / "verify_report.json", _dump(report))
    for name, sub in report.items():
        if name != "passed":
            print(f"{name}: {'pass' if sub['passed'] else 'FAIL'}")
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def cmd_simulate(cfg: RunConfig, out: Path, args) -> int:
    dd = load_dictionary(cfg)
    plant = make_plant(cfg)
    if (plant.m, plant.p) != (dd.m, dd.p) and dd.m:
        raise ConfigError("plant dimensions do not match the data")
    spec = make_spec(cfg, dd)
    sim = cfg.simulate
    log = run_closed_loop(plant, spec, sim.x0, sim.steps, sim.past_inputs, tol=cfg.tol())
    out.mkdir(parents=True, exist_ok=True)
    tmp = out / ".closed_loop.csv.tmp"
    log.to_csv(tmp)
    os.replace(tmp, out / "closed_loop.csv")
    if log.error:
        print(f"closed loop stopped at step {log.error[0]}: {log.error[1]}")
    if plant.n == 1 and plant.m == 1 and dd.setting == "state_space" and dd.horizon == 1 and cfg.lam > 0:
        _error_map(cfg, plant, dd, out)
    print(f"{len(log)} steps simulated")
    return EXIT_OK


def _error_map(cfg: RunConfig, plant, dd, out: Path, name="error_map.csv"):
    pd = prune_dictionary(dd, cfg.prune_method, cfg.tol())
    form = mpqp_form(pd.pruned_mirrored.atoms, dd.n_z, cfg.Q, cfg.lam)
    lo, hi = cfg.param_box
    grid = np.linspace(lo, hi, cfg.simulate.grid)
    rows = prediction_error_map(plant, lambda z: solve_pointwise(form, z, cfg.tol()).y, grid, grid)
    write_atomic(out / name, _csv_text(["x0", "u", "plant", "predictor", "abs_error"],
                                       [[repr(v) for v in r] for r in rows]))
    return rows


def cmd_figures(cfg: RunConfig, out: Path, args) -> int:
    which = args.figure
    tol = cfg.tol()
    if which in ("fig1", "all"):
        from scipy.spatial import ConvexHull
        seed = data_seed(cfg, experiments.FIG1_SEED) if cfg.data.source == "fig1" else experiments.FIG1_SEED
        dd = experiments.fig1_dictionary(seed)
        pd = prune_dictionary(dd, "lp_test", tol)
        M = pd.mirrored.atoms
        hull = ConvexHull(M.T)
        write_atomic(out / "fig1_atoms.csv", _csv_text(
            ["index", "w1", "w2", "retained"],
            [[j, repr(float(dd.matrix[0, j])), repr(float(dd.matrix[1, j])),
              int(j in pd.report.retained)] for j in range(dd.n_cols)]))
        write_atomic(out / "fig1_mirrored.csv", _csv_text(
            ["source", "sign", "w1", "w2"],
            [[s, sg, repr(float(M[0, i])), repr(float(M[1, i]))]
             for i, (s, sg) in enumerate(pd.mirrored.labels)]))
        write_atomic(out / "fig1_hull.json", _dump({
            "seed": seed, "rng": RNG_ALGORITHM,
            "hull_vertex_order": [list(pd.mirrored.labels[v]) for v in hull.vertices],
            "retained": pd.report.retained}))
    if which in ("fig2", "fig3", "all"):
        seed = data_seed(cfg, experiments.FIG3_SEED) if cfg.data.source == "fig3" else experiments.FIG3_SEED
        dd = experiments.fig3_dictionary(seed)
        pd = prune_dictionary(dd, "lp_test", tol)
        if which in ("fig2", "all"):
            ref = max(cfg.lambdas)
            doc = {"seed": seed, "rng": RNG_ALGORITHM, "lambdas": {}}
            pwas = {}
            for lam in cfg.lambdas:
                pwas[lam] = _pwa(cfg, pd, dd, lam, scale=lam / ref)
                doc["lambdas"][str(lam)] = json.loads(pwas[lam].to_json())
            doc["scaling"] = {str(lam): compare_scaled_regions(pwas[ref], pwas[lam], lam / ref)
                              for lam in cfg.lambdas if lam != ref}
            write_atomic(out / "fig2_regions.json", _dump(doc))
        if which in ("fig3", "all"):
            _error_map(cfg, ScalarQuadraticPlant(), dd, out, "fig3_surfaces.csv")
    print(f"figure bundle {which} written to {out}")
    return EXIT_OK


COMMANDS = {"prune": cmd_prune, "gauge": cmd_gauge, "solve": cmd_solve,
            "explicit": cmd_explicit, "verify": cmd_verify, "simulate": cmd_simulate,
            "figures": cmd_figures}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration JSON")
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("--seed", type=int, help="seed override")
    for name in ("kkt", "feas", "dup", "sym", "psd", "rank-rtol"):
        common.add_argument(f"--tol-{name}", type=float, default=None)
    p = argparse.ArgumentParser(prog="l1dpc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("prune", parents=[common], help="remove non-extreme data columns")
    g = sub.add_parser("gauge", parents=[common], help="atomic norm of trajectories")
    g.add_argument("--w", help="CSV file, one trajectory per row")
    s = sub.add_parser("solve", parents=[common], help="solve the OCP at one regressor")
    s.add_argument("--xi", type=lambda t: [float(v) for v in t.split(",")], default=None)
    s.add_argument("--compare-pruned", action="store_true")
    e = sub.add_parser("explicit", parents=[common], help="enumerate the PWA predictor")
    e.add_argument("--reference", help="PWA JSON to compare against under scaling")
    sub.add_parser("verify", parents=[common], help="run all verification suites")
    sub.add_parser("simulate", parents=[common], help="closed-loop simulation")
    f = sub.add_parser("figures", parents=[common], help="data bundles for the figures")
    f.add_argument("--figure", choices=["fig1", "fig2", "fig3", "all"], default="all")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        upd = {}
        if args.seed is not None:
            upd["seed"] = args.seed
        if args.out:
            upd["out"] = args.out
        tols = dict(cfg.tolerances)
        for name in ("kkt", "feas", "dup", "sym", "psd", "rank_rtol"):
            v = getattr(args, f"tol_{name}")
            if v is not None:
                tols[name] = v
        upd["tolerances"] = tols
        cfg = RunConfig.model_validate({**cfg.model_dump(), **upd})
    except (ValidationError, ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    try:
        return COMMANDS[args.command](cfg, Path(cfg.out), args)
    except (SolverError, SpanError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
