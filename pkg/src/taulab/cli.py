"""Command-line front end: scenario ingestion, check orchestration, reports.

Subcommands: ``model`` (build and summarize), ``check`` (run the scenario's
exact-mode checks), ``mc`` (Monte Carlo experiments), ``report`` (re-render
artifacts from a report.json).  Exit codes: 0 all requested checks passed,
1 at least one check failed, 2 engine or scenario error.

Artifacts are written atomically (temp file then rename) and contain no
timestamps, so re-running a scenario with identical inputs reproduces them
byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import random
import sys
from dataclasses import dataclass, field
from typing import Optional

from .calculus import (
    MeasureChange,
    azema_Z,
    build_sh_measure_honest,
    build_sh_measure_interval,
    default_martingale_L,
    drift_after_honest_formula,
    drift_before_formula,
    drift_exact,
    drift_natural_formula,
    unit_measure,
)
from .enlargement import check_appendix_identities, g_star_mutated
from .finite_prob import INF, constant_time, is_martingale, martingale_defect
from .generators import (
    CURATED,
    NamedModel,
    default_martingale_hazard_flipped,
    fair_walk,
    full_basis_drivers,
    lazy_walk,
    random_stopping_pair,
    split_walk,
)
from .models import (
    CoxParams,
    NaturalParams,
    cox_model,
    deterministic_survival,
    f_linear,
    f_zero,
    honest_time_model,
    last_max_rule,
    last_zero_rule,
    natural_model_discrete,
)
from .rationals import ONE, Q, as_q, q_str
from .representation import (
    MrpGapError,
    ShMeasureError,
    fragment_mrp_check,
    immersion_check,
    lemma_5_3_reduce,
    mrp_check,
    theorem_harness,
)
from .scenario import Scenario, ScenarioError, canonical_dumps, parse_scenario

SCHEMA_VERSION = 1

CHECK_LABELS = {
    "l-martingale": "default-compensation",
    "mrp": "representation-certificate",
    "drift-before": "before-default-drift-identity",
    "drift-after-honest": "after-default-drift-identity",
    "drift-natural": "natural-drift-identity",
    "appendix": "structure-identities",
    "harness": "equivalence-harness",
    "sh-measure": "skewed-immersion",
    "projection": "projection-condition",
    "replication": "replication-convergence",
    "mc-drift": "martingale-drift",
}


@dataclass
class CheckResult:
    name: str
    label: str
    passed: bool
    details: dict = field(default_factory=dict)
    witness: Optional[dict] = None

    def as_dict(self) -> dict:
        out = {
            "name": self.name,
            "label": self.label,
            "passed": self.passed,
            "details": self.details,
        }
        if self.witness is not None:
            out["witness"] = self.witness
        return out


def _table_dict(table) -> dict:
    return {
        "atoms": [str(a) for a in table.space.atoms],
        "rows": [[q_str(v) for v in row] for row in table.rows],
    }


def _certificate_dict(cert) -> dict:
    out = {
        "verdict": cert.verdict,
        "dimensions": [
            {"step": str(k), "mean_zero_dim": mz, "spanned_dim": sp}
            for (k, mz, sp) in cert.dimensions
        ],
    }
    if cert.witness is not None:
        out["witness_step"] = str(cert.witness_step)
        out["witness_block"] = [str(a) for a in cert.witness_block]
        out["witness_martingale"] = _table_dict(cert.witness)
    return out


# ---------------------------------------------------------------------------
# model construction
# ---------------------------------------------------------------------------


def build_exact_model(s: Scenario) -> NamedModel:
    mtype = s.model["type"]
    if mtype == "named":
        return CURATED[s.model["name"]]()

    kind = s.base.get("kind", "walk")
    steps = s.base["steps"]
    if kind == "walk":
        bm = fair_walk(steps)
    elif kind == "lazy-walk":
        bm = lazy_walk(steps, s.base.get("move-at", tuple(range(1, steps + 1))))
    else:
        bm = split_walk(steps, s.base.get("drivers", 2))
    if bm.space.size > s.cap:
        raise ScenarioError([("base", "steps", f"atom count exceeds cap {s.cap}")])

    if mtype == "cox":
        surv = deterministic_survival(bm.space, s.model["survival"])
        space = cox_model(bm.space, bm.filtration, CoxParams(surv))
        extras = {}
    elif mtype == "honest":
        rule = (
            last_max_rule(bm.drivers[0])
            if s.model["rule"] == "last-max"
            else last_zero_rule(bm.drivers[0])
        )
        space = honest_time_model(bm.space, bm.filtration, rule)
        extras = {}
    elif mtype == "natural":
        walk = bm.drivers[0]
        nspec = s.model.get("n", "one")
        if nspec == "one":
            n_table = walk.map(lambda v: ONE)
        else:
            h = as_q(nspec.split(":", 1)[1])
            n_table = walk.map(lambda v: ONE + h * v)
        y = walk if s.model.get("y", "walk") == "walk" else walk.map(lambda v: Q(0))
        fs = s.model.get("f", {"kind": "zero"})
        f, fp, fb, fpb = (
            f_zero() if fs["kind"] == "zero" else f_linear(fs["slope"])
        )
        surv = deterministic_survival(bm.space, s.model["survival"])
        params = NaturalParams(n_table, surv, y, f, fp, fb, fpb)
        space, curves = natural_model_discrete(bm.space, bm.filtration, params)
        extras = {"params": params, "curves": curves}
    elif mtype == "kernel":
        from .enlargement import DefaultKernel, build_product_space

        rows = s.model["rows"]
        if len(rows) != bm.space.size:
            raise ScenarioError(
                [("model", "rows", f"need {bm.space.size} rows, got {len(rows)}")]
            )
        space = build_product_space(
            bm.space, bm.filtration, DefaultKernel(tuple(tuple(as_q(v) for v in r) for r in rows))
        )
        extras = {}
    else:  # pragma: no cover - blocked at parse time
        raise ScenarioError([("model", "type", f"unsupported {mtype!r}")])
    return NamedModel(s.name, space, tuple(space.lift_table(d) for d in bm.drivers), extras)


# ---------------------------------------------------------------------------
# exact-mode checks
# ---------------------------------------------------------------------------


def _basis(space):
    return full_basis_drivers(space.product, space.lifted_F)


def run_exact_check(name: str, model: NamedModel, s: Scenario) -> CheckResult:
    space = model.space
    label = CHECK_LABELS[name]
    if name == "l-martingale":
        if s.mutation == "hazard-sign-flip":
            table = default_martingale_hazard_flipped(space)
        else:
            table = default_martingale_L(space)
        defect = martingale_defect(table, space.G)
        return CheckResult(
            name,
            label,
            defect is None,
            details={"mutation": s.mutation or "none"},
            witness=None
            if defect is None
            else {"step": str(defect[0]), "block": [str(a) for a in defect[1]]},
        )
    if name == "mrp":
        tilde = [drift_exact(d, space).martingale_part for d in model.drivers]
        cert = mrp_check(
            space.product, None, space.G, tilde + [default_martingale_L(space)]
        )
        return CheckResult(
            name,
            label,
            cert.spanning,
            details=_certificate_dict(cert),
            witness=None if cert.spanning else _certificate_dict(cert),
        )
    if name == "drift-before":
        for x in _basis(space):
            exact = drift_exact(x, space).drift
            formula = drift_before_formula(x, space)
            for k in list(range(1, space.n + 1)) + [INF]:
                de, df = exact.increment(k), formula.increment(k)
                for i in space.alive_mask(k):
                    if de[i] != df[i]:
                        return CheckResult(
                            name,
                            label,
                            False,
                            witness={"step": str(k), "atom": str(space.product.atoms[i])},
                        )
        return CheckResult(name, label, True, details={"basis_size": len(_basis(space))})
    if name == "drift-after-honest":
        signs = set()
        for x in _basis(space):
            res = drift_after_honest_formula(x, space)
            if not res.matches_exact:
                return CheckResult(name, label, False, details={"matches": False})
            if res.resolved_sign is not None:
                signs.add(res.resolved_sign)
        return CheckResult(
            name,
            label,
            len(signs) <= 1,
            details={"resolved_signs": sorted(signs), "note": "sign resolved against the exact operator"},
        )
    if name == "drift-natural":
        params = model.extras["params"]
        curves = model.extras["curves"]
        worst = 0.0
        before_ok = True
        after_all = True
        for x in _basis(space):
            res = drift_natural_formula(x, space, params, curves)
            before_ok &= res.matches_before
            after_all &= res.matches_after
            worst = max(worst, float(res.max_abs_deviation))
        return CheckResult(
            name,
            label,
            before_ok,
            details={
                "matches_before": before_ok,
                "matches_after": after_all,
                "max_abs_deviation": worst,
            },
        )
    if name == "appendix":
        rng = random.Random(s.check_seed)
        gstar_fn = None
        if s.mutation == "gstar-drop-generator":
            gstar_fn = g_star_mutated
        from .enlargement import g_star

        pairs = [
            (constant_time(space.product, 0), constant_time(space.product, space.n))
        ]
        pairs += [random_stopping_pair(rng, space.G) for _ in range(s.check_pairs)]
        for trial, (st, en) in enumerate(pairs):
            rep = check_appendix_identities(
                space, st, en, gstar_fn=gstar_fn or g_star
            )
            if not rep.all_passed:
                f = rep.failures()[0]
                return CheckResult(
                    name,
                    label,
                    False,
                    details={"trial": trial, "mutation": s.mutation or "none"},
                    witness={"identity": f.name, "witness": f.witness},
                )
        return CheckResult(
            name, label, True, details={"pairs": s.check_pairs, "mutation": s.mutation or "none"}
        )
    if name == "harness":
        rep = theorem_harness(space, list(model.drivers))
        return CheckResult(name, label, rep.all_passed, details=rep.as_dict())
    if name == "sh-measure":
        return _run_sh_check(model, s)
    raise ScenarioError([("checks", "names", f"check {name!r} is not an exact-mode check")])


def _run_sh_check(model: NamedModel, s: Scenario) -> CheckResult:
    from .calculus import sh_measure_check

    space = model.space
    label = CHECK_LABELS["sh-measure"]
    zero = constant_time(space.product, 0)
    if model.name == "density" or space.model_kind == "density":
        from .models import density_change_of_measure

        dens = density_change_of_measure(space, model.extras["params"])
        measure = MeasureChange(space.product, dens)
        start, end = zero, constant_time(space.product, space.n)
        mode = "decoupling-density"
    elif space.model_kind == "honest":
        built = build_sh_measure_honest(space, space.n, 10**9)
        measure, start, end = built.measure, built.start, built.end
        mode = "honest-exponential"
    elif immersion_check(space):
        measure = unit_measure(space.product)
        start, end = zero, constant_time(space.product, INF)
        mode = "immersion-identity"
    else:
        measure = build_sh_measure_interval(space)
        start, end = zero, constant_time(space.product, space.n)
        mode = "interval-decoupling"
    sh = sh_measure_check(space, measure, start, end)
    if not sh.passed:
        return CheckResult(
            "sh-measure",
            label,
            False,
            details={"construction": mode},
            witness={
                "basis_index": sh.witness_basis_index,
                "step": str(sh.witness_step),
                "block": [str(a) for a in sh.witness_block],
            },
        )
    reduced = lemma_5_3_reduce(space, start, end)
    cert = fragment_mrp_check(space, measure, reduced, end, list(model.drivers))
    return CheckResult(
        "sh-measure",
        label,
        cert.spanning,
        details={"construction": mode, "fragment": _certificate_dict(cert)},
        witness=None if cert.spanning else _certificate_dict(cert),
    )


# ---------------------------------------------------------------------------
# mc-mode checks
# ---------------------------------------------------------------------------


def _mc_config(s: Scenario, overrides: dict):
    from .montecarlo import McConfig

    mc = dict(s.mc)
    fs = mc.get("f", {"kind": "zero", "slope": "0"})
    u_points = mc.get("u-points", 17)
    horizon = float(overrides.get("horizon", mc.get("horizon", 1.0)))
    import numpy as np

    return McConfig(
        dt=float(overrides.get("dt", mc.get("dt", 2**-8))),
        horizon=horizon,
        paths=int(overrides.get("paths", mc.get("paths", 10000))),
        seed=int(overrides.get("seed", mc.get("seed", 7))),
        lambda_rate=float(mc.get("lambda", 0.5)),
        n_vol=float(mc.get("n-vol", 0.0)),
        y_kind=mc.get("y", "brownian"),
        f_kind=fs["kind"],
        f_slope=float(as_q(fs.get("slope", "0"))) if fs.get("slope") else 0.0,
        u_grid=tuple(np.linspace(0.0, horizon, u_points)),
        workers=int(overrides.get("workers", mc.get("workers", 1))),
    )


def run_mc_check(name: str, s: Scenario, overrides: dict) -> CheckResult:
    from . import montecarlo as mc

    label = CHECK_LABELS[name]
    cfg = _mc_config(s, overrides)
    if name == "projection":
        bundle = mc.simulate_base_paths(cfg)
        rule = s.mc.get("rule", "auto")
        if rule == "auto":
            rule = "natural" if (cfg.f_kind != "zero" or cfg.n_vol > 0) else "cox"
        sample = mc.sample_default(bundle, rule)
        rep = mc.projection_condition_test(bundle, sample)
        ok = rep.passed and rep.flagged_fraction < 0.01
        return CheckResult(
            name,
            label,
            ok,
            details={**rep.as_dict(), "rule": rule, "manifest": bundle.manifest()},
        )
    if name == "replication":
        levels = s.mc.get("levels", (16, 32, 64, 128))
        out = {}
        ok = True
        for claim in ("bond", "stopped-driver"):
            rep = mc.replication_backtest(cfg, claim, levels)
            out[claim] = rep.as_dict()
            ok &= rep.passed
        return CheckResult(name, label, ok, details=out)
    if name == "mc-drift":
        bundle = mc.simulate_base_paths(cfg, solve_m=False)
        rep = mc.martingale_drift_test(bundle.w)
        return CheckResult(name, label, rep.passed, details=rep.as_dict())
    raise ScenarioError([("checks", "names", f"check {name!r} is not an mc-mode check")])


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------


def _atomic_write(path: str, data: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _summary_text(name: str, results: list) -> str:
    lines = [f"scenario: {name}"]
    for r in results:
        lines.append(f"{'PASS' if r.passed else 'FAIL'}  {r.name}  [{r.label}]")
    lines.append("overall: " + ("PASS" if all(r.passed for r in results) else "FAIL"))
    return "\n".join(lines) + "\n"


def _csv_text(rows: list) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def write_artifacts(out_dir: str, name: str, results: list, formats) -> str:
    target = os.path.join(out_dir, name)
    os.makedirs(target, exist_ok=True)
    report = {
        "schema_version": SCHEMA_VERSION,
        "scenario": name,
        "checks": [r.as_dict() for r in results],
        "all_passed": all(r.passed for r in results),
    }
    if "json" in formats:
        _atomic_write(
            os.path.join(target, "report.json"),
            json.dumps(report, sort_keys=True, indent=1) + "\n",
        )
    if "text" in formats:
        _atomic_write(os.path.join(target, "summary.txt"), _summary_text(name, results))
    if "csv" in formats:
        for r in results:
            rows = _details_csv_rows(r.details)
            if rows:
                _atomic_write(os.path.join(target, f"{r.name}.csv"), _csv_text(rows))
    return target


def _details_csv_rows(details: dict) -> Optional[list]:
    if "rows" in details and details["rows"] and isinstance(details["rows"][0], dict):
        header = list(details["rows"][0].keys())
        return [header] + [[str(row[h]) for h in header] for row in details["rows"]]
    return None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _model_summary(model: NamedModel) -> dict:
    space = model.space
    z = azema_Z(space)
    tau_mass: dict = {}
    for i, v in enumerate(space.tau_values):
        key = "inf" if v == INF else str(v)
        tau_mass[key] = tau_mass.get(key, Q(0)) + space.product.weight[i]
    return {
        "model": model.name,
        "kind": space.model_kind,
        "atoms": space.product.size,
        "grid_steps": space.n,
        "tau_law": {k: q_str(v) for k, v in sorted(tau_mass.items())},
        "survival_Z": [[q_str(v) for v in z.row(k)] for k in range(space.n + 1)],
        "drivers": len(model.drivers),
    }


def cmd_model(args) -> int:
    s = parse_scenario(args.scenario)
    _apply_overrides(s, args)
    model = build_exact_model(s)
    summary = _model_summary(model)
    target = os.path.join(s.output_dir, s.name)
    os.makedirs(target, exist_ok=True)
    _atomic_write(
        os.path.join(target, "model.json"),
        json.dumps(summary, sort_keys=True, indent=1) + "\n",
    )
    print(json.dumps(summary, sort_keys=True, indent=1))
    return 0


def cmd_check(args) -> int:
    s = parse_scenario(args.scenario)
    _apply_overrides(s, args)
    if s.mode != "exact":
        print("scenario is not exact-mode; use the mc command", file=sys.stderr)
        return 2
    model = build_exact_model(s)
    results = [run_exact_check(name, model, s) for name in s.checks]
    target = write_artifacts(s.output_dir, s.name, results, s.formats)
    print(_summary_text(s.name, results), end="")
    print(f"artifacts: {target}")
    return 0 if all(r.passed for r in results) else 1


def cmd_mc(args) -> int:
    s = parse_scenario(args.scenario)
    _apply_overrides(s, args)
    if s.mode != "mc":
        print("scenario is not mc-mode; use the check command", file=sys.stderr)
        return 2
    overrides = {}
    for key in ("seed", "paths", "dt"):
        v = getattr(args, key, None)
        if v is not None:
            overrides[key] = v
    results = [run_mc_check(name, s, overrides) for name in s.checks]
    target = write_artifacts(s.output_dir, s.name, results, s.formats)
    print(_summary_text(s.name, results), end="")
    print(f"artifacts: {target}")
    return 0 if all(r.passed for r in results) else 1


def cmd_report(args) -> int:
    path = os.path.join(args.artifacts, "report.json")
    with open(path, encoding="utf-8") as fh:
        report = json.load(fh)
    results = [
        CheckResult(
            c["name"], c["label"], c["passed"], c.get("details", {}), c.get("witness")
        )
        for c in report["checks"]
    ]
    fmts = tuple(args.format.split(",")) if args.format else ("text",)
    write_artifacts(os.path.dirname(args.artifacts.rstrip("/")) or ".", report["scenario"], results, fmts)
    print(_summary_text(report["scenario"], results), end="")
    return 0


def _apply_overrides(s: Scenario, args) -> None:
    if getattr(args, "out", None):
        s.output_dir = args.out
    if getattr(args, "cap", None):
        s.cap = args.cap
    if getattr(args, "format", None):
        s.formats = tuple(args.format.split(","))
    if s.mode == "mc":
        for key in ("seed", "paths"):
            v = getattr(args, key, None)
            if v is not None:
                s.mc[key] = v
        if getattr(args, "dt", None) is not None:
            s.mc["dt"] = args.dt


def main(argv: Optional[list] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="taulab",
        description="Exact progressive-enlargement engine and Monte Carlo validation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("scenario", help="scenario file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--paths", type=int, default=None)
        p.add_argument("--dt", type=float, default=None)
        p.add_argument("--cap", type=int, default=None)
        p.add_argument("--out", default=None, help="artifact directory")
        p.add_argument("--format", default=None, help="json,csv,text")

    p_model = sub.add_parser("model", help="build a model and summarize it")
    common(p_model)
    p_check = sub.add_parser("check", help="run the scenario's exact checks")
    common(p_check)
    p_mc = sub.add_parser("mc", help="run Monte Carlo experiments")
    common(p_mc)
    p_rep = sub.add_parser("report", help="re-render artifacts")
    p_rep.add_argument("artifacts", help="artifact directory containing report.json")
    p_rep.add_argument("--format", default=None)

    args = parser.parse_args(argv)
    try:
        if args.command == "model":
            return cmd_model(args)
        if args.command == "check":
            return cmd_check(args)
        if args.command == "mc":
            return cmd_mc(args)
        return cmd_report(args)
    except ScenarioError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except (MrpGapError, ShMeasureError) as exc:
        print(f"engine: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # engine errors surface as exit code 2
        print(f"engine error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
