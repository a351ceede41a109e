"""Declarative scenario files: parsing, validation, canonical serialization.

A scenario is keyed text with sections (INI syntax).  Unknown sections or
keys are hard errors with precise diagnostics, every value is validated at
parse time, and a parsed scenario re-serializes to a canonical byte-stable
form (sections and keys in a fixed order, rationals in lowest terms).

Example::

    [scenario]
    mode = exact
    name = cox-basic

    [base]
    kind = lazy-walk
    steps = 4
    move-at = 1, 3

    [model]
    type = cox
    survival = 1, 1, 1/2, 1/2, 1/4

    [checks]
    names = mrp, harness

    [output]
    dir = out
    formats = json, text
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from typing import Optional

from .rationals import as_q, q_str


class ScenarioError(Exception):
    """Parse or validation failure; ``diagnostics`` lists (where, key, reason)."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = [f"{where}: {key}: {reason}" for (where, key, reason) in self.diagnostics]
        super().__init__("invalid scenario\n" + "\n".join(lines))


VALID_MODES = ("exact", "mc")
VALID_BASE_KINDS = ("walk", "lazy-walk", "split-walk")
VALID_MODEL_TYPES = ("cox", "density", "honest", "natural", "kernel", "named")
VALID_CHECKS = (
    "l-martingale",
    "mrp",
    "drift-before",
    "drift-after-honest",
    "drift-natural",
    "appendix",
    "harness",
    "sh-measure",
    "projection",
    "replication",
    "mc-drift",
)
VALID_FORMATS = ("json", "csv", "text")
VALID_MUTATIONS = ("gstar-drop-generator", "hazard-sign-flip")

_SECTION_KEYS = {
    "scenario": {"mode", "name", "cap"},
    "base": {"kind", "steps", "move-at", "drivers"},
    "model": {"type", "name", "survival", "rule", "n", "y", "f", "mu", "rows"},
    "checks": {"names", "pairs", "seed"},
    "output": {"dir", "formats"},
    "mc": {
        "dt",
        "horizon",
        "paths",
        "seed",
        "lambda",
        "n-vol",
        "y",
        "f",
        "u-points",
        "workers",
        "levels",
        "rule",
    },
    "mutation": {"kind"},
}


@dataclass
class Scenario:
    name: str
    mode: str
    cap: int = 2**14
    base: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    check_pairs: int = 50
    check_seed: int = 20260101
    output_dir: str = "out"
    formats: tuple = ("json", "text")
    mc: dict = field(default_factory=dict)
    mutation: Optional[str] = None


def _parse_list(raw: str) -> list:
    return [part.strip() for part in raw.split(",") if part.strip()]


def _parse_dt(raw: str) -> float:
    raw = raw.strip()
    if "^" in raw:
        base_s, exp_s = raw.split("^", 1)
        return float(base_s) ** float(exp_s)
    return float(raw)


def _parse_f_spec(raw: str, diags, where) -> dict:
    parts = raw.split(":")
    kind = parts[0].strip()
    if kind == "zero":
        return {"kind": "zero", "slope": "0"}
    if kind == "linear":
        if len(parts) != 2:
            diags.append((where, "f", "linear spec needs a slope, e.g. linear:1/2"))
            return {}
        return {"kind": "linear", "slope": parts[1].strip()}
    if kind == "affine":
        vals = _parse_list(parts[1]) if len(parts) == 2 else []
        if len(vals) == 2 and as_q(vals[1]) == 0:
            return {"kind": "linear", "slope": vals[0]}
        diags.append(
            (where, "f", "feedback function must vanish at 0 (declared intercept is nonzero)")
        )
        return {}
    diags.append((where, "f", f"unknown feedback spec {kind!r}"))
    return {}


def parse_scenario(path: str) -> Scenario:
    """Parse and fully validate a scenario file.

    Raises ``ScenarioError`` carrying one (where, key, reason) diagnostic per
    problem; ``where`` is a section name or ``line N`` for syntax errors.
    """
    cp = configparser.ConfigParser(
        interpolation=None, delimiters=("=",), comment_prefixes=("#", ";")
    )
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ScenarioError([("file", path, str(exc))]) from exc
    except configparser.Error as exc:
        line = getattr(exc, "lineno", "?")
        raise ScenarioError([(f"line {line}", path, exc.message.splitlines()[0])]) from exc

    diags: list = []
    for section in cp.sections():
        if section not in _SECTION_KEYS:
            diags.append((section, "-", "unknown section"))
            continue
        for key in cp[section]:
            if key not in _SECTION_KEYS[section]:
                diags.append((section, key, "unknown key"))

    if not cp.has_section("scenario"):
        diags.append(("scenario", "-", "missing required section"))
        raise ScenarioError(diags)

    sc = cp["scenario"]
    mode = sc.get("mode", "").strip()
    if mode not in VALID_MODES:
        diags.append(("scenario", "mode", f"must be one of {VALID_MODES}"))
    name = sc.get("name", "").strip()
    if not name:
        diags.append(("scenario", "name", "required"))
    cap = 2**14
    if "cap" in sc:
        try:
            cap = int(sc["cap"])
        except ValueError:
            diags.append(("scenario", "cap", "must be an integer"))

    out = Scenario(name=name, mode=mode or "exact", cap=cap)

    if cp.has_section("output"):
        op = cp["output"]
        out.output_dir = op.get("dir", "out").strip()
        if "formats" in op:
            fmts = tuple(_parse_list(op["formats"]))
            for f in fmts:
                if f not in VALID_FORMATS:
                    diags.append(("output", "formats", f"unknown format {f!r}"))
            out.formats = fmts

    if cp.has_section("checks"):
        ck = cp["checks"]
        names = _parse_list(ck.get("names", ""))
        for n in names:
            if n not in VALID_CHECKS:
                diags.append(("checks", "names", f"unknown check {n!r}"))
        out.checks = names
        if "pairs" in ck:
            try:
                out.check_pairs = int(ck["pairs"])
            except ValueError:
                diags.append(("checks", "pairs", "must be an integer"))
        if "seed" in ck:
            try:
                out.check_seed = int(ck["seed"])
            except ValueError:
                diags.append(("checks", "seed", "must be an integer"))

    if mode == "exact":
        _validate_exact(cp, out, diags)
    elif mode == "mc":
        _validate_mc(cp, out, diags)

    if cp.has_section("mutation"):
        kind = cp["mutation"].get("kind", "").strip()
        if kind and kind not in VALID_MUTATIONS:
            diags.append(("mutation", "kind", f"must be one of {VALID_MUTATIONS}"))
        out.mutation = kind or None

    if diags:
        raise ScenarioError(diags)
    return out


def _validate_exact(cp, out: Scenario, diags) -> None:
    if not cp.has_section("model"):
        diags.append(("model", "-", "missing required section"))
        return
    md = cp["model"]
    mtype = md.get("type", "").strip()
    if mtype not in VALID_MODEL_TYPES:
        diags.append(("model", "type", f"must be one of {VALID_MODEL_TYPES}"))
        return
    out.model["type"] = mtype

    if mtype == "named":
        from .generators import CURATED

        name = md.get("name", "").strip()
        if name not in CURATED:
            diags.append(("model", "name", f"unknown named model {name!r}"))
        out.model["name"] = name
        return

    if not cp.has_section("base"):
        diags.append(("base", "-", "missing required section for this model type"))
        return
    bs = cp["base"]
    kind = bs.get("kind", "walk").strip()
    if kind not in VALID_BASE_KINDS:
        diags.append(("base", "kind", f"must be one of {VALID_BASE_KINDS}"))
    out.base["kind"] = kind
    try:
        steps = int(bs.get("steps", "2"))
        if steps < 1:
            raise ValueError
        out.base["steps"] = steps
    except ValueError:
        diags.append(("base", "steps", "must be a positive integer"))
        return
    if kind == "lazy-walk":
        try:
            out.base["move-at"] = tuple(int(x) for x in _parse_list(bs.get("move-at", "")))
        except ValueError:
            diags.append(("base", "move-at", "must be a list of step indices"))
    if kind == "split-walk":
        try:
            out.base["drivers"] = int(bs.get("drivers", "2"))
        except ValueError:
            diags.append(("base", "drivers", "must be an integer"))
    if 2 ** out.base.get("steps", 2) > out.cap:
        diags.append(("base", "steps", f"atom count exceeds the cap {out.cap}"))

    if mtype == "cox" or mtype == "natural":
        surv = _parse_list(md.get("survival", ""))
        if len(surv) != out.base.get("steps", -1) + 1:
            diags.append(("model", "survival", "needs one value per grid index 0..n"))
        else:
            try:
                vals = [as_q(v) for v in surv]
                if vals[0] != 1:
                    diags.append(("model", "survival", "must start at 1"))
                if any(b > a for a, b in zip(vals, vals[1:])):
                    diags.append(("model", "survival", "must be non-increasing"))
                if any(v <= 0 for v in vals):
                    diags.append(("model", "survival", "must stay strictly positive"))
                out.model["survival"] = tuple(q_str(v) for v in vals)
            except (ValueError, ZeroDivisionError, TypeError):
                diags.append(("model", "survival", "entries must be rationals like 1/2"))
    if mtype == "honest":
        rule = md.get("rule", "last-max").strip()
        if rule not in ("last-max", "last-zero"):
            diags.append(("model", "rule", "must be last-max or last-zero"))
        out.model["rule"] = rule
    if mtype == "natural":
        out.model["n"] = md.get("n", "one").strip()
        if out.model["n"] != "one" and not out.model["n"].startswith("coin:"):
            diags.append(("model", "n", "must be 'one' or 'coin:<jump>'"))
        out.model["y"] = md.get("y", "walk").strip()
        if out.model["y"] not in ("walk", "none"):
            diags.append(("model", "y", "must be 'walk' or 'none'"))
        fs = _parse_f_spec(md.get("f", "zero"), diags, "model")
        if fs:
            out.model["f"] = fs
    if mtype == "kernel":
        rows = md.get("rows", "").strip()
        if not rows:
            diags.append(("model", "rows", "kernel rows required, one per base atom, ';'-separated"))
        else:
            try:
                parsed = []
                for row in rows.split(";"):
                    parsed.append(tuple(q_str(as_q(v)) for v in _parse_list(row)))
                out.model["rows"] = tuple(parsed)
            except (ValueError, ZeroDivisionError, TypeError):
                diags.append(("model", "rows", "entries must be rationals"))
    if mtype == "density":
        diags.append(
            ("model", "type", "free-form density tables are curated only: use type=named, name=density")
        )


def _validate_mc(cp, out: Scenario, diags) -> None:
    if not cp.has_section("mc"):
        diags.append(("mc", "-", "missing required section"))
        return
    mc = cp["mc"]
    try:
        out.mc["dt"] = _parse_dt(mc.get("dt", "2^-8"))
    except ValueError:
        diags.append(("mc", "dt", "must be a float or base^exp"))
    for key, default, cast in (
        ("horizon", "1.0", float),
        ("paths", "10000", int),
        ("seed", "7", int),
        ("lambda", "0.5", float),
        ("n-vol", "0.0", float),
        ("workers", "1", int),
    ):
        try:
            out.mc[key] = cast(mc.get(key, default))
        except ValueError:
            diags.append(("mc", key, f"must be a {cast.__name__}"))
    if out.mc.get("dt", 1) <= 0 or out.mc.get("horizon", 1) <= 0:
        diags.append(("mc", "dt", "dt and horizon must be positive"))
    if out.mc.get("paths", 1) < 1:
        diags.append(("mc", "paths", "must be >= 1"))
    out.mc["y"] = mc.get("y", "brownian").strip()
    if out.mc["y"] not in ("brownian", "same-as-w", "none"):
        diags.append(("mc", "y", "must be brownian, same-as-w or none"))
    fs = _parse_f_spec(mc.get("f", "zero"), diags, "mc")
    if fs:
        out.mc["f"] = fs
    try:
        out.mc["u-points"] = int(mc.get("u-points", "17"))
    except ValueError:
        diags.append(("mc", "u-points", "must be an integer"))
    if "levels" in mc:
        try:
            out.mc["levels"] = tuple(int(x) for x in _parse_list(mc["levels"]))
        except ValueError:
            diags.append(("mc", "levels", "must be integers"))
    out.mc["rule"] = mc.get("rule", "auto").strip()
    if out.mc["rule"] not in ("auto", "cox", "natural"):
        diags.append(("mc", "rule", "must be auto, cox or natural"))


# ---------------------------------------------------------------------------
# canonical serialization
# ---------------------------------------------------------------------------


def canonical_dumps(s: Scenario) -> str:
    """Byte-stable canonical text form; parsing then dumping is idempotent."""
    buf = io.StringIO()

    def section(name, pairs):
        pairs = [(k, v) for k, v in pairs if v not in (None, "", ())]
        if not pairs:
            return
        buf.write(f"[{name}]\n")
        for k, v in pairs:
            buf.write(f"{k} = {v}\n")
        buf.write("\n")

    section(
        "scenario",
        [("mode", s.mode), ("name", s.name), ("cap", s.cap if s.cap != 2**14 else None)],
    )
    if s.base:
        section(
            "base",
            [
                ("kind", s.base.get("kind")),
                ("steps", s.base.get("steps")),
                (
                    "move-at",
                    ", ".join(map(str, s.base["move-at"])) if "move-at" in s.base else None,
                ),
                ("drivers", s.base.get("drivers")),
            ],
        )
    if s.model:
        f = s.model.get("f")
        section(
            "model",
            [
                ("type", s.model.get("type")),
                ("name", s.model.get("name")),
                (
                    "survival",
                    ", ".join(s.model["survival"]) if "survival" in s.model else None,
                ),
                ("rule", s.model.get("rule")),
                ("n", s.model.get("n")),
                ("y", s.model.get("y")),
                ("f", None if f is None else (f["kind"] if f["kind"] == "zero" else f"linear:{f['slope']}")),
                (
                    "rows",
                    "; ".join(", ".join(r) for r in s.model["rows"]) if "rows" in s.model else None,
                ),
            ],
        )
    if s.checks:
        section(
            "checks",
            [
                ("names", ", ".join(s.checks)),
                ("pairs", s.check_pairs if s.check_pairs != 50 else None),
                ("seed", s.check_seed if s.check_seed != 20260101 else None),
            ],
        )
    section("output", [("dir", s.output_dir), ("formats", ", ".join(s.formats))])
    if s.mc:
        f = s.mc.get("f")
        section(
            "mc",
            [
                ("dt", repr(s.mc["dt"]) if "dt" in s.mc else None),
                ("horizon", s.mc.get("horizon")),
                ("paths", s.mc.get("paths")),
                ("seed", s.mc.get("seed")),
                ("lambda", s.mc.get("lambda")),
                ("n-vol", s.mc.get("n-vol")),
                ("y", s.mc.get("y")),
                ("f", None if f is None else (f["kind"] if f["kind"] == "zero" else f"linear:{f['slope']}")),
                ("u-points", s.mc.get("u-points")),
                ("workers", s.mc.get("workers")),
                (
                    "levels",
                    ", ".join(map(str, s.mc["levels"])) if "levels" in s.mc else None,
                ),
                ("rule", s.mc.get("rule")),
            ],
        )
    if s.mutation:
        section("mutation", [("kind", s.mutation)])
    return buf.getvalue()


def parse_scenario_text(text: str) -> Scenario:
    import tempfile, os

    fd, path = tempfile.mkstemp(suffix=".ini")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        return parse_scenario(path)
    finally:
        os.unlink(path)
