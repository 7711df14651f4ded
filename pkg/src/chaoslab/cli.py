"""Command-line runner for the verification suites and experiments.

    python -m chaoslab SUITE [flags]
    python -m chaoslab --config run.json [flags]

Flags override config-file values, which override the field defaults of
:class:`ExperimentSpec`. Output is CSV (``#`` provenance lines, a header row, data
rows) or JSON (``{"spec", "columns", "rows", "passed"}``), written to
``--out``, to ``$CHAOSLAB_OUT_DIR/<suite>.<format>`` when only the
environment variable is set, or to stdout.

Exit codes: 0 success, 2 usage, 3 accuracy-contract failure, 4 I/O.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import hermite
from .chaos import NORMS, BanachSpaceModel, ChaosExpansion, l2_norm_exact, lp_norms_mc, phi_m, random_chaos
from .decoupling import (
    CASES,
    RATIO_COLUMNS,
    decoupling_ratio,
    exact_second_moments,
    meyer_chain,
    random_instance,
    ratio_row,
)
from .errors import AccuracyError
from .integral import MeasureSpaceModel, TetraSimpleFunction, integrate_Im, ito_isometry_check, symmetrize_function
from .malliavin import (
    derivative,
    derivative_lp_columns,
    derivative_monomial,
    divergence,
    ibp_check,
    ibp_vector_check,
    product_rule_deviation,
)
from .montecarlo import McConfig
from .ou import (
    SubordinatorQuad,
    apply_C,
    commutation_check,
    dirichlet_check,
    meyer_norms,
    represent,
    rs_operators,
    spectrum_residuals,
    tail_bound_check,
)
from .tensor import ElementaryOperator, gamma_norm_exact_hilbert, gamma_norm_mc, symmetrize

EXIT_OK, EXIT_USAGE, EXIT_ACCURACY, EXIT_IO = 0, 2, 3, 4
OUT_DIR_ENV = "CHAOSLAB_OUT_DIR"

SUITES = (
    "hermite-table",
    "decoupling",
    "wiener-ito",
    "kahane",
    "ito-isometry",
    "malliavin-ibp",
    "meyer",
    "subordination",
    "spectrum",
    "represent",
)

EXACT_TOL = 1e-10
QUAD_RTOL = 1e-6
DECOUPLING_BRACKET = 10.0
MEYER_BRACKET = 20.0
KAHANE_BRACKET = 3.0

CHECK_COLUMNS = ("instance", "check", "param", "lhs", "lhs_se", "rhs", "rhs_se", "value", "bound", "pass")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    suite: str
    m: int = 2
    n: int = 3
    d: int = 2
    norm: str = "l2"
    p: tuple[float, ...] = (2.0,)
    samples: int = 100_000
    seed: int = 0
    instances: int = 5
    case: str = "symmetric"
    max_degree: int | None = None
    lam: tuple[float, ...] = (0.5, 2.5, -1.0)
    t: tuple[float, ...] = (0.05, 0.1, 0.5, 1.0, 2.0, 5.0)
    batches: int = 32
    workers: int = 1
    out: str | None = None
    format: str = "csv"

    def validate(self) -> "ExperimentSpec":
        def bad(name, msg):
            raise UsageError(f"field {name!r}: {msg}")

        if self.suite not in SUITES:
            bad("suite", f"unknown suite {self.suite!r}; choose from {', '.join(SUITES)}")
        if not 1 <= self.m <= 6:
            bad("m", f"must be in 1..6, got {self.m}")
        if not 1 <= self.n <= 16:
            bad("n", f"must be in 1..16, got {self.n}")
        if not 1 <= self.d <= 8:
            bad("d", f"must be in 1..8, got {self.d}")
        if self.norm not in NORMS:
            bad("norm", f"unknown norm {self.norm!r}; choose from {', '.join(sorted(NORMS))}")
        if not self.p or any(not (math.isfinite(q) and q >= 1) for q in self.p):
            bad("p", "moment orders must be finite and >= 1")
        if self.samples < 10_000:
            bad("samples", f"must be >= 10000, got {self.samples}")
        if not 0 <= self.seed < 2**64:
            bad("seed", "must be a 64-bit unsigned integer")
        if self.instances < 1:
            bad("instances", "must be >= 1")
        if self.case not in CASES:
            bad("case", f"must be one of {', '.join(CASES)}")
        if self.case == "tetrahedral" and self.suite == "decoupling" and self.m > self.n:
            bad("m", "tetrahedral instances need m <= n")
        if self.max_degree is not None and not 0 <= self.max_degree <= 64:
            bad("max_degree", "must be in 0..64")
        if any(float(x).is_integer() and x >= 0 for x in self.lam):
            bad("lambda", "values must avoid the spectrum {0, 1, 2, ...}")
        if not self.t or any(not x > 0 for x in self.t):
            bad("t", "times must be > 0")
        if self.batches < 2 or self.batches > self.samples:
            bad("batches", "must be in 2..samples")
        if self.workers < 1:
            bad("workers", "must be >= 1")
        if self.format not in ("csv", "json"):
            bad("format", "must be csv or json")
        return self

    def mc(self, k: int = 0) -> McConfig:
        return McConfig(self.samples, self.batches, (self.seed + k) % 2**64, workers=self.workers)

    def provenance(self) -> dict:
        """Everything that determines the results; worker count and output path excluded."""
        out = asdict(self)
        out.pop("workers")
        out.pop("out")
        for key in ("p", "lam", "t"):
            out[key] = list(out[key])
        return out


FIELD_NAMES = {f.name for f in fields(ExperimentSpec)}
# config-file / flag spelling -> field name
ALIASES = {"lambda": "lam", "max-degree": "max_degree"}


def _as_int(name, v):
    if isinstance(v, bool):
        raise UsageError(f"field {name!r}: expected an integer, got {v!r}")
    try:
        f = float(v)
    except (TypeError, ValueError):
        raise UsageError(f"field {name!r}: expected an integer, got {v!r}") from None
    if not f.is_integer():
        raise UsageError(f"field {name!r}: expected an integer, got {v!r}")
    return int(f) if abs(f) < 2**53 else int(v)


def _as_floats(name, v):
    items = v if isinstance(v, (list, tuple)) else [v]
    out = []
    for x in items:
        for part in str(x).split(",") if isinstance(x, str) else [x]:
            try:
                out.append(float(part))
            except (TypeError, ValueError):
                raise UsageError(f"field {name!r}: expected numbers, got {x!r}") from None
    return tuple(out)


def _coerce(name: str, v):
    if name in ("m", "n", "d", "samples", "seed", "instances", "batches", "workers"):
        return _as_int(name, v)
    if name == "max_degree":
        return None if v is None else _as_int(name, v)
    if name in ("p", "lam", "t"):
        return _as_floats(name, v)
    if not isinstance(v, str) and v is not None:
        raise UsageError(f"field {name!r}: expected a string, got {v!r}")
    return v


def load_config(path: str) -> dict:
    """Parse a JSON config into field values; unknown fields are rejected by name."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise UsageError(f"{path}: top level must be a JSON object")
    out = {}
    for key, v in obj.items():
        name = ALIASES.get(key, key)
        if name not in FIELD_NAMES:
            raise UsageError(f"{path}: unknown field {key!r}")
        out[name] = _coerce(name, v)
    return out


def build_spec(values: dict) -> ExperimentSpec:
    if "suite" not in values or values["suite"] is None:
        raise UsageError("field 'suite': missing")
    return ExperimentSpec(**values).validate()


# --------------------------------------------------------------------------
# suites; each returns (columns, rows, passed)


def _check(instance, check, param, lhs, rhs, value, bound, ok, lhs_se=0.0, rhs_se=0.0) -> dict:
    return {
        "instance": instance,
        "check": check,
        "param": param,
        "lhs": float(lhs),
        "lhs_se": float(lhs_se),
        "rhs": float(rhs),
        "rhs_se": float(rhs_se),
        "value": float(value),
        "bound": bound,
        "pass": int(bool(ok)),
    }


def _exact(instance, check, param, lhs, rhs, tol=EXACT_TOL) -> dict:
    dev = abs(float(lhs) - float(rhs))
    return _check(instance, check, param, lhs, rhs, dev, f"<= {tol:g}", dev <= tol)


def _deviation(instance, check, param, dev, tol=EXACT_TOL) -> dict:
    return _check(instance, check, param, dev, 0.0, dev, f"<= {tol:g}", dev <= tol)


def _bracket(instance, check, param, num, den, c) -> dict:
    ratio = num.estimate / den.estimate if den.estimate else math.inf
    ok = 1.0 / c <= ratio <= c
    return _check(instance, check, param, num.estimate, den.estimate, ratio, f"[{1 / c:g}, {c:g}]", ok,
                  num.stderr, den.stderr)


def _rng(spec: ExperimentSpec, k: int) -> np.random.Generator:
    return np.random.default_rng([spec.seed, k])


def _space(spec: ExperimentSpec) -> BanachSpaceModel:
    return BanachSpaceModel(spec.d, spec.norm)


def suite_hermite_table(spec):
    top = 6 if spec.max_degree is None else spec.max_degree
    cols = ("degree",) + tuple(f"x^{k}" for k in range(top + 1))
    rows = []
    for m in range(top + 1):
        coef = hermite.hermite_matrix(top)[m]
        rows.append({"degree": m, **{f"x^{k}": float(coef[k]) for k in range(top + 1)}})
    return cols, rows, True


def suite_decoupling(spec):
    rows, passed = [], True
    for k in range(spec.instances):
        inst = random_instance(spec.case, spec.m, spec.n, _space(spec), _rng(spec, k))
        mc = spec.mc(k)
        for p in spec.p:
            rep = decoupling_ratio(inst, p, mc)
            if spec.norm == "l2" and p == 2:
                ex_c, ex_d = exact_second_moments(inst)
                ok = rep.agrees(mc.confidence) and abs(ex_c - ex_d) <= EXACT_TOL * max(1.0, ex_d)
            else:
                ok = 1.0 / DECOUPLING_BRACKET <= rep.ratio <= DECOUPLING_BRACKET
            passed &= bool(ok)
            rows.append(ratio_row(inst, p, mc, rep))
    return RATIO_COLUMNS, rows, passed


def _random_symmetric(spec, k) -> ElementaryOperator:
    rng = _rng(spec, k)
    shape = (spec.n,) * spec.m + (spec.d,)
    return symmetrize(ElementaryOperator.from_dense(rng.standard_normal(shape), _space(spec)))


def suite_wiener_ito(spec):
    rows = []
    for k in range(spec.instances):
        T = _random_symmetric(spec, k)
        F = phi_m(T, require_symmetric=True)
        if spec.norm == "l2":
            rows.append(_exact(k, "isometry_l2", spec.m, l2_norm_exact(F), gamma_norm_exact_hilbert(T)))
        mc = spec.mc(k)
        for p, chaos_p in zip(spec.p, lp_norms_mc(F, spec.p, mc)):
            rows.append(_bracket(k, "isomorphism_lp", p, chaos_p, gamma_norm_mc(T, p, mc), DECOUPLING_BRACKET))
    return CHECK_COLUMNS, rows, all(r["pass"] for r in rows)


def suite_kahane(spec):
    rows = []
    ps = sorted(set(spec.p) | {2.0})
    for k in range(spec.instances):
        F = random_chaos(spec.n, _space(spec), [spec.m], _rng(spec, k))
        est = dict(zip(ps, lp_norms_mc(F, ps, spec.mc(k))))
        for p in ps:
            if p == 2.0:
                continue
            # p-norms of one chaos are comparable; the ordering in p is exact on any sample
            r = est[p].estimate / est[2.0].estimate
            ok = (r >= 1 - 1e-12 if p > 2 else r <= 1 + 1e-12) and 1 / KAHANE_BRACKET <= r <= KAHANE_BRACKET
            rows.append(_check(k, "lp_over_l2", p, est[p].estimate, est[2.0].estimate, r,
                               f"[1, {KAHANE_BRACKET:g}]" if p > 2 else f"[{1 / KAHANE_BRACKET:g}, 1]", ok,
                               est[p].stderr, est[2.0].stderr))
    return CHECK_COLUMNS, rows, all(r["pass"] for r in rows)


def suite_ito_isometry(spec):
    rows = []
    m = min(spec.m, spec.n)
    for k in range(spec.instances):
        rng = _rng(spec, k)
        M = MeasureSpaceModel(tuple(rng.uniform(0.25, 2.0, spec.n)))
        shape = (spec.n,) * m
        vals = rng.standard_normal(shape)
        table = {tuple(j + 1 for j in idx): [vals[idx]] for idx in np.ndindex(shape) if len(set(idx)) == m}
        F = TetraSimpleFunction(m, BanachSpaceModel(1), table)
        lhs, rhs = ito_isometry_check(F, M)
        rows.append(_exact(k, "ito_isometry", m, lhs, rhs, EXACT_TOL * max(1.0, rhs)))
        dev = integrate_Im(F, M).max_deviation(integrate_Im(symmetrize_function(F), M))
        rows.append(_deviation(k, "symmetrization_invariance", m, dev))
    return CHECK_COLUMNS, rows, all(r["pass"] for r in rows)


def suite_malliavin_ibp(spec):
    rows = []
    space = _space(spec)
    h_rng = np.random.default_rng([spec.seed, 2**32])
    for k in range(spec.instances):
        rng = _rng(spec, k)
        orders = range(spec.m + 1)
        F = random_chaos(spec.n, space, orders, rng)
        G = random_chaos(spec.n, BanachSpaceModel(spec.d, space.dual().norm_tag), orders, rng)
        Fs = random_chaos(spec.n, BanachSpaceModel(1), orders, rng)
        h = h_rng.standard_normal(spec.n)
        rows.append(_exact(k, "ibp_scalar", "", *ibp_check(Fs, h)))
        rows.append(_exact(k, "ibp_vector", "", *ibp_vector_check(F, G, h)))
        rows.append(_deviation(k, "product_rule", "", product_rule_deviation(F, G)))
        rows.append(_deviation(k, "derivative_routes", "", derivative(F).max_deviation(derivative_monomial(F))))
        Fm = F.project(spec.m)
        rows.append(_deviation(k, "number_operator", spec.m, divergence(derivative(Fm)).max_deviation(spec.m * Fm)))
        if space.is_hilbert:
            lhs = l2_norm_exact(derivative(Fm))
            rows.append(_exact(k, "derivative_norm_l2", spec.m, lhs, math.sqrt(spec.m) * l2_norm_exact(Fm)))
        mc = spec.mc(k)
        for p in spec.p:
            f_p, df_p = derivative_lp_columns(Fm, 1, p, mc)
            ratio = df_p.estimate / f_p.estimate
            c = math.sqrt(spec.m)
            rows.append(_check(k, "derivative_bracket", p, df_p.estimate, f_p.estimate, ratio,
                               f"[{c / 10:g}, {10 * c:g}]", c / 10 <= ratio <= 10 * c, df_p.stderr, f_p.stderr))
    return CHECK_COLUMNS, rows, all(r["pass"] for r in rows)


def suite_meyer(spec):
    rows = []
    space = _space(spec)
    for k in range(spec.instances):
        rng = _rng(spec, k)
        F = random_chaos(spec.n, space, range(1, spec.m + 1), rng)
        if space.is_hilbert:
            rows.append(_exact(k, "meyer_l2", 1, l2_norm_exact(apply_C(F)), l2_norm_exact(derivative(F))))
        mc = spec.mc(k)
        for order in (1, 2):
            Fo = random_chaos(spec.n, space, range(order, max(order, spec.m) + 1), rng)
            for p in spec.p:
                est = meyer_norms(Fo, order, p, mc)
                rows.append(_bracket(k, f"D{order}_over_C{order}", p, est["D"], est["C"], MEYER_BRACKET))
        inst = random_instance("symmetric", spec.m, spec.n, space, rng)
        for p in spec.p:
            chain = meyer_chain(inst, p, mc)
            for j in range(spec.m):
                rows.append(_bracket(k, f"chain_{j}_over_decoupled", p, chain[j], chain[spec.m], MEYER_BRACKET))
    return CHECK_COLUMNS, rows, all(r["pass"] for r in rows)


def suite_subordination(spec):
    top = 64 if spec.max_degree is None else spec.max_degree
    quad = SubordinatorQuad()
    cols = ("m", "t", "closed", "quadrature", "rel_err", "pass")
    rows = []
    for t in spec.t:
        for m in range(top + 1):
            closed = math.exp(-math.sqrt(m) * t)
            val = quad.integrate(m, t)
            err = abs(val - closed) / closed
            rows.append({"m": m, "t": t, "closed": closed, "quadrature": val, "rel_err": err,
                         "pass": int(err <= QUAD_RTOL)})
    return cols, rows, all(r["pass"] for r in rows)


def suite_spectrum(spec):
    rows = []
    space = _space(spec)
    for k in range(spec.instances):
        rng = _rng(spec, k)
        F = random_chaos(spec.n, space, range(spec.m + 1), rng)
        res = spectrum_residuals(F, spec.lam)
        rows.append(_deviation(k, "eigen", "", res["eigen"]))
        for lam in spec.lam:
            rows.append(_deviation(k, "resolvent_left", lam, res[f"left_{lam}"]))
            rows.append(_deviation(k, "resolvent_right", lam, res[f"right_{lam}"]))
        Fs = random_chaos(spec.n, BanachSpaceModel(1), range(spec.m + 1), rng)
        for t in spec.t:
            for N in range(1, spec.m + 2):
                lhs, rhs = tail_bound_check(t, N, Fs)
                rows.append(_check(k, "tail_bound", f"t={t};N={N}", lhs, rhs, lhs - rhs, "<= 0",
                                   lhs <= rhs * (1 + 1e-12)))
    return CHECK_COLUMNS, rows, all(r["pass"] for r in rows)


def suite_represent(spec):
    rows = []
    space = _space(spec)
    for k in range(spec.instances):
        rng = _rng(spec, k)
        F = random_chaos(spec.n, space, range(spec.m + 1), rng)
        G = random_chaos(spec.n, space, range(spec.m + 1), rng)
        mean, U = represent(F)
        rebuilt = ChaosExpansion.constant(mean, spec.n, space) + divergence(U)
        rows.append(_deviation(k, "representation", "", rebuilt.max_deviation(F)))
        _, SRF = rs_operators(F)
        rows.append(_deviation(k, "S_of_R", "", SRF.max_deviation(F - F.project(0))))
        rows.append(_exact(k, "dirichlet_form", "", *dirichlet_check(F, G)))
        for t in spec.t:
            for name, dev in commutation_check(t, F).items():
                rows.append(_deviation(k, f"commute_{name}", t, dev))
    return CHECK_COLUMNS, rows, all(r["pass"] for r in rows)


RUNNERS = {
    "hermite-table": suite_hermite_table,
    "decoupling": suite_decoupling,
    "wiener-ito": suite_wiener_ito,
    "kahane": suite_kahane,
    "ito-isometry": suite_ito_isometry,
    "malliavin-ibp": suite_malliavin_ibp,
    "meyer": suite_meyer,
    "subordination": suite_subordination,
    "spectrum": suite_spectrum,
    "represent": suite_represent,
}


# --------------------------------------------------------------------------
# output


def render(spec: ExperimentSpec, columns, rows, passed: bool) -> str:
    prov = spec.provenance()
    if spec.format == "json":
        doc = {"spec": prov, "columns": list(columns), "rows": rows, "passed": passed}
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"
    buf = io.StringIO()
    buf.write(f"# chaoslab suite {spec.suite}\n")
    buf.write(f"# spec {json.dumps(prov, sort_keys=True)}\n")
    buf.write(f"# passed {int(passed)}\n")
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def output_path(spec: ExperimentSpec) -> str | None:
    env = os.environ.get(OUT_DIR_ENV)
    if spec.out:
        if env and not os.path.isabs(spec.out):
            return os.path.join(env, spec.out)
        return spec.out
    if env:
        return os.path.join(env, f"{spec.suite}.{spec.format}")
    return None


def run(spec: ExperimentSpec) -> tuple[int, str]:
    """Run a validated spec; returns ``(exit code, rendered output)``."""
    try:
        columns, rows, passed = RUNNERS[spec.suite](spec)
    except AccuracyError as exc:
        return EXIT_ACCURACY, f"# accuracy failure: {exc}\n"
    return (EXIT_OK if passed else EXIT_ACCURACY), render(spec, columns, rows, passed)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chaoslab", description="Wiener chaos verification suites and experiments.")
    ap.add_argument("suite_pos", nargs="?", metavar="SUITE", help=f"one of: {', '.join(SUITES)}")
    ap.add_argument("--suite")
    ap.add_argument("--config", help="JSON config file; flags override its values")
    ap.add_argument("--m", type=str)
    ap.add_argument("--n", type=str)
    ap.add_argument("--d", type=str)
    ap.add_argument("--norm")
    ap.add_argument("--p", nargs="+")
    ap.add_argument("--samples", type=str, help="total Monte Carlo draws, e.g. 1e6")
    ap.add_argument("--seed", type=str)
    ap.add_argument("--instances", type=str)
    ap.add_argument("--case", choices=CASES)
    ap.add_argument("--max-degree", dest="max_degree", type=str)
    ap.add_argument("--lambda", dest="lam", nargs="+")
    ap.add_argument("--t", nargs="+")
    ap.add_argument("--batches", type=str)
    ap.add_argument("--workers", type=str)
    ap.add_argument("--out")
    ap.add_argument("--format", choices=("csv", "json"))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        values = load_config(args.config) if args.config else {}
        flags = {k: v for k, v in vars(args).items() if v is not None and k not in ("config", "suite_pos")}
        if args.suite_pos is not None:
            if args.suite is not None and args.suite != args.suite_pos:
                raise UsageError("field 'suite': positional and --suite disagree")
            flags["suite"] = args.suite_pos
        for name, v in flags.items():
            values[name] = _coerce(name, v)
        spec = build_spec(values)
    except UsageError as exc:
        print(f"chaoslab: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"chaoslab: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO

    code, text = run(spec)
    path = output_path(spec)
    if path is None:
        sys.stdout.write(text)
    else:
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"chaoslab: cannot write {path}: {exc}", file=sys.stderr)
            return EXIT_IO
    if code == EXIT_ACCURACY:
        print(f"chaoslab: suite {spec.suite} failed an accuracy contract", file=sys.stderr)
    return code
