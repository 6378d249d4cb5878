"""Command-line front end.

Exit codes: 0 success, 1 input error, 2 property not found, 3 pipeline stage failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cones import CylinderSpace, NonnegCone, hilbert_nonneg, nonneg_image_diameter, sample_members
from .errors import CapacityError, DomainError, InputError, NumericError, PreconditionError
from .factor_ops import (FactorSystem, VectorTable, estimate_psi, f_sequence, psi_variation,
                         pushforward_cylinder, pushforward_liftsum, image_word_operator,
                         verify_gibbs_equivalence)
from .potentials import birkhoff_sums, bowen_constant, classify, load_potential
from .schedule import (cone_mapping_check, diameter_constants, empirical_contraction,
                       schedule_for_potential, uniform_bound_check, verify_recurrence)
from .sft import (fiber_mixing_exponent, format_word, image_end_set, image_start_set, image_words,
                  is_topologically_mixing, lexmin_image_extension, load_system, words_array)
from .transfer import cylinder_masses, eigendata, gibbs_bounds_check, gibbs_constants

EXIT_OK, EXIT_INPUT, EXIT_PROPERTY, EXIT_STAGE = 0, 1, 2, 3


class StageFailure(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage


def _num(x):
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isinf(x) or math.isnan(x):
            return str(x)
        return float(f"{x:.15g}")
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.ndarray):
        return [_num(v) for v in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [_num(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _num(v) for k, v in x.items()}
    return x


class Emitter:
    """Writes tables and reports either into ``--out`` or to stdout."""

    def __init__(self, args):
        self.out = Path(args.out) if args.out else None
        self.fmt = args.format
        self.config = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
        if self.out:
            self.out.mkdir(parents=True, exist_ok=True)

    def table(self, name: str, header: list[str], rows: list[list]):
        if self.fmt == "json":
            text = json.dumps([dict(zip(header, _num(r))) for r in rows], indent=1) + "\n"
        else:
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([f"{v:.15g}" if isinstance(v, (float, np.floating)) else v for v in r])
            text = buf.getvalue()
        self._write(f"{name}.{self.fmt}", text)

    def report(self, name: str, body: dict):
        doc = {"tool": "gibbsfactors", "version": __version__, "config": self.config, "report": _num(body)}
        self._write(f"{name}_report.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")

    def _write(self, fname: str, text: str):
        if self.out:
            (self.out / fname).write_text(text)
        else:
            sys.stdout.write(f"# {fname}\n{text}")


# ---------------------------------------------------------------- loading


def _load(args, need_potential: bool = True):
    if not args.system:
        raise InputError("--system is required")
    sft, factor = load_system(args.system)
    if not need_potential:
        return sft, factor, None
    if args.potential:
        phi = load_potential(sft, args.potential)
    else:
        doc = json.loads(Path(args.system).read_text())
        if "potential" not in doc:
            raise InputError("no potential: pass --potential or add a 'potential' entry to the system file")
        phi = load_potential(sft, doc["potential"])
    return sft, factor, phi


def _system(args) -> FactorSystem:
    sft, factor, phi = _load(args)
    return FactorSystem(sft, factor, phi, depth=args.depth)


def _iname(sy: FactorSystem, y) -> str:
    return format_word(y, sy.factor.image_names)


# ---------------------------------------------------------------- subcommands


def cmd_check_mixing(args, em: Emitter) -> int:
    sft, factor, _ = _load(args, need_potential=False)
    top = is_topologically_mixing(sft)
    fib = fiber_mixing_exponent(sft, factor, args.cap or 12)
    body = {"topologically_mixing": top.mixing, "mixing_exponent": top.exponent,
            "fiber_exponent": fib.exponent if fib.exponent is not None else "not found up to cap",
            "failures": [{"n": w.n, "image_word": format_word(w.image_word, factor.image_names),
                          "start": sft.names[w.start], "end": sft.names[w.end]} for w in fib.failures]}
    em.report("check_mixing", body)
    return EXIT_OK if top.mixing and fib.exponent is not None else EXIT_PROPERTY


def cmd_classify(args, em: Emitter) -> int:
    _, _, phi = _load(args)
    rep = classify(phi)
    em.report("classify", {"regularity": rep.regularity, "classes": rep.classes, "theta": rep.theta,
                           "holder_coeff": rep.holder_coeff, "bowen_K": rep.bowen_K,
                           "evidence": rep.evidence, "thresholds": rep.thresholds, "note": rep.note})
    return EXIT_OK


def cmd_spectrum(args, em: Emitter) -> int:
    sft, _, phi = _load(args)
    e = eigendata(phi, args.depth)
    rows = [[format_word(w, sft.names), h, nu] for w, h, nu in zip(e.words, e.h, e.nu)]
    em.table("spectrum", ["word", "h", "nu"], rows)
    em.report("spectrum", {"rho": e.rho, "pressure": e.pressure, "residual": e.residual,
                           "depth": e.depth, "iterations": e.iterations})
    return EXIT_OK


def cmd_gibbs(args, em: Emitter) -> int:
    sy = _system(args)
    n_max = args.cap or 4
    rows = []
    for n in range(1, n_max + 1):
        words = words_array(sy.sft, n)
        s = birkhoff_sums(sy.phi, words, n)
        mu = cylinder_masses(sy.eig, n)
        for w, sv, m in zip(words, s, mu):
            rows.append([format_word(w, sy.sft.names), sv, m, m / math.exp(sv)])
    em.table("gibbs", ["word", "S_n_phi", "mu", "ratio"], rows)
    gb = gibbs_bounds_check(sy.eig, sy.phi, n_max)
    c1, c2 = gibbs_constants(sy.eig, sy.phi, n_max)
    em.report("gibbs", {"C": gb.C, "witness": format_word(gb.witness, sy.sft.names),
                        "ratio_min": gb.ratio_min, "ratio_max": gb.ratio_max, "C1": c1, "C2": c2,
                        "pressure_removed": sy.raw_pressure})
    return EXIT_OK


def cmd_push(args, em: Emitter) -> int:
    sy = _system(args)
    rows, worst = [], 0.0
    for n in range(1, (args.cap or 4) + 1):
        for y in image_words(sy.sft, sy.factor, n):
            a = pushforward_cylinder(sy, y, args.reference).value
            b = pushforward_liftsum(sy, y, args.reference)
            worst = max(worst, abs(a - b) / max(abs(b), 1e-300))
            rows.append([_iname(sy, y), a, b, abs(a - b)])
    em.table("push", ["image_word", "value_operator_path", "value_liftsum_path", "abs_diff"], rows)
    em.report("push", {"max_relative_diff": worst, "reference": args.reference})
    return EXIT_OK


def _schedule(sy: FactorSystem, args, n_fiber: int):
    rep = classify(sy.phi)
    source = "walters" if rep.regularity == "Walters" else "bowen"
    s = schedule_for_potential(sy.phi, args.sigma, source, n_fiber=n_fiber, j_max=args.jmax)
    diameter_constants(sy, s)
    return s


def _fiber(sy: FactorSystem) -> int:
    fib = fiber_mixing_exponent(sy.sft, sy.factor)
    if fib.exponent is None:
        raise PreconditionError("fiber mixing not found up to cap")
    return fib.exponent


def _psi_rows(sy: FactorSystem, s, args):
    rows, summary = [], []
    for y in image_words(sy.sft, sy.factor, args.length):
        est = estimate_psi(sy, y, args.eps, s, m_max=args.cap or 4096)
        _, errs = f_sequence(sy, est.word[: est.m_used + 1])
        for m, (fv, ev) in enumerate(zip(est.f_values, errs), start=1):
            rows.append([_iname(sy, y), m, fv, min(ev, s.apriori_bound(m))])
        summary.append({"image_word": _iname(sy, y), "psi": est.value, "certified_error": est.certified_error,
                        "m_used": est.m_used, "extended_word": _iname(sy, est.word)})
    return rows, summary


def cmd_psi(args, em: Emitter) -> int:
    sy = _system(args)
    s = _schedule(sy, args, _fiber(sy))
    rows, summary = _psi_rows(sy, s, args)
    em.table("psi", ["image_word", "m", "f_m", "certified_error"], rows)
    em.report("psi", {"estimates": summary, "gamma": s.gamma, "D": s.D,
                      "extension_rule": "lexicographically smallest admissible continuation"})
    return EXIT_OK


def _variation_rows(sy: FactorSystem, s, len_cap: int, n_max: int = 3):
    table = VectorTable(sy, len_cap)
    rows = []
    for n in range(1, n_max + 1):
        for j in range(0, len_cap - n):
            pv = psi_variation(sy, n, j, len_cap, s, table)
            rows.append([n, j, pv.value, pv.slack, pv.bound])
    return rows


def cmd_variations(args, em: Emitter) -> int:
    sy = _system(args)
    s = _schedule(sy, args, _fiber(sy))
    rows = _variation_rows(sy, s, args.cap or 10)
    em.table("variations", ["n", "j", "var_n_plus_j_S_n_psi", "slack", "apriori_bound"], rows)
    em.report("variations", {"len_cap": args.cap or 10, "gamma": s.gamma})
    return EXIT_OK


def _schedule_outputs(em: Emitter, s):
    rows = [[j, k, float(s.d[j, k])] for j in range(s.d.shape[0]) for k in range(s.k_max + 1)]
    em.table("schedule", ["j", "k", "d"], rows)
    body = s.to_dict()
    body["recurrence_residual"] = verify_recurrence(s)
    ub = uniform_bound_check(s)
    body["uniform_bound"] = {"max_d": ub.max_d, "B": ub.B, "passed": ub.passed}
    body["covered_j"] = s.j_max if not s.stationary else "all (stationary)"
    em.report("schedule", body)
    return body


def cmd_schedule(args, em: Emitter) -> int:
    sy = _system(args)
    s = _schedule(sy, args, _fiber(sy))
    body = _schedule_outputs(em, s)
    return EXIT_OK if body["uniform_bound"]["passed"] and body["recurrence_residual"] < 1e-10 else EXIT_PROPERTY


def cmd_verify(args, em: Emitter) -> int:
    sy = _system(args)
    s = _schedule(sy, args, _fiber(sy))
    rng = np.random.default_rng(args.seed)
    checks = []
    checks.append(["recurrence", verify_recurrence(s) < 1e-10, verify_recurrence(s)])
    ub = uniform_bound_check(s)
    checks.append(["uniform_bound", ub.passed, ub.max_d])
    worst = 0
    for j in range(2):
        n = s.n_at(j + 1)
        for w in words_array(sy.sft, n + 1)[: 8]:
            r = cone_mapping_check(sy, s, j, w, args.samples, rng)
            worst += r.violations
    checks.append(["cone_mapping", worst == 0, worst])
    y = lexmin_image_extension(sy.sft, sy.factor, (0,), 1 + s.n_at(1) + s.n_at(2))
    ec = empirical_contraction(sy, s, y, 2, args.samples, rng)
    checks.append(["contraction", ec.violations == 0, ec.max_ratio])
    rows = _birkhoff_rows(sy, args.samples, rng)
    bviol = sum(1 for r in rows if r[2] > r[4] * r[1] + 1e-10)
    checks.append(["birkhoff", bviol == 0, bviol])
    K = bowen_constant(sy.phi, max(2 * sy.phi.depth, 4)).K
    n_max = args.cap or 6
    c1, c2 = gibbs_constants(sy.eig, sy.phi, n_max)
    ge = verify_gibbs_equivalence(sy, n_max, K, c1, c2)
    checks.append(["gibbs_equivalence", ge.holds, ge.c_high])
    em.table("verify", ["check", "passed", "measure"], checks)
    em.report("verify", {"all_passed": all(c[1] for c in checks), "samples": args.samples, "seed": args.seed})
    return EXIT_OK if all(c[1] for c in checks) else EXIT_PROPERTY


def _birkhoff_rows(sy: FactorSystem, samples: int, rng, length: int = 3):
    """Sampled (pair_id, theta_in, theta_out, ratio, bound) for image-word operators on nonneg cones."""
    space = CylinderSpace(sy.sft, sy.depth)
    rows = []
    for y in image_words(sy.sft, sy.factor, length):
        mat = image_word_operator(sy, y)
        start = np.flatnonzero(image_start_set(sy.sft, sy.factor, y))
        end = np.flatnonzero(image_end_set(sy.sft, sy.factor, y))
        c_in = NonnegCone(tuple(int(a) for a in start))
        out_mask = space.mask(end)
        delta = nonneg_image_diameter(mat, space.mask(start), out_mask)
        bound = math.tanh(delta / 4) if math.isfinite(delta) else 1.0
        fs = sample_members(space, c_in, rng, 2 * samples)
        for t in range(samples):
            f, g = fs[2 * t], fs[2 * t + 1]
            t_in = hilbert_nonneg(f, g, space.mask(start))
            t_out = hilbert_nonneg(mat @ f, mat @ g, out_mask)
            rows.append([f"{_iname(sy, y)}:{t}", t_in, t_out, t_out / t_in if t_in > 0 else 0.0, bound])
    return rows


def cmd_cones(args, em: Emitter) -> int:
    sy = _system(args)
    rng = np.random.default_rng(args.seed)
    rows = _birkhoff_rows(sy, args.samples, rng, args.length)
    viol = sum(1 for r in rows if r[2] > r[4] * r[1] + 1e-10)
    em.table("cones", ["pair_id", "theta_in", "theta_out", "ratio", "bound"], rows)
    em.report("cones", {"pairs": len(rows), "violations": viol})
    return EXIT_OK if viol == 0 else EXIT_PROPERTY


def cmd_pipeline(args, em: Emitter) -> int:
    stage = "load"
    sft, factor, phi = _load(args)
    try:
        stage = "eigendata"
        sy = FactorSystem(sft, factor, phi, depth=args.depth)
        em.report("spectrum", {"rho_raw": math.exp(sy.raw_pressure), "pressure": sy.raw_pressure,
                               "rho_normalized": sy.eig.rho, "residual": sy.eig.residual})
        stage = "fiber"
        fib = fiber_mixing_exponent(sft, factor)
        if fib.exponent is None:
            raise StageFailure(stage, "fiber mixing not found up to cap")
        stage = "schedule"
        s = _schedule(sy, args, fib.exponent)
        body = _schedule_outputs(em, s)
        if not body["uniform_bound"]["passed"] or body["recurrence_residual"] >= 1e-10:
            raise StageFailure(stage, "schedule checks failed")
        stage = "psi"
        rows, summary = _psi_rows(sy, s, args)
        em.table("psi", ["image_word", "m", "f_m", "certified_error"], rows)
        em.report("psi", {"estimates": summary})
        stage = "variations"
        em.table("variations", ["n", "j", "var_n_plus_j_S_n_psi", "slack", "apriori_bound"],
                 _variation_rows(sy, s, args.cap or 10))
        stage = "gibbs"
        K = bowen_constant(sy.phi, max(2 * sy.phi.depth, 4)).K
        c1, c2 = gibbs_constants(sy.eig, sy.phi, 6)
        ge = verify_gibbs_equivalence(sy, 6, K, c1, c2)
        em.report("gibbs_equivalence", vars(ge))
        if not ge.holds:
            raise StageFailure(stage, "gibbs equivalence bounds violated")
    except StageFailure:
        raise
    except (InputError, DomainError, PreconditionError, CapacityError, NumericError) as exc:
        raise StageFailure(stage, str(exc)) from None
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gibbsfactors", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--system", help="system JSON (alphabet, transitions, factor)")
    common.add_argument("--potential", help="potential JSON; defaults to the system file's 'potential' entry")
    common.add_argument("--sigma", type=float, default=0.5)
    common.add_argument("--eps", type=float, default=1e-6)
    common.add_argument("--depth", type=int, default=None, help="working depth (default: potential depth - 1)")
    common.add_argument("--cap", type=int, default=None, help="length/search cap, meaning depends on command")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output directory (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--reference", choices=("nu", "gibbs"), default="nu")
    common.add_argument("--length", type=int, default=3, help="image word length for psi tables")
    common.add_argument("--samples", type=int, default=50)
    common.add_argument("--jmax", type=int, default=8)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in [("check-mixing", cmd_check_mixing), ("classify", cmd_classify), ("spectrum", cmd_spectrum),
                     ("gibbs", cmd_gibbs), ("push", cmd_push), ("psi", cmd_psi), ("variations", cmd_variations),
                     ("schedule", cmd_schedule), ("verify", cmd_verify), ("pipeline", cmd_pipeline),
                     ("cones", cmd_cones)]:
        p = sub.add_parser(name, parents=[common])
        p.set_defaults(func=fn)
    return parser


def _validate(args):
    if not 0 < args.sigma < 1:
        raise InputError("--sigma must lie in (0, 1)")
    if not 0 < args.eps < 1:
        raise InputError("--eps must lie in (0, 1)")
    for name in ("cap", "depth"):
        v = getattr(args, name)
        if v is not None and v < 1:
            raise InputError(f"--{name} must be positive")
    if args.length < 1 or args.samples < 1 or args.jmax < 1:
        raise InputError("--length, --samples and --jmax must be positive")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _validate(args)
        em = Emitter(args)
        return args.func(args, em)
    except StageFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (InputError, json.JSONDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROPERTY
    except (DomainError, CapacityError, NumericError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
