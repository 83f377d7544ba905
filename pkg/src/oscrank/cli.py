"""Batch front end: parse descriptor files, dispatch engine operations, run
verification suites, emit certificates and reports as JSON."""

from __future__ import annotations

import argparse
import sys
import time
from fractions import Fraction

from .ordinal import ONE, ZERO, add, decompose_pair, from_int, mul, omega_pow
from .ordinal import parse as parse_ordinal
from .ordinal import render
from .space import (
    ClosedSet,
    canonical_space,
    full_mark,
    mark_contains,
    sample_points,
)
from .func import (
    SeqTruncate,
    UnsupportedDescriptor,
    eval_lab,
    pointwise,
)
from .derive import (
    CbDeriv,
    Divergence,
    EngineError,
    OmegaDeriv,
    OscClosure,
    OscPair,
    SeqOsc,
    StepFun,
    Unbounded,
    WeightedClosure,
    beta,
    check_relation,
    iterate,
    rank,
)
from . import jsonio, multiplier, randgen
from .approx import check_beta_leq_gamma, p23_witness
from .jsonio import SchemaError

RELATIONS = ("R1", "R2", "R3", "R4", "R5", "R6", "R7", "R8", "R9")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FALSIFIED = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _eps(args) -> Fraction:
    if args.epsilon is None:
        raise SchemaError("--epsilon: required for this kind")
    try:
        e = Fraction(args.epsilon)
    except (ValueError, ZeroDivisionError):
        raise SchemaError("--epsilon: not a rational: %r" % args.epsilon)
    if e <= 0:
        raise SchemaError("--epsilon: must be positive")
    return e


def _ordinal(text, flag):
    if text is None:
        raise SchemaError("%s: required" % flag)
    try:
        return parse_ordinal(text)
    except Exception:
        raise SchemaError("%s: bad ordinal %r" % (flag, text))


def _load_instance(args, need_set=False):
    if args.input is None:
        raise SchemaError("--input: required")
    doc = jsonio.load_document(args.input)
    space = jsonio.space_from_json(
        doc.get("space") or _missing(args.input, "space"), "space"
    )
    lab = None
    if "function" in doc:
        lab = jsonio.lab_from_json(doc["function"], "function")
    if "set" in doc:
        mark = jsonio.mark_from_json(doc["set"], "set")
    elif need_set:
        mark = full_mark(space)
    else:
        mark = full_mark(space)
    return doc, space, lab, ClosedSet(space, mark)


def _missing(path, field):
    raise SchemaError("%s: missing field %r" % (path, field))


def _build_kind(args, space, lab, doc):
    kind = args.kind or "osc"
    if kind in ("osc", "osc_pair"):
        return OscPair(_req_lab(lab), _eps(args))
    if kind == "osc_closure":
        return OscClosure(_req_lab(lab), _eps(args))
    if kind == "weighted":
        if "weight" not in doc:
            raise SchemaError("--input: weighted kind needs a 'weight' labeling")
        g = jsonio.lab_from_json(doc["weight"], "weight")
        return WeightedClosure(g, _req_lab(lab), _eps(args))
    if kind == "unbounded":
        if args.bigm is None:
            raise SchemaError("--bigm: required for kind 'unbounded'")
        return Unbounded(_req_lab(lab), Fraction(args.bigm))
    if kind == "divergence":
        return Divergence(_req_lab(lab))
    if kind == "omega":
        xi = _ordinal(args.xi or "0", "--xi")
        return OmegaDeriv(_req_lab(lab), xi)
    if kind == "cb":
        return CbDeriv()
    if kind == "seq":
        if "sequence" not in doc:
            raise SchemaError("--input: seq kind needs a 'sequence'")
        return SeqOsc(jsonio.seq_from_json(doc["sequence"]), _eps(args))
    raise SchemaError("--kind: unknown kind %r" % kind)


def _req_lab(lab):
    if lab is None:
        raise SchemaError("--input: missing field 'function'")
    return lab


def _report(doc, args):
    text = jsonio.dump_document(doc, args.output if hasattr(args, "output") else None)
    print(text)


# --------------------------------------------------------------------------
# Commands


def cmd_rank(args) -> int:
    doc, space, lab, closed = _load_instance(args)
    kind = _build_kind(args, space, lab, doc)
    cert = rank(kind, closed)
    _report(
        {
            "command": "rank",
            "kind": args.kind or "osc",
            "certificate": jsonio.cert_to_json(cert),
            "rank": render(cert.rank),
        },
        args,
    )
    return EXIT_OK


def cmd_derive(args) -> int:
    doc, space, lab, closed = _load_instance(args)
    kind = _build_kind(args, space, lab, doc)
    kappa = _ordinal(args.kappa, "--kappa")
    out = iterate(kind, kappa, closed)
    _report(
        {
            "command": "derive",
            "kappa": render(kappa),
            "space": jsonio.space_to_json(space),
            "set": jsonio.mark_to_json(out.mark),
        },
        args,
    )
    return EXIT_OK


def cmd_multiplier(args) -> int:
    doc, space, lab, _ = _load_instance(args)
    kappa = _ordinal(args.kappa, "--kappa")
    verdict = multiplier.is_multiplier(StepFun(space, _req_lab(lab)), kappa)
    xi, alpha = verdict.pair
    _report(
        {
            "command": "multiplier",
            "kappa": render(kappa),
            "is_multiplier": verdict.is_multiplier,
            "pair": [render(xi), render(alpha)],
        },
        args,
    )
    return EXIT_OK


def cmd_witness(args) -> int:
    mode = args.mode
    if mode == "hM":
        kappa = _ordinal(args.kappa, "--kappa")
        big_m = int(args.bigm) if args.bigm is not None else 1
        space, h, x = multiplier.hM_witness(kappa, big_m)
        bundle = {
            "witness": "hM",
            "kappa": render(kappa),
            "bigm": big_m,
            "space": jsonio.space_to_json(space),
            "function": jsonio.lab_to_json(h.lab),
            "point": list(x),
        }
    elif mode == "p95":
        kappa = _ordinal(args.kappa, "--kappa")
        w = multiplier.non_multiplier_witness(kappa)
        bundle = {
            "witness": "p95",
            "kappa": render(kappa),
            "space": jsonio.space_to_json(w.space),
            "h": jsonio.lab_to_json(w.h.lab),
            "g": jsonio.lab_to_json(w.g.lab),
            "claim": w.claim,
            "beta_g": jsonio.cert_to_json(w.beta_g),
            "beta_gh": jsonio.cert_to_json(w.beta_gh),
        }
    elif mode == "property":
        sub = args.kind or "shift"
        params = {}
        if args.kappa is not None:
            params["kappa"] = _ordinal(args.kappa, "--kappa")
        if args.xi is not None:
            params["xi"] = _ordinal(args.xi, "--xi")
        Q, g, x, cert = multiplier.property_witness(sub, params)
        bundle = {
            "witness": "property",
            "submode": sub,
            "params": {k: render(v) for k, v in params.items()},
            "space": jsonio.space_to_json(Q.space),
            "set": jsonio.mark_to_json(Q.mark),
            "g": jsonio.lab_to_json(g.lab),
            "point": list(x),
            "certificate": cert,
        }
    else:
        raise SchemaError("--mode: unknown witness mode %r" % mode)
    _report(bundle, args)
    return EXIT_OK


def _verify_bundle(args) -> int:
    doc = jsonio.load_document(args.input)
    witness = doc.get("witness")
    if witness == "hM":
        kappa = _ordinal(doc.get("kappa"), "kappa")
        space = jsonio.space_from_json(doc["space"], "space")
        lab = jsonio.lab_from_json(doc["function"], "function")
        point = tuple(doc["point"])
        traj = iterate(
            Unbounded(lab, Fraction(int(doc["bigm"]))),
            kappa,
            ClosedSet(space, full_mark(space)),
        )
        ok = mark_contains(space, traj.mark, point)
        _print_verdict("hM bundle", ok, None if ok else "cutoff core lost the point")
        return EXIT_OK if ok else EXIT_FALSIFIED
    if witness == "p95":
        space = jsonio.space_from_json(doc["space"], "space")
        h = jsonio.lab_from_json(doc["h"], "h")
        g = jsonio.lab_from_json(doc["g"], "g")
        gh = pointwise(space, g, h, "mul")
        cert = beta(StepFun(space, gh), Fraction(1))
        ok = render(cert.rank) == doc["beta_gh"]["rank"]
        _print_verdict(
            "p95 bundle", ok, None if ok else "recomputed product rank differs"
        )
        return EXIT_OK if ok else EXIT_FALSIFIED
    if witness == "property":
        params = {
            k: _ordinal(v, "params.%s" % k) for k, v in doc.get("params", {}).items()
        }
        _, _, _, cert = multiplier.property_witness(doc["submode"], params)
        import json as _json

        ok = _json.loads(_json.dumps(cert)) == doc["certificate"]
        _print_verdict(
            "property bundle", ok, None if ok else "regenerated certificate differs"
        )
        return EXIT_OK if ok else EXIT_FALSIFIED
    raise SchemaError("%s: unknown witness bundle %r" % (args.input, witness))


def _print_verdict(label, ok, detail):
    doc = {"verified": bool(ok), "target": label}
    if detail:
        doc["detail"] = detail
    print(jsonio.dump_document(doc))


def _suite_relations(seed: int, cases: int) -> dict:
    per = {}
    counterexample = None
    for rel in RELATIONS:
        held = skipped = 0
        for i in range(cases):
            rng = randgen.rng_for(seed * 10007 + i)
            inst = randgen.rand_relation_instance(rng, rel)
            try:
                res = check_relation(rel, inst)
            except (UnsupportedDescriptor, EngineError):
                skipped += 1
                continue
            if res["holds"]:
                held += 1
            else:
                counterexample = {"relation": rel, "case": i, "seed": seed}
                break
        per[rel] = {"held": held, "skipped": skipped}
        if counterexample:
            break
    return {"suite": "relations", "per_relation": per, "counterexample": counterexample}


def _suite_oracle(seed: int, cases: int) -> dict:
    rng = randgen.rng_for(seed)
    failures = []

    def rand_ord():
        # CNF term sum with exponents below 4
        total = ZERO
        for e in range(3, -1, -1):
            c = rng.randint(0, 3)
            if c:
                total = add(total, mul(omega_pow(from_int(e)), from_int(c)))
        return total

    for i in range(cases):
        a, b, c = rand_ord(), rand_ord(), rand_ord()
        if add(add(a, b), c) != add(a, add(b, c)):
            failures.append({"law": "add_assoc", "case": i})
        if mul(mul(a, b), c) != mul(a, mul(b, c)):
            failures.append({"law": "mul_assoc", "case": i})
        if mul(a, add(b, c)) != add(mul(a, b), mul(a, c)):
            failures.append({"law": "left_distrib", "case": i})
        if parse_ordinal(render(a)) != a:
            failures.append({"law": "parse_render", "case": i})
        if a != ZERO:
            xi, alpha = decompose_pair(a)
            if add(omega_pow(xi), alpha) != a:
                failures.append({"law": "decompose_pair", "case": i})
        if failures:
            break
    return {"suite": "oracle", "checked": cases, "failures": failures}


def _suite_multiplier(seed: int, cases: int) -> dict:
    from .func import const_lab

    failures = []
    for k in (ONE, from_int(2)):
        space = canonical_space(k)
        verdict = multiplier.is_multiplier(
            StepFun(space, const_lab(space, Fraction(3))), k
        )
        if not verdict.is_multiplier:
            failures.append({"law": "constant_is_multiplier", "kappa": render(k)})
        w = multiplier.non_multiplier_witness(k)
        if not w.beta_gh.rank > w.beta_g.rank:
            failures.append({"law": "witness_rank_gap", "kappa": render(k)})
    space = canonical_space(ONE)
    good_h = StepFun(space, const_lab(space, Fraction(2)))
    samp = multiplier.sampled_product_check(
        good_h, ONE, count=max(5, cases // 20), seed=seed
    )
    if not samp["holds"]:
        failures.append({"law": "sampled_products", "detail": samp})
    return {"suite": "multiplier", "failures": failures, "sampled": samp["checked"]}


def _suite_approx(seed: int, cases: int) -> dict:
    failures = []
    checked = 0
    for i in range(cases):
        rng = randgen.rng_for(seed * 7919 + i)
        space = randgen.rand_space(rng, depth=2)
        lab = randgen.rand_lab(rng, space, indexed=False)
        f = StepFun(space, lab)
        try:
            cert = beta(f)
            if not cert.rank <= from_int(4):
                continue
            bundle = p23_witness(f, Fraction(1, 2), max_stage=6)
        except (UnsupportedDescriptor, EngineError):
            continue
        for addr in sample_points(space, 3, depth=2):
            gap = abs(
                eval_lab(space, bundle.g.lab, addr) - eval_lab(space, lab, addr)
            )
            if gap >= Fraction(1, 2):
                failures.append({"law": "approximant_bound", "case": i})
                break
        try:
            rep = check_beta_leq_gamma(f, SeqTruncate(lab))
            if not rep["beta_leq_gamma"]:
                failures.append({"law": "beta_leq_gamma", "case": i})
        except (UnsupportedDescriptor, EngineError):
            pass
        checked += 1
        if failures:
            break
    return {"suite": "approx", "checked": checked, "failures": failures}


def cmd_verify(args) -> int:
    if args.input is not None:
        return _verify_bundle(args)
    suite = args.mode or "all"
    seed = args.seed if args.seed is not None else 0
    cases = args.cases if args.cases is not None else 50
    suites = {
        "relations": lambda: _suite_relations(seed, cases),
        "oracle": lambda: _suite_oracle(seed, cases),
        "multiplier": lambda: _suite_multiplier(seed, cases),
        "approx": lambda: _suite_approx(seed, cases),
    }
    if suite == "all":
        picked = list(suites)
    elif suite in suites:
        picked = [suite]
    else:
        raise SchemaError("--mode: unknown suite %r" % suite)
    reports = [suites[name]() for name in picked]
    falsified = []
    for rep in reports:
        falsified.extend(rep.get("failures") or [])
        if rep.get("counterexample"):
            falsified.append(rep["counterexample"])
    doc = {
        "command": "verify",
        "seed": seed,
        "cases": cases,
        "reports": reports,
        "verified": not falsified,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    _report(doc, args)
    return EXIT_OK if not falsified else EXIT_FALSIFIED


# --------------------------------------------------------------------------
# Entry point


def build_parser() -> _Parser:
    p = _Parser(prog="oscrank", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("rank", cmd_rank),
        ("derive", cmd_derive),
        ("multiplier", cmd_multiplier),
        ("witness", cmd_witness),
        ("verify", cmd_verify),
    ):
        sp = sub.add_parser(name)
        sp.add_argument("--input")
        sp.add_argument("--kind")
        sp.add_argument("--epsilon")
        sp.add_argument("--bigm")
        sp.add_argument("--kappa")
        sp.add_argument("--xi")
        sp.add_argument("--mode")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--cases", type=int)
        sp.add_argument("--output")
        sp.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except SchemaError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    except (EngineError, UnsupportedDescriptor) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
