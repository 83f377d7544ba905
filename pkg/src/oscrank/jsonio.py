"""JSON serialization of space, labeling, mark, and derivation descriptors.

Ordinals travel as Cantor-normal-form strings; rationals as "p/q" strings.
Every emitted document re-parses to an equal descriptor.
"""

from __future__ import annotations

import json
from fractions import Fraction

from .ordinal import parse as parse_ordinal, render
from .space import (
    CanonicalTail,
    ConstantTail,
    FiniteSum,
    MLeaf,
    MOmega,
    MSum,
    OmegaSum,
    Singleton,
    TCycle,
    TEmpty,
    TFull,
    TStage,
    TTops,
    TUniform,
)
from .func import (
    LConstCopy,
    LCycle,
    LFamily,
    LIndexed,
    LLeaf,
    LOmega,
    LSum,
    LUniform,
    RatVal,
    SeqEventually,
    SeqTruncate,
)


class SchemaError(ValueError):
    """A document does not match the descriptor schema; the message names
    the offending field."""


def _frac_out(x: Fraction) -> str:
    return "%d/%d" % (x.numerator, x.denominator) if x.denominator != 1 else str(
        x.numerator
    )


def _frac_in(s, where: str) -> Fraction:
    try:
        return Fraction(s)
    except (ValueError, ZeroDivisionError, TypeError):
        raise SchemaError("%s: not a rational: %r" % (where, s))


def _expect(doc, key, where):
    if not isinstance(doc, dict) or key not in doc:
        raise SchemaError("%s: missing field %r" % (where, key))
    return doc[key]


# --------------------------------------------------------------------------
# Values (index slots)


def val_to_json(v: RatVal):
    if v.den == (Fraction(1),):
        return {"poly": [_frac_out(c) for c in v.num]}
    if v.num == (Fraction(1),):
        return {"recip": [_frac_out(c) for c in v.den]}
    return {
        "ratio": {
            "num": [_frac_out(c) for c in v.num],
            "den": [_frac_out(c) for c in v.den],
        }
    }


def val_from_json(doc, where="value"):
    if not isinstance(doc, dict):
        raise SchemaError("%s: expected an object" % where)
    if "poly" in doc:
        return RatVal.make(tuple(_frac_in(c, where) for c in doc["poly"]))
    if "recip" in doc:
        return RatVal.make(
            (1,), tuple(_frac_in(c, where) for c in doc["recip"])
        )
    if "ratio" in doc:
        inner = doc["ratio"]
        return RatVal.make(
            tuple(_frac_in(c, where) for c in _expect(inner, "num", where)),
            tuple(_frac_in(c, where) for c in _expect(inner, "den", where)),
        )
    raise SchemaError("%s: unknown slot form %s" % (where, sorted(doc)))


# --------------------------------------------------------------------------
# Spaces


def space_to_json(space):
    if isinstance(space, Singleton):
        return {"type": "singleton"}
    if isinstance(space, FiniteSum):
        return {
            "type": "finite_sum",
            "parts": [space_to_json(p) for p in space.parts],
        }
    tail = (
        {"constant": space_to_json(space.tail.body)}
        if isinstance(space.tail, ConstantTail)
        else {"canonical": render(space.tail.limit)}
    )
    return {
        "type": "omega_sum",
        "prefix": [space_to_json(p) for p in space.prefix],
        "tail": tail,
    }


def space_from_json(doc, where="space"):
    t = _expect(doc, "type", where)
    if t == "singleton":
        return Singleton()
    if t == "finite_sum":
        parts = _expect(doc, "parts", where)
        return FiniteSum(
            tuple(
                space_from_json(p, "%s.parts[%d]" % (where, i))
                for i, p in enumerate(parts)
            )
        )
    if t == "omega_sum":
        prefix = tuple(
            space_from_json(p, "%s.prefix[%d]" % (where, i))
            for i, p in enumerate(doc.get("prefix", []))
        )
        tail_doc = _expect(doc, "tail", where)
        if "constant" in tail_doc:
            tail = ConstantTail(
                space_from_json(tail_doc["constant"], where + ".tail")
            )
        elif "canonical" in tail_doc:
            try:
                tail = CanonicalTail(parse_ordinal(tail_doc["canonical"]))
            except Exception:
                raise SchemaError(
                    "%s.tail: bad ordinal %r" % (where, tail_doc["canonical"])
                )
        else:
            raise SchemaError("%s.tail: unknown tail rule" % where)
        return OmegaSum(prefix, tail)
    raise SchemaError("%s: unknown space type %r" % (where, t))


# --------------------------------------------------------------------------
# Labelings


def lab_to_json(lab):
    if isinstance(lab, LLeaf):
        return {"type": "leaf", "value": val_to_json(lab.value)}
    if isinstance(lab, LSum):
        return {"type": "sum", "parts": [lab_to_json(p) for p in lab.parts]}
    tail = lab.tail
    if isinstance(tail, LUniform):
        tj = {"uniform": lab_to_json(tail.lab)}
    elif isinstance(tail, LCycle):
        tj = {"cycle": [lab_to_json(p) for p in tail.labs]}
    elif isinstance(tail, LConstCopy):
        tj = {"const_copy": val_to_json(tail.value)}
    elif isinstance(tail, LIndexed):
        tj = {"indexed": lab_to_json(tail.lab)}
    else:
        tj = {
            "family": tail.family,
            "scale": val_to_json(tail.scale),
            "flip": tail.flip,
        }
    return {
        "type": "omega",
        "top": val_to_json(lab.top),
        "head": [lab_to_json(p) for p in lab.head],
        "tail": tj,
    }


def lab_from_json(doc, where="function"):
    t = _expect(doc, "type", where)
    if t == "leaf":
        return LLeaf(val_from_json(_expect(doc, "value", where), where))
    if t == "sum":
        return LSum(
            tuple(
                lab_from_json(p, "%s.parts[%d]" % (where, i))
                for i, p in enumerate(_expect(doc, "parts", where))
            )
        )
    if t != "omega":
        raise SchemaError("%s: unknown labeling type %r" % (where, t))
    top = val_from_json(_expect(doc, "top", where), where + ".top")
    head = tuple(
        lab_from_json(p, "%s.head[%d]" % (where, i))
        for i, p in enumerate(doc.get("head", []))
    )
    td = _expect(doc, "tail", where)
    if "uniform" in td:
        tail = LUniform(lab_from_json(td["uniform"], where + ".tail"))
    elif "cycle" in td:
        tail = LCycle(
            tuple(
                lab_from_json(p, "%s.tail[%d]" % (where, i))
                for i, p in enumerate(td["cycle"])
            )
        )
    elif "const_copy" in td:
        tail = LConstCopy(val_from_json(td["const_copy"], where + ".tail"))
    elif "indexed" in td:
        tail = LIndexed(lab_from_json(td["indexed"], where + ".tail"))
    elif "family" in td:
        tail = LFamily(
            td["family"],
            val_from_json(_expect(td, "scale", where + ".tail"), where),
            int(td.get("flip", 0)),
        )
    else:
        raise SchemaError("%s.tail: unknown tail labeling" % where)
    return LOmega(top, head, tail)


# --------------------------------------------------------------------------
# Marks


def mark_to_json(mark):
    if isinstance(mark, MLeaf):
        return {"type": "leaf", "on": mark.on}
    if isinstance(mark, MSum):
        return {"type": "sum", "parts": [mark_to_json(p) for p in mark.parts]}
    tail = mark.tail
    if isinstance(tail, TEmpty):
        tj = {"empty": True}
    elif isinstance(tail, TFull):
        tj = {"full": True}
    elif isinstance(tail, TTops):
        tj = {"tops": True}
    elif isinstance(tail, TUniform):
        tj = {"uniform": mark_to_json(tail.mark)}
    elif isinstance(tail, TCycle):
        tj = {"cycle": [mark_to_json(m) for m in tail.marks]}
    else:
        tj = {"stage": render(tail.sigma), "base": mark_to_json(tail.base)}
    return {
        "type": "omega",
        "top": mark.top,
        "head": [mark_to_json(p) for p in mark.head],
        "tail": tj,
    }


def mark_from_json(doc, where="set"):
    t = _expect(doc, "type", where)
    if t == "leaf":
        return MLeaf(bool(_expect(doc, "on", where)))
    if t == "sum":
        return MSum(
            tuple(
                mark_from_json(p, "%s.parts[%d]" % (where, i))
                for i, p in enumerate(_expect(doc, "parts", where))
            )
        )
    if t != "omega":
        raise SchemaError("%s: unknown mark type %r" % (where, t))
    head = tuple(
        mark_from_json(p, "%s.head[%d]" % (where, i))
        for i, p in enumerate(doc.get("head", []))
    )
    td = _expect(doc, "tail", where)
    if "empty" in td:
        tail = TEmpty()
    elif "full" in td:
        tail = TFull()
    elif "tops" in td:
        tail = TTops()
    elif "uniform" in td:
        tail = TUniform(mark_from_json(td["uniform"], where + ".tail"))
    elif "cycle" in td:
        tail = TCycle(
            tuple(
                mark_from_json(m, "%s.tail[%d]" % (where, i))
                for i, m in enumerate(td["cycle"])
            )
        )
    elif "stage" in td:
        try:
            sigma = parse_ordinal(td["stage"])
        except Exception:
            raise SchemaError("%s.tail: bad ordinal %r" % (where, td["stage"]))
        tail = TStage(sigma, mark_from_json(_expect(td, "base", where), where))
    else:
        raise SchemaError("%s.tail: unknown tail rule" % where)
    return MOmega(top=bool(_expect(doc, "top", where)), head=head, tail=tail)


# --------------------------------------------------------------------------
# Sequences and certificates


def seq_to_json(seq):
    if isinstance(seq, SeqTruncate):
        return {"type": "truncation", "limit": lab_to_json(seq.limit)}
    return {
        "type": "eventually",
        "prefix": [lab_to_json(p) for p in seq.prefix],
        "tail": lab_to_json(seq.tail),
    }


def seq_from_json(doc, where="sequence"):
    t = _expect(doc, "type", where)
    if t == "truncation":
        return SeqTruncate(lab_from_json(_expect(doc, "limit", where), where))
    if t == "eventually":
        return SeqEventually(
            tuple(
                lab_from_json(p, "%s.prefix[%d]" % (where, i))
                for i, p in enumerate(doc.get("prefix", []))
            ),
            lab_from_json(_expect(doc, "tail", where), where + ".tail"),
        )
    raise SchemaError("%s: unknown sequence type %r" % (where, t))


def cert_to_json(cert):
    return {
        "rank": render(cert.rank),
        "method": cert.method,
        "stages": [
            {"stage": render(o), "summary": s, "empty": e}
            for o, s, e in cert.stages
        ],
    }


def load_document(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise SchemaError("%s: cannot read (%s)" % (path, exc))
    except json.JSONDecodeError as exc:
        raise SchemaError("%s: invalid JSON (%s)" % (path, exc))


def dump_document(doc: dict, path: str = None) -> str:
    text = json.dumps(doc, indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text
