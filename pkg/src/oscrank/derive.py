"""Derivation engine for labeled tree compacta.

Eight point-removal operators are supported, each parameterised by
labelings on a fixed space:

* ``OscPair(f, eps)``      -- points near which ``f`` admits value pairs
  at distance ``>= eps`` inside every neighborhood;
* ``OscClosure(h, eps)``   -- closure of the points ``x`` with nearby
  witnesses ``y`` satisfying ``|h(y) - h(x)| >= eps``;
* ``WeightedClosure(g, h, eps)`` -- same with the weighted gap
  ``|h(y) - h(x)| * max(|g(y)|, |g(x)|)``;
* ``Unbounded(h, M)``      -- accumulation points of ``{|h| > M}``;
* ``Divergence(g)``        -- points near which ``|g|`` is unbounded;
* ``OmegaDeriv(h, xi)``    -- the transfinite oscillation collapse built
  from the positive-oscillation chains of ``h``;
* ``CbDeriv()``            -- plain isolated-point removal;
* ``SeqOsc(seq, eps)``     -- the convergence derivation of a function
  sequence.

Every operator is computed exactly on descriptors: a single application
(``step``), transfinite iteration (``iterate``), and least vanishing
ordinal with a stage certificate (``rank``).  ``brute_force`` replays
``step`` literally and is the in-process oracle for the closed forms.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Tuple, Union

from .ordinal import (
    ONE,
    from_int,
    OMEGA,
    ZERO,
    Ordinal,
    add,
    fundamental_seq,
    left_subtract,
    mul,
    omega_pow,
    pred,
    render,
    succ,
)
from .space import (
    CanonicalTail,
    ClosedSet,
    ConstantTail,
    FiniteSum,
    MLeaf,
    MOmega,
    MSum,
    Mark,
    OmegaSum,
    Singleton,
    SpaceDesc,
    TCycle,
    TEmpty,
    TFull,
    TStage,
    TTops,
    TUniform,
    UnsupportedDescriptor,
    cb_rank,
    cb_stage,
    cb_step,
    copy_space,
    empty_mark,
    full_mark,
    intersect_marks,
    is_empty_mark,
    mark_contains,
    marks_equal,
    mark_subset,
    normalize_mark,
    sample_points,
    tail_copy_mark,
    tail_io_nonempty,
    tail_rank_profile,
    union_marks,
    validate_closed,
)
from .func import (
    FunSeq,
    Lab,
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
    VRange,
    copy_lab,
    value_range,
    _crit_bound,
    _tail_slot_vals,
)


class EngineError(Exception):
    """Raised when the progress guard of the engine trips."""


MAX_STEPS = 400

EPS = Optional[Fraction]  # None encodes "some positive threshold" (0+)


# ---------------------------------------------------------------------------
# Derivation kinds.


@dataclass(frozen=True)
class OscPair:
    f: Lab
    eps: EPS


@dataclass(frozen=True)
class OscClosure:
    h: Lab
    eps: EPS


@dataclass(frozen=True)
class WeightedClosure:
    g: Lab
    h: Lab
    eps: EPS


@dataclass(frozen=True)
class Unbounded:
    h: Lab
    bound: Fraction


@dataclass(frozen=True)
class Divergence:
    g: Lab


@dataclass(frozen=True)
class OmegaDeriv:
    h: Lab
    xi: Ordinal


@dataclass(frozen=True)
class CbDeriv:
    pass


@dataclass(frozen=True)
class SeqOsc:
    seq: FunSeq
    eps: EPS


Kind = Union[
    OscPair,
    OscClosure,
    WeightedClosure,
    Unbounded,
    Divergence,
    OmegaDeriv,
    CbDeriv,
    SeqOsc,
]


@dataclass(frozen=True)
class StepFun:
    space: SpaceDesc
    lab: Lab


@dataclass(frozen=True)
class SeqFun:
    space: SpaceDesc
    seq: FunSeq


def _as_eps(e) -> EPS:
    if e is None:
        return None
    e = Fraction(e)
    if e <= 0:
        raise EngineError("threshold must be positive")
    return e


def _kind_labs(kind: Kind) -> Tuple[Lab, ...]:
    if isinstance(kind, OscPair):
        return (kind.f,)
    if isinstance(kind, (OscClosure, Unbounded, OmegaDeriv)):
        return (kind.h,)
    if isinstance(kind, WeightedClosure):
        return (kind.g, kind.h)
    if isinstance(kind, Divergence):
        return (kind.g,)
    if isinstance(kind, SeqOsc):
        if isinstance(kind.seq, SeqEventually):
            return kind.seq.prefix + (kind.seq.tail,)
        return (kind.seq.limit,)
    return ()


def _kind_map(kind: Kind, fn) -> Kind:
    if isinstance(kind, OscPair):
        return OscPair(fn(kind.f), kind.eps)
    if isinstance(kind, OscClosure):
        return OscClosure(fn(kind.h), kind.eps)
    if isinstance(kind, WeightedClosure):
        return WeightedClosure(fn(kind.g), fn(kind.h), kind.eps)
    if isinstance(kind, Unbounded):
        return Unbounded(fn(kind.h), kind.bound)
    if isinstance(kind, Divergence):
        return Divergence(fn(kind.g))
    if isinstance(kind, OmegaDeriv):
        return OmegaDeriv(fn(kind.h), kind.xi)
    if isinstance(kind, SeqOsc):
        if isinstance(kind.seq, SeqEventually):
            seq = SeqEventually(
                tuple(fn(l) for l in kind.seq.prefix), fn(kind.seq.tail)
            )
        else:
            seq = SeqTruncate(fn(kind.seq.limit))
        return SeqOsc(seq, kind.eps)
    return kind


def _kind_part(kind: Kind, i: int) -> Kind:
    return _kind_map(kind, lambda lab: lab.parts[i])


def _lab_copy(space: OmegaSum, lab: LOmega, k: int) -> Lab:
    if k < len(lab.head):
        return lab.head[k]
    return copy_lab(space, lab.tail, k)


def _kind_copy(kind: Kind, space: OmegaSum, k: int) -> Kind:
    return _kind_map(kind, lambda lab: _lab_copy(space, lab, k))


def _mark_copy(space: OmegaSum, mark: MOmega, k: int) -> Mark:
    sub = copy_space(space, k)
    if k < len(mark.head):
        return normalize_mark(sub, mark.head[k])
    return normalize_mark(sub, tail_copy_mark(space, mark.tail, k))


def _width(kind: Kind, space: OmegaSum, mark: MOmega) -> int:
    w = max(len(space.prefix), len(mark.head))
    for lab in _kind_labs(kind):
        w = max(w, len(lab.head))
    return w


# ---------------------------------------------------------------------------
# Rational functions of the copy index (no degree caps) for eventual
# sign analysis of decision predicates.

_PINF = "+inf"
_MINF = "-inf"


def _poly_trim(p):
    p = list(p)
    while p and p[-1] == 0:
        p.pop()
    return tuple(p)


def _poly_mul(a, b):
    if not a or not b:
        return ()
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return _poly_trim(out)


def _poly_eval(p, k):
    out = Fraction(0)
    for c in reversed(p):
        out = out * k + c
    return out


def _pos_root_bound(poly) -> int:
    """Integer past all positive real roots of the polynomial (Lagrange)."""
    if len(poly) <= 1:
        return 0
    if poly[-1] < 0:
        poly = tuple(-c for c in poly)
    lead = poly[-1]
    negs = [-c for c in poly[:-1] if c < 0]
    if not negs:
        return 0
    return 2 + int(max(negs) / lead)


@dataclass(frozen=True)
class Rq:
    """Quotient of polynomials in the copy index; sign-stable beyond
    an explicit coefficient bound."""

    num: Tuple[Fraction, ...]
    den: Tuple[Fraction, ...]

    @staticmethod
    def from_val(v: RatVal) -> "Rq":
        return Rq(_poly_trim(v.num), _poly_trim(v.den))

    @staticmethod
    def const(c) -> "Rq":
        c = Fraction(c)
        return Rq((c,) if c else (), (Fraction(1),))

    def eval(self, k: int) -> Fraction:
        return _poly_eval(self.num, Fraction(k)) / _poly_eval(self.den, Fraction(k))

    def neg(self) -> "Rq":
        return Rq(tuple(-c for c in self.num), self.den)

    def sub(self, other: "Rq") -> "Rq":
        a = _poly_mul(self.num, other.den)
        b = _poly_mul(other.num, self.den)
        n = [Fraction(0)] * max(len(a), len(b))
        for i, c in enumerate(a):
            n[i] += c
        for i, c in enumerate(b):
            n[i] -= c
        return Rq(_poly_trim(n), _poly_mul(self.den, other.den))

    def mul(self, other: "Rq") -> "Rq":
        return Rq(_poly_mul(self.num, other.num), _poly_mul(self.den, other.den))

    def bound(self) -> int:
        # Past every positive real root of numerator and denominator the
        # quotient keeps one sign; a Lagrange root bound suffices and stays
        # small even when coefficients carry large denominators.
        return max(4, _pos_root_bound(self.num), _pos_root_bound(self.den))

    def limit(self):
        if not self.num:
            return Fraction(0)
        dn, dd = len(self.num) - 1, len(self.den) - 1
        if dn > dd:
            s = self.num[-1] / self.den[-1]
            return _PINF if s > 0 else _MINF
        if dn < dd:
            return Fraction(0)
        return self.num[-1] / self.den[-1]


def _rq_ev_sign(rq: Rq) -> int:
    """Sign of rq(k) for all large k (0 only when identically zero)."""
    if not rq.num:
        return 0
    lim = rq.limit()
    if lim == _PINF:
        return 1
    if lim == _MINF:
        return -1
    if lim != 0:
        return 1 if lim > 0 else -1
    b = rq.bound()
    v = rq.eval(b)
    if v == 0:
        v = rq.eval(b + 1)
    return 0 if v == 0 else (1 if v > 0 else -1)


def _rq_abs(rq: Rq) -> Rq:
    """An Rq agreeing with |rq| for all large k."""
    return rq if _rq_ev_sign(rq) >= 0 else rq.neg()


def _rq_ev_max(a: Rq, b: Rq) -> Rq:
    """An Rq agreeing with max(a, b) for all large k (a, b eventually
    comparable since both are rational functions)."""
    return a if _rq_ev_sign(a.sub(b)) >= 0 else b


def _pred_ev(absval: Rq, c: EPS, strict: bool) -> Tuple[bool, int]:
    """Eventual truth and stabilisation bound of ``absval(k) >= c``
    (``> c`` when strict; ``c=None`` means "strictly positive")."""
    if c is None:
        return _rq_ev_sign(absval) > 0, absval.bound() + 2
    e = absval.sub(Rq.const(c))
    s = _rq_ev_sign(e)
    ok = s > 0 or (s == 0 and not strict)
    return ok, e.bound() + 2


# ---------------------------------------------------------------------------
# Eventual value profiles over tail windows.
#
# A Top sees the windows W_N = {Top} + copies >= N.  Only value behaviour
# occurring in infinitely many copies (or approached by copy limits)
# survives every window; the profile records the extreme such values with
# two flags per endpoint: att -- values at-or-beyond the endpoint occur
# infinitely often; strict -- values strictly beyond it do.


class Ev:
    __slots__ = (
        "some",
        "unb_up",
        "unb_down",
        "hi",
        "hi_att",
        "hi_str",
        "lo",
        "lo_att",
        "lo_str",
    )

    def __init__(self):
        self.some = False
        self.unb_up = self.unb_down = False
        self.hi = self.lo = None
        self.hi_att = self.hi_str = False
        self.lo_att = self.lo_str = False

    def _offer_hi(self, v, att, strict):
        if self.unb_up:
            return
        if self.hi is None or v > self.hi:
            self.hi, self.hi_att, self.hi_str = v, att, strict
        elif v == self.hi:
            self.hi_att = self.hi_att or att
            self.hi_str = self.hi_str or strict

    def _offer_lo(self, v, att, strict):
        if self.unb_down:
            return
        if self.lo is None or v < self.lo:
            self.lo, self.lo_att, self.lo_str = v, att, strict
        elif v == self.lo:
            self.lo_att = self.lo_att or att
            self.lo_str = self.lo_str or strict

    def add_unb(self, up: bool):
        self.some = True
        if up:
            self.unb_up, self.hi = True, None
        else:
            self.unb_down, self.lo = True, None

    def add_point(self, v: Fraction):
        self.some = True
        self._offer_hi(v, True, False)
        self._offer_lo(v, True, False)

    def add_limit(self, lim: Fraction, direction: int):
        """Values approaching ``lim`` infinitely often; direction > 0
        means from above (values > lim), < 0 from below, 0 constant."""
        if direction == 0:
            self.add_point(lim)
            return
        self.some = True
        if direction > 0:
            self._offer_hi(lim, True, True)
            self._offer_lo(lim, False, False)
        else:
            self._offer_hi(lim, False, False)
            self._offer_lo(lim, True, True)

    def add_slot(self, v: RatVal, start: int):
        """Values v(k) over infinitely many copy indices k >= start."""
        lim = v.limit()
        if lim is None:
            self.add_unb(v.diverges_up())
            return
        if v.is_const:
            self.add_point(lim)
            return
        b = max(start, _crit_bound(v)) + 2
        d = v(b) - lim
        if d == 0:
            d = v(b + 3) - lim
        if d == 0:
            self.add_point(lim)
        else:
            self.add_limit(lim, 1 if d > 0 else -1)

    def merge_vrange(self, vr: VRange):
        """Body value range repeated in infinitely many copies."""
        if vr.empty:
            return
        self.some = True
        if vr.unbounded_up:
            self.add_unb(True)
        elif vr.hi is not None:
            self._offer_hi(vr.hi, vr.hi_att, False)
        if vr.unbounded_down:
            self.add_unb(False)
        elif vr.lo is not None:
            self._offer_lo(vr.lo, vr.lo_att, False)

    # -- queries ----------------------------------------------------------

    def spread_geq(self, eps: EPS) -> bool:
        if not self.some:
            return False
        if self.unb_up or self.unb_down:
            return True
        if eps is None:
            return self.hi > self.lo or self.hi_str or self.lo_str
        d = self.hi - self.lo
        return d > eps or (d == eps and self.hi_att and self.lo_att)

    def witness_geq(self, c: Fraction, eps: EPS) -> bool:
        if not self.some:
            return False
        if self.unb_up or self.unb_down:
            return True
        if eps is None:
            return (
                self.hi > c
                or self.lo < c
                or (self.hi == c and self.hi_str)
                or (self.lo == c and self.lo_str)
            )
        if self.hi is not None and (
            self.hi > c + eps or (self.hi == c + eps and self.hi_att)
        ):
            return True
        return self.lo is not None and (
            self.lo < c - eps or (self.lo == c - eps and self.lo_att)
        )

    def exceeds_abs(self, m: Fraction) -> bool:
        if not self.some:
            return False
        if self.unb_up or self.unb_down:
            return True
        if self.hi is not None and (self.hi > m or (self.hi == m and self.hi_str)):
            return True
        return self.lo is not None and (
            self.lo < -m or (self.lo == -m and self.lo_str)
        )

    def unbounded(self) -> bool:
        return self.unb_up or self.unb_down


def _lab_period(lt) -> int:
    return len(lt.labs) if isinstance(lt, LCycle) else 1


def _mark_period(mt) -> int:
    return len(mt.marks) if isinstance(mt, TCycle) else 1


def _copy_nonempty(space: OmegaSum, mtail, k: int) -> bool:
    return not is_empty_mark(copy_space(space, k), tail_copy_mark(space, mtail, k))


def _trunc_tops(space: SpaceDesc, lab: Lab, mark: Mark, out: VRange) -> None:
    """Values of the limit function at limit points having marked content
    in unboundedly many subordinate copies -- exactly the extra values a
    truncation sequence produces arbitrarily late."""
    if isinstance(space, Singleton):
        return
    if isinstance(space, FiniteSum):
        for p, l, m in zip(space.parts, lab.parts, mark.parts):
            _trunc_tops(p, l, m, out)
        return
    mark = normalize_mark(space, mark)
    if tail_io_nonempty(space, mark.tail):
        out.add_value(lab.top(0), True)
    for k, m in enumerate(mark.head):
        _trunc_tops(copy_space(space, k), _lab_copy(space, lab, k), m, out)
    mt, lt = mark.tail, lab.tail
    if isinstance(mt, TEmpty):
        return
    if isinstance(space.tail, ConstantTail):
        p = math.lcm(_lab_period(lt), _mark_period(mt)) if isinstance(
            lt, (LUniform, LCycle)
        ) else _mark_period(mt)
        w = len(mark.head)
        for r in range(p):
            k = w + r
            _trunc_tops(
                space.tail.body,
                copy_lab(space, lt, k),
                tail_copy_mark(space, mt, k),
                out,
            )
        return
    # canonical tails: member top values are already part of the family
    # value profile (oscillation) or the indexed slot (constant copies);
    # nothing extra to record.


def _tail_ev(
    space: OmegaSum, ltail, mtail, start: int, trunc: bool = False
) -> Ev:
    ev = Ev()
    if isinstance(mtail, TEmpty):
        return ev
    if isinstance(space.tail, ConstantTail):
        body = space.tail.body
        if (
            isinstance(ltail, LFamily)
            and ltail.family == "top_indicator"
            and not ltail.scale.is_const
        ):
            raise UnsupportedDescriptor(
                "index-scaled indicator family over a constant tail"
            )
        if isinstance(ltail, (LUniform, LCycle)) or isinstance(ltail, LFamily):
            p = math.lcm(_lab_period(ltail), _mark_period(mtail))
            for r in range(p):
                k = start + r
                l = copy_lab(space, ltail, k)
                m = tail_copy_mark(space, mtail, k)
                ev.merge_vrange(value_range(body, l, m))
                if trunc:
                    vr = VRange()
                    _trunc_tops(body, l, m, vr)
                    ev.merge_vrange(vr)
            return ev
        if isinstance(ltail, (LConstCopy, LIndexed)):
            if trunc and isinstance(ltail, LIndexed):
                raise UnsupportedDescriptor(
                    "truncation profile over an index-dependent tail"
                )
            p = _mark_period(mtail)
            for r in range(p):
                if not _copy_nonempty(space, mtail, start + r):
                    continue
                for v in _tail_slot_vals(space, ltail, mtail, start + r):
                    ev.add_slot(v, start)
            return ev
        raise UnsupportedDescriptor("value profile over tail %r" % (ltail,))
    # canonical tail
    if not tail_io_nonempty(space, mtail):
        return ev
    tops_only = isinstance(mtail, TTops) or (
        isinstance(mtail, TStage) and isinstance(mtail.base, TTops)
    )
    if isinstance(ltail, LFamily):
        if ltail.family == "oscillation":
            ev.add_point(Fraction(0))
            ev.add_slot(ltail.scale, start)
        elif ltail.family == "top_indicator":
            ev.add_slot(ltail.scale, start)
            if not tops_only:
                ev.add_point(Fraction(0))
        else:
            raise UnsupportedDescriptor("family %r" % (ltail.family,))
        return ev
    if isinstance(ltail, LConstCopy):
        ev.add_slot(ltail.value, start)
        return ev
    raise UnsupportedDescriptor(
        "value profile over canonical tail %r" % (ltail,)
    )


# ---------------------------------------------------------------------------
# Weighted gap analysis: candidates are (h-value, g-value) pairs occurring
# at common points of infinitely many copies, as rational functions of the
# copy index.


def _wgap_ok(hv: Rq, gv: Rq, h0: Fraction, g0: Fraction, eps: EPS, att: bool) -> bool:
    d = _rq_abs(hv.sub(Rq.const(h0)))
    w = _rq_ev_max(_rq_abs(gv), Rq.const(abs(g0)))
    prod = d.mul(w)
    if eps is None:
        s = _rq_ev_sign(prod)
        return s > 0
    s = _rq_ev_sign(prod.sub(Rq.const(eps)))
    return s > 0 or (s == 0 and att)


def _aligned_slot_vals(space: OmegaSum, ltail, mtail, k: int):
    """Values of a tail labeling at the marked points of copy k, listed in
    mark-traversal order (so two labelings align point by point)."""
    from .func import _marked_slots, const_lab

    body = space.tail.body
    if isinstance(ltail, LConstCopy):
        template = const_lab(body, ltail.value)
    elif isinstance(ltail, LIndexed):
        template = ltail.lab
    else:
        template = copy_lab(space, ltail, k)
    return _marked_slots(body, template, tail_copy_mark(space, mtail, k))


def _weighted_candidates(
    kind: WeightedClosure, space: OmegaSum, mtail, start: int
):
    """(h-value, g-value, attained) triples over the marked tail."""
    ht, gt = kind.h.tail, kind.g.tail
    out = []
    if isinstance(mtail, TEmpty):
        return out
    if isinstance(space.tail, ConstantTail):
        # enumerate marked points of one period of copies; the two slot
        # lists come from the same traversal, so entries pair up at the
        # same point, giving the exact (h, g) value pairs on the tail
        p = math.lcm(_lab_period(ht), _lab_period(gt), _mark_period(mtail))
        for r in range(p):
            k = start + r
            if not _copy_nonempty(space, mtail, k):
                continue
            hs = _aligned_slot_vals(space, ht, mtail, k)
            gs = _aligned_slot_vals(space, gt, mtail, k)
            for hv, gv in zip(hs, gs):
                out.append((Rq.from_val(hv), Rq.from_val(gv), True))
        return out
    # canonical tails
    zero = Rq.const(0)
    if isinstance(ht, LFamily) and ht.family == "oscillation":
        sh = Rq.from_val(ht.scale)
        if isinstance(gt, LFamily) and gt.family == "oscillation":
            sg = Rq.from_val(gt.scale)
            if ht.flip == gt.flip:
                return [(sh, sg, True), (zero, zero, True)]
            return [(sh, zero, True), (zero, sg, True)]
        if isinstance(gt, LConstCopy):
            gq = Rq.from_val(gt.value)
            return [(sh, gq, True), (zero, gq, True)]
        raise UnsupportedDescriptor("weighted gap companion %r" % (gt,))
    if isinstance(ht, LFamily) and ht.family == "top_indicator":
        sh = Rq.from_val(ht.scale)
        if isinstance(gt, LConstCopy):
            gq = Rq.from_val(gt.value)
            return [(sh, gq, True), (zero, gq, True)]
        if isinstance(gt, LFamily) and gt.family == "oscillation":
            sg = Rq.from_val(gt.scale)
            return [(sh, sg, True), (zero, sg, True)]
        raise UnsupportedDescriptor("weighted gap companion %r" % (gt,))
    if isinstance(ht, LConstCopy):
        hq = Rq.from_val(ht.value)
        if isinstance(gt, LConstCopy):
            return [(hq, Rq.from_val(gt.value), True)]
        if isinstance(gt, LFamily):
            return [(hq, Rq.from_val(gt.scale), True), (hq, zero, True)]
        raise UnsupportedDescriptor("weighted gap companion %r" % (gt,))
    raise UnsupportedDescriptor("weighted gap over tail %r" % (ht,))


# ---------------------------------------------------------------------------
# One application of a derivation.


def _tail_alive(space: OmegaSum, tail) -> bool:
    return tail_io_nonempty(space, tail)


def _spill_bound(kind: Kind, space: OmegaSum, start: int) -> int:
    """Copy index past which every decision predicate of the localized
    derivation is sign-stable."""
    vals = []
    for lab in _kind_labs(kind):
        vals.extend(_collect_vals(lab))
    params = [Fraction(0), Fraction(1)]
    if isinstance(kind, (OscPair, OscClosure, WeightedClosure, SeqOsc)):
        if kind.eps is not None:
            params.append(kind.eps)
    if isinstance(kind, Unbounded):
        params.append(kind.bound)
    rqs = [Rq.from_val(v) for v in vals] + [Rq.const(c) for c in params]
    b = start + 2
    for i, a in enumerate(rqs):
        for c in rqs[i:]:
            b = max(b, a.sub(c).bound(), a.mul(c).bound())
    return b + 2


def _collect_vals(lab: Lab) -> list:
    if isinstance(lab, LLeaf):
        return [lab.value]
    if isinstance(lab, LSum):
        out = []
        for p in lab.parts:
            out.extend(_collect_vals(p))
        return out
    out = [lab.top]
    for p in lab.head:
        out.extend(_collect_vals(p))
    t = lab.tail
    if isinstance(t, LUniform):
        out.extend(_collect_vals(t.lab))
    elif isinstance(t, LCycle):
        for l in t.labs:
            out.extend(_collect_vals(l))
    elif isinstance(t, (LIndexed,)):
        out.extend(_collect_vals(t.lab))
    elif isinstance(t, LConstCopy):
        out.append(t.value)
    elif isinstance(t, LFamily):
        out.append(t.scale)
    return out


def _kind_main_tail(kind: Kind):
    """Tail pattern of the labeling whose oscillation drives the kind."""
    if isinstance(kind, OscPair):
        return kind.f.tail
    if isinstance(kind, (OscClosure, Unbounded, OmegaDeriv)):
        return kind.h.tail
    if isinstance(kind, WeightedClosure):
        return kind.h.tail
    if isinstance(kind, Divergence):
        return kind.g.tail
    if isinstance(kind, SeqOsc):
        return kind.seq.limit.tail
    raise EngineError("no driving labeling")


def _canon_pred(kind: Kind, space: OmegaSum, mtail) -> Tuple[bool, int, str]:
    """(eventually-alive, stability bound, survivor pattern) for copies of
    a canonical tail under one application of the kind."""
    lt = _kind_main_tail(kind)
    if isinstance(kind, Divergence):
        return False, 0, "dead"
    if isinstance(lt, LConstCopy):
        if isinstance(kind, Unbounded):
            ok, b = _pred_ev(_rq_abs(Rq.from_val(lt.value)), kind.bound, True)
            return ok, b, "cb"
        return False, 0, "dead"
    if not isinstance(lt, LFamily):
        raise UnsupportedDescriptor("canonical tail labeling %r" % (lt,))
    s = _rq_abs(Rq.from_val(lt.scale))
    if isinstance(kind, Unbounded):
        if lt.family == "top_indicator":
            return False, 0, "dead"
        ok, b = _pred_ev(s, kind.bound, True)
        return ok, b, "cb"
    if isinstance(kind, WeightedClosure):
        gt = kind.g.tail
        if isinstance(gt, LFamily):
            w = _rq_abs(Rq.from_val(gt.scale))
        elif isinstance(gt, LConstCopy):
            w = _rq_abs(Rq.from_val(gt.value))
        else:
            raise UnsupportedDescriptor("weighted companion %r" % (gt,))
        ok, b = _pred_ev(s.mul(w), kind.eps, False)
        return ok, b, ("tops" if lt.family == "top_indicator" else "cb")
    # OscPair / OscClosure / SeqOsc
    eps = kind.eps
    ok, b = _pred_ev(s, eps, False)
    if lt.family == "top_indicator" and isinstance(kind, (OscPair, OscClosure)):
        return ok, b, "tops"
    return ok, b, "cb"


def _canon_step_tail(kind: Kind, space: OmegaSum, mark: MOmega, w: int):
    mtail = mark.tail
    tops_only = isinstance(mtail, TTops) or (
        isinstance(mtail, TStage) and isinstance(mtail.base, TTops)
    )
    if tops_only:
        return (), TEmpty()
    if isinstance(mtail, TStage):
        sigma0, base = mtail.sigma, mtail.base
    else:
        sigma0, base = ZERO, mtail
    pe, bound, pattern = _canon_pred(kind, space, mtail)
    k2 = max(w, bound)
    if pe and pattern == "tops":
        # survivors are copy maxima; make sure the pattern starts where
        # the staged copies still dominate the stage offset
        kk, guard = k2, 0
        while fundamental_seq(space.tail.limit, kk) <= sigma0:
            kk += 1
            guard += 1
            if guard > MAX_STEPS:
                raise EngineError("stage offset never dominated")
        k2 = kk
    spill = []
    for k in range(w, k2):
        sub = copy_space(space, k)
        spill.append(
            _step_node(
                _kind_copy(kind, space, k),
                sub,
                normalize_mark(sub, tail_copy_mark(space, mtail, k)),
            )
        )
    if not pe or pattern == "dead":
        return tuple(spill), TEmpty()
    if pattern == "tops":
        return tuple(spill), TTops()
    return tuple(spill), TStage(succ(sigma0), base)


def _step_tail(kind: Kind, space: OmegaSum, mark: MOmega, w: int):
    mtail = mark.tail
    if isinstance(mtail, TEmpty):
        return (), TEmpty()
    if isinstance(space.tail, CanonicalTail):
        return _canon_step_tail(kind, space, mark, w)
    # constant bodies
    p = _mark_period(mtail)
    indexed = False
    for lab in _kind_labs(kind):
        t = lab.tail
        if isinstance(t, (LUniform, LCycle)):
            p = math.lcm(p, _lab_period(t))
        elif isinstance(t, LConstCopy):
            if not t.value.is_const:
                indexed = True
        elif isinstance(t, (LIndexed, LFamily)):
            indexed = True
    k2 = _spill_bound(kind, space, w) if indexed else w
    spill = []
    for k in range(w, k2):
        sub = copy_space(space, k)
        spill.append(
            _step_node(
                _kind_copy(kind, space, k),
                sub,
                normalize_mark(sub, tail_copy_mark(space, mtail, k)),
            )
        )
    entries = [None] * p
    for j in range(p):
        k = k2 + j
        sub = copy_space(space, k)
        entries[k % p] = _step_node(
            _kind_copy(kind, space, k),
            sub,
            normalize_mark(sub, tail_copy_mark(space, mtail, k)),
        )
    tail = TUniform(entries[0]) if p == 1 else TCycle(tuple(entries))
    return tuple(spill), tail


def _top_cond(kind: Kind, space: OmegaSum, mark: MOmega, w: int, newtail) -> bool:
    if not mark.top:
        return False
    if isinstance(kind, OscPair):
        ev = _tail_ev(space, kind.f.tail, mark.tail, w)
        ev.add_point(kind.f.top(0))
        return ev.spread_geq(kind.eps)
    if isinstance(kind, OscClosure):
        ev = _tail_ev(space, kind.h.tail, mark.tail, w)
        if ev.witness_geq(kind.h.top(0), kind.eps):
            return True
        return _tail_alive(space, newtail)
    if isinstance(kind, SeqOsc):
        lab = kind.seq.limit
        ev = _tail_ev(space, lab.tail, mark.tail, w, trunc=True)
        if ev.witness_geq(lab.top(0), kind.eps):
            return True
        return _tail_alive(space, newtail)
    if isinstance(kind, Unbounded):
        ev = _tail_ev(space, kind.h.tail, mark.tail, w)
        return ev.exceeds_abs(kind.bound)
    if isinstance(kind, Divergence):
        ev = _tail_ev(space, kind.g.tail, mark.tail, w)
        return ev.unbounded()
    if isinstance(kind, WeightedClosure):
        h0, g0 = kind.h.top(0), kind.g.top(0)
        for hv, gv, att in _weighted_candidates(kind, space, mark.tail, w):
            if _wgap_ok(hv, gv, h0, g0, kind.eps, att):
                return True
        return _tail_alive(space, newtail)
    raise EngineError("unhandled kind %r" % (kind,))


_STEP_MEMO: dict = {}
_STAGE_MEMO: dict = {}


def _step_node(kind: Kind, space: SpaceDesc, mark: Mark) -> Mark:
    mark = normalize_mark(space, mark)
    key = (kind, space, mark)
    if key in _STEP_MEMO:
        return _STEP_MEMO[key]
    _STEP_MEMO[key] = out = _step_node_raw(kind, space, mark)
    return out


def _step_node_raw(kind: Kind, space: SpaceDesc, mark: Mark) -> Mark:
    if isinstance(kind, CbDeriv):
        return cb_step(space, mark)
    if isinstance(kind, SeqOsc) and isinstance(kind.seq, SeqEventually):
        return empty_mark(space)
    if isinstance(space, Singleton):
        return MLeaf(False)
    if isinstance(space, FiniteSum):
        return MSum(
            tuple(
                _step_node(_kind_part(kind, i), p, m)
                for i, (p, m) in enumerate(zip(space.parts, mark.parts))
            )
        )
    if isinstance(kind, OmegaDeriv):
        return _omega_step(kind, space, mark)
    w = _width(kind, space, mark)
    heads = tuple(
        _step_node(_kind_copy(kind, space, k), copy_space(space, k), _mark_copy(space, mark, k))
        for k in range(w)
    )
    spill, newtail = _step_tail(kind, space, mark, w)
    top = _top_cond(kind, space, mark, w, newtail)
    return normalize_mark(space, MOmega(top, heads + spill, newtail))


def step(kind: Kind, P: ClosedSet) -> ClosedSet:
    """One application of the derivation to a closed set."""
    if not validate_closed(P.space, P.mark):
        raise EngineError("input mark is not closed")
    return ClosedSet(P.space, _step_node(kind, P.space, P.mark))


def brute_force(kind: Kind, P: ClosedSet, steps: int):
    """Literal repeated application of ``step`` (the finite-stage oracle)."""
    out = [ClosedSet(P.space, normalize_mark(P.space, P.mark))]
    for _ in range(steps):
        out.append(ClosedSet(P.space, _step_node(kind, P.space, out[-1].mark)))
    return out


# ---------------------------------------------------------------------------
# The transfinite collapse operator.


def _omega_lambda(kind: OmegaDeriv) -> Ordinal:
    return omega_pow(omega_pow(kind.xi))


def _zero_rank(h: Lab, space: SpaceDesc, mark: Mark) -> Ordinal:
    """Rank of the positive-oscillation chain of h on the mark."""
    return _node_rank(OscClosure(h, None), space, mark)


def _tail_u_limsup(kind: OmegaDeriv, space: OmegaSum, mark: MOmega, w: int) -> Ordinal:
    """Largest ordinal u with infinitely many copies whose
    positive-oscillation rank exceeds every stage below u."""
    mtail = mark.tail
    if isinstance(mtail, TEmpty):
        return ZERO
    if not tail_io_nonempty(space, mtail):
        return ZERO
    if isinstance(space.tail, CanonicalTail):
        tops_only = isinstance(mtail, TTops) or (
            isinstance(mtail, TStage) and isinstance(mtail.base, TTops)
        )
        sigma0 = mtail.sigma if isinstance(mtail, TStage) else ZERO
        lt = _kind_main_tail(kind)
        if tops_only:
            return ONE
        if isinstance(lt, LFamily) and lt.family == "oscillation":
            if _rq_ev_sign(_rq_abs(Rq.from_val(lt.scale))) > 0:
                lam = space.tail.limit
                return left_subtract(sigma0, lam) if sigma0 <= lam else ZERO
            return ONE
        if isinstance(lt, LFamily) and lt.family == "top_indicator":
            return from_int(2) if _rq_ev_sign(
                _rq_abs(Rq.from_val(lt.scale))
            ) > 0 else ONE
        if isinstance(lt, LConstCopy):
            return ONE
        raise UnsupportedDescriptor("collapse over tail %r" % (lt,))
    # constant bodies: the per-residue rank decides
    p = _mark_period(mtail)
    best = ZERO
    for lab in (kind.h,):
        for r in range(p):
            k = w + r
            if not _copy_nonempty(space, mtail, k):
                continue
            sub = copy_space(space, k)
            u = _zero_rank(
                _lab_copy(space, lab, k),
                sub,
                normalize_mark(sub, tail_copy_mark(space, mtail, k)),
            )
            best = max(best, u)
    return best


def _omega_step(kind: OmegaDeriv, space: OmegaSum, mark: MOmega) -> Mark:
    lam_op = _omega_lambda(kind)
    w = _width(kind, space, mark)
    heads = tuple(
        _step_node(_kind_copy(kind, space, k), copy_space(space, k), _mark_copy(space, mark, k))
        for k in range(w)
    )
    mtail = mark.tail
    spill: tuple = ()
    if isinstance(mtail, TEmpty):
        newtail = TEmpty()
    elif isinstance(space.tail, CanonicalTail):
        tops_only = isinstance(mtail, TTops) or (
            isinstance(mtail, TStage) and isinstance(mtail.base, TTops)
        )
        sigma0 = mtail.sigma if isinstance(mtail, TStage) else ZERO
        lt = _kind_main_tail(kind)
        if tops_only or not isinstance(lt, LFamily) or lt.family != "oscillation":
            newtail = TEmpty()
        elif _rq_ev_sign(_rq_abs(Rq.from_val(lt.scale))) > 0:
            newtail = TStage(add(sigma0, lam_op), TFull())
        else:
            newtail = TEmpty()
    else:
        p = _mark_period(mtail)
        t = kind.h.tail
        if isinstance(t, (LUniform, LCycle)):
            p = math.lcm(p, _lab_period(t))
            indexed = False
        elif isinstance(t, LConstCopy) and t.value.is_const:
            indexed = False
        else:
            indexed = True
        k2 = _spill_bound(kind, space, w) if indexed else w
        for k in range(w, k2):
            sub = copy_space(space, k)
            spill = spill + (
                _step_node(
                    _kind_copy(kind, space, k),
                    sub,
                    normalize_mark(sub, tail_copy_mark(space, mtail, k)),
                ),
            )
        entries = [None] * p
        for j in range(p):
            k = k2 + j
            sub = copy_space(space, k)
            entries[k % p] = _step_node(
                _kind_copy(kind, space, k),
                sub,
                normalize_mark(sub, tail_copy_mark(space, mtail, k)),
            )
        newtail = TUniform(entries[0]) if p == 1 else TCycle(tuple(entries))
    top = mark.top and _tail_u_limsup(kind, space, mark, w) >= lam_op
    return normalize_mark(space, MOmega(top, heads + spill, newtail))


# ---------------------------------------------------------------------------
# Ordinal stage arithmetic helpers.


def _odivmod(a: Ordinal, mu: Ordinal) -> Tuple[Ordinal, Ordinal]:
    """a = omega^mu * q + r with r < omega^mu (CNF division)."""
    qterms = []
    rterms = []
    for e, c in a.terms:
        if e >= mu:
            qterms.append((left_subtract(mu, e), c))
        else:
            rterms.append((e, c))
    q = Ordinal(tuple(qterms))
    r = Ordinal(tuple(rterms))
    return q, r


def _least_stage(sigma0: Ordinal, lam_op: Ordinal, target: Ordinal) -> Ordinal:
    """Least sigma with sigma0 + lam_op * sigma >= target; lam_op is a
    power of omega."""
    if sigma0 >= target:
        return ZERO
    mu = lam_op.terms[0][0]
    q, r = _odivmod(target, mu)
    cand = q if (r.is_zero) else succ(q)
    guard = 0
    while cand > ZERO:
        prev = pred(cand) if cand.is_successor else None
        if prev is None:
            break
        if add(sigma0, mul(lam_op, prev)) >= target:
            cand = prev
            guard += 1
            if guard > 64:
                raise EngineError("stage division did not settle")
        else:
            break
    while add(sigma0, mul(lam_op, cand)) < target:
        cand = succ(cand)
    return cand


# ---------------------------------------------------------------------------
# Rank and transfinite iteration.

_RANK_MEMO: dict = {}
_PLAN_MEMO: dict = {}


def _headless(mark: MOmega, space: OmegaSum) -> MOmega:
    return MOmega(
        mark.top,
        tuple(empty_mark(copy_space(space, k)) for k in range(len(space.prefix))),
        mark.tail,
    )


@dataclass
class _Plan:
    mode: str  # "empty" | "canon" | "tops" | "const" | "const_tf" | "fallback" | "omega"
    w: int = 0
    k2: int = 0
    sigma0: Ordinal = ZERO
    base: object = None
    d: Ordinal = ZERO  # limit support of the surviving tail pattern
    tail_sup: Ordinal = ZERO
    s_top: Ordinal = ZERO
    period: int = 1
    lam_op: Ordinal = ZERO


def _probe_cond(kind: Kind, space: OmegaSum, tailmark, w: int) -> bool:
    """Direct Top condition over a bare tail pattern."""
    probe = MOmega(True, tuple(empty_mark(copy_space(space, k)) for k in range(w)), tailmark)
    if isinstance(kind, OmegaDeriv):
        return _tail_u_limsup(kind, space, probe, w) >= _omega_lambda(kind)
    # the closure routes are handled by the callers; TEmpty suppresses them
    return _top_cond(kind, space, probe, w, TEmpty())


def _closure_kind(kind: Kind) -> bool:
    return isinstance(kind, (OscClosure, WeightedClosure, SeqOsc))


def _canon_s_top(kind: Kind, space: OmegaSum, mark: MOmega, plan: _Plan) -> Ordinal:
    """Death stage of the Top over an eventually-alive canonical chain."""
    if not mark.top:
        return ZERO
    d = plan.d
    # finite probes guard against early profile changes
    direct = True
    for j in range(4):
        sig = add(plan.sigma0, from_int(j))
        t = TStage(sig, plan.base) if not sig.is_zero else plan.base
        if not _probe_cond(kind, space, t, plan.w):
            direct = False
            if not _closure_kind(kind):
                if j == 0:
                    return ONE
                # the direct condition is monotone along the chain
                return from_int(j + 1)
            break
    if direct:
        return succ(d)
    if _closure_kind(kind):
        # survival rides on the next stage being alive: die at pred(d)+1
        return d if d.is_successor else succ(d)
    return ONE


def _tail_plan(kind: Kind, space: OmegaSum, mark: MOmega) -> _Plan:
    key = (kind, space, mark)
    if key in _PLAN_MEMO:
        return _PLAN_MEMO[key]
    plan = _build_plan(kind, space, mark)
    _PLAN_MEMO[key] = plan
    return plan


def _build_plan(kind: Kind, space: OmegaSum, mark: MOmega) -> _Plan:
    w = _width(kind, space, mark)
    mtail = mark.tail
    if isinstance(mtail, TEmpty):
        return _Plan(mode="empty", w=w, s_top=ONE if mark.top else ZERO)
    if isinstance(space.tail, CanonicalTail):
        if isinstance(kind, OmegaDeriv):
            lt = _kind_main_tail(kind)
            tops_only = isinstance(mtail, TTops) or (
                isinstance(mtail, TStage) and isinstance(mtail.base, TTops)
            )
            if (
                not tops_only
                and isinstance(lt, LFamily)
                and lt.family == "oscillation"
                and _rq_ev_sign(_rq_abs(Rq.from_val(lt.scale))) > 0
            ):
                sigma0 = mtail.sigma if isinstance(mtail, TStage) else ZERO
                lam_op = _omega_lambda(kind)
                lam = space.tail.limit
                d = _least_stage(sigma0, lam_op, lam)
                plan = _Plan(
                    mode="omega",
                    w=w,
                    k2=w,
                    sigma0=sigma0,
                    base=TFull(),
                    d=d,
                    tail_sup=d,
                    lam_op=lam_op,
                )
                plan.s_top = _omega_s_top(kind, space, mark, plan)
                return plan
            return _Plan(mode="fallback", w=w)
        tops_only = isinstance(mtail, TTops) or (
            isinstance(mtail, TStage) and isinstance(mtail.base, TTops)
        )
        if tops_only:
            return _Plan(mode="fallback", w=w)
        pe, bound, pattern = _canon_pred(kind, space, mtail)
        if pe and pattern == "cb":
            sigma0 = mtail.sigma if isinstance(mtail, TStage) else ZERO
            base = mtail.base if isinstance(mtail, TStage) else mtail
            sup, d = tail_rank_profile(space, mtail)
            plan = _Plan(
                mode="canon",
                w=w,
                k2=max(w, bound),
                sigma0=sigma0,
                base=base,
                d=d,
                tail_sup=d,
            )
            plan.s_top = _canon_s_top(kind, space, mark, plan)
            return plan
        return _Plan(mode="fallback", w=w)
    # constant bodies
    if isinstance(kind, OmegaDeriv):
        return _Plan(mode="fallback", w=w)
    p = _mark_period(mtail)
    indexed = False
    for lab in _kind_labs(kind):
        t = lab.tail
        if isinstance(t, (LUniform, LCycle)):
            p = math.lcm(p, _lab_period(t))
        elif isinstance(t, LConstCopy):
            indexed = indexed or not t.value.is_const
        else:
            indexed = True
    k2 = _spill_bound(kind, space, w) if indexed else w
    ranks = []
    for j in range(p):
        k = k2 + j
        sub = copy_space(space, k)
        ranks.append(
            _node_rank(
                _kind_copy(kind, space, k),
                sub,
                normalize_mark(sub, tail_copy_mark(space, mtail, k)),
            )
        )
    d = max(ranks) if ranks else ZERO
    spill_sup = ZERO
    for k in range(w, k2):
        sub = copy_space(space, k)
        spill_sup = max(
            spill_sup,
            _node_rank(
                _kind_copy(kind, space, k),
                sub,
                normalize_mark(sub, tail_copy_mark(space, mtail, k)),
            ),
        )
    tail_sup = max(d, spill_sup)
    if d < OMEGA and spill_sup < OMEGA:
        plan = _Plan(mode="const", w=w, k2=k2, d=d, tail_sup=tail_sup, period=p)
        plan.s_top = _const_s_top(kind, space, mark, plan)
        return plan
    plan = _Plan(mode="const_tf", w=w, k2=k2, d=d, tail_sup=tail_sup, period=p)
    plan.s_top = _const_tf_s_top(kind, space, mark, plan, ranks)
    return plan


def _omega_s_top(kind: OmegaDeriv, space: OmegaSum, mark: MOmega, plan: _Plan) -> Ordinal:
    if not mark.top:
        return ZERO
    lam = space.tail.limit
    # first sigma with sigma0 + lam_op*(sigma+1) > lam
    q = _least_stage(plan.sigma0, plan.lam_op, succ(lam))
    if q.is_zero:
        return ONE
    sig_f = pred(q) if q.is_successor else q
    return succ(sig_f)


def _const_s_top(kind: Kind, space: OmegaSum, mark: MOmega, plan: _Plan) -> Ordinal:
    """Literal simulation over a finite-rank constant tail."""
    if not mark.top:
        return ZERO
    m = _headless(mark, space)
    count = 0
    while m.top:
        m = _step_node(kind, space, m)
        if isinstance(m, MOmega) and not m.top:
            break
        count += 1
        if count > MAX_STEPS:
            raise EngineError("top survival did not settle")
    return from_int(count + 1)


def _const_tf_s_top(kind, space, mark, plan: _Plan, ranks) -> Ordinal:
    """Top death stage over a constant tail with transfinite copy ranks:
    finite probes, then phase analysis at the copies' final stages."""
    if not mark.top:
        return ZERO
    if isinstance(kind, (WeightedClosure, Divergence)):
        raise UnsupportedDescriptor(
            "transfinite constant tails under %r" % (type(kind).__name__,)
        )
    d = plan.d
    # finite probes on per-copy staged marks
    for j in range(5):
        if not _const_tf_cond(kind, space, mark, plan, ranks, from_int(j)):
            return from_int(j + 1)
    # phase boundaries: the final (top-only) stage of each residue
    bounds = set()
    for rr in ranks:
        if rr > ZERO:
            if not rr.is_successor:
                raise UnsupportedDescriptor(
                    "limit-rank copies in a constant tail"
                )
            bounds.add(pred(rr))
    for b in sorted(bounds):
        if b < from_int(5):
            continue
        if not _const_tf_cond(kind, space, mark, plan, ranks, b):
            return succ(b)
    return succ(d)


def _const_tf_cond(kind, space, mark, plan: _Plan, ranks, sigma: Ordinal) -> bool:
    """Direct Top condition at stage sigma over a constant tail whose
    residues evolve independently."""
    mtail = mark.tail
    body = space.tail.body
    ev = Ev()
    alive_after = False
    for j in range(plan.period):
        k = plan.k2 + j
        rr = ranks[j]
        if sigma >= rr:
            continue
        sub = copy_space(space, k)
        kk = _kind_copy(kind, space, k)
        m0 = normalize_mark(sub, tail_copy_mark(space, mtail, k))
        mstage = _node_stage(kk, sub, m0, sigma)
        if is_empty_mark(sub, mstage):
            continue
        if succ(sigma) < rr:
            alive_after = True
        labk = _cond_lab(kind, kk)
        vr = value_range(sub, labk, mstage)
        ev.merge_vrange(vr)
        if isinstance(kind, SeqOsc):
            vr2 = VRange()
            _trunc_tops(sub, labk, mstage, vr2)
            ev.merge_vrange(vr2)
    if isinstance(kind, OscPair):
        ev.add_point(kind.f.top(0))
        return ev.spread_geq(kind.eps)
    if isinstance(kind, OscClosure):
        return ev.witness_geq(kind.h.top(0), kind.eps) or alive_after
    if isinstance(kind, SeqOsc):
        return ev.witness_geq(kind.seq.limit.top(0), kind.eps) or alive_after
    if isinstance(kind, Unbounded):
        return ev.exceeds_abs(kind.bound)
    raise UnsupportedDescriptor("phase analysis for %r" % (type(kind).__name__,))


def _cond_lab(kind: Kind, kind_local: Kind) -> Lab:
    if isinstance(kind_local, OscPair):
        return kind_local.f
    if isinstance(kind_local, (OscClosure, Unbounded)):
        return kind_local.h
    if isinstance(kind_local, SeqOsc):
        return kind_local.seq.limit
    raise UnsupportedDescriptor("no driving labeling")


def _node_rank(kind: Kind, space: SpaceDesc, mark: Mark) -> Ordinal:
    mark = normalize_mark(space, mark)
    key = (kind, space, mark)
    if key in _RANK_MEMO:
        return _RANK_MEMO[key]
    _RANK_MEMO[key] = out = _node_rank_raw(kind, space, mark)
    return out


def _node_rank_raw(kind: Kind, space: SpaceDesc, mark: Mark) -> Ordinal:
    if isinstance(kind, CbDeriv):
        return cb_rank(space, mark)
    if is_empty_mark(space, mark):
        return ZERO
    if isinstance(kind, SeqOsc) and isinstance(kind.seq, SeqEventually):
        return ONE
    if isinstance(space, Singleton):
        return ONE
    if isinstance(space, FiniteSum):
        return max(
            _node_rank(_kind_part(kind, i), p, m)
            for i, (p, m) in enumerate(zip(space.parts, mark.parts))
        )
    plan = _tail_plan(kind, space, mark)
    cands = [plan.s_top if mark.top else ZERO]
    for k in range(plan.w):
        cands.append(
            _node_rank(_kind_copy(kind, space, k), copy_space(space, k), _mark_copy(space, mark, k))
        )
    if plan.mode == "empty":
        pass
    elif plan.mode in ("canon", "omega", "const", "const_tf"):
        cands.append(plan.tail_sup)
        for k in range(plan.w, plan.k2):
            sub = copy_space(space, k)
            cands.append(
                _node_rank(
                    _kind_copy(kind, space, k),
                    sub,
                    normalize_mark(sub, tail_copy_mark(space, mark.tail, k)),
                )
            )
        if plan.mode == "omega":
            # copy death inside the collapse chain
            pass
    else:  # fallback: peel one literal application off the bare tail
        hm = _headless(mark, space)
        stepped = _step_node(kind, space, hm)
        if marks_equal(space, stepped, hm):
            raise EngineError("derivation made no progress")
        cands.append(add(ONE, _node_rank(kind, space, stepped)))
    return max(cands)


def _node_stage(kind: Kind, space: SpaceDesc, mark: Mark, sigma: Ordinal) -> Mark:
    mark = normalize_mark(space, mark)
    key = (kind, space, mark, sigma)
    if key in _STAGE_MEMO:
        return _STAGE_MEMO[key]
    _STAGE_MEMO[key] = out = _node_stage_raw(kind, space, mark, sigma)
    return out


def _node_stage_raw(kind: Kind, space: SpaceDesc, mark: Mark, sigma: Ordinal) -> Mark:
    if sigma.is_zero:
        return mark
    if isinstance(kind, CbDeriv):
        return cb_stage(space, mark, sigma)
    if is_empty_mark(space, mark):
        return mark
    if isinstance(kind, SeqOsc) and isinstance(kind.seq, SeqEventually):
        return empty_mark(space)
    if isinstance(space, Singleton):
        return MLeaf(False)
    if isinstance(space, FiniteSum):
        return MSum(
            tuple(
                _node_stage(_kind_part(kind, i), p, m, sigma)
                for i, (p, m) in enumerate(zip(space.parts, mark.parts))
            )
        )
    if sigma >= _node_rank(kind, space, mark):
        return empty_mark(space)
    plan = _tail_plan(kind, space, mark)
    heads = [
        _node_stage(
            _kind_copy(kind, space, k), copy_space(space, k), _mark_copy(space, mark, k), sigma
        )
        for k in range(plan.w)
    ]
    top = mark.top and sigma < plan.s_top
    if plan.mode == "empty":
        return normalize_mark(space, MOmega(top, tuple(heads), TEmpty()))
    if plan.mode in ("canon", "omega"):
        for k in range(plan.w, plan.k2):
            sub = copy_space(space, k)
            heads.append(
                _node_stage(
                    _kind_copy(kind, space, k),
                    sub,
                    normalize_mark(sub, tail_copy_mark(space, mark.tail, k)),
                    sigma,
                )
            )
        off = mul(plan.lam_op, sigma) if plan.mode == "omega" else sigma
        newtail = TStage(add(plan.sigma0, off), plan.base)
        return normalize_mark(space, MOmega(top, tuple(heads), newtail))
    if plan.mode in ("const", "const_tf"):
        for k in range(plan.w, plan.k2):
            sub = copy_space(space, k)
            heads.append(
                _node_stage(
                    _kind_copy(kind, space, k),
                    sub,
                    normalize_mark(sub, tail_copy_mark(space, mark.tail, k)),
                    sigma,
                )
            )
        entries = [None] * plan.period
        for j in range(plan.period):
            k = plan.k2 + j
            sub = copy_space(space, k)
            entries[k % plan.period] = _node_stage(
                _kind_copy(kind, space, k),
                sub,
                normalize_mark(sub, tail_copy_mark(space, mark.tail, k)),
                sigma,
            )
        newtail = (
            TUniform(entries[0]) if plan.period == 1 else TCycle(tuple(entries))
        )
        return normalize_mark(space, MOmega(top, tuple(heads), newtail))
    # fallback: peel one application and recurse at sigma - 1
    hm = _headless(mark, space)
    stepped = _step_node(kind, space, hm)
    rest = left_subtract(ONE, sigma) if sigma >= ONE else ZERO
    tail_part = _node_stage(kind, space, stepped, rest)
    head_part = normalize_mark(space, MOmega(False, tuple(heads), TEmpty()))
    return union_marks(space, head_part, tail_part)


def iterate(kind: Kind, kappa: Ordinal, P: ClosedSet) -> ClosedSet:
    """The kappa-th transfinite iterate of the derivation."""
    return ClosedSet(P.space, _node_stage(kind, P.space, P.mark, kappa))


# ---------------------------------------------------------------------------
# Certificates.


@dataclass(frozen=True)
class RankCertificate:
    rank: Ordinal
    stages: Tuple[Tuple[Ordinal, str, bool], ...]
    method: str

    def to_json(self) -> dict:
        return {
            "rank": render(self.rank),
            "method": self.method,
            "stages": [
                {"stage": render(s), "hash": h, "empty": e}
                for (s, h, e) in self.stages
            ],
        }


def _mark_hash(space: SpaceDesc, mark: Mark) -> str:
    digest = hashlib.sha1(repr(normalize_mark(space, mark)).encode()).hexdigest()
    return digest[:16]


def _has_canonical(space: SpaceDesc) -> bool:
    if isinstance(space, Singleton):
        return False
    if isinstance(space, FiniteSum):
        return any(_has_canonical(p) for p in space.parts)
    if isinstance(space.tail, CanonicalTail):
        return True
    return any(_has_canonical(p) for p in space.prefix) or _has_canonical(
        space.tail.body
    )


def rank(kind: Kind, P: ClosedSet) -> RankCertificate:
    """Least ordinal at which the iterated derivation vanishes."""
    r = _node_rank(kind, P.space, normalize_mark(P.space, P.mark))
    stages = []
    probes = []
    j = 0
    while j < 6:
        s = from_int(j)
        if s >= r:
            break
        probes.append(s)
        j += 1
    for s in probes:
        m = _node_stage(kind, P.space, P.mark, s)
        stages.append((s, _mark_hash(P.space, m), False))
    final = _node_stage(kind, P.space, P.mark, r)
    if not is_empty_mark(P.space, final):
        raise EngineError("rank certificate inconsistent with stage chain")
    stages.append((r, _mark_hash(P.space, final), True))
    if r < OMEGA:
        method = "hybrid" if _has_canonical(P.space) else "brute_force"
    else:
        method = "closed_form"
    return RankCertificate(r, tuple(stages), method)


def beta(f: StepFun, eps=None) -> RankCertificate:
    """Oscillation rank of a labeling; without a threshold the supremum
    over the finite critical-threshold grid."""
    if eps is not None:
        return rank(OscPair(f.lab, _as_eps(eps)), ClosedSet(f.space, full_mark(f.space)))
    grid = _eps_grid(f.lab)
    if not grid:
        return rank(OscPair(f.lab, Fraction(1)), ClosedSet(f.space, full_mark(f.space)))
    return rank(
        OscPair(f.lab, grid[0]), ClosedSet(f.space, full_mark(f.space))
    )


def _eps_grid(lab: Lab) -> list:
    vals = _collect_vals(lab)
    b = max((_crit_bound(v) for v in vals), default=4) + 2
    seen = set()
    for v in vals:
        for k in range(b + 1):
            seen.add(v(k))
        lim = v.limit()
        if lim is not None:
            seen.add(lim)
    seen.add(Fraction(0))
    diffs = sorted(
        {abs(a - c) for a in seen for c in seen if a != c}
    )
    return diffs


def gamma_trunc(seq: SeqFun, eps) -> RankCertificate:
    """Convergence rank of a function sequence on the full space."""
    return rank(
        SeqOsc(seq.seq, _as_eps(eps)),
        ClosedSet(seq.space, full_mark(seq.space)),
    )


# ---------------------------------------------------------------------------
# The relation catalog.


def _diff_point(space: SpaceDesc, a: Mark, b: Mark):
    """Some sampled address in a but not in b (reporting aid only)."""
    for addr in sample_points(space, 8, depth=6):
        if mark_contains(space, a, addr) and not mark_contains(space, b, addr):
            return addr
    return None


def _incl(space, a, b):
    ok = mark_subset(space, a, b)
    return ok, (None if ok else _diff_point(space, a, b))


def check_relation(rel: str, instance: dict) -> dict:
    """Evaluate one inclusion law of the derivation calculus on a
    concrete instance.  The instance supplies the space, marks,
    labelings and ordinal exponents the law quantifies over."""
    space = instance["space"]
    P = normalize_mark(space, instance["P"])
    out = {"relation": rel, "holds": True, "counterexample": None}

    def record(ok, pt):
        if not ok:
            out["holds"] = False
            out["counterexample"] = pt

    if rel == "R1":
        # a pointwise cover of derivations lifts to omega-power iterates
        g, h, eps, alpha = (
            instance["g"],
            instance["h"],
            instance["eps"],
            instance["alpha"],
        )
        power = omega_pow(alpha)
        mode = instance.get("mode", "product")
        if mode == "product":
            gh = instance["gh"]
            lhs = _node_stage(OscClosure(gh, eps), space, P, power)
            r1 = _node_stage(WeightedClosure(h, g, eps / 2), space, P, power)
            r2 = _node_stage(WeightedClosure(g, h, eps / 2), space, P, power)
        else:  # bounded-weight cover
            M = instance["M"]
            lhs = _node_stage(WeightedClosure(h, g, eps), space, P, power)
            r1 = _node_stage(Unbounded(h, M), space, P, power)
            r2 = _node_stage(OscClosure(g, eps / M), space, P, power)
        rhs = union_marks(space, r1, r2)
        record(*_incl(space, lhs, rhs))
    elif rel == "R2":
        h, eps = instance["h"], instance["eps"]
        a = _step_node(OscClosure(h, eps), space, P)
        b = _step_node(OscPair(h, eps), space, P)
        c = _step_node(OscClosure(h, eps / 2), space, P)
        ok, pt = _incl(space, a, b)
        record(ok, pt)
        if out["holds"]:
            record(*_incl(space, b, c))
    elif rel == "R3":
        g, h, gh, eps = instance["g"], instance["h"], instance["gh"], instance["eps"]
        lhs = _step_node(OscClosure(gh, eps), space, P)
        rhs = union_marks(
            space,
            _step_node(WeightedClosure(h, g, eps / 2), space, P),
            _step_node(WeightedClosure(g, h, eps / 2), space, P),
        )
        record(*_incl(space, lhs, rhs))
    elif rel == "R4":
        g, h, eps, M, alpha = (
            instance["g"],
            instance["h"],
            instance["eps"],
            instance["M"],
            instance["alpha"],
        )
        power = omega_pow(alpha)
        lhs = _node_stage(WeightedClosure(h, g, eps), space, P, power)
        rhs = union_marks(
            space,
            _node_stage(Unbounded(h, M), space, P, power),
            _node_stage(OscClosure(g, eps / M), space, P, power),
        )
        record(*_incl(space, lhs, rhs))
    elif rel == "R5":
        g, h, eta, alpha, U = (
            instance["g"],
            instance["h"],
            instance["eta"],
            instance["alpha"],
            instance["U"],
        )
        vr = value_range(space, g, intersect_marks(space, U, P))
        if vr.empty or vr.unbounded_up or vr.unbounded_down:
            out["skipped"] = "no finite bound on the weight over U"
            return out
        M = max(abs(vr.lo), abs(vr.hi), Fraction(1))
        lhs = intersect_marks(
            space, U, _node_stage(WeightedClosure(g, h, eta), space, P, alpha)
        )
        rhs = _node_stage(OscClosure(h, eta / M), space, P, alpha)
        record(*_incl(space, lhs, rhs))
    elif rel == "R6":
        g, h, eta, alpha, kap = (
            instance["g"],
            instance["h"],
            instance["eta"],
            instance["alpha"],
            instance["kappa"],
        )
        S = _node_stage(OscClosure(h, None), space, P, alpha)
        U = instance.get("U")
        if U is None:
            U = _clopen_avoiding(space, S)
        if is_empty_mark(space, intersect_marks(space, U, S)) and not is_empty_mark(
            space, U
        ):
            lhs = intersect_marks(
                space,
                U,
                _node_stage(WeightedClosure(g, h, eta), space, P, mul(alpha, kap)),
            )
            rhs = _node_stage(Divergence(g), space, P, kap)
            record(*_incl(space, lhs, rhs))
        else:
            out["skipped"] = "no clopen window avoids the oscillation core"
    elif rel == "R7":
        g, h, eta, xi = instance["g"], instance["h"], instance["eta"], instance["xi"]
        power = omega_pow(omega_pow(xi))
        lhs = _node_stage(WeightedClosure(g, h, eta), space, P, power)
        rhs = union_marks(
            space,
            _step_node(OmegaDeriv(h, xi), space, P),
            _node_stage(Divergence(g), space, P, power),
        )
        record(*_incl(space, lhs, rhs))
    elif rel == "R8":
        from .func import char_fn

        A, G, rho = instance["A"], instance["G"], instance["rho"]
        chi_a = char_fn(space, A)
        chi_ag = char_fn(space, intersect_marks(space, A, G))
        one = Fraction(1)
        lhs = intersect_marks(
            space, G, _node_stage(OscPair(chi_a, one), space, P, rho)
        )
        rhs = intersect_marks(
            space, G, _node_stage(OscPair(chi_ag, one), space, P, rho)
        )
        ok = marks_equal(space, lhs, rhs)
        record(ok, None if ok else (_diff_point(space, lhs, rhs) or _diff_point(space, rhs, lhs)))
    elif rel == "R9":
        kind = instance["kind"]
        Q = normalize_mark(space, instance["Q"])
        big = union_marks(space, P, Q)
        dP = _step_node(kind, space, P)
        dQ = _step_node(kind, space, Q)
        dU = _step_node(kind, space, big)
        ok, pt = _incl(space, dP, _step_node(kind, space, big))
        record(ok, pt)
        if out["holds"]:
            record(*_incl(space, dU, union_marks(space, dP, dQ)))
    else:
        raise EngineError("unknown relation %r" % (rel,))
    return out


def _clopen_avoiding(space: SpaceDesc, S: Mark) -> Mark:
    """A clopen union of root copies disjoint from S (possibly empty)."""
    if not isinstance(space, OmegaSum):
        return empty_mark(space) if not is_empty_mark(space, S) else full_mark(space)
    S = normalize_mark(space, S)
    pts = []
    for k in range(6):
        sub = copy_space(space, k)
        sm = S.head[k] if k < len(S.head) else tail_copy_mark(space, S.tail, k)
        if is_empty_mark(sub, sm):
            pts.append(k)
    if not pts:
        return empty_mark(space)
    width = max(pts) + 1
    heads = tuple(
        full_mark(copy_space(space, k)) if k in pts else empty_mark(copy_space(space, k))
        for k in range(max(width, len(space.prefix)))
    )
    return normalize_mark(space, MOmega(False, heads, TEmpty()))


from .space import _install_cached_hash

_install_cached_hash(
    OscPair, OscClosure, WeightedClosure, Unbounded, Divergence,
    OmegaDeriv, CbDeriv, SeqOsc, StepFun, SeqFun, Rq, RankCertificate,
)
