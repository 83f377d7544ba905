"""Step-function labelings on tree compacta, and function sequences.

A labeling assigns a rational to every point of a descriptor, constant
on deep clopen pieces.  Infinite tails carry symbolic labels:

  LUniform / LCycle   -- same label (or a short alternation) on every copy
  LIndexed            -- one label shape whose numeric slots depend on the
                         copy index k through a small rational function
  LConstCopy          -- copy k is constant with value v(k)
  LFamily             -- copy k is the k-th member of a built-in family
                         (scaled, with optional parity flip)

Built-in families: "oscillation" (the canonical {0,1}-valued function
whose oscillation survives point removal as long as the space does) and
"top_indicator" (1 at the copy's greatest point, 0 elsewhere).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Tuple, Union

from .ordinal import Ordinal, fundamental_seq, pred
from .space import (
    TOP,
    CanonicalTail,
    ConstantTail,
    FiniteSum,
    MLeaf,
    MOmega,
    MSum,
    Mark,
    OmegaSum,
    Singleton,
    SpaceDesc,
    SpaceError,
    TCycle,
    TEmpty,
    TFull,
    TStage,
    TTops,
    TUniform,
    UnsupportedDescriptor,
    canonical_space,
    copy_space,
    tail_copy_mark,
)


class LabelError(ValueError):
    """Malformed labeling or unsupported pointwise combination."""


# ---------------------------------------------------------------------------
# Index-dependent numeric slots: rational functions of the copy index k,
# numerator degree <= 2 and denominator degree <= 1, no poles at k >= 0.


def _poly_eval(c: Tuple[Fraction, ...], k) -> Fraction:
    out = Fraction(0)
    for a in reversed(c):
        out = out * k + a
    return out


def _poly_trim(c) -> Tuple[Fraction, ...]:
    c = [Fraction(x) for x in c]
    while c and c[-1] == 0:
        c.pop()
    return tuple(c)


def _poly_mul(a, b):
    out = [Fraction(0)] * (len(a) + len(b) - 1) if a and b else []
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return _poly_trim(out)


def _poly_add(a, b):
    out = [Fraction(0)] * max(len(a), len(b))
    for i, x in enumerate(a):
        out[i] += x
    for i, x in enumerate(b):
        out[i] += x
    return _poly_trim(out)


def _poly_divmod(a, b):
    a = list(a)
    q = [Fraction(0)] * max(0, len(a) - len(b) + 1)
    while len(a) >= len(b) and any(a):
        if a[-1] == 0:
            a.pop()
            continue
        d = len(a) - len(b)
        f = a[-1] / b[-1]
        q[d] = f
        for i, x in enumerate(b):
            a[d + i] -= f * x
        a.pop()
    return _poly_trim(q), _poly_trim(a)


@dataclass(frozen=True)
class RatVal:
    """num(k) / den(k) with num degree <= 2, den degree <= 1."""

    num: Tuple[Fraction, ...]
    den: Tuple[Fraction, ...]

    @staticmethod
    def make(num, den=(1,)) -> "RatVal":
        num = _poly_trim(num)
        den = _poly_trim(den)
        if not den:
            raise LabelError("zero denominator")
        if not num:
            return RatVal((), (Fraction(1),))
        # cancel an exact linear factor when possible
        if len(den) > 1:
            q, r = _poly_divmod(num, den)
            if not r:
                num, den = q, (Fraction(1),)
        scale = den[-1]
        num = tuple(x / scale for x in num)
        den = tuple(x / scale for x in den)
        if len(num) - 1 > 2 or len(den) - 1 > 1:
            raise LabelError("index slot degree out of range")
        if len(den) > 1:
            root = -den[0] / den[1]
            if root >= 0 and root == int(root):
                raise LabelError("denominator vanishes at k=%d" % int(root))
        return RatVal(num, den)

    def __call__(self, k: int) -> Fraction:
        return _poly_eval(self.num, Fraction(k)) / _poly_eval(self.den, Fraction(k))

    @property
    def is_const(self) -> bool:
        return len(self.num) <= 1 and len(self.den) <= 1

    def const_value(self) -> Fraction:
        assert self.is_const
        return self.num[0] / self.den[0] if self.num else Fraction(0)

    def limit(self) -> Optional[Fraction]:
        """Value at k -> infinity; None means +/- infinity."""
        dn, dd = len(self.num) - 1, len(self.den) - 1
        if not self.num:
            return Fraction(0)
        if dn > dd:
            return None
        if dn < dd:
            return Fraction(0)
        return self.num[-1] / self.den[-1]

    def diverges_up(self) -> bool:
        return self.limit() is None and self.num[-1] / self.den[-1] > 0

    def diverges_down(self) -> bool:
        return self.limit() is None and self.num[-1] / self.den[-1] < 0


def vconst(q) -> RatVal:
    return RatVal.make((Fraction(q),))


def vpoly(*coeffs) -> RatVal:
    return RatVal.make(coeffs)


def vrecip(c0, c1) -> RatVal:
    return RatVal.make((1,), (c0, c1))


def vadd(a: RatVal, b: RatVal) -> RatVal:
    num = _poly_add(_poly_mul(a.num, b.den), _poly_mul(b.num, a.den))
    return RatVal.make(num, _poly_mul(a.den, b.den))


def vmul(a: RatVal, b: RatVal) -> RatVal:
    return RatVal.make(_poly_mul(a.num, b.num), _poly_mul(a.den, b.den))


def vneg(a: RatVal) -> RatVal:
    return RatVal.make(tuple(-x for x in a.num), a.den)


def vsub(a: RatVal, b: RatVal) -> RatVal:
    return vadd(a, vneg(b))


Val = Union[RatVal, Fraction, int]


def as_val(v: Val) -> RatVal:
    if isinstance(v, RatVal):
        return v
    return vconst(v)


def _crit_bound(v: RatVal) -> int:
    """Integer B past which v is monotone on [B, inf)."""
    coeffs = list(v.num) + list(v.den)
    bound = 4
    for c in coeffs:
        bound += int(abs(c)) + int(abs(c.denominator))
    return bound


_EXTREMA_MEMO: dict = {}


def val_extrema(v: RatVal, start: int) -> dict:
    """inf/sup of v over integer k >= start, with attainment flags."""
    key = (v, start)
    cached = _EXTREMA_MEMO.get(key)
    if cached is not None:
        return dict(cached)
    out = _val_extrema_raw(v, start)
    _EXTREMA_MEMO[key] = dict(out)
    return out


def _val_extrema_raw(v: RatVal, start: int) -> dict:
    lim = v.limit()
    b = max(start, _crit_bound(v)) + 2
    samples = [(v(k), k) for k in range(start, b + 1)]
    lo = min(s for s, _ in samples)
    hi = max(s for s, _ in samples)
    out = {
        "lo": lo,
        "hi": hi,
        "lo_att": True,
        "hi_att": True,
        "unbounded_up": False,
        "unbounded_down": False,
    }
    if lim is None:
        if v.diverges_up():
            out["unbounded_up"] = True
            out["hi"] = None
        else:
            out["unbounded_down"] = True
            out["lo"] = None
        return out
    # beyond b the function is monotone toward lim
    if lim > hi:
        out["hi"], out["hi_att"] = lim, False
    if lim < lo:
        out["lo"], out["lo_att"] = lim, False
    return out


# ---------------------------------------------------------------------------
# Labelings.


@dataclass(frozen=True)
class LLeaf:
    value: RatVal


@dataclass(frozen=True)
class LSum:
    parts: Tuple["Lab", ...]


@dataclass(frozen=True)
class LUniform:
    lab: "Lab"


@dataclass(frozen=True)
class LCycle:
    labs: Tuple["Lab", ...]


@dataclass(frozen=True)
class LIndexed:
    lab: "Lab"


@dataclass(frozen=True)
class LConstCopy:
    value: RatVal


@dataclass(frozen=True)
class LFamily:
    family: str
    scale: RatVal
    flip: int = 0


TailLab = Union[LUniform, LCycle, LIndexed, LConstCopy, LFamily]


@dataclass(frozen=True)
class LOmega:
    top: RatVal
    head: Tuple["Lab", ...]
    tail: TailLab


Lab = Union[LLeaf, LSum, LOmega]

FAMILIES = ("oscillation", "top_indicator")


def const_lab(space: SpaceDesc, value: Val) -> Lab:
    v = as_val(value)
    if isinstance(space, Singleton):
        return LLeaf(v)
    if isinstance(space, FiniteSum):
        return LSum(tuple(const_lab(p, v) for p in space.parts))
    return LOmega(v, tuple(const_lab(p, v) for p in space.prefix), LConstCopy(v))


_SCALE_MEMO: dict = {}


def scale_lab(space: SpaceDesc, lab: Lab, value: Val) -> Lab:
    """Multiply the labeling by a constant (possibly index-dependent)."""
    v = as_val(value)
    if v.is_const and v(0) == 1:
        return lab
    key = (space, lab, v)
    cached = _SCALE_MEMO.get(key)
    if cached is None:
        cached = _scale_lab_raw(space, lab, v)
        _SCALE_MEMO[key] = cached
    return cached


def _scale_lab_raw(space: SpaceDesc, lab: Lab, v: RatVal) -> Lab:
    if isinstance(space, Singleton):
        return LLeaf(vmul(lab.value, v))
    if isinstance(space, FiniteSum):
        return LSum(
            tuple(scale_lab(p, l, v) for p, l in zip(space.parts, lab.parts))
        )
    return LOmega(
        vmul(lab.top, v),
        tuple(scale_lab(copy_space(space, i), l, v) for i, l in enumerate(lab.head)),
        _scale_tail(space, lab.tail, v),
    )


def _scale_tail(space: OmegaSum, tail: TailLab, v: RatVal) -> TailLab:
    if isinstance(tail, LUniform):
        if not v.is_const:
            return LIndexed(scale_lab(space.tail.body, tail.lab, v))
        return LUniform(scale_lab(space.tail.body, tail.lab, v))
    if isinstance(tail, LCycle):
        if not v.is_const:
            raise UnsupportedDescriptor("index-dependent scale over a cycle tail")
        return LCycle(
            tuple(scale_lab(space.tail.body, l, v) for l in tail.labs)
        )
    if isinstance(tail, LIndexed):
        return LIndexed(scale_lab(space.tail.body, tail.lab, v))
    if isinstance(tail, LConstCopy):
        return LConstCopy(vmul(tail.value, v))
    if isinstance(tail, LFamily):
        return LFamily(tail.family, vmul(tail.scale, v), tail.flip)
    raise LabelError("not a tail labeling: %r" % (tail,))


_OSC_MEMO: dict = {}


def oscillation_lab(kappa: Ordinal, flipped: bool = False) -> Lab:
    """The canonical {0,1} oscillating labeling on canonical_space(kappa)."""
    key = (kappa, flipped)
    cached = _OSC_MEMO.get(key)
    if cached is None:
        cached = _oscillation_lab_raw(kappa, flipped)
        _OSC_MEMO[key] = cached
    return cached


def _oscillation_lab_raw(kappa: Ordinal, flipped: bool) -> Lab:
    flip_val = vconst(0) if flipped else vconst(1)
    if kappa.is_zero:
        return LLeaf(flip_val)
    if kappa.is_successor:
        a = oscillation_lab(pred(kappa), flipped)
        b = oscillation_lab(pred(kappa), not flipped)
        return LOmega(flip_val, (), LCycle((a, b)))
    return LOmega(flip_val, (), LFamily("oscillation", vconst(1), int(flipped)))


def canonical_oscillation_fn(kappa: Ordinal) -> Tuple[SpaceDesc, Lab]:
    return canonical_space(kappa), oscillation_lab(kappa)


def top_indicator_lab(space: SpaceDesc) -> Lab:
    """1 at the greatest point of the descriptor, 0 elsewhere."""
    if isinstance(space, Singleton):
        return LLeaf(vconst(1))
    if isinstance(space, FiniteSum):
        parts = [const_lab(p, 0) for p in space.parts[:-1]]
        parts.append(top_indicator_lab(space.parts[-1]))
        return LSum(tuple(parts))
    return LOmega(vconst(1), (), LConstCopy(vconst(0)))


_FAMILY_MEMO: dict = {}


def family_member(space: OmegaSum, tail: LFamily, k: int) -> Lab:
    key = (space, tail, k)
    cached = _FAMILY_MEMO.get(key)
    if cached is None:
        cached = _family_member_raw(space, tail, k)
        _FAMILY_MEMO[key] = cached
    return cached


def _family_member_raw(space: OmegaSum, tail: LFamily, k: int) -> Lab:
    sub = copy_space(space, k)
    scale = tail.scale(k)
    if tail.family == "oscillation":
        if not isinstance(space.tail, CanonicalTail):
            raise UnsupportedDescriptor("oscillation family needs a canonical tail")
        kap = fundamental_seq(space.tail.limit, k)
        lab = oscillation_lab(kap, flipped=(k + tail.flip) % 2 == 1)
        return scale_lab(sub, lab, scale)
    if tail.family == "top_indicator":
        return scale_lab(sub, top_indicator_lab(sub), scale)
    raise LabelError("unknown family %r" % (tail.family,))


def _subst(space: SpaceDesc, lab: Lab, k: int) -> Lab:
    """Resolve every index slot at copy index k."""
    if isinstance(space, Singleton):
        return LLeaf(vconst(lab.value(k)))
    if isinstance(space, FiniteSum):
        return LSum(tuple(_subst(p, l, k) for p, l in zip(space.parts, lab.parts)))
    tail = lab.tail
    if isinstance(tail, LUniform):
        tail = LUniform(_subst(space.tail.body, tail.lab, k))
    elif isinstance(tail, LCycle):
        tail = LCycle(tuple(_subst(space.tail.body, l, k) for l in tail.labs))
    # LIndexed / LConstCopy / LFamily tails bind their own copy index;
    # slots under them are not touched by an outer substitution
    return LOmega(
        vconst(lab.top(k)),
        tuple(
            _subst(copy_space(space, i), l, k) for i, l in enumerate(lab.head)
        ),
        tail,
    )


_COPYLAB_MEMO: dict = {}


def copy_lab(space: OmegaSum, tail: TailLab, k: int) -> Lab:
    """Concrete labeling of copy k described by a tail pattern."""
    key = (space, tail, k)
    cached = _COPYLAB_MEMO.get(key)
    if cached is not None:
        return cached
    out = _copy_lab_raw(space, tail, k)
    _COPYLAB_MEMO[key] = out
    return out


def _copy_lab_raw(space: OmegaSum, tail: TailLab, k: int) -> Lab:
    sub = copy_space(space, k)
    if isinstance(tail, LUniform):
        return tail.lab
    if isinstance(tail, LCycle):
        return tail.labs[k % len(tail.labs)]
    if isinstance(tail, LIndexed):
        return _subst(sub, tail.lab, k)
    if isinstance(tail, LConstCopy):
        return const_lab(sub, tail.value(k))
    if isinstance(tail, LFamily):
        return family_member(space, tail, k)
    raise LabelError("not a tail labeling: %r" % (tail,))


def eval_lab(space: SpaceDesc, lab: Lab, addr: tuple) -> Fraction:
    if isinstance(space, Singleton):
        if addr != ():
            raise SpaceError("bad address %r" % (addr,))
        return lab.value(0)
    if isinstance(space, FiniteSum):
        return eval_lab(space.parts[addr[0]], lab.parts[addr[0]], addr[1:])
    if addr == (TOP,):
        return lab.top(0)
    k = addr[0]
    sub = lab.head[k] if k < len(lab.head) else copy_lab(space, lab.tail, k)
    return eval_lab(copy_space(space, k), sub, addr[1:])


def char_fn(space: SpaceDesc, mark: Mark) -> Lab:
    """Indicator labeling of a closed mark."""
    from .space import normalize_mark

    mark = normalize_mark(space, mark)
    return _char_fn(space, mark)


def _char_fn(space: SpaceDesc, mark: Mark) -> Lab:
    if isinstance(space, Singleton):
        return LLeaf(vconst(1 if mark.on else 0))
    if isinstance(space, FiniteSum):
        return LSum(
            tuple(_char_fn(p, m) for p, m in zip(space.parts, mark.parts))
        )
    head = tuple(
        _char_fn(copy_space(space, k), m) for k, m in enumerate(mark.head)
    )
    t = mark.tail
    if isinstance(t, TEmpty):
        tail: TailLab = LConstCopy(vconst(0))
    elif isinstance(t, TFull):
        tail = LConstCopy(vconst(1))
    elif isinstance(t, TTops):
        tail = LFamily("top_indicator", vconst(1), 0)
    elif isinstance(t, TUniform):
        tail = LUniform(_char_fn(space.tail.body, t.mark))
    elif isinstance(t, TCycle):
        tail = LCycle(tuple(_char_fn(space.tail.body, m) for m in t.marks))
    else:
        raise UnsupportedDescriptor("indicator of a staged tail %r" % (t,))
    return LOmega(vconst(1 if mark.top else 0), head, tail)


# ---------------------------------------------------------------------------
# Pointwise algebra.


def _promote(space: OmegaSum, tail: TailLab) -> TailLab:
    """View a tail as LIndexed when the body is constant."""
    if isinstance(space.tail, ConstantTail):
        if isinstance(tail, LUniform):
            return LIndexed(tail.lab)
        if isinstance(tail, LConstCopy):
            return LIndexed(const_lab(space.tail.body, tail.value))
    return tail


def _combine_tails(space: OmegaSum, a: TailLab, b: TailLab, op: str) -> TailLab:
    body = space.tail.body if isinstance(space.tail, ConstantTail) else None
    if isinstance(a, LCycle) or isinstance(b, LCycle):
        if isinstance(a, (LCycle, LUniform)) and isinstance(b, (LCycle, LUniform)):
            pa = len(a.labs) if isinstance(a, LCycle) else 1
            pb = len(b.labs) if isinstance(b, LCycle) else 1
            p = pa * pb // math.gcd(pa, pb)
            ents = tuple(
                _pointwise(
                    body,
                    a.labs[i % pa] if isinstance(a, LCycle) else a.lab,
                    b.labs[i % pb] if isinstance(b, LCycle) else b.lab,
                    op,
                )
                for i in range(p)
            )
            return LCycle(ents)
        if isinstance(a, LCycle) and isinstance(b, LConstCopy) and b.value.is_const:
            return LCycle(
                tuple(
                    _pointwise(body, l, const_lab(body, b.value), op)
                    for l in a.labs
                )
            )
        if isinstance(b, LCycle) and isinstance(a, LConstCopy) and a.value.is_const:
            return LCycle(
                tuple(
                    _pointwise(body, const_lab(body, a.value), l, op)
                    for l in b.labs
                )
            )
        raise UnsupportedDescriptor("cycle tail combined with %r" % (b,))
    if isinstance(a, LConstCopy) and isinstance(b, LConstCopy):
        return LConstCopy(_vop(a.value, b.value, op))
    if isinstance(a, LFamily) or isinstance(b, LFamily):
        return _combine_family(a, b, op)
    # uniform x constant-per-copy with a fixed value stays uniform
    if isinstance(a, LUniform) and isinstance(b, LConstCopy) and b.value.is_const:
        c = const_lab(space.tail.body, b.value.const_value())
        return LUniform(_pointwise(space.tail.body, a.lab, c, op))
    if isinstance(b, LUniform) and isinstance(a, LConstCopy) and a.value.is_const:
        c = const_lab(space.tail.body, a.value.const_value())
        return LUniform(_pointwise(space.tail.body, c, b.lab, op))
    a2, b2 = _promote(space, a), _promote(space, b)
    if isinstance(a2, LIndexed) and isinstance(b2, LIndexed):
        return LIndexed(_pointwise(space.tail.body, a2.lab, b2.lab, op))
    raise UnsupportedDescriptor(
        "cannot combine tail labelings %r and %r" % (a, b)
    )


def _vop(a: RatVal, b: RatVal, op: str) -> RatVal:
    if op == "add":
        return vadd(a, b)
    if op == "sub":
        return vsub(a, b)
    if op == "mul":
        return vmul(a, b)
    raise LabelError("unknown op %r" % (op,))


def _combine_family(a: TailLab, b: TailLab, op: str) -> TailLab:
    fam, other = (a, b) if isinstance(a, LFamily) else (b, a)
    if isinstance(other, LConstCopy):
        if op == "mul":
            return LFamily(fam.family, vmul(fam.scale, other.value), fam.flip)
        if op in ("add", "sub") and not other.value.num:
            return fam if (op == "add" or fam is a) else _negate_family(fam)
        raise UnsupportedDescriptor(
            "family tails only scale by per-copy constants"
        )
    if isinstance(other, LFamily):
        if op == "mul" and fam.family == other.family == "oscillation":
            if fam.flip == other.flip:
                # {0,1}-valued members are multiplicatively idempotent
                return LFamily("oscillation", vmul(fam.scale, other.scale), fam.flip)
            return LConstCopy(vconst(0))
        if op == "mul" and fam.family == other.family == "top_indicator":
            return LFamily(
                "top_indicator", vmul(fam.scale, other.scale), 0
            )
    raise UnsupportedDescriptor(
        "cannot combine family tails %r and %r" % (a, b)
    )


def _negate_family(fam: LFamily) -> TailLab:
    return LFamily(fam.family, vneg(fam.scale), fam.flip)


def _pointwise(space: SpaceDesc, a: Lab, b: Lab, op: str) -> Lab:
    if isinstance(space, Singleton):
        return LLeaf(_vop(a.value, b.value, op))
    if isinstance(space, FiniteSum):
        return LSum(
            tuple(
                _pointwise(p, x, y, op)
                for p, x, y in zip(space.parts, a.parts, b.parts)
            )
        )
    width = max(len(a.head), len(b.head))
    head = tuple(
        _pointwise(
            copy_space(space, k),
            a.head[k] if k < len(a.head) else copy_lab(space, a.tail, k),
            b.head[k] if k < len(b.head) else copy_lab(space, b.tail, k),
            op,
        )
        for k in range(width)
    )
    return LOmega(
        _vop(a.top, b.top, op), head, _combine_tails(space, a.tail, b.tail, op)
    )


def pointwise(space: SpaceDesc, a: Lab, b: Lab, op: str) -> Lab:
    """op in {'add', 'sub', 'mul'}, computed exactly."""
    return _pointwise(space, a, b, op)


# ---------------------------------------------------------------------------
# Value ranges over marked points.


@dataclass
class VRange:
    lo: Optional[Fraction] = None  # None with unbounded_down: -inf
    hi: Optional[Fraction] = None
    lo_att: bool = False
    hi_att: bool = False
    unbounded_up: bool = False
    unbounded_down: bool = False
    empty: bool = True

    def add_value(self, v: Fraction, attained: bool = True) -> None:
        if self.empty:
            self.empty = False
            if not self.unbounded_down:
                self.lo, self.lo_att = v, attained
            if not self.unbounded_up:
                self.hi, self.hi_att = v, attained
            return
        if not self.unbounded_down and (self.lo is None or v < self.lo):
            self.lo, self.lo_att = v, attained
        elif not self.unbounded_down and v == self.lo:
            self.lo_att = self.lo_att or attained
        if not self.unbounded_up and (self.hi is None or v > self.hi):
            self.hi, self.hi_att = v, attained
        elif not self.unbounded_up and v == self.hi:
            self.hi_att = self.hi_att or attained

    def add_unbounded(self, up: bool) -> None:
        self.empty = False
        if up:
            self.unbounded_up, self.hi, self.hi_att = True, None, False
        else:
            self.unbounded_down, self.lo, self.lo_att = True, None, False

    def merge(self, other: "VRange") -> None:
        if other.empty:
            return
        if other.unbounded_up:
            self.add_unbounded(True)
        if other.unbounded_down:
            self.add_unbounded(False)
        if other.lo is not None:
            self.add_value(other.lo, other.lo_att)
        if other.hi is not None:
            self.add_value(other.hi, other.hi_att)

    def spread_at_least(self, eps: Fraction) -> bool:
        """Is there a pair of attained values at distance >= eps?  The
        endpoints stand for approachable values; a non-attained endpoint
        only witnesses strict inequality."""
        if self.empty:
            return False
        if self.unbounded_up or self.unbounded_down:
            return True
        d = self.hi - self.lo
        if d > eps:
            return True
        return d == eps and self.lo_att and self.hi_att


_VRANGE_MEMO: dict = {}


def value_range(
    space: SpaceDesc, lab: Lab, mark: Mark, from_index: int = 0
) -> VRange:
    """Exact range of the labeling over marked points, restricted at the
    root OmegaSum to the Top plus copies >= from_index."""
    key = (space, lab, mark, from_index)
    cached = _VRANGE_MEMO.get(key)
    if cached is None:
        cached = VRange()
        _vrange(space, lab, mark, cached, from_index)
        _VRANGE_MEMO[key] = cached
    out = VRange()
    out.__dict__.update(cached.__dict__)
    return out


def _vrange(space, lab, mark, out: VRange, from_index: int = 0) -> None:
    if isinstance(space, Singleton):
        if mark.on:
            out.add_value(lab.value(0))
        return
    if isinstance(space, FiniteSum):
        for p, l, m in zip(space.parts, lab.parts, mark.parts):
            out.merge(value_range(p, l, m))
        return
    if mark.top:
        out.add_value(lab.top(0))
    width = max(len(lab.head), len(mark.head), from_index)
    for k in range(from_index, width):
        ml = mark.head[k] if k < len(mark.head) else tail_copy_mark(space, mark.tail, k)
        ll = lab.head[k] if k < len(lab.head) else copy_lab(space, lab.tail, k)
        out.merge(value_range(copy_space(space, k), ll, ml))
    _tail_vrange(space, lab.tail, mark.tail, width, out)


def _mark_period(mtail) -> int:
    return len(mtail.marks) if isinstance(mtail, TCycle) else 1


def _tail_vrange(space, ltail, mtail, start, out: VRange) -> None:
    if isinstance(mtail, TEmpty):
        return
    if isinstance(ltail, (LUniform, LCycle)):
        # eventually periodic on a constant body: one period decides
        pl = len(ltail.labs) if isinstance(ltail, LCycle) else 1
        pm = _mark_period(mtail)
        for k in range(start, start + pl * pm // math.gcd(pl, pm)):
            out.merge(
                value_range(
                    copy_space(space, k),
                    copy_lab(space, ltail, k),
                    tail_copy_mark(space, mtail, k),
                )
            )
        return
    if isinstance(ltail, (LConstCopy, LIndexed)):
        if isinstance(mtail, TStage):
            if not _mtail_io_nonempty(space, mtail):
                for k in range(start, start + 4):
                    if not _copy_mark_empty(space, mtail, k):
                        out.merge(
                            value_range(
                                copy_space(space, k),
                                copy_lab(space, ltail, k),
                                tail_copy_mark(space, mtail, k),
                            )
                        )
                return
            # copy marks of a staged canonical tail are eventually nonempty
            # and always contain the copy's greatest point
            residues, period = [0], 1
        else:
            period = _mark_period(mtail)
            residues = [
                r
                for r in range(period)
                if not _copy_mark_empty(space, mtail, start + r)
            ]
        bound = (
            _crit_bound(ltail.value)
            if isinstance(ltail, LConstCopy)
            else _crit_bound_lab(ltail.lab)
        )
        for k in range(start, start + max(bound, 2 * period) + 2):
            if not _copy_mark_empty(space, mtail, k):
                out.merge(
                    value_range(
                        copy_space(space, k),
                        copy_lab(space, ltail, k),
                        tail_copy_mark(space, mtail, k),
                    )
                )
        for r in residues:
            for v in _tail_slot_vals(space, ltail, mtail, start + r):
                lim = v.limit()
                if lim is None:
                    out.add_unbounded(v.diverges_up())
                elif v.is_const:
                    out.add_value(lim, True)
                else:
                    out.add_value(lim, False)
        return
    if isinstance(ltail, LFamily):
        _family_vrange(space, ltail, mtail, start, out)
        return
    raise UnsupportedDescriptor(
        "range over tail labeling %r with mark %r" % (ltail, mtail)
    )


def _tail_slot_vals(space, ltail, mtail, k0: int) -> list:
    """Index slots of the tail labeling at marked positions, as functions
    of the copy index (sampled structurally at representative copy k0)."""
    if isinstance(ltail, LConstCopy):
        return [ltail.value]
    template = ltail.lab
    mark = tail_copy_mark(space, mtail, k0)
    return _marked_slots(copy_space(space, k0), template, mark)


def _marked_slots(space, lab: Lab, mark: Mark) -> list:
    if isinstance(space, Singleton):
        return [lab.value] if mark.on else []
    if isinstance(space, FiniteSum):
        out = []
        for p, l, m in zip(space.parts, lab.parts, mark.parts):
            out.extend(_marked_slots(p, l, m))
        return out
    out = [lab.top] if mark.top else []
    width = max(len(lab.head), len(mark.head))
    for k in range(width):
        ll = lab.head[k] if k < len(lab.head) else copy_lab(space, lab.tail, k)
        ml = mark.head[k] if k < len(mark.head) else tail_copy_mark(space, mark.tail, k)
        out.extend(_marked_slots(copy_space(space, k), ll, ml))
    if isinstance(mark.tail, TEmpty):
        return out
    lt = lab.tail
    if isinstance(lt, (LUniform, LCycle)):
        pl = len(lt.labs) if isinstance(lt, LCycle) else 1
        pm = _mark_period(mark.tail)
        for k in range(width, width + pl * pm // math.gcd(pl, pm)):
            out.extend(
                _marked_slots(
                    copy_space(space, k),
                    copy_lab(space, lt, k),
                    tail_copy_mark(space, mark.tail, k),
                )
            )
        return out
    if isinstance(lt, LConstCopy):
        if lt.value.is_const:
            out.append(lt.value)
            return out
    raise UnsupportedDescriptor(
        "slot analysis for tail labeling %r" % (lt,)
    )


def _copy_mark_empty(space, mtail, k) -> bool:
    from .space import is_empty_mark

    return is_empty_mark(copy_space(space, k), tail_copy_mark(space, mtail, k))


def _mtail_io_nonempty(space, mtail) -> bool:
    from .space import tail_io_nonempty

    return tail_io_nonempty(space, mtail)


def _merge_val_range(out: VRange, v: RatVal, start: int) -> None:
    info = val_extrema(v, start)
    if info["unbounded_up"]:
        out.add_unbounded(True)
    elif info["hi"] is not None:
        out.add_value(info["hi"], info["hi_att"])
    if info["unbounded_down"]:
        out.add_unbounded(False)
    elif info["lo"] is not None:
        out.add_value(info["lo"], info["lo_att"])


def _crit_bound_lab(lab: Lab) -> int:
    if isinstance(lab, LLeaf):
        return _crit_bound(lab.value)
    if isinstance(lab, LSum):
        return max(_crit_bound_lab(l) for l in lab.parts)
    out = _crit_bound(lab.top)
    for l in lab.head:
        out = max(out, _crit_bound_lab(l))
    t = lab.tail
    if isinstance(t, LUniform):
        out = max(out, _crit_bound_lab(t.lab))
    elif isinstance(t, LCycle):
        out = max(out, max(_crit_bound_lab(l) for l in t.labs))
    elif isinstance(t, LConstCopy):
        out = max(out, _crit_bound(t.value))
    elif isinstance(t, LFamily):
        out = max(out, _crit_bound(t.scale))
    return out


def _family_vrange(space, ltail: LFamily, mtail, start, out: VRange) -> None:
    if ltail.family == "top_indicator":
        vals = [ltail.scale, vconst(0)]
    elif ltail.family == "oscillation":
        # every member attains both 0 and its scale on any surviving stage,
        # except the pure-top stage where only the parity value remains;
        # on full/tops marks both happen infinitely often
        vals = [ltail.scale, vconst(0)]
    else:
        raise LabelError("unknown family %r" % (ltail.family,))
    if isinstance(mtail, (TFull, TTops)):
        if _mtail_io_nonempty(space, mtail):
            for v in vals:
                _merge_val_range(out, v, start)
        return
    if isinstance(mtail, TStage):
        if _mtail_io_nonempty(space, mtail):
            for v in vals:
                _merge_val_range(out, v, start)
        else:
            for k in range(start, start + 4):
                if not _copy_mark_empty(space, mtail, k):
                    out.merge(
                        value_range(
                            copy_space(space, k),
                            copy_lab(space, ltail, k),
                            tail_copy_mark(space, mtail, k),
                        )
                    )
        return
    raise UnsupportedDescriptor(
        "family range over mark tail %r" % (mtail,)
    )


# ---------------------------------------------------------------------------
# Function sequences.


@dataclass(frozen=True)
class SeqEventually:
    """f_n = prefix[n] for small n, then a fixed labeling."""

    prefix: Tuple[Lab, ...]
    tail: Lab


@dataclass(frozen=True)
class SeqTruncate:
    """f_n agrees with the limit on addresses whose copy indices are all
    below n; past the first too-large index it takes the value of the
    enclosing node's Top."""

    limit: Lab


FunSeq = Union[SeqEventually, SeqTruncate]


def seq_member_eval(space: SpaceDesc, seq: FunSeq, n: int, addr: tuple) -> Fraction:
    if isinstance(seq, SeqEventually):
        lab = seq.prefix[n] if n < len(seq.prefix) else seq.tail
        return eval_lab(space, lab, addr)
    return _trunc_eval(space, seq.limit, n, addr)


def seq_limit(space: SpaceDesc, seq: FunSeq) -> Lab:
    return seq.tail if isinstance(seq, SeqEventually) else seq.limit


def _trunc_eval(space: SpaceDesc, lab: Lab, n: int, addr: tuple) -> Fraction:
    if isinstance(space, Singleton):
        return lab.value(0)
    if isinstance(space, FiniteSum):
        return _trunc_eval(space.parts[addr[0]], lab.parts[addr[0]], n, addr[1:])
    if addr == (TOP,):
        return lab.top(0)
    k = addr[0]
    if k >= n:
        return lab.top(0)
    sub = lab.head[k] if k < len(lab.head) else copy_lab(space, lab.tail, k)
    return _trunc_eval(copy_space(space, k), sub, n, addr[1:])


def _install_cached_hash(*classes):
    """Memoise __hash__ on deep frozen descriptors (lookups dominate)."""
    for cls in classes:
        orig = cls.__hash__

        def h(self, _orig=orig):
            v = self.__dict__.get("_hv")
            if v is None:
                v = _orig(self)
                object.__setattr__(self, "_hv", v)
            return v

        cls.__hash__ = h


_install_cached_hash(
    RatVal, LLeaf, LSum, LUniform, LCycle, LIndexed, LConstCopy,
    LFamily, LOmega, SeqEventually, SeqTruncate,
)
