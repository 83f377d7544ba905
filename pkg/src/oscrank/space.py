"""Countable compact spaces presented as tree descriptors, with closed
subsets ("marks") and the point-removal (isolated point) machinery.

A descriptor is one of
  Singleton            -- a single isolated point
  FiniteSum(parts)     -- disjoint clopen union, in order
  OmegaSum(prefix, tail) -- infinitely many clopen copies converging to
                            one extra limit point (the node's Top)

Tails are either ConstantTail(body), every copy beyond the prefix being
the same descriptor, or CanonicalTail(limit), copy k being the standard
space of the k-th approximant of a limit ordinal.  Every descriptor is
homeomorphic to a countable successor ordinal interval [1, w^a * n].

Marks mirror descriptors.  Infinite tails of a mark are described
symbolically; TStage(sigma, base) denotes the sigma-th iterated
isolated-point removal of the base pattern, applied copy by copy.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Tuple, Union

from .ordinal import (
    ONE,
    ZERO,
    Ordinal,
    add,
    fundamental_seq,
    left_subtract,
    pred,
    succ,
)


class SpaceError(ValueError):
    """Malformed descriptor, mark, or point address."""


class UnsupportedDescriptor(SpaceError):
    """Structurally valid input outside the computable fragment."""


TOP = "top"


# ---------------------------------------------------------------------------
# Descriptors.


@dataclass(frozen=True)
class Singleton:
    pass


@dataclass(frozen=True)
class FiniteSum:
    parts: Tuple["SpaceDesc", ...]

    def __post_init__(self) -> None:
        if len(self.parts) < 1:
            raise SpaceError("FiniteSum needs at least one part")


@dataclass(frozen=True)
class ConstantTail:
    body: "SpaceDesc"


@dataclass(frozen=True)
class CanonicalTail:
    limit: Ordinal

    def __post_init__(self) -> None:
        if not self.limit.is_limit:
            raise SpaceError("CanonicalTail needs a limit ordinal")


@dataclass(frozen=True)
class OmegaSum:
    prefix: Tuple["SpaceDesc", ...]
    tail: Union[ConstantTail, CanonicalTail]


SpaceDesc = Union[Singleton, FiniteSum, OmegaSum]


def copy_space(space: OmegaSum, k: int) -> SpaceDesc:
    """Descriptor of the k-th copy of an OmegaSum node."""
    if k < len(space.prefix):
        return space.prefix[k]
    if isinstance(space.tail, ConstantTail):
        return space.tail.body
    return canonical_space(fundamental_seq(space.tail.limit, k))


_CANONICAL_CACHE: dict = {}


def canonical_space(kappa: Ordinal) -> SpaceDesc:
    """Standard descriptor of the interval [1, w^kappa]."""
    if kappa in _CANONICAL_CACHE:
        return _CANONICAL_CACHE[kappa]
    if kappa.is_zero:
        out: SpaceDesc = Singleton()
    elif kappa.is_successor:
        out = OmegaSum((), ConstantTail(canonical_space(pred(kappa))))
    else:
        out = OmegaSum((), CanonicalTail(kappa))
    _CANONICAL_CACHE[kappa] = out
    return out


def ordinal_type(space: SpaceDesc) -> Tuple[Ordinal, int]:
    """(a, n) with the space homeomorphic to [1, w^a * n]."""
    if isinstance(space, Singleton):
        return ZERO, 1
    if isinstance(space, FiniteSum):
        types = [ordinal_type(p) for p in space.parts]
        top_exp = max(t[0] for t in types)
        return top_exp, sum(n for e, n in types if e == top_exp)
    if isinstance(space, OmegaSum):
        if isinstance(space.tail, ConstantTail):
            body_exp, _ = ordinal_type(space.tail.body)
            tail_exp = succ(body_exp)
        else:
            tail_exp = space.tail.limit
        cands = [ordinal_type(p) for p in space.prefix] + [(tail_exp, 1)]
        top_exp = max(t[0] for t in cands)
        return top_exp, sum(n for e, n in cands if e == top_exp)
    raise SpaceError("not a descriptor: %r" % (space,))


def space_rank(space: SpaceDesc) -> Ordinal:
    """Least sigma making the sigma-th point removal empty: exponent + 1."""
    exp, _ = ordinal_type(space)
    return succ(exp)


# ---------------------------------------------------------------------------
# Points.  An address is a tuple of copy/part indices, ending either at a
# Singleton (leaf) or with the TOP token naming an OmegaSum limit point.


def contains_point(space: SpaceDesc, addr: tuple) -> bool:
    if isinstance(space, Singleton):
        return addr == ()
    if isinstance(space, FiniteSum):
        return (
            len(addr) >= 1
            and isinstance(addr[0], int)
            and 0 <= addr[0] < len(space.parts)
            and contains_point(space.parts[addr[0]], addr[1:])
        )
    if isinstance(space, OmegaSum):
        if addr == (TOP,):
            return True
        return (
            len(addr) >= 1
            and isinstance(addr[0], int)
            and addr[0] >= 0
            and contains_point(copy_space(space, addr[0]), addr[1:])
        )
    return False


def max_point(space: SpaceDesc) -> tuple:
    """Address of the greatest point in the interval ordering."""
    if isinstance(space, Singleton):
        return ()
    if isinstance(space, FiniteSum):
        i = len(space.parts) - 1
        return (i,) + max_point(space.parts[i])
    return (TOP,)


def sample_points(space: SpaceDesc, width: int, depth: int = 12) -> list:
    """All addresses using copy indices below `width` (plus Tops)."""
    if depth < 0:
        return []
    if isinstance(space, Singleton):
        return [()]
    if isinstance(space, FiniteSum):
        out = []
        for i, part in enumerate(space.parts):
            out.extend((i,) + a for a in sample_points(part, width, depth - 1))
        return out
    out = [(TOP,)]
    for k in range(width):
        out.extend((k,) + a for a in sample_points(copy_space(space, k), width, depth - 1))
    return out


# ---------------------------------------------------------------------------
# Metric embedding into [0, 1].  Tops sit at the left of their node's
# image; copy k fills [1/(k+2), 1/(k+1)] in reverse orientation.


def embed(space: SpaceDesc, addr: tuple) -> Fraction:
    if not contains_point(space, addr):
        raise SpaceError("address %r not in descriptor" % (addr,))
    return _embed(space, addr)


def _embed(space: SpaceDesc, addr: tuple) -> Fraction:
    if isinstance(space, Singleton):
        return Fraction(1)
    if isinstance(space, FiniteSum):
        i = addr[0]
        inner = _embed(space.parts[i], addr[1:])
        return Fraction(i + inner, len(space.parts))
    if addr == (TOP,):
        return Fraction(0)
    k = addr[0]
    inner = _embed(copy_space(space, k), addr[1:])
    lo = Fraction(1, k + 2)
    hi = Fraction(1, k + 1)
    return lo + (1 - inner) * (hi - lo)


def metric_dist(space: SpaceDesc, a: tuple, b: tuple) -> Fraction:
    return abs(embed(space, a) - embed(space, b))


# ---------------------------------------------------------------------------
# Marks (closed subsets).


@dataclass(frozen=True)
class MLeaf:
    on: bool


@dataclass(frozen=True)
class MSum:
    parts: Tuple["Mark", ...]


@dataclass(frozen=True)
class TEmpty:
    pass


@dataclass(frozen=True)
class TFull:
    pass


@dataclass(frozen=True)
class TTops:
    """The greatest point of each copy, nothing else."""


@dataclass(frozen=True)
class TUniform:
    mark: "Mark"


@dataclass(frozen=True)
class TCycle:
    marks: Tuple["Mark", ...]


@dataclass(frozen=True)
class TStage:
    """Copy k carries the sigma-th point removal of the base pattern."""

    sigma: Ordinal
    base: Union[TFull, TTops]


TailMark = Union[TEmpty, TFull, TTops, TUniform, TCycle, TStage]


@dataclass(frozen=True)
class MOmega:
    top: bool
    head: Tuple["Mark", ...]
    tail: TailMark


Mark = Union[MLeaf, MSum, MOmega]


_FULL_MEMO: dict = {}


def full_mark(space: SpaceDesc) -> Mark:
    cached = _FULL_MEMO.get(space)
    if cached is not None:
        return cached
    out = _full_mark_raw(space)
    _FULL_MEMO[space] = out
    return out


def _full_mark_raw(space: SpaceDesc) -> Mark:
    if isinstance(space, Singleton):
        return MLeaf(True)
    if isinstance(space, FiniteSum):
        return MSum(tuple(full_mark(p) for p in space.parts))
    return MOmega(True, tuple(full_mark(p) for p in space.prefix), TFull())


def empty_mark(space: SpaceDesc) -> Mark:
    if isinstance(space, Singleton):
        return MLeaf(False)
    if isinstance(space, FiniteSum):
        return MSum(tuple(empty_mark(p) for p in space.parts))
    return MOmega(False, tuple(empty_mark(p) for p in space.prefix), TEmpty())


def point_mark(space: SpaceDesc, addr: tuple, on_top: bool = True) -> Mark:
    """Mark of the singleton {addr} (on_top=False gives the empty variant)."""
    return mark_from_points(space, [addr])


def mark_from_points(space: SpaceDesc, addrs: list) -> Mark:
    for a in addrs:
        if not contains_point(space, a):
            raise SpaceError("address %r not in descriptor" % (a,))
    return _from_points(space, addrs)


def _from_points(space: SpaceDesc, addrs: list) -> Mark:
    if isinstance(space, Singleton):
        return MLeaf(bool(addrs))
    if isinstance(space, FiniteSum):
        return MSum(
            tuple(
                _from_points(p, [a[1:] for a in addrs if a and a[0] == i])
                for i, p in enumerate(space.parts)
            )
        )
    top = (TOP,) in addrs
    rest = [a for a in addrs if a != (TOP,)]
    width = max([a[0] + 1 for a in rest], default=0)
    width = max(width, len(space.prefix))
    head = tuple(
        _from_points(copy_space(space, k), [a[1:] for a in rest if a[0] == k])
        for k in range(width)
    )
    return MOmega(top, head, TEmpty())


def tops_mark(space: SpaceDesc) -> Mark:
    """Every OmegaSum limit point together with every copy's greatest point."""
    if isinstance(space, Singleton):
        return MLeaf(True)
    if isinstance(space, FiniteSum):
        return MSum(tuple(tops_mark(p) for p in space.parts))
    return MOmega(True, tuple(_copy_max_mark(p) for p in space.prefix), TTops())


def _copy_max_mark(space: SpaceDesc) -> Mark:
    return mark_from_points(space, [max_point(space)])


def tail_copy_mark(space: OmegaSum, tail: TailMark, k: int) -> Mark:
    """Materialise the mark on copy k described by a tail pattern."""
    sub = copy_space(space, k)
    if isinstance(tail, TEmpty):
        return empty_mark(sub)
    if isinstance(tail, TFull):
        return full_mark(sub)
    if isinstance(tail, TTops):
        return _copy_max_mark(sub)
    if isinstance(tail, TUniform):
        return tail.mark
    if isinstance(tail, TCycle):
        return tail.marks[k % len(tail.marks)]
    if isinstance(tail, TStage):
        return cb_stage(sub, tail_copy_mark(space, tail.base, k), tail.sigma)
    raise SpaceError("not a tail mark: %r" % (tail,))


def _check_tail_shape(space: OmegaSum, tail: TailMark) -> None:
    if isinstance(tail, (TUniform, TCycle)) and not isinstance(
        space.tail, ConstantTail
    ):
        raise UnsupportedDescriptor("per-copy uniform tails need a constant body")


def mark_contains(space: SpaceDesc, mark: Mark, addr: tuple) -> bool:
    if isinstance(space, Singleton):
        return bool(mark.on) and addr == ()
    if isinstance(space, FiniteSum):
        i = addr[0]
        return mark_contains(space.parts[i], mark.parts[i], addr[1:])
    if addr == (TOP,):
        return mark.top
    k = addr[0]
    if k < len(mark.head):
        sub_mark = mark.head[k]
    else:
        sub_mark = tail_copy_mark(space, mark.tail, k)
    return mark_contains(copy_space(space, k), sub_mark, addr[1:])


# ---------------------------------------------------------------------------
# Tail analysis shared by emptiness, closedness and the removal process.
# For copy index k let r_k be the removal rank of the copy's mark.  We
# need two aggregates: the supremum of the r_k, and the "limit support"
#   D = least sigma with { k : r_k > sigma } finite,
# which controls how long the node's Top stays a limit of the tail.


def _canonical_limit(space: OmegaSum) -> Ordinal:
    assert isinstance(space.tail, CanonicalTail)
    return space.tail.limit


_PROFILE_MEMO: dict = {}


def tail_rank_profile(space: OmegaSum, tail: TailMark) -> Tuple[Ordinal, Ordinal]:
    """(sup of copy ranks, limit support D) for a tail pattern."""
    key = (space, tail)
    cached = _PROFILE_MEMO.get(key)
    if cached is not None:
        return cached
    out = _tail_rank_profile_raw(space, tail)
    _PROFILE_MEMO[key] = out
    return out


def _tail_rank_profile_raw(space: OmegaSum, tail: TailMark) -> Tuple[Ordinal, Ordinal]:
    _check_tail_shape(space, tail)
    if isinstance(tail, TEmpty):
        return ZERO, ZERO
    if isinstance(tail, (TUniform, TCycle)):
        body = space.tail.body
        marks = (tail.mark,) if isinstance(tail, TUniform) else tail.marks
        ranks = [cb_rank(body, m) for m in marks]
        r = max(ranks)
        return r, r
    if isinstance(tail, TTops):
        if isinstance(space.tail, ConstantTail):
            r = cb_rank(space.tail.body, _copy_max_mark(space.tail.body))
        else:
            r = ONE
        return r, r
    if isinstance(tail, TFull):
        if isinstance(space.tail, ConstantTail):
            r = space_rank(space.tail.body)
            return r, r
        lam = _canonical_limit(space)
        # copy ranks are approximants + 1, increasing to the limit
        return lam, lam
    if isinstance(tail, TStage):
        sup0, d0 = tail_rank_profile(space, tail.base)
        s = tail.sigma
        sup = left_subtract(s, sup0) if s <= sup0 else ZERO
        d = left_subtract(s, d0) if s <= d0 else ZERO
        return sup, d
    raise SpaceError("not a tail mark: %r" % (tail,))


def tail_io_nonempty(space: OmegaSum, tail: TailMark) -> bool:
    """Do infinitely many copies carry a nonempty mark?"""
    _, d = tail_rank_profile(space, tail)
    return d > ZERO


def _normalize_tail(space: OmegaSum, tail: TailMark) -> TailMark:
    _check_tail_shape(space, tail)
    if isinstance(tail, TUniform):
        m = normalize_mark(space.tail.body, tail.mark)
        if is_empty_mark(space.tail.body, m):
            return TEmpty()
        if m == full_mark(space.tail.body):
            return TFull()
        return TUniform(m)
    if isinstance(tail, TCycle):
        body = space.tail.body
        marks = tuple(normalize_mark(body, m) for m in tail.marks)
        if all(m == marks[0] for m in marks):
            return _normalize_tail(space, TUniform(marks[0]))
        return TCycle(marks)
    if isinstance(tail, TStage):
        if tail.sigma.is_zero:
            return tail.base
        sup, _ = tail_rank_profile(space, tail)
        if sup.is_zero:
            return TEmpty()
        if isinstance(space.tail, ConstantTail):
            return _normalize_tail(
                space,
                TUniform(
                    cb_stage(
                        space.tail.body,
                        tail_copy_mark(space, tail.base, len(space.prefix)),
                        tail.sigma,
                    )
                ),
            )
        return tail
    return tail


_NORM_MEMO: dict = {}


def normalize_mark(space: SpaceDesc, mark: Mark) -> Mark:
    key = (space, mark)
    cached = _NORM_MEMO.get(key)
    if cached is not None:
        return cached
    out = _normalize_mark_raw(space, mark)
    _NORM_MEMO[key] = out
    _NORM_MEMO[(space, out)] = out
    return out


def _normalize_mark_raw(space: SpaceDesc, mark: Mark) -> Mark:
    if isinstance(space, Singleton):
        return mark
    if isinstance(space, FiniteSum):
        return MSum(
            tuple(normalize_mark(p, m) for p, m in zip(space.parts, mark.parts))
        )
    tail = _normalize_tail(space, mark.tail)
    head = list(mark.head)
    while len(head) < len(space.prefix):
        head.append(tail_copy_mark(space, tail, len(head)))
    head = [
        normalize_mark(copy_space(space, k), m) for k, m in enumerate(head)
    ]
    while len(head) > len(space.prefix):
        k = len(head) - 1
        implied = normalize_mark(
            copy_space(space, k), tail_copy_mark(space, tail, k)
        )
        if implied != head[-1]:
            break
        head.pop()
    return MOmega(mark.top, tuple(head), tail)


def is_empty_mark(space: SpaceDesc, mark: Mark) -> bool:
    return _is_empty(space, normalize_mark(space, mark))


def _is_empty(space: SpaceDesc, mark: Mark) -> bool:
    if isinstance(space, Singleton):
        return not mark.on
    if isinstance(space, FiniteSum):
        return all(is_empty_mark(p, m) for p, m in zip(space.parts, mark.parts))
    if mark.top:
        return False
    if any(
        not is_empty_mark(copy_space(space, k), m) for k, m in enumerate(mark.head)
    ):
        return False
    sup, _ = tail_rank_profile(space, mark.tail)
    return sup.is_zero


def validate_closed(space: SpaceDesc, mark: Mark) -> bool:
    """A mark is closed iff every Top below which infinitely many copies
    are marked is itself marked."""
    return _validate_closed(space, normalize_mark(space, mark))


def _validate_closed(space: SpaceDesc, mark: Mark) -> bool:
    if isinstance(space, Singleton):
        return True
    if isinstance(space, FiniteSum):
        return all(validate_closed(p, m) for p, m in zip(space.parts, mark.parts))
    if tail_io_nonempty(space, mark.tail) and not mark.top:
        return False
    for k, m in enumerate(mark.head):
        if not _validate_closed(copy_space(space, k), m):
            return False
    if isinstance(mark.tail, TUniform):
        return validate_closed(space.tail.body, mark.tail.mark)
    if isinstance(mark.tail, TCycle):
        return all(validate_closed(space.tail.body, m) for m in mark.tail.marks)
    # TEmpty / TFull / TTops / TStage tails are closed copy by copy
    return True


# ---------------------------------------------------------------------------
# Boolean combinations.


def _combine_tails(space: OmegaSum, a: TailMark, b: TailMark, op: str):
    """Combine two tail patterns, or return None to force materialisation."""
    union = op == "union"
    if isinstance(a, TEmpty):
        return b if union else a
    if isinstance(b, TEmpty):
        return a if union else b
    if isinstance(a, TFull):
        return a if union else b
    if isinstance(b, TFull):
        return b if union else a
    if a == b:
        return a
    if isinstance(space.tail, ConstantTail):
        return None  # constant bodies: combine copies explicitly via TCycle
    if isinstance(a, TStage) and isinstance(b, TStage) and a.base == b.base:
        hi, lo = (a, b) if b.sigma <= a.sigma else (b, a)
        return lo if union else hi
    raise UnsupportedDescriptor(
        "cannot combine tail patterns %r and %r" % (a, b)
    )


def _binary(space: SpaceDesc, a: Mark, b: Mark, op: str) -> Mark:
    if isinstance(space, Singleton):
        return MLeaf(a.on or b.on) if op == "union" else MLeaf(a.on and b.on)
    if isinstance(space, FiniteSum):
        return MSum(
            tuple(
                _binary(p, x, y, op)
                for p, x, y in zip(space.parts, a.parts, b.parts)
            )
        )
    top = (a.top or b.top) if op == "union" else (a.top and b.top)
    width = max(len(a.head), len(b.head))
    tail = _combine_tails(space, a.tail, b.tail, op)
    if tail is None:
        # constant-body tails: realise both as cycles and combine pointwise
        pa, pb = _tail_period(a.tail), _tail_period(b.tail)
        period = pa * pb // _gcd(pa, pb)
        body = space.tail.body
        cyc = tuple(
            _binary(
                body,
                _tail_cycle_entry(space, a.tail, width + i),
                _tail_cycle_entry(space, b.tail, width + i),
                op,
            )
            for i in range(period)
        )
        # keep alignment: cycles are indexed by absolute copy position
        shift = width % period
        cyc = cyc[-shift:] + cyc[:-shift] if shift else cyc
        tail = _normalize_tail(space, TCycle(cyc))
    head = tuple(
        _binary(
            copy_space(space, k),
            a.head[k] if k < len(a.head) else tail_copy_mark(space, a.tail, k),
            b.head[k] if k < len(b.head) else tail_copy_mark(space, b.tail, k),
            op,
        )
        for k in range(width)
    )
    return MOmega(top, head, tail)


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a


def _tail_period(tail: TailMark) -> int:
    return len(tail.marks) if isinstance(tail, TCycle) else 1


def _tail_cycle_entry(space: OmegaSum, tail: TailMark, k: int) -> Mark:
    return tail_copy_mark(space, tail, k)


def union_marks(space: SpaceDesc, a: Mark, b: Mark) -> Mark:
    return normalize_mark(space, _binary(space, a, b, "union"))


def intersect_marks(space: SpaceDesc, a: Mark, b: Mark) -> Mark:
    return normalize_mark(space, _binary(space, a, b, "intersect"))


_EQ_PROBE = 6


def marks_equal(space: SpaceDesc, a: Mark, b: Mark) -> bool:
    a = normalize_mark(space, a)
    b = normalize_mark(space, b)
    return _marks_equal(space, a, b)


def _marks_equal(space: SpaceDesc, a: Mark, b: Mark) -> bool:
    if isinstance(space, Singleton):
        return a.on == b.on
    if isinstance(space, FiniteSum):
        return all(
            _marks_equal(p, x, y) for p, x, y in zip(space.parts, a.parts, b.parts)
        )
    if a.top != b.top:
        return False
    width = max(len(a.head), len(b.head))
    for k in range(width):
        ma = a.head[k] if k < len(a.head) else tail_copy_mark(space, a.tail, k)
        mb = b.head[k] if k < len(b.head) else tail_copy_mark(space, b.tail, k)
        if not _marks_equal(copy_space(space, k), ma, mb):
            return False
    if a.tail == b.tail:
        return True
    # distinct symbolic tails: probe a window of copies and compare the
    # rank aggregates that determine behaviour at infinity
    for k in range(width, width + _EQ_PROBE):
        if not _marks_equal(
            copy_space(space, k),
            tail_copy_mark(space, a.tail, k),
            tail_copy_mark(space, b.tail, k),
        ):
            return False
    return tail_rank_profile(space, a.tail) == tail_rank_profile(space, b.tail)


def mark_subset(space: SpaceDesc, a: Mark, b: Mark) -> bool:
    return marks_equal(space, intersect_marks(space, a, b), a)


# ---------------------------------------------------------------------------
# Iterated isolated-point removal (the rank machinery for bare spaces).


def cb_step(space: SpaceDesc, mark: Mark) -> Mark:
    return cb_stage(space, mark, ONE)


def cb_stage(space: SpaceDesc, mark: Mark, sigma: Ordinal) -> Mark:
    """The sigma-th iterated removal of points isolated within the mark."""
    mark = normalize_mark(space, mark)
    if sigma.is_zero:
        return mark
    out = _cb_stage(space, mark, sigma)
    return normalize_mark(space, out)


def _cb_stage(space: SpaceDesc, mark: Mark, sigma: Ordinal) -> Mark:
    if isinstance(space, Singleton):
        return MLeaf(False)
    if isinstance(space, FiniteSum):
        return MSum(
            tuple(
                _cb_stage(p, m, sigma) for p, m in zip(space.parts, mark.parts)
            )
        )
    head = tuple(
        cb_stage(copy_space(space, k), m, sigma) for k, m in enumerate(mark.head)
    )
    tail = _stage_tail(space, mark.tail, sigma)
    _, d = tail_rank_profile(space, mark.tail)
    top = mark.top and sigma <= d
    return MOmega(top, head, tail)


def _stage_tail(space: OmegaSum, tail: TailMark, sigma: Ordinal) -> TailMark:
    if isinstance(tail, TEmpty):
        return tail
    if isinstance(space.tail, ConstantTail):
        body = space.tail.body
        if isinstance(tail, TCycle):
            return _normalize_tail(
                space, TCycle(tuple(cb_stage(body, m, sigma) for m in tail.marks))
            )
        base = tail_copy_mark(space, tail, len(space.prefix))
        return _normalize_tail(space, TUniform(cb_stage(body, base, sigma)))
    if isinstance(tail, TStage):
        return _normalize_tail(space, TStage(add(tail.sigma, sigma), tail.base))
    if isinstance(tail, (TFull, TTops)):
        return _normalize_tail(space, TStage(sigma, tail))
    raise UnsupportedDescriptor("cannot stage tail %r" % (tail,))


@dataclass(frozen=True)
class ClosedSet:
    """A closed subset of a space, given by a marking descriptor."""

    space: SpaceDesc
    mark: Mark


def cb_iterate(A: ClosedSet, kappa: Ordinal) -> ClosedSet:
    """The kappa-th iterated accumulation set of a closed set."""
    if not validate_closed(A.space, A.mark):
        raise UnsupportedDescriptor("marking is not closed")
    return ClosedSet(A.space, cb_stage(A.space, A.mark, kappa))


def cb_rank(space: SpaceDesc, mark: Mark) -> Ordinal:
    """Least sigma with cb_stage(space, mark, sigma) empty."""
    return _cb_rank(space, normalize_mark(space, mark))


def _cb_rank(space: SpaceDesc, mark: Mark) -> Ordinal:
    if isinstance(space, Singleton):
        return ONE if mark.on else ZERO
    if isinstance(space, FiniteSum):
        return max(
            (_cb_rank(p, m) for p, m in zip(space.parts, mark.parts)),
            default=ZERO,
        )
    cands = [_cb_rank(copy_space(space, k), m) for k, m in enumerate(mark.head)]
    sup, d = tail_rank_profile(space, mark.tail)
    cands.append(sup)
    if mark.top:
        cands.append(succ(d))
    return max(cands) if cands else ZERO


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
    Singleton, FiniteSum, ConstantTail, CanonicalTail, OmegaSum,
    MLeaf, MSum, TEmpty, TFull, TTops, TUniform, TCycle, TStage,
    MOmega, ClosedSet,
)
