"""Locally constant approximation of step functions away from their
oscillation sets, and the comparison between the oscillation rank of a
function and the convergence rank of approximating sequences.

The spaces handled here are zero-dimensional, so "continuous on a closed
piece" strengthens to "locally constant on a clopen refinement".  The
module builds three artifacts:

* a locally constant function within ``eps`` of a given function off its
  oscillation set (``approximate_off_derivative``);
* a stagewise glued approximant together with the closed far-sets on which
  it is locally constant and the extension sequence converging to it
  pointwise (``p23_witness``);
* a report comparing the oscillation rank of a function with the
  convergence rank of a sequence converging to it
  (``check_beta_leq_gamma``).

Distances are computed through the canonical order embedding of each space
into [0, 1]; every metric neighborhood is a finite union of intervals
there, so far-sets stay inside the finite marking vocabulary.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import lcm
from typing import Dict, Optional, Tuple

from .func import (
    FunSeq,
    Lab,
    LCycle,
    LConstCopy,
    LLeaf,
    LOmega,
    LSum,
    LUniform,
    SeqEventually,
    SeqTruncate,
    UnsupportedDescriptor,
    VRange,
    const_lab,
    copy_lab,
    eval_lab,
    seq_limit,
    value_range,
    vconst,
)
from .derive import (
    EngineError,
    OscPair,
    RankCertificate,
    SeqFun,
    SeqOsc,
    StepFun,
    beta,
    gamma_trunc,
    rank,
    step,
    _eps_grid,
    _lab_period,
    _mark_period,
)
from .ordinal import lesssim, render
from .space import (
    ClosedSet,
    ConstantTail,
    FiniteSum,
    Mark,
    MLeaf,
    MOmega,
    MSum,
    OmegaSum,
    Singleton,
    SpaceDesc,
    TCycle,
    TEmpty,
    TFull,
    TTops,
    TUniform,
    copy_space,
    empty_mark,
    full_mark,
    intersect_marks,
    is_empty_mark,
    mark_contains,
    mark_subset,
    marks_equal,
    normalize_mark,
    sample_points,
    tail_copy_mark,
    union_marks,
)

__all__ = [
    "PartialFun",
    "ApproxBundle",
    "approximate_off_derivative",
    "far_mark",
    "p23_witness",
    "check_beta_leq_gamma",
]


# --------------------------------------------------------------------------
# Result containers


@dataclass(frozen=True)
class PartialFun:
    """A labeling together with the clopen-in-relative-terms region where it
    is certified: defined on ``on`` minus ``off``."""

    space: SpaceDesc
    lab: Lab
    on: Mark
    off: Mark

    def defined_at(self, addr: tuple) -> bool:
        return mark_contains(self.space, self.on, addr) and not mark_contains(
            self.space, self.off, addr
        )


@dataclass(frozen=True)
class ApproxBundle:
    """Glued locally constant approximant with its supporting evidence."""

    g: StepFun
    pieces: Tuple[PartialFun, ...]
    Y_sets: Tuple[ClosedSet, ...]
    h_seq: SeqFun
    metadata: dict


# --------------------------------------------------------------------------
# Supported-vocabulary guards

_SUPPORTED_MARK_TAILS = (TEmpty, TFull, TTops, TUniform, TCycle)


def _require_const_tail(space: OmegaSum) -> None:
    if not isinstance(space.tail, ConstantTail):
        raise UnsupportedDescriptor(
            "approximation is built for spaces whose tail copies repeat a "
            "fixed body"
        )


def _lab_tail_ok(lt) -> None:
    if isinstance(lt, (LUniform, LCycle)):
        return
    if isinstance(lt, LConstCopy):
        v = lt.value
        if len(v.num) <= 1 and len(v.den) <= 1:
            return
        raise UnsupportedDescriptor(
            "tail labeling varies with the copy index; gluing needs an "
            "eventually periodic tail"
        )
    raise UnsupportedDescriptor(
        "tail labeling outside the periodic vocabulary"
    )


def _mark_tail_ok(mt) -> None:
    if not isinstance(mt, _SUPPORTED_MARK_TAILS):
        raise UnsupportedDescriptor(
            "stage sets leave the marking vocabulary"
        )


def _copy_lab(space: OmegaSum, lab: LOmega, k: int) -> Lab:
    if k < len(lab.head):
        return lab.head[k]
    return copy_lab(space, lab.tail, k)


def _copy_mark(space: OmegaSum, m: MOmega, k: int) -> Mark:
    if k < len(m.head):
        return m.head[k]
    return tail_copy_mark(space, m.tail, k)


def _within_strict(vr: VRange, center: Fraction, eps: Fraction) -> bool:
    """Every value in the range lies strictly within ``eps`` of ``center``
    (a non-attained endpoint exactly at distance ``eps`` is fine)."""
    if vr.empty:
        return True
    if vr.unbounded_up or vr.unbounded_down:
        return False
    hi_gap = vr.hi - center
    if hi_gap > eps or (hi_gap == eps and vr.hi_att):
        return False
    lo_gap = center - vr.lo
    if lo_gap > eps or (lo_gap == eps and vr.lo_att):
        return False
    return True


# --------------------------------------------------------------------------
# Stagewise gluing of a locally constant approximant
#
# ``marks`` is a decreasing chain of closed marks (region, first-stage
# oscillation set, second-stage, ...).  A point's stage is the number of
# marks containing it; the approximant must agree with the anchor value of
# the deepest stage whose cell the point inherits, staying strictly within
# ``eps`` of the original function on fresh cells.

_GLUE_MEMO: Dict[tuple, Lab] = {}


def _glue(
    space: SpaceDesc,
    lab: Lab,
    marks: Tuple[Mark, ...],
    eps: Fraction,
    anchors: Tuple[Tuple[int, Fraction], ...],
) -> Lab:
    key = (id(space), lab, marks, eps, anchors)
    hit = _GLUE_MEMO.get(key)
    if hit is not None:
        return hit
    out = _glue_raw(space, lab, marks, eps, anchors)
    _GLUE_MEMO[key] = out
    return out


def _glue_raw(space, lab, marks, eps, anchors) -> Lab:
    anc = dict(anchors)
    if isinstance(space, Singleton):
        s = sum(1 for m in marks if m.on)
        val = anc.get(s, lab.value(0))
        return LLeaf(vconst(val))
    if isinstance(space, FiniteSum):
        parts = []
        for i, part in enumerate(space.parts):
            sub_marks = tuple(m.parts[i] for m in marks)
            parts.append(_glue(part, lab.parts[i], sub_marks, eps, anchors))
        return LSum(tuple(parts))
    # OmegaSum node
    _require_const_tail(space)
    _lab_tail_ok(lab.tail)
    for m in marks:
        _mark_tail_ok(m.tail)
    s_t = sum(1 for m in marks if m.top)
    a_t = anc.get(s_t, lab.top(0))
    if s_t < len(marks) and not isinstance(marks[s_t].tail, TEmpty):
        raise EngineError(
            "stage chain is not closed at this node: the top falls outside "
            "a stage whose tail copies still carry content"
        )
    n0 = len(lab.head)
    for m in marks:
        n0 = max(n0, len(m.head))
    need_check = s_t >= 1 and s_t not in anc
    budget = n0 + 64 + (int(4 / eps) if need_check else 0)
    chosen = None
    for cand in range(n0, budget + 1):
        if need_check:
            vr = value_range(space, lab, marks[s_t - 1], from_index=cand)
            if not _within_strict(vr, a_t, eps):
                continue
        chosen = cand
        break
    if chosen is None:
        raise UnsupportedDescriptor(
            "no flattening window found near this node within the probe "
            "budget"
        )
    heads = []
    for k in range(chosen):
        sub = copy_space(space, k)
        sub_marks = tuple(_copy_mark(space, m, k) for m in marks)
        heads.append(_glue(sub, _copy_lab(space, lab, k), sub_marks, eps, anchors))
    anc[s_t] = a_t
    anchors2 = tuple(sorted(anc.items()))
    period = _lab_period(lab.tail)
    for m in marks:
        period = lcm(period, _mark_period(m.tail))
    slots: list = [None] * period
    for j in range(period):
        k = chosen + j
        sub = copy_space(space, k)
        sub_marks = tuple(_copy_mark(space, m, k) for m in marks)
        slots[k % period] = _glue(
            sub, _copy_lab(space, lab, k), sub_marks, eps, anchors2
        )
    tail = LUniform(slots[0]) if period == 1 else LCycle(tuple(slots))
    return LOmega(vconst(a_t), tuple(heads), tail)


def approximate_off_derivative(f: StepFun, eps, F: ClosedSet) -> PartialFun:
    """A locally constant labeling within ``eps`` of ``f`` everywhere on
    ``F`` except the points where ``f`` oscillates by at least ``eps``."""
    eps = Fraction(eps)
    if eps <= 0:
        raise EngineError("threshold must be positive")
    d1 = step(OscPair(f.lab, eps), F).mark
    g = _glue(f.space, f.lab, (F.mark, d1), eps, ())
    return PartialFun(f.space, g, on=F.mark, off=d1)


# --------------------------------------------------------------------------
# Metric far-sets through the canonical [0, 1] embedding
#
# The embedding sends a node top to the local origin and copy k to the
# interval [1/(k+2), 1/(k+1)], reversing orientation at each nesting.  A
# subtree therefore occupies an affine window ``o + s * [0, 1]`` of the
# line, and the open r-neighborhood of any marked set is a finite union of
# open intervals.


def _extrema(space: SpaceDesc, mark: Mark) -> Optional[Tuple[Fraction, Fraction]]:
    """Attained (min, max) of the local embedding over the marked points,
    or None when the mark is empty.  Infinite tail content contributes its
    infimum 0 (matched by the closed set's top)."""
    if isinstance(space, Singleton):
        return (Fraction(1), Fraction(1)) if mark.on else None
    if isinstance(space, FiniteSum):
        n = len(space.parts)
        best = None
        for i, part in enumerate(space.parts):
            sub = _extrema(part, mark.parts[i])
            if sub is None:
                continue
            lo = (i + sub[0]) / n
            hi = (i + sub[1]) / n
            best = (min(best[0], lo), max(best[1], hi)) if best else (lo, hi)
        return best
    _mark_tail_ok(mark.tail)
    best = (Fraction(0), Fraction(0)) if mark.top else None
    period = _mark_period(mark.tail)
    tail_live = not isinstance(mark.tail, TEmpty)
    if tail_live:
        # Tail content accumulates at the top; its infimum is 0.
        if best is None:
            best = (Fraction(0), Fraction(0))
    scan = len(mark.head) + (period if tail_live else 0)
    for k in range(scan):
        cm = _copy_mark(space, mark, k)
        sub_space = copy_space(space, k)
        sub = _extrema(sub_space, cm)
        if sub is None:
            continue
        lo_k = Fraction(1, k + 2)
        hi_k = Fraction(1, k + 1)
        # local embedding of the copy: lo_k + (1 - inner) * (hi_k - lo_k)
        a = lo_k + (1 - sub[1]) * (hi_k - lo_k)
        b = lo_k + (1 - sub[0]) * (hi_k - lo_k)
        best = (min(best[0], a), max(best[1], b)) if best else (a, b)
        if k >= len(mark.head) and tail_live:
            # The first live tail copy already dominates every later one.
            break
    return best


def _balls(space, mark, o: Fraction, s: Fraction, r: Fraction, out: list) -> None:
    """Append the open r-balls (global coordinates) around the marked
    points of the subtree occupying the affine window o + s*[0,1]."""
    if isinstance(space, Singleton):
        if mark.on:
            p = o + s
            out.append((p - r, p + r))
        return
    if isinstance(space, FiniteSum):
        n = len(space.parts)
        for i, part in enumerate(space.parts):
            _balls(part, mark.parts[i], o + s * Fraction(i, n), s / n, r, out)
        return
    _mark_tail_ok(mark.tail)
    if mark.top:
        out.append((o - r, o + r))
    tail_live = not isinstance(mark.tail, TEmpty)
    local_r = r / abs(s)
    horizon = len(mark.head)
    if tail_live:
        while Fraction(1, horizon + 1) > local_r:
            horizon += 1
    for k in range(horizon):
        cm = _copy_mark(space, mark, k)
        if is_empty_mark(copy_space(space, k), cm):
            continue
        lo_k = Fraction(1, k + 2)
        hi_k = Fraction(1, k + 1)
        _balls(copy_space(space, k), cm, o + s * hi_k, -s * (hi_k - lo_k), r, out)
    if tail_live:
        # Copies past the horizon sit within r of the top coordinate, and
        # consecutive content gaps stay below r, so their balls merge into
        # one interval reaching the farthest remaining content point.
        period = _mark_period(mark.tail)
        far = None
        for k in range(horizon, horizon + period):
            cm = _copy_mark(space, mark, k)
            ext = _extrema(copy_space(space, k), cm)
            if ext is None:
                continue
            lo_k = Fraction(1, k + 2)
            hi_k = Fraction(1, k + 1)
            local = lo_k + (1 - ext[0]) * (hi_k - lo_k)
            far = o + s * local
            break
        if far is not None:
            out.append((min(o, far) - r, max(o, far) + r))


def _merge(intervals: list) -> list:
    ivs = sorted(intervals)
    merged: list = []
    for a, b in ivs:
        if merged and a < merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    return merged


def _complement_segments(balls: list) -> list:
    """Closed segments of [0, 1] not covered by the open ball union."""
    segs = []
    cursor = Fraction(0)
    for a, b in balls:
        if b <= Fraction(0):
            continue
        if a > Fraction(1):
            break
        if a >= cursor:
            segs.append((cursor, min(a, Fraction(1))))
        cursor = max(cursor, b)
        if cursor >= 1:
            break
    if cursor <= 1:
        segs.append((cursor, Fraction(1)))
    return [(a, b) for a, b in segs if a <= b]


def _seg_contains(segs, x) -> bool:
    return any(a <= x <= b for a, b in segs)


def _interval_mark(space, segs, o: Fraction, s: Fraction) -> Mark:
    """Mark of the points whose embedding coordinate lies in the closed
    segment union, restricted to the window o + s*[0,1]."""
    if isinstance(space, Singleton):
        return MLeaf(_seg_contains(segs, o + s))
    if isinstance(space, FiniteSum):
        n = len(space.parts)
        return MSum(
            tuple(
                _interval_mark(part, segs, o + s * Fraction(i, n), s / n)
                for i, part in enumerate(space.parts)
            )
        )
    topm = _seg_contains(segs, o)
    # Find a horizon past which copies are uniformly inside or outside:
    # no segment endpoint may fall within the residual window.
    horizon = 0
    for a, b in segs:
        for endpoint in (a, b):
            t = (endpoint - o) / s
            if 0 < t <= 1:
                while Fraction(1, horizon + 1) >= t:
                    horizon += 1
    probe = o + s * Fraction(1, 2 * (horizon + 1))
    uniform_in = _seg_contains(segs, probe)
    heads = []
    for k in range(horizon):
        lo_k = Fraction(1, k + 2)
        hi_k = Fraction(1, k + 1)
        e1 = o + s * lo_k
        e2 = o + s * hi_k
        glo, ghi = (e1, e2) if e1 <= e2 else (e2, e1)
        sub = copy_space(space, k)
        if any(a <= glo and ghi <= b for a, b in segs):
            heads.append(full_mark(sub))
        elif all(b < glo or ghi < a for a, b in segs):
            heads.append(empty_mark(sub))
        else:
            heads.append(_interval_mark(sub, segs, o + s * hi_k, -s * (hi_k - lo_k)))
    tail = TFull() if uniform_in else TEmpty()
    return normalize_mark(space, MOmega(top=topm, head=tuple(heads), tail=tail))


def far_mark(space: SpaceDesc, mark: Mark, r) -> Mark:
    """Closed mark of the points at distance >= r from the marked set,
    computed through the canonical embedding."""
    r = Fraction(r)
    if r <= 0:
        raise EngineError("distance threshold must be positive")
    if is_empty_mark(space, mark):
        return full_mark(space)
    balls: list = []
    _balls(space, mark, Fraction(0), Fraction(1), r, balls)
    segs = _complement_segments(_merge(balls))
    if not segs:
        return empty_mark(space)
    return _interval_mark(space, segs, Fraction(0), Fraction(1))


# --------------------------------------------------------------------------
# Locally constant extension along a closed far-set


def _local_ext(space: SpaceDesc, g_lab: Lab, ym: Mark) -> Lab:
    """A locally constant labeling on the whole space agreeing with
    ``g_lab`` on the closed mark ``ym``."""
    if isinstance(space, Singleton):
        return LLeaf(vconst(g_lab.value(0)))
    if isinstance(space, FiniteSum):
        return LSum(
            tuple(
                _local_ext(part, g_lab.parts[i], ym.parts[i])
                for i, part in enumerate(space.parts)
            )
        )
    _require_const_tail(space)
    _lab_tail_ok(g_lab.tail)
    _mark_tail_ok(ym.tail)
    gt = g_lab.top(0)
    n0 = max(len(ym.head), len(g_lab.head))
    if ym.top:
        chosen = None
        for cand in range(n0, n0 + 129):
            vr = value_range(space, g_lab, ym, from_index=cand)
            if vr.empty or (
                not vr.unbounded_up
                and not vr.unbounded_down
                and vr.lo == gt == vr.hi
            ):
                chosen = cand
                break
        if chosen is None:
            raise UnsupportedDescriptor(
                "no constant window found above this node within the probe "
                "budget"
            )
    else:
        if not isinstance(ym.tail, TEmpty):
            raise EngineError(
                "far-set is not closed at this node: content accumulates at "
                "an excluded top"
            )
        chosen = n0
    heads = tuple(
        _local_ext(
            copy_space(space, k),
            _copy_lab(space, g_lab, k),
            _copy_mark(space, ym, k),
        )
        for k in range(chosen)
    )
    body = space.tail.body
    return LOmega(vconst(gt), heads, LUniform(const_lab(body, gt)))


# --------------------------------------------------------------------------
# Full stagewise witness


def p23_witness(f: StepFun, eps, max_stage: int = 8, n_far: int = 6) -> ApproxBundle:
    """Stagewise locally constant approximant of ``f`` within ``eps``,
    together with the closed far-sets, the extension sequence, and the
    validated containment of the sequence's oscillation stages inside the
    function's."""
    eps = Fraction(eps)
    if eps <= 0:
        raise EngineError("threshold must be positive")
    space = f.space
    full = full_mark(space)
    marks = [full]
    while not is_empty_mark(space, marks[-1]):
        if len(marks) > max_stage:
            raise UnsupportedDescriptor(
                "oscillation stages did not vanish within the stage budget"
            )
        marks.append(step(OscPair(f.lab, eps), ClosedSet(space, marks[-1])).mark)
    g_lab = _glue(space, f.lab, tuple(marks[: len(marks) - 1]) or (full,), eps, ())
    # Sampled closeness check of the glued approximant.
    for addr in sample_points(space, 6, depth=4):
        gap = abs(eval_lab(space, g_lab, addr) - eval_lab(space, f.lab, addr))
        if gap >= eps:
            raise EngineError(
                "glued approximant drifted out of the threshold at a sampled "
                "point"
            )
    # Far-sets: intersection over stages of (far from stage) union (stage).
    y_marks = []
    for n in range(1, n_far + 1):
        ym = full
        for dm in marks[1:]:
            if is_empty_mark(space, dm):
                continue
            layer = union_marks(space, far_mark(space, dm, Fraction(1, n)), dm)
            ym = intersect_marks(space, ym, layer)
        y_marks.append(ym)
    h_labs = tuple(_local_ext(space, g_lab, ym) for ym in y_marks)
    seq = SeqEventually(h_labs, g_lab)
    h_seq = SeqFun(space, seq)
    # Containment: oscillation stages of the sequence sit inside those of f.
    for eta in (eps, eps / 2):
        cur = ClosedSet(space, full)
        for alpha in range(1, 4):
            cur = step(SeqOsc(seq, eta), cur)
            target = marks[alpha] if alpha < len(marks) else empty_mark(space)
            if not mark_subset(space, cur.mark, target):
                raise EngineError(
                    "sequence oscillation stage escaped the function's stage "
                    "at depth %d" % alpha
                )
    pieces = []
    for stage in range(len(marks) - 1):
        nxt = marks[stage + 1] if stage + 1 < len(marks) else empty_mark(space)
        pieces.append(PartialFun(space, g_lab, on=marks[stage], off=nxt))
    return ApproxBundle(
        g=StepFun(space, g_lab),
        pieces=tuple(pieces),
        Y_sets=tuple(ClosedSet(space, ym) for ym in y_marks),
        h_seq=h_seq,
        metadata={
            "style": "locally_constant",
            "metric": "canonical_embedding",
            "stages": len(marks) - 1,
            "epsilon": str(eps),
        },
    )


# --------------------------------------------------------------------------
# Rank comparison


def check_beta_leq_gamma(f: StepFun, seq, eps=None) -> dict:
    """Compare the oscillation rank of ``f`` with the convergence rank of a
    sequence converging pointwise to it.  Both ranks are reported; equality
    is never asserted."""
    if isinstance(seq, SeqFun):
        sf = seq
    else:
        sf = SeqFun(f.space, seq)
    if sf.space is not f.space and sf.space != f.space:
        raise EngineError("sequence lives on a different space")
    lim = seq_limit(f.space, sf.seq)
    for addr in sample_points(f.space, 5, depth=4):
        if eval_lab(f.space, lim, addr) != eval_lab(f.space, f.lab, addr):
            raise EngineError(
                "sequence does not converge to the function at a sampled "
                "point"
            )
    beta_cert = beta(f, eps)
    if eps is not None:
        gamma_cert = gamma_trunc(sf, eps)
    else:
        grid = _eps_grid(f.lab)
        gamma_cert = gamma_trunc(sf, grid[0] if grid else Fraction(1))
    truncation = isinstance(sf.seq, SeqTruncate)
    report = {
        "beta": render(beta_cert.rank),
        "gamma": render(gamma_cert.rank),
        "beta_leq_gamma": beta_cert.rank <= gamma_cert.rank,
        "truncation": truncation,
        "converges_on_samples": True,
    }
    if truncation:
        report["essentially_equivalent"] = lesssim(
            beta_cert.rank, gamma_cert.rank
        ) and lesssim(gamma_cert.rank, beta_cert.rank)
    return report
