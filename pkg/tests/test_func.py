"""Tests for step-function labelings: slots, algebra, ranges, sequences."""

import random
from fractions import Fraction

import pytest

from oscrank.ordinal import OMEGA, ONE, ZERO, from_int, omega_pow, succ
from oscrank import func as fn
from oscrank.func import (
    LabelError,
    LCycle,
    LConstCopy,
    LFamily,
    LIndexed,
    LLeaf,
    LOmega,
    LSum,
    LUniform,
    RatVal,
    SeqEventually,
    SeqTruncate,
    canonical_oscillation_fn,
    char_fn,
    const_lab,
    copy_lab,
    eval_lab,
    oscillation_lab,
    pointwise,
    scale_lab,
    seq_member_eval,
    top_indicator_lab,
    val_extrema,
    value_range,
    vconst,
    vmul,
    vpoly,
    vrecip,
)
from oscrank.space import (
    TOP,
    ConstantTail,
    FiniteSum,
    OmegaSum,
    Singleton,
    canonical_space,
    cb_step,
    full_mark,
    mark_contains,
    mark_from_points,
    sample_points,
    tops_mark,
    union_marks,
)

W1 = OmegaSum((), ConstantTail(Singleton()))
W2 = OmegaSum((), ConstantTail(W1))
WW = canonical_space(OMEGA)

F = Fraction


# ---------------------------------------------------------------------------
# Index slots.


def test_ratval_basic():
    v = vpoly(1, 1)  # k + 1
    assert v(0) == 1 and v(4) == 5
    r = vrecip(1, 1)  # 1 / (k + 1)
    assert r(0) == 1 and r(3) == F(1, 4)
    assert vconst(F(2, 3))(17) == F(2, 3)
    # exact cancellation
    assert vmul(v, r) == vconst(1)
    assert vmul(v, r).is_const


def test_ratval_guards():
    with pytest.raises(LabelError):
        RatVal.make((1,), (0,))
    with pytest.raises(LabelError):
        vrecip(-2, 1)  # pole at k = 2
    with pytest.raises(LabelError):
        RatVal.make((1, 1, 1, 1))  # degree 3


def test_ratval_limits():
    assert vrecip(1, 1).limit() == 0
    assert vpoly(3).limit() == 3
    assert vpoly(0, 1).limit() is None
    assert vpoly(0, 1).diverges_up()
    assert vpoly(0, -1).diverges_down()
    assert RatVal.make((1, 2), (1, 1)).limit() == 2  # (2k+1)/(k+1) -> 2


def test_val_extrema_against_samples():
    rng = random.Random(13)
    for _ in range(80):
        num = tuple(F(rng.randint(-4, 4)) for _ in range(rng.randint(1, 3)))
        den = (F(1), F(rng.randint(0, 2)))
        try:
            v = RatVal.make(num, den)
        except LabelError:
            continue
        start = rng.randint(0, 3)
        info = val_extrema(v, start)
        samples = [v(k) for k in range(start, start + 400)]
        if info["unbounded_up"]:
            assert max(samples) > 100 or v.diverges_up()
        else:
            assert all(s <= info["hi"] for s in samples)
            if info["hi_att"]:
                assert info["hi"] in samples
        if info["unbounded_down"]:
            assert v.diverges_down()
        else:
            assert all(s >= info["lo"] for s in samples)
            if info["lo_att"]:
                assert info["lo"] in samples


# ---------------------------------------------------------------------------
# Labelings and evaluation.


def test_const_and_scale():
    lab = const_lab(W2, F(3, 2))
    for p in sample_points(W2, 3):
        assert eval_lab(W2, lab, p) == F(3, 2)
    doubled = scale_lab(W2, lab, 2)
    assert eval_lab(W2, doubled, (TOP,)) == 3


def test_indexed_tail_eval():
    # copy k constant with value 1/(k+1), 0 at the limit
    lab = LOmega(vconst(0), (), LConstCopy(vrecip(1, 1)))
    assert eval_lab(W2, lab, (0, TOP)) == 1
    assert eval_lab(W2, lab, (3, 5)) == F(1, 4)
    assert eval_lab(W2, lab, (TOP,)) == 0


def test_char_fn_matches_mark():
    rng = random.Random(101)
    for s in [W1, W2]:
        pts = sample_points(s, 3)
        chosen = rng.sample(pts, 4)
        base = union_marks(
            s, mark_from_points(s, chosen), cb_step(s, full_mark(s))
        )
        lab = char_fn(s, base)
        for p in pts:
            assert eval_lab(s, lab, p) == (1 if mark_contains(s, base, p) else 0)


def test_char_fn_tops_canonical():
    lab = char_fn(WW, tops_mark(WW))
    assert eval_lab(WW, lab, (TOP,)) == 1
    assert eval_lab(WW, lab, (2, TOP)) == 1  # greatest point of copy 2
    assert eval_lab(WW, lab, (2, 0, TOP)) == 0
    assert eval_lab(WW, lab, (2, 1, 1, 1)) == 0


def test_oscillation_values_and_alternation():
    for kappa in [ZERO, ONE, from_int(2), OMEGA, succ(OMEGA)]:
        s, lab = canonical_oscillation_fn(kappa)
        assert eval_lab(s, lab, s and () if kappa.is_zero else (TOP,)) == 1
        for p in sample_points(s, 3):
            assert eval_lab(s, lab, p) in (0, 1)
    # successor members alternate top values between consecutive copies
    s, lab = canonical_oscillation_fn(from_int(2))
    assert eval_lab(s, lab, (0, TOP)) == 1
    assert eval_lab(s, lab, (1, TOP)) == 0
    assert eval_lab(s, lab, (2, TOP)) == 1
    # limit members alternate too
    s, lab = canonical_oscillation_fn(OMEGA)
    assert eval_lab(s, lab, (0, TOP)) == 1
    assert eval_lab(s, lab, (1, TOP)) == 0


def test_top_indicator():
    lab = top_indicator_lab(W2)
    assert eval_lab(W2, lab, (TOP,)) == 1
    assert eval_lab(W2, lab, (4, TOP)) == 0
    assert eval_lab(W2, lab, (4, 1)) == 0


# ---------------------------------------------------------------------------
# Pointwise algebra.


def _random_const_lab(rng, space, depth=2):
    vals = [F(0), F(1), F(2), F(1, 2), F(-1)]
    if isinstance(space, Singleton):
        return LLeaf(vconst(rng.choice(vals)))
    if isinstance(space, FiniteSum):
        return LSum(tuple(_random_const_lab(rng, p, depth) for p in space.parts))
    body = space.tail.body
    roll = rng.random()
    if roll < 0.4:
        tail = LUniform(_random_const_lab(rng, body, depth - 1))
    elif roll < 0.7:
        tail = LCycle(
            (
                _random_const_lab(rng, body, depth - 1),
                _random_const_lab(rng, body, depth - 1),
            )
        )
    else:
        tail = LConstCopy(vconst(rng.choice(vals)))
    head = tuple(
        _random_const_lab(rng, p, depth - 1) for p in space.prefix
    )
    return LOmega(vconst(rng.choice(vals)), head, tail)


def test_pointwise_ops_random():
    rng = random.Random(71)
    for s in [W1, W2]:
        for _ in range(30):
            a = _random_const_lab(rng, s)
            b = _random_const_lab(rng, s)
            for op, pyop in [
                ("add", lambda x, y: x + y),
                ("sub", lambda x, y: x - y),
                ("mul", lambda x, y: x * y),
            ]:
                c = pointwise(s, a, b, op)
                for p in sample_points(s, 4):
                    assert eval_lab(s, c, p) == pyop(
                        eval_lab(s, a, p), eval_lab(s, b, p)
                    )


def test_pointwise_family_scaling():
    # blocks scaled by 1/(k+1) times blocks scaled by (k+1) give scale 1
    s = WW
    g = LOmega(vconst(0), (), LFamily("oscillation", vrecip(1, 1), 0))
    h = LOmega(vconst(0), (), LConstCopy(vpoly(1, 1)))
    gh = pointwise(s, g, h, "mul")
    assert gh.tail == LFamily("oscillation", vconst(1), 0)
    for p in sample_points(s, 3):
        assert eval_lab(s, gh, p) == eval_lab(s, g, p) * eval_lab(s, h, p)


def test_pointwise_opposite_flips_vanish():
    s = WW
    g = LOmega(vconst(0), (), LFamily("oscillation", vconst(1), 0))
    gflip = LOmega(vconst(0), (), LFamily("oscillation", vconst(1), 1))
    prod = pointwise(s, g, gflip, "mul")
    for p in sample_points(s, 3):
        assert eval_lab(s, prod, p) == 0


# ---------------------------------------------------------------------------
# Value ranges.


def _brute_range(space, lab, mark, width=14):
    vals = [
        eval_lab(space, lab, p)
        for p in sample_points(space, width)
        if mark_contains(space, mark, p)
    ]
    return min(vals), max(vals)


def test_value_range_full_random():
    rng = random.Random(37)
    for s in [W1, W2]:
        for _ in range(25):
            lab = _random_const_lab(rng, s)
            r = value_range(s, lab, full_mark(s))
            lo, hi = _brute_range(s, lab, full_mark(s))
            assert r.lo == lo and r.hi == hi
            assert r.lo_att and r.hi_att


def test_value_range_indexed_limits():
    # values 1/(k+1) on copy k: infimum 0 approached but never attained
    lab = LOmega(vconst(1), (), LConstCopy(vrecip(1, 1)))
    r = value_range(W1, lab, full_mark(W1))
    assert (r.lo, r.lo_att) == (0, False)
    assert (r.hi, r.hi_att) == (1, True)
    # unbounded growth
    lab2 = LOmega(vconst(0), (), LConstCopy(vpoly(0, 1)))
    r2 = value_range(W1, lab2, full_mark(W1))
    assert r2.unbounded_up and not r2.unbounded_down
    assert r2.lo == 0 and r2.lo_att


def test_value_range_from_index():
    lab = LOmega(vconst(1), (), LConstCopy(vrecip(1, 1)))
    r = value_range(W1, lab, full_mark(W1), from_index=5)
    # window past copy 5 still sees the Top's value 1
    assert r.hi == 1 and r.hi_att
    assert r.lo == 0 and not r.lo_att
    lab3 = LOmega(vconst(0), (), LConstCopy(vrecip(1, 1)))
    r3 = value_range(W1, lab3, full_mark(W1), from_index=5)
    assert r3.hi == F(1, 6) and r3.hi_att


def test_value_range_respects_mark():
    # mark only the limit point: the copies' values must not appear
    m = mark_from_points(W1, [(TOP,)])
    lab = LOmega(vconst(7), (), LConstCopy(vconst(3)))
    r = value_range(W1, lab, m)
    assert (r.lo, r.hi) == (7, 7)


def test_value_range_oscillation():
    s, lab = canonical_oscillation_fn(OMEGA)
    r = value_range(s, lab, full_mark(s))
    assert (r.lo, r.hi) == (0, 1)
    assert r.lo_att and r.hi_att
    r2 = value_range(s, lab, tops_mark(s))
    assert (r2.lo, r2.hi) == (0, 1)


def test_spread_logic():
    s, lab = canonical_oscillation_fn(OMEGA)
    r = value_range(s, lab, full_mark(s))
    assert r.spread_at_least(F(1))
    assert not r.spread_at_least(F(2))
    # non-attained endpoint does not witness equality-case spread
    lab2 = LOmega(vconst(1), (), LConstCopy(vrecip(1, 1)))
    r2 = value_range(W1, lab2, full_mark(W1), from_index=2)
    assert r2.spread_at_least(F(1, 2))
    assert not r2.spread_at_least(F(1))


# ---------------------------------------------------------------------------
# Function sequences.


def test_seq_eventually():
    seq = SeqEventually(
        (const_lab(W1, 5),), const_lab(W1, 1)
    )
    assert seq_member_eval(W1, seq, 0, (3,)) == 5
    assert seq_member_eval(W1, seq, 4, (3,)) == 1


def test_seq_truncation():
    lab = char_fn(W1, mark_from_points(W1, [(TOP,)]))
    seq = SeqTruncate(lab)
    # address (5,) truncates for n <= 5 and takes the Top's value 1
    assert seq_member_eval(W1, seq, 3, (5,)) == 1
    assert seq_member_eval(W1, seq, 6, (5,)) == 0
    assert seq_member_eval(W1, seq, 3, (TOP,)) == 1


def test_seq_truncation_nested():
    lab = char_fn(W2, tops_mark(W2))
    seq = SeqTruncate(lab)
    # (4, 7): inner index 7 >= n=5 truncates at the copy-4 node: value 1
    assert seq_member_eval(W2, seq, 5, (4, 7)) == 1
    # n=8: no truncation, leaf value 0
    assert seq_member_eval(W2, seq, 8, (4, 7)) == 0
    # n=3: outer index 4 >= 3 truncates at the root: value 1
    assert seq_member_eval(W2, seq, 3, (4, 7)) == 1
