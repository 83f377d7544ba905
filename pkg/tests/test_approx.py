"""Tests for the locally constant approximation pipeline."""

from fractions import Fraction

import pytest

from oscrank.ordinal import ONE, from_int
from oscrank.space import (
    ClosedSet,
    TOP,
    canonical_space,
    empty_mark,
    full_mark,
    is_empty_mark,
    mark_contains,
    mark_subset,
    marks_equal,
    point_mark,
    sample_points,
    union_marks,
)
from oscrank.func import (
    SeqEventually,
    SeqTruncate,
    UnsupportedDescriptor,
    canonical_oscillation_fn,
    char_fn,
    const_lab,
    eval_lab,
)
from oscrank.derive import EngineError, SeqFun, SeqOsc, StepFun, beta, step
from oscrank import randgen as rg
from oscrank.approx import (
    approximate_off_derivative,
    check_beta_leq_gamma,
    far_mark,
    p23_witness,
)

HALF = Fraction(1, 2)


def _full(space):
    return ClosedSet(space, full_mark(space))


# --------------------------------------------------------------------------
# Locally constant approximation off the first oscillation set


def test_constant_function_is_its_own_approximant():
    space = canonical_space(ONE)
    f = StepFun(space, const_lab(space, Fraction(2)))
    part = approximate_off_derivative(f, HALF, _full(space))
    assert is_empty_mark(space, part.off)
    for addr in sample_points(space, 5, depth=3):
        assert eval_lab(space, part.lab, addr) == 2
        assert part.defined_at(addr)


def test_top_indicator_approximant_vanishes_on_copies():
    space = canonical_space(ONE)
    f = StepFun(space, char_fn(space, point_mark(space, (TOP,))))
    part = approximate_off_derivative(f, HALF, _full(space))
    assert marks_equal(space, part.off, point_mark(space, (TOP,)))
    for k in range(8):
        assert eval_lab(space, part.lab, (k,)) == 0
        assert part.defined_at((k,))
    assert not part.defined_at((TOP,))


def test_oscillation_approximant_constant_per_copy():
    space, lab = canonical_oscillation_fn(ONE)
    f = StepFun(space, lab)
    part = approximate_off_derivative(f, HALF, _full(space))
    for addr in sample_points(space, 4, depth=3):
        if not part.defined_at(addr):
            continue
        gap = abs(eval_lab(space, part.lab, addr) - eval_lab(space, lab, addr))
        assert gap < HALF
    # constancy on each copy cell: copy k of [1, w^w] is a whole subtree
    for k in range(4):
        vals = {
            eval_lab(space, part.lab, (k,) + rest[1:])
            for rest in sample_points(space, 3, depth=3)
            if rest and rest[0] == k
        }
        assert len(vals) <= 1


def test_restricting_region_restricts_domain():
    space = canonical_space(ONE)
    f = StepFun(space, char_fn(space, point_mark(space, (TOP,))))
    region = ClosedSet(space, point_mark(space, (2,)))
    part = approximate_off_derivative(f, HALF, region)
    assert part.defined_at((2,))
    assert not part.defined_at((3,))


def test_rejects_nonpositive_threshold():
    space = canonical_space(ONE)
    f = StepFun(space, const_lab(space, Fraction(0)))
    with pytest.raises(EngineError):
        approximate_off_derivative(f, 0, _full(space))


# --------------------------------------------------------------------------
# Far-sets through the canonical embedding


def test_far_mark_on_omega_interval():
    space = canonical_space(ONE)
    top_only = point_mark(space, (TOP,))
    far = far_mark(space, top_only, Fraction(1, 3))
    # copy k sits at coordinate 1/(k+2)
    assert mark_contains(space, far, (0,))
    assert mark_contains(space, far, (1,))
    assert not mark_contains(space, far, (2,))
    assert not mark_contains(space, far, (TOP,))


def test_far_mark_of_empty_set_is_everything():
    space = canonical_space(from_int(2))
    far = far_mark(space, empty_mark(space), Fraction(1, 4))
    assert marks_equal(space, far, full_mark(space))


def test_far_mark_shrinks_with_radius():
    space = canonical_space(from_int(2))
    mark = point_mark(space, (TOP,))
    wide = far_mark(space, mark, Fraction(1, 2))
    narrow = far_mark(space, mark, Fraction(1, 8))
    assert mark_subset(space, wide, narrow)


def test_far_mark_is_disjoint_from_neighborhood():
    space = canonical_space(from_int(2))
    mark = union_marks(
        space, point_mark(space, (TOP,)), point_mark(space, (1, TOP))
    )
    far = far_mark(space, mark, Fraction(1, 5))
    assert not mark_contains(space, far, (TOP,))
    assert not mark_contains(space, far, (1, TOP))


# --------------------------------------------------------------------------
# Stagewise glued witness


def test_constant_witness_is_trivial():
    space = canonical_space(ONE)
    f = StepFun(space, const_lab(space, Fraction(3)))
    bundle = p23_witness(f, HALF)
    assert bundle.metadata["stages"] == 1
    for ys in bundle.Y_sets:
        assert marks_equal(space, ys.mark, full_mark(space))
    for h in bundle.h_seq.seq.prefix:
        for addr in sample_points(space, 4, depth=2):
            assert eval_lab(space, h, addr) == 3


def test_top_indicator_witness_shape():
    space = canonical_space(ONE)
    f = StepFun(space, char_fn(space, point_mark(space, (TOP,))))
    bundle = p23_witness(f, HALF)
    g = bundle.g.lab
    assert eval_lab(space, g, (TOP,)) == 1
    for k in range(6):
        assert eval_lab(space, g, (k,)) == 0
    assert bundle.metadata["stages"] == 2
    assert len(bundle.pieces) == 2
    # stage pieces partition: piece 0 lives off the first oscillation set
    assert marks_equal(space, bundle.pieces[0].on, full_mark(space))
    assert marks_equal(space, bundle.pieces[0].off, point_mark(space, (TOP,)))


def test_oscillation_two_witness_has_strict_stage_chain():
    space, lab = canonical_oscillation_fn(from_int(2))
    bundle = p23_witness(StepFun(space, lab), HALF)
    chain = [p.on for p in bundle.pieces] + [bundle.pieces[-1].off]
    for bigger, smaller in zip(chain, chain[1:]):
        assert mark_subset(space, smaller, bigger)
        assert not marks_equal(space, smaller, bigger)
    assert len(bundle.pieces) == 3


def test_witness_y_sets_monotone_and_h_agrees():
    space, lab = canonical_oscillation_fn(from_int(2))
    bundle = p23_witness(StepFun(space, lab), HALF)
    marks = [ys.mark for ys in bundle.Y_sets]
    for a, b in zip(marks, marks[1:]):
        assert mark_subset(space, a, b)
    for ym, h in zip(marks, bundle.h_seq.seq.prefix):
        for addr in sample_points(space, 4, depth=3):
            if mark_contains(space, ym, addr):
                assert eval_lab(space, h, addr) == eval_lab(
                    space, bundle.g.lab, addr
                )


def test_every_sampled_point_enters_some_far_set():
    space, lab = canonical_oscillation_fn(from_int(2))
    bundle = p23_witness(StepFun(space, lab), HALF)
    stage_marks = [p.off for p in bundle.pieces]
    for addr in sample_points(space, 3, depth=2):
        if any(mark_contains(space, dm, addr) for dm in stage_marks):
            continue  # oscillation points stay outside every far-set
        entered = False
        for n in list(range(1, 7)) + [12, 24, 48]:
            ym = full_mark(space)
            for dm in stage_marks:
                if is_empty_mark(space, dm):
                    continue
                layer = union_marks(
                    space, far_mark(space, dm, Fraction(1, n)), dm
                )
                from oscrank.space import intersect_marks

                ym = intersect_marks(space, ym, layer)
            if mark_contains(space, ym, addr):
                entered = True
                break
        assert entered, addr


def test_witness_containment_rechecked_externally():
    space = canonical_space(ONE)
    f = StepFun(space, char_fn(space, point_mark(space, (TOP,))))
    bundle = p23_witness(f, HALF)
    stage_marks = [p.on for p in bundle.pieces] + [bundle.pieces[-1].off]
    cur = _full(space)
    for alpha in range(1, 4):
        cur = step(SeqOsc(bundle.h_seq.seq, HALF), cur)
        target = (
            stage_marks[alpha]
            if alpha < len(stage_marks)
            else empty_mark(space)
        )
        assert mark_subset(space, cur.mark, target)


def test_witness_approximates_within_threshold():
    space, lab = canonical_oscillation_fn(from_int(2))
    for eps in (HALF, Fraction(1, 4)):
        bundle = p23_witness(StepFun(space, lab), eps)
        for addr in sample_points(space, 4, depth=3):
            gap = abs(
                eval_lab(space, bundle.g.lab, addr) - eval_lab(space, lab, addr)
            )
            assert gap < eps


def test_witness_rejects_transfinite_stage_chains():
    from oscrank.ordinal import OMEGA

    space, lab = canonical_oscillation_fn(OMEGA)
    with pytest.raises(UnsupportedDescriptor):
        p23_witness(StepFun(space, lab), HALF)


# --------------------------------------------------------------------------
# Rank comparison


def test_rank_comparison_constant():
    space = canonical_space(ONE)
    f = StepFun(space, const_lab(space, Fraction(1)))
    report = check_beta_leq_gamma(f, SeqEventually((), f.lab))
    assert report["beta"] == "1"
    assert report["beta_leq_gamma"]


def test_rank_comparison_top_indicator_truncation():
    space = canonical_space(ONE)
    lab = char_fn(space, point_mark(space, (TOP,)))
    report = check_beta_leq_gamma(StepFun(space, lab), SeqTruncate(lab))
    assert report["beta"] == "2"
    assert report["gamma"] == "2"
    assert report["beta_leq_gamma"]
    assert report["essentially_equivalent"]


def test_rank_comparison_oscillation_truncation():
    space, lab = canonical_oscillation_fn(ONE)
    report = check_beta_leq_gamma(StepFun(space, lab), SeqTruncate(lab))
    assert report["beta"] == "2"
    assert report["beta_leq_gamma"]


def test_rank_comparison_rejects_nonconvergent_sequence():
    space = canonical_space(ONE)
    f = StepFun(space, const_lab(space, Fraction(0)))
    other = const_lab(space, Fraction(1))
    with pytest.raises(EngineError):
        check_beta_leq_gamma(f, SeqEventually((), other))


# --------------------------------------------------------------------------
# Random-instance properties


def test_random_witnesses_hold_contracts():
    checked = 0
    for seed in range(60):
        rng = rg.rng_for(9000 + seed)
        space = rg.rand_space(rng, depth=2)
        lab = rg.rand_lab(rng, space, indexed=False)
        f = StepFun(space, lab)
        try:
            cert = beta(f)
        except UnsupportedDescriptor:
            continue
        if not cert.rank <= from_int(4):
            continue
        try:
            bundle = p23_witness(f, HALF, max_stage=6)
        except UnsupportedDescriptor:
            continue
        for addr in sample_points(space, 3, depth=3):
            gap = abs(
                eval_lab(space, bundle.g.lab, addr) - eval_lab(space, lab, addr)
            )
            assert gap < HALF, (seed, addr)
        marks = [ys.mark for ys in bundle.Y_sets]
        for a, b in zip(marks, marks[1:]):
            assert mark_subset(space, a, b), seed
        checked += 1
    assert checked >= 20


def test_random_truncations_respect_rank_comparison():
    checked = 0
    for seed in range(40):
        rng = rg.rng_for(7000 + seed)
        space = rg.rand_space(rng, depth=2)
        lab = rg.rand_lab(rng, space, indexed=False)
        f = StepFun(space, lab)
        try:
            report = check_beta_leq_gamma(f, SeqTruncate(lab))
        except UnsupportedDescriptor:
            continue
        assert report["beta_leq_gamma"], seed
        checked += 1
    assert checked >= 25
