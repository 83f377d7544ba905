"""Tests for multiplier membership, witnesses, and the transfer property."""

from fractions import Fraction

import pytest

from oscrank.ordinal import (
    ZERO,
    ONE,
    add,
    from_int,
    fundamental_seq,
    omega_pow,
    succ,
)
from oscrank.space import (
    TOP,
    ClosedSet,
    Singleton,
    UnsupportedDescriptor,
    canonical_space,
    full_mark,
    is_empty_mark,
    mark_contains,
    marks_equal,
    max_point,
    ordinal_type,
    point_mark,
)
from oscrank.func import (
    LabelError,
    char_fn,
    const_lab,
    eval_lab,
    scale_lab,
    vconst,
)
from oscrank.derive import (
    EngineError,
    OmegaDeriv,
    StepFun,
    Unbounded,
    beta,
    brute_force,
    iterate,
    step,
)
import oscrank.randgen as rg
from oscrank.multiplier import (
    check_property,
    hM_witness,
    is_multiplier,
    non_multiplier_witness,
    property_witness,
    sampled_product_check,
)

OMEGA = omega_pow(1)


def _full(space):
    return ClosedSet(space, full_mark(space))


# ---------------------------------------------------------------------------
# Membership.


def test_constant_function_is_multiplier():
    space = canonical_space(ONE)
    v = is_multiplier(StepFun(space, const_lab(space, 1)), ONE)
    assert v.is_multiplier
    assert is_empty_mark(space, v.criterion_hM.mark)
    assert is_empty_mark(space, v.criterion_omega.mark)


def test_bounded_indicator_is_multiplier():
    space = canonical_space(ONE)
    h = StepFun(space, char_fn(space, point_mark(space, (TOP,))))
    v = is_multiplier(h, ONE)
    assert v.is_multiplier


def test_verdict_pair_decomposition():
    space = canonical_space(ONE)
    h = StepFun(space, const_lab(space, 2))
    xi, alpha = is_multiplier(h, add(OMEGA, from_int(3))).pair
    assert xi == ONE and alpha == from_int(3)


def test_membership_requires_nonzero_scale():
    space = canonical_space(ONE)
    with pytest.raises(EngineError):
        is_multiplier(StepFun(space, const_lab(space, 1)), ZERO)


# ---------------------------------------------------------------------------
# Cutoff witness.


def test_cutoff_witness_point_space():
    space, h, x = hM_witness(ZERO, 0)
    assert isinstance(space, Singleton)
    assert eval_lab(space, h.lab, x) == 0
    core = iterate(Unbounded(h.lab, Fraction(0)), ZERO, _full(space)).mark
    assert marks_equal(space, core, point_mark(space, x))


def test_cutoff_witness_depth_one_brute():
    space, h, x = hM_witness(ONE, 3)
    assert eval_lab(space, h.lab, x) == 0
    assert eval_lab(space, h.lab, (5,)) == 4
    traj = brute_force(Unbounded(h.lab, Fraction(3)), _full(space), 2)
    assert marks_equal(space, traj[1].mark, point_mark(space, x))
    assert is_empty_mark(space, traj[2].mark)


def test_cutoff_witness_limit_scale_closed_form():
    space, h, x = hM_witness(OMEGA, 2)
    core = iterate(Unbounded(h.lab, Fraction(2)), OMEGA, _full(space)).mark
    assert marks_equal(space, core, point_mark(space, x))
    # finite stages agree with literal stepping
    traj = brute_force(Unbounded(h.lab, Fraction(2)), _full(space), 3)
    lazy = _full(space)
    for stage in traj[1:]:
        lazy = step(Unbounded(h.lab, Fraction(2)), lazy)
        assert marks_equal(space, stage.mark, lazy.mark)


def test_cutoff_witness_space_shape():
    for kappa in (ONE, from_int(2), OMEGA):
        space, h, x = hM_witness(kappa, 1)
        assert ordinal_type(space) == (kappa, 1)
        assert x == max_point(space)


# ---------------------------------------------------------------------------
# Negative witness.


@pytest.mark.parametrize("n", [1, 2])
def test_non_multiplier_witness_ranks(n):
    kappa = from_int(n)
    w = non_multiplier_witness(kappa)
    limit = omega_pow(kappa)
    assert w.beta_g.rank <= limit
    assert limit < w.beta_gh.rank


@pytest.mark.parametrize("n", [1, 2])
def test_non_multiplier_witness_stagewise_caps(n):
    kappa = from_int(n)
    w = non_multiplier_witness(kappa)
    limit = omega_pow(kappa)
    for big_n in range(1, 6):
        cert = beta(w.g, Fraction(1, big_n))
        cap = succ(add(from_int(2), fundamental_seq(limit, 2 * big_n)))
        assert cert.rank <= cap


@pytest.mark.parametrize("n", [1, 2])
def test_witness_verdict_coherence(n):
    kappa = from_int(n)
    w = non_multiplier_witness(kappa)
    v = is_multiplier(w.h, kappa)
    assert not v.is_multiplier
    assert not (
        is_empty_mark(w.space, v.criterion_hM.mark)
        and is_empty_mark(w.space, v.criterion_omega.mark)
    )


def test_witness_product_survives_to_the_top():
    w = non_multiplier_witness(ONE)
    from oscrank.derive import OscPair

    prod = w.beta_gh
    assert prod.rank == succ(OMEGA)
    surv = iterate(
        OscPair(
            # the product labeling is reconstructible pointwise
            _product_lab(w),
            Fraction(1),
        ),
        OMEGA,
        _full(w.space),
    ).mark
    assert mark_contains(w.space, surv, max_point(w.space))


def _product_lab(w):
    from oscrank.func import pointwise

    return pointwise(w.space, w.g.lab, w.h.lab, "mul")


# ---------------------------------------------------------------------------
# Positive direction, sampled.


def test_sampled_products_stay_within_scale():
    space = canonical_space(ONE)
    h = StepFun(space, char_fn(space, point_mark(space, (TOP,))))
    rep = sampled_product_check(h, ONE, count=25, seed=11)
    assert rep["holds"], rep


# ---------------------------------------------------------------------------
# Scale coherence of the limit derivation.


def test_limit_derivation_ignores_nonzero_scaling():
    checked = 0
    for seed in range(40):
        rng = rg.rng_for(777_000 + seed)
        space = rg.rand_space(rng)
        try:
            lab = rg.rand_lab(rng, space)
        except LabelError:
            continue
        P = _full(space)
        for c in (Fraction(2), Fraction(1, 3), Fraction(-1)):
            try:
                base = step(OmegaDeriv(lab, ZERO), P).mark
                scaled_lab = scale_lab(space, lab, vconst(c))
                scaled = step(OmegaDeriv(scaled_lab, ZERO), P).mark
            except UnsupportedDescriptor:
                continue
            assert marks_equal(space, base, scaled)
            checked += 1
    assert checked >= 30


# ---------------------------------------------------------------------------
# Transfer property.


def test_check_property_trivial_singleton():
    space = Singleton()
    Q = _full(space)
    g = StepFun(space, const_lab(space, 1))
    h = StepFun(space, const_lab(space, 5))
    assert check_property(Q, g, h, (), ONE, ZERO)


def test_check_property_fails_without_oscillation():
    space = Singleton()
    Q = _full(space)
    g = StepFun(space, const_lab(space, 0))
    h = StepFun(space, const_lab(space, 5))
    assert not check_property(Q, g, h, (), ONE, ONE)


def test_shift_witness_round_trip():
    for alpha in (ONE, from_int(2)):
        Q, g, x, cert = property_witness("shift", {"alpha": alpha, "xi": ONE})
        assert cert["clauses_hold"]
        from oscrank.func import oscillation_lab

        h = StepFun(Q.space, oscillation_lab(alpha))
        assert check_property(Q, g, h, x, ONE, alpha)


def test_omega_witness_engine_scale():
    Q, g, x, cert = property_witness("omega", {"xi": ZERO})
    assert cert["clauses_hold"] and cert["zeta_method"] == "engine"
    assert x == max_point(Q.space)


def test_omega_witness_closed_form_scale():
    Q, g, x, cert = property_witness("omega", {"xi": ONE})
    assert cert["clauses_hold"] and cert["zeta_method"] == "closed_form_family"


def test_final_witness_engine_scale():
    Q, g, x, cert = property_witness("final", {"kappa": ONE})
    assert cert["rank_Gh_method"] == "engine"
    assert cert["not_multiplier_pair"] == ("1", "1")


def test_final_witness_limit_scale():
    Q, g, x, cert = property_witness("final", {"kappa": OMEGA})
    assert cert["rank_Gh_method"] == "closed_form_family"
    assert cert["rank_Gh"] == "w^{w} + 1"


def test_final_witness_rejects_composite_scales():
    with pytest.raises(UnsupportedDescriptor):
        property_witness("final", {"kappa": add(OMEGA, ONE)})


def test_property_witness_cache_returns_same_object():
    a = property_witness("shift", {"alpha": ONE, "xi": ONE})
    b = property_witness("shift", {"alpha": ONE, "xi": ONE})
    assert a is b
