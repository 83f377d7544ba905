"""Seeded random instance generators.

Produces small spaces, closed marks, labelings and relation instances
within the descriptor vocabulary the derivation engine computes exactly.
Shared by the test suite and the ``verify`` command so both draw from
the same distribution.
"""

from __future__ import annotations

import random
from fractions import Fraction

from .ordinal import OMEGA, ZERO, Ordinal, from_int, mul, omega_pow, succ
from .space import (
    CanonicalTail,
    ConstantTail,
    UnsupportedDescriptor,
    FiniteSum,
    MLeaf,
    MOmega,
    MSum,
    OmegaSum,
    Singleton,
    TCycle,
    TEmpty,
    TFull,
    TTops,
    TUniform,
    empty_mark,
    full_mark,
    normalize_mark,
    tail_io_nonempty,
    validate_closed,
)
from .func import (
    LabelError,
    LConstCopy,
    LCycle,
    LFamily,
    LIndexed,
    LLeaf,
    LOmega,
    LSum,
    LUniform,
    const_lab,
    pointwise,
    vconst,
    vpoly,
    vrecip,
)

_EPS_CHOICES = [Fraction(1), Fraction(1, 2), Fraction(1, 3), Fraction(2)]
_SMALL = [Fraction(0), Fraction(1), Fraction(2), Fraction(-1), Fraction(1, 2)]


def rng_for(seed: int) -> random.Random:
    return random.Random(seed)


# ---------------------------------------------------------------------------
# Spaces.


def rand_space(rng: random.Random, depth: int = 2, canonical: bool = False):
    """A small space descriptor; with ``canonical`` a canonical tail may
    appear at the root."""
    if canonical and depth > 0 and rng.random() < 0.5:
        from .space import canonical_space

        kap = rng.choice(
            [OMEGA, succ(OMEGA), mul(OMEGA, from_int(2)), omega_pow(from_int(2))]
        )
        return canonical_space(kap)
    return _rand_flat(rng, depth)


def _rand_flat(rng: random.Random, depth: int):
    if depth == 0 or rng.random() < 0.3:
        return Singleton()
    if rng.random() < 0.3:
        n = rng.randint(2, 3)
        return FiniteSum(tuple(_rand_flat(rng, depth - 1) for _ in range(n)))
    prefix = tuple(
        _rand_flat(rng, depth - 1) for _ in range(rng.randint(0, 2))
    )
    return OmegaSum(prefix, ConstantTail(_rand_flat(rng, depth - 1)))


# ---------------------------------------------------------------------------
# Closed marks.


def rand_mark(rng: random.Random, space):
    """A random closed marking (never a staged tail)."""
    m = _rand_mark(rng, space)
    m = normalize_mark(space, m)
    assert validate_closed(space, m)
    return m


def _rand_mark(rng: random.Random, space):
    if isinstance(space, Singleton):
        return MLeaf(rng.random() < 0.7)
    if isinstance(space, FiniteSum):
        return MSum(tuple(_rand_mark(rng, p) for p in space.parts))
    head = tuple(_rand_mark(rng, p) for p in space.prefix)
    if isinstance(space.tail, CanonicalTail):
        tail = rng.choice([TEmpty(), TFull(), TTops()])
    else:
        body = space.tail.body
        roll = rng.random()
        if roll < 0.25:
            tail = TEmpty()
        elif roll < 0.45:
            tail = TFull()
        elif roll < 0.7:
            tail = TUniform(_rand_mark(rng, body))
        else:
            tail = TCycle(tuple(_rand_mark(rng, body) for _ in range(2)))
    top = tail_io_nonempty(space, tail) or rng.random() < 0.5
    return MOmega(top, head, tail)


def rand_clopen(rng: random.Random, space):
    """A clopen set: a union of whole root copies (full or empty parts)."""
    if isinstance(space, Singleton):
        return MLeaf(rng.random() < 0.5)
    if isinstance(space, FiniteSum):
        return MSum(
            tuple(
                full_mark(p) if rng.random() < 0.5 else empty_mark(p)
                for p in space.parts
            )
        )
    n = max(len(space.prefix), rng.randint(1, 4))
    from .space import copy_space

    head = tuple(
        full_mark(copy_space(space, k))
        if rng.random() < 0.5
        else empty_mark(copy_space(space, k))
        for k in range(n)
    )
    # cofinite variant keeps the Top, finite variant drops it
    if rng.random() < 0.3:
        return normalize_mark(space, MOmega(True, head, TFull()))
    return normalize_mark(space, MOmega(False, head, TEmpty()))


# ---------------------------------------------------------------------------
# Labelings.


def rand_val(rng: random.Random, indexed: bool = False):
    if not indexed or rng.random() < 0.5:
        return vconst(rng.choice(_SMALL))
    if rng.random() < 0.5:
        return vpoly(rng.choice(_SMALL), rng.choice([1, -1, 2]))
    return vrecip(rng.choice([1, 2]), 1)


def rand_lab(rng: random.Random, space, indexed: bool = True):
    """A labeling in the engine vocabulary on the given space."""
    if isinstance(space, Singleton):
        return LLeaf(rand_val(rng, False))
    if isinstance(space, FiniteSum):
        return LSum(tuple(rand_lab(rng, p, indexed) for p in space.parts))
    from .space import copy_space

    head = tuple(
        rand_lab(rng, copy_space(space, k), indexed)
        for k in range(len(space.prefix))
    )
    top = rand_val(rng, False)
    if isinstance(space.tail, CanonicalTail):
        roll = rng.random()
        if roll < 0.4:
            tail = LFamily("oscillation", rand_val(rng, indexed), rng.randint(0, 1))
        elif roll < 0.7:
            tail = LFamily(
                "top_indicator", rand_val(rng, indexed), 0
            )
        else:
            tail = LConstCopy(rand_val(rng, indexed))
        return LOmega(top, head, tail)
    body = space.tail.body
    roll = rng.random()
    if roll < 0.3:
        tail = LUniform(rand_lab(rng, body, False))
    elif roll < 0.55:
        tail = LCycle(
            tuple(rand_lab(rng, body, False) for _ in range(rng.randint(2, 3)))
        )
    elif roll < 0.8:
        tail = LConstCopy(rand_val(rng, indexed))
    else:
        tail = LIndexed(const_lab(body, rand_val(rng, indexed)))
    return LOmega(top, head, tail)


def rand_const_per_copy_lab(rng: random.Random, space, indexed: bool = True):
    """A labeling constant on every eventual copy (safe weighted factor)."""
    if isinstance(space, Singleton):
        return LLeaf(rand_val(rng, False))
    if isinstance(space, FiniteSum):
        return LSum(
            tuple(rand_const_per_copy_lab(rng, p, indexed) for p in space.parts)
        )
    from .space import copy_space

    head = tuple(
        rand_const_per_copy_lab(rng, copy_space(space, k), indexed)
        for k in range(len(space.prefix))
    )
    return LOmega(
        rand_val(rng, False), head, LConstCopy(rand_val(rng, indexed))
    )


def rand_pair_for_weight(rng: random.Random, space):
    """(g, h) with the weighted-gap analysis supported: one factor is
    constant per copy wherever the other oscillates."""
    if rng.random() < 0.5:
        return rand_const_per_copy_lab(rng, space), rand_lab(rng, space)
    return rand_lab(rng, space), rand_const_per_copy_lab(rng, space)


def rand_product(rng: random.Random, space, g, h):
    try:
        return pointwise(space, g, h, "mul")
    except (LabelError, UnsupportedDescriptor):
        return None


# ---------------------------------------------------------------------------
# Relation instances.


def rand_relation_instance(rng: random.Random, rel: str) -> dict:
    """One instance dict for check_relation; draws until the sampled
    descriptors fall in the supported vocabulary."""
    for _ in range(60):
        inst = _try_instance(rng, rel)
        if inst is not None:
            return inst
    raise RuntimeError("could not sample an instance for %s" % rel)


def _exponent(rng: random.Random) -> Ordinal:
    # exponents of omega-powers up to omega^2 overall
    return rng.choice([ZERO, from_int(1), from_int(2)])


def _small_ordinal(rng: random.Random) -> Ordinal:
    return rng.choice(
        [ZERO, from_int(1), from_int(2), from_int(3), OMEGA, succ(OMEGA), mul(OMEGA, from_int(2))]
    )


def _try_instance(rng: random.Random, rel: str):
    canonical = rel in ("R1", "R4", "R6", "R7") and rng.random() < 0.4
    space = rand_space(rng, depth=2, canonical=canonical)
    P = rand_mark(rng, space)
    eps = rng.choice(_EPS_CHOICES)
    if rel == "R1":
        g, h = rand_pair_for_weight(rng, space)
        if rng.random() < 0.5:
            gh = rand_product(rng, space, g, h)
            if gh is None:
                return None
            return {
                "space": space,
                "P": P,
                "g": g,
                "h": h,
                "gh": gh,
                "eps": eps,
                "alpha": _exponent(rng),
                "mode": "product",
            }
        return {
            "space": space,
            "P": P,
            "g": g,
            "h": h,
            "eps": eps,
            "M": Fraction(rng.randint(1, 4)),
            "alpha": _exponent(rng),
            "mode": "bounded",
        }
    if rel == "R2":
        return {"space": space, "P": P, "h": rand_lab(rng, space), "eps": eps}
    if rel == "R3":
        g, h = rand_pair_for_weight(rng, space)
        gh = rand_product(rng, space, g, h)
        if gh is None:
            return None
        return {"space": space, "P": P, "g": g, "h": h, "gh": gh, "eps": eps}
    if rel == "R4":
        g, h = rand_pair_for_weight(rng, space)
        return {
            "space": space,
            "P": P,
            "g": g,
            "h": h,
            "eps": eps,
            "M": Fraction(rng.randint(1, 4)),
            "alpha": _exponent(rng),
        }
    if rel == "R5":
        g, h = rand_pair_for_weight(rng, space)
        return {
            "space": space,
            "P": P,
            "g": g,
            "h": h,
            "eta": eps,
            "alpha": _small_ordinal(rng),
            "U": rand_clopen(rng, space),
        }
    if rel == "R6":
        g, h = rand_pair_for_weight(rng, space)
        return {
            "space": space,
            "P": P,
            "g": g,
            "h": h,
            "eta": eps,
            "alpha": _small_ordinal(rng),
            "kappa": _small_ordinal(rng),
        }
    if rel == "R7":
        g, h = rand_pair_for_weight(rng, space)
        return {
            "space": space,
            "P": P,
            "g": g,
            "h": h,
            "eta": eps,
            "xi": rng.choice([ZERO, from_int(1)]),
        }
    if rel == "R8":
        space = rand_space(rng, depth=2, canonical=False)
        return {
            "space": space,
            "P": full_mark(space),
            "A": rand_mark(rng, space),
            "G": rand_clopen(rng, space),
            "rho": rng.choice(
                [ZERO, from_int(1), from_int(2), from_int(5), OMEGA, succ(OMEGA), mul(OMEGA, from_int(2))]
            ),
        }
    if rel == "R9":
        from . import derive as D

        space = rand_space(rng, depth=2, canonical=rng.random() < 0.3)
        kind = rand_kind(rng, space)
        if isinstance(kind, D.OscPair):
            return None  # the pairwise-oscillation derivation is exempt
        return {
            "space": space,
            "P": rand_mark(rng, space),
            "Q": rand_mark(rng, space),
            "kind": kind,
        }
    raise ValueError(rel)


def rand_kind(rng: random.Random, space):
    """A random derivation kind over the space (supported vocabulary)."""
    from . import derive as D

    eps = rng.choice(_EPS_CHOICES)
    roll = rng.random()
    if roll < 0.22:
        return D.OscClosure(rand_lab(rng, space), eps)
    if roll < 0.42:
        g, h = rand_pair_for_weight(rng, space)
        return D.WeightedClosure(g, h, eps)
    if roll < 0.6:
        return D.Unbounded(rand_lab(rng, space), Fraction(rng.randint(0, 3)))
    if roll < 0.75:
        return D.Divergence(rand_lab(rng, space))
    if roll < 0.9:
        return D.CbDeriv()
    return D.OscPair(rand_lab(rng, space), eps)
