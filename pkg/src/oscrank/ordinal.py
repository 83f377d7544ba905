"""Ordinal arithmetic in Cantor normal form, below epsilon-zero.

An ordinal is stored as a tuple of (exponent, coefficient) pairs with
strictly decreasing exponents and positive integer coefficients, i.e.
w^e1*c1 + w^e2*c2 + ... with e1 > e2 > ... .  The empty tuple is zero.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Tuple


class OrdinalError(ValueError):
    """Raised on malformed ordinal input or unsupported operations."""


@dataclass(frozen=True)
class Ordinal:
    terms: Tuple[Tuple["Ordinal", int], ...] = ()

    def __post_init__(self) -> None:
        last = None
        for exp, coeff in self.terms:
            if not isinstance(exp, Ordinal) or not isinstance(coeff, int):
                raise OrdinalError("terms must be (Ordinal, int) pairs")
            if coeff < 1:
                raise OrdinalError("coefficients must be positive")
            if last is not None and not _lt(exp, last):
                raise OrdinalError("exponents must be strictly decreasing")
            last = exp

    # ---- basic structure ----

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def is_finite(self) -> bool:
        return not self.terms or (len(self.terms) == 1 and self.terms[0][0].is_zero)

    @property
    def is_successor(self) -> bool:
        return bool(self.terms) and self.terms[-1][0].is_zero

    @property
    def is_limit(self) -> bool:
        return bool(self.terms) and not self.terms[-1][0].is_zero

    def to_int(self) -> int:
        if not self.is_finite:
            raise OrdinalError("not a finite ordinal: %s" % render(self))
        return self.terms[0][1] if self.terms else 0

    def leading_exp(self) -> "Ordinal":
        if self.is_zero:
            raise OrdinalError("zero has no leading exponent")
        return self.terms[0][0]

    # ---- order ----

    def __lt__(self, other: "Ordinal") -> bool:
        return _lt(self, other)

    def __le__(self, other: "Ordinal") -> bool:
        return self == other or _lt(self, other)

    def __gt__(self, other: "Ordinal") -> bool:
        return _lt(other, self)

    def __ge__(self, other: "Ordinal") -> bool:
        return self == other or _lt(other, self)

    # ---- arithmetic (left-to-right, non-commutative) ----

    def __add__(self, other: "Ordinal | int") -> "Ordinal":
        return add(self, _coerce(other))

    def __radd__(self, other: int) -> "Ordinal":
        return add(_coerce(other), self)

    def __mul__(self, other: "Ordinal | int") -> "Ordinal":
        return mul(self, _coerce(other))

    def __rmul__(self, other: int) -> "Ordinal":
        return mul(_coerce(other), self)

    def __repr__(self) -> str:
        return "Ordinal(%s)" % render(self)

    def __str__(self) -> str:
        return render(self)


def _coerce(x: "Ordinal | int") -> Ordinal:
    if isinstance(x, Ordinal):
        return x
    if isinstance(x, int):
        return from_int(x)
    raise OrdinalError("cannot interpret %r as an ordinal" % (x,))


def _lt(a: Ordinal, b: Ordinal) -> bool:
    for (ea, ca), (eb, cb) in zip(a.terms, b.terms):
        if ea != eb:
            return _lt(ea, eb)
        if ca != cb:
            return ca < cb
    return len(a.terms) < len(b.terms)


ZERO = Ordinal()
ONE = Ordinal(((ZERO, 1),))
OMEGA = Ordinal(((ONE, 1),))


def from_int(n: int) -> Ordinal:
    if n < 0:
        raise OrdinalError("ordinals are non-negative")
    if n == 0:
        return ZERO
    return Ordinal(((ZERO, n),))


def omega_pow(exp: "Ordinal | int", coeff: int = 1) -> Ordinal:
    if coeff == 0:
        return ZERO
    return Ordinal(((_coerce(exp), coeff),))


def add(a: Ordinal, b: Ordinal) -> Ordinal:
    if b.is_zero:
        return a
    lead = b.terms[0][0]
    kept = [t for t in a.terms if _lt(lead, t[0])]
    rest = [t for t in a.terms if t[0] == lead]
    if rest:
        merged = (lead, rest[0][1] + b.terms[0][1])
        return Ordinal(tuple(kept) + (merged,) + b.terms[1:])
    return Ordinal(tuple(kept) + b.terms)


def mul(a: Ordinal, b: Ordinal) -> Ordinal:
    if a.is_zero or b.is_zero:
        return ZERO
    out = ZERO
    lead_exp = a.terms[0][0]
    for exp, coeff in b.terms:
        if exp.is_zero:
            # a * n = w^e1*(c1*n) + lower terms of a
            scaled = Ordinal(((lead_exp, a.terms[0][1] * coeff),) + a.terms[1:])
            out = add(out, scaled)
        else:
            out = add(out, omega_pow(add(lead_exp, exp), coeff))
    return out


def succ(a: Ordinal) -> Ordinal:
    return add(a, ONE)


def pred(a: Ordinal) -> Ordinal:
    """Predecessor of a successor ordinal."""
    if not a.is_successor:
        raise OrdinalError("%s has no predecessor" % render(a))
    exp, coeff = a.terms[-1]
    if coeff == 1:
        return Ordinal(a.terms[:-1])
    return Ordinal(a.terms[:-1] + ((exp, coeff - 1),))


def left_subtract(a: Ordinal, b: Ordinal) -> Ordinal:
    """The unique x with a + x == b, for a <= b."""
    if _lt(b, a):
        raise OrdinalError("cannot subtract %s from %s" % (render(a), render(b)))
    i = 0
    while i < len(a.terms) and i < len(b.terms) and a.terms[i] == b.terms[i]:
        i += 1
    if i == len(a.terms):
        return Ordinal(b.terms[i:])
    ea, ca = a.terms[i]
    eb, cb = b.terms[i]
    if ea == eb:
        # a <= b forces ca < cb here
        return Ordinal(((eb, cb - ca),) + b.terms[i + 1 :])
    return Ordinal(b.terms[i:])


def decompose_pair(kappa: Ordinal) -> Tuple[Ordinal, Ordinal]:
    """Split kappa > 0 as w^xi + alpha with xi the leading exponent.

    alpha collects the remaining copies of the leading term plus all
    lower terms, so kappa == omega_pow(xi) + alpha.
    """
    if kappa.is_zero:
        raise OrdinalError("cannot decompose zero")
    xi, coeff = kappa.terms[0]
    if coeff == 1:
        alpha = Ordinal(kappa.terms[1:])
    else:
        alpha = Ordinal(((xi, coeff - 1),) + kappa.terms[1:])
    return xi, alpha


def log_omega(a: Ordinal) -> Ordinal:
    """Least eta with a <= w^eta (zero maps to zero)."""
    if a.is_zero:
        return ZERO
    exp, coeff = a.terms[0]
    if len(a.terms) == 1 and coeff == 1:
        return exp
    return succ(exp)


def lesssim(a: Ordinal, b: Ordinal) -> bool:
    """Coarse comparison: a is dominated by b up to a finite power stack,
    i.e. log_omega(a) <= log_omega(b)."""
    return log_omega(a) <= log_omega(b)


def equiv(a: Ordinal, b: Ordinal) -> bool:
    return lesssim(a, b) and lesssim(b, a)


def fundamental_seq(lam: Ordinal, n: int) -> Ordinal:
    """n-th element of the standard fundamental sequence of a limit ordinal.

    For gamma + w^(beta+1) the sequence is gamma + w^beta*(n+1); for
    gamma + w^beta with beta a limit it is gamma + w^(beta[n]).
    """
    if not lam.is_limit:
        raise OrdinalError("%s is not a limit ordinal" % render(lam))
    if n < 0:
        raise OrdinalError("index must be non-negative")
    beta, coeff = lam.terms[-1]
    prefix = lam.terms[:-1]
    if coeff > 1:
        prefix = prefix + ((beta, coeff - 1),)
    gamma = Ordinal(prefix)
    if beta.is_successor:
        return add(gamma, omega_pow(pred(beta), n + 1))
    return add(gamma, omega_pow(fundamental_seq(beta, n)))


def sup_fundamental(lam: Ordinal, offset: int = 0) -> Ordinal:
    """Supremum of (lam[n] + offset) over n, for a limit ordinal lam.

    Any fixed finite offset is absorbed: the supremum is lam itself.
    """
    if not lam.is_limit:
        raise OrdinalError("%s is not a limit ordinal" % render(lam))
    return lam


# ---- rendering and parsing ----
#
# Grammar: <ordinal> ::= "0" | <term> (" + " <term>)*
#          <term>    ::= <int> | "w" | "w*" <int> | "w^{" <ordinal> "}"
#                        | "w^{" <ordinal> "}*" <int>


def render(a: Ordinal) -> str:
    if a.is_zero:
        return "0"
    parts = []
    for exp, coeff in a.terms:
        if exp.is_zero:
            parts.append(str(coeff))
        elif exp == ONE:
            parts.append("w" if coeff == 1 else "w*%d" % coeff)
        else:
            base = "w^{%s}" % render(exp)
            parts.append(base if coeff == 1 else "%s*%d" % (base, coeff))
    return " + ".join(parts)


_INT_RE = re.compile(r"\d+")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1

    def eat(self, token: str) -> bool:
        self.skip_ws()
        if self.text.startswith(token, self.pos):
            self.pos += len(token)
            return True
        return False

    def expect(self, token: str) -> None:
        if not self.eat(token):
            raise OrdinalError(
                "expected %r at position %d in %r" % (token, self.pos, self.text)
            )

    def integer(self) -> int:
        self.skip_ws()
        m = _INT_RE.match(self.text, self.pos)
        if not m:
            raise OrdinalError(
                "expected integer at position %d in %r" % (self.pos, self.text)
            )
        self.pos = m.end()
        return int(m.group())

    def ordinal(self) -> Ordinal:
        out = self.term()
        while self.eat("+"):
            out = add(out, self.term())
        return out

    def term(self) -> Ordinal:
        self.skip_ws()
        if self.pos < len(self.text) and self.text[self.pos].isdigit():
            return from_int(self.integer())
        self.expect("w")
        if self.eat("^{"):
            exp = self.ordinal()
            self.expect("}")
        else:
            exp = ONE
        coeff = self.integer() if self.eat("*") else 1
        return omega_pow(exp, coeff)


def parse(text: str) -> Ordinal:
    p = _Parser(text)
    out = p.ordinal()
    p.skip_ws()
    if p.pos != len(p.text):
        raise OrdinalError("trailing input at position %d in %r" % (p.pos, text))
    return out


@lru_cache(maxsize=None)
def _cached_parse(text: str) -> Ordinal:
    return parse(text)


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


_install_cached_hash(Ordinal)
