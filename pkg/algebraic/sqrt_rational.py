from fractions import Fraction
from functools import lru_cache
from numbers import Rational
from types import MappingProxyType

import mpmath


@lru_cache(maxsize=None)
def squarefree_split(n):
    """
    Split n >= 1 as n = m * s**2 with m squarefree.

    :param n: positive integer
    :return: (m, s)
    """
    if n < 1:
        raise ValueError(f"squarefree_split needs n >= 1, got {n}")
    m, s = 1, 1
    rest = n
    p = 2
    while p * p <= rest:
        exponent = 0
        while rest % p == 0:
            rest //= p
            exponent += 1
        if exponent:
            s *= p ** (exponent // 2)
            if exponent % 2:
                m *= p
        p += 1 if p == 2 else 2
    m *= rest
    return m, s


class SqrtRational:
    """
    Exact element of the Q-span of {sqrt(m) : m squarefree}, stored as radicand -> coefficient.
    Radicand 1 is the rational part. Instances are immutable and canonical, so equality and
    hashing are structural and zero is the empty map.
    """

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms=None):
        canonical = {}
        for radicand, coeff in (terms or {}).items():
            m, s = squarefree_split(int(radicand))
            value = canonical.get(m, Fraction(0)) + Fraction(coeff) * s
            if value:
                canonical[m] = value
            else:
                canonical.pop(m, None)
        self._terms = dict(sorted(canonical.items()))
        self._hash = None

    @classmethod
    def _canonical(cls, terms):
        # trusted constructor for maps that are already squarefree and zero-free
        obj = cls.__new__(cls)
        obj._terms = dict(sorted(terms.items()))
        obj._hash = None
        return obj

    @property
    def terms(self):
        return MappingProxyType(self._terms)

    def is_zero(self):
        return not self._terms

    def __bool__(self):
        return bool(self._terms)

    def __add__(self, other):
        if isinstance(other, Rational):
            other = SqrtRational({1: other})
        if not isinstance(other, SqrtRational):
            return NotImplemented
        out = dict(self._terms)
        for m, coeff in other._terms.items():
            value = out.get(m, 0) + coeff
            if value:
                out[m] = value
            else:
                out.pop(m, None)
        return SqrtRational._canonical(out)

    __radd__ = __add__

    def __neg__(self):
        return SqrtRational._canonical({m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        if isinstance(other, Rational):
            other = SqrtRational({1: other})
        if not isinstance(other, SqrtRational):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, q):
        q = Fraction(q)
        if not q:
            return SqrtRational()
        return SqrtRational._canonical({m: c * q for m, c in self._terms.items()})

    def __mul__(self, q):
        if not isinstance(q, Rational):
            return NotImplemented
        return self.scale(q)

    __rmul__ = __mul__

    def __eq__(self, other):
        if isinstance(other, Rational):
            other = SqrtRational({1: other})
        if not isinstance(other, SqrtRational):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    def __float__(self):
        return float(sum(float(c) * m**0.5 for m, c in self._terms.items()))

    def to_mpf(self, prec=256):
        """Evaluate with mpmath at the given binary precision."""
        with mpmath.workprec(prec):
            total = mpmath.mpf(0)
            for m, c in self._terms.items():
                total += mpmath.mpf(c.numerator) / c.denominator * mpmath.sqrt(m)
            return +total

    def sign(self):
        """Exact sign, decided by high-precision evaluation of a nonzero value."""
        if self.is_zero():
            return 0
        prec = 128
        while True:
            value = self.to_mpf(prec)
            # a nonzero combination of independent square roots cannot evaluate to exactly 0
            if value != 0 and abs(value) > mpmath.mpf(2) ** (-prec // 2):
                return 1 if value > 0 else -1
            prec *= 2

    def __repr__(self):
        if not self._terms:
            return "SqrtRational(0)"
        parts = []
        for m, c in self._terms.items():
            parts.append(f"{c}" if m == 1 else f"{c}*sqrt({m})")
        return "SqrtRational(" + " + ".join(parts) + ")"

    def to_json(self):
        return {str(m): str(c) for m, c in self._terms.items()}


def sqrt_of(n):
    """
    sqrt(n) as s*sqrt(m) with m squarefree.

    :param n: positive integer
    """
    if isinstance(n, bool) or int(n) != n:
        raise ValueError(f"sqrt_of needs a positive integer, got {n!r}")
    n = int(n)
    if n <= 0:
        raise ValueError(f"sqrt_of needs n >= 1, got {n}")
    m, s = squarefree_split(n)
    return SqrtRational._canonical({m: Fraction(s)})


def add(a, b):
    return a + b


def scale(a, q):
    return a.scale(q)


def is_zero(a):
    return a.is_zero()


def signed_sqrt_sum(pairs):
    """
    Exact sum of sigma * sqrt(|j|) over (j, sigma) pairs.

    Integer coefficients are gathered per squarefree radicand before building the value.
    """
    acc = {}
    for j, sigma in pairs:
        m, s = squarefree_split(abs(j))
        acc[m] = acc.get(m, 0) + sigma * s
    return SqrtRational._canonical({m: Fraction(c) for m, c in acc.items() if c})


def signed_sqrt_sum_is_zero(pairs):
    acc = {}
    for j, sigma in pairs:
        m, s = squarefree_split(abs(j))
        acc[m] = acc.get(m, 0) + sigma * s
    return not any(acc.values())
