from fractions import Fraction

import mpmath
import numpy as np
import pytest

from algebraic.sqrt_rational import (
    SqrtRational,
    add,
    is_zero,
    scale,
    signed_sqrt_sum,
    signed_sqrt_sum_is_zero,
    sqrt_of,
    squarefree_split,
)
from resonance.classify import benjamin_feir


@pytest.mark.parametrize("n, radicand, coeff", [(1, 1, 1), (8, 2, 2), (12, 3, 2), (49, 1, 7)])
def test_sqrt_of_is_canonical(n, radicand, coeff):
    assert sqrt_of(n).terms == {radicand: Fraction(coeff)}
    assert float(sqrt_of(n)) == pytest.approx(np.sqrt(n), rel=1e-15)


@pytest.mark.parametrize("n", [0, -4])
def test_sqrt_of_rejects_nonpositive(n):
    with pytest.raises(ValueError):
        sqrt_of(n)


def test_squarefree_split():
    assert squarefree_split(72) == (2, 6)
    assert squarefree_split(9973) == (9973, 1)


def test_zero_tests():
    bf = add(add(sqrt_of(1), scale(sqrt_of(4), -1)), add(sqrt_of(9), scale(sqrt_of(4), -1)))
    assert is_zero(bf)
    assert not is_zero(add(sqrt_of(2), sqrt_of(3)))
    assert is_zero(add(scale(sqrt_of(2), 2), scale(sqrt_of(8), -1)))
    assert SqrtRational() == add(sqrt_of(5), scale(sqrt_of(5), -1))


def test_vector_space_laws(rng):
    def draw():
        return SqrtRational(
            {int(m): Fraction(int(p), int(q) + 1) for m, p, q in rng.integers(1, 50, (4, 3))}
        )

    for _ in range(200):
        a, b, c = draw(), draw(), draw()
        q = Fraction(int(rng.integers(-9, 10)), int(rng.integers(1, 10)))
        assert (a + b) + c == a + (b + c)
        assert a + b == b + a
        assert (a + b).scale(q) == a.scale(q) + b.scale(q)
        assert hash(a + b) == hash(b + a)


def test_square_of_sqrt(rng):
    for n in rng.integers(1, 10**4, 500):
        value = float(sqrt_of(int(n)))
        assert value**2 == pytest.approx(int(n), rel=1e-12)


def test_zero_agrees_with_high_precision(rng):
    for _ in range(10**4):
        js, signs = rng.integers(1, 10**4, 4), rng.choice([-1, 1], 4)
        pairs = [(int(j), int(s)) for j, s in zip(js, signs)]
        if rng.uniform() < 0.3:
            # force a cancellation
            pairs.append((pairs[0][0], -pairs[0][1]))
            pairs.append((pairs[1][0] * 4, -pairs[1][1]))
            pairs.append((pairs[1][0], pairs[1][1]))
        exact = signed_sqrt_sum(pairs)
        with mpmath.workprec(256):
            value = abs(exact.to_mpf(256))
            direct = abs(mpmath.fsum(s * mpmath.sqrt(j) for j, s in pairs))
        assert exact.is_zero() == signed_sqrt_sum_is_zero(pairs)
        if exact.is_zero():
            assert direct < mpmath.mpf(10) ** -30
        else:
            assert value > 0
            assert direct > 0


def test_benjamin_feir_quadruples_vanish_exactly():
    lambdas = range(1, 101)
    for lam in lambdas:
        bs = [b for b in range(1, 11) if lam * b * b <= 100]
        for t in benjamin_feir([lam], bs):
            assert is_zero(t.frequency)
            assert t.momentum == 0
