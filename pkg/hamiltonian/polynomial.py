from collections import defaultdict
from functools import lru_cache
from itertools import groupby
from types import MappingProxyType
from typing import NamedTuple

import numpy as np

from algebraic.sqrt_rational import signed_sqrt_sum, signed_sqrt_sum_is_zero
from util import NORMALIZATION_VERSION, content_hash

PLUS = 1
MINUS = -1
PRUNE_RELATIVE = 1e-14


class Mode(NamedTuple):
    """Fourier variable u_j (sigma=+1) or its conjugate (sigma=-1)."""

    j: int
    sigma: int

    def conjugate(self):
        return Mode(self.j, -self.sigma)


class Monomial(tuple):
    """
    Canonically sorted product of modes. Plain (j, sigma) tuples compare and hash like Mode, so
    hot loops build monomials from bare tuples via Monomial.sorted_unchecked.
    """

    __slots__ = ()

    def __new__(cls, modes=()):
        checked = []
        for mode in modes:
            j, sigma = int(mode[0]), int(mode[1])
            if j == 0:
                raise ValueError("mode wavenumber must be nonzero")
            if sigma not in (PLUS, MINUS):
                raise ValueError(f"mode sign must be +1 or -1, got {sigma}")
            checked.append(Mode(j, sigma))
        return super().__new__(cls, sorted(checked))

    @classmethod
    def sorted_unchecked(cls, modes):
        return tuple.__new__(cls, sorted(modes))

    @property
    def degree(self):
        return len(self)

    @property
    def momentum(self):
        return sum(sigma * j for j, sigma in self)

    @property
    def modes(self):
        return tuple(Mode(j, sigma) for j, sigma in self)

    def conjugate(self):
        return Monomial.sorted_unchecked((j, -sigma) for j, sigma in self)

    def frequency(self):
        """Exact sum of sigma*sqrt(|j|), the eigenvalue of the adjoint action up to -i."""
        return signed_sqrt_sum(self)

    def multiplicities(self):
        return [(mode, len(list(group))) for mode, group in groupby(self)]

    def dz(self, sites):
        return sum(1 for j, _ in self if j not in sites)

    def is_trivial(self):
        if len(self) % 2:
            return False
        plus = sorted(j for j, sigma in self if sigma == PLUS)
        minus = sorted(j for j, sigma in self if sigma == MINUS)
        return plus == minus

    def pair_momenta(self):
        return [
            abs(self[a][1] * self[a][0] + self[b][1] * self[b][0])
            for a in range(len(self))
            for b in range(a + 1, len(self))
        ]

    def to_json(self):
        return [[j, sigma] for j, sigma in self]


@lru_cache(maxsize=None)
def in_kernel(monomial):
    """True when the adjoint action of H2 annihilates the monomial (exact test)."""
    return signed_sqrt_sum_is_zero(monomial)


def closure_safe(monomial, cutoff):
    """
    Every bracket intermediate that can produce this monomial from cubic factors lies inside the
    cutoff: all pair momenta are bounded by it.
    """
    return all(p <= cutoff for p in monomial.pair_momenta())


def _remove_one(monomial, mode):
    i = monomial.index(mode)
    return monomial[:i] + monomial[i + 1 :]


class BracketAudit:
    """Counts contraction terms discarded by degree truncation."""

    def __init__(self):
        self.discarded = 0
        self.computed = 0

    def as_dict(self):
        return {"discarded_terms": self.discarded, "computed_terms": self.computed}


class HamPolynomial:
    """
    Sparse complex polynomial in the Fourier variables, H = sum_m c_m * m over canonical monomials.

    Treated as immutable: every operation returns a new instance.
    """

    def __init__(
        self,
        coeffs=None,
        momentum_conserving=True,
        real_valued=True,
        prune=PRUNE_RELATIVE,
        dtype=complex,
    ):
        self.dtype = dtype
        self.momentum_conserving = momentum_conserving
        self.real_valued = real_valued
        raw = {}
        for monomial, coeff in (coeffs or {}).items():
            if not isinstance(monomial, Monomial):
                monomial = Monomial(monomial)
            raw[monomial] = dtype(coeff)
        self._coeffs = self._pruned(raw, prune)
        self._degree_index = None
        if momentum_conserving:
            bad = [m for m in self._coeffs if m.momentum != 0]
            if bad:
                raise ValueError(f"monomial {bad[0]} violates momentum conservation")

    @staticmethod
    def _pruned(raw, prune):
        largest = defaultdict(float)
        for monomial, coeff in raw.items():
            largest[len(monomial)] = max(largest[len(monomial)], abs(coeff))
        return {
            m: c
            for m, c in raw.items()
            if c != 0 and abs(c) > prune * largest[len(m)]
        }

    @classmethod
    def _trusted(
        cls, coeffs, momentum_conserving, real_valued, dtype=complex, prune=PRUNE_RELATIVE
    ):
        obj = cls.__new__(cls)
        obj.dtype = dtype
        obj.momentum_conserving = momentum_conserving
        obj.real_valued = real_valued
        obj._coeffs = cls._pruned(coeffs, prune)
        obj._degree_index = None
        return obj

    def _like(self, coeffs, **flags):
        return HamPolynomial._trusted(
            coeffs,
            flags.get("momentum_conserving", self.momentum_conserving),
            flags.get("real_valued", self.real_valued),
            dtype=self.dtype,
        )

    @property
    def coeffs(self):
        return MappingProxyType(self._coeffs)

    @property
    def degree_index(self):
        if self._degree_index is None:
            index = defaultdict(dict)
            for monomial, coeff in self._coeffs.items():
                index[len(monomial)][monomial] = coeff
            self._degree_index = {d: MappingProxyType(sub) for d, sub in sorted(index.items())}
        return self._degree_index

    def __len__(self):
        return len(self._coeffs)

    def __iter__(self):
        return iter(self._coeffs)

    def __contains__(self, monomial):
        return Monomial(monomial) in self._coeffs

    def items(self):
        return self._coeffs.items()

    def coeff(self, modes):
        monomial = modes if isinstance(modes, Monomial) else Monomial(modes)
        return self._coeffs.get(monomial, self.dtype(0))

    def degrees(self):
        return list(self.degree_index)

    @property
    def cutoff(self):
        return max((abs(j) for m in self._coeffs for j, _ in m), default=0)

    def homogeneous(self, degree):
        return self._like({m: c for m, c in self._coeffs.items() if len(m) == degree})

    def truncate(self, max_degree):
        return self._like({m: c for m, c in self._coeffs.items() if len(m) <= max_degree})

    def restrict(self, cutoff):
        """Drop every monomial that touches a mode with |j| > cutoff."""
        return self._like(
            {m: c for m, c in self._coeffs.items() if all(abs(j) <= cutoff for j, _ in m)}
        )

    def filter(self, predicate):
        return self._like({m: c for m, c in self._coeffs.items() if predicate(m)})

    def max_abs(self, degree=None):
        values = [
            abs(c) for m, c in self._coeffs.items() if degree is None or len(m) == degree
        ]
        return float(max(values, default=0.0))

    def __add__(self, other):
        if not isinstance(other, HamPolynomial):
            return NotImplemented
        out = dict(self._coeffs)
        for monomial, coeff in other._coeffs.items():
            out[monomial] = out.get(monomial, 0) + coeff
        return self._like(
            out,
            momentum_conserving=self.momentum_conserving and other.momentum_conserving,
            real_valued=self.real_valued and other.real_valued,
        )

    def __neg__(self):
        return self._like({m: -c for m, c in self._coeffs.items()})

    def __sub__(self, other):
        if not isinstance(other, HamPolynomial):
            return NotImplemented
        return self + (-other)

    def scale(self, factor):
        real = np.isreal(factor)
        return self._like(
            {m: c * factor for m, c in self._coeffs.items()},
            real_valued=self.real_valued and bool(real),
        )

    def __mul__(self, factor):
        if isinstance(factor, HamPolynomial):
            return NotImplemented
        return self.scale(factor)

    __rmul__ = __mul__

    def conjugate_mismatch(self):
        """max |c(conj m) - conj(c(m))|, zero for a real-valued polynomial"""
        worst = 0.0
        for monomial, coeff in self._coeffs.items():
            partner = self._coeffs.get(monomial.conjugate(), 0)
            worst = max(worst, abs(partner - np.conj(coeff)))
        return float(worst)

    def momentum_violations(self):
        return [m for m in self._coeffs if m.momentum != 0]

    def evaluate(self, u):
        """
        Evaluate at a point given as a mapping j -> u_j (missing modes are zero).
        """
        total = self.dtype(0)
        for monomial, coeff in self._coeffs.items():
            term = coeff
            for j, sigma in monomial:
                value = u.get(j, 0)
                term = term * (value if sigma == PLUS else np.conj(value))
                if term == 0:
                    break
            total += term
        return total

    def to_json(self):
        terms = [
            {
                "degree": len(m),
                "modes": m.to_json(),
                "re": float(np.real(c)),
                "im": float(np.imag(c)),
            }
            for m, c in sorted(self._coeffs.items(), key=lambda item: (len(item[0]), item[0]))
        ]
        return {
            "normalization_version": NORMALIZATION_VERSION,
            "momentum_conserving": self.momentum_conserving,
            "real_valued": self.real_valued,
            "terms": terms,
        }

    @classmethod
    def from_json(cls, payload):
        coeffs = {
            Monomial(tuple(mode) for mode in term["modes"]): complex(term["re"], term["im"])
            for term in payload["terms"]
        }
        return cls(
            coeffs,
            momentum_conserving=payload["momentum_conserving"],
            real_valued=payload["real_valued"],
            prune=0.0,
        )

    def content_hash(self):
        return content_hash(self.to_json())

    def __repr__(self):
        sizes = {d: len(sub) for d, sub in self.degree_index.items()}
        return f"HamPolynomial(terms_per_degree={sizes})"


def diagonal_quadratic(cutoff, weight, dtype=complex):
    """sum_j weight(j) u_j conj(u_j) over 1 <= |j| <= cutoff"""
    coeffs = {}
    for j in range(-cutoff, cutoff + 1):
        if j == 0:
            continue
        w = weight(j)
        if w != 0:
            coeffs[Monomial.sorted_unchecked(((j, MINUS), (j, PLUS)))] = dtype(w)
    return HamPolynomial._trusted(coeffs, True, True, dtype=dtype)


def _contraction_index(poly):
    """mode -> degree -> list of (monomial minus one copy of mode, coeff * multiplicity)"""
    index = defaultdict(lambda: defaultdict(list))
    for monomial, coeff in poly.items():
        degree = len(monomial)
        for mode, mult in monomial.multiplicities():
            index[mode][degree].append((_remove_one(monomial, mode), coeff * mult))
    return index


def poisson_bracket(F, G, max_degree=None, audit=None):
    """
    {F, G} = (1/i) sum_k (d_{u_k} G d_{conj u_k} F - d_{conj u_k} G d_{u_k} F).

    :param max_degree: discard output monomials above this degree (counted in audit)
    :param audit: optional BracketAudit
    """
    index = _contraction_index(G)
    acc = defaultdict(complex) if F.dtype is complex else defaultdict(lambda: F.dtype(0))
    for f_monomial, f_coeff in F.items():
        f_degree = len(f_monomial)
        for mode, f_mult in f_monomial.multiplicities():
            j, sigma = mode
            partners = index.get((j, -sigma))
            if not partners:
                continue
            f_rest = _remove_one(f_monomial, mode)
            # sigma=-1: F differentiated in conj(u_k), G in u_k, weight 1/i = -i
            weight = -1j * f_coeff * f_mult if sigma == MINUS else 1j * f_coeff * f_mult
            for g_degree, terms in partners.items():
                if max_degree is not None and f_degree + g_degree - 2 > max_degree:
                    if audit is not None:
                        audit.discarded += len(terms)
                    continue
                if audit is not None:
                    audit.computed += len(terms)
                for g_rest, g_coeff in terms:
                    monomial = Monomial.sorted_unchecked(f_rest + g_rest)
                    acc[monomial] += weight * g_coeff
    return HamPolynomial._trusted(
        dict(acc),
        F.momentum_conserving and G.momentum_conserving,
        F.real_valued and G.real_valued,
        dtype=F.dtype,
    )


def _site_set(sites):
    if hasattr(sites, "sites"):
        sites = sites.sites
    return frozenset(int(j) for j in sites)


def project(H, which, S=None, k=None):
    """
    Projectors on monomials.

    :param which: "dz_le", "dz_eq" (need S and k), "ker_H2", "rg_H2" or "trivial"
    """
    if which in ("dz_le", "dz_eq"):
        if S is None or k is None:
            raise ValueError(f"projector {which} needs tangential sites and k")
        sites = _site_set(S)
        if which == "dz_le":
            return H.filter(lambda m: m.dz(sites) <= k)
        return H.filter(lambda m: m.dz(sites) == k)
    if which == "ker_H2":
        return H.filter(in_kernel)
    if which == "rg_H2":
        return H.filter(lambda m: not in_kernel(m))
    if which == "trivial":
        return H.filter(Monomial.is_trivial)
    raise KeyError(f"unknown projector {which}")
