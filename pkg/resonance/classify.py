"""
Exact n-wave resonance arithmetic for the sqrt(|j|) dispersion law.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from itertools import combinations_with_replacement

from absl import logging

from algebraic.sqrt_rational import signed_sqrt_sum, signed_sqrt_sum_is_zero
from spectrum.sites import TangentialSet

MAX_ORDER = 15
DEFAULT_MAX_ORDER = 8


class Resonance(Enum):
    NOT_RESONANT = "NotResonant"
    TRIVIAL = "Trivial"
    NON_TRIVIAL = "NonTrivial"


@dataclass(frozen=True)
class ResonanceTuple:
    """(j_i, sigma_i) pairs; momentum and frequency sum are always recomputed from them."""

    pairs: tuple

    def __post_init__(self):
        pairs = tuple((int(j), int(sigma)) for j, sigma in self.pairs)
        for j, sigma in pairs:
            if j == 0:
                raise ValueError("resonance indices must be nonzero")
            if sigma not in (1, -1):
                raise ValueError(f"signs must be +1 or -1, got {sigma}")
        object.__setattr__(self, "pairs", pairs)

    @property
    def order(self):
        return len(self.pairs)

    @property
    def momentum(self):
        return sum(sigma * j for j, sigma in self.pairs)

    @property
    def frequency(self):
        return signed_sqrt_sum(self.pairs)

    def conjugate(self):
        return ResonanceTuple(tuple((j, -sigma) for j, sigma in self.pairs))

    def canonical(self):
        """
        Representative of {t, conj t} with pairs sorted by (j, -sigma); the smaller of the two
        sorted forms wins.
        """
        key = lambda pair: (pair[0], -pair[1])  # noqa: E731
        mine = tuple(sorted(self.pairs, key=key))
        other = tuple(sorted(((j, -s) for j, s in self.pairs), key=key))
        best = min(mine, other, key=lambda ps: [key(p) for p in ps])
        return ResonanceTuple(best)

    def indices(self):
        return tuple(j for j, _ in self.pairs)

    def to_json(self):
        return [[j, sigma] for j, sigma in self.pairs]

    def csv_row(self, classification):
        indices = " ".join(str(j) for j, _ in self.pairs)
        signs = " ".join(str(s) for _, s in self.pairs)
        return [self.order, indices, signs, classification.value]


def classify(t):
    """
    Resonant iff momentum is 0 and the frequency sum is exactly 0; trivial iff the
    resonance pairs off into conjugate modes.
    """
    if t.momentum != 0 or not signed_sqrt_sum_is_zero(t.pairs):
        return Resonance.NOT_RESONANT
    plus = sorted(j for j, sigma in t.pairs if sigma == 1)
    minus = sorted(j for j, sigma in t.pairs if sigma == -1)
    if t.order % 2 == 0 and plus == minus:
        return Resonance.TRIVIAL
    return Resonance.NON_TRIVIAL


def benjamin_feir(lambdas, bs):
    """
    Two-parameter Benjamin-Feir family
    (-lam b^2, +), (lam (b+1)^2, -), (lam (b^2+b+1)^2, +), (lam b^2 (b+1)^2, -).
    """
    out = []
    for lam in lambdas:
        if lam == 0:
            raise ValueError("lambda must be nonzero")
        for b in bs:
            if b < 1:
                raise ValueError(f"b must be >= 1, got {b}")
            out.append(
                ResonanceTuple(
                    (
                        (-lam * b * b, 1),
                        (lam * (b + 1) ** 2, -1),
                        (lam * (b * b + b + 1) ** 2, 1),
                        (lam * b * b * (b + 1) ** 2, -1),
                    )
                )
            )
    return out


def _site_modes(S):
    return [(j, sigma) for j in S.sites for sigma in (1, -1)]


def _scan(n, S, visit, executor=None):
    """
    Walk every momentum-zero tuple of order n with at most one index outside S.
    Site multisets are sharded by their smallest mode and merged in shard order.
    """
    sites = S.site_set
    modes = _site_modes(S)

    def shard(i):
        found = []
        head = (modes[i],)
        for rest in combinations_with_replacement(modes[i:], n - 1):
            inside = head + rest
            if sum(sigma * j for j, sigma in inside) == 0:
                found.append(inside)
        for rest in combinations_with_replacement(modes[i:], n - 2):
            inside = head + rest
            momentum = sum(sigma * j for j, sigma in inside)
            for sigma in (1, -1):
                # the outside index is fixed by momentum
                j_out = -sigma * momentum
                if j_out != 0 and j_out not in sites:
                    found.append(inside + ((j_out, sigma),))
        return found

    indices = range(len(modes))
    if executor is None:
        results = [shard(i) for i in indices]
    else:
        results = list(executor.map(shard, indices))
    for found in results:
        for pairs in found:
            visit(pairs)


def enumerate_low_outside(n, S, executor=None):
    """
    Nontrivial resonances of order n with at most one index outside S, one canonical
    representative per conjugate pair, sorted.

    Every such tuple has all indices within (n-1) max|S| because the outside index is fixed by
    momentum, so the scan is complete.
    """
    if not 3 <= n <= MAX_ORDER:
        raise ValueError(f"order must be in [3, {MAX_ORDER}], got {n}")
    if not isinstance(S, TangentialSet):
        S = TangentialSet.from_iterable(S)
    found = set()

    def visit(pairs):
        if not signed_sqrt_sum_is_zero(pairs):
            return
        t = ResonanceTuple(pairs)
        if classify(t) is Resonance.NON_TRIVIAL:
            found.add(t.canonical())

    _scan(n, S, visit, executor)
    return sorted(found, key=lambda t: (t.order, [(j, -s) for j, s in t.pairs]))


def is_generic(S, n_max=DEFAULT_MAX_ORDER, threads=1):
    """
    Genericity of the tangential sites up to order n_max.

    Returns:
        (generic, certificate) with certificate None, {"reason": "opposite_sites", ...} or
        {"reason": "resonance", "tuple": [...], "order": n}
    """
    if not isinstance(S, TangentialSet):
        S = TangentialSet.from_iterable(S)
    if not 3 <= n_max <= MAX_ORDER:
        raise ValueError(f"n_max must be in [3, {MAX_ORDER}], got {n_max}")
    bad = S.bis_violations()
    if bad:
        return False, {"reason": "opposite_sites", "sites": [list(pair) for pair in bad]}
    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for n in range(3, n_max + 1):
            found = enumerate_low_outside(n, S, executor)
            if found:
                logging.info(f"sites {S} resonate at order {n}: {found[0].pairs}")
                return False, {"reason": "resonance", "order": n, "tuple": found[0].to_json()}
    finally:
        if executor is not None:
            executor.shutdown()
    return True, None


def min_frequency_gap(S, n):
    """
    Smallest |sum sigma sqrt(|j|)| over non-resonant momentum-zero tuples of order n with at most
    one index outside S.

    :return: (gap, ResonanceTuple) or (inf, None) when no candidate exists
    """
    if not isinstance(S, TangentialSet):
        S = TangentialSet.from_iterable(S)
    best = [float("inf"), None]

    def visit(pairs):
        if signed_sqrt_sum_is_zero(pairs):
            return
        gap = abs(sum(sigma * abs(j) ** 0.5 for j, sigma in pairs))
        if gap < best[0]:
            best[0], best[1] = gap, pairs

    _scan(n, S, visit)
    return best[0], (ResonanceTuple(best[1]).canonical() if best[1] is not None else None)
