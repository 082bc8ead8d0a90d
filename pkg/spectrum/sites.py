from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class TangentialSet:
    """
    Tangential sites (j_1, ..., j_nu): positive sites first, then negative ones.

    The k != -j condition across the split is a genericity requirement, checked by
    bis_violations() and resonance.classify.is_generic rather than at construction, so
    non-generic sets can still be built and diagnosed.
    """

    sites: tuple

    def __post_init__(self):
        sites = tuple(int(j) for j in self.sites)
        if not sites:
            raise ValueError("tangential set must contain at least one site")
        if any(j == 0 for j in sites):
            raise ValueError(f"tangential sites must be nonzero, got {sites}")
        if len(set(sites)) != len(sites):
            raise ValueError(f"tangential sites must be distinct, got {sites}")
        seen_negative = False
        for j in sites:
            if j < 0:
                seen_negative = True
            elif seen_negative:
                raise ValueError(f"positive sites must precede negative ones, got {sites}")
        object.__setattr__(self, "sites", sites)

    @classmethod
    def from_iterable(cls, sites):
        """Build from any ordering; positive sites keep their order and move to the front."""
        sites = [int(j) for j in sites]
        return cls(tuple([j for j in sites if j > 0] + [j for j in sites if j < 0]))

    @classmethod
    def parse(cls, text):
        if isinstance(text, (list, tuple)):
            return cls.from_iterable(text)
        try:
            return cls.from_iterable(int(tok) for tok in str(text).split(",") if tok.strip())
        except ValueError as err:
            raise ValueError(f"could not parse tangential sites from {text!r}: {err}")

    def __iter__(self):
        return iter(self.sites)

    def __len__(self):
        return len(self.sites)

    def __contains__(self, j):
        return j in self.site_set

    @cached_property
    def site_set(self):
        return frozenset(self.sites)

    @property
    def nu(self):
        return len(self.sites)

    @property
    def plus(self):
        return tuple(j for j in self.sites if j > 0)

    @property
    def minus(self):
        return tuple(j for j in self.sites if j < 0)

    @property
    def max_abs(self):
        return max(abs(j) for j in self.sites)

    @property
    def omega_bar(self):
        """linear frequencies sqrt(|j_i|)"""
        return np.sqrt(np.abs(np.array(self.sites, dtype=float)))

    @property
    def v(self):
        """velocity vector v_i = j_i"""
        return np.array(self.sites, dtype=np.int64)

    @property
    def w(self):
        """w_i = |j_i| j_i"""
        return np.array([abs(j) * j for j in self.sites], dtype=np.int64)

    def index(self, j):
        return self.sites.index(j)

    def bis_violations(self):
        return [(j, k) for j in self.plus for k in self.minus if k == -j]

    def to_json(self):
        return list(self.sites)

    def __str__(self):
        return ",".join(str(j) for j in self.sites)
