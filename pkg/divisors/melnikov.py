"""
Melnikov non-resonance families evaluated on batches of frequency vectors.

Every divisor is affine in (omega, zeta) at leading order,

    value = omega . l + const + eps^2 h . zeta,

so a family is a table of (l, const, h, threshold) rows and membership of many samples reduces
to one matrix product per chunk.
"""
from dataclasses import dataclass, field
from typing import NamedTuple

from absl import logging
import numpy as np

from divisors.small_divisors import DivisorRecord, bracket_l, l1_ball
from spectrum.twist import amp_freq, freq_amp, twist_matrix

SPECS = ("g0", "g1", "g2", "P", "Q", "R+", "R-")
CHUNK_ENTRIES = 4_000_000
# constant in front of the same-sign tail threshold <l>^(2 nu + 6) gamma^-2
TAIL_CONSTANT = 1.0


@dataclass
class TermTable:
    family: list = field(default_factory=list)
    ell: list = field(default_factory=list)
    j: list = field(default_factory=list)
    k: list = field(default_factory=list)
    sigma: list = field(default_factory=list)
    sigma_p: list = field(default_factory=list)
    const: list = field(default_factory=list)
    h: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    coverage: dict = field(default_factory=dict)

    def add(self, family, ell, const, h, threshold, j=None, k=None, sigma=1, sigma_p=1):
        self.family.append(family)
        self.ell.append(tuple(ell))
        self.j.append(j)
        self.k.append(k)
        self.sigma.append(sigma)
        self.sigma_p.append(sigma_p)
        self.const.append(const)
        self.h.append(h)
        self.threshold.append(threshold)

    def __len__(self):
        return len(self.family)

    def arrays(self, nu):
        if not len(self):
            return np.zeros((0, nu)), np.zeros(0), np.zeros((0, nu)), np.zeros(0)
        return (
            np.asarray(self.ell, dtype=float),
            np.asarray(self.const, dtype=float),
            np.asarray(self.h, dtype=float),
            np.asarray(self.threshold, dtype=float),
        )

    def record(self, i, value):
        return DivisorRecord(
            ell=self.ell[i],
            j=self.j[i],
            k=self.k[i],
            sigma=self.sigma[i],
            sigma_p=self.sigma_p[i],
            value=float(value),
            constraint_ok=True,
            family=self.family[i],
            threshold=float(self.threshold[i]),
        )


class MelnikovResult(NamedTuple):
    passed: bool
    worst: DivisorRecord
    coverage: dict


def _m1_vector(S):
    """m1 = m1_vector . zeta"""
    return S.w.astype(float) / np.pi


def _c_vector(S, j):
    """c_j = c_vector . zeta"""
    out = np.zeros(S.nu)
    if abs(j) >= S.max_abs:
        return out
    for i, site in enumerate(S.sites):
        if abs(site) > abs(j):
            out[i] = site * (abs(j) - abs(site)) / np.pi
    return out


def _normal(S, j):
    return j != 0 and j not in S


def shifted_sup_norm(box, twist=None):
    """max over the box of |omega - eps^2 m1 v|_inf (affine in zeta, so attained at a corner)"""
    S = box.S
    twist = twist or twist_matrix(S)
    corners = box.corners()
    omegas = freq_amp(S, corners, box.eps, twist)
    shifted = omegas - box.eps**2 * np.outer(corners @ _m1_vector(S), S.v)
    return float(np.max(np.abs(shifted)))


def _half_ball(nu, radius):
    """nonzero l up to sign (first nonzero entry positive)"""
    ells = l1_ball(nu, radius, include_zero=False)
    return [ell for ell in ells if ell[np.flatnonzero(ell)[0]] > 0]


def divisor_terms(spec, box, L_max, J_max, twist=None):
    """
    Rows of one Melnikov family inside |l|_1 <= L_max and the normal-index window J_max.

    Families: g0 |omega.l|, g1 |(omega - eps^2 m1 v).l|, g2 adds sigma sqrt|j| - sigma' sqrt|k|,
    P first Melnikov omega.l + sigma d_{sigma j}, Q omega.l + eps^2 m1 j, R+ and R- the second
    Melnikov sums and differences of d_j.
    """
    if spec not in SPECS:
        raise KeyError(f"unknown Melnikov family {spec}, expected one of {SPECS}")
    S = box.S
    nu = S.nu
    tau = box.tau
    m1 = _m1_vector(S)
    v = S.v
    table = TermTable()
    zero = np.zeros(nu)

    def weight(ell):
        return bracket_l(ell) ** -tau

    if spec in ("g0", "g1"):
        for ell in _half_ball(nu, L_max):
            h = zero if spec == "g0" else -int(np.dot(v, ell)) * m1
            table.add(spec, ell, 0.0, h, box.gamma * weight(ell))
        table.coverage = {"complete_within": {"L_max": L_max}}
        return table

    if spec == "g2":
        for ell in l1_ball(nu, L_max):
            vl = int(np.dot(v, ell))
            h = -vl * m1
            for j in range(-J_max, J_max + 1):
                k = vl + j
                if not (_normal(S, j) and _normal(S, k)) or abs(k) > J_max:
                    continue
                for sigma in (1, -1):
                    for sigma_p in (1, -1):
                        if sigma == sigma_p and j == k and not any(ell):
                            continue
                        const = sigma * np.sqrt(abs(j)) - sigma_p * np.sqrt(abs(k))
                        threshold = box.gamma * weight(ell)
                        table.add(spec, ell, const, h, threshold, j, k, sigma, sigma_p)
        table.coverage = {"complete_within": {"C1": L_max, "C2": J_max}}
        return table

    if spec in ("P", "Q"):
        for ell in l1_ball(nu, L_max, include_zero=False):
            j = -int(np.dot(v, ell))
            if not _normal(S, j):
                continue
            if spec == "Q":
                table.add(spec, ell, 0.0, j * m1, 2 * box.gamma_n * weight(ell), j=j)
                continue
            h = (m1 + _c_vector(S, j)) * j
            for sigma in (1, -1):
                const = sigma * np.sqrt(abs(j))
                table.add(spec, ell, const, h, 2 * box.gamma_n * weight(ell), j=j, sigma=sigma)
        table.coverage = {"complete_within": {"L_max": L_max}, "j_fixed_by_momentum": True}
        return table

    sup = shifted_sup_norm(box, twist)
    truncated = False
    tail_max = 0.0
    for ell in l1_ball(nu, L_max):
        vl = int(np.dot(v, ell))
        norm1 = int(np.sum(np.abs(ell)))
        if spec == "R+":
            # sqrt|j| + sqrt|k| <= sup |l|_1 + 1 whenever the set is nonempty
            bound = (sup * norm1 + 1) ** 2
            if bound > J_max:
                truncated = True
            window = int(min(bound, J_max))
            for j in range(-window, window + 1):
                k = vl + j
                if not (_normal(S, j) and _normal(S, k)):
                    continue
                if np.sqrt(abs(j)) + np.sqrt(abs(k)) > sup * norm1 + 1:
                    continue
                h = (m1 + _c_vector(S, j)) * j - (m1 + _c_vector(S, k)) * k
                for sigma in (1, -1):
                    const = sigma * (np.sqrt(abs(j)) + np.sqrt(abs(k)))
                    threshold = 2 * box.gamma_n * weight(ell)
                    table.add(spec, ell, const, h, threshold, j, k, sigma, -sigma)
            continue
        # R-: opposite-sign pairs satisfy |j| + |k| = |v.l|; same-sign pairs scanned to J_max
        if vl == 0:
            continue
        for j in range(-J_max, J_max + 1):
            k = vl + j
            if not (_normal(S, j) and _normal(S, k)) or abs(k) > J_max:
                continue
            h = (m1 + _c_vector(S, j)) * j - (m1 + _c_vector(S, k)) * k
            for sigma in (1, -1):
                const = sigma * (np.sqrt(abs(j)) - np.sqrt(abs(k)))
                threshold = 2 * box.gamma_star_n * weight(ell)
                table.add(spec, ell, const, h, threshold, j, k, sigma, sigma)
        tail = TAIL_CONSTANT * bracket_l(ell) ** (2 * nu + 6) / box.gamma**2
        tail_max = max(tail_max, tail)
        if tail > J_max:
            truncated = True
        table.add("R-tail", ell, 0.0, -vl * m1, box.gamma * bracket_l(ell) ** -(nu + 2))
    table.coverage = {"complete_within": {"L_max": L_max, "J_max": J_max}, "truncated": truncated}
    if spec == "R+":
        table.coverage["sup_norm_shifted"] = sup
    else:
        table.coverage["tail_threshold_max"] = tail_max
    return table


def evaluate(table, omegas, zetas, eps):
    """values of every row at every sample, shape (samples, rows)"""
    nu = omegas.shape[-1]
    ell, const, h, _ = table.arrays(nu)
    return omegas @ ell.T + const + eps**2 * (zetas @ h.T)


def excluded_mask(table, omegas, zetas, eps):
    """True for samples violating at least one row of the table."""
    omegas = np.atleast_2d(omegas)
    zetas = np.atleast_2d(zetas)
    nu = omegas.shape[-1]
    ell, const, h, threshold = table.arrays(nu)
    mask = np.zeros(len(omegas), dtype=bool)
    if not len(table):
        return mask
    rows = max(1, CHUNK_ENTRIES // len(table))
    for start in range(0, len(omegas), rows):
        stop = start + rows
        values = omegas[start:stop] @ ell.T + const + eps**2 * (zetas[start:stop] @ h.T)
        mask[start:stop] = np.any(np.abs(values) < threshold, axis=1)
    return mask


def melnikov_member(omega, spec, box, L_max, J_max, twist=None):
    """
    Membership of one frequency vector in one or several Melnikov families.

    :param spec: a family name, a list of names or "all"
    :return: MelnikovResult(passed, worst record by margin |value| - threshold, coverage)
    """
    specs = list(SPECS) if spec == "all" else ([spec] if isinstance(spec, str) else list(spec))
    twist = twist or twist_matrix(box.S)
    omega = np.asarray(omega, dtype=float)
    zeta = amp_freq(box.S, omega, box.eps, twist)
    passed, worst, coverage = True, None, {}
    for name in specs:
        table = divisor_terms(name, box, L_max, J_max, twist)
        coverage[name] = table.coverage
        if not len(table):
            continue
        values = evaluate(table, omega[None, :], zeta[None, :], box.eps)[0]
        margins = np.abs(values) - np.asarray(table.threshold)
        i = int(np.argmin(margins))
        if margins[i] < 0:
            passed = False
        record = table.record(i, values[i])
        if worst is None or record.margin < worst.margin:
            worst = record
    if not passed:
        logging.info(f"omega={omega} fails {specs}: worst {worst}")
    return MelnikovResult(passed, worst, coverage)
