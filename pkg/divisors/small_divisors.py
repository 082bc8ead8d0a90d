"""
Momentum-constrained small divisors omega_bar.l + sigma sqrt|j| - sigma' sqrt|k| and their scans.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

from absl import logging
import mpmath
import numpy as np

from algebraic.sqrt_rational import SqrtRational, sqrt_of
from spectrum.sites import TangentialSet

MAX_ORDER = 6
# stability check: the minimum may move by less than this fraction when J_max doubles
STABILITY_RTOL = 0.01
TWO_NINTHS = 2.0 / 9.0


@dataclass(frozen=True)
class FrequencyBox:
    """
    Frequency parameters at amplitude eps: gamma = gamma_scale * eps^(2b), b = 1 + a/2,
    gamma* = gamma^3 and tau = 3 nu + 7 unless overridden. The box is zeta(omega) in [1, 2]^nu.
    """

    S: TangentialSet
    eps: float
    a: float = 0.2
    tau: Optional[float] = None
    gamma_scale: float = 1.0
    n: int = 0

    def __post_init__(self):
        if not isinstance(self.S, TangentialSet):
            object.__setattr__(self, "S", TangentialSet.from_iterable(self.S))
        if not 0 < self.eps < 1:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if not 0 < self.a < 1:
            raise ValueError(f"a must lie in (0, 1), got {self.a}")
        if self.gamma_scale < 0:
            raise ValueError(f"gamma_scale must be >= 0, got {self.gamma_scale}")
        if self.tau is None:
            object.__setattr__(self, "tau", 3 * self.S.nu + 7)
        if self.tau <= self.S.nu + 1:
            raise ValueError(f"tau must exceed nu + 1 = {self.S.nu + 1}, got {self.tau}")
        if self.n < 0:
            raise ValueError(f"iteration index must be >= 0, got {self.n}")
        # gamma < eps^2 holds for the unscaled rate; gamma_scale is the S-dependent constant
        assert self.eps ** (2 * self.b) < self.eps**2

    @property
    def nu(self):
        return self.S.nu

    @property
    def b(self):
        return 1 + self.a / 2

    @property
    def gamma(self):
        return self.gamma_scale * self.eps ** (2 * self.b)

    @property
    def gamma_star(self):
        return self.gamma**3

    @property
    def gamma_n(self):
        return self.gamma * (1 + 2.0**-self.n)

    @property
    def gamma_star_n(self):
        return self.gamma_star * (1 + 2.0**-self.n)

    def with_eps(self, eps):
        return replace(self, eps=eps)

    def sample_zeta(self, rng, size):
        return rng.uniform(1.0, 2.0, size=(size, self.nu))

    def corners(self):
        grids = np.meshgrid(*[[1.0, 2.0]] * self.nu, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def to_json(self):
        return {
            "sites": list(self.S.sites),
            "eps": self.eps,
            "a": self.a,
            "b": self.b,
            "tau": self.tau,
            "gamma": self.gamma,
            "gamma_star": self.gamma_star,
            "gamma_scale": self.gamma_scale,
            "n": self.n,
        }


def bracket_l(ell):
    """<l> = max(1, |l|_1)"""
    return max(1, int(np.sum(np.abs(ell))))


@dataclass
class DivisorRecord:
    ell: tuple
    j: Optional[int]
    k: Optional[int]
    sigma: int
    sigma_p: int
    value: float
    constraint_ok: bool
    exact: Optional[SqrtRational] = field(default=None, repr=False)
    trivial: bool = False
    family: str = "delta"
    threshold: Optional[float] = None

    @property
    def margin(self):
        if self.threshold is None:
            return None
        return abs(self.value) - self.threshold

    def to_json(self):
        return {
            "family": self.family,
            "ell": list(self.ell),
            "j": self.j,
            "k": self.k,
            "sigma": self.sigma,
            "sigma_p": self.sigma_p,
            "value": self.value,
            "constraint_ok": self.constraint_ok,
            "trivial": self.trivial,
            "threshold": self.threshold,
            "margin": self.margin,
            "exact": None if self.exact is None else self.exact.to_json(),
        }

    def csv_row(self):
        ell = " ".join(str(x) for x in self.ell)
        return [self.family, ell, self.j, self.k, self.sigma, self.sigma_p, repr(self.value)]


def _exact_delta(S, ell, sigma, j, sigma_p, k):
    total = SqrtRational()
    for site, l in zip(S.sites, ell):
        if l:
            total = total + sqrt_of(abs(site)).scale(int(l))
    return total + sqrt_of(abs(j)).scale(sigma) - sqrt_of(abs(k)).scale(sigma_p)


def delta(S, p, ell, sigma, j, sigma_p, k):
    """
    Exact divisor omega_bar.l + sigma sqrt|j| - sigma' sqrt|k| with a high-precision float
    shadow. Momentum violations are flagged in constraint_ok, never raised.
    """
    if not isinstance(S, TangentialSet):
        S = TangentialSet.from_iterable(S)
    ell = tuple(int(x) for x in ell)
    if len(ell) != S.nu:
        raise ValueError(f"l has {len(ell)} entries for {S.nu} sites")
    if sum(abs(x) for x in ell) > p:
        raise ValueError(f"|l| = {sum(abs(x) for x in ell)} exceeds p = {p}")
    if j == 0 or k == 0:
        raise ValueError("divisor indices must be nonzero")
    exact = _exact_delta(S, ell, sigma, j, sigma_p, k)
    momentum = int(np.dot(S.v, ell)) + j - k
    value = float(np.dot(S.omega_bar, ell)) + sigma * np.sqrt(abs(j)) - sigma_p * np.sqrt(abs(k))
    return DivisorRecord(
        ell=ell,
        j=int(j),
        k=int(k),
        sigma=int(sigma),
        sigma_p=int(sigma_p),
        value=float(value),
        constraint_ok=momentum == 0,
        exact=exact,
        trivial=sigma == sigma_p and j == k and not any(ell),
    )


def l1_ball(nu, radius, include_zero=True):
    """All integer vectors of length nu with |l|_1 <= radius, in lexicographic order."""
    out = []

    def grow(prefix, left, slots):
        if slots == 0:
            out.append(tuple(prefix))
            return
        for x in range(-left, left + 1):
            grow(prefix + [x], left - abs(x), slots - 1)

    grow([], radius, nu)
    if not include_zero:
        out = [ell for ell in out if any(ell)]
    return out


@dataclass
class DivisorScan:
    p: int
    J_max: int
    min_value: float
    argmin: DivisorRecord
    scanned: int
    stable: Optional[bool] = None
    min_doubled: Optional[float] = None
    branch_min: Optional[float] = None
    branch_argmin: Optional[DivisorRecord] = None

    def to_json(self):
        return {
            "p": self.p,
            "J_max": self.J_max,
            "min": self.min_value,
            "argmin": self.argmin.to_json() if self.argmin else None,
            "scanned": self.scanned,
            "stable": self.stable,
            "min_doubled": self.min_doubled,
            "opposite_sign_branch_min": self.branch_min,
            "opposite_sign_branch_argmin": (
                self.branch_argmin.to_json() if self.branch_argmin else None
            ),
        }


def _scan_ell(S, ell, J_max):
    """
    Minimum |delta| for one l over all sign pairs and momentum-constrained (j, k), plus the
    minimum over the opposite-sign branch with |l|_1 = 1 and max(|j|, |k|) <= |j*|.
    """
    ell = np.asarray(ell)
    shift = float(np.dot(S.omega_bar, ell))
    vl = int(np.dot(S.v, ell))
    js = np.concatenate([np.arange(-J_max, 0), np.arange(1, J_max + 1)])
    ks = js + vl
    valid = (ks != 0) & (np.abs(ks) <= J_max)
    js, ks = js[valid], ks[valid]
    root_j = np.sqrt(np.abs(js))
    root_k = np.sqrt(np.abs(ks))
    best = (np.inf, None)
    branch = (np.inf, None)
    star = None
    if np.sum(np.abs(ell)) == 1:
        star = abs(S.sites[int(np.flatnonzero(ell)[0])])
    count = 0
    for sigma in (1, -1):
        for sigma_p in (1, -1):
            values = np.abs(shift + sigma * root_j - sigma_p * root_k)
            if sigma == sigma_p and not ell.any():
                values = np.where(js == ks, np.inf, values)
            count += int(np.isfinite(values).sum())
            if len(values) == 0:
                continue
            i = int(np.argmin(values))
            if values[i] < best[0]:
                best = (float(values[i]), (sigma, int(js[i]), sigma_p, int(ks[i])))
            if star is not None and sigma == -sigma_p:
                inside = np.maximum(np.abs(js), np.abs(ks)) <= star
                if inside.any():
                    sub = np.where(inside, values, np.inf)
                    i = int(np.argmin(sub))
                    if sub[i] < branch[0]:
                        branch = (float(sub[i]), (sigma, int(js[i]), sigma_p, int(ks[i])))
    return best, branch, count


def _min_over_ball(S, p, J_max, executor=None):
    ells = l1_ball(S.nu, p)
    if executor is None:
        results = [_scan_ell(S, ell, J_max) for ell in ells]
    else:
        results = list(executor.map(lambda ell: _scan_ell(S, ell, J_max), ells))
    best, branch, scanned = (np.inf, None, None), (np.inf, None, None), 0
    for ell, (b, br, count) in zip(ells, results):
        scanned += count
        if b[0] < best[0]:
            best = (b[0], ell, b[1])
        if br[0] < branch[0]:
            branch = (br[0], ell, br[1])
    return best, branch, scanned


def _confirm(S, p, found):
    value, ell, args = found
    if ell is None:
        return np.inf, None
    sigma, j, sigma_p, k = args
    record = delta(S, p, ell, sigma, j, sigma_p, k)
    return abs(record.value), record


def divisor_min(S, p, J_max, stability_check=True, threads=1):
    """
    Exhaustive minimum of |delta^(p)| over nontrivial momentum-constrained triples with
    |j|, |k| <= J_max and |l|_1 <= p. The argmin is re-evaluated exactly; with stability_check the
    scan is repeated at 2 J_max.
    """
    if not isinstance(S, TangentialSet):
        S = TangentialSet.from_iterable(S)
    if not 0 <= p <= MAX_ORDER:
        raise ValueError(f"p must be in [0, {MAX_ORDER}], got {p}")
    if J_max < 1:
        raise ValueError(f"J_max must be >= 1, got {J_max}")
    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        best, branch, scanned = _min_over_ball(S, p, J_max, executor)
        min_value, argmin = _confirm(S, p, best)
        branch_min, branch_argmin = _confirm(S, p, branch)
        scan = DivisorScan(
            p=p,
            J_max=J_max,
            min_value=min_value,
            argmin=argmin,
            scanned=scanned,
            branch_min=None if branch_argmin is None else branch_min,
            branch_argmin=branch_argmin,
        )
        if stability_check:
            doubled, _, _ = _min_over_ball(S, p, 2 * J_max, executor)
            scan.min_doubled, _ = _confirm(S, p, doubled)
            scan.stable = abs(scan.min_doubled - min_value) <= STABILITY_RTOL * min_value
    finally:
        if executor is not None:
            executor.shutdown()
    logging.info(
        f"divisor min S={S} p={p} J_max={J_max}: {scan.min_value:.6g} "
        f"(stable={scan.stable}, branch={scan.branch_min})"
    )
    return scan


def highprec_gap(record, prec=256):
    """|float(delta) - high-precision delta|"""
    with mpmath.workprec(prec):
        return float(abs(mpmath.mpf(record.value) - record.exact.to_mpf(prec)))
