"""
Twist matrix, integer determinant certificates, the frequency-amplitude map and the first-order
eigenvalue corrections of the normal directions.
"""
from dataclasses import dataclass, field
from typing import Optional

from absl import logging
import numpy as np

from spectrum.sites import TangentialSet
from util import NumericalError


def integer_det(matrix):
    """Exact determinant of an integer matrix (fraction-free Bareiss elimination)."""
    a = [[int(x) for x in row] for row in matrix]
    n = len(a)
    if n == 0:
        return 1
    sign = 1
    prev = 1
    for k in range(n - 1):
        if a[k][k] == 0:
            swap = next((r for r in range(k + 1, n) if a[r][k] != 0), None)
            if swap is None:
                return 0
            a[k], a[swap] = a[swap], a[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def scaled_twist_matrix(S):
    """4 pi A as an integer matrix: 2|j|^3 on the diagonal, 4|big||small|^2 for same-sign pairs."""
    sites = S.sites
    nu = len(sites)
    M = [[0] * nu for _ in range(nu)]
    for i, ji in enumerate(sites):
        M[i][i] = 2 * abs(ji) ** 3
        for k, jk in enumerate(sites):
            if k == i or (ji > 0) != (jk > 0):
                continue
            big, small = max(abs(ji), abs(jk)), min(abs(ji), abs(jk))
            M[i][k] = 4 * big * small * small
    return M


@dataclass
class TwistData:
    A: np.ndarray
    V: np.ndarray
    det_A: float
    det_A_minus_V: float
    int_cert: int
    # det(4 pi A - 4 pi v w^T) = pi_poly[0] + pi_poly[1] * pi
    pi_poly: tuple
    # det(4 pi (A - v w^T / pi)), for the m1 = (1/pi) w.zeta normalisation
    int_cert_m1: int
    scaled: list = field(repr=False, default=None)

    def to_json(self):
        return {
            "A": self.A.tolist(),
            "V": self.V.tolist(),
            "det_A": self.det_A,
            "det_A_minus_V": self.det_A_minus_V,
            "int_cert": self.int_cert,
            "pi_poly": list(self.pi_poly),
            "int_cert_m1": self.int_cert_m1,
            "scaled_matrix": self.scaled,
        }


def twist_matrix(S):
    if not isinstance(S, TangentialSet):
        S = TangentialSet.from_iterable(S)
    M = scaled_twist_matrix(S)
    A = np.array(M, dtype=float) / (4 * np.pi)
    v = [int(x) for x in S.v]
    w = [int(x) for x in S.w]
    V = np.outer(np.array(v, dtype=float), np.array(w, dtype=float))
    int_cert = integer_det(M)
    # det(M - t v w^T) is affine in t
    det_shift = integer_det([[M[i][k] - v[i] * w[k] for k in range(len(v))] for i in range(len(v))])
    pi_poly = (int_cert, 4 * (det_shift - int_cert))
    int_cert_m1 = integer_det(
        [[M[i][k] - 4 * v[i] * w[k] for k in range(len(v))] for i in range(len(v))]
    )
    nu = len(v)
    det_A_minus_V = (pi_poly[0] + pi_poly[1] * np.pi) / (4 * np.pi) ** nu
    return TwistData(
        A=A,
        V=V,
        det_A=int_cert / (4 * np.pi) ** nu,
        det_A_minus_V=det_A_minus_V,
        int_cert=int_cert,
        pi_poly=pi_poly,
        int_cert_m1=int_cert_m1,
        scaled=M,
    )


def constant_site_matrix(signs):
    """
    2 pi lam^{-3} A evaluated at |j_i| = lam: identity plus 2 on same-sign off-diagonal pairs.
    """
    nu = len(signs)
    return [
        [1 if i == k else (2 if signs[i] == signs[k] else 0) for k in range(nu)] for i in range(nu)
    ]


def parity_certificate(signs):
    """Determinant of constant_site_matrix; it is congruent to the identity mod 2, hence odd."""
    return integer_det(constant_site_matrix(signs))


def twist_check(S):
    """
    Twist certificates. Both determinants are exact: det(4 pi A) is an integer and
    det(4 pi (A - V)) = c0 + c1 pi vanishes iff c0 = c1 = 0 since pi is transcendental.
    """
    data = twist_matrix(S)
    c0, c1 = data.pi_poly
    nu = data.A.shape[0]
    scaled = abs(c0 + c1 * np.pi) / max(1.0, abs(c0) + abs(c1) * np.pi)
    report = {
        "sites": list(S.sites) if isinstance(S, TangentialSet) else list(S),
        "int_cert": data.int_cert,
        "det_A": data.det_A,
        "det_A_nonzero": data.int_cert != 0,
        "pi_poly": [c0, c1],
        "det_A_minus_V": data.det_A_minus_V,
        "det_A_minus_V_scaled": float(scaled),
        "det_A_minus_V_nonzero": (c0, c1) != (0, 0),
        "int_cert_m1": data.int_cert_m1,
        "det_A_minus_V_m1_nonzero": data.int_cert_m1 != 0,
        "nu": nu,
    }
    report["pass"] = report["det_A_nonzero"] and report["det_A_minus_V_nonzero"]
    return report


def _as_sites(S):
    return S if isinstance(S, TangentialSet) else TangentialSet.from_iterable(S)


def freq_amp(S, zeta, eps, twist=None):
    """omega = omega_bar + eps^2 A zeta (leading order)"""
    S = _as_sites(S)
    twist = twist or twist_matrix(S)
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape[-1] != S.nu:
        raise ValueError(f"zeta has {zeta.shape[-1]} entries for {S.nu} sites")
    return S.omega_bar + eps**2 * zeta @ twist.A.T


def amp_freq(S, omega, eps, twist=None):
    """zeta = eps^-2 A^-1 (omega - omega_bar)"""
    S = _as_sites(S)
    twist = twist or twist_matrix(S)
    if twist.int_cert == 0:
        raise NumericalError(f"twist matrix of sites {S} is singular (det 4 pi A = 0)")
    if eps == 0:
        raise ValueError("amp_freq needs eps > 0")
    rhs = (np.asarray(omega, dtype=float) - S.omega_bar) / eps**2
    return np.linalg.solve(twist.A, rhs.T).T


def m1_constant(S, zeta):
    """m1 = (1/pi) sum_n n|n| zeta_n"""
    S = _as_sites(S)
    return float(np.dot(S.w, zeta) / np.pi)


def m1_velocity_form(S, zeta):
    """m1 = w . zeta, the alternative normalisation without 1/pi"""
    S = _as_sites(S)
    return float(np.dot(S.w, zeta))


def c_correction(S, zeta, j):
    """c_j = (1/pi) sum_{k in S, |k| > |j|} k (|j| - |k|) zeta_k, zero for |j| >= max|S|"""
    S = _as_sites(S)
    if abs(j) >= S.max_abs:
        return 0.0
    total = 0.0
    for k, z in zip(S.sites, zeta):
        if abs(k) > abs(j):
            total += k * (abs(j) - abs(k)) * z
    return total / np.pi


def v_perp(S):
    S = _as_sites(S)
    if S.nu < 2:
        return None
    out = np.zeros(S.nu, dtype=np.int64)
    out[0], out[1] = S.sites[1], -S.sites[0]
    return out


@dataclass
class Corrections:
    m1: float
    m1_velocity_form: float
    c: dict
    d: dict
    alpha: Optional[dict]
    alpha_note: Optional[str] = None

    def kappa(self, j):
        return (self.m1 + self.c[j]) * j

    def to_json(self):
        return {
            "m1": self.m1,
            "m1_velocity_form": self.m1_velocity_form,
            "c": {str(j): v for j, v in self.c.items()},
            "d": {str(j): v for j, v in self.d.items()},
            "alpha": None
            if self.alpha is None
            else {str(j): v.tolist() for j, v in self.alpha.items()},
            "alpha_note": self.alpha_note,
        }


def corrections(S, zeta, eps, js=None, omega=None):
    """
    First-order corrections of the normal eigenvalues.

    :param js: normal indices (defaults to all 1 <= |j| <= 2 max|S| outside S)
    :param omega: frequency vector for the rotating phases, defaults to freq_amp(zeta, eps)
    """
    S = _as_sites(S)
    zeta = np.asarray(zeta, dtype=float)
    if js is None:
        bound = 2 * S.max_abs
        js = [j for j in range(-bound, bound + 1) if j != 0 and j not in S]
    m1 = m1_constant(S, zeta)
    c = {j: c_correction(S, zeta, j) for j in js}
    d = {j: np.sqrt(abs(j)) + eps**2 * (m1 + c[j]) * j for j in js}
    perp = v_perp(S)
    alpha, note = None, None
    if perp is None:
        note = "rotating phases need at least two sites"
        logging.info(f"no rotating phases for single site {S}")
    else:
        omega = freq_amp(S, zeta, eps) if omega is None else np.asarray(omega, dtype=float)
        denom = float(np.dot(omega, perp))
        if denom == 0:
            raise NumericalError(f"rotating phases of {S} degenerate: omega . v_perp = 0")
        alpha = {j: perp * (c[j] * j / denom) for j in js}
    return Corrections(
        m1=m1,
        m1_velocity_form=m1_velocity_form(S, zeta),
        c=c,
        d=d,
        alpha=alpha,
        alpha_note=note,
    )
