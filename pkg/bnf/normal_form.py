"""
Birkhoff normal forms of the Zakharov Hamiltonian up to degree 4.
"""
from dataclasses import dataclass, field

from absl import logging
import numpy as np

from hamiltonian.polynomial import (
    BracketAudit,
    HamPolynomial,
    Monomial,
    closure_safe,
    diagonal_quadratic,
    in_kernel,
    poisson_bracket,
    project,
)
from hamiltonian.zakharov import PRECISIONS, build_zakharov_cached
from resonance.classify import benjamin_feir, is_generic
from spectrum.sites import TangentialSet
from spectrum.twist import c_correction, m1_constant, m1_velocity_form
from util import GenericityError

TOLERANCE = {"double": 1e-9, "extended": 1e-15}
MAX_DEGREE = 4
# the (lambda, b) = (1, 1) quadruple (-1, 4, 9, 4) is the smallest Benjamin-Feir resonance
SMALLEST_BF_CUTOFF = max(abs(j) for j in benjamin_feir([1], [1])[0].indices())


def _frequency(monomial, real):
    return sum(sigma * np.sqrt(real(abs(j))) for j, sigma in monomial)


def solve_homological(B):
    """
    Solve {H^(2), F} = Pi_Rg B: F_m = i B_m / R(m) on non-kernel monomials, with R(m) the signed
    sum of sqrt(|j|). Kernel membership is decided exactly.
    """
    if not B.momentum_conserving:
        raise ValueError("homological equation needs a momentum-conserving right-hand side")
    real = np.longdouble if B.dtype is np.clongdouble else float
    unit = B.dtype(1j)
    coeffs = {}
    for monomial, coeff in B.items():
        if in_kernel(monomial):
            continue
        coeffs[monomial] = unit * coeff / _frequency(monomial, real)
    return HamPolynomial._trusted(coeffs, True, B.real_valued, dtype=B.dtype)


def lie_transform(H, F, max_degree=MAX_DEGREE, audit=None):
    """H o Phi_F = H + {F, H} + 1/2 {F, {F, H}}, truncated at max_degree."""
    first = poisson_bracket(F, H, max_degree=max_degree, audit=audit)
    second = poisson_bracket(F, first, max_degree=max_degree, audit=audit)
    return H + first + second.scale(0.5)


def expected_action_coefficient(monomial):
    """
    Coefficient of an action monomial in the quartic full normal form:
    |k|^3/(4 pi) on |z_k|^4, -|k|^3/pi on |z_k|^2|z_-k|^2 and j|j|n/pi on |z_j|^2|z_n|^2
    for |j| < |n|.
    """
    if len(monomial) != 4 or not monomial.is_trivial():
        return None
    indices = sorted({j for j, _ in monomial}, key=lambda j: (abs(j), j))
    a, b = indices[0], indices[-1]
    if a == b:
        return abs(a) ** 3 / (4 * np.pi)
    if a == -b:
        return -abs(a) ** 3 / np.pi
    return a * abs(a) * b / np.pi


def restricted_quartic_formula(S, opposite_sign_coupling=True):
    """
    Expected degree-(4,0) table on the tangential sites: {Monomial: coefficient}.

    With opposite_sign_coupling=False this is the same-sign-only form whose opposite-sign entries
    are zero; the full quartic normal form couples opposite-sign pairs with -|big||small|^2/pi.
    """
    table = {}
    for k in S.sites:
        table[_action(k, k)] = abs(k) ** 3 / (4 * np.pi)
    for i, a in enumerate(S.sites):
        for b in S.sites[i + 1 :]:
            small, big = sorted((a, b), key=abs)
            same = (a > 0) == (b > 0)
            if same:
                table[_action(a, b)] = abs(big) * small**2 / np.pi
            else:
                table[_action(a, b)] = (
                    small * abs(small) * big / np.pi if opposite_sign_coupling else 0.0
                )
    return table


def _action(a, b):
    return Monomial(((a, 1), (a, -1), (b, 1), (b, -1)))


def _relative(value, reference):
    scale = max(abs(value), abs(reference))
    return abs(value - reference) / scale if scale > 0 else 0.0


@dataclass
class BnfReport:
    mode: str
    input_hash: str
    config: dict
    tolerance: float
    F3: HamPolynomial = field(repr=False)
    F4: HamPolynomial = field(repr=False)
    normalized: dict = field(repr=False)
    class_max: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    offending: list = field(default_factory=list)
    audit: dict = field(default_factory=dict)
    degenerate: bool = False
    extra: dict = field(default_factory=dict, repr=False)

    @property
    def passed(self):
        return not self.offending and all(
            v for k, v in self.checks.items() if k.endswith("_ok")
        )

    def to_json(self):
        return {
            "mode": self.mode,
            "input_hash": self.input_hash,
            "config": self.config,
            "tolerance": self.tolerance,
            "F3_hash": self.F3.content_hash(),
            "F4_hash": self.F4.content_hash(),
            "normalized": {str(d): p.to_json() for d, p in self.normalized.items()},
            "class_max": self.class_max,
            "checks": self.checks,
            "offending": self.offending,
            "audit": self.audit,
            "degenerate": self.degenerate,
            "passed": self.passed,
        }


def _zakharov_parts(cutoff, precision):
    H = build_zakharov_cached(cutoff, 4, precision)
    return H, H.homogeneous(2), H.homogeneous(3), H.homogeneous(4)


def _offending_row(kind, monomial, value, expected):
    return {
        "kind": kind,
        "modes": monomial.to_json(),
        "re": float(np.real(value)),
        "im": float(np.imag(value)),
        "expected": None if expected is None else float(expected),
    }


def full_bnf_degree4(cutoff, precision="double"):
    """
    Full Birkhoff normal form at degree 4:
    F3 solves the cubic homological equation, H_FB = Pi_Ker(H^(4) + 1/2 {F3, H^(3)}),
    F4 removes the range part.
    """
    if precision not in PRECISIONS:
        raise KeyError(f"unknown precision {precision}")
    tol = TOLERANCE[precision]
    audit = BracketAudit()
    H, H2, H3, H4 = _zakharov_parts(cutoff, precision)
    cubic_kernel = project(H3, "ker_H2")
    if len(cubic_kernel):
        logging.warning(f"{len(cubic_kernel)} cubic monomials in the kernel of ad H2")
    F3 = solve_homological(H3)
    hat4 = H4 + poisson_bracket(F3, H3, max_degree=MAX_DEGREE, audit=audit).scale(0.5)
    H_FB = project(hat4, "ker_H2")
    F4 = solve_homological(project(hat4, "rg_H2"))

    transformed = lie_transform(H, F3, audit=audit)
    cubic_left = transformed.homogeneous(3).max_abs()
    quartic_gap = (transformed.homogeneous(4) - hat4).filter(
        lambda m: closure_safe(m, cutoff)
    ).max_abs()

    safe = H_FB.filter(lambda m: closure_safe(m, cutoff))
    trivial = project(safe, "trivial")
    resonant = safe.filter(lambda m: not m.is_trivial())
    action_max = trivial.max_abs()
    offending = []
    worst_action = 0.0
    for monomial, value in trivial.items():
        expected = expected_action_coefficient(monomial)
        err = abs(value - expected) / max(abs(expected), 1e-300)
        worst_action = max(worst_action, err)
        if err > tol:
            offending.append(_offending_row("action", monomial, value, expected))
    bf_ratio = resonant.max_abs() / action_max if action_max else 0.0
    for monomial, value in resonant.items():
        if abs(value) > tol * action_max:
            offending.append(_offending_row("benjamin_feir", monomial, value, 0.0))
    degenerate = cutoff < SMALLEST_BF_CUTOFF
    if degenerate:
        logging.warning(f"cutoff {cutoff} holds no Benjamin-Feir quadruple")
    logging.info(
        f"full BNF K={cutoff}: {len(trivial)} action terms, {len(resonant)} BF terms, "
        f"BF/action ratio {bf_ratio:.3e}"
    )
    return BnfReport(
        mode="full",
        input_hash=H.content_hash(),
        config={"cutoff": cutoff, "precision": precision},
        tolerance=tol,
        F3=F3,
        F4=F4,
        normalized={3: HamPolynomial(), 4: H_FB},
        class_max={
            "action": action_max,
            "benjamin_feir": resonant.max_abs(),
            "benjamin_feir_relative": bf_ratio,
            "benjamin_feir_terms": len(resonant),
        },
        checks={
            "cubic_after_transform": cubic_left,
            "cubic_after_transform_ok": cubic_left <= 1e-12 * max(H3.max_abs(), 1.0),
            "quartic_lie_series_gap": quartic_gap,
            "quartic_lie_series_ok": quartic_gap <= 1e-12 * max(hat4.max_abs(), 1.0),
            "null_condition_ok": bf_ratio <= tol,
            "action_terms_max_relative_error": worst_action,
            "action_terms_ok": worst_action <= tol,
        },
        offending=offending,
        audit=audit.as_dict(),
        degenerate=degenerate,
        extra={"H": H, "hat4": hat4},
    )


def _require_generic(S, n_max):
    generic, certificate = is_generic(S, n_max)
    if not generic:
        raise GenericityError(f"tangential sites {S} are not generic", certificate=certificate)


def weak_bnf(S, cutoff=None, steps=2, precision="double", n_max=6, opposite_sign_coupling=True):
    """
    Weak Birkhoff normal form: normalises only the monomials with at most one mode outside S.

    Args:
        S: TangentialSet
        cutoff: Fourier cutoff, defaults to 3 max|S|
        steps: 1 (cubic step only) or 2 (cubic and quartic steps)
        n_max: genericity order checked before normalising

    Returns:
        BnfReport whose extra["transformed"] is
        H^(2) + Pi^{dz>=2} H^(3) + Pi_Ker Pi^{dz<=1} H1^(4) + Pi^{dz>=2} H1^(4)
    """
    if not isinstance(S, TangentialSet):
        S = TangentialSet.from_iterable(S)
    if steps not in (1, 2):
        raise NotImplementedError(f"weak BNF implements steps 1 and 2, got {steps}")
    _require_generic(S, n_max)
    cutoff = cutoff or 3 * S.max_abs
    tol = TOLERANCE[precision]
    audit = BracketAudit()
    H, H2, H3, H4 = _zakharov_parts(cutoff, precision)
    sites = S.site_set
    H3_low = project(H3, "dz_le", S, 1)
    H3_high = H3.filter(lambda m: m.dz(sites) >= 2)
    F3 = solve_homological(H3_low)
    hat4 = (
        H4
        + poisson_bracket(F3, H3_low, max_degree=MAX_DEGREE, audit=audit).scale(0.5)
        + poisson_bracket(F3, H3_high, max_degree=MAX_DEGREE, audit=audit)
    )
    hat4_low = project(hat4, "dz_le", S, 1)
    hat4_high = hat4.filter(lambda m: m.dz(sites) >= 2)
    if steps == 2:
        F4 = solve_homological(project(hat4_low, "rg_H2"))
        H_WB = project(hat4_low, "ker_H2")
    else:
        F4 = HamPolynomial()
        H_WB = hat4_low
    transformed = H2 + H3_high + H_WB + hat4_high

    term40 = project(H_WB, "dz_eq", S, 0)
    full_table = restricted_quartic_formula(S, opposite_sign_coupling=True)
    literal_table = restricted_quartic_formula(S, opposite_sign_coupling=False)
    expected = full_table if opposite_sign_coupling else literal_table
    scale = max(abs(v) for v in full_table.values())
    offending = []
    worst = 0.0
    worst_literal = 0.0
    for monomial in set(term40) | set(expected):
        value = term40.coeff(monomial)
        target = expected.get(monomial, 0.0)
        err = abs(value - target) / scale
        worst_literal = max(worst_literal, abs(value - literal_table.get(monomial, 0.0)) / scale)
        worst = max(worst, err)
        if err > tol:
            offending.append(_offending_row("quartic_tangential", monomial, value, target))
    nontrivial_left = H_WB.filter(lambda m: not m.is_trivial()).max_abs() if steps == 2 else None
    logging.info(
        f"weak BNF S={S} K={cutoff}: (4,0) max relative error {worst:.3e}, "
        f"same-sign-only table deviation {worst_literal:.3e}"
    )
    return BnfReport(
        mode="weak",
        input_hash=H.content_hash(),
        config={
            "cutoff": cutoff,
            "sites": list(S.sites),
            "steps": steps,
            "precision": precision,
            "opposite_sign_coupling": opposite_sign_coupling,
        },
        tolerance=tol,
        F3=F3,
        F4=F4,
        normalized={4: H_WB, "4,0": term40},
        class_max={
            "tangential_quartic": term40.max_abs(),
            "nontrivial_low_outside": nontrivial_left,
        },
        checks={
            "quartic_tangential_max_relative_error": worst,
            "quartic_tangential_ok": worst <= tol,
            "same_sign_only_table_deviation": worst_literal,
        },
        offending=offending,
        audit=audit.as_dict(),
        extra={"transformed": transformed, "hat4": hat4, "H": H},
    )


def approx_constant(cutoff, report=None):
    """
    Approximate constant of motion K = K^(2) + K^(3) + K^(4):
    K^(2) = sum j^2 |u_j|^2, K^(3) = {K^(2), F3}, K^(4) = {K^(2), F4} + 1/2 {{K^(2), F3}, F3}.

    Returns:
        (K, residual report) where the report holds the closure-safe maxima of {H, K} per degree
    """
    report = report or full_bnf_degree4(cutoff)
    H = report.extra["H"]
    F3, F4 = report.F3, report.F4
    K2 = diagonal_quadratic(cutoff, lambda j: j * j, dtype=H.dtype)
    K3 = poisson_bracket(K2, F3)
    K4 = poisson_bracket(K2, F4) + poisson_bracket(K3, F3, max_degree=MAX_DEGREE).scale(0.5)
    K = K2 + K3 + K4
    audit = BracketAudit()
    parts = [
        poisson_bracket(H.homogeneous(a), K.homogeneous(b), max_degree=MAX_DEGREE, audit=audit)
        for a in (2, 3, 4)
        for b in (2, 3, 4)
        if a + b - 2 <= MAX_DEGREE
    ]
    total = parts[0]
    for part in parts[1:]:
        total = total + part
    residual = {}
    for degree in (2, 3, 4):
        safe = total.homogeneous(degree).filter(lambda m: closure_safe(m, cutoff))
        scale = max((p.homogeneous(degree).max_abs() for p in parts), default=0.0)
        residual[degree] = {
            "max_abs": safe.max_abs(),
            "scale": scale,
            "relative": safe.max_abs() / scale if scale else 0.0,
        }
    tol = report.tolerance
    out = {
        "cutoff": cutoff,
        "residual": residual,
        "tolerance": tol,
        "ok": all(r["relative"] <= tol for r in residual.values()),
        "audit": audit.as_dict(),
    }
    logging.info(f"approximate constant K={cutoff}: {residual}")
    return K, out


def linear_corrections(S, zeta, cutoff=None, report=None, n_max=6):
    """
    Diagonal quadratic form on the normal modes from Pi_triv Pi^{dz=2} H_FB at actions zeta,
    cross-checked against (m1 + c_j) j.

    Returns:
        dict with the kappa table, the matched m1 normalisation and the worst relative error
    """
    if not isinstance(S, TangentialSet):
        S = TangentialSet.from_iterable(S)
    _require_generic(S, n_max)
    zeta = np.asarray(zeta, dtype=float)
    cutoff = cutoff or 3 * S.max_abs
    report = report or full_bnf_degree4(cutoff)
    H_FB = report.normalized[4]
    sites = S.site_set
    quadratic = project(project(H_FB, "dz_eq", S, 2), "trivial")
    valid = cutoff - S.max_abs
    kappa = {j: 0.0 for j in range(-valid, valid + 1) if j != 0 and j not in sites}
    for monomial, coeff in quadratic.items():
        tangential = [j for j, _ in monomial if j in sites]
        normal = [j for j, _ in monomial if j not in sites]
        if len(tangential) != 2 or len(set(normal)) != 1:
            continue
        j = normal[0]
        if j in kappa:
            kappa[j] += float(np.real(coeff)) * zeta[S.index(tangential[0])]
    m1 = m1_constant(S, zeta)
    m1_alt = m1_velocity_form(S, zeta)
    table = {}
    worst, worst_alt = 0.0, 0.0
    for j, value in sorted(kappa.items()):
        c_j = c_correction(S, zeta, j)
        predicted = (m1 + c_j) * j
        predicted_alt = (m1_alt + c_j) * j
        err = _relative(value, predicted)
        err_alt = _relative(value, predicted_alt)
        worst = max(worst, err)
        worst_alt = max(worst_alt, err_alt)
        table[j] = {"kappa_bnf": value, "kappa_formula": predicted, "c_j": c_j}
    tol = report.tolerance
    if worst <= tol:
        matched = "signed_square_over_pi"
    else:
        matched = "w_dot_zeta" if worst_alt <= tol else "none"
    logging.info(f"linear corrections S={S}: max rel err {worst:.3e}, m1 normalisation {matched}")
    return {
        "table": table,
        "m1": m1,
        "m1_velocity_form": m1_alt,
        "max_relative_error": worst,
        "max_relative_error_velocity_form": worst_alt,
        "m1_normalization": matched,
        "ok": worst <= tol,
        "valid_range": valid,
    }
