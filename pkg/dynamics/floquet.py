"""
Finite Floquet matrix of omega . d_phi - X_H linearised at an approximate solution, on the basis
e^{i l.phi} w_{n,sigma} with w_{n,+} = z_n, w_{n,-} = conj(z_n) and n outside the tangential sites.
"""
from collections import defaultdict
from dataclasses import dataclass, field

from absl import logging
import numpy as np
from scipy.linalg import eig
from scipy.stats import linregress

from divisors.small_divisors import l1_ball
from hamiltonian.polynomial import project
from spectrum.twist import corrections

MAX_DIMENSION = 5000


@dataclass
class FloquetResult:
    eigenvalues: np.ndarray
    labels: list
    predicted: np.ndarray
    interior: np.ndarray
    dimension: int
    blocks: int
    conjugate_defect: float
    config: dict = field(default_factory=dict)

    @property
    def residuals(self):
        return np.abs(self.eigenvalues - self.predicted)

    @property
    def max_residual(self):
        if not self.interior.any():
            return 0.0
        return float(np.max(self.residuals[self.interior]))

    def to_json(self):
        return {
            "config": self.config,
            "dimension": self.dimension,
            "blocks": self.blocks,
            "interior_states": int(self.interior.sum()),
            "max_residual": self.max_residual,
            "conjugate_defect": self.conjugate_defect,
        }

    def csv_rows(self):
        for value, label, target, inner in zip(
            self.eigenvalues, self.labels, self.predicted, self.interior
        ):
            ell, n, sigma = label
            yield [
                " ".join(str(x) for x in ell),
                n,
                sigma,
                repr(float(value.real)),
                repr(float(value.imag)),
                repr(float(target.imag)),
                int(inner),
            ]


def _normal_indices(S, J_max):
    return [n for n in range(-J_max, J_max + 1) if n != 0 and n not in S]


def _quadratic_entries(H, approx, ell_shift_index):
    """
    (row shift, n, sigma, m, tau, value) couplings from the monomials with exactly two normal
    modes, the tangential factors evaluated at amplitudes eps sqrt(zeta).
    """
    S = approx.S
    quadratic = project(H, "dz_eq", S, 2)
    amplitudes = dict(zip(S.sites, approx.amplitudes))
    entries = []
    for monomial, coeff in quadratic.items():
        amp = complex(coeff)
        shift = np.zeros(S.nu, dtype=np.int64)
        normal = []
        for j, s in monomial:
            if j in S:
                amp *= amplitudes[j]
                shift[ell_shift_index[j]] -= s
            else:
                normal.append((j, s))
        if amp == 0:
            continue
        for p in (0, 1):
            n, sigma = normal[p][0], -normal[p][1]
            m, tau = normal[1 - p]
            entries.append((tuple(shift), n, sigma, m, tau, 1j * sigma * amp))
    return entries


def floquet_spectrum(H, approx, L_max, J_max, max_dimension=MAX_DIMENSION):
    """
    Eigenvalues of the truncated linearised operator, block by block in the conserved momentum
    p = sigma n + v.l. Each eigenvalue is paired with its dominant basis state and compared with
    i(omega.l + sigma d_n), d_n = sqrt|n| + eps^2 (m1 + c_n) n; the comparison is trusted on
    interior states |l|_1 <= L_max - 1, |n| <= J_max - max|S|.
    """
    S = approx.S
    if J_max > H.cutoff:
        raise ValueError(f"J_max={J_max} exceeds the Hamiltonian cutoff {H.cutoff}")
    if J_max <= S.max_abs:
        raise ValueError(f"J_max={J_max} leaves no interior normal modes beyond {S.max_abs}")
    ns = _normal_indices(S, J_max)
    ells = l1_ball(S.nu, L_max)
    dimension = 2 * len(ns) * len(ells)
    if dimension > max_dimension:
        raise ValueError(
            f"Floquet matrix of dimension {dimension} exceeds the cap {max_dimension}; "
            f"reduce L_max (ball of {len(ells)} vectors) or J_max ({len(ns)} normal modes)"
        )
    basis = [(ell, n, sigma) for ell in ells for n in ns for sigma in (1, -1)]
    index = {state: i for i, state in enumerate(basis)}
    ell_set = set(ells)
    v = S.v
    omega = approx.omega

    values = defaultdict(complex)
    for ell, n, sigma in basis:
        i = index[(ell, n, sigma)]
        values[(i, i)] += 1j * float(np.dot(omega, ell))
    entries = _quadratic_entries(H, approx, {j: i for i, j in enumerate(S.sites)})
    for shift, n, sigma, m, tau, value in entries:
        if abs(n) > J_max or abs(m) > J_max:
            continue
        for ell in ells:
            target = tuple(a + b for a, b in zip(ell, shift))
            if target not in ell_set:
                continue
            values[(index[(target, n, sigma)], index[(ell, m, tau)])] += value

    sectors = defaultdict(list)
    for i, state in enumerate(basis):
        sectors[_momentum(state, v)].append(i)
    rows_by_block = defaultdict(list)
    for (r, c), value in values.items():
        rows_by_block[_momentum(basis[r], v)].append((r, c, value))

    d = corrections(S, approx.zeta, approx.eps, js=ns, omega=omega).d
    eigenvalues = np.zeros(dimension, dtype=complex)
    labels = [None] * dimension
    predicted = np.zeros(dimension, dtype=complex)
    interior = np.zeros(dimension, dtype=bool)
    spectra = {}
    cursor = 0
    for p, members in sorted(sectors.items()):
        local = {i: k for k, i in enumerate(members)}
        block = np.zeros((len(members), len(members)), dtype=complex)
        for r, c, value in rows_by_block[p]:
            block[local[r], local[c]] += value
        w, vecs = eig(block)
        spectra[p] = w
        dominant = np.argmax(np.abs(vecs), axis=0)
        for k, lam in enumerate(w):
            ell, n, sigma = basis[members[dominant[k]]]
            eigenvalues[cursor] = lam
            labels[cursor] = (ell, n, sigma)
            predicted[cursor] = 1j * (float(np.dot(omega, ell)) + sigma * d[n])
            interior[cursor] = (
                sum(abs(x) for x in ell) <= L_max - 1 and abs(n) <= J_max - S.max_abs
            )
            cursor += 1
    result = FloquetResult(
        eigenvalues=eigenvalues,
        labels=labels,
        predicted=predicted,
        interior=interior,
        dimension=dimension,
        blocks=len(sectors),
        conjugate_defect=_conjugate_defect(spectra),
        config={
            "sites": list(S.sites),
            "eps": approx.eps,
            "zeta": approx.zeta.tolist(),
            "L_max": L_max,
            "J_max": J_max,
        },
    )
    logging.info(
        f"Floquet eps={approx.eps}: dimension {dimension} in {len(sectors)} blocks, "
        f"max interior residual {result.max_residual:.3e}"
    )
    return result


def _momentum(state, v):
    ell, n, sigma = state
    return sigma * n + int(np.dot(v, ell))


def _conjugate_defect(spectra):
    """The real structure maps the spectrum of block p onto the conjugate spectrum of block -p."""
    worst = 0.0
    for p, w in spectra.items():
        partner = spectra.get(-p)
        if partner is None or not len(w):
            continue
        gaps = np.abs(np.conj(w)[:, None] - partner[None, :])
        worst = max(worst, float(np.max(np.min(gaps, axis=1))))
    return worst


@dataclass
class FloquetSweep:
    eps: list
    max_residual: list
    slope: float = None
    results: list = field(default_factory=list, repr=False)

    def to_json(self):
        return {"eps": self.eps, "max_residual": self.max_residual, "slope": self.slope}

    def csv_rows(self):
        for eps, value in zip(self.eps, self.max_residual):
            yield [repr(eps), repr(value), "" if self.slope is None else repr(self.slope)]


def floquet_sweep(H, make_approx, eps_list, L_max, J_max, max_dimension=MAX_DIMENSION):
    """
    max interior residual over eps and its log-log slope

    :param make_approx: eps -> ApproxSolution
    """
    results = [
        floquet_spectrum(H, make_approx(eps), L_max, J_max, max_dimension) for eps in eps_list
    ]
    values = [result.max_residual for result in results]
    sweep = FloquetSweep(list(eps_list), values, results=results)
    positive = [(e, r) for e, r in zip(eps_list, values) if e > 0 and r > 0]
    if len(positive) >= 2:
        fit = linregress(np.log([e for e, _ in positive]), np.log([r for _, r in positive]))
        sweep.slope = float(fit.slope)
        logging.info(f"Floquet residual slope {sweep.slope:.3f}")
    return sweep
