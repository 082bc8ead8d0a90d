"""
Approximate quasi-periodic traveling solutions at leading order and their residual in the
truncated Hamiltonian equation omega . d_phi U = X_H(U).
"""
from dataclasses import dataclass, field
from itertools import product

from absl import logging
import numpy as np
from scipy.stats import linregress

from dynamics.field import compile_field
from dynamics.state import SpectralState
from hamiltonian.zakharov import ORACLE_GRID, spectral_to_physical
from spectrum.sites import TangentialSet
from spectrum.twist import freq_amp

RESIDUAL_PHASES = 8


@dataclass
class ApproxSolution:
    """
    U(phi) with u_j = eps sqrt(zeta_j) exp(-i phi_j) on the tangential sites; along the flow
    phi = omega t.
    """

    S: TangentialSet
    zeta: np.ndarray
    eps: float
    omega: np.ndarray = None
    twist: object = field(default=None, repr=False)

    def __post_init__(self):
        if not isinstance(self.S, TangentialSet):
            self.S = TangentialSet.from_iterable(self.S)
        self.zeta = np.asarray(self.zeta, dtype=float)
        if self.zeta.shape != (self.S.nu,):
            raise ValueError(f"zeta has shape {self.zeta.shape} for {self.S.nu} sites")
        if np.any(self.zeta < 0):
            raise ValueError("actions zeta must be nonnegative")
        if self.eps < 0:
            raise ValueError(f"eps must be nonnegative, got {self.eps}")
        if self.omega is None:
            self.omega = freq_amp(self.S, self.zeta, self.eps, self.twist)
        self.omega = np.asarray(self.omega, dtype=float)

    @property
    def amplitudes(self):
        return self.eps * np.sqrt(self.zeta)

    def modes(self, phi):
        """{j: u_j(phi)} on the tangential sites"""
        phi = np.asarray(phi, dtype=float)
        return {j: a * np.exp(-1j * p) for j, a, p in zip(self.S.sites, self.amplitudes, phi)}

    def state(self, phi, cutoff):
        if cutoff < self.S.max_abs:
            raise ValueError(f"cutoff {cutoff} does not contain the sites {self.S}")
        return SpectralState.from_modes(cutoff, self.modes(phi))

    def at_time(self, t, cutoff, phase=None):
        phase = np.zeros(self.S.nu) if phase is None else np.asarray(phase, dtype=float)
        return self.state(phase + self.omega * t, cutoff)

    def field(self, phi, x):
        """u(phi, x) = (2 pi)^(-1/2) sum_j u_j(phi) e^{ijx}, phi of shape (..., nu)"""
        phi = np.asarray(phi, dtype=float)
        x = np.asarray(x, dtype=float)
        total = 0j
        for i, (j, a) in enumerate(zip(self.S.sites, self.amplitudes)):
            total = total + a * np.exp(1j * (j * x - phi[..., i]))
        return total / np.sqrt(2 * np.pi)

    def traveling_defect(self, phis, xs, shifts):
        """max |u(phi, x + s) - u(phi - v s, x)| over the given grids"""
        v = self.S.v
        worst = 0.0
        for phi, x, s in product(phis, xs, shifts):
            phi = np.asarray(phi, dtype=float)
            gap = abs(self.field(phi, x + s) - self.field(phi - v * s, x))
            worst = max(worst, float(gap))
        return worst

    def physical(self, phi, n_grid=ORACLE_GRID):
        """(x, eta, psi) of the profile at phase phi"""
        return spectral_to_physical(self.modes(phi), n_grid)

    def to_json(self):
        return {
            "sites": list(self.S.sites),
            "zeta": self.zeta.tolist(),
            "eps": self.eps,
            "omega": self.omega.tolist(),
        }


def phase_grid(nu, points=RESIDUAL_PHASES):
    axis = 2 * np.pi * np.arange(points) / points
    return np.array(list(product(axis, repeat=nu)))


def residual(H, approx, cutoff=None, points=RESIDUAL_PHASES):
    """
    sup over a phase grid of the l2 norm of omega . d_phi U - X_H(U).

    omega . d_phi acts on the tangential amplitudes as multiplication by -i omega_j.
    """
    cutoff = cutoff or max(H.cutoff, approx.S.max_abs)
    field = compile_field(H, cutoff)
    worst = 0.0
    indices = [j + cutoff for j in approx.S.sites]
    for phi in phase_grid(approx.S.nu, points):
        state = approx.state(phi, cutoff)
        drift = np.zeros_like(state.z)
        drift[indices] = -1j * approx.omega * state.z[indices]
        worst = max(worst, float(np.linalg.norm(drift - field(0.0, state.z))))
    return worst


@dataclass
class ResidualSweep:
    eps: list
    values: list
    slope: float = None
    dyadic_slopes: list = field(default_factory=list)

    @property
    def monotone(self):
        pairs = sorted(zip(self.eps, self.values))
        return all(a[1] <= b[1] for a, b in zip(pairs, pairs[1:]))

    def to_json(self):
        return {
            "eps": self.eps,
            "residual": self.values,
            "slope": self.slope,
            "dyadic_slopes": self.dyadic_slopes,
            "monotone": self.monotone,
        }

    def csv_rows(self):
        for eps, value in zip(self.eps, self.values):
            yield [repr(eps), repr(value), "" if self.slope is None else repr(self.slope)]


def residual_sweep(H, S, zeta, eps_list, cutoff=None, points=RESIDUAL_PHASES, omega_mode="twist"):
    """
    Residual over a list of eps and its log-log slope. The exponent is measured and reported.

    :param omega_mode: "twist" uses omega = freq_amp(zeta, eps), "linear" keeps omega_bar
    """
    if omega_mode not in ("twist", "linear"):
        raise KeyError(f"unknown omega mode {omega_mode}")
    values = []
    for eps in eps_list:
        omega = None if omega_mode == "twist" else TangentialSet.from_iterable(S).omega_bar
        approx = ApproxSolution(S, zeta, eps, omega=omega)
        values.append(residual(H, approx, cutoff, points))
        logging.info(f"residual eps={eps}: {values[-1]:.6e}")
    sweep = ResidualSweep(list(eps_list), values)
    positive = [(e, r) for e, r in zip(eps_list, values) if e > 0 and r > 0]
    if len(positive) >= 2:
        fit = linregress(np.log([e for e, _ in positive]), np.log([r for _, r in positive]))
        sweep.slope = float(fit.slope)
    ordered = sorted(positive)
    for (e1, r1), (e2, r2) in zip(ordered, ordered[1:]):
        sweep.dyadic_slopes.append(float(np.log(r2 / r1) / np.log(e2 / e1)))
    return sweep
