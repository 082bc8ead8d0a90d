"""
Time integration of spectral states and frequency measurement along trajectories.
"""
from dataclasses import dataclass
from typing import Optional

from absl import logging
import numpy as np
from scipy.integrate import solve_ivp
from scipy.stats import linregress

from dynamics.state import SpectralState, Trajectory
from util import NumericalError

TOL_RANGE = (1e-12, 1e-6)
METHODS = ("rk45", "midpoint")
# fixed-point iterations of one implicit midpoint step
MIDPOINT_ITERATIONS = 50
JUMP_GUARD = np.pi / 2


def _check_tol(tol):
    lo, hi = TOL_RANGE
    if not lo <= tol <= hi:
        raise ValueError(f"tol must lie in [{lo}, {hi}], got {tol}")


def integrate(rhs, s0, T, tol, method="rk45", samples=201, dt=None):
    """
    Integrate z_dot = rhs(t, z) from the state s0 over [s0.t, s0.t + T].

    Args:
        rhs: callable (t, z) -> dz on the dense layout of s0
        tol: per-step error tolerance in [1e-12, 1e-6], used as rtol and atol
        method: "rk45" (adaptive Dormand-Prince 5(4)) or "midpoint" (implicit midpoint with step dt)
        samples: number of equally spaced output times

    Returns:
        Trajectory with the samples
    """
    _check_tol(tol)
    if method not in METHODS:
        raise KeyError(f"unknown integrator {method}, expected one of {METHODS}")
    if T <= 0:
        raise ValueError(f"integration time must be positive, got {T}")
    t_eval = np.linspace(s0.t, s0.t + T, samples)
    if method == "midpoint":
        return implicit_midpoint(rhs, s0, t_eval, dt or T / (samples - 1) / 10, tol)
    sol = solve_ivp(
        rhs, (t_eval[0], t_eval[-1]), s0.z, method="RK45", t_eval=t_eval, rtol=tol, atol=tol
    )
    if sol.status == -1:
        raise NumericalError(f"RK45 failed at t={sol.t[-1] if len(sol.t) else s0.t}: {sol.message}")
    logging.info(f"integrated T={T} with RK45, {sol.nfev} field evaluations")
    return Trajectory(
        s0.cutoff,
        sol.t,
        sol.y.T.copy(),
        info={"method": "rk45", "tol": tol, "nfev": int(sol.nfev)},
    )


def implicit_midpoint(rhs, s0, t_eval, dt, tol):
    """
    Implicit midpoint rule z+ = z + dt f((z + z+)/2), solved by fixed-point iteration. The rule
    preserves every quadratic first integral of the flow up to the iteration tolerance.
    """
    if dt <= 0:
        raise ValueError(f"time step must be positive, got {dt}")
    z = s0.z.copy()
    t = float(t_eval[0])
    out = [z.copy()]
    iterations = 0
    for target in t_eval[1:]:
        steps = max(1, int(np.ceil((target - t) / dt - 1e-12)))
        h = (target - t) / steps
        for _ in range(steps):
            mid = z + 0.5 * h * rhs(t, z)
            converged = False
            for _ in range(MIDPOINT_ITERATIONS):
                update = z + 0.5 * h * rhs(t + 0.5 * h, mid)
                if not np.all(np.isfinite(update)):
                    break
                change = np.max(np.abs(update - mid))
                mid = update
                iterations += 1
                if change <= tol * max(1.0, np.max(np.abs(mid))):
                    converged = True
                    break
            if not converged:
                raise NumericalError(
                    f"implicit midpoint iteration did not converge at t={t} with step {h}"
                )
            z = 2 * mid - z
            t += h
        out.append(z.copy())
    logging.info(f"integrated with implicit midpoint, {iterations} fixed-point iterations")
    return Trajectory(
        s0.cutoff,
        np.asarray(t_eval, dtype=float),
        np.asarray(out),
        info={"method": "midpoint", "tol": tol, "dt": dt, "iterations": iterations},
    )


@dataclass
class FrequencyEstimate:
    mode: int
    frequency: Optional[float]
    stderr: Optional[float]
    skipped: bool = False
    notice: Optional[str] = None
    guard_violations: int = 0

    def to_json(self):
        return {
            "mode": self.mode,
            "frequency": self.frequency,
            "stderr": self.stderr,
            "skipped": self.skipped,
            "notice": self.notice,
            "guard_violations": self.guard_violations,
        }


def unwrap_phase(z):
    """
    Nearest-branch continuation of arg z; also returns how many steps jumped by more than the
    guard, where the sampling is too coarse for the branch choice to be trusted.
    """
    steps = np.angle(z[1:] / z[:-1])
    violations = int(np.sum(np.abs(steps) > JUMP_GUARD))
    return np.angle(z[0]) + np.concatenate([[0.0], np.cumsum(steps)]), violations


def measured_frequencies(trajectory, modes, min_amplitude=1e-12):
    """
    Rotation frequency of each mode from a linear fit of the unwrapped phase, with the sign
    convention z_j ~ exp(-i omega_j t).

    Returns:
        {j: FrequencyEstimate}; modes whose amplitude comes near zero are skipped with a notice
    """
    out = {}
    for j in modes:
        z = trajectory.mode(j)
        smallest = float(np.min(np.abs(z)))
        if smallest <= min_amplitude:
            notice = f"mode {j} amplitude falls to {smallest:.3e}, frequency not measured"
            logging.warning(notice)
            out[j] = FrequencyEstimate(j, None, None, skipped=True, notice=notice)
            continue
        phase, violations = unwrap_phase(z)
        if violations:
            logging.warning(f"mode {j}: {violations} phase steps exceed the jump guard")
        fit = linregress(trajectory.t, phase)
        out[j] = FrequencyEstimate(
            j, -float(fit.slope), float(fit.stderr), guard_violations=violations
        )
    return out


def linear_flow(s0, t):
    """Exact flow of H^(2): z_j(t) = exp(-i sqrt|j| t) z_j(0)."""
    js = np.arange(-s0.cutoff, s0.cutoff + 1)
    return SpectralState(s0.cutoff, np.exp(-1j * np.sqrt(np.abs(js)) * t) * s0.z, s0.t + t)
