"""
Zakharov Hamiltonian of deep-water gravity waves in complex Fourier coordinates.

Normalisation: f(x) = (2 pi)^{-1/2} sum_j f_j e^{ijx} on the torus of length 2 pi. The complex
variables satisfy

    eta_j = |j|^{1/4} (u_j + conj(u_{-j})) / sqrt(2)
    psi_j = -i |j|^{-1/4} (u_j - conj(u_{-j})) / sqrt(2)

so that H^(2) = sum_j sqrt(|j|) |u_j|^2. The zero mode is excluded throughout.
"""
from collections import defaultdict
from functools import lru_cache
from itertools import product

from absl import logging
import numpy as np

from hamiltonian.polynomial import MINUS, PLUS, HamPolynomial, diagonal_quadratic
from util import NORMALIZATION_VERSION, cache_dir, content_hash, read_json, write_json

PRECISIONS = {"double": (float, complex), "extended": (np.longdouble, np.clongdouble)}
ORACLE_GRID = 512


def _numeric(precision):
    try:
        return PRECISIONS[precision]
    except KeyError:
        raise KeyError(f"unknown precision {precision}, expected one of {sorted(PRECISIONS)}")


def _check_cutoff(cutoff):
    if int(cutoff) != cutoff or cutoff < 1:
        raise ValueError(f"cutoff must be a positive integer, got {cutoff}")
    return int(cutoff)


@lru_cache(maxsize=None)
def _slot_terms(slot, w, precision):
    """Expansion of eta_w or psi_w into (mode, factor) pairs."""
    real, cplx = _numeric(precision)
    root2 = np.sqrt(real(2))
    if slot == "eta":
        f = np.power(real(abs(w)), real(0.25)) / root2
        return (((w, PLUS), cplx(f)), ((-w, MINUS), cplx(f)))
    f = np.power(real(abs(w)), real(-0.25)) / root2
    return (((w, PLUS), cplx(-1j) * f), ((-w, MINUS), cplx(1j) * f))


def _cubic_kernel(ws):
    _, k, l = ws
    return 0.5 * (-k * l - abs(k) * abs(l))


def _quartic_kernel(ws):
    j1, j2, k, l = ws
    return 0.25 * abs(k) * abs(l) * (abs(k + j1) + abs(k + j2) - abs(k) - abs(l))


def _expand_form(slots, kernel, prefactor, cutoff, precision):
    """
    Fourier expansion of a translation-invariant multilinear form in (eta, psi), substituted into
    complex variables. The last wavenumber is fixed by the zero-sum constraint.
    """
    real, cplx = _numeric(precision)
    wavenumbers = [w for w in range(-cutoff, cutoff + 1) if w != 0]
    acc = defaultdict(lambda: cplx(0))
    for head in product(wavenumbers, repeat=len(slots) - 1):
        last = -sum(head)
        if last == 0 or abs(last) > cutoff:
            continue
        ws = head + (last,)
        value = kernel(ws)
        if value == 0:
            continue
        options = [_slot_terms(slot, w, precision) for slot, w in zip(slots, ws)]
        base = cplx(prefactor * real(value))
        for combo in product(*options):
            coeff = base
            modes = []
            for mode, factor in combo:
                coeff = coeff * factor
                modes.append(mode)
            acc[tuple(sorted(modes))] += coeff
    return acc


def quadratic_hamiltonian(cutoff, precision="double"):
    """H^(2) = sum sqrt(|j|) u_j conj(u_j)"""
    cutoff = _check_cutoff(cutoff)
    real, cplx = _numeric(precision)
    return diagonal_quadratic(cutoff, lambda j: np.sqrt(real(abs(j))), dtype=cplx)


def cubic_hamiltonian(cutoff, precision="double"):
    """H^(3) = 1/2 int eta (psi_x^2 - (|D| psi)^2) dx"""
    cutoff = _check_cutoff(cutoff)
    real, cplx = _numeric(precision)
    prefactor = real(1) / np.sqrt(2 * real(np.pi))
    acc = _expand_form(("eta", "psi", "psi"), _cubic_kernel, prefactor, cutoff, precision)
    return HamPolynomial(acc, dtype=cplx)


def quartic_hamiltonian(cutoff, precision="double"):
    """
    H^(4) = -1/2 int eta^2 (|D|^2 psi)(|D| psi) dx + 1/2 int (|D| psi) eta |D|(eta |D| psi) dx
    """
    cutoff = _check_cutoff(cutoff)
    real, cplx = _numeric(precision)
    prefactor = real(1) / (2 * real(np.pi))
    acc = _expand_form(("eta", "eta", "psi", "psi"), _quartic_kernel, prefactor, cutoff, precision)
    return HamPolynomial(acc, dtype=cplx)


def build_zakharov(cutoff, max_degree=4, precision="double"):
    """
    Truncated Zakharov Hamiltonian H^(2) + ... + H^(max_degree) on the modes 1 <= |j| <= cutoff.

    Args:
        cutoff: Fourier cutoff K >= 1
        max_degree: 2, 3 or 4
        precision: "double" or "extended" coefficients

    Returns:
        real-valued, momentum-conserving HamPolynomial
    """
    cutoff = _check_cutoff(cutoff)
    if max_degree not in (2, 3, 4):
        raise ValueError(f"max_degree must be 2, 3 or 4, got {max_degree}")
    H = quadratic_hamiltonian(cutoff, precision)
    if max_degree >= 3:
        H = H + cubic_hamiltonian(cutoff, precision)
    if max_degree >= 4:
        H = H + quartic_hamiltonian(cutoff, precision)
    logging.info(f"built Zakharov Hamiltonian K={cutoff} max_degree={max_degree}: {H}")
    return H


def zakharov_cache_key(cutoff, max_degree, precision="double"):
    return {
        "table": "zakharov",
        "cutoff": int(cutoff),
        "max_degree": int(max_degree),
        "precision": precision,
        "normalization_version": NORMALIZATION_VERSION,
    }


def build_zakharov_cached(cutoff, max_degree=4, precision="double"):
    """
    build_zakharov through the on-disk cache. Extended precision is never cached since JSON
    stores doubles.
    """
    if precision != "double":
        return build_zakharov(cutoff, max_degree, precision)
    key = zakharov_cache_key(cutoff, max_degree, precision)
    key_hash = content_hash(key)
    path = cache_dir() / f"zakharov_{key_hash[:16]}.json"
    if path.is_file():
        payload = read_json(path)
        if payload.get("key_hash") == key_hash and payload.get("key") == key:
            H = HamPolynomial.from_json(payload["polynomial"])
            if H.content_hash() == payload.get("polynomial_hash"):
                logging.info(f"loaded cached coefficient table {path}")
                return H
        logging.warning(f"ignoring stale cache entry {path}")
    H = build_zakharov(cutoff, max_degree, precision)
    write_json(
        path,
        {
            "key": key,
            "key_hash": key_hash,
            "polynomial": H.to_json(),
            "polynomial_hash": H.content_hash(),
        },
    )
    return H


def momentum_hamiltonian(cutoff):
    """M = int i u_x conj(u) dx = -sum_j j |u_j|^2"""
    cutoff = _check_cutoff(cutoff)
    return diagonal_quadratic(cutoff, lambda j: -j)


def v_expansion_coefficients(ns):
    """
    Taylor coefficients of the quadratic velocity potential terms.

    :param ns: iterable of nonzero integers
    :return: {n: {"V1_plus", "V1_minus", "V2_plus_minus", "V2_minus_plus"}}
    """
    table = {}
    for n in ns:
        if int(n) != n or n == 0:
            raise ValueError(f"wavenumber must be a nonzero integer, got {n}")
        n = int(n)
        v1 = n * abs(n) ** -0.25 / np.sqrt(2)
        v2 = n * abs(n) / 2
        table[n] = {
            "V1_plus": v1,
            "V1_minus": v1,
            "V2_plus_minus": v2,
            "V2_minus_plus": v2,
        }
    return table


def spectral_to_physical(u, n_grid=ORACLE_GRID):
    """
    Map complex amplitudes u (dict j -> u_j) to (x, eta(x), psi(x)) on a uniform grid.
    """
    wavenumbers = np.fft.fftfreq(n_grid, d=1.0 / n_grid).astype(int)
    eta_hat = np.zeros(n_grid, dtype=complex)
    psi_hat = np.zeros(n_grid, dtype=complex)
    for slot, j in enumerate(wavenumbers):
        if j == 0 or (j not in u and -j not in u):
            continue
        plus = u.get(j, 0)
        minus = np.conj(u.get(-j, 0))
        eta_hat[slot] = abs(j) ** 0.25 * (plus + minus) / np.sqrt(2)
        psi_hat[slot] = -1j * abs(j) ** -0.25 * (plus - minus) / np.sqrt(2)
    scale = n_grid / np.sqrt(2 * np.pi)
    x = 2 * np.pi * np.arange(n_grid) / n_grid
    eta = np.real(np.fft.ifft(eta_hat) * scale)
    psi = np.real(np.fft.ifft(psi_hat) * scale)
    return x, eta, psi


def _abs_d(f):
    k = np.abs(np.fft.fftfreq(len(f), d=1.0 / len(f)))
    return np.real(np.fft.ifft(k * np.fft.fft(f)))


def _dx(f):
    k = np.fft.fftfreq(len(f), d=1.0 / len(f))
    return np.real(np.fft.ifft(1j * k * np.fft.fft(f)))


def _integrate(f):
    return 2 * np.pi * np.mean(f)


def grid_energy(eta, psi, degree):
    """
    Physical-space quadrature of the homogeneous Zakharov energies, the oracle for
    build_zakharov.
    """
    if degree == 2:
        return 0.5 * _integrate(psi * _abs_d(psi) + eta**2)
    if degree == 3:
        return 0.5 * _integrate(eta * (_dx(psi) ** 2 - _abs_d(psi) ** 2))
    if degree == 4:
        d_psi = _abs_d(psi)
        d2_psi = _abs_d(d_psi)
        return -0.5 * _integrate(eta**2 * d2_psi * d_psi) + 0.5 * _integrate(
            d_psi * eta * _abs_d(eta * d_psi)
        )
    raise ValueError(f"no grid oracle for degree {degree}")
