"""
Hamiltonian vector fields z_dot = -i dH/d(conj z) of truncated polynomial Hamiltonians, the closed
form field of the quartic Birkhoff normal form and an autograd oracle for both.
"""
from functools import lru_cache

import numpy as np
import torch

from dynamics.state import SpectralState, wavenumbers
from hamiltonian.polynomial import MINUS

MAX_DEGREE = 4


def _remove_at(monomial, i):
    return tuple(monomial[:i]) + tuple(monomial[i + 1 :])


class CompiledField:
    """
    A HamPolynomial flattened into index arrays over the dense state layout z[j + K].

    Factor slots past the monomial degree point at an extra slot holding 1.
    """

    def __init__(self, H, cutoff=None):
        degrees = H.degrees()
        if degrees and max(degrees) > MAX_DEGREE:
            raise ValueError(f"vector fields are compiled up to degree {MAX_DEGREE}, got {degrees}")
        if not H.momentum_conserving:
            raise ValueError("vector fields need a momentum-conserving Hamiltonian")
        cutoff = int(cutoff or H.cutoff)
        if cutoff < 1:
            raise ValueError("cannot compile a vector field without modes")
        H = H.restrict(cutoff)
        self.cutoff = cutoff
        self.slots = 2 * cutoff + 1
        one = self.slots
        energy_idx, energy_conj, energy_coeff = [], [], []
        targets, field_idx, field_conj, field_coeff = [], [], [], []
        for monomial, coeff in H.items():
            pad = MAX_DEGREE - len(monomial)
            energy_idx.append([j + cutoff for j, _ in monomial] + [one] * pad)
            energy_conj.append([sigma == MINUS for _, sigma in monomial] + [False] * pad)
            energy_coeff.append(coeff)
            seen = set()
            for i, (j, sigma) in enumerate(monomial):
                if sigma != MINUS or j in seen:
                    continue
                seen.add(j)
                mult = sum(1 for mode in monomial if mode == (j, MINUS))
                rest = _remove_at(monomial, i)
                fill = MAX_DEGREE - 1 - len(rest)
                targets.append(j + cutoff)
                field_idx.append([k + cutoff for k, _ in rest] + [one] * fill)
                field_conj.append([s == MINUS for _, s in rest] + [False] * fill)
                field_coeff.append(-1j * complex(coeff) * mult)
        self.energy_idx = np.asarray(energy_idx, dtype=np.int64).reshape(-1, MAX_DEGREE)
        self.energy_conj = np.asarray(energy_conj, dtype=bool).reshape(-1, MAX_DEGREE)
        self.energy_coeff = np.asarray(energy_coeff, dtype=complex)
        self.targets = np.asarray(targets, dtype=np.int64)
        self.field_idx = np.asarray(field_idx, dtype=np.int64).reshape(-1, MAX_DEGREE - 1)
        self.field_conj = np.asarray(field_conj, dtype=bool).reshape(-1, MAX_DEGREE - 1)
        self.field_coeff = np.asarray(field_coeff, dtype=complex)

    def _products(self, z, idx, conj):
        ext = np.append(np.asarray(z, dtype=complex), 1.0)
        values = ext[idx]
        values = np.where(conj, np.conj(values), values)
        return values.prod(axis=1)

    def energy(self, z):
        if not len(self.energy_coeff):
            return 0.0
        products = self._products(z, self.energy_idx, self.energy_conj)
        return float(np.real(np.dot(self.energy_coeff, products)))

    def __call__(self, t, z):
        out = np.zeros(self.slots, dtype=complex)
        if not len(self.field_coeff):
            return out
        terms = self.field_coeff * self._products(z, self.field_idx, self.field_conj)
        out += np.bincount(self.targets, weights=terms.real, minlength=self.slots)
        out += 1j * np.bincount(self.targets, weights=terms.imag, minlength=self.slots)
        return out

    def torch_energy(self, z):
        """Real energy of a complex128 tensor, differentiable through torch autograd."""
        if not len(self.energy_coeff):
            return torch.sum(z.real) * 0.0
        ext = torch.cat([z, torch.ones(1, dtype=z.dtype)])
        values = ext[torch.as_tensor(self.energy_idx)]
        values = torch.where(torch.as_tensor(self.energy_conj), torch.conj_physical(values), values)
        product = values[:, 0] * values[:, 1] * values[:, 2] * values[:, 3]
        return torch.sum(torch.as_tensor(self.energy_coeff) * product).real


@lru_cache(maxsize=16)
def compile_field(H, cutoff=None):
    return CompiledField(H, cutoff)


def _dense(s, cutoff):
    if isinstance(s, SpectralState):
        if s.cutoff != cutoff:
            raise ValueError(f"state cutoff {s.cutoff} differs from field cutoff {cutoff}")
        return s.z
    z = np.asarray(s, dtype=complex)
    if z.shape != (2 * cutoff + 1,):
        raise ValueError(f"dense state of shape {z.shape} does not match cutoff {cutoff}")
    return z


def rhs_full(H, s):
    """z_dot = -i dH/d(conj z) of a degree <= 4 momentum-conserving Hamiltonian at state s."""
    field = compile_field(H, s.cutoff if isinstance(s, SpectralState) else None)
    return field(getattr(s, "t", 0.0), _dense(s, field.cutoff))


def hamiltonian_value(H, s):
    field = compile_field(H, s.cutoff if isinstance(s, SpectralState) else None)
    return field.energy(_dense(s, field.cutoff))


def bnf_frequencies(z, cutoff):
    """
    Instantaneous rotation speeds of the quartic normal-form flow,

        sqrt|n| + |n|^3 (|z_n|^2 - 2|z_-n|^2) / (2 pi) + (n / pi) sum_{|j|<|n|} j|j| |z_j|^2
                + (n|n| / pi) sum_{|m|>|n|} m |z_m|^2.
    """
    js = wavenumbers(cutoff)
    a = np.abs(js)
    actions = np.abs(np.asarray(z)) ** 2
    below = np.bincount(a, weights=js * a * actions, minlength=cutoff + 1)
    above = np.bincount(a, weights=js * actions, minlength=cutoff + 1)
    lower = np.cumsum(below) - below
    upper = above.sum() - np.cumsum(above)
    return (
        np.sqrt(a)
        + a**3 * (actions - 2 * actions[::-1]) / (2 * np.pi)
        + js * lower[a] / np.pi
        + js * a * upper[a] / np.pi
    )


def rhs_bnf(s, cutoff=None):
    """
    Vector field of H^(2) + H_FB^(4): every action |z_n|^2 is a first integral and each mode
    rotates at bnf_frequencies.
    """
    if isinstance(s, SpectralState):
        cutoff, z = s.cutoff, s.z
    else:
        z = np.asarray(s, dtype=complex)
        cutoff = cutoff or (len(z) - 1) // 2
    return -1j * bnf_frequencies(z, cutoff) * z


def bnf_field(cutoff):
    def field(t, z):
        return rhs_bnf(z, cutoff)

    return field


def autograd_field(H, s):
    """
    Oracle for rhs_full: z_dot = -(i/2)(dH/dx + i dH/dy) with z = x + iy, the gradient taken by
    torch autograd of the real energy.
    """
    field = compile_field(H, s.cutoff if isinstance(s, SpectralState) else None)
    z = _dense(s, field.cutoff)
    x = torch.tensor(z.real, dtype=torch.float64, requires_grad=True)
    y = torch.tensor(z.imag, dtype=torch.float64, requires_grad=True)
    energy = field.torch_energy(torch.complex(x, y))
    grad_x, grad_y = torch.autograd.grad(energy, (x, y))
    return -0.5j * (grad_x.numpy() + 1j * grad_y.numpy())
