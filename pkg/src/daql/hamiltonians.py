"""Rydberg-chain and XXZ Hamiltonian construction and geometry conversions.

All frequencies are angular (rad/us): a drive quoted as "2 pi x f MHz"
is stored as ``2 * pi * f``.  Distances are in micrometers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .sim import HermitianOperator

TWO_PI = 2.0 * np.pi
#: van der Waals coefficient, rad/us * um^6
C6_DEFAULT = 862690.0 * TWO_PI
#: default Rabi frequency, 2 pi x 4 MHz
OMEGA_DEFAULT = TWO_PI * 4.0


def blockade_radius(omega: float, c6: float = C6_DEFAULT) -> float:
    """Distance at which the pair interaction equals the Rabi frequency."""
    if omega <= 0:
        raise ValueError(f"Rabi frequency must be positive, got {omega}")
    return (c6 / omega) ** (1.0 / 6.0)


def lattice_spacing(rb_over_a: float, omega: float = OMEGA_DEFAULT, c6: float = C6_DEFAULT) -> float:
    if rb_over_a <= 0:
        raise ValueError(f"rb_over_a must be positive, got {rb_over_a}")
    return blockade_radius(omega, c6) / rb_over_a


def chain_positions(n: int, rb_over_a: float, omega: float = OMEGA_DEFAULT,
                    c6: float = C6_DEFAULT) -> np.ndarray:
    """Collinear chain coordinates (n, 2) with spacing set by R_b / a."""
    a = lattice_spacing(rb_over_a, omega, c6)
    pos = np.zeros((n, 2))
    pos[:, 0] = a * np.arange(n)
    return pos


@dataclass(frozen=True)
class ChainGeometry:
    """One-dimensional chain of ``n`` sites with lattice constant ``a`` (um)."""

    n: int
    a: float
    boundary: str = "open"

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError(f"lattice spacing must be positive, got {self.a}")
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"boundary must be 'open' or 'periodic', got {self.boundary!r}")


@dataclass(frozen=True)
class RydbergParams:
    """Site-independent Rydberg drive parameters plus atom coordinates.

    Parameters are scalars by construction: per-site arrays are rejected
    at the type level.
    """

    n: int
    omega: float = OMEGA_DEFAULT
    delta: float = 0.8 * OMEGA_DEFAULT
    phi_laser: float = 0.0
    positions: np.ndarray = field(default=None)  # (n, 2) um
    c6: float = C6_DEFAULT

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one atom")
        for name in ("omega", "delta", "phi_laser", "c6"):
            if not np.isscalar(getattr(self, name)) or isinstance(getattr(self, name), np.ndarray):
                raise TypeError(f"{name} must be a scalar (site-independent drive)")
        if self.omega <= 0 or self.c6 <= 0:
            raise ValueError("omega and c6 must be positive")
        pos = self.positions
        if pos is None:
            pos = chain_positions(self.n, 0.87, self.omega, self.c6)
        pos = np.ascontiguousarray(pos, dtype=float)
        if pos.shape != (self.n, 2):
            raise ValueError(f"positions must have shape ({self.n}, 2), got {pos.shape}")
        object.__setattr__(self, "positions", pos)

    @classmethod
    def chain(cls, n: int, rb_over_a: float = 0.87, delta_over_omega: float = 0.8,
              omega: float = OMEGA_DEFAULT, c6: float = C6_DEFAULT) -> "RydbergParams":
        return cls(n=n, omega=omega, delta=delta_over_omega * omega,
                   positions=chain_positions(n, rb_over_a, omega, c6), c6=c6)


def occupation_table(n: int) -> np.ndarray:
    """(2**n, n) array of basis-state bits; qubit 0 is the most significant."""
    idx = np.arange(2**n)
    shifts = np.arange(n - 1, -1, -1)
    return ((idx[:, None] >> shifts[None, :]) & 1).astype(float)


def build_rydberg(params: RydbergParams) -> HermitianOperator:
    """Drive + detuning + van der Waals Hamiltonian over the full register."""
    n, d = params.n, 2**params.n
    occ = occupation_table(n)
    diag = -params.delta * occ.sum(axis=1)
    for j in range(n):
        for k in range(j + 1, n):
            dist = np.linalg.norm(params.positions[j] - params.positions[k])
            if dist == 0.0:
                raise ValueError(f"atoms {j} and {k} are coincident (infinite interaction)")
            diag = diag + (params.c6 / dist**6) * occ[:, j] * occ[:, k]

    idx = np.arange(d)
    rows = np.concatenate([idx] * n)
    cols = np.concatenate([idx ^ (1 << (n - 1 - j)) for j in range(n)])
    # <g|H|r> = (Omega/2) e^{i phi}; rows where the driven bit is 0 take that
    # element, rows where it is 1 take the conjugate.
    half = 0.5 * params.omega * np.exp(1j * params.phi_laser)
    vals = np.where(occ.T.reshape(-1) == 0.0, half, np.conj(half))
    H = sp.csr_matrix((vals, (rows, cols)), shape=(d, d)) + sp.diags(diag.astype(complex))
    return HermitianOperator(H)


@dataclass(frozen=True)
class XXZParams:
    """Antiferromagnetic XXZ chain with next-nearest-neighbor frustration.

    ``alpha`` is the geometric coupling ratio (d1/d2)^3 between neighbor
    distances; it scales the spin-exchange NNN term and its square scales
    the Ising NNN term.  Periodic boundary only.
    """

    n: int
    j3: float
    j6: float
    alpha: float
    boundary: str = "periodic"

    def __post_init__(self):
        if self.boundary != "periodic":
            raise ValueError("XXZ chain is defined with periodic boundary conditions")
        if self.n < 5:
            raise ValueError(f"n={self.n} too small: NNN bonds would wrap onto NN bonds")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


def build_xxz(params: XXZParams) -> HermitianOperator:
    n, d = params.n, 2**params.n
    occ = occupation_table(n)
    z = 1.0 - 2.0 * occ  # Z eigenvalue per site
    idx = np.arange(d)

    diag = np.zeros(d)
    rows, cols, vals = [], [], []

    def add_bond(p: int, q: int, xy_coef: float, zz_coef: float):
        nonlocal diag
        diag = diag + zz_coef * z[:, p] * z[:, q]
        if xy_coef != 0.0:
            # (XX + YY) hops |01> <-> |10| with amplitude 2 on anti-aligned pairs
            mask = occ[:, p] != occ[:, q]
            src = idx[mask]
            dst = src ^ (1 << (n - 1 - p)) ^ (1 << (n - 1 - q))
            rows.append(src)
            cols.append(dst)
            vals.append(np.full(src.shape, 2.0 * xy_coef))

    for r in range(n):
        add_bond(r, (r + 1) % n, params.j3, params.j6)
        add_bond(r, (r + 2) % n, params.j3 * params.alpha, params.j6 * params.alpha**2)

    H = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(d, d)
    ) if vals else sp.csr_matrix((d, d))
    H = H + sp.diags(diag)
    return HermitianOperator(H.astype(complex))
