"""Covariant operators on a discrete torus.

Dense matrices indexed by ``site * n_orb + orbital`` with sites enumerated in
C order over the torus coordinates.  Orbitals share the position of their site.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-12

SAWTOOTH = "sawtooth-commutator"
MINIMAL_IMAGE = "minimal-image"
CONVENTIONS = (SAWTOOTH, MINIMAL_IMAGE)


@dataclass(frozen=True)
class TorusLattice:
    sizes: tuple[int, ...]
    n_orb: int = 1

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if len(sizes) not in (1, 2):
            raise ValueError(f"only d=1 or d=2 tori are supported, got d={len(sizes)}")
        if any(s < 4 for s in sizes):
            raise ValueError(f"every torus side must be >= 4, got {sizes}")
        if self.n_orb < 1:
            raise ValueError("n_orb must be positive")

    @property
    def d(self) -> int:
        return len(self.sizes)

    @property
    def volume(self) -> int:
        return int(np.prod(self.sizes))

    @property
    def dim(self) -> int:
        return self.volume * self.n_orb

    def coords(self) -> np.ndarray:
        """Site coordinates of every basis vector, shape ``(dim, d)``."""
        return _coords(self)

    def index(self, site: Sequence[int], orb: int = 0) -> int:
        site = tuple(int(s) % L for s, L in zip(site, self.sizes))
        return int(np.ravel_multi_index(site, self.sizes)) * self.n_orb + orb


@lru_cache(maxsize=64)
def _coords(lat: TorusLattice) -> np.ndarray:
    grids = np.indices(lat.sizes).reshape(lat.d, -1).T
    out = np.repeat(grids, lat.n_orb, axis=0)
    out.flags.writeable = False
    return out


@lru_cache(maxsize=64)
def _displacement(lat: TorusLattice, k: int, conv: str) -> np.ndarray:
    x = lat.coords()[:, k]
    diff = x[:, None] - x[None, :]
    if conv == MINIMAL_IMAGE:
        L = lat.sizes[k]
        # representative in (-L/2, L/2]
        lo = -((L - 1) // 2)
        diff = (diff - lo) % L + lo
    diff = diff.astype(float)
    diff.flags.writeable = False
    return diff


def displacement(lat: TorusLattice, k: int, conv: str = MINIMAL_IMAGE) -> np.ndarray:
    """Matrix of position differences ``x_k - y_k`` under a derivation convention."""
    _check_conv(conv)
    if not 0 <= k < lat.d:
        raise ValueError(f"direction {k} out of range for d={lat.d}")
    return _displacement(lat, k, conv)


def _check_conv(conv: str):
    if conv not in CONVENTIONS:
        raise ValueError(f"unknown derivation convention {conv!r}; expected one of {CONVENTIONS}")


@dataclass(frozen=True, eq=False)
class CovariantOperator:
    """A single disorder realization of a covariant operator at finite volume."""

    lattice: TorusLattice
    matrix: np.ndarray = field(repr=False)
    hermitian: bool = False

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (self.lattice.dim, self.lattice.dim):
            raise ValueError(f"matrix shape {m.shape} does not match lattice dimension {self.lattice.dim}")
        if self.hermitian:
            defect = np.abs(m - m.conj().T).max(initial=0.0)
            if defect >= HERMITIAN_TOL * max(1.0, np.abs(m).max(initial=0.0)):
                raise ValueError(f"operator flagged hermitian but |A - A^+|_max = {defect:.3e}")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def dag(self) -> "CovariantOperator":
        return CovariantOperator(self.lattice, self.matrix.conj().T, self.hermitian)

    def __matmul__(self, other):
        return CovariantOperator(self.lattice, self.matrix @ _mat(other))

    def __add__(self, other):
        return CovariantOperator(self.lattice, self.matrix + _mat(other))

    def __sub__(self, other):
        return CovariantOperator(self.lattice, self.matrix - _mat(other))

    def __mul__(self, c):
        return CovariantOperator(self.lattice, c * self.matrix)

    __rmul__ = __mul__

    def max_norm(self) -> float:
        return float(np.abs(self.matrix).max(initial=0.0))

    @classmethod
    def identity(cls, lattice: TorusLattice) -> "CovariantOperator":
        return cls(lattice, np.eye(lattice.dim), hermitian=True)

    @classmethod
    def zeros(cls, lattice: TorusLattice) -> "CovariantOperator":
        return cls(lattice, np.zeros((lattice.dim, lattice.dim)), hermitian=True)


def _mat(A) -> np.ndarray:
    return A.matrix if isinstance(A, CovariantOperator) else np.asarray(A)


def trace_per_volume(A: CovariantOperator) -> complex:
    """``Tr(A) / |Lambda|``; the identity gives ``n_orb``."""
    return complex(np.trace(A.matrix)) / A.lattice.volume


def spatial_derivation(A: CovariantOperator, k: int, conv: str = MINIMAL_IMAGE) -> CovariantOperator:
    """``i[X_k, A]`` (sawtooth) or its minimal-image analogue ``i delta_k(x, y) A_xy``."""
    D = displacement(A.lattice, k, conv)
    out = 1j * D * A.matrix
    return CovariantOperator(A.lattice, out, hermitian=A.hermitian)


def derivation_matrix(lat: TorusLattice, A: np.ndarray, k: int, conv: str = MINIMAL_IMAGE) -> np.ndarray:
    """Array-level version of :func:`spatial_derivation` used in hot loops."""
    return 1j * displacement(lat, k, conv) * A


def hopping_range(A: CovariantOperator, k: int, tol: float = 1e-14) -> int:
    D = np.abs(displacement(A.lattice, k, MINIMAL_IMAGE))
    mask = np.abs(A.matrix) > tol
    return int(D[mask].max(initial=0))


def leibniz_defect(A: CovariantOperator, B: CovariantOperator, k: int, conv: str = MINIMAL_IMAGE) -> float:
    """Max-norm of ``d(AB) - d(A)B - A d(B)``; zero for the sawtooth convention."""
    lhs = spatial_derivation(A @ B, k, conv).matrix
    rhs = spatial_derivation(A, k, conv).matrix @ B.matrix + A.matrix @ spatial_derivation(B, k, conv).matrix
    return float(np.abs(lhs - rhs).max(initial=0.0))


def dagger_commutator(H: CovariantOperator, A: CovariantOperator) -> CovariantOperator:
    """Generalized commutator ``HA - (HA^*)^*`` for self-adjoint ``A``.

    At finite dimension this is the plain commutator, which is what is returned.
    """
    a = _mat(A)
    if np.abs(a - a.conj().T).max(initial=0.0) > HERMITIAN_TOL * max(1.0, np.abs(a).max(initial=0.0)):
        raise ValueError("dagger_commutator needs a self-adjoint second argument")
    h = _mat(H)
    lat = H.lattice if isinstance(H, CovariantOperator) else A.lattice
    return CovariantOperator(lat, h @ a - a @ h)


def translation_matrix(lat: TorusLattice, y: Sequence[int], phase: np.ndarray | None = None) -> np.ndarray:
    """Unitary ``(U_y psi)(x) = phase(x) psi(x - y)`` on the torus.

    ``phase`` is a per-site array (shape ``lat.sizes``) or None for a plain shift.
    """
    y = np.asarray(y, dtype=int)
    if y.shape != (lat.d,):
        raise ValueError(f"translation vector must have {lat.d} components")
    coords = lat.coords()
    orb = np.arange(lat.dim) % lat.n_orb
    src_sites = (coords - y) % np.array(lat.sizes)
    src = np.ravel_multi_index(tuple(src_sites.T), lat.sizes) * lat.n_orb + orb
    U = np.zeros((lat.dim, lat.dim), dtype=complex)
    vals = np.ones(lat.dim, dtype=complex)
    if phase is not None:
        vals = np.repeat(np.asarray(phase).reshape(-1), lat.n_orb)
    U[np.arange(lat.dim), src] = vals
    return U


def covariance_check(builder: Callable[[np.ndarray], CovariantOperator], field_values: np.ndarray,
                     y: Sequence[int], phase: np.ndarray | None = None) -> float:
    """Defect ``|U_y H(field) U_y^+ - H(translate_y field)|_max``.

    ``builder`` maps a disorder field of shape ``lattice.sizes + (n_orb,)`` to an
    operator; ``phase`` optionally makes the translation magnetic.
    """
    H = builder(field_values)
    lat = H.lattice
    shifted = np.roll(field_values, shift=tuple(int(v) for v in y), axis=tuple(range(lat.d)))
    U = translation_matrix(lat, y, phase)
    lhs = U @ H.matrix @ U.conj().T
    return float(np.abs(lhs - builder(shifted).matrix).max(initial=0.0))
