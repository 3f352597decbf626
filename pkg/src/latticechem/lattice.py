"""Cubic-grid geometry, interaction potentials, and unit conversion.

All lengths are in lattice units (spacing a = 1) and all energies in the
hopping/interaction scale of the grid Hamiltonian; conversion to atomic
units (Bohr radius, Rydberg) happens only at output boundaries via
`to_atomic_units`.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

HEADER_STRUCT = struct.Struct("<QQQ")


class Boundary(str, Enum):
    OPEN = "open"
    PERIODIC = "periodic"


class NucleusOnSiteError(ValueError):
    """A nucleus sits exactly on a grid site and the 1/r potential diverges."""


@dataclass(frozen=True)
class LatticeSpec:
    """Cubic N x N x N grid.  Flat indices are x-fastest row-major."""

    n: int
    boundary: Boundary = Boundary.OPEN

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"lattice side must be >= 2, got {self.n}")

    @property
    def n_sites(self) -> int:
        return self.n ** 3

    def flatten(self, x, y, z):
        return x + self.n * (y + self.n * z)

    def unflatten(self, i):
        x = i % self.n
        y = (i // self.n) % self.n
        z = i // (self.n * self.n)
        return x, y, z

    def site_coordinates(self) -> np.ndarray:
        """(n_sites, 3) integer array of (x, y, z), x varying fastest."""
        idx = np.arange(self.n_sites)
        return np.stack(self.unflatten(idx), axis=1)


@dataclass(frozen=True)
class ChemistryParams:
    """Hopping, interaction strength, nuclei and electron count.

    Carries the mapping to atomic units: a0/a = 2 t_f / v0 and
    Ry = v0^2 / (4 t_f).
    """

    t_f: float
    v0: float
    nuclei: tuple = ()
    n_e: int = 1

    def __post_init__(self):
        if self.t_f <= 0 or self.v0 <= 0:
            raise ValueError("t_f and v0 must be positive")
        if self.n_e < 1:
            raise ValueError("n_e must be a positive integer")
        object.__setattr__(self, "nuclei",
                           tuple((float(z), tuple(float(c) for c in pos))
                                 for z, pos in self.nuclei))
        for z, _ in self.nuclei:
            if z <= 0:
                raise ValueError("nuclear charge must be positive")

    @property
    def bohr_radius(self) -> float:
        return 2.0 * self.t_f / self.v0

    @property
    def rydberg(self) -> float:
        return self.v0 ** 2 / (4.0 * self.t_f)


@dataclass(frozen=True)
class PotentialKind:
    """Coulomb v0/r or screened form C + (v0/r) exp(-r/L)."""

    kind: str
    screening_length: float = np.inf
    offset: float = 0.0

    @classmethod
    def coulomb(cls) -> "PotentialKind":
        return cls("coulomb")

    @classmethod
    def yukawa(cls, screening_length: float, offset: float = 0.0) -> "PotentialKind":
        if screening_length <= 0:
            raise ValueError("screening length must be positive")
        return cls("yukawa", float(screening_length), float(offset))


def potential_eval(kind: PotentialKind, v0: float, r):
    """Evaluate the pair potential at separation(s) `r` (total function).

    At r = 0 the lattice cutoff pi*v0 is used (plus the offset for the
    screened form).
    """
    r = np.asarray(r, dtype=np.float64)
    out = np.empty_like(r)
    zero = r == 0
    with np.errstate(divide="ignore"):
        if kind.kind == "coulomb":
            np.divide(v0, r, out=out, where=~zero)
        else:
            np.divide(v0, r, out=out, where=~zero)
            out *= np.exp(-r / kind.screening_length)
            out += kind.offset
    out[zero] = np.pi * v0 + (kind.offset if kind.kind == "yukawa" else 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def nuclear_field(lattice: LatticeSpec, params: ChemistryParams,
                  allow_on_site: bool = False) -> np.ndarray:
    """W(j) = sum_n Z_n * v0 / |j - r_n| over every grid site.

    Rejects a nucleus on an integer site (divergent potential) unless the
    caller opts into the pi*v0 cutoff with `allow_on_site`.
    """
    coords = lattice.site_coordinates().astype(np.float64)
    w = np.zeros(lattice.n_sites)
    for z, pos in params.nuclei:
        pos = np.asarray(pos, dtype=np.float64)
        if np.any(pos < 0) or np.any(pos > lattice.n - 1):
            raise ValueError(f"nucleus at {tuple(pos)} lies outside the grid")
        d = np.linalg.norm(coords - pos, axis=1)
        if np.any(d == 0) and not allow_on_site:
            raise NucleusOnSiteError(
                f"nucleus at {tuple(pos)} coincides with a grid site; "
                "pass allow_on_site=True to use the pi*v0 cutoff")
        w += z * potential_eval(PotentialKind.coulomb(), params.v0, d)
    return w


def to_atomic_units(e_lattice, params: ChemistryParams):
    """Shift by the band bottom (6 t_f per electron) and express in Ry."""
    return (np.asarray(e_lattice) + 6.0 * params.t_f * params.n_e) / params.rydberg


def default_nucleus_center(n: int, offset_axis: int = 1) -> tuple:
    """Central nucleus position (m, m + 1/2, m) with m = n // 2.

    The half-site offset (on y by default) keeps every grid site off the
    potential singularity.
    """
    m = n // 2
    pos = [float(m)] * 3
    pos[offset_axis] += 0.5
    return tuple(pos)


def h2_nuclei_positions(n: int, d: int, offset_axis: int = 1) -> tuple:
    """Two-nucleus placement at integer separation d along x.

    Positions (m - ceil(d/2), m + 1/2, m) and (m + floor(d/2), m + 1/2, m);
    both share the half-site offset.
    """
    m = n // 2
    left = [float(m - (d + 1) // 2), float(m), float(m)]
    right = [float(m + d // 2), float(m), float(m)]
    left[offset_axis] += 0.5
    right[offset_axis] += 0.5
    return tuple(left), tuple(right)


def write_field_binary(path, values: np.ndarray, lattice: LatticeSpec) -> None:
    """24-byte header (three little-endian u64: N, N, N) + N^3 LE float64."""
    values = np.asarray(values, dtype="<f8").ravel()
    if values.size != lattice.n_sites:
        raise ValueError("field size does not match lattice")
    with open(path, "wb") as fh:
        fh.write(HEADER_STRUCT.pack(lattice.n, lattice.n, lattice.n))
        fh.write(values.tobytes())


def read_field_binary(path):
    with open(path, "rb") as fh:
        nx, ny, nz = HEADER_STRUCT.unpack(fh.read(HEADER_STRUCT.size))
        if not nx == ny == nz:
            raise ValueError(f"non-cubic field header {(nx, ny, nz)}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != nx ** 3:
        raise ValueError("truncated field payload")
    return data.astype(np.float64), LatticeSpec(int(nx))


def write_field_csv(path, values: np.ndarray, lattice: LatticeSpec) -> None:
    coords = lattice.site_coordinates()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "z", "value"])
        for (x, y, z), v in zip(coords, np.ravel(values)):
            writer.writerow([x, y, z, repr(float(v))])
