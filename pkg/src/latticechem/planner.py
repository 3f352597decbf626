"""Parameter selection: ratio schedules for molecular curves and the
finite-size departure (critical-ratio) detection procedure."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class RatioSchedule:
    kind: str                      # linear | fixed | table
    intercept: float = 0.0
    slope: float = 0.0
    ratio: float = 0.0
    table: tuple = ()

    @classmethod
    def linear(cls, intercept: float, slope: float) -> "RatioSchedule":
        return cls("linear", intercept=intercept, slope=slope)

    @classmethod
    def fixed(cls, ratio: float) -> "RatioSchedule":
        return cls("fixed", ratio=ratio)

    @classmethod
    def from_table(cls, rows) -> "RatioSchedule":
        return cls("table", table=tuple((float(d), float(r)) for d, r in rows))


def schedule_ratio(schedule: RatioSchedule, d_lattice) -> float:
    if schedule.kind == "linear":
        ratio = schedule.intercept + schedule.slope * d_lattice
    elif schedule.kind == "fixed":
        ratio = schedule.ratio
    elif schedule.kind == "table":
        lookup = dict(schedule.table)
        if float(d_lattice) not in lookup:
            raise ValueError(f"no table entry for separation {d_lattice}")
        ratio = lookup[float(d_lattice)]
    else:
        raise ValueError(f"unknown schedule kind {schedule.kind!r}")
    if ratio <= 0:
        raise ValueError(
            f"schedule produced non-positive ratio {ratio} at d={d_lattice}")
    return float(ratio)


@dataclass
class DepartureRow:
    ratio: float
    e_small: float
    e_large: float
    deviation: float


@dataclass
class CriticalRatioResult:
    d_atomic: float
    critical_ratio: float | None
    fit_m: float
    fit_n: float
    departure_table: list
    converged: bool
    message: str = ""


def fit_inverse_square(ratios, energies):
    """Least-squares fit of energies to m * ratio^-2 + n."""
    x = np.asarray(ratios, dtype=float)
    y = np.asarray(energies, dtype=float)
    design = np.stack([x ** -2.0, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(coef[0]), float(coef[1])


def residual_sign_runs(residuals) -> int:
    """Number of sign runs; a trend-free residual sequence has many."""
    signs = np.sign(residuals)
    signs = signs[signs != 0]
    if signs.size == 0:
        return 0
    return int(1 + np.sum(signs[1:] != signs[:-1]))


def critical_ratio(d_atomic: float, n_small: int, n_large: int, solver,
                   d_lattice_values=None, threshold: float = 0.1
                   ) -> CriticalRatioResult:
    """Detect where finite-size effects separate two lattice sizes.

    For each on-lattice separation, the ratio t_f/v0 = d_lattice /
    (2 d_atomic) fixes the Bohr radius; both lattices are solved through
    the `solver(n, ratio, d_lattice) -> energy` handle.  The large-lattice
    energies are fitted to m x^-2 + n; the critical ratio is the largest
    ratio (scanning upward) at which the size deviation stays below
    `threshold` times the remaining discretization error |E_small - n|.
    """
    if n_large < n_small:
        raise ValueError("n_large must be >= n_small")
    if d_lattice_values is None:
        d_lattice_values = range(1, min(30, n_small // 2) + 1)
    d_lattice_values = sorted(int(d) for d in d_lattice_values)
    ratios, e_small, e_large = [], [], []
    for d in d_lattice_values:
        ratio = d / (2.0 * d_atomic)
        ratios.append(ratio)
        e_small.append(float(solver(n_small, ratio, d)))
        e_large.append(float(solver(n_large, ratio, d)))
    fit_m, fit_n = fit_inverse_square(ratios, e_large)
    table = []
    scale = max(abs(e) for e in e_small)
    critical = None
    departed = False
    for ratio, es, el in zip(ratios, e_small, e_large):
        dev = abs(es - el)
        table.append(DepartureRow(ratio=ratio, e_small=es, e_large=el,
                                  deviation=dev))
        if not departed and dev <= threshold * abs(es - fit_n):
            critical = ratio
        elif not departed and critical is not None:
            departed = True
    max_dev = max(row.deviation for row in table)
    if max_dev < 1e-12 * scale:
        return CriticalRatioResult(
            d_atomic=d_atomic, critical_ratio=None, fit_m=fit_m, fit_n=fit_n,
            departure_table=table, converged=False,
            message="no finite-size signal")
    n_before = sum(1 for row in table
                   if critical is not None and row.ratio <= critical)
    if critical is None or n_before < 3:
        return CriticalRatioResult(
            d_atomic=d_atomic, critical_ratio=critical, fit_m=fit_m,
            fit_n=fit_n, departure_table=table, converged=False,
            message="fewer than 3 points before departure")
    return CriticalRatioResult(
        d_atomic=d_atomic, critical_ratio=critical, fit_m=fit_m, fit_n=fit_n,
        departure_table=table, converged=True)


def single_particle_backend(tol: float = 1e-9):
    """Solve handle: two-center one-electron ground energy in Ry."""
    from latticechem.lattice import LatticeSpec, to_atomic_units
    from latticechem.single_particle import lowest_eigenpairs
    from latticechem.two_electron import h2_params

    def solve(n, ratio, d_lattice):
        params = h2_params(n, d_lattice, ratio, n_e=1)
        spec = lowest_eigenpairs(LatticeSpec(n), params, 1, tol=tol)
        return float(to_atomic_units(spec.energies[0], params))

    return solve


def two_electron_backend(n1: int = 8, n2: int = 0, potential=None,
                         repulsion_scale: float = 1.0,
                         nuclear_repulsion: bool = True,
                         eig_tol: float = 1e-9):
    """Solve handle: projected two-electron total energy in Ry."""
    from latticechem.lattice import PotentialKind
    from latticechem.two_electron import molecular_curve

    if potential is None:
        potential = PotentialKind.coulomb()

    def solve(n, ratio, d_lattice):
        points, failures = molecular_curve(
            [d_lattice], n, RatioSchedule.fixed(ratio), potential,
            repulsion_scale=repulsion_scale, n1=n1, n2=n2,
            nuclear_repulsion=nuclear_repulsion, eig_tol=eig_tol)
        if failures:
            raise RuntimeError(
                f"solve failed at n={n}, d={d_lattice}: {failures[0].error}")
        return points[0].e_total

    return solve
