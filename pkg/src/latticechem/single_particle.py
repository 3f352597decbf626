"""One-electron lattice Hamiltonian: matrix-free assembly, iterative
eigenpairs, and the hydrogen diagnostics (ratio scans, Bohr-radius and
error-exponent fits)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from latticechem import _kernels
from latticechem.lattice import (
    Boundary,
    ChemistryParams,
    LatticeSpec,
    default_nucleus_center,
    nuclear_field,
    to_atomic_units,
)

DEGENERACY_TOL = 1e-8


class SolverConvergenceError(RuntimeError):
    """Eigensolver stopped before meeting the residual contract."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class DegenerateFitError(ValueError):
    """Least-squares fit rejected (e.g. identically zero residuals)."""


@dataclass(frozen=True)
class OrbitalField:
    """Real amplitude over the grid, unit-normalized."""

    values: np.ndarray
    lattice: LatticeSpec

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if v.size != self.lattice.n_sites:
            raise ValueError("field size does not match lattice")
        nrm = np.linalg.norm(v)
        if abs(nrm - 1.0) > 1e-10:
            raise ValueError(f"orbital norm {nrm} deviates from 1")
        object.__setattr__(self, "values", v)


@dataclass
class Spectrum:
    energies: np.ndarray
    orbitals: list
    residuals: np.ndarray


@dataclass
class ScanRow:
    ratio: float
    level: int
    energy_ry: float
    residual: float


@dataclass
class BohrRadiusFit:
    a0: float
    slope: float
    n_bins_used: int
    bin_r: np.ndarray
    bin_amplitude: np.ndarray


def apply_hamiltonian(psi, lattice: LatticeSpec, params: ChemistryParams,
                      w: np.ndarray | None = None) -> np.ndarray:
    """(-t_f * sum_neighbours psi) - W * psi; open boundaries drop
    out-of-grid neighbours."""
    values = psi.values if isinstance(psi, OrbitalField) else np.asarray(psi, float)
    if values.size != lattice.n_sites:
        raise ValueError("psi size does not match lattice")
    if w is None:
        w = nuclear_field(lattice, params)
    periodic = lattice.boundary == Boundary.PERIODIC
    return _kernels.apply_stencil(values, w, params.t_f, lattice.n, periodic)


def hamiltonian_operator(lattice: LatticeSpec, params: ChemistryParams,
                         w: np.ndarray | None = None) -> LinearOperator:
    if w is None:
        w = nuclear_field(lattice, params)
    periodic = lattice.boundary == Boundary.PERIODIC
    n, t = lattice.n, params.t_f

    def matvec(v):
        return _kernels.apply_stencil(np.ravel(v), w, t, n, periodic)

    m = lattice.n_sites
    return LinearOperator((m, m), matvec=matvec, dtype=np.float64)


def _sign_fix(vec: np.ndarray) -> np.ndarray:
    peak = np.max(np.abs(vec))
    if peak == 0:
        return vec
    sig = np.flatnonzero(np.abs(vec) > 1e-8 * peak)
    if sig.size and vec[sig[0]] < 0:
        return -vec
    return vec


def _order_degenerate(energies, vecs):
    """Stable ordering inside near-degenerate bands: sort by the index of
    the first significant component of the sign-fixed vector."""
    order = np.argsort(energies, kind="stable")
    energies = energies[order]
    vecs = vecs[:, order]
    cols = [_sign_fix(vecs[:, i]) for i in range(vecs.shape[1])]
    keys = []
    for c in cols:
        peak = np.max(np.abs(c))
        sig = np.flatnonzero(np.abs(c) > 1e-8 * peak) if peak else np.array([0])
        keys.append(int(sig[0]))
    # regroup within degeneracy bands
    i = 0
    idx = list(range(len(cols)))
    while i < len(cols):
        j = i + 1
        while j < len(cols) and energies[j] - energies[i] < DEGENERACY_TOL:
            j += 1
        idx[i:j] = sorted(idx[i:j], key=lambda p: keys[p])
        i = j
    return energies[idx], [cols[p] for p in idx]


def lowest_eigenpairs(lattice: LatticeSpec, params: ChemistryParams, k: int,
                      tol: float = 1e-9, maxiter: int | None = None,
                      seed: int = 7, w: np.ndarray | None = None) -> Spectrum:
    """k lowest eigenpairs of the one-electron Hamiltonian, matrix-free.

    Residuals ||H v - E v|| are recomputed after the solve; non-convergence
    raises `SolverConvergenceError` carrying the achieved residuals.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if w is None:
        w = nuclear_field(lattice, params)
    op = hamiltonian_operator(lattice, params, w=w)
    m = lattice.n_sites
    rng = np.random.default_rng(seed)
    start = rng.standard_normal(m)
    ncv = min(m - 1, max(2 * k + 1, 20 + k))
    try:
        vals, vecs = eigsh(op, k=k, which="SA", tol=tol, v0=start, ncv=ncv,
                           maxiter=maxiter)
    except ArpackNoConvergence as exc:
        resid = None
        if exc.eigenvectors is not None and len(exc.eigenvalues):
            resid = np.array(
                [np.linalg.norm(op @ exc.eigenvectors[:, i]
                                - exc.eigenvalues[i] * exc.eigenvectors[:, i])
                 for i in range(exc.eigenvectors.shape[1])])
        raise SolverConvergenceError(
            f"eigensolver did not converge ({exc})", residuals=resid) from exc
    vals, cols = _order_degenerate(vals, vecs)
    resid = np.array([np.linalg.norm(op @ c - e * c)
                      for e, c in zip(vals, cols)])
    orbitals = [OrbitalField(c / np.linalg.norm(c), lattice) for c in cols]
    return Spectrum(energies=vals, orbitals=orbitals, residuals=resid)


def hydrogen_params(ratio: float, n: int, z: float = 1.0,
                    offset_axis: int = 1) -> ChemistryParams:
    """Single nucleus at the half-offset grid center, t_f = 1, v0 = 1/ratio."""
    if ratio <= 0:
        raise ValueError("ratio t_f/v0 must be positive")
    return ChemistryParams(
        t_f=1.0, v0=1.0 / ratio,
        nuclei=((z, default_nucleus_center(n, offset_axis)),), n_e=1)


def hydrogen_scan(n: int, ratios, k: int = 9, tol: float = 1e-9):
    """One spectrum per ratio, in Ry; rows ordered by (ratio, level)."""
    rows = []
    lattice = LatticeSpec(n)
    for ratio in ratios:
        if ratio <= 0:
            raise ValueError("ratios must be positive")
        params = hydrogen_params(ratio, n)
        try:
            spec = lowest_eigenpairs(lattice, params, k, tol=tol)
        except SolverConvergenceError as exc:
            raise SolverConvergenceError(
                f"ratio {ratio}: {exc}", residuals=exc.residuals) from exc
        e_ry = to_atomic_units(spec.energies, params)
        for level in range(k):
            rows.append(ScanRow(ratio=float(ratio), level=level,
                                energy_ry=float(e_ry[level]),
                                residual=float(spec.residuals[level])))
    return rows


def fit_bohr_radius(ground: OrbitalField, params: ChemistryParams,
                    n_bins: int = 30) -> BohrRadiusFit:
    """Fit the radial decay of the ground-state amplitude.

    Spherically averages |psi| in unit-width shells around the nucleus,
    normalizes by the central shell, and fits log-amplitude against the
    shell-mean radius; the fitted decay length is -1/slope.  If fewer than
    `n_bins` complete shells fit inside the grid the fit uses (and
    reports) the usable count.
    """
    if not params.nuclei:
        raise ValueError("params carry no nucleus")
    lattice = ground.lattice
    pos = np.asarray(params.nuclei[0][1])
    coords = lattice.site_coordinates().astype(np.float64)
    r = np.linalg.norm(coords - pos, axis=1)
    # shells are complete only up to the nearest face
    face = min(pos.min(), (lattice.n - 1) - pos.max())
    usable = int(min(n_bins, np.floor(face)))
    if usable < 2:
        raise ValueError("lattice too small for a radial fit")
    amp = np.abs(ground.values)
    which = np.floor(r).astype(int)
    bin_amp = np.zeros(usable)
    bin_r = np.zeros(usable)
    for b in range(usable):
        mask = which == b
        bin_amp[b] = amp[mask].mean()
        bin_r[b] = r[mask].mean()
    central = bin_amp[0]
    good = bin_amp > 0
    if good.sum() < 2:
        raise DegenerateFitError("not enough non-zero shells for the fit")
    slope, _ = np.polyfit(bin_r[good], np.log(bin_amp[good] / central), 1)
    return BohrRadiusFit(a0=-1.0 / slope, slope=float(slope),
                         n_bins_used=usable, bin_r=bin_r,
                         bin_amplitude=bin_amp / central)


def fit_error_exponent(rows, reference: float = -1.0,
                       window=(1.0, None)) -> float:
    """Least-squares slope of log|E0 - reference| versus log(ratio)."""
    lo, hi = window
    pts = [(row.ratio, abs(row.energy_ry - reference))
           for row in rows if row.level == 0
           and row.ratio > lo and (hi is None or row.ratio < hi)]
    if not pts:
        raise ValueError(
            "no ratios inside the validity window of inequality (a)")
    if len(pts) < 2:
        raise ValueError("need at least two ratios to fit an exponent")
    errs = np.array([e for _, e in pts])
    if np.any(errs == 0):
        raise DegenerateFitError("degenerate residuals: zero error encountered")
    x = np.log([r for r, _ in pts])
    y = np.log(errs)
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)
