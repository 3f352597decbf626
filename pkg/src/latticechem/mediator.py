"""Effective fermion-fermion interaction mediated by a spin excitation of
the Mott insulator.

Production path: the self-consistent closed scalar equation for the
bound-state energy above the b-band, evaluated through periodic-grid
momentum sums (tables cached per grid size).  Exact dense diagonalization
of the single-excitation Hamiltonian is an oracle for small grids.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import brentq


class BandPoleError(ValueError):
    """Requested energy lies inside the mediator band."""


class GapError(ValueError):
    """The symmetric-state gap above the band top is non-positive."""


class BracketError(RuntimeError):
    """Root bracketing failed; carries endpoint residuals."""

    def __init__(self, message, lo, hi, f_lo, f_hi):
        super().__init__(message)
        self.bracket = (lo, hi)
        self.residuals = (f_lo, f_hi)


@dataclass(frozen=True)
class MediatorParams:
    """Couplings of the mediator Hamiltonian plus the bare fermion hopping."""

    j: float        # b-excitation hopping
    j_c: float      # cavity-induced all-to-all rate
    u: float        # on-site fermion repulsion felt by a-excitations
    delta: float    # a-b detuning
    g: float        # a-b coupling
    j_f: float      # bare fermion hopping
    n_m: int        # Mott grid side
    n_e: int        # fermion count

    def __post_init__(self):
        if self.n_m < 2 or self.n_e < 1:
            raise ValueError("need n_m >= 2 and n_e >= 1")
        if not 0.0 < self.rho_m < 1.0:
            raise ValueError("mediator density n_e/n_m^3 must lie in (0, 1)")

    @property
    def rho_m(self) -> float:
        return self.n_e / self.n_m ** 3

    @property
    def symmetric_level(self) -> float:
        """Unperturbed energy of the fermion-site symmetric a-state."""
        return self.u + self.delta + self.rho_m * self.j_c

    @property
    def gap(self) -> float:
        return self.symmetric_level - 6.0 * self.j


@dataclass(frozen=True)
class FermionConfig:
    positions: tuple

    def __post_init__(self):
        pos = tuple(tuple(int(c) for c in p) for p in self.positions)
        if len(set(pos)) != len(pos):
            raise ValueError("fermion positions must be pairwise distinct")
        object.__setattr__(self, "positions", pos)

    def __len__(self):
        return len(self.positions)

    def pair_separations(self):
        out = []
        for a in range(len(self.positions)):
            for b in range(a + 1, len(self.positions)):
                out.append(tuple(np.subtract(self.positions[b],
                                             self.positions[a])))
        return out


@dataclass
class BoundStateSolution:
    energy: float
    method: str
    overlap_symmetric: float | None = None


@dataclass
class CurvePoint:
    d: int
    e_two: float
    e_one: float
    v_eff: float
    yukawa_prediction: float


@dataclass
class PotentialCurve:
    points: list
    v0: float
    c: float
    screening_length: float
    method: str


def dispersion(k, j: float):
    """b-band dispersion 2j (cos kx + cos ky + cos kz)."""
    k = np.asarray(k, dtype=np.float64)
    return 2.0 * j * np.sum(np.cos(k), axis=-1)


_COS_SUM_CACHE: dict = {}


def _cos_sum_grid(n_m: int) -> np.ndarray:
    """cos kx + cos ky + cos kz on the periodic k-grid, flattened."""
    if n_m not in _COS_SUM_CACHE:
        c = np.cos(2.0 * np.pi * np.arange(n_m) / n_m)
        grid = (c[:, None, None] + c[None, :, None] + c[None, None, :]).ravel()
        if len(_COS_SUM_CACHE) >= 2:
            _COS_SUM_CACHE.clear()
        _COS_SUM_CACHE[n_m] = grid
    return _COS_SUM_CACHE[n_m]


def _cos_phase_grid(n_m: int, r) -> np.ndarray:
    """cos(k . r) on the periodic k-grid, flattened."""
    k = 2.0 * np.pi * np.arange(n_m) / n_m
    rx, ry, rz = (float(c) for c in r)
    angle = (k[:, None, None] * rx + k[None, :, None] * ry
             + k[None, None, :] * rz)
    return np.cos(angle).ravel()


def green_function(e: float, r, j: float, n_m: int) -> float:
    """G(E, r) = (1/n_m^3) sum_k cos(k.r) / (E - omega_k), E above band."""
    if e <= 6.0 * j:
        raise BandPoleError(f"E = {e} is not above the band top 6j = {6 * j}")
    omega = 2.0 * j * _cos_sum_grid(n_m)
    num = _cos_phase_grid(n_m, r)
    return float(np.mean(num / (e - omega)))


def localization_length(params: MediatorParams) -> float:
    """L = sqrt(j / gap) with gap = u + delta + rho_m j_c - 6j."""
    if params.gap <= 0:
        raise GapError(
            "u + delta + rho_m*j_c - 6j must be positive "
            f"(got {params.gap})")
    return float(np.sqrt(params.j / params.gap))


def yukawa_parameters(params: MediatorParams):
    """(v0, c, L) of the screened closed-form interaction."""
    length = localization_length(params)
    v0 = params.g ** 2 / (2.0 * np.pi * params.n_e * params.j)
    c = 0.25 * params.g ** 2 / params.j - params.n_e * v0 / (2.0 * length)
    return v0, c, length


def renormalized_hopping(j_f: float, n_e: int) -> float:
    """Overlap-renormalized fermion hopping j_f (n_e - 1)/n_e.

    For a single fermion the formula would give zero; the bare hopping is
    returned instead (a lone electron needs no mediator dressing).
    """
    if n_e < 1:
        raise ValueError("n_e must be >= 1")
    if n_e == 1:
        return j_f
    return j_f * (n_e - 1) / n_e


class ClosedEquation:
    """Self-consistent scalar equation for the bound-state energy.

    The structure factor |sum_m e^{ik.j_m}|^2 reduces to
    n_e + 2 sum_{m<m'} cos(k.(j_m - j_m')), so the right-hand side only
    needs momentum sums at zero and at each pair separation.
    """

    def __init__(self, config: FermionConfig, params: MediatorParams):
        if len(config) != params.n_e:
            raise ValueError("config size does not match params.n_e")
        self.params = params
        self.cos_sum = _cos_sum_grid(params.n_m)
        self.pair_cos = [_cos_phase_grid(params.n_m, d)
                         for d in config.pair_separations()]
        self._buf = np.empty_like(self.cos_sum)

    def rhs(self, e: float) -> float:
        p = self.params
        # recip = 1 / (e - 2j * cos_sum), built in place to bound memory
        recip = np.multiply(self.cos_sum, -2.0 * p.j, out=self._buf)
        recip += e
        np.divide(1.0, recip, out=recip)
        size = recip.size
        acc = p.n_e * recip.mean()
        for cosd in self.pair_cos:
            acc += 2.0 * np.dot(cosd, recip) / size
        return p.symmetric_level + (p.g ** 2 / p.n_e) * acc

    def residual(self, e: float) -> float:
        return e - self.rhs(e)


def closed_equation_rhs_via_green(config: FermionConfig,
                                  params: MediatorParams, e: float) -> float:
    """Same right-hand side, routed through `green_function` calls."""
    p = params
    acc = p.n_e * green_function(e, (0, 0, 0), p.j, p.n_m)
    for d in config.pair_separations():
        acc += 2.0 * green_function(e, d, p.j, p.n_m)
    return p.symmetric_level + (p.g ** 2 / p.n_e) * acc


def _solve_root(f, params: MediatorParams, rtol: float) -> float:
    if params.gap <= 0:
        raise GapError("gap must be positive to bracket the bound state")
    lo = 6.0 * params.j + max(1e-9 * abs(params.j), 1e-300)
    hi = params.symmetric_level + params.g ** 2 * params.n_e / params.gap
    f_lo, f_hi = f(lo), f(hi)
    if not (f_lo < 0.0 <= f_hi):
        raise BracketError(
            f"no sign change on bracket [{lo}, {hi}]", lo, hi, f_lo, f_hi)
    rtol_eff = max(rtol, 4 * np.finfo(float).eps)
    return float(brentq(f, lo, hi, rtol=rtol_eff,
                        xtol=rtol_eff * max(abs(lo), abs(hi))))


def bound_state_closed(config: FermionConfig, params: MediatorParams,
                       rtol: float = 1e-12) -> BoundStateSolution:
    """Root of E = rhs(E) located by bracketed root finding.

    rhs is monotone decreasing above the band (every pole sits below the
    band top), so the root on the bracket is unique.
    """
    if params.g == 0.0:
        return BoundStateSolution(energy=params.symmetric_level,
                                  method="closed_equation")
    eq = ClosedEquation(config, params)
    energy = _solve_root(eq.residual, params, rtol)
    return BoundStateSolution(energy=energy, method="closed_equation")


def _neighbour_matrix(n_m: int) -> np.ndarray:
    m = n_m ** 3
    adj = np.zeros((m, m))
    idx = np.arange(m).reshape(n_m, n_m, n_m)  # [z, y, x], x fastest
    for axis in range(3):
        rolled = np.roll(idx, 1, axis=axis)
        adj[idx.ravel(), rolled.ravel()] = 1.0
        adj[rolled.ravel(), idx.ravel()] = 1.0
    return adj


def bound_state_exact(config: FermionConfig, params: MediatorParams,
                      dense_limit: int = 8192) -> BoundStateSolution:
    """Dense diagonalization in the single-excitation basis.

    Basis ordering: n_m^3 a-site states then n_m^3 b-site states.  Returns
    the eigenstate above the band top maximizing overlap with the
    normalized symmetric a-state over the fermion sites.
    """
    p = params
    m = p.n_m ** 3
    dim = 2 * m
    if dim > dense_limit:
        raise MemoryError(
            f"dense basis dimension {dim} exceeds limit {dense_limit}")
    flat = [x + p.n_m * (y + p.n_m * z) for x, y, z in config.positions]
    h = np.zeros((dim, dim))
    # a-sector: detuning, on-site repulsion at fermion sites, cavity rank-one
    np.fill_diagonal(h[:m, :m], p.delta)
    for f in flat:
        h[f, f] += p.u
    h[:m, :m] += p.j_c / m
    # b-sector: periodic nearest-neighbour hopping
    h[m:, m:] = p.j * _neighbour_matrix(p.n_m)
    # a-b coupling on site
    h[:m, m:][np.diag_indices(m)] = p.g
    h[m:, :m][np.diag_indices(m)] = p.g
    lo = 6.0 * p.j + 1e-12 * max(1.0, abs(p.j))
    vals, vecs = scipy.linalg.eigh(h, subset_by_value=(lo, np.inf))
    if vals.size == 0:
        raise BracketError("no state above the band top", lo, np.inf,
                           np.nan, np.nan)
    sym = np.zeros(dim)
    sym[flat] = 1.0 / np.sqrt(len(flat))
    overlaps = (vecs.T @ sym) ** 2
    best = int(np.argmax(overlaps))
    return BoundStateSolution(energy=float(vals[best]), method="exact_diag",
                              overlap_symmetric=float(overlaps[best]))


def two_fermion_config(n_m: int, d: int) -> FermionConfig:
    """Axis-aligned pair centred on the grid: (m - ceil(d/2), m, m) and
    (m + floor(d/2), m, m)."""
    m = n_m // 2
    return FermionConfig(((m - (d + 1) // 2, m, m), (m + d // 2, m, m)))


def effective_interaction_curve(d_values, params: MediatorParams,
                                method: str = "closed",
                                rtol: float = 1e-12) -> PotentialCurve:
    """V_eff(d) = E_2(d) - E_1, with the single-fermion reference at the
    grid centre; the screened-form prediction (v0/d) exp(-d/L) rides along
    for comparison (its constant offset is reported separately)."""
    if params.n_e != 2:
        raise ValueError("interaction curve is defined for two fermions")
    v0, c, length = yukawa_parameters(params)
    solver = bound_state_closed if method == "closed" else bound_state_exact
    m = params.n_m // 2
    one = MediatorParams(j=params.j, j_c=params.j_c, u=params.u,
                         delta=params.delta, g=params.g, j_f=params.j_f,
                         n_m=params.n_m, n_e=1)
    kwargs = {"rtol": rtol} if method == "closed" else {}
    e_one = solver(FermionConfig(((m, m, m),)), one, **kwargs).energy
    points = []
    for d in d_values:
        d = int(d)
        e_two = solver(two_fermion_config(params.n_m, d), params,
                       **kwargs).energy
        points.append(CurvePoint(
            d=d, e_two=e_two, e_one=e_one, v_eff=e_two - e_one,
            yukawa_prediction=(v0 / d) * np.exp(-d / length)))
    return PotentialCurve(points=points, v0=v0, c=c,
                          screening_length=length, method=method)


@dataclass
class ConditionReport:
    """Margin ratio (dominant side / subordinate side) per inequality."""

    margins: dict
    satisfied: dict
    threshold: float

    @property
    def all_satisfied(self) -> bool:
        return all(self.satisfied.values())


def check_conditions(params: MediatorParams, lattice_n: int, t_f: float,
                     v0: float, threshold: float = 10.0) -> ConditionReport:
    """Dimensionless margins of the validity inequalities (a)-(e)."""
    p = params
    length = localization_length(p)
    bohr = 2.0 * t_f / v0
    margins = {
        "a_lower": bohr / 1.0,
        "a_upper": (lattice_n / p.n_e ** (1.0 / 3.0)) / bohr,
        "b": p.u / p.j_c,
        "c_jf": (p.j_c * p.rho_m / np.sqrt(p.n_e)) / p.j_f,
        "c_v0": (p.j_c * p.rho_m / np.sqrt(p.n_e)) / v0,
        "d": (p.j * (lattice_n / length) ** 2) / (v0 * p.n_e ** (7.0 / 3.0)),
        "e_lower": length / lattice_n,
        "e_upper": p.n_m / length,
    }
    satisfied = {k: bool(v >= threshold) for k, v in margins.items()}
    return ConditionReport(margins=margins, satisfied=satisfied,
                           threshold=threshold)
