"""Two-electron lattice problem: orbital basis construction (two-center
eigenstates + mean-field orbitals), pair-interaction integrals via
zero-padded FFT convolution, and the projected symmetric-subspace solve.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft
import scipy.linalg

from latticechem import _kernels
from latticechem.lattice import (
    Boundary,
    ChemistryParams,
    LatticeSpec,
    PotentialKind,
    h2_nuclei_positions,
    nuclear_field,
    potential_eval,
)
from latticechem.single_particle import (
    OrbitalField,
    Spectrum,
    lowest_eigenpairs,
)


@dataclass
class OrbitalBasis:
    """Orthonormalized single-particle basis over the grid.

    `fields` has shape (n, N^3); provenance tags track which input orbital
    each column descends from, and `overlap_condition` is the smallest
    retained overlap eigenvalue.
    """

    fields: np.ndarray
    lattice: LatticeSpec
    provenance: list
    overlap_condition: float
    dropped: int = 0

    @property
    def n(self) -> int:
        return self.fields.shape[0]

    def as_fields(self):
        return [OrbitalField(f, self.lattice) for f in self.fields]


class EeIntegralTensor:
    """Canonical storage of the pair-interaction integrals.

    A quadruple (i, j, r, s) maps to the unordered pair of unordered
    products {i, r} and {j, s}; every symmetry image therefore reads the
    same stored entry.  Canonical count is P(P+1)/2 with P = n(n+1)/2,
    below the n^2(n^2+3)/4 bound.
    """

    def __init__(self, n: int, matrix: np.ndarray):
        p = n * (n + 1) // 2
        if matrix.shape != (p, p):
            raise ValueError("matrix shape does not match basis size")
        self.n = n
        upper = np.triu(matrix)
        self.matrix = upper + upper.T - np.diag(np.diag(upper))

    def pair_index(self, i: int, r: int) -> int:
        i, r = min(i, r), max(i, r)
        # pairs ordered (0,0), (0,1), ..., (0,n-1), (1,1), ...
        return i * self.n - i * (i - 1) // 2 + (r - i)

    @property
    def canonical_count(self) -> int:
        p = self.n * (self.n + 1) // 2
        return p * (p + 1) // 2

    def get(self, i, j, r, s) -> float:
        p = self.pair_index(i, r)
        q = self.pair_index(j, s)
        return float(self.matrix[p, q])

    def dense(self) -> np.ndarray:
        """Full (n, n, n, n) expansion indexed [i, j, r, s]."""
        n = self.n
        pair = np.empty((n, n), dtype=np.intp)
        for i in range(n):
            for r in range(n):
                pair[i, r] = self.pair_index(i, r)
        return self.matrix[pair[:, None, :, None], pair[None, :, None, :]]


@dataclass
class MolecularCurvePoint:
    d_lattice: int
    d_atomic: float
    ratio: float
    e_electronic: float       # Ry, raw (includes any constant kernel offset)
    e_electronic_noc: float   # Ry, with the kernel offset subtracted
    e_total: float            # Ry, nuclear repulsion added when enabled
    basis_size: int
    hf_sweeps: int


_KERNEL_CACHE: dict = {}


def _kernel_fft(lattice: LatticeSpec, potential: PotentialKind, v0: float):
    """rfftn of the real-space pair kernel on the doubled grid.

    The kernel is tabulated with wrapped displacement coordinates so the
    circular convolution on the doubled grid reproduces the open-boundary
    linear convolution exactly.
    """
    key = (lattice.n, potential.kind, potential.screening_length,
           potential.offset, v0)
    if key not in _KERNEL_CACHE:
        n = lattice.n
        delta = np.arange(2 * n, dtype=np.float64)
        delta[n:] -= 2 * n
        r = np.sqrt(delta[:, None, None] ** 2 + delta[None, :, None] ** 2
                    + delta[None, None, :] ** 2)
        kernel = potential_eval(potential, v0, r)
        if len(_KERNEL_CACHE) >= 4:
            _KERNEL_CACHE.clear()
        _KERNEL_CACHE[key] = scipy.fft.rfftn(kernel)
    return _KERNEL_CACHE[key]


def ee_convolution(density: np.ndarray, potential: PotentialKind,
                   lattice: LatticeSpec, v0: float) -> np.ndarray:
    """(V * density)(i) = sum_j V(|i - j|) density(j), open boundary.

    The density is zero-padded onto the doubled grid before the transform,
    so there is no periodic wrap-around contribution.
    """
    n = lattice.n
    grid = np.ravel(density).reshape(n, n, n)
    padded = np.zeros((2 * n, 2 * n, 2 * n))
    padded[:n, :n, :n] = grid
    vk = _kernel_fft(lattice, potential, v0)
    conv = scipy.fft.irfftn(scipy.fft.rfftn(padded) * vk,
                            s=(2 * n, 2 * n, 2 * n))
    return conv[:n, :n, :n].reshape(-1).copy()


def ee_integrals(basis: OrbitalBasis, potential: PotentialKind,
                 v0: float) -> EeIntegralTensor:
    """Pair-interaction integrals h_{ijrs} over an orthonormal basis.

    Each canonical pair-product rho_{ir} = phi_i * phi_r is convolved with
    the kernel once; the Gram matrix of products against convolved
    products holds every canonical value.
    """
    n = basis.n
    lattice = basis.lattice
    pairs = [(i, r) for i in range(n) for r in range(i, n)]
    rho = np.empty((len(pairs), lattice.n_sites))
    for p, (i, r) in enumerate(pairs):
        rho[p] = basis.fields[i] * basis.fields[r]
    conv = np.empty_like(rho)
    for p in range(len(pairs)):
        conv[p] = ee_convolution(rho[p], potential, lattice, v0)
    matrix = rho @ conv.T
    return EeIntegralTensor(n, matrix)


def one_body_matrix(basis: OrbitalBasis, params: ChemistryParams,
                    w: np.ndarray | None = None) -> np.ndarray:
    """<phi_i | H0 | phi_r> for the kinetic + nuclear one-electron part."""
    lattice = basis.lattice
    if w is None:
        w = nuclear_field(lattice, params)
    periodic = lattice.boundary == Boundary.PERIODIC
    applied = np.empty_like(basis.fields)
    for i in range(basis.n):
        applied[i] = _kernels.apply_stencil(basis.fields[i], w, params.t_f,
                                            lattice.n, periodic)
    h1 = basis.fields @ applied.T
    return 0.5 * (h1 + h1.T)


def hartree_fock(lattice: LatticeSpec, params: ChemistryParams,
                 potential: PotentialKind, n2: int, v0_ee: float | None = None,
                 repulsion_scale: float = 1.0, tol_energy: float | None = None,
                 tol_density: float = 1e-8, max_sweeps: int = 200,
                 eig_tol: float = 1e-10, seed: int = 7):
    """Self-consistent mean-field orbitals.

    Starting from the one-electron ground state, each sweep convolves the
    current density with the pair kernel, adds it to the one-electron
    Hamiltonian, and re-solves for the lowest orbital; exchange is
    neglected.  Converged when successive orbital energies move less than
    `tol_energy` (default 1e-9 in Rydberg-equivalent units) and the
    density change stays below `tol_density` in L2.  Damping (0.5 mixing)
    engages automatically if the energy oscillates.

    Returns (Spectrum of the n2 lowest mean-field orbitals, info dict).
    """
    if v0_ee is None:
        v0_ee = params.v0
    if tol_energy is None:
        tol_energy = 1e-9 * params.rydberg
    w = nuclear_field(lattice, params)
    ground = lowest_eigenpairs(lattice, params, 1, tol=eig_tol, seed=seed, w=w)
    phi = ground.orbitals[0].values
    density = phi ** 2
    energy = ground.energies[0]
    periodic = lattice.boundary == Boundary.PERIODIC

    mixing = False
    prev_delta = None
    sweeps = 0
    converged = False
    for sweeps in range(1, max_sweeps + 1):
        vee = repulsion_scale * ee_convolution(density, potential, lattice,
                                               v0_ee)
        w_eff = w - vee  # stencil applies -w_eff, so vee enters with +
        spec1 = lowest_eigenpairs(lattice, params, 1, tol=eig_tol, seed=seed,
                                  w=w_eff)
        new_energy = spec1.energies[0]
        new_density = spec1.orbitals[0].values ** 2
        delta = new_energy - energy
        d_density = np.linalg.norm(new_density - density)
        if prev_delta is not None and delta * prev_delta < 0 \
                and abs(delta) > 0.5 * abs(prev_delta):
            mixing = True
        prev_delta = delta
        if mixing:
            density = 0.5 * new_density + 0.5 * density
        else:
            density = new_density
        energy = new_energy
        if abs(delta) < tol_energy and d_density < tol_density:
            converged = True
            break
    if not converged:
        raise RuntimeError(
            f"mean-field iteration did not converge in {max_sweeps} sweeps; "
            f"last energy drift {prev_delta}")
    vee = repulsion_scale * ee_convolution(density, potential, lattice, v0_ee)
    spec = lowest_eigenpairs(lattice, params, max(n2, 1), tol=eig_tol,
                             seed=seed, w=w - vee)
    info = {"sweeps": sweeps, "converged": converged,
            "orbital_energies": spec.energies.copy()}
    return spec, info


def build_basis(lattice: LatticeSpec, params: ChemistryParams,
                h2p_spectrum: Spectrum, hf_spectrum: Spectrum | None,
                n1: int, n2: int, floor: float = 1e-8) -> OrbitalBasis:
    """Concatenate the two orbital sets and orthonormalize.

    Symmetric (Loewdin) orthogonalization when the overlap spectrum is
    well conditioned; near-duplicate directions below `floor` are dropped
    via canonical orthogonalization instead, and the drop is reported in
    the provenance.
    """
    cols = []
    provenance = []
    for i in range(n1):
        cols.append(h2p_spectrum.orbitals[i].values)
        provenance.append(f"h2plus_level_{i}")
    for i in range(n2):
        cols.append(hf_spectrum.orbitals[i].values)
        provenance.append(f"hartree_fock_iterate_{i}")
    a = np.stack(cols, axis=0)  # (m, N^3)
    s = a @ a.T
    evals, u = scipy.linalg.eigh(s)
    keep = evals >= floor
    dropped = int(np.sum(~keep))
    if dropped == 0:
        # A^T S^{-1/2}: stays closest to the original orbitals
        s_inv_sqrt = (u / np.sqrt(evals)) @ u.T
        fields = s_inv_sqrt @ a
    else:
        sel = u[:, keep] / np.sqrt(evals[keep])
        fields = sel.T @ a
        provenance = [f"canonical_{i}" for i in range(fields.shape[0])]
    if fields.shape[0] < 2:
        raise ValueError("orthonormal basis must keep at least two orbitals")
    return OrbitalBasis(fields=fields, lattice=lattice, provenance=provenance,
                        overlap_condition=float(evals[keep].min()),
                        dropped=dropped)


def _symmetric_map(n: int):
    """Transformation from the n^2 product basis to the symmetric block."""
    states = [(i, j) for i in range(n) for j in range(i, n)]
    t = np.zeros((n * n, len(states)))
    for col, (i, j) in enumerate(states):
        if i == j:
            t[i * n + j, col] = 1.0
        else:
            t[i * n + j, col] = 1.0 / np.sqrt(2.0)
            t[j * n + i, col] = 1.0 / np.sqrt(2.0)
    return states, t


def assemble_and_solve(basis: OrbitalBasis, tensor: EeIntegralTensor,
                       h1: np.ndarray, repulsion_scale: float = 1.0):
    """Projected two-particle Hamiltonian on the symmetric subspace.

    One-body part delta_js h1_ir + delta_ir h1_js, two-body part scaled by
    `repulsion_scale`; returns (ground energy, symmetric n x n coefficient
    matrix of the ground eigenvector).
    """
    n = basis.n
    if n < 2:
        raise ValueError("basis too small (n < 2)")
    if tensor.n != n:
        raise ValueError("tensor built on a different basis size")
    if not np.array_equal(tensor.matrix, tensor.matrix.T):
        raise ValueError("non-symmetric tensor input rejected")
    eye = np.eye(n)
    h_full = np.kron(h1, eye) + np.kron(eye, h1)
    h_full += repulsion_scale * tensor.dense().reshape(n * n, n * n)
    _, t = _symmetric_map(n)
    h_sym = t.T @ h_full @ t
    h_sym = 0.5 * (h_sym + h_sym.T)
    evals, evecs = scipy.linalg.eigh(h_sym)
    ground = evecs[:, 0]
    coeff = (t @ ground).reshape(n, n)
    coeff = 0.5 * (coeff + coeff.T)
    return float(evals[0]), coeff


def h2_params(n: int, d: int, ratio: float, n_e: int = 2) -> ChemistryParams:
    left, right = h2_nuclei_positions(n, d)
    return ChemistryParams(t_f=1.0, v0=1.0 / ratio,
                           nuclei=((1.0, left), (1.0, right)), n_e=n_e)


def h2plus_orbitals(lattice: LatticeSpec, params: ChemistryParams, n1: int,
                    tol: float = 1e-10, seed: int = 7) -> Spectrum:
    """n1 lowest one-electron eigenstates of the two-center Hamiltonian."""
    if len(params.nuclei) != 2:
        raise ValueError("expected two nuclei")
    return lowest_eigenpairs(lattice, params, n1, tol=tol, seed=seed)


@dataclass
class CurveFailure:
    d_lattice: int
    error: str


def molecular_curve(d_values, n: int, schedule, potential: PotentialKind,
                    repulsion_scale: float = 1.0, n1: int = 8, n2: int = 8,
                    nuclear_repulsion: bool = True, eig_tol: float = 1e-10,
                    basis_floor: float = 1e-8):
    """Molecular potential E(d) on an N^3 lattice.

    For each separation d (sites) the ratio t_f/v0 comes from `schedule`,
    nuclei are centred with the shared half-site offset, the basis is n1
    two-center eigenstates plus n2 mean-field orbitals, and the projected
    symmetric-subspace ground energy is shifted by 12 t_f and expressed in
    Ry.  Nuclear repulsion 2/(d/a0) Ry is added when enabled.  Per-point
    failures are recorded and the curve continues.
    """
    from latticechem.planner import schedule_ratio

    lattice = LatticeSpec(n)
    points, failures = [], []
    for d in d_values:
        d = int(d)
        try:
            ratio = schedule_ratio(schedule, d)
            params = h2_params(n, d, ratio)
            h2p = h2plus_orbitals(lattice, params, max(n1, 1), tol=eig_tol)
            sweeps = 0
            hf = None
            if n2 > 0:
                hf, info = hartree_fock(lattice, params, potential, n2,
                                        repulsion_scale=repulsion_scale,
                                        eig_tol=eig_tol)
                sweeps = info["sweeps"]
            basis = build_basis(lattice, params, h2p, hf, n1, n2,
                                floor=basis_floor)
            tensor = ee_integrals(basis, potential, params.v0)
            h1 = one_body_matrix(basis, params)
            e0, _ = assemble_and_solve(basis, tensor, h1,
                                       repulsion_scale=repulsion_scale)
            ry = params.rydberg
            e_elec = (e0 + 12.0 * params.t_f) / ry
            e_noc = e_elec - repulsion_scale * potential.offset / ry
            d_atomic = d / params.bohr_radius
            e_total = e_elec + (2.0 / d_atomic if nuclear_repulsion else 0.0)
            points.append(MolecularCurvePoint(
                d_lattice=d, d_atomic=d_atomic, ratio=ratio,
                e_electronic=e_elec, e_electronic_noc=e_noc, e_total=e_total,
                basis_size=basis.n, hf_sweeps=sweeps))
        except Exception as exc:  # per-point failure, curve continues
            failures.append(CurveFailure(d_lattice=d, error=str(exc)))
    return points, failures
