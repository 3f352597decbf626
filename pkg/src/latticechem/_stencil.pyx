# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled nearest-neighbour stencil for the lattice Hamiltonian.

Arrays are C-contiguous (z, y, x) views of flat x-fastest fields.
"""


def apply_stencil(double[:, :, ::1] psi, double[:, :, ::1] w, double t,
                  bint periodic, double[:, :, ::1] out):
    cdef Py_ssize_t n = psi.shape[0]
    cdef Py_ssize_t z, y, x
    cdef double acc
    for z in range(n):
        for y in range(n):
            for x in range(n):
                acc = 0.0
                if x > 0:
                    acc += psi[z, y, x - 1]
                elif periodic:
                    acc += psi[z, y, n - 1]
                if x < n - 1:
                    acc += psi[z, y, x + 1]
                elif periodic:
                    acc += psi[z, y, 0]
                if y > 0:
                    acc += psi[z, y - 1, x]
                elif periodic:
                    acc += psi[z, n - 1, x]
                if y < n - 1:
                    acc += psi[z, y + 1, x]
                elif periodic:
                    acc += psi[z, 0, x]
                if z > 0:
                    acc += psi[z - 1, y, x]
                elif periodic:
                    acc += psi[n - 1, y, x]
                if z < n - 1:
                    acc += psi[z + 1, y, x]
                elif periodic:
                    acc += psi[0, y, x]
                out[z, y, x] = -t * acc - w[z, y, x] * psi[z, y, x]
