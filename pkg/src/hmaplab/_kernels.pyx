# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled red-black relaxation sweep (see ``hmaplab.kernels``)."""

from libc.math cimport sqrt


def relax(double[:, ::1] u, const long long[:, ::1] nbr, const double[:, ::1] w,
          const long long[::1] order, Py_ssize_t n_first, double energy, double tol, int max_sweeps,
          double[::1] history):
    """Run up to ``max_sweeps`` Gauss-Seidel sweeps in place.

    Each node is replaced by the normalized weighted sum of its six neighbors,
    which lowers the discrete energy by exactly ``2 * (|S| - u.S)``. Stops after
    the first sweep whose decrease is below ``tol * energy``. The running energy
    after each sweep goes to ``history``; returns the number of sweeps done.
    ``n_first`` (size of the first color class) is only used by the fallback.
    """
    cdef Py_ssize_t n = order.shape[0]
    cdef Py_ssize_t s, m, i, j, k
    cdef double sx, sy, sz, ww, norm, dec, d
    cdef int done = 0
    with nogil:
        for s in range(max_sweeps):
            dec = 0.0
            for m in range(n):
                i = order[m]
                sx = 0.0
                sy = 0.0
                sz = 0.0
                for k in range(6):
                    j = nbr[i, k]
                    ww = w[i, k]
                    sx = sx + ww * u[j, 0]
                    sy = sy + ww * u[j, 1]
                    sz = sz + ww * u[j, 2]
                norm = sqrt(sx * sx + sy * sy + sz * sz)
                if norm > 0.0:
                    d = 2.0 * (norm - (u[i, 0] * sx + u[i, 1] * sy + u[i, 2] * sz))
                    if d > 0.0:
                        dec += d
                    u[i, 0] = sx / norm
                    u[i, 1] = sy / norm
                    u[i, 2] = sz / norm
            energy -= dec
            if energy < 0.0:
                energy = 0.0
            history[s] = energy
            done = s + 1
            if dec <= tol * energy:
                break
    return done
