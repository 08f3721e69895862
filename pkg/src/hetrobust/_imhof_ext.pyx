# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loop of the Imhof integral on a logarithmic grid."""

import numpy as np
cimport numpy as cnp
from libc.math cimport atan, log1p, exp, sin

cnp.import_array()


cdef double _row_sum(const double* lam, const double* ncp, Py_ssize_t p,
                     double t_lo, double h, Py_ssize_t nsteps) noexcept nogil:
    cdef Py_ssize_t s, j
    cdef double t, u, lu, lu2, theta, logrho, total = 0.0, w, f
    for s in range(nsteps + 1):
        t = t_lo + h * s
        u = exp(t)
        theta = 0.0
        logrho = 0.0
        for j in range(p):
            lu = lam[j] * u
            lu2 = lu * lu
            theta += atan(lu) + ncp[j] * lu / (1.0 + lu2)
            logrho += 0.5 * log1p(lu2) + ncp[j] * lu2 / (1.0 + lu2)
        f = sin(0.5 * theta) * exp(-0.5 * logrho)
        w = 0.5 if (s == 0 or s == nsteps) else 1.0
        total += w * f
    return total


def integrate_rows(double[:, ::1] lam, double[:, ::1] ncp, Py_ssize_t[::1] counts,
                   double[::1] t_lo, Py_ssize_t[::1] nsteps, double[::1] h):
    """Trapezoid sums of sin(theta)/rho over each row's grid.

    Row ``i`` uses the first ``counts[i]`` entries of ``lam[i]`` and
    ``ncp[i]`` and the grid ``t_lo[i] + h[i] * s`` for ``s = 0..nsteps[i]``.
    """
    cdef Py_ssize_t m = lam.shape[0]
    cdef Py_ssize_t i
    out = np.zeros(m, dtype=np.float64)
    cdef double[::1] res = out
    with nogil:
        for i in range(m):
            if nsteps[i] >= 0 and counts[i] > 0:
                res[i] = _row_sum(&lam[i, 0], &ncp[i, 0], counts[i], t_lo[i], h[i], nsteps[i])
    return out
