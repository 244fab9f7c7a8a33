# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Euler sweeps for scalar (n = d = 1) models.

Each function advances a block of paths ``[p0, p1)`` through every time step
and releases the GIL, so disjoint path blocks can run on separate threads.
Arithmetic is written in the same order as the numpy fallback in
``_kernels_py`` and compiled without FMA contraction, so both produce
identical bits.
"""


def affine_sdde_sweep(double[:, ::1] X, const double[:, ::1] u, const double[:, ::1] dW,
                      double dt, Py_ssize_t m,
                      double a0, double a1, double a2, double a3,
                      double b0, double b1, double b2, double b3,
                      Py_ssize_t p0, Py_ssize_t p1):
    cdef Py_ssize_t n_steps = dW.shape[1]
    cdef Py_ssize_t p, i, j
    cdef double x, xd, uu, drift, diff
    with nogil:
        for p in range(p0, p1):
            for i in range(n_steps):
                j = i + m
                x = X[p, j]
                xd = X[p, j - m]
                uu = u[p, i]
                drift = a0 + a1 * x + a2 * xd + a3 * uu
                diff = b0 + b1 * x + b2 * xd + b3 * uu
                X[p, j + 1] = x + drift * dt + diff * dW[p, i]


def linear_sweep(double[:, ::1] y, const double[:, ::1] a, const double[:, ::1] adv,
                 const double[:, ::1] c, const double[:, ::1] e, const double[:, ::1] g,
                 const double[:, ::1] dW, double dt, Py_ssize_t p0, Py_ssize_t p1):
    cdef Py_ssize_t n_steps = dW.shape[1]
    cdef Py_ssize_t p, i
    cdef double yi
    with nogil:
        for p in range(p0, p1):
            for i in range(n_steps):
                yi = y[p, i]
                y[p, i + 1] = (yi + (a[p, i] * yi + adv[p, i] + c[p, i]) * dt
                               + (e[p, i] * yi + g[p, i]) * dW[p, i])
