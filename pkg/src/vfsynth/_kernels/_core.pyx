# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: CSTR rollout and adjoint sweep.

Mirrors fallback.py expression for expression; keep the two in sync.
"""

from libc.math cimport exp

import numpy as np


cdef inline double _box_excess(double x, double lo, double hi) nogil:
    if x < lo:
        return x - lo
    if x > hi:
        return x - hi
    return 0.0


def rollout_fine(x0, u_seq, double h, int substeps, params):
    cdef double tau = params[0]
    cdef double k_rate = params[1]
    cdef double b_act = params[2]
    cdef double x_f = params[3]
    cdef double x_c = params[4]
    cdef double a_coef = params[5]

    cdef double[::1] u = np.ascontiguousarray(u_seq, dtype=np.float64)
    cdef int n_int = u.shape[0]
    out_arr = np.empty((n_int * substeps + 1, 2))
    cdef double[:, ::1] out = out_arr
    cdef double x1 = x0[0]
    cdef double x2 = x0[1]
    cdef double uu, r, d1, d2
    cdef int k, j, idx
    out[0, 0] = x1
    out[0, 1] = x2
    idx = 1
    with nogil:
        for k in range(n_int):
            uu = u[k]
            for j in range(substeps):
                r = k_rate * x1 * exp(-b_act / x2)
                d1 = (1.0 - x1) / tau - r
                d2 = (x_f - x2) / tau + r - a_coef * uu * (x2 - x_c)
                x1 = x1 + h * d1
                x2 = x2 + h * d2
                out[idx, 0] = x1
                out[idx, 1] = x2
                idx += 1
    return out_arr


def stage_value_and_gradient(
    xs_fine,
    u_seq,
    double h,
    int substeps,
    params,
    double q1,
    double q2,
    double r_w,
    double xsp1,
    double xsp2,
    double usp,
    double rho,
    double xlo1,
    double xlo2,
    double xhi1,
    double xhi2,
    term_grad,
):
    cdef double tau = params[0]
    cdef double k_rate = params[1]
    cdef double b_act = params[2]
    cdef double x_f = params[3]
    cdef double x_c = params[4]
    cdef double a_coef = params[5]

    cdef double[:, ::1] xs = np.ascontiguousarray(xs_fine, dtype=np.float64)
    cdef double[::1] u = np.ascontiguousarray(u_seq, dtype=np.float64)
    cdef int n_int = u.shape[0]
    grad_arr = np.zeros(n_int)
    cdef double[::1] grad = grad_arr

    cdef double value = 0.0
    cdef double dx1, dx2, du, e1, e2
    cdef int k, j
    for k in range(n_int):
        dx1 = xs[k * substeps, 0] - xsp1
        dx2 = xs[k * substeps, 1] - xsp2
        du = u[k] - usp
        value += q1 * dx1 * dx1 + q2 * dx2 * dx2 + r_w * du * du
    if rho != 0.0:
        for k in range(1, n_int + 1):
            e1 = _box_excess(xs[k * substeps, 0], xlo1, xhi1)
            e2 = _box_excess(xs[k * substeps, 1], xlo2, xhi2)
            value += rho * (e1 * e1 + e2 * e2)

    cdef double xN1 = xs[n_int * substeps, 0]
    cdef double xN2 = xs[n_int * substeps, 1]
    cdef double lam1 = term_grad[0] + 2.0 * rho * _box_excess(xN1, xlo1, xhi1)
    cdef double lam2 = term_grad[1] + 2.0 * rho * _box_excess(xN2, xlo2, xhi2)
    cdef double uu, gu, x1, x2, ex, dr_dx1, dr_dx2
    cdef double a11, a12, a21, a22, b2, new1, new2
    with nogil:
        for k in range(n_int - 1, -1, -1):
            uu = u[k]
            gu = 0.0
            for j in range(substeps - 1, -1, -1):
                x1 = xs[k * substeps + j, 0]
                x2 = xs[k * substeps + j, 1]
                ex = exp(-b_act / x2)
                dr_dx1 = k_rate * ex
                dr_dx2 = k_rate * x1 * ex * (b_act / (x2 * x2))
                a11 = 1.0 + h * (-1.0 / tau - dr_dx1)
                a12 = h * (-dr_dx2)
                a21 = h * dr_dx1
                a22 = 1.0 + h * (-1.0 / tau + dr_dx2 - a_coef * uu)
                b2 = h * (-a_coef * (x2 - x_c))
                gu += b2 * lam2
                new1 = a11 * lam1 + a21 * lam2
                new2 = a12 * lam1 + a22 * lam2
                lam1 = new1
                lam2 = new2
            grad[k] = gu + 2.0 * r_w * (uu - usp)
            x1 = xs[k * substeps, 0]
            x2 = xs[k * substeps, 1]
            lam1 += 2.0 * q1 * (x1 - xsp1)
            lam2 += 2.0 * q2 * (x2 - xsp2)
            if k >= 1:
                lam1 += 2.0 * rho * _box_excess(x1, xlo1, xhi1)
                lam2 += 2.0 * rho * _box_excess(x2, xlo2, xhi2)
    return value, grad_arr, np.array([lam1, lam2])


def interval_rollout_jac(x0, double u, double h, int substeps, params):
    cdef double tau = params[0]
    cdef double k_rate = params[1]
    cdef double b_act = params[2]
    cdef double x_f = params[3]
    cdef double x_c = params[4]
    cdef double a_coef = params[5]

    cdef double x1 = x0[0]
    cdef double x2 = x0[1]
    cdef double p11 = 1.0, p12 = 0.0, p21 = 0.0, p22 = 1.0
    cdef double bb1 = 0.0, bb2 = 0.0
    cdef double ex, dr_dx1, dr_dx2, a11, a12, a21, a22, bu2
    cdef double n11, n12, n21, n22, nb1, nb2, r, d1, d2
    cdef int j
    with nogil:
        for j in range(substeps):
            ex = exp(-b_act / x2)
            dr_dx1 = k_rate * ex
            dr_dx2 = k_rate * x1 * ex * (b_act / (x2 * x2))
            a11 = 1.0 + h * (-1.0 / tau - dr_dx1)
            a12 = h * (-dr_dx2)
            a21 = h * dr_dx1
            a22 = 1.0 + h * (-1.0 / tau + dr_dx2 - a_coef * u)
            bu2 = h * (-a_coef * (x2 - x_c))
            n11 = a11 * p11 + a12 * p21
            n12 = a11 * p12 + a12 * p22
            n21 = a21 * p11 + a22 * p21
            n22 = a21 * p12 + a22 * p22
            nb1 = a11 * bb1 + a12 * bb2
            nb2 = a21 * bb1 + a22 * bb2 + bu2
            p11 = n11; p12 = n12; p21 = n21; p22 = n22
            bb1 = nb1; bb2 = nb2
            r = k_rate * x1 * ex
            d1 = (1.0 - x1) / tau - r
            d2 = (x_f - x2) / tau + r - a_coef * u * (x2 - x_c)
            x1 = x1 + h * d1
            x2 = x2 + h * d2
    return (
        np.array([x1, x2]),
        np.array([[p11, p12], [p21, p22]]),
        np.array([bb1, bb2]),
    )
