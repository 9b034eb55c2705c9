"""Pure-Python reference kernels.

Operation order matches the compiled extension expression for expression so
the two backends produce bit-identical trajectories and gradients.
"""

from math import exp

import numpy as np


def rollout_fine(x0, u_seq, h, substeps, params):
    """Integrate the CSTR over len(u_seq) control intervals.

    Each interval applies `substeps` explicit Euler steps of length `h` with
    the input held constant. Returns every fine-grid state, shape
    (len(u_seq)*substeps + 1, 2).

    `params` is the 6-tuple (tau, k_rate, b_act, x_f, x_c, a_coef).
    """
    tau, k_rate, b_act, x_f, x_c, a_coef = params
    n_int = len(u_seq)
    out = np.empty((n_int * substeps + 1, 2))
    x1 = float(x0[0])
    x2 = float(x0[1])
    out[0, 0] = x1
    out[0, 1] = x2
    idx = 1
    for k in range(n_int):
        u = float(u_seq[k])
        for _ in range(substeps):
            r = k_rate * x1 * exp(-b_act / x2)
            d1 = (1.0 - x1) / tau - r
            d2 = (x_f - x2) / tau + r - a_coef * u * (x2 - x_c)
            x1 = x1 + h * d1
            x2 = x2 + h * d2
            out[idx, 0] = x1
            out[idx, 1] = x2
            idx += 1
    return out


def stage_value_and_gradient(
    xs_fine,
    u_seq,
    h,
    substeps,
    params,
    q1,
    q2,
    r_w,
    xsp1,
    xsp2,
    usp,
    rho,
    xlo1,
    xlo2,
    xhi1,
    xhi2,
    term_grad,
):
    """Stage + soft-penalty objective and its adjoint gradient w.r.t. inputs.

    The objective accumulated here is

        sum_k q.(x_k - xsp)^2 + r_w (u_k - usp)^2     for k = 0..N-1
      + rho * box_excess(x_k)^2                        for k = 1..N

    with the terminal value itself left to the caller; `term_grad` is the
    gradient of the caller's terminal cost at x_N and is folded into the
    backward sweep. Returns (stage_value, grad_u, adjoint_at_x0).
    """
    tau, k_rate, b_act, x_f, x_c, a_coef = params
    n_int = len(u_seq)
    grad = np.zeros(n_int)

    value = 0.0
    for k in range(n_int):
        dx1 = xs_fine[k * substeps, 0] - xsp1
        dx2 = xs_fine[k * substeps, 1] - xsp2
        du = u_seq[k] - usp
        value += q1 * dx1 * dx1 + q2 * dx2 * dx2 + r_w * du * du
    if rho != 0.0:
        for k in range(1, n_int + 1):
            e1 = _box_excess(xs_fine[k * substeps, 0], xlo1, xhi1)
            e2 = _box_excess(xs_fine[k * substeps, 1], xlo2, xhi2)
            value += rho * (e1 * e1 + e2 * e2)

    # Backward sweep. lam is d(total)/d(x) at the current fine-grid point.
    xN1 = xs_fine[n_int * substeps, 0]
    xN2 = xs_fine[n_int * substeps, 1]
    lam1 = float(term_grad[0]) + 2.0 * rho * _box_excess(xN1, xlo1, xhi1)
    lam2 = float(term_grad[1]) + 2.0 * rho * _box_excess(xN2, xlo2, xhi2)
    for k in range(n_int - 1, -1, -1):
        u = float(u_seq[k])
        gu = 0.0
        for j in range(substeps - 1, -1, -1):
            x1 = xs_fine[k * substeps + j, 0]
            x2 = xs_fine[k * substeps + j, 1]
            ex = exp(-b_act / x2)
            # Jacobian of the Euler step x+ = x + h*g(x,u)
            dr_dx1 = k_rate * ex
            dr_dx2 = k_rate * x1 * ex * (b_act / (x2 * x2))
            a11 = 1.0 + h * (-1.0 / tau - dr_dx1)
            a12 = h * (-dr_dx2)
            a21 = h * dr_dx1
            a22 = 1.0 + h * (-1.0 / tau + dr_dx2 - a_coef * u)
            b2 = h * (-a_coef * (x2 - x_c))
            gu += b2 * lam2
            new1 = a11 * lam1 + a21 * lam2
            new2 = a12 * lam1 + a22 * lam2
            lam1 = new1
            lam2 = new2
        grad[k] = gu + 2.0 * r_w * (u - usp)
        x1 = xs_fine[k * substeps, 0]
        x2 = xs_fine[k * substeps, 1]
        lam1 += 2.0 * q1 * (x1 - xsp1)
        lam2 += 2.0 * q2 * (x2 - xsp2)
        if k >= 1:
            lam1 += 2.0 * rho * _box_excess(x1, xlo1, xhi1)
            lam2 += 2.0 * rho * _box_excess(x2, xlo2, xhi2)
    return value, grad, np.array([lam1, lam2])


def interval_rollout_jac(x0, u, h, substeps, params):
    """One control interval with forward sensitivity propagation.

    Returns (x_next, Phi, B) where Phi = d(x_next)/d(x0) (2x2) and
    B = d(x_next)/du (2,), accumulated through every Euler substep.
    """
    tau, k_rate, b_act, x_f, x_c, a_coef = params
    x1 = float(x0[0])
    x2 = float(x0[1])
    uu = float(u)
    p11 = 1.0
    p12 = 0.0
    p21 = 0.0
    p22 = 1.0
    bb1 = 0.0
    bb2 = 0.0
    for _ in range(substeps):
        ex = exp(-b_act / x2)
        dr_dx1 = k_rate * ex
        dr_dx2 = k_rate * x1 * ex * (b_act / (x2 * x2))
        a11 = 1.0 + h * (-1.0 / tau - dr_dx1)
        a12 = h * (-dr_dx2)
        a21 = h * dr_dx1
        a22 = 1.0 + h * (-1.0 / tau + dr_dx2 - a_coef * uu)
        bu2 = h * (-a_coef * (x2 - x_c))
        n11 = a11 * p11 + a12 * p21
        n12 = a11 * p12 + a12 * p22
        n21 = a21 * p11 + a22 * p21
        n22 = a21 * p12 + a22 * p22
        nb1 = a11 * bb1 + a12 * bb2
        nb2 = a21 * bb1 + a22 * bb2 + bu2
        p11, p12, p21, p22 = n11, n12, n21, n22
        bb1, bb2 = nb1, nb2
        r = k_rate * x1 * ex
        d1 = (1.0 - x1) / tau - r
        d2 = (x_f - x2) / tau + r - a_coef * uu * (x2 - x_c)
        x1 = x1 + h * d1
        x2 = x2 + h * d2
    return (
        np.array([x1, x2]),
        np.array([[p11, p12], [p21, p22]]),
        np.array([bb1, bb2]),
    )


def _box_excess(x, lo, hi):
    if x < lo:
        return x - lo
    if x > hi:
        return x - hi
    return 0.0
