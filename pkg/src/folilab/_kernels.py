"""Numba chunk kernels for the Heun loop (optional accelerator).

These reimplement exactly the arithmetic of the pure-numpy chunk loop in
sde.simulate_ensemble: periodic cubic B-spline evaluation of the coefficient
table, Heun predictor-corrector on the leaf coordinates, and the Ito
log-determinant accumulators.  The numpy loop remains the reference; the
integrator falls back to it when numba is unavailable.
"""

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _weights(t, w):
    t2 = t * t
    t3 = t2 * t
    w[0] = (1.0 - 3.0 * t + 3.0 * t2 - t3) / 6.0
    w[1] = (4.0 - 6.0 * t2 + 3.0 * t3) / 6.0
    w[2] = (1.0 + 3.0 * t + 3.0 * t2 - 3.0 * t3) / 6.0
    w[3] = t3 / 6.0


@njit(cache=True)
def _eval_fields_2d(coeff, scale, y0, y1, out, n_fields):
    n0, n1 = coeff.shape[1], coeff.shape[2]
    x0 = y0 * scale[0]
    x1 = y1 * scale[1]
    b0 = int(np.floor(x0))
    b1 = int(np.floor(x1))
    w0 = np.empty(4)
    w1 = np.empty(4)
    _weights(x0 - b0, w0)
    _weights(x1 - b1, w1)
    i0 = np.empty(4, np.int64)
    i1 = np.empty(4, np.int64)
    for k in range(4):
        i0[k] = (b0 - 1 + k) % n0
        i1[k] = (b1 - 1 + k) % n1
    for f in range(n_fields):
        acc = 0.0
        for a in range(4):
            row = 0.0
            for b in range(4):
                row += coeff[f, i0[a], i1[b]] * w1[b]
            acc += row * w0[a]
        out[f] = acc


@njit(cache=True)
def _eval_fields_1d(coeff, scale, y0, out, n_fields):
    n0 = coeff.shape[1]
    x0 = y0 * scale[0]
    b0 = int(np.floor(x0))
    w0 = np.empty(4)
    _weights(x0 - b0, w0)
    for f in range(n_fields):
        acc = 0.0
        for a in range(4):
            acc += coeff[f, (b0 - 1 + a) % n0] * w0[a]
        out[f] = acc


@njit(cache=True)
def heun_chunk_2d(x, ldf, ldl, noise, dt, coeff, scale, shear_t, p, n_amb):
    n_steps, n_paths = noise.shape[0], noise.shape[1]
    pn = p * n_amb
    n_fields = coeff.shape[0]
    fields = np.empty(n_fields)
    fields_p = np.empty(pn + p)
    du0 = np.empty(p)
    for j in range(n_steps):
        for k in range(n_paths):
            y0 = x[k, 0] * shear_t[0, 0] + x[k, 1] * shear_t[1, 0]
            y1 = x[k, 0] * shear_t[0, 1] + x[k, 1] * shear_t[1, 1]
            _eval_fields_2d(coeff, scale, y0, y1, fields, n_fields)
            # logdet increments at the pre-step point (Ito evaluation)
            acc_f = 0.0
            acc_l = 0.0
            for i in range(n_amb):
                acc_f += fields[pn + p + i] * noise[j, k, i]
                acc_l += fields[pn + p + n_amb + i] * noise[j, k, i]
            base = pn + p + 2 * n_amb
            ldf[k] += acc_f + (fields[base + 2] + 0.5 * fields[base]) * dt
            ldl[k] += acc_l + (fields[base + 3] + 0.5 * fields[base + 1]) * dt
            for m in range(p):
                s = fields[pn + m] * dt
                for i in range(n_amb):
                    s += fields[m * n_amb + i] * noise[j, k, i]
                du0[m] = s
            # predictor point and corrector increment
            y0p = (x[k, 0] + du0[0]) * shear_t[0, 0] + x[k, 1] * shear_t[1, 0]
            y1p = (x[k, 0] + du0[0]) * shear_t[0, 1] + x[k, 1] * shear_t[1, 1]
            if p == 2:
                y0p += du0[1] * shear_t[1, 0]
                y1p += du0[1] * shear_t[1, 1]
            _eval_fields_2d(coeff, scale, y0p, y1p, fields_p, pn + p)
            for m in range(p):
                s = fields_p[pn + m] * dt
                for i in range(n_amb):
                    s += fields_p[m * n_amb + i] * noise[j, k, i]
                x[k, m] += 0.5 * (du0[m] + s)


@njit(cache=True)
def heun_transport_2d(x, noise, dt, coeff, scale, shear_t, p, n_amb):
    """Heun steps under one shared noise path, no determinant accumulation.

    noise is (n_steps, N): every row drives the whole batch (the flow map of
    a single realization).  coeff only needs the A and b field rows.
    """
    n_steps, n_batch = noise.shape[0], x.shape[0]
    pn = p * n_amb
    fields = np.empty(pn + p)
    fields_p = np.empty(pn + p)
    du0 = np.empty(p)
    for j in range(n_steps):
        for k in range(n_batch):
            y0 = x[k, 0] * shear_t[0, 0] + x[k, 1] * shear_t[1, 0]
            y1 = x[k, 0] * shear_t[0, 1] + x[k, 1] * shear_t[1, 1]
            _eval_fields_2d(coeff, scale, y0, y1, fields, pn + p)
            for m in range(p):
                s = fields[pn + m] * dt
                for i in range(n_amb):
                    s += fields[m * n_amb + i] * noise[j, i]
                du0[m] = s
            y0p = (x[k, 0] + du0[0]) * shear_t[0, 0] + x[k, 1] * shear_t[1, 0]
            y1p = (x[k, 0] + du0[0]) * shear_t[0, 1] + x[k, 1] * shear_t[1, 1]
            if p == 2:
                y0p += du0[1] * shear_t[1, 0]
                y1p += du0[1] * shear_t[1, 1]
            _eval_fields_2d(coeff, scale, y0p, y1p, fields_p, pn + p)
            for m in range(p):
                s = fields_p[pn + m] * dt
                for i in range(n_amb):
                    s += fields_p[m * n_amb + i] * noise[j, i]
                x[k, m] += 0.5 * (du0[m] + s)


@njit(cache=True)
def heun_transport_1d(x, noise, dt, coeff, scale, p, n_amb):
    n_steps, n_batch = noise.shape[0], x.shape[0]
    pn = p * n_amb
    fields = np.empty(pn + p)
    fields_p = np.empty(pn + p)
    for j in range(n_steps):
        for k in range(n_batch):
            _eval_fields_1d(coeff, scale, x[k, 0], fields, pn + p)
            du0 = fields[pn] * dt
            for i in range(n_amb):
                du0 += fields[i] * noise[j, i]
            _eval_fields_1d(coeff, scale, x[k, 0] + du0, fields_p, pn + p)
            du1 = fields_p[pn] * dt
            for i in range(n_amb):
                du1 += fields_p[i] * noise[j, i]
            x[k, 0] += 0.5 * (du0 + du1)


@njit(cache=True)
def heun_chunk_1d(x, ldf, ldl, noise, dt, coeff, scale, p, n_amb):
    n_steps, n_paths = noise.shape[0], noise.shape[1]
    pn = p * n_amb
    n_fields = coeff.shape[0]
    fields = np.empty(n_fields)
    fields_p = np.empty(pn + p)
    for j in range(n_steps):
        for k in range(n_paths):
            _eval_fields_1d(coeff, scale, x[k, 0], fields, n_fields)
            acc_f = 0.0
            acc_l = 0.0
            for i in range(n_amb):
                acc_f += fields[pn + p + i] * noise[j, k, i]
                acc_l += fields[pn + p + n_amb + i] * noise[j, k, i]
            base = pn + p + 2 * n_amb
            ldf[k] += acc_f + (fields[base + 2] + 0.5 * fields[base]) * dt
            ldl[k] += acc_l + (fields[base + 3] + 0.5 * fields[base + 1]) * dt
            du0 = fields[pn] * dt
            for i in range(n_amb):
                du0 += fields[i] * noise[j, k, i]
            _eval_fields_1d(coeff, scale, x[k, 0] + du0, fields_p, pn + p)
            du1 = fields_p[pn] * dt
            for i in range(n_amb):
                du1 += fields_p[i] * noise[j, k, i]
            x[k, 0] += 0.5 * (du0 + du1)
