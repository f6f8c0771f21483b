# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: Fock-basis displacement moduli and a Lindblad RK4 stepper."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, lgamma, fabs

cnp.import_array()

ctypedef double complex cplx


def displacement_moduli(Py_ssize_t dim, double s):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((dim, dim))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t k, n, nmax
    cdef double x, log_s, pref, m0, m1, m2
    if s == 0.0:
        for k in range(dim):
            o[k, k] = 1.0
        return out
    x = s * s
    log_s = log(fabs(s))
    for k in range(dim):
        pref = exp(k * log_s - 0.5 * x - 0.5 * lgamma(k + 1.0))
        if s < 0 and k % 2 == 1:
            pref = -pref
        nmax = dim - k
        m0 = pref
        o[k, 0] = m0
        o[0, k] = m0
        if nmax > 1:
            m1 = pref * (1.0 + k - x) / sqrt(k + 1.0)
            o[k + 1, 1] = m1
            o[1, k + 1] = m1
        for n in range(1, nmax - 1):
            m2 = ((2 * n + 1 + k - x) * m1 - sqrt(<double>(n * (n + k))) * m0) / sqrt(<double>((n + 1) * (n + 1 + k)))
            o[n + 1 + k, n + 1] = m2
            o[n + 1, n + 1 + k] = m2
            m0 = m1
            m1 = m2
    return out


cdef void _rhs(cplx[:, ::1] rho, cplx[:, ::1] h, double[::1] gout,
               Py_ssize_t[:, ::1] jumps, double[::1] rates,
               cplx[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t d = rho.shape[0]
    cdef Py_ssize_t a, b, c, k
    cdef cplx acc
    # rho and h are Hermitian, so only the upper triangle is computed.
    for a in range(d):
        for b in range(a, d):
            acc = 0
            for c in range(d):
                acc = acc + h[a, c] * rho[c, b] - rho[a, c] * h[c, b]
            out[a, b] = -1j * acc - 0.5 * (gout[a] + gout[b]) * rho[a, b]
            if b != a:
                out[b, a] = out[a, b].conjugate()
    for k in range(jumps.shape[0]):
        out[jumps[k, 1], jumps[k, 1]] = out[jumps[k, 1], jumps[k, 1]] + rates[k] * rho[jumps[k, 0], jumps[k, 0]]


cdef void _ham(cplx[:, ::1] h0, cplx[:, :, ::1] hd, double[:, ::1] coeff,
               Py_ssize_t j, cplx[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t d = h0.shape[0]
    cdef Py_ssize_t a, b, m
    for a in range(d):
        for b in range(d):
            out[a, b] = h0[a, b]
    for m in range(hd.shape[0]):
        for a in range(d):
            for b in range(d):
                out[a, b] = out[a, b] + coeff[m, j] * hd[m, a, b]


def lindblad_rk4(rho0, h0, hd, coeff, jumps, rates, double dt, Py_ssize_t n_steps,
                 Py_ssize_t store_every):
    cdef cplx[:, ::1] rho = np.array(rho0, dtype=np.complex128, order="C", copy=True)
    cdef cplx[:, ::1] h0v = np.ascontiguousarray(h0, dtype=np.complex128)
    cdef cplx[:, :, ::1] hdv = np.ascontiguousarray(hd, dtype=np.complex128)
    cdef double[:, ::1] cv = np.ascontiguousarray(coeff, dtype=np.float64)
    cdef Py_ssize_t[:, ::1] jv = np.ascontiguousarray(np.asarray(jumps, dtype=np.intp).reshape(-1, 2))
    cdef double[::1] rv = np.ascontiguousarray(rates, dtype=np.float64)
    cdef Py_ssize_t d = rho.shape[0]
    cdef Py_ssize_t i, a, b, k, stored
    cdef double[::1] gout = np.zeros(d)
    for k in range(jv.shape[0]):
        gout[jv[k, 0]] += rv[k]
    cdef Py_ssize_t n_store = n_steps // store_every + 1
    result = np.empty((n_store, d, d), dtype=np.complex128)
    cdef cplx[:, :, ::1] res = result
    cdef cplx[:, ::1] ha = np.empty((d, d), dtype=np.complex128)
    cdef cplx[:, ::1] hb = np.empty((d, d), dtype=np.complex128)
    cdef cplx[:, ::1] hc = np.empty((d, d), dtype=np.complex128)
    cdef cplx[:, ::1] tmp = np.empty((d, d), dtype=np.complex128)
    cdef cplx[:, ::1] k1 = np.empty((d, d), dtype=np.complex128)
    cdef cplx[:, ::1] k2 = np.empty((d, d), dtype=np.complex128)
    cdef cplx[:, ::1] k3 = np.empty((d, d), dtype=np.complex128)
    cdef cplx[:, ::1] k4 = np.empty((d, d), dtype=np.complex128)
    res[0, :, :] = rho
    stored = 1
    with nogil:
        for i in range(n_steps):
            _ham(h0v, hdv, cv, 2 * i, ha)
            _ham(h0v, hdv, cv, 2 * i + 1, hb)
            _ham(h0v, hdv, cv, 2 * i + 2, hc)
            _rhs(rho, ha, gout, jv, rv, k1)
            for a in range(d):
                for b in range(d):
                    tmp[a, b] = rho[a, b] + 0.5 * dt * k1[a, b]
            _rhs(tmp, hb, gout, jv, rv, k2)
            for a in range(d):
                for b in range(d):
                    tmp[a, b] = rho[a, b] + 0.5 * dt * k2[a, b]
            _rhs(tmp, hb, gout, jv, rv, k3)
            for a in range(d):
                for b in range(d):
                    tmp[a, b] = rho[a, b] + dt * k3[a, b]
            _rhs(tmp, hc, gout, jv, rv, k4)
            for a in range(d):
                for b in range(d):
                    rho[a, b] = rho[a, b] + (dt / 6.0) * (k1[a, b] + 2.0 * k2[a, b] + 2.0 * k3[a, b] + k4[a, b])
            if (i + 1) % store_every == 0:
                for a in range(d):
                    for b in range(d):
                        res[stored, a, b] = rho[a, b]
                stored += 1
    return result
