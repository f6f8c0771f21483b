"""Pure numpy implementations of the numerical kernels.

These mirror ``_kernels.pyx`` one to one and are used whenever the compiled
extension is unavailable (or when ``NANOFLUXONIUM_PURE=1``).
"""

import math

import numpy as np


def displacement_moduli(dim, s):
    """Real symmetric moduli of the displacement operator exp(i s (a + a^dag)).

    Returns ``M`` with ``<m|D|n> = i**|m-n| * M[m, n]`` using the exact
    (untruncated) Fock-basis matrix elements, evaluated through a normalized
    associated-Laguerre recurrence.
    """
    dim = int(dim)
    out = np.zeros((dim, dim))
    if s == 0.0:
        np.fill_diagonal(out, 1.0)
        return out
    x = s * s
    log_s = math.log(abs(s))
    sign = 1.0 if s > 0 else -1.0
    for k in range(dim):
        pref = math.exp(k * log_s - 0.5 * x - 0.5 * math.lgamma(k + 1.0))
        if sign < 0 and k % 2:
            pref = -pref
        nmax = dim - k
        mu = np.empty(nmax)
        mu[0] = pref
        if nmax > 1:
            mu[1] = pref * (1.0 + k - x) / math.sqrt(k + 1.0)
        for n in range(1, nmax - 1):
            mu[n + 1] = ((2 * n + 1 + k - x) * mu[n]
                         - math.sqrt(n * (n + k)) * mu[n - 1]) / math.sqrt((n + 1) * (n + 1 + k))
        idx = np.arange(nmax)
        out[idx + k, idx] = mu
        out[idx, idx + k] = mu
    return out


def _rhs(rho, h, gamma_out, jumps, rates):
    d = -1j * (h @ rho - rho @ h)
    if len(rates):
        d -= 0.5 * (gamma_out[:, None] + gamma_out[None, :]) * rho
        src = jumps[:, 0]
        dst = jumps[:, 1]
        np.add.at(d, (dst, dst), rates * rho[src, src])
    return d


def lindblad_rk4(rho0, h0, hd, coeff, jumps, rates, dt, n_steps, store_every):
    """Fixed-step RK4 for d rho/dt = -i[H(t), rho] + jump dissipators.

    ``H(t) = h0 + sum_j coeff[j, 2*i + s] * hd[j]`` where ``2*i + s`` indexes
    the half-step grid (s = 0, 1, 2 for t_i, t_i + dt/2, t_i + dt).
    Jumps are level-to-level channels ``jumps[k] = (from, to)`` with rate
    ``rates[k]``. Returns the states at every ``store_every`` step, including
    the initial one.
    """
    rho = np.array(rho0, dtype=complex, copy=True)
    h0 = np.asarray(h0, dtype=complex)
    hd = np.asarray(hd, dtype=complex)
    coeff = np.asarray(coeff, dtype=float)
    jumps = np.asarray(jumps, dtype=np.intp).reshape(-1, 2)
    rates = np.asarray(rates, dtype=float)
    d = rho.shape[0]
    gamma_out = np.zeros(d)
    np.add.at(gamma_out, jumps[:, 0], rates)
    n_store = n_steps // store_every + 1
    out = np.empty((n_store, d, d), dtype=complex)
    out[0] = rho
    m = hd.shape[0]

    def ham(j):
        if m == 0:
            return h0
        return h0 + np.tensordot(coeff[:, j], hd, axes=1)

    stored = 1
    for i in range(n_steps):
        h_a = ham(2 * i)
        h_b = ham(2 * i + 1)
        h_c = ham(2 * i + 2)
        k1 = _rhs(rho, h_a, gamma_out, jumps, rates)
        k2 = _rhs(rho + 0.5 * dt * k1, h_b, gamma_out, jumps, rates)
        k3 = _rhs(rho + 0.5 * dt * k2, h_b, gamma_out, jumps, rates)
        k4 = _rhs(rho + dt * k3, h_c, gamma_out, jumps, rates)
        rho = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if (i + 1) % store_every == 0:
            out[stored] = rho
            stored += 1
    return out
