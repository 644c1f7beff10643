"""Numba kernels for Erlang-chain state propagation.

A chain with rate ``r`` and depth ``d`` has generator ``-r I + r S`` (``S`` the
subdiagonal shift), so over a gap ``h`` the transition matrix is lower
triangular Toeplitz with entries ``(r h)**k / k! * exp(-r h)``. An event adds
``r`` to the first coordinate of every chain.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_SERIES_TERMS = 40


@njit(cache=True, nogil=True)
def propagate(x, rates, starts, h, out):
    """``out = exp(A h) x``; ``out`` may alias ``x``."""
    for c in range(rates.shape[0]):
        z = rates[c] * h
        e = math.exp(-z)
        s0 = starts[c]
        for k in range(starts[c + 1] - 1, s0 - 1, -1):
            acc = 0.0
            coef = e
            # out[k] = e * sum_i z^(k-i)/(k-i)! x[i], accumulated from i = k down
            for i in range(k, s0 - 1, -1):
                acc += coef * x[i]
                coef *= z / (k - i + 1)
            out[k] = acc


@njit(cache=True, nogil=True)
def _lower_gamma_reg(n, z):
    """Regularized lower incomplete gamma P(n, z) for integer n >= 1."""
    if z < 1.0:
        term = math.exp(-z)
        for m in range(1, n + 1):
            term *= z / m
        acc = 0.0
        m = n
        for _ in range(_SERIES_TERMS):
            acc += term
            m += 1
            term *= z / m
        return acc
    term = 1.0
    acc = 0.0
    for m in range(n):
        acc += term
        term *= z / (m + 1)
    return 1.0 - math.exp(-z) * acc


@njit(cache=True, nogil=True)
def integrate_gap(x, rates, starts, h, out):
    """``out += int_0^h exp(A s) x ds`` in closed form."""
    for c in range(rates.shape[0]):
        r = rates[c]
        z = r * h
        s0 = starts[c]
        for k in range(s0, starts[c + 1]):
            acc = 0.0
            for i in range(s0, k + 1):
                acc += x[i] * _lower_gamma_reg(k - i + 1, z)
            out[k] += acc / r


@njit(cache=True, nogil=True)
def jump(x, rates, starts):
    for c in range(rates.shape[0]):
        x[starts[c]] += rates[c]


@njit(cache=True, nogil=True)
def _envelope(x, background, weights, atom_index, atom_chain_start):
    env = background
    for p in range(weights.shape[0]):
        s = 0.0
        for i in range(atom_chain_start[p], atom_index[p] + 1):
            s += x[i]
        env += weights[p] * s
    return env


@njit(cache=True, nogil=True)
def _intensity(x, background, weights, atom_index):
    lam = background
    for p in range(weights.shape[0]):
        lam += weights[p] * x[atom_index[p]]
    return lam


@njit(cache=True, nogil=True)
def thin(rng, background, weights, rates, starts, atom_index, atom_chain_start, horizon, cap):
    """Ogata thinning with the non-increasing chain-sum envelope.

    Returns ``(times, status)``; status 0 ok, 1 cap exceeded, 2 envelope violated.
    """
    x = np.zeros(starts[-1])
    buf = np.empty(1024)
    n = 0
    t = 0.0
    while True:
        bound = _envelope(x, background, weights, atom_index, atom_chain_start)
        t_next = t + rng.exponential() / bound
        if t_next > horizon:
            break
        propagate(x, rates, starts, t_next - t, x)
        t = t_next
        lam = _intensity(x, background, weights, atom_index)
        if lam > bound * (1.0 + 1e-12):
            return buf[:n], 2
        if rng.random() * bound <= lam:
            if n >= cap:
                return buf[:n], 1
            if n == buf.shape[0]:
                grown = np.empty(2 * n)
                grown[:n] = buf
                buf = grown
            buf[n] = t
            n += 1
            jump(x, rates, starts)
    return buf[:n].copy(), 0


@njit(cache=True, nogil=True)
def _advance(x, rates, starts, atom_index, h, seg, gl_x, gl_w, tmp, I1s, I2, with_gram):
    """Integrate over a gap of length ``h`` and propagate ``x`` in place."""
    P = atom_index.shape[0]
    while h > 0.0:
        L = h if h <= seg else seg
        if with_gram:
            integrate_gap(x, rates, starts, L, I1s)
            for g in range(gl_x.shape[0]):
                propagate(x, rates, starts, 0.5 * L * (gl_x[g] + 1.0), tmp)
                wg = 0.5 * L * gl_w[g]
                for a in range(P):
                    va = wg * tmp[atom_index[a]]
                    for b in range(a + 1):
                        I2[a, b] += va * tmp[atom_index[b]]
        propagate(x, rates, starts, L, x)
        h -= L


@njit(cache=True, nogil=True)
def accumulate(times, checkpoints, rates, starts, atom_index, seg, gl_x, gl_w, with_gram):
    """Single pass over ``times`` recording accumulators at each checkpoint.

    Returns per-checkpoint ``I1 (K,P)``, ``I2 (K,P,P)``, ``Iev (K,P)``,
    ``count (K,)`` and the left-limit regressor ``chi(t_k-) (K,P)``.
    """
    P = atom_index.shape[0]
    S = starts[-1]
    K = checkpoints.shape[0]
    x = np.zeros(S)
    tmp = np.zeros(S)
    I1s = np.zeros(S)
    I2 = np.zeros((P, P))
    Iev = np.zeros(P)
    outI1 = np.zeros((K, P))
    outI2 = np.zeros((K, P, P))
    outIev = np.zeros((K, P))
    outN = np.zeros(K, dtype=np.int64)
    outChi = np.zeros((K, P))
    t = 0.0
    k = 0
    count = 0
    for r in range(times.shape[0]):
        tr = times[r]
        while k < K and checkpoints[k] < tr:
            _advance(x, rates, starts, atom_index, checkpoints[k] - t, seg, gl_x, gl_w, tmp, I1s, I2, with_gram)
            t = checkpoints[k]
            _record(k, x, I1s, I2, Iev, count, atom_index, outI1, outI2, outIev, outN, outChi)
            k += 1
        if k >= K:
            break
        _advance(x, rates, starts, atom_index, tr - t, seg, gl_x, gl_w, tmp, I1s, I2, with_gram)
        t = tr
        for a in range(P):
            Iev[a] += x[atom_index[a]]
        count += 1
        while k < K and checkpoints[k] == tr:
            _record(k, x, I1s, I2, Iev, count, atom_index, outI1, outI2, outIev, outN, outChi)
            k += 1
        jump(x, rates, starts)
    while k < K:
        _advance(x, rates, starts, atom_index, checkpoints[k] - t, seg, gl_x, gl_w, tmp, I1s, I2, with_gram)
        t = checkpoints[k]
        _record(k, x, I1s, I2, Iev, count, atom_index, outI1, outI2, outIev, outN, outChi)
        k += 1
    for kk in range(K):
        for a in range(P):
            for b in range(a):
                outI2[kk, b, a] = outI2[kk, a, b]
    return outI1, outI2, outIev, outN, outChi


@njit(cache=True, nogil=True)
def _record(k, x, I1s, I2, Iev, count, atom_index, outI1, outI2, outIev, outN, outChi):
    P = atom_index.shape[0]
    for a in range(P):
        outI1[k, a] = I1s[atom_index[a]]
        outIev[k, a] = Iev[a]
        outChi[k, a] = x[atom_index[a]]
        for b in range(a + 1):
            outI2[k, a, b] = I2[a, b]
    outN[k] = count
