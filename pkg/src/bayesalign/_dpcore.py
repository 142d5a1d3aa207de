"""Numba kernels for the alignment dynamic programs.

State indices: 0 = match, 1 = skip_x (consumes one X residue), 2 = skip_y.
The sum-product forward pass runs in the linear domain with per-row rescaling
(offsets tracked as logs), which matches log-sum-exp precision without
transcendental calls per cell.  The max-product pass runs in the log domain so
its accumulation order is bit-identical to scoring a path step by step.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# rescale a row whenever its max leaves this band; double headroom is ~1e308
_RESCALE_HI = 1e30
_RESCALE_LO = 1e-30

NEG_INF = -np.inf


@njit(cache=True)
def forward_scaled(match_w, sx_w, sy_w, open_w, ext_w, allow_sim):
    """Sum-product forward table.

    match_w: (n, m) linear match weights; sx_w (n,), sy_w (m,): per-residue
    skip factors (all ones outside sequence mode); open_w/ext_w: linear gap
    transition weights.  Returns (v, row_logscale) with the true forward value
    v_true[i, j, k] = v[i, j, k] * exp(row_logscale[i]).
    """
    n, m = match_w.shape
    v = np.zeros((n + 1, m + 1, 3))
    row_logscale = np.zeros(n + 1)
    v[0, 0, 0] = 1.0
    for i in range(n + 1):
        if i > 0:
            for j in range(m + 1):
                if j >= 1:
                    v[i, j, 0] = match_w[i - 1, j - 1] * (
                        v[i - 1, j - 1, 0] + v[i - 1, j - 1, 1] + v[i - 1, j - 1, 2]
                    )
                v[i, j, 1] = sx_w[i - 1] * (open_w * v[i - 1, j, 0] + ext_w * v[i - 1, j, 1])
                if j >= 1:
                    t = open_w * v[i, j - 1, 0] + ext_w * v[i, j - 1, 2]
                    if allow_sim:
                        t += ext_w * v[i, j - 1, 1]
                    v[i, j, 2] = sy_w[j - 1] * t
        else:
            for j in range(1, m + 1):
                t = open_w * v[0, j - 1, 0] + ext_w * v[0, j - 1, 2]
                if allow_sim:
                    t += ext_w * v[0, j - 1, 1]
                v[0, j, 2] = sy_w[j - 1] * t
        hi = 0.0
        for j in range(m + 1):
            for k in range(3):
                if v[i, j, k] > hi:
                    hi = v[i, j, k]
        prev_scale = row_logscale[i - 1] if i > 0 else 0.0
        if hi > 0.0 and (hi > _RESCALE_HI or hi < _RESCALE_LO):
            inv = 1.0 / hi
            for j in range(m + 1):
                for k in range(3):
                    v[i, j, k] *= inv
            row_logscale[i] = prev_scale + math.log(hi)
        else:
            row_logscale[i] = prev_scale
    return v, row_logscale


@njit(cache=True)
def table_total(v, row_logscale):
    n = v.shape[0] - 1
    m = v.shape[1] - 1
    s = v[n, m, 0] + v[n, m, 1] + v[n, m, 2]
    if s <= 0.0:
        return NEG_INF
    return math.log(s) + row_logscale[n]


@njit(cache=True)
def sample_path(v, open_w, ext_w, allow_sim, uniforms, out_steps):
    """Stochastic traceback; fills out_steps from its end, returns step count.

    Transition factors shared by all predecessors cancel inside each
    conditional, so only the gap weights and table values are needed.
    uniforms must hold at least n + m + 1 variates; they are consumed in
    walk order.
    """
    n = v.shape[0] - 1
    m = v.shape[1] - 1
    pos = out_steps.shape[0]
    t = 0
    i, j = n, m
    w0 = v[n, m, 0]
    w1 = v[n, m, 1]
    w2 = v[n, m, 2]
    r = uniforms[t] * (w0 + w1 + w2)
    t += 1
    if r < w0:
        k = 0
    elif r < w0 + w1:
        k = 1
    else:
        k = 2
    while True:
        pos -= 1
        out_steps[pos] = k
        if k == 0:
            i -= 1
            j -= 1
        elif k == 1:
            i -= 1
        else:
            j -= 1
        if i == 0 and j == 0:
            break
        if k == 0:
            w0 = v[i, j, 0]
            w1 = v[i, j, 1]
            w2 = v[i, j, 2]
        elif k == 1:
            w0 = open_w * v[i, j, 0]
            w1 = ext_w * v[i, j, 1]
            w2 = 0.0
        else:
            w0 = open_w * v[i, j, 0]
            w1 = ext_w * v[i, j, 1] if allow_sim else 0.0
            w2 = ext_w * v[i, j, 2]
        r = uniforms[t] * (w0 + w1 + w2)
        t += 1
        if r < w0:
            k = 0
        elif r < w0 + w1:
            k = 1
        else:
            k = 2
    return out_steps.shape[0] - pos


@njit(cache=True)
def viterbi_path(match_lw, sx_lw, sy_lw, open_lw, ext_lw, allow_sim, out_steps):
    """Max-product traceback in the log domain, ties preferring lower state index."""
    n, m = match_lw.shape
    v = np.full((n + 1, m + 1, 3), NEG_INF)
    v[0, 0, 0] = 0.0
    for j in range(1, m + 1):
        b0 = v[0, j - 1, 0] + open_lw
        b2 = v[0, j - 1, 2] + ext_lw
        best = b0 if b0 >= b2 else b2
        if allow_sim:
            b1 = v[0, j - 1, 1] + ext_lw
            if b1 > best:
                best = b1
        v[0, j, 2] = best + sy_lw[j - 1]
    for i in range(1, n + 1):
        for j in range(m + 1):
            if j >= 1:
                a = v[i - 1, j - 1, 0]
                if v[i - 1, j - 1, 1] > a:
                    a = v[i - 1, j - 1, 1]
                if v[i - 1, j - 1, 2] > a:
                    a = v[i - 1, j - 1, 2]
                v[i, j, 0] = a + match_lw[i - 1, j - 1]
            b0 = v[i - 1, j, 0] + open_lw
            b1 = v[i - 1, j, 1] + ext_lw
            best = b0 if b0 >= b1 else b1
            v[i, j, 1] = best + sx_lw[i - 1]
            if j >= 1:
                c0 = v[i, j - 1, 0] + open_lw
                c2 = v[i, j - 1, 2] + ext_lw
                best = c0 if c0 >= c2 else c2
                if allow_sim:
                    c1 = v[i, j - 1, 1] + ext_lw
                    if c1 > best:
                        best = c1
                v[i, j, 2] = best + sy_lw[j - 1]
    pos = out_steps.shape[0]
    i, j = n, m
    k = 0
    best = v[n, m, 0]
    if v[n, m, 1] > best:
        best = v[n, m, 1]
        k = 1
    if v[n, m, 2] > best:
        k = 2
    while True:
        pos -= 1
        out_steps[pos] = k
        if k == 0:
            i -= 1
            j -= 1
        elif k == 1:
            i -= 1
        else:
            j -= 1
        if i == 0 and j == 0:
            break
        if k == 0:
            w0 = v[i, j, 0]
            w1 = v[i, j, 1]
            w2 = v[i, j, 2]
        elif k == 1:
            w0 = v[i, j, 0] + open_lw
            w1 = v[i, j, 1] + ext_lw
            w2 = NEG_INF
        else:
            w0 = v[i, j, 0] + open_lw
            w1 = v[i, j, 1] + ext_lw if allow_sim else NEG_INF
            w2 = v[i, j, 2] + ext_lw
        k = 0
        best = w0
        if w1 > best:
            best = w1
            k = 1
        if w2 > best:
            k = 2
    return out_steps.shape[0] - pos


@njit(cache=True)
def score_path_log(steps, match_lw, sx_lw, sy_lw, open_lw, ext_lw):
    """Log weight of one path; the accumulation order matches viterbi_path."""
    acc = 0.0
    i = 0
    j = 0
    in_run = False
    for t in range(steps.shape[0]):
        s = steps[t]
        if s == 0:
            acc = acc + match_lw[i, j]
            i += 1
            j += 1
            in_run = False
        elif s == 1:
            acc = acc + (ext_lw if in_run else open_lw)
            acc = acc + sx_lw[i]
            i += 1
            in_run = True
        else:
            acc = acc + (ext_lw if in_run else open_lw)
            acc = acc + sy_lw[j]
            j += 1
            in_run = True
    return acc
