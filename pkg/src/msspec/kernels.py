"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``MSSPEC_DISABLE_NUMBA`` is unset (or ``0``).  Both paths are
always importable so they can be compared against each other; the public
names (``segment_mean``, ``lstm_forward`` ...) dispatch to the active one.

Segment kernels accumulate rows in ascending frame order and divide by the
count at the end, which is the summation order a naive per-segment loop
uses.  The numpy fallback keeps the same order by accumulating row slices
one at a time, so both paths agree bitwise.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _env_disabled() -> bool:
    return os.environ.get("MSSPEC_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


USE_NUMBA = HAVE_NUMBA and not _env_disabled()


def _njit(fn):
    if not HAVE_NUMBA:
        return None
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# segment reductions (pooling / upsampling backward)


def _segment_sum_loop(x, counts):
    n_seg = counts.shape[0]
    out = np.zeros((n_seg, x.shape[1]), dtype=x.dtype)
    start = 0
    for i in range(n_seg):
        for j in range(start, start + counts[i]):
            for m in range(x.shape[1]):
                out[i, m] += x[j, m]
        start += counts[i]
    return out


def _segment_mean_loop(x, counts):
    n_seg = counts.shape[0]
    out = np.zeros((n_seg, x.shape[1]), dtype=x.dtype)
    start = 0
    for i in range(n_seg):
        for j in range(start, start + counts[i]):
            for m in range(x.shape[1]):
                out[i, m] += x[j, m]
        for m in range(x.shape[1]):
            out[i, m] = out[i, m] / counts[i]
        start += counts[i]
    return out


def _segment_sum_np(x, counts):
    n_seg = counts.shape[0]
    out = np.zeros((n_seg, x.shape[1]), dtype=x.dtype)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    # one row offset per pass keeps the ascending-frame accumulation order
    for k in range(int(counts.max()) if n_seg else 0):
        live = counts > k
        out[live] += x[starts[live] + k]
    return out


def _segment_mean_np(x, counts):
    return _segment_sum_np(x, counts) / counts[:, None].astype(x.dtype)


_segment_sum_nb = _njit(_segment_sum_loop)
_segment_mean_nb = _njit(_segment_mean_loop)


def _prep_segments(x, counts):
    x = np.ascontiguousarray(x)
    counts = np.ascontiguousarray(counts, dtype=np.int64)
    if x.ndim != 2:
        raise ValueError("expected a 2-D array")
    if counts.ndim != 1 or counts.size == 0 or counts.min() < 1 or counts.sum() != x.shape[0]:
        raise ValueError("counts must be positive and sum to the row count")
    return x, counts


def segment_sum(x: np.ndarray, counts: np.ndarray, use_numba: bool | None = None) -> np.ndarray:
    """Sum consecutive row blocks of ``x``; block ``i`` has ``counts[i]`` rows."""
    x, counts = _prep_segments(x, counts)
    if USE_NUMBA if use_numba is None else use_numba:
        return _segment_sum_nb(x, counts)
    return _segment_sum_np(x, counts)


def segment_mean(x: np.ndarray, counts: np.ndarray, use_numba: bool | None = None) -> np.ndarray:
    """Mean of consecutive row blocks of ``x``; block ``i`` has ``counts[i]`` rows."""
    x, counts = _prep_segments(x, counts)
    if USE_NUMBA if use_numba is None else use_numba:
        return _segment_mean_nb(x, counts)
    return _segment_mean_np(x, counts)


# ---------------------------------------------------------------------------
# LSTM recurrence
#
# Inputs are pre-projected: xw[t] = x[t] @ W_ih + b, shape (N, 4H), gate
# order (input, forget, cell, output).  Initial state is zero.


def _lstm_forward_loop(xw, w_hh):
    n = xw.shape[0]
    hid = w_hh.shape[0]
    hs = np.zeros((n, hid), dtype=xw.dtype)
    cs = np.zeros((n, hid), dtype=xw.dtype)
    gates = np.zeros((n, 4 * hid), dtype=xw.dtype)
    h = np.zeros(hid, dtype=xw.dtype)
    c = np.zeros(hid, dtype=xw.dtype)
    for t in range(n):
        z = xw[t] + np.dot(h, w_hh)
        for k in range(hid):
            gi = 1.0 / (1.0 + np.exp(-z[k]))
            gf = 1.0 / (1.0 + np.exp(-z[hid + k]))
            gg = np.tanh(z[2 * hid + k])
            go = 1.0 / (1.0 + np.exp(-z[3 * hid + k]))
            c[k] = gf * c[k] + gi * gg
            h[k] = go * np.tanh(c[k])
            gates[t, k] = gi
            gates[t, hid + k] = gf
            gates[t, 2 * hid + k] = gg
            gates[t, 3 * hid + k] = go
        hs[t] = h
        cs[t] = c
    return hs, cs, gates


def _lstm_backward_loop(dhs, w_hh, hs, cs, gates):
    n = dhs.shape[0]
    hid = w_hh.shape[0]
    dxw = np.zeros((n, 4 * hid), dtype=dhs.dtype)
    dh_next = np.zeros(hid, dtype=dhs.dtype)
    dc_next = np.zeros(hid, dtype=dhs.dtype)
    w_hh_t = np.ascontiguousarray(w_hh.T)
    for t in range(n - 1, -1, -1):
        for k in range(hid):
            gi = gates[t, k]
            gf = gates[t, hid + k]
            gg = gates[t, 2 * hid + k]
            go = gates[t, 3 * hid + k]
            c_prev = cs[t - 1, k] if t > 0 else 0.0
            tc = np.tanh(cs[t, k])
            dh = dhs[t, k] + dh_next[k]
            dc = dh * go * (1.0 - tc * tc) + dc_next[k]
            dxw[t, k] = dc * gg * gi * (1.0 - gi)
            dxw[t, hid + k] = dc * c_prev * gf * (1.0 - gf)
            dxw[t, 2 * hid + k] = dc * gi * (1.0 - gg * gg)
            dxw[t, 3 * hid + k] = dh * tc * go * (1.0 - go)
            dc_next[k] = dc * gf
        dh_next = np.dot(dxw[t], w_hh_t)
    dw = np.dot(np.ascontiguousarray(hs[: n - 1].T), np.ascontiguousarray(dxw[1:]))
    return dxw, dw


def _lstm_forward_np(xw, w_hh):
    n = xw.shape[0]
    hid = w_hh.shape[0]
    hs = np.zeros((n, hid), dtype=xw.dtype)
    cs = np.zeros((n, hid), dtype=xw.dtype)
    gates = np.zeros((n, 4 * hid), dtype=xw.dtype)
    h = np.zeros(hid, dtype=xw.dtype)
    c = np.zeros(hid, dtype=xw.dtype)
    for t in range(n):
        z = xw[t] + h @ w_hh
        g = gates[t]
        g[: 2 * hid] = 1.0 / (1.0 + np.exp(-z[: 2 * hid]))
        g[2 * hid : 3 * hid] = np.tanh(z[2 * hid : 3 * hid])
        g[3 * hid :] = 1.0 / (1.0 + np.exp(-z[3 * hid :]))
        c = g[hid : 2 * hid] * c + g[:hid] * g[2 * hid : 3 * hid]
        h = g[3 * hid :] * np.tanh(c)
        hs[t] = h
        cs[t] = c
    return hs, cs, gates


def _lstm_backward_np(dhs, w_hh, hs, cs, gates):
    n = dhs.shape[0]
    hid = w_hh.shape[0]
    gi, gf, gg, go = (gates[:, k * hid : (k + 1) * hid] for k in range(4))
    c_prev = np.vstack([np.zeros((1, hid), dtype=cs.dtype), cs[:-1]])
    tc = np.tanh(cs)
    dxw = np.zeros((n, 4 * hid), dtype=dhs.dtype)
    dh_next = np.zeros(hid, dtype=dhs.dtype)
    dc_next = np.zeros(hid, dtype=dhs.dtype)
    w_hh_t = w_hh.T
    for t in range(n - 1, -1, -1):
        dh = dhs[t] + dh_next
        dc = dh * go[t] * (1.0 - tc[t] * tc[t]) + dc_next
        row = dxw[t]
        row[:hid] = dc * gg[t] * gi[t] * (1.0 - gi[t])
        row[hid : 2 * hid] = dc * c_prev[t] * gf[t] * (1.0 - gf[t])
        row[2 * hid : 3 * hid] = dc * gi[t] * (1.0 - gg[t] * gg[t])
        row[3 * hid :] = dh * tc[t] * go[t] * (1.0 - go[t])
        dc_next = dc * gf[t]
        dh_next = row @ w_hh_t
    dw = hs[:-1].T @ dxw[1:]
    return dxw, dw


_lstm_forward_nb = _njit(_lstm_forward_loop)
_lstm_backward_nb = _njit(_lstm_backward_loop)


def lstm_forward(xw: np.ndarray, w_hh: np.ndarray, use_numba: bool | None = None):
    """Run the recurrence over all rows of ``xw``.

    Returns ``(hs, cs, gates)``; ``gates`` holds the post-activation gate
    values needed by :func:`lstm_backward`.
    """
    xw = np.ascontiguousarray(xw)
    w_hh = np.ascontiguousarray(w_hh, dtype=xw.dtype)
    if USE_NUMBA if use_numba is None else use_numba:
        return _lstm_forward_nb(xw, w_hh)
    return _lstm_forward_np(xw, w_hh)


def lstm_backward(dhs, w_hh, hs, cs, gates, use_numba: bool | None = None):
    """Gradients ``(d xw, d W_hh)`` given upstream ``d hs``."""
    dhs = np.ascontiguousarray(dhs)
    w_hh = np.ascontiguousarray(w_hh, dtype=dhs.dtype)
    if USE_NUMBA if use_numba is None else use_numba:
        return _lstm_backward_nb(dhs, w_hh, hs, cs, gates)
    return _lstm_backward_np(dhs, w_hh, hs, cs, gates)


def lstm_step(xw_t: np.ndarray, h: np.ndarray, c: np.ndarray, w_hh: np.ndarray):
    """Single recurrence step, used by free-running inference."""
    hid = w_hh.shape[0]
    z = xw_t + h @ w_hh
    i = 1.0 / (1.0 + np.exp(-z[:hid]))
    f = 1.0 / (1.0 + np.exp(-z[hid : 2 * hid]))
    g = np.tanh(z[2 * hid : 3 * hid])
    o = 1.0 / (1.0 + np.exp(-z[3 * hid :]))
    c = f * c + i * g
    return o * np.tanh(c), c
