"""Fused GRU sequence kernels (forward pass + hand-derived backward).

Cell convention, with packed gate order [z | r | n] and H the hidden width:

    z_t = sigmoid(x_t Wx[:, :H]   + h_{t-1} Wh[:, :H]   + b[:H])
    r_t = sigmoid(x_t Wx[:, H:2H] + h_{t-1} Wh[:, H:2H] + b[H:2H])
    n_t = tanh(   x_t Wx[:, 2H:]  + r_t * (h_{t-1} Wh[:, 2H:]) + b[2H:])
    h_t = z_t * h_{t-1} + (1 - z_t) * n_t

With all-zero weights and biases the update gate is 0.5 and the candidate 0,
so a zero initial state stays zero for any input.
"""

import numpy as np

from . import kernel


@kernel
def gru_forward(x, h0, wx, wh, b):
    """Run the cell over ``x`` [m, d_in]; returns (hs, zs, rs, ns, hwn).

    hs is [m+1, H] with hs[0] = h0; the other stashes are the per-step gate
    activations and the h-contribution to the candidate, kept for backward.
    """
    m = x.shape[0]
    h = h0.shape[0]
    xw = x @ wx
    hs = np.empty((m + 1, h))
    hs[0] = h0
    zs = np.empty((m, h))
    rs = np.empty((m, h))
    ns = np.empty((m, h))
    hwn = np.empty((m, h))
    for t in range(m):
        hw = hs[t] @ wh
        z = 1.0 / (1.0 + np.exp(-(xw[t, :h] + hw[:h] + b[:h])))
        r = 1.0 / (1.0 + np.exp(-(xw[t, h:2 * h] + hw[h:2 * h] + b[h:2 * h])))
        n = np.tanh(xw[t, 2 * h:] + r * hw[2 * h:] + b[2 * h:])
        zs[t] = z
        rs[t] = r
        ns[t] = n
        hwn[t] = hw[2 * h:]
        hs[t + 1] = z * hs[t] + (1.0 - z) * n
    return hs, zs, rs, ns, hwn


@kernel
def gru_backward(dout, x, wx, wh, hs, zs, rs, ns, hwn):
    """Backward through :func:`gru_forward`.

    ``dout`` [m, H] holds the loss gradient w.r.t. every output state h_t.
    Returns (dx, dh0, dwx, dwh, db).
    """
    m = x.shape[0]
    h = dout.shape[1]
    whT = np.ascontiguousarray(wh.T)
    dxw = np.empty((m, 3 * h))
    dhw = np.empty((m, 3 * h))
    dh = np.zeros(h)
    for t in range(m - 1, -1, -1):
        dh = dh + dout[t]
        z = zs[t]
        r = rs[t]
        n = ns[t]
        dz = dh * (hs[t] - n) * z * (1.0 - z)
        dc = dh * (1.0 - z) * (1.0 - n * n)
        dr = dc * hwn[t] * r * (1.0 - r)
        dxw[t, :h] = dz
        dxw[t, h:2 * h] = dr
        dxw[t, 2 * h:] = dc
        dhw[t, :h] = dz
        dhw[t, h:2 * h] = dr
        dhw[t, 2 * h:] = dc * r
        dh = dh * z + dhw[t] @ whT
    xT = np.ascontiguousarray(x.T)
    hsT = np.ascontiguousarray(hs[:m].T)
    dwx = xT @ dxw
    dwh = hsT @ dhw
    dx = dxw @ np.ascontiguousarray(wx.T)
    db = np.sum(dxw, axis=0)
    return dx, dh, dwx, dwh, db
