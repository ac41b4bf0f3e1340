"""Batched forward/backward step kernels for every recurrent cell.

Conventions shared by all kernels:

* ``h_prev`` is ``(B, H)``, ``x`` is ``(B, D)``; weight matrices that act on
  the concatenation ``[h, x]`` are ``(H, H + D)``.
* ``m`` is a ``(B, 1)`` float mask, 1 for live steps and 0 for padding.  A
  padded step carries the previous state through unchanged and, in the
  backward direction, passes the incoming gradient straight to the previous
  step while contributing nothing to parameter or input gradients.
* Forward kernels return the new (masked) state first, then every
  intermediate the matching backward kernel needs, so nothing is recomputed.
"""

import numpy as np

from ._jit import njit
from .core import relu, sigmoid


@njit
def simple_forward(W, b, h_prev, x, m, use_relu):
    hx = np.concatenate((h_prev, x), axis=1)
    a = np.dot(hx, W.T) + b
    if use_relu:
        h_new = relu(a)
    else:
        h_new = np.tanh(a)
    h = m * h_new + (1.0 - m) * h_prev
    return h, hx, a, h_new


@njit
def simple_backward(W, hx, a, h_new, dh, m, use_relu):
    H = W.shape[0]
    g = dh * m
    if use_relu:
        da = g * (a > 0.0)
    else:
        da = g * (1.0 - h_new * h_new)
    dW = np.dot(da.T, hx)
    db = da.sum(axis=0)
    dhx = np.dot(da, W)
    dh_prev = dh * (1.0 - m) + dhx[:, :H]
    dx = dhx[:, H:].copy()
    return dW, db, dh_prev, dx


@njit
def mgu_forward(W_f, b_f, W_h, b_h, h_prev, x, m):
    hx = np.concatenate((h_prev, x), axis=1)
    f = sigmoid(np.dot(hx, W_f.T) + b_f)
    hx2 = np.concatenate((f * h_prev, x), axis=1)
    h_tilde = np.tanh(np.dot(hx2, W_h.T) + b_h)
    h_new = (1.0 - f) * h_prev + f * h_tilde
    h = m * h_new + (1.0 - m) * h_prev
    return h, hx, f, hx2, h_tilde


@njit
def mgu_backward(W_f, W_h, h_prev, hx, f, hx2, h_tilde, dh, m):
    H = W_f.shape[0]
    g = dh * m
    df = g * (h_tilde - h_prev)
    da_h = g * f * (1.0 - h_tilde * h_tilde)
    dW_h = np.dot(da_h.T, hx2)
    db_h = da_h.sum(axis=0)
    dhx2 = np.dot(da_h, W_h)
    d_fh = dhx2[:, :H]
    df = df + d_fh * h_prev
    da_f = df * f * (1.0 - f)
    dW_f = np.dot(da_f.T, hx)
    db_f = da_f.sum(axis=0)
    dhx = np.dot(da_f, W_f)
    dh_prev = dh * (1.0 - m) + g * (1.0 - f) + d_fh * f + dhx[:, :H]
    dx = dhx2[:, H:] + dhx[:, H:]
    return dW_f, db_f, dW_h, db_h, dh_prev, dx


@njit
def gru_forward(W_z, b_z, W_r, b_r, W_h, b_h, h_prev, x, m):
    hx = np.concatenate((h_prev, x), axis=1)
    z = sigmoid(np.dot(hx, W_z.T) + b_z)
    r = sigmoid(np.dot(hx, W_r.T) + b_r)
    hx2 = np.concatenate((r * h_prev, x), axis=1)
    h_tilde = np.tanh(np.dot(hx2, W_h.T) + b_h)
    h_new = (1.0 - z) * h_prev + z * h_tilde
    h = m * h_new + (1.0 - m) * h_prev
    return h, hx, z, r, hx2, h_tilde


@njit
def gru_forward_original(W_z, b_z, W_r, b_r, W_h, b_h, h_prev, x, m):
    # Cho et al.'s form: keep-gate on h_prev, evaluated at the negated pre-activation
    hx = np.concatenate((h_prev, x), axis=1)
    z_keep = sigmoid(-(np.dot(hx, W_z.T) + b_z))
    r = sigmoid(np.dot(hx, W_r.T) + b_r)
    hx2 = np.concatenate((r * h_prev, x), axis=1)
    h_tilde = np.tanh(np.dot(hx2, W_h.T) + b_h)
    h_new = z_keep * h_prev + (1.0 - z_keep) * h_tilde
    h = m * h_new + (1.0 - m) * h_prev
    return h, hx, 1.0 - z_keep, r, hx2, h_tilde


@njit
def gru_backward(W_z, W_r, W_h, h_prev, hx, z, r, hx2, h_tilde, dh, m):
    H = W_z.shape[0]
    g = dh * m
    dz = g * (h_tilde - h_prev)
    da_h = g * z * (1.0 - h_tilde * h_tilde)
    dW_h = np.dot(da_h.T, hx2)
    db_h = da_h.sum(axis=0)
    dhx2 = np.dot(da_h, W_h)
    d_rh = dhx2[:, :H]
    da_r = d_rh * h_prev * r * (1.0 - r)
    da_z = dz * z * (1.0 - z)
    dW_z = np.dot(da_z.T, hx)
    db_z = da_z.sum(axis=0)
    dW_r = np.dot(da_r.T, hx)
    db_r = da_r.sum(axis=0)
    dhx = np.dot(da_z, W_z) + np.dot(da_r, W_r)
    dh_prev = dh * (1.0 - m) + g * (1.0 - z) + d_rh * r + dhx[:, :H]
    dx = dhx2[:, H:] + dhx[:, H:]
    return dW_z, db_z, dW_r, db_r, dW_h, db_h, dh_prev, dx


@njit
def lstm_forward(W_f, b_f, W_i, b_i, W_o, b_o, W_c, b_c, h_prev, c_prev, x, m):
    hx = np.concatenate((h_prev, x), axis=1)
    f = sigmoid(np.dot(hx, W_f.T) + b_f)
    i = sigmoid(np.dot(hx, W_i.T) + b_i)
    o = sigmoid(np.dot(hx, W_o.T) + b_o)
    c_tilde = np.tanh(np.dot(hx, W_c.T) + b_c)
    c_new = f * c_prev + i * c_tilde
    tanh_c = np.tanh(c_new)
    h_new = o * tanh_c
    h = m * h_new + (1.0 - m) * h_prev
    c = m * c_new + (1.0 - m) * c_prev
    return h, c, hx, f, i, o, c_tilde, c_new, tanh_c


@njit
def lstm_backward(W_f, W_i, W_o, W_c, c_prev, hx, f, i, o, c_tilde, tanh_c, dh, dc, m):
    H = W_f.shape[0]
    gh = dh * m
    dct = dc * m + gh * o * (1.0 - tanh_c * tanh_c)
    da_f = dct * c_prev * f * (1.0 - f)
    da_i = dct * c_tilde * i * (1.0 - i)
    da_o = gh * tanh_c * o * (1.0 - o)
    da_c = dct * i * (1.0 - c_tilde * c_tilde)
    dW_f = np.dot(da_f.T, hx)
    dW_i = np.dot(da_i.T, hx)
    dW_o = np.dot(da_o.T, hx)
    dW_c = np.dot(da_c.T, hx)
    dhx = np.dot(da_f, W_f) + np.dot(da_i, W_i) + np.dot(da_o, W_o) + np.dot(da_c, W_c)
    dh_prev = dh * (1.0 - m) + dhx[:, :H]
    dc_prev = dc * (1.0 - m) + dct * f
    dx = dhx[:, H:].copy()
    return (dW_f, da_f.sum(axis=0), dW_i, da_i.sum(axis=0), dW_o, da_o.sum(axis=0),
            dW_c, da_c.sum(axis=0), dh_prev, dc_prev, dx)


@njit
def coupled_lstm_forward(W_f, b_f, W_o, b_o, W_c, b_c, h_prev, c_prev, x, m):
    hx = np.concatenate((h_prev, x), axis=1)
    f = sigmoid(np.dot(hx, W_f.T) + b_f)
    i = 1.0 - f
    o = sigmoid(np.dot(hx, W_o.T) + b_o)
    c_tilde = np.tanh(np.dot(hx, W_c.T) + b_c)
    c_new = f * c_prev + i * c_tilde
    tanh_c = np.tanh(c_new)
    h_new = o * tanh_c
    h = m * h_new + (1.0 - m) * h_prev
    c = m * c_new + (1.0 - m) * c_prev
    return h, c, hx, f, i, o, c_tilde, c_new, tanh_c


@njit
def coupled_lstm_backward(W_f, W_o, W_c, c_prev, hx, f, i, o, c_tilde, tanh_c, dh, dc, m):
    H = W_f.shape[0]
    gh = dh * m
    dct = dc * m + gh * o * (1.0 - tanh_c * tanh_c)
    da_f = dct * (c_prev - c_tilde) * f * (1.0 - f)
    da_o = gh * tanh_c * o * (1.0 - o)
    da_c = dct * i * (1.0 - c_tilde * c_tilde)
    dW_f = np.dot(da_f.T, hx)
    dW_o = np.dot(da_o.T, hx)
    dW_c = np.dot(da_c.T, hx)
    dhx = np.dot(da_f, W_f) + np.dot(da_o, W_o) + np.dot(da_c, W_c)
    dh_prev = dh * (1.0 - m) + dhx[:, :H]
    dc_prev = dc * (1.0 - m) + dct * f
    dx = dhx[:, H:].copy()
    return (dW_f, da_f.sum(axis=0), dW_o, da_o.sum(axis=0), dW_c, da_c.sum(axis=0),
            dh_prev, dc_prev, dx)


@njit
def scrn_forward(B, P, A, R, alpha, h_prev, s_prev, x, m):
    s_new = alpha * s_prev + (1.0 - alpha) * np.dot(x, B.T)
    h_new = sigmoid(np.dot(s_new, P.T) + np.dot(x, A.T) + np.dot(h_prev, R.T))
    h = m * h_new + (1.0 - m) * h_prev
    s = m * s_new + (1.0 - m) * s_prev
    return h, s, s_new, h_new


@njit
def scrn_backward(B, P, A, R, alpha, h_prev, x, s_new, h_new, dh, ds, m):
    gh = dh * m
    da = gh * h_new * (1.0 - h_new)
    dst = ds * m + np.dot(da, P)
    dP = np.dot(da.T, s_new)
    dA = np.dot(da.T, x)
    dR = np.dot(da.T, h_prev)
    dBx = (1.0 - alpha) * dst
    dB = np.dot(dBx.T, x)
    dh_prev = dh * (1.0 - m) + np.dot(da, R)
    ds_prev = ds * (1.0 - m) + alpha * dst
    dx = np.dot(da, A) + np.dot(dBx, B)
    return dB, dP, dA, dR, dh_prev, ds_prev, dx
