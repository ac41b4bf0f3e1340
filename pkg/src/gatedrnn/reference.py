"""Independent loss evaluator used as the finite-difference oracle.

A deliberately plain re-implementation of the cell equations, the unrolling
and the losses: one example at a time, no padding or masks, no shared kernels,
and generic in the float dtype.  Running it in ``np.longdouble`` (80-bit on
x86-64 Linux) pushes the roundoff of a 1e-5 central difference far below the
1e-6 relative tolerance even for coordinates whose gradient is tiny.
"""

from __future__ import annotations

import numpy as np

from .cells import CellKind


def _sig(a):
    return 1 / (1 + np.exp(-a))


def _cell(kind: CellKind, P: dict, alpha, h, aux, x, dtype):
    one = dtype(1)
    hx = np.concatenate([h, x])
    if kind in (CellKind.SIMPLE, CellKind.IRNN):
        a = P["W"] @ hx + P["b"]
        return (np.maximum(a, 0) if kind is CellKind.IRNN else np.tanh(a)), None
    if kind is CellKind.MGU:
        f = _sig(P["W_f"] @ hx + P["b_f"])
        cand = np.tanh(P["W_h"] @ np.concatenate([f * h, x]) + P["b_h"])
        return (one - f) * h + f * cand, None
    if kind is CellKind.GRU:
        z = _sig(P["W_z"] @ hx + P["b_z"])
        r = _sig(P["W_r"] @ hx + P["b_r"])
        cand = np.tanh(P["W_h"] @ np.concatenate([r * h, x]) + P["b_h"])
        return (one - z) * h + z * cand, None
    if kind in (CellKind.LSTM, CellKind.COUPLED_LSTM):
        f = _sig(P["W_f"] @ hx + P["b_f"])
        i = one - f if kind is CellKind.COUPLED_LSTM else _sig(P["W_i"] @ hx + P["b_i"])
        o = _sig(P["W_o"] @ hx + P["b_o"])
        c = f * aux + i * np.tanh(P["W_c"] @ hx + P["b_c"])
        return o * np.tanh(c), c
    if kind is CellKind.SCRN:
        s = alpha * aux + (one - alpha) * (P["B"] @ x)
        return _sig(P["P"] @ s + P["A"] @ x + P["R"] @ h), s
    raise ValueError(kind)


def _run(params, kind, alpha, seq, dtype):
    """Outputs of one direction over one sequence (list of 1-D arrays)."""
    h = np.zeros(params_hidden(params, kind), dtype=dtype)
    aux = None
    if kind in (CellKind.LSTM, CellKind.COUPLED_LSTM):
        aux = np.zeros_like(h)
    elif kind is CellKind.SCRN:
        aux = np.zeros(params["B"].shape[0], dtype=dtype)
    outs = []
    for x in seq:
        h, aux = _cell(kind, params, alpha, h, aux, x, dtype)
        outs.append(h)
    return outs, h


def params_hidden(params, kind):
    return params["R"].shape[0] if kind is CellKind.SCRN else next(v for k, v in params.items() if k.startswith("b")).shape[0]


def _log_softmax(z):
    z = z - z.max()
    return z - np.log(np.exp(z).sum())


def reference_loss(stack, theta: dict[str, np.ndarray], batch, dtype=np.longdouble):
    """Loss of ``stack``'s architecture with parameter values ``theta`` on ``batch``.

    ``theta`` maps the names of ``stack.named_parameters()`` to arrays (any
    float dtype; they are used as given).
    """
    n_dirs = stack.n_dirs
    dir_names = ("fw", "bw")[:n_dirs]
    layer_params = []
    for li, dirs in enumerate(stack.layers):
        entry = []
        for dn, p in zip(dir_names, dirs):
            pref = f"layer{li}.{dn}."
            entry.append(({n: theta[pref + n] for n in p.names()}, p.kind, dtype(p.alpha)))
        layer_params.append(entry)
    W, b = theta["readout.W"], theta["readout.b"]
    kind = stack.readout.kind

    total = dtype(0)
    count = 0
    for e in range(len(batch)):
        L = int(batch.lengths[e])
        if stack.uses_tokens:
            seq = [theta["embedding"][int(tok)] for tok in batch.inputs[e, :L]]
        else:
            seq = [np.asarray(v, dtype=dtype) for v in batch.inputs[e, :L]]
        finals = None
        for entry in layer_params:
            per_dir, finals = [], []
            for k, (P, ck, alpha) in enumerate(entry):
                src = seq if k == 0 else seq[::-1]
                outs, hT = _run(P, ck, alpha, src, dtype)
                per_dir.append(outs if k == 0 else outs[::-1])
                finals.append(hT)
            seq = [np.concatenate([d[t] for d in per_dir]) for t in range(L)]
        if kind == "lm":
            for t in range(L):
                logp = _log_softmax(W @ seq[t] + b)
                total -= logp[int(batch.targets[e, t])]
                count += 1
            continue
        feat = np.concatenate(finals)
        out = W @ feat + b
        if kind == "regression":
            total += (out[0] - dtype(batch.targets[e])) ** 2
        else:
            total -= _log_softmax(out)[int(batch.targets[e])]
        count += 1
    return total / max(count, 1)
