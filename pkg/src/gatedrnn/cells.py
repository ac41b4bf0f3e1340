"""Recurrent cells: parameters, forward steps, analytic backward steps, counts.

Every cell that mixes the previous hidden state with the input does so through
matrices of shape ``(H, H + D)`` applied to the concatenation ``[h, x]``.
State and input arrays may be 1-D (a single example) or 2-D ``(batch, width)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from .core import Rng, glorot_uniform
from .errors import ShapeError

__all__ = [
    "CellKind",
    "CellParams",
    "CellState",
    "StepTrace",
    "backward_step",
    "init_params",
    "madd_count",
    "param_count",
    "step",
    "step_gru",
    "step_lstm",
    "step_mgu",
    "step_scrn",
    "step_simple",
]


class CellKind(enum.Enum):
    SIMPLE = "simple"
    IRNN = "irnn"
    LSTM = "lstm"
    COUPLED_LSTM = "coupled_lstm"
    GRU = "gru"
    MGU = "mgu"
    SCRN = "scrn"

    @classmethod
    def parse(cls, name) -> CellKind:
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "_")
        aliases = {"tanh": "simple", "simple_tanh": "simple", "simpletanh": "simple",
                   "coupledlstm": "coupled_lstm", "coupled": "coupled_lstm"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown cell kind {name!r}; expected one of {names}") from None

    @property
    def has_cell_state(self) -> bool:
        return self in (CellKind.LSTM, CellKind.COUPLED_LSTM)


# (name, kind of matrix): "hx" -> (H, H+D), "b" -> (H,)
_GATE_SETS = {
    CellKind.SIMPLE: ("",),
    CellKind.IRNN: ("",),
    CellKind.LSTM: ("f", "i", "o", "c"),
    CellKind.COUPLED_LSTM: ("f", "o", "c"),
    CellKind.GRU: ("z", "r", "h"),
    CellKind.MGU: ("f", "h"),
}

# gate whose bias receives ``forget_bias`` at initialisation
_FORGET_GATE = {CellKind.LSTM: "b_f", CellKind.COUPLED_LSTM: "b_f", CellKind.MGU: "b_f",
                CellKind.GRU: "b_z"}


def _param_names(kind: CellKind) -> list[str]:
    if kind is CellKind.SCRN:
        return ["B", "P", "A", "R"]
    names = []
    for g in _GATE_SETS[kind]:
        names += ["W" if not g else f"W_{g}", "b" if not g else f"b_{g}"]
    return names


def param_shapes(kind, hidden: int, input_dim: int, context: int = 0) -> dict[str, tuple[int, ...]]:
    kind = CellKind.parse(kind)
    h, d, p = hidden, input_dim, context
    if kind is CellKind.SCRN:
        return {"B": (p, d), "P": (h, p), "A": (h, d), "R": (h, h)}
    return {n: ((h, h + d) if n.startswith("W") else (h,)) for n in _param_names(kind)}


@dataclass
class CellParams:
    """Weights of one recurrent cell, keyed by their names in the cell equations."""

    kind: CellKind
    hidden: int
    input_dim: int
    arrays: dict[str, np.ndarray]
    context: int = 0
    alpha: float = 0.95

    def __post_init__(self):
        self.kind = CellKind.parse(self.kind)
        expected = param_shapes(self.kind, self.hidden, self.input_dim, self.context)
        if set(expected) != set(self.arrays):
            raise ShapeError(f"{self.kind.value}: expected parameters {sorted(expected)}, "
                             f"got {sorted(self.arrays)}")
        for name, shape in expected.items():
            arr = np.ascontiguousarray(self.arrays[name], dtype=np.float64)
            if arr.shape != shape:
                raise ShapeError(f"{self.kind.value}.{name}: expected shape {shape}, got {arr.shape}")
            self.arrays[name] = arr
        if self.kind is CellKind.SCRN and not 0.0 < self.alpha < 1.0:
            raise ValueError(f"SCRN alpha must lie in (0, 1), got {self.alpha}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def names(self) -> list[str]:
        return _param_names(self.kind)

    def copy(self) -> CellParams:
        return CellParams(self.kind, self.hidden, self.input_dim,
                          {k: v.copy() for k, v in self.arrays.items()},
                          self.context, self.alpha)

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.arrays.items()}


@dataclass
class CellState:
    h: np.ndarray
    c: np.ndarray | None = None
    s: np.ndarray | None = None

    @property
    def aux(self):
        return self.c if self.c is not None else self.s


@dataclass
class StepTrace:
    """Intermediates of one forward step, in the order the backward kernel wants them."""

    kind: CellKind
    values: dict[str, np.ndarray] = field(default_factory=dict)
    mask: np.ndarray | None = None
    use_relu: bool = False

    def __getitem__(self, name):
        return self.values[name]


_TRACE_FIELDS = {
    CellKind.SIMPLE: ("h_prev", "hx", "a", "h_new"),
    CellKind.IRNN: ("h_prev", "hx", "a", "h_new"),
    CellKind.MGU: ("h_prev", "hx", "f", "hx2", "h_tilde"),
    CellKind.GRU: ("h_prev", "hx", "z", "r", "hx2", "h_tilde"),
    CellKind.LSTM: ("h_prev", "c_prev", "hx", "f", "i", "o", "c_tilde", "c", "tanh_c"),
    CellKind.COUPLED_LSTM: ("h_prev", "c_prev", "hx", "f", "i", "o", "c_tilde", "c", "tanh_c"),
    CellKind.SCRN: ("h_prev", "s_prev", "x", "s", "h_new"),
}


def init_params(kind, hidden: int, input_dim: int, context: int = 0, rng: Rng | None = None,
                forget_bias: float = 1.0, alpha: float = 0.95) -> CellParams:
    """Glorot-uniform weights, zero biases except the forget/update gate bias.

    IRNN gets an identity recurrent block; its input block is Glorot-uniform.
    """
    kind = CellKind.parse(kind)
    if hidden < 1 or input_dim < 0:
        raise ShapeError(f"invalid cell dims hidden={hidden}, input={input_dim}")
    if (kind is CellKind.SCRN) != (context >= 1):
        raise ShapeError(f"context size must be >= 1 exactly for SCRN, got {context} for {kind.value}")
    rng = rng if rng is not None else Rng(0)
    arrays = {}
    for name, shape in param_shapes(kind, hidden, input_dim, context).items():
        if len(shape) == 1:
            arrays[name] = np.zeros(shape)
        elif kind is CellKind.IRNN:
            W = np.zeros(shape)
            W[:, :hidden] = np.eye(hidden)
            if input_dim:
                W[:, hidden:] = glorot_uniform(hidden, input_dim, rng)
            arrays[name] = W
        elif 0 in shape:
            arrays[name] = np.zeros(shape)
        else:
            arrays[name] = glorot_uniform(shape[0], shape[1], rng)
    if kind in _FORGET_GATE:
        arrays[_FORGET_GATE[kind]][:] = forget_bias
    return CellParams(kind, hidden, input_dim, arrays, context, alpha)


# ---------------------------------------------------------------------------
# forward


def _batched(a, width, what):
    a = np.asarray(a, dtype=np.float64)
    single = a.ndim == 1
    a2 = a.reshape(1, -1) if single else a
    if a2.ndim != 2 or a2.shape[1] != width:
        raise ShapeError(f"{what}: expected width {width}, got array of shape {a.shape}")
    return np.ascontiguousarray(a2), single


def forward_raw(params: CellParams, h, aux, x, m, use_relu=False):
    """Kernel-level step on 2-D arrays; returns ``(h, aux, trace_values)``."""
    k, p = params.kind, params.arrays
    if k is CellKind.MGU:
        h_new, *rest = K.mgu_forward(p["W_f"], p["b_f"], p["W_h"], p["b_h"], h, x, m)
        return h_new, None, (h, *rest)
    if k is CellKind.GRU:
        h_new, *rest = K.gru_forward(p["W_z"], p["b_z"], p["W_r"], p["b_r"], p["W_h"], p["b_h"], h, x, m)
        return h_new, None, (h, *rest)
    if k is CellKind.LSTM:
        h_new, c_new, *rest = K.lstm_forward(p["W_f"], p["b_f"], p["W_i"], p["b_i"], p["W_o"], p["b_o"],
                                             p["W_c"], p["b_c"], h, aux, x, m)
        return h_new, c_new, (h, aux, *rest)
    if k is CellKind.COUPLED_LSTM:
        h_new, c_new, *rest = K.coupled_lstm_forward(p["W_f"], p["b_f"], p["W_o"], p["b_o"],
                                                     p["W_c"], p["b_c"], h, aux, x, m)
        return h_new, c_new, (h, aux, *rest)
    if k is CellKind.SCRN:
        h_new, s_new, *rest = K.scrn_forward(p["B"], p["P"], p["A"], p["R"], params.alpha, h, aux, x, m)
        return h_new, s_new, (h, aux, x, *rest)
    use_relu = use_relu or k is CellKind.IRNN
    h_new, *rest = K.simple_forward(p["W"], p["b"], h, x, m, use_relu)
    return h_new, None, (h, *rest)


def initial_aux(params: CellParams, batch: int):
    if params.kind.has_cell_state:
        return np.zeros((batch, params.hidden))
    if params.kind is CellKind.SCRN:
        return np.zeros((batch, params.context))
    return None


def step(params: CellParams, state: CellState, x, activation: str | None = None):
    """One forward step of any cell kind; returns ``(new_state, trace)``."""
    kind = params.kind
    h, single = _batched(state.h, params.hidden, f"{kind.value} hidden state")
    x2, _ = _batched(x, params.input_dim, f"{kind.value} input")
    if x2.shape[0] != h.shape[0]:
        raise ShapeError(f"batch size mismatch: state {h.shape[0]} vs input {x2.shape[0]}")
    aux = None
    if kind.has_cell_state or kind is CellKind.SCRN:
        width = params.hidden if kind.has_cell_state else params.context
        label = "cell state c" if kind.has_cell_state else "context state s"
        if state.aux is None:
            raise ShapeError(f"{kind.value} step needs a {label}")
        aux, _ = _batched(state.aux, width, f"{kind.value} {label}")
    use_relu = False
    if activation is not None:
        if kind not in (CellKind.SIMPLE, CellKind.IRNN):
            raise ValueError("activation override only applies to simple/irnn cells")
        if activation not in ("tanh", "relu"):
            raise ValueError(f"activation must be 'tanh' or 'relu', got {activation!r}")
        use_relu = activation == "relu"
    elif kind is CellKind.IRNN:
        use_relu = True
    m = np.ones((h.shape[0], 1))
    h_new, aux_new, raw = forward_raw(params, h, aux, x2, m, use_relu)
    trace = StepTrace(kind, dict(zip(_TRACE_FIELDS[kind], raw)), m, use_relu)
    trace.values["x"] = x2
    trace.values["h"] = h_new
    if single:
        h_new = h_new[0]
        aux_new = aux_new[0] if aux_new is not None else None
    if kind.has_cell_state:
        return CellState(h_new, c=aux_new), trace
    if kind is CellKind.SCRN:
        return CellState(h_new, s=aux_new), trace
    return CellState(h_new), trace


def _check_kind(params, expected):
    if params.kind not in expected:
        raise ShapeError(f"expected {'/'.join(k.value for k in expected)} parameters, got {params.kind.value}")


def step_mgu(params: CellParams, state: CellState, x):
    _check_kind(params, (CellKind.MGU,))
    return step(params, state, x)


def step_gru(params: CellParams, state: CellState, x, original_form: bool = False):
    """GRU step; ``original_form`` uses h = z'*h_prev + (1 - z')*h~ with z' = sigmoid(-a_z)."""
    _check_kind(params, (CellKind.GRU,))
    if not original_form:
        return step(params, state, x)
    h, single = _batched(state.h, params.hidden, "gru hidden state")
    x2, _ = _batched(x, params.input_dim, "gru input")
    p = params.arrays
    m = np.ones((h.shape[0], 1))
    h_new, *rest = K.gru_forward_original(p["W_z"], p["b_z"], p["W_r"], p["b_r"], p["W_h"], p["b_h"],
                                          h, x2, m)
    trace = StepTrace(CellKind.GRU, dict(zip(_TRACE_FIELDS[CellKind.GRU], (h, *rest))), m)
    trace.values["x"] = x2
    trace.values["h"] = h_new
    return CellState(h_new[0] if single else h_new), trace


def step_lstm(params: CellParams, state: CellState, x, coupled: bool = False):
    _check_kind(params, (CellKind.COUPLED_LSTM,) if coupled else (CellKind.LSTM,))
    return step(params, state, x)


def step_scrn(params: CellParams, state: CellState, x):
    _check_kind(params, (CellKind.SCRN,))
    return step(params, state, x)


def step_simple(params: CellParams, state: CellState, x, activation: str = "tanh"):
    _check_kind(params, (CellKind.SIMPLE, CellKind.IRNN))
    return step(params, state, x, activation=activation)


# ---------------------------------------------------------------------------
# backward


def backward_raw(params: CellParams, trace_vals, dh, daux, m, use_relu=False):
    """Kernel-level backward; returns ``(grads, dh_prev, daux_prev, dx)``."""
    k, p = params.kind, params.arrays
    if k is CellKind.MGU:
        h_prev, hx, f, hx2, h_tilde = trace_vals[:5]
        dW_f, db_f, dW_h, db_h, dh_prev, dx = K.mgu_backward(p["W_f"], p["W_h"], h_prev, hx, f, hx2,
                                                             h_tilde, dh, m)
        return {"W_f": dW_f, "b_f": db_f, "W_h": dW_h, "b_h": db_h}, dh_prev, None, dx
    if k is CellKind.GRU:
        h_prev, hx, z, r, hx2, h_tilde = trace_vals[:6]
        out = K.gru_backward(p["W_z"], p["W_r"], p["W_h"], h_prev, hx, z, r, hx2, h_tilde, dh, m)
        grads = dict(zip(("W_z", "b_z", "W_r", "b_r", "W_h", "b_h"), out[:6]))
        return grads, out[6], None, out[7]
    if k is CellKind.LSTM:
        _, c_prev, hx, f, i, o, c_tilde, _, tanh_c = trace_vals[:9]
        out = K.lstm_backward(p["W_f"], p["W_i"], p["W_o"], p["W_c"], c_prev, hx, f, i, o, c_tilde,
                              tanh_c, dh, daux, m)
        grads = dict(zip(("W_f", "b_f", "W_i", "b_i", "W_o", "b_o", "W_c", "b_c"), out[:8]))
        return grads, out[8], out[9], out[10]
    if k is CellKind.COUPLED_LSTM:
        _, c_prev, hx, f, i, o, c_tilde, _, tanh_c = trace_vals[:9]
        out = K.coupled_lstm_backward(p["W_f"], p["W_o"], p["W_c"], c_prev, hx, f, i, o, c_tilde,
                                      tanh_c, dh, daux, m)
        grads = dict(zip(("W_f", "b_f", "W_o", "b_o", "W_c", "b_c"), out[:6]))
        return grads, out[6], out[7], out[8]
    if k is CellKind.SCRN:
        h_prev, _, x, s_new, h_new = trace_vals[:5]
        dB, dP, dA, dR, dh_prev, ds_prev, dx = K.scrn_backward(p["B"], p["P"], p["A"], p["R"], params.alpha,
                                                               h_prev, x, s_new, h_new, dh, daux, m)
        return {"B": dB, "P": dP, "A": dA, "R": dR}, dh_prev, ds_prev, dx
    _, hx, a, h_new = trace_vals[:4]
    use_relu = use_relu or k is CellKind.IRNN
    dW, db, dh_prev, dx = K.simple_backward(p["W"], hx, a, h_new, dh, m, use_relu)
    return {"W": dW, "b": db}, dh_prev, None, dx


def backward_step(params: CellParams, trace: StepTrace, grad_h, grad_c=None):
    """Reverse-mode derivatives of one step.

    ``grad_c`` is the gradient w.r.t. the step's cell state (LSTM family) or
    context state (SCRN); omitted means zero.  Returns
    ``(param_grads, grad_h_prev, grad_c_prev, grad_x)`` with ``grad_c_prev``
    None for cells without a second state.
    """
    if trace.kind is not params.kind:
        raise ShapeError(f"trace of a {trace.kind.value} step given to {params.kind.value} parameters")
    dh, single = _batched(grad_h, params.hidden, "grad_h")
    daux = None
    if params.kind.has_cell_state or params.kind is CellKind.SCRN:
        width = params.hidden if params.kind.has_cell_state else params.context
        daux = np.zeros((dh.shape[0], width)) if grad_c is None else _batched(grad_c, width, "grad_c")[0]
    vals = tuple(trace.values[n] for n in _TRACE_FIELDS[params.kind])
    m = trace.mask if trace.mask is not None else np.ones((dh.shape[0], 1))
    grads, dh_prev, daux_prev, dx = backward_raw(params, vals, dh, daux, m, trace.use_relu)
    if single:
        dh_prev, dx = dh_prev[0], dx[0]
        daux_prev = daux_prev[0] if daux_prev is not None else None
    return grads, dh_prev, daux_prev, dx


# ---------------------------------------------------------------------------
# counting

_N_GATE_SETS = {CellKind.LSTM: 4, CellKind.COUPLED_LSTM: 3, CellKind.GRU: 3, CellKind.MGU: 2,
                CellKind.SIMPLE: 1, CellKind.IRNN: 1}


def param_count(kind, hidden: int, input_dim: int, context: int = 0) -> int:
    """Trainable parameters of one cell: g * (h*(h+d) + h), SCRN p*d + h*p + h*d + h*h."""
    kind = CellKind.parse(kind)
    h, d, p = hidden, input_dim, context
    if kind is CellKind.SCRN:
        return p * d + h * p + h * d + h * h
    return _N_GATE_SETS[kind] * (h * (h + d) + h)


def madd_count(kind, hidden: int, input_dim: int, context: int = 0, affine_only: bool = False) -> int:
    """Multiply-adds of one forward step.

    The affine part counts the matrix-vector products; the elementwise part
    counts the gate products of the state update (bias additions, activations
    and the 1 - f complements are not multiply-adds and are excluded).
    """
    kind = CellKind.parse(kind)
    h, d, p = hidden, input_dim, context
    if kind is CellKind.SCRN:
        affine = p * d + h * p + h * d + h * h
        elementwise = 2 * p  # alpha*s and (1 - alpha)*Bx
    else:
        affine = _N_GATE_SETS[kind] * h * (h + d)
        elementwise = {CellKind.LSTM: 3 * h, CellKind.COUPLED_LSTM: 3 * h,
                       CellKind.GRU: 3 * h, CellKind.MGU: 3 * h}.get(kind, 0)
    return affine if affine_only else affine + elementwise
