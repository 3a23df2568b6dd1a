"""Siamese state-action Q-network in plain numpy.

Data flow: token ids -> shared embedding -> shared LSTM (final hidden state) ->
per-branch tanh dense layer -> cosine similarity -> scaled Q-value.
Gradients are computed by hand (backprop through time over masked batches).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .text import PAD_ID, TokenSeq, pad_batch

BLOCKS = (
    "embedding",
    "lstm_wx",
    "lstm_wh",
    "lstm_b",
    "state_w",
    "state_b",
    "action_w",
    "action_b",
)
# gate layout inside the 4*H LSTM pre-activation: input, forget, output, candidate
GATE_I, GATE_F, GATE_O, GATE_G = range(4)

Gradients = dict  # block name -> ndarray shaped like the parameter block


class NumericError(FloatingPointError):
    """A non-finite value appeared; ``layer`` names where."""

    def __init__(self, layer: str):
        super().__init__(f"non-finite values in layer {layer!r}")
        self.layer = layer


@dataclass(frozen=True)
class NetConfig:
    embedding_dim: int = 16
    lstm_dim: int = 32
    dense_dim: int = 8
    init_range: float = 0.05

    def __post_init__(self):
        if min(self.embedding_dim, self.lstm_dim, self.dense_dim) < 1:
            raise ValueError("all layer dimensions must be >= 1")


@dataclass
class NetworkParams:
    embedding: np.ndarray  # (V, E)
    lstm_wx: np.ndarray  # (E, 4H)
    lstm_wh: np.ndarray  # (H, 4H)
    lstm_b: np.ndarray  # (4H,)
    state_w: np.ndarray  # (H, D)
    state_b: np.ndarray  # (D,)
    action_w: np.ndarray  # (H, D)
    action_b: np.ndarray  # (D,)
    reward_scale: float = 1.0

    @property
    def config(self) -> NetConfig:
        return NetConfig(self.embedding.shape[1], self.lstm_wh.shape[0], self.state_w.shape[1])

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    def blocks(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in BLOCKS}

    def copy(self) -> "NetworkParams":
        return NetworkParams(**{k: v.copy() for k, v in self.blocks().items()}, reward_scale=self.reward_scale)

    def zeros_like(self) -> Gradients:
        return {k: np.zeros_like(v) for k, v in self.blocks().items()}


def init_params(cfg: NetConfig, vocab_size: int, seed: int, reward_scale: float = 1.0) -> NetworkParams:
    """Weights uniform in [-init_range, init_range]; biases zero except forget gate = 1."""
    if vocab_size < 2:
        raise ValueError("vocab_size must be >= 2")
    if not reward_scale > 0:
        raise ValueError("reward_scale must be positive")
    rng = np.random.default_rng(seed)
    E, H, D, r = cfg.embedding_dim, cfg.lstm_dim, cfg.dense_dim, cfg.init_range

    def uniform(*shape):
        return rng.uniform(-r, r, size=shape) if r > 0 else np.zeros(shape)

    lstm_b = np.zeros(4 * H)
    lstm_b[GATE_F * H : (GATE_F + 1) * H] = 1.0
    return NetworkParams(
        embedding=uniform(vocab_size, E),
        lstm_wx=uniform(E, 4 * H),
        lstm_wh=uniform(H, 4 * H),
        lstm_b=lstm_b,
        state_w=uniform(H, D),
        state_b=np.zeros(D),
        action_w=uniform(H, D),
        action_b=np.zeros(D),
        reward_scale=float(reward_scale),
    )


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _gates(params: NetworkParams, x, h_prev):
    H = params.lstm_wh.shape[0]
    z = x @ params.lstm_wx + h_prev @ params.lstm_wh + params.lstm_b
    i = _sigmoid(z[..., :H])
    f = _sigmoid(z[..., H : 2 * H])
    o = _sigmoid(z[..., 2 * H : 3 * H])
    g = np.tanh(z[..., 3 * H :])
    return i, f, o, g


def lstm_step(params: NetworkParams, x, h_prev, c_prev):
    """One LSTM cell update; works on single vectors or row-batches."""
    x, h_prev, c_prev = (np.asarray(a, dtype=float) for a in (x, h_prev, c_prev))
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(h_prev)) and np.all(np.isfinite(c_prev))):
        raise NumericError("lstm")
    i, f, o, g = _gates(params, x, h_prev)
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c


@dataclass
class _LstmTape:
    ids: np.ndarray
    steps: list = field(default_factory=list)


def _encode(params: NetworkParams, ids: np.ndarray, keep_tape: bool = False):
    """Run the shared LSTM over a padded id matrix; returns final hidden states (B, H)."""
    B, T = ids.shape
    H = params.lstm_wh.shape[0]
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    tape = _LstmTape(ids) if keep_tape else None
    live_all = ids != PAD_ID
    for t in range(T):
        live = live_all[:, t : t + 1]
        x = params.embedding[ids[:, t]]
        i, f, o, g = _gates(params, x, h)
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        if tape is not None:
            tape.steps.append((x, h, c, i, f, o, g, tc, live))
        # np.where keeps masked rows bit-identical to their previous state
        h = np.where(live, h_new, h)
        c = np.where(live, c_new, c)
    if not np.all(np.isfinite(h)):
        raise NumericError("lstm")
    return h, tape


def _branch_weights(params: NetworkParams, branch: str):
    if branch == "state":
        return params.state_w, params.state_b
    if branch == "action":
        return params.action_w, params.action_b
    raise ValueError(f"unknown branch {branch!r}")


def branch_outputs(params: NetworkParams, seqs: Sequence[TokenSeq], branch: str) -> np.ndarray:
    """Dense activations (N, D) for a list of non-empty sequences."""
    if any(len(s) == 0 for s in seqs):
        raise ValueError("cannot embed an empty sequence")
    ids, _ = pad_batch(seqs)
    h, _ = _encode(params, ids)
    w, b = _branch_weights(params, branch)
    out = np.tanh(h @ w + b)
    if not np.all(np.isfinite(out)):
        raise NumericError(f"dense_{branch}")
    return out


def branch_forward(params: NetworkParams, seq: TokenSeq | Sequence[int], branch: str) -> np.ndarray:
    """Dense activation vector for one sequence; trailing pad ids are ignored."""
    ids = seq.ids if isinstance(seq, TokenSeq) else tuple(seq)
    if not any(i != PAD_ID for i in ids):
        raise ValueError("cannot embed an empty sequence")
    return branch_outputs(params, [TokenSeq(tuple(ids))], branch)[0]


def cosine_similarity(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("vectors must have equal length")
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(np.clip(x @ y / (nx * ny), -1.0, 1.0))


def _row_cosine(u: np.ndarray, v: np.ndarray):
    nu = np.linalg.norm(u, axis=1)
    nv = np.linalg.norm(v, axis=1)
    if np.any(nu == 0.0) or np.any(nv == 0.0):
        raise ValueError("cosine similarity is undefined for a zero vector")
    return np.sum(u * v, axis=1) / (nu * nv), nu, nv


def q_value(params: NetworkParams, state_seq: TokenSeq, action_seq: TokenSeq) -> float:
    u = branch_forward(params, state_seq, "state")
    v = branch_forward(params, action_seq, "action")
    return params.reward_scale * cosine_similarity(u, v)


def q_values(params: NetworkParams, state_seqs: Sequence[TokenSeq], action_seqs: Sequence[TokenSeq]) -> np.ndarray:
    """Row-wise Q for paired lists of state and action sequences."""
    u = branch_outputs(params, state_seqs, "state")
    v = branch_outputs(params, action_seqs, "action")
    cos, _, _ = _row_cosine(u, v)
    return params.reward_scale * cos


def mse_loss(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape:
        raise ValueError("predictions and targets differ in length")
    if p.size == 0:
        raise ValueError("empty batch")
    return float(np.mean((p - t) ** 2))


def _lstm_backward(params: NetworkParams, tape: _LstmTape, dh: np.ndarray, grads: Gradients) -> None:
    """Accumulate LSTM and embedding gradients given dLoss/d(final hidden)."""
    H = params.lstm_wh.shape[0]
    dc = np.zeros_like(dh)
    wx_t = params.lstm_wx.T
    wh_t = params.lstm_wh.T
    for t in range(len(tape.steps) - 1, -1, -1):
        x, h_prev, c_prev, i, f, o, g, tc, live = tape.steps[t]
        dh_new = np.where(live, dh, 0.0)
        dc_new = np.where(live, dc, 0.0)
        # masked rows pass their gradient straight through to the previous step
        dh_prev = np.where(live, 0.0, dh)
        dc_prev = np.where(live, 0.0, dc)

        do = dh_new * tc
        dc_tot = dc_new + dh_new * o * (1.0 - tc * tc)
        dz = np.empty((dh.shape[0], 4 * H))
        dz[:, :H] = dc_tot * g * i * (1.0 - i)
        dz[:, H : 2 * H] = dc_tot * c_prev * f * (1.0 - f)
        dz[:, 2 * H : 3 * H] = do * o * (1.0 - o)
        dz[:, 3 * H :] = dc_tot * i * (1.0 - g * g)
        dc_prev += dc_tot * f

        grads["lstm_wx"] += x.T @ dz
        grads["lstm_wh"] += h_prev.T @ dz
        grads["lstm_b"] += dz.sum(axis=0)
        dx = dz @ wx_t
        np.add.at(grads["embedding"], tape.ids[:, t], dx)
        dh = dh_prev + dz @ wh_t
        dc = dc_prev
    if not all(np.all(np.isfinite(grads[k])) for k in ("lstm_wx", "lstm_wh", "lstm_b")):
        raise NumericError("lstm")


Batch = Sequence[tuple[TokenSeq, TokenSeq, float]]


def backward(params: NetworkParams, batch: Batch) -> tuple[float, Gradients]:
    """Batch-mean MSE between scaled cosine Q-values and targets, with exact gradients.

    Returns ``(loss, grads)``. The pad embedding row always gets a zero gradient.
    """
    if not batch:
        raise ValueError("empty batch")
    targets = np.array([t for _, _, t in batch], dtype=float)
    if not np.all(np.isfinite(targets)):
        raise NumericError("targets")
    R = params.reward_scale
    B = len(batch)
    grads = params.zeros_like()

    s_ids, _ = pad_batch([s for s, _, _ in batch])
    a_ids, _ = pad_batch([a for _, a, _ in batch])
    hs, tape_s = _encode(params, s_ids, keep_tape=True)
    ha, tape_a = _encode(params, a_ids, keep_tape=True)
    u = np.tanh(hs @ params.state_w + params.state_b)
    v = np.tanh(ha @ params.action_w + params.action_b)
    if not np.all(np.isfinite(u)):
        raise NumericError("dense_state")
    if not np.all(np.isfinite(v)):
        raise NumericError("dense_action")
    cos, nu, nv = _row_cosine(u, v)
    q = R * cos
    diff = q - targets
    loss = float(np.mean(diff**2))

    dcos = (2.0 / B) * diff * R
    uu = u / nu[:, None]
    vv = v / nv[:, None]
    du = dcos[:, None] * (vv - cos[:, None] * uu) / nu[:, None]
    dv = dcos[:, None] * (uu - cos[:, None] * vv) / nv[:, None]

    dzs = du * (1.0 - u * u)
    dza = dv * (1.0 - v * v)
    grads["state_w"] = hs.T @ dzs
    grads["state_b"] = dzs.sum(axis=0)
    grads["action_w"] = ha.T @ dza
    grads["action_b"] = dza.sum(axis=0)

    _lstm_backward(params, tape_s, dzs @ params.state_w.T, grads)
    _lstm_backward(params, tape_a, dza @ params.action_w.T, grads)
    grads["embedding"][PAD_ID] = 0.0
    if not np.all(np.isfinite(grads["embedding"])):
        raise NumericError("embedding")
    return loss, grads


def batch_loss(params: NetworkParams, batch: Batch) -> float:
    q = q_values(params, [s for s, _, _ in batch], [a for _, a, _ in batch])
    return mse_loss(q, [t for _, _, t in batch])


@dataclass
class OptimizerState:
    cache: dict[str, np.ndarray]
    learning_rate: float = 0.001
    rho: float = 0.9
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: NetworkParams, learning_rate: float = 0.001, rho: float = 0.9, eps: float = 1e-8):
        return cls(params.zeros_like(), learning_rate, rho, eps)


def rmsprop_step(params: NetworkParams, opt: OptimizerState, grads: Gradients) -> NetworkParams:
    """In-place RMSProp update; returns ``params`` for convenience."""
    for name in BLOCKS:
        g = grads[name]
        cache = opt.cache[name]
        cache *= opt.rho
        cache += (1.0 - opt.rho) * g * g
        step = opt.learning_rate * g / (np.sqrt(cache) + opt.eps)
        if name == "embedding":
            step[PAD_ID] = 0.0
        getattr(params, name)[...] -= step
    return params


# -- gradient verification -----------------------------------------------------


@dataclass
class GradCheckReport:
    errors: dict[str, float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(e <= self.tolerance for e in self.errors.values())

    @property
    def failed_blocks(self) -> list[str]:
        return [k for k, e in self.errors.items() if e > self.tolerance]

    def format(self) -> str:
        return "\n".join(f"{k:>10s}  {e:.3e}  {'ok' if e <= self.tolerance else 'FAIL'}" for k, e in self.errors.items())


def finite_diff_check(
    params: NetworkParams,
    batch: Batch,
    tolerance: float = 1e-4,
    step: float = 1e-5,
    grad_fn: Callable[[NetworkParams, Batch], tuple[float, Gradients]] = backward,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare analytic gradients with central differences, entry by entry.

    Uses the fourth-order five-point central stencil, so truncation error stays
    small even where the cosine head is sharply curved.
    Per-block error is ``max |a - n| / max(|a|, |n|, floor)``; ``floor`` keeps
    entries that are zero up to round-off from dominating the ratio.
    """
    _, analytic = grad_fn(params, batch)
    probe = params.copy()
    errors = {}
    for name in BLOCKS:
        block = getattr(probe, name)
        numeric = np.zeros_like(block)
        for idx in np.ndindex(block.shape):
            orig = block[idx]
            f = []
            for k in (2, 1, -1, -2):
                block[idx] = orig + k * step
                f.append(batch_loss(probe, batch))
            block[idx] = orig
            numeric[idx] = (-f[0] + 8.0 * f[1] - 8.0 * f[2] + f[3]) / (12.0 * step)
        a = analytic[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), floor)
        errors[name] = float(np.max(np.abs(a - numeric) / denom)) if a.size else 0.0
    return GradCheckReport(errors, tolerance)


# -- checkpoints ---------------------------------------------------------------

_MAGIC = b"SSQN"
_HEADER = struct.Struct("<4sIIIId")


def save_params(params: NetworkParams, path) -> None:
    """Flat little-endian float64 layout: header, then each block in BLOCKS order."""
    cfg = params.config
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, cfg.embedding_dim, cfg.lstm_dim, cfg.dense_dim, params.vocab_size,
                              params.reward_scale))
        for name in BLOCKS:
            fh.write(np.ascontiguousarray(getattr(params, name), dtype="<f8").tobytes())


def load_params(path) -> NetworkParams:
    data = Path(path).read_bytes()
    magic, E, H, D, V, scale = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not a parameter checkpoint")
    shapes = {
        "embedding": (V, E),
        "lstm_wx": (E, 4 * H),
        "lstm_wh": (H, 4 * H),
        "lstm_b": (4 * H,),
        "state_w": (H, D),
        "state_b": (D,),
        "action_w": (H, D),
        "action_b": (D,),
    }
    offset = _HEADER.size
    blocks = {}
    for name in BLOCKS:
        count = int(np.prod(shapes[name]))
        blocks[name] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shapes[name]).copy()
        offset += 8 * count
    if offset != len(data):
        raise ValueError(f"{path}: unexpected trailing bytes")
    return NetworkParams(**blocks, reward_scale=scale)
