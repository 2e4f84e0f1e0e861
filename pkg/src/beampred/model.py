"""Position-only baseline: two stacked GRU layers and a linear classifier, in numpy.

Everything runs in float64. The GRU update is

    z  = sigmoid(W_z x + U_z h + b_z)
    r  = sigmoid(W_r x + U_r h + b_r)
    hc = tanh(W_h x + U_h (r * h) + b_h)
    h' = (1 - z) * h + z * hc

with a zero initial state. Logits come from the last hidden state of the
top layer.
"""
from __future__ import annotations

import io
import json
import zipfile
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, TrainingError
from .metrics import MetricConfig, dba_score, top_k_accuracy

CHECKPOINT_VERSION = 1
GATES = ("z", "r", "h")


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int = 2
    seq_len: int = 2
    hidden_dim: int = 64
    num_gru_layers: int = 2
    num_classes: int = 64
    learning_rate: float = 1e-3
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        for name in ("input_dim", "seq_len", "hidden_dim", "num_gru_layers", "num_classes",
                     "batch_size", "epochs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not self.learning_rate > 0 or not self.adam_eps > 0:
            raise ConfigError("learning_rate and adam_eps must be positive")
        object.__setattr__(self, "adam_betas", tuple(self.adam_betas))

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown model fields: {sorted(unknown)}")
        return cls(**d)


def param_shapes(cfg: ModelConfig) -> dict:
    shapes = {}
    for layer in range(1, cfg.num_gru_layers + 1):
        d_in = cfg.input_dim if layer == 1 else cfg.hidden_dim
        for g in GATES:
            shapes[f"l{layer}.W_{g}"] = (cfg.hidden_dim, d_in)
            shapes[f"l{layer}.U_{g}"] = (cfg.hidden_dim, cfg.hidden_dim)
            shapes[f"l{layer}.b_{g}"] = (cfg.hidden_dim,)
    shapes["out.W"] = (cfg.num_classes, cfg.hidden_dim)
    shapes["out.b"] = (cfg.num_classes,)
    return shapes


def init_params(cfg: ModelConfig, seed: int | None = None) -> dict:
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    bound = 1.0 / np.sqrt(cfg.hidden_dim)
    return {name: rng.uniform(-bound, bound, size=shape)
            for name, shape in param_shapes(cfg).items()}


def zeros_like_params(params: dict) -> dict:
    return {k: np.zeros_like(v) for k, v in params.items()}


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _check_inputs(params, x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise ContractError(f"inputs must be (batch, seq_len, input_dim), got {x.shape}")
    if x.shape[2] != params["l1.W_z"].shape[1]:
        raise ContractError(f"input_dim {x.shape[2]} does not match parameters")
    if not np.all(np.isfinite(x)):
        raise ContractError("non-finite input")
    return x


def _num_layers(params):
    n = 0
    while f"l{n + 1}.W_z" in params:
        n += 1
    return n


def gru_forward(params: dict, x, return_cache: bool = False):
    """Run the stacked GRU on a (B, T, D) batch (or a single (T, D) sequence).

    Returns (hidden, logits) where hidden[l] is the (B, T, H) output sequence
    of layer l. With ``return_cache`` a third item holds what backprop needs.
    """
    x = _check_inputs(params, x)
    B, T, _ = x.shape
    seq = x
    hidden, cache = [], []
    for layer in range(1, _num_layers(params) + 1):
        p = {k.split(".", 1)[1]: v for k, v in params.items() if k.startswith(f"l{layer}.")}
        H = p["U_z"].shape[0]
        h = np.zeros((B, H))
        outs, steps = [], []
        for t in range(T):
            xt = seq[:, t]
            z = _sigmoid(xt @ p["W_z"].T + h @ p["U_z"].T + p["b_z"])
            r = _sigmoid(xt @ p["W_r"].T + h @ p["U_r"].T + p["b_r"])
            hc = np.tanh(xt @ p["W_h"].T + (r * h) @ p["U_h"].T + p["b_h"])
            h_new = (1.0 - z) * h + z * hc
            steps.append((xt, h, z, r, hc))
            outs.append(h_new)
            h = h_new
        seq = np.stack(outs, axis=1)
        hidden.append(seq)
        cache.append(steps)
    logits = seq[:, -1] @ params["out.W"].T + params["out.b"]
    if return_cache:
        return hidden, logits, cache
    return hidden, logits


def log_softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy(logits, labels) -> float:
    labels = np.asarray(labels, dtype=np.int64)
    lp = log_softmax(np.atleast_2d(logits))
    return float(-lp[np.arange(len(labels)), labels].mean())


def loss_and_gradients(params: dict, x, labels):
    """Mean cross-entropy over the batch and its gradient for every parameter (BPTT)."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    hidden, logits, cache = gru_forward(params, x, return_cache=True)
    B = logits.shape[0]
    if labels.shape[0] != B:
        raise ContractError(f"{B} inputs but {labels.shape[0]} labels")
    Q = logits.shape[1]
    if labels.min() < 0 or labels.max() >= Q:
        raise ContractError(f"labels must lie in 0..{Q - 1}")
    lp = log_softmax(logits)
    loss = float(-lp[np.arange(B), labels].mean())
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite loss {loss}; max |logit| = {np.abs(logits).max():.3g}")

    grads = zeros_like_params(params)
    dlogits = np.exp(lp)
    dlogits[np.arange(B), labels] -= 1.0
    dlogits /= B
    top = hidden[-1]
    grads["out.W"] = dlogits.T @ top[:, -1]
    grads["out.b"] = dlogits.sum(axis=0)

    T = top.shape[1]
    # gradient arriving at each output step of the current layer
    d_out = np.zeros_like(top)
    d_out[:, -1] = dlogits @ params["out.W"]

    for layer in range(len(cache), 0, -1):
        pre = f"l{layer}."
        W = {g: params[pre + f"W_{g}"] for g in GATES}
        U = {g: params[pre + f"U_{g}"] for g in GATES}
        steps = cache[layer - 1]
        d_in = np.zeros((B, T, W["z"].shape[1]))
        dh_next = np.zeros_like(d_out[:, 0])
        for t in range(T - 1, -1, -1):
            xt, h, z, r, hc = steps[t]
            dh = d_out[:, t] + dh_next
            dz = dh * (hc - h)
            dhc = dh * z
            dh_prev = dh * (1.0 - z)
            da_h = dhc * (1.0 - hc * hc)
            grads[pre + "W_h"] += da_h.T @ xt
            grads[pre + "U_h"] += da_h.T @ (r * h)
            grads[pre + "b_h"] += da_h.sum(axis=0)
            d_rh = da_h @ U["h"]
            dr = d_rh * h
            dh_prev += d_rh * r
            da_z = dz * z * (1.0 - z)
            da_r = dr * r * (1.0 - r)
            for g, da in (("z", da_z), ("r", da_r)):
                grads[pre + f"W_{g}"] += da.T @ xt
                grads[pre + f"U_{g}"] += da.T @ h
                grads[pre + f"b_{g}"] += da.sum(axis=0)
                dh_prev += da @ U[g]
            d_in[:, t] = da_z @ W["z"] + da_r @ W["r"] + da_h @ W["h"]
            dh_next = dh_prev
        d_out = d_in
    return loss, grads


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros(cls, params: dict) -> "AdamState":
        return cls(zeros_like_params(params), zeros_like_params(params), 0)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float = 1e-3,
              betas=(0.9, 0.999), eps: float = 1e-8):
    """One bias-corrected Adam update. Returns new params and state; inputs are not modified."""
    b1, b2 = betas
    t = state.t + 1
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        m = b1 * state.m[k] + (1.0 - b1) * g
        v = b2 * state.v[k] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_p[k] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[k], new_v[k] = m, v
    return new_p, AdamState(new_m, new_v, t)


def predict_topk(params: dict, x, k: int) -> np.ndarray:
    """(N, k) beam indices by descending logit; equal logits rank the lower index first."""
    _, logits = gru_forward(params, x)
    return topk_from_logits(logits, k)


def topk_from_logits(logits, k: int) -> np.ndarray:
    logits = np.atleast_2d(logits)
    if not 1 <= k <= logits.shape[1]:
        raise ContractError(f"k={k} outside 1..{logits.shape[1]}")
    return np.argsort(-logits, axis=1, kind="stable")[:, :k]


@dataclass
class TrainLog:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_top1: list = field(default_factory=list)
    val_dba: list = field(default_factory=list)
    best_epoch: int = 0

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss,val_top1,val_dba"]
        for i, row in enumerate(zip(self.train_loss, self.val_loss, self.val_top1,
                                    self.val_dba), start=1):
            lines.append(f"{i}," + ",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


def evaluate_batch(params, x, y, metric_cfg: MetricConfig):
    _, logits = gru_forward(params, x)
    preds = topk_from_logits(logits, metric_cfg.top_k)
    dba, _ = dba_score(preds, y, metric_cfg)
    return cross_entropy(logits, y), top_k_accuracy(preds, y, 1), dba


def train(train_x, train_y, val_x, val_y, cfg: ModelConfig, metric_cfg: MetricConfig | None = None,
          on_epoch=None):
    """Mini-batch Adam training; returns the parameters of the best validation-DBA epoch.

    ``on_epoch(epoch, params, log)`` is called after every epoch (1-based),
    e.g. to write intermediate checkpoints.
    """
    metric_cfg = metric_cfg or MetricConfig()
    train_x = np.asarray(train_x, dtype=float)
    train_y = np.asarray(train_y, dtype=np.int64)
    val_x = np.asarray(val_x, dtype=float)
    val_y = np.asarray(val_y, dtype=np.int64)
    if len(train_x) == 0 or len(val_x) == 0:
        raise ConfigError("training and validation sets must be non-empty")

    params = init_params(cfg)
    state = AdamState.zeros(params)
    rng = np.random.default_rng([cfg.seed, 1])
    log = TrainLog()
    best, best_dba = params, -np.inf
    n = len(train_x)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = loss_and_gradients(params, train_x[idx], train_y[idx])
            params, state = adam_step(params, grads, state, cfg.learning_rate, cfg.adam_betas,
                                      cfg.adam_eps)
            total += loss * len(idx)
        val_loss, val_top1, val_dba = evaluate_batch(params, val_x, val_y, metric_cfg)
        if not np.isfinite(val_loss):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        log.train_loss.append(total / n)
        log.val_loss.append(val_loss)
        log.val_top1.append(val_top1)
        log.val_dba.append(val_dba)
        if val_dba > best_dba:
            best, best_dba, log.best_epoch = params, val_dba, epoch
        if on_epoch is not None:
            on_epoch(epoch, params, log)
    return best, log


# --- checkpoints --------------------------------------------------------------

_ZIP_TIME = (1980, 1, 1, 0, 0, 0)


def _zip_write(zf, name, data: bytes):
    info = zipfile.ZipInfo(name, date_time=_ZIP_TIME)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def save_checkpoint(path, params: dict, cfg: ModelConfig, stats=None, extra: dict | None = None):
    """Zip container: meta.json (version, config, shapes, normalization stats) and one .npy per tensor.

    Timestamps are fixed so identical content gives identical bytes.
    """
    meta = {
        "format": "beampred-checkpoint",
        "version": CHECKPOINT_VERSION,
        "config": asdict(cfg),
        "shapes": {k: list(v.shape) for k, v in params.items()},
        "normalization": stats.to_text() if stats is not None else None,
        "extra": extra or {},
    }
    with zipfile.ZipFile(path, "w") as zf:
        _zip_write(zf, "meta.json", json.dumps(meta, indent=1, sort_keys=True).encode())
        for name in sorted(params):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(params[name], dtype="<f8"),
                                      allow_pickle=False)
            _zip_write(zf, f"{name}.npy", buf.getvalue())


def load_checkpoint(path):
    """Return (params, ModelConfig, NormalizationStats or None, extra)."""
    from .geodesy import NormalizationStats

    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("meta.json"))
        if meta.get("format") != "beampred-checkpoint":
            raise ContractError(f"{path} is not a beampred checkpoint")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ContractError(f"unsupported checkpoint version {meta.get('version')}")
        cfg = ModelConfig.from_dict(meta["config"])
        expected = param_shapes(cfg)
        if set(meta["shapes"]) != set(expected):
            raise ContractError("checkpoint tensors do not match the declared configuration")
        params = {}
        for name, shape in expected.items():
            arr = np.lib.format.read_array(io.BytesIO(zf.read(f"{name}.npy")), allow_pickle=False)
            if arr.shape != tuple(shape) or list(arr.shape) != meta["shapes"][name]:
                raise ContractError(
                    f"tensor {name}: stored shape {arr.shape}, config requires {tuple(shape)}")
            params[name] = arr
    stats = meta.get("normalization")
    stats = NormalizationStats.from_text(stats) if stats else None
    return params, cfg, stats, meta.get("extra", {})
