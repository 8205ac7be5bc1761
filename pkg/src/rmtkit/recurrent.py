"""Recurrent binary head over descriptor series.

A linear input projection feeds one recurrent cell (vanilla tanh RNN, GRU, or
LSTM), and a single-logit sigmoid head turns the hidden state into an anomaly
probability per step. Training is full backpropagation through time with
final-step binary cross-entropy (a mean-over-steps variant is available),
Adam with decoupled weight decay, and per-slot input standardization whose
statistics are frozen from the training split and stored with the parameters.

Everything is float64 numpy; training is single-threaded and bit-reproducible
for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .optim import AdamState, adam_update, init_adam
from .stream import DescriptorSeries

__all__ = [
    "CELL_KINDS",
    "RecurrentHeadParams",
    "TrainConfig",
    "AdamState",
    "param_registry",
    "param_shapes",
    "init_head",
    "trainable_keys",
    "param_count",
    "cell_step",
    "head_forward",
    "bce_loss",
    "backward",
    "adam_step",
    "train",
    "auroc",
    "gate",
]

CELL_KINDS = ("vanilla", "gru", "lstm")

_CELL_TENSORS = {
    "vanilla": ("w_xh", "w_hh", "b_h"),
    "gru": ("w_r", "u_r", "b_r", "w_z", "u_z", "b_z", "w_h", "u_h", "b_h"),
    "lstm": (
        "w_i", "u_i", "b_i",
        "w_f", "u_f", "b_f",
        "w_o", "u_o", "b_o",
        "w_c", "u_c", "b_c",
    ),
}

# Standardization statistics travel with the parameters but are never trained.
_FROZEN_KEYS = ("feat_mean", "feat_std")

_PROB_CLAMP = 1e-7


def param_registry(cell_kind: str) -> tuple[str, ...]:
    """Canonical tensor order for checkpoints and optimizer iteration."""
    if cell_kind not in CELL_KINDS:
        raise ValueError(f"unknown cell kind {cell_kind!r}")
    return _FROZEN_KEYS + ("w_in", "b_in") + _CELL_TENSORS[cell_kind] + ("w_out", "b_out")


def param_shapes(cell_kind: str, hidden: int, inputs: int) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {
        "feat_mean": (inputs,),
        "feat_std": (inputs,),
        "w_in": (hidden, inputs),
        "b_in": (hidden,),
        "w_out": (hidden,),
        "b_out": (),
    }
    for name in _CELL_TENSORS[cell_kind]:
        shapes[name] = (hidden,) if name.startswith("b_") else (hidden, hidden)
    return shapes


@dataclass
class RecurrentHeadParams:
    """Cell kind, sizes, and named weight tensors of one trained head.

    Closed-form trainable parameter counts for hidden size h and input size f:
    shared (input projection + output head) = (f + 1) h + h + 1, plus
    vanilla: 2 h^2 + h, GRU: 3 (2 h^2 + h), LSTM: 4 (2 h^2 + h).
    """

    cell_kind: str
    hidden_size: int
    input_size: int
    tensors: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        shapes = param_shapes(self.cell_kind, self.hidden_size, self.input_size)
        for name in param_registry(self.cell_kind):
            if name not in self.tensors:
                raise ValueError(f"missing parameter tensor {name!r}")
            t = np.asarray(self.tensors[name], dtype=np.float64)
            if t.shape != shapes[name]:
                raise ValueError(
                    f"tensor {name!r} has shape {t.shape}, expected {shapes[name]}"
                )
            if not np.all(np.isfinite(t)):
                raise ValueError(f"tensor {name!r} contains non-finite entries")
            self.tensors[name] = t

    def copy(self) -> "RecurrentHeadParams":
        return RecurrentHeadParams(
            cell_kind=self.cell_kind,
            hidden_size=self.hidden_size,
            input_size=self.input_size,
            tensors={k: v.copy() for k, v in self.tensors.items()},
        )


@dataclass
class TrainConfig:
    """Optimizer, schedule, and gating settings for head training."""

    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 40
    batch_size: int = 16
    seed: int = 0
    gate_threshold: float = 0.5
    loss_reduction: str = "final"  # "final" or "mean"
    cell_kind: str = "gru"
    hidden_size: int = 16
    val_fraction: float = 0.25

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ValueError("rates must be positive (weight decay nonnegative)")
        if not (0.0 < self.gate_threshold < 1.0):
            raise ValueError(f"gate threshold must lie in (0, 1), got {self.gate_threshold}")
        if self.loss_reduction not in ("final", "mean"):
            raise ValueError(f"unknown loss reduction {self.loss_reduction!r}")
        if self.cell_kind not in CELL_KINDS:
            raise ValueError(f"unknown cell kind {self.cell_kind!r}")


def trainable_keys(params: RecurrentHeadParams) -> list[str]:
    return [k for k in param_registry(params.cell_kind) if k not in _FROZEN_KEYS]


def param_count(params: RecurrentHeadParams) -> int:
    """Number of trainable scalars (standardization stats excluded)."""
    return sum(params.tensors[k].size for k in trainable_keys(params))


def init_head(
    cell_kind: str,
    hidden_size: int = 16,
    input_size: int = 22,
    seed: int = 0,
) -> RecurrentHeadParams:
    """Uniform +-1/sqrt(fan_in) weights, zero biases, identity standardization."""
    rng = np.random.default_rng(seed)
    shapes = param_shapes(cell_kind, hidden_size, input_size)
    tensors: dict[str, np.ndarray] = {}
    for name in param_registry(cell_kind):
        shape = shapes[name]
        if name == "feat_mean":
            tensors[name] = np.zeros(shape)
        elif name == "feat_std":
            tensors[name] = np.ones(shape)
        elif len(shape) == 2:
            bound = 1.0 / np.sqrt(shape[1])
            tensors[name] = rng.uniform(-bound, bound, size=shape)
        elif name == "w_out":
            bound = 1.0 / np.sqrt(hidden_size)
            tensors[name] = rng.uniform(-bound, bound, size=shape)
        else:
            tensors[name] = np.zeros(shape)
    return RecurrentHeadParams(cell_kind, hidden_size, input_size, tensors)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def cell_step(params: RecurrentHeadParams, f: np.ndarray, state):
    """One recurrent update on the projected input ``f``.

    ``state`` is the hidden vector for vanilla/GRU cells and an (h, c) pair
    for the LSTM; the new state has the same structure.
    """
    t = params.tensors
    h_size = params.hidden_size
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (h_size,):
        raise ValueError(f"projected input must have shape ({h_size},), got {f.shape}")
    if params.cell_kind == "vanilla":
        h = _check_state(state, h_size)
        return np.tanh(t["w_xh"] @ f + t["w_hh"] @ h + t["b_h"])
    if params.cell_kind == "gru":
        h = _check_state(state, h_size)
        r = _sigmoid(t["w_r"] @ f + t["u_r"] @ h + t["b_r"])
        z = _sigmoid(t["w_z"] @ f + t["u_z"] @ h + t["b_z"])
        h_cand = np.tanh(t["w_h"] @ f + t["u_h"] @ (r * h) + t["b_h"])
        return (1.0 - z) * h + z * h_cand
    # lstm
    if not (isinstance(state, tuple) and len(state) == 2):
        raise ValueError("LSTM state must be an (h, c) pair")
    h = _check_state(state[0], h_size)
    c = _check_state(state[1], h_size)
    i = _sigmoid(t["w_i"] @ f + t["u_i"] @ h + t["b_i"])
    fg = _sigmoid(t["w_f"] @ f + t["u_f"] @ h + t["b_f"])
    o = _sigmoid(t["w_o"] @ f + t["u_o"] @ h + t["b_o"])
    g = np.tanh(t["w_c"] @ f + t["u_c"] @ h + t["b_c"])
    c_new = fg * c + i * g
    return o * np.tanh(c_new), c_new


def _check_state(h, h_size: int) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (h_size,):
        raise ValueError(f"hidden state must have shape ({h_size},), got {h.shape}")
    return h


def _series_matrix(series) -> np.ndarray:
    if isinstance(series, DescriptorSeries):
        return series.feature_matrix()
    arr = np.asarray(series, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"series must be 2-D (steps x features), got shape {arr.shape}")
    return arr


def _forward_pass(params: RecurrentHeadParams, x: np.ndarray):
    """Standardize, project, run the cell, and score every step.

    Returns (probs, cache); the cache holds everything BPTT needs.
    """
    t = params.tensors
    std = np.where(t["feat_std"] > 0, t["feat_std"], 1.0)
    xs = (x - t["feat_mean"]) / std
    steps = xs.shape[0]
    h_size = params.hidden_size

    h = np.zeros(h_size)
    c = np.zeros(h_size)
    cache = {"xs": xs, "f": [], "h": [h], "logits": np.empty(steps)}
    if params.cell_kind == "gru":
        cache.update(r=[], z=[], h_cand=[])
    elif params.cell_kind == "lstm":
        cache.update(i=[], fg=[], o=[], g=[], c=[c])

    for step in range(steps):
        f = t["w_in"] @ xs[step] + t["b_in"]
        cache["f"].append(f)
        if params.cell_kind == "vanilla":
            h = np.tanh(t["w_xh"] @ f + t["w_hh"] @ h + t["b_h"])
        elif params.cell_kind == "gru":
            r = _sigmoid(t["w_r"] @ f + t["u_r"] @ h + t["b_r"])
            z = _sigmoid(t["w_z"] @ f + t["u_z"] @ h + t["b_z"])
            h_cand = np.tanh(t["w_h"] @ f + t["u_h"] @ (r * h) + t["b_h"])
            h = (1.0 - z) * h + z * h_cand
            cache["r"].append(r)
            cache["z"].append(z)
            cache["h_cand"].append(h_cand)
        else:
            i = _sigmoid(t["w_i"] @ f + t["u_i"] @ h + t["b_i"])
            fg = _sigmoid(t["w_f"] @ f + t["u_f"] @ h + t["b_f"])
            o = _sigmoid(t["w_o"] @ f + t["u_o"] @ h + t["b_o"])
            g = np.tanh(t["w_c"] @ f + t["u_c"] @ h + t["b_c"])
            c = fg * c + i * g
            h = o * np.tanh(c)
            for key, val in (("i", i), ("fg", fg), ("o", o), ("g", g)):
                cache[key].append(val)
            cache["c"].append(c)
        cache["h"].append(h)
        cache["logits"][step] = t["w_out"] @ h + t["b_out"]
    probs = _sigmoid(cache["logits"])
    return probs, cache


def head_forward(params: RecurrentHeadParams, series) -> np.ndarray:
    """Anomaly probability per step, hidden state initialized to zeros.

    Accepts a DescriptorSeries or a raw (steps x features) array. Processing
    is strictly causal: truncating the series to a prefix reproduces the
    prefix of the outputs bit-exactly.
    """
    x = _series_matrix(series)
    if x.shape[0] == 0:
        raise ValueError("series is empty")
    probs, _ = _forward_pass(params, x)
    return probs


def bce_loss(probs: np.ndarray, label: int, reduction: str = "final") -> float:
    """Binary cross-entropy on the final step (or the mean over steps).

    Probabilities are clamped to [1e-7, 1 - 1e-7] before the logs.
    """
    probs = np.clip(np.asarray(probs, dtype=np.float64), _PROB_CLAMP, 1.0 - _PROB_CLAMP)
    if probs.size == 0:
        raise ValueError("probability sequence is empty")
    y = float(label)
    per_step = -(y * np.log(probs) + (1.0 - y) * np.log(1.0 - probs))
    if reduction == "final":
        return float(per_step[-1])
    if reduction == "mean":
        return float(per_step.mean())
    raise ValueError(f"unknown reduction {reduction!r}")


def backward(
    params: RecurrentHeadParams,
    series,
    label: int,
    reduction: str = "final",
) -> dict[str, np.ndarray]:
    """Exact BPTT gradients of :func:`bce_loss` for every trainable tensor."""
    x = _series_matrix(series)
    if x.shape[0] == 0:
        raise ValueError("series is empty")
    probs, cache = _forward_pass(params, x)
    t = params.tensors
    steps = x.shape[0]
    y = float(label)

    # d loss / d logit per step; zero inside the clamped region
    dlogits = np.zeros(steps)
    if reduction == "final":
        targets = [steps - 1]
        weight = 1.0
    elif reduction == "mean":
        targets = list(range(steps))
        weight = 1.0 / steps
    else:
        raise ValueError(f"unknown reduction {reduction!r}")
    for step in targets:
        if _PROB_CLAMP < probs[step] < 1.0 - _PROB_CLAMP:
            dlogits[step] = (probs[step] - y) * weight

    grads = {k: np.zeros_like(t[k]) for k in trainable_keys(params)}
    xs = cache["xs"]
    h_all = cache["h"]
    dh_next = np.zeros(params.hidden_size)
    dc_next = np.zeros(params.hidden_size)

    for step in range(steps - 1, -1, -1):
        h_new = h_all[step + 1]
        h_prev = h_all[step]
        f = cache["f"][step]
        dh = dh_next + dlogits[step] * t["w_out"]
        grads["w_out"] += dlogits[step] * h_new
        grads["b_out"] += dlogits[step]

        if params.cell_kind == "vanilla":
            dp = dh * (1.0 - h_new**2)
            grads["w_xh"] += np.outer(dp, f)
            grads["w_hh"] += np.outer(dp, h_prev)
            grads["b_h"] += dp
            df = t["w_xh"].T @ dp
            dh_next = t["w_hh"].T @ dp
        elif params.cell_kind == "gru":
            r = cache["r"][step]
            z = cache["z"][step]
            h_cand = cache["h_cand"][step]
            dz = dh * (h_cand - h_prev)
            dh_cand = dh * z
            dh_prev = dh * (1.0 - z)
            da_h = dh_cand * (1.0 - h_cand**2)
            da_z = dz * z * (1.0 - z)
            drh = t["u_h"].T @ da_h
            dr = drh * h_prev
            dh_prev = dh_prev + drh * r
            da_r = dr * r * (1.0 - r)
            grads["w_h"] += np.outer(da_h, f)
            grads["u_h"] += np.outer(da_h, r * h_prev)
            grads["b_h"] += da_h
            grads["w_z"] += np.outer(da_z, f)
            grads["u_z"] += np.outer(da_z, h_prev)
            grads["b_z"] += da_z
            grads["w_r"] += np.outer(da_r, f)
            grads["u_r"] += np.outer(da_r, h_prev)
            grads["b_r"] += da_r
            df = t["w_h"].T @ da_h + t["w_z"].T @ da_z + t["w_r"].T @ da_r
            dh_next = dh_prev + t["u_z"].T @ da_z + t["u_r"].T @ da_r
        else:
            i = cache["i"][step]
            fg = cache["fg"][step]
            o = cache["o"][step]
            g = cache["g"][step]
            c_new = cache["c"][step + 1]
            c_prev = cache["c"][step]
            tanh_c = np.tanh(c_new)
            do = dh * tanh_c
            dc = dc_next + dh * o * (1.0 - tanh_c**2)
            di = dc * g
            dfg = dc * c_prev
            dg = dc * i
            da_i = di * i * (1.0 - i)
            da_f = dfg * fg * (1.0 - fg)
            da_o = do * o * (1.0 - o)
            da_g = dg * (1.0 - g**2)
            for gate_name, da in (("i", da_i), ("f", da_f), ("o", da_o), ("c", da_g)):
                grads[f"w_{gate_name}"] += np.outer(da, f)
                grads[f"u_{gate_name}"] += np.outer(da, h_prev)
                grads[f"b_{gate_name}"] += da
            df = (
                t["w_i"].T @ da_i
                + t["w_f"].T @ da_f
                + t["w_o"].T @ da_o
                + t["w_c"].T @ da_g
            )
            dh_next = (
                t["u_i"].T @ da_i
                + t["u_f"].T @ da_f
                + t["u_o"].T @ da_o
                + t["u_c"].T @ da_g
            )
            dc_next = dc * fg

        grads["w_in"] += np.outer(df, xs[step])
        grads["b_in"] += df

    return grads


def adam_step(
    params: RecurrentHeadParams,
    grads: dict[str, np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> tuple[RecurrentHeadParams, AdamState]:
    """One Adam step (decoupled weight decay) over the trainable tensors."""
    adam_update(
        params.tensors,
        grads,
        state,
        lr=config.learning_rate,
        weight_decay=config.weight_decay,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.adam_eps,
    )
    return params, state


def _score_dataset(params, dataset, reduction):
    losses, scores, labels = [], [], []
    for series, label in dataset:
        probs = head_forward(params, series)
        losses.append(bce_loss(probs, label, reduction))
        scores.append(float(probs[-1]))
        labels.append(int(label))
    return float(np.mean(losses)), scores, labels


def train(
    dataset,
    config: TrainConfig,
    val_dataset=None,
) -> tuple[RecurrentHeadParams, dict]:
    """Train a head on labeled descriptor series.

    ``dataset`` is a sequence of (series, label) pairs with labels in {0, 1};
    both classes must be present. When ``val_dataset`` is None a deterministic
    stratified split (config.val_fraction, config.seed) is carved out of the
    training data. Feature standardization statistics are computed on the
    training split only and frozen into the returned parameters.

    Returns:
        (params, metrics) with per-epoch train/val loss and validation AUROC.
    """
    pairs = [( _series_matrix(series), int(label)) for series, label in dataset]
    labels = [label for _, label in pairs]
    if len(set(labels)) < 2:
        raise ValueError("training data must contain both classes")

    rng = np.random.default_rng(config.seed)
    if val_dataset is None:
        train_pairs, val_pairs = _stratified_split(pairs, config.val_fraction, rng)
    else:
        train_pairs = pairs
        val_pairs = [(_series_matrix(s), int(l)) for s, l in val_dataset]

    params = init_head(
        config.cell_kind,
        hidden_size=config.hidden_size,
        input_size=train_pairs[0][0].shape[1],
        seed=config.seed,
    )
    stacked = np.concatenate([x for x, _ in train_pairs], axis=0)
    params.tensors["feat_mean"] = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    params.tensors["feat_std"] = np.where(std > 1e-12, std, 1.0)

    state = init_adam(params.tensors, trainable_keys(params))
    history = {"train_loss": [], "val_loss": [], "val_auroc": []}
    order = np.arange(len(train_pairs))
    for _ in range(config.epochs):
        rng.shuffle(order)
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            grads = {k: np.zeros_like(params.tensors[k]) for k in trainable_keys(params)}
            for idx in batch:
                x, label = train_pairs[idx]
                g = backward(params, x, label, config.loss_reduction)
                for key in grads:
                    grads[key] += g[key]
            for key in grads:
                grads[key] /= len(batch)
            adam_step(params, grads, state, config)
        train_loss, _, _ = _score_dataset(params, train_pairs, config.loss_reduction)
        val_loss, scores, val_labels = _score_dataset(params, val_pairs, config.loss_reduction)
        history["train_loss"].append(train_loss)
        history["val_loss"].append(val_loss)
        history["val_auroc"].append(auroc(scores, val_labels))
    history["final_val_auroc"] = history["val_auroc"][-1]
    return params, history


def _stratified_split(pairs, val_fraction, rng):
    by_class: dict[int, list[int]] = {}
    for idx, (_, label) in enumerate(pairs):
        by_class.setdefault(label, []).append(idx)
    val_idx: list[int] = []
    for label in sorted(by_class):
        members = np.array(by_class[label])
        rng.shuffle(members)
        n_val = max(1, int(round(val_fraction * len(members))))
        val_idx.extend(members[:n_val].tolist())
    val_set = set(val_idx)
    train_pairs = [p for i, p in enumerate(pairs) if i not in val_set]
    val_pairs = [pairs[i] for i in sorted(val_set)]
    if len({l for _, l in train_pairs}) < 2:
        raise ValueError("training split lost a class; provide more data")
    return train_pairs, val_pairs


def auroc(scores, labels) -> float:
    """Pair-counting AUROC with ties contributing one half.

    Computed via average ranks, which is exactly the probability that a
    random positive outscores a random negative (ties counted 0.5). Invariant
    under any strictly increasing transform of the scores.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC requires both classes present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def gate(prob: float, tau: float) -> bool:
    """True (alarm) iff the anomaly probability strictly exceeds tau."""
    if not (0.0 <= prob <= 1.0):
        raise ValueError(f"probability must lie in [0, 1], got {prob}")
    return prob > tau
