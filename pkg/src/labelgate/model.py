"""Embedding model, margin-based classification head, and optimizer.

The embedder is a small fully-connected network with tanh between layers
and a linear final layer. Classification happens on the unit sphere: both
the embedding and each class weight row are L2-normalized, their cosines
are scaled by ``s``, and the observed class's logit is reduced by ``s*m``
before the softmax. All arithmetic is float64 numpy, so identical seeds
give bit-identical trajectories.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError, NumericError, ParseError, ShapeError

_CHECKPOINT_MAGIC = "labelgate-model"
_CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Architecture of the embedder and its classification head."""

    feature_dim: int
    num_classes: int
    hidden_dims: tuple[int, ...] = (128, 128)
    embedding_dim: int = 64
    margin: float = 0.2
    scale: float = 30.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.feature_dim < 1:
            raise ConfigurationError(f"feature_dim must be >= 1, got {self.feature_dim}")
        if self.num_classes < 2:
            raise ConfigurationError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.embedding_dim < 1:
            raise ConfigurationError(f"embedding_dim must be >= 1, got {self.embedding_dim}")
        if any(h < 1 for h in self.hidden_dims):
            raise ConfigurationError(f"hidden_dims must all be >= 1, got {self.hidden_dims}")
        if not np.isfinite(self.margin) or self.margin < 0:
            raise ConfigurationError(f"margin must be a nonnegative real, got {self.margin}")
        if not np.isfinite(self.scale) or self.scale <= 0:
            raise ConfigurationError(f"scale must be positive, got {self.scale}")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.feature_dim, *self.hidden_dims, self.embedding_dim)


@dataclass(frozen=True)
class OptimizerConfig:
    """Adam hyperparameters plus the stepwise learning-rate decay."""

    initial_lr: float = 2e-4
    lr_decay_factor: float = 0.4
    lr_decay_interval: int = 5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self) -> None:
        if not np.isfinite(self.initial_lr) or self.initial_lr <= 0:
            raise ConfigurationError(f"initial_lr must be positive, got {self.initial_lr}")
        if not (0.0 < self.lr_decay_factor <= 1.0):
            raise ConfigurationError(
                f"lr_decay_factor must lie in (0, 1], got {self.lr_decay_factor}"
            )
        if self.lr_decay_interval < 1:
            raise ConfigurationError(
                f"lr_decay_interval must be >= 1, got {self.lr_decay_interval}"
            )
        if not (0.0 <= self.beta1 < 1.0) or not (0.0 <= self.beta2 < 1.0):
            raise ConfigurationError("Adam betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")


def lr_at_epoch(optimizer: OptimizerConfig, epoch: int) -> float:
    """Learning rate for ``epoch``: the initial rate multiplied by the decay
    factor once per completed interval."""
    if epoch < 0:
        raise ConfigurationError(f"epoch must be nonnegative, got {epoch}")
    return optimizer.initial_lr * optimizer.lr_decay_factor ** (epoch // optimizer.lr_decay_interval)


@dataclass
class ModelState:
    """All trainable parameters plus the optimizer accumulators.

    ``weights[i]`` maps layer i's input to its output (``(d_in, d_out)``);
    ``class_weights`` holds one row per class. Adam moments mirror the
    parameter dict produced by ``named_parameters``.
    """

    config: ModelConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    class_weights: np.ndarray
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)
    adam_step: int = 0

    def named_parameters(self) -> dict[str, np.ndarray]:
        params: dict[str, np.ndarray] = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            params[f"w{i}"] = w
            params[f"b{i}"] = b
        params["head"] = self.class_weights
        return params

    def copy(self) -> "ModelState":
        return ModelState(
            config=self.config,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            class_weights=self.class_weights.copy(),
            adam_m={k: v.copy() for k, v in self.adam_m.items()},
            adam_v={k: v.copy() for k, v in self.adam_v.items()},
            adam_step=self.adam_step,
        )


def init_model(config: ModelConfig) -> ModelState:
    """Seeded Glorot-normal initialization; fresh zeroed Adam moments."""
    rng = np.random.default_rng([int(config.seed), 100])
    dims = config.layer_dims
    weights = []
    biases = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        std = np.sqrt(2.0 / (d_in + d_out))
        weights.append(rng.standard_normal((d_in, d_out)) * std)
        biases.append(np.zeros(d_out, dtype=np.float64))
    class_weights = rng.standard_normal((config.num_classes, config.embedding_dim))
    class_weights /= np.sqrt(config.embedding_dim)
    state = ModelState(
        config=config, weights=weights, biases=biases, class_weights=class_weights
    )
    for name, p in state.named_parameters().items():
        state.adam_m[name] = np.zeros_like(p)
        state.adam_v[name] = np.zeros_like(p)
    return state


def _forward_mlp(state: ModelState, X: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Forward through the embedder. Returns (embeddings, activations),
    where activations[i] is the input to affine layer i."""
    if X.ndim != 2 or X.shape[1] != state.config.feature_dim:
        raise ShapeError(
            f"features must have shape (B, {state.config.feature_dim}), got {X.shape}"
        )
    activations = [X]
    a = X
    last = len(state.weights) - 1
    for i, (w, b) in enumerate(zip(state.weights, state.biases)):
        z = a @ w + b
        a = z if i == last else np.tanh(z)
        if i != last:
            activations.append(a)
    return a, activations


def _backward_mlp(
    state: ModelState,
    activations: list[np.ndarray],
    d_embedding: np.ndarray,
    grads: dict[str, np.ndarray],
) -> None:
    """Accumulate MLP gradients given the loss gradient at the embedding."""
    last = len(state.weights) - 1
    d = d_embedding
    for i in range(last, -1, -1):
        a_in = activations[i]
        grads[f"w{i}"] = a_in.T @ d
        grads[f"b{i}"] = d.sum(axis=0)
        if i > 0:
            d = d @ state.weights[i].T
            # activations[i] is tanh output of layer i-1
            d = d * (1.0 - activations[i] ** 2)


def embed(state: ModelState, features) -> np.ndarray:
    """Embedding of a single feature vector."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"features must be a 1-D vector, got shape {x.shape}")
    e, _ = _forward_mlp(state, x[None, :])
    return e[0]


def embed_batch(state: ModelState, X) -> np.ndarray:
    """Embeddings of a feature matrix, one row per sample."""
    e, _ = _forward_mlp(state, np.asarray(X, dtype=np.float64))
    return e


def _normalize_rows(M: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    norms = np.sqrt((M**2).sum(axis=1, keepdims=True))
    if not np.all(np.isfinite(norms)):
        raise NumericError(f"{what} contain non-finite values")
    if np.any(norms == 0.0):
        raise NumericError(f"zero-norm {what} cannot be placed on the unit sphere")
    return M / norms, norms


def _head_forward(
    state: ModelState, E: np.ndarray, labels: np.ndarray
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Margin-penalized scaled-cosine softmax over a batch of embeddings.

    Returns per-sample losses, the probability rows the losses are the
    negative log of, and a cache for the backward pass.
    """
    cfg = state.config
    if E.ndim != 2 or E.shape[1] != cfg.embedding_dim:
        raise ShapeError(f"embeddings must have shape (B, {cfg.embedding_dim}), got {E.shape}")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (E.shape[0],):
        raise ShapeError(f"labels must have shape ({E.shape[0]},), got {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= cfg.num_classes):
        raise ConfigurationError("labels contain values outside [0, num_classes)")

    U, e_norms = _normalize_rows(E, "embeddings")
    W_hat, w_norms = _normalize_rows(state.class_weights, "class weight rows")
    cos = U @ W_hat.T
    Z = cfg.scale * cos
    rows = np.arange(E.shape[0])
    Z[rows, labels] -= cfg.scale * cfg.margin

    # log-sum-exp with max subtraction keeps exp() in range for any scale
    z_max = Z.max(axis=1, keepdims=True)
    exp_shift = np.exp(Z - z_max)
    sum_exp = exp_shift.sum(axis=1, keepdims=True)
    log_sum = z_max[:, 0] + np.log(sum_exp[:, 0])
    losses = log_sum - Z[rows, labels]
    P = exp_shift / sum_exp
    cache = {
        "U": U,
        "e_norms": e_norms,
        "W_hat": W_hat,
        "w_norms": w_norms,
        "labels": labels,
        "P": P,
    }
    return losses, P, cache


def _head_backward(
    state: ModelState, cache: dict, G: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Backward through the head given dL/dlogits = G.

    The margin is an additive constant in the chosen logit, so it vanishes
    from the logit-to-cosine derivative. Returns gradients w.r.t. the raw
    (unnormalized) embeddings and class weight rows.
    """
    cfg = state.config
    U = cache["U"]
    W_hat = cache["W_hat"]
    d_cos = cfg.scale * G
    dU = d_cos @ W_hat
    dW_hat = d_cos.T @ U
    # through row normalization: d(v/|v|) projects out the radial component
    dE = (dU - U * (U * dU).sum(axis=1, keepdims=True)) / cache["e_norms"]
    dW = (dW_hat - W_hat * (W_hat * dW_hat).sum(axis=1, keepdims=True)) / cache["w_norms"]
    return dE, dW


def am_softmax_forward(state: ModelState, embedding, observed_label: int) -> tuple[float, np.ndarray]:
    """Loss and probability row for a single embedding and label."""
    e = np.asarray(embedding, dtype=np.float64)
    if e.ndim != 1:
        raise ShapeError(f"embedding must be a 1-D vector, got shape {e.shape}")
    losses, P, _ = _head_forward(state, e[None, :], np.array([observed_label]))
    return float(losses[0]), P[0]


def am_softmax_backward(
    state: ModelState, embedding, observed_label: int
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of the single-sample loss w.r.t. the embedding and
    the class weight matrix."""
    e = np.asarray(embedding, dtype=np.float64)
    if e.ndim != 1:
        raise ShapeError(f"embedding must be a 1-D vector, got shape {e.shape}")
    labels = np.array([observed_label])
    _, P, cache = _head_forward(state, e[None, :], labels)
    G = P.copy()
    G[0, observed_label] -= 1.0
    dE, dW = _head_backward(state, cache, G)
    return dE[0], dW


def forward_batch(state: ModelState, X, labels) -> tuple[np.ndarray, np.ndarray]:
    """Forward pass only: per-sample losses and probability rows."""
    E, _ = _forward_mlp(state, np.asarray(X, dtype=np.float64))
    losses, P, _ = _head_forward(state, E, labels)
    return losses, P


def loss_and_gradients(
    state: ModelState, X, labels
) -> tuple[np.ndarray, np.ndarray, dict[str, np.ndarray]]:
    """Forward and backward over a batch.

    The gradient is of the mean loss over the batch. Returns per-sample
    losses, probability rows, and a gradient dict keyed like
    ``named_parameters``.
    """
    X = np.asarray(X, dtype=np.float64)
    E, activations = _forward_mlp(state, X)
    losses, P, cache = _head_forward(state, E, labels)
    B = X.shape[0]
    G = P.copy()
    G[np.arange(B), cache["labels"]] -= 1.0
    G /= B
    dE, dW = _head_backward(state, cache, G)
    grads: dict[str, np.ndarray] = {"head": dW}
    _backward_mlp(state, activations, dE, grads)
    return losses, P, grads


def adam_step(
    state: ModelState,
    gradients: dict[str, np.ndarray],
    lr: float,
    optimizer: OptimizerConfig = OptimizerConfig(),
) -> None:
    """One bias-corrected Adam update, in place.

    A fresh state with zero gradients is a no-op; non-finite gradients are
    rejected before any parameter is touched.
    """
    params = state.named_parameters()
    if set(gradients) != set(params):
        missing = set(params) ^ set(gradients)
        raise ShapeError(f"gradient keys do not match parameters: {sorted(missing)}")
    for name, g in gradients.items():
        if g.shape != params[name].shape:
            raise ShapeError(
                f"gradient {name} has shape {g.shape}, parameter has {params[name].shape}"
            )
        if not np.all(np.isfinite(g)):
            raise NumericError(f"gradient {name} contains NaN or infinity")
    state.adam_step += 1
    t = state.adam_step
    b1, b2 = optimizer.beta1, optimizer.beta2
    for name, g in gradients.items():
        m = state.adam_m[name]
        v = state.adam_v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        params[name] -= lr * m_hat / (np.sqrt(v_hat) + optimizer.epsilon)


def cosine_score(a, b) -> float:
    """Cosine similarity of two vectors; zero-norm input is an error."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ShapeError(f"expected two equal-length vectors, got {x.shape} and {y.shape}")
    nx = np.sqrt((x**2).sum())
    ny = np.sqrt((y**2).sum())
    if nx == 0.0 or ny == 0.0:
        raise NumericError("cosine of a zero-norm vector is undefined")
    return float((x @ y) / (nx * ny))


def save_model(state: ModelState, path: str | Path) -> None:
    """Checkpoint parameters and optimizer state; round-trips bit-exactly."""
    meta = {
        "magic": _CHECKPOINT_MAGIC,
        "version": _CHECKPOINT_VERSION,
        "config": asdict(state.config),
        "adam_step": state.adam_step,
    }
    arrays: dict[str, np.ndarray] = {"meta": np.array(json.dumps(meta))}
    for name, p in state.named_parameters().items():
        arrays[f"param/{name}"] = p
        arrays[f"adam_m/{name}"] = state.adam_m[name]
        arrays[f"adam_v/{name}"] = state.adam_v[name]
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path: str | Path) -> ModelState:
    """Restore a checkpoint written by ``save_model``."""
    try:
        with np.load(path, allow_pickle=False) as data:
            if "meta" not in data:
                raise FormatError(f"{path}: not a model checkpoint (no meta entry)")
            meta = json.loads(str(data["meta"]))
            if meta.get("magic") != _CHECKPOINT_MAGIC:
                raise FormatError(f"{path}: not a model checkpoint (bad magic)")
            if meta.get("version") != _CHECKPOINT_VERSION:
                raise FormatError(
                    f"{path}: unsupported checkpoint version {meta.get('version')!r}"
                )
            cfg_dict = meta["config"]
            cfg_dict["hidden_dims"] = tuple(cfg_dict["hidden_dims"])
            config = ModelConfig(**cfg_dict)
            num_layers = len(config.layer_dims) - 1
            weights = [data[f"param/w{i}"] for i in range(num_layers)]
            biases = [data[f"param/b{i}"] for i in range(num_layers)]
            state = ModelState(
                config=config,
                weights=weights,
                biases=biases,
                class_weights=data["param/head"],
                adam_step=int(meta["adam_step"]),
            )
            for name in state.named_parameters():
                state.adam_m[name] = data[f"adam_m/{name}"]
                state.adam_v[name] = data[f"adam_v/{name}"]
            return state
    except (KeyError, ValueError, OSError) as exc:
        if isinstance(exc, (FormatError, ParseError)):
            raise
        raise ParseError(f"{path}: unreadable model checkpoint: {exc}") from exc
