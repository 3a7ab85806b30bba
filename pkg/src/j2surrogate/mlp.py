"""From-scratch multilayer perceptron regression for dv surrogates.

Hidden layers use Leaky ReLU and the output layer is linear. Training is
mini-batch Adam on the mean squared error of z-scored targets, with a fixed
90/10 train/validation split and early stopping on validation loss.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .classify import TransferType
from .features import FeatureSchema, ZScoreNormalizer, feature_matrix

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
MIN_ROWS = 50
DEFAULT_HIDDEN = {
    TransferType.CLOSING: (60, 60, 60),
    TransferType.INTERSECTING: (60, 60),
    TransferType.SEPARATING: (70, 70, 70),
}


class TrainingError(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


def leaky_relu(x, slope=0.01):
    return np.where(x >= 0, x, slope * x)


def loss_mse(predictions, targets) -> float:
    """(1/b) * sum (o_p - o_m)^2."""
    p = np.asarray(predictions, dtype=float).reshape(-1)
    t = np.asarray(targets, dtype=float).reshape(-1)
    if p.size == 0 or p.shape != t.shape:
        raise ValueError("predictions and targets must be non-empty and equally long")
    return float(np.mean((p - t) ** 2))


def mre(estimates, optimized) -> float:
    """Mean relative error, (1/N) * sum |est - opt| / opt."""
    est = np.asarray(estimates, dtype=float).reshape(-1)
    opt = np.asarray(optimized, dtype=float).reshape(-1)
    if opt.size == 0 or est.shape != opt.shape:
        raise ValueError("need at least one estimate/reference pair of equal length")
    if np.any(opt <= 0):
        raise ValueError("reference dv values must be positive")
    return float(np.mean(np.abs(est - opt) / opt))


def init_params(layer_sizes, rng):
    """He-style weights (normal, std sqrt(2/fan_in)) and zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        weights.append(rng.normal(0.0, math.sqrt(2.0 / fan_in), (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def network_forward(weights, biases, Z, slope=0.01, keep=False):
    """Network output for normalized inputs ``Z`` (rows are samples).

    With ``keep`` the pre-activations and activations are returned too.
    """
    a = Z
    pre, acts = [], [Z]
    last = len(weights) - 1
    for j, (W, b) in enumerate(zip(weights, biases)):
        z = a @ W + b
        a = z if j == last else leaky_relu(z, slope)
        if keep:
            pre.append(z)
            acts.append(a)
    out = a[:, 0]
    return (out, pre, acts) if keep else out


def backprop(weights, biases, Z, y, slope=0.01):
    """MSE loss and its gradients with respect to every weight and bias."""
    out, pre, acts = network_forward(weights, biases, Z, slope, keep=True)
    b = len(y)
    diff = out - y
    loss = float(np.mean(diff**2))
    delta = (2.0 / b) * diff[:, None]
    gW = [None] * len(weights)
    gb = [None] * len(weights)
    for j in range(len(weights) - 1, -1, -1):
        gW[j] = acts[j].T @ delta
        gb[j] = delta.sum(axis=0)
        if j > 0:
            delta = (delta @ weights[j].T) * np.where(pre[j - 1] >= 0, 1.0, slope)
    return loss, gW, gb


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 2000
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    val_fraction: float = 0.10
    seed: int = 0
    patience: int = 50

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must lie in (0, 1)")
        if self.epochs < 1 or self.patience < 1:
            raise ValueError("epochs and patience must be at least 1")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_mre: float


class Adam:
    def __init__(self, params, lr, beta1, beta2, eps):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def split_indices(n: int, val_fraction: float, seed: int):
    """Seeded shuffle split into (train, validation) index arrays."""
    perm = np.random.default_rng([int(seed), 0]).permutation(n)
    n_val = max(1, int(round(val_fraction * n)))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


class MLPSurrogate(RegressorMixin, BaseEstimator):
    """dv regressor on raw feature rows; inputs and targets are z-scored internally.

    ``fit`` keeps the weights with the lowest validation loss and records
    the per-epoch history in ``history_``.
    """

    def __init__(self, hidden=(60, 60), leaky_slope=0.01, batch_size=32, epochs=2000,
                 learning_rate=1e-3, beta1=0.9, beta2=0.999, adam_eps=1e-8,
                 val_fraction=0.10, patience=50, seed=0, min_rows=MIN_ROWS):
        self.hidden = hidden
        self.leaky_slope = leaky_slope
        self.batch_size = batch_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.adam_eps = adam_eps
        self.val_fraction = val_fraction
        self.patience = patience
        self.seed = seed
        self.min_rows = min_rows

    def _config(self) -> TrainConfig:
        return TrainConfig(self.batch_size, self.epochs, self.learning_rate, self.beta1,
                           self.beta2, self.adam_eps, self.val_fraction, self.seed, self.patience)

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        cfg = self._config()
        if len(X) < self.min_rows:
            raise TrainingError(f"too few rows: {len(X)} (need at least {self.min_rows})")
        if np.any(y <= 0):
            raise TrainingError("dv labels must be positive")
        tr, va = split_indices(len(X), cfg.val_fraction, cfg.seed)
        self.feature_norm_ = ZScoreNormalizer().fit(X[tr])
        self.target_norm_ = ZScoreNormalizer().fit(y[tr, None])
        Ztr, Zva = self.feature_norm_.transform(X[tr]), self.feature_norm_.transform(X[va])
        ytr = self.target_norm_.transform(y[tr, None])[:, 0]
        yva = self.target_norm_.transform(y[va, None])[:, 0]
        sizes = (X.shape[1], *tuple(int(h) for h in self.hidden), 1)
        rng = np.random.default_rng([int(cfg.seed), 1])
        weights, biases = init_params(sizes, rng)
        params = weights + biases
        opt = Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
        L = len(weights)
        best = (math.inf, None, -1)
        history = []
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(len(Ztr))
            for s in range(0, len(order), cfg.batch_size):
                idx = order[s:s + cfg.batch_size]
                _, gW, gb = backprop(weights, biases, Ztr[idx], ytr[idx], self.leaky_slope)
                opt.step(params, gW + gb)
            train_loss = loss_mse(network_forward(weights, biases, Ztr, self.leaky_slope), ytr)
            val_out = network_forward(weights, biases, Zva, self.leaky_slope)
            val_loss = loss_mse(val_out, yva)
            if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            val_mre = mre(self.target_norm_.inverse_transform(val_out[:, None])[:, 0], y[va])
            history.append(EpochRecord(epoch, train_loss, val_loss, val_mre))
            if val_loss < best[0]:
                best = (val_loss, [p.copy() for p in params], epoch)
            elif epoch - best[2] >= cfg.patience:
                break
        self.weights_ = best[1][:L]
        self.biases_ = best[1][L:]
        self.layer_sizes_ = sizes
        self.best_epoch_ = best[2]
        self.history_ = history
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        """Network output on the normalized target scale."""
        check_is_fitted(self, "weights_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return network_forward(self.weights_, self.biases_, self.feature_norm_.transform(X),
                               self.leaky_slope)

    def predict(self, X):
        out = self.decision_function(X)
        return self.target_norm_.inverse_transform(out[:, None])[:, 0]


@dataclass
class SurrogateModel:
    """A trained network bound to its transfer type and feature schema."""

    type: TransferType
    schema: FeatureSchema
    regressor: MLPSurrogate
    history: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.type = TransferType.parse(self.type)
        if self.schema.type is not self.type:
            raise ValueError("schema type does not match model type")

    @property
    def layer_sizes(self):
        return self.regressor.layer_sizes_

    def forward(self, x) -> float:
        """dv estimate (m/s) for one feature vector in schema order."""
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.schema.dimension:
            raise ValueError(f"feature vector has {x.size} values, schema expects {self.schema.dimension}")
        return float(self.regressor.predict(x[None])[0])

    def predict_samples(self, samples) -> np.ndarray:
        return self.regressor.predict(feature_matrix(samples, self.schema.names))

    def to_dict(self) -> dict:
        r = self.regressor
        return {
            "type": self.type.value,
            "layer_sizes": list(r.layer_sizes_),
            "leaky_slope": r.leaky_slope,
            "weights": [W.tolist() for W in r.weights_],
            "biases": [b.tolist() for b in r.biases_],
            "feature_schema": self.schema.to_dict(),
            "feature_norm": r.feature_norm_.to_dict(),
            "target_norm": r.target_norm_.to_dict(),
            "format_version": FORMAT_VERSION,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SurrogateModel":
        keys = ("type", "layer_sizes", "leaky_slope", "weights", "biases", "feature_schema",
                "feature_norm", "target_norm", "format_version")
        missing = [k for k in keys if k not in d]
        if missing:
            raise ModelFormatError(f"model file is missing {missing}")
        if d["format_version"] != FORMAT_VERSION:
            raise ModelFormatError(f"unsupported model format version {d['format_version']}")
        try:
            sizes = tuple(int(s) for s in d["layer_sizes"])
            weights = [np.array(W, dtype=float) for W in d["weights"]]
            biases = [np.array(b, dtype=float) for b in d["biases"]]
            schema = FeatureSchema.from_dict(d["feature_schema"])
            fnorm = ZScoreNormalizer.from_dict(d["feature_norm"])
            tnorm = ZScoreNormalizer.from_dict(d["target_norm"])
        except (TypeError, ValueError, KeyError) as exc:
            raise ModelFormatError(f"malformed model file: {exc}") from None
        if sizes[-1] != 1 or len(weights) != len(sizes) - 1 or len(biases) != len(weights):
            raise ModelFormatError("layer sizes do not match the stored parameters")
        for W, b, fi, fo in zip(weights, biases, sizes[:-1], sizes[1:]):
            if W.shape != (fi, fo) or b.shape != (fo,):
                raise ModelFormatError("weight shapes do not chain")
        if sizes[0] != schema.dimension or fnorm.n_features_in_ != schema.dimension:
            raise ModelFormatError("input width does not match the feature schema")
        reg = MLPSurrogate(hidden=sizes[1:-1], leaky_slope=float(d["leaky_slope"]))
        reg.weights_, reg.biases_, reg.layer_sizes_ = weights, biases, sizes
        reg.feature_norm_, reg.target_norm_ = fnorm, tnorm
        reg.n_features_in_ = sizes[0]
        return cls(d["type"], schema, reg)


def train(samples, ttype, cfg: TrainConfig | None = None, hidden=None, names=None):
    """Fit a surrogate for one transfer type; returns (model, history).

    Rows of other types are ignored. ``hidden`` defaults to the per-type
    architecture and ``names`` to the per-type schema.
    """
    ttype = TransferType.parse(ttype)
    cfg = cfg or TrainConfig()
    rows = [s for s in samples if s.type is ttype]
    if len(rows) < MIN_ROWS:
        raise TrainingError(f"too few rows of type {ttype.value}: {len(rows)} (need at least {MIN_ROWS})")
    schema = FeatureSchema.for_type(ttype) if names is None else FeatureSchema(ttype, tuple(names))
    X = feature_matrix(rows, schema.names)
    y = np.array([s.dv_opt for s in rows])
    reg = MLPSurrogate(hidden=tuple(hidden or DEFAULT_HIDDEN[ttype]), **asdict(cfg))
    reg.fit(X, y)
    log.info("%s: best epoch %d of %d", ttype.value, reg.best_epoch_, len(reg.history_))
    return SurrogateModel(ttype, schema, reg, reg.history_), reg.history_


def evaluate_mre(model: SurrogateModel, samples) -> float:
    rows = list(samples)
    if not rows:
        raise ValueError("need at least one test row")
    wrong = [s for s in rows if s.type is not model.type]
    if wrong:
        raise ValueError(f"{len(wrong)} test row(s) are not of type {model.type.value}")
    return mre(model.predict_samples(rows), [s.dv_opt for s in rows])


def save_model(model: SurrogateModel, path) -> None:
    text = json.dumps(model.to_dict(), indent=1)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n")


def load_model(path, expected_type=None) -> SurrogateModel:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not a valid model file ({exc})") from None
    if not isinstance(d, dict):
        raise ModelFormatError(f"{path}: not a valid model file")
    model = SurrogateModel.from_dict(d)
    if expected_type is not None and model.type is not TransferType.parse(expected_type):
        raise ModelFormatError(
            f"{path}: model is for {model.type.value} transfers, expected {TransferType.parse(expected_type).value}"
        )
    return model
