"""Three-class probabilistic classifiers.

Every model predicts an (n, 3) probability matrix in (down, neutral, up)
column order. Classes missing from the training labels get probability 0;
discriminative families are fitted on the observed classes only.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import DegenerateModelError, ParameterError, SchemaError
from . import trees

N_CLASSES = 3
FORMAT_VERSION = 1

FAMILIES = ("prior", "logistic", "random_forest", "gbt", "mlp")

DEFAULT_PARAMS = {
    "prior": {},
    "logistic": {"l2": 0.0, "max_iter": 5000, "tol": 1e-6},
    "random_forest": {"n_estimators": 100, "max_depth": 10, "min_samples_split": 2,
                      "min_samples_leaf": 1, "max_features": "sqrt"},
    "gbt": {"n_estimators": 100, "max_depth": 6, "learning_rate": 0.1, "subsample": 1.0,
            "colsample_bytree": 1.0, "reg_lambda": 1.0},
    "mlp": {"hidden": [64, 32], "dropout": 0.3, "learning_rate": 1e-3, "batch_size": 32,
            "max_epochs": 200, "patience": 5, "validation_fraction": 0.2},
}


@dataclass(frozen=True)
class ClassifierSpec:
    family: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.family not in _TRAINERS:
            raise ParameterError(f"unknown model family {self.family!r}")

    def resolved(self) -> dict:
        p = dict(DEFAULT_PARAMS.get(self.family, {}))
        p.update(self.params)
        return p


def derive_seed(*keys) -> int:
    """Stable 32-bit seed from arbitrary keys (independent of PYTHONHASHSEED)."""
    h = hashlib.sha256(repr(tuple(keys)).encode()).digest()
    return int.from_bytes(h[:4], "little")


def class_weights(distribution) -> np.ndarray:
    """Inverse-frequency weights, mean 1 over the classes that are present.

    Absent classes (frequency 0) get weight 0.
    """
    freq = np.asarray(distribution, dtype=float)
    present = freq > 0
    if not present.any():
        raise ParameterError("class distribution has no present class")
    raw = np.zeros_like(freq)
    raw[present] = 1.0 / freq[present]
    raw[present] /= raw[present].mean()
    return raw


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class TrainedModel:
    """Base for fitted models. Immutable after construction."""

    family = ""

    def __init__(self, classes, n_features, feature_names=None, metadata=None):
        self.classes = np.asarray(classes, dtype=np.int64)  # present columns
        self.n_features = int(n_features)
        self.feature_names = tuple(feature_names) if feature_names is not None else None
        self.metadata = dict(metadata or {})

    def _check(self, X, names=None):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise SchemaError(f"expected {self.n_features} features, got shape {X.shape}")
        if names is not None and self.feature_names is not None and tuple(names) != self.feature_names:
            raise SchemaError(f"feature names {tuple(names)} do not match {self.feature_names}")
        return X

    def predict_proba(self, X, names=None) -> np.ndarray:
        X = self._check(X, names)
        p = np.zeros((len(X), N_CLASSES))
        p[:, self.classes] = self._proba_present(X)
        return p

    def _proba_present(self, X):
        raise NotImplementedError

    def _params(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "family": self.family,
            "classes": self.classes.tolist(),
            "n_features": self.n_features,
            "feature_names": list(self.feature_names) if self.feature_names else None,
            "metadata": self.metadata,
            "parameters": self._params(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


class PriorModel(TrainedModel):
    family = "prior"

    def __init__(self, freqs, **kw):
        super().__init__(np.flatnonzero(np.asarray(freqs) > 0), **kw)
        self.freqs = np.asarray(freqs, dtype=float)

    def predict_proba(self, X, names=None):
        X = self._check(X, names)
        return np.tile(self.freqs, (len(X), 1))

    def _params(self):
        return {"freqs": self.freqs.tolist()}

    @classmethod
    def _from_params(cls, p, **kw):
        kw.pop("classes", None)
        return cls(p["freqs"], **kw)


# logistic ----------------------------------------------------------------

def logistic_loss_grad(theta, X, Y, s, l2=0.0):
    """Weighted mean cross-entropy and its gradient.

    ``theta`` is the flat vector [W (d*K), b (K)]; ``Y`` one-hot (n, K);
    ``s`` per-sample weights.
    """
    n, d = X.shape
    K = Y.shape[1]
    W = theta[: d * K].reshape(d, K)
    b = theta[d * K:]
    z = X @ W + b
    zmax = z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z - zmax).sum(axis=1, keepdims=True)) + zmax
    logp = z - logsum
    S = s.sum()
    loss = -(s * (Y * logp).sum(axis=1)).sum() / S + 0.5 * l2 * (W * W).sum()
    R = (np.exp(logp) - Y) * (s / S)[:, None]
    gW = X.T @ R + l2 * W
    gb = R.sum(axis=0)
    return loss, np.concatenate([gW.ravel(), gb])


class LogisticModel(TrainedModel):
    family = "logistic"

    def __init__(self, W, b, **kw):
        super().__init__(**kw)
        self.W = np.asarray(W, dtype=float)
        self.b = np.asarray(b, dtype=float)

    def _proba_present(self, X):
        return _softmax(X @ self.W + self.b)

    def scores(self, X):
        """Linear class scores before softmax (present classes)."""
        return self._check(X) @ self.W + self.b

    def _params(self):
        return {"W": self.W.tolist(), "b": self.b.tolist()}

    @classmethod
    def _from_params(cls, p, **kw):
        return cls(p["W"], p["b"], **kw)


def _fit_logistic(p, X, cols, present, s, seed, meta):
    n, d = X.shape
    K = len(present)
    Y = (cols[:, None] == present[None, :]).astype(float)
    theta = np.zeros(d * K + K)
    loss, grad = logistic_loss_grad(theta, X, Y, s, p["l2"])
    step = 1.0
    it = 0
    for it in range(int(p["max_iter"])):
        gnorm = np.linalg.norm(grad)
        if gnorm < p["tol"]:
            break
        # Armijo backtracking
        while True:
            cand = theta - step * grad
            closs, cgrad = logistic_loss_grad(cand, X, Y, s, p["l2"])
            if closs <= loss - 1e-4 * step * gnorm * gnorm or step < 1e-12:
                break
            step *= 0.5
        theta, loss, grad = cand, closs, cgrad
        step = min(step * 2.0, 1e3)
    meta.update(iterations=it + 1, final_loss=float(loss))
    return LogisticModel(theta[: d * K].reshape(d, K), theta[d * K:], classes=present,
                         n_features=d, metadata=meta)


# random forest -------------------------------------------------------------

def _max_features(spec, d):
    if spec in (None, "all", "None"):
        return d
    if spec == "sqrt":
        return max(1, int(np.sqrt(d)))
    if spec == "log2":
        return max(1, int(np.log2(d)))
    if isinstance(spec, float):
        return max(1, min(d, int(round(spec * d))))
    return max(1, min(d, int(spec)))


class ForestModel(TrainedModel):
    family = "random_forest"

    def __init__(self, tree_list, **kw):
        super().__init__(**kw)
        self.trees = [tuple(np.asarray(a) for a in t) for t in tree_list]
        self._stacked = trees.stack_trees(self.trees)

    def predict_proba(self, X, names=None):
        X = self._check(X, names)
        f, th, l, r, v = self._stacked
        out = trees.predict_forest(np.ascontiguousarray(X), f, th, l, r, v,
                                   np.zeros(len(self.trees), np.int64), N_CLASSES)
        return out / len(self.trees)

    def _params(self):
        return {"trees": [[a.tolist() for a in t] for t in self.trees]}

    @classmethod
    def _from_params(cls, p, **kw):
        tl = [(np.array(f, np.int64), np.array(th, float), np.array(l, np.int64),
               np.array(r, np.int64), np.array(v, float).reshape(-1, N_CLASSES))
              for f, th, l, r, v in p["trees"]]
        return cls(tl, **kw)


def _fit_forest(p, X, cols, present, s, seed, meta):
    n, d = X.shape
    binner = trees.Binner.fit(X)
    Xb = binner.transform(X)
    cuts = binner.cut_matrix()
    nb = binner.n_bins
    mf = _max_features(p["max_features"], d)
    depth = p["max_depth"] if p["max_depth"] is not None else 64
    out = []
    for t in range(int(p["n_estimators"])):
        rng = np.random.default_rng([seed, t])
        mult = np.bincount(rng.integers(0, n, n), minlength=n).astype(float)
        tree_seed = int(rng.integers(0, 2**31 - 1))
        out.append(trees.grow_gini_tree(Xb, nb, cuts, cols, s, mult, int(depth),
                                        float(p["min_samples_split"]),
                                        float(p["min_samples_leaf"]), mf, tree_seed))
    return ForestModel(out, classes=present, n_features=d, metadata=meta)


# gradient boosting ---------------------------------------------------------

class BoostedModel(TrainedModel):
    family = "gbt"

    def __init__(self, tree_list, tree_class, learning_rate, **kw):
        super().__init__(**kw)
        self.trees = [tuple(np.asarray(a) for a in t) for t in tree_list]
        self.tree_class = np.asarray(tree_class, dtype=np.int64)
        self.learning_rate = float(learning_rate)
        self._stacked = trees.stack_trees(self.trees) if self.trees else None

    def raw_scores(self, X):
        X = np.ascontiguousarray(self._check(X))
        if self._stacked is None:
            return np.zeros((len(X), len(self.classes)))
        f, th, l, r, v = self._stacked
        return trees.predict_forest(X, f, th, l, r, v * self.learning_rate, self.tree_class,
                                    len(self.classes))

    def _proba_present(self, X):
        return _softmax(self.raw_scores(X))

    def _params(self):
        return {"trees": [[a.tolist() for a in t] for t in self.trees],
                "tree_class": self.tree_class.tolist(), "learning_rate": self.learning_rate}

    @classmethod
    def _from_params(cls, p, **kw):
        tl = [(np.array(f, np.int64), np.array(th, float), np.array(l, np.int64),
               np.array(r, np.int64), np.array(v, float).reshape(-1, 1))
              for f, th, l, r, v in p["trees"]]
        return cls(tl, p["tree_class"], p["learning_rate"], **kw)


def _fit_gbt(p, X, cols, present, s, seed, meta):
    n, d = X.shape
    K = len(present)
    Y = (cols[:, None] == present[None, :]).astype(float)
    binner = trees.Binner.fit(X)
    Xb = binner.transform(X)
    cuts = binner.cut_matrix()
    nb = binner.n_bins
    eta = float(p["learning_rate"])
    lam = float(p["reg_lambda"])
    depth = int(p["max_depth"])
    n_rows = max(1, int(round(p["subsample"] * n)))
    n_cols = max(1, int(round(p["colsample_bytree"] * d)))
    rng = np.random.default_rng(seed)
    F = np.zeros((n, K))
    out, tree_class = [], []
    for _ in range(int(p["n_estimators"])):
        P = _softmax(F)
        rows = np.arange(n) if n_rows >= n else np.sort(rng.choice(n, n_rows, replace=False))
        for k in range(K):
            g = s * (P[:, k] - Y[:, k])
            h = np.maximum(s * P[:, k] * (1.0 - P[:, k]), 1e-16)
            mask = np.zeros(d, dtype=np.bool_)
            mask[rng.choice(d, n_cols, replace=False) if n_cols < d else np.arange(d)] = True
            t = trees.grow_newton_tree(Xb, nb, cuts, g, h, rows.astype(np.int64), mask,
                                       depth, lam, 1)
            out.append(t)
            tree_class.append(k)
            F[:, k] += eta * _apply_tree(t, X)
    return BoostedModel(out, tree_class, eta, classes=present, n_features=d, metadata=meta)


def _apply_tree(t, X):
    f, th, l, r, v = t
    res = trees.predict_forest(np.ascontiguousarray(X), f[None], th[None], l[None], r[None],
                               v[None], np.zeros(1, np.int64), 1)
    return res[:, 0]


# feed-forward net ----------------------------------------------------------

def mlp_forward(params, X, masks=None):
    """Forward pass; ``masks`` are inverted-dropout multipliers per hidden layer."""
    acts = [X]
    pre = []
    h = X
    n_layers = len(params) // 2
    for i in range(n_layers):
        W, b = params[2 * i], params[2 * i + 1]
        z = h @ W + b
        pre.append(z)
        if i < n_layers - 1:
            h = np.maximum(z, 0.0)
            if masks is not None:
                h = h * masks[i]
            acts.append(h)
    return pre, acts


def mlp_loss_grad(params, X, Y, s, masks=None):
    """Weighted mean cross-entropy of the net and gradients for every parameter."""
    pre, acts = mlp_forward(params, X, masks)
    z = pre[-1]
    zmax = z.max(axis=1, keepdims=True)
    logp = z - (np.log(np.exp(z - zmax).sum(axis=1, keepdims=True)) + zmax)
    S = s.sum()
    loss = -(s * (Y * logp).sum(axis=1)).sum() / S
    delta = (np.exp(logp) - Y) * (s / S)[:, None]
    grads = [None] * len(params)
    n_layers = len(params) // 2
    for i in reversed(range(n_layers)):
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ params[2 * i].T
            if masks is not None:
                delta = delta * masks[i - 1]
            delta = delta * (pre[i - 1] > 0)
    return loss, grads


def mlp_init(sizes, rng):
    params = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        lim = np.sqrt(6.0 / (a + b))
        params.append(rng.uniform(-lim, lim, (a, b)))
        params.append(np.zeros(b))
    return params


class MLPModel(TrainedModel):
    family = "mlp"

    def __init__(self, params, **kw):
        super().__init__(**kw)
        self.params = [np.asarray(a, dtype=float) for a in params]

    def _proba_present(self, X):
        pre, _ = mlp_forward(self.params, X)
        return _softmax(pre[-1])

    def _params(self):
        return {"weights": [a.tolist() for a in self.params]}

    @classmethod
    def _from_params(cls, p, **kw):
        return cls(p["weights"], **kw)


def _fit_mlp(p, X, cols, present, s, seed, meta):
    n, d = X.shape
    K = len(present)
    Y = (cols[:, None] == present[None, :]).astype(float)
    rng = np.random.default_rng(seed)
    sizes = [d] + list(p["hidden"]) + [K]
    params = mlp_init(sizes, rng)
    n_val = int(np.floor(p["validation_fraction"] * n))
    if n - n_val < 1:
        n_val = 0
    # chronological tail as internal validation
    tr = np.arange(n - n_val)
    va = np.arange(n - n_val, n)
    lr, b1, b2, eps = p["learning_rate"], 0.9, 0.999, 1e-7
    m = [np.zeros_like(a) for a in params]
    v = [np.zeros_like(a) for a in params]
    step = 0
    keep = 1.0 - p["dropout"]
    best_loss, best_params, best_epoch, wait = np.inf, [a.copy() for a in params], 0, 0
    bs = int(p["batch_size"])
    epoch = 0
    for epoch in range(1, int(p["max_epochs"]) + 1):
        order = rng.permutation(tr)
        for start in range(0, len(order), bs):
            batch = order[start:start + bs]
            masks = [(rng.random((len(batch), h)) < keep) / keep for h in p["hidden"]]
            _, grads = mlp_loss_grad(params, X[batch], Y[batch], s[batch], masks)
            step += 1
            for i, g in enumerate(grads):
                m[i] = b1 * m[i] + (1 - b1) * g
                v[i] = b2 * v[i] + (1 - b2) * g * g
                mhat = m[i] / (1 - b1**step)
                vhat = v[i] / (1 - b2**step)
                params[i] = params[i] - lr * mhat / (np.sqrt(vhat) + eps)
        if n_val == 0:
            best_params, best_epoch = [a.copy() for a in params], epoch
            continue
        val_loss, _ = mlp_loss_grad(params, X[va], Y[va], s[va])
        if val_loss < best_loss - 1e-12:
            best_loss, best_params, best_epoch, wait = val_loss, [a.copy() for a in params], epoch, 0
        else:
            wait += 1
            if wait >= p["patience"]:
                break
    meta.update(epochs_run=epoch, best_epoch=best_epoch,
                best_val_loss=None if not np.isfinite(best_loss) else float(best_loss))
    return MLPModel(best_params, classes=present, n_features=d, metadata=meta)


def _fit_prior(p, X, cols, present, s, seed, meta):
    freqs = np.bincount(cols, minlength=N_CLASSES) / len(cols)
    return PriorModel(freqs, n_features=X.shape[1], metadata=meta)


_TRAINERS: dict[str, Callable] = {
    "prior": _fit_prior,
    "logistic": _fit_logistic,
    "random_forest": _fit_forest,
    "gbt": _fit_gbt,
    "mlp": _fit_mlp,
}

_LOADERS = {
    "prior": PriorModel,
    "logistic": LogisticModel,
    "random_forest": ForestModel,
    "gbt": BoostedModel,
    "mlp": MLPModel,
}


def register_family(name: str, trainer: Callable, loader: type) -> None:
    """Plug in an extra family (e.g. a sequence model).

    ``trainer(params, X, cols, present, sample_weight, seed, metadata)``
    must return a :class:`TrainedModel`.
    """
    _TRAINERS[name] = trainer
    _LOADERS[name] = loader
    DEFAULT_PARAMS.setdefault(name, {})


def train(spec: ClassifierSpec, X, y, weights=None, feature_names=None) -> TrainedModel:
    """Fit ``spec`` on features ``X`` and signed labels ``y`` in {-1, 0, 1}.

    ``weights`` are per-class weights in (down, neutral, up) order; each
    sample gets the weight of its class.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y):
        raise SchemaError("X rows must match y length")
    if len(y) == 0:
        raise DegenerateModelError("no training rows")
    cols = (y.astype(np.int64) + 1)
    if cols.min() < 0 or cols.max() > 2:
        raise ParameterError("labels must be in {-1, 0, 1}")
    w = np.ones(N_CLASSES) if weights is None else np.asarray(weights, dtype=float)
    s = w[cols]
    present = np.flatnonzero(np.bincount(cols, minlength=N_CLASSES) > 0)
    if spec.family != "prior" and len(present) < 2:
        raise DegenerateModelError(f"{spec.family} needs at least two classes in training data")
    params = spec.resolved()
    meta = {"seed": spec.seed, "params": params, "class_weights": w.tolist(), "n_train": len(y)}
    model = _TRAINERS[spec.family](params, X, cols, present, s, spec.seed, meta)
    if feature_names is not None:
        model.feature_names = tuple(feature_names)
    return model


def predict_proba(model: TrainedModel, X, names=None) -> np.ndarray:
    return model.predict_proba(X, names)


def model_from_dict(d: dict) -> TrainedModel:
    if d.get("format_version") != FORMAT_VERSION:
        raise SchemaError(f"unsupported model format version {d.get('format_version')}")
    cls = _LOADERS[d["family"]]
    return cls._from_params(d["parameters"], classes=d["classes"], n_features=d["n_features"],
                            feature_names=d["feature_names"], metadata=d["metadata"])


def model_from_json(text: str) -> TrainedModel:
    return model_from_dict(json.loads(text))
