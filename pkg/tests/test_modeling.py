import json

import numpy as np
import pytest

from overreact.errors import DegenerateModelError, InsufficientDataError, ParameterError, SchemaError
from overreact.modeling import (FAMILIES, ClassifierSpec, SplitSpec, chronological_split,
                                class_weights, classification_report, derive_seed,
                                expanding_cv_folds, macro_f1, model_from_json, predicted_states,
                                randomized_search, train)
from overreact.modeling.models import (logistic_loss_grad, mlp_init, mlp_loss_grad)
from overreact.modeling.trees import Binner
from overreact.modeling.validation import SEARCH_SPACES, confusion, sample_config

FAST = {
    "prior": {},
    "logistic": {},
    "random_forest": {"n_estimators": 15, "max_depth": 5},
    "gbt": {"n_estimators": 15, "max_depth": 3},
    "mlp": {"max_epochs": 15},
}


def blobs(n=200, seed=0, sep=4.0):
    rng = np.random.default_rng(seed)
    y = rng.integers(-1, 2, n)
    centers = np.array([[-sep, 0], [0, sep], [sep, 0]])
    X = centers[y + 1] + rng.normal(0, 1, (n, 2))
    return X, y


def rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8))


# splits ------------------------------------------------------------------

def test_split_example():
    s = chronological_split(100, SplitSpec())
    assert (s.train[0], s.train[-1], len(s.train)) == (0, 58, 59)
    assert (s.validation[0], s.validation[-1]) == (60, 78)
    assert (s.test[0], s.test[-1]) == (80, 99)
    assert s.embargoed.tolist() == [59, 79]


def test_split_no_embargo():
    s = chronological_split(100, SplitSpec(embargo=0))
    assert len(s.train) == 60 and len(s.validation) == 20 and len(s.test) == 20


def test_split_errors():
    with pytest.raises(InsufficientDataError):
        chronological_split(9)
    with pytest.raises(ParameterError):
        SplitSpec(0.5, 0.2, 0.2)


def test_cv_example():
    folds = expanding_cv_folds(40, 3, 1)
    fit, val = folds[0]
    assert (fit[0], fit[-1]) == (0, 8) and (val[0], val[-1]) == (10, 19)
    assert set(folds[0][0]) < set(folds[1][0]) < set(folds[2][0])
    with pytest.raises(InsufficientDataError):
        expanding_cv_folds(15, 3)


# weights and reports -------------------------------------------------------

def test_class_weights():
    assert class_weights([0.1, 0.8, 0.1]) == pytest.approx([24 / 17, 3 / 17, 24 / 17])
    assert class_weights([1 / 3] * 3) == pytest.approx([1, 1, 1])
    w = class_weights([0.0, 0.75, 0.25])
    assert w[0] == 0 and w[1:].mean() == pytest.approx(1, abs=1e-12)


def test_predicted_states_tie_is_neutral():
    p = np.array([[0.4, 0.2, 0.4], [0.5, 0.3, 0.2], [0.1, 0.1, 0.8]])
    assert predicted_states(p).tolist() == [0, -1, 1]


def test_report_examples():
    y = np.array([-1] + [0] * 8 + [1])
    perfect = np.eye(3)[y + 1]
    rep = classification_report(None, perfect, y)
    assert rep.accuracy == 1 and all(v == 1 for v in rep.precision.values())
    neutral = np.tile([0.1, 0.8, 0.1], (10, 1))
    rep = classification_report(None, neutral, y)
    assert rep.accuracy == pytest.approx(0.8) and rep.recall["up"] == 0
    assert rep.precision["up"] is None  # never predicted


def test_confusion_oracle():
    y = np.array([1, 0, -1, 0, 0, 1, -1, -1, 0, 1, 0, 0, 1, -1, 0, 0, 1, 0, -1, 0])
    p = np.array([1, 0, 0, 0, 1, 1, -1, 0, 0, -1, 0, 1, 1, -1, 0, -1, 0, 0, -1, 0])
    cm = np.zeros((3, 3), int)
    for a, b in zip(y, p):
        cm[a + 1, b + 1] += 1
    assert np.array_equal(confusion(y, p), cm)
    rep = classification_report(None, np.eye(3)[p + 1], y)
    assert rep.accuracy == pytest.approx(np.trace(cm) / 20)
    assert rep.precision["down"] == pytest.approx(cm[0, 0] / cm[:, 0].sum())
    assert rep.recall["up"] == pytest.approx(cm[2, 2] / cm[2].sum())
    f1 = []
    for c in range(3):
        prec = cm[c, c] / cm[:, c].sum()
        rec = cm[c, c] / cm[c].sum()
        f1.append(2 * prec * rec / (prec + rec))
    assert macro_f1(y, p) == pytest.approx(np.mean(f1))


# families ----------------------------------------------------------------

@pytest.mark.parametrize("family", FAMILIES)
def test_simplex_and_purity(family):
    X, y = blobs(150, seed=2)
    m = train(ClassifierSpec(family, FAST[family], seed=1), X, y, class_weights([1 / 3] * 3))
    Z = np.random.default_rng(0).normal(0, 5, (1000, 2))
    P = m.predict_proba(Z)
    assert P.shape == (1000, 3) and (P >= 0).all() and (P <= 1).all()
    assert np.allclose(P.sum(axis=1), 1, atol=1e-9)
    assert np.array_equal(P, m.predict_proba(Z))
    back = model_from_json(m.to_json())
    assert np.array_equal(back.predict_proba(Z), P)
    assert json.loads(m.to_json())["format_version"] == 1


@pytest.mark.parametrize("family", ["random_forest", "gbt", "mlp"])
def test_seeded_determinism(family):
    X, y = blobs(120, seed=4, sep=1.0)
    a = train(ClassifierSpec(family, FAST[family], seed=9), X, y)
    b = train(ClassifierSpec(family, FAST[family], seed=9), X, y)
    assert np.array_equal(a.predict_proba(X), b.predict_proba(X))
    assert a.to_json() == b.to_json()


def test_prior_predicts_frequencies():
    y = np.array([-1] + [0] * 8 + [1])
    m = train(ClassifierSpec("prior"), np.zeros((10, 2)), y)
    assert np.allclose(m.predict_proba(np.ones((3, 2))), [0.1, 0.8, 0.1])


def test_logistic_separable_blobs():
    X, y = blobs(200, seed=0, sep=4.0)
    m = train(ClassifierSpec("logistic"), X, y)
    assert (predicted_states(m.predict_proba(X)) == y).mean() >= 0.95


def test_gbt_capacity():
    rng = np.random.default_rng(11)
    X, y = rng.normal(size=(50, 5)), rng.integers(-1, 2, 50)
    m = train(ClassifierSpec("gbt", {"max_depth": 8, "n_estimators": 150}), X, y)
    assert (predicted_states(m.predict_proba(X)) == y).all()


def test_degenerate_single_class():
    X = np.zeros((10, 2))
    with pytest.raises(DegenerateModelError):
        train(ClassifierSpec("gbt"), X, np.zeros(10, int))
    m = train(ClassifierSpec("prior"), X, np.zeros(10, int))
    assert np.allclose(m.predict_proba(X[:1]), [0, 1, 0])


def test_absent_class_gets_zero_probability():
    X, y = blobs(100, seed=3)
    y = np.where(y == -1, 0, y)
    m = train(ClassifierSpec("logistic"), X, y, class_weights([0, 0.6, 0.4]))
    assert (m.predict_proba(X)[:, 0] == 0).all()


def test_schema_checks():
    X, y = blobs(60)
    m = train(ClassifierSpec("logistic"), X, y, feature_names=("a", "b"))
    with pytest.raises(SchemaError):
        m.predict_proba(np.zeros((2, 3)))
    with pytest.raises(SchemaError):
        m.predict_proba(np.zeros((2, 2)), names=("a", "c"))


def test_weighting_helps_minority_recall():
    wins = 0
    for rep in range(5):
        rng = np.random.default_rng(100 + rep)
        n = 400
        y = rng.choice([-1, 0, 1], n, p=[0.05, 0.9, 0.05])
        X = rng.normal(0, 1, (n, 3)) + 0.9 * y[:, None]
        plain = train(ClassifierSpec("logistic"), X, y)
        dist = np.bincount(y + 1, minlength=3) / n
        weighted = train(ClassifierSpec("logistic"), X, y, class_weights(dist))
        def recall(m):
            pred = predicted_states(m.predict_proba(X))
            mask = y != 0
            return (pred[mask] == y[mask]).mean()
        wins += recall(weighted) >= recall(plain)
    assert wins == 5


def test_unknown_family():
    with pytest.raises(ParameterError):
        ClassifierSpec("bilstm")


# gradients ---------------------------------------------------------------

def test_logistic_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    n, d, K = 30, 4, 3
    X = rng.normal(size=(n, d))
    Y = np.eye(K)[rng.integers(0, K, n)]
    s = rng.uniform(0.5, 2, n)
    for _ in range(10):
        theta = rng.normal(0, 0.5, d * K + K)
        _, g = logistic_loss_grad(theta, X, Y, s, l2=0.01)
        num = np.zeros_like(theta)
        for i in range(len(theta)):
            e = np.zeros_like(theta)
            e[i] = 1e-6
            num[i] = (logistic_loss_grad(theta + e, X, Y, s, 0.01)[0]
                      - logistic_loss_grad(theta - e, X, Y, s, 0.01)[0]) / 2e-6
        assert rel_err(g, num) < 1e-5


def test_mlp_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(5, 6))
    Y = np.eye(3)[[0, 1, 2, 1, 0]]
    s = rng.uniform(0.5, 2, 5)
    params = mlp_init([6, 64, 32, 3], rng)
    params = [p + rng.normal(0, 0.05, p.shape) for p in params]
    _, grads = mlp_loss_grad(params, X, Y, s)
    for p, g in zip(params, grads):
        flat = p.reshape(-1)
        pick = rng.choice(flat.size, min(flat.size, 40), replace=False)
        for i in pick:
            old = flat[i]
            flat[i] = old + 1e-6
            up = mlp_loss_grad(params, X, Y, s)[0]
            flat[i] = old - 1e-6
            dn = mlp_loss_grad(params, X, Y, s)[0]
            flat[i] = old
            num = (up - dn) / 2e-6
            a = g.reshape(-1)[i]
            assert abs(a - num) <= 1e-4 * max(abs(a), abs(num), 1e-6)


# search ------------------------------------------------------------------

def test_sampled_configs_in_range():
    rng = np.random.default_rng(0)
    for family in ("gbt", "random_forest"):
        space = SEARCH_SPACES[family]
        for _ in range(10_000 if family == "gbt" else 3000):
            cfg = sample_config(space, rng)
            for name, (kind, *args) in space.items():
                if kind == "choice":
                    assert cfg[name] in args[0]
                else:
                    assert args[0] <= cfg[name] <= args[1]


def test_search_single_iteration_and_determinism():
    X, y = blobs(120, seed=5, sep=1.5)
    folds = expanding_cv_folds(len(y), 3)
    one = randomized_search("gbt", None, X, y, folds, n_iter=1, seed=3)
    assert one.best.params == one.configs[0]
    a = randomized_search("gbt", None, X, y, folds, n_iter=3, seed=3)
    b = randomized_search("gbt", None, X, y, folds, n_iter=3, seed=3)
    assert a.configs == b.configs and a.best == b.best and a.table == b.table
    assert len(a.table) == 9


def test_search_tie_break_prefers_smaller():
    X = np.zeros((40, 1))
    y = np.zeros(40, int)
    y[::3] = 1
    folds = expanding_cv_folds(40, 3)
    space = {"n_estimators": ("int", 1, 3), "max_depth": ("int", 1, 3)}
    res = randomized_search("gbt", space, X, y, folds, n_iter=6, seed=0)
    best_score = max(res.mean_scores)
    tied = [c for c, s in zip(res.configs, res.mean_scores) if s == best_score]
    assert res.best.params == min(tied, key=lambda c: (c["n_estimators"], c["max_depth"]))


def test_search_empty_folds():
    with pytest.raises(ParameterError):
        randomized_search("gbt", None, np.zeros((4, 1)), np.zeros(4), [], n_iter=1)


def test_derive_seed_stable():
    assert derive_seed(0, 5, 1.5, "gbt") == derive_seed(0, 5, 1.5, "gbt")
    assert derive_seed(0, 5, 1.5, "gbt") != derive_seed(0, 5, 2.0, "gbt")


def test_binner_thresholds():
    X = np.array([[1.0], [2.0], [2.0], [5.0]])
    b = Binner.fit(X)
    Xb = b.transform(X)
    assert Xb[:, 0].tolist() == sorted(Xb[:, 0].tolist())
    assert Xb[1, 0] == Xb[2, 0] and Xb[0, 0] < Xb[1, 0] < Xb[3, 0]
