"""Classifiers implemented from first principles on numpy.

All estimators follow the fit/predict convention with get_params/set_params,
accept string or numeric labels, and are deterministic for a fixed
random_state.
"""

import inspect

import numpy as np


def check_array(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError(f"expected 2-d feature matrix, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError("feature matrix contains NaN or infinite values")
    return X


def check_X_y(X, y) -> tuple:
    X = check_array(X)
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError("labels must be one-dimensional")
    if len(X) != len(y):
        raise ValueError(f"X has {len(X)} rows but y has {len(y)}")
    if len(X) == 0:
        raise ValueError("empty training set")
    return X, y


class BaseEstimator:
    """get_params/set_params over the constructor signature."""

    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [p for p in sig.parameters if p != "self"]

    def get_params(self) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for k, v in params.items():
            if k not in valid:
                raise ValueError(f"unknown parameter {k!r} for "
                                 f"{type(self).__name__}")
            setattr(self, k, v)
        return self

    def _encode_labels(self, y):
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("training data must contain at least 2 classes")
        return y_idx

    def fit(self, X, y):
        raise NotImplementedError

    def predict(self, X):
        raise NotImplementedError


# ---------------------------------------------------------------------------
# CART decision tree (Gini impurity)
# ---------------------------------------------------------------------------

class _Leaf:
    __slots__ = ("klass",)

    def __init__(self, klass):
        self.klass = klass


class _Split:
    __slots__ = ("feature", "threshold", "left", "right")

    def __init__(self, feature, threshold, left, right):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right


def _best_split(X, y_idx, n_classes, feature_ids, min_leaf):
    """-> (weighted_gini, feature, threshold) or None."""
    n = len(y_idx)
    total_counts = np.bincount(y_idx, minlength=n_classes).astype(np.float64)
    best = None
    for f in feature_ids:
        x = X[:, f]
        order = np.argsort(x, kind="mergesort")
        xs = x[order]
        if xs[0] == xs[-1]:
            continue
        ys = y_idx[order]
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), ys] = 1.0
        left_counts = np.cumsum(onehot, axis=0)[:-1]
        sizes_l = np.arange(1, n, dtype=np.float64)
        sizes_r = n - sizes_l
        valid = (xs[1:] != xs[:-1]) & (sizes_l >= min_leaf) & (sizes_r >= min_leaf)
        if not valid.any():
            continue
        gini_l = 1.0 - ((left_counts / sizes_l[:, None]) ** 2).sum(axis=1)
        right_counts = total_counts - left_counts
        gini_r = 1.0 - ((right_counts / sizes_r[:, None]) ** 2).sum(axis=1)
        weighted = (sizes_l * gini_l + sizes_r * gini_r) / n
        weighted[~valid] = np.inf
        i = int(np.argmin(weighted))
        if best is None or weighted[i] < best[0]:
            best = (float(weighted[i]), f, float((xs[i] + xs[i + 1]) / 2.0))
    return best


class DecisionTreeClassifier(BaseEstimator):
    """Greedy CART on Gini impurity with midpoint thresholds.

    Ties break toward the lower feature index and the lower class index, so
    trained trees are reproducible.
    """

    def __init__(self, max_depth=12, min_leaf=1, max_features=None,
                 random_state=0):
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        y_idx = self._encode_labels(y)
        self.n_features_ = X.shape[1]
        self._rng = np.random.default_rng(self.random_state)
        self._root = self._grow(X, y_idx, depth=0)
        return self

    def _feature_candidates(self):
        d = self.n_features_
        if self.max_features is None:
            return np.arange(d)
        if self.max_features == "sqrt":
            m = max(1, int(np.sqrt(d)))
        else:
            m = max(1, min(d, int(self.max_features)))
        if m >= d:
            return np.arange(d)
        return np.sort(self._rng.choice(d, size=m, replace=False))

    def _grow(self, X, y_idx, depth):
        counts = np.bincount(y_idx, minlength=len(self.classes_))
        majority = int(np.argmax(counts))
        if (counts > 0).sum() == 1 or depth >= self.max_depth or \
                len(y_idx) < 2 * self.min_leaf:
            return _Leaf(majority)
        split = _best_split(X, y_idx, len(self.classes_),
                            self._feature_candidates(), self.min_leaf)
        if split is None:
            return _Leaf(majority)
        _, f, thr = split
        mask = X[:, f] <= thr
        if not mask.any() or mask.all():
            return _Leaf(majority)
        left = self._grow(X[mask], y_idx[mask], depth + 1)
        right = self._grow(X[~mask], y_idx[~mask], depth + 1)
        return _Split(f, thr, left, right)

    def _predict_idx(self, X) -> np.ndarray:
        out = np.empty(len(X), dtype=np.int64)
        for i, row in enumerate(X):
            node = self._root
            while isinstance(node, _Split):
                node = node.left if row[node.feature] <= node.threshold \
                    else node.right
            out[i] = node.klass
        return out

    def predict(self, X):
        X = check_array(X)
        return self.classes_[self._predict_idx(X)]


class RandomForestClassifier(BaseEstimator):
    """Bagged CART trees with per-node feature subsampling and majority vote.

    With n_trees=1, bootstrap=False and max_features=None the forest is the
    plain decision tree.
    """

    def __init__(self, n_trees=100, max_depth=12, min_leaf=1,
                 max_features="sqrt", bootstrap=True, random_state=0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        y_idx = self._encode_labels(y)
        rng = np.random.default_rng(self.random_state)
        n = len(X)
        self._trees = []
        for t in range(self.n_trees):
            if self.bootstrap:
                idx = rng.integers(0, n, size=n)
            else:
                idx = np.arange(n)
            tree = DecisionTreeClassifier(max_depth=self.max_depth,
                                          min_leaf=self.min_leaf,
                                          max_features=self.max_features,
                                          random_state=int(rng.integers(2**31)))
            tree.classes_ = np.arange(len(self.classes_))
            tree.n_features_ = X.shape[1]
            tree._rng = np.random.default_rng(tree.random_state)
            tree._root = tree._grow(X[idx], y_idx[idx], depth=0)
            self._trees.append(tree)
        return self

    def predict(self, X):
        X = check_array(X)
        votes = np.zeros((len(X), len(self.classes_)), dtype=np.int64)
        for tree in self._trees:
            pred = tree._predict_idx(X)
            votes[np.arange(len(X)), pred] += 1
        return self.classes_[np.argmax(votes, axis=1)]


# ---------------------------------------------------------------------------
# Gaussian naive Bayes
# ---------------------------------------------------------------------------

class GaussianNBClassifier(BaseEstimator):
    def __init__(self, var_floor=1e-9):
        self.var_floor = var_floor

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        y_idx = self._encode_labels(y)
        k = len(self.classes_)
        d = X.shape[1]
        self.theta_ = np.zeros((k, d))
        self.var_ = np.zeros((k, d))
        self.log_prior_ = np.zeros(k)
        for c in range(k):
            Xc = X[y_idx == c]
            self.theta_[c] = Xc.mean(axis=0)
            self.var_[c] = Xc.var(axis=0) + self.var_floor
            self.log_prior_[c] = np.log(len(Xc) / len(X))
        return self

    def _joint_log_likelihood(self, X) -> np.ndarray:
        jll = np.empty((len(X), len(self.classes_)))
        for c in range(len(self.classes_)):
            diff = X - self.theta_[c]
            jll[:, c] = self.log_prior_[c] - 0.5 * (
                np.log(2 * np.pi * self.var_[c])
                + diff ** 2 / self.var_[c]).sum(axis=1)
        return jll

    def predict_log_proba(self, X):
        X = check_array(X)
        jll = self._joint_log_likelihood(X)
        norm = np.log(np.exp(jll - jll.max(axis=1, keepdims=True)).sum(axis=1))
        return jll - jll.max(axis=1, keepdims=True) - norm[:, None]

    def predict(self, X):
        X = check_array(X)
        return self.classes_[np.argmax(self._joint_log_likelihood(X), axis=1)]


# ---------------------------------------------------------------------------
# one-vs-rest logistic regression (full-batch gradient descent)
# ---------------------------------------------------------------------------

def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -35.0, 35.0)))


def binary_logistic_loss_and_grad(params, X, t, l2=0.0) -> tuple:
    """Cross-entropy of sigmoid(X w + b) plus L2 on w.

    params stacks [w..., b]; returns (loss, grad) for gradient checking.
    """
    w, b = params[:-1], params[-1]
    n = len(X)
    p = _sigmoid(X @ w + b)
    eps = 1e-12
    loss = -np.mean(t * np.log(p + eps) + (1 - t) * np.log(1 - p + eps))
    loss += 0.5 * l2 * float(w @ w)
    grad_w = X.T @ (p - t) / n + l2 * w
    grad_b = np.mean(p - t)
    return loss, np.concatenate([grad_w, [grad_b]])


class LogisticRegressionOvR(BaseEstimator):
    def __init__(self, learning_rate=0.1, epochs=500, l2=0.0):
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.l2 = l2

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        y_idx = self._encode_labels(y)
        k = len(self.classes_)
        d = X.shape[1]
        self.coef_ = np.zeros((k, d))
        self.intercept_ = np.zeros(k)
        for c in range(k):
            t = (y_idx == c).astype(np.float64)
            params = np.zeros(d + 1)
            for _ in range(self.epochs):
                _, grad = binary_logistic_loss_and_grad(params, X, t, self.l2)
                params -= self.learning_rate * grad
            self.coef_[c] = params[:-1]
            self.intercept_[c] = params[-1]
        return self

    def decision_function(self, X):
        X = check_array(X)
        return X @ self.coef_.T + self.intercept_

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]


# ---------------------------------------------------------------------------
# k-nearest neighbours (Euclidean)
# ---------------------------------------------------------------------------

class KNeighborsClassifier(BaseEstimator):
    def __init__(self, k=5):
        self.k = k

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        if self.k > len(X):
            raise ValueError(f"k={self.k} exceeds training size {len(X)}")
        self._y_idx = self._encode_labels(y)
        self._X = X
        return self

    def predict(self, X):
        X = check_array(X)
        out = np.empty(len(X), dtype=np.int64)
        n = len(self._X)
        k_classes = len(self.classes_)
        for i, q in enumerate(X):
            d2 = ((self._X - q) ** 2).sum(axis=1)
            # stable nearest-k: distance then training index
            order = np.lexsort((np.arange(n), d2))[:self.k]
            votes = np.bincount(self._y_idx[order], minlength=k_classes)
            out[i] = int(np.argmax(votes))
        return self.classes_[out]
