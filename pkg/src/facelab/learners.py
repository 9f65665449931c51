"""Linear SVM classification, epsilon-insensitive SVR, and sigmoid
posterior calibration, all solved from scratch.

Both margin learners use dual coordinate descent with the bias handled by
feature augmentation, which keeps the solver dependency-free and
deterministic: coordinate order is drawn from a seeded generator and every
run with the same data reproduces the same model.  The calibrator fits
P(positive | f) = 1 / (1 + exp(A f + B)) by a damped Newton iteration on
the smoothed-target Bernoulli likelihood.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin, TransformerMixin
from sklearn.exceptions import NotFittedError


class SingleClassInput(ValueError):
    pass


class DegenerateDecisionValues(UserWarning):
    pass


class Standardizer(BaseEstimator, TransformerMixin):
    """Per-dimension z-score fitted on training data only."""

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        self.mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.scale_ = np.where(sd > 0, sd, 1.0)
        return self

    def transform(self, X):
        if not hasattr(self, "mean_"):
            raise NotFittedError("Standardizer is not fitted")
        return (np.asarray(X, dtype=np.float64) - self.mean_) / self.scale_


def _augment(X):
    X = np.asarray(X, dtype=np.float64)
    return np.c_[X, np.ones(X.shape[0])]


class HingeSVC(BaseEstimator, ClassifierMixin):
    """Linear SVM trained by dual coordinate descent on the L1 hinge loss.

    Minimizes 0.5 ||w||^2 + C * sum hinge(y_i * f(x_i)) with
    f(x) = w.x + b; the bias enters through an augmented constant feature.
    ``converged_`` records whether the projected-gradient optimality
    measure dropped below ``tol`` before the iteration cap.
    """

    def __init__(self, C: float = 1.0, tol: float = 1e-4, max_iter: int = 1000,
                 seed: int = 0):
        self.C = C
        self.tol = tol
        self.max_iter = max_iter
        self.seed = seed

    def fit(self, X, y):
        y = np.asarray(y, dtype=np.float64)
        if set(np.unique(y)) != {-1.0, 1.0}:
            if len(np.unique(y)) < 2:
                raise SingleClassInput("both classes must be present")
            raise ValueError("labels must be +1/-1")
        X = np.asarray(X, dtype=np.float64)
        # center so the bias penalty is measured relative to the data mean,
        # making the decision boundary invariant to joint translations
        center = X.mean(axis=0)
        A = _augment(X - center)
        n, d = A.shape
        q = np.einsum("ij,ij->i", A, A)  # diagonal of the Gram matrix
        alpha = np.zeros(n)
        w = np.zeros(d)
        rng = np.random.default_rng(self.seed)
        self.converged_ = False
        for _ in range(self.max_iter):
            worst = 0.0
            for i in rng.permutation(n):
                g = y[i] * (A[i] @ w) - 1.0
                if alpha[i] == 0.0:
                    pg = min(g, 0.0)
                elif alpha[i] == self.C:
                    pg = max(g, 0.0)
                else:
                    pg = g
                worst = max(worst, abs(pg))
                if pg != 0.0 and q[i] > 0:
                    new = min(max(alpha[i] - g / q[i], 0.0), self.C)
                    if new != alpha[i]:
                        w += (new - alpha[i]) * y[i] * A[i]
                        alpha[i] = new
            if worst < self.tol:
                self.converged_ = True
                break
        self.coef_ = w[:-1]
        self.intercept_ = float(w[-1] - self.coef_ @ center)
        self.dual_coef_ = alpha
        return self

    def decision_function(self, X):
        if not hasattr(self, "coef_"):
            raise NotFittedError("HingeSVC is not fitted")
        return np.asarray(X, dtype=np.float64) @ self.coef_ + self.intercept_

    def predict(self, X):
        return np.where(self.decision_function(X) >= 0, 1.0, -1.0)

    def objective(self, X, y):
        f = self.decision_function(X)
        hinge = np.maximum(0.0, 1.0 - np.asarray(y) * f)
        reg = 0.5 * (self.coef_ @ self.coef_ + self.intercept_ ** 2)
        return reg + self.C * hinge.sum()


class EpsilonSVR(BaseEstimator, RegressorMixin):
    """Linear support vector regression with the epsilon-insensitive loss.

    Dual coordinate descent over beta in [-C, C]; each coordinate step
    minimizes its piecewise-quadratic subproblem exactly by comparing the
    clipped stationary points of the two linear pieces.
    """

    def __init__(self, C: float = 1.0, epsilon: float = 1.0, tol: float = 1e-4,
                 max_iter: int = 1000, seed: int = 0):
        self.C = C
        self.epsilon = epsilon
        self.tol = tol
        self.max_iter = max_iter
        self.seed = seed

    def fit(self, X, y):
        y = np.asarray(y, dtype=np.float64)
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] < 2:
            raise ValueError("need at least two samples")
        center = X.mean(axis=0)
        y_center = y.mean()
        A = _augment(X - center)
        n, d = A.shape
        q = np.einsum("ij,ij->i", A, A)
        beta = np.zeros(n)
        w = np.zeros(d)
        eps = self.epsilon
        rng = np.random.default_rng(self.seed)
        self.converged_ = False
        for _ in range(self.max_iter):
            worst = 0.0
            for i in rng.permutation(n):
                if q[i] == 0:
                    continue
                g = A[i] @ w - (y[i] - y_center)
                b_old = beta[i]
                up = min(max(b_old - (g + eps) / q[i], 0.0), self.C)
                dn = min(max(b_old - (g - eps) / q[i], -self.C), 0.0)

                def gain(b_new):
                    step = b_new - b_old
                    return (0.5 * q[i] * step * step + g * step
                            + eps * (abs(b_new) - abs(b_old)))

                b_new = up if gain(up) <= gain(dn) else dn
                if gain(b_new) > 0:
                    b_new = b_old
                step = b_new - b_old
                worst = max(worst, abs(step) * math.sqrt(q[i]))
                if step != 0.0:
                    w += step * A[i]
                    beta[i] = b_new
            if worst < self.tol:
                self.converged_ = True
                break
        self.coef_ = w[:-1]
        self.intercept_ = float(w[-1] + y_center - self.coef_ @ center)
        self.dual_coef_ = beta
        return self

    def predict(self, X):
        if not hasattr(self, "coef_"):
            raise NotFittedError("EpsilonSVR is not fitted")
        return np.asarray(X, dtype=np.float64) @ self.coef_ + self.intercept_

    def objective(self, X, y):
        r = np.abs(np.asarray(y) - self.predict(X))
        loss = np.maximum(0.0, r - self.epsilon)
        reg = 0.5 * (self.coef_ @ self.coef_ + self.intercept_ ** 2)
        return reg + self.C * loss.sum()


class PlattCalibrator(BaseEstimator):
    """Maps decision values to posterior probabilities via a fitted sigmoid.

    Targets are smoothed to (N+ + 1)/(N+ + 2) and 1/(N- + 2), the standard
    guard against overfitting separable decision values.
    """

    def __init__(self, max_iter: int = 100, tol: float = 1e-10):
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, f, y):
        f = np.asarray(f, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        pos = y > 0
        n_pos, n_neg = int(pos.sum()), int((~pos).sum())
        if n_pos == 0 or n_neg == 0:
            raise SingleClassInput("both labels must be present")
        if np.all(f == f[0]):
            # A is unidentifiable; fall back to the prior rate
            self.A_, self.degenerate_ = 0.0, True
            rate = (n_pos + 1) / (n_pos + n_neg + 2)
            self.B_ = math.log((1 - rate) / rate)
            return self
        self.degenerate_ = False
        t = np.where(pos, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
        # fit p = sigmoid(a f + b) internally; A_, B_ are the negated pair
        a, b = 0.0, math.log((n_pos + 1.0) / (n_neg + 1.0))
        sigma = 1e-12
        for _ in range(self.max_iter):
            z = np.clip(a * f + b, -500, 500)
            p = 1.0 / (1.0 + np.exp(-z))
            d1 = p - t  # dL/dz with L the negative log-likelihood
            g_a = float(d1 @ f)
            g_b = float(d1.sum())
            if abs(g_a) < self.tol and abs(g_b) < self.tol:
                break
            wgt = p * (1.0 - p)
            h_aa = float(wgt @ (f * f)) + sigma
            h_bb = float(wgt.sum()) + sigma
            h_ab = float(wgt @ f)
            det = h_aa * h_bb - h_ab * h_ab
            da = -(h_bb * g_a - h_ab * g_b) / det
            db = -(h_aa * g_b - h_ab * g_a) / det
            # backtracking on the objective
            obj = self._nll(a, b, f, t)
            step = 1.0
            while step > 1e-10:
                na, nb = a + step * da, b + step * db
                if self._nll(na, nb, f, t) < obj + 1e-12:
                    a, b = na, nb
                    break
                step /= 2.0
            else:
                break
        self.A_, self.B_ = -a, -b  # store so that P = 1/(1+exp(A f + B))
        return self

    @staticmethod
    def _nll(a, b, f, t):
        z = a * f + b
        # -sum t*log(p) + (1-t)*log(1-p) with p = 1/(1+e^z), stable form
        return float(np.sum((1.0 - t) * z + np.logaddexp(0.0, -z)))

    def predict_proba(self, f):
        if not hasattr(self, "A_"):
            raise NotFittedError("PlattCalibrator is not fitted")
        z = self.A_ * np.asarray(f, dtype=np.float64) + self.B_
        return 1.0 / (1.0 + np.exp(np.clip(z, -500, 500)))


def save_model(path, model, data_hash: str = "") -> None:
    """Write a fitted model: text header, then the raw weight payload."""
    kind = type(model).__name__
    lines = [f"kind {kind}"]
    if isinstance(model, (HingeSVC, EpsilonSVR)):
        lines.append(f"C {float(model.C)!r}")
        if isinstance(model, EpsilonSVR):
            lines.append(f"epsilon {float(model.epsilon)!r}")
        lines.append(f"dims {model.coef_.shape[0]}")
        lines.append(f"intercept {float(model.intercept_)!r}")
        payload = np.ascontiguousarray(model.coef_, dtype="<f8").tobytes()
    elif isinstance(model, PlattCalibrator):
        lines.append(f"A {float(model.A_)!r}")
        lines.append(f"B {float(model.B_)!r}")
        payload = b""
    else:
        raise TypeError(f"cannot serialize {kind}")
    lines.append(f"data_hash {data_hash}")
    header = "\n".join(lines) + "\nend\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(payload)


def load_model(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    head, _, payload = raw.partition(b"\nend\n")
    fields = dict(line.split(" ", 1) for line in head.decode("ascii").splitlines())
    kind = fields["kind"]
    if kind == "HingeSVC":
        model = HingeSVC(C=float(fields["C"]))
    elif kind == "EpsilonSVR":
        model = EpsilonSVR(C=float(fields["C"]), epsilon=float(fields["epsilon"]))
    elif kind == "PlattCalibrator":
        model = PlattCalibrator()
        model.A_ = float(fields["A"])
        model.B_ = float(fields["B"])
        model.degenerate_ = False
        return model, fields.get("data_hash", "")
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    model.coef_ = np.frombuffer(payload, dtype="<f8").copy()
    model.intercept_ = float(fields["intercept"])
    if model.coef_.shape[0] != int(fields["dims"]):
        raise ValueError("weight payload does not match declared dims")
    return model, fields.get("data_hash", "")


DEFAULT_TIER1 = tuple(10.0 ** k for k in range(-3, 4))
TIER2_FACTORS = (0.25, 0.5, 1.0, 2.0, 4.0)


def grid_search(make_model, X_train, y_train, X_val, y_val, metric,
                tier1=DEFAULT_TIER1):
    """Two-tier cost search: log-scale scan, then multiplicative refinement.

    ``metric(model, X_val, y_val)`` is maximized; ties break toward the
    smaller C.  Returns (best_C, {C: score}).
    """
    scores = {}

    def run(cs):
        best_c, best_s = None, -np.inf
        for c in sorted(set(cs)):
            if c not in scores:
                model = make_model(c).fit(X_train, y_train)
                scores[c] = metric(model, X_val, y_val)
            if scores[c] > best_s + 1e-12:
                best_c, best_s = c, scores[c]
        return best_c

    winner = run(tier1)
    winner = run([winner * f for f in TIER2_FACTORS])
    return winner, scores


def accuracy_metric(model, X, y):
    return float(np.mean(model.predict(X) == np.asarray(y)))


def neg_mae_metric(model, X, y):
    return -float(np.mean(np.abs(model.predict(X) - np.asarray(y))))
