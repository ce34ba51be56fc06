"""Penalized linear models.

Objective, with standardized features and an unpenalized intercept:

    regression:  1/(2n) ||y - Xw - b||^2            + alpha * P(w)
    logistic:    1/n sum log-loss(y, Xw + b)         + alpha * P(w)
    multinomial: 1/n sum softmax-loss(y, XW + b)     + alpha * P(W)

with P(w) = l1_ratio * |w|_1 + (1 - l1_ratio) / 2 * |w|_2^2.  Regression uses
coordinate descent on the Gram matrix; the classifiers use FISTA.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ENET_L1_GRID = (0.1, 0.5, 0.9, 1.0)
LOGISTIC_L1_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


class ConvergenceError(RuntimeError):
    def __init__(self, message, gap):
        super().__init__(f"{message} (final gap/gradient norm {gap:.3e})")
        self.gap = gap


@dataclass
class LinearModel:
    link: str                  # identity | logistic | multinomial
    coef: np.ndarray           # (p,) or (p, K), on standardized features
    intercept: np.ndarray      # (1,) or (K,)
    mean: np.ndarray
    scale: np.ndarray
    alpha: float = 0.0
    l1_ratio: float = 1.0
    cv_trace: list = field(default_factory=list)

    def decision(self, X) -> np.ndarray:
        Z = (np.asarray(X, dtype=float) - self.mean) / self.scale
        return Z @ self.coef + self.intercept

    def predict(self, X) -> np.ndarray:
        F = self.decision(X)
        if self.link == "identity":
            return F
        if self.link == "logistic":
            p = _sigmoid(F)
            return np.column_stack([1 - p, p])
        return _softmax(F)

    def to_dict(self) -> dict:
        return {"link": self.link, "coef": self.coef.tolist(), "intercept": self.intercept.tolist(),
                "mean": self.mean.tolist(), "scale": self.scale.tolist(), "alpha": self.alpha,
                "l1_ratio": self.l1_ratio, "cv_trace": self.cv_trace}

    @classmethod
    def from_dict(cls, d) -> "LinearModel":
        return cls(d["link"], np.array(d["coef"], dtype=float), np.array(d["intercept"], dtype=float),
                   np.array(d["mean"], dtype=float), np.array(d["scale"], dtype=float),
                   d["alpha"], d["l1_ratio"], d["cv_trace"])


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softmax(F):
    e = np.exp(F - F.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _soft(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def standardize(X):
    X = np.asarray(X, dtype=float)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return (X - mean) / scale, mean, scale


# -- elastic net (coordinate descent) ----------------------------------------

def _polish(G, c, w, l1, l2, tol):
    """Exact solve on the current support and sign pattern; None unless it is optimal."""
    act = np.nonzero(w)[0]
    if act.size == 0:
        cand = np.zeros_like(w)
    else:
        s = np.sign(w[act])
        A = G[np.ix_(act, act)] + l2 * np.eye(act.size)
        try:
            sol = np.linalg.solve(A, c[act] - l1 * s)
        except np.linalg.LinAlgError:
            return None
        if np.any(np.sign(sol) != s):
            return None
        cand = np.zeros_like(w)
        cand[act] = sol
    if _kkt_violation(G, c, cand, l1, l2) <= tol * max(1.0, float(np.abs(c).max(initial=0.0))):
        return cand
    return None


def enet_cd(X, y, alpha, l1_ratio=1.0, fit_intercept=True, tol=1e-10, max_iter=10000, w0=None):
    """Coordinate descent on the Gram matrix; returns (w, b).

    After each sweep the current support is solved exactly and accepted once
    it meets the optimality conditions to ``tol``; otherwise stops when the
    largest coordinate move is below ``tol`` times the largest weight.
    Raises ``ConvergenceError`` carrying the KKT violation on failure.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if fit_intercept:
        xm, ym = X.mean(axis=0), y.mean()
        Xc, yc = X - xm, y - ym
    else:
        xm, ym = np.zeros(p), 0.0
        Xc, yc = X, y
    G = Xc.T @ Xc / n
    c = Xc.T @ yc / n
    l1 = alpha * l1_ratio
    l2 = alpha * (1.0 - l1_ratio)
    w = np.zeros(p) if w0 is None else np.array(w0, dtype=float)
    q = G @ w
    diag = np.diag(G).tolist()
    cl = c.tolist()
    for _ in range(max_iter):
        max_dw, max_w = 0.0, 0.0
        for j in range(p):
            dj = diag[j]
            if dj == 0.0 and l2 == 0.0:
                continue
            old = float(w[j])
            rho = cl[j] - float(q[j]) + dj * old
            if rho > l1:
                new = (rho - l1) / (dj + l2)
            elif rho < -l1:
                new = (rho + l1) / (dj + l2)
            else:
                new = 0.0
            if new != old:
                q += G[j] * (new - old)  # G is symmetric
                w[j] = new
                max_dw = max(max_dw, abs(new - old))
            max_w = max(max_w, abs(new))
        exact = _polish(G, c, w, l1, l2, tol)
        if exact is not None:
            return exact, float(ym - xm @ exact)
        if max_w == 0.0 or max_dw <= tol * max_w:
            return w, float(ym - xm @ w)
    raise ConvergenceError("elastic net did not converge", _kkt_violation(G, c, w, l1, l2))


def _kkt_violation(G, c, w, l1, l2):
    """Largest distance of the smooth gradient from the L1 subdifferential."""
    grad = G @ w - c + l2 * w
    viol = np.where(w != 0, np.abs(grad + l1 * np.sign(w)), np.maximum(np.abs(grad) - l1, 0.0))
    return float(viol.max()) if viol.size else 0.0


def alpha_max(X, y, l1_ratio):
    """Smallest alpha for which the lasso part zeroes every weight."""
    Xc = X - X.mean(axis=0)
    return float(np.abs(Xc.T @ (y - y.mean())).max() / (len(y) * max(l1_ratio, 1e-3)))


# -- logistic / multinomial (FISTA) ------------------------------------------

def _onehot(y, K):
    Y = np.zeros((len(y), K))
    Y[np.arange(len(y)), np.asarray(y).astype(int)] = 1.0
    return Y


def logistic_loss_grad(w, b, X, y, alpha, l1_ratio=0.0):
    """Smooth part of the objective (data term + L2 penalty) and its gradient.

    Binary when ``w`` is 1-D, multinomial when ``w`` is (p, K).
    Returns (loss, grad_w, grad_b).
    """
    n = X.shape[0]
    l2 = alpha * (1.0 - l1_ratio)
    F = X @ w + b
    if w.ndim == 1:
        loss = np.mean(np.logaddexp(0.0, F) - y * F)
        r = _sigmoid(F) - y
        gw = X.T @ r / n + l2 * w
        gb = np.array(r.mean())
    else:
        K = w.shape[1]
        m = F.max(axis=1)
        lse = m + np.log(np.exp(F - m[:, None]).sum(axis=1))
        loss = np.mean(lse - F[np.arange(n), np.asarray(y).astype(int)])
        R = _softmax(F) - _onehot(y, K)
        gw = X.T @ R / n + l2 * w
        gb = R.mean(axis=0)
    loss = float(loss + 0.5 * l2 * np.sum(w * w))
    return loss, gw, gb


def fit_logistic(X, y, alpha, l1_ratio=0.0, n_classes=2, tol=1e-6, max_iter=20000, w0=None, b0=None):
    """Proximal-gradient (FISTA) elastic-net logistic / multinomial regression.

    Converged when the proximal-gradient mapping norm falls below ``tol``.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    multi = n_classes > 2
    shape = (p, n_classes) if multi else (p,)
    w = np.zeros(shape) if w0 is None else np.array(w0, dtype=float)
    b = np.zeros(n_classes if multi else 1) if b0 is None else np.array(b0, dtype=float)
    if not multi:
        b = b.reshape(())
    smax = np.linalg.norm(np.column_stack([X, np.ones(n)]), 2) ** 2 / n
    L = (0.5 if multi else 0.25) * smax + alpha * (1.0 - l1_ratio)
    step = 1.0 / L
    l1 = alpha * l1_ratio
    zw, zb, t = w.copy(), b.copy(), 1.0
    norm = np.inf
    for _ in range(max_iter):
        _, gw, gb = logistic_loss_grad(zw, zb, X, y, alpha, l1_ratio)
        w_new = _soft(zw - step * gw, step * l1)
        b_new = zb - step * gb
        norm = np.sqrt(np.sum((zw - w_new) ** 2) + np.sum((zb - b_new) ** 2)) / step
        if norm < tol:
            return w_new, np.atleast_1d(b_new)
        # adaptive restart: drop momentum when it points against the step
        if np.sum((zw - w_new) * (w_new - w)) + np.sum((zb - b_new) * (b_new - b)) > 0:
            t = 1.0
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / t_new
        zw = w_new + mom * (w_new - w)
        zb = b_new + mom * (b_new - b)
        w, b, t = w_new, b_new, t_new
    raise ConvergenceError("logistic regression did not converge", float(norm))


# -- cross-validated fitting -------------------------------------------------

def _folds(n, k, seed, strata=None):
    from ..evaluation import kfold
    return kfold(np.arange(n), k, seed, strata)


def fit_linear(X, y, link: str, l1_grid=None, *, n_alphas: int = 10, cv: int = 5, seed: int = 0,
               n_classes: int = 2) -> LinearModel:
    """Standardize, pick (l1_ratio, alpha) by internal CV, refit on all rows.

    Regression CV minimizes squared error over an alpha path from
    ``alpha_max`` down three decades; classifiers minimize held-out log-loss
    over alphas 1e-4..1e1 (log-spaced).
    """
    Z, mean, scale = standardize(X)
    y = np.asarray(y, dtype=float)
    n = Z.shape[0]
    if link == "identity":
        grid = tuple(l1_grid or ENET_L1_GRID)
    else:
        grid = tuple(l1_grid or LOGISTIC_L1_GRID)
    folds = _folds(n, min(cv, n), seed, None if link == "identity" else y.astype(int))
    trace = []
    best = None
    for l1 in grid:
        if link == "identity":
            top = alpha_max(Z, y, l1) or 1.0
            alphas = top * np.logspace(0, -3, n_alphas)
        else:
            alphas = np.logspace(1, -4, n_alphas)
        errs = np.zeros(len(alphas))
        for f in folds:
            tr = np.setdiff1d(np.arange(n), f)
            w0 = b0 = None
            for a_i, a in enumerate(alphas):
                # path points that do not converge within the CV budget are ruled out
                if link == "identity":
                    try:
                        w, b = enet_cd(Z[tr], y[tr], a, l1, tol=1e-7, max_iter=5000, w0=w0)
                    except ConvergenceError:
                        errs[a_i] = np.inf
                        continue
                    errs[a_i] += np.sum((y[f] - Z[f] @ w - b) ** 2)
                    w0 = w
                else:
                    try:
                        w, b = fit_logistic(Z[tr], y[tr], a, l1, n_classes, tol=1e-4,
                                            max_iter=5000, w0=w0, b0=b0)
                    except ConvergenceError:
                        errs[a_i] = np.inf
                        continue
                    w0, b0 = w, b
                    model = LinearModel("logistic" if n_classes == 2 else "multinomial", w, b,
                                        np.zeros(Z.shape[1]), np.ones(Z.shape[1]))
                    P = np.clip(model.predict(Z[f]), 1e-15, 1.0)
                    errs[a_i] -= np.sum(np.log(P[np.arange(len(f)), y[f].astype(int)]))
        errs /= n
        for a, e in zip(alphas, errs):
            trace.append({"l1_ratio": float(l1), "alpha": float(a),
                          "cv_loss": float(e) if np.isfinite(e) else None})
        if not np.isfinite(errs).any():
            continue
        i = int(np.argmin(errs))
        if best is None or errs[i] < best[0]:
            best = (float(errs[i]), float(l1), float(alphas[i]))
    if best is None:
        raise ConvergenceError("no penalty on the path converged in cross-validation", np.inf)
    _, l1, a = best
    if link == "identity":
        w, b = enet_cd(Z, y, a, l1, tol=1e-9)
        return LinearModel("identity", w, np.array([b]), mean, scale, a, l1, trace)
    w, b = fit_logistic(Z, y, a, l1, n_classes)
    return LinearModel("logistic" if n_classes == 2 else "multinomial", w, b, mean, scale, a, l1, trace)
