"""Linear classifier in the physically-motivated 4-D difference-feature space.

The feature map lifts a normalized intensity pair to the four monomial
differences (o^4-e^4, o^3-e^3, o^2-e^2, o-e), so a linear decision function
simultaneously absorbs the inverse-curve coefficients and the class
boundary. Training minimizes the convex L2-regularized squared-hinge
primal with a deterministic damped-Newton descent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class TrainingError(ValueError):
    """Training data cannot produce a classifier."""


@dataclass(frozen=True)
class TrainingMeta:
    iterations: int
    final_objective: float
    converged: bool
    objective_path: tuple[float, ...]


@dataclass(frozen=True)
class SvmModel:
    w: np.ndarray
    b: float
    c_reg: float
    training_meta: TrainingMeta

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64).copy()
        if not np.all(np.isfinite(w)) or not np.isfinite(self.b):
            raise ValueError("model parameters must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)


def phi(i_o, i_e) -> np.ndarray:
    """Map normalized intensity pairs to 4-D monomial-difference features.

    phi(x, x) is exactly zero and phi(a, b) == -phi(b, a) exactly, because
    each component subtracts identical IEEE quantities.
    """
    o = np.asarray(i_o, dtype=np.float64)
    e = np.asarray(i_e, dtype=np.float64)
    if o.size and (min(o.min(), e.min()) < -1e-9 or max(o.max(), e.max()) > 1.0 + 1e-9):
        raise ValueError("phi expects intensities normalized to [0, 1]")
    return np.stack([o**4 - e**4, o**3 - e**3, o**2 - e**2, o - e], axis=-1)


def _objective(theta: np.ndarray, X: np.ndarray, y: np.ndarray, c_reg: float) -> float:
    w, b = theta[:-1], theta[-1]
    slack = np.maximum(0.0, 1.0 - y * (X @ w + b))
    return 0.5 * float(w @ w) + c_reg * float(slack @ slack)


def train(
    features,
    labels,
    c_reg: float = 1.0,
    tol: float = 1e-6,
    max_iter: int = 10_000,
    init=None,
) -> SvmModel:
    """Minimize 0.5*|w|^2 + c_reg*sum_i max(0, 1 - y_i*(w.u_i + b))^2.

    The classic soft-margin primal with squared hinge slacks: convex, with
    a piecewise-quadratic landscape a damped Newton step solves in a
    handful of passes. Deterministic given the input order and parameters;
    the objective never increases (backtracking line search), and iteration
    stops when the relative per-pass improvement drops below tol or at
    max_iter.

    Features are brought to unit RMS by one global scale factor internally
    (intensity-difference features are of order kappa/255, which would
    leave the problem too ill-conditioned); the returned (w, b) act on raw
    features.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise TrainingError("features must be (N, d) with one label per row")
    if not np.all(np.isfinite(X)):
        raise TrainingError("features contain non-finite values")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise TrainingError("labels must be -1 or +1")
    if np.all(y == y[0]):
        raise TrainingError("training data holds a single class")
    if c_reg <= 0 or tol <= 0:
        raise TrainingError("c_reg and tol must be positive")

    rms = float(np.sqrt(np.mean(X**2)))
    scale = rms if rms > 1e-12 else 1.0
    X = X / scale

    n, d = X.shape
    theta = np.zeros(d + 1) if init is None else np.asarray(init, dtype=np.float64).copy()
    if theta.shape != (d + 1,):
        raise TrainingError(f"init must have {d + 1} entries (w then b)")

    obj = _objective(theta, X, y, c_reg)
    path = [obj]
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        w, b = theta[:-1], theta[-1]
        slack = 1.0 - y * (X @ w + b)
        active = slack > 0.0
        Xa, ya, sa = X[active], y[active], slack[active]
        grad = np.empty(d + 1)
        grad[:-1] = w - 2.0 * c_reg * (Xa.T @ (ya * sa))
        grad[-1] = -2.0 * c_reg * float(ya @ sa)
        if np.linalg.norm(grad) < 1e-12 * max(1.0, obj):
            converged = True
            break
        # generalized Hessian of the squared hinge (piecewise quadratic)
        H = np.zeros((d + 1, d + 1))
        H[:d, :d] = np.eye(d)
        if Xa.shape[0]:
            Z = np.hstack([Xa, np.ones((Xa.shape[0], 1))])
            H += 2.0 * c_reg * (Z.T @ Z)
        H[np.diag_indices_from(H)] += 1e-10
        step = np.linalg.solve(H, grad)

        t = 1.0
        decrease = float(grad @ step)
        new_obj = obj
        while t > 2.0**-40:
            cand = theta - t * step
            new_obj = _objective(cand, X, y, c_reg)
            if new_obj <= obj - 1e-4 * t * decrease:
                theta = cand
                break
            t *= 0.5
        else:
            converged = True  # no admissible step: at the numerical optimum
            break
        assert new_obj <= obj + 1e-12, "objective increased across a pass"
        improvement = obj - new_obj
        obj = new_obj
        path.append(obj)
        if improvement <= tol * max(obj, 1e-12):
            converged = True
            break

    meta = TrainingMeta(
        iterations=iterations,
        final_objective=obj,
        converged=converged,
        objective_path=tuple(path),
    )
    return SvmModel(
        w=theta[:-1] / scale, b=float(theta[-1]), c_reg=float(c_reg), training_meta=meta
    )


def decide(model: SvmModel, u) -> np.ndarray | float:
    """Decision score w.u + b; the decoded bit is 1 iff the score is > 0."""
    u_arr = np.asarray(u, dtype=np.float64)
    out = u_arr @ model.w + model.b
    return float(out) if u_arr.ndim == 1 else out
