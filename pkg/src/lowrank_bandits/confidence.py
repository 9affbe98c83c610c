"""Online-to-confidence-set conversion.

The forecaster's predictions (X_s, yhat_s) define a regularized design
V_t = I + sum_s vec(X_s) vec(X_s)^T and ridge center theta_hat = V^-1 b with
b = sum_s yhat_s vec(X_s). Given a bound B_t on the online regret, the radius
beta turns (V, theta_hat) into an ellipsoid that traps the true parameter with
high probability; arm scores are the exact maxima of <X, Theta> over that
ellipsoid.

Two radius formulas coexist: the squared-loss conversion whose exact set is
  ||Theta||_F^2 + sum_s (yhat_s - <Theta, X_s>)^2 <= 1 + beta_t(delta),
and the NLL-loss conversion whose set uses the *unsquared* norm and its own
radius,
  ||Theta||_F + sum_s (yhat_s - <Theta, X_s>)^2 <= beta_glb_t(delta).
Both literal inequalities are implemented as stated, without reconciling the
norm-vs-norm-squared difference between them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import LinkSpec

_RESOLVE_EVERY = 256


def beta_linear(B_t: float, delta: float) -> float:
    """Squared-loss conversion radius 1 + 2B + 32 log((sqrt8 + sqrt(1+B))/delta)."""
    if B_t < 0:
        raise ValueError("B_t must be non-negative")
    if not (0.0 < delta <= 0.25):
        raise ValueError("delta must lie in (0, 0.25]")
    return 1.0 + 2.0 * B_t + 32.0 * math.log(
        (math.sqrt(8.0) + math.sqrt(1.0 + B_t)) / delta)


def beta_glb(B_t: float, delta: float, link: LinkSpec) -> float:
    """NLL-loss conversion radius; reduces to 2 + 4B + 32 log(...) for identity."""
    if B_t < 0:
        raise ValueError("B_t must be non-negative")
    if not (0.0 < delta <= 0.25):
        raise ValueError("delta must lie in (0, 0.25]")
    kappa, R = link.kappa_mu, link.R
    if kappa <= 0:
        raise ValueError("link must have kappa_mu > 0")
    arg = (R * math.sqrt(8.0 / kappa ** 2) + math.sqrt(2.0 * B_t / kappa + 1.0)) / delta
    return 2.0 + 4.0 / kappa * B_t + 32.0 * R ** 2 / kappa ** 2 * math.log(arg)


@dataclass(frozen=True)
class EllipsoidSet:
    """Snapshot {theta : (vec(theta) - center)^T shape (vec(theta) - center) <= radius}."""

    center: np.ndarray  # vectorized ridge center
    shape: np.ndarray   # V, PSD with eigenvalues >= 1
    shape_inv: np.ndarray
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be non-negative")
        for arr in (self.center, self.shape, self.shape_inv):
            arr.setflags(write=False)


class ConversionState:
    """Incremental ridge state over the (X_s, yhat_s) stream.

    Maintains V, its inverse (rank-one updates with a periodic exact
    re-solve), b, and theta_hat = V^-1 b. Single-owner per run.
    """

    def __init__(self, d1: int, d2: int):
        self.d1, self.d2 = d1, d2
        dim = d1 * d2
        self.V = np.eye(dim)
        self.V_inv = np.eye(dim)
        self.b = np.zeros(dim)
        self.theta_hat = np.zeros(dim)
        self.t = 0

    def ingest(self, x: np.ndarray, y_hat: float) -> None:
        """Fold one (arm, prediction) pair into V, b, and the ridge center."""
        v = np.asarray(x, dtype=float).reshape(-1)
        if v.shape[0] != self.V.shape[0]:
            raise ValueError(
                f"arm has {v.shape[0]} entries, state expects {self.V.shape[0]}")
        self.V += np.outer(v, v)
        self.b += y_hat * v
        self.t += 1
        if self.t % _RESOLVE_EVERY == 0:
            self.V_inv = np.linalg.inv(self.V)
        else:
            # Sherman-Morrison on the inverse
            Vv = self.V_inv @ v
            self.V_inv -= np.outer(Vv, Vv) / (1.0 + float(v @ Vv))
        self.theta_hat = self.V_inv @ self.b

    def snapshot(self, radius: float) -> EllipsoidSet:
        return EllipsoidSet(center=self.theta_hat.copy(), shape=self.V.copy(),
                            shape_inv=self.V_inv.copy(), radius=radius)


def ucb_score(ellipsoid: EllipsoidSet, x: np.ndarray) -> float:
    """max over the ellipsoid of <X, Theta>: <x, center> + sqrt(beta) ||vec x||_{V^-1}."""
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.shape[0] != ellipsoid.shape.shape[0]:
        raise ValueError("arm dimension does not match the ellipsoid")
    width_sq = float(v @ (ellipsoid.shape_inv @ v))
    assert width_sq > -1e-12, "V must stay positive definite"
    return float(v @ ellipsoid.center) + math.sqrt(ellipsoid.radius) * math.sqrt(
        max(width_sq, 0.0))


def _residuals(theta: np.ndarray, x_hist, y_hat_hist) -> float:
    if len(x_hist) != len(y_hat_hist):
        raise ValueError("history lengths differ")
    total = 0.0
    flat = np.asarray(theta, dtype=float).reshape(-1)
    for x, y_hat in zip(x_hist, y_hat_hist):
        total += (y_hat - float(np.asarray(x, dtype=float).reshape(-1) @ flat)) ** 2
    return total


def contains(theta: np.ndarray, x_hist, y_hat_hist, B_t: float, delta: float,
             mode: str = "linear", link: LinkSpec | None = None) -> bool:
    """Literal membership test in the conversion set over the given history."""
    res = _residuals(theta, x_hist, y_hat_hist)
    norm = float(np.linalg.norm(theta))
    if mode == "linear":
        return norm ** 2 + res <= 1.0 + beta_linear(B_t, delta)
    if mode == "glb":
        if link is None:
            raise ValueError("glb mode requires a LinkSpec")
        return norm + res <= beta_glb(B_t, delta, link)
    raise ValueError(f"unknown mode {mode!r}")
