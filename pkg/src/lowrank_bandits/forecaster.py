"""Exponentially weighted average forecaster over a pool of matrix experts.

Every element of a covering net acts as one expert: expert Theta predicts the
linear score <Theta, X_t> for the arm X_t. The forecaster mixes those
predictions with weights exponential in minus the cumulative loss, under
either the squared loss (linear rewards) or the exponential-family NLL loss
``loss(z, y) = -y*z + m(z)`` evaluated on the natural parameter z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .covering import LowRankNet
from .model import LinkSpec


@dataclass(frozen=True)
class ExpertPool:
    """Expert pool backed by a covering net; expert i predicts <Theta_i, X>."""

    net: LowRankNet

    def __post_init__(self):
        if len(self.net) == 0:
            raise ValueError("expert pool must be non-empty")

    def __len__(self) -> int:
        return len(self.net)

    def predictions(self, x: np.ndarray) -> np.ndarray:
        """Vector of expert scores f_{i,t} = <Theta_i, X>."""
        return self.net.flat() @ np.asarray(x, dtype=float).reshape(-1)


@dataclass(frozen=True)
class EwState:
    """Cumulative expert losses plus the learning rate; round is 0-based count
    of updates applied so far (losses are L_{., round})."""

    eta: float
    loss_kind: str  # "squared" | "nll"
    cumulative_losses: np.ndarray
    link: LinkSpec | None = None
    forecaster_loss: float = 0.0
    round: int = 0

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.loss_kind not in ("squared", "nll"):
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")
        if self.loss_kind == "nll" and self.link is None:
            raise ValueError("nll loss requires a LinkSpec")
        self.cumulative_losses.setflags(write=False)


def init_state(pool: ExpertPool, eta: float, loss_kind: str = "squared",
               link: LinkSpec | None = None) -> EwState:
    return EwState(eta=eta, loss_kind=loss_kind, link=link,
                   cumulative_losses=np.zeros(len(pool)))


def eta_squared(T: int, delta: float) -> float:
    """Learning rate making the squared loss exp-concave at horizon T."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if not (0.0 < delta < 0.25):
        raise ValueError("delta must lie in (0, 0.25)")
    return 1.0 / (2.0 * (2.0 + math.sqrt(2.0 * math.log(2.0 * T / delta))) ** 2)


def eta_nll(T: int, delta: float, link: LinkSpec) -> float:
    """Learning rate making the NLL loss exp-concave at horizon T."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if not (0.0 < delta < 0.25):
        raise ValueError("delta must lie in (0, 0.25)")
    if link.kappa_mu <= 0:
        raise ValueError("link must have kappa_mu > 0")
    denom = (math.sqrt(2.0 * link.R ** 2 * math.log(2.0 * T / delta))
             + 2.0 * link.c_mu + 2.0 * link.L_mu) ** 2
    return link.kappa_mu / denom


def weights(state: EwState) -> np.ndarray:
    """Current mixture weights, computed with a max-shift in the exponent."""
    logw = -state.eta * state.cumulative_losses
    logw = logw - logw.max()
    w = np.exp(logw)
    return w / w.sum()


def predict(state: EwState, pool: ExpertPool, x: np.ndarray) -> float:
    """EW prediction: the weight-averaged expert score for arm x."""
    return float(weights(state) @ pool.predictions(x))


def _losses(state: EwState, scores: np.ndarray, y: float) -> np.ndarray:
    if state.loss_kind == "squared":
        return (y - scores) ** 2
    return -y * scores + state.link.m(scores)


def update(state: EwState, pool: ExpertPool, x: np.ndarray, y: float,
           y_hat: float | None = None) -> EwState:
    """Charge round-t losses to every expert (and the forecaster) and advance.

    ``y_hat`` is the prediction the forecaster actually made this round; when
    omitted it is recomputed from the pre-update state.
    """
    if not math.isfinite(y):
        raise ValueError("observed reward must be finite")
    if y_hat is None:
        y_hat = predict(state, pool, x)
    scores = pool.predictions(x)
    new_losses = state.cumulative_losses + _losses(state, scores, y)
    own = float(_losses(state, np.array([y_hat]), y)[0])
    return replace(state, cumulative_losses=new_losses,
                   forecaster_loss=state.forecaster_loss + own,
                   round=state.round + 1)


def max_expert_regret(state: EwState) -> float:
    """Realized sup over the pool of the forecaster regret, floored at zero."""
    if state.round == 0:
        return 0.0
    return max(0.0, state.forecaster_loss - float(state.cumulative_losses.min()))


def regret_vs_expert(y_hat_hist, expert_hist, y_hist, loss_kind: str = "squared",
                     link: LinkSpec | None = None) -> float:
    """Cumulative loss gap between the forecaster and one fixed expert."""
    y_hat_hist = np.asarray(y_hat_hist, dtype=float)
    expert_hist = np.asarray(expert_hist, dtype=float)
    y_hist = np.asarray(y_hist, dtype=float)
    if not (y_hat_hist.shape == expert_hist.shape == y_hist.shape):
        raise ValueError("history lengths differ")
    if loss_kind == "squared":
        own = (y_hist - y_hat_hist) ** 2
        theirs = (y_hist - expert_hist) ** 2
    elif loss_kind == "nll":
        if link is None:
            raise ValueError("nll loss requires a LinkSpec")
        own = -y_hist * y_hat_hist + link.m(y_hat_hist)
        theirs = -y_hist * expert_hist + link.m(expert_hist)
    else:
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    return float(np.sum(own - theirs))
