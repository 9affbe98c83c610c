"""LowLOC and its generalized-linear sibling LowGLOC.

Each round: pick the arm maximizing the optimistic score over the current
confidence ellipsoid, pull it, form the EW prediction from losses through
round t-1, fold (arm, prediction) into the conversion state, charge the true
reward to the expert losses, then recompute the radius from the forecaster
regret budget. The order matters and is enforced.

The expert pool is a covering net. The default pool radius 1/T from the
analysis is far beyond any buildable net at interesting horizons (the
covering count is exponential), so runnable configurations pass an explicit
coarser ``net_eps``; infeasible scales refuse loudly at construction.
"""

from __future__ import annotations

import math

import numpy as np

from . import confidence, covering, forecaster
from .errors import InfeasibleScaleError
from .model import ArmSet, BanditInstance, LinkSpec


def bt_schedule(kind: str, t: int, T: int, delta: float, d1: int, d2: int,
                r: int, link: LinkSpec | None = None) -> float:
    """Forecaster-regret budget B_t.

    ``lemma3``: the explicit squared-loss bound with net radius 1/T,
        2 (d1+d2+1) r log(9T) (2 + sqrt(2 log(2T/delta)))^2
        + (2t/T) (1 + sqrt(2 log(2T/delta))).
    ``lemma7``: the NLL-loss analogue,
        (d1+d2+1) r log(9T) (sqrt(2 R^2 log(2T/delta)) + 2c + 2L)^2 / kappa
        + (t/T) (2c + 2L + sqrt(2 R^2 log(2T/delta))).
    The ``empirical`` kind is computed from live run state by the agent, not
    from this closed form.
    """
    if t > T:
        raise ValueError("t must not exceed the horizon T")
    if kind == "lemma3":
        tail = math.sqrt(2.0 * math.log(2.0 * T / delta))
        return (2.0 * (d1 + d2 + 1) * r * math.log(9.0 * T) * (2.0 + tail) ** 2
                + 2.0 * t / T * (1.0 + tail))
    if kind == "lemma7":
        if link is None:
            raise ValueError("lemma7 schedule requires a LinkSpec")
        tail = math.sqrt(2.0 * link.R ** 2 * math.log(2.0 * T / delta))
        width = tail + 2.0 * link.c_mu + 2.0 * link.L_mu
        return ((d1 + d2 + 1) * r * math.log(9.0 * T) * width ** 2 / link.kappa_mu
                + t / T * (2.0 * link.c_mu + 2.0 * link.L_mu + tail))
    if kind == "empirical":
        raise ValueError("empirical B_t is tracked by the agent, not the schedule")
    raise ValueError(f"unknown B_t schedule kind {kind!r}")


class LowLocAgent:
    """Optimistic low-rank bandit agent driven by an EW forecaster.

    ``mode`` is "linear" (LowLOC, squared loss, identity link) or "glm"
    (LowGLOC, NLL loss over the supplied link). ``record_history`` keeps the
    (arm, prediction) stream for membership diagnostics.
    """

    def __init__(self, net: covering.LowRankNet, T: int, delta: float,
                 mode: str = "linear", link: LinkSpec | None = None,
                 bt_kind: str = "lemma3", record_history: bool = False):
        if mode not in ("linear", "glm"):
            raise ValueError(f"unknown mode {mode!r}")
        if mode == "glm" and link is None:
            raise ValueError("glm mode requires a LinkSpec")
        d1, d2, r = net.dims
        self.dims = (d1, d2)
        self.rank = r
        self.T = T
        self.delta = delta
        self.mode = mode
        self.link = link if mode == "glm" else None
        self.bt_kind = bt_kind
        self.pool = forecaster.ExpertPool(net)
        if mode == "linear":
            eta = forecaster.eta_squared(T, delta)
            self.ew = forecaster.init_state(self.pool, eta, "squared")
        else:
            eta = forecaster.eta_nll(T, delta, link)
            self.ew = forecaster.init_state(self.pool, eta, "nll", link)
        self.conv = confidence.ConversionState(d1, d2)
        self.radius = 1.0  # round-1 set is the unit Frobenius ball
        self._empirical_bt = 0.0
        self._pending_arm: np.ndarray | None = None
        self.record_history = record_history
        self.x_hist: list[np.ndarray] = []
        self.y_hat_hist: list[float] = []

    @classmethod
    def from_scale(cls, d1: int, d2: int, r: int, T: int, delta: float,
                   net_eps: float | None = None,
                   max_net_elements: int = covering.NET_CAP_DEFAULT,
                   **kwargs) -> "LowLocAgent":
        """Build the expert net (default radius 1/T) and refuse infeasible scales."""
        eps = 1.0 / T if net_eps is None else net_eps
        bound = covering.net_size_bound(d1, d2, r, eps)
        try:
            net = covering.build_net(d1, d2, r, eps, max_elements=max_net_elements)
        except (covering.NetTooLargeError, covering.NetCoverageError) as exc:
            raise InfeasibleScaleError(
                f"LowLOC infeasible at this scale: a {eps:g}-net over rank-{r} "
                f"{d1}x{d2} matrices is bounded by {bound:.3g} elements and could "
                f"not be built under the {max_net_elements}-element cap ({exc})"
            ) from exc
        return cls(net, T, delta, **kwargs)

    def current_set(self) -> confidence.EllipsoidSet:
        return self.conv.snapshot(self.radius)

    def _bt(self, t: int) -> float:
        if self.bt_kind == "empirical":
            self._empirical_bt = max(self._empirical_bt,
                                     forecaster.max_expert_regret(self.ew))
            return self._empirical_bt
        d1, d2 = self.dims
        return bt_schedule(self.bt_kind, t, self.T, self.delta, d1, d2,
                           self.rank, self.link)

    def select_arm(self, arm_set: ArmSet) -> int:
        """Index maximizing the optimistic score; ties go to the lowest index."""
        if self._pending_arm is not None:
            raise RuntimeError("observe() must be called before the next select_arm()")
        ell = self.current_set()
        scores = [confidence.ucb_score(ell, arm_set[i]) for i in range(len(arm_set))]
        idx = int(np.argmax(scores))
        self._pending_arm = np.array(arm_set[idx], dtype=float)
        return idx

    def observe(self, arm: np.ndarray, y: float) -> None:
        """Feed back the reward for the arm returned by the last select_arm."""
        if self._pending_arm is None:
            raise RuntimeError("observe() called before select_arm()")
        if not np.array_equal(arm, self._pending_arm):
            raise RuntimeError("observe() got a different arm than was selected")
        self._pending_arm = None
        # (a) predict from losses through t-1
        y_hat = forecaster.predict(self.ew, self.pool, arm)
        # (b) the conversion set is built from (X_t, yhat_t) pairs
        self.conv.ingest(arm, y_hat)
        # (c) only now does the true reward touch the expert losses
        self.ew = forecaster.update(self.ew, self.pool, arm, y, y_hat=y_hat)
        # (d) refresh the radius from the regret budget at round t
        b_t = self._bt(self.conv.t)
        if self.mode == "linear":
            self.radius = confidence.beta_linear(b_t, self.delta)
        else:
            self.radius = confidence.beta_glb(b_t, self.delta, self.link)
        if self.record_history:
            self.x_hist.append(np.array(arm, dtype=float))
            self.y_hat_hist.append(y_hat)


def run_lowloc(instance: BanditInstance, arm_set: ArmSet, agent: LowLocAgent,
               T: int, rng: np.random.Generator):
    """Drive one agent for T rounds; returns (instant_regret array, agent)."""
    from .model import instant_regret

    inst_regret = np.empty(T)
    for t in range(T):
        idx = agent.select_arm(arm_set)
        y = instance.pull(arm_set[idx], rng)
        agent.observe(arm_set[idx], y)
        inst_regret[t] = instant_regret(instance, arm_set, idx)
    return inst_regret, agent
