"""Domain types and bandit environments.

Arms are real ``d1 x d2`` matrices with Frobenius norm at most one. The
hidden parameter is a low-rank matrix ``theta_star`` with ``||theta*||_F <= 1``
and its r-th singular value bounded below by ``omega_r``. Rewards are
``mu(<X, theta*>) + noise`` where ``mu`` is the identity for the linear model
and the logistic function for binary-style generalized rewards.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatchError, InvalidInstanceError

FROB_SLACK = 1e-9
RANK_TOL = 1e-8


def mat_inner(a: np.ndarray, b: np.ndarray) -> float:
    """Trace inner product <A, B> = trace(A^T B)."""
    return float(np.sum(a * b))


def frob_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a))


def check_arm(arm: np.ndarray) -> np.ndarray:
    """Validate a single arm matrix: finite entries, ||X||_F <= 1 (+ slack)."""
    arm = np.asarray(arm, dtype=float)
    if arm.ndim != 2:
        raise DimensionMismatchError(f"arm must be a 2-d matrix, got shape {arm.shape}")
    if not np.all(np.isfinite(arm)):
        raise InvalidInstanceError("arm contains non-finite entries")
    if frob_norm(arm) > 1.0 + FROB_SLACK:
        raise InvalidInstanceError(f"arm Frobenius norm {frob_norm(arm):.6g} exceeds 1")
    return arm


@dataclass(frozen=True)
class ArmSet:
    """An ordered, immutable set of candidate arms, stacked as (n, d1, d2)."""

    arms: np.ndarray

    def __post_init__(self):
        arms = np.asarray(self.arms, dtype=float)
        if arms.ndim != 3 or arms.shape[0] == 0:
            raise InvalidInstanceError("arm set must be a non-empty (n, d1, d2) stack")
        for i in range(arms.shape[0]):
            check_arm(arms[i])
        arms.setflags(write=False)
        object.__setattr__(self, "arms", arms)

    @property
    def dims(self) -> tuple[int, int]:
        return self.arms.shape[1], self.arms.shape[2]

    def __len__(self) -> int:
        return self.arms.shape[0]

    def __getitem__(self, i: int) -> np.ndarray:
        return self.arms[i]


@dataclass(frozen=True)
class LinkSpec:
    """Link function mu plus the regularity constants the agents consume.

    ``m`` is the cumulant of the reward family (m' = mu); the NLL loss on the
    natural parameter is ``loss(z, y) = -y*z + m(z)``.
    """

    kind: str
    L_mu: float
    kappa_mu: float
    c_mu: float
    R: float

    def __post_init__(self):
        if self.kind not in ("identity", "logistic"):
            raise InvalidInstanceError(f"unknown link kind {self.kind!r}")
        if self.kappa_mu <= 0.0:
            raise InvalidInstanceError("kappa_mu must be positive")
        if self.R > math.sqrt(self.L_mu) + FROB_SLACK:
            raise InvalidInstanceError("sub-Gaussian scale R must satisfy R <= sqrt(L_mu)")

    def mu(self, z):
        if self.kind == "identity":
            return z
        # numerically stable sigmoid
        return np.where(np.asarray(z) >= 0, 1.0 / (1.0 + np.exp(-np.asarray(z))),
                        np.exp(np.minimum(z, 0)) / (1.0 + np.exp(np.minimum(z, 0))))

    def m(self, z):
        if self.kind == "identity":
            return np.asarray(z) ** 2 / 2.0
        return np.logaddexp(0.0, z)

    @classmethod
    def identity(cls) -> "LinkSpec":
        return cls(kind="identity", L_mu=1.0, kappa_mu=1.0, c_mu=0.0, R=1.0)

    @classmethod
    def logistic(cls) -> "LinkSpec":
        e = math.e
        return cls(kind="logistic", L_mu=0.25, kappa_mu=e / (1.0 + e) ** 2,
                   c_mu=0.5, R=0.5)


def link_from_name(name: str) -> LinkSpec:
    if name == "identity":
        return LinkSpec.identity()
    if name == "logistic":
        return LinkSpec.logistic()
    raise InvalidInstanceError(f"unknown link {name!r}")


@dataclass(frozen=True)
class RewardSample:
    """One observed pull: which arm, what reward, at which round (1-based)."""

    arm_index: int
    reward: float
    round: int


@dataclass(frozen=True)
class BanditInstance:
    """Hidden environment: low-rank theta_star, noise level, link function."""

    theta_star: np.ndarray
    rank_r: int
    omega_r: float
    sigma: float
    link: LinkSpec = field(default_factory=LinkSpec.identity)

    def __post_init__(self):
        theta = np.asarray(self.theta_star, dtype=float)
        if theta.ndim != 2:
            raise InvalidInstanceError("theta_star must be a matrix")
        if not np.all(np.isfinite(theta)):
            raise InvalidInstanceError("theta_star contains non-finite entries")
        if frob_norm(theta) > 1.0 + FROB_SLACK:
            raise InvalidInstanceError("||theta*||_F must be <= 1")
        s = np.linalg.svd(theta, compute_uv=False)
        if self.rank_r < 1 or self.rank_r > min(theta.shape):
            raise InvalidInstanceError("rank_r out of range")
        if np.sum(s > RANK_TOL) > self.rank_r:
            raise InvalidInstanceError(
                f"numerical rank {int(np.sum(s > RANK_TOL))} exceeds declared rank {self.rank_r}")
        if s[self.rank_r - 1] < self.omega_r - FROB_SLACK:
            raise InvalidInstanceError(
                f"sigma_r = {s[self.rank_r - 1]:.6g} is below omega_r = {self.omega_r}")
        if self.sigma < 0:
            raise InvalidInstanceError("sigma must be non-negative")
        theta.setflags(write=False)
        object.__setattr__(self, "theta_star", theta)

    @property
    def dims(self) -> tuple[int, int]:
        return self.theta_star.shape

    def mean_reward(self, arm: np.ndarray) -> float:
        if arm.shape != self.theta_star.shape:
            raise DimensionMismatchError(
                f"arm shape {arm.shape} does not match instance dims {self.theta_star.shape}")
        return float(self.link.mu(mat_inner(arm, self.theta_star)))

    def pull(self, arm: np.ndarray, rng: np.random.Generator) -> float:
        """Noisy reward mu(<X, theta*>) + N(0, sigma^2)."""
        return self.mean_reward(arm) + float(rng.normal(0.0, self.sigma))


def pull(instance: BanditInstance, arm: np.ndarray, rng: np.random.Generator) -> float:
    return instance.pull(arm, rng)


def make_diag_instance(d1: int, d2: int, r: int, omega_r: float,
                       sigma: float = 0.01,
                       link: LinkSpec | None = None) -> BanditInstance:
    """Diagonal theta_star with leading entries (0.5, 0.5, omega_r, ...).

    For r = 1 the diagonal is (0.5,); for r = 2 it is (0.5, omega_r); for
    r = 3 it is (0.5, 0.5, omega_r); larger ranks pad with omega_r.
    """
    if not (1 <= r <= min(d1, d2)):
        raise InvalidInstanceError(f"rank {r} out of range for dims ({d1}, {d2})")
    if not (0.0 < omega_r <= 0.5):
        raise InvalidInstanceError("omega_r must lie in (0, 0.5]")
    if r == 1:
        entries = [0.5]
    elif r == 2:
        entries = [0.5, omega_r]
    else:
        entries = [0.5, 0.5] + [omega_r] * (r - 2)
    theta = np.zeros((d1, d2))
    theta[np.arange(r), np.arange(r)] = entries
    if frob_norm(theta) > 1.0 + FROB_SLACK:
        raise InvalidInstanceError("diagonal pattern exceeds the unit Frobenius ball; reduce r")
    return BanditInstance(theta_star=theta, rank_r=r, omega_r=omega_r,
                          sigma=sigma, link=link or LinkSpec.identity())


def sample_unit_arm_set(d1: int, d2: int, n_arms: int, seed: int) -> ArmSet:
    """n_arms i.i.d. Gaussian matrices, each normalized to unit Frobenius norm."""
    if n_arms < 1:
        raise InvalidInstanceError("n_arms must be >= 1")
    rng = np.random.default_rng(seed)
    arms = rng.standard_normal((n_arms, d1, d2))
    norms = np.linalg.norm(arms.reshape(n_arms, -1), axis=1)
    arms /= norms[:, None, None]
    return ArmSet(arms=arms)


def optimal_value(instance: BanditInstance, arm_set: ArmSet) -> tuple[int, float]:
    """Index of the arm maximizing the mean reward, ties broken by lowest index."""
    scores = np.einsum("nij,ij->n", arm_set.arms, instance.theta_star)
    means = instance.link.mu(scores)
    idx = int(np.argmax(means))
    return idx, float(means[idx])


def instant_regret(instance: BanditInstance, arm_set: ArmSet, chosen_index: int) -> float:
    """Per-round pseudo-regret mu(<X*, theta*>) - mu(<X_chosen, theta*>)."""
    if not (0 <= chosen_index < len(arm_set)):
        raise IndexError(f"arm index {chosen_index} out of range")
    _, best = optimal_value(instance, arm_set)
    return best - instance.mean_reward(arm_set[chosen_index])


def causal_rank1_features(phi: np.ndarray, varphi: np.ndarray) -> np.ndarray:
    """Action feature sum_j phi_j varphi_j^T / m for the rank-1 causal reduction.

    ``phi`` is (m, d1): one conditional-probability feature per parent
    configuration; ``varphi`` is (m, d2). Scaling by the number of terms keeps
    the feature inside the unit Frobenius ball.
    """
    phi = np.asarray(phi, dtype=float)
    varphi = np.asarray(varphi, dtype=float)
    if phi.ndim != 2 or varphi.ndim != 2 or phi.shape[0] != varphi.shape[0]:
        raise DimensionMismatchError("phi and varphi must be (m, d1) and (m, d2)")
    if np.any(np.linalg.norm(phi, axis=1) > 1.0 + FROB_SLACK):
        raise InvalidInstanceError("each phi row must have l2 norm <= 1")
    if np.any(np.linalg.norm(varphi, axis=1) > 1.0 + FROB_SLACK):
        raise InvalidInstanceError("each varphi row must have l2 norm <= 1")
    return phi.T @ varphi / phi.shape[0]


def causal_additive_instance(K: int, d1: int, d2: int, seed: int,
                             sigma: float = 0.01):
    """Rank-<=K instance over d1 x (d2*K) from the additive causal reduction.

    theta_star is the concatenation [theta_1 omega_1^T ... theta_K omega_K^T]
    scaled by 1/sqrt(K); the returned factory concatenates per-group rank-1
    features the same way so inner products decompose blockwise.
    """
    if K < 1:
        raise InvalidInstanceError("K must be >= 1")
    rng = np.random.default_rng(seed)
    blocks = []
    for _ in range(K):
        theta_k = rng.standard_normal(d1)
        theta_k /= np.linalg.norm(theta_k)
        omega_k = rng.standard_normal(d2)
        omega_k /= np.linalg.norm(omega_k)
        blocks.append(np.outer(theta_k, omega_k))
    theta = np.hstack(blocks) / math.sqrt(K)
    s = np.linalg.svd(theta, compute_uv=False)
    rank = int(np.sum(s > RANK_TOL))
    instance = BanditInstance(theta_star=theta, rank_r=max(rank, 1),
                              omega_r=float(s[max(rank, 1) - 1]), sigma=sigma)

    def feature_factory(phis: Sequence[np.ndarray], varphis: Sequence[np.ndarray]) -> np.ndarray:
        if len(phis) != K or len(varphis) != K:
            raise DimensionMismatchError(f"expected {K} factor groups")
        parts = [causal_rank1_features(p, v) for p, v in zip(phis, varphis)]
        return np.hstack(parts) / math.sqrt(K)

    return instance, feature_factory


def instance_to_json(instance: BanditInstance) -> str:
    """Serialize an instance; doubles survive the round trip exactly."""
    d1, d2 = instance.dims
    doc = {
        "d1": d1,
        "d2": d2,
        "r": instance.rank_r,
        "omega_r": instance.omega_r,
        "sigma": instance.sigma,
        "link": instance.link.kind,
        "theta_star": [float(v) for v in instance.theta_star.reshape(-1)],
    }
    return json.dumps(doc)


def instance_from_json(text: str) -> BanditInstance:
    doc = json.loads(text)
    theta = np.array(doc["theta_star"], dtype=float).reshape(doc["d1"], doc["d2"])
    return BanditInstance(theta_star=theta, rank_r=doc["r"], omega_r=doc["omega_r"],
                          sigma=doc["sigma"], link=link_from_name(doc["link"]))
