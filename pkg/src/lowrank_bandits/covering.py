"""Constructive covering nets for rank-<= r matrices in the unit Frobenius ball.

The covering lemma proves existence of an eps-net of size (9/eps)^((d1+d2+1)r)
by taking products U S V^T over nets of the orthonormal factors and the
diagonal. That cardinality is wildly loose at the scales a simulation can
afford, so the constructor here keeps the factored form only for *sampling*:
candidates are drawn as exact U S V^T products (Haar orthonormal factors,
random spectra) and a maximal separated subset is extracted greedily. The
result is a genuine subset of the rank-<= r unit ball whose covering quality
is verified statistically before the net is returned; a net that cannot reach
the requested radius under the element cap fails loudly instead of silently
degrading.

Nets are grown along a canonical halving ladder of radii (2, 1, 1/2, ...,
eps), each rung extending the previous rung's elements. Nets at a finer rung
therefore contain the coarser nets as subsets, so refining eps along the
ladder can only decrease the distance from any fixed target to the net.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, NetCoverageError, NetTooLargeError

NET_CAP_DEFAULT = 500_000
GRID_VERSION = 2

# separation between kept elements, as a fraction of eps; the gap between the
# separation radius and eps is the margin that absorbs pool-density error
_SEP_FRACTION = 0.70
# self-check passes when the 99.95% distance quantile of fresh draws is below
# this fraction of eps
_CHECK_FRACTION = 0.96
_CHECK_DRAWS = 4000
_STAGE_SIZES = (8192, 8192, 16384, 32768, 65536, 131072, 131072, 131072)
_NET_SEED_BASE = 0x5E7C0FFEE


@dataclass(frozen=True)
class LowRankNet:
    """A finite eps-covering of {rank <= r, ||.||_F <= 1} matrices."""

    eps: float
    dims: tuple[int, int, int]
    elements: np.ndarray  # (N, d1, d2)

    def __post_init__(self):
        self.elements.setflags(write=False)

    def __len__(self) -> int:
        return self.elements.shape[0]

    def flat(self) -> np.ndarray:
        """Elements as (N, d1*d2) rows (a view)."""
        n = self.elements.shape[0]
        return self.elements.reshape(n, -1)


def net_size_bound(d1: int, d2: int, r: int, eps: float) -> float:
    """The covering-number bound (9/eps)^((d1+d2+1)*r), possibly +inf."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    log_bound = (d1 + d2 + 1) * r * (math.log(9.0) - math.log(eps))
    if log_bound > 700:
        return math.inf
    return math.exp(log_bound)


def sample_low_rank(d1: int, d2: int, r: int, n: int, rng: np.random.Generator,
                    surface_fraction: float = 0.5) -> np.ndarray:
    """Draw n random rank-<= r matrices from the unit Frobenius ball.

    Factors are Haar orthonormal; spectra are random non-negative vectors with
    occasional zeroed entries (rank deficiency). A ``surface_fraction`` share
    of draws sits exactly on the unit sphere, the rest have radius U(0, 1).
    """
    out = np.empty((n, d1, d2))
    for i in range(n):
        gu = rng.standard_normal((d1, r))
        gv = rng.standard_normal((d2, r))
        u, _ = np.linalg.qr(gu)
        v, _ = np.linalg.qr(gv)
        s = np.abs(rng.standard_normal(r))
        if r > 1 and rng.random() < 0.3:
            kill = rng.integers(1, r)
            s[rng.permutation(r)[:kill]] = 0.0
        norm = np.linalg.norm(s)
        if norm == 0.0:
            s[0] = 1.0
            norm = 1.0
        radius = 1.0 if rng.random() < surface_fraction else rng.random()
        s *= radius / norm
        out[i] = (u * s) @ v.T
    return out


def _min_sq_dists(points: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Squared distance from each row of ``points`` to its nearest row of ``ref``."""
    p_chunk, r_chunk = 2048, 8192
    ref_sq = np.einsum("ij,ij->i", ref, ref)
    pts_sq = np.einsum("ij,ij->i", points, points)
    best = np.full(points.shape[0], np.inf)
    for ps in range(0, points.shape[0], p_chunk):
        pblock = points[ps:ps + p_chunk]
        sub_best = best[ps:ps + p_chunk]
        for rs in range(0, ref.shape[0], r_chunk):
            d = pblock @ ref[rs:rs + r_chunk].T
            d *= -2.0
            d += ref_sq[rs:rs + r_chunk][None, :]
            d += pts_sq[ps:ps + p_chunk][:, None]
            np.minimum(sub_best, d.min(axis=1), out=sub_best)
    np.maximum(best, 0.0, out=best)
    return best


def _greedy_pass(chosen: list[np.ndarray], candidates: np.ndarray,
                 sep_sq: float, cap: int) -> None:
    """Sequentially keep every candidate farther than sep from all kept points.

    Candidates killed by a kept point are masked out; the arrays are compacted
    only when the survivor fraction drops, which keeps total copying near
    O(M log M) instead of O(M^2).
    """
    cand_sq = np.einsum("ij,ij->i", candidates, candidates)
    alive = np.ones(candidates.shape[0], dtype=bool)
    cursor = 0
    while True:
        nxt = np.argmax(alive[cursor:]) + cursor if alive[cursor:].any() else -1
        if nxt < 0:
            return
        cursor = nxt
        p = candidates[cursor]
        chosen.append(p.copy())
        if len(chosen) > cap:
            raise NetTooLargeError(
                f"net exceeded the {cap}-element cap during construction",
                estimated_size=float(len(chosen)))
        d = cand_sq - 2.0 * (candidates @ p) + float(p @ p)
        alive &= d > sep_sq
        frac = alive.mean()
        if frac < 0.6 and candidates.shape[0] > 4096:
            candidates = candidates[alive]
            cand_sq = cand_sq[alive]
            alive = np.ones(candidates.shape[0], dtype=bool)
            cursor = 0


def _greedy_extend(chosen: list[np.ndarray], candidates: np.ndarray,
                   sep_sq: float, cap: int) -> None:
    """Extend a separated set with candidates, bailing out early when the
    pilot keep-rate projects past the element cap."""
    if chosen:
        keep = _min_sq_dists(candidates, np.vstack(chosen)) > sep_sq
        candidates = candidates[keep]
    pilot = min(2048, candidates.shape[0])
    before = len(chosen)
    _greedy_pass(chosen, candidates[:pilot], sep_sq, cap)
    kept_pilot = len(chosen) - before
    if pilot:
        projected = len(chosen) + (kept_pilot / pilot) * (candidates.shape[0] - pilot)
        if projected > cap:
            raise NetTooLargeError(
                f"net projected to reach {projected:.3g} elements, beyond the "
                f"{cap}-element cap", estimated_size=projected)
    rest = candidates[pilot:]
    if rest.shape[0]:
        if kept_pilot:
            new_ref = np.vstack(chosen[before:])
            rest = rest[_min_sq_dists(rest, new_ref) > sep_sq]
        _greedy_pass(chosen, rest, sep_sq, cap)


def _radius_ladder(eps: float) -> list[float]:
    """Canonical halving ladder 2, 1, 1/2, ... ending exactly at eps."""
    rungs = []
    rung = 2.0
    while rung > eps * (1.0 + 1e-12):
        rungs.append(rung)
        rung /= 2.0
    rungs.append(eps)
    return rungs


def _projected_size(count: int, q: float, target: float, d_eff: int) -> float:
    """Extrapolated element count to shrink the covering quantile q to target."""
    if q <= target:
        return float(count)
    log_proj = math.log(count) + d_eff * math.log(q / target)
    return math.exp(log_proj) if log_proj < 700 else math.inf


def _extend_to_radius(chosen: list[np.ndarray], d1: int, d2: int, r: int,
                      radius: float, final_eps: float, check_draws: np.ndarray,
                      rung_seed: np.random.SeedSequence, max_elements: int) -> None:
    """Grow ``chosen`` until it covers the check draws at the given radius.

    Refuses (NetTooLargeError) as soon as the empirical covering quantile
    extrapolates past the cap at the *final* requested eps, so hopeless builds
    fail within a stage or two instead of grinding down the ladder.
    """
    sep = _SEP_FRACTION * radius
    target = _CHECK_FRACTION * radius
    final_target = _CHECK_FRACTION * final_eps
    d_eff = r * (d1 + d2 - r)

    def q_now() -> float:
        dists = np.sqrt(_min_sq_dists(check_draws, np.vstack(chosen)))
        return float(np.quantile(dists, 0.9995))

    def check_projection(q: float) -> None:
        projected = _projected_size(len(chosen), q, final_target, d_eff)
        if projected > 8.0 * max_elements:
            raise NetTooLargeError(
                f"covering {d1}x{d2} rank-{r} at eps={final_eps:g} needs roughly "
                f"{projected:.3g} elements, beyond the {max_elements} cap",
                estimated_size=projected)

    q = q_now()
    if q <= target:
        return
    check_projection(q)
    stage_seeds = rung_seed.spawn(len(_STAGE_SIZES))
    for stage, size in enumerate(_STAGE_SIZES):
        rng = np.random.default_rng(stage_seeds[stage])
        cands = sample_low_rank(d1, d2, r, size, rng).reshape(size, -1)
        _greedy_extend(chosen, cands, sep * sep, max_elements)
        q = q_now()
        if q <= target:
            return
        check_projection(q)
    raise NetCoverageError(
        f"net self-check failed at radius {radius:g} after exhausting the sample pool")


def build_net(d1: int, d2: int, r: int, eps: float,
              max_elements: int = NET_CAP_DEFAULT) -> LowRankNet:
    """Construct an eps-net of rank-<= r unit-Frobenius d1 x d2 matrices.

    Deterministic for fixed arguments. Raises NetTooLargeError when the net
    cannot fit under ``max_elements`` (either by direct overflow or by
    extrapolating the element count needed to reach eps), NetCoverageError if
    the statistical covering self-check fails even at full pool effort.
    """
    if not (0.0 < eps <= 2.0):
        raise ValueError("eps must lie in (0, 2]")
    if not (1 <= r <= min(d1, d2)):
        raise ValueError(f"rank {r} out of range for dims ({d1}, {d2})")
    rungs = _radius_ladder(eps)
    # seeds keyed by rung depth only, so rungs shared between two ladders see
    # identical candidate streams and check draws: that is what makes net(eps/2)
    # a superset of net(eps)
    rung_seeds = np.random.SeedSequence(
        [_NET_SEED_BASE, d1, d2, r, GRID_VERSION]).spawn(len(rungs))
    check_rng = np.random.default_rng(
        np.random.SeedSequence([_NET_SEED_BASE, d1, d2, r, GRID_VERSION, 0xC4EC4]))
    check_draws = sample_low_rank(d1, d2, r, _CHECK_DRAWS, check_rng).reshape(
        _CHECK_DRAWS, -1)

    chosen: list[np.ndarray] = [np.zeros(d1 * d2)]
    for depth, rung in enumerate(rungs):
        _extend_to_radius(chosen, d1, d2, r, rung, eps, check_draws,
                          rung_seeds[depth], max_elements)

    elements = np.vstack(chosen).reshape(len(chosen), d1, d2)
    covered = np.mean(np.sqrt(_min_sq_dists(check_draws, elements.reshape(len(chosen), -1))) <= eps)
    if covered < 0.9995:
        raise NetCoverageError(
            f"net covers only {covered:.2%} of fresh draws at eps={eps:g}")
    return LowRankNet(eps=eps, dims=(d1, d2, r), elements=elements)


def nearest_distance(net: LowRankNet, target: np.ndarray) -> float:
    """Frobenius distance from ``target`` to the nearest net element."""
    target = np.asarray(target, dtype=float)
    d1, d2, _ = net.dims
    if target.shape != (d1, d2):
        raise DimensionMismatchError(
            f"target shape {target.shape} does not match net dims ({d1}, {d2})")
    if len(net) == 0:
        raise ValueError("net is empty")
    d = _min_sq_dists(target.reshape(1, -1), net.flat())
    return float(math.sqrt(d[0]))


def nearest_distances(net: LowRankNet, targets: np.ndarray) -> np.ndarray:
    """Vectorized nearest_distance for a (n, d1, d2) stack of targets."""
    targets = np.asarray(targets, dtype=float)
    n = targets.shape[0]
    return np.sqrt(_min_sq_dists(targets.reshape(n, -1), net.flat()))


def net_cache_key(d1: int, d2: int, r: int, eps: float) -> str:
    return f"net_{d1}x{d2}_r{r}_eps{eps:.6g}_v{GRID_VERSION}"


def save_net(net: LowRankNet, path) -> None:
    d1, d2, r = net.dims
    np.savez_compressed(path, elements=net.elements,
                        meta=np.array([d1, d2, r, net.eps, GRID_VERSION]))


def load_net(path, expect: tuple[int, int, int, float] | None = None) -> LowRankNet:
    with np.load(path) as data:
        meta = data["meta"]
        d1, d2, r = int(meta[0]), int(meta[1]), int(meta[2])
        eps, version = float(meta[3]), int(meta[4])
        if version != GRID_VERSION:
            raise ValueError(f"cache version {version} != current {GRID_VERSION}")
        if expect is not None and (d1, d2, r, eps) != expect:
            raise ValueError(f"cache key mismatch: file has {(d1, d2, r, eps)}")
        return LowRankNet(eps=eps, dims=(d1, d2, r), elements=data["elements"].copy())
