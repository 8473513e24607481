"""Galton-Watson realizations: generation profiles, explicit trees, W samples.

Two representations are used. A :class:`LevelProfile` keeps only the
generation sizes Z_0..Z_N and is cheap even when Z_N is in the billions. A
:class:`TreeArena` stores every node with flat parent indices and is what
the discovery sweeps run on.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, OverflowGuard
from .offspring import OffspringDist, size_biased
from .replicas import replica_streams, run_replicas

DEFAULT_NODE_BUDGET = 10**8
# Largest generation size a profile may reach before int64 arithmetic is at risk.
PROFILE_HARD_LIMIT = 2**62


@dataclass(frozen=True, eq=False)
class LevelProfile:
    """Generation sizes of one realization; ``z[n]`` is Z_n."""

    z: np.ndarray

    @property
    def depth(self) -> int:
        return len(self.z) - 1

    @property
    def total(self) -> int:
        return cumulative_size(self)


@dataclass(frozen=True, eq=False)
class TreeArena:
    """Explicit tree in breadth-first order.

    Node 0 is the root. Level ``n`` occupies ids
    ``level_offsets[n]:level_offsets[n + 1]``. ``parent[j - 1]`` is the
    parent id of node ``j``, so ``parent`` is empty for a root-only tree.
    Children of one parent are contiguous and parents appear in order.
    """

    level_offsets: np.ndarray
    parent: np.ndarray

    @property
    def depth(self) -> int:
        return len(self.level_offsets) - 2

    @property
    def n_nodes(self) -> int:
        return int(self.level_offsets[-1])

    @property
    def level_sizes(self) -> np.ndarray:
        return np.diff(self.level_offsets)

    @property
    def profile(self) -> LevelProfile:
        return LevelProfile(self.level_sizes.astype(np.int64))

    def levels(self) -> np.ndarray:
        """Depth of every node, indexed by node id."""
        return np.repeat(np.arange(self.depth + 1), self.level_sizes)

    def parent_of(self, node: int) -> int:
        if node == 0:
            return -1
        return int(self.parent[node - 1])

    def level_slice(self, n: int) -> slice:
        return slice(int(self.level_offsets[n]), int(self.level_offsets[n + 1]))


@dataclass(frozen=True, eq=False)
class WSamples:
    """Replicated values of Z_K / m^K, the horizon-K proxy for W."""

    values: np.ndarray
    horizon: int

    def __len__(self) -> int:
        return len(self.values)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def mean_se(self) -> float:
        return float(np.std(self.values, ddof=1) / np.sqrt(len(self.values)))

    @property
    def centered_second_moment(self) -> float:
        """Empirical E((1 - W)^2)."""
        return float(np.mean((1.0 - self.values) ** 2))

    @property
    def centered_second_moment_se(self) -> float:
        sq = (1.0 - self.values) ** 2
        return float(np.std(sq, ddof=1) / np.sqrt(len(sq)))


def _check_depth(N: int) -> int:
    if int(N) != N or N < 0:
        raise DomainError(f"depth must be a non-negative integer, got {N!r}")
    return int(N)


def _next_generation(dist: OffspringDist, z: int, rng: np.random.Generator) -> int:
    """Total children of ``z`` independent parents."""
    if z == 0:
        return 0
    if dist.is_deterministic:
        return z * dist.min_children
    counts = rng.multinomial(z, dist.probs)
    return int(np.dot(counts, dist.support))


def _guard(z: int, n: int, max_nodes: int | None) -> None:
    limit = PROFILE_HARD_LIMIT if max_nodes is None else max_nodes
    if z > limit:
        raise OverflowGuard(
            f"generation {n} has {z} nodes, above the budget of {limit}; reduce the depth"
        )


def simulate_profile(
    dist: OffspringDist,
    N: int,
    rng: np.random.Generator,
    max_nodes: int | None = DEFAULT_NODE_BUDGET,
) -> LevelProfile:
    """Generation sizes Z_0..Z_N of one tree.

    Z_{n+1} is the sum of Z_n draws of G, realized through the multinomial
    count of parents having each possible child number (same law as
    summing individual draws, O(|support|) work per generation). Memory is
    O(N). ``max_nodes=None`` only enforces the int64 safety limit.
    """
    N = _check_depth(N)
    z = np.empty(N + 1, dtype=np.int64)
    z[0] = 1
    for n in range(N):
        nxt = _next_generation(dist, int(z[n]), rng)
        _guard(nxt, n + 1, max_nodes)
        z[n + 1] = nxt
    return LevelProfile(z)


def cumulative_size(profile: LevelProfile) -> int:
    """T_N, the number of nodes of depth at most N."""
    return int(np.sum(profile.z, dtype=np.int64))


def build_tree(
    dist: OffspringDist,
    N: int,
    rng: np.random.Generator,
    max_nodes: int = DEFAULT_NODE_BUDGET,
) -> TreeArena:
    """Explicit tree of depth N.

    Child counts are drawn one per node in breadth-first order, and the
    children of each parent take consecutive ids. One uniform is consumed
    per non-leaf node, so the first k levels of a depth-N tree coincide
    with the depth-k tree drawn from the same stream.
    """
    N = _check_depth(N)
    offsets = np.zeros(N + 2, dtype=np.int64)
    offsets[1] = 1
    parents: list[np.ndarray] = []
    total = 1
    for n in range(N):
        lo, hi = int(offsets[n]), int(offsets[n + 1])
        counts = dist.sample(rng, hi - lo)
        born = int(counts.sum())
        total += born
        if total > max_nodes:
            raise OverflowGuard(
                f"tree reached {total} nodes at generation {n + 1}, above the budget "
                f"of {max_nodes}; reduce the depth"
            )
        parents.append(np.repeat(np.arange(lo, hi, dtype=np.int64), counts))
        offsets[n + 2] = total
    parent = np.concatenate(parents) if parents else np.empty(0, dtype=np.int64)
    offsets.setflags(write=False)
    parent.setflags(write=False)
    return TreeArena(level_offsets=offsets, parent=parent)


def _profile_replica(seed: int, index: int, dist: OffspringDist, N: int, max_nodes):
    rng = replica_streams(seed, index, 1)[0]
    return simulate_profile(dist, N, rng, max_nodes).z


def profile_batch(
    dist: OffspringDist,
    N: int,
    replicas: int,
    seed: int,
    max_nodes: int | None = DEFAULT_NODE_BUDGET,
    workers: int = 1,
) -> np.ndarray:
    """Array of shape (replicas, N + 1) of independent profiles."""
    return run_replicas(_profile_replica, replicas, seed, (dist, N, max_nodes), workers)


def estimate_W_samples(
    dist: OffspringDist,
    K: int,
    replicas: int,
    seed: int,
    max_nodes: int | None = DEFAULT_NODE_BUDGET,
    workers: int = 1,
) -> WSamples:
    """Replicated Z_K / m^K.

    The bias of the empirical E((1 - W)^2) is Var(G) m^-K / (m(m - 1)),
    so K around 20 is ample for m = 2.
    """
    K = _check_depth(K)
    z = profile_batch(dist, K, replicas, seed, max_nodes, workers)
    values = z[:, K].astype(float) / dist.m**K
    return WSamples(values=values, horizon=K)


def simulate_size_biased_profile(
    dist: OffspringDist,
    N: int,
    rng: np.random.Generator,
    construction: str = "spine",
    max_nodes: int | None = DEFAULT_NODE_BUDGET,
) -> LevelProfile:
    """Profile of a size-biased tree.

    ``construction="spine"``: one distinguished individual per generation
    has G~ children (one of which carries the spine on), everybody else
    has G children. This is the law of (Z_n) reweighted by Z_n / m^n; its
    mean is :func:`spine_mean`.

    ``construction="immigration"``: all Z~_n individuals reproduce
    according to G and G~ immigrants join each generation. Its mean is
    :func:`size_biased_mean`.
    """
    N = _check_depth(N)
    if construction not in ("spine", "immigration"):
        raise DomainError(f"unknown construction {construction!r}")
    biased = size_biased(dist)
    z = np.empty(N + 1, dtype=np.int64)
    z[0] = 1
    for n in range(N):
        cur = int(z[n])
        ordinary = cur - 1 if construction == "spine" else cur
        extra = biased.sample(rng)
        nxt = _next_generation(dist, ordinary, rng) + int(extra)
        _guard(nxt, n + 1, max_nodes)
        z[n + 1] = nxt
    return LevelProfile(z)


def size_biased_mean(dist: OffspringDist, n: int) -> float:
    """m^n + (m^n - 1) E(G^2) / (m(m - 1)), the immigration-process mean."""
    n = _check_depth(n)
    m = dist.m
    mn = m**n
    return mn + (mn - 1.0) * dist.g2 / (m * (m - 1.0))


def spine_mean(dist: OffspringDist, n: int) -> float:
    """E(Z_n^2) / m^n = m^n + (m^n - 1) Var(G) / (m(m - 1)), the spine-process mean."""
    n = _check_depth(n)
    m = dist.m
    mn = m**n
    return mn + (mn - 1.0) * dist.var / (m * (m - 1.0))


def w_second_moment(dist: OffspringDist, K: int | None = None) -> float:
    """E((1 - Z_K/m^K)^2); with ``K=None`` the limit Var(G) / (m(m - 1))."""
    limit = dist.var / (dist.m * (dist.m - 1.0))
    if K is None:
        return limit
    return limit * (1.0 - dist.m ** (-_check_depth(K)))


def decomposition_residuals(profiles: np.ndarray, m: float, levels) -> np.ndarray:
    """Mean of (Z_n - m^n W^)^2 / m^n per requested level.

    ``W^`` is Z_K / m^K with K the last column of ``profiles``. Given Z_n
    the residual is a sum of Z_n centred copies of the horizon-(K - n)
    martingale, so its expectation is :func:`w_second_moment` at K - n.
    """
    K = profiles.shape[1] - 1
    w_hat = profiles[:, K] / m**K
    out = []
    for n in levels:
        scaled = profiles[:, n] / m ** (n / 2.0) - m ** (n / 2.0) * w_hat
        out.append(float(np.mean(scaled**2)))
    return np.array(out)


def write_profile_csv(profile: LevelProfile, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level", "count"])
        for n, count in enumerate(profile.z):
            writer.writerow([n, int(count)])
    return path


def write_arena_csv(tree: TreeArena, path) -> Path:
    path = Path(path)
    levels = tree.levels()
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "parent", "level"])
        writer.writerow([0, -1, 0])
        for j in range(1, tree.n_nodes):
            writer.writerow([j, int(tree.parent[j - 1]), int(levels[j])])
    return path
