"""Node selection, discovered-subtree size and Monte-Carlo campaigns.

A node is discovered when its subtree (the node included) holds at least
one selected node, i.e. the discovered set is the union of the root paths
of the selected nodes. The root is counted only if something was
selected, unless ``root_selected=True`` forces a mark on it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analytics import expected_tree_size, subtree_hit_probabilities
from .errors import DomainError
from .gw_core import DEFAULT_NODE_BUDGET, TreeArena, build_tree
from .offspring import OffspringDist
from .replicas import replica_streams, run_replicas

# Expected node count above which the depth-biased "auto" engine stops
# building explicit trees.
AUTO_ARENA_LIMIT = 2**16


@dataclass(frozen=True)
class Uniform:
    """Every node of depth <= ``depth`` is selected with probability 1 - exp(-lam)."""

    lam: float
    depth: int

    def __post_init__(self):
        if not (self.lam >= 0.0):
            raise DomainError(f"lambda must be >= 0, got {self.lam}")
        if int(self.depth) != self.depth or self.depth < 0:
            raise DomainError(f"depth must be a non-negative integer, got {self.depth}")

    def level_probabilities(self, depth: int) -> np.ndarray:
        p = 1.0 if math.isinf(self.lam) else -math.expm1(-self.lam)
        return np.full(depth + 1, p)


@dataclass(frozen=True)
class DepthBiased:
    """A depth-n node is selected with probability 1 - exp(-(alpha/m)^n)."""

    alpha: float
    m: float

    def __post_init__(self):
        if not (0.0 <= self.alpha < 1.0):
            raise DomainError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not (self.m > 1.0):
            raise DomainError(f"m must exceed 1, got {self.m}")

    def level_probabilities(self, depth: int) -> np.ndarray:
        return -np.expm1(-level_weights(self.alpha, self.m, depth))


def level_weights(alpha: float, m: float, depth: int) -> np.ndarray:
    """(alpha/m)^n for n = 0..depth, with 0^0 = 1."""
    n = np.arange(depth + 1)
    return np.power(alpha / m, n)


@dataclass(frozen=True)
class TrialOutcome:
    """One replica: discovered nodes R, nodes in the horizon T, selected nodes."""

    discovered: int
    total: int | None
    marks: int


def marks_from_uniforms(tree: TreeArena, model, uniforms: np.ndarray) -> np.ndarray:
    """Coupled marking: node j is selected iff ``uniforms[j]`` < its level probability.

    Feeding the same uniforms with a larger lambda can only add marks.
    """
    probs = model.level_probabilities(tree.depth)
    return uniforms < np.repeat(probs, tree.level_sizes)


def mark_nodes(
    tree: TreeArena,
    model,
    rng: np.random.Generator,
    root_selected: bool = False,
) -> np.ndarray:
    """Boolean selection vector over node ids; one uniform per node, in id order."""
    if isinstance(model, Uniform) and model.depth != tree.depth:
        raise DomainError(f"tree depth {tree.depth} differs from model depth {model.depth}")
    marks = marks_from_uniforms(tree, model, rng.random(tree.n_nodes))
    if root_selected:
        marks[0] = True
    return marks


def discovered_mask(tree: TreeArena, marks: np.ndarray) -> np.ndarray:
    """Nodes whose subtree contains a mark, by one bottom-up sweep over levels."""
    marks = np.asarray(marks, dtype=bool)
    if marks.shape != (tree.n_nodes,):
        raise DomainError(f"marks has shape {marks.shape}, tree has {tree.n_nodes} nodes")
    hit = marks.copy()
    offsets = tree.level_offsets
    for n in range(tree.depth, 0, -1):
        lo, hi = int(offsets[n]), int(offsets[n + 1])
        flagged = np.flatnonzero(hit[lo:hi])
        if flagged.size:
            hit[tree.parent[lo - 1 + flagged]] = True
    return hit


def discovered_size(tree: TreeArena, marks: np.ndarray) -> int:
    """Size of the union of root paths of the marked nodes."""
    return int(np.count_nonzero(discovered_mask(tree, marks)))


def truncation_depth(alpha: float, eps: float) -> int:
    """Smallest D with alpha^(D+1) / (1 - alpha) <= eps.

    Since m^n (1 - exp(-(alpha/m)^n)) <= alpha^n, the expected number of
    selected nodes below depth D is then at most eps.
    """
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if not (eps > 0.0):
        raise DomainError(f"eps must be positive, got {eps}")
    # Closed-form guess, then walk to the exact boundary.
    guess = math.log(eps * (1.0 - alpha)) / math.log(alpha) - 1.0
    D = max(0, int(math.floor(guess)) - 1)
    while D > 0 and alpha ** D / (1.0 - alpha) <= eps:
        D -= 1
    while alpha ** (D + 1) / (1.0 - alpha) > eps:
        D += 1
    return D


def horizon_for(alpha: float, eps: float) -> int:
    """:func:`truncation_depth`, extended with D = 0 at alpha = 0."""
    if alpha == 0.0:
        if not (eps > 0.0):
            raise DomainError(f"eps must be positive, got {eps}")
        return 0
    return truncation_depth(alpha, eps)


def missed_marks_bound(alpha: float, D: int) -> float:
    """Bound alpha^(D+1) / (1 - alpha) on expected selections below depth D."""
    return alpha ** (D + 1) / (1.0 - alpha)


def missed_discovery_bound(alpha: float, D: int) -> float:
    """Bound on E(R) - E(R_D) from selections below depth D.

    A selection at depth i adds at most i + 1 nodes, and at most alpha^i
    selections are expected there: sum_{i>D} (i+1) alpha^i.
    """
    a = D + 1
    return alpha**a * ((a + 1) - a * alpha) / (1.0 - alpha) ** 2


# -- uniform model ---------------------------------------------------------


def _uniform_replica(seed, index, dist, N, lam, root_selected, max_nodes):
    tree_rng, mark_rng = replica_streams(seed, index)
    tree = build_tree(dist, N, tree_rng, max_nodes)
    marks = mark_nodes(tree, Uniform(lam, N), mark_rng, root_selected)
    return discovered_size(tree, marks), tree.n_nodes, int(np.count_nonzero(marks))


def uniform_trial(
    dist: OffspringDist,
    N: int,
    lam: float,
    seed: int,
    index: int = 0,
    root_selected: bool = False,
    max_nodes: int = DEFAULT_NODE_BUDGET,
) -> TrialOutcome:
    """Replica ``index`` of the uniform-model campaign seeded with ``seed``."""
    R, T, k = _uniform_replica(seed, index, dist, N, lam, root_selected, max_nodes)
    return TrialOutcome(discovered=R, total=T, marks=k)


@dataclass(frozen=True, eq=False)
class UniformSummary:
    dist: str
    lam: float
    N: int
    replicas: int
    seed: int
    mean_R: float
    var_R: float
    se_R: float
    mean_T: float
    var_T: float
    mean_marks: float
    rho_hat: float
    se_rho: float
    R: np.ndarray = field(repr=False)
    T: np.ndarray = field(repr=False)
    marks: np.ndarray = field(repr=False)

    model = "uniform"

    def csv_row(self) -> dict:
        return {
            "model": self.model,
            "dist": self.dist,
            "param": self.lam,
            "N_or_D": self.N,
            "replicas": self.replicas,
            "mean_R": self.mean_R,
            "se_R": self.se_R,
            "var_R": self.var_R,
            "mean_T": self.mean_T,
            "mean_marks": self.mean_marks,
            "rho_or_ratio": self.rho_hat,
            "se": self.se_rho,
        }


def ratio_se(num: np.ndarray, den: np.ndarray) -> float:
    """Delta-method standard error of mean(num) / mean(den)."""
    n = len(num)
    mn, md = float(np.mean(num)), float(np.mean(den))
    r = mn / md
    cov = np.cov(np.vstack([num, den]).astype(float), ddof=1)
    var = cov[0, 0] - 2.0 * r * cov[0, 1] + r * r * cov[1, 1]
    return math.sqrt(max(var, 0.0) / n) / md


def mc_uniform(
    dist: OffspringDist,
    N: int,
    lam: float,
    replicas: int,
    seed: int,
    workers: int = 1,
    root_selected: bool = False,
    max_nodes: int = DEFAULT_NODE_BUDGET,
) -> UniformSummary:
    """Monte-Carlo estimate of rho_N(lam) = E(R_N) / E(T_N)."""
    if replicas < 2:
        raise DomainError("need at least two replicas")
    Uniform(lam, N)
    out = run_replicas(
        _uniform_replica, replicas, seed, (dist, N, lam, root_selected, max_nodes), workers
    )
    R, T, k = out[:, 0], out[:, 1], out[:, 2]
    var_R = float(np.var(R, ddof=1))
    return UniformSummary(
        dist=dist.label,
        lam=lam,
        N=N,
        replicas=replicas,
        seed=seed,
        mean_R=float(np.mean(R)),
        var_R=var_R,
        se_R=math.sqrt(var_R / replicas),
        mean_T=float(np.mean(T)),
        var_T=float(np.var(T, ddof=1)),
        mean_marks=float(np.mean(k)),
        rho_hat=float(np.mean(R) / np.mean(T)),
        se_rho=ratio_se(R, T),
        R=R,
        T=T,
        marks=k,
    )


# -- depth-biased model ----------------------------------------------------


def _arena_replica(seed, index, dist, alpha, D, root_selected, max_nodes):
    tree_rng, mark_rng = replica_streams(seed, index)
    tree = build_tree(dist, D, tree_rng, max_nodes)
    marks = mark_nodes(tree, DepthBiased(alpha, dist.m), mark_rng, root_selected)
    return discovered_size(tree, marks), tree.n_nodes, int(np.count_nonzero(marks))


@dataclass(frozen=True, eq=False)
class _SkeletonTables:
    keep_mark: np.ndarray  # P(node marked | subtree hit), per depth
    hit_root: float
    marked_child_law: list  # law of hit-children count when the node is marked
    unmarked_child_law: list  # same, given unmarked (so at least one child is hit)


def _skeleton_tables(dist, alpha, D, root_selected) -> _SkeletonTables:
    p = DepthBiased(alpha, dist.m).level_probabilities(D)
    if root_selected:
        p[0] = 1.0
    psi = subtree_hit_probabilities(dist, p)
    kmax = dist.max_children
    marked_law, unmarked_law = [], []
    for d in range(D):
        q = psi[d + 1]
        law = np.zeros(kmax + 1)
        for c, pc in zip(dist.support, dist.probs):
            c = int(c)
            j = np.arange(c + 1)
            binom = np.array([math.comb(c, int(i)) for i in j], dtype=float)
            law[: c + 1] += pc * binom * q**j * (1.0 - q) ** (c - j)
        tail = law[1:].sum()
        law = law / law.sum()
        marked_law.append(law)
        nonzero = np.zeros(kmax + 1)
        if tail > 0:
            nonzero[1:] = law[1:] / law[1:].sum()
        unmarked_law.append(nonzero)
    keep = np.divide(p, psi, out=np.ones_like(p), where=psi > 0)
    return _SkeletonTables(
        keep_mark=np.minimum(keep, 1.0),
        hit_root=float(psi[0]),
        marked_child_law=marked_law,
        unmarked_child_law=unmarked_law,
    )


def _skeleton_replica(seed, index, tables: _SkeletonTables, D: int):
    rng = replica_streams(seed, index, 1)[0]
    if rng.random() >= tables.hit_root:
        return 0, -1, 0
    hit, R, marks = 1, 0, 0
    j = np.arange(len(tables.marked_child_law[0])) if D > 0 else None
    for d in range(D + 1):
        R += hit
        marked = int(rng.binomial(hit, tables.keep_mark[d]))
        marks += marked
        if d == D:
            break
        nxt = np.dot(rng.multinomial(marked, tables.marked_child_law[d]), j)
        if hit > marked:
            nxt += np.dot(rng.multinomial(hit - marked, tables.unmarked_child_law[d]), j)
        hit = int(nxt)
        if hit == 0:
            break
    return R, -1, marks


@dataclass(frozen=True, eq=False)
class DepthBiasedSummary:
    dist: str
    alpha: float
    eps: float
    depth: int
    engine: str
    replicas: int
    seed: int
    mean_R: float
    var_R: float
    se_R: float
    mean_marks: float
    se_marks: float
    ratio_hat: float
    se_ratio: float
    missed_marks_bound: float
    missed_discovery_bound: float
    mean_T: float
    R: np.ndarray = field(repr=False)
    marks: np.ndarray = field(repr=False)

    model = "depth-biased"

    def csv_row(self) -> dict:
        return {
            "model": self.model,
            "dist": self.dist,
            "param": self.alpha,
            "N_or_D": self.depth,
            "replicas": self.replicas,
            "mean_R": self.mean_R,
            "se_R": self.se_R,
            "var_R": self.var_R,
            "mean_T": self.mean_T,
            "mean_marks": self.mean_marks,
            "rho_or_ratio": self.ratio_hat,
            "se": self.se_ratio,
        }


def mc_depth_biased(
    dist: OffspringDist,
    alpha: float,
    eps: float,
    replicas: int,
    seed: int,
    engine: str = "auto",
    workers: int = 1,
    root_selected: bool = False,
    max_nodes: int = DEFAULT_NODE_BUDGET,
) -> DepthBiasedSummary:
    """Monte-Carlo E(R(alpha)) and E(R) / E(N)^2 on the tree truncated at depth D.

    ``engine="arena"`` builds the depth-D tree, marks it and sweeps it.
    ``engine="skeleton"`` samples only the discovered subtree: a hit node
    at depth d is marked with probability p_d / psi_d and its number of hit
    children follows the conditional law given the node's own mark, where
    psi_d is the probability that a depth-d subtree holds a selection. Both
    give the same joint law of (R, number of selections). ``"auto"`` picks
    the arena when the expected tree is small.
    """
    if replicas < 2:
        raise DomainError("need at least two replicas")
    D = horizon_for(alpha, eps)
    DepthBiased(alpha, dist.m)
    if engine == "auto":
        engine = "arena" if expected_tree_size(dist.m, D) <= AUTO_ARENA_LIMIT else "skeleton"
    if engine == "arena":
        out = run_replicas(
            _arena_replica, replicas, seed, (dist, alpha, D, root_selected, max_nodes), workers
        )
        mean_T = float(np.mean(out[:, 1]))
    elif engine == "skeleton":
        tables = _skeleton_tables(dist, alpha, D, root_selected)
        out = run_replicas(_skeleton_replica, replicas, seed, (tables, D), workers)
        mean_T = float("nan")
    else:
        raise DomainError(f"unknown engine {engine!r}")
    R, k = out[:, 0].astype(float), out[:, 2].astype(float)
    mR, mk = float(np.mean(R)), float(np.mean(k))
    cov = np.cov(np.vstack([R, k]), ddof=1)
    # ratio mean_R / mean_marks^2, gradient (1/mk^2, -2 mR/mk^3)
    if mk > 0:
        g0, g1 = 1.0 / mk**2, -2.0 * mR / mk**3
        var_ratio = g0 * g0 * cov[0, 0] + 2 * g0 * g1 * cov[0, 1] + g1 * g1 * cov[1, 1]
        ratio, se_ratio = mR / mk**2, math.sqrt(max(var_ratio, 0.0) / replicas)
    else:
        ratio, se_ratio = float("nan"), float("nan")
    return DepthBiasedSummary(
        dist=dist.label,
        alpha=alpha,
        eps=eps,
        depth=D,
        engine=engine,
        replicas=replicas,
        seed=seed,
        mean_R=mR,
        var_R=float(cov[0, 0]),
        se_R=math.sqrt(cov[0, 0] / replicas),
        mean_marks=mk,
        se_marks=math.sqrt(cov[1, 1] / replicas),
        ratio_hat=ratio,
        se_ratio=se_ratio,
        missed_marks_bound=missed_marks_bound(alpha, D),
        missed_discovery_bound=missed_discovery_bound(alpha, D),
        mean_T=mean_T,
        R=out[:, 0],
        marks=out[:, 2],
    )


SUMMARY_COLUMNS = [
    "model",
    "dist",
    "param",
    "N_or_D",
    "replicas",
    "mean_R",
    "se_R",
    "var_R",
    "mean_T",
    "mean_marks",
    "rho_or_ratio",
    "se",
]


def append_summary_csv(summary, path) -> Path:
    """Append one campaign summary, writing the header if the file is new."""
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    row = summary.csv_row()
    with path.open("a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(SUMMARY_COLUMNS)
        writer.writerow([format_cell(row[c]) for c in SUMMARY_COLUMNS])
    return path


def format_cell(value) -> str:
    """CSV cell text: integers verbatim, floats in full-precision scientific notation."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17e}"
    return str(value)
