"""Closed forms and series for the discovery quantities, with certified tails.

Everything here is deterministic except the two evaluators whose inner
expectation has no recursion (``mean_R_alpha`` for random offspring and
``psi_harmonic_sum`` for a random V); those report a Monte-Carlo standard
error next to the analytic tail bound.

The workhorse is the generating-function recursion for the Laplace
transform of the size of the first n + 1 generations,

    L_0 = exp(-lam),   L_n = exp(-lam) g(L_{n-1}),

which follows from splitting T_n at the root's children.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import DeterministicOffspring, DomainError
from .offspring import OffspringDist

MAX_TERMS = 100_000


@dataclass(frozen=True)
class SeriesResult:
    """A truncated series value.

    ``tail_bound`` bounds the omitted remainder (and any truncation bias);
    ``se`` is the Monte-Carlo standard error, zero for deterministic methods.
    """

    value: float
    terms_used: int
    tail_bound: float
    method: str
    se: float = 0.0

    CSV_HEADER = "value,terms_used,tail_bound,method,se"

    def csv_line(self) -> str:
        return (
            f"{self.value:.17e},{self.terms_used},{self.tail_bound:.17e},"
            f"{self.method},{self.se:.17e}"
        )


def log_m(y: float, m: float) -> float:
    """Logarithm in base m, as ln(y) / ln(m)."""
    return math.log(y) / math.log(m)


def _check_lambda(lam: float, strict: bool = False) -> float:
    lam = float(lam)
    if math.isnan(lam) or lam < 0.0 or (strict and lam == 0.0):
        raise DomainError(f"lambda must be {'>' if strict else '>='} 0, got {lam}")
    return lam


def _check_tol(tol: float) -> float:
    if not (tol > 0.0):
        raise DomainError(f"tol must be positive, got {tol}")
    return float(tol)


# -- Laplace transform of T_n ----------------------------------------------


def laplace_values(dist: OffspringDist, lam: float, n_max: int) -> np.ndarray:
    """E(exp(-lam T_n)) for n = 0..n_max."""
    lam = _check_lambda(lam)
    e = math.exp(-lam)
    out = np.empty(n_max + 1)
    out[0] = e
    for n in range(1, n_max + 1):
        out[n] = e * dist.pgf(out[n - 1])
    return out


def laplace_complements(dist: OffspringDist, lam: float, n_max: int) -> np.ndarray:
    """1 - E(exp(-lam T_n)) for n = 0..n_max, accurate when lam T_n is small."""
    lam = _check_lambda(lam)
    hit = 1.0 if math.isinf(lam) else -math.expm1(-lam)
    e = math.exp(-lam)
    out = np.empty(n_max + 1)
    out[0] = hit
    for n in range(1, n_max + 1):
        out[n] = hit + e * dist.complement_pgf(out[n - 1])
    return out


def laplace_cumulative(dist: OffspringDist, lam: float, n: int) -> float:
    """E(exp(-lam T_n)) with T_n = Z_0 + ... + Z_n."""
    if int(n) != n or n < 0:
        raise DomainError(f"n must be a non-negative integer, got {n}")
    return float(laplace_values(dist, lam, int(n))[-1])


# -- uniform model, first order ----------------------------------------------


def expected_tree_size(m: float, N: int) -> float:
    """E(T_N) = (m^(N+1) - 1) / (m - 1)."""
    return math.fsum(m**n for n in range(N + 1))


def expected_discovered(dist: OffspringDist, lam: float, N: int) -> float:
    """E(R_N) = sum_{n<=N} m^(N-n) (1 - E(exp(-lam T_n)))."""
    c = laplace_complements(dist, lam, N)
    return math.fsum(dist.m ** (N - n) * c[n] for n in range(N + 1))


def rho_finite(dist: OffspringDist, lam: float, N: int) -> float:
    """rho_N(lam) = E(R_N) / E(T_N) at finite depth N."""
    return expected_discovered(dist, lam, N) / expected_tree_size(dist.m, N)


def rho_series(dist: OffspringDist, lam: float, tol: float = 1e-12) -> SeriesResult:
    """Limiting discovered fraction rho(lam).

    Sum of (m-1)/m^(n+1) (1 - E(exp(-lam T_n))) over n <= n*, where n* is
    the first index whose geometric tail m^-(n*+1) is at most ``tol``.
    """
    lam = _check_lambda(lam, strict=True)
    tol = _check_tol(tol)
    m = dist.m
    n_star = 0
    while m ** (-(n_star + 1)) > tol:
        n_star += 1
    c = laplace_complements(dist, lam, n_star)
    weights = (m - 1.0) / m ** (np.arange(n_star + 1) + 1.0)
    value = math.fsum(weights * c)
    return SeriesResult(value, n_star + 1, m ** (-(n_star + 1)), "exact-recursion")


def rate_ratio(dist: OffspringDist, lam: float, tol: float = 1e-15) -> float:
    """rho(lam) / (lam log_m(1/lam)); tends to 1 as lam -> 0."""
    return rho_series(dist, lam, tol).value / (lam * log_m(1.0 / lam, dist.m))


# -- uniform model, second order --------------------------------------------


def rho2_nondeterministic(dist: OffspringDist, lam: float, tol: float = 1e-12) -> SeriesResult:
    """Limit of Var(R_N) / E(T_N)^2 for random offspring: Var(G)/(m^2 - m) rho^2."""
    if dist.is_deterministic:
        raise DeterministicOffspring(
            "Var(G) = 0: use rho2_deterministic_series (normalization by E(T_N))"
        )
    rho = rho_series(dist, lam, tol)
    coef = dist.var / (dist.m**2 - dist.m)
    tail = coef * (2.0 * rho.value * rho.tail_bound + rho.tail_bound**2)
    return SeriesResult(coef * rho.value**2, rho.terms_used, tail, "exact-recursion")


def _tree_sizes(m: int, n_max: int) -> np.ndarray:
    return np.array([(m ** (n + 1) - 1) // (m - 1) for n in range(n_max + 1)], dtype=float)


def rho2_deterministic_series(
    m: int, lam: float, tol: float = 1e-12, include_leaves: bool = True
) -> SeriesResult:
    """Limit of Var(R_N) / T_N for G = m almost surely.

    With e_n = exp(-lam T_n) and c_n = 1 - e_n, the summand at height n is

        m^-n [ e_n c_n + 2 sum_{k<n} m^(n-k) e_n c_k ],

    (the variance of one height-n indicator plus its covariances with the
    m^(n-k) descendants at height k), and the value is (m-1)/m times the
    sum over n. ``include_leaves=False`` drops the n = 0 term.

    Past n*, each summand is at most e_n (1 + 2m/(m-1)) and e_n decays
    faster than geometrically, which gives the certified tail.
    """
    if int(m) != m or m < 2:
        raise DomainError(f"m must be an integer >= 2, got {m}")
    m = int(m)
    lam = _check_lambda(lam, strict=True)
    tol = _check_tol(tol)
    scale = (m - 1.0) / m
    cap = 1.0 + 2.0 * m / (m - 1.0)
    terms: list[float] = []
    prefix = 0.0  # sum_{k<n} m^-k c_k
    n = 0
    while True:
        T_n = (m ** (n + 1) - 1) / (m - 1)
        e_n = math.exp(-lam * T_n)
        c_n = -math.expm1(-lam * T_n)
        if n > 0 or include_leaves:
            terms.append(m ** (-n) * e_n * c_n + 2.0 * e_n * prefix)
        prefix += m ** (-n) * c_n
        # tail over indices > n
        e_next = math.exp(-lam * (m ** (n + 2) - 1) / (m - 1))
        ratio = math.exp(-lam * m ** (n + 2))
        tail = scale * cap * e_next / (1.0 - ratio) if ratio < 1.0 else math.inf
        if tail <= tol:
            break
        n += 1
        if n > MAX_TERMS:
            raise DomainError("series did not reach the requested tolerance")
    return SeriesResult(scale * math.fsum(terms), n + 1, tail, "deterministic-series")


def _derivative_table(dist: OffspringDist, lam: float, s: np.ndarray, j_max: int) -> np.ndarray:
    """A[j, i] = F_j'(s_i) / m^j where F_j(s) = E(exp(-lam T_{j-1}) s^Z_j).

    F_0(s) = s and F_j(s) = exp(-lam) g(F_{j-1}(s)), so the derivative obeys
    F_j' = exp(-lam) g'(F_{j-1}) F_{j-1}'.
    """
    e = math.exp(-lam)
    F = np.array(s, dtype=float)
    A = np.empty((j_max + 1, F.size))
    A[0] = 1.0
    for j in range(1, j_max + 1):
        A[j] = A[j - 1] * e * dist.pgf_prime(F) / dist.m
        F = e * dist.pgf(F)
    return A


def rho2_series(
    dist: OffspringDist, lam: float, tol: float = 1e-12, include_leaves: bool = True
) -> SeriesResult:
    """Second-order series extended to any offspring law.

    Evaluates (m-1)/m sum_n m^-n [ L_n (1 - L_n)
        + 2 sum_{k<n} E(exp(-lam T_{n-k-1}) Z_{n-k} L_k^(Z_{n-k}-1)) E(exp(-lam T_k)(1 - exp(-lam T_k))) ]
    exactly. The mixed expectation is F_{n-k}'(L_k) from the joint generating
    function recursion and E(exp(-lam T)(1 - exp(-lam T))) = L_k(lam) - L_k(2 lam).
    For G = m this coincides with :func:`rho2_deterministic_series`.
    """
    lam = _check_lambda(lam, strict=True)
    tol = _check_tol(tol)
    m = dist.m
    scale = (m - 1.0) / m
    n_star = 2 * max(4, math.ceil(math.log(1.0 / tol) / math.log(m)))
    while True:
        L = laplace_values(dist, lam, n_star + 1)
        c = laplace_complements(dist, lam, n_star + 1)
        c2 = laplace_complements(dist, 2.0 * lam, n_star + 1)
        D = c2 - c  # L_k(lam) - L_k(2 lam)
        A = _derivative_table(dist, lam, L[: n_star + 1], n_star + 1)
        a = _derivative_table(dist, lam, np.ones(1), n_star + 1)[:, 0]
        B = D[: n_star + 1] / m ** np.arange(n_star + 1)

        terms = []
        for n in range(0 if include_leaves else 1, n_star + 1):
            k = np.arange(n)
            cross = math.fsum(A[n - k, k] * B[k]) if n else 0.0
            terms.append(m ** (-n) * L[n] * c[n] + 2.0 * cross)

        K = n_star // 2
        J = n_star - K
        tail_a = L[n_star + 1] * m ** (-(n_star + 1)) * m / (m - 1.0)
        # a_j / a_{j-1} = exp(-lam) g'(L_{j-2}) / m, decreasing in j
        r = math.exp(-lam) * dist.pgf_prime(L[J - 1]) / m
        if r < 1.0:
            a_tail = a[J] * r / (1.0 - r)
            a_total = math.fsum(a[1 : J + 1]) + a_tail
            b_total = m / (m - 1.0)
            b_tail = L[K + 1] * m ** (-K) / (m - 1.0)
            tail = scale * (tail_a + 2.0 * (b_tail * a_total + a_tail * b_total))
        else:
            tail = math.inf
        if tail <= tol:
            return SeriesResult(
                scale * math.fsum(terms), n_star + 1, float(tail), "exact-recursion"
            )
        if n_star > 4096:
            raise DomainError("series did not reach the requested tolerance")
        n_star *= 2


def variance_discovered_deterministic(m: int, lam: float, N: int) -> float:
    """Exact Var(R_N) on the complete m-ary tree of depth N."""
    lam = _check_lambda(lam)
    T = _tree_sizes(int(m), N)
    e = np.exp(-lam * T)
    c = -np.expm1(-lam * T)
    total = []
    for n in range(N + 1):
        cov = math.fsum(m ** (n - k) * c[k] for k in range(n))
        total.append(m ** (N - n) * (e[n] * c[n] + 2.0 * e[n] * cov))
    return math.fsum(total)


def discovered_moments(dist: OffspringDist, lam: float, N: int) -> tuple[float, float]:
    """Exact (E(R_N), Var(R_N)) for any offspring law.

    With S the sum of the children's discovered counts and I the event
    that the root's subtree holds a selection, R_n = S + 1{I}, and S > 0
    forces I. Hence E(R_n) = m a + h_n and
    E(R_n^2) = m b + E(G(G-1)) a^2 + 2 m a + h_n, where a and b are the
    first two moments at depth n - 1 and h_n = P(I).
    """
    lam = _check_lambda(lam)
    if int(N) != N or N < 0:
        raise DomainError(f"N must be a non-negative integer, got {N}")
    hit = 1.0 if math.isinf(lam) else -math.expm1(-lam)
    e = math.exp(-lam)
    falling = dist.g2 - dist.m
    h, a, b = hit, hit, hit
    for _ in range(int(N)):
        h = hit + e * dist.complement_pgf(h)
        a, b = dist.m * a + h, dist.m * b + falling * a * a + 2.0 * dist.m * a + h
    return a, b - a * a


def rho2_rate_ratio(m: int, lam: float, tol: float = 1e-15) -> float:
    """rho_2^(2)(lam) / (lam (log_m lam)^2); tends to 1 as lam -> 0."""
    return rho2_deterministic_series(m, lam, tol).value / (lam * log_m(lam, m) ** 2)


# -- depth-biased model ------------------------------------------------------


def subtree_hit_probabilities(dist: OffspringDist, p: np.ndarray) -> np.ndarray:
    """P(subtree of a depth-d node holds a selection), d = 0..D.

    ``p[d]`` is the per-node selection probability at depth d, nothing is
    selected below D = len(p) - 1. Backward recursion
    psi_D = p_D, psi_d = p_d + (1 - p_d)(1 - g(1 - psi_{d+1})).
    """
    p = np.asarray(p, dtype=float)
    psi = np.empty_like(p)
    psi[-1] = p[-1]
    for d in range(len(p) - 2, -1, -1):
        psi[d] = p[d] + (1.0 - p[d]) * dist.complement_pgf(psi[d + 1])
    return psi


def _level_hits(alpha: float, m: float, n: np.ndarray, s) -> np.ndarray:
    """m^n (1 - exp(-(alpha/m)^n s)) written as alpha^n s phi(x), phi(x) = (1 - e^-x)/x.

    Avoids forming m^n, which overflows long before alpha^n underflows.
    """
    x = np.multiply.outer(np.asarray(s, dtype=float), np.power(alpha / m, n))
    with np.errstate(invalid="ignore", divide="ignore"):
        phi = np.where(x > 0.0, -np.expm1(-x) / x, 1.0)
    return np.power(alpha, n) * np.asarray(s, dtype=float)[..., None] * phi


def _check_alpha(alpha: float) -> float:
    if not (0.0 <= alpha < 1.0):
        raise DomainError(f"alpha must lie in [0, 1), got {alpha}")
    return float(alpha)


def _outer_terms(alpha: float, tol: float, mean_s: float) -> int:
    """Last index n* with sum_{n>n*} alpha^n E(S) <= tol."""
    if alpha == 0.0:
        return 0
    n = 0
    while alpha ** (n + 1) * mean_s / (1.0 - alpha) > tol:
        n += 1
    return n


def mean_R_alpha(
    dist: OffspringDist,
    alpha: float,
    inner_replicas: int = 10_000,
    depth_eps: float = 1e-6,
    seed: int = 0,
    tol: float = 1e-12,
    workers: int = 1,
) -> SeriesResult:
    """E(R(alpha)) = sum_n m^n (1 - E(exp(-(alpha/m)^n S))), S = sum_i alpha^i Z_i / m^i.

    For G = m the variable S is the constant 1/(1 - alpha) and the sum is
    exact. Otherwise S is sampled from profiles truncated at depth
    D(alpha, depth_eps) and the same sample serves every n; the
    truncation lowers E(S) by at most depth_eps, which moves the value by
    at most depth_eps / (1 - alpha) and is included in ``tail_bound``.
    """
    from .discovery import horizon_for
    from .gw_core import profile_batch

    alpha = _check_alpha(alpha)
    tol = _check_tol(tol)
    m = float(dist.m)
    mean_s = 1.0 / (1.0 - alpha)
    n_star = _outer_terms(alpha, tol, mean_s)
    outer_tail = 0.0 if alpha == 0.0 else alpha ** (n_star + 1) * mean_s / (1.0 - alpha)
    n = np.arange(n_star + 1)
    if alpha == 0.0:
        return SeriesResult(-math.expm1(-1.0), 1, 0.0, "deterministic-series")
    if dist.is_deterministic:
        terms = _level_hits(alpha, m, n, mean_s)
        return SeriesResult(math.fsum(terms), n_star + 1, outer_tail, "deterministic-series")

    D = horizon_for(alpha, depth_eps)
    z = profile_batch(dist, D, inner_replicas, seed, max_nodes=None, workers=workers)
    S = z.astype(float) @ np.power(alpha / m, np.arange(D + 1))
    Y = _level_hits(alpha, m, n, S).sum(axis=1)
    se = float(np.std(Y, ddof=1) / math.sqrt(len(Y))) if len(Y) > 1 else math.inf
    return SeriesResult(
        float(np.mean(Y)),
        n_star + 1,
        outer_tail + depth_eps / (1.0 - alpha),
        "monte-carlo-inner",
        se,
    )


def mean_R_alpha_exact(dist: OffspringDist, alpha: float, tol: float = 1e-10) -> SeriesResult:
    """E(R(alpha)) by the subtree-hit recursion on the tree cut at depth D.

    D is the smallest depth whose missed-discovery bound
    sum_{i>D} (i+1) alpha^i is at most ``tol``; the returned value is a
    lower bound within ``tail_bound`` of the untruncated mean.
    """
    from .discovery import DepthBiased, missed_discovery_bound

    alpha = _check_alpha(alpha)
    tol = _check_tol(tol)
    D = 0
    if alpha > 0.0:
        while missed_discovery_bound(alpha, D) > tol:
            D += 1
    m = float(dist.m)
    if D < 200:
        p = DepthBiased(alpha, m).level_probabilities(D)
        psi = subtree_hit_probabilities(dist, p)
        value = math.fsum(m**n * psi[n] for n in range(D + 1))
    else:
        value = math.fsum(_scaled_subtree_hits(dist, alpha, D))
    tail = missed_discovery_bound(alpha, D) if alpha > 0.0 else 0.0
    return SeriesResult(value, D + 1, tail, "exact-recursion")


def _scaled_subtree_hits(dist: OffspringDist, alpha: float, D: int) -> np.ndarray:
    """u_d = m^d psi_d for the depth-biased selection, without forming m^d.

    With C(x) = m x r(x) the backward recursion becomes
    u_d = m^d p_d + (1 - p_d) u_{d+1} r(psi_{d+1}). Below 1e-150 r is 1 to
    double precision, which also covers psi values that underflow.
    """
    m = float(dist.m)
    n = np.arange(D + 1)
    selected = _level_hits(alpha, m, n, 1.0)
    keep = np.exp(-np.power(alpha / m, n))
    u = np.empty(D + 1)
    u[D] = selected[D]
    for d in range(D - 1, -1, -1):
        x = u[d + 1] * m ** -(d + 1.0)
        r = dist.complement_pgf(x) / (m * x) if x > 1e-150 else 1.0
        u[d] = selected[d] + keep[d] * u[d + 1] * r
    return u


class SelectedCountBounds(NamedTuple):
    lower: float
    upper: float
    exact: float
    tail_bound: float


def expected_selected(alpha: float, m: float, tol: float = 1e-15) -> tuple[float, float, int]:
    """sum_n m^n (1 - exp(-(alpha/m)^n)), its tail bound and the terms used."""
    alpha = _check_alpha(alpha)
    if alpha == 0.0:
        return -math.expm1(-1.0), 0.0, 1
    n_star = 0
    while alpha ** (n_star + 1) / (1.0 - alpha) > tol:
        n_star += 1
    value = math.fsum(_level_hits(alpha, float(m), np.arange(n_star + 1), 1.0))
    return value, alpha ** (n_star + 1) / (1.0 - alpha), n_star + 1


def selected_count_bounds(alpha: float, m: float) -> SelectedCountBounds:
    """Bracket 1/(1-a) - 1/(2(1-a^2/m)) <= E(N(T)) <= 1/(1-a) and the summed value."""
    alpha = _check_alpha(alpha)
    if not (m > 1.0):
        raise DomainError(f"m must exceed 1, got {m}")
    upper = 1.0 / (1.0 - alpha)
    lower = upper - 1.0 / (2.0 * (1.0 - alpha**2 / m))
    exact, tail, _ = expected_selected(alpha, m)
    return SelectedCountBounds(lower, upper, exact, tail)


# -- harmonic sum -------------------------------------------------------------


def _default_h(u):
    return -np.expm1(-u)


def psi_harmonic_sum(
    x: float,
    m: float = 2.0,
    h: Callable | None = None,
    h_sup: float = 1.0,
    v=1.0,
    inner_replicas: int = 10_000,
    tol: float = 1e-12,
    seed: int = 0,
) -> SeriesResult:
    """Psi(h)(x) = sum_n m^-n E(h(x V m^n)).

    ``h`` must be vectorized, nondecreasing, zero at zero and bounded by
    ``h_sup`` (default 1 - exp(-u)). ``v`` is a number (point mass), an
    array of samples (their empirical law), or a callable
    ``v(rng, size)``. Omitted terms add at most h_sup m^-n* / (m - 1).
    """
    if not (x > 0.0):
        raise DomainError(f"x must be positive, got {x}")
    if not (m > 1.0):
        raise DomainError(f"m must exceed 1, got {m}")
    tol = _check_tol(tol)
    h = _default_h if h is None else h
    n_star = 0
    while h_sup * m ** (-n_star) / (m - 1.0) > tol:
        n_star += 1
    scale = np.power(float(m), np.arange(n_star + 1))
    tail = h_sup * m ** (-n_star) / (m - 1.0)

    if np.isscalar(v):
        terms = np.asarray(h(x * float(v) * scale), dtype=float) / scale
        return SeriesResult(math.fsum(terms), n_star + 1, tail, "deterministic-series")
    if callable(v):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        samples = np.asarray(v(rng, inner_replicas), dtype=float)
    else:
        samples = np.asarray(v, dtype=float)
    Y = (np.asarray(h(x * np.outer(samples, scale)), dtype=float) / scale).sum(axis=1)
    se = float(np.std(Y, ddof=1) / math.sqrt(len(Y))) if len(Y) > 1 else math.inf
    return SeriesResult(float(np.mean(Y)), n_star + 1, tail, "monte-carlo-inner", se)


def psi_rate_ratio(x: float, m: float = 2.0, **kwargs) -> float:
    """Psi(h)(x) / (x log_m(1/x)); tends to E(V) h'(0) as x -> 0."""
    return psi_harmonic_sum(x, m, **kwargs).value / (x * log_m(1.0 / x, m))
