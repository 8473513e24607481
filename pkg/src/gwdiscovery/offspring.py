"""Offspring laws: validation, moments, generating function and sampling.

Laws have finite support on {1, 2, ...}. Countable laws such as the
geometric must be truncated by the caller before being passed in; the
moments reported are then those of the truncated law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np

from .errors import DomainError, RejectsBadMass, RejectsSubcritical, RejectsZeroOffspring

MASS_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class OffspringDist:
    """Immutable offspring law G with cached moments.

    Attributes:
        support: sorted child counts k >= 1 carrying positive mass.
        probs: probabilities aligned with ``support``; they sum to one.
        m: mean E(G).
        var: variance Var(G).
        g2: second moment E(G^2).
    """

    support: np.ndarray
    probs: np.ndarray
    m: float
    var: float
    g2: float
    cdf: np.ndarray = field(repr=False)
    label: str = ""

    @property
    def pmf(self) -> dict[int, float]:
        return {int(k): float(p) for k, p in zip(self.support, self.probs)}

    @property
    def is_deterministic(self) -> bool:
        return self.support.size == 1

    @property
    def min_children(self) -> int:
        return int(self.support[0])

    @property
    def max_children(self) -> int:
        return int(self.support[-1])

    @property
    def sigma2(self) -> float:
        return self.var

    def pgf(self, s):
        return pgf(self, s)

    def pgf_prime(self, s):
        """Derivative g'(s) = sum_k k p_k s^(k-1)."""
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        for k, p in zip(self.support, self.probs):
            out = out + k * p * s ** (k - 1)
        return out if out.ndim else float(out)

    def complement_pgf(self, x):
        """Return 1 - g(1 - x) without cancellation for small x in [0, 1]."""
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            log_keep = np.log1p(-np.minimum(x, 1.0))
        out = np.zeros_like(x)
        for k, p in zip(self.support, self.probs):
            out = out - p * np.expm1(k * log_keep)
        return out if out.ndim else float(out)

    def sample(self, rng: np.random.Generator, size=None):
        return sample(self, rng, size)

    def __repr__(self) -> str:
        return f"OffspringDist({self.label or self.pmf}, m={self.m:g}, var={self.var:g})"


def make_offspring(
    spec: Iterable[tuple[int, float]],
    normalize: bool = False,
    label: str | None = None,
) -> OffspringDist:
    """Build an :class:`OffspringDist` from ``(k, probability)`` pairs.

    Repeated ``k`` entries are merged. With ``normalize=False`` the
    probabilities must already sum to one within 1e-12; with
    ``normalize=True`` any positive weights are accepted and rescaled,
    which is how truncated countable laws should be supplied.
    """
    merged: dict[int, float] = {}
    for k, p in spec:
        if isinstance(k, float):
            if not k.is_integer():
                raise DomainError(f"child count must be an integer, got {k!r}")
            k = int(k)
        if not isinstance(k, (int, np.integer)) or isinstance(k, bool):
            raise DomainError(f"child count must be an integer, got {k!r}")
        k = int(k)
        p = float(p)
        if k < 0:
            raise DomainError(f"child count must be >= 1, got {k}")
        if k == 0:
            if p != 0.0:
                raise RejectsZeroOffspring("P(G=0) must be zero: the tree has to be infinite")
            continue
        if not (p > 0.0) or not math.isfinite(p):
            raise RejectsBadMass(f"probability for k={k} must be positive, got {p}")
        merged[k] = merged.get(k, 0.0) + p
    if not merged:
        raise RejectsBadMass("offspring spec is empty")

    total = math.fsum(merged.values())
    if not normalize and abs(total - 1.0) > MASS_TOL:
        raise RejectsBadMass(f"probabilities sum to {total!r}, not 1")
    if max(merged) < 2:
        raise RejectsSubcritical("all mass on k=1 gives m=1; need P(G>=2) > 0")

    support = np.array(sorted(merged), dtype=np.int64)
    # Exact rational moments of the renormalized law, rounded once at the end.
    # repr() gives the shortest decimal, so 0.2 is read as 1/5.
    weights = [Fraction(repr(merged[int(k)])) for k in support]
    wsum = sum(weights)
    fprobs = [w / wsum for w in weights]
    m = sum(int(k) * p for k, p in zip(support, fprobs))
    g2 = sum(int(k) ** 2 * p for k, p in zip(support, fprobs))
    var = g2 - m * m

    probs = np.array([float(p) for p in fprobs])
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    for arr in (support, probs, cdf):
        arr.setflags(write=False)
    if label is None:
        label = ",".join(f"{int(k)}:{p:.12g}" for k, p in zip(support, probs))
    return OffspringDist(
        support=support,
        probs=probs,
        m=float(m),
        var=float(var),
        g2=float(g2),
        cdf=cdf,
        label=label,
    )


def deterministic(m: int) -> OffspringDist:
    """Point mass G = m."""
    return make_offspring([(int(m), 1.0)], label=f"det:{int(m)}")


def parse_offspring(text: str) -> OffspringDist:
    """Parse ``"k:p,k:p,..."`` or the shortcut ``"det:m"``.

    >>> parse_offspring("1:0.5,3:0.5").m
    2.0
    """
    text = text.strip().strip("\"'")
    if not text:
        raise RejectsBadMass("empty offspring spec")
    if text.lower().startswith("det:"):
        value = text.split(":", 1)[1].strip()
        try:
            k = int(value)
        except ValueError:
            raise DomainError(f"det:m needs an integer m, got {value!r}") from None
        return deterministic(k)
    pairs = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            k_str, p_str = chunk.split(":")
            k = int(k_str)
            p = float(p_str)
        except ValueError:
            raise DomainError(f"cannot parse offspring entry {chunk!r}; expected k:p") from None
        pairs.append((k, p))
    return make_offspring(pairs, label=text)


def pgf(dist: OffspringDist, s):
    """Probability generating function g(s) = E(s^G) on [0, 1]."""
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0) or np.any(np.isnan(arr)):
        raise DomainError("pgf argument must lie in [0, 1]")
    out = np.zeros_like(arr)
    for k, p in zip(dist.support, dist.probs):
        out = out + p * arr ** int(k)
    return out if out.ndim else float(out)


def sample(dist: OffspringDist, rng: np.random.Generator, size=None):
    """Draw child counts by inversion of the cumulative table.

    Exactly one uniform is consumed per draw, so the stream position after
    ``size`` draws does not depend on the values drawn.
    """
    if dist.is_deterministic:
        u = rng.random(size)
        k = dist.support[0]
        return int(k) if size is None else np.full(np.shape(u), k, dtype=np.int64)
    u = rng.random(size)
    idx = np.searchsorted(dist.cdf, u, side="right")
    idx = np.minimum(idx, dist.support.size - 1)
    out = dist.support[idx]
    return int(out) if size is None else out


def size_biased(dist: OffspringDist) -> OffspringDist:
    """Size-biased companion law P(G~ = k) = k P(G = k) / m."""
    pairs = [(int(k), int(k) * float(p)) for k, p in zip(dist.support, dist.probs)]
    return make_offspring(pairs, normalize=True, label=f"sizebiased({dist.label})")

