# %% [markdown]
# # Discovering a binary tree by independent marks
#
# Every node of a depth-N tree is marked independently with probability
# 1 - exp(-lambda). The discovered subtree is the union of root paths of the
# marked nodes. We compare the Monte-Carlo fraction of the tree that gets
# discovered with the exact finite-depth value and its N -> infinity limit.

# %%
from __future__ import annotations

import numpy as np

from gwdiscovery import analytics as an
from gwdiscovery.discovery import mc_uniform
from gwdiscovery.offspring import deterministic, parse_offspring

binary = deterministic(2)
lam = 0.1
limit = an.rho_series(binary, lam)
print(f"limit fraction {limit.value:.6f} ({limit.terms_used} terms, tail <= {limit.tail_bound:.1e})")

# %%
for N in (4, 8, 12):
    s = mc_uniform(binary, N, lam, replicas=2000, seed=N, workers=1)
    exact = an.rho_finite(binary, lam, N)
    print(f"N={N:2d}  simulated {s.rho_hat:.4f} +/- {s.se_rho:.4f}   exact {exact:.4f}")

# %% [markdown]
# Random offspring counts change the limit only through the generating
# function, so the same comparison works for a law with children 1 or 3.

# %%
mixed = parse_offspring("1:0.5,3:0.5")
s = mc_uniform(mixed, 10, lam, replicas=2000, seed=7, workers=1)
print(f"mixed law: simulated ratio {s.rho_hat:.4f}, limit {an.rho_series(mixed, lam).value:.4f}")

# %% [markdown]
# As lambda shrinks the fraction decays like lambda * log_m(1/lambda).

# %%
lams = np.logspace(-6, -2, 5)
ratios = [an.rate_ratio(binary, float(x)) for x in lams]
for x, r in zip(lams, ratios):
    print(f"lambda={x:.0e}  rho / (lambda log2(1/lambda)) = {r:.4f}")
