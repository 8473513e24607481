# %% [markdown]
# # Marks that thin out with depth
#
# A node at depth n is marked with probability 1 - exp(-(alpha/m)^n), so the
# expected number of marks stays finite. We compare the skeleton simulation
# with the exact subtree-hit recursion and watch the expected discovered size
# grow as alpha approaches one.

# %%
from __future__ import annotations

from gwdiscovery import analytics as an
from gwdiscovery.discovery import mc_depth_biased
from gwdiscovery.offspring import deterministic, parse_offspring

mixed = parse_offspring("1:0.5,3:0.5")

# %%
for alpha in (0.3, 0.6, 0.8):
    s = mc_depth_biased(mixed, alpha, 1e-4, replicas=4000, seed=11, workers=1)
    exact = an.mean_R_alpha_exact(mixed, alpha)
    print(
        f"alpha={alpha}  depth {s.depth:3d} via {s.engine:8s} "
        f"simulated {s.mean_R:8.3f} +/- {s.se_R:.3f}   exact {exact.value:8.3f}"
    )

# %% [markdown]
# Scaled by (1 - alpha)^2 the mean discovered size stays between constants.

# %%
binary = deterministic(2)
for alpha in (0.9, 0.99, 0.999):
    value = an.mean_R_alpha_exact(binary, alpha).value
    print(f"alpha={alpha}  (1-alpha)^2 E(R) = {(1 - alpha) ** 2 * value:.4f}")

# %%
b = an.selected_count_bounds(0.99, 2.0)
print(f"expected marks at alpha=0.99: {b.exact:.4f} within [{b.lower:.4f}, {b.upper:.4f}]")
