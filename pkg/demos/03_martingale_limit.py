# %% [markdown]
# # The normalized generation size
#
# Z_n / m^n converges to a limit W with mean one. Its variance is
# Var(G) / (m (m - 1)); we check this with a batch of generation profiles.

# %%
from __future__ import annotations

from gwdiscovery.gw_core import estimate_W_samples, w_second_moment
from gwdiscovery.offspring import parse_offspring

law = parse_offspring("1:0.5,3:0.5")
w = estimate_W_samples(law, 16, 4000, seed=3, workers=1)
print(f"mean {w.mean:.4f} +/- {w.mean_se:.4f}")
print(
    f"E((1-W)^2) {w.centered_second_moment:.4f} +/- {w.centered_second_moment_se:.4f}"
    f"   exact {w_second_moment(law, 16):.4f}"
)

# %%
import numpy as np

hist, edges = np.histogram(w.values, bins=12, range=(0.0, 3.0))
for count, left in zip(hist, edges):
    print(f"{left:4.2f} {'#' * int(60 * count / hist.max())}")
