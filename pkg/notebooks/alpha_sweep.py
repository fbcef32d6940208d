# %% [markdown]
# # How the nominal alpha shapes a single merge
#
# Larger alpha lets the ego hold its nominal control longer before the barrier
# starts shaping it. The trade is a later, harder correction.

# %%
import numpy as np

from safemerge.config import builtin_config, scenario_from_dict
from safemerge.sim import run_alpha_sweep

cfg = scenario_from_dict(builtin_config("single_merge"))
sweep = run_alpha_sweep(cfg, [1.0, 2.0, 5.0, 10.0, 15.0])

# %%
print("alpha  first-deviation  min-distance  min-u   peak-alpha")
for a, tr in sweep.items():
    print(f"{a:5g}  {tr.first_deviation_index():15d}  {tr.min_distance:12.2f}  {tr.u.min():6.2f}  {tr.alpha.max():9.2f}")

# %% [markdown]
# The runs share every state up to the earliest deviation.

# %%
k = min(tr.first_deviation_index() for tr in sweep.values())
ref = sweep[1.0]
print(all(np.array_equal(tr.ego_x[: k + 1], ref.ego_x[: k + 1]) for tr in sweep.values()))
