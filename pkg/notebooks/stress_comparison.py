# %% [markdown]
# # Fixed versus adaptive alpha on the stress scenario
#
# Two merging vehicles close in on the ego from both sides. With alpha held at
# its nominal value the safe control interval empties; the adaptive controller
# raises alpha ahead of time and keeps it open.

# %%
from safemerge.config import builtin_config, scenario_from_dict
from safemerge.sim import run_fixed_alpha_comparison

cfg = scenario_from_dict(builtin_config("stress"))
res = run_fixed_alpha_comparison(cfg)

# %%
for name, tr in (("fixed", res.fixed), ("adaptive", res.adaptive)):
    print(f"{name:9s} min distance {tr.min_distance:6.2f} m  empty steps {tr.n_infeasible:3d}  outcome {tr.outcome().slot}")

# %% [markdown]
# Where the fixed controller ran out of room, and where the adaptive one lifted alpha.

# %%
print("fixed empty-interval steps:", res.fixed_infeasible_steps)
print("adaptation steps:", res.adaptation_steps)
print("peak alpha:", res.adaptive.alpha.max())

# %%
# distance to the nearest merging vehicle every second
stride = int(round(1.0 / cfg.dt))
d_fixed = res.fixed.distance.min(axis=1)
d_adapt = res.adaptive.distance.min(axis=1)
for k in range(0, len(res.fixed), stride):
    print(f"t={k * cfg.dt:5.1f} s  fixed {d_fixed[k]:6.2f}  adaptive {d_adapt[k]:6.2f}")
