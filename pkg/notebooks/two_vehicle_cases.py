# %% [markdown]
# # Merge slot as a function of alpha
#
# Two merging vehicles and one ego. A conservative alpha yields to the traffic;
# an aggressive one squeezes ahead.

# %%
from safemerge.config import builtin_config, scenario_from_dict
from safemerge.sim import run_episode

# %%
for name in ("case1", "case2"):
    base = scenario_from_dict(builtin_config(name))
    for alpha in (1.0, 15.0):
        tr = run_episode(base.with_controller(alpha_nominal=alpha))
        oc = tr.outcome()
        print(f"{name} alpha={alpha:4g}  slot={oc.slot:8s} labels={oc.labels}  min distance {tr.min_distance:.2f} m")
