"""
Initialization and the editing environment
==========================================

Best-reward initialization scores K random layouts and keeps the best one.
The environment then edits that layout one discrete move at a time.
"""

# %%
# Best of K random layouts
# ------------------------

import numpy as np

from dfcopt.circuit import TemplateSpec
from dfcopt.env import EnvConfig, FilterEnv, bri_initialize, decode_action_catalog
from dfcopt.metrics import PassbandSpec

spec = PassbandSpec(((285.0, 363.0),))
bri = bri_initialize(TemplateSpec(N=4), spec, K=500, rng_seed=0)
print(f"best score {bri.score:.2f} (candidate {bri.index}), median {np.median(bri.scores):.2f}")
print(np.percentile(bri.scores, [10, 50, 90, 100]).round(2))

# %%
# Action catalog
# --------------
# x, y and u move one resonator; l and w resize all of them; the last action
# does nothing.

cat = decode_action_catalog(("x", "y", "l", "w", "u"), 4)
print(len(cat), [a.label() for a in cat.actions][:8], "...", cat.actions[-1].label())
print(len(decode_action_catalog(("x",), 4)), len(decode_action_catalog(("l",), 4)))

# %%
# A random walk
# -------------

env = FilterEnv(spec, cfg=EnvConfig(max_steps_per_episode=20), template=TemplateSpec(N=4), seed=0)
obs = env.reset(bri.layout)
rng = np.random.default_rng(0)
for t in range(25):
    out = env.step(int(rng.integers(env.n_actions)))
    bd = out.info["breakdown"]
    print(f"{t:2d} {out.info['action']:8s} valid={out.info['valid']!s:5s} reward={out.reward:9.2f} "
          f"iou={bd.iou_percent:5.1f}")
    if out.done:
        obs = env.reset()
print("best so far", round(env.state.best_score, 2))
