"""
Passband IOU and the reward terms
=================================

Delivered and expected passbands are both lists of disjoint intervals. Their
similarity is the best IOU over monotone alignments of the two lists, found
with a small dynamic program.
"""

# %%
# Single and multi-band IOU
# -------------------------

from dfcopt.metrics import (RewardBreakdown, RewardConfig, StepRewardConfig, iou_single, multiband_iou,
                            reward_full, reward_init, step_reward)

print(iou_single((240, 250), (245, 255)))                        # percent
print(multiband_iou([(240, 245)], [(240, 250), (300, 310)]))      # fraction
print(multiband_iou([(300, 310)], [(240, 250), (300, 310)]))      # one perfect pair saturates

# the sum-aggregated variant rewards covering every band
print(multiband_iou([(300, 310)], [(240, 250), (300, 310)], "sum"))

# %%
# Scores
# ------
# The training reward adds a transmission bonus and a centre-frequency
# penalty to the IOU; the initialization score leaves the penalty out.

m = RewardBreakdown(iou_percent=100.0, max_s21_db=-1.44, insertion_loss_db=1.44, dc_ghz=300.0, dev_ghz=2.0)
print(reward_full(m), reward_init(m))

cfg = RewardConfig(schedule_enabled=True)
for progress in (0.0, 0.3, 0.9):
    print(progress, cfg.weights(progress), round(reward_full(m, cfg, progress), 2))

# %%
# Step rewards are signed powers of the score change
# ---------------------------------------------------

sq = StepRewardConfig(2)
print(step_reward(10, 13, sq), step_reward(13, 10, sq), step_reward(0, 0, sq, valid=False))
