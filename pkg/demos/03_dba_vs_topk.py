"""
Why a distance-aware score
==========================

Two predictors with the same top-1 accuracy. One misses by a beam or two,
the other misses wildly. Top-k cannot tell them apart; DBA can, and so
can the power the chosen beams actually deliver.
"""
import numpy as np

from beampred import ArrayConfig, build_codebook, receive_power, synth_channel
from beampred.metrics import MetricConfig, dba_score, power_ratio, top_k_accuracy

rng = np.random.default_rng(0)
cfg = ArrayConfig()
cb = build_codebook(cfg)

# 400 users spread over the sector in front of an array facing north
s = rng.uniform(-0.9, 0.9, 400)
powers = np.array([receive_power(synth_channel((v, np.sqrt(1 - v * v)), config=cfg,
                                               boresight_deg=0.0), cb) for v in s]) + 1e-6
labels = powers.argmax(axis=1)


def ranking(first):
    # ranks 2 and 3 are fillers three beams either side of the first guess
    return np.stack([first, (first + 3) % 64, (first - 3) % 64], axis=1)


hit = rng.random(400) < 0.5
near = np.where(hit, labels, np.clip(labels + rng.choice([-2, 2], 400), 0, 63))
far = np.where(hit, labels, (labels + rng.integers(16, 48, 400)) % 64)
near_r, far_r = ranking(near), ranking(far)

print(f"{'':14s}{'top-1':>8s}{'top-3':>8s}{'DBA':>8s}{'P_R':>8s}")
for name, r in (("near misses", near_r), ("far misses", far_r)):
    print(f"{name:14s}{top_k_accuracy(r, labels, 1):8.3f}{top_k_accuracy(r, labels, 3):8.3f}"
          f"{dba_score(r, labels, MetricConfig())[0]:8.3f}{power_ratio(r, labels, powers, 3):8.3f}")

# with delta = 1 every miss is worth nothing and DBA collapses to mean top-k
y = dba_score(near_r, labels, MetricConfig(delta=1))[1]
print("delta=1 Y_k:", y, " top-k:", [top_k_accuracy(near_r, labels, k) for k in (1, 2, 3)])
