"""
Selectors on a toy world
========================

A two-dimensional world with three ID classes and one OOD blob. With the
true conditional risk ``r`` and likelihood ratio ``g`` in hand we compare
single-score selectors, SIRC and the linear combination ``r + beta * g``.
Run with ``python3 notebooks/selectors_on_a_toy_world.py``.
"""

import numpy as np

from scodkit import (ScoredSamples, aurc, auroc, ausrt, bayes_classify, likelihood_ratio,
                     linear_score, random_world, sample_id, sample_ood, sirc_plugin_params)
from scodkit.recipes import sirc_scores

# %% A seeded world and an evaluation sample
world = random_world(1, dim=2, n_classes=3)
X, y = sample_id(world, 20_000, seed=10)
Xo = sample_ood(world, 20_000, seed=11)

pred, r = bayes_classify(world, X)
_, ro = bayes_classify(world, Xo)
g, go = likelihood_ratio(world, X), likelihood_ratio(world, Xo)
loss = (pred != y).astype(float)
print(f"Bayes error on ID: {loss.mean():.3f}")

# %% Scores, lower meaning "more acceptable"
alpha, tpr_min = 0.5, 0.9
plug = sirc_plugin_params(-g)
scores = {
    "r only": (r, ro),
    "g only": (g, go),
    "SIRC plugin": (sirc_scores(r, g, plug, 0.0), sirc_scores(ro, go, plug, 0.0)),
    "linear": (linear_score(r, g, alpha, tpr_min), linear_score(ro, go, alpha, tpr_min)),
}

# %% The linear selector should come out on top in AuSRT
print(f"{'score':<12} {'AuSRT %':>8} {'AuRC %':>8} {'AuROC %':>8}")
for name, (s_id, s_ood) in scores.items():
    s = ScoredSamples(s_id, loss, s_ood)
    print(f"{name:<12} {100 * ausrt(s, alpha):8.2f} {100 * aurc(s):8.2f} "
          f"{100 * auroc(s):8.2f}")

# %% The trade-off moves with alpha: at alpha=0 only r matters, at alpha=1 only g
for a in (0.1, 0.5, 0.9):
    lin = ScoredSamples(linear_score(r, g, a, tpr_min), loss, linear_score(ro, go, a, tpr_min))
    print(f"alpha={a}: linear AuSRT {100 * ausrt(lin, a):.2f}%, "
          f"r-only {100 * ausrt(ScoredSamples(r, loss, ro), a):.2f}%")
