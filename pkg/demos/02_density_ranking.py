"""Estimating and ranking fog density.

A small sweep of procedural scenes at known densities trains the ridge
regressor. We then pretend a second batch is "real" foggy data, rank it, and
compare the ranking with the densities we secretly used.

Run: python3 demos/02_density_ranking.py   (about a minute)
"""
import numpy as np

from foghorn.depth_completion import CompletionParams
from foghorn.fog_density import extract_features, fit_density_regressor, pairwise_agreement, rank_dataset
from foghorn.fog_synthesis import FogConfig, simulate_scene
from foghorn.scenes import make_scene

comp = CompletionParams(k=128)


def render(seed, beta):
    s = make_scene(seed)
    return simulate_scene(s.clear, s.disparity, s.labels, s.camera, FogConfig(beta), comp, seed=seed)


# %% Training sweep: the four densities used for the regressor
X, y = [], []
for seed in range(12):
    for beta in (0.0, 0.005, 0.01, 0.02):
        X.append(extract_features(render(seed, beta)))
        y.append(beta)
model = fit_density_regressor(np.array(X), np.array(y))
print("weights:", np.round(model.weights, 4), "bias:", round(model.bias, 5))

# %% A "real" batch with unknown, continuous densities
rng = np.random.default_rng(0)
truth = {f"img_{i:02d}": float(rng.choice([0.0, rng.uniform(0.003, 0.03)])) for i in range(16)}
images = {k: render(100 + i, b) for i, (k, b) in enumerate(truth.items())}
ranked = rank_dataset(model, images)
for e in ranked:
    print(f"{e.image}  beta_hat={e.beta_hat:.4f}  pct={e.percentile:5.1f}  true={truth[e.image]:.4f}")
print(f"agreement on pairs >= 20 percentiles apart: {pairwise_agreement(ranked, truth):.2f}")
