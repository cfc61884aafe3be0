"""
Fourier smoothing of a density histogram
========================================

The classifier is piecewise constant in y, so raw curves are step-shaped.
Keeping only the lowest frequencies of the curve removes the steps.
"""

import numpy as np

from ocde import fit_ocde, generate_toy, make_grid
from ocde.estimator import InstrumentalDist, smooth_curve, tune_components
from ocde.evaluation import default_fourier_candidates, find_modes

seeds = np.random.SeedSequence(1).spawn(2)
train, val = generate_toy(5000, seeds[0]), generate_toy(1000, seeds[1])
inst = InstrumentalDist(-10.0, 10.0)
model = fit_ocde(train, val, inst, make_grid(-10.0, 10.0, 1000), seed=1)

curve = model.density_on_grid([0.0])
for n in (1, 5, 10, 20, 50, 1000):
    s = smooth_curve(curve, n)
    roughness = np.abs(np.diff(s.values)).sum()
    print(f"{n:5d} components: modes {np.round(find_modes(s), 2)}, total variation {roughness:.3f}")

# 1 component is exactly the uniform density; 1000 (all of them) gives back the input.
print(np.max(np.abs(smooth_curve(curve, 1000).values - curve.values)))

best = tune_components(model, train, default_fourier_candidates(1000))
print("component count chosen on the training set:", best)
