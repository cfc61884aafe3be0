"""
Nearest-neighbour kernel baseline
=================================

For each query the k closest training rows vote with a Gaussian bump at their
target. k and the bandwidth are chosen on validation loss.
"""

import numpy as np

from ocde import generate_toy, make_grid
from ocde.evaluation import cde_loss, find_modes
from ocde.nnk import fit_nnk, loss_table, tune_nnk

seeds = np.random.SeedSequence(2).spawn(3)
train, val, test = (generate_toy(n, s) for n, s in zip((4000, 1000, 1000), seeds))
grid = make_grid(-10.0, 10.0, 500)

k_grid, h_grid = (10, 50, 200), (0.1, 0.3, 1.0)
table = loss_table(train, val, k_grid, h_grid, grid)
for k in k_grid:
    print(k, "  ".join(f"{table[(k, h)]:.4f}" for h in h_grid))

k, h = tune_nnk(train, val, k_grid, h_grid, grid)
model = fit_nnk(train, k, h, grid)
print(f"chosen k={k}, h={h}; test loss {cde_loss(model, test)[0]:.4f}")
print("modes at x=0:", np.round(find_modes(model.density_on_grid([0.0])), 2))
