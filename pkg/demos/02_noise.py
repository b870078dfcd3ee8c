"""Gaussian corruption, the training perturbation and the annealed noise schedule."""

# %%
import numpy as np

from n2s3.noise import AnnealSchedule, corrupt_gaussian, perturb_for_training, sigma_schedule
from n2s3.surfaces import Sphere

clean = Sphere([0, 0, 0], 1.0).sample(2000, seed=1)
noisy = corrupt_gaussian(clean, 0.02, seed=2)
print("empirical noise std", (noisy - clean).std())

# %% The same seed always gives the same noise.
assert np.array_equal(noisy, corrupt_gaussian(clean, 0.02, seed=2))

# %% The extra perturbation used during training returns the unit noise too.
y_pert, u = perturb_for_training(noisy, 0.03, seed=3)
print("y' - y == sigma_t * u:", np.array_equal(y_pert, noisy + 0.03 * u))

# %% Linear anneal from 0.031 down to 0.001.
sched = AnnealSchedule(0.031, 0.001, 400)
for epoch in (0, 100, 200, 399):
    print(f"epoch {epoch:3d}: sigma_t = {sigma_schedule(epoch, sched):.4f}")
