"""One-step denoising with a known noise level and with the TV-based sigma sweep."""

# %%
import numpy as np

from n2s3.denoise import (analytic_gaussian_score, analytic_plane_score, denoise_unknown_sigma,
                          tweedie_denoise)
from n2s3.metrics import chamfer_distance
from n2s3.noise import corrupt_gaussian
from n2s3.surfaces import Plane

# %% With the exact score of a Gaussian blob every point lands on the mean.
rng = np.random.default_rng(0)
mu, sigma = np.array([0.1, -0.2, 0.3]), 0.05
blob = mu + sigma * rng.standard_normal((1000, 3))
x = tweedie_denoise(blob, analytic_gaussian_score(blob, mu, sigma), sigma)
print("max distance to mu", np.abs(x - mu).max())

# %% The sweep picks sigma by minimizing TV_PC of the denoised cloud.
res = denoise_unknown_sigma(analytic_gaussian_score(blob, mu, sigma), blob)
print("true sigma", sigma, "estimated", res.sigma_star)

# %% Plane score: the denoised cloud collapses back onto the plane.
plane = Plane([0, 0, 1])
clean = plane.sample(2000, seed=3)
noisy = corrupt_gaussian(clean, 0.02, seed=4)
scores = analytic_plane_score(noisy, [0, 0, 1], 0.0, 0.02)
out = tweedie_denoise(noisy, scores, 0.02)
print("CD noisy", chamfer_distance(noisy, clean), "denoised", chamfer_distance(out, clean))

# %% A trained network is used the same way:
#     from n2s3.denoise import denoise_known_sigma
#     x = denoise_known_sigma(net, noisy_unit_cloud, 0.02)
