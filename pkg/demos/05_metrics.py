"""TV_PC, Chamfer distance and point-to-surface distance."""

# %%
import numpy as np

from n2s3.metrics import TvParams, chamfer_distance, point_to_surface, tv_pc
from n2s3.noise import corrupt_gaussian
from n2s3.surfaces import Torus, parse_surface

torus = Torus([0, 0, 0], 1.0, 0.3)
clean = torus.sample(1500, seed=0)
for sigma in (0.0, 0.01, 0.03):
    pc = corrupt_gaussian(clean, sigma, seed=1) if sigma else clean
    print(f"sigma {sigma:.2f}: TV_PC {tv_pc(pc):9.3f}  CD {chamfer_distance(pc, clean):.2e}"
          f"  P2M {point_to_surface(pc, torus):.2e}")

# %% Three identical points, k=2, eps=1e-3: 3 * 2 * 1e-3.
print(tv_pc(np.zeros((3, 3)), TvParams(k_neighbors=2, epsilon=1e-3)))

# %% Surfaces can be given as text specs.
box = parse_surface("box:0,0,0,1,0.5,0.25")
print(box.spec, point_to_surface([[2.0, 0, 0]], box))
