"""Unit-sphere normalization and exact k-nearest-neighbor queries."""

# %%
import numpy as np

from n2s3.geometry import build_knn_index, denormalize, knn_query, normalize_unit_sphere

rng = np.random.default_rng(0)
pts = rng.normal(size=(500, 3)) * [3.0, 1.0, 0.5] + [10.0, -2.0, 4.0]

# %% Normalize: centroid to the origin, farthest point at radius 1.
unit, t = normalize_unit_sphere(pts)
print("centroid", t.centroid, "scale", t.scale)
print("max norm after normalization", np.linalg.norm(unit, axis=1).max())
print("round trip error", np.abs(denormalize(unit, t) - pts).max())

# %% kNN results are exact and ties go to the smaller index.
idx = build_knn_index(unit)
for j, d in knn_query(idx, unit[0], 5):
    print(f"neighbor {j:4d} at distance {d:.4f}")

grid = np.array([[0, 0, 0], [1, 0, 0], [-1, 0, 0], [0, 1, 0]], dtype=float)
print("tie order:", knn_query(build_knn_index(grid), [0, 0, 0], 4))
