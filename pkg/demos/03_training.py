"""Train the patch score network on a few noisy clouds and check its gradient.

A short run (10 epochs) keeps this under a minute; the benchmark uses 50.
"""

# %%
from n2s3.geometry import normalize_unit_sphere
from n2s3.model import Architecture, init_params, load_params, save_params
from n2s3.noise import AnnealSchedule, corrupt_gaussian
from n2s3.surfaces import Plane, Sphere
from n2s3.training import TrainingConfig, gradient_check, train

clouds = []
for i, surf in enumerate([Sphere([0, 0, 0], 1.0), Plane([0, 0, 1])]):
    clean, _ = normalize_unit_sphere(surf.sample(2000, seed=i))
    clouds.append(corrupt_gaussian(clean, 0.02, seed=100 + i))

# %% The analytic gradient agrees with finite differences.
net = init_params(Architecture(), seed=0)
report = gradient_check(net, TrainingConfig(), n_probes=20)
print("gradient check max relative error", report.max_rel_error)

# %% Training with the AR-DAE loss and an annealed sigma_t.
epochs = 10
cfg = TrainingConfig(epochs=epochs, anneal=AnnealSchedule(0.031, 0.001, epochs), seed=0)
net, history = train(clouds, net, cfg)
for rec in history.records:
    print(f"epoch {rec.epoch:2d} sigma_t {rec.sigma_t:.4f} loss {rec.mean_loss:.4f}")

# %% Parameters round-trip through the binary format.
save_params(net, "/tmp/demo_model.n2s3")
assert (load_params("/tmp/demo_model.n2s3").params == net.params).all()
