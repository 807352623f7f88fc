"""Fuse two cosine modalities that observe the same square.

Generates a small same_domain dataset, trains the coupled auto-encoders,
and compares the fused embedding with the register-afterwards baseline.
Takes a couple of minutes on one core.
"""

import warnings

from gappy_fuse.evaluation import baseline_register, isometry_error, model_isometry, stack_embedding
from gappy_fuse.rigidity import check_patch_rigidity
from gappy_fuse.scenarios import default_scenario, make_synthetic_scenario
from gappy_fuse.training import TrainConfig, train

warnings.simplefilter("ignore")

dataset, truth = make_synthetic_scenario(default_scenario("same_domain", n_per_component=120, burst_size=40, seed=0))
print(f"{dataset.n_modalities} modalities, {sum(m.n_bursts for m in dataset.modalities)} bursts, "
      f"{len(dataset.calibration)} calibration links")
print("rigid:", check_patch_rigidity(dataset).verdict)

config = TrainConfig(
    epochs=150, batch_bursts=8, lr=3e-3, lr_final=1e-4, w_recon=1e-3,
    reflection_relaxation=True, relax_fraction=0.3, calib_start=0.5, register_at_calib=True,
)
model, history = train(dataset, config, callback=lambda e, r: e % 50 == 0 and print(f"  epoch {e}: loss {r['total']:.3f}"))

fused = model_isometry(model, dataset, truth)
print(f"fused embedding: relative RMSE {fused.relative_rmse:.2%} over {fused.n_pairs} pairs")

base = baseline_register(dataset, config)
emb, lat = stack_embedding(base.means, truth)
print(f"baseline (train apart, then Procrustes): relative RMSE {isometry_error(emb, lat).relative_rmse:.2%}")
