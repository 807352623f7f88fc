"""Points that carry their own sensor lists: build the point graph and pick sensor-subset modalities."""

from gappy_fuse.rigidity import check_point_rigidity, orthogonal_dof, select_point_modalities, whitney_count
from gappy_fuse.scenarios import make_point_case

records, latent = make_point_case(n_per_type=6, seed=0)
d = latent.shape[1]
print(f"{len(records)} points in {d} dimensions; an edge needs {whitney_count(d)} shared sensors, "
      f"each point {orthogonal_dof(d)} neighbors")

report = check_point_rigidity(records, d)
print("point graph rigid:", report.verdict, "| components:", len(report.components))

chosen = select_point_modalities(records, d)
for subset, members in zip(chosen.subsets, chosen.members):
    print(f"modality on sensors {sorted(subset)}: {len(members)} points")
print("points seen by more than one modality:", chosen.common_points())
print("modality graph rigid:", chosen.report.verdict)
