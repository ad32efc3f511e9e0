"""From trajectories to a training corpus.

Fixed-length windows are cut around every green-to-yellow transition; the
exposure filter drops windows that barely saw the yellow phase. Each
subject also gets a decision target: how much the interface lowered their
yellow-light speed (positive = worth deploying).
"""

import numpy as np

from driverlatent.config import RunConfig
from driverlatent import simulator as sim
from driverlatent import snippets as sn

cfg = RunConfig.from_preset("desk")
cfg.cohort.n_subjects = 8

cohort = sim.sample_cohort(cfg.cohort, seed=42)
dataset = sim.generate_dataset(cohort, cfg.scenario, seed=7, effect=cfg.hmi_effect)
ctx = cfg.hyper.context_len(cfg.scenario.sample_rate)

raw = sn.extract_corpus(dataset, context_len=ctx, hop=1)
kept = sn.filter_min_exposure(raw, cfg.dataset.min_exposure_s)
print(f"{len(raw)} windows around transitions; {len(kept)} left after the 1 s exposure filter")

exposures = np.array([s.yellow_exposure for s in raw])
print(f"exposure range {exposures.min():.1f}..{exposures.max():.1f} s (windows trailing the transition see more yellow)")

print("\nper-subject behavior statistics (averaged over laps):")
table = sn.subject_behavior_table(dataset)
for sid in sorted(table):
    st = table[sid]
    print(
        f"  subject {sid}: mean {st.mean_speed_yellow:5.2f}  max {st.max_speed_yellow:5.2f}  "
        f"min {st.min_speed_yellow:5.2f}  std {st.std_speed_yellow:4.2f}  (m/s at yellow)"
    )

print("\ndecision targets (non-HMI minus HMI mean yellow speed; deploy when positive):")
for t in sn.decision_targets(dataset):
    print(f"  subject {t.subject_id}: delta {t.delta_speed:+5.2f} m/s -> deploy={t.deploy}")

print("\nfactor matrix batch-normalized for the contrastive loss:")
y = sn.batch_normalize_factors(
    np.stack([d.factors.as_array() for d in cohort]), sim.FACTOR_NAMES
)
print("  column means ~0:", np.round(y.mean(axis=0), 12))
print("  column stds  ~1:", np.round(y.std(axis=0), 12))
