"""
Extrapolating detector rates from a labeled sample.

When only a few hundred records from each partition of a large log can be
labeled by hand, confusion rates for the full log are estimated by scaling
each partition's labeled outlier fraction up to its size.  The figures below
are shaped like a city-scale taxi study: four partitions of 143.5M trips,
flagged by one filter (or not), with a labeled sample from each.
"""

from robust_filter.metrics import LabeledSet, estimate_population

TRIPS = 143_540_889

# name, share of trips (%), labeled, fraction outliers in the labeled sample, flagged
partitions = [
    ("both flag",      0.02,  100, 0.96, True),
    ("ours only",      0.56,  300, 0.92, True),
    ("baseline only",  0.04,  100, 0.83, False),
    ("neither",       99.38,  500, 0.0043, False),
]

sets = [LabeledSet(u=share / 100 * TRIPS, v=v, phi=phi, flagged=flagged, name=name)
        for name, share, v, phi, flagged in partitions]
est = estimate_population(sets)

# %%
for s, n_out in zip(sets, est.per_set):
    print(f"{s.name:>14s}: {s.u:13,.0f} trips, ~{n_out:11,.0f} outliers")

print("rates on the whole log:")
for k, v in est.on_all.items():
    print(f"  {k:9s} {v:.4f}")
print("rates on the labeled sample alone:")
for k, v in est.on_labeled.items():
    print(f"  {k:9s} {v:.4f}")
