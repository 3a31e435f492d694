# %% [markdown]
# # From GPS labels to frame labels
#
# GPS arrives at 1 Hz, video at many frames per second. Frame labels are
# interpolated between the two surrounding fixes. A class change happens at the
# midpoint, and every frame between two fixes of different classes carries half
# the confidence.

# %%
from cyclelane import frames
from cyclelane.matching import GpsPoint, LabeledCoordinate
from cyclelane.taxonomy import SubClass

coords = [
    LabeledCoordinate(GpsPoint(10.0, 0, 0), SubClass.PAINTED_BIKE_LANE, 1.0),
    LabeledCoordinate(GpsPoint(12.0, 0, 0), SubClass.PROTECTED_BIKE_LANE, 1.0),
    LabeledCoordinate(GpsPoint(14.0, 0, 0), SubClass.PROTECTED_BIKE_LANE, 0.6),
]
stamps = [frames.FrameStamp(i, 9.5 + 0.25 * i) for i in range(22)]
labels = frames.label_frames(coords, stamps)
for st, lab in zip(stamps, labels):
    name = lab.sub_class.label if lab.sub_class else "-"
    print(f"{st.timestamp:6.2f}  {name:22s} {lab.confidence:.3f}")

# %% [markdown]
# Manual corrections replace a frame range outright. Corrected frames are
# trusted fully.

# %%
fixed = frames.apply_overrides(labels, [frames.Override(4, 7, SubClass.SHARROW)])
print([(f.frame_index, f.sub_class.label, f.confidence, f.source) for f in fixed[3:9]])
