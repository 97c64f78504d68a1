"""
Balancing a manifest and splitting by video
===========================================

Celeb-DF ships 590 real and 5,639 fake videos. We draw 590 fakes at random,
then cut each class into train, validation and test by video, never by frame,
so no identity leaks into the blind test set.
"""

from pathlib import Path

from dfdetect.catalog import Catalog, Label, Partition, VideoRecord, balance_classes, split_videos

# A Celeb-DF shaped catalog; the paths are placeholders, nothing is opened here.
records = [VideoRecord(f"real{i:04d}", Label.REAL, Path(f"real/{i}.mp4")) for i in range(590)]
records += [VideoRecord(f"fake{i:04d}", Label.FAKE, Path(f"fake/{i}.mp4")) for i in range(5639)]
catalog = Catalog(tuple(records))
print(catalog.class_counts)

balanced = balance_classes(catalog, seed=0)
print(balanced.class_counts)

# With val_fraction=0 we get the two-way 472 / 118 table per class.
plan = split_videos(balanced, test_fraction=0.2, val_fraction=0.0, seed=0)
print(plan.counts_table())

# The default carves a validation slice out of the 472 training videos.
plan = split_videos(balanced, seed=0)
print(plan.counts_table())

test = set(plan.video_ids(Partition.TEST))
seen = set(plan.video_ids(Partition.TRAIN)) | set(plan.video_ids(Partition.VAL))
print("test videos also used for fitting:", len(test & seen))

# Same seed, same plan, byte for byte.
assert split_videos(balance_classes(catalog, 0), seed=0).to_json() == plan.to_json()
