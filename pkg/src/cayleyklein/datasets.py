"""Datasets shipped with the package.

``wine`` is the UCI wine recognition data (178 samples, 13 features, three
cultivars).  ``balance`` is the UCI balance-scale data, which is generated by
a rule: each of the 625 combinations of left weight, left distance, right
weight and right distance in 1..5 is labelled by comparing the two torques.
Both files keep the class label in the last column and have no header.
"""

from importlib import resources

from .dataio import DatasetSchema, load_dataset

BUNDLED = ("wine", "balance")


def bundled_path(name):
    if name not in BUNDLED:
        raise KeyError(f"unknown bundled dataset {name!r}; choose from {BUNDLED}")
    return resources.files(__package__) / "data" / f"{name}.csv"


def load_bundled(name, standardize=False):
    with resources.as_file(bundled_path(name)) as path:
        return load_dataset(path, DatasetSchema(has_header=False, standardize=standardize))
