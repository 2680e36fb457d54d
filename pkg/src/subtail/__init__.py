"""Sub-clustering contrastive learning with inter-class-distance loss
reweighting for long-tailed classification on vector-feature datasets."""

__version__ = "0.1.0"
