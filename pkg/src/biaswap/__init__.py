"""biaswap: unsupervised dataset-bias mitigation via bias-swapped augmentation."""

__version__ = "0.1.0"
