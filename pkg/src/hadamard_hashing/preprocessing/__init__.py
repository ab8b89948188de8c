from .dataset import (
    FeatureSet,
    LabelSet,
    Split,
    check_pairing,
    load_features,
    load_labels,
    load_split,
    make_synthetic_blobs,
    save_features,
    save_labels,
    save_split,
    split_protocol,
    standardize,
)
