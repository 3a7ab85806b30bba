"""Feature vectors for the per-type surrogates, plus z-score normalization.

Units in feature space: km for semi-major axes, radians for angles, rad/day
for node rates and days for the transfer window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import _kernels as K
from .classify import TransferType
from .orbits import EARTH, PhysicalConstants, j2_rates, propagate_j2, propagate_to

DAY = 86400.0
STD_FLOOR = 1e-12

SHAPE = ("a_c", "a_t", "e_c", "e_t", "i_c", "i_t")
ALL_FEATURES = SHAPE + (
    "dOmega_c0t0",   # initial node difference, departure minus target
    "dOmega_cftf",   # final node difference
    "dOmega_c0tf",   # departure's initial node minus target's final node
    "raan_rate_c",
    "raan_rate_t",
    "dphi_0",        # argument-of-latitude difference at the start
    "dphi_f",        # ... and at the end of the window
    "dT",
)

_NODES = ("dOmega_c0t0", "dOmega_cftf")
_RATES = ("raan_rate_c", "raan_rate_t")
_PHASES = ("dphi_0", "dphi_f")

# ablation groups 1..7 of the feature study, per transfer type
FEATURE_GROUPS = {
    TransferType.CLOSING: {
        1: SHAPE,
        2: SHAPE + ("dOmega_c0t0",),
        3: SHAPE + _NODES,
        4: SHAPE + _NODES + ("dOmega_c0tf",),
        5: SHAPE + _NODES + _RATES,
        6: SHAPE + _NODES + _PHASES,
        7: SHAPE + _NODES + ("dT",),
    },
    TransferType.INTERSECTING: {
        1: SHAPE,
        2: SHAPE + ("dOmega_c0t0",),
        3: SHAPE + _NODES,
        4: SHAPE + ("dOmega_c0t0", "dOmega_c0tf"),
        5: SHAPE + ("dOmega_c0t0",) + _RATES,
        6: SHAPE + ("dOmega_c0t0",) + _PHASES,
        7: SHAPE + ("dOmega_c0t0", "dT"),
    },
    TransferType.SEPARATING: {
        1: SHAPE,
        2: SHAPE + ("dOmega_c0t0",),
        3: SHAPE + _NODES,
        4: SHAPE + _NODES + ("dOmega_c0tf",),
        5: SHAPE + _NODES + ("dOmega_c0tf",) + _RATES,
        6: SHAPE + _NODES + ("dOmega_c0tf",) + _PHASES,
        7: SHAPE + _NODES + ("dOmega_c0tf", "dT"),
    },
}

SELECTED_GROUP = {TransferType.CLOSING: 7, TransferType.INTERSECTING: 1, TransferType.SEPARATING: 7}


@dataclass(frozen=True)
class FeatureSchema:
    type: TransferType
    names: tuple

    def __post_init__(self):
        object.__setattr__(self, "type", TransferType.parse(self.type))
        names = tuple(self.names)
        if not names:
            raise ValueError("a feature schema needs at least one name")
        bad = [n for n in names if n not in ALL_FEATURES]
        if bad:
            raise ValueError(f"unknown feature name(s): {bad}")
        object.__setattr__(self, "names", names)

    @property
    def dimension(self) -> int:
        return len(self.names)

    @classmethod
    def for_type(cls, ttype) -> "FeatureSchema":
        ttype = TransferType.parse(ttype)
        return cls(ttype, FEATURE_GROUPS[ttype][SELECTED_GROUP[ttype]])

    def to_dict(self) -> dict:
        return {"type": self.type.value, "names": list(self.names)}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(d["type"], tuple(d["names"]))


def _pair(sample):
    """(dep, tgt, dt) from a TransferSample or a (dep, tgt, dt) triple."""
    if hasattr(sample, "dep0"):
        return sample.dep0, sample.tgt0, sample.dt_max
    dep, tgt, dt = sample
    return dep, tgt, float(dt)


def feature_table(dep, tgt, dt: float, k: PhysicalConstants = EARTH) -> dict:
    """Every known feature for one transfer, keyed by name."""
    tgt = propagate_to(tgt, dep.epoch, k)
    dep_f = propagate_j2(dep, dt, k)
    tgt_f = propagate_j2(tgt, dt, k)
    rate_c = j2_rates(dep, k)[0]
    rate_t = j2_rates(tgt, k)[0]
    return {
        "a_c": dep.a / 1e3,
        "a_t": tgt.a / 1e3,
        "e_c": dep.e,
        "e_t": tgt.e,
        "i_c": dep.i,
        "i_t": tgt.i,
        "dOmega_c0t0": K.wrap_pi(dep.raan - tgt.raan),
        "dOmega_cftf": K.wrap_pi(dep_f.raan - tgt_f.raan),
        "dOmega_c0tf": K.wrap_pi(dep.raan - tgt_f.raan),
        "raan_rate_c": rate_c * DAY,
        "raan_rate_t": rate_t * DAY,
        "dphi_0": K.wrap_pi(dep.argument_of_latitude - tgt.argument_of_latitude),
        "dphi_f": K.wrap_pi(dep_f.argument_of_latitude - tgt_f.argument_of_latitude),
        "dT": dt / DAY,
    }


def extract_extended(sample, feature_names, k: PhysicalConstants = EARTH) -> np.ndarray:
    """Values of the named features, in the given order."""
    names = tuple(feature_names)
    if not names:
        raise ValueError("feature name list is empty")
    bad = [n for n in names if n not in ALL_FEATURES]
    if bad:
        raise ValueError(f"unknown feature name(s): {bad}")
    table = feature_table(*_pair(sample), k)
    return np.array([table[n] for n in names])


def extract(sample, schema: FeatureSchema, k: PhysicalConstants = EARTH) -> np.ndarray:
    return extract_extended(sample, schema.names, k)


def feature_matrix(samples, names, k: PhysicalConstants = EARTH) -> np.ndarray:
    rows = [extract_extended(s, names, k) for s in samples]
    return np.array(rows).reshape(len(rows), len(tuple(names)))


class FeatureExtractor(TransformerMixin, BaseEstimator):
    """Turns transfer samples into feature rows.

    ``names`` overrides the default schema of ``transfer_type``.
    """

    def __init__(self, transfer_type="closing", names=None, constants=EARTH):
        self.transfer_type = transfer_type
        self.names = names
        self.constants = constants

    @property
    def schema(self) -> FeatureSchema:
        if self.names is None:
            return FeatureSchema.for_type(self.transfer_type)
        return FeatureSchema(self.transfer_type, tuple(self.names))

    def fit(self, samples=None, y=None):
        self.schema_ = self.schema
        self.n_features_out_ = self.schema_.dimension
        return self

    def transform(self, samples):
        schema = getattr(self, "schema_", None) or self.schema
        return feature_matrix(samples, schema.names, self.constants)

    def get_feature_names_out(self, input_features=None):
        return np.array(self.schema.names, dtype=object)


class ZScoreNormalizer(TransformerMixin, BaseEstimator):
    """Per-column z-scores with a floor on the standard deviation."""

    def __init__(self, std_floor=STD_FLOOR):
        self.std_floor = std_floor

    def fit(self, X, y=None):
        X = check_array(X, ensure_2d=False)
        X = X.reshape(len(X), -1)
        if len(X) < 2:
            raise ValueError("normalizer needs at least 2 rows")
        self.mean_ = X.mean(axis=0)
        self.scale_ = np.maximum(X.std(axis=0), self.std_floor)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = np.asarray(X, dtype=float)
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, Z):
        check_is_fitted(self, "mean_")
        return np.asarray(Z, dtype=float) * self.scale_ + self.mean_

    def to_dict(self) -> dict:
        check_is_fitted(self, "mean_")
        return {"mean": self.mean_.tolist(), "std": self.scale_.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ZScoreNormalizer":
        norm = cls()
        norm.mean_ = np.asarray(d["mean"], dtype=float).reshape(-1)
        norm.scale_ = np.asarray(d["std"], dtype=float).reshape(-1)
        if norm.mean_.shape != norm.scale_.shape or np.any(norm.scale_ <= 0):
            raise ValueError("malformed normalizer: mean/std mismatch or non-positive std")
        norm.n_features_in_ = len(norm.mean_)
        return norm


def fit_normalizer(rows) -> ZScoreNormalizer:
    return ZScoreNormalizer().fit(rows)
