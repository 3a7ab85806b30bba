"""Per-leg and cumulative dv estimates along a multi-target rendezvous chain."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from itertools import accumulate
from pathlib import Path

from .classify import TransferType, classify_transfer
from .features import extract
from .mlp import SurrogateModel, load_model
from .optimizer import OptimizerConfig, config_dict, optimize_transfer
from .orbits import EARTH, OrbitalElements, PhysicalConstants, propagate_to


class MissingModelError(KeyError):
    def __str__(self):
        return str(self.args[0])


@dataclass
class ChainLeg:
    """One transfer; elements are brought to ``departure_time`` on construction.

    The duration is stored rather than the rendezvous epoch: the optimizer is
    sensitive to the last bit of the window, and ``rendezvous - departure``
    does not give it back exactly.
    """

    dep: OrbitalElements
    tgt: OrbitalElements
    departure_time: float
    dt: float
    dv_ref: float | None = None  # optimized reference value, when known
    seed: int | None = None

    def __post_init__(self):
        self.departure_time = float(self.departure_time)
        self.dt = float(self.dt)
        if not self.dt > 0:
            raise ValueError("rendezvous must come after departure")
        self.dep = propagate_to(self.dep, self.departure_time)
        self.tgt = propagate_to(self.tgt, self.departure_time)

    @property
    def rendezvous_time(self) -> float:
        return self.departure_time + self.dt

    def to_dict(self) -> dict:
        d = {
            "dep": self.dep.to_dict(),
            "tgt": self.tgt.to_dict(),
            "departure_time_s": self.departure_time,
            "rendezvous_time_s": self.rendezvous_time,
            "dt_s": self.dt,
        }
        if self.dv_ref is not None:
            d["dv_opt_mps"] = self.dv_ref
        if self.seed is not None:
            d["seed"] = self.seed
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ChainLeg":
        """``dt_s`` takes precedence over ``rendezvous_time_s`` when both are given."""
        try:
            ref = d.get("dv_opt_mps")
            t0 = float(d["departure_time_s"])
            dt = float(d["dt_s"]) if "dt_s" in d else float(d["rendezvous_time_s"]) - t0
            return cls(
                OrbitalElements.from_dict(d["dep"]),
                OrbitalElements.from_dict(d["tgt"]),
                t0,
                dt,
                None if ref is None else float(ref),
                None if d.get("seed") is None else int(d["seed"]),
            )
        except KeyError as exc:
            raise ValueError(f"chain leg is missing field {exc.args[0]!r}") from None


@dataclass
class ChainSpec:
    legs: list

    def __post_init__(self):
        self.legs = list(self.legs)
        if not self.legs:
            raise ValueError("a chain needs at least one leg")
        for prev, nxt in zip(self.legs, self.legs[1:]):
            if nxt.departure_time < prev.departure_time:
                raise ValueError("leg departure epochs must be non-decreasing")

    @property
    def has_reference(self) -> bool:
        return all(leg.dv_ref is not None for leg in self.legs)

    def to_list(self) -> list:
        return [leg.to_dict() for leg in self.legs]

    @classmethod
    def from_file(cls, path) -> "ChainSpec":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if isinstance(data, dict):
            data = data.get("legs")
        if not isinstance(data, list):
            raise ValueError(f"{path}: expected a JSON list of legs")
        return cls([ChainLeg.from_dict(d) for d in data])


def chain_from_samples(samples, start: float = 0.0, dwell: float = 0.0) -> ChainSpec:
    """Back-to-back chain of dataset samples, each re-timed to follow the last.

    The secular model is time invariant, so shifting a sample's epoch does
    not change its transfer.
    """
    legs, t = [], float(start)
    for s in samples:
        dep = OrbitalElements(*s.dep0.as_array(), epoch=t)
        tgt = OrbitalElements(*s.tgt0.as_array(), epoch=t)
        legs.append(ChainLeg(dep, tgt, t, s.dt_max, s.dv_opt, s.seed))
        t += s.dt_max + dwell
    return ChainSpec(legs)


def _check_models(models) -> dict:
    out = {}
    for key, model in dict(models).items():
        ttype = TransferType.parse(key)
        if model.type is not ttype:
            raise ValueError(f"model registered for {ttype.value} is a {model.type.value} model")
        out[ttype] = model
    return out


def estimate_leg(dep, tgt, dt: float, models, k: PhysicalConstants = EARTH):
    """(type, dv estimate in m/s) from the surrogate of the classified type."""
    if not dt > 0:
        raise ValueError("transfer time must be positive")
    models = _check_models(models)
    ttype = classify_transfer(dep, tgt, dt, k)
    if ttype not in models:
        raise MissingModelError(f"no surrogate model for {ttype.value} transfers")
    model: SurrogateModel = models[ttype]
    return ttype, model.forward(extract((dep, tgt, dt), model.schema, k))


class SurrogateEstimator:
    def __init__(self, models, k: PhysicalConstants = EARTH):
        self.models = _check_models(models)
        self.k = k

    def __call__(self, leg: ChainLeg):
        return estimate_leg(leg.dep, leg.tgt, leg.dt, self.models, self.k)


class OptimizerEstimator:
    """Runs the optimizer per leg; the leg's own seed wins over ``cfg.seed``."""

    def __init__(self, cfg: OptimizerConfig | None = None, k: PhysicalConstants = EARTH):
        self.cfg = cfg or OptimizerConfig()
        self.k = k

    def __call__(self, leg: ChainLeg):
        cfg = self.cfg
        if leg.seed is not None:
            cfg = OptimizerConfig(**{**config_dict(cfg), "seed": leg.seed})
        sol = optimize_transfer(leg.dep, leg.tgt, leg.dt, cfg, self.k)
        return classify_transfer(leg.dep, leg.tgt, leg.dt, self.k), sol.total_dv


@dataclass
class ChainEstimate:
    types: list
    dv_est: list
    cumulative: list = field(init=False)
    dv_ref: list | None = None

    def __post_init__(self):
        self.cumulative = list(accumulate(self.dv_est))

    @property
    def cum_ref(self):
        return None if self.dv_ref is None else list(accumulate(self.dv_ref))

    @property
    def final_error(self) -> float:
        if self.dv_ref is None:
            raise ValueError("no reference values")
        return self.cumulative[-1] - self.cum_ref[-1]

    @property
    def leg_abs_error_sum(self) -> float:
        if self.dv_ref is None:
            raise ValueError("no reference values")
        return math.fsum(abs(e - r) for e, r in zip(self.dv_est, self.dv_ref))


def estimate_chain(spec: ChainSpec, estimator) -> ChainEstimate:
    """``estimator`` is a per-type model mapping or any callable leg -> (type, dv)."""
    if not callable(estimator):
        estimator = SurrogateEstimator(estimator)
    types, dvs = [], []
    for leg in spec.legs:
        ttype, dv = estimator(leg)
        types.append(TransferType.parse(ttype))
        dvs.append(float(dv))
    ref = [leg.dv_ref for leg in spec.legs] if spec.has_reference else None
    return ChainEstimate(types, dvs, ref)


def load_models(directory, names=("closing", "intersecting", "separating")) -> dict:
    """Models stored as <type>.json in ``directory``; missing files are skipped."""
    models = {}
    for name in names:
        path = Path(directory) / f"{name}.json"
        if path.exists():
            models[TransferType.parse(name)] = load_model(path, name)
    if not models:
        raise FileNotFoundError(f"no model files found in {directory}")
    return models


def chain_csv(est: ChainEstimate, meta: dict | None = None) -> str:
    buf = io.StringIO()
    for key, value in (meta or {}).items():
        buf.write(f"# {key}: {json.dumps(value, sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    header = ["leg_index", "type", "dv_est_mps", "cum_est_mps"]
    if est.dv_ref is not None:
        header += ["dv_opt_mps", "cum_opt_mps"]
    w.writerow(header)
    for j, (t, dv, cum) in enumerate(zip(est.types, est.dv_est, est.cumulative)):
        row = [j, t.value, repr(dv), repr(cum)]
        if est.dv_ref is not None:
            row += [repr(est.dv_ref[j]), repr(est.cum_ref[j])]
        w.writerow(row)
    return buf.getvalue()
