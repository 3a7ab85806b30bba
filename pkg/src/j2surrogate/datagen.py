"""Labeled transfer samples for the three node-drift families.

Each generator draws a body pair and a transfer window so that the pair is
closing, intersecting or separating by construction; every sample is then
labeled with the optimized total dv and appended to a JSON Lines file.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .classify import TransferType, classify_transfer
from .optimizer import InfeasibleTransferError, OptimizerConfig, config_dict, optimize_transfer
from .orbits import EARTH, OrbitalElements, PhysicalConstants, j2_rates, propagate_j2

log = logging.getLogger(__name__)

DAY = 86400.0
SEED_STRIDE = 1_000_000
ALGORITHM = {TransferType.CLOSING: 1, TransferType.INTERSECTING: 2, TransferType.SEPARATING: 3}
RECORD_FIELDS = ("type", "dep0", "tgt0", "dt_max_s", "dv_mps", "seed", "restarts", "alg")
_MAX_DRAWS = 1000


def _default_ranges():
    d = math.radians
    return {
        "a": (6900e3, 7300e3),
        "e": (0.0, 0.02),
        "i": (d(96.0), d(101.0)),
        "raan": (0.0, 2 * math.pi),
        "argp": (0.0, 2 * math.pi),
        "true_anomaly": (0.0, 2 * math.pi),
    }


@dataclass
class GenerationConfig:
    """Sampling ranges (SI units, radians) and run settings.

    The transfer window of each sample is drawn uniformly in
    [dt_min, dt_max].
    """

    element_ranges: dict = field(default_factory=_default_ranges)
    dt_max: float = 30 * DAY
    dt_min: float = 1 * DAY
    d1: float = math.radians(10.0)
    d2: float = math.radians(10.0)
    samples_per_type: int = 100
    restarts_per_sample: int = 20
    seed: int = 0

    def __post_init__(self):
        ranges = _default_ranges()
        ranges.update({k: tuple(float(x) for x in v) for k, v in self.element_ranges.items()})
        unknown = set(ranges) - set(_default_ranges())
        if unknown:
            raise ValueError(f"unknown element range(s): {sorted(unknown)}")
        for name, (lo, hi) in ranges.items():
            if not lo <= hi:
                raise ValueError(f"empty range for {name}: [{lo}, {hi}]")
        if ranges["a"][0] <= 0 or ranges["e"][0] < 0 or ranges["e"][1] >= 1:
            raise ValueError("ranges must describe elliptic orbits")
        if ranges["i"][0] < 0 or ranges["i"][1] > math.pi:
            raise ValueError("inclination range must lie in [0, pi]")
        self.element_ranges = ranges
        for name in ("d1", "d2"):
            if not 0 < getattr(self, name) < math.pi:
                raise ValueError(f"{name} must lie in (0, pi)")
        if not 0 < self.dt_min <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_max")
        if self.samples_per_type < 1 or self.restarts_per_sample < 1:
            raise ValueError("sample and restart counts must be at least 1")

    @classmethod
    def from_file(cls, path, **overrides) -> "GenerationConfig":
        """Read a JSON file of ranges in mission units.

        Recognized keys: a_km, e, i_deg, raan_deg, argp_deg, f_deg (each a
        [min, max] pair), dt_min_days, dt_max_days, d1_deg, d2_deg.
        """
        raw = json.loads(Path(path).read_text())
        scale = {"a_km": ("a", 1e3), "e": ("e", 1.0), "i_deg": ("i", math.pi / 180),
                 "raan_deg": ("raan", math.pi / 180), "argp_deg": ("argp", math.pi / 180),
                 "f_deg": ("true_anomaly", math.pi / 180)}
        ranges, kw = {}, {}
        for key, value in raw.items():
            if key in scale:
                name, s = scale[key]
                lo, hi = value
                ranges[name] = (lo * s, hi * s)
            elif key in ("dt_min_days", "dt_max_days"):
                kw[key[:-5]] = float(value) * DAY
            elif key in ("d1_deg", "d2_deg"):
                kw[key[:2]] = math.radians(float(value))
            else:
                raise ValueError(f"{path}: unknown key {key!r}")
        kw.update(overrides)
        return cls(element_ranges=ranges, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["element_ranges"] = {k: list(v) for k, v in self.element_ranges.items()}
        return d


@dataclass
class TransferSample:
    dep0: OrbitalElements
    tgt0: OrbitalElements
    dt_max: float
    type: TransferType
    dv_opt: float
    seed: int
    restarts: int
    alg: int

    def __post_init__(self):
        self.type = TransferType.parse(self.type)
        if not self.dv_opt > 0:
            raise ValueError(f"optimized dv must be positive, got {self.dv_opt}")
        if not self.dt_max > 0:
            raise ValueError("transfer window must be positive")

    def to_record(self) -> dict:
        return {
            "type": self.type.value,
            "dep0": self.dep0.to_dict(),
            "tgt0": self.tgt0.to_dict(),
            "dt_max_s": self.dt_max,
            "dv_mps": self.dv_opt,
            "seed": self.seed,
            "restarts": self.restarts,
            "alg": self.alg,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "TransferSample":
        missing = [f for f in RECORD_FIELDS if f not in rec]
        if missing:
            raise ValueError(f"record is missing field(s) {missing}")
        return cls(
            OrbitalElements.from_dict(rec["dep0"]),
            OrbitalElements.from_dict(rec["tgt0"]),
            float(rec["dt_max_s"]),
            TransferType.parse(rec["type"]),
            float(rec["dv_mps"]),
            int(rec["seed"]),
            int(rec["restarts"]),
            int(rec["alg"]),
        )


def _draw_elements(ranges, rng, epoch=0.0) -> OrbitalElements:
    v = {k: rng.uniform(lo, hi) for k, (lo, hi) in ranges.items()}
    return OrbitalElements.from_true_anomaly(
        v["a"], v["e"], v["i"], v["raan"], v["argp"], v["true_anomaly"], epoch
    )


def _draw_window(cfg: GenerationConfig, rng) -> float:
    return float(rng.uniform(cfg.dt_min, cfg.dt_max))


def _open_interval(upper: float, rng) -> float:
    # uniform on (0, upper]
    return upper * (1.0 - rng.random())


def _with_raan(el: OrbitalElements, raan: float) -> OrbitalElements:
    return OrbitalElements(el.a, el.e, el.i, raan, el.argp, el.mean_anomaly, el.epoch)


def gen_closing(cfg: GenerationConfig, rng, k: PhysicalConstants = EARTH):
    """Draw end-of-window states with a small node gap that the drift closes."""
    dt = _draw_window(cfg, rng)
    cf = _draw_elements(cfg.element_ranges, rng, epoch=dt)
    tf = _draw_elements(cfg.element_ranges, rng, epoch=dt)
    gap = _open_interval(cfg.d1, rng)
    if j2_rates(cf, k)[0] < j2_rates(tf, k)[0]:
        tf = _with_raan(tf, cf.raan - gap)
    else:
        tf = _with_raan(tf, cf.raan + gap)
    return propagate_j2(cf, -dt, k), propagate_j2(tf, -dt, k), dt


def gen_intersecting(cfg: GenerationConfig, rng, k: PhysicalConstants = EARTH):
    """Draw states at the node crossing, placed inside the window."""
    dt_max = _draw_window(cfg, rng)
    t_cross = _open_interval(dt_max, rng)
    cm = _draw_elements(cfg.element_ranges, rng, epoch=t_cross)
    tm = _with_raan(_draw_elements(cfg.element_ranges, rng, epoch=t_cross), cm.raan)
    return propagate_j2(cm, -t_cross, k), propagate_j2(tm, -t_cross, k), dt_max


def gen_separating(cfg: GenerationConfig, rng, k: PhysicalConstants = EARTH):
    """Draw initial states with a small node gap that the drift widens."""
    dt = _draw_window(cfg, rng)
    c0 = _draw_elements(cfg.element_ranges, rng)
    t0 = _draw_elements(cfg.element_ranges, rng)
    gap = _open_interval(cfg.d2, rng)
    if j2_rates(c0, k)[0] < j2_rates(t0, k)[0]:
        t0 = _with_raan(t0, c0.raan + gap)
    else:
        t0 = _with_raan(t0, c0.raan - gap)
    return c0, t0, dt


GENERATORS = {
    TransferType.CLOSING: gen_closing,
    TransferType.INTERSECTING: gen_intersecting,
    TransferType.SEPARATING: gen_separating,
}


def sample_seed(base: int, index: int) -> int:
    return int(base) * SEED_STRIDE + int(index)


def draw_pair(ttype, cfg: GenerationConfig, seed: int, k: PhysicalConstants = EARTH):
    """Body pair and window for one sample seed, redrawn until it classifies as ``ttype``.

    With the default ranges the drift never wraps the node difference, so
    the first draw is always kept; the loop only guards custom ranges.
    """
    ttype = TransferType.parse(ttype)
    rng = np.random.default_rng([ALGORITHM[ttype], int(seed)])
    for _ in range(_MAX_DRAWS):
        dep, tgt, dt = GENERATORS[ttype](cfg, rng, k)
        if classify_transfer(dep, tgt, dt, k) is ttype:
            return dep, tgt, dt
    raise RuntimeError(f"no {ttype.value} pair found in {_MAX_DRAWS} draws; check the ranges")


def label_sample(ttype, cfg: GenerationConfig, seed: int, opt: OptimizerConfig | None = None,
                 k: PhysicalConstants = EARTH) -> TransferSample | None:
    """Draw and optimize one sample; ``None`` when every restart is infeasible."""
    ttype = TransferType.parse(ttype)
    dep, tgt, dt = draw_pair(ttype, cfg, seed, k)
    opt = opt or OptimizerConfig()
    run = OptimizerConfig(**{**config_dict(opt), "restarts": cfg.restarts_per_sample, "seed": int(seed)})
    try:
        best = optimize_transfer(dep, tgt, dt, run, k)
    except InfeasibleTransferError as exc:
        log.warning("sample seed %d skipped: %s", seed, exc)
        return None
    return TransferSample(dep, tgt, dt, ttype, best.total_dv, int(seed), run.restarts, ALGORITHM[ttype])


def _dumps(rec: dict) -> str:
    return json.dumps(rec, separators=(", ", ": "))


def _meta(ttype, cfg, opt, k) -> dict:
    gen = cfg.to_dict()
    del gen["samples_per_type"]  # the quota may grow between resumed runs
    return {
        "type": ttype.value,
        "alg": ALGORITHM[ttype],
        "generation": gen,
        "optimizer": {kk: v for kk, v in config_dict(opt).items() if kk not in ("restarts", "seed")},
        "constants": asdict(k),
    }


def _resume_point(path: Path, base: int) -> tuple[int, int]:
    """(records kept, next sample index); drops a torn last line."""
    if not path.exists():
        return 0, 0
    data = path.read_bytes()
    if data and not data.endswith(b"\n"):
        data = data[: data.rfind(b"\n") + 1]
        path.write_bytes(data)
    lines = data.decode().splitlines()
    if not lines:
        return 0, 0
    last = json.loads(lines[-1])
    return len(lines), int(last["seed"]) - base * SEED_STRIDE + 1


def build_dataset(
    ttype,
    cfg: GenerationConfig,
    out_path,
    opt: OptimizerConfig | None = None,
    k: PhysicalConstants = EARTH,
    jobs: int = 1,
) -> int:
    """Append labeled samples to ``out_path`` until it holds ``cfg.samples_per_type``.

    Resumable: existing lines count toward the quota and generation picks
    up at the sample index after the last stored seed. A ``.meta.json``
    sidecar records the settings; resuming with different settings is an
    error. Returns the number of records written by this call.
    """
    ttype = TransferType.parse(ttype)
    opt = opt or OptimizerConfig()
    path = Path(out_path)
    meta_path = path.with_name(path.name + ".meta.json")
    meta = _meta(ttype, cfg, opt, k)
    if meta_path.exists() and path.exists():
        old = json.loads(meta_path.read_text())
        if old != json.loads(json.dumps(meta)):
            raise ValueError(f"{path} was generated with different settings (see {meta_path})")
    path.parent.mkdir(parents=True, exist_ok=True)
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    have, index = _resume_point(path, cfg.seed)
    written = 0
    t0 = time.perf_counter()
    with open(path, "a", encoding="utf-8", newline="\n") as fh:
        for s in _labelled(ttype, cfg, opt, k, index, cfg.samples_per_type - have, jobs):
            fh.write(_dumps(s.to_record()) + "\n")
            fh.flush()
            written += 1
            if written % 50 == 0:
                rate = (time.perf_counter() - t0) / written
                log.info("%s: %d/%d samples (%.2f s/sample)", ttype.value, have + written,
                         cfg.samples_per_type, rate)
    return written


def _label_task(args):
    ttype, cfg, seed, opt, k = args
    return label_sample(ttype, cfg, seed, opt, k)


def _labelled(ttype, cfg, opt, k, index, needed, jobs):
    """Yield ``needed`` samples in seed order, skipping infeasible ones."""
    if needed <= 0:
        return
    if jobs <= 1:
        while needed > 0:
            s = label_sample(ttype, cfg, sample_seed(cfg.seed, index), opt, k)
            index += 1
            if s is not None:
                needed -= 1
                yield s
        return
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        while needed > 0:
            batch = [(ttype, cfg, sample_seed(cfg.seed, index + j), opt, k) for j in range(needed)]
            index += needed
            for s in pool.map(_label_task, batch):
                if s is not None and needed > 0:
                    needed -= 1
                    yield s


def load_dataset(path, ttype=None) -> list[TransferSample]:
    """Read a JSON Lines dataset, optionally keeping one transfer type."""
    want = TransferType.parse(ttype) if ttype is not None else None
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                s = TransferSample.from_record(json.loads(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if want is None or s.type is want:
                out.append(s)
    return out


def default_jobs() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)
