"""Command-line entry point: ``j2surrogate <command> [flags]``.

Every output file carries the command, its flags and the package version so
it can be regenerated exactly. Failures print one ``error: <Kind>: <message>``
line to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .chain import ChainSpec, OptimizerEstimator, chain_csv, estimate_chain, load_models
from .classify import TransferType, classify_transfer, node_differences
from .datagen import GenerationConfig, build_dataset, load_dataset
from .features import FEATURE_GROUPS
from .lambert import solve_lambert
from .mlp import TrainConfig, evaluate_mre, load_model, save_model, train
from .optimizer import InfeasibleTransferError, OptimizerConfig, config_dict, optimize_transfer
from .orbits import (EARTH, OrbitalElements, PhysicalConstants, elements_to_cartesian, j2_rates,
                     propagate_j2)

DAY = 86400.0
SWEEP_OFFSETS = tuple(range(-4, 5))
SWEEP_DAYS = (1, 2, 3, 4, 5, 7, 10, 14, 20, 25, 30)

log = logging.getLogger("j2surrogate")


class CliError(Exception):
    def __init__(self, message, kind="InputError"):
        super().__init__(message)
        self.kind = kind


class _Parser(argparse.ArgumentParser):
    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        # let "-4,-3" pass as a value, not only "-4"
        self._negative_number_matcher = re.compile(r"^-\d[\d.eE+\-]*(,[\d.eE+\-]*)*$")

    def error(self, message):
        raise CliError(f"{self.prog}: {message}", "UsageError")


def reference_pair() -> tuple[OrbitalElements, OrbitalElements]:
    """Departure body and target used for the characteristic sweep (epoch 0)."""
    dep = OrbitalElements.from_degrees(7142116.504, 0.006172, 98.581, 96.0, 257.367, 135.368)
    tgt = OrbitalElements.from_degrees(7052562.111, 0.007721, 97.203, 100.0, 13.265, 311.656)
    return dep, tgt


# ---------------------------------------------------------------- helpers

def _read_elements(path) -> OrbitalElements:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CliError(f"no such file: {path}") from None
    if not isinstance(data, dict):
        raise CliError(f"{path}: expected a single JSON object of elements")
    return OrbitalElements.from_dict(data)


def _pair(args):
    if (args.dep is None) != (args.tgt is None):
        raise CliError("--dep and --tgt must be given together")
    if args.dep is None:
        return reference_pair()
    return _read_elements(args.dep), _read_elements(args.tgt)


def _positive(kind):
    def parse(text):
        value = kind(text)
        if not value > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return value
    return parse


def _float_list(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated number list: {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("list is empty")
    return values


def _int_list(text):
    return [int(v) for v in _float_list(text)]


def _meta(args) -> dict:
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")}
    return {"command": args.command, "flags": flags, "version": __version__}


def _write_text(path, text: str):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_json(path, obj):
    _write_text(path, json.dumps(obj, indent=2) + "\n")


def _csv_text(meta: dict, header, rows) -> str:
    buf = io.StringIO()
    for key, value in meta.items():
        buf.write(f"# {key}: {json.dumps(value, sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _optimizer_cfg(args, **over) -> OptimizerConfig:
    base = OptimizerConfig()
    if getattr(args, "optimizer_config", None):
        base = OptimizerConfig(**json.loads(Path(args.optimizer_config).read_text()))
    return OptimizerConfig(**{**config_dict(base), **over})


# ---------------------------------------------------------------- commands

def cmd_propagate(args, k):
    el = _read_elements(args.elements)
    out = propagate_j2(el, args.dt_days * DAY, k)
    s = elements_to_cartesian(out, k)
    doc = {"meta": _meta(args), "elements": out.to_dict(), "r_m": s.r.tolist(), "v_mps": s.v.tolist()}
    if args.out:
        _write_json(args.out, doc)
    print(json.dumps({"elements": doc["elements"], "r_m": doc["r_m"], "v_mps": doc["v_mps"]}))


def cmd_lambert(args, k):
    sol = solve_lambert(args.r1, args.r2, args.tof, k.mu, args.long_way)
    doc = {"v1_mps": sol.v1.tolist(), "v2_mps": sol.v2.tolist(), "iterations": sol.iterations}
    if args.out:
        _write_json(args.out, {"meta": _meta(args), **doc})
    print(json.dumps(doc))


def cmd_classify(args, k):
    dep, tgt = _pair(args)
    dt = args.dt_days * DAY
    ttype = classify_transfer(dep, tgt, dt, k)
    d0, df, _ = node_differences(dep, tgt, dt, k)
    print(f"{ttype.value} delta0_deg={math.degrees(d0):.6f} deltaf_deg={math.degrees(df):.6f}")


def cmd_optimize(args, k):
    dep, tgt = _pair(args)
    cfg = _optimizer_cfg(args, restarts=args.restarts, seed=args.seed)
    dt = args.dt_max_days * DAY
    sol = optimize_transfer(dep, tgt, dt, cfg, k)
    doc = {"meta": _meta(args), "config": config_dict(cfg), "constants": vars_k(k),
           "type": classify_transfer(dep, tgt, dt, k).value, **sol.to_dict()}
    if args.out:
        _write_json(args.out, doc)
    print(f"total_dv_mps={sol.total_dv!r} pos_residual_m={sol.pos_residual:.3e} "
          f"vel_residual_mps={sol.vel_residual:.3e}")


def vars_k(k: PhysicalConstants) -> dict:
    return {"mu": k.mu, "j2": k.j2, "re": k.re}


def cmd_gen_dataset(args, k):
    over = {"samples_per_type": args.count, "seed": args.seed}
    if args.restarts is not None:
        over["restarts_per_sample"] = args.restarts
    cfg = GenerationConfig.from_file(args.config, **over) if args.config else GenerationConfig(**over)
    written = build_dataset(args.type, cfg, args.out, _optimizer_cfg(args), k, jobs=args.jobs)
    print(f"wrote {written} sample(s) to {args.out}")


def _train_cfg(args) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, seed=args.seed, patience=args.patience)


def _load_rows(path, ttype, limit=None):
    try:
        rows = load_dataset(path, ttype)
    except FileNotFoundError:
        raise CliError(f"no such file: {path}") from None
    return rows[:limit] if limit else rows


def cmd_train(args, k):
    ttype = TransferType.parse(args.type)
    rows = _load_rows(args.data, ttype, args.limit)
    names = args.features.split(",") if args.features else None
    if args.scale_sweep:
        return _scale_sweep(args, ttype, rows, names)
    model, history = train(rows, ttype, _train_cfg(args), hidden=args.hidden, names=names)
    save_model(model, args.out)
    if args.history:
        _write_text(args.history, _csv_text(
            {"meta": _meta(args)}, ["epoch", "train_loss", "val_loss", "val_mre"],
            [(h.epoch, h.train_loss, h.val_loss, h.val_mre) for h in history]))
    best = history[model.regressor.best_epoch_ - 1]
    print(f"trained {ttype.value} model {list(model.layer_sizes)} on {len(rows)} rows: "
          f"best epoch {best.epoch}, validation MRE {best.val_mre:.4f}")


def _scale_sweep(args, ttype, rows, names):
    test = _load_rows(args.test, ttype) if args.test else None
    out = []
    for layers in (2, 3, 4):
        for width in range(10, 101, 10):
            model, history = train(rows, ttype, _train_cfg(args), hidden=[width] * layers, names=names)
            val = history[model.regressor.best_epoch_ - 1].val_mre
            test_mre = evaluate_mre(model, test) if test else ""
            out.append((layers, width, val, test_mre))
            print(f"layers={layers} width={width} val_mre={val:.4f}")
    _write_text(args.out, _csv_text({"meta": _meta(args)},
                                    ["hidden_layers", "width", "val_mre", "test_mre"], out))


def cmd_evaluate(args, k):
    model = load_model(args.model)
    rows = _load_rows(args.data, model.type)
    if not rows:
        raise CliError(f"{args.data} holds no {model.type.value} rows")
    value = evaluate_mre(model, rows)
    if args.out:
        est = model.predict_samples(rows)
        _write_text(args.out, _csv_text({"meta": _meta(args), "mre": value},
                                        ["row", "seed", "dv_opt_mps", "dv_est_mps"],
                                        [(j, s.seed, s.dv_opt, float(e)) for j, (s, e) in enumerate(zip(rows, est))]))
    print(f"type={model.type.value} rows={len(rows)} mre={value:.6f}")


def cmd_eval_chain(args, k):
    spec = ChainSpec.from_file(args.chain)
    if args.oracle:
        estimator = OptimizerEstimator(_optimizer_cfg(args, restarts=args.restarts, seed=args.seed), k)
    elif args.models:
        estimator = load_models(args.models)
    else:
        raise CliError("give --models DIR or --oracle")
    est = estimate_chain(spec, estimator)
    _write_text(args.out, chain_csv(est, {"meta": _meta(args)}))
    line = f"legs={len(spec.legs)} cum_est_mps={est.cumulative[-1]!r}"
    if est.dv_ref is not None:
        line += f" final_error_mps={est.final_error!r}"
    print(line)


def sweep_cells(dep, tgt, offsets_deg, dt_days, k: PhysicalConstants = EARTH):
    """Body pairs re-phased to each node offset, crossed with the window grid.

    Both bodies are flown forward along their secular drift until the node
    difference equals the offset, so every family keeps the same shapes.
    Yields (offset_deg, dt_days, dep, tgt, catchup_days).
    """
    d0 = math.remainder(dep.raan - tgt.raan, 2 * math.pi)
    rate = j2_rates(dep, k)[0] - j2_rates(tgt, k)[0]
    if rate == 0:
        raise CliError("the two bodies have equal node rates; offsets cannot be reached by drift")
    for off in offsets_deg:
        tau = (math.radians(off) - d0) / rate
        a, b = propagate_j2(dep, tau, k), propagate_j2(tgt, tau, k)
        catchup = -math.radians(off) / rate / DAY
        for days in dt_days:
            yield off, days, a, b, catchup


def _sweep_task(task):
    off, days, dep, tgt, catchup, cfg, k = task
    dt = days * DAY
    ttype = classify_transfer(dep, tgt, dt, k).value
    try:
        dv = optimize_transfer(dep, tgt, dt, cfg, k).total_dv
    except InfeasibleTransferError:
        dv = math.nan
    return (float(off), float(days), ttype, dv, cfg.restarts, catchup)


def cmd_sweep(args, k):
    dep, tgt = _pair(args)
    cfg = _optimizer_cfg(args, restarts=args.restarts, seed=args.seed)
    tasks = [(*cell, cfg, k) for cell in sweep_cells(dep, tgt, args.offsets_deg, args.dt_days, k)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_sweep_task, tasks))
    else:
        rows = [_sweep_task(t) for t in tasks]
    _write_text(args.out, _csv_text({"meta": _meta(args), "optimizer": config_dict(cfg)},
                                    ["offset_deg", "dt_days", "type", "dv_mps", "restarts", "catchup_days"],
                                    rows))
    print(f"wrote {len(rows)} cell(s) to {args.out}")


def cmd_feature_study(args, k):
    ttype = TransferType.parse(args.type)
    rows = _load_rows(args.data, ttype, args.limit)
    test = _load_rows(args.test, ttype)
    out = []
    for g in args.groups:
        if g not in FEATURE_GROUPS[ttype]:
            raise CliError(f"no feature group {g} for {ttype.value}")
        names = FEATURE_GROUPS[ttype][g]
        model, _ = train(rows, ttype, _train_cfg(args), hidden=args.hidden, names=names)
        value = evaluate_mre(model, test)
        out.append((g, len(names), " ".join(names), value))
        print(f"group={g} features={len(names)} mre={value:.4f}")
    _write_text(args.out, _csv_text({"meta": _meta(args)}, ["group", "n_features", "features", "test_mre"], out))


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="j2surrogate", description=__doc__.splitlines()[0])
    p.add_argument("--constants", help="file of mu/j2/re values (key = value lines)")
    p.add_argument("--jobs", type=_positive(int), default=1, help="worker processes (default 1)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def pair(sp):
        sp.add_argument("--dep", help="departure elements JSON (default: built-in reference pair)")
        sp.add_argument("--tgt", help="target elements JSON (default: built-in reference pair)")

    def opt(sp):
        sp.add_argument("--optimizer-config", help="JSON object of optimizer settings")

    def training(sp):
        sp.add_argument("--epochs", type=_positive(int), default=2000)
        sp.add_argument("--patience", type=_positive(int), default=50)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--hidden", type=_int_list, help="hidden widths, e.g. 60,60,60 (default per type)")

    sp = sub.add_parser("propagate", help="advance elements under secular J2")
    sp.add_argument("--elements", required=True)
    sp.add_argument("--dt-days", type=float, required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_propagate)

    sp = sub.add_parser("lambert", help="solve a single-revolution two-body Lambert arc")
    sp.add_argument("--r1", type=float, nargs=3, required=True, metavar=("X", "Y", "Z"))
    sp.add_argument("--r2", type=float, nargs=3, required=True, metavar=("X", "Y", "Z"))
    sp.add_argument("--tof", type=_positive(float), required=True, help="time of flight, s")
    sp.add_argument("--long-way", action="store_true")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_lambert)

    sp = sub.add_parser("classify", help="transfer type and node differences in degrees")
    pair(sp)
    sp.add_argument("--dt-days", type=_positive(float), required=True)
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("optimize", help="optimize one perturbed transfer")
    pair(sp)
    opt(sp)
    sp.add_argument("--dt-max-days", type=_positive(float), required=True)
    sp.add_argument("--restarts", type=_positive(int), default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("gen-dataset", help="generate and label samples of one type (resumable)")
    opt(sp)
    sp.add_argument("--type", required=True, choices=[t.value for t in TransferType])
    sp.add_argument("--count", type=_positive(int), required=True)
    sp.add_argument("--restarts", type=_positive(int))
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--config", help="JSON overrides of the generation ranges")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen_dataset)

    sp = sub.add_parser("train", help="train one surrogate")
    training(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--type", required=True, choices=[t.value for t in TransferType])
    sp.add_argument("--limit", type=_positive(int), help="use only the first N rows")
    sp.add_argument("--features", help="comma-separated feature names (default per type)")
    sp.add_argument("--history", help="write per-epoch losses to this CSV")
    sp.add_argument("--scale-sweep", action="store_true",
                    help="train 2-4 hidden layers x widths 10-100 and write a CSV to --out")
    sp.add_argument("--test", help="held-out data for the scale sweep")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="mean relative error of a model on a data file")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", help="per-row estimates CSV")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("eval-chain", help="per-leg and cumulative estimates for a chain")
    opt(sp)
    sp.add_argument("--chain", required=True)
    sp.add_argument("--models", help="directory with closing/intersecting/separating .json")
    sp.add_argument("--oracle", action="store_true", help="run the optimizer on every leg instead")
    sp.add_argument("--restarts", type=_positive(int), default=20)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_eval_chain)

    sp = sub.add_parser("sweep", help="optimized dv over node offsets x transfer windows")
    pair(sp)
    opt(sp)
    sp.add_argument("--offsets-deg", type=_float_list, default=list(SWEEP_OFFSETS))
    sp.add_argument("--dt-days", type=_float_list, default=list(SWEEP_DAYS))
    sp.add_argument("--restarts", type=_positive(int), default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("feature-study", help="test MRE of every feature group of one type")
    training(sp)
    sp.add_argument("--type", required=True, choices=[t.value for t in TransferType])
    sp.add_argument("--data", required=True)
    sp.add_argument("--test", required=True)
    sp.add_argument("--limit", type=_positive(int))
    sp.add_argument("--groups", type=_int_list, default=[1, 2, 3, 4, 5, 6, 7])
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_feature_study)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
        k = PhysicalConstants.from_file(args.constants) if args.constants else EARTH
        args.func(args, k)
    except CliError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, RuntimeError, ArithmeticError) as exc:
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
