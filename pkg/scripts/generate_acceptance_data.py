"""Build the datasets used by the desk-scale surrogate acceptance check.

Writes data/acceptance/<type>_test.jsonl (500 per type, seed base 2) and
<type>_train.jsonl (grown to 2000, then 4000 per type, seed base 1).
Resumable: rerun after an interruption and it continues where it stopped.
"""

from __future__ import annotations

import logging
import sys
import warnings
from pathlib import Path

from j2surrogate.classify import TransferType
from j2surrogate.datagen import GenerationConfig, build_dataset

ROOT = Path(__file__).resolve().parents[1] / "data" / "acceptance"
TEST_SIZE = 500
TRAIN_STEPS = (2000, 4000)
RESTARTS = 20


def main():
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s", stream=sys.stdout)
    warnings.filterwarnings("ignore", category=RuntimeWarning)
    plan = [(t, "test", 2, TEST_SIZE) for t in TransferType]
    plan += [(t, "train", 1, n) for n in TRAIN_STEPS for t in TransferType]
    for ttype, split, base, quota in plan:
        cfg = GenerationConfig(samples_per_type=quota, restarts_per_sample=RESTARTS, seed=base)
        out = ROOT / f"{ttype.value}_{split}.jsonl"
        n = build_dataset(ttype, cfg, out)
        logging.info("%s: +%d -> quota %d", out.name, n, quota)


if __name__ == "__main__":
    main()
