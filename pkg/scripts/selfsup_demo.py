#!/usr/bin/env python3
"""Self-supervised pretraining then supervised finetuning of the MSTmap transformer.

Generates synthetic unlabeled/labeled/held-out sets, pretrains on one random
crop per unlabeled sample, finetunes on every labeled window (15-frame step) and
reports held-out RMSE and Pearson loss after each stage.

    python scripts/selfsup_demo.py --snr 10 --pretrain-steps 300
"""

import argparse
import logging
import time

import numpy as np

from pulseforge import losses
from pulseforge import mstmap as mm
from pulseforge.model import stformer
from pulseforge.pipeline import dataset as ds
from pulseforge.pipeline import infer, train
from pulseforge.pipeline.augment import AugmentFlags
from pulseforge.signalcore import Waveform, standardize_array


def heldout(params, cfg, test):
    preds = infer.predict_many(test, params, cfg, "solution1", infer.InferConfig())
    rmse = infer.evaluate(preds, {s.sample_id: s.hr_bpm for s in test}).rmse
    pear = []
    for s in test:
        starts = mm.window_starts(s.mstmap.T, mm.WindowSpec(cfg.T, 15))
        y, _ = stformer.forward_batch(params, cfg, np.stack([s.mstmap.data[a : a + cfg.T] for a in starts]))
        g = np.stack([s.ppg.samples[a : a + cfg.T] for a in starts])
        pear.append(losses.pearson_terms(standardize_array(y), g)[0].mean())
    return rmse, float(np.mean(pear))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--snr", type=float, default=10.0)
    ap.add_argument("--illum-drift", type=float, default=0.03)
    ap.add_argument("--motion-amp", type=float, default=0.0)
    ap.add_argument("--n-unlabeled", type=int, default=64)
    ap.add_argument("--n-labeled", type=int, default=32)
    ap.add_argument("--n-test", type=int, default=16)
    ap.add_argument("--pretrain-steps", type=int, default=300)
    ap.add_argument("--finetune-steps", type=int, default=200)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--finetune-lr", type=float, default=1e-3)
    ap.add_argument("--D", type=int, default=16)
    ap.add_argument("--L", type=int, default=2)
    ap.add_argument("--window", type=int, default=150)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    common = dict(meta_rois=4, duration_s=10, snr_db=args.snr, illum_drift=args.illum_drift, motion_amp=args.motion_amp)
    unlabeled = ds.generate(ds.DatasetSpec(n=args.n_unlabeled, seed=args.seed, **common))
    labeled = ds.generate(ds.DatasetSpec(n=args.n_labeled, seed=args.seed + 1, **common))
    test = ds.generate(ds.DatasetSpec(n=args.n_test, seed=args.seed + 2, **common))

    T = args.window
    cfg = stformer.ModelConfig(D=args.D, L=args.L, N=15, T=T)
    rng = np.random.default_rng(0)
    crops = []
    for s in unlabeled:
        a = int(rng.integers(0, s.mstmap.T - T + 1))
        crops.append(mm.MstMap(s.mstmap.data[a : a + T], s.mstmap.fs, 4))

    p0 = stformer.init_params(cfg, 0)
    print("untrained   rmse %.3f  pearson %.4f" % heldout(p0, cfg, test))

    t0 = time.perf_counter()
    pcfg = train.TrainConfig(lr=args.lr, steps=args.pretrain_steps, augment=AugmentFlags(flip_time=True, flip_roi=True))
    params, trace = train.pretrain_selfsup(crops, p0, cfg, pcfg)
    tot = [r.value for r in trace if r.loss_name == "total"]
    print(f"pretrain    L_total {tot[0]:.4f} -> {tot[-1]:.4f} in {time.perf_counter() - t0:.0f}s")
    print("pretrained  rmse %.3f  pearson %.4f" % heldout(params, cfg, test))

    wins, gts = [], []
    for s in labeled:
        for a in mm.window_starts(s.mstmap.T, mm.WindowSpec(T, 15)):
            wins.append(mm.MstMap(s.mstmap.data[a : a + T], s.mstmap.fs, 4))
            gts.append(Waveform(s.ppg.samples[a : a + T], s.ppg.fs))
    t0 = time.perf_counter()
    fcfg = train.TrainConfig(lr=args.finetune_lr, steps=args.finetune_steps, augment=AugmentFlags(flip_roi=True))
    tuned, _ = train.finetune_stformer(wins, gts, params, cfg, fcfg)
    print(f"finetune    {len(wins)} windows in {time.perf_counter() - t0:.0f}s")
    print("finetuned   rmse %.3f  pearson %.4f" % heldout(tuned, cfg, test))


if __name__ == "__main__":
    main()
