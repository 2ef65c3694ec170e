"""Scratch: tune the synthetic 10-class task for the trend criteria."""
import time

import numpy as np

from bitnn import data, trainer
from bitnn.binarize import BinaryAlphabet
from bitnn.network import ActivationKind as A, NetworkConfig, binary_finetune, init_random


def make_task(n, dim=40, num_classes=10, seed=0, mean_scale=1.0, noise=1.0):
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((num_classes, dim)) * mean_scale
    labels = rng.integers(num_classes, size=n)
    feats = means[labels] + rng.standard_normal((n, dim)) * noise
    return data.Dataset(feats.astype(np.float32), labels, num_classes)


def run(tag, net, tr, ho, opts, verbose=False):
    t0 = time.time()
    net, reports = trainer.train(net, tr, ho, opts)
    if verbose:
        for r in reports:
            print(f"   e{r.epoch:3d} train {r.train_loss:.4f} holdout {r.holdout_loss:.4f} "
                  f"acc {r.holdout_acc:.3f} lr {r.lr:.5f}")
    last = reports[-1]
    print(f"{tag:30s} epochs={last.epoch:3d} acc={last.holdout_acc:.4f} "
          f"xent={last.holdout_loss:.4f} time={time.time()-t0:.1f}s")
    return net, reports


def main():
    ds = make_task(6000, seed=42)
    tr, ho = data.holdout_split(ds, fraction=1/6)
    print(f"train n={tr.n} holdout n={ho.n}")

    dims = [40, 128, 128, 128, 128, 10]
    cfg = NetworkConfig(dims, [A.SIGMOID] * (len(dims) - 2) + [A.SOFTMAX])

    # no-schedule trajectory to see raw convergence
    base = init_random(cfg, seed=7)
    opts = trainer.TrainOptions(initial_lr=0.008, batch_size=256, max_epochs=25, seed=7,
                                start_decay_improvement=-1.0, halt_improvement=-1.0)
    run("baseline lr=0.008 raw", base, tr, ho, opts, verbose=True)

    for lr in (0.02, 0.05):
        net = init_random(cfg, seed=7)
        opts = trainer.TrainOptions(initial_lr=lr, batch_size=256, max_epochs=25, seed=7,
                                    start_decay_improvement=-1.0, halt_improvement=-1.0)
        run(f"baseline lr={lr} raw", net, tr, ho, opts)


if __name__ == "__main__":
    main()
