"""Train the reference float network with plain numpy Adam and write
src/ftdla/data/tiny_float.npz.  Deterministic given --seed."""

import argparse

import numpy as np

from ftdla import tiny
from ftdla.qmodel import FloatModel


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--epochs", type=int, default=12)
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--lr", type=float, default=2e-3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=tiny.WEIGHTS)
    args = ap.parse_args()

    xtr, ytr = tiny.train_split()
    xte, yte = tiny.test_split()
    X = tiny.as_float_input(xtr)
    Xte = tiny.as_float_input(xte)
    model = FloatModel(tiny.architecture(), tiny.init_weights(args.seed), (1, 16, 16))
    m = {k: np.zeros_like(v) for k, v in model.weights.items()}
    v = {k: np.zeros_like(w) for k, w in model.weights.items()}
    rng = np.random.default_rng(args.seed)
    step = 0
    b1, b2 = 0.9, 0.999
    for ep in range(args.epochs):
        order = rng.permutation(len(X))
        lr = args.lr * (0.5 ** (ep // 4))
        losses = []
        for s in range(0, len(X), args.batch):
            idx = order[s:s + args.batch]
            _, g, loss = model.backward(X[idx], ytr[idx])
            losses.append(loss.mean())
            step += 1
            for k in model.weights:
                gk = g[k] / len(idx)
                m[k] = b1 * m[k] + (1 - b1) * gk
                v[k] = b2 * v[k] + (1 - b2) * gk * gk
                mh = m[k] / (1 - b1 ** step)
                vh = v[k] / (1 - b2 ** step)
                model.weights[k] -= lr * mh / (np.sqrt(vh) + 1e-8)
        print(f"epoch {ep} loss {np.mean(losses):.4f} test acc {model.accuracy(Xte, yte):.4f}")
    np.savez(args.out, **{k: w.astype(np.float32) for k, w in model.weights.items()})
    print("wrote", args.out)


if __name__ == "__main__":
    main()
