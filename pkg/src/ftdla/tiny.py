"""The checked-in reference network and its deterministic dataset splits."""

import os
from functools import lru_cache

import numpy as np

from . import data
from .qmodel import FloatModel, avgpool, conv, fc, maxpool, relu

WEIGHTS = os.path.join(os.path.dirname(__file__), "data", "tiny_float.npz")

TRAIN_SEED, TEST_SEED = 1, 2
N_TRAIN, N_TEST = 8000, 1000
N_CALIB = 256
N_FAULT_EVAL = 100


WIDTHS = (8, 16, 16, 32)


def architecture(widths=WIDTHS):
    c1, c2, c3, f1 = widths
    return [
        conv("conv1", 1, c1), relu("relu1"), maxpool("pool1"),
        conv("conv2", c1, c2), relu("relu2"), maxpool("pool2"),
        conv("conv3", c2, c3), relu("relu3"), avgpool("pool3"),
        fc("fc1", 4 * c3, f1), relu("relu4"),
        fc("fc2", f1, 10),
    ]


def init_weights(seed=0):
    rng = np.random.default_rng(seed)
    w = {}
    for L in architecture():
        if L.kind == "conv2d":
            fan = L.in_ch * L.kernel * L.kernel
            w[L.name] = rng.normal(0, np.sqrt(2.0 / fan), size=(L.out_ch, L.in_ch, L.kernel, L.kernel))
        elif L.kind == "fc":
            w[L.name] = rng.normal(0, np.sqrt(2.0 / L.in_ch), size=(L.out_ch, L.in_ch))
    return w


def float_model(path=WEIGHTS):
    z = np.load(path)
    return FloatModel(architecture(), {k: z[k].astype(np.float64) for k in z.files}, (1, 16, 16))


@lru_cache(maxsize=None)
def _split(seed, n):
    images, labels = data.generate(n, seed)
    images.setflags(write=False)
    labels.setflags(write=False)
    return images, labels


def train_split():
    return _split(TRAIN_SEED, N_TRAIN)


def test_split():
    return _split(TEST_SEED, N_TEST)


def calibration_split():
    """First 256 training samples; used for quantization and gradient ranking."""
    x, y = train_split()
    return x[:N_CALIB], y[:N_CALIB]


def fault_eval_split(n=N_FAULT_EVAL):
    x, y = test_split()
    return x[:n], y[:n]


def as_float_input(images):
    return np.asarray(images, dtype=np.float64)[:, None] / 255.0


def as_int_input(images):
    from .qmodel import quantize_input
    return quantize_input(np.asarray(images)[:, None])
