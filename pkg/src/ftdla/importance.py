"""Gradient-ranked important-neuron selection and important-bit enumeration.

A neuron is one output element of a conv / fully-connected layer (before the
ReLU).  Its importance is the cross-entropy gradient magnitude summed over a
fixed calibration subset: to first order a perturbation dx on the neuron
changes the loss by dx * dL/dx, so large accumulated |dL/dx| marks neurons
whose errors matter most.
"""

from dataclasses import dataclass, field

import numpy as np

from . import faultsim, tiling

POLICIES = ("global", "uniform")


class ImportanceError(ValueError):
    pass


@dataclass(frozen=True)
class GradientRecord:
    values: np.ndarray  # (N,) accumulated |dL/da|
    layer_names: tuple
    layer_sizes: tuple
    n_samples: int
    subset: str = ""

    def layer_slices(self):
        off = np.concatenate([[0], np.cumsum(self.layer_sizes)])
        return {n: slice(int(off[i]), int(off[i + 1])) for i, n in enumerate(self.layer_names)}


def accumulate_gradients(float_model, images, labels, batch=64, subset=""):
    """Sum of |dL/da| per neuron over the samples, accumulated in sample order."""
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 3:
        x = x[:, None] / 255.0
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ImportanceError("dataset is empty")
    total = None
    for s in range(0, len(labels), batch):
        g = float_model.neuron_gradients(x[s:s + batch], labels[s:s + batch])
        part = g.sum(axis=0)
        total = part if total is None else total + part
    names = tuple(float_model.layers[i].name for i in float_model.neuron_layers)
    return GradientRecord(total, names, tuple(float_model.neuron_counts()), len(labels), subset)


def round_half_up(x):
    return int(np.floor(x + 0.5))


def top_k(values, k):
    """Indices of the k largest values; ties go to the lower index."""
    order = np.lexsort((np.arange(len(values)), -values))
    return order[:k]


@dataclass(frozen=True)
class ImportanceMap:
    flags: np.ndarray  # (N,) bool
    s_th: float
    policy: str
    layer_names: tuple
    layer_sizes: tuple
    layer_fraction: dict = field(default_factory=dict)
    tile_fraction: dict = field(default_factory=dict)  # layer -> per-tile fractions
    tile_counts: dict = field(default_factory=dict)  # layer -> per-tile important counts
    array: int = 32

    @property
    def ids(self):
        return np.flatnonzero(self.flags)

    def layer_flags(self, name):
        off = dict(zip(self.layer_names, np.concatenate([[0], np.cumsum(self.layer_sizes)[:-1]])))
        i = self.layer_names.index(name)
        return self.flags[off[name]:off[name] + self.layer_sizes[i]]

    def to_bytes(self):
        """Packed bitmap per layer (the position table shipped with the model)."""
        out = b""
        for n in self.layer_names:
            out += np.packbits(self.layer_flags(n).astype(np.uint8)).tobytes()
        return out


def select_important_neurons(model, grads, s_th, policy="global", array=32):
    """Top fraction of neurons by accumulated gradient.

    ``model`` supplies the layer geometry (float or quantized), ``grads`` is a
    GradientRecord.  ``global`` takes round(N * s_th) neurons over the whole
    network; ``uniform`` takes round(n_t * s_th) inside every execution tile.
    """
    if not 0 < s_th <= 1:
        raise ImportanceError(f"s_th must be in (0, 1], got {s_th}")
    if policy not in POLICIES:
        raise ImportanceError(f"unknown policy {policy!r}")
    g = np.asarray(grads.values, dtype=np.float64)
    N = len(g)
    flags = np.zeros(N, dtype=bool)
    gshapes = tiling.gemm_shapes(model)
    offs = np.concatenate([[0], np.cumsum([gs.neurons for gs in gshapes])])
    if offs[-1] != N:
        raise ImportanceError(f"gradient record has {N} neurons, model has {offs[-1]}")
    if policy == "global":
        flags[top_k(g, round_half_up(N * s_th))] = True
    else:
        for j, gs in enumerate(gshapes):
            tid = tiling.tile_ids(gs, array)
            base = offs[j]
            for t in range(tid.max() + 1):
                members = base + np.flatnonzero(tid == t)
                k = round_half_up(len(members) * s_th)
                flags[members[top_k(g[members], k)]] = True
    layer_fraction, tile_fraction, tile_counts = {}, {}, {}
    for j, gs in enumerate(gshapes):
        f = flags[offs[j]:offs[j + 1]]
        tid = tiling.tile_ids(gs, array)
        cnt = np.bincount(tid, weights=f, minlength=tid.max() + 1).astype(np.int64)
        size = np.bincount(tid, minlength=tid.max() + 1)
        layer_fraction[gs.name] = float(f.mean())
        tile_counts[gs.name] = cnt
        tile_fraction[gs.name] = cnt / size
    return ImportanceMap(flags, float(s_th), policy, tuple(gs.name for gs in gshapes),
                         tuple(gs.neurons for gs in gshapes), layer_fraction, tile_fraction, tile_counts, array)


def all_neurons(model, array=32):
    gshapes = tiling.gemm_shapes(model)
    N = sum(gs.neurons for gs in gshapes)
    rec = GradientRecord(np.ones(N), tuple(gs.name for gs in gshapes), tuple(gs.neurons for gs in gshapes), 0)
    return select_important_neurons(model, rec, 1.0, "global", array)


@dataclass(frozen=True)
class BitConfig:
    ib_th: int
    nb_th: int
    feasible: bool = True
    accuracy: float = float("nan")
    cost: float = float("nan")
    table: tuple = ()  # ((ib, nb, accuracy, cost), ...) in enumeration order

    def __post_init__(self):
        if not 1 <= self.nb_th <= 8 or not 1 <= self.ib_th <= 8:
            raise ValueError("bit counts must be in 1..8")


def bit_pairs(restrict=True):
    for ib in range(1, 9):
        for nb in range(1, 9):
            if restrict and nb > ib:
                continue
            yield ib, nb


def evaluate_bit_config(model, images, labels, importance, acc_target, fault_cfg, cost,
                        restrict=True, engine=None):
    """Cheapest (IB_TH, NB_TH) whose measured accuracy reaches ``acc_target``.

    ``cost`` is a mapping or callable giving the protection cost of a pair.
    Every pair is measured with the same fault seed and trial count; the
    first minimum-cost feasible pair in enumeration order (IB_TH outer,
    NB_TH inner, ascending) wins.  When nothing is feasible the most accurate
    pair is returned with ``feasible=False``.
    """
    if importance.s_th > 0 and not importance.flags.any():
        raise ImportanceError("importance map selects no neurons although s_th > 0")
    if engine is None:
        engine = faultsim.FaultEngine(model, images, labels)
    clean = engine.fault_free_accuracy()
    if acc_target > clean:
        raise ImportanceError(f"target {acc_target:.4f} above fault-free accuracy {clean:.4f}")
    cost_of = cost if callable(cost) else (lambda ib, nb: cost[(ib, nb)])
    rows = []
    best = None
    for ib, nb in bit_pairs(restrict):
        mask = faultsim.ProtectionMask.from_importance(model, importance, ib, nb)
        acc = faultsim.evaluate_accuracy(model, None, None, fault_cfg, mask, engine).mean
        c = float(cost_of(ib, nb))
        rows.append((ib, nb, acc, c))
        if acc >= acc_target and (best is None or c < best[3]):
            best = (ib, nb, acc, c)
    if best is None:
        ib, nb, acc, c = max(rows, key=lambda r: (r[2], -r[3]))
        return BitConfig(ib, nb, False, acc, c, tuple(rows))
    return BitConfig(best[0], best[1], True, best[2], best[3], tuple(rows))
