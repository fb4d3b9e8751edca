"""Monte-Carlo soft-error injection on weights and layer outputs.

Fault model
-----------
* every stored bit flips independently with probability ``ber`` per
  inference; weights are faulted as they are read (once per inference) and
  every conv / fully-connected output is faulted once after its window is
  taken
* a neuron protected at level ``l`` has the top ``l`` bits of its 8-bit
  output immune, and the same top ``l`` bits of every weight read for it
* one trial is one faulted pass over the evaluation samples; each sample gets
  fresh faults

Flip positions are drawn over *all* bits (protected or not) from a
counter-based Philox stream keyed by ``(seed, trial)``; protection only removes
flips.  Two protection masks evaluated with the same seed therefore see
coupled fault patterns, and a superset mask can only remove flips.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import binomtest

from . import kernels
from .qmodel import WEIGHTED, quantize_input, run_integer

Z95 = 1.959963984540054


@dataclass(frozen=True)
class FaultConfig:
    ber: float
    seed: int = 0
    trials: int = 200
    weights: bool = True
    activations: bool = True

    def __post_init__(self):
        if not 0.0 <= self.ber <= 1.0:
            raise ValueError(f"ber must be in [0, 1], got {self.ber}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass(frozen=True)
class AccuracyEstimate:
    mean: float
    lo: float
    hi: float
    trials: int
    seed: int
    n: int
    per_trial: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def half_width(self):
        return 0.5 * (self.hi - self.lo)


def wilson(k, n):
    if n == 0:
        return 0.0, 1.0
    ci = binomtest(int(k), int(n)).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def immune_bits(level):
    """uint8 mask of the top ``level`` bits."""
    level = np.asarray(level, dtype=np.int64)
    return ((0xFF << (8 - level)) & 0xFF).astype(np.uint8)


def inject(value, ber, mask, rng):
    """Flip each non-immune bit of an int8 ``value`` with probability ``ber``.

    ``mask`` is an iterable of immune bit indices or a uint8 bit mask.  Exactly
    8 uniforms are drawn from ``rng`` regardless of the outcome.
    """
    if not isinstance(mask, (int, np.integer)):
        m = 0
        for b in mask:
            if not 0 <= b <= 7:
                raise ValueError(f"bit {b} outside the 8-bit word")
            m |= 1 << b
        mask = m
    u = rng.random(8)
    flip = 0
    for b in range(8):
        if u[b] < ber and not (mask >> b) & 1:
            flip |= 1 << b
    return np.int8(np.uint8(np.int8(value).view(np.uint8) ^ flip).view(np.int8))


class ProtectionMask:
    """Per-neuron protection levels (0..8 immune top bits) for every weighted layer."""

    def __init__(self, levels):
        self.levels = {k: np.asarray(v, dtype=np.int8).ravel() for k, v in levels.items()}

    @classmethod
    def uniform(cls, model, level):
        names = model.neuron_layer_names
        return cls({n: np.full(c, level, np.int8) for n, c in zip(names, model.neuron_counts())})

    @classmethod
    def none(cls, model):
        return cls.uniform(model, 0)

    @classmethod
    def full(cls, model):
        return cls.uniform(model, 8)

    @classmethod
    def from_importance(cls, model, important, ib, nb):
        """``important`` is a boolean vector over all neurons (or an ImportanceMap)."""
        flags = important if isinstance(important, (np.ndarray, list, tuple)) else important.flags
        flags = np.asarray(flags, dtype=bool)
        out, off = {}, 0
        for n, c in zip(model.neuron_layer_names, model.neuron_counts()):
            out[n] = np.where(flags[off:off + c], ib, nb).astype(np.int8)
            off += c
        if off != len(flags):
            raise ValueError(f"importance covers {len(flags)} neurons, model has {off}")
        return cls(out)

    def with_layers(self, names, level=8):
        lv = dict(self.levels)
        for n in names:
            lv[n] = np.full_like(lv[n], level)
        return ProtectionMask(lv)

    def unprotected_bits(self):
        return {k: int((8 - v.astype(np.int64)).sum()) for k, v in self.levels.items()}

    def covers(self, other):
        """True when every neuron here is at least as protected as in ``other``."""
        return all(np.all(self.levels[k] >= other.levels[k]) for k in self.levels)


def _rng(seed, trial):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(trial,))))


def trial_flip_positions(seed, trial, ber, nbits):
    """Sorted positions in ``[0, nbits)`` hit by an independent Bernoulli(ber) process."""
    if ber <= 0 or nbits == 0:
        return np.zeros(0, dtype=np.int64)
    if ber >= 1:
        return np.arange(nbits, dtype=np.int64)
    rng = _rng(seed, trial)
    lam = nbits * ber
    block = int(lam + 6 * np.sqrt(lam) + 16)
    pos = np.cumsum(rng.geometric(ber, size=block)) - 1
    while pos[-1] < nbits:
        more = np.cumsum(rng.geometric(ber, size=block)) + pos[-1]
        pos = np.concatenate([pos, more])
    return pos[pos < nbits]


class FaultEngine:
    """Batched faulted inference of one quantized model over a fixed sample set."""

    def __init__(self, model, images, labels, chunk=2000):
        self.model = model
        x = np.asarray(images)
        if x.dtype == np.uint8:
            x = quantize_input(x if x.ndim == 4 else x[:, None])
        self.x = x
        self.labels = np.asarray(labels, dtype=np.int64)
        self.chunk = max(1, chunk)
        shapes = model.shapes
        self.wlayers = []
        for i in model.neuron_layers:
            L = model.layers[i]
            w = model.weights[L.name]
            n_act = int(np.prod(shapes[i]))
            self.wlayers.append({
                "index": i, "name": L.name, "w": w.reshape(w.shape[0], -1),
                "n_w": w.size, "n_act": n_act, "C": L.out_ch, "M": n_act // L.out_ch,
            })
        self._clean = None

    # bit-space layout of one inference: [w_0, a_0, w_1, a_1, ...] x 8 bits
    def _regions(self, cfg):
        sizes = []
        for wl in self.wlayers:
            sizes.append(8 * wl["n_w"] if cfg.weights else 0)
            sizes.append(8 * wl["n_act"] if cfg.activations else 0)
        off = np.concatenate([[0], np.cumsum(sizes)])
        return off

    def clean_correct(self):
        if self._clean is None:
            pred = self.model.predict(self.x)
            self._clean = pred == self.labels
        return self._clean

    def fault_free_accuracy(self):
        return float(np.mean(self.clean_correct()))

    def run(self, cfg, mask=None, trace=False, shortcut=True):
        """Outcome matrix ``(trials, samples)`` of top-1 correctness plus stats.

        With ``shortcut`` a run that cannot change any bit (BER 0 or every
        neuron fully protected) returns the fault-free outcomes directly.
        """
        S = len(self.labels)
        if mask is None:
            mask = ProtectionMask.none(self.model)
        stats = {"flips_drawn": 0, "flips_applied": 0, "trace": [] if trace else None}
        if shortcut and (cfg.ber == 0 or all((v >= 8).all() for v in mask.levels.values())):
            return np.tile(self.clean_correct(), (cfg.trials, 1)), stats
        off = self._regions(cfg)
        bpi = int(off[-1])
        per_chunk = max(1, self.chunk // S)
        out = np.zeros((cfg.trials, S), dtype=bool)
        for t0 in range(0, cfg.trials, per_chunk):
            t1 = min(cfg.trials, t0 + per_chunk)
            out[t0:t1] = self._run_chunk(cfg, mask, t0, t1, off, bpi, stats)
        return out, stats

    def run_until(self, cfg, mask, floor, block=None):
        """Sequential estimate against an accuracy ``floor``.

        Trials run in blocks; the run stops as soon as the Wilson interval
        lies entirely on one side of ``floor`` or ``cfg.trials`` is reached.
        Trial ``t`` always sees the same faults, so the result is a
        deterministic prefix of the full run.
        """
        S = len(self.labels)
        if mask is None:
            mask = ProtectionMask.none(self.model)
        if cfg.ber == 0 or all((v >= 8).all() for v in mask.levels.values()):
            return estimate(self.run(cfg, mask)[0], cfg)
        block = block or max(1, self.chunk // S)
        off = self._regions(cfg)
        bpi = int(off[-1])
        stats = {"flips_drawn": 0, "flips_applied": 0, "trace": None}
        parts, done = [], 0
        while done < cfg.trials:
            t1 = min(cfg.trials, done + block)
            parts.append(self._run_chunk(cfg, mask, done, t1, off, bpi, stats))
            done = t1
            k = sum(int(p.sum()) for p in parts)
            lo, hi = wilson(k, done * S)
            if lo >= floor or hi < floor:
                break
        out = np.concatenate(parts)
        return estimate(out, FaultConfig(cfg.ber, cfg.seed, done, cfg.weights, cfg.activations))

    def _run_chunk(self, cfg, mask, t0, t1, off, bpi, stats):
        S = len(self.labels)
        T = t1 - t0
        B = T * S
        # draw and decode flips for every trial in the chunk
        bs, regs, withins = [], [], []
        for t in range(t0, t1):
            pos = trial_flip_positions(cfg.seed, t, cfg.ber, S * bpi)
            s, r = np.divmod(pos, bpi)
            bs.append((t - t0) * S + s)
            reg = np.searchsorted(off, r, side="right") - 1
            regs.append(reg)
            withins.append(r - off[reg])
        b_all = np.concatenate(bs)
        reg_all = np.concatenate(regs)
        within_all = np.concatenate(withins)
        stats["flips_drawn"] += len(b_all)
        by_region = {}
        if len(b_all):
            order = np.argsort(reg_all, kind="stable")
            reg_sorted = reg_all[order]
            bounds = np.searchsorted(reg_sorted, np.arange(len(off)))
            for g in range(len(off) - 1):
                sel = order[bounds[g]:bounds[g + 1]]
                if len(sel):
                    by_region[g] = (b_all[sel], within_all[sel] // 8, (within_all[sel] % 8).astype(np.uint8))
        x = np.ascontiguousarray(np.tile(self.x, (T,) + (1,) * (self.x.ndim - 1)))
        idx_of = {wl["index"]: j for j, wl in enumerate(self.wlayers)}

        def acc_hook(i, acc, cols):
            j = idx_of[i]
            hit = by_region.get(2 * j)
            if hit is None:
                return None
            return self._weight_faults(j, acc, cols, hit, mask, stats)

        def act_hook(i, out):
            j = idx_of[i]
            hit = by_region.get(2 * j + 1)
            if hit is None:
                return out
            return self._act_faults(j, out, hit, mask, stats)

        acts, _ = run_integer(self.model, x, acc_hook=acc_hook, act_hook=act_hook, keep=False)
        last = acts[-1]
        pred = last.reshape(last.shape[0], B).argmax(axis=0)
        return (pred == np.tile(self.labels, T)).reshape(T, S)

    def _weight_faults(self, j, acc, cols, hit, mask, stats):
        wl = self.wlayers[j]
        b, widx, bit = hit
        n_w = wl["n_w"]
        key = b * n_w + widx
        order = np.argsort(key, kind="stable")
        key = key[order]
        bits = (np.uint8(1) << bit[order]).astype(np.uint8)
        starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
        m = np.bitwise_xor.reduceat(bits, starts)
        ukey = key[starts]
        ub, uw = np.divmod(ukey, n_w)
        K = wl["w"].shape[1]
        c_idx, k_idx = np.divmod(uw, K)
        w_old = wl["w"].reshape(-1)[uw]
        levels = mask.levels[wl["name"]]
        C, M = wl["C"], wl["M"]
        lvmap = levels.reshape(C, M)
        distinct = np.unique(levels)
        acc32 = np.ascontiguousarray(acc, dtype=np.int32)
        cols = np.ascontiguousarray(cols)
        result = None
        for lv in distinct:
            if lv >= 8:
                continue
            ml = (m & ~immune_bits(lv)).astype(np.uint8)
            w_new = (w_old.view(np.uint8) ^ ml).view(np.int8)
            delta = w_new.astype(np.int32) - w_old.astype(np.int32)
            nz = np.flatnonzero(delta)
            if stats["trace"] is not None:
                stats["trace"].append(("weight", wl["name"], int(lv), w_old[nz].copy(), w_new[nz].copy()))
            target = acc32.copy() if len(distinct) > 1 else acc32
            kernels.scatter_weight_faults(target, cols, ub[nz].astype(np.int64), c_idx[nz].astype(np.int64),
                                          k_idx[nz].astype(np.int64), delta[nz])
            if len(distinct) == 1:
                result = target
            else:
                sel = (lvmap == lv)[:, None, :]
                if result is None:
                    result = acc32.copy()
                np.copyto(result, target, where=sel)
        return acc32 if result is None else result

    def _act_faults(self, j, out, hit, mask, stats):
        wl = self.wlayers[j]
        b, vidx, bit = hit
        levels = mask.levels[wl["name"]]
        allowed = ~immune_bits(levels[vidx])
        m = ((np.uint8(1) << bit).astype(np.uint8) & allowed).astype(np.uint8)
        keep = np.flatnonzero(m)
        flat = np.ascontiguousarray(out).reshape(-1)
        c, mm = np.divmod(vidx[keep], wl["M"])
        idx = ((c * out.shape[1] + b[keep]) * wl["M"] + mm).astype(np.int64)
        stats["flips_applied"] += len(keep)
        if stats["trace"] is not None:
            before = flat[idx].copy()
        buf = flat.view(np.uint8)
        kernels.xor_flips(buf, idx, m[keep])
        if stats["trace"] is not None:
            stats["trace"].append(("activation", wl["name"], levels[vidx[keep]].copy(), before, flat[idx].copy()))
        return flat.reshape(out.shape)

    def expected_flips(self, cfg, mask=None):
        """Expected applied activation flips per run (weights excluded: their
        effective count depends on the reading neuron's level)."""
        if mask is None:
            mask = ProtectionMask.none(self.model)
        n = 0
        for wl in self.wlayers:
            if cfg.activations:
                n += int((8 - mask.levels[wl["name"]].astype(np.int64)).sum())
        return cfg.ber * n * cfg.trials * len(self.labels)


def estimate(outcomes, cfg):
    k = int(outcomes.sum())
    n = int(outcomes.size)
    if cfg.ber == 0:
        mean = k / n
        return AccuracyEstimate(mean, mean, mean, cfg.trials, cfg.seed, n, outcomes.mean(axis=1))
    lo, hi = wilson(k, n)
    return AccuracyEstimate(k / n, lo, hi, cfg.trials, cfg.seed, n, outcomes.mean(axis=1))


def evaluate_accuracy(model, images, labels, cfg, protection=None, engine=None):
    """Top-1 accuracy under faults with a 95% Wilson interval over trials x samples."""
    if engine is None:
        engine = FaultEngine(model, images, labels)
    outcomes, _ = engine.run(cfg, protection)
    return estimate(outcomes, cfg)


@dataclass(frozen=True)
class Sensitivity:
    name: str
    score: float
    lo: float
    hi: float
    acc: AccuracyEstimate


def layer_groups(model):
    """Default grouping: every weighted layer alone, except that the weighted
    layers between a residual ``add`` and its source form one group."""
    names = [model.layers[i].name for i in model.neuron_layers]
    groups = [[n] for n in names]
    for i, L in enumerate(model.layers):
        if L.kind == "add":
            inside = [model.layers[j].name for j in model.neuron_layers if L.src < j < i]
            if len(inside) > 1:
                groups = [g for g in groups if g[0] not in inside]
                pos = names.index(inside[0])
                groups.insert(sum(1 for g in groups if names.index(g[0]) < pos), inside)
    return groups


def layer_sensitivity(model, images, labels, cfg, groups=None, engine=None):
    """Accuracy gain from fully protecting one layer (group) with the rest faulted.

    The interval of each score combines the half-widths of the two accuracies.
    """
    if engine is None:
        engine = FaultEngine(model, images, labels)
    if groups is None:
        groups = layer_groups(model)
    base = evaluate_accuracy(model, None, None, cfg, ProtectionMask.none(model), engine)
    out = []
    for g in groups:
        acc = evaluate_accuracy(model, None, None, cfg, ProtectionMask.none(model).with_layers(g), engine)
        s = acc.mean - base.mean
        hw = acc.half_width + base.half_width
        out.append(Sensitivity("+".join(g), s, s - hw, s + hw, acc))
    return out, base


def protection_curve(model, images, labels, cfg, layer_order, engine=None):
    """Accuracy with the first k groups of ``layer_order`` fully protected, k = 0..n."""
    if engine is None:
        engine = FaultEngine(model, images, labels)
    mask = ProtectionMask.none(model)
    seq = [evaluate_accuracy(model, None, None, cfg, mask, engine)]
    for g in layer_order:
        g = [g] if isinstance(g, str) else list(g)
        mask = mask.with_layers(g)
        seq.append(evaluate_accuracy(model, None, None, cfg, mask, engine))
    return seq


def flip_count_check(engine, cfg):
    """Observed vs expected applied activation flips (weights switched off)."""
    c = FaultConfig(cfg.ber, cfg.seed, cfg.trials, weights=False, activations=True)
    _, stats = engine.run(c)
    return stats["flips_applied"], engine.expected_flips(c)
