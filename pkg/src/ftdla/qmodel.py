"""Fixed-point model: layer graph, power-of-two int8 quantization, integer
forward pass with 24-bit saturating accumulators and an 8-bit output window,
plus a float64 reference forward/backward used for gradient extraction.

Arithmetic contract of the integer path
---------------------------------------
* inputs, weights and layer outputs are int8 with power-of-two scales
  (value = element * 2**-exp)
* every product is a 16-bit signed value, products are summed into a 24-bit
  signed accumulator that saturates
* a conv / fully-connected layer emits bits [q, q+7] of its accumulator,
  truncated toward zero and clamped to int8

Sums are formed with a float32 GEMM when the reduction length keeps every
partial sum below 2**24 (exact), float64 otherwise.  Saturation is applied to
the finished sum.  For reductions of at most 511 terms no partial sum can leave
the 24-bit range, so this equals saturating after every add; longer reductions
are flagged by `calibrate_quantization` before they are ever run.
"""

import hashlib
import io
import json
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import kernels

ACC_BITS = 24
PRODUCT_BITS = 16
INPUT_BITS = 8
Q_MAX = ACC_BITS - 8
INPUT_EXP = 7
MAGIC = "FHQM1"

WEIGHTED = ("conv2d", "fc")
KINDS = ("conv2d", "fc", "relu", "maxpool", "avgpool", "add")


class ShapeError(ValueError):
    """Layer graph does not compose, or an input does not match it."""


class CalibrationError(RuntimeError):
    """A calibration pass overflowed a 24-bit accumulator."""

    def __init__(self, layer, count):
        super().__init__(f"layer {layer!r}: {count} accumulator values exceed {ACC_BITS} bits")
        self.layer = layer
        self.count = count


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    name: str
    in_ch: int = 0
    out_ch: int = 0
    kernel: int = 1
    stride: int = 1
    padding: int = 0
    src: Optional[int] = None  # add: index of the other operand's layer

    @property
    def weight(self):
        return self.name if self.kind in WEIGHTED else None


class Site(NamedTuple):
    kind: str  # 'weight' or 'activation'
    layer: str


def conv(name, cin, cout, k=3, stride=1, padding=1):
    return LayerSpec("conv2d", name, cin, cout, k, stride, padding)


def fc(name, cin, cout):
    return LayerSpec("fc", name, cin, cout)


def relu(name):
    return LayerSpec("relu", name)


def maxpool(name, k=2):
    return LayerSpec("maxpool", name, kernel=k, stride=k)


def avgpool(name, k=2):
    return LayerSpec("avgpool", name, kernel=k, stride=k)


def add(name, src):
    return LayerSpec("add", name, src=src)


def infer_shapes(layers, input_shape):
    """Output shape of every layer; raises ShapeError naming the first bad layer."""
    shapes = []
    cur = tuple(input_shape)
    for i, L in enumerate(layers):
        if L.kind not in KINDS:
            raise ShapeError(f"layer {L.name!r}: unknown kind {L.kind!r}")
        if L.kind == "conv2d":
            if len(cur) != 3 or cur[0] != L.in_ch:
                raise ShapeError(f"layer {L.name!r}: expects {L.in_ch} input channels, got shape {cur}")
            h = (cur[1] + 2 * L.padding - L.kernel) // L.stride + 1
            w = (cur[2] + 2 * L.padding - L.kernel) // L.stride + 1
            if h < 1 or w < 1:
                raise ShapeError(f"layer {L.name!r}: kernel larger than input {cur}")
            cur = (L.out_ch, h, w)
        elif L.kind == "fc":
            if int(np.prod(cur)) != L.in_ch:
                raise ShapeError(f"layer {L.name!r}: expects {L.in_ch} inputs, got shape {cur}")
            cur = (L.out_ch,)
        elif L.kind in ("maxpool", "avgpool"):
            if len(cur) != 3 or cur[1] % L.kernel or cur[2] % L.kernel:
                raise ShapeError(f"layer {L.name!r}: pool {L.kernel} does not tile shape {cur}")
            cur = (cur[0], cur[1] // L.kernel, cur[2] // L.kernel)
        elif L.kind == "add":
            if L.src is None or not 0 <= L.src < i or shapes[L.src] != cur:
                raise ShapeError(f"layer {L.name!r}: residual operand does not match shape {cur}")
        shapes.append(cur)
    return shapes


def im2col(x, k, stride, pad):
    """(B, C, H, W) -> columns (C*k*k, B, Ho*Wo), rows ordered (c, ky, kx)."""
    B, C = x.shape[:2]
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2:4]
    cols = win.transpose(1, 4, 5, 0, 2, 3).reshape(C * k * k, B, ho * wo)
    return cols, ho, wo


def col2im(dcols, x_shape, k, stride, pad):
    B, C, H, W = x_shape
    ho = (H + 2 * pad - k) // stride + 1
    wo = (W + 2 * pad - k) // stride + 1
    d = dcols.reshape(C, k, k, B, ho, wo)
    dx = np.zeros((B, C, H + 2 * pad, W + 2 * pad), dtype=dcols.dtype)
    for ky in range(k):
        for kx in range(k):
            dx[:, :, ky:ky + stride * ho:stride, kx:kx + stride * wo:stride] += d[:, ky, kx].transpose(1, 0, 2, 3)
    if pad:
        dx = dx[:, :, pad:-pad, pad:-pad]
    return dx


def layer_columns(L, x):
    """GEMM operand for a weighted layer: (K, B, M) plus the output spatial shape."""
    if L.kind == "conv2d":
        cols, ho, wo = im2col(x, L.kernel, L.stride, L.padding)
        return cols, (ho, wo)
    B = x.shape[0]
    return x.reshape(B, -1).T[:, :, None], ()


def gemm_dtype(k):
    # float32 sums of int8*int8 products are exact while |sum| < 2**24
    return np.float32 if k * 128 * 128 < (1 << 24) else np.float64


def maxpool_fwd(x, k):
    """k x k max pool over the last two axes (any leading layout)."""
    out = x[..., ::k, ::k].copy()
    for dy in range(k):
        for dx in range(k):
            if dy or dx:
                np.maximum(out, x[..., dy::k, dx::k], out=out)
    return out


def avgpool_int(x, k):
    """k x k mean over the last two axes, truncated toward zero."""
    s = x[..., ::k, ::k].astype(np.int32)
    for dy in range(k):
        for dx in range(k):
            if dy or dx:
                s += x[..., dy::k, dx::k]
    d = k * k
    return (np.sign(s) * (np.abs(s) // d)).astype(np.int8)


def align_add(a, ea, b, eb, e_out):
    """Sum of two int8 tensors with exponents ea, eb, re-expressed at e_out."""
    def shift(v, e):
        v = v.astype(np.int32)
        d = e - e_out
        if d >= 0:
            return np.sign(v) * (np.abs(v) >> d)
        return v << (-d)
    return np.clip(shift(a, ea) + shift(b, eb), -128, 127).astype(np.int8)


# ----------------------------------------------------------------- float model

@dataclass
class FloatModel:
    layers: list
    weights: dict
    input_shape: tuple = (1, 16, 16)

    def __post_init__(self):
        self.shapes = infer_shapes(self.layers, self.input_shape)
        for L in self.layers:
            if L.kind == "conv2d":
                want = (L.out_ch, L.in_ch, L.kernel, L.kernel)
            elif L.kind == "fc":
                want = (L.out_ch, L.in_ch)
            else:
                continue
            if self.weights[L.name].shape != want:
                raise ShapeError(f"layer {L.name!r}: weight shape {self.weights[L.name].shape} != {want}")

    @property
    def neuron_layers(self):
        return [i for i, L in enumerate(self.layers) if L.kind in WEIGHTED]

    def neuron_counts(self):
        return [int(np.prod(self.shapes[i])) for i in self.neuron_layers]

    def forward(self, x, perturb=None, keep=False):
        """Float64 forward.  ``perturb`` maps layer index -> additive offset on
        that layer's (pre-ReLU) output.  Returns logits and, with ``keep``,
        the cache needed by `backward`."""
        h = np.asarray(x, dtype=np.float64)
        if h.ndim == len(self.input_shape):
            h = h[None]
        outs, cache = [], []
        for i, L in enumerate(self.layers):
            inp = h
            if L.kind in WEIGHTED:
                W = self.weights[L.name]
                cols, sp = layer_columns(L, h)
                y = np.einsum("nk,kbm->bnm", W.reshape(W.shape[0], -1), cols, optimize=True)
                h = y.reshape((h.shape[0],) + self.shapes[i])
                cache.append(cols if keep else None)
            elif L.kind == "relu":
                h = np.maximum(h, 0.0)
                cache.append(None)
            elif L.kind == "maxpool":
                h = maxpool_fwd(h, L.kernel)
                cache.append(None)
            elif L.kind == "avgpool":
                B, C, H, W_ = h.shape
                k = L.kernel
                h = h.reshape(B, C, H // k, k, W_ // k, k).mean(axis=(3, 5))
                cache.append(None)
            elif L.kind == "add":
                h = h + outs[L.src]
                cache.append(None)
            if perturb is not None and i in perturb:
                h = h + perturb[i]
            outs.append(h)
            cache[-1] = (inp, cache[-1]) if keep else None
        if keep:
            return h.reshape(h.shape[0], -1), (outs, cache)
        return h.reshape(h.shape[0], -1)

    def loss(self, logits, labels):
        z = logits - logits.max(axis=1, keepdims=True)
        lse = np.log(np.exp(z).sum(axis=1))
        return lse - z[np.arange(len(labels)), labels]

    def backward(self, x, labels):
        """Per-sample cross-entropy gradients.

        Returns ``(neuron_grads, weight_grads, loss)``: ``neuron_grads`` is a
        list (one per conv/fc layer) of dL/d(pre-ReLU output) arrays of shape
        (B, *layer_shape); ``weight_grads`` are summed over the batch.
        """
        labels = np.asarray(labels)
        logits, (outs, cache) = self.forward(x, keep=True)
        B = logits.shape[0]
        z = logits - logits.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        loss = -np.log(p[np.arange(B), labels])
        g = p.copy()
        g[np.arange(B), labels] -= 1.0
        g = g.reshape(outs[-1].shape)
        grads = [None] * len(self.layers)
        wgrads = {}
        pending = {}
        for i in range(len(self.layers) - 1, -1, -1):
            L = self.layers[i]
            if i in pending:
                g = g + pending.pop(i)
            grads[i] = g
            inp, cols = cache[i]
            if L.kind in WEIGHTED:
                W = self.weights[L.name]
                gy = g.reshape(B, L.out_ch, -1)
                wgrads[L.name] = np.einsum("bnm,kbm->nk", gy, cols, optimize=True).reshape(W.shape)
                dcols = np.einsum("nk,bnm->kbm", W.reshape(W.shape[0], -1), gy, optimize=True)
                if L.kind == "conv2d":
                    g = col2im(dcols, inp.shape, L.kernel, L.stride, L.padding)
                else:
                    g = dcols[:, :, 0].T.reshape(inp.shape)
            elif L.kind == "relu":
                g = g * (inp > 0)
            elif L.kind == "maxpool":
                k = L.kernel
                up = np.repeat(np.repeat(outs[i], k, axis=2), k, axis=3)
                hit = inp == up
                # first maximal element of each window gets the gradient
                Bs, C, H, W_ = inp.shape
                hw = hit.reshape(Bs, C, H // k, k, W_ // k, k).transpose(0, 1, 2, 4, 3, 5).reshape(Bs, C, H // k, W_ // k, k * k)
                first = np.argmax(hw, axis=-1)
                sel = np.zeros_like(hw)
                np.put_along_axis(sel, first[..., None], True, axis=-1)
                sel = sel.reshape(Bs, C, H // k, W_ // k, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(inp.shape)
                g = np.repeat(np.repeat(g, k, axis=2), k, axis=3) * sel
            elif L.kind == "avgpool":
                k = L.kernel
                g = np.repeat(np.repeat(g, k, axis=2), k, axis=3) / (k * k)
            elif L.kind == "add":
                pending[L.src] = pending.get(L.src, 0) + g
        neuron = [grads[i] for i in self.neuron_layers]
        return neuron, wgrads, loss

    def neuron_gradients(self, x, labels):
        """|dL/da| per neuron, flattened and concatenated, shape (B, N)."""
        neuron, _, _ = self.backward(x, labels)
        B = neuron[0].shape[0]
        return np.concatenate([np.abs(g).reshape(B, -1) for g in neuron], axis=1)

    def accuracy(self, x, labels, batch=1000):
        hits = 0
        for s in range(0, len(labels), batch):
            hits += int((self.forward(x[s:s + batch]).argmax(axis=1) == labels[s:s + batch]).sum())
        return hits / len(labels)


# ----------------------------------------------------------- quantized model

@dataclass(frozen=True)
class QuantizedModel:
    layers: tuple
    weights: dict  # layer name -> int8 array
    w_exp: dict  # layer name -> weight exponent
    q: dict  # layer name -> low bit of the output window
    act_exp: tuple  # output exponent of every layer
    input_shape: tuple
    q_scale: int = 0
    input_exp: int = INPUT_EXP
    saturations: dict = field(default_factory=dict)

    acc_bits = ACC_BITS
    product_bits = PRODUCT_BITS
    input_bits = INPUT_BITS

    @property
    def shapes(self):
        return infer_shapes(self.layers, self.input_shape)

    @property
    def neuron_layers(self):
        return [i for i, L in enumerate(self.layers) if L.kind in WEIGHTED]

    @property
    def neuron_layer_names(self):
        return [self.layers[i].name for i in self.neuron_layers]

    def neuron_counts(self):
        shapes = self.shapes
        return [int(np.prod(shapes[i])) for i in self.neuron_layers]

    def quantize_input(self, pixels):
        return quantize_input(pixels)

    def forward(self, x, bit_flip_hook: Optional[Callable] = None):
        """Integer forward of a batch.

        ``x`` is int8 (B, *input_shape) or a single sample without the batch
        axis.  ``bit_flip_hook(site, values) -> values`` is called once for
        every weight tensor as it is read and once for every conv/fc output
        tensor as it is produced.  Returns ``(logits, activations)`` where
        logits are the int8 last-layer outputs as int64 and activations holds
        every layer's output.
        """
        x = np.asarray(x)
        single = x.ndim == len(self.input_shape)
        if single:
            x = x[None]
        if x.shape[1:] != tuple(self.input_shape):
            raise ShapeError(f"layer {self.layers[0].name!r}: input shape {x.shape[1:]} != {tuple(self.input_shape)}")
        acts, _ = run_integer(self, x, hook=bit_flip_hook)
        shapes = self.shapes
        B = x.shape[0]
        acts = [to_batch_major(a).reshape((B,) + shp) for a, shp in zip(acts, shapes)]
        logits = acts[-1].reshape(B, -1).astype(np.int64)
        if single:
            return logits[0], [a[0] for a in acts]
        return logits, acts

    def predict(self, x, batch=2000):
        out = []
        for s in range(0, len(x), batch):
            acts, _ = run_integer(self, x[s:s + batch], keep=False)
            last = acts[-1]
            out.append(last.reshape(last.shape[0], -1).argmax(axis=0))
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)

    def accuracy(self, x, labels):
        return float(np.mean(self.predict(x) == labels))

    def with_q(self, q):
        return rebuild_exponents(replace(self, q=dict(q)))


def quantize_input(pixels):
    """uint8 pixels -> int8 with exponent 7 (value = p/255 approximately)."""
    p = np.asarray(pixels, dtype=np.int32)
    return np.minimum((p * 128 + 127) // 255, 127).astype(np.int8)


def weight_exponent(w):
    """Largest e with round(max|w| * 2**e) <= 127."""
    m = float(np.max(np.abs(w)))
    if m == 0.0:
        return 0
    e = int(np.floor(np.log2(127.0 / m)))
    while np.round(m * 2.0 ** (e + 1)) <= 127:
        e += 1
    while np.round(m * 2.0 ** e) > 127:
        e -= 1
    return e


def quantize_weight(w):
    e = weight_exponent(w)
    return np.clip(np.round(w * 2.0 ** e), -128, 127).astype(np.int8), e


def rebuild_exponents(qm):
    exps = []
    cur = qm.input_exp
    for L in qm.layers:
        if L.kind in WEIGHTED:
            cur = cur + qm.w_exp[L.name] - qm.q[L.name]
        elif L.kind == "add":
            cur = min(cur, exps[L.src])
        exps.append(cur)
    return replace(qm, act_exp=tuple(exps))


def cm_columns(L, h):
    """GEMM operand (K, B, M) from a channel-major (C, B, H, W) or (C, B) input."""
    if L.kind == "fc":
        C, B = h.shape[:2]
        return np.ascontiguousarray(np.moveaxis(h, 1, -1).reshape(-1, B))[:, :, None], ()
    k, st, pad = L.kernel, L.stride, L.padding
    C, B, H, W = h.shape
    if pad:
        h = np.pad(h, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (H + 2 * pad - k) // st + 1
    wo = (W + 2 * pad - k) // st + 1
    cols = np.empty((C, k, k, B, ho, wo), dtype=h.dtype)
    for ky in range(k):
        for kx in range(k):
            cols[:, ky, kx] = h[:, :, ky:ky + st * ho:st, kx:kx + st * wo:st]
    return cols.reshape(C * k * k, B, ho * wo), (ho, wo)


def accumulate(L, w, h):
    """Exact integer sums, channel-major: returns ``(acc (N, B, M), cols (K, B, M), spatial)``.

    ``h`` is the channel-major int8 input of the layer.
    """
    K = L.in_ch * L.kernel * L.kernel if L.kind == "conv2d" else L.in_ch
    dt = gemm_dtype(K)
    cols, sp = cm_columns(L, h.astype(dt))
    _, B, M = cols.shape
    wf = w.reshape(w.shape[0], -1).astype(dt)
    acc = wf @ cols.reshape(K, B * M)
    it = np.int32 if K * 128 * 128 < (1 << 31) else np.int64
    return acc.astype(it).reshape(-1, B, M), cols, sp


def to_batch_major(a):
    return np.ascontiguousarray(np.swapaxes(a, 0, 1))


def to_channel_major(a):
    return np.ascontiguousarray(np.swapaxes(a, 0, 1))


def run_integer(qm, x, hook=None, acc_hook=None, act_hook=None, keep=True):
    """Core integer pass shared by `QuantizedModel.forward` and the fault engine.

    Works channel-major internally: ``x`` is (B, C, H, W) int8 and every
    stored activation is (C, B, H, W) for conv outputs, (N, B) for
    fully-connected ones.  ``acc_hook(layer_index, acc, cols)`` sees the
    (N, B, M) accumulators and (K, B, M) GEMM columns and may return
    replacement accumulators; ``act_hook(layer_index, out)`` may replace the
    (N, B, M) window output.  ``hook`` is the public per-tensor callback in
    batch-major layout.  Returns ``(activations, stats)``; with ``keep=False``
    only the last activation is kept.
    """
    h = to_channel_major(x.astype(np.int8, copy=False))
    B = h.shape[1]
    acts = []
    stats = {"saturated": 0, "clipped": 0}
    for i, L in enumerate(qm.layers):
        if L.kind in WEIGHTED:
            w = qm.weights[L.name]
            if hook is not None:
                w = np.asarray(hook(Site("weight", L.name), w.copy()), dtype=np.int8)
            acc, cols, sp = accumulate(L, w, h)
            if acc_hook is not None:
                r = acc_hook(i, acc, cols)
                if r is not None:
                    acc = r
            out, n_sat, n_clip = kernels.window_truncate(acc, qm.q[L.name])
            stats["saturated"] += n_sat
            stats["clipped"] += n_clip
            if hook is not None:
                bm = to_batch_major(out).reshape((B, L.out_ch) + sp)
                bm = np.asarray(hook(Site("activation", L.name), bm), dtype=np.int8)
                out = to_channel_major(bm.reshape(B, L.out_ch, -1))
            if act_hook is not None:
                out = act_hook(i, out)
            h = out.reshape((L.out_ch, B) + sp)
        elif L.kind == "relu":
            h = np.maximum(h, 0)
        elif L.kind == "maxpool":
            h = maxpool_fwd(h, L.kernel)
        elif L.kind == "avgpool":
            h = avgpool_int(h, L.kernel)
        elif L.kind == "add":
            h = align_add(h, qm.act_exp[i - 1], acts[L.src], qm.act_exp[L.src], qm.act_exp[i])
        acts.append(h if keep or i == len(qm.layers) - 1 or any(
            M.kind == "add" and M.src == i for M in qm.layers) else None)
    return acts, stats


def truncation_mse(acc, q):
    out, _, _ = kernels.window_truncate(acc, q)
    sat = np.clip(acc, kernels.ACC_MIN, kernels.ACC_MAX)
    err = sat.astype(np.float64) - out.astype(np.float64) * float(1 << q)
    return float(np.mean(err * err))


def best_window(acc, q_scale=0):
    """Smallest q in [q_scale, 16] minimizing truncation MSE over ``acc``."""
    errs = [truncation_mse(acc, q) for q in range(q_scale, Q_MAX + 1)]
    return q_scale + int(np.argmin(errs)), errs


def calibrate_quantization(float_model, images, q_scale=0, batch=512):
    """Quantize weights and choose every layer's output window.

    Layers are calibrated in order; each sees the integer outputs of the
    already-calibrated layers before it.  ``images`` are uint8 pixels.
    """
    if len(images) == 0:
        raise ValueError("calibration set is empty")
    if not 0 <= q_scale <= Q_MAX:
        raise ValueError(f"q_scale must be in [0, {Q_MAX}], got {q_scale}")
    images = np.asarray(images)
    if images.ndim == len(float_model.input_shape) and float_model.input_shape[0] == 1:
        images = images[:, None]
    weights, w_exp = {}, {}
    for L in float_model.layers:
        if L.kind in WEIGHTED:
            weights[L.name], w_exp[L.name] = quantize_weight(float_model.weights[L.name])
    h = to_channel_major(quantize_input(images))
    n = h.shape[1]
    q = {}
    exps = []
    cur_exp = INPUT_EXP
    acts = []
    saturations = {}
    for i, L in enumerate(float_model.layers):
        if L.kind in WEIGHTED:
            accs = []
            for s in range(0, n, batch):
                a, _, sp = accumulate(L, weights[L.name], h[:, s:s + batch])
                accs.append(a)
            acc = np.concatenate(accs, axis=1)
            over = int(np.count_nonzero((acc > kernels.ACC_MAX) | (acc < kernels.ACC_MIN)))
            if over:
                raise CalibrationError(L.name, over)
            q[L.name], _ = best_window(acc, q_scale)
            out, _, _ = kernels.window_truncate(acc, q[L.name])
            h = out.reshape((L.out_ch, n) + sp)
            cur_exp = cur_exp + w_exp[L.name] - q[L.name]
        elif L.kind == "relu":
            h = np.maximum(h, 0)
        elif L.kind == "maxpool":
            h = maxpool_fwd(h, L.kernel)
        elif L.kind == "avgpool":
            h = avgpool_int(h, L.kernel)
        elif L.kind == "add":
            e = min(cur_exp, exps[L.src])
            h = align_add(h, cur_exp, acts[L.src], exps[L.src], e)
            cur_exp = e
        exps.append(cur_exp)
        acts.append(h)
    return QuantizedModel(tuple(float_model.layers), weights, w_exp, q, tuple(exps),
                          tuple(float_model.input_shape), q_scale, INPUT_EXP, saturations)


def captured_accumulators(qm, images, layer, batch=512):
    """Accumulator values (B, N, M) of one weighted layer over ``images``."""
    idx = [L.name for L in qm.layers].index(layer)
    x = quantize_input(images)
    out = []
    for s in range(0, len(x), batch):
        captured = {}

        def grab(i, acc, cols):
            if i == idx:
                captured["acc"] = acc.copy()
        run_integer(qm, x[s:s + batch], acc_hook=grab)
        out.append(to_batch_major(captured["acc"]))
    return np.concatenate(out, axis=0)


# ---------------------------------------------------------------- model file

def _layer_dict(L):
    d = {"kind": L.kind, "name": L.name}
    for k in ("in_ch", "out_ch", "kernel", "stride", "padding", "src"):
        v = getattr(L, k)
        if v not in (None, 0) or k in ("kernel", "stride"):
            d[k] = v
    return d


def dumps_model(qm):
    """Serialize: magic line, one-line JSON header, little-endian int8 blob."""
    blob = io.BytesIO()
    tensors = []
    for L in qm.layers:
        if L.kind in WEIGHTED:
            w = np.ascontiguousarray(qm.weights[L.name], dtype="<i1")
            tensors.append({"layer": L.name, "dims": list(w.shape), "offset": blob.tell(), "nbytes": w.nbytes})
            blob.write(w.tobytes())
    header = {
        "format": MAGIC,
        "input_shape": list(qm.input_shape),
        "input_exp": qm.input_exp,
        "q_scale": qm.q_scale,
        "acc_bits": ACC_BITS,
        "product_bits": PRODUCT_BITS,
        "layers": [_layer_dict(L) for L in qm.layers],
        "q": qm.q,
        "w_exp": qm.w_exp,
        "act_exp": list(qm.act_exp),
        "tensors": tensors,
    }
    return (MAGIC + "\n" + json.dumps(header, sort_keys=True) + "\n").encode() + blob.getvalue()


def loads_model(data):
    magic, rest = data.split(b"\n", 1)
    if magic.decode() != MAGIC:
        raise ValueError(f"not a {MAGIC} model file")
    hline, blob = rest.split(b"\n", 1)
    h = json.loads(hline)
    layers = tuple(LayerSpec(**d) for d in h["layers"])
    weights = {}
    for t in h["tensors"]:
        raw = blob[t["offset"]:t["offset"] + t["nbytes"]]
        weights[t["layer"]] = np.frombuffer(raw, dtype="<i1").astype(np.int8).reshape(t["dims"])
    return QuantizedModel(layers, weights, {k: int(v) for k, v in h["w_exp"].items()},
                          {k: int(v) for k, v in h["q"].items()}, tuple(h["act_exp"]),
                          tuple(h["input_shape"]), int(h["q_scale"]), int(h["input_exp"]))


def save_model(qm, path):
    with open(path, "wb") as f:
        f.write(dumps_model(qm))


def load_model(path):
    with open(path, "rb") as f:
        return loads_model(f.read())


def model_digest(qm):
    return hashlib.sha256(dumps_model(qm)).hexdigest()[:16]
