"""Execution tiling of conv / fully-connected layers on a square array.

A weighted layer is a GEMM with ``M`` output positions (Ho*Wo, or 1 for a
fully-connected layer), reduction length ``K`` and ``N`` output channels.  A
tile covers up to ``array`` channels x ``array`` positions; neuron ``c*M + m``
of the layer lives in tile ``(c // array, m // array)``.
"""

from dataclasses import dataclass

import numpy as np

from .qmodel import WEIGHTED


@dataclass(frozen=True)
class GemmShape:
    name: str
    M: int
    K: int
    N: int

    @property
    def neurons(self):
        return self.M * self.N

    @property
    def macs(self):
        return self.M * self.K * self.N


def gemm_shapes(model):
    shapes = model.shapes
    out = []
    for i, L in enumerate(model.layers):
        if L.kind not in WEIGHTED:
            continue
        if L.kind == "conv2d":
            _, h, w = shapes[i]
            out.append(GemmShape(L.name, h * w, L.in_ch * L.kernel * L.kernel, L.out_ch))
        else:
            out.append(GemmShape(L.name, 1, L.in_ch, L.out_ch))
    return out


def tile_ids(g, array):
    """Tile index (row-major over channel blocks, then position blocks) of every neuron."""
    c = np.arange(g.N)[:, None] // array
    m = np.arange(g.M)[None, :] // array
    n_mb = -(-g.M // array)
    return (c * n_mb + m).ravel()


def tile_grid(g, array):
    return -(-g.N // array), -(-g.M // array)


def tile_sizes(g, array):
    """(channels, positions) covered by each tile in tile-id order."""
    n_cb, n_mb = tile_grid(g, array)
    out = []
    for cb in range(n_cb):
        ch = min(array, g.N - cb * array)
        for mb in range(n_mb):
            out.append((ch, min(array, g.M - mb * array)))
    return out
