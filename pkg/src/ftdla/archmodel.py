"""Analytical performance / DRAM-traffic model of the heterogeneous accelerator.

Closed form (weight stationary, output-position streaming):

* a layer is a GEMM ``(M positions, K reduction, N channels)`` cut into
  ``ceil(N/A) x ceil(M/A)`` tiles of ``n_t`` channels x ``m_t`` positions;
* a tile walks ``ceil(K/A)`` reduction folds, each costing ``A`` cycles of
  weight fill plus ``m_t`` streaming cycles: ``c_t = ceil(K/A) * (A + m_t)``;
* the DPPU recomputes the tile's ``i_t`` important neurons with ``dot_size``
  MAC lanes: ``d_t = ceil(i_t * K / dot_size)`` cycles;
* with ``data_reuse`` the DPPU reads the tile's cached operands, so work that
  does not fit under the tile stalls the array: ``stall_t = max(0, d_t - c_t)``;
* without reuse the DPPU never blocks the array; MACs beyond the
  ``dot_size * c_t`` that fit in the tile window fetch both 1-byte operands
  from DRAM: ``extra_t = 2 * max(0, i_t*K - dot_size*c_t)``;
* every tile ships a one-bit-per-neuron position table, ``ceil(n_t*m_t/8)``
  bytes, whether or not it holds important neurons.

Baseline IO is one pass over int8 weights, the input and every weighted
layer's outputs.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tiling

WEIGHT_CACHE = 512 * 1024
DATA_CACHE = 256 * 1024


class ArchError(ValueError):
    pass


@dataclass(frozen=True)
class ArchConfig:
    array_size: int = 32
    dot_size: int = 32
    data_reuse: bool = True
    weight_cache: int = WEIGHT_CACHE
    data_cache: int = DATA_CACHE

    def __post_init__(self):
        if self.array_size < 1 or self.dot_size < 1:
            raise ArchError(f"array_size and dot_size must be >= 1 ({self.array_size}, {self.dot_size})")


@dataclass(frozen=True)
class TileSchedule:
    layer: str
    tile: int
    channels: int
    positions: int
    cycles: int
    important: int
    dppu_cycles: int
    stall: int
    extra_bytes: int
    table_bytes: int


@dataclass
class PerfReport:
    total_cycles: int
    baseline_cycles: int
    perf_ratio: float
    extra_io_bytes: int
    table_bytes: int
    baseline_io_bytes: int
    weight_bytes: int
    bandwidth_ratio: float
    stall_cycles: int
    layers: dict = field(default_factory=dict)

    @property
    def extra_io_vs_weights(self):
        return (self.extra_io_bytes + self.table_bytes) / self.weight_bytes

    def feasible(self, perf_limit=1.10, bandwidth_limit=1.10):
        return self.perf_ratio <= perf_limit and self.bandwidth_ratio <= bandwidth_limit

    def to_dict(self):
        d = asdict(self)
        d["extra_io_vs_weights"] = self.extra_io_vs_weights
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def tile_cycles(g, arch, positions):
    return -(-g.K // arch.array_size) * (arch.array_size + positions)


def layer_cycles(g, arch):
    """(total cycles, [(channels, positions, cycles)]) of one GEMM on the array."""
    if g.M * g.K * g.N >= 1 << 62:
        raise ArchError(f"{g.name}: layer too large for the cycle counters")
    if g.K * min(g.N, arch.array_size) > arch.weight_cache:
        raise ArchError(f"{g.name}: weight tile does not fit the weight cache")
    tiles = [(ch, m, tile_cycles(g, arch, m)) for ch, m in tiling.tile_sizes(g, arch.array_size)]
    return sum(t[2] for t in tiles), tiles


def schedule_dppu(important, K, cycles, arch):
    """(dppu cycles, stall cycles, extra DRAM bytes) for one tile."""
    macs = int(important) * K
    dppu = -(-macs // arch.dot_size)
    if arch.data_reuse:
        return dppu, max(0, dppu - cycles), 0
    return dppu, 0, 2 * max(0, macs - arch.dot_size * cycles)


def _counts(importance, g, n_tiles):
    if importance is None:
        return np.zeros(n_tiles, dtype=np.int64)
    cnt = importance.tile_counts.get(g.name)
    if cnt is None:
        return np.zeros(n_tiles, dtype=np.int64)
    if len(cnt) != n_tiles:
        raise ArchError(f"{g.name}: importance tiling ({len(cnt)} tiles) does not match the array ({n_tiles})")
    return np.asarray(cnt, dtype=np.int64)


def schedule(model, importance, arch):
    out = []
    if importance is not None and importance.array != arch.array_size:
        raise ArchError(f"importance was tiled for array {importance.array}, arch has {arch.array_size}")
    for g in tiling.gemm_shapes(model):
        _, tiles = layer_cycles(g, arch)
        cnt = _counts(importance, g, len(tiles))
        for t, ((ch, m, c), i_t) in enumerate(zip(tiles, cnt)):
            dppu, stall, extra = schedule_dppu(i_t, g.K, c, arch)
            out.append(TileSchedule(g.name, t, ch, m, c, int(i_t), dppu, stall, extra, -(-(ch * m) // 8)))
    return out


def baseline_io(model):
    """(total bytes, weight bytes) of one fault-free int8 inference."""
    gs = tiling.gemm_shapes(model)
    weights = sum(g.K * g.N for g in gs)
    acts = math.prod(model.input_shape) + sum(g.neurons for g in gs)
    return weights + acts, weights


def evaluate_design(model, importance, arch):
    tiles = schedule(model, importance, arch)
    base_cycles = sum(t.cycles for t in tiles)
    stall = sum(t.stall for t in tiles)
    extra = sum(t.extra_bytes for t in tiles)
    table = sum(t.table_bytes for t in tiles)
    io, wbytes = baseline_io(model)
    layers = {}
    for t in tiles:
        d = layers.setdefault(t.layer, {"tiles": 0, "cycles": 0, "stall": 0, "extra_bytes": 0,
                                        "table_bytes": 0, "important": 0})
        d["tiles"] += 1
        d["cycles"] += t.cycles
        d["stall"] += t.stall
        d["extra_bytes"] += t.extra_bytes
        d["table_bytes"] += t.table_bytes
        d["important"] += t.important
    return PerfReport(
        total_cycles=base_cycles + stall, baseline_cycles=base_cycles,
        perf_ratio=(base_cycles + stall) / base_cycles, extra_io_bytes=extra, table_bytes=table,
        baseline_io_bytes=io, weight_bytes=wbytes, bandwidth_ratio=(io + extra + table) / io,
        stall_cycles=stall, layers=layers)


def min_dot_size(model, importance, arch, lo=1, hi=4096):
    """Smallest dot_size with zero stalls under data reuse (None if above ``hi``)."""
    def ok(d):
        a = ArchConfig(arch.array_size, d, True, arch.weight_cache, arch.data_cache)
        return all(t.stall == 0 for t in schedule(model, importance, a))
    if not ok(hi):
        return None
    while lo < hi:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid + 1
    return lo
