import json
import math

import numpy as np
import pytest

from ftdla import archmodel, importance, tiling
from ftdla.archmodel import ArchConfig, ArchError
from ftdla.qmodel import FloatModel, conv, fc


def _model(layers, shape):
    w = {}
    for L in layers:
        if L.kind == "conv2d":
            w[L.name] = np.zeros((L.out_ch, L.in_ch, L.kernel, L.kernel))
        elif L.kind == "fc":
            w[L.name] = np.zeros((L.out_ch, L.in_ch))
    return FloatModel(layers, w, shape)


def _cycles(model, arch=ArchConfig()):
    return {g.name: archmodel.layer_cycles(g, arch)[0] for g in tiling.gemm_shapes(model)}


def test_single_tile_pointwise_conv():
    m = _model([conv("c", 32, 32, k=1, padding=0)], (32, 1, 1))
    total, tiles = archmodel.layer_cycles(tiling.gemm_shapes(m)[0], ArchConfig())
    assert len(tiles) == 1
    assert total == 32 + 1


def test_fc_equals_pointwise_conv():
    a = _model([conv("c", 32, 32, k=1, padding=0)], (32, 1, 1))
    b = _model([fc("f", 32, 32)], (32, 1, 1))
    assert list(_cycles(a).values()) == list(_cycles(b).values()) == [33]


def test_more_channels_more_cycles():
    a = _cycles(_model([conv("c", 8, 32)], (8, 8, 8)))["c"]
    b = _cycles(_model([conv("c", 8, 64)], (8, 8, 8)))["c"]
    assert b == 2 * a > a


def test_tiny_model_cycles(float_model):
    # hand evaluation of ceil(N/32) * ceil(M/32) tiles, each ceil(K/32) * (32 + m_t)
    def oracle(M, K, N):
        total = 0
        for _ in range(-(-N // 32)):
            for t in range(-(-M // 32)):
                m_t = min(32, M - 32 * t)
                total += -(-K // 32) * (32 + m_t)
        return total
    shapes = {g.name: (g.M, g.K, g.N) for g in tiling.gemm_shapes(float_model)}
    got = _cycles(float_model)
    assert got == {n: oracle(*s) for n, s in shapes.items()}
    assert got == {"conv1": 512, "conv2": 384, "conv3": 240, "fc1": 66, "fc2": 33}


def test_dppu_idle_without_importance():
    assert archmodel.schedule_dppu(0, 100, 50, ArchConfig(dot_size=4)) == (0, 0, 0)
    assert archmodel.schedule_dppu(0, 100, 50, ArchConfig(dot_size=4, data_reuse=False)) == (0, 0, 0)


def test_exact_fit_boundary():
    arch = ArchConfig(dot_size=8, data_reuse=True)
    K, cycles = 16, 100
    fit = 8 * cycles // K  # important neurons filling the window exactly
    assert archmodel.schedule_dppu(fit, K, cycles, arch) == (cycles, 0, 0)
    d, stall, _ = archmodel.schedule_dppu(fit + 1, K, cycles, arch)
    assert stall == d - cycles == 2


def test_overflow_bytes_without_reuse():
    arch = ArchConfig(dot_size=8, data_reuse=False)
    K, cycles = 10, 40
    # 8 * 40 = 320 MACs fit; 42 neurons need 420, overflow 100
    dppu, stall, extra = archmodel.schedule_dppu(42, K, cycles, arch)
    assert (stall, extra) == (0, 200)
    assert dppu == math.ceil(420 / 8)


def test_zero_importance_report(float_model):
    rep = archmodel.evaluate_design(float_model, None, ArchConfig())
    io, wb = archmodel.baseline_io(float_model)
    table = sum(-(-(ch * m) // 8) for g in tiling.gemm_shapes(float_model) for ch, m in tiling.tile_sizes(g, 32))
    assert rep.perf_ratio == 1.0 and rep.extra_io_bytes == 0
    assert rep.table_bytes == table
    assert rep.bandwidth_ratio == pytest.approx(1 + table / io)
    assert rep.total_cycles == 1235
    d = json.loads(rep.to_json())
    assert d["extra_io_vs_weights"] == pytest.approx(table / wb)


def test_baseline_io(float_model):
    io, wb = archmodel.baseline_io(float_model)
    gs = tiling.gemm_shapes(float_model)
    assert wb == sum(g.K * g.N for g in gs)
    assert io == wb + 256 + sum(float_model.neuron_counts())


def test_uniform_policy_with_sized_dppu_has_no_stalls(ctx):
    imap = ctx.importance(0.05, "uniform")
    dot = archmodel.min_dot_size(ctx.float_model, imap, ArchConfig())
    assert dot is not None
    rep = archmodel.evaluate_design(ctx.float_model, imap, ArchConfig(32, dot, True))
    assert rep.perf_ratio == 1.0 and rep.stall_cycles == 0
    worse = archmodel.evaluate_design(ctx.float_model, imap, ArchConfig(32, dot - 1, True))
    assert worse.stall_cycles > 0


def test_reuse_vs_fetch(ctx):
    imap = ctx.importance(0.3, "global")
    a = archmodel.evaluate_design(ctx.float_model, imap, ArchConfig(32, 8, True))
    b = archmodel.evaluate_design(ctx.float_model, imap, ArchConfig(32, 8, False))
    assert a.extra_io_bytes == 0 and a.perf_ratio > 1.0
    assert b.stall_cycles == 0 and b.perf_ratio == 1.0 and b.extra_io_bytes > 0
    assert a.table_bytes == b.table_bytes


def test_arch_errors(ctx):
    with pytest.raises(ArchError):
        ArchConfig(dot_size=0)
    imap = importance.select_important_neurons(ctx.float_model, ctx.grads, 0.1, array=16)
    with pytest.raises(ArchError):
        archmodel.evaluate_design(ctx.float_model, imap, ArchConfig(32))
    big = _model([fc("f", 40000, 32)], (1, 200, 200))
    with pytest.raises(ArchError):
        archmodel.evaluate_design(big, None, ArchConfig())


def test_feasible_flag(float_model):
    rep = archmodel.evaluate_design(float_model, None, ArchConfig())
    assert rep.feasible()
    assert not rep.feasible(bandwidth_limit=1.0)
