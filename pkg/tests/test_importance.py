import numpy as np
import pytest

from ftdla import faultsim, importance, tiling, tiny
from ftdla.importance import GradientRecord, ImportanceError
from ftdla.qmodel import FloatModel, fc


def _toy():
    # hidden neurons A, B feed a 2-way readout; dL/dA = 3 p1, dL/dB = p1 for label 0
    layers = [fc("h", 1, 2), fc("out", 2, 2)]
    w = {"h": np.array([[1.0], [1.0]]), "out": np.array([[0.0, 0.0], [3.0, 1.0]])}
    return FloatModel(layers, w, (1, 1, 1))


def test_toy_net_selects_larger_gradient():
    fm = _toy()
    x = np.full((1, 1, 1, 1), 0.25)
    rec = importance.accumulate_gradients(fm, x, np.array([0]))
    z = np.array([0.0, 3 * 0.25 + 0.25])
    p1 = np.exp(z[1]) / np.exp(z).sum()
    np.testing.assert_allclose(rec.values[:2], [3 * p1, p1])
    # the readout neurons also rank (|p - y| = p1 each); a quarter of four neurons is A alone
    imap = importance.select_important_neurons(fm, rec, 0.25)
    assert imap.layer_flags("h").tolist() == [True, False]
    assert not imap.layer_flags("out").any()


def test_s_th_one_selects_everything(float_model):
    rec = GradientRecord(np.random.default_rng(0).random(3370), ("conv1", "conv2", "conv3", "fc1", "fc2"),
                         tuple(float_model.neuron_counts()), 1)
    imap = importance.select_important_neurons(float_model, rec, 1.0)
    assert imap.flags.all()
    assert importance.all_neurons(float_model).flags.all()


@pytest.mark.parametrize("bad", [0.0, -0.1, 1.01])
def test_s_th_range(bad, ctx):
    with pytest.raises(ImportanceError):
        importance.select_important_neurons(ctx.float_model, ctx.grads, bad)


def test_policy_checked(ctx):
    with pytest.raises(ImportanceError):
        importance.select_important_neurons(ctx.float_model, ctx.grads, 0.1, "bogus")


def test_global_count_and_order(ctx):
    N = sum(ctx.float_model.neuron_counts())
    imap = importance.select_important_neurons(ctx.float_model, ctx.grads, 0.1)
    k = importance.round_half_up(N * 0.1)
    assert imap.flags.sum() == k
    g = ctx.grads.values
    assert g[imap.flags].min() >= g[~imap.flags].max()


def test_uniform_tiles_within_one_neuron(ctx):
    imap = importance.select_important_neurons(ctx.float_model, ctx.grads, 0.05, "uniform")
    for gs in tiling.gemm_shapes(ctx.float_model):
        tid = tiling.tile_ids(gs, 32)
        size = np.bincount(tid)
        cnt = imap.tile_counts[gs.name]
        assert np.all(np.abs(cnt - 0.05 * size) <= 1.0)


def test_top_k_ties_lower_index():
    v = np.array([1.0, 2.0, 2.0, 0.5, 2.0])
    assert importance.top_k(v, 2).tolist() == [1, 2]


def test_round_half_up():
    assert [importance.round_half_up(x) for x in (0.5, 1.5, 2.49, 168.5)] == [1, 2, 2, 169]


def test_gradients_accumulate_in_order(ctx):
    cx, cy = tiny.calibration_split()
    a = importance.accumulate_gradients(ctx.float_model, cx[:40], cy[:40], batch=7)
    b = importance.accumulate_gradients(ctx.float_model, cx[:40], cy[:40], batch=40)
    np.testing.assert_allclose(a.values, b.values, rtol=1e-12, atol=1e-15)
    assert a.n_samples == 40
    with pytest.raises(ImportanceError):
        importance.accumulate_gradients(ctx.float_model, cx[:0], cy[:0])


def test_position_table_bytes(ctx):
    imap = importance.select_important_neurons(ctx.float_model, ctx.grads, 0.1)
    want = sum(-(-n // 8) for n in ctx.float_model.neuron_counts())
    assert len(imap.to_bytes()) == want


def _cost(s_th):
    return lambda ib, nb: s_th * ib + (1 - s_th) * nb


def test_bit_config_trivial_targets(ctx):
    m = ctx.model(0)
    imap = ctx.importance(0.1, "global")
    cfg = faultsim.FaultConfig(2e-4, 5, 5)
    r = importance.evaluate_bit_config(m, None, None, imap, 0.0, cfg, _cost(0.1), engine=ctx.engine(0))
    assert (r.ib_th, r.nb_th) == (1, 1) and r.feasible
    clean = ctx.engine(0).fault_free_accuracy()
    cfg0 = faultsim.FaultConfig(0.0, 5, 5)
    r = importance.evaluate_bit_config(m, None, None, imap, clean, cfg0, _cost(0.1), engine=ctx.engine(0))
    assert (r.ib_th, r.nb_th) == (1, 1) and r.accuracy == clean


def test_bit_config_empty_importance_rejected(ctx):
    m = ctx.model(0)
    imap = ctx.importance(0.1, "global")
    empty = importance.ImportanceMap(np.zeros_like(imap.flags), 0.1, "global", imap.layer_names, imap.layer_sizes)
    with pytest.raises(ImportanceError):
        importance.evaluate_bit_config(m, None, None, empty, 0.5, faultsim.FaultConfig(1e-4), _cost(0.1),
                                       engine=ctx.engine(0))


def test_bit_config_matches_enumeration_oracle(ctx):
    m = ctx.model(0)
    eng = ctx.engine(0)
    imap = ctx.importance(0.1, "global")
    target = eng.fault_free_accuracy() - 0.05
    cfg = faultsim.FaultConfig(2e-4, 77, 30)
    cost = _cost(0.1)
    r = importance.evaluate_bit_config(m, None, None, imap, target, cfg, cost, engine=eng)
    assert r.feasible and r.accuracy >= target
    # independent enumeration with the same seed
    feasible = []
    for ib in range(1, 9):
        for nb in range(1, ib + 1):
            mask = faultsim.ProtectionMask.from_importance(m, imap.flags, ib, nb)
            acc = faultsim.estimate(eng.run(cfg, mask)[0], cfg).mean
            if acc >= target:
                feasible.append((cost(ib, nb), ib, nb))
    assert min(feasible)[0] == pytest.approx(r.cost)
    assert (r.ib_th, r.nb_th) == min(feasible)[1:]
