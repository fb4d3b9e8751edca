"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import time

import numpy as np
import pytest

from ftdla import archmodel, baselines, bitcircuit as bc, explorer, faultsim, tiny
from ftdla.archmodel import ArchConfig
from ftdla.faultsim import FaultConfig, ProtectionMask


def report(n, ok, detail=""):
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
    return ok


def _le_within_ci(a, b):
    """``b`` is not below ``a`` beyond the interval of ``a``."""
    return b.mean >= a.lo


# ---------------------------------------------------------------- circuits

def test_criterion_01():
    t = time.time()
    a, b = bc.all_operand_pairs()
    assert len(a) == 65536
    ok = all(np.array_equal(bc.evaluate(bc.multiplier(st), a, b), a * b) for st in bc.STRUCTURES)
    dt = time.time() - t
    assert report(1, ok and dt < 10, f"exhaustive 8x8 products, {dt:.1f}s")


def test_criterion_02():
    t = time.time()
    rng = np.random.default_rng(2)
    bad = sites = 0
    for policy in bc.POLICIES:
        for st in bc.STRUCTURES:
            for s in (1, 2, 3):
                for qs in (0, 4, 7):
                    plan = bc.plan_protection(policy, s, qs, st)
                    windows = sorted(plan.runtime) if policy == "configurable" and not plan.degenerate else [qs]
                    for q in windows:
                        for site in plan.fault_sites(q):
                            a = rng.integers(-128, 128, 1000)
                            b = rng.integers(-128, 128, 1000)
                            got = bc.simulate_protected_multiply(a, b, plan, fault=site, q=q)
                            bad += int(np.any(got != a * b))
                            sites += 1
    dt = time.time() - t
    assert report(2, bad == 0 and sites > 0 and dt < 60, f"{sites} protected sites, {bad} unmasked, {dt:.1f}s")


def test_criterion_03():
    h = bc.column_heights()
    facts = {
        "heights": (h[7], h[8]) == (8, 7),
        "s2 window": bc.important_window(2, 0).columns == tuple(range(6, 16)),
        "s2 q5 window": bc.important_window(2, 5).columns == tuple(range(11, 16)),
    }
    p = bc.plan_protection("configurable", 1, 2, "shift-add")
    facts["fan-out"] = (p.unmerged_fanout, p.max_fanout) == (6, 4)
    assert report(3, all(facts.values()), str(facts))


def test_criterion_04():
    t = bc.build_area_table()
    red = {}
    order_ok = True
    for st in bc.STRUCTURES:
        r = [1 - t[("configurable", st, s, q)].redundant_units / t[("direct", st, s, q)].redundant_units
             for s in (1, 2, 3) for q in (4, 7)]
        red[st] = float(np.mean(r))
        for pol in bc.POLICIES:
            for s in range(1, 9):
                a = [t[(pol, st, s, q)].area_units for q in (7, 4, 0)]
                order_ok &= a[0] < a[1] < a[2]
    ok = order_ok and all(v >= 0.40 for v in red.values())
    detail = ", ".join(f"{k} mean reduction {v:.1%}" for k, v in red.items()) + f", q ordering {order_ok}"
    report(4, ok, detail)
    assert order_ok
    assert all(v >= 0.40 for v in red.values()), detail


# ---------------------------------------------------------------- gradients

def _loss_shifts(fm, x, y, li, delta, chunk=256):
    shape = fm.shapes[li]
    n = int(np.prod(shape))
    out = np.empty(n)
    for s in range(0, n, chunk):
        idx = np.arange(s, min(n, s + chunk))
        off = np.zeros((len(idx), n))
        off[np.arange(len(idx)), idx] = delta
        xb = np.repeat(x, len(idx), axis=0)
        out[idx] = fm.loss(fm.forward(xb, perturb={li: off.reshape((len(idx),) + shape)}), np.repeat(y, len(idx)))
    return out


def test_criterion_05(float_model):
    t = time.time()
    fm = float_model
    cx, cy = tiny.calibration_split()
    d = 1e-3
    fd_ok, fo_ok, nz = [], [], []
    for k in range(8):
        x, y = tiny.as_float_input(cx[k:k + 1]), cy[k:k + 1]
        grads, _, _ = fm.backward(x, y)
        base = fm.loss(fm.forward(x), y)[0]
        for li, g in zip(fm.neuron_layers, grads):
            g = g[0].ravel()
            lp = _loss_shifts(fm, x, y, li, d)
            lm = _loss_shifts(fm, x, y, li, -d)
            fd = (lp - lm) / (2 * d)
            # absolute floors sit at float64 roundoff of the loss (~1e-16 / delta)
            fd_ok.append(np.abs(fd - g) <= 1e-3 * np.abs(g) + 1e-10)
            fo_ok.append(np.abs((lp - base) - d * g) <= 0.1 * np.abs(d * g) + 1e-12)
            nz.append(g != 0)
    fd_ok, fo_ok, nz = map(np.concatenate, (fd_ok, fo_ok, nz))
    dt = time.time() - t
    ok = fd_ok.mean() >= 0.99 and fo_ok.mean() >= 0.90 and dt < 60
    assert report(5, ok, f"FD {fd_ok.mean():.2%}, first-order {fo_ok.mean():.2%} of {len(fd_ok)} neuron checks "
                         f"(nonzero-gradient subset {fd_ok[nz].mean():.2%} / {fo_ok[nz].mean():.2%}), {dt:.1f}s")


# ---------------------------------------------------------------- faults

def test_criterion_06(ctx):
    t = time.time()
    eng = ctx.engine(0)
    m = ctx.model(0)
    clean = eng.fault_free_accuracy()
    out0, st0 = eng.run(FaultConfig(0.0, 6, 1000), shortcut=False)
    zero_ok = st0["flips_drawn"] == 0 and np.all(out0.mean(axis=1) == clean)
    obs, exp = faultsim.flip_count_check(eng, FaultConfig(2e-4, 6, 1000))
    count_ok = abs(obs - exp) <= 3 * np.sqrt(exp)
    outf, stf = eng.run(FaultConfig(2e-4, 6, 1000), ProtectionMask.full(m), shortcut=False)
    full_ok = stf["flips_drawn"] > 0 and np.all(outf.mean(axis=1) == clean)
    dt = time.time() - t
    ok = zero_ok and count_ok and full_ok and dt < 120
    assert report(6, ok, f"BER0 exact {zero_ok}, flips {obs} vs {exp:.0f}, full protection exact {full_ok}, {dt:.1f}s")


@pytest.mark.slow
def test_criterion_07(ctx):
    eng = ctx.engine(0)
    m = ctx.model(0)
    cfg = FaultConfig(2e-4, ctx.fault_seed, 1000)
    sens, base = faultsim.layer_sensitivity(m, None, None, cfg, engine=eng)
    ranked = sorted(sens, key=lambda s: -s.score)
    top, bottom = ranked[0], ranked[-1]
    spread = top.score - bottom.score > 0 and top.lo > bottom.hi
    curve = faultsim.protection_curve(m, None, None, cfg, [s.name.split("+") for s in ranked], eng)
    mono = all(_le_within_ci(a, b) for a, b in zip(curve, curve[1:]))
    end = curve[-1].mean == eng.fault_free_accuracy()
    detail = " > ".join(f"{s.name}:{s.score:.4f}" for s in ranked)
    assert report(7, spread and mono and end, f"{detail}; curve monotone {mono}, ends clean {end}")


@pytest.mark.slow
def test_criterion_08(ctx):
    sp = explorer.Space()
    m = ctx.model(0)
    eng = ctx.engine(0)
    bits = ((2, 1), (3, 1), (4, 1), (3, 2), (4, 2), (4, 3))
    grid = {}
    for ber in (1e-4, 2e-4):
        cfg = FaultConfig(ber, ctx.fault_seed, 500)
        for s in sp.s_th:
            imap = ctx.importance(s, "global")
            for ib, nb in bits:
                mask = ProtectionMask.from_importance(m, imap, ib, nb)
                grid[(ber, s, ib, nb)] = faultsim.estimate(eng.run(cfg, mask)[0], cfg)
    bad = []
    for ber in (1e-4, 2e-4):
        for ib, nb in bits:
            for s0, s1 in zip(sp.s_th, sp.s_th[1:]):
                if not _le_within_ci(grid[(ber, s0, ib, nb)], grid[(ber, s1, ib, nb)]):
                    bad.append(("s_th", ber, s0, ib, nb))
        for s in sp.s_th:
            for lo, hi in [((3, 1), (3, 2)), ((4, 1), (4, 2)), ((4, 2), (4, 3))]:
                if not _le_within_ci(grid[(ber, s) + lo], grid[(ber, s) + hi]):
                    bad.append(("nb", ber, s, lo, hi))
            for lo, hi in [((2, 1), (3, 1)), ((3, 1), (4, 1)), ((3, 2), (4, 2))]:
                if not _le_within_ci(grid[(ber, s) + lo], grid[(ber, s) + hi]):
                    bad.append(("ib", ber, s, lo, hi))
    assert report(8, not bad, f"{len(grid)} grid points, violations {bad}")


# ---------------------------------------------------------------- architecture

def test_criterion_09(ctx):
    fm = ctx.float_model
    zero = archmodel.evaluate_design(fm, None, ArchConfig())
    zero_ok = zero.perf_ratio == 1.0
    s_vals = np.linspace(0.02, 0.4, 12)
    io = [archmodel.evaluate_design(fm, ctx.importance(s, "global"), ArchConfig(32, 8, False)).extra_io_bytes
          for s in s_vals]
    r2 = np.corrcoef(s_vals, io)[0, 1] ** 2
    rng = np.random.default_rng(9)
    inv = True
    for _ in range(100):
        s = float(rng.uniform(0.0, 0.5))
        pol = str(rng.choice(["global", "uniform"]))
        dot = int(rng.integers(1, 129))
        imap = ctx.importance(s, pol)
        a = archmodel.evaluate_design(fm, imap, ArchConfig(32, dot, True))
        b = archmodel.evaluate_design(fm, imap, ArchConfig(32, dot, False))
        inv &= a.extra_io_bytes == 0 and b.stall_cycles == 0 and b.perf_ratio == 1.0
        inv &= a.perf_ratio >= b.perf_ratio and b.extra_io_bytes >= a.extra_io_bytes
        inv &= a.table_bytes == b.table_bytes and b.bandwidth_ratio >= a.bandwidth_ratio
        inv &= (a.stall_cycles == 0) == (b.extra_io_bytes == 0)
    assert report(9, zero_ok and r2 > 0.99 and inv, f"zero-importance perf {zero.perf_ratio}, R2 {r2:.4f}, "
                                                  f"reuse invariants {inv}")


# ---------------------------------------------------------------- explorer

@pytest.mark.slow
def test_criterion_10(ctx):
    c = explorer.Constraints.from_baseline(ctx.acc0)
    brute, _ = explorer.brute_force(explorer.micro_space(), c, ctx)
    micro_ok = brute is not None
    for seed in range(3):
        r = explorer.explore(explorer.micro_space(), c, explorer.ExplorerConfig(iter_max_step=64, init_samples=10,
                                                                                seed=seed), ctx, certify=False)
        micro_ok &= r.best is not None and r.best.area == pytest.approx(brute.area)
    sp = explorer.Space()
    verified = beats = structural = 0
    for seed in range(10):
        r = explorer.explore(sp, c, explorer.ExplorerConfig(iter_max_step=150, seed=seed), ctx)
        ok, _ = explorer.verify_best(r, ctx, c)
        rr = explorer.random_search(sp, c, len(r.samples), ctx, seed=seed)
        verified += ok
        beats += r.best is not None and (rr.best is None or r.best.area < rr.best.area)
        structural += r.best is not None and r.best.point.pe_policy == "configurable" and r.best.point.nb_th == 1
    ok = micro_ok and verified == 10 and beats >= 8 and structural == 10
    assert report(10, ok, f"micro optimum {micro_ok}, verified {verified}/10, beats random {beats}/10, "
                          f"configurable nb=1 {structural}/10")


@pytest.mark.slow
def test_criterion_11(ctx):
    c = explorer.Constraints.from_baseline(ctx.acc0)
    res = explorer.explore(explorer.Space(), c, explorer.ExplorerConfig(seed=0), ctx)
    rows = {r.name: r for r in baselines.compare(ctx, c, res)}
    crt = [rows[f"TMR-CRT{k}"].area for k in (1, 2, 3)]
    crt_ok = crt[0] < crt[1] < crt[2]
    # repeating sensitive layers costs time (ALG) or time plus voting area (ARCH) but no array copies
    perf_ok = (rows["TMR-ALG"].perf_ratio > c.perf_ceiling and rows["TMR-ARCH"].perf_ratio > c.perf_ceiling
               and rows["TMR-ALG"].area == 1.0 and 1.0 < rows["TMR-ARCH"].area < crt[0])
    cl = rows.get("TMR-CL")
    cl_ok = cl is not None and cl.feasible and cl.area < crt[1]
    detail = ", ".join(f"{n} area {r.area:.3f} perf {r.perf_ratio:.3f}" for n, r in rows.items())
    assert report(11, crt_ok and perf_ok and cl_ok, detail)
