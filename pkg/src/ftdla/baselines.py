"""Reference fault-tolerance designs compared against the cross-layer optimum.

* ``Base``       unprotected array
* ``TMR-CRTk``   every PE triplicates its top ``k`` product bits, unconstrained
                 quantization (q_scale 0), direct redundancy
* ``TMR-ARCH``   the array is split in three voted thirds while sensitive layers
                 run: those layers take 3x cycles; area adds one 8-bit voter per
                 column triple and a 2:1 selector per column output bit
* ``TMR-ALG``    sensitive layers are executed three times and voted in
                 software: no area, 3x cycles on those layers
* ``TMR-CL``     the explorer's certified best point

The sensitive-layer set is the shortest prefix of the sensitivity ranking
whose fully protected accuracy meets both floors.
"""

import csv
from dataclasses import dataclass
from typing import Optional

from . import archmodel, bitcircuit, faultsim, tiling


@dataclass
class BaselineRow:
    name: str
    area: float
    perf_ratio: float
    bw_ratio: float
    acc_high: Optional[faultsim.AccuracyEstimate]
    acc_low: Optional[faultsim.AccuracyEstimate]
    feasible: bool
    layers: tuple = ()

    def values(self):
        def est(a):
            return ("", "", "") if a is None else (f"{a.mean:.6f}", f"{a.lo:.6f}", f"{a.hi:.6f}")
        return [self.name, f"{self.area:.6f}", f"{self.perf_ratio:.6f}", f"{self.bw_ratio:.6f}",
                *est(self.acc_high), *est(self.acc_low), int(self.feasible), "+".join(self.layers)]


FIELDS = ("design", "area", "perf_ratio", "bw_ratio", "acc1", "acc1_lo", "acc1_hi", "acc2", "acc2_lo", "acc2_hi",
          "feasible", "layers")


def _acc(engine, mask, ber, ctx):
    cfg = faultsim.FaultConfig(ber, ctx.fault_seed, ctx.inner_trials)
    return faultsim.estimate(engine.run(cfg, mask)[0], cfg)


def _ok(c, hi, lo, perf, bw):
    return (hi.lo >= c.acc_high_floor and lo.lo >= c.acc_low_floor and perf <= c.perf_ceiling
            and bw <= c.bandwidth_ceiling)


def layer_cycles(model, array=32):
    arch = archmodel.ArchConfig(array, 1, True)
    return {g.name: archmodel.layer_cycles(g, arch)[0] for g in tiling.gemm_shapes(model)}


def repeated_perf(model, layers, factor=3, array=32):
    cyc = layer_cycles(model, array)
    base = sum(cyc.values())
    return (base + (factor - 1) * sum(cyc[n] for n in layers)) / base


def arch_area(ctx, array=32):
    v = ctx.costs["voter"]
    m = ctx.costs["mux2"]
    extra = (array // 3) * 8 * v + array * 8 * m
    return 1.0 + extra / (array * array * ctx.base)


def crt_area(ctx, k, array=32):
    return bitcircuit.area(bitcircuit.plan_protection("direct", k, 0, ctx.structure, ctx.costs), ctx.costs) / ctx.base


def sensitive_layers(ctx, c, groups=None):
    """Shortest sensitivity-ordered layer prefix meeting both accuracy floors."""
    model = ctx.model(0)
    eng = ctx.engine(0)
    cfg = faultsim.FaultConfig(c.ber_low, ctx.fault_seed, ctx.inner_trials)
    sens, _ = faultsim.layer_sensitivity(model, None, None, cfg, groups, eng)
    order = [s.name.split("+") for s in sorted(sens, key=lambda s: -s.score)]
    mask = faultsim.ProtectionMask.none(model)
    chosen = []
    for g in [[]] + order:
        mask = mask.with_layers(g)
        chosen += g
        hi, lo = _acc(eng, mask, c.ber_high, ctx), _acc(eng, mask, c.ber_low, ctx)
        if hi.lo >= c.acc_high_floor and lo.lo >= c.acc_low_floor:
            return tuple(chosen), hi, lo, sens
    return tuple(chosen), hi, lo, sens


def compare(ctx, c, cl_result=None, crt_bits=(1, 2, 3)):
    model = ctx.model(0)
    eng = ctx.engine(0)
    io_base = 1.0
    rows = []
    none = faultsim.ProtectionMask.none(model)
    hi, lo = _acc(eng, none, c.ber_high, ctx), _acc(eng, none, c.ber_low, ctx)
    rows.append(BaselineRow("Base", 1.0, 1.0, io_base, hi, lo, _ok(c, hi, lo, 1.0, io_base)))
    for k in crt_bits:
        mask = faultsim.ProtectionMask.uniform(model, k)
        hi, lo = _acc(eng, mask, c.ber_high, ctx), _acc(eng, mask, c.ber_low, ctx)
        a = crt_area(ctx, k)
        rows.append(BaselineRow(f"TMR-CRT{k}", a, 1.0, io_base, hi, lo, _ok(c, hi, lo, 1.0, io_base)))
    layers, hi, lo, _ = sensitive_layers(ctx, c)
    perf = repeated_perf(model, layers)
    rows.append(BaselineRow("TMR-ARCH", arch_area(ctx), perf, io_base, hi, lo, _ok(c, hi, lo, perf, io_base), layers))
    rows.append(BaselineRow("TMR-ALG", 1.0, perf, io_base, hi, lo, _ok(c, hi, lo, perf, io_base), layers))
    if cl_result is not None and cl_result.best is not None:
        b = cl_result.best
        rows.append(BaselineRow("TMR-CL", b.area, b.perf_ratio, b.bw_ratio, b.acc_high, b.acc_low, b.feasible))
    return rows


def write_rows(rows, path, header_lines=()):
    with open(path, "w", newline="") as f:
        for h in header_lines:
            f.write(f"# {h}\n")
        w = csv.writer(f)
        w.writerow(FIELDS)
        for r in rows:
            w.writerow(r.values())
