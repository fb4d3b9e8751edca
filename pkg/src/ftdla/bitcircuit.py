"""Gate-level 8x8 signed multiplier models and their selective-TMR plans.

Multiplier
----------
Signed operands use the modified Baugh-Wooley array: partial products
``a_i & b_j`` at column ``i + j``, complemented (NAND) when exactly one of
``i, j`` is 7, a constant 1 added at column 8 and bit 15 inverted at the
output.  The 64 partial products give column heights 1..8..1 over columns
0..14; the constant is not counted in the profile.

Two reduction structures are built as explicit netlists of half/full adder
cells:

* ``shift-add``: row i (1..7) is added to the running sum by a ripple row of
  one half adder and seven full adders spanning columns i..i+7; the constant
  enters row 1's top cell.
* ``wallace``: 3:2 / 2:2 compression stages until every column holds at most
  two bits, then a ripple carry-propagate adder.

A cell belongs to the column of its sum output.

Protection
----------
For ``s`` protected bits and a quantization floor ``q_scale`` the important
columns are the product bits that can be among the top ``s`` bits of any legal
window ``[q, q+7]`` (``q_scale <= q <= 16``), clipped to the 16-bit product.
The protected cell set of a column set is every cell of those columns plus the
cells producing product bits in the set.

* ``direct``: all cells of the important columns are triplicated and the
  protected region's boundary signals are voted.
* ``configurable``: a shared redundant array of ``capacity`` cell slots (two
  spare copies each) is steered by multiplexers to the cells needed by the
  runtime window.  Capacity is the largest per-window demand.  Adjacent
  columns are merged greedily from the high end while no merged window needs
  more than the capacity; a window activates every merged group it touches.
  Fan-out of a slot is the number of distinct cells it serves across windows.

Unit costs are gate equivalents (full adder 1.0, half adder 0.5, 2:1 mux 0.4,
per-bit voter 0.8) and can be overridden with a ``key=value`` file.
"""

import csv
import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels
from ._kernels_py import AND, FA, HA, NAND, NOT

WIDTH = 8
PRODUCT_WIDTH = 16
Q_MAX = 16
STRUCTURES = ("shift-add", "wallace")
POLICIES = ("direct", "configurable")

DEFAULT_COSTS = {"full_adder": 1.0, "half_adder": 0.5, "mux2": 0.4, "voter": 0.8}


class CircuitError(ValueError):
    pass


def load_cost_model(path):
    costs = dict(DEFAULT_COSTS)
    with open(path) as f:
        for line in f:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            k, _, v = line.partition("=")
            k = k.strip()
            if k not in costs:
                raise CircuitError(f"unknown cost key {k!r}")
            costs[k] = float(v)
    for k, v in costs.items():
        if v <= 0:
            raise CircuitError(f"cost {k} must be positive")
    return costs


# ------------------------------------------------------------------ profile

@dataclass(frozen=True)
class ColumnProfile:
    heights: tuple
    full_adders: tuple  # per column
    half_adders: tuple
    structure: str

    @property
    def cells(self):
        return tuple(f + h for f, h in zip(self.full_adders, self.half_adders))


def column_heights(width=WIDTH):
    if width != WIDTH:
        raise CircuitError(f"only {WIDTH}-bit multipliers are modeled, got {width}")
    return tuple(min(k + 1, width, 2 * width - 1 - k) for k in range(2 * width - 1))


def column_profile(width=WIDTH, structure="wallace"):
    heights = column_heights(width)
    net = multiplier(structure)
    fa = [0] * PRODUCT_WIDTH
    ha = [0] * PRODUCT_WIDTH
    for n in net.cells:
        if net.ntype[n] == FA:
            fa[net.column[n]] += 1
        else:
            ha[net.column[n]] += 1
    return ColumnProfile(heights, tuple(fa), tuple(ha), structure)


# ------------------------------------------------------------------ netlist

class Netlist:
    """Levelized gate list; every node has up to 3 inputs and 2 outputs."""

    def __init__(self, structure):
        self.structure = structure
        self.signals = []
        self.ntype, self.nin, self.nout, self.column = [], [], [], []
        self.inputs = {}
        self.outputs = []  # 16 product-bit signals
        self.producer = {}  # signal -> node

    def _sig(self, name):
        self.signals.append(name)
        return len(self.signals) - 1

    def input(self, name):
        s = self._sig(name)
        self.inputs[name] = s
        return s

    def node(self, kind, ins, column=-1):
        i = len(self.ntype)
        n_out = 2 if kind in (HA, FA) else 1
        outs = [self._sig(f"n{i}.{k}") for k in range(n_out)]
        self.ntype.append(kind)
        self.nin.append(list(ins) + [-1] * (3 - len(ins)))
        self.nout.append(outs + [-1] * (2 - n_out))
        self.column.append(column)
        for s in outs:
            self.producer[s] = i
        return outs

    def finalize(self, outputs):
        self.outputs = list(outputs)
        self.ntype_a = np.array(self.ntype, dtype=np.int8)
        self.nin_a = np.array(self.nin, dtype=np.int32)
        self.nout_a = np.array(self.nout, dtype=np.int32)
        self.cells = [i for i, t in enumerate(self.ntype) if t in (HA, FA)]
        self.consumers = {}
        for i, ins in enumerate(self.nin):
            for s in ins:
                if s >= 0:
                    self.consumers.setdefault(s, set()).add(i)
        # cell producing each product bit (through the output inverter for bit 15)
        self.bit_producer = {}
        for k, s in enumerate(self.outputs):
            n = self.producer.get(s)
            while n is not None and self.ntype[n] == NOT:
                n = self.producer.get(self.nin[n][0])
            if n is not None and self.ntype[n] in (HA, FA):
                self.bit_producer[k] = n
        self.output_set = set(self.outputs)
        for s in list(self.output_set):
            n = self.producer.get(s)
            if n is not None and self.ntype[n] == NOT:
                self.output_set.add(self.nin[n][0])
        return self

    @property
    def n_signals(self):
        return len(self.signals)


def _partial_products(net):
    a = [net.input(f"a{i}") for i in range(WIDTH)]
    b = [net.input(f"b{j}") for j in range(WIDTH)]
    one = net.input("one")
    pp = {}
    for i in range(WIDTH):
        for j in range(WIDTH):
            kind = NAND if (i == WIDTH - 1) != (j == WIDTH - 1) else AND
            pp[i, j] = net.node(kind, [a[i], b[j]])[0]
    return pp, one


def _shift_add():
    net = Netlist("shift-add")
    pp, one = _partial_products(net)
    run = {k: pp[0, k] for k in range(WIDTH)}  # running sum bits by column
    run[WIDTH] = one  # constant 1 at column 8
    out = [run[0]]
    for i in range(1, WIDTH):
        s, carry = net.node(HA, [run[i], pp[i, 0]], column=i)
        new = {i: s}
        for j in range(1, WIDTH):
            k = i + j
            s, carry = net.node(FA, [run[k], pp[i, j], carry], column=k)
            new[k] = s
        new[i + WIDTH] = carry
        out.append(new[i])
        run.update(new)
    for k in range(WIDTH, PRODUCT_WIDTH - 1):
        out.append(run[k])
    out.append(net.node(NOT, [run[PRODUCT_WIDTH - 1]], column=PRODUCT_WIDTH - 1)[0])
    return net.finalize(out)


def _wallace():
    net = Netlist("wallace")
    pp, one = _partial_products(net)
    cols = [[] for _ in range(PRODUCT_WIDTH + 1)]
    for (i, j), s in sorted(pp.items()):
        cols[i + j].append(s)
    cols[WIDTH].append(one)
    while max(len(c) for c in cols[:PRODUCT_WIDTH]) > 2:
        nxt = [[] for _ in range(PRODUCT_WIDTH + 1)]
        for k in range(PRODUCT_WIDTH):
            bits = cols[k]
            n_fa, rem = divmod(len(bits), 3)
            p = 0
            for _ in range(n_fa):
                s, c = net.node(FA, bits[p:p + 3], column=k)
                nxt[k].append(s)
                nxt[k + 1].append(c)
                p += 3
            if rem == 2:
                s, c = net.node(HA, bits[p:p + 2], column=k)
                nxt[k].append(s)
                nxt[k + 1].append(c)
                p += 2
            nxt[k].extend(bits[p:])
        cols = nxt
    out = []
    carry = None
    for k in range(PRODUCT_WIDTH):
        bits = list(cols[k]) + ([carry] if carry is not None else [])
        carry = None
        if len(bits) == 1:
            s = bits[0]
        elif len(bits) == 2:
            s, carry = net.node(HA, bits, column=k)
        elif len(bits) == 3:
            s, carry = net.node(FA, bits, column=k)
        else:
            raise AssertionError("reduction left more than two bits")
        if k == PRODUCT_WIDTH - 1:
            s = net.node(NOT, [s], column=k)[0]
        out.append(s)
    return net.finalize(out)


@lru_cache(maxsize=None)
def multiplier(structure):
    if structure == "shift-add":
        return _shift_add()
    if structure == "wallace":
        return _wallace()
    raise CircuitError(f"unsupported multiplier structure {structure!r}")


# ---------------------------------------------------------------- evaluation

def pack_lanes(bits):
    """bool (n,) -> uint64 words, lane i in bit i % 64 of word i // 64."""
    n = len(bits)
    pad = (-n) % 64
    b = np.concatenate([np.asarray(bits, dtype=bool), np.zeros(pad, dtype=bool)])
    return np.packbits(b, bitorder="little").view("<u8").astype(np.uint64)


def unpack_lanes(words, n):
    return np.unpackbits(np.asarray(words, dtype="<u8").view(np.uint8), bitorder="little")[:n].astype(bool)


def evaluate(net, a, b, protected=(), fault=None):
    """Products of the int8 operand arrays ``a``, ``b`` (bit-parallel).

    ``protected`` is a collection of cell node ids that run as three voted
    replicas; ``fault = (node, replica, output)`` inverts one output of one
    copy (replica 0 for an unprotected cell).
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    n = len(a)
    W = -(-n // 64)
    vals = np.zeros((4, net.n_signals, W), dtype=np.uint64)
    au = a & 0xFF
    bu = b & 0xFF
    for i in range(WIDTH):
        vals[3, net.inputs[f"a{i}"]] = pack_lanes((au >> i) & 1)
        vals[3, net.inputs[f"b{i}"]] = pack_lanes((bu >> i) & 1)
    vals[3, net.inputs["one"]] = np.uint64(0xFFFFFFFFFFFFFFFF)
    nprot = np.zeros(len(net.ntype), dtype=np.uint8)
    for c in protected:
        nprot[c] = 1
    sprot = np.zeros(net.n_signals, dtype=np.uint8)
    for c in protected:
        for s in net.nout[c]:
            if s >= 0:
                sprot[s] = 1
    fnode, frep, fout = fault if fault is not None else (-1, -1, -1)
    kernels.netlist_eval(vals, net.ntype_a, net.nin_a, net.nout_a, nprot, sprot, int(fnode), int(frep), int(fout))
    p = np.zeros(n, dtype=np.int64)
    for k, s in enumerate(net.outputs):
        p |= unpack_lanes(vals[3, s], n).astype(np.int64) << k
    return np.where(p >= 1 << 15, p - (1 << 16), p)


def all_operand_pairs():
    v = np.arange(-128, 128, dtype=np.int64)
    a, b = np.meshgrid(v, v, indexing="ij")
    return a.ravel(), b.ravel()


# ------------------------------------------------------------------- windows

@dataclass(frozen=True)
class ImportantWindow:
    s: int
    q_scale: int
    columns: tuple  # multiplier product columns, ascending
    accumulator_bits: tuple  # (lo, hi) window of legal accumulator bits

    def runtime_columns(self, q):
        return window_columns(self.s, q)


def window_columns(s, q):
    lo = min(q + 8 - s, PRODUCT_WIDTH - 1)
    hi = min(q + 7, PRODUCT_WIDTH - 1)
    return tuple(range(lo, hi + 1))


def important_window(s, q_scale):
    if not 1 <= s <= 8:
        raise CircuitError(f"s must be in 1..8, got {s}")
    if not 0 <= q_scale <= Q_MAX:
        raise CircuitError(f"q_scale must be in 0..{Q_MAX}, got {q_scale}")
    cols = set()
    for q in range(q_scale, Q_MAX + 1):
        cols.update(window_columns(s, q))
    return ImportantWindow(s, q_scale, tuple(sorted(cols)), (q_scale, 23))


def legal_windows(s, q_scale):
    """Distinct runtime column windows with the lowest q producing each."""
    seen = {}
    for q in range(q_scale, Q_MAX + 1):
        seen.setdefault(window_columns(s, q), q)
    return seen


# --------------------------------------------------------------------- plans

def cells_for_columns(net, columns):
    cols = set(columns)
    out = {c for c in net.cells if net.column[c] in cols}
    for k in cols:
        if k in net.bit_producer:
            out.add(net.bit_producer[k])
    return out


def canonical(net, cells):
    return sorted(cells, key=lambda c: (net.column[c], c))


def boundary_signals(net, cells):
    """Outputs of ``cells`` that are product bits or are read outside the set."""
    cells = set(cells)
    out = set()
    for c in cells:
        for s in net.nout[c]:
            if s < 0:
                continue
            if s in net.output_set or any(n not in cells for n in net.consumers.get(s, ())):
                out.add(s)
    return out


def cell_cost(net, c, costs):
    return costs["full_adder"] if net.ntype[c] == FA else costs["half_adder"]


@dataclass
class ProtectedMultiplierPlan:
    policy: str
    structure: str
    s: int
    q_scale: int
    columns: tuple
    protected_cells: tuple  # union over runtime windows
    groups: tuple = ()
    capacity: int = 0
    fanouts: tuple = ()
    unmerged_fanout: int = 0
    voters: int = 0
    input_muxes: int = 0
    output_muxes: int = 0
    redundant_fa: int = 0
    redundant_ha: int = 0
    degenerate: bool = False
    runtime: dict = field(default_factory=dict)  # lowest q -> protected cells for that window

    @property
    def max_fanout(self):
        return max(self.fanouts) if self.fanouts else 1

    @property
    def muxes(self):
        return self.input_muxes + self.output_muxes

    def protected_at(self, q):
        """Cells running under TMR when the layer's window starts at ``q``."""
        if self.policy == "direct" or self.degenerate:
            return set(self.protected_cells)
        cols = window_columns(self.s, q)
        for q0, cells in self.runtime.items():
            if window_columns(self.s, q0) == cols:
                return set(cells)
        raise CircuitError(f"q={q} is not a legal window for q_scale={self.q_scale}")

    def fault_sites(self, q=None, protected=True):
        net = multiplier(self.structure)
        if protected:
            cells = self.protected_at(self.q_scale if q is None else q)
            reps = range(3)
        else:
            cells = set(net.cells) - (self.protected_at(self.q_scale if q is None else q))
            reps = range(1)
        return [(c, r, o) for c in canonical(net, cells) for r in reps for o in range(2)]


EMPTY_PLAN = ProtectedMultiplierPlan("direct", "wallace", 0, 0, (), ())


def _direct(net, s, q_scale, win):
    cells = cells_for_columns(net, win.columns)
    fa = sum(1 for c in cells if net.ntype[c] == FA)
    return ProtectedMultiplierPlan(
        "direct", net.structure, s, q_scale, win.columns, tuple(canonical(net, cells)),
        capacity=len(cells), fanouts=(1,) * len(cells), unmerged_fanout=1,
        voters=len(boundary_signals(net, cells)), redundant_fa=2 * fa, redundant_ha=2 * (len(cells) - fa),
        runtime={q_scale: tuple(canonical(net, cells))})


def _slot_fanouts(net, configs):
    slots = {}
    for cells in configs:
        for r, c in enumerate(canonical(net, cells)):
            slots.setdefault(r, set()).add(c)
    return tuple(len(slots[r]) for r in sorted(slots))


def _port_muxes(net, runtime):
    """2:1 muxes needed so every slot input port sees its per-window source.

    A port fed by another slot's output in every window is hard-wired; a port
    needs ``n-1`` muxes for ``n`` distinct sources across windows.
    """
    srcs = {}
    for cells in runtime.values():
        cs = canonical(net, cells)
        slot = {c: r for r, c in enumerate(cs)}
        for r, c in enumerate(cs):
            for p, sgn in enumerate(net.nin[c]):
                if sgn < 0:
                    key = ("zero",)  # half adder mapped onto a full-adder slot
                else:
                    pr = net.producer.get(sgn)
                    key = ("slot", slot[pr], net.nout[pr].index(sgn)) if pr in slot else ("sig", sgn)
                srcs.setdefault((r, p), set()).add(key)
    return sum(len(v) - 1 for v in srcs.values())


def _configurable(net, s, q_scale, win):
    windows = legal_windows(s, q_scale)
    demand = {q: cells_for_columns(net, cols) for cols, q in windows.items()}
    capacity = max(len(d) for d in demand.values())
    unmerged = _slot_fanouts(net, demand.values())

    def grouped(groups):
        out = {}
        for cols, q in windows.items():
            sel = set()
            for g in groups:
                if set(g) & set(cols):
                    sel.update(g)
            out[q] = cells_for_columns(net, sel)
        return out

    # greedy merge from the high end (the left of a drawn array)
    groups = [(c,) for c in sorted(win.columns, reverse=True)]
    i = 0
    while i + 1 < len(groups):
        trial = groups[:i] + [tuple(sorted(groups[i] + groups[i + 1]))] + groups[i + 2:]
        if max(len(v) for v in grouped(trial).values()) <= capacity:
            groups = trial
        else:
            i += 1
    runtime = grouped(groups)
    fanouts = _slot_fanouts(net, runtime.values())
    input_muxes = _port_muxes(net, runtime)
    bsig_slots = {}
    for cells in runtime.values():
        slot = {c: r for r, c in enumerate(canonical(net, cells))}
        for sgn in boundary_signals(net, cells):
            bsig_slots.setdefault(sgn, set()).add(slot[net.producer[sgn]])
    output_muxes = sum(2 * (len(v) - 1) for v in bsig_slots.values())
    union = set().union(*runtime.values())
    return ProtectedMultiplierPlan(
        "configurable", net.structure, s, q_scale, win.columns, tuple(canonical(net, union)),
        groups=tuple(sorted(groups)), capacity=capacity, fanouts=fanouts, unmerged_fanout=max(unmerged),
        voters=len(bsig_slots), input_muxes=input_muxes, output_muxes=output_muxes,
        redundant_fa=2 * capacity, redundant_ha=0,
        runtime={q: tuple(canonical(net, c)) for q, c in runtime.items()})


def plan_protection(policy, s, q_scale, structure="wallace", costs=None, fallback=True):
    """Protection plan; with ``fallback`` a configurable plan whose steering
    costs more than triplication is replaced by the direct layout."""
    if policy not in POLICIES:
        raise CircuitError(f"unsupported protection policy {policy!r}")
    net = multiplier(structure)
    win = important_window(s, q_scale)
    direct = _direct(net, s, q_scale, win)
    if policy == "direct":
        return direct
    conf = _configurable(net, s, q_scale, win)
    costs = costs or DEFAULT_COSTS
    if fallback and redundant_area(conf, costs) > redundant_area(direct, costs):
        # steering costs more than plain triplication: keep the direct layout
        d = _direct(net, s, q_scale, win)
        d.policy = "configurable"
        d.degenerate = True
        d.unmerged_fanout = conf.unmerged_fanout
        return d
    return conf


# ---------------------------------------------------------------------- area

def accumulator_protection(s, costs):
    return s * (2 * costs["full_adder"] + costs["voter"])


def base_area(structure="wallace", costs=None):
    """Unprotected multiplier: reduction cells only."""
    costs = costs or DEFAULT_COSTS
    net = multiplier(structure)
    return sum(cell_cost(net, c, costs) for c in net.cells)


def redundant_area(plan, costs=None):
    costs = costs or DEFAULT_COSTS
    if plan.s == 0:
        return 0.0
    return (plan.redundant_fa * costs["full_adder"] + plan.redundant_ha * costs["half_adder"]
            + plan.muxes * costs["mux2"] + plan.voters * costs["voter"]
            + accumulator_protection(plan.s, costs))


def area_breakdown(plan, costs=None):
    costs = costs or DEFAULT_COSTS
    if plan.s == 0:
        return {"reduction": 0.0, "redundant_cells": 0.0, "muxes": 0.0, "voters": 0.0, "accumulator": 0.0}
    return {
        "reduction": base_area(plan.structure, costs),
        "redundant_cells": plan.redundant_fa * costs["full_adder"] + plan.redundant_ha * costs["half_adder"],
        "muxes": plan.muxes * costs["mux2"],
        "voters": plan.voters * costs["voter"],
        "accumulator": accumulator_protection(plan.s, costs),
    }


def area(plan, costs=None):
    """Gate-equivalent area of one protected multiplier (+ accumulator protection)."""
    return float(sum(area_breakdown(plan, costs).values()))


# --------------------------------------------------------------- simulation

def simulate_protected_multiply(a, b, plan, fault=None, q=None):
    """Product(s) computed by the plan's netlist with an optional single fault.

    ``q`` selects the runtime window for configurable plans (default: the
    lowest legal one).
    """
    net = multiplier(plan.structure)
    scalar = np.ndim(a) == 0
    q = plan.q_scale if q is None else q
    prot = plan.protected_at(q) if plan.s else set()
    if fault is not None:
        node = fault[0]
        if node not in net.cells:
            raise CircuitError(f"node {node} is not an adder cell")
    p = evaluate(net, np.atleast_1d(a), np.atleast_1d(b), prot, fault)
    return int(p[0]) if scalar else p


# --------------------------------------------------------------- area table

@dataclass(frozen=True)
class AreaRow:
    area_units: float
    redundant_units: float
    max_fanout: int


def build_area_table(policies=POLICIES, structures=STRUCTURES, s_values=range(1, 9),
                     q_scales=range(0, Q_MAX + 1), costs=None):
    costs = costs or DEFAULT_COSTS
    table = {}
    for pol, st, s, qs in itertools.product(policies, structures, s_values, q_scales):
        plan = plan_protection(pol, s, qs, st, costs)
        table[(pol, st, s, qs)] = AreaRow(area(plan, costs), redundant_area(plan, costs), plan.max_fanout)
    return table


CSV_FIELDS = ("policy", "structure", "s", "q_scale", "area_units", "redundant_units", "max_fanout")


def write_area_table(table, path_or_file, header_lines=()):
    own = isinstance(path_or_file, str)
    f = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        for h in header_lines:
            f.write(f"# {h}\n")
        w = csv.writer(f)
        w.writerow(CSV_FIELDS)
        for (pol, st, s, qs), r in sorted(table.items()):
            w.writerow([pol, st, s, qs, f"{r.area_units:.4f}", f"{r.redundant_units:.4f}", r.max_fanout])
    finally:
        if own:
            f.close()


def read_area_table(path):
    table = {}
    with open(path) as f:
        rows = csv.DictReader(line for line in f if not line.startswith("#"))
        for r in rows:
            table[(r["policy"], r["structure"], int(r["s"]), int(r["q_scale"]))] = AreaRow(
                float(r["area_units"]), float(r["redundant_units"]), int(r["max_fanout"]))
    return table
