"""Cross-layer design-space exploration.

Minimises normalised redundant area subject to accuracy floors at two fault
rates plus perf and bandwidth ceilings.  Area (area table), perf and
bandwidth (archmodel) are cheap closed forms; only accuracy needs fault
simulation, and it depends on ``(s_th, ib_th, nb_th, q_scale, s_policy)``
alone.  The Bayesian loop therefore fits a Gaussian process to the accuracy
margin of those settings and scores each unexplored setting by its cheapest
perf/bandwidth-feasible completion ``(dot_size, data_reuse, pe_policy)``:
acquisition = (best feasible area - candidate area)+ x P(accuracy feasible).
Settings implied infeasible by a pruned failure get P = 0.

Area of a design, relative to the unprotected 32x32 array::

    (A^2 * (base + red(pe, nb_th, q)) + dot * (base + red(pe, ib_th, q))) / (A^2 * base)
"""

import csv
import dataclasses
import itertools
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import norm

from . import archmodel, bitcircuit, faultsim, importance, qmodel, tiny

S_TH_GRID = (0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4)
BIT_PAIRS = ((2, 1), (3, 1), (4, 1), (3, 2), (4, 2), (4, 3))
PARAMS = ("s_th", "ib_th", "nb_th", "q_scale", "s_policy", "dot_size", "data_reuse", "pe_policy", "array_size")
ACCURACY_FAILURES = ("acc_high", "acc_low")


class ExplorerError(RuntimeError):
    pass


@dataclass(frozen=True, order=True)
class DesignPoint:
    s_th: float
    ib_th: int
    nb_th: int
    q_scale: int
    s_policy: str
    dot_size: int
    data_reuse: bool
    pe_policy: str
    array_size: int = 32

    @property
    def accuracy_key(self):
        return (self.s_th, self.ib_th, self.nb_th, self.q_scale, self.s_policy)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class Space:
    s_th: tuple = S_TH_GRID
    bits: tuple = BIT_PAIRS
    q_scale: tuple = tuple(range(1, 17))
    s_policy: tuple = ("global", "uniform")
    dot_size: tuple = tuple(range(8, 257))
    data_reuse: tuple = (True, False)
    pe_policy: tuple = ("configurable", "direct")  # tie-break order: configurable first
    array_size: int = 32

    def _axes(self):
        return (self.s_th, self.bits, self.q_scale, self.s_policy, self.dot_size, self.data_reuse, self.pe_policy)

    @property
    def size(self):
        return math.prod(len(a) for a in self._axes())

    def _point(self, s, bits, q, pol, dot, reuse, pe):
        return DesignPoint(s, bits[0], bits[1], q, pol, dot, reuse, pe, self.array_size)

    def point(self, index):
        """Mixed-radix decode of ``index`` in ``[0, size)``."""
        vals = []
        for ax in reversed(self._axes()):
            index, r = divmod(index, len(ax))
            vals.append(ax[r])
        return self._point(*reversed(vals))

    def points(self):
        for v in itertools.product(*self._axes()):
            yield self._point(*v)

    def accuracy_keys(self):
        for s, (ib, nb), q, pol in itertools.product(self.s_th, self.bits, self.q_scale, self.s_policy):
            yield (s, ib, nb, q, pol)

    def contains(self, p):
        return (p.s_th in self.s_th and (p.ib_th, p.nb_th) in self.bits and p.q_scale in self.q_scale
                and p.s_policy in self.s_policy and p.dot_size in self.dot_size
                and p.data_reuse in self.data_reuse and p.pe_policy in self.pe_policy
                and p.array_size == self.array_size)

    def sample(self, rng):
        return self.point(int(rng.integers(self.size)))


def micro_space():
    """64-point enumerable sub-space used to check search against brute force."""
    return Space(s_th=(0.02, 0.1), bits=((2, 1), (3, 2)), q_scale=(4, 8), s_policy=("global", "uniform"),
                 dot_size=(16, 48), data_reuse=(True,), pe_policy=("configurable", "direct"))


@dataclass(frozen=True)
class Constraints:
    acc0: float
    acc_high_floor: float  # at fault rate I
    acc_low_floor: float  # at fault rate II
    perf_ceiling: float = 1.10
    bandwidth_ceiling: float = 1.10
    ber_high: float = 1e-4
    ber_low: float = 2e-4

    def __post_init__(self):
        if self.acc_high_floor > self.acc0 or self.acc_low_floor > self.acc0:
            raise ExplorerError("accuracy floors above the fault-free accuracy")
        if self.perf_ceiling < 1.0 or self.bandwidth_ceiling < 1.0:
            raise ExplorerError("perf / bandwidth ceilings below the baseline")

    @classmethod
    def from_baseline(cls, acc0, high=0.97, low=0.95, perf=1.10, bandwidth=1.10, ber_high=1e-4, ber_low=2e-4):
        return cls(acc0, high * acc0, low * acc0, perf, bandwidth, ber_high, ber_low)

    @classmethod
    def trivial(cls, acc0, ber_high=1e-4, ber_low=2e-4):
        return cls(acc0, 0.0, 0.0, math.inf, math.inf, ber_high, ber_low)


@dataclass
class EvalResult:
    point: DesignPoint
    area: float
    acc_low: Optional[faultsim.AccuracyEstimate]  # at fault rate II
    acc_high: Optional[faultsim.AccuracyEstimate]  # at fault rate I
    perf_ratio: float
    bw_ratio: float
    feasible: bool
    failed: tuple = ()
    step: int = -1
    pruned_count: int = 0

    def margin(self, c):
        """Smallest accuracy CI-lower-bound margin over the evaluated fault rates."""
        m = []
        if self.acc_low is not None:
            m.append(self.acc_low.lo - c.acc_low_floor)
        if self.acc_high is not None:
            m.append(self.acc_high.lo - c.acc_high_floor)
        return min(m) if m else -1.0

    def to_dict(self):
        d = {"point": self.point.to_dict(), "area": self.area, "perf_ratio": self.perf_ratio,
             "bw_ratio": self.bw_ratio, "feasible": self.feasible, "failed": list(self.failed), "step": self.step}
        for name, a in (("acc_high", self.acc_high), ("acc_low", self.acc_low)):
            d[name] = None if a is None else {"mean": a.mean, "lo": a.lo, "hi": a.hi, "trials": a.trials,
                                               "seed": a.seed, "n": a.n}
        return d


@dataclass(frozen=True)
class ExplorerConfig:
    iter_max_step: int = 150
    init_samples: int = 10
    seed: int = 0
    acquisition: str = "ei_pf"
    inner_trials: int = 200
    outer_trials: int = 1000

    def __post_init__(self):
        if not self.iter_max_step >= self.init_samples >= 1:
            raise ExplorerError("need iter_max_step >= init_samples >= 1")
        if self.acquisition != "ei_pf":
            raise ExplorerError(f"unsupported acquisition {self.acquisition!r}")


def design_area(table, base, pe_policy, structure, ib, nb, q_scale, dot, array=32):
    def red(s):
        if s == 0:
            return 0.0
        key = (pe_policy, structure, s, q_scale)
        if key not in table:
            raise ExplorerError(f"area table has no row {key}")
        return table[key].redundant_units
    n = array * array
    return (n * (base + red(nb)) + dot * (base + red(ib))) / (n * base)


class Context:
    """Shared, cached evaluation state: models, importance maps, caches."""

    def __init__(self, float_model, calib_images, eval_images, eval_labels, grads, area_table=None,
                 structure="wallace", fault_seed=1234, inner_trials=200, costs=None, threads=1):
        self.float_model = float_model
        self.calib_images = np.asarray(calib_images)
        self.eval_images = np.asarray(eval_images)
        self.eval_labels = np.asarray(eval_labels)
        self.grads = grads
        self.structure = structure
        self.costs = costs or bitcircuit.DEFAULT_COSTS
        self.area_table = area_table if area_table is not None else bitcircuit.build_area_table(
            structures=(structure,), costs=self.costs)
        self.base = bitcircuit.base_area(structure, self.costs)
        self.fault_seed = fault_seed
        self.inner_trials = inner_trials
        self.threads = threads
        self._models, self._engines, self._imaps = {}, {}, {}
        self.acc_cache, self.perf_cache = {}, {}
        self.simulations = 0
        self.acc0 = self.engine(0).fault_free_accuracy()

    @classmethod
    def tiny(cls, **kw):
        fm = tiny.float_model()
        cx, cy = tiny.calibration_split()
        ex, ey = tiny.fault_eval_split()
        grads = importance.accumulate_gradients(fm, cx, cy)
        return cls(fm, cx, ex, ey, grads, **kw)

    def model(self, q_scale):
        if q_scale not in self._models:
            self._models[q_scale] = qmodel.calibrate_quantization(self.float_model, self.calib_images, q_scale)
        return self._models[q_scale]

    def q_key(self, q_scale):
        m = self.model(q_scale)
        return tuple(sorted(m.q.items()))

    def engine(self, q_scale):
        k = self.q_key(q_scale)
        if k not in self._engines:
            self._engines[k] = faultsim.FaultEngine(self.model(q_scale), self.eval_images, self.eval_labels)
        return self._engines[k]

    def importance(self, s_th, policy, array=32):
        k = (s_th, policy, array)
        if k not in self._imaps:
            self._imaps[k] = importance.select_important_neurons(self.float_model, self.grads, s_th, policy, array)
        return self._imaps[k]

    def area(self, p):
        return design_area(self.area_table, self.base, p.pe_policy, self.structure, p.ib_th, p.nb_th,
                           p.q_scale, p.dot_size, p.array_size)

    def perf(self, s_th, policy, dot, reuse, array=32):
        k = (s_th, policy, dot, reuse, array)
        if k not in self.perf_cache:
            arch = archmodel.ArchConfig(array, dot, reuse)
            self.perf_cache[k] = archmodel.evaluate_design(self.float_model, self.importance(s_th, policy, array), arch)
        return self.perf_cache[k]

    def _acc_key(self, key, ber, floor, trials, seed):
        s, ib, nb, q, pol = key
        return (self.q_key(q), s, ib, nb, pol, ber, floor, trials, seed)

    def cached_accuracy(self, key, ber, floor, trials=None, seed=None):
        trials = trials or self.inner_trials
        seed = self.fault_seed if seed is None else seed
        return self.acc_cache.get(self._acc_key(key, ber, floor, trials, seed))

    def accuracy(self, key, ber, floor, trials=None, seed=None):
        """Sequential accuracy estimate of an accuracy setting against ``floor``."""
        trials = trials or self.inner_trials
        seed = self.fault_seed if seed is None else seed
        ck = self._acc_key(key, ber, floor, trials, seed)
        if ck not in self.acc_cache:
            s, ib, nb, q, pol = key
            m = self.model(q)
            mask = faultsim.ProtectionMask.from_importance(m, self.importance(s, pol), ib, nb)
            cfg = faultsim.FaultConfig(ber, seed, trials)
            self.acc_cache[ck] = self.engine(q).run_until(cfg, mask, floor)
            self.simulations += 1
        return self.acc_cache[ck]


def evaluate_point(p, ctx, c, trials=None, seed=None):
    area = ctx.area(p)
    rep = ctx.perf(p.s_th, p.s_policy, p.dot_size, p.data_reuse, p.array_size)
    failed = []
    if rep.perf_ratio > c.perf_ceiling:
        failed.append("perf")
    if rep.bandwidth_ratio > c.bandwidth_ceiling:
        failed.append("bandwidth")
    key = p.accuracy_key
    acc_low = ctx.accuracy(key, c.ber_low, c.acc_low_floor, trials, seed)
    acc_high = None
    if acc_low.lo < c.acc_low_floor:
        failed.append("acc_low")
    else:
        acc_high = ctx.accuracy(key, c.ber_high, c.acc_high_floor, trials, seed)
        if acc_high.lo < c.acc_high_floor:
            failed.append("acc_high")
    return EvalResult(p, area, acc_low, acc_high, rep.perf_ratio, rep.bandwidth_ratio, not failed, tuple(failed))


def evaluate_many(points, ctx, c, threads=None, **kw):
    threads = threads or ctx.threads
    if threads <= 1:
        return [evaluate_point(p, ctx, c, **kw) for p in points]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(lambda p: evaluate_point(p, ctx, c, **kw), points))


class Pruner:
    """Exclusion of protection settings dominated by an accuracy failure."""

    def __init__(self, space):
        self.space = space
        self.excluded = set()
        self.dominated_keys = set()

    def prune(self, p, failure):
        failure = (failure,) if isinstance(failure, str) else tuple(failure)
        if not any(f in ACCURACY_FAILURES for f in failure):
            raise ExplorerError(f"pruning needs an accuracy failure, got {failure}")
        new = []
        for s in self.space.s_th:
            if s > p.s_th:
                continue
            for ib, nb in self.space.bits:
                if ib <= p.ib_th and nb <= p.nb_th:
                    q = p.replace(s_th=s, ib_th=ib, nb_th=nb)
                    if q not in self.excluded:
                        new.append(q)
                    self.dominated_keys.add(q.accuracy_key)
        self.excluded.update(new)
        return new

    def is_excluded(self, p):
        return p in self.excluded

    def key_dominated(self, key):
        return key in self.dominated_keys


@dataclass
class ExploreResult:
    samples: list
    best: Optional[EvalResult]  # certified at the outer budget
    best_inner: Optional[EvalResult]
    nearest: Optional[EvalResult]
    pareto: list
    config: ExplorerConfig
    constraints: Constraints
    excluded: int = 0
    certification: list = field(default_factory=list)

    def summary(self):
        d = {"evaluated": len(self.samples), "feasible": sum(r.feasible for r in self.samples),
             "excluded": self.excluded, "config": asdict(self.config), "constraints": asdict(self.constraints),
             "best": None if self.best is None else self.best.to_dict(),
             "best_inner": None if self.best_inner is None else self.best_inner.to_dict(),
             "nearest": None if self.nearest is None else self.nearest.to_dict()}
        return d


def pareto_front(samples):
    """Non-dominated samples (max accuracy at fault rate II, min area), by area."""
    pts = [r for r in samples if r.acc_low is not None]
    out = []
    for r in pts:
        a, x = r.acc_low.mean, r.area
        dominated = any(o.acc_low.mean >= a and o.area <= x and (o.acc_low.mean > a or o.area < x) for o in pts)
        if not dominated:
            out.append(r)
    out.sort(key=lambda r: (r.area, -r.acc_low.mean))
    return out


def _features(keys, space):
    def scale(v, dom):
        lo, hi = min(dom), max(dom)
        return 0.0 if hi == lo else (v - lo) / (hi - lo)
    ibs = [b[0] for b in space.bits]
    nbs = [b[1] for b in space.bits]
    rows = []
    for s, ib, nb, q, pol in keys:
        rows.append([scale(s, space.s_th), scale(ib, ibs), scale(nb, nbs), scale(q, space.q_scale)]
                    + [1.0 if pol == x else 0.0 for x in space.s_policy])
    return np.array(rows, dtype=np.float64)


class _Completions:
    """Cheapest perf/bandwidth-feasible (dot_size, data_reuse, pe_policy) per accuracy setting."""

    def __init__(self, space, ctx, c):
        self.space, self.ctx, self.c = space, ctx, c
        self._dots = {}

    def _ok(self, s, pol, dot, reuse):
        r = self.ctx.perf(s, pol, dot, reuse, self.space.array_size)
        return r.perf_ratio <= self.c.perf_ceiling and r.bandwidth_ratio <= self.c.bandwidth_ceiling

    def min_dot(self, s, pol, reuse):
        k = (s, pol, reuse)
        if k not in self._dots:
            dots = sorted(self.space.dot_size)
            # both stalls and overflow traffic are non-increasing in dot_size
            lo, hi = 0, len(dots)
            while lo < hi:
                mid = (lo + hi) // 2
                if self._ok(s, pol, dots[mid], reuse):
                    hi = mid
                else:
                    lo = mid + 1
            self._dots[k] = dots[lo] if lo < len(dots) else None
        return self._dots[k]

    def best(self, key, skip=lambda p: False):
        s, ib, nb, q, pol = key
        best = None
        for reuse in self.space.data_reuse:
            dot = self.min_dot(s, pol, reuse)
            if dot is None:
                continue
            for pe in self.space.pe_policy:
                p = DesignPoint(s, ib, nb, q, pol, dot, reuse, pe, self.space.array_size)
                if skip(p):
                    continue
                a = self.ctx.area(p)
                if best is None or a < best[0]:
                    best = (a, p)
        return best


def _gp(seed):
    from sklearn.gaussian_process import GaussianProcessRegressor
    from sklearn.gaussian_process.kernels import ConstantKernel, Matern, WhiteKernel
    kernel = (ConstantKernel(1.0, (1e-3, 1e3)) * Matern(length_scale=np.ones(6), length_scale_bounds=(1e-2, 1e2), nu=2.5)
              + WhiteKernel(1e-4, (1e-8, 1e-1)))
    return GaussianProcessRegressor(kernel, normalize_y=True, random_state=seed)


def _known_feasibility(key, pruner):
    """0 when a pruned failure implies the setting fails, else unknown.

    Only this run's history is used (never the shared accuracy cache), so a
    seeded run proposes the same sequence whatever ran before it.
    """
    return 0.0 if pruner.key_dominated(key) else None


def bayes_step(history, space, ctx, c, pruner, completions, seed=0):
    """Next point to evaluate, or None when no unexplored setting can improve."""
    seen_keys = {r.point.accuracy_key for r in history}
    evaluated = {r.point for r in history}
    skip = lambda p: p in evaluated or pruner.is_excluded(p)
    feas = [r.area for r in history if r.feasible]
    best_area = min(feas) if feas else None
    cands, areas, known = [], [], []
    for key in space.accuracy_keys():
        if key in seen_keys:
            continue
        b = completions.best(key, skip)
        if b is None:
            continue
        k = _known_feasibility(key, pruner)
        if k == 0.0:
            continue
        cands.append(b[1])
        areas.append(b[0])
        known.append(k)
    if not cands:
        return None
    areas = np.array(areas)
    pf = np.ones(len(cands))
    unknown = [i for i, k in enumerate(known) if k is None]
    hist_acc = [r for r in history if r.acc_low is not None]
    if unknown and len(hist_acc) >= 2:
        X = _features([r.point.accuracy_key for r in hist_acc], space)
        y = np.array([r.margin(c) for r in hist_acc])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            gp = _gp(seed).fit(X, y)
            mu, sd = gp.predict(_features([cands[i].accuracy_key for i in unknown], space), return_std=True)
        pf[unknown] = norm.cdf(mu / np.maximum(sd, 1e-9))
    elif unknown:
        pf[unknown] = 0.5
    if best_area is None:
        score = pf
    else:
        score = np.maximum(0.0, best_area - areas) * pf
        if not (score > 0).any():
            return None
    order = np.lexsort((np.arange(len(cands)), areas, -score))
    return cands[order[0]]


def _certify(samples, ctx, c, trials):
    """Walk feasible samples by area; first one that holds at ``trials`` wins."""
    tried = []
    for r in sorted((r for r in samples if r.feasible), key=lambda r: (r.area, r.point)):
        o = evaluate_point(r.point, ctx, c, trials=trials)
        o.step = r.step
        tried.append(o)
        if o.feasible:
            return o, tried
    return None, tried


def _finish(samples, ctx, c, cfg, pruner, certify=True):
    feas = [r for r in samples if r.feasible]
    best_inner = min(feas, key=lambda r: (r.area, r.point)) if feas else None
    best, tried = (None, [])
    if certify and feas:
        best, tried = _certify(samples, ctx, c, cfg.outer_trials)
    elif feas:
        best = best_inner
    nearest = None
    if best is None and samples:
        nearest = max(samples, key=lambda r: (r.margin(c) if r.acc_low is not None else -1.0, -r.area))
    return ExploreResult(samples, best, best_inner, nearest, pareto_front(samples), cfg, c,
                         len(pruner.excluded), tried)


def _record(r, pruner, samples, step):
    r.step = step
    if any(f in ACCURACY_FAILURES for f in r.failed):
        pruner.prune(r.point, r.failed)
    r.pruned_count = len(pruner.excluded)
    samples.append(r)


def explore(space, c, cfg, ctx, certify=True, progress=None):
    rng = np.random.default_rng(cfg.seed)
    pruner = Pruner(space)
    completions = _Completions(space, ctx, c)
    samples = []
    seen = set()
    attempts = 0
    while len(samples) < cfg.init_samples and attempts < 100 * cfg.init_samples:
        attempts += 1
        p = space.sample(rng)
        if p in seen or pruner.is_excluded(p):
            continue
        seen.add(p)
        _record(evaluate_point(p, ctx, c), pruner, samples, len(samples))
        if progress:
            progress(samples[-1])
    while len(samples) < cfg.iter_max_step:
        p = bayes_step(samples, space, ctx, c, pruner, completions, seed=cfg.seed)
        if p is None:
            break
        _record(evaluate_point(p, ctx, c), pruner, samples, len(samples))
        if progress:
            progress(samples[-1])
    return _finish(samples, ctx, c, cfg, pruner, certify)


def random_search(space, c, n, ctx, seed=0, certify=True, outer_trials=1000):
    rng = np.random.default_rng([seed, 0x5EED])
    pruner = Pruner(space)
    samples, seen = [], set()
    while len(samples) < min(n, space.size):
        p = space.sample(rng)
        if p in seen:
            continue
        seen.add(p)
        r = evaluate_point(p, ctx, c)
        r.step = len(samples)
        samples.append(r)
    cfg = ExplorerConfig(max(n, 1), max(n, 1), seed, outer_trials=outer_trials, inner_trials=ctx.inner_trials)
    return _finish(samples, ctx, c, cfg, pruner, certify)


def brute_force(space, c, ctx):
    """Every point of an enumerable space; (minimum-area feasible result, all results)."""
    res = evaluate_many(list(space.points()), ctx, c)
    feas = [r for r in res if r.feasible]
    return (min(feas, key=lambda r: (r.area, r.point)) if feas else None), res


def verify_best(result, ctx, c, factor=5, seed=None):
    """Re-estimate the best point with a fresh fault seed at ``factor`` x the inner budget.

    Passes when perf / bandwidth hold and, at both fault rates, the fresh 95%
    interval reaches the floor (the new estimate is consistent with feasibility).
    """
    if result.best is None:
        return False, None
    seed = (ctx.fault_seed + 7919 * (result.config.seed + 1)) if seed is None else seed
    p = result.best.point
    trials = factor * result.config.inner_trials
    rep = ctx.perf(p.s_th, p.s_policy, p.dot_size, p.data_reuse, p.array_size)
    ok = rep.perf_ratio <= c.perf_ceiling and rep.bandwidth_ratio <= c.bandwidth_ceiling
    lo = ctx.accuracy(p.accuracy_key, c.ber_low, c.acc_low_floor, trials, seed)
    hi = ctx.accuracy(p.accuracy_key, c.ber_high, c.acc_high_floor, trials, seed)
    ok = ok and lo.hi >= c.acc_low_floor and hi.hi >= c.acc_high_floor
    r = EvalResult(p, ctx.area(p), lo, hi, rep.perf_ratio, rep.bandwidth_ratio, ok,
                   () if ok else ("verify",))
    return ok, r


# ------------------------------------------------------------------- output

LOG_FIELDS = ("step",) + PARAMS + ("acc1", "acc1_ci", "acc2", "acc2_ci", "perf_ratio", "bw_ratio", "area",
                                   "feasible", "pruned_count")


def _row(r):
    p = r.point
    def est(a):
        return ("", "") if a is None else (f"{a.mean:.6f}", f"{a.half_width:.6f}")
    a1, c1 = est(r.acc_high)
    a2, c2 = est(r.acc_low)
    return [r.step] + [getattr(p, k) for k in PARAMS] + [a1, c1, a2, c2, f"{r.perf_ratio:.6f}",
                                                          f"{r.bw_ratio:.6f}", f"{r.area:.6f}", int(r.feasible),
                                                          r.pruned_count]


def write_log(samples, path, header_lines=()):
    with open(path, "w", newline="") as f:
        for h in header_lines:
            f.write(f"# {h}\n")
        w = csv.writer(f)
        w.writerow(LOG_FIELDS)
        for r in samples:
            w.writerow(_row(r))


def write_best(result, path, extra=None):
    d = result.summary()
    if extra:
        d.update(extra)
    with open(path, "w") as f:
        json.dump(d, f, indent=2, sort_keys=True, default=str)
