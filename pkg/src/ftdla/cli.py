"""``ftdla`` command line front end.

Every output written under ``--out-dir`` starts with a header carrying the
tool version, the seed and a hash of the effective configuration.  Exit
codes: 0 success, 2 completed but no design met the constraints, 1 error.
"""

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


@dataclass
class ExperimentConfig:
    weights: str = ""  # float npz; empty = checked-in tiny model
    model: str = ""  # FHQM1 quantized model; empty = calibrate from weights
    dataset: str = ""  # evaluation dataset stem; empty = tiny fault-eval split
    n_eval: int = 100
    fault_rates: list = field(default_factory=lambda: [1e-4, 2e-4])
    acc_high: float = 0.97
    acc_low: float = 0.95
    perf: float = 1.10
    bandwidth: float = 1.10
    q_scale: int = 0
    structure: str = "wallace"
    trials: int = 200
    outer_trials: int = 1000
    iter_max_step: int = 150
    init_samples: int = 10
    out_dir: str = "."
    seed: int = 0
    fault_seed: int = 1234
    threads: int = 1

    def validate(self):
        for r in self.fault_rates:
            if not 0 < r < 1:
                raise ValueError(f"fault rate {r} outside (0, 1)")
        if len(self.fault_rates) != 2:
            raise ValueError("need exactly two fault rates (I and II)")
        for p in (self.weights, self.model):
            if p and not os.path.exists(p):
                raise FileNotFoundError(p)
        if self.dataset:
            from . import data
            if not data.dataset_exists(self.dataset):
                raise FileNotFoundError(self.dataset)

    def digest(self):
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


def header(cfg, command):
    return [f"ftdla {__version__} command={command} seed={cfg.seed} config={cfg.digest()}"]


def _path(cfg, name):
    os.makedirs(cfg.out_dir, exist_ok=True)
    return os.path.join(cfg.out_dir, name)


def _write_text(path, lines, body):
    with open(path, "w") as f:
        for h in lines:
            f.write(f"# {h}\n")
        f.write(body)


def _write_json(path, lines, obj):
    obj = dict(obj)
    obj["_header"] = lines
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True, default=str)
        f.write("\n")


def _write_svg(path, lines, svg):
    with open(path, "w") as f:
        f.write(svg.replace(">", ">\n" + "".join(f"<!-- {h} -->\n" for h in lines), 1))


# -------------------------------------------------------------- loading

def float_model(cfg):
    from . import tiny
    return tiny.float_model(cfg.weights) if cfg.weights else tiny.float_model()


def eval_set(cfg):
    from . import data, tiny
    if cfg.dataset:
        x, y = data.read_dataset(cfg.dataset)
        return x[:cfg.n_eval], y[:cfg.n_eval]
    return tiny.fault_eval_split(cfg.n_eval)


def quantized_model(cfg):
    from . import qmodel, tiny
    if cfg.model:
        return qmodel.load_model(cfg.model)
    return qmodel.calibrate_quantization(float_model(cfg), tiny.calibration_split()[0], cfg.q_scale)


def context(cfg):
    from . import explorer, importance, tiny
    fm = float_model(cfg)
    cx, cy = tiny.calibration_split()
    ex, ey = eval_set(cfg)
    grads = importance.accumulate_gradients(fm, cx, cy)
    return explorer.Context(fm, cx, ex, ey, grads, structure=cfg.structure, fault_seed=cfg.fault_seed,
                            inner_trials=cfg.trials, threads=cfg.threads)


def constraints(cfg, acc0):
    from . import explorer
    return explorer.Constraints.from_baseline(acc0, cfg.acc_high, cfg.acc_low, cfg.perf, cfg.bandwidth,
                                              cfg.fault_rates[0], cfg.fault_rates[1])


# ------------------------------------------------------------- commands

def cmd_gen_data(cfg, args):
    from . import data
    images, labels = data.generate(args.count, cfg.seed)
    stem = args.stem if os.path.isabs(args.stem) else _path(cfg, args.stem)
    meta = data.write_dataset(stem, images, labels, seed=cfg.seed)
    print(f"wrote {meta['count']} samples to {stem}.*")
    return EXIT_OK


def cmd_quantize(cfg, args):
    from . import qmodel, tiny
    fm = float_model(cfg)
    try:
        qm = qmodel.calibrate_quantization(fm, tiny.calibration_split()[0], cfg.q_scale)
    except qmodel.CalibrationError as e:
        print(f"calibration failed: {e}", file=sys.stderr)
        return EXIT_ERROR
    path = _path(cfg, args.output or f"model_q{cfg.q_scale}.fhqm")
    qmodel.save_model(qm, path)
    x, y = tiny.test_split()
    fa = fm.accuracy(tiny.as_float_input(x), y)
    qa = qm.accuracy(tiny.as_int_input(x), y)
    print(f"q={qm.q} float_acc={fa:.4f} quant_acc={qa:.4f} digest={qmodel.model_digest(qm)} -> {path}")
    return EXIT_OK


def cmd_importance(cfg, args):
    from . import importance, tiny
    fm = float_model(cfg)
    cx, cy = tiny.calibration_split()
    grads = importance.accumulate_gradients(fm, cx, cy)
    imap = importance.select_important_neurons(fm, grads, args.s_th, args.policy)
    with open(_path(cfg, "importance.bin"), "wb") as f:
        f.write(imap.to_bytes())
    body = "layer,neurons,important,fraction\n" + "".join(
        f"{n},{s},{int(imap.layer_flags(n).sum())},{imap.layer_fraction[n]:.6f}\n"
        for n, s in zip(imap.layer_names, imap.layer_sizes))
    _write_text(_path(cfg, "importance.csv"), header(cfg, "importance"), body)
    print(body, end="")
    return EXIT_OK


def cmd_faults(cfg, args):
    from . import faultsim, importance, tiny
    qm = quantized_model(cfg)
    x, y = eval_set(cfg)
    eng = faultsim.FaultEngine(qm, x, y)
    if args.s_th:
        fm = float_model(cfg)
        cx, cy = tiny.calibration_split()
        imap = importance.select_important_neurons(fm, importance.accumulate_gradients(fm, cx, cy), args.s_th,
                                                   args.policy)
        mask = faultsim.ProtectionMask.from_importance(qm, imap, args.ib, args.nb)
    else:
        mask = faultsim.ProtectionMask.uniform(qm, args.level)
    rows = ["ber,trials,acc,lo,hi,flips_drawn,flips_applied\n"]
    for ber in args.ber or cfg.fault_rates:
        fc = faultsim.FaultConfig(ber, cfg.fault_seed, cfg.trials)
        out, st = eng.run(fc, mask)
        e = faultsim.estimate(out, fc)
        rows.append(f"{ber},{fc.trials},{e.mean:.6f},{e.lo:.6f},{e.hi:.6f},{st['flips_drawn']},{st['flips_applied']}\n")
    _write_text(_path(cfg, "faults.csv"), header(cfg, "faults"), "".join(rows))
    print("".join(rows), end="")
    return EXIT_OK


def cmd_sensitivity(cfg, args):
    from . import faultsim, svg
    qm = quantized_model(cfg)
    x, y = eval_set(cfg)
    eng = faultsim.FaultEngine(qm, x, y)
    bers = args.ber or cfg.fault_rates
    sens_rows = ["ber,layer,score,lo,hi,acc\n"]
    curve_rows = ["ber,k,layers,acc,lo,hi\n"]
    for ber in bers:
        fc = faultsim.FaultConfig(ber, cfg.fault_seed, cfg.trials)
        sens, base = faultsim.layer_sensitivity(qm, None, None, fc, engine=eng)
        ranked = sorted(sens, key=lambda s: -s.score)
        for s in ranked:
            sens_rows.append(f"{ber},{s.name},{s.score:.6f},{s.lo:.6f},{s.hi:.6f},{s.acc.mean:.6f}\n")
        order = [s.name.split("+") for s in ranked]
        curve = faultsim.protection_curve(qm, None, None, fc, order, eng)
        names = [""] + ["+".join(g) for g in order]
        for k, (e, n) in enumerate(zip(curve, names)):
            curve_rows.append(f"{ber},{k},{n},{e.mean:.6f},{e.lo:.6f},{e.hi:.6f}\n")
        _write_svg(_path(cfg, f"curve_{ber:g}.svg"), header(cfg, "sensitivity"),
                   svg.line(range(len(curve)), [e.mean for e in curve], [e.lo for e in curve],
                            [e.hi for e in curve], f"protection curve, BER {ber:g}", "layers protected", "accuracy"))
        print(f"ber={ber:g} ranking: " + " > ".join(s.name for s in ranked))
    lines = header(cfg, "sensitivity")
    _write_text(_path(cfg, "sensitivity.csv"), lines, "".join(sens_rows))
    _write_text(_path(cfg, "curve.csv"), lines, "".join(curve_rows))
    # whitespace-separated copy for gnuplot
    _write_text(_path(cfg, "curve.dat"), lines, "".join(r.replace(",", " ") for r in curve_rows[1:]))
    return EXIT_OK


def cmd_area_table(cfg, args):
    from . import bitcircuit
    costs = bitcircuit.load_cost_model(args.costs) if args.costs else None
    table = bitcircuit.build_area_table(costs=costs)
    path = _path(cfg, "area_table.csv")
    bitcircuit.write_area_table(table, path, header(cfg, "area-table"))
    print(f"{len(table)} rows -> {path}")
    return EXIT_OK


def _explore(cfg, ctx, c, progress=False):
    from . import explorer
    ecfg = explorer.ExplorerConfig(cfg.iter_max_step, cfg.init_samples, cfg.seed, inner_trials=cfg.trials,
                                   outer_trials=cfg.outer_trials)
    cb = None
    if progress:
        def cb(r):
            print(f"step {r.step:3d} area={r.area:.4f} feasible={int(r.feasible)} {r.point.accuracy_key}",
                  file=sys.stderr)
    return explorer.explore(explorer.Space(), c, ecfg, ctx, progress=cb)


def cmd_explore(cfg, args):
    from . import explorer, svg
    ctx = context(cfg)
    c = constraints(cfg, ctx.acc0)
    res = _explore(cfg, ctx, c, args.verbose)
    lines = header(cfg, "explore")
    explorer.write_log(res.samples, _path(cfg, "explore_log.csv"), lines)
    explorer.write_log(res.pareto, _path(cfg, "pareto.csv"), lines)
    extra = {"_header": lines, "acc0": ctx.acc0}
    if args.verify_best:
        ok, v = explorer.verify_best(res, ctx, c)
        extra["verify_best"] = {"passed": ok, "result": None if v is None else v.to_dict()}
        print(f"verify-best: {'passed' if ok else 'FAILED'}")
    explorer.write_best(res, _path(cfg, "best.json"), extra)
    pts = [(r.area, r.acc_low.mean) for r in res.samples if r.acc_low is not None]
    idx = [i for i, r in enumerate(r for r in res.samples if r.acc_low is not None) if r in res.pareto]
    _write_svg(_path(cfg, "explore.svg"), lines,
               svg.scatter(pts, idx, "sampled designs", "normalised area", "accuracy at fault rate II"))
    if res.best is None:
        print("no feasible design found; nearest:", res.nearest and res.nearest.point)
        return EXIT_INFEASIBLE
    print("best:", json.dumps(res.best.point.to_dict(), sort_keys=True), f"area={res.best.area:.4f}")
    if args.verify_best and not extra["verify_best"]["passed"]:
        return EXIT_INFEASIBLE
    return EXIT_OK


def _load_best(path):
    from . import explorer
    with open(path) as f:
        d = json.load(f)
    p = d["best"]["point"] if "best" in d else d
    return explorer.DesignPoint(**p)


def cmd_baselines(cfg, args):
    from . import baselines, explorer
    ctx = context(cfg)
    c = constraints(cfg, ctx.acc0)
    if args.best:
        p = _load_best(args.best)
        r = explorer.evaluate_point(p, ctx, c, trials=cfg.outer_trials)
        res = explorer.ExploreResult([r], r if r.feasible else None, r, None, [r],
                                     explorer.ExplorerConfig(1, 1, cfg.seed), c)
    else:
        res = _explore(cfg, ctx, c)
    rows = baselines.compare(ctx, c, res)
    baselines.write_rows(rows, _path(cfg, "baselines.csv"), header(cfg, "baselines"))
    for r in rows:
        print(",".join(str(v) for v in r.values()))
    cl = [r for r in rows if r.name == "TMR-CL"]
    return EXIT_OK if cl and cl[0].feasible else EXIT_INFEASIBLE


def cmd_report(cfg, args):
    from . import archmodel, explorer
    ctx = context(cfg)
    if args.best:
        p = _load_best(args.best)
    else:
        p = explorer.DesignPoint(args.s_th, args.ib, args.nb, cfg.q_scale or 1, args.policy, args.dot,
                                 not args.no_reuse, args.pe)
    imap = ctx.importance(p.s_th, p.s_policy, p.array_size)
    rep = archmodel.evaluate_design(ctx.float_model, imap, archmodel.ArchConfig(p.array_size, p.dot_size, p.data_reuse))
    d = {"point": p.to_dict(), "area": ctx.area(p), "perf": rep.to_dict(),
         "feasible_perf_bw": rep.feasible(cfg.perf, cfg.bandwidth)}
    _write_json(_path(cfg, "report.json"), header(cfg, "report"), d)
    print(rep.to_json())
    return EXIT_OK if d["feasible_perf_bw"] else EXIT_INFEASIBLE


# ---------------------------------------------------------------- parser

def _common(p):
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--out-dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--fault-seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--weights")
    p.add_argument("--model")
    p.add_argument("--dataset")
    p.add_argument("--n-eval", type=int)
    p.add_argument("--fault-rates", type=float, nargs=2)
    p.add_argument("--q-scale", type=int)
    p.add_argument("--structure", choices=("wallace", "shift-add"))
    p.add_argument("--trials", type=int)
    p.add_argument("--outer-trials", type=int)
    p.add_argument("--iter-max-step", type=int)
    p.add_argument("--init-samples", type=int)


def build_parser():
    ap = argparse.ArgumentParser(prog="ftdla", description="fault-tolerant accelerator design-space tools")
    ap.add_argument("--version", action="version", version=f"ftdla {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="synthesize the digit dataset")
    _common(p)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--stem", default="digits")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("quantize", help="calibrate and write an FHQM1 model")
    _common(p)
    p.add_argument("--output")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("importance", help="gradient importance and position table")
    _common(p)
    p.add_argument("--s-th", type=float, default=0.05)
    p.add_argument("--policy", choices=("global", "uniform"), default="global")
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("faults", help="accuracy under bit flips")
    _common(p)
    p.add_argument("--ber", type=float, nargs="+")
    p.add_argument("--level", type=int, default=0, help="uniform protection level")
    p.add_argument("--s-th", type=float, default=0.0)
    p.add_argument("--policy", choices=("global", "uniform"), default="global")
    p.add_argument("--ib", type=int, default=3)
    p.add_argument("--nb", type=int, default=1)
    p.set_defaults(func=cmd_faults)

    p = sub.add_parser("sensitivity", help="layer sensitivity and protection curve")
    _common(p)
    p.add_argument("--ber", type=float, nargs="+")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("area-table", help="gate-equivalent area table")
    _common(p)
    p.add_argument("--costs", help="key=value cost model file")
    p.set_defaults(func=cmd_area_table)

    p = sub.add_parser("explore", help="cross-layer design-space search")
    _common(p)
    p.add_argument("--verify-best", action="store_true")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("baselines", help="compare reference designs")
    _common(p)
    p.add_argument("--best", help="best.json from explore (skips the search)")
    p.set_defaults(func=cmd_baselines)

    p = sub.add_parser("report", help="performance / IO report of one design")
    _common(p)
    p.add_argument("--best")
    p.add_argument("--s-th", type=float, default=0.05)
    p.add_argument("--ib", type=int, default=3)
    p.add_argument("--nb", type=int, default=1)
    p.add_argument("--policy", choices=("global", "uniform"), default="uniform")
    p.add_argument("--dot", type=int, default=32)
    p.add_argument("--no-reuse", action="store_true")
    p.add_argument("--pe", choices=("configurable", "direct"), default="configurable")
    p.set_defaults(func=cmd_report)
    return ap


def make_config(args):
    cfg = ExperimentConfig()
    if getattr(args, "config", None):
        with open(args.config) as f:
            for k, v in json.load(f).items():
                if not hasattr(cfg, k):
                    raise ValueError(f"unknown config key {k!r}")
                setattr(cfg, k, v)
    for k in asdict(cfg):
        v = getattr(args, k, None)
        if v is not None:
            setattr(cfg, k, list(v) if k == "fault_rates" else v)
    cfg.validate()
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = make_config(args)
        if cfg.threads and cfg.threads > 0:
            os.environ.setdefault("OMP_NUM_THREADS", str(cfg.threads))
        np.seterr(over="ignore")
        return args.func(cfg, args)
    except (ValueError, FileNotFoundError, RuntimeError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
