"""Command-line entry point: ``otreg {register,fidelity,generate,sweep}``.

Exit codes: 0 on success (an unconverged Sinkhorn solve is flagged in the
summary, not fatal), 1 for configuration or input errors, 2 for numerical
failure of the flow.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import contextlib
import logging
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import io
from .config import load_config
from .cost import eval_cost_matrix
from .deformation import control_points_at
from .errors import ConfigError, DegenerateCell, DimensionMismatch, InvalidShape, NonFiniteState
from .measures import ShapeKind, lift_shape
from .ot import OtParams, plan_triplets, sinkhorn
from .registration import (HISTORY_COLUMNS, OtFidelity, RegistrationProblem, register,
                           register_two_step)
from .rkhs import rkhs_value
from .synthetic import DatasetKind, generate_synthetic

log = logging.getLogger("otreg")

INPUT_ERRORS = (ConfigError, InvalidShape, DegenerateCell, DimensionMismatch, FileNotFoundError, ValueError)


def _thread_limit():
    n = os.environ.get("OTREG_THREADS")
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(int(n))


def _load_shapes(cfg):
    kind = cfg.get("shape.kind")
    kind = ShapeKind(kind) if kind else None
    src = io.read_shape(cfg.path("source"), kind)
    tgt = io.read_shape(cfg.path("target"), kind)
    if src.kind is not tgt.kind:
        raise ConfigError("target", f"shape kind {tgt.kind.value} differs from source {src.kind.value}")
    return src, tgt


def _fmt_time(t):
    return ("%.4f" % t).rstrip("0").rstrip(".") if t not in (0.0, 1.0) else "%d" % t


def run_register(config_path, out_dir=None):
    """Run one registration; returns the process exit code."""
    try:
        cfg = load_config(config_path)
        src, tgt = _load_shapes(cfg)
        nu = lift_shape(tgt)
        lift_shape(src)
        problem = RegistrationProblem(
            src, nu, cfg.fidelity(), cfg.flow(), cfg.get("flow.num_steps"),
            cfg.require("deformation.reg_weight"), cfg.optimizer(),
        )
        coarse = cfg.coarse_params() if cfg.two_step else None
        out = out_dir or cfg.get("output.dir")
        if out is None:
            raise ConfigError("output.dir", "no output directory (use --out or output.dir)")
        if not os.path.isabs(out) and out_dir is None:
            out = os.path.join(cfg.base_dir, out)
    except INPUT_ERRORS as e:
        print(f"otreg: configuration error: {e}", file=sys.stderr)
        return 1

    os.makedirs(out, exist_ok=True)
    t0 = time.perf_counter()
    try:
        if coarse is not None:
            fine = problem.fidelity
            fine_spec = fine.kernel if fine.kind == "rkhs" else fine.params
            coarse_problem = problem
            if "coarse.max_outer_iters" in cfg.values:
                coarse_problem = replace(problem, optimizer=cfg.optimizer(cfg.get("coarse.max_outer_iters")))
            theta, hist = register_two_step(coarse_problem, coarse, fine_spec, fine_optimizer=problem.optimizer)
        else:
            theta, hist = register(problem)
    except NonFiniteState as e:
        print(f"otreg: numerical failure: {e}", file=sys.stderr)
        return 2
    wall = time.perf_counter() - t0

    final = hist.final
    for t in cfg.get("output.snapshots"):
        verts = control_points_at(final.deformation, problem.flow, t)
        io.write_shape(os.path.join(out, f"shape_t{_fmt_time(t)}{io.shape_suffix(src)}"), src, verts)
    np.savetxt(os.path.join(out, "momenta.txt"), theta, fmt=io.FMT)
    with open(os.path.join(out, "correspondence.txt"), "w") as fh:
        for i in range(len(src.vertices)):
            fh.write(f"{i} {i}\n")
    io.write_history(os.path.join(out, "history.tsv"), hist.rows, HISTORY_COLUMNS)
    fe = final.fidelity
    if fe.state is not None:
        io.write_triplets(os.path.join(out, "plan.triplets"),
                          plan_triplets(fe.state.plan, cfg.get("output.plan_threshold")))
    summary = {
        "fidelity_kind": problem.fidelity.kind,
        "two_step": str(coarse is not None).lower(),
        "final_energy": float(final.energy),
        "fidelity": float(fe.value),
        "fidelity_stripped": float(fe.stripped),
        "regularization": float(final.regularization),
        "grad_norm": float(np.linalg.norm(final.gradient)),
        "outer_iterations": len(hist.rows) - 1,
        "sinkhorn_iterations_total": int(sum(r["sinkhorn_iterations"] for r in hist.rows)),
        "sinkhorn_converged": str(bool(fe.converged)).lower(),
        "converged": str(bool(hist.converged)).lower(),
        "line_search_failed": str(bool(hist.line_search_failed)).lower(),
        "message": hist.message,
        "seed": cfg.get("seed"),
        "wall_clock": wall,
    }
    io.write_summary(os.path.join(out, "summary.txt"), summary)
    return 0


def _parse_list(s):
    return [float(x) for x in s.split(",") if x.strip()]


def run_fidelity(config_path, source=None, target=None, plan_path=None,
                 sweep_eps=None, sweep_rho=None, stream=sys.stdout):
    try:
        cfg = load_config(config_path, check_paths=source is None or target is None)
        if source is not None:
            cfg.values["source"] = os.path.abspath(source)
        if target is not None:
            cfg.values["target"] = os.path.abspath(target)
        for key in ("source", "target"):
            if not os.path.exists(cfg.path(key)):
                raise ConfigError(key, f"file not found: {cfg.path(key)}")
        src, tgt = _load_shapes(cfg)
        mu, nu = lift_shape(src), lift_shape(tgt)
        fid = cfg.fidelity()
    except INPUT_ERRORS as e:
        print(f"otreg: configuration error: {e}", file=sys.stderr)
        return 1

    if sweep_eps or sweep_rho:
        if not isinstance(fid, OtFidelity):
            print("otreg: configuration error: fidelity.kind: sweeps need an OT fidelity", file=sys.stderr)
            return 1
        base = fid.params
        eps_list = sweep_eps or [base.epsilon]
        rho_list = sweep_rho or [base.rho]
        c = eval_cost_matrix(fid.cost, mu, nu)
        stream.write("epsilon\\rho\t" + "\t".join(io.FMT % r for r in rho_list) + "\n")
        for eps in eps_list:
            cells = []
            for rho in rho_list:
                params = OtParams(eps, rho, base.max_iters)
                p = mu.masses * (nu.total_mass / mu.total_mass) if params.balanced else mu.masses
                st = sinkhorn(c, p, nu.masses, params)
                cells.append(f"{st.iterations}{'' if st.converged else '*'}")
            stream.write(io.FMT % eps + "\t" + "\t".join(cells) + "\n")
        return 0

    if isinstance(fid, OtFidelity):
        fe = fid(mu, nu)
        stream.write(f"regularized = {io.FMT % fe.value}\n")
        stream.write(f"stripped = {io.FMT % fe.stripped}\n")
        stream.write(f"sinkhorn_iterations = {fe.sinkhorn_iterations}\n")
        stream.write(f"converged = {str(fe.converged).lower()}\n")
        if plan_path:
            io.write_plan(plan_path, fe.state.plan)
    else:
        stream.write(f"rkhs = {io.FMT % rkhs_value(fid.kernel, mu, nu)}\n")
    return 0


def run_generate(kind, seed, out):
    src, tgt = generate_synthetic(kind, seed)
    os.makedirs(out, exist_ok=True)
    suffix = io.shape_suffix(src)
    io.write_shape(os.path.join(out, "source" + suffix), src)
    io.write_shape(os.path.join(out, "target" + suffix), tgt)
    return 0


def _sweep_one(args):
    path, out = args
    return path, run_register(path, out)


def run_sweep(configs, out_root, jobs=1):
    tasks = []
    for path in configs:
        out = None
        if out_root:
            out = os.path.join(out_root, os.path.splitext(os.path.basename(path))[0])
        tasks.append((path, out))
    if jobs <= 1:
        results = [_sweep_one(t) for t in tasks]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_one, tasks))
    worst = 0
    for path, code in results:
        print(f"{path}\t{code}")
        worst = max(worst, code)
    return worst


def build_parser():
    ap = argparse.ArgumentParser(prog="otreg", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("register", help="run a registration from a config file")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides output.dir)")

    f = sub.add_parser("fidelity", help="evaluate the fidelity between two shapes")
    f.add_argument("config")
    f.add_argument("--source")
    f.add_argument("--target")
    f.add_argument("--plan", help="write the dense transport plan to this file")
    f.add_argument("--sweep-eps", type=_parse_list, help="comma-separated epsilon values")
    f.add_argument("--sweep-rho", type=_parse_list, help="comma-separated rho values (inf allowed)")

    g = sub.add_parser("generate", help="write a synthetic source/target pair")
    g.add_argument("kind", choices=[k.value for k in DatasetKind])
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    s = sub.add_parser("sweep", help="run several registration configs")
    s.add_argument("configs", nargs="+")
    s.add_argument("--out", help="root directory; each run writes to <out>/<config name>")
    s.add_argument("--jobs", type=int, default=1)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    with _thread_limit():
        if args.command == "register":
            return run_register(args.config, args.out)
        if args.command == "fidelity":
            return run_fidelity(args.config, args.source, args.target, args.plan,
                                args.sweep_eps, args.sweep_rho)
        if args.command == "generate":
            return run_generate(args.kind, args.seed, args.out)
        return run_sweep(args.configs, args.out, args.jobs)


if __name__ == "__main__":
    sys.exit(main())
