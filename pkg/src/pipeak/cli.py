"""Command-line front end.

Subcommands cover the full workflow on model files (paths or packaged names):

* ``convert``    -- parse a model and report / export its integral-operator form
* ``analyze``    -- certified impulse-to-peak bound (primal/dual, optional compare)
* ``synthesize`` -- bisection synthesis of a state-feedback gain
* ``simulate``   -- impulse response on both simulation paths, with CSV export
* ``certify``    -- re-verify a previously saved witness file

Reports are deterministic JSON (sorted keys, no timings); wall-clock and
solver metrics go to a sidecar file on request.  Exit codes: 0 success,
2 result not certified / check failed, 3 solver or feasibility failure,
4 invalid input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import certify as certify_mod
from .synthesize import closed_loop as _closed_loop
from .synthesize import synthesize as _synthesize
from .synthesize import verify_synthesis as _verify_synthesis
from .config import ConfigError, builtin_models, load_builtin, load_model
from .pde import convert as pde_convert
from .pde import validate
from .sdp import write_sdpa
from .simkit import simulate_pde, simulate_pie, spectral_abscissa

EXIT_OK = 0
EXIT_UNCERTIFIED = 2
EXIT_SOLVER = 3
EXIT_BADINPUT = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_BADINPUT, f"{self.prog}: error: {message}\n")


def _load(model):
    if os.path.exists(model):
        return load_model(model)
    return load_builtin(model)


def _emit(report, path=None):
    text = json.dumps(report, indent=2, sort_keys=True)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _degrees(args):
    deg = {}
    if getattr(args, "d0", None) is not None:
        deg["d0"] = args.d0
    if getattr(args, "d1", None) is not None:
        deg["d1"] = args.d1
    return deg or None


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------


def cmd_convert(args):
    pde = _load(args.model)
    issues = validate(pde)
    if issues:
        _emit({"system": pde.name, "valid": False, "issues": issues}, args.output)
        return EXIT_BADINPUT
    pie = pde_convert(pde)
    ops = {nm: getattr(pie, nm) for nm in ("T", "A", "B1", "B2", "C1")}
    report = {
        "system": pie.name,
        "valid": True,
        "domain": list(pie.domain),
        "state_channels": pie.n,
        "disturbances": pie.n_w,
        "controls": pie.n_u,
        "outputs": pie.n_z,
        "operator_degrees": {nm: op.degree() for nm, op in ops.items()},
    }
    if args.operators:
        _write_json(args.operators, {nm: certify_mod.serialize_operator(op)
                                     for nm, op in ops.items()})
        report["operators_file"] = args.operators
    _emit(report, args.output)
    return EXIT_OK


def cmd_analyze(args):
    pde = _load(args.model)
    pie = pde_convert(pde)
    kw = dict(coercive=args.coercive, degrees=_degrees(args), method=args.method)
    cert = certify_mod.i2p_bound(pie, form=args.form, **kw)
    report = cert.to_dict()
    if args.compare:
        other = "primal" if args.form == "dual" else "dual"
        cert2 = certify_mod.i2p_bound(pie, form=other, **kw)
        report = {args.form: report, other: cert2.to_dict(),
                  "duality_gap": certify_mod.duality_gap(
                      cert2 if other == "primal" else cert,
                      cert if args.form == "dual" else cert2)}
        certified = cert.certified and cert2.certified
        metrics = {args.form: cert.metrics, other: cert2.metrics}
        status_bad = cert.gamma is None or cert2.gamma is None
    else:
        certified = cert.certified
        metrics = cert.metrics
        status_bad = cert.gamma is None
    if args.sdpa:
        prog, _ = (certify_mod.build_coercive_lpi(pie, args.form, _degrees(args))
                   if args.coercive else
                   certify_mod.build_noncoercive_lpi(pie, args.form, _degrees(args)))
        write_sdpa(prog.compile(), args.sdpa)
        report["sdpa_file"] = args.sdpa
    if args.witness_out and not status_bad:
        _write_json(args.witness_out, {
            "kind": "analysis", "system": pie.name, "model": args.model,
            "form": args.form, "coercive": args.coercive,
            "gamma_squared": cert.gamma_squared, "witness": cert.witness,
        })
        report["witness_file"] = args.witness_out
    _emit(report, args.output)
    if args.metrics:
        _write_json(args.metrics, metrics)
    if status_bad:
        return EXIT_SOLVER
    return EXIT_OK if certified else EXIT_UNCERTIFIED


def cmd_synthesize(args):
    pde = _load(args.model)
    pie = pde_convert(pde)
    bisect_opts = {"rel_tol": args.rel_tol}
    if args.hi is not None:
        bisect_opts["hi"] = args.hi
    res = _synthesize(pie, degrees=_degrees(args), method=args.method,
                      variant=args.variant, bisect_opts=bisect_opts)
    report = res.to_dict()
    if res.gamma is not None and res.controller is not None:
        cl = _closed_loop(pie, res.controller)
        report["closed_loop_abscissa"] = spectral_abscissa(
            pie, controller=res.controller.gain_matrix)
        if args.controller_csv:
            res.controller.save_csv(args.controller_csv)
            report["controller_csv"] = args.controller_csv
        if args.witness_out:
            _write_json(args.witness_out, {
                "kind": "synthesis", "system": pie.name, "model": args.model,
                "variant": res.variant,
                "gamma_squared": res.gamma_squared, "witness": res.witness,
                "controller": res.controller.to_dict(),
            })
            report["witness_file"] = args.witness_out
        del cl
    _emit(report, args.output)
    if args.metrics:
        _write_json(args.metrics, res.metrics)
    if res.gamma is None:
        return EXIT_SOLVER
    return EXIT_OK if res.certified else EXIT_UNCERTIFIED


def cmd_simulate(args):
    pde = _load(args.model)
    pie = pde_convert(pde)
    controller = None
    if args.controller:
        with open(args.controller, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        op_data = data.get("controller", {}).get("operator") or data.get("operator")
        if op_data is None:
            print("controller file has no operator", file=sys.stderr)
            return EXIT_BADINPUT
        controller = certify_mod.deserialize_operator(op_data)

    sims = {}
    if args.path in ("pie", "both"):
        sims["pie"] = simulate_pie(pie, T_final=args.t_final, nsteps=args.nsteps,
                                   grid_n=args.grid_n, controller=controller)
    if args.path in ("pde", "both"):
        sims["pde"] = simulate_pde(pde, T_final=args.t_final, nsteps=args.nsteps,
                                   grid_n=args.grid_n, controller=controller)
    report = {"system": pie.name, "closed_loop": controller is not None}
    for name, sim in sims.items():
        report[name] = {"peak": sim.peak, "peak_time": sim.peak_time,
                        "T_final": sim.meta["T_final"], "grid_n": sim.meta["grid_n"]}
    if len(sims) == 2:
        ref = max(abs(sims["pie"].peak), abs(sims["pde"].peak), 1e-12)
        report["peak_mismatch"] = abs(sims["pie"].peak - sims["pde"].peak) / ref
    if args.csv:
        base, ext = os.path.splitext(args.csv)
        for name, sim in sims.items():
            out = args.csv if len(sims) == 1 else f"{base}_{name}{ext}"
            sim.save_csv(out)
        report["csv"] = args.csv
    _emit(report, args.output)
    return EXIT_OK


def cmd_certify(args):
    with open(args.witness_file, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    model = args.model or data.get("model")
    if model is None:
        print("no model given and none recorded in the witness file", file=sys.stderr)
        return EXIT_BADINPUT
    pde = _load(model)
    pie = pde_convert(pde)
    g2 = float(data["gamma_squared"])
    if data.get("kind") == "synthesis":
        Qop = certify_mod.deserialize_operator(data["witness"]["Q"])
        Zop = certify_mod.deserialize_operator(data["witness"]["Z"])
        report = _verify_synthesis(pie, Qop, Zop, g2,
                                   variant=data.get("variant", "noncoercive"),
                                   tol=args.tol)
    else:
        Qop = certify_mod.deserialize_operator(data["witness"]["Q"])
        report = certify_mod.verify_certificate(
            pie, Qop, g2, form=data.get("form", "dual"),
            coercive=bool(data.get("coercive", False)), tol=args.tol)
    report = {"system": pie.name, "gamma": float(np.sqrt(max(g2, 0.0))), **report}
    _emit(report, args.output)
    return EXIT_OK if report["passed"] else EXIT_UNCERTIFIED


# ----------------------------------------------------------------------
# argument wiring
# ----------------------------------------------------------------------


def _add_model(p):
    p.add_argument("model", help="model file path or packaged name "
                                 f"(packaged: {', '.join(builtin_models())})")
    p.add_argument("--output", help="write the JSON report here instead of stdout")


def _add_degrees(p):
    p.add_argument("--d0", type=int, help="multiplier basis degree")
    p.add_argument("--d1", type=int, help="integral-kernel basis degree")


def build_parser():
    ap = _Parser(prog="pipeak", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="model file to integral-operator form")
    _add_model(p)
    p.add_argument("--operators", help="write serialized operators to this JSON file")
    p.set_defaults(fn=cmd_convert)

    p = sub.add_parser("analyze", help="certified impulse-to-peak bound")
    _add_model(p)
    _add_degrees(p)
    p.add_argument("--form", choices=("primal", "dual"), default="dual")
    p.add_argument("--coercive", action="store_true",
                   help="use the coercive storage family instead of the default")
    p.add_argument("--method", choices=("auto", "direct", "bisect"), default="auto")
    p.add_argument("--compare", action="store_true",
                   help="also run the other form and report the duality gap")
    p.add_argument("--witness-out", help="save the certificate witness JSON here")
    p.add_argument("--sdpa", help="export the compiled program in SDPA sparse format")
    p.add_argument("--metrics", help="write solver metrics (timings) to this file")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("synthesize", help="bisection synthesis of state feedback")
    _add_model(p)
    _add_degrees(p)
    p.add_argument("--method", choices=("bisect", "direct"), default="bisect")
    p.add_argument("--variant", choices=("noncoercive", "coercive"),
                   default="noncoercive",
                   help="storage family: tied to the state map (default) or "
                        "coercive with sandwiched constraints")
    p.add_argument("--rel-tol", type=float, default=1e-3,
                   help="relative bisection tolerance on the level")
    p.add_argument("--hi", type=float, help="initial upper level for the bisection")
    p.add_argument("--controller-csv", help="write the gain kernels on the grid as CSV")
    p.add_argument("--witness-out", help="save the synthesis witness JSON here")
    p.add_argument("--metrics", help="write solver metrics (timings) to this file")
    p.set_defaults(fn=cmd_synthesize)

    p = sub.add_parser("simulate", help="impulse response (both simulation paths)")
    _add_model(p)
    p.add_argument("--path", choices=("pie", "pde", "both"), default="both")
    p.add_argument("--controller", help="witness/controller JSON from synthesize")
    p.add_argument("--t-final", type=float, default=None)
    p.add_argument("--nsteps", type=int, default=4000)
    p.add_argument("--grid-n", type=int, default=96)
    p.add_argument("--csv", help="write trajectories as CSV (suffixed per path)")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("certify", help="re-verify a saved witness file")
    p.add_argument("witness_file", help="JSON written by analyze/synthesize --witness-out")
    p.add_argument("--model", help="model path/name (defaults to the one recorded)")
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--output", help="write the JSON report here instead of stdout")
    p.set_defaults(fn=cmd_certify)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as err:
        print(f"model error: {err}", file=sys.stderr)
        return EXIT_BADINPUT
    except FileNotFoundError as err:
        print(f"missing file: {err}", file=sys.stderr)
        return EXIT_BADINPUT
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BADINPUT


if __name__ == "__main__":
    sys.exit(main(argv=None))
