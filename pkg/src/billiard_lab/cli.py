"""Batch experiment runner.

    bil equidist --config cfg.json --out results/
    bil escape --config cfg.json --out results/ --threads 4
    bil verify --config cfg.json --certificate results/certificate.json

A config names the curve, the arc and exactly one command block.  Every data
artifact carries the SHA-256 of the canonical config; wall-clock data lives
only in ``manifest.json``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import platform
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .artifacts import config_hash, dumps, dumps_line, write_csv, write_json
from .billiard_map import PhasePoint, orbit, orbit_rows
from .curve import ArcSpec, CurveSpec, make_curve
from .errors import BilliardError, InvalidSpec, ParseError, ValidationError
from .insecurity import (
    EPS_BOUNDARY,
    BlockerSet,
    EscapeCertificate,
    build_moduli,
    collision_bounds_check,
    compute_delta,
    equidistribution_scan,
    escape_search,
    verify_certificate,
)
from .lazutkin import build_sigma, shift_consistency
from .trajectory import solve_min_polyline

log = logging.getLogger("billiard_lab")

COMMANDS = ("equidist", "escape", "orbit", "trajectory")
SUBCOMMANDS = ("curve-info", "orbit", "trajectory", "equidist", "escape", "verify")

_BLOCK_KEYS = {
    "equidist": ({"n_list"}, set()),
    "escape": ({"blockers"}, {"N_start", "N_max", "eps_boundary", "eps_interior", "C_hat_n_list"}),
    "orbit": ({"s0", "phi0", "steps"}, set()),
    "trajectory": ({"n"}, {"tol_grad", "max_iter"}),
}


@dataclass
class ExperimentConfig:
    raw: dict
    curve: CurveSpec
    arc: dict
    command: str | None
    params: dict

    @property
    def hash(self):
        return config_hash(self.raw)

    def resolve_arc(self, curve):
        if self.arc.get("quarter"):
            return ArcSpec.quarter(curve).validate(curve)
        return ArcSpec(float(self.arc["s_A"]), float(self.arc["s_B"])).validate(curve)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _check_curve(obj, errors):
    if not isinstance(obj, dict):
        errors.append(("curve", "expected an object"))
        return None
    kind = obj.get("kind")
    allowed = {
        "circle": {"kind", "radius"},
        "ellipse": {"kind", "a", "b"},
        "fourier_circle": {"kind", "r0", "harmonics"},
    }
    if kind not in allowed:
        errors.append(("curve.kind", f"unknown curve kind {kind!r}"))
        return None
    for key in obj:
        if key not in allowed[kind]:
            errors.append((f"curve.{key}", "unknown key"))
    for key in allowed[kind] - {"kind", "harmonics"}:
        if key not in obj:
            errors.append((f"curve.{key}", "missing"))
        elif not _is_num(obj[key]):
            errors.append((f"curve.{key}", "must be a finite number"))
    if kind == "fourier_circle":
        hs = obj.get("harmonics", [])
        if not isinstance(hs, list):
            errors.append(("curve.harmonics", "expected a list of [j, cos, sin]"))
        else:
            for i, h in enumerate(hs):
                if not (isinstance(h, list) and len(h) == 3 and _is_int(h[0])
                        and _is_num(h[1]) and _is_num(h[2])):
                    errors.append((f"curve.harmonics[{i}]", "expected [int, number, number]"))
    if errors:
        return None
    try:
        return CurveSpec.from_json(obj)
    except InvalidSpec as exc:
        errors.append(("curve", str(exc)))
        return None


def _check_arc(obj, errors):
    if not isinstance(obj, dict):
        errors.append(("arc", "expected an object"))
        return
    if "quarter" in obj:
        if obj != {"quarter": True}:
            errors.append(("arc", 'shorthand must be exactly {"quarter": true}'))
        return
    for key in obj:
        if key not in ("s_A", "s_B"):
            errors.append((f"arc.{key}", "unknown key"))
    for key in ("s_A", "s_B"):
        if key not in obj:
            errors.append((f"arc.{key}", "missing"))
        elif not _is_num(obj[key]):
            errors.append((f"arc.{key}", "must be a finite number"))
    if not errors and not obj["s_A"] < obj["s_B"]:
        errors.append(("arc", "s_A < s_B required"))


def _check_block(name, block, errors):
    if not isinstance(block, dict):
        errors.append((name, "expected an object"))
        return
    required, optional = _BLOCK_KEYS[name]
    for key in block:
        if key not in required | optional:
            errors.append((f"{name}.{key}", "unknown key"))
    for key in required:
        if key not in block:
            errors.append((f"{name}.{key}", "missing"))
    if name == "equidist" and "n_list" in block:
        nl = block["n_list"]
        if not (isinstance(nl, list) and nl and all(_is_int(n) and n >= 2 for n in nl)):
            errors.append(("equidist.n_list", "expected a non-empty list of integers >= 2"))
        elif any(b <= a for a, b in zip(nl, nl[1:])):
            errors.append(("equidist.n_list", "must be strictly increasing"))
    elif name == "trajectory":
        if "n" in block and not (_is_int(block["n"]) and block["n"] >= 2):
            errors.append(("trajectory.n", "integer >= 2 required"))
        if "tol_grad" in block and not (_is_num(block["tol_grad"]) and block["tol_grad"] > 0):
            errors.append(("trajectory.tol_grad", "must be positive"))
        if "max_iter" in block and not (_is_int(block["max_iter"]) and block["max_iter"] > 0):
            errors.append(("trajectory.max_iter", "must be a positive integer"))
    elif name == "orbit":
        for key in ("s0", "phi0"):
            if key in block and not _is_num(block[key]):
                errors.append((f"orbit.{key}", "must be a finite number"))
        if "phi0" in block and _is_num(block["phi0"]) and not 0 < block["phi0"] < math.pi:
            errors.append(("orbit.phi0", "must lie in (0, pi)"))
        if "steps" in block and not (_is_int(block["steps"]) and block["steps"] >= 1):
            errors.append(("orbit.steps", "integer >= 1 required"))
    elif name == "escape":
        if "blockers" in block:
            try:
                BlockerSet.from_json(block["blockers"], path="escape.blockers")
            except ValidationError as exc:
                errors.extend(exc.errors)
        for key in ("N_start", "N_max"):
            if key in block and not (_is_int(block[key]) and block[key] >= 0):
                errors.append((f"escape.{key}", "non-negative integer required"))
        if _is_int(block.get("N_start", 1)) and _is_int(block.get("N_max", 50)):
            if block.get("N_max", 50) < block.get("N_start", 1):
                errors.append(("escape.N_max", "must be >= N_start"))
        for key in ("eps_boundary", "eps_interior"):
            if key in block and not (_is_num(block[key]) and block[key] > 0):
                errors.append((f"escape.{key}", "must be positive"))
        if "C_hat_n_list" in block:
            nl = block["C_hat_n_list"]
            if not (isinstance(nl, list) and nl and all(_is_int(n) and n >= 2 for n in nl)):
                errors.append(("escape.C_hat_n_list", "expected a non-empty list of integers >= 2"))


def parse_config(text, subcommand=None):
    """Parse and validate a config document; raises ParseError or ValidationError."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", position=exc.pos) from exc
    if not isinstance(raw, dict):
        raise ValidationError([("$", "top level must be an object")])
    errors = []
    for key in raw:
        if key not in ("curve", "arc", *COMMANDS):
            errors.append((key, "unknown key"))
    curve = None
    if "curve" not in raw:
        errors.append(("curve", "missing"))
    else:
        cerr = []
        curve = _check_curve(raw["curve"], cerr)
        errors.extend(cerr)
    arc = raw.get("arc", {"quarter": True})
    _check_arc(arc, errors)
    blocks = [c for c in COMMANDS if c in raw]
    if len(blocks) > 1:
        errors.append(("$", f"exactly one command block allowed, found {blocks}"))
    elif not blocks and subcommand != "curve-info":
        errors.append(("$", "exactly one command block required"))
    for b in blocks:
        _check_block(b, raw[b], errors)
    command = blocks[0] if len(blocks) == 1 else None
    if subcommand in COMMANDS and command is not None and command != subcommand:
        errors.append(("$", f"subcommand {subcommand!r} does not match block {command!r}"))
    if subcommand == "verify" and command != "escape":
        errors.append(("$", "verify needs the escape block that produced the certificate"))
    if errors:
        raise ValidationError(errors)
    return ExperimentConfig(raw, curve, arc, command, raw.get(command, {}) if command else {})


# -- commands -----------------------------------------------------------------


def _curve_info(cfg, curve, arc, sm, out, threads):
    t = np.linspace(0.0, 2 * math.pi, 4096, endpoint=False)
    k = curve.curvature_t(t)
    write_json(out / "curve.json", {
        "config_hash": cfg.hash,
        "curve": cfg.curve.to_json(),
        "total_length": curve.total_length,
        "diameter": curve.diameter,
        "curvature_min": float(k.min()),
        "curvature_max": float(k.max()),
        "arc": {"s_A": arc.s_A, "s_B": arc.s_B},
        "sigma_total_mass": sm.total_mass,
    })
    return ["curve.json"]


def _orbit(cfg, curve, arc, sm, out, threads):
    p = cfg.params
    pts = orbit(curve, PhasePoint(float(p["s0"]) % curve.total_length, float(p["phi0"])), int(p["steps"]))
    write_csv(out / "orbit.csv", ["index", "s", "phi", "x", "y"], orbit_rows(curve, pts), cfg.hash)
    return ["orbit.csv"]


def _trajectory_csv(path, curve, traj, h):
    pos = curve.position_t(curve.t_of_s(traj.vertex_s)).T
    rows = [(i, traj.vertex_s[i], traj.vertex_sigma[i], pos[i, 0], pos[i, 1]) for i in range(traj.n + 1)]
    write_csv(path, ["index", "s", "sigma", "x", "y"], rows, h)


def _trajectory(cfg, curve, arc, sm, out, threads):
    p = cfg.params
    traj = solve_min_polyline(
        curve, sm, int(p["n"]), tol_grad=float(p.get("tol_grad", 1e-12)),
        max_iter=int(p.get("max_iter", 200)),
    )
    doc = {"config_hash": cfg.hash, **traj.to_json(),
           "phi_list": traj.phi_list.tolist(),
           "boundary_sticking": traj.boundary_sticking,
           "iterations": traj.iterations}
    write_json(out / "trajectory.json", doc)
    _trajectory_csv(out / "trajectory.csv", curve, traj, cfg.hash)
    write_json(out / "shift_consistency.json",
               {"config_hash": cfg.hash, **shift_consistency(curve, sm, traj)})
    return ["trajectory.json", "trajectory.csv", "shift_consistency.json"]


def _equidist(cfg, curve, arc, sm, out, threads):
    table = equidistribution_scan(curve, sm, cfg.params["n_list"], threads=threads,
                                  keep_trajectories=True)
    rows = [(r.n, r.D_n, r.n2Dn, r.phi_max, r.H_spread) for r in table.good_rows()]
    write_csv(out / "deviation_table.csv", ["n", "D_n", "n2Dn", "phi_max", "H_spread"], rows, cfg.hash)
    write_json(out / "equidist_summary.json", {
        "config_hash": cfg.hash,
        "slope": table.slope,
        "phi_slope": table.phi_slope,
        "C_hat": table.C_hat,
        "C_hat_note": "empirical max of n^2 D_n over the scanned n",
        "flag": table.flag,
        "argmax_m": {str(r.n): r.argmax_m for r in table.good_rows()},
        "failed_rows": [{"n": r.n, "error": r.error} for r in table.rows if r.error],
    })
    with open(out / "shift_consistency.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for n in sorted(table.trajectories):
            rep = shift_consistency(curve, sm, table.trajectories[n])
            fh.write(dumps_line({"config_hash": cfg.hash, **rep}) + "\n")
    return ["deviation_table.csv", "equidist_summary.json", "shift_consistency.jsonl"]


def _escape(cfg, curve, arc, sm, out, threads):
    p = cfg.params
    blockers = BlockerSet.from_json(p["blockers"], path="escape.blockers")
    eps_b = float(p.get("eps_boundary", EPS_BOUNDARY))
    eps_i = p.get("eps_interior")
    cert = escape_search(curve, sm, blockers, N_start=int(p.get("N_start", 1)),
                         N_max=int(p.get("N_max", 50)), eps_boundary=eps_b,
                         eps_interior=None if eps_i is None else float(eps_i), threads=threads)
    report = verify_certificate(curve, sm, blockers, cert)
    plan = build_moduli(blockers)
    delta = compute_delta(blockers, plan)
    analysis = {
        "Q": plan.Q,
        "k": plan.k,
        "candidates": plan.candidates(cert.N_used),
        "delta": delta.delta,
        "delta_witness": None if delta.witness is None
        else {"blocker": delta.witness[0], "fraction": delta.witness[1]},
    }
    if math.isfinite(delta.delta):
        table = equidistribution_scan(curve, sm, p.get("C_hat_n_list", [16, 32, 64]), threads=threads)
        analysis["collision_bounds"] = collision_bounds_check(delta.delta, plan.Q, cert.N_used, table.C_hat)
        analysis["collision_bounds"]["C_hat"] = table.C_hat
    doc = {
        "config_hash": cfg.hash,
        "curve": cfg.curve.to_json(),
        "arc": {"s_A": arc.s_A, "s_B": arc.s_B},
        "blockers": blockers.to_json(),
        **cert.to_json(),
        "verification": report.to_json(),
        "analysis": analysis,
    }
    write_json(out / "certificate.json", doc)
    return ["certificate.json"]


def _verify(cfg, curve, arc, sm, out, threads, certificate=None):
    path = Path(certificate) if certificate else out / "certificate.json"
    doc = json.loads(path.read_text(encoding="utf-8"))
    blockers = BlockerSet.from_json(cfg.params["blockers"], path="escape.blockers")
    cert = EscapeCertificate.from_json(doc, curve, sm)
    report = verify_certificate(curve, sm, blockers, cert)
    write_json(out / "verification.json", {"config_hash": cfg.hash, "certificate": str(path),
                                           **report.to_json()})
    if not report.passed:
        raise CertificateRejected(report)
    return ["verification.json"]


class CertificateRejected(BilliardError):
    def __init__(self, report):
        super().__init__(
            f"certificate fails: boundary blockers {report.failing_boundary}, "
            f"interior blockers {report.failing_interior}"
        )
        self.report = report


_HANDLERS = {
    "curve-info": _curve_info,
    "orbit": _orbit,
    "trajectory": _trajectory,
    "equidist": _equidist,
    "escape": _escape,
    "verify": _verify,
}


def run_experiment(config, out_dir, subcommand=None, threads=1, certificate=None):
    """Run one command and write its artifacts plus ``manifest.json`` into ``out_dir``."""
    sub = subcommand or config.command or "curve-info"
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        curve = make_curve(config.curve)
    except BilliardError as exc:
        exc.config_path = "curve"
        raise
    try:
        arc = config.resolve_arc(curve)
        sm = build_sigma(curve, arc)
    except BilliardError as exc:
        exc.config_path = "arc"
        raise
    handler = _HANDLERS[sub]
    try:
        if sub == "verify":
            files = handler(config, curve, arc, sm, out, threads, certificate=certificate)
        else:
            files = handler(config, curve, arc, sm, out, threads)
    except BilliardError as exc:
        exc.config_path = config.command or sub
        raise
    manifest = {
        "command": sub,
        "config": config.raw,
        "config_hash": config.hash,
        "files": files,
        "runtime_s": time.perf_counter() - start,
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "versions": {
            "billiard_lab": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "threads": threads,
    }
    write_json(out / "manifest.json", manifest)
    return manifest


def _setup_logging():
    level = os.environ.get("BIL_LOG", "error").lower()
    logging.basicConfig(
        stream=sys.stderr,
        level={"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(level, logging.ERROR),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _error_doc(exc):
    doc = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ValidationError):
        doc["errors"] = [{"path": p, "reason": r} for p, r in exc.errors]
    if isinstance(exc, ParseError):
        doc["position"] = exc.position
    if getattr(exc, "config_path", None):
        doc["config_path"] = exc.config_path
    if isinstance(exc, CertificateRejected):
        doc["verification"] = exc.report.to_json()
    return doc


def build_parser():
    parser = argparse.ArgumentParser(prog="bil", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="experiment config (JSON)")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--threads", type=int, default=1)
        if name == "verify":
            sp.add_argument("--certificate", help="certificate.json to check (default OUT/certificate.json)")
    return parser


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print(dumps({"error": "ValidationError", "message": "--threads must be >= 1"}), end="")
        return 2
    try:
        text = Path(args.config).read_text(encoding="utf-8")
        cfg = parse_config(text, subcommand=args.subcommand)
        manifest = run_experiment(cfg, args.out, subcommand=args.subcommand, threads=args.threads,
                                  certificate=getattr(args, "certificate", None))
    except (ParseError, ValidationError) as exc:
        print(dumps(_error_doc(exc)), end="")
        return 2
    except (BilliardError, OSError) as exc:
        print(dumps(_error_doc(exc)), end="")
        return 1
    log.info("wrote %s", ", ".join(manifest["files"]))
    print(dumps({"status": "ok", "command": manifest["command"], "files": manifest["files"],
                 "config_hash": manifest["config_hash"]}), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
