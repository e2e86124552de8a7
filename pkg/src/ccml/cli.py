"""Command-line front end: config ingestion, experiment orchestration,
and CSV report emission.

Subcommands: info, hormander, norm, approx, distance, speed, validate.
Every run validates its JSON config against CONFIG_SCHEMA, materializes
all defaults, and echoes the resolved config into the output directory,
so a report is reproducible from its own artifacts. CSV files are UTF-8
with a header row and 17-significant-digit floats.

Exit codes: 0 all checks pass; 1 config or usage error; 2 a property
check failed (witnesses are in the written report); 3 a numerical
routine did not converge.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from . import gallery
from .distance import (
    ControlOptParams,
    cc_distance_upper,
    distance_convergence,
    integrate,
    metric_speed_check,
    parallelogram_check,
)
from .distribution import rank_radius
from .finsler import (
    AssemblyError,
    build_sequence,
    convergence_probe,
    validate_sequence,
)
from .norms import NormConstructionError, build_anchor_norm, verify_anchor
from .polyfield import ChartDomain, PolyField
from .sampling import box_points
from .structure import (
    FiberNorm,
    SolverError,
    SubFinslerStructure,
    check_hormander,
    rank,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PROPERTY = 2
EXIT_NUMERICAL = 3


class ConfigError(ValueError):
    """Config file missing, unparsable, or schema-invalid."""


# ---------------------------------------------------------------------------
# config schema


_POLY_TERMS = {  # one scalar polynomial: list of monomial terms
    "type": "array",
    "items": {
        "type": "object",
        "properties": {
            "exps": {"type": "array",
                     "items": {"type": "integer", "minimum": 0}},
            "coef": {"type": "number"},
        },
        "required": ["exps", "coef"],
        "additionalProperties": False,
    },
}

_BOX = {
    "type": "object",
    "properties": {
        "lower": {"type": "array", "items": {"type": "number"}},
        "upper": {"type": "array", "items": {"type": "number"}},
    },
    "required": ["lower", "upper"],
    "additionalProperties": False,
}

_POINT = {"type": "array", "items": {"type": "number"}}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "structure": {
            "type": "object",
            "properties": {
                "builtin": {"type": "string"},
                "custom": {
                    "type": "object",
                    "properties": {
                        "name": {"type": "string"},
                        "box": _BOX,
                        "fields": {"type": "array",
                                   "items": {"type": "array",
                                             "items": _POLY_TERMS}},
                        "sigma": {
                            "type": "object",
                            "properties": {
                                "kind": {"enum": ["euclidean", "weighted"]},
                                "p": {"type": "number", "minimum": 1.0},
                                "weights": {"type": "array",
                                            "items": _POLY_TERMS},
                            },
                            "required": ["kind"],
                            "additionalProperties": False,
                        },
                        "declared_step": {"type": "integer", "minimum": 1},
                    },
                    "required": ["box", "fields", "sigma", "declared_step"],
                    "additionalProperties": False,
                },
            },
            "oneOf": [{"required": ["builtin"]}, {"required": ["custom"]}],
            "additionalProperties": False,
        },
        "sequence": {
            "type": "object",
            "properties": {
                "N": {"type": "integer", "minimum": 1},
                "blend": {"enum": ["norm", "gram"]},
                "box": _BOX,
            },
            "additionalProperties": False,
        },
        "distance": {
            "type": "object",
            "properties": {
                "x": _POINT,
                "y": _POINT,
                "h": {"type": "number", "exclusiveMinimum": 0},
                "reach": {"type": "integer", "minimum": 1},
                "K": {"type": "integer", "minimum": 1},
                "restarts": {"type": "integer", "minimum": 1},
                "opt_substeps": {"type": "integer", "minimum": 1},
            },
            "required": ["x", "y"],
            "additionalProperties": False,
        },
        "norm": {
            "type": "object",
            "properties": {
                "point": _POINT,
                "eps": {"type": "number", "exclusiveMinimum": 0},
                "lambda": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["point"],
            "additionalProperties": False,
        },
        "speed": {
            "type": "object",
            "properties": {
                "x0": _POINT,
                "controls": {"type": "array", "items": _POINT},
                "t_samples": {"type": "array", "items": {"type": "number"}},
                "h_list": {"type": "array",
                           "items": {"type": "number", "exclusiveMinimum": 0}},
                "tol": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["x0", "controls"],
            "additionalProperties": False,
        },
        "probes": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"x": _POINT, "v": _POINT},
                "required": ["x", "v"],
                "additionalProperties": False,
            },
        },
        "samples": {
            "type": "object",
            "properties": {
                "n_points": {"type": "integer", "minimum": 1},
                "n_dirs": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "validate": {
            "type": "object",
            "properties": {
                "entries": {"type": "array", "items": {"type": "string"}},
                "N": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "seed": {"type": "integer", "minimum": 0},
        "jobs": {"type": "integer", "minimum": 1},
    },
    "required": ["structure"],
    "additionalProperties": False,
}

_DEFAULTS = {
    "sequence": {"N": 3, "blend": "norm"},
    "samples": {"n_points": 12, "n_dirs": 16},
    "seed": 0,
    "jobs": 1,
}


def load_config(path: str, seed: Optional[int], jobs: Optional[int]) -> dict:
    """Parse, schema-validate, and default-fill a run config."""
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        raise ConfigError(
            f"config schema violation at {e.json_path}: {e.message}") from e
    for key, val in _DEFAULTS.items():
        if isinstance(val, dict):
            cfg[key] = {**val, **cfg.get(key, {})}
        else:
            cfg.setdefault(key, val)
    if seed is not None:
        cfg["seed"] = int(seed)
    if jobs is not None:
        cfg["jobs"] = int(jobs)
    elif "jobs" not in cfg or cfg["jobs"] == 1:
        env = os.environ.get("CCML_JOBS")
        if env is not None:
            try:
                cfg["jobs"] = max(1, int(env))
            except ValueError:
                raise ConfigError(f"CCML_JOBS must be an integer, got {env!r}")
    return cfg


def _poly_from_terms(dim_in: int, entries: list) -> PolyField:
    out = []
    for terms in entries:
        d: dict = {}
        for t in terms:
            exps = tuple(int(e) for e in t["exps"])
            if len(exps) != dim_in:
                raise ConfigError(
                    f"monomial {list(exps)} has {len(exps)} exponents, "
                    f"expected {dim_in}")
            d[exps] = d.get(exps, 0.0) + float(t["coef"])
        out.append(d)
    return PolyField(dim_in, out)


def structure_from_config(cfg: dict) -> SubFinslerStructure:
    spec = cfg["structure"]
    if "builtin" in spec:
        try:
            return gallery.builtin(spec["builtin"]).structure
        except KeyError as e:
            raise ConfigError(str(e)) from e
    c = spec["custom"]
    box = ChartDomain(tuple(c["box"]["lower"]), tuple(c["box"]["upper"]))
    n = box.dim
    try:
        fields = tuple(_poly_from_terms(n, f) for f in c["fields"])
        d = len(fields)
        if c["sigma"]["kind"] == "euclidean":
            sigma = FiberNorm.euclidean(d, n)
        else:
            sigma = FiberNorm.weighted(
                float(c["sigma"].get("p", 2.0)),
                _poly_from_terms(n, c["sigma"]["weights"]))
        return SubFinslerStructure(box, fields, sigma,
                                   name=c.get("name", "custom"),
                                   declared_step=c["declared_step"])
    except (ValueError, KeyError) as e:
        raise ConfigError(f"invalid custom structure: {e}") from e


# ---------------------------------------------------------------------------
# report emission


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path: Path, header: list, rows: list) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _echo_config(cfg: dict, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config_resolved.json", "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sample_points(S: SubFinslerStructure, n_points: int,
                   seed: int) -> np.ndarray:
    lo = np.asarray(S.domain.lower, float)
    up = np.asarray(S.domain.upper, float)
    pts = lo + (up - lo) * box_points(n_points, [0.0] * S.n, [1.0] * S.n,
                                      seed_skip=seed)
    return np.vstack([pts, np.zeros((1, S.n))])


# ---------------------------------------------------------------------------
# subcommands


def cmd_info(cfg: dict, out: Path) -> int:
    S = structure_from_config(cfg)
    n_seq = cfg["sequence"]["N"]
    pts = _sample_points(S, cfg["samples"]["n_points"], cfg["seed"])
    step_max = S.declared_step or (S.n + 1)
    rep = check_hormander(S, pts, step_max=step_max)
    rows = []
    for x, step in zip(rep.points, rep.steps):
        est = rank_radius(S, x, r_cap=1.0 / n_seq, grid_step=0.5 / n_seq)
        member = est.at_least(1.0 / n_seq)
        rows.append(list(x) + [rank(S, x),
                               step if step is not None else "fail",
                               "inf" if est.r_hat is None else est.r_hat,
                               n_seq, member])
    coords = [f"x{i + 1}" for i in range(S.n)]
    write_csv(out / "info.csv", coords + ["rank", "step", "r_hat", "n",
                                          "member"], rows)
    steps = {s for s in rep.steps if s is not None}
    print(f"structure {S.name or 'custom'}: n={S.n} d={S.d} "
          f"sigma={S.sigma.kind}")
    if rep.all_pass and len(steps) == 1:
        print(f"bracket-generating step {steps.pop()} at all samples")
    elif rep.all_pass:
        print(f"bracket-generating steps {sorted(steps)} (point-dependent)")
    else:
        print(f"bracket generation FAILED within step {step_max} "
              f"at {sum(s is None for s in rep.steps)} samples")
    return EXIT_OK if rep.all_pass else EXIT_PROPERTY


def cmd_hormander(cfg: dict, out: Path) -> int:
    S = structure_from_config(cfg)
    pts = _sample_points(S, cfg["samples"]["n_points"], cfg["seed"])
    step_max = S.declared_step or (S.n + 1)
    rep = check_hormander(S, pts, step_max=step_max)
    coords = [f"x{i + 1}" for i in range(S.n)]
    write_csv(out / "hormander.csv", coords + ["step"],
              [list(x) + [s if s is not None else "fail"]
               for x, s in zip(rep.points, rep.steps)])
    print(f"hormander: {'pass' if rep.all_pass else 'FAIL'} "
          f"(step_max={step_max}, {len(rep.steps)} samples)")
    return EXIT_OK if rep.all_pass else EXIT_PROPERTY


def cmd_norm(cfg: dict, out: Path) -> int:
    S = structure_from_config(cfg)
    spec = cfg.get("norm")
    if spec is None:
        raise ConfigError("subcommand 'norm' needs a \"norm\" config section")
    xbar = tuple(spec["point"])
    eps = float(spec.get("eps", 0.1))
    lam = float(spec.get("lambda", 5.0))
    anchor = build_anchor_norm(S, xbar, eps, lam)
    rep = verify_anchor(S, anchor, seed_skip=cfg["seed"] + 1)
    rows = [("deviation_at_anchor", rep.deviation),
            ("r_U", anchor.r_U),
            ("item_i", rep.item_i), ("item_ii", rep.item_ii),
            ("item_iii", rep.item_iii)]
    rows += sorted(anchor.constants.items())
    write_csv(out / "norm.csv", ["key", "value"], rows)
    ok = rep.item_i and rep.item_ii and rep.item_iii
    print(f"anchor at {xbar}: deviation={rep.deviation:.4g} "
          f"r_U={anchor.r_U:.4g} {'pass' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_PROPERTY


def _default_probes(S: SubFinslerStructure) -> list:
    z = tuple(0.0 for _ in range(S.n))
    A = S.psi(z)
    probes = []
    col = A[:, 0]
    if np.linalg.norm(col) > 0:
        probes.append((z, tuple(col / np.linalg.norm(col))))
    for i in range(S.n):  # one transverse axis direction, if any
        e = np.zeros(S.n)
        e[i] = 1.0
        resid = e - A @ np.linalg.lstsq(A, e, rcond=None)[0]
        if np.linalg.norm(resid) > 1e-8:
            probes.append((z, tuple(e)))
            break
    return probes


def cmd_approx(cfg: dict, out: Path) -> int:
    S = structure_from_config(cfg)
    seq_cfg = cfg["sequence"]
    box = None
    if "box" in seq_cfg:
        box = ChartDomain(tuple(seq_cfg["box"]["lower"]),
                          tuple(seq_cfg["box"]["upper"]))
    fields = build_sequence(S, seq_cfg["N"], box=box,
                            blend=seq_cfg["blend"])
    rep = validate_sequence(S, fields,
                            n_points=cfg["samples"]["n_points"],
                            n_dirs=cfg["samples"]["n_dirs"],
                            seed_skip=cfg["seed"])
    write_csv(out / "approx_validation.csv", ["item", "status", "witness"],
              [(item, "pass" if ok else "fail",
                json.dumps(rep.witnesses.get(item, {}), sort_keys=True))
               for item, ok in (("a", rep.item_a), ("b", rep.item_b),
                                ("c", rep.item_c), ("d", rep.item_d))])
    probes = [(tuple(p["x"]), tuple(p["v"])) for p in cfg.get("probes", [])]
    probes = probes or _default_probes(S)
    conv = convergence_probe(S, fields, probes)
    rows = []
    for i, col in enumerate(conv.columns):
        for n, val in enumerate(col.values, start=1):
            rows.append((i, n, val, col.horizontal,
                         "pass" if col.ok else "fail"))
    write_csv(out / "approx_probes.csv",
              ["probe", "n", "value", "horizontal", "verdict"], rows)
    ok = rep.all_pass and conv.all_pass
    print(f"approx N={seq_cfg['N']}: validation "
          f"{'pass' if rep.all_pass else 'FAIL'}, probes "
          f"{'pass' if conv.all_pass else 'FAIL'}")
    return EXIT_OK if ok else EXIT_PROPERTY


def _opt_params(dist_cfg: dict) -> ControlOptParams:
    kw = {}
    for key in ("K", "restarts", "opt_substeps"):
        if key in dist_cfg:
            kw[key] = dist_cfg[key]
    return ControlOptParams(**kw)


def cmd_distance(cfg: dict, out: Path) -> int:
    S = structure_from_config(cfg)
    dist = cfg.get("distance")
    if dist is None:
        raise ConfigError(
            "subcommand 'distance' needs a \"distance\" config section")
    seq_cfg = cfg["sequence"]
    box = None
    if "box" in seq_cfg:
        box = ChartDomain(tuple(seq_cfg["box"]["lower"]),
                          tuple(seq_cfg["box"]["upper"]))
    fields = build_sequence(S, seq_cfg["N"], box=box, blend=seq_cfg["blend"])
    h = float(dist.get("h", 0.05))
    rep = distance_convergence(S, fields, tuple(dist["x"]), tuple(dist["y"]),
                               h, box=box, opt_params=_opt_params(dist))
    verdict = "pass" if rep.all_pass else "fail"
    write_csv(out / "distance.csv", ["n", "value", "error_bar", "verdict"],
              [(r.n, r.value, r.error_bar, verdict) for r in rep.rows])
    write_csv(out / "distance_plot.csv", ["n", "value"],
              [(r.n, r.value) for r in rep.rows])
    print(f"d_CC upper bound {rep.d_cc_upper:.6g} "
          f"(endpoint gap {rep.endpoint_gap:.2g})")
    print(f"d_F column: {[round(r.value, 6) for r in rep.rows]} "
          f"monotone={rep.monotone} below_cc={rep.below_cc}")
    return EXIT_OK if rep.all_pass else EXIT_PROPERTY


def cmd_speed(cfg: dict, out: Path) -> int:
    S = structure_from_config(cfg)
    spec = cfg.get("speed")
    if spec is None:
        raise ConfigError(
            "subcommand 'speed' needs a \"speed\" config section")
    path = integrate(S, tuple(spec["x0"]),
                     np.asarray(spec["controls"], float))
    t_samples = spec.get("t_samples", [0.2, 0.5, 0.8])
    h_list = spec.get("h_list", [0.01, 0.05])
    tol = float(spec.get("tol", 0.05))
    rep = metric_speed_check(S, path, t_samples, h_list,
                             opt_params=ControlOptParams(
                                 K=8, restarts=3, opt_substeps=4, substeps=8))
    ok = all(r.rel_gap <= tol for r in rep.rows)
    header = ["t", "speed"] + [f"quotient_h{_fmt(h)}" for h in rep.h_list] \
        + ["rel_gap", "verdict"]
    write_csv(out / "speed.csv", header,
              [[r.t, r.speed, *r.quotients, r.rel_gap,
                "pass" if r.rel_gap <= tol else "fail"] for r in rep.rows])
    print(f"speed check: {'pass' if ok else 'FAIL'} "
          f"(tol={tol}, {len(rep.rows)} samples)")
    return EXIT_OK if ok else EXIT_PROPERTY


def _validate_entry(name: str, N: int, seed: int) -> list:
    """All property checks for one gallery entry; rows for validate.csv."""
    entry = gallery.builtin(name)
    S = entry.structure
    rows = []
    pts = _sample_points(S, 8, seed)
    horm = check_hormander(S, pts, step_max=S.declared_step or (S.n + 1))
    rows.append((name, "hormander", "pass" if horm.all_pass else "fail", ""))
    para = parallelogram_check(S, n_points=10, n_pairs=8, seed_skip=seed)
    if S.is_sub_riemannian:
        st = "pass" if para.max_rel_defect <= 1e-9 else "fail"
        rows.append((name, "parallelogram", st,
                     f"max_rel_defect={para.max_rel_defect:.3g}"))
    else:
        # a non-Hilbert fiber norm must violate the identity somewhere
        st = "expected_fail" if para.max_rel_defect > 1e-6 else "fail"
        rows.append((name, "parallelogram_negative_control", st,
                     f"max_rel_defect={para.max_rel_defect:.3g}"))
    try:
        fields = build_sequence(S, N)
        rep = validate_sequence(S, fields, n_points=6, n_dirs=10,
                                seed_skip=seed)
        rows.append((name, "sequence", "pass" if rep.all_pass else "fail",
                     json.dumps(rep.witnesses, sort_keys=True, default=str)
                     if not rep.all_pass else ""))
    except (AssemblyError, NormConstructionError) as e:
        rows.append((name, "sequence", "error", str(e)))
    return rows


def cmd_validate(cfg: dict, out: Path) -> int:
    vcfg = cfg.get("validate", {})
    entries = vcfg.get("entries", gallery.names())
    N = vcfg.get("N", 2)
    seed = cfg["seed"]
    with ThreadPoolExecutor(max_workers=cfg["jobs"]) as pool:
        results = list(pool.map(
            lambda name: _validate_entry(name, N, seed), entries))
    rows = [row for chunk in results for row in chunk]
    write_csv(out / "validate.csv",
              ["structure", "check", "status", "detail"], rows)
    bad = [r for r in rows if r[2] not in ("pass", "expected_fail")]
    for name, check, status, detail in rows:
        print(f"{name:20s} {check:32s} {status}")
    print(f"validate: {len(rows) - len(bad)}/{len(rows)} checks pass")
    return EXIT_OK if not bad else EXIT_PROPERTY


_COMMANDS = {
    "info": cmd_info,
    "hormander": cmd_hormander,
    "norm": cmd_norm,
    "approx": cmd_approx,
    "distance": cmd_distance,
    "speed": cmd_speed,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ccml",
        description="sub-Finsler structures, monotone Finsler approximation, "
                    "and numerical CC distances")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--out", default="ccml_out", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=None,
                       help="worker pool size (falls back to $CCML_JOBS)")
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed, args.jobs)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    try:
        _echo_config(cfg, out)
        return _COMMANDS[args.command](cfg, out)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, AssemblyError, NormConstructionError,
            np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
