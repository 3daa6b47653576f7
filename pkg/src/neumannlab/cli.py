"""Command line entry point, run configuration and result persistence.

A run owns one output directory. It appends every solved mode to
``modes.jsonl`` (an append-only ledger keyed by config hash and mesh hash),
writes ``report.json`` and ``curves.csv``, and reuses ledger entries on
re-runs so an interrupted or repeated run does not solve again.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from . import __version__, bie, eig, geom, scaling, specfun
from . import microlocal as ml

log = logging.getLogger(__name__)

THREADS_ENV = "NEUMANNLAB_THREADS"
EXPERIMENTS = ("spectrum",) + scaling.KINDS
LADDER_SOURCES = ("solver", "oracle", "beam")


class CliError(Exception):
    pass


class ParseError(CliError):
    def __init__(self, msg: str, line: int = 0, column: int = 0):
        super().__init__(f"{msg} (line {line}, column {column})")
        self.line, self.column = line, column


class ValidationError(CliError):
    def __init__(self, field_name: str, msg: str = ""):
        super().__init__(field_name if not msg else f"{field_name}: {msg}")
        self.field = field_name


class MissingReport(CliError):
    pass


class LockHeld(CliError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_COMMON = {"slack": 0.05}
EXPERIMENT_DEFAULTS: dict[str, dict[str, Any]] = {
    "spectrum": {},
    "nonconcentration": {"center": "corner:0", "deltas": [0.3, 0.4, 0.45, 0.499], **_COMMON},
    "restriction": {"edge": 0, "window": "full", "delta": 0.5, "exponent": 0.25, **_COMMON},
    "tataru": {"edge": "all", "window": "full", "delta": 0.5, "exponent": 1.0 / 3.0, **_COMMON},
    "transfer_scaling": {
        "j": 0,
        "k_edge": 3,
        "hs": [1 / 40, 1 / 60, 1 / 90, 1 / 135],
        "delta": 0.45,
        "eps0": 0.1,
        "variant": "full",
        "window": [0.05, 0.35],
    },
    "gaussian_beam_sharpness": {
        "center": [0.0, 0.0],
        "edge": 0,
        "mass_window": [0.40, 0.65],
        "restriction_window": [0.15, 0.35],
        "min_modes": 4,
    },
}

DEFAULTS: dict[str, Any] = {
    "ladder": {
        "source": "solver",
        "k_range": None,
        "resolution": 0.05,
        "family": None,
        "indices": [],
        "count": 18,
    },
    "solver": {
        "nodes_per_wavelength": 12.0,
        "grading": 6.0,
        "dip_tol": 1e-4,
        "rtol": 1e-9,
        "threshold": 0.25,
    },
    "parallelism": 1,
}

# fields that do not change results
_NON_SEMANTIC = ("output", "parallelism")


@dataclass
class RunConfig:
    domain: Any
    experiment: dict[str, Any]
    ladder: dict[str, Any]
    solver: dict[str, Any]
    output: str
    parallelism: int
    base_dir: str = "."
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "domain": self.domain,
            "experiment": self.experiment,
            "ladder": self.ladder,
            "solver": self.solver,
            "output": self.output,
            "parallelism": self.parallelism,
        }

    @property
    def config_hash(self) -> str:
        d = self.to_dict()
        for k in _NON_SEMANTIC:
            d.pop(k, None)
        d["domain"] = self.load_domain().to_config()
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def load_domain(self) -> geom.Domain:
        return build_domain_spec(self.domain, self.base_dir)


def build_domain_spec(spec: Any, base_dir: str = ".") -> geom.Domain:
    if isinstance(spec, str):
        if spec in geom.PRESETS:
            return geom.preset(spec)
        return geom.load_domain(Path(base_dir) / spec)
    if isinstance(spec, dict) and "preset" in spec:
        return geom.preset(spec["preset"], **spec.get("params", {}))
    if isinstance(spec, dict) and "edges" in spec:
        return geom.build_domain(spec)
    raise ValidationError("domain", "expected a file path, a preset name, or an inline domain")


def _merge(defaults: dict, given: dict) -> dict:
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        out[k] = v
    return out


def _check_delta(name: str, v: Any) -> None:
    if not isinstance(v, (int, float)) or not (0.0 <= float(v) < 1.0):
        raise ValidationError(name, f"must lie in [0, 1), got {v!r}")


def parse_config(document: str, base_dir: str | Path = ".") -> RunConfig:
    """Parse and validate a JSON run configuration, filling every default."""
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(raw, dict):
        raise ParseError("top level must be an object", 1, 1)
    known = {"domain", "experiment", "ladder", "solver", "output", "parallelism"}
    unknown = set(raw) - known
    if unknown:
        raise ValidationError(sorted(unknown)[0], "unknown field")
    base_dir = str(base_dir)

    if "domain" not in raw:
        raise ValidationError("domain", "missing")
    dom_spec = raw["domain"]
    if isinstance(dom_spec, str) and dom_spec not in geom.PRESETS:
        if not (Path(base_dir) / dom_spec).is_file():
            raise ValidationError("domain", f"file {dom_spec!r} does not exist")
    try:
        build_domain_spec(dom_spec, base_dir)
    except ValidationError:
        raise
    except Exception as exc:  # geometry errors
        raise ValidationError("domain", str(exc)) from None

    exp_raw = raw.get("experiment", {})
    if isinstance(exp_raw, str):
        exp_raw = {"kind": exp_raw}
    if "kind" not in exp_raw:
        raise ValidationError("experiment.kind", "missing")
    if exp_raw["kind"] not in EXPERIMENTS:
        raise ValidationError("experiment.kind", f"unknown experiment {exp_raw['kind']!r}")
    experiment = _merge(EXPERIMENT_DEFAULTS[exp_raw["kind"]], exp_raw)
    if "delta" in exp_raw and "deltas" not in exp_raw and exp_raw["kind"] == "nonconcentration":
        experiment["deltas"] = [exp_raw.pop("delta")]
        experiment.pop("delta")
    if "delta" in experiment:
        _check_delta("delta", experiment["delta"])
    for d in experiment.get("deltas", []):
        _check_delta("delta", d)
    if "eps0" in experiment and not (0 < float(experiment["eps0"]) < 0.5):
        raise ValidationError("eps0", "must lie in (0, 1/2)")
    if float(experiment.get("slack", 0.0)) < 0:
        raise ValidationError("slack", "must be nonnegative")
    if any(float(h) <= 0 for h in experiment.get("hs", [])):
        raise ValidationError("hs", "must be positive")

    ladder = _merge(DEFAULTS["ladder"], raw.get("ladder", {}))
    if ladder["source"] not in LADDER_SOURCES:
        raise ValidationError("ladder.source", f"unknown source {ladder['source']!r}")
    if experiment["kind"] != "transfer_scaling":
        if ladder["source"] == "oracle":
            if not ladder["indices"]:
                raise ValidationError("ladder.indices", "ladder is empty")
            if ladder["family"] not in ("square", "rectangle", "disc"):
                raise ValidationError("ladder.family", "oracle family must be square or disc")
        else:
            kr = ladder["k_range"]
            if not (isinstance(kr, list) and len(kr) == 2 and 0 < float(kr[0]) < float(kr[1])):
                raise ValidationError("ladder.k_range", "need [kmin, kmax] with 0 < kmin < kmax")
            if ladder["source"] == "solver" and not float(ladder["resolution"]) > 0:
                raise ValidationError("ladder.resolution", "must be positive")
            if ladder["source"] == "beam" and int(ladder["count"]) < 1:
                raise ValidationError("ladder.count", "ladder is empty")

    solver = _merge(DEFAULTS["solver"], raw.get("solver", {}))
    for key in ("nodes_per_wavelength", "grading", "dip_tol", "rtol", "threshold"):
        if not float(solver[key]) > 0:
            raise ValidationError(f"solver.{key}", "must be positive")
    if float(solver["nodes_per_wavelength"]) < 6:
        raise ValidationError("solver.nodes_per_wavelength", "must be >= 6")

    par = raw.get("parallelism", DEFAULTS["parallelism"])
    if not isinstance(par, int) or par < 1:
        raise ValidationError("parallelism", "must be a positive integer")
    output = raw.get("output", "out")
    if not isinstance(output, str) or not output:
        raise ValidationError("output", "must be a nonempty path")
    return RunConfig(dom_spec, experiment, ladder, solver, output, par, base_dir)


# ---------------------------------------------------------------------------
# ledger
# ---------------------------------------------------------------------------


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _record(config_hash: str, rtype: str, key: str, payload: dict[str, Any], mesh_hash: str = "") -> dict[str, Any]:
    return {
        "timestamp": _now(),
        "version": __version__,
        "config_hash": config_hash,
        "type": rtype,
        "key": key,
        "mesh_hash": mesh_hash,
        "payload": payload,
    }


class Ledger:
    """Append-only JSON-lines store of solved modes and finished reports."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.entries: list[dict[str, Any]] = []
        if self.path.exists():
            for line in self.path.read_text().splitlines():
                line = line.strip()
                if not line:
                    continue
                try:
                    self.entries.append(json.loads(line))
                except json.JSONDecodeError:
                    log.warning("skipping a truncated ledger line")

    def append(self, rec: dict[str, Any]) -> None:
        with open(self.path, "a") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        self.entries.append(rec)

    def find(self, config_hash: str, rtype: str, key: str) -> dict[str, Any] | None:
        for rec in reversed(self.entries):
            if rec.get("config_hash") == config_hash and rec.get("type") == rtype and rec.get("key") == key:
                return rec
        return None


def mode_payload(m: eig.EigenMode) -> dict[str, Any]:
    return {
        "k": m.k,
        "nodes_per_wavelength": m.mesh.nodes_per_wavelength,
        "grading": m.mesh.p,
        "counts": m.mesh.counts.tolist(),
        "trace_re": np.real(m.trace).tolist(),
        "trace_im": np.imag(m.trace).tolist(),
        "normalized": m.normalized,
        "scale": [float(np.real(m.scale)), float(np.imag(m.scale))],
        "residuals": {k: (float(v) if isinstance(v, (int, float, np.floating)) else v) for k, v in m.residuals.items()},
        "provenance": m.provenance,
        "label": m.label,
        "cluster": m.cluster,
        "sigma": m.sigma if math.isfinite(m.sigma) else None,
    }


def mode_from_record(rec: dict[str, Any], domain: geom.Domain) -> eig.EigenMode | None:
    """Rebuild a mode from its ledger record; None when the mesh no longer matches."""
    p = rec["payload"]
    mesh = bie._assemble_mesh(domain, p["k"], p["nodes_per_wavelength"], p["grading"], np.asarray(p["counts"], dtype=int))
    if rec.get("mesh_hash") and mesh.fingerprint != rec["mesh_hash"]:
        return None
    trace = np.asarray(p["trace_re"]) + 1j * np.asarray(p["trace_im"])
    m = eig.EigenMode(
        p["k"],
        mesh,
        trace,
        p["normalized"],
        complex(*p["scale"]),
        dict(p["residuals"]),
        p["provenance"],
        p["label"],
        p["cluster"],
        float("nan") if p["sigma"] is None else p["sigma"],
    )
    return m


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


class _Lock:
    def __init__(self, out: Path):
        self.path = out / ".lock"

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise LockHeld(f"{self.path} exists; another run owns this directory") from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        try:
            self.path.unlink()
        except FileNotFoundError:
            pass


def _oracle_mode(family: str, idx: Iterable[int]) -> eig.EigenMode:
    return eig.closed_form_mode("square" if family == "rectangle" else family, *idx)


def _resolve_modes(cfg: RunConfig, domain: geom.Domain, ledger: Ledger, chash: str) -> tuple[list[eig.EigenMode], dict[str, Any]]:
    lad, sol = cfg.ladder, cfg.solver
    npw, p = float(sol["nodes_per_wavelength"]), float(sol["grading"])
    info: dict[str, Any] = {"solved": 0, "reused": 0}
    modes: list[eig.EigenMode] = []

    def cached(key: str) -> list[eig.EigenMode] | None:
        rec = ledger.find(chash, "modes", key)
        if rec is None:
            return None
        out = []
        for r in rec["payload"]["modes"]:
            m = mode_from_record({"payload": r, "mesh_hash": r.get("mesh_hash", "")}, domain)
            if m is None:
                return None
            out.append(m)
        info["reused"] += len(out)
        return out

    def store(key: str, found: list[eig.EigenMode]) -> None:
        payload = []
        for m in found:
            d = mode_payload(m)
            d["mesh_hash"] = m.mesh.fingerprint
            payload.append(d)
        ledger.append(_record(chash, "modes", key, {"modes": payload}, found[0].mesh.fingerprint if found else ""))
        info["solved"] += len(found)

    if lad["source"] == "oracle":
        for idx in lad["indices"]:
            key = f"oracle:{lad['family']}:{','.join(map(str, idx))}"
            m = _oracle_mode(lad["family"], idx)
            if ledger.find(chash, "modes", key) is None:
                store(key, [m])
            else:
                info["reused"] += 1
            modes.append(m)
        return modes, info

    if lad["source"] == "solver":
        scan_rec = ledger.find(chash, "scan", "scan")
        if scan_rec is None:
            scan = eig.scan_spectrum(domain, tuple(lad["k_range"]), float(lad["resolution"]), npw, p, float(sol["threshold"]))
            cands = scan.candidates
            ledger.append(_record(chash, "scan", "scan", {"k": scan.k.tolist(), "sigma": scan.sigma.tolist(), "candidates": cands}))
        else:
            cands = [tuple(c) for c in scan_rec["payload"]["candidates"]]
        for br in cands:
            key = f"bracket:{br[0]:.12g},{br[1]:.12g}"
            got = cached(key)
            if got is None:
                try:
                    got = eig.refine_mode(domain, tuple(br), npw, p, dip_tol=float(sol["dip_tol"]), rtol=float(sol["rtol"]))
                except eig.NoDipInBracket:
                    got = []
                store(key, got)
            modes.extend(got)
        return sorted(modes, key=lambda m: m.k), info

    # beam ladder on the half ellipse
    kmin, kmax = map(float, lad["k_range"])
    entries, seeds = scaling.select_beam_seeds(kmin, kmax, int(lad["count"]))
    by_k = {round(s.k, 9): s for s in seeds}
    ladder_info = []
    for e in entries:
        key = f"beam:{e.order}:{e.seed_k:.10f}"
        got = cached(key)
        if got is None:
            got = eig.refine_mode(domain, (e.seed_k - 1e-3, e.seed_k + 1e-3), npw, p, polish=True)[:1]
            ref = eig.half_ellipse_field(by_k[round(e.seed_k, 9)], got[0].mesh.points)
            got[0].residuals["oracle_trace"] = scaling._trace_error(got[0], ref)
            got[0].label = f"ce{e.order} strip={e.strip_fraction:.2f}"
            store(key, got)
        modes.extend(got)
        ladder_info.append({"target": e.target, "seed_k": e.seed_k, "order": e.order, "strip_fraction": e.strip_fraction})
    info["ladder"] = ladder_info
    return sorted(modes, key=lambda m: m.k), info


def _spectrum_report(domain: geom.Domain, modes: list[eig.EigenMode], cfg: RunConfig) -> dict[str, Any]:
    ks = [m.k for m in modes]
    out: dict[str, Any] = {"eigenvalues": ks}
    preset = cfg.domain if isinstance(cfg.domain, str) else (cfg.domain.get("preset") if isinstance(cfg.domain, dict) else None)
    kmax = float(cfg.ladder["k_range"][1]) if cfg.ladder.get("k_range") else max(ks, default=0.0)
    kmin = float(cfg.ladder["k_range"][0]) if cfg.ladder.get("k_range") else 0.0
    ref = None
    if preset == "square":
        ref = [k for k, _, _ in eig.square_spectrum(kmax) if k >= kmin]
    elif preset == "disc":
        ref = [k for k, _, _ in eig.disc_spectrum(200) if kmin <= k <= kmax]
    if ref is not None:
        out["oracle"] = ref
        if len(ref) == len(ks):
            err = [abs(a - b) / b for a, b in zip(ks, ref)]
            out["max_rel_error"] = max(err, default=0.0)
        out["verdict"] = "PASS" if len(ref) == len(ks) and out.get("max_rel_error", 1) <= 1e-6 else "FAIL"
    return out


def _curves(report: dict[str, Any]) -> list[dict[str, Any]]:
    rows = []
    exp = report["experiment"]
    for m in report.get("measurements", []):
        for key in ("mass", "norm", "restriction", "sigma_max"):
            if key in m:
                series = key if "delta" not in m else f"{key}_delta{m['delta']:g}"
                rows.append({"experiment": exp, "series": series, "k": m.get("k", 1 / m["h"]), "h": m["h"], "value": m[key], "label": m.get("label", "")})
    for i, k in enumerate(report.get("spectrum", {}).get("eigenvalues", [])):
        rows.append({"experiment": exp, "series": "eigenvalue", "k": k, "h": 1 / k, "value": k, "label": str(i)})
    return rows


def run(cfg: RunConfig) -> int:
    """Execute a validated configuration; returns the process exit status."""
    out = Path(cfg.base_dir) / cfg.output
    out.mkdir(parents=True, exist_ok=True)
    os.environ.setdefault(THREADS_ENV, str(cfg.parallelism))
    chash = cfg.config_hash
    try:
        with _Lock(out):
            (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
            ledger = Ledger(out / "modes.jsonl")
            domain = cfg.load_domain()
            kind = cfg.experiment["kind"]
            cached = ledger.find(chash, "report", "report")
            if cached is not None:
                body = cached["payload"]
            else:
                t0 = time.perf_counter()
                modes, info = ([], {}) if kind == "transfer_scaling" else _resolve_modes(cfg, domain, ledger, chash)
                body = _report_body(kind, cfg, domain, modes, info)
                ledger.append(_record(chash, "report", "report", body))
                log.info("run took %.1f s", time.perf_counter() - t0)
            report = {"timestamp": _now(), "version": __version__, "config_hash": chash, **body}
            (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
            rows = _curves(report)
            with open(out / "curves.csv", "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=["experiment", "series", "k", "h", "value", "label"])
                w.writeheader()
                w.writerows(rows)
        return 0
    except Exception as exc:  # machine-readable failure record
        err = {"timestamp": _now(), "version": __version__, "config_hash": chash, "error": type(exc).__name__, "message": str(exc)}
        (out / "error.json").write_text(json.dumps(err, indent=2) + "\n")
        log.error("%s: %s", type(exc).__name__, exc)
        return 1


def _report_body(kind: str, cfg: RunConfig, domain: geom.Domain, modes: list[eig.EigenMode], info: dict[str, Any]) -> dict[str, Any]:
    exp = dict(cfg.experiment)
    body: dict[str, Any] = {"experiment": kind, "domain_hash": domain.fingerprint, "ledger": info}
    if kind == "spectrum":
        body["spectrum"] = _spectrum_report(domain, modes, cfg)
        body["modes"] = [scaling._mode_record(m) for m in modes]
        body["verdicts"] = {"spectrum": body["spectrum"].get("verdict", "n/a")}
        return body
    if kind == "transfer_scaling":
        rep = scaling.run_experiment(kind, exp, domain=domain)
    else:
        rep = scaling.run_experiment(kind, exp, modes=modes)
    d = rep.to_dict()
    d.pop("runtime", None)
    body.update(d)
    return body


# ---------------------------------------------------------------------------
# plot data
# ---------------------------------------------------------------------------


def export_plots(report_path: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """One whitespace-delimited log10 h / log10 value file per fitted curve."""
    path = Path(report_path)
    if not path.is_file():
        raise MissingReport(f"{path} does not exist")
    try:
        rep = json.loads(path.read_text())
    except json.JSONDecodeError:
        raise MissingReport(f"{path} is not a report") from None
    fits = rep.get("fits") or {}
    if not fits:
        raise MissingReport(f"{path} has no fitted curves")
    out = Path(out_dir) if out_dir is not None else path.parent
    out.mkdir(parents=True, exist_ok=True)
    files = []
    lines = [f"# plot data for {rep.get('experiment', '?')} (config {rep.get('config_hash', '?')})"]
    for name, fit in fits.items():
        pts = sorted(fit["samples"])
        fname = out / f"{name}.dat"
        with open(fname, "w") as fh:
            fh.write(f"# series {name}\n")
            fh.write(f"# fit log10(value) = {fit['slope']:.6g} * log10(h) + {fit['intercept'] / math.log(10):.6g}\n")
            fh.write(f"# exponent (slope) {fit['slope']:.6g} envelope_slope {fit['envelope_slope']:.6g} r2 {fit['r2']:.6g}\n")
            fh.write("# log10_h log10_value\n")
            for h, v in pts:
                fh.write(f"{math.log10(h):.12g} {math.log10(v):.12g}\n")
        files.append(fname)
        lines.append(f"{fname.name}: log10 h vs log10 {name}; slope {fit['slope']:.4g}")
    desc = out / "plots.txt"
    desc.write_text("\n".join(lines) + "\n")
    files.append(desc)
    return files


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _domain_arg(s: str) -> geom.Domain:
    return build_domain_spec(s)


def _jsonable(x: Any) -> Any:
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(type(x))


def _print(obj: Any) -> None:
    print(json.dumps(obj, default=_jsonable, sort_keys=True))


def cmd_geom_check(a) -> int:
    d = _domain_arg(a.domain)
    flat = d.flat_edges()
    info = {
        "edges": [e.kind for e in d.edges],
        "lengths": d.edge_lengths.tolist(),
        "perimeter": d.length,
        "area": d.area,
        "corners": [vars(c) for c in geom.corner_report(d)],
        "flat_edges": flat,
        "admissible": geom.is_admissible(d) if flat else None,
        "fingerprint": d.fingerprint,
    }
    _print(info)
    return 0


def cmd_specfun_selftest(a) -> int:
    res = specfun.selftest()
    res["pass"] = {
        "wronskian": res["wronskian_max_defect"] <= 1e-10,
        "overlap": res["overlap_max_rel_diff"] <= 1e-11,
        "b_limit": res["b_limit_defect_at_1e4"] <= 1e-8,
    }
    _print(res)
    return 0 if all(res["pass"].values()) else 1


def _append_modes(out: str, domain: geom.Domain, modes: list[eig.EigenMode]) -> None:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    ledger = Ledger(path / "modes.jsonl")
    for m in modes:
        ledger.append(_record(domain.fingerprint, "mode", f"k:{m.k:.12g}", mode_payload(m), m.mesh.fingerprint))


def _mode_line(m: eig.EigenMode) -> dict[str, Any]:
    return {"k": m.k, "sigma": m.sigma, "residuals": m.residuals, "cluster": m.cluster}


def cmd_eig_scan(a) -> int:
    d = _domain_arg(a.domain)
    scan = eig.scan_spectrum(d, (a.kmin, a.kmax), a.step, a.npw)
    found = []
    for br in scan.candidates:
        if not a.refine:
            _print({"bracket": br})
            continue
        try:
            modes = eig.refine_mode(d, br, a.npw)
        except eig.EigError as exc:
            _print({"bracket": br, "error": type(exc).__name__, "message": str(exc)})
            continue
        for m in modes:
            _print(_mode_line(m))
        found.extend(modes)
    if found:
        _append_modes(a.out, d, found)
    return 0


def cmd_eig_refine(a) -> int:
    d = _domain_arg(a.domain)
    try:
        modes = eig.refine_mode(d, tuple(a.bracket), a.npw)
    except eig.EigError as exc:
        _print({"error": type(exc).__name__, "message": str(exc)})
        return 1
    for m in modes:
        _print(_mode_line(m))
    _append_modes(a.out, d, modes)
    return 0


def cmd_micro_transfer(a) -> int:
    d = _domain_arg(a.domain)
    spec = ml.CutoffSpec(a.delta, a.eps0)
    try:
        m = ml.assemble_transfer(d, a.j, a.k, a.h, spec, a.variant)
    except ml.MicrolocalError as exc:
        _print({"error": type(exc).__name__, "message": str(exc)})
        return 1
    rec = {"timestamp": _now(), "version": __version__, "j": a.j, "k": a.k, "h": a.h, "delta": a.delta, "eps0": a.eps0, "variant": a.variant, "sigma_max": ml.operator_norm(m)}
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "transfer.jsonl", "a") as fh:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")
    _print(rec)
    return 0


def cmd_scale_run(a) -> int:
    path = Path(a.config)
    try:
        cfg = parse_config(path.read_text(), base_dir=path.parent)
    except FileNotFoundError:
        _print({"error": "ParseError", "message": f"{path} not found"})
        return 2
    except CliError as exc:
        _print({"error": type(exc).__name__, "message": str(exc)})
        return 2
    if a.output:
        cfg.output = a.output
    status = run(cfg)
    out = Path(cfg.base_dir) / cfg.output
    _print({"status": status, "output": str(out)})
    return status


def cmd_export_plots(a) -> int:
    try:
        files = export_plots(a.report, a.out)
    except MissingReport as exc:
        _print({"error": "MissingReport", "message": str(exc)})
        return 1
    _print({"files": [str(f) for f in files]})
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="neumannlab", description="Neumann eigenmode experiments on planar domains")
    p.add_argument("--seed", type=int, default=None, help="reserved; no stochastic components")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="group", required=True)

    g = sub.add_parser("geom").add_subparsers(dest="cmd", required=True)
    c = g.add_parser("check", help="summarize a domain")
    c.add_argument("domain", help="preset name or domain JSON file")
    c.set_defaults(fn=cmd_geom_check)

    s = sub.add_parser("specfun").add_subparsers(dest="cmd", required=True)
    c = s.add_parser("selftest")
    c.set_defaults(fn=cmd_specfun_selftest)

    e = sub.add_parser("eig").add_subparsers(dest="cmd", required=True)
    c = e.add_parser("scan")
    c.add_argument("--domain", required=True)
    c.add_argument("--kmin", type=float, required=True)
    c.add_argument("--kmax", type=float, required=True)
    c.add_argument("--step", type=float, default=0.05)
    c.add_argument("--per-wavelength", "--npw", dest="npw", type=float, default=12.0)
    c.add_argument("--refine", action="store_true", help="refine every candidate and append to modes.jsonl")
    c.add_argument("--out", default=".")
    c.set_defaults(fn=cmd_eig_scan)
    c = e.add_parser("refine")
    c.add_argument("--domain", required=True)
    c.add_argument("--bracket", type=float, nargs=2, required=True, metavar=("LO", "HI"))
    c.add_argument("--per-wavelength", "--npw", dest="npw", type=float, default=12.0)
    c.add_argument("--out", default=".")
    c.set_defaults(fn=cmd_eig_refine)

    m = sub.add_parser("micro").add_subparsers(dest="cmd", required=True)
    c = m.add_parser("transfer")
    c.add_argument("--domain", required=True)
    c.add_argument("--j", type=int, required=True)
    c.add_argument("--k", type=int, required=True)
    c.add_argument("--h", type=float, required=True)
    c.add_argument("--delta", type=float, default=0.45)
    c.add_argument("--eps0", type=float, default=0.1)
    c.add_argument("--variant", choices=ml.VARIANTS, default="full")
    c.add_argument("--out", default=".")
    c.set_defaults(fn=cmd_micro_transfer)

    r = sub.add_parser("scale").add_subparsers(dest="cmd", required=True)
    c = r.add_parser("run")
    c.add_argument("config")
    c.add_argument("--output", default=None)
    c.set_defaults(fn=cmd_scale_run)

    x = sub.add_parser("export").add_subparsers(dest="cmd", required=True)
    c = x.add_parser("plots")
    c.add_argument("report")
    c.add_argument("--out", default=None)
    c.set_defaults(fn=cmd_export_plots)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return int(args.fn(args))
    except (CliError, geom.GeometryError, OSError) as exc:
        _print({"error": type(exc).__name__, "message": str(exc)})
        return 2


if __name__ == "__main__":
    sys.exit(main())
