"""Single entry point: config ingestion, subcommand dispatch, run persistence.

Configs are JSON documents with exactly one experiment block; outputs are
CSV series plus JSON summaries, every JSON carrying the manifest hash so any
table can be regenerated byte-identically. Errors are data: failures write
error.json and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .errors import ConfigError, ValidationError, YnsError
from .experiments import (
    DecaySpec,
    EscapeSpec,
    escape_time_experiment,
    instability_linear_experiment,
    linear_decay_quadrature,
    nonlinear_decay_fit,
)
from .fields import (
    FieldState,
    GridSpec,
    UnstableDataSpec,
    load_snapshot,
    make_unstable_data,
    save_snapshot,
)
from .lp_besov import besov_norm, build_filter_bank, exponent_range_ok
from .manifest import build_manifest, canonical_json, manifest_hash
from .model import (
    DirectSlope,
    GammaLaw,
    PhysicalParams,
    classify_regime,
    derive_coefficients,
)
from .solver import RunRecord, Scheme, SolverConfig, run
from .spectral import analyze_mode, max_growth

EXPERIMENT_KINDS = (
    "spectrum", "theta", "simulate", "besov", "decay-fit", "instability", "escape",
)

_GRID_REQUIRED = {"simulate", "instability", "escape"}


@dataclass
class RunConfig:
    params: PhysicalParams
    grid: Optional[GridSpec]
    solver: Optional[SolverConfig]
    experiment_kind: str
    experiment: dict
    output_dir: str
    seed: int
    raw: dict


def _parse_pressure(node, violations, path):
    if not isinstance(node, dict) or "type" not in node:
        violations.append((path, "pressure must be an object with a 'type'"))
        return None
    if node["type"] == "gamma_law":
        try:
            return GammaLaw(A=float(node.get("A", 1.0)), g=float(node.get("g", 1.4)))
        except (ValidationError, ValueError, TypeError) as err:
            violations.append((path, str(err)))
            return None
    if node["type"] == "direct_slope":
        try:
            return DirectSlope(p_prime_at_rho_bar=float(node["p_prime"]))
        except (KeyError, ValueError, TypeError):
            violations.append((path + "/p_prime", "direct_slope needs numeric p_prime"))
            return None
    violations.append((path + "/type", f"unknown pressure law {node['type']!r}"))
    return None


def parse_config(document: str) -> RunConfig:
    """Validate a config document; raises ConfigError listing all violations."""
    violations = []
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as err:
        raise ConfigError([("", f"not valid JSON: {err}")]) from err
    if not isinstance(raw, dict):
        raise ConfigError([("", "top level must be an object")])

    params = None
    pnode = raw.get("params")
    if not isinstance(pnode, dict):
        violations.append(("/params", "missing params object"))
    else:
        pressure = _parse_pressure(pnode.get("pressure", {}), violations, "/params/pressure")
        if pressure is not None:
            try:
                params = PhysicalParams(
                    rho_bar=float(pnode.get("rho_bar", 1.0)),
                    mu=float(pnode.get("mu", 1.0)),
                    mu_prime=float(pnode.get("mu_prime", 0.0)),
                    gamma=float(pnode.get("gamma", 0.0)),
                    pressure=pressure,
                )
            except ValidationError as err:
                violations.append(("/params", str(err)))
            except (ValueError, TypeError) as err:
                violations.append(("/params", f"non-numeric parameter: {err}"))

    grid = None
    gnode = raw.get("grid")
    if gnode is not None:
        try:
            grid = GridSpec(
                dim=int(gnode["dim"]), n=int(gnode["n"]), length=float(gnode["length"])
            )
        except (KeyError, ValueError, TypeError) as err:
            violations.append(("/grid", str(err)))

    solver_cfg = None
    snode = raw.get("solver")
    if snode is not None:
        try:
            scheme = Scheme(snode.get("scheme", "etd_rk2"))
            solver_cfg = SolverConfig(
                dt=float(snode["dt"]),
                t_end=float(snode["t_end"]),
                scheme=scheme,
                dealias=bool(snode.get("dealias", True)),
                snapshot_every=int(snode.get("snapshot_every", 0)),
                norm_every=int(snode.get("norm_every", 1)),
                vacuum_margin_frac=float(snode.get("vacuum_margin_frac", 0.1)),
                cfl_limit=float(snode.get("cfl_limit", 0.5)),
                stop_rho_l2=(None if snode.get("stop_rho_l2") is None
                             else float(snode["stop_rho_l2"])),
                track_lp=(None if snode.get("track_lp") is None
                          else float(snode["track_lp"])),
                track_energy=bool(snode.get("track_energy", False)),
                energy_p=float(snode.get("energy_p", 2.0)),
                energy_j0=int(snode.get("energy_j0", 0)),
            )
        except (KeyError, ValueError, TypeError) as err:
            violations.append(("/solver", str(err)))

    exp_kind, exp_opts = None, {}
    enode = raw.get("experiment")
    if not isinstance(enode, dict):
        violations.append(("/experiment", "missing experiment object"))
    else:
        kinds = [k for k in enode if k in EXPERIMENT_KINDS]
        unknown = [k for k in enode if k not in EXPERIMENT_KINDS]
        for k in unknown:
            violations.append((f"/experiment/{k}", f"unknown experiment kind {k!r}"))
        if len(kinds) != 1:
            violations.append(
                ("/experiment",
                 f"exactly one experiment block required, found {len(kinds)}")
            )
        else:
            exp_kind = kinds[0]
            exp_opts = enode[exp_kind] if isinstance(enode[exp_kind], dict) else {}
            if exp_kind in _GRID_REQUIRED and grid is None and not any(
                v[0] == "/grid" for v in violations
            ):
                violations.append(("/grid", f"experiment {exp_kind!r} requires a grid"))
            if exp_kind == "simulate" and solver_cfg is None and not any(
                v[0] == "/solver" for v in violations
            ):
                violations.append(("/solver", "simulate requires a solver block"))
            if exp_kind == "besov" and "snapshot" not in exp_opts:
                violations.append(("/experiment/besov/snapshot",
                                   "besov requires a snapshot path"))
            if exp_kind == "decay-fit":
                try:
                    _decay_spec_from(exp_opts)
                except (KeyError, ValueError) as err:
                    violations.append(("/experiment/decay-fit", str(err)))
                if exp_opts.get("mode") == "record":
                    if grid is None and not any(v[0] == "/grid" for v in violations):
                        violations.append(
                            ("/grid",
                             "decay-fit record mode needs the run's grid "
                             "(spectral-gap window check)")
                        )
                    if "norms_csv" not in exp_opts:
                        violations.append(("/experiment/decay-fit/norms_csv",
                                           "record mode needs a norms_csv path"))
            if exp_kind == "escape":
                try:
                    _escape_spec_from(exp_opts)
                except (KeyError, ValueError, TypeError) as err:
                    violations.append(("/experiment/escape", str(err)))

    if violations:
        raise ConfigError(violations)
    return RunConfig(
        params=params,
        grid=grid,
        solver=solver_cfg,
        experiment_kind=exp_kind,
        experiment=exp_opts,
        output_dir=str(raw.get("output_dir", "out")),
        seed=int(raw.get("seed", 0)),
        raw=raw,
    )


def _decay_spec_from(opts: dict) -> DecaySpec:
    return DecaySpec(
        d=int(opts.get("d", 3)),
        p=float(opts.get("p", 2.0)),
        sigma=float(opts["sigma"]),
        sigma1=float(opts.get("sigma1", 0.0)),
        t_min=float(opts.get("t_min", 1e2)),
        t_max=float(opts.get("t_max", 1e4)),
        n_times=int(opts.get("n_times", 21)),
        fit_window=tuple(opts["window"]) if "window" in opts else None,
    )


def _escape_spec_from(opts: dict) -> EscapeSpec:
    return EscapeSpec(
        epsilon0=float(opts["epsilon0"]),
        deltas=tuple(float(d) for d in opts["deltas"]),
        theta_bar=(None if opts.get("theta_bar") is None
                   else float(opts["theta_bar"])),
        zeta_bar=(None if opts.get("zeta_bar") is None
                  else float(opts["zeta_bar"])),
        t_cap=float(opts.get("t_cap", 100.0)),
        dt=float(opts.get("dt", 0.1)),
    )


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def write_csv(path: Path, header: list, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def random_state(grid: GridSpec, rng: np.random.Generator, amplitude: float,
                 k_band: tuple = (0.0, np.inf)) -> FieldState:
    """Random band-limited fields with max-norm scaled to amplitude."""
    kn = grid.k_norm()
    sel = (kn >= k_band[0]) & (kn <= k_band[1]) & (kn > 0)

    def one() -> np.ndarray:
        coef = rng.standard_normal(grid.spectral_shape) \
            + 1j * rng.standard_normal(grid.spectral_shape)
        f = grid.inverse(np.where(sel, coef, 0.0))
        top = float(np.max(np.abs(f)))
        return f * (amplitude / top) if top > 0 else f

    return FieldState(rho=one(), u=[one() for _ in range(grid.dim)], grid=grid)


def _initial_state(config: RunConfig, coeffs, grid: GridSpec) -> FieldState:
    node = config.experiment.get("initial", {"kind": "zero"})
    kind = node.get("kind", "zero")
    if kind == "zero":
        return FieldState.zeros(grid)
    if kind == "random":
        rng = np.random.default_rng(config.seed)
        band = tuple(node.get("k_band", (0.0, np.inf)))
        return random_state(grid, rng, float(node.get("amplitude", 1e-3)), band)
    if kind == "unstable_bump":
        from .experiments import default_zeta_bar

        summary = max_growth(coeffs)
        zeta = node.get("zeta_bar")
        uspec = UnstableDataSpec(
            theta_bar=float(node.get("theta_bar", summary.theta / 2.0)),
            zeta_bar=default_zeta_bar(grid, summary) if zeta is None else float(zeta),
            delta=float(node.get("delta", 1e-3)),
        )
        return make_unstable_data(grid, coeffs, summary, uspec)
    if kind == "snapshot":
        state, _ = load_snapshot(node["path"])
        return state
    raise ConfigError([("/experiment/simulate/initial/kind",
                        f"unknown initial kind {kind!r}")])


def _run_spectrum(config: RunConfig, coeffs, out: Path, manifest: dict) -> dict:
    o = config.experiment
    k_min = float(o.get("k_min", 1e-4))
    k_max = float(o.get("k_max", 1e4))
    n = int(o.get("n", 1024))
    ks = np.geomspace(k_min, k_max, n) if o.get("log_spacing", True) \
        else np.linspace(k_min, k_max, n)
    rows = []
    for k in ks:
        m = analyze_mode(float(k), coeffs)
        rows.append((
            float(k),
            m.lambda_plus.real, m.lambda_plus.imag,
            m.lambda_minus.real, m.lambda_minus.imag,
            m.discriminant, m.branch.value,
        ))
    write_csv(
        out / "spectrum.csv",
        ["k", "re_lambda_plus", "im_lambda_plus", "re_lambda_minus",
         "im_lambda_minus", "discriminant", "branch"],
        rows,
    )
    return {"rows": len(rows), "files": ["spectrum.csv"]}


def _run_theta(config: RunConfig, coeffs, out: Path, manifest: dict) -> dict:
    o = config.experiment
    summary = max_growth(
        coeffs,
        k_min=float(o.get("k_min", 1e-4)),
        k_max=float(o.get("k_max", 1e4)),
        n_log_samples=int(o.get("n", 4096)),
    )
    write_csv(out / "scan.csv", ["k", "re_lambda_plus"],
              zip(summary.scan_k.tolist(), summary.scan_re_lambda.tolist()))
    doc = {
        "theta": summary.theta,
        "k0": summary.k0,
        "band": None if summary.band is None else list(summary.band),
        "regime": classify_regime(coeffs).value,
        "manifest_hash": manifest_hash(manifest),
    }
    write_json(out / "theta.json", doc)
    return {"theta": summary.theta, "k0": summary.k0,
            "files": ["theta.json", "scan.csv"]}


def _write_record(record: RunRecord, out: Path, manifest: dict) -> dict:
    arrays = record.sample_arrays()
    keys = ["t"] + [k for k in record.series]
    rows = zip(*[arrays[k].tolist() for k in keys])
    write_csv(out / "norms.csv", keys, rows)
    snap_files = []
    if record.snapshots:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        for i, (t, st) in enumerate(record.snapshots):
            base = snap_dir / f"snap_{i:04d}"
            save_snapshot(st, t, base)
            snap_files.append(str(base.relative_to(out)))
    doc = {
        "aborted": record.aborted,
        "abort_reason": record.abort_reason,
        "stopped_early": record.stopped_early,
        "stop_time": record.stop_time,
        "n_samples": len(record.t),
        "snapshots": snap_files,
        "manifest_hash": manifest_hash(manifest),
    }
    write_json(out / "run.json", doc)
    return doc


def _run_simulate(config: RunConfig, coeffs, out: Path, manifest: dict) -> dict:
    state = _initial_state(config, coeffs, config.grid)
    record = run(state, config.solver, coeffs, manifest=manifest)
    doc = _write_record(record, out, manifest)
    doc["files"] = ["run.json", "norms.csv"]
    if record.aborted:
        raise _AbortedRun(doc)
    return doc


class _AbortedRun(YnsError):
    """Carries the partial-run summary; the outputs are already on disk."""

    def __init__(self, doc):
        self.doc = doc
        super().__init__(doc.get("abort_reason") or "run aborted")


def _run_besov(config: RunConfig, coeffs, out: Path, manifest: dict) -> dict:
    o = config.experiment
    state, t_snap = load_snapshot(o["snapshot"])
    bank = build_filter_bank(state.grid)
    which = o.get("field", "rho")
    if which == "rho":
        target = state.rho
    elif which == "u":
        target = list(state.u)
    elif which == "couple":
        target = [state.rho] + list(state.u)
    else:
        raise ConfigError([("/experiment/besov/field", f"unknown field {which!r}")])
    rep = besov_norm(
        target,
        s=float(o.get("s", state.grid.dim / 2.0 - 1.0)),
        p=float(o.get("p", 2.0)),
        r=float(o.get("r", 1)),
        j0=int(o.get("j0", 0)),
        bank=bank,
        demean=bool(o.get("demean", False)),
    )
    doc = {
        "snapshot": str(o["snapshot"]),
        "snapshot_time": t_snap,
        "field": which,
        "s": rep.s, "p": rep.p, "r": rep.r, "j0": rep.j0,
        "js": rep.js,
        "block_norms": rep.block_norms,
        "low": rep.low, "high": rep.high, "total": rep.total,
        "j_range_note": "blocks outside the lattice-determined range are unavailable",
        "exponent_range_ok": exponent_range_ok(state.grid.dim, rep.p),
        "manifest_hash": manifest_hash(manifest),
    }
    write_json(out / "besov.json", doc)
    return {"total": rep.total, "files": ["besov.json"]}


def _run_decay_fit(config: RunConfig, coeffs, out: Path, manifest: dict) -> dict:
    o = config.experiment
    spec = _decay_spec_from(o)
    mode = o.get("mode", "quadrature")
    if mode in ("quadrature", "heat"):
        result = linear_decay_quadrature(
            coeffs, spec, mode="full" if mode == "quadrature" else "heat"
        )
        series = zip(result.times.tolist(), result.norms.tolist())
    elif mode == "record":
        arrays = _read_norms_csv(Path(o["norms_csv"]))
        record = RunRecord(manifest=dict(manifest))
        record.t = arrays["t"].tolist()
        record.series = {k: v.tolist() for k, v in arrays.items() if k != "t"}
        result = nonlinear_decay_fit(record, spec, config.grid, coeffs,
                                     norm_key=o.get("norm_key", "total_l2"))
        series = zip(result.times.tolist(), result.norms.tolist())
    else:
        raise ConfigError([("/experiment/decay-fit/mode", f"unknown mode {mode!r}")])
    write_csv(out / "decay.csv", ["t", "norm"], series)
    doc = result.to_dict()
    doc["manifest_hash"] = manifest_hash(manifest)
    write_json(out / "decay.json", doc)
    return {"exponent": result.exponent, "files": ["decay.json", "decay.csv"]}


def _read_norms_csv(path: Path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols = {h: [] for h in header}
        for row in reader:
            for h, x in zip(header, row):
                cols[h].append(float(x))
    return {h: np.asarray(v) for h, v in cols.items()}


def _run_instability(config: RunConfig, coeffs, out: Path, manifest: dict) -> dict:
    o = config.experiment
    from .spectral import max_growth as mg

    summary = mg(coeffs)
    uspec = None
    if any(key in o for key in ("theta_bar", "zeta_bar", "delta")):
        from .experiments import default_zeta_bar

        uspec = UnstableDataSpec(
            theta_bar=float(o.get("theta_bar", summary.theta / 2.0)),
            zeta_bar=float(o.get("zeta_bar", default_zeta_bar(config.grid, summary))),
            delta=float(o.get("delta", 1.0)),
        )
    report = instability_linear_experiment(
        coeffs, config.grid, uspec,
        t_end=float(o.get("t_end", 10.0)),
        n_samples=int(o.get("n_samples", 41)),
        tol=float(o.get("tol", 1e-6)),
        summary=summary,
    )
    write_csv(
        out / "instability.csv",
        ["t", "rho_l2", "rho_lower", "rho_upper", "u_l2", "u_lower", "u_upper"],
        [(t, r, lo, hi, u, ulo, uhi) for (t, r, lo, hi, u, ulo, uhi) in report.rows],
    )
    write_json(out / "instability.json", report.to_dict())
    return {"passed": report.passed, "theta": report.theta,
            "files": ["instability.json", "instability.csv"]}


def _run_escape(config: RunConfig, coeffs, out: Path, manifest: dict) -> dict:
    spec = _escape_spec_from(config.experiment)
    report = escape_time_experiment(coeffs, config.grid, spec)
    write_csv(
        out / "escape.csv",
        ["delta", "t_escape", "escaped", "rho_l2_at_stop", "u_l2_at_stop"],
        [
            (r["delta"],
             "" if r["t_escape"] is None else r["t_escape"],
             int(r["escaped"]),
             "" if r["rho_l2"] is None else r["rho_l2"],
             "" if r["u_l2"] is None else r["u_l2"])
            for r in report.rows
        ],
    )
    write_json(out / "escape.json", report.to_dict())
    return {"slope": report.slope, "slope_expected": report.slope_expected,
            "files": ["escape.json", "escape.csv"]}


_RUNNERS = {
    "spectrum": _run_spectrum,
    "theta": _run_theta,
    "simulate": _run_simulate,
    "besov": _run_besov,
    "decay-fit": _run_decay_fit,
    "instability": _run_instability,
    "escape": _run_escape,
}


def dispatch(config: RunConfig, out_dir: Optional[str] = None,
             threads: Optional[int] = None, verbose: bool = False) -> int:
    """Run the configured experiment; returns the process exit status."""
    out = Path(out_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    coeffs = derive_coefficients(config.params)
    manifest = build_manifest(
        params={
            "rho_bar": config.params.rho_bar,
            "mu": config.params.mu,
            "mu_prime": config.params.mu_prime,
            "gamma": config.params.gamma,
            "pressure": config.raw.get("params", {}).get("pressure"),
        },
        grid=(None if config.grid is None else {
            "dim": config.grid.dim, "n": config.grid.n,
            "length": config.grid.length,
        }),
        extra={
            "experiment": {config.experiment_kind: config.experiment},
            "seed": config.seed,
            "threads": threads,
            "config_hash": manifest_hash(config.raw),
            "regime": classify_regime(coeffs).value,
            "scope_note": ("d=1 testbed: outside the validated analysis range"
                           if config.grid is not None and config.grid.dim == 1
                           else None),
        },
    )
    write_json(out / "manifest.json", manifest)

    try:
        summary = _RUNNERS[config.experiment_kind](config, coeffs, out, manifest)
    except _AbortedRun as err:
        write_json(out / "error.json", {
            "error": "AbortedRun",
            "message": str(err),
            "aborted": True,
            "manifest_hash": manifest_hash(manifest),
        })
        sys.stderr.write(canonical_json({"error": "AbortedRun", "message": str(err)})
                         + "\n")
        return 3
    except YnsError as err:
        write_json(out / "error.json", {
            "error": type(err).__name__,
            "message": str(err),
            "manifest_hash": manifest_hash(manifest),
        })
        sys.stderr.write(
            canonical_json({"error": type(err).__name__, "message": str(err)}) + "\n"
        )
        return 3

    lines = [f"yns {__version__} — {config.experiment_kind}",
             f"manifest hash: {manifest_hash(manifest)}"]
    for key, val in summary.items():
        if key != "files":
            lines.append(f"{key}: {val}")
    lines.append("files: " + ", ".join(summary.get("files", [])))
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    if verbose:
        print("\n".join(lines))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="yns",
        description="Spectral laboratory for compressible Navier-Stokes with "
                    "Yukawa-type potential coupling",
    )
    parser.add_argument("subcommand", choices=EXPERIMENT_KINDS)
    parser.add_argument("--config", required=True, help="path to the run-config JSON")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (falls back to YNS_THREADS)")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)

    threads = args.threads
    if threads is None and os.environ.get("YNS_THREADS"):
        try:
            threads = int(os.environ["YNS_THREADS"])
        except ValueError:
            threads = None

    try:
        config = parse_config(Path(args.config).read_text())
    except OSError as err:
        sys.stderr.write(canonical_json({"error": "OSError", "message": str(err)}) + "\n")
        return 2
    except ConfigError as err:
        sys.stderr.write(canonical_json({
            "error": "ConfigError",
            "violations": [{"path": p, "message": m} for p, m in err.violations],
        }) + "\n")
        return 2

    if config.experiment_kind != args.subcommand:
        sys.stderr.write(canonical_json({
            "error": "ConfigError",
            "message": f"config declares experiment {config.experiment_kind!r}, "
                       f"subcommand is {args.subcommand!r}",
        }) + "\n")
        return 2
    return dispatch(config, out_dir=args.out, threads=threads, verbose=args.verbose)


if __name__ == "__main__":
    sys.exit(main())
