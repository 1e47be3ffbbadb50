"""Figure builders for the five supported kinds.

Every number drawn here traces to an input file: measured curves come from
the CSV series, fitted slopes and envelope rates from the JSON summaries, and
reference overlays (the small-k growth asymptote, the decay reference slope,
the 1/Theta escape slope) are evaluated from tabulated values in those same
files. The spectrum heatmap is a display transform of the tabulated
eigenvalue column (amplification e^{Re lambda_+ * t}); no physics is
recomputed.

Mismatched manifest hashes between the inputs of one figure produce a
warning, not a failure (the files may legitimately come from different runs
of the same study).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

matplotlib.rcParams["svg.hashsalt"] = "yns-plots"

KINDS = ("dispersion", "sandwich", "decay", "escape", "spectrum-heatmap")


class FigureSpecError(Exception):
    """The figure spec document is malformed."""


class RenderError(Exception):
    """Inputs exist but cannot produce the requested figure."""


@dataclass
class FigureResult:
    path: str
    kind: str
    annotations: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)


def read_csv_columns(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise RenderError(f"input not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise RenderError(f"no samples in {path} (empty file)") from None
        rows = [r for r in reader if r]
    if not rows:
        raise RenderError(f"no samples in {path}")
    cols = {h: [] for h in header}
    for r in rows:
        for h, x in zip(header, r):
            cols[h].append(x)
    return cols


def numeric(cols: dict, name: str, path="") -> np.ndarray:
    if name not in cols:
        raise RenderError(f"missing column {name!r} in {path}")
    out = []
    for x in cols[name]:
        out.append(np.nan if x == "" else float(x))
    return np.asarray(out)


def read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise RenderError(f"input not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise RenderError(f"invalid JSON in {path}: {err}") from err


def check_manifest_hashes(docs: list, warnings: list):
    hashes = {d.get("manifest_hash") for d in docs if isinstance(d, dict)
              and d.get("manifest_hash")}
    if len(hashes) > 1:
        warnings.append(f"manifest hashes differ across inputs: {sorted(hashes)}")


def _new_axes(title, xlabel, ylabel):
    fig, ax = plt.subplots(figsize=(6.4, 4.2), dpi=130)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.25)
    return fig, ax


def _save(fig, out_path) -> str:
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, metadata=_metadata_for(out))
    plt.close(fig)
    return str(out)


def _metadata_for(out: Path):
    # strip creator/date metadata so rerenders are byte-stable
    if out.suffix.lower() == ".png":
        return {"Software": "yns-plots"}
    if out.suffix.lower() == ".svg":
        return {"Date": None, "Creator": "yns-plots"}
    return None


def render_dispersion(inputs: dict, out, options: dict) -> FigureResult:
    warnings = []
    cols = read_csv_columns(inputs["csv"])
    k = numeric(cols, "k", inputs["csv"])
    re_p = numeric(cols, "re_lambda_plus", inputs["csv"])
    re_m = numeric(cols, "re_lambda_minus", inputs["csv"])

    manifest = read_json(inputs["manifest"]) if "manifest" in inputs else {}
    fig, ax = _new_axes("Dispersion relation", "k", "Re lambda")
    ax.set_xscale("log")
    ax.plot(k, re_p, label="Re lambda_+", lw=1.6)
    ax.plot(k, re_m, label="Re lambda_-", lw=1.6)
    ax.axhline(0.0, color="k", lw=0.6)

    annotations = {}
    params = manifest.get("params") or {}
    if params:
        # small-k growth asymptote sqrt(-margin) k - (eta/2) k^2, drawn only in
        # the unstable regime where the tabulated margin is negative
        pressure = params.get("pressure") or {}
        if pressure.get("type") == "direct_slope":
            p_prime = float(pressure["p_prime"])
        else:
            p_prime = (float(pressure.get("A", 1.0)) * float(pressure.get("g", 1.4))
                       * float(params["rho_bar"]) ** (float(pressure.get("g", 1.4)) - 1.0))
        margin = p_prime + float(params["gamma"]) * float(params["rho_bar"])
        eta = (2.0 * float(params["mu"]) + float(params["mu_prime"])) \
            / float(params["rho_bar"])
        if margin < 0:
            ks = k[k <= 1.0]
            asym = np.sqrt(-margin) * ks - 0.5 * eta * ks**2
            ax.plot(ks, asym, "k--", lw=1.0, label="small-k asymptote")
            annotations["asymptote_margin"] = margin
            annotations["asymptote_eta"] = eta
    sel = np.isfinite(re_p)
    lo = float(np.min(re_m[sel])) if np.any(sel) else -1.0
    ax.set_ylim(max(lo, -3.0), max(0.3, float(np.max(re_p)) * 1.3))
    ax.legend(loc="best", fontsize=8)
    return FigureResult(_save(fig, out), "dispersion", annotations, warnings)


def render_sandwich(inputs: dict, out, options: dict) -> FigureResult:
    warnings = []
    cols = read_csv_columns(inputs["csv"])
    t = numeric(cols, "t", inputs["csv"])
    rho = numeric(cols, "rho_l2", inputs["csv"])
    lo = numeric(cols, "rho_lower", inputs["csv"])
    hi = numeric(cols, "rho_upper", inputs["csv"])
    summary = read_json(inputs["json"]) if "json" in inputs else {}
    check_manifest_hashes([summary], warnings)

    fig, ax = _new_axes("Linear growth sandwich", "t", "||rho||_L2")
    ax.set_yscale("log")
    ax.fill_between(t, lo, hi, color="tab:blue", alpha=0.15,
                    label="envelopes e^{(Theta-Theta_bar)t} .. e^{Theta t}")
    ax.plot(t, lo, "b--", lw=1.0)
    ax.plot(t, hi, "b--", lw=1.0)
    ax.plot(t, rho, "r-", lw=1.6, label="measured")
    annotations = {}
    for key in ("theta", "theta_bar", "passed"):
        if key in summary:
            annotations[key] = summary[key]
    if "theta" in summary:
        ax.set_title(f"Linear growth sandwich (Theta = {summary['theta']:.4f})")
    ax.legend(loc="upper left", fontsize=8)
    return FigureResult(_save(fig, out), "sandwich", annotations, warnings)


def render_decay(inputs: dict, out, options: dict) -> FigureResult:
    warnings = []
    cols = read_csv_columns(inputs["csv"])
    t = numeric(cols, "t", inputs["csv"])
    norm = numeric(cols, "norm", inputs["csv"])
    summary = read_json(inputs["json"])
    check_manifest_hashes([summary], warnings)
    if "exponent" not in summary:
        raise RenderError(f"missing 'exponent' in {inputs['json']}")

    exponent = summary["exponent"]
    expected = summary.get("expected_exponent")
    window = summary.get("window")

    fig, ax = _new_axes("Decay exponent fit", "t", "norm")
    ax.set_xscale("log")
    ax.set_yscale("log")
    sel = (t > 0) & (norm > 0)
    ax.plot(t[sel], norm[sel], "o-", ms=3, lw=1.0, label="measured")
    if np.any(sel):
        anchor_t = t[sel][len(t[sel]) // 2]
        anchor_y = norm[sel][len(t[sel]) // 2]
        span = np.geomspace(t[sel][0], t[sel][-1], 64)
        ax.plot(span, anchor_y * (span / anchor_t) ** exponent, "r-", lw=1.2,
                label=f"fit slope = {exponent!r}")
        if expected is not None:
            ax.plot(span, anchor_y * (span / anchor_t) ** expected, "k--", lw=1.0,
                    label=f"reference slope {expected}")
    if window:
        ax.axvspan(window[0], window[1], color="tab:green", alpha=0.08)
    ax.legend(loc="best", fontsize=8)
    annotations = {
        "fitted_slope": exponent,
        "fitted_slope_text": repr(exponent),
        "reference_slope": expected,
    }
    return FigureResult(_save(fig, out), "decay", annotations, warnings)


def render_escape(inputs: dict, out, options: dict) -> FigureResult:
    warnings = []
    cols = read_csv_columns(inputs["csv"])
    delta = numeric(cols, "delta", inputs["csv"])
    t_esc = numeric(cols, "t_escape", inputs["csv"])
    summary = read_json(inputs["json"])
    check_manifest_hashes([summary], warnings)

    sel = np.isfinite(t_esc)
    if not np.any(sel):
        raise RenderError("no escaped runs to plot")
    x = np.log(1.0 / delta[sel])
    y = t_esc[sel]

    fig, ax = _new_axes("Escape time vs ln(1/delta)", "ln(1/delta)", "T^delta")
    ax.plot(x, y, "o", ms=6, label="measured")
    annotations = {}
    slope = summary.get("slope")
    expected = summary.get("slope_expected")
    if slope is not None and len(x) >= 2:
        b = float(np.mean(y) - slope * np.mean(x))
        span = np.linspace(float(np.min(x)), float(np.max(x)), 16)
        ax.plot(span, slope * span + b, "r-", lw=1.2,
                label=f"regression slope = {slope:.3f}")
        annotations["slope"] = slope
    if expected is not None and len(x) >= 2:
        b = float(np.mean(y) - expected * np.mean(x))
        span = np.linspace(float(np.min(x)), float(np.max(x)), 16)
        ax.plot(span, expected * span + b, "k--", lw=1.0,
                label=f"reference 1/Theta = {expected:.3f}")
        annotations["slope_expected"] = expected
    ax.legend(loc="best", fontsize=8)
    return FigureResult(_save(fig, out), "escape", annotations, warnings)


def render_spectrum_heatmap(inputs: dict, out, options: dict) -> FigureResult:
    warnings = []
    cols = read_csv_columns(inputs["csv"])
    k = numeric(cols, "k", inputs["csv"])
    re_p = numeric(cols, "re_lambda_plus", inputs["csv"])

    t_max = float(options.get("t_max", 10.0))
    n_t = int(options.get("n_t", 101))
    t = np.linspace(0.0, t_max, n_t)
    # amplification factor e^{Re lambda_+ t}: display transform of the
    # tabulated rates, clipped for rendering
    log_amp = np.clip(np.outer(t, re_p), -30.0, 30.0)

    fig, ax = _new_axes("Per-mode amplification e^{Re lambda_+ t}", "k", "t")
    ax.set_xscale("log")
    mesh = ax.pcolormesh(k, t, log_amp, shading="auto", cmap="RdBu_r",
                         vmin=-5, vmax=5)
    fig.colorbar(mesh, ax=ax, label="log amplification")
    return FigureResult(_save(fig, out), "spectrum-heatmap",
                        {"t_max": t_max}, warnings)


_RENDERERS = {
    "dispersion": render_dispersion,
    "sandwich": render_sandwich,
    "decay": render_decay,
    "escape": render_escape,
    "spectrum-heatmap": render_spectrum_heatmap,
}


def render(spec: dict) -> FigureResult:
    """Render one figure from a spec dict: kind, inputs{...}, out, options{}."""
    if not isinstance(spec, dict):
        raise FigureSpecError("figure spec must be an object")
    kind = spec.get("kind")
    if kind not in KINDS:
        raise FigureSpecError(f"unknown figure kind {kind!r}; expected one of {KINDS}")
    inputs = spec.get("inputs")
    if not isinstance(inputs, dict) or "csv" not in inputs:
        raise FigureSpecError("spec needs inputs.csv (and inputs.json where applicable)")
    if kind in ("decay", "escape") and "json" not in inputs:
        raise FigureSpecError(f"{kind} figures need inputs.json (the fit summary)")
    out = spec.get("out")
    if not out:
        raise FigureSpecError("spec needs an output image path ('out')")
    return _RENDERERS[kind](inputs, out, spec.get("options", {}))
