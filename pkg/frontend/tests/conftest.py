import json
import subprocess
import sys

import numpy as np
import pytest

PARAMS_UNSTABLE = {
    "rho_bar": 1.0, "mu": 1.0, "mu_prime": 0.0, "gamma": -2.0,
    "pressure": {"type": "direct_slope", "p_prime": 1.0},
}
PARAMS_UNSTABLE_NL = {
    "rho_bar": 1.0, "mu": 1.0, "mu_prime": 0.0, "gamma": -2.0,
    "pressure": {"type": "gamma_law", "A": 1.0 / 1.4, "g": 1.4},
}
PARAMS_STABLE = {
    "rho_bar": 1.0, "mu": 1.0, "mu_prime": 0.0, "gamma": 0.0,
    "pressure": {"type": "direct_slope", "p_prime": 1.0},
}


def run_primary(subcommand, doc, cfg_path, out_dir):
    """Drive the primary component through its CLI, its only interface here."""
    cfg_path.write_text(json.dumps(doc))
    proc = subprocess.run(
        [sys.executable, "-m", "yns.cli", subcommand,
         "--config", str(cfg_path), "--out", str(out_dir)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, f"{subcommand} failed: {proc.stderr}"
    return out_dir


@pytest.fixture(scope="session")
def artifacts(tmp_path_factory):
    """Reference artifacts for every figure kind, produced by the primary CLI."""
    root = tmp_path_factory.mktemp("artifacts")

    run_primary("spectrum", {
        "params": PARAMS_UNSTABLE,
        "experiment": {"spectrum": {"k_min": 1e-3, "k_max": 1e3, "n": 256}},
    }, root / "spectrum.json", root / "spectrum")

    run_primary("instability", {
        "params": PARAMS_UNSTABLE,
        "grid": {"dim": 2, "n": 128, "length": float(2 * np.pi * 32)},
        "experiment": {"instability": {"t_end": 10.0, "n_samples": 21}},
    }, root / "instability.json", root / "instability")

    run_primary("decay-fit", {
        "params": PARAMS_STABLE,
        "experiment": {"decay-fit": {"mode": "quadrature", "d": 3, "p": 2.0,
                                     "sigma": 1.5, "n_times": 9}},
    }, root / "decay.json", root / "decay")

    run_primary("escape", {
        "params": PARAMS_UNSTABLE_NL,
        "grid": {"dim": 2, "n": 64, "length": float(2 * np.pi * 16)},
        "experiment": {"escape": {"epsilon0": 0.05, "deltas": [1e-3, 1e-4],
                                  "t_cap": 45.0, "dt": 0.1}},
    }, root / "escape.json", root / "escape")

    return root
