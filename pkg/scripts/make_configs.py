"""Regenerate the bundled experiment configurations in configs/ from qtraj.models."""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np

from qtraj.linalg import matrix_to_json
from qtraj.models import (
    amplitude_damping_coefficients,
    counting_observable,
    detuned_exchange,
    excited,
    mixed_coefficients,
    mixed_observable,
    quadrature_observable,
)


def coefficients_model(c) -> dict:
    return {"type": "coefficients", "dim_system": c.dim, "dim_field": c.field_dim,
            "hamiltonian": matrix_to_json(c.hamiltonian), "lk0": [matrix_to_json(x) for x in c.lk0]}


def hamiltonian_model(m) -> dict:
    return {"type": "hamiltonian", "dim_system": m.dim_system, "dim_field": m.dim_field,
            "h0": matrix_to_json(m.h0), "h_field": matrix_to_json(m.h_field),
            "interaction": [{"system": matrix_to_json(v), "field": matrix_to_json(w)}
                            for v, w in m.interaction_ops],
            "scaling_exponent": m.scaling_exponent}


def observable(obs) -> dict:
    return {"eigenvalues": list(obs.eigenvalues), "projectors": [matrix_to_json(p) for p in obs.projectors]}


def configs() -> dict[str, dict]:
    ad = coefficients_model(amplitude_damping_coefficients())
    det = hamiltonian_model(detuned_exchange())
    common_runs = {
        "discrete": {"n": 1000, "horizon": 1.0, "paths": 200, "record_every": 10, "write_paths": 3},
        "sde": {"dt": 1e-3, "horizon": 1.0, "paths": 200, "record_every": 10, "write_paths": 3},
        "master": {"times": [0.5, 1.0]},
    }
    mixed_state = np.array([[0.36, 0.48], [0.48, 0.64]])
    out = {
        "amplitude_damping_jump": {
            "name": "amplitude_damping_jump", "seed": 20240101, "model": ad,
            "observable": observable(counting_observable()), "initial_state": matrix_to_json(excited()),
            **common_runs,
            "gencheck": {"n_list": [100, 1000, 10000], "states": 50,
                         "statistics": ["re_rho11", "re_rho11_sq", "re_rho01_sq"], "threshold": -0.9},
        },
        "amplitude_damping_diffusive": {
            "name": "amplitude_damping_diffusive", "seed": 20240102, "model": ad,
            "observable": observable(quadrature_observable()), "initial_state": matrix_to_json(excited()),
            **common_runs,
            "gencheck": {"n_list": [100, 1000, 10000], "states": 50,
                         "statistics": ["re_rho11", "re_rho11_sq", "re_rho01_sq"], "threshold": -0.9},
        },
        "mixed": {
            "name": "mixed", "seed": 20240103, "model": coefficients_model(mixed_coefficients()),
            "observable": observable(mixed_observable()), "initial_state": matrix_to_json(mixed_state),
            **common_runs,
            "gencheck": {"n_list": [100, 1000, 10000], "states": 50,
                         "statistics": ["re_rho11", "re_rho11_sq", "re_rho01_sq"], "threshold": -0.4},
        },
        "detuned_jump": {
            "name": "detuned_jump", "seed": 20240104, "model": det,
            "observable": observable(counting_observable()), "initial_state": matrix_to_json(excited()),
            **common_runs,
            "converge": {"n_list": [250, 1000, 4000], "times": [0.5, 1.0], "paths": 10000, "dt": 1e-3,
                         "statistics": ["re_rho11", "re_rho11_sq", "re_rho00"], "bias_ratio": 2.0},
        },
        "detuned_diffusive": {
            "name": "detuned_diffusive", "seed": 20240105, "model": det,
            "observable": observable(quadrature_observable()),
            "initial_state": matrix_to_json(np.eye(2) / 2),
            **common_runs,
            "converge": {"n_list": [250, 1000, 4000], "times": [0.5, 1.0], "paths": 10000, "dt": 1e-4,
                         "statistics": ["re_rho11", "re_rho11_sq", "im_rho01_sq"], "bias_ratio": 2.0},
        },
    }
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "configs"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, cfg in configs().items():
        (out / f"{name}.json").write_text(json.dumps(cfg, indent=2) + "\n")
        print(out / f"{name}.json")


if __name__ == "__main__":
    main()
