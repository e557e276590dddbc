"""Experiment configuration: JSON parsing and construction of the model objects.

Matrices are written either as ``{"rows", "cols", "re", "im"}`` (row-major)
or, for convenience, as nested lists of real numbers.

Parsing only checks structure (required keys, shapes, types); the physics
validators run when :func:`build_setup` constructs the model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .interaction import (
    HamiltonianModel,
    UnitaryFamily,
    build_from_coefficients,
    extract_limit_coefficients,
)
from .limits import LimitCoefficients
from .linalg import DEFAULT_TOLERANCES, DensityMatrix, ToleranceProfile, matrix_from_json, matrix_to_json
from .observable import SpectralObservable

MODEL_TYPES = ("hamiltonian", "coefficients")


def _positive(section: str, **values) -> None:
    for key, v in values.items():
        if not v > 0:
            raise ConfigError(f"{section}.{key} must be positive, got {v!r}")


@dataclass(frozen=True)
class DiscreteRun:
    n: int = 1000
    horizon: float = 1.0
    paths: int = 100
    record_every: int = 1
    record_times: tuple | None = None
    write_paths: int = 5
    beta_index: int = 0

    def __post_init__(self):
        _positive("discrete", n=self.n, horizon=self.horizon, paths=self.paths)


@dataclass(frozen=True)
class SdeRun:
    dt: float = 1e-3
    horizon: float = 1.0
    paths: int = 100
    k_trunc: float = 2.0
    record_every: int = 1
    record_times: tuple | None = None
    write_paths: int = 5

    def __post_init__(self):
        _positive("sde", dt=self.dt, horizon=self.horizon, paths=self.paths)


@dataclass(frozen=True)
class MasterRun:
    times: tuple = (0.5, 1.0)


@dataclass(frozen=True)
class GencheckRun:
    n_list: tuple = (100, 1000, 10000)
    states: int = 50
    statistics: tuple = ("re_rho11", "re_rho11_sq", "re_rho01_sq")
    threshold: float = -0.4


@dataclass(frozen=True)
class ConvergeRun:
    n_list: tuple = (250, 1000, 4000)
    times: tuple = (0.5, 1.0)
    paths: int = 10000
    dt: float = 1e-3
    k_trunc: float = 2.0
    statistics: tuple = ("re_rho11", "re_rho11_sq", "re_rho00")
    sigmas: float = 4.0
    bias_ratio: float = 2.0  # companion SDE run at bias_ratio * dt measures the scheme bias

    def __post_init__(self):
        _positive("converge", paths=self.paths, dt=self.dt, bias_ratio=self.bias_ratio)
        if len(self.n_list) < 1 or self.bias_ratio == 1.0:
            raise ConfigError("converge needs at least one n and bias_ratio != 1")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    seed: int
    model: dict
    observable: dict
    initial_state: np.ndarray
    tolerances: dict = field(default_factory=dict)
    discrete: DiscreteRun = DiscreteRun()
    sde: SdeRun = SdeRun()
    master: MasterRun = MasterRun()
    gencheck: GencheckRun = GencheckRun()
    converge: ConvergeRun = ConvergeRun()
    output: str | None = None
    source: str | None = None

    @property
    def tolerance_profile(self) -> ToleranceProfile:
        return DEFAULT_TOLERANCES.replace(**self.tolerances)


@dataclass
class Setup:
    """Model objects built from a configuration."""

    family: UnitaryFamily
    coeffs: LimitCoefficients
    observable: SpectralObservable
    rho0: np.ndarray
    tol: ToleranceProfile
    hamiltonian_model: HamiltonianModel | None = None


def parse_matrix(obj, what: str) -> np.ndarray:
    try:
        if isinstance(obj, dict):
            return matrix_from_json(obj)
        m = np.asarray(obj, dtype=complex)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: not a matrix ({exc})") from exc
    if m.ndim != 2:
        raise ConfigError(f"{what}: expected a 2-d matrix, got shape {m.shape}")
    return m


def _run_section(cls, raw: dict | None, what: str):
    raw = dict(raw or {})
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{what}: unknown keys {sorted(unknown)}")
    for key, value in raw.items():
        if isinstance(value, list):
            raw[key] = tuple(value)
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"{what}: {exc}") from exc


def _need(raw: dict, key: str, what: str):
    if key not in raw:
        raise ConfigError(f"{what}: missing required key {key!r}")
    return raw[key]


def _check_model_shapes(model: dict) -> None:
    kind = _need(model, "type", "model")
    if kind not in MODEL_TYPES:
        raise ConfigError(f"model.type must be one of {MODEL_TYPES}, got {kind!r}")
    d = int(_need(model, "dim_system", "model"))
    nb = int(_need(model, "dim_field", "model"))
    if d < 1 or nb < 1:
        raise ConfigError("model dimensions must be positive")

    def square(m, size, what):
        m = parse_matrix(m, what)
        if m.shape != (size, size):
            raise ConfigError(f"{what}: expected {size}x{size}, got {m.shape}")
        return m

    if kind == "coefficients":
        square(_need(model, "hamiltonian", "model"), d, "model.hamiltonian")
        lk = _need(model, "lk0", "model")
        if len(lk) != nb - 1:
            raise ConfigError(f"model.lk0 needs dim_field - 1 = {nb - 1} matrices, got {len(lk)}")
        for k, m in enumerate(lk, start=1):
            square(m, d, f"model.lk0[{k - 1}]")
        if "l00" in model:
            square(model["l00"], d, "model.l00")
    else:
        square(_need(model, "h0", "model"), d, "model.h0")
        square(_need(model, "h_field", "model"), nb, "model.h_field")
        for j, term in enumerate(model.get("interaction", [])):
            square(_need(term, "system", f"model.interaction[{j}]"), d, f"model.interaction[{j}].system")
            square(_need(term, "field", f"model.interaction[{j}]"), nb, f"model.interaction[{j}].field")


def config_from_dict(raw: dict, source: str | None = None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    if "seed" not in raw or not isinstance(raw["seed"], int) or isinstance(raw["seed"], bool):
        raise ConfigError("an integer 'seed' is mandatory")
    model = dict(_need(raw, "model", "config"))
    _check_model_shapes(model)
    obs = dict(_need(raw, "observable", "config"))
    projs = _need(obs, "projectors", "observable")
    lams = _need(obs, "eigenvalues", "observable")
    if len(projs) != len(lams) or not projs:
        raise ConfigError("observable needs one eigenvalue per projector")
    nb = int(model["dim_field"])
    for j, p in enumerate(projs):
        if parse_matrix(p, f"observable.projectors[{j}]").shape != (nb, nb):
            raise ConfigError(f"observable.projectors[{j}] must be {nb}x{nb}")
    rho0 = parse_matrix(_need(raw, "initial_state", "config"), "initial_state")
    d = int(model["dim_system"])
    if rho0.shape != (d, d):
        raise ConfigError(f"initial_state must be {d}x{d}, got {rho0.shape}")
    tol = dict(raw.get("tolerances", {}))
    try:
        DEFAULT_TOLERANCES.replace(**tol)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"tolerances: {exc}") from exc
    cfg = ExperimentConfig(
        name=str(raw.get("name", "experiment")),
        seed=int(raw["seed"]),
        model=model,
        observable=obs,
        initial_state=rho0,
        tolerances=tol,
        discrete=_run_section(DiscreteRun, raw.get("discrete"), "discrete"),
        sde=_run_section(SdeRun, raw.get("sde"), "sde"),
        master=_run_section(MasterRun, raw.get("master"), "master"),
        gencheck=_run_section(GencheckRun, raw.get("gencheck"), "gencheck"),
        converge=_run_section(ConvergeRun, raw.get("converge"), "converge"),
        output=raw.get("output"),
        source=source,
    )
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw, str(path))


def build_observable(cfg: ExperimentConfig, tol: ToleranceProfile) -> SpectralObservable:
    obs = cfg.observable
    projs = tuple(parse_matrix(p, "projector") for p in obs["projectors"])
    return SpectralObservable(tuple(float(x) for x in obs["eigenvalues"]), projs, tol)


def build_hamiltonian_model(cfg: ExperimentConfig, tol: ToleranceProfile) -> HamiltonianModel:
    m = cfg.model
    ops = tuple((parse_matrix(t["system"], "system"), parse_matrix(t["field"], "field"))
                for t in m.get("interaction", []))
    return HamiltonianModel(parse_matrix(m["h0"], "h0"), parse_matrix(m["h_field"], "h_field"), ops,
                            float(m.get("scaling_exponent", 0.5)), tol)


def build_coefficients(cfg: ExperimentConfig) -> LimitCoefficients:
    m = cfg.model
    h = parse_matrix(m["hamiltonian"], "hamiltonian")
    lk = [parse_matrix(x, "lk0") for x in m["lk0"]]
    if "l00" in m:
        return LimitCoefficients(parse_matrix(m["l00"], "l00"), tuple(lk), h)
    return LimitCoefficients.from_hamiltonian(h, lk)


def build_setup(cfg: ExperimentConfig) -> Setup:
    """Construct family, limit coefficients, observable and initial state.

    Raises the validators' errors (``ValidationError`` and subclasses) for a
    structurally well-formed but physically invalid configuration.
    """
    tol = cfg.tolerance_profile
    obs = build_observable(cfg, tol)
    if cfg.model["type"] == "coefficients":
        coeffs = build_coefficients(cfg)
        family = build_from_coefficients(coeffs, tol)
        ham = None
    else:
        ham = build_hamiltonian_model(cfg, tol)
        family = UnitaryFamily.from_hamiltonian(ham)
        coeffs = extract_limit_coefficients(family, tol=tol).projected()
    rho0 = DensityMatrix(cfg.initial_state, tol).matrix
    return Setup(family, coeffs, obs, rho0, tol, ham)


def with_overrides(cfg: ExperimentConfig, seed: int | None = None, paths: int | None = None,
                   output: str | None = None) -> ExperimentConfig:
    """Apply command-line overrides; ``paths`` applies to every run section that has a path count."""
    out = cfg
    if seed is not None:
        out = replace(out, seed=int(seed))
    if paths is not None:
        out = replace(out, discrete=replace(out.discrete, paths=int(paths)),
                      sde=replace(out.sde, paths=int(paths)),
                      converge=replace(out.converge, paths=int(paths)))
    if output is not None:
        out = replace(out, output=output)
    return out


def coefficients_to_json(coeffs: LimitCoefficients) -> dict:
    return {
        "type": "coefficients",
        "dim_system": coeffs.dim,
        "dim_field": coeffs.field_dim,
        "hamiltonian": matrix_to_json(coeffs.hamiltonian),
        "lk0": [matrix_to_json(x) for x in coeffs.lk0],
        "l00": matrix_to_json(coeffs.l00),
    }
