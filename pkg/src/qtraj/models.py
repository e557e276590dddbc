"""Bundled models used by the examples, the configs in ``configs/`` and the acceptance suite.

Basis convention for qubits: |0> is the ground state, sigma_minus = |0><1|.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .interaction import HamiltonianModel, UnitaryFamily, build_from_coefficients
from .limits import LimitCoefficients
from .linalg import SIGMA_MINUS, SIGMA_PLUS, SIGMA_X, SIGMA_Z
from .observable import SpectralObservable


@dataclass(frozen=True)
class BundledModel:
    name: str
    family: UnitaryFamily
    coeffs: LimitCoefficients
    observable: SpectralObservable
    rho0: np.ndarray
    description: str = ""


def excited() -> np.ndarray:
    return np.diag([0.0, 1.0]).astype(complex)


def tilted_state(weight_excited: float = 0.64) -> np.ndarray:
    """Pure qubit state sqrt(1 - w)|0> + sqrt(w)|1>."""
    psi = np.array([np.sqrt(1.0 - weight_excited), np.sqrt(weight_excited)], dtype=complex)
    return np.outer(psi, psi.conj())


def counting_observable(field_dim: int = 2) -> SpectralObservable:
    """Field measured in its number basis: every excited outcome is a jump outcome."""
    return SpectralObservable.basis(field_dim)


def quadrature_observable() -> SpectralObservable:
    """sigma_x on the field qubit, eigenprojectors |+><+| and |-><-|; both outcomes diffusive."""
    return SpectralObservable.from_matrix(SIGMA_X)


def mixed_observable() -> SpectralObservable:
    """Qutrit field: |x0 +- x1> are diffusive outcomes, |x2> is a jump outcome."""
    s = 1.0 / np.sqrt(2.0)
    vecs = [np.array([s, s, 0]), np.array([s, -s, 0]), np.array([0, 0, 1.0])]
    return SpectralObservable.from_vectors([1.0, -1.0, 2.0], vecs)


def amplitude_damping_coefficients(gamma: float = 1.0, omega: float = 0.0) -> LimitCoefficients:
    """L10 = sqrt(gamma) sigma_minus, H = omega/2 sigma_x."""
    return LimitCoefficients.from_hamiltonian(0.5 * omega * SIGMA_X, [np.sqrt(gamma) * SIGMA_MINUS])


def mixed_coefficients() -> LimitCoefficients:
    return LimitCoefficients.from_hamiltonian(0.5 * SIGMA_X, [SIGMA_MINUS, 0.5 * SIGMA_Z])


def detuned_exchange(delta: float = 1000.0) -> HamiltonianModel:
    """Exchange coupling sigma_+ (x) sigma_- + h.c. to a field qubit of energy ``delta``.

    The limit is amplitude damping with L10 = i sigma_minus whatever ``delta``;
    the detuning only enters through delta / n, so the chain approaches its
    limit slowly enough for the finite-n bias to be resolved by Monte Carlo.
    """
    z = np.zeros((2, 2), dtype=complex)
    return HamiltonianModel(z, np.diag([0.0, delta]).astype(complex),
                            ((SIGMA_MINUS, SIGMA_PLUS), (SIGMA_PLUS, SIGMA_MINUS)))


def detuned_limit() -> LimitCoefficients:
    return LimitCoefficients.from_hamiltonian(np.zeros((2, 2)), [1j * SIGMA_MINUS])


def bundled_models() -> dict[str, BundledModel]:
    ad = amplitude_damping_coefficients()
    ad_family = build_from_coefficients(ad)
    mixed = mixed_coefficients()
    det = UnitaryFamily.from_hamiltonian(detuned_exchange())
    models = [
        BundledModel("amplitude_damping_jump", ad_family, ad, counting_observable(), excited(),
                     "amplitude damping, field counted (I = {1}, J = {})"),
        BundledModel("amplitude_damping_diffusive", ad_family, ad, quadrature_observable(), excited(),
                     "amplitude damping, field quadrature measured (I = {}, J = {1})"),
        BundledModel("mixed", build_from_coefficients(mixed), mixed, mixed_observable(),
                     tilted_state(), "driven qubit with two channels (I = {2}, J = {1})"),
        BundledModel("detuned_jump", det, detuned_limit(), counting_observable(), tilted_state(),
                     "detuned exchange interaction, field counted"),
        BundledModel("detuned_diffusive", det, detuned_limit(), quadrature_observable(), tilted_state(),
                     "detuned exchange interaction, field quadrature measured"),
    ]
    return {m.name: m for m in models}


def core_models() -> list[BundledModel]:
    """The three coefficient-defined models: pure jump, pure diffusive, mixed."""
    b = bundled_models()
    return [b["amplitude_damping_jump"], b["amplitude_damping_diffusive"], b["mixed"]]
