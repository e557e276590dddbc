"""Single-interaction unitaries U(n) on H_0 (x) H and their limit coefficients."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import AsymptoticInconsistencyError, DimensionError, ValidationError
from .limits import LimitCoefficients
from .linalg import (
    DEFAULT_TOLERANCES,
    BlockOperator,
    ToleranceProfile,
    as_square,
    frozen,
    hermitian_residual,
    matrix_exponential,
    unitarity_residual,
)

DEFAULT_PROBES = (10**4, 10**5, 10**6)
DEFAULT_ASYMPTOTIC_THRESHOLD = 1e-3


@dataclass(frozen=True)
class HamiltonianModel:
    """H_tot(n) = H0 (x) I + I (x) H + n**scaling_exponent * sum_k V_k (x) W_k."""

    h0: np.ndarray
    h_field: np.ndarray
    interaction_ops: tuple = ()
    scaling_exponent: float = 0.5
    tol: ToleranceProfile = field(default=DEFAULT_TOLERANCES, repr=False, compare=False)

    def __post_init__(self):
        h0 = as_square(np.asarray(self.h0, dtype=complex), "h0")
        hf = as_square(np.asarray(self.h_field, dtype=complex), "h_field")
        ops = []
        for v, w in self.interaction_ops:
            v = as_square(np.asarray(v, dtype=complex), "interaction system factor")
            w = as_square(np.asarray(w, dtype=complex), "interaction field factor")
            if v.shape != h0.shape or w.shape != hf.shape:
                raise DimensionError("interaction factors do not match h0 / h_field dimensions")
            ops.append((frozen(v), frozen(w)))
        object.__setattr__(self, "h0", frozen(h0))
        object.__setattr__(self, "h_field", frozen(hf))
        object.__setattr__(self, "interaction_ops", tuple(ops))
        for name, m in (("h0", h0), ("h_field", hf), ("H_int", self.interaction())):
            res = hermitian_residual(m)
            if res > self.tol.hermitian:
                raise ValidationError(f"{name} is not Hermitian (residual {res:.3e})", res)

    @property
    def dim_system(self) -> int:
        return self.h0.shape[0]

    @property
    def dim_field(self) -> int:
        return self.h_field.shape[0]

    def interaction(self) -> np.ndarray:
        size = self.dim_system * self.dim_field
        out = np.zeros((size, size), dtype=complex)
        for v, w in self.interaction_ops:
            out += np.kron(w, v)
        return out

    def total(self, n: int) -> np.ndarray:
        free = np.kron(np.eye(self.dim_field), self.h0) + np.kron(self.h_field, np.eye(self.dim_system))
        return free + float(n) ** self.scaling_exponent * self.interaction()


def build_unitary(model: HamiltonianModel, n: int) -> BlockOperator:
    """exp(i H_tot(n) / n)."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    h_tot = model.total(n)
    res = hermitian_residual(h_tot)
    if res > model.tol.hermitian * max(1.0, float(n) ** model.scaling_exponent):
        raise ValidationError(f"H_tot is not Hermitian (residual {res:.3e})", res)
    u = matrix_exponential(h_tot, 1j / n)
    return BlockOperator(u, model.dim_field)


class UnitaryFamily:
    """n -> U(n), evaluated lazily and cached; every result is checked for unitarity."""

    def __init__(self, build: Callable[[int], BlockOperator], dim_system: int, dim_field: int,
                 source: str, tol: ToleranceProfile = DEFAULT_TOLERANCES, origin=None):
        self._build = build
        self.dim_system = dim_system
        self.dim_field = dim_field
        self.source = source
        self.tol = tol
        self.origin = origin
        self._cached = lru_cache(maxsize=64)(self._checked)

    def _checked(self, n: int) -> BlockOperator:
        u = self._build(n)
        res = unitarity_residual(u.matrix)
        if res > self.tol.unitary:
            raise ValidationError(f"U({n}) is not unitary (residual {res:.3e})", res)
        return u

    def __call__(self, n: int) -> BlockOperator:
        return self._cached(int(n))

    @classmethod
    def from_hamiltonian(cls, model: HamiltonianModel) -> "UnitaryFamily":
        return cls(lambda n: build_unitary(model, n), model.dim_system, model.dim_field,
                   "hamiltonian", model.tol, model)

    @classmethod
    def constant(cls, u: BlockOperator) -> "UnitaryFamily":
        return cls(lambda n: u, u.sub_dim, u.block_dim, "constant")


def extract_blocks(u: BlockOperator, column: int = 0) -> list[np.ndarray]:
    """[U_{0,column}, ..., U_{N,column}]."""
    if not 0 <= column < u.block_dim:
        raise IndexError(f"column {column} out of range for {u.block_dim} blocks")
    return [u.block(k, column) for k in range(u.block_dim)]


def block_generator(coeffs: LimitCoefficients, n: int) -> np.ndarray:
    """Skew-Hermitian G(n): G00 = -iH/n, Gk0 = Lk/sqrt(n), G0k = -Lk^*/sqrt(n)."""
    d, nb = coeffs.dim, coeffs.field_dim
    g = np.zeros((nb * d, nb * d), dtype=complex)
    g[:d, :d] = -1j * coeffs.hamiltonian / n
    s = 1.0 / np.sqrt(n)
    for k, lk in enumerate(coeffs.lk0, start=1):
        g[k * d:(k + 1) * d, :d] = s * lk
        g[:d, k * d:(k + 1) * d] = -s * lk.conj().T
    return g


def build_from_coefficients(coeffs: LimitCoefficients,
                            tol: ToleranceProfile = DEFAULT_TOLERANCES) -> UnitaryFamily:
    """Canonical family U(n) = exp(G(n)) whose limit coefficients are ``coeffs``."""
    coeffs.validate(tol)
    return UnitaryFamily(
        lambda n: BlockOperator(matrix_exponential(block_generator(coeffs, n)), coeffs.field_dim),
        coeffs.dim, coeffs.field_dim, "direct-coefficients", tol, coeffs,
    )


def scaled_blocks(u: BlockOperator, n: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """(n (U00 - I), [sqrt(n) Uk0 for k >= 1])."""
    col = extract_blocks(u, 0)
    d = u.sub_dim
    return n * (col[0] - np.eye(d)), [np.sqrt(n) * b for b in col[1:]]


def extract_limit_coefficients(family: UnitaryFamily, n_probe=DEFAULT_PROBES,
                               threshold: float = DEFAULT_ASYMPTOTIC_THRESHOLD,
                               tol: ToleranceProfile = DEFAULT_TOLERANCES) -> LimitCoefficients:
    """Estimate L00 = lim n (U00(n) - I) and Lk0 = lim sqrt(n) Uk0(n).

    Both scaled blocks have expansions in powers of 1/n, so the estimate is the
    two-point Richardson extrapolation over the last two probes.  The residual
    of a coefficient is the size of the extrapolation correction, or the
    disagreement with the extrapolation over the previous pair of probes if
    that is larger.
    """
    probes = [int(n) for n in n_probe]
    if len(probes) < 2 or any(b <= a for a, b in zip(probes, probes[1:])):
        raise ValueError("need at least two strictly increasing probe values")
    scaled = [scaled_blocks(family(n), n) for n in probes]

    def richardson(j: int, pick) -> np.ndarray:
        n1, n2 = probes[j - 1], probes[j]
        return (n2 * pick(scaled[j]) - n1 * pick(scaled[j - 1])) / (n2 - n1)

    pickers = [("L00", lambda s: s[0])] + [
        (f"L{k}0", (lambda s, k=k: s[1][k - 1])) for k in range(1, family.dim_field)
    ]
    estimates, residuals = [], {}
    last = len(probes) - 1
    for name, pick in pickers:
        est = richardson(last, pick)
        res = float(np.max(np.abs(est - pick(scaled[last]))))
        if last >= 2:
            res = max(res, float(np.max(np.abs(est - richardson(last - 1, pick)))))
        estimates.append(est)
        residuals[name] = res
    worst = max(residuals, key=residuals.get)
    if residuals[worst] > threshold:
        raise AsymptoticInconsistencyError(
            f"{worst} extraction residual {residuals[worst]:.3e} exceeds {threshold:.1e}: "
            "the family does not have the 1/n, 1/sqrt(n) block asymptotics",
            residuals[worst],
        )
    return LimitCoefficients(estimates[0], tuple(estimates[1:]), residuals=residuals)
