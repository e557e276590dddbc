"""Limit coefficients of the interaction and the maps entering the limit generators.

Notation follows the usual Lindblad/Belavkin conventions:

* ``L(rho) = L00 rho + rho L00^* + sum_k Lk rho Lk^*``
* ``M_i(rho) = sum_{k,l>=1} p^i_kl Lk rho Ll^*``   (jump numerator of outcome i)
* ``v_i = Tr M_i``, ``g_i = M_i / v_i - rho``, ``g~_i = M_i / Re v_i``
* ``C_i(rho) = sum_{k>=1} p^i_k0 Lk rho + p^i_0k rho Lk^*``
* ``h_i = (C_i - Tr[C_i] rho) / sqrt(p^i_00)``

All maps accept batches: any array of shape (..., d, d).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError, JumpUndefinedError, ValidationError
from .linalg import DEFAULT_TOLERANCES, ToleranceProfile, as_square, dagger, frozen
from .observable import SpectralObservable


@dataclass(frozen=True)
class LimitCoefficients:
    """First-column limit coefficients ``L00`` and ``(L10, ..., LN0)``.

    ``hamiltonian`` is the self-adjoint H of the decomposition
    ``L00 = -(iH + 1/2 sum_k Lk^* Lk)``; when not given it is recovered from
    ``L00``.  ``residuals`` holds per-coefficient extraction errors for
    numerically estimated coefficients.
    """

    l00: np.ndarray
    lk0: tuple
    hamiltonian: np.ndarray | None = None
    residuals: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        l00 = as_square(np.asarray(self.l00, dtype=complex), "L00")
        lk0 = tuple(as_square(np.asarray(x, dtype=complex), f"L{k + 1}0") for k, x in enumerate(self.lk0))
        if any(x.shape != l00.shape for x in lk0):
            raise DimensionError("all limit coefficients must share the system dimension")
        ham = self.hamiltonian
        if ham is None:
            a = l00 + 0.5 * _sum_adjoint_products(lk0, l00.shape[0])
            ih = 1j * a
            ham = 0.5 * (ih + dagger(ih))
        object.__setattr__(self, "l00", frozen(l00))
        object.__setattr__(self, "lk0", tuple(frozen(x) for x in lk0))
        object.__setattr__(self, "hamiltonian", frozen(ham))

    @property
    def dim(self) -> int:
        return self.l00.shape[0]

    @property
    def field_dim(self) -> int:
        return len(self.lk0) + 1

    @property
    def stacked(self) -> np.ndarray:
        """Jump coefficients as an array of shape (N, d, d)."""
        if not self.lk0:
            return np.zeros((0, self.dim, self.dim), dtype=complex)
        return np.stack(self.lk0)

    @classmethod
    def from_hamiltonian(cls, hamiltonian, lk0) -> "LimitCoefficients":
        """Build L00 from H and the jump coefficients so that Claim-2 holds exactly."""
        h = as_square(np.asarray(hamiltonian, dtype=complex), "H")
        lk0 = tuple(np.asarray(x, dtype=complex) for x in lk0)
        l00 = -(1j * h + 0.5 * _sum_adjoint_products(lk0, h.shape[0]))
        return cls(l00, lk0, h)

    def projected(self) -> "LimitCoefficients":
        """Same H and Lk0 with L00 rebuilt so that Claim-2 holds exactly.

        Extracted coefficients satisfy Claim-2 only to the extraction error,
        which would make L leak trace at that level.
        """
        out = LimitCoefficients.from_hamiltonian(self.hamiltonian, self.lk0)
        object.__setattr__(out, "residuals", dict(self.residuals))
        return out

    @classmethod
    def zero(cls, dim: int, field_dim: int) -> "LimitCoefficients":
        z = np.zeros((dim, dim), dtype=complex)
        return cls.from_hamiltonian(z, [z] * (field_dim - 1))

    def claim2_residual(self) -> float:
        a = self.l00 + 1j * self.hamiltonian + 0.5 * _sum_adjoint_products(self.lk0, self.dim)
        return float(np.max(np.abs(a)))

    def claim2_report(self, tol: ToleranceProfile = DEFAULT_TOLERANCES) -> dict:
        """Residuals of the adopted (L^*L) ordering and of the displayed (LL^*) one."""
        herm = float(np.max(np.abs(self.hamiltonian - dagger(self.hamiltonian))))
        adopted = self.claim2_residual()
        alt_sum = sum((x @ dagger(x) for x in self.lk0), np.zeros((self.dim, self.dim), complex))
        alternative = float(np.max(np.abs(self.l00 + 1j * self.hamiltonian + 0.5 * alt_sum)))
        return {
            "hamiltonian_hermitian_residual": herm,
            "adopted_residual": adopted,
            "displayed_ordering_residual": alternative,
            "passes": adopted <= tol.claim2 and herm <= tol.hermitian,
            "displayed_ordering_passes": alternative <= tol.claim2,
        }

    def validate(self, tol: ToleranceProfile = DEFAULT_TOLERANCES) -> None:
        rep = self.claim2_report(tol)
        if rep["hamiltonian_hermitian_residual"] > tol.hermitian:
            raise ValidationError(
                "H of the L00 decomposition is not Hermitian", rep["hamiltonian_hermitian_residual"]
            )
        if not rep["passes"]:
            raise ValidationError(
                f"L00 + iH + 1/2 sum Lk^*Lk = {rep['adopted_residual']:.3e} (Claim-2 violated)",
                rep["adopted_residual"],
            )

    def trace_identity_residual(self, rho) -> float:
        return float(abs(np.trace(lindblad_map(self, rho))))


def _sum_adjoint_products(lk0, dim: int) -> np.ndarray:
    return sum((dagger(x) @ x for x in lk0), np.zeros((dim, dim), dtype=complex))


def lindblad_map(coeffs: LimitCoefficients, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-2:] != coeffs.l00.shape:
        raise DimensionError(f"state shape {rho.shape} does not match coefficients {coeffs.l00.shape}")
    out = coeffs.l00 @ rho + rho @ dagger(coeffs.l00)
    for lk in coeffs.lk0:
        out = out + lk @ rho @ dagger(lk)
    return out


def truncate(rho, k_trunc: float) -> np.ndarray:
    """Clamp real and imaginary parts of every entry to [-k, k]."""
    rho = np.asarray(rho, dtype=complex)
    return np.clip(rho.real, -k_trunc, k_trunc) + 1j * np.clip(rho.imag, -k_trunc, k_trunc)


def to_coordinates(rho) -> np.ndarray:
    """Real coordinates of an operator: real parts row-major, then imaginary parts."""
    rho = np.asarray(rho, dtype=complex)
    flat = rho.reshape(rho.shape[:-2] + (-1,))
    return np.concatenate([flat.real, flat.imag], axis=-1)


def from_coordinates(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    half = dim * dim
    return (x[..., :half] + 1j * x[..., half:]).reshape(x.shape[:-1] + (dim, dim))


def superoperator(fn, dim: int) -> np.ndarray:
    """Matrix S of a linear map on d x d matrices: vec(fn(X)) = S vec(X), row-major vec."""
    cols = []
    for j in range(dim * dim):
        e = np.zeros(dim * dim, dtype=complex)
        e[j] = 1.0
        cols.append(np.asarray(fn(e.reshape(dim, dim)), dtype=complex).ravel())
    return np.array(cols).T


def apply_superoperator(s: np.ndarray, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    d = rho.shape[-1]
    flat = rho.reshape(rho.shape[:-2] + (d * d,))
    return (flat @ s.T).reshape(rho.shape)


def classify_outcomes(obs: SpectralObservable) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Split outcomes 1..p into (I, J): jump outcomes have p^i_00 = 0."""
    return obs.jump_set, obs.diffusive_set


class LimitMaps:
    """The limit maps g_i, v_i, h_i, L for one (coefficients, observable) pair.

    Precomputes for each outcome i the operators needed to evaluate
    ``M_i`` and ``C_i`` on batches of matrices.
    """

    def __init__(
        self,
        coeffs: LimitCoefficients,
        obs: SpectralObservable,
        k_trunc: float = 2.0,
        tol: ToleranceProfile = DEFAULT_TOLERANCES,
    ):
        if obs.field_dim != coeffs.field_dim:
            raise DimensionError(
                f"observable acts on dimension {obs.field_dim}, coefficients on {coeffs.field_dim}"
            )
        if k_trunc <= 1:
            raise ValueError("k_trunc must exceed 1")
        self.coeffs = coeffs
        self.obs = obs
        self.k_trunc = float(k_trunc)
        self.tol = tol
        self.jump_set, self.diffusive_set = classify_outcomes(obs)
        self.noise_channels = (0,) + self.diffusive_set
        lk = coeffs.stacked
        d = coeffs.dim
        lk_dag = dagger(lk)
        l00_dag = dagger(coeffs.l00)

        def lindblad(x):
            out = coeffs.l00 @ x + x @ l00_dag
            for k in range(len(lk)):
                out = out + lk[k] @ x @ lk_dag[k]
            return out

        self._s_lindblad = superoperator(lindblad, d)
        self._s_jump, self._s_cross = [], []
        for p_i in obs.coefficients:
            sub = p_i[1:, 1:]
            a_i = np.einsum("k,kab->ab", p_i[1:, 0], lk) if len(lk) else np.zeros((d, d), complex)

            def jump(x, sub=sub):
                out = np.zeros((d, d), dtype=complex)
                for k in range(len(lk)):
                    for l in range(len(lk)):
                        out = out + sub[k, l] * lk[k] @ x @ lk_dag[l]
                return out

            self._s_jump.append(superoperator(jump, d))
            self._s_cross.append(superoperator(lambda x, a=a_i: a @ x + x @ dagger(a), d))

    @property
    def dim(self) -> int:
        return self.coeffs.dim

    def phi(self, rho) -> np.ndarray:
        return truncate(rho, self.k_trunc)

    def lindblad(self, rho) -> np.ndarray:
        return apply_superoperator(self._s_lindblad, rho)

    def jump_numerator(self, i: int, rho) -> np.ndarray:
        """M_i(rho) = sum_{k,l>=1} p^i_kl Lk rho Ll^*."""
        return apply_superoperator(self._s_jump[i], rho)

    def v_complex(self, i: int, rho):
        return np.trace(self.jump_numerator(i, rho), axis1=-2, axis2=-1)

    def v(self, i: int, rho):
        """Re Tr M_i(rho)."""
        if not 1 <= i <= self.obs.p:
            raise DomainError(f"jump intensity defined for outcomes 1..{self.obs.p}, got {i}")
        vc = self.v_complex(i, rho)
        return np.real(vc)

    def g_tilde(self, i: int, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        m = self.jump_numerator(i, rho)
        re_v = np.real(np.trace(m, axis1=-2, axis2=-1))
        if np.any(re_v <= self.tol.intensity_floor):
            raise JumpUndefinedError(
                f"jump {i} undefined: Re v_{i} = {np.min(re_v):.3e} below floor {self.tol.intensity_floor}"
            )
        return m / np.asarray(re_v)[..., None, None]

    def g(self, i: int, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        m = self.jump_numerator(i, rho)
        vc = np.trace(m, axis1=-2, axis2=-1)
        if np.any(np.real(vc) <= self.tol.intensity_floor):
            raise JumpUndefinedError(
                f"jump {i} undefined: v_{i} = {np.min(np.real(vc)):.3e} below floor {self.tol.intensity_floor}"
            )
        return m / np.asarray(vc)[..., None, None] - rho

    def cross(self, i: int, rho) -> np.ndarray:
        return apply_superoperator(self._s_cross[i], rho)

    def h(self, i: int, rho) -> np.ndarray:
        p00 = self.obs.p00(i)
        if p00 <= self.tol.zero_p00:
            raise DomainError(f"h_{i} undefined: p^{i}_00 = {p00:.3e} (outcome is a jump outcome)")
        rho = np.asarray(rho, dtype=complex)
        c = self.cross(i, rho)
        tr = np.trace(c, axis1=-2, axis2=-1)
        return (c - np.asarray(tr)[..., None, None] * rho) / np.sqrt(p00)


def jump_map_v(obs: SpectralObservable, coeffs: LimitCoefficients, i: int, rho,
               tol: ToleranceProfile = DEFAULT_TOLERANCES) -> float:
    maps = LimitMaps(coeffs, obs, tol=tol)
    rho = np.asarray(rho, dtype=complex)
    vc = complex(maps.v_complex(i, rho))
    if np.max(np.abs(rho - dagger(rho))) <= tol.hermitian and abs(vc.imag) > 1e-9:
        raise ValidationError(f"v_{i} has imaginary part {vc.imag:.3e} on a Hermitian input", abs(vc.imag))
    return float(maps.v(i, rho))


def jump_map_g(obs, coeffs, i: int, rho, tol: ToleranceProfile = DEFAULT_TOLERANCES) -> np.ndarray:
    return LimitMaps(coeffs, obs, tol=tol).g(i, rho)


def jump_map_g_tilde(obs, coeffs, i: int, rho, tol: ToleranceProfile = DEFAULT_TOLERANCES) -> np.ndarray:
    return LimitMaps(coeffs, obs, tol=tol).g_tilde(i, rho)


def diffusive_map_h(obs, coeffs, i: int, rho, tol: ToleranceProfile = DEFAULT_TOLERANCES) -> np.ndarray:
    return LimitMaps(coeffs, obs, tol=tol).h(i, rho)
