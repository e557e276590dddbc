"""Field observables A = sum_i lambda_i P_i measured after each interaction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .linalg import DEFAULT_TOLERANCES, ToleranceProfile, as_square, dagger, frozen


@dataclass(frozen=True)
class SpectralObservable:
    """Spectral decomposition of a field observable.

    Projectors are reordered on construction so that outcome 0 has
    ``P_0[0, 0] != 0``; ``jump_set`` and ``diffusive_set`` are the outcome
    indices >= 1 with ``P_i[0, 0] == 0`` and ``!= 0`` respectively.
    """

    eigenvalues: tuple
    projectors: tuple
    tol: ToleranceProfile = field(default=DEFAULT_TOLERANCES, repr=False, compare=False)

    def __post_init__(self):
        projs = [as_square(np.asarray(p, dtype=complex), "projector") for p in self.projectors]
        lams = [float(x) for x in self.eigenvalues]
        if len(projs) == 0 or len(projs) != len(lams):
            raise ValidationError("need one projector per eigenvalue")
        dims = {p.shape[0] for p in projs}
        if len(dims) != 1:
            raise ValidationError(f"projectors have different dimensions {sorted(dims)}")
        _check_projectors(projs, self.tol.projector)
        first = next(
            (i for i, p in enumerate(projs) if abs(p[0, 0]) > self.tol.zero_p00), None
        )
        if first is None:  # unreachable for a complete family, kept as a guard
            raise ValidationError("no projector overlaps the field ground state")
        if first != 0:
            projs[0], projs[first] = projs[first], projs[0]
            lams[0], lams[first] = lams[first], lams[0]
        object.__setattr__(self, "projectors", tuple(frozen(p) for p in projs))
        object.__setattr__(self, "eigenvalues", tuple(lams))

    @property
    def field_dim(self) -> int:
        return self.projectors[0].shape[0]

    @property
    def p(self) -> int:
        """Largest outcome index."""
        return len(self.projectors) - 1

    @property
    def stacked(self) -> np.ndarray:
        """Projector entries as an array of shape (p+1, N+1, N+1)."""
        return np.stack(self.projectors)

    @property
    def coefficients(self) -> np.ndarray:
        """p^i_kl = <x_l|P_i|x_k>, shape (p+1, N+1, N+1).

        With this index order the reduced branch state is
        sum_kl p^i_kl U_k0 rho U_l0^*, which is what the partial trace gives
        (the transpose of the matrix entries; equal to them for real projectors).
        """
        return np.swapaxes(self.stacked, -1, -2)

    def p00(self, i: int) -> float:
        return float(self.projectors[i][0, 0].real)

    @property
    def jump_set(self) -> tuple[int, ...]:
        return tuple(i for i in range(1, self.p + 1) if self.p00(i) <= self.tol.zero_p00)

    @property
    def diffusive_set(self) -> tuple[int, ...]:
        return tuple(i for i in range(1, self.p + 1) if self.p00(i) > self.tol.zero_p00)

    @classmethod
    def from_vectors(cls, eigenvalues, vectors, tol: ToleranceProfile = DEFAULT_TOLERANCES):
        """One rank-one projector per (eigenvalue, vector) pair; vectors are normalized."""
        projs = []
        for v in vectors:
            v = np.asarray(v, dtype=complex)
            v = v / np.linalg.norm(v)
            projs.append(np.outer(v, v.conj()))
        return cls(tuple(eigenvalues), tuple(projs), tol)

    @classmethod
    def from_matrix(cls, a, tol: ToleranceProfile = DEFAULT_TOLERANCES, decimals: int = 9):
        """Spectral decomposition of a Hermitian matrix, grouping equal eigenvalues."""
        a = as_square(np.asarray(a, dtype=complex))
        w, v = np.linalg.eigh(0.5 * (a + dagger(a)))
        groups: dict[float, list[int]] = {}
        for k, lam in enumerate(np.round(w, decimals)):
            groups.setdefault(float(lam), []).append(k)
        lams, projs = [], []
        for lam, idx in sorted(groups.items()):
            vecs = v[:, idx]
            lams.append(lam)
            projs.append(vecs @ dagger(vecs))
        return cls(tuple(lams), tuple(projs), tol)

    @classmethod
    def basis(cls, field_dim: int, eigenvalues=None):
        """Measurement in the canonical basis x_0, ..., x_N."""
        if eigenvalues is None:
            eigenvalues = range(field_dim)
        return cls.from_vectors(tuple(eigenvalues), np.eye(field_dim))

    @classmethod
    def trivial(cls, field_dim: int):
        """Single outcome, P_0 = I."""
        return cls((0.0,), (np.eye(field_dim),))


def _check_projectors(projs: list[np.ndarray], tol: float) -> None:
    dim = projs[0].shape[0]
    for i, p in enumerate(projs):
        res = float(np.max(np.abs(p - dagger(p))))
        if res > tol:
            raise ValidationError(f"projector {i} is not Hermitian (residual {res:.3e})", res)
        res = float(np.max(np.abs(p @ p - p)))
        if res > tol:
            raise ValidationError(f"projector {i} is not idempotent (residual {res:.3e})", res)
    for i in range(len(projs)):
        for j in range(i + 1, len(projs)):
            res = float(np.max(np.abs(projs[i] @ projs[j])))
            if res > tol:
                raise ValidationError(
                    f"projectors {i} and {j} are not orthogonal (residual {res:.3e})", res
                )
    res = float(np.max(np.abs(sum(projs) - np.eye(dim))))
    if res > tol:
        raise ValidationError(f"projectors do not sum to identity (residual {res:.3e})", res)
