"""Small dense complex linear algebra for system (H_0) and field (H) operators.

Joint operators on H_0 (x) H are stored in the block basis

    (w_0 x x_0, ..., w_K x x_0, w_0 x x_1, ..., w_K x x_N),

i.e. the system index runs fastest.  Block ``(i, j)`` of a joint operator is
therefore the (K+1)x(K+1) system operator ``<x_i| W |x_j>``, and the partial
trace over the field is the sum of diagonal blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DimensionError, ValidationError

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
# |0> is the ground state: sigma_minus = |0><1|
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.conj().T.copy()


@dataclass(frozen=True)
class ToleranceProfile:
    """Numerical slack used by every validator.

    The defaults are the contract values; configs may override individual
    fields.
    """

    hermitian: float = 1e-10
    trace: float = 1e-10
    psd: float = 1e-9
    unitary: float = 1e-9
    projector: float = 1e-10
    probability_sum: float = 1e-10
    probability_floor: float = 1e-14
    zero_p00: float = 1e-12
    intensity_floor: float = 1e-12
    renormalization: float = 1e-8
    dual_route: float = 1e-10
    claim2: float = 1e-8

    def replace(self, **overrides: float) -> "ToleranceProfile":
        unknown = set(overrides) - set(self.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown tolerance fields: {sorted(unknown)}")
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update({k: float(v) for k, v in overrides.items()})
        return ToleranceProfile(**values)


DEFAULT_TOLERANCES = ToleranceProfile()


def frozen(a) -> np.ndarray:
    """Return a read-only complex copy of ``a``."""
    out = np.array(a, dtype=complex)
    out.flags.writeable = False
    return out


def as_square(m, name: str = "matrix") -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    return m


def dagger(m: np.ndarray) -> np.ndarray:
    return np.swapaxes(m, -1, -2).conj()


def hermitian_residual(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - dagger(m)), initial=0.0))


def hermitian_eigenvalues(m, tol: float = 1e-8) -> np.ndarray:
    """Ascending eigenvalues of a Hermitian matrix."""
    m = as_square(m)
    res = hermitian_residual(m)
    if res > tol:
        raise ValidationError(f"matrix is not Hermitian (residual {res:.3e})", res)
    return np.linalg.eigvalsh(0.5 * (m + dagger(m)))


def matrix_exponential(m, scale: float = 1.0) -> np.ndarray:
    """exp(scale * m) by scaling-and-squaring Pade."""
    m = as_square(m)
    return scipy.linalg.expm(scale * np.asarray(m, dtype=complex))


def state_residuals(rho: np.ndarray) -> dict[str, float]:
    """Hermiticity, trace and positivity defects of a candidate state."""
    rho = np.asarray(rho, dtype=complex)
    herm = hermitian_residual(rho)
    trace = abs(np.trace(rho) - 1.0)
    min_eig = float(np.linalg.eigvalsh(0.5 * (rho + dagger(rho)))[0])
    return {"hermitian": herm, "trace": float(trace), "min_eigenvalue": min_eig}


def check_state(rho, tol: ToleranceProfile = DEFAULT_TOLERANCES) -> None:
    rho = as_square(rho, "state")
    r = state_residuals(rho)
    if r["hermitian"] > tol.hermitian:
        raise ValidationError(f"state is not Hermitian (residual {r['hermitian']:.3e})", r["hermitian"])
    if r["trace"] > tol.trace:
        raise ValidationError(f"state trace differs from 1 by {r['trace']:.3e}", r["trace"])
    if r["min_eigenvalue"] < -tol.psd:
        raise ValidationError(
            f"state is not positive (min eigenvalue {r['min_eigenvalue']:.3e})", r["min_eigenvalue"]
        )


@dataclass(frozen=True)
class DensityMatrix:
    """A validated state on H_0."""

    matrix: np.ndarray
    tol: ToleranceProfile = field(default=DEFAULT_TOLERANCES, repr=False, compare=False)

    def __post_init__(self):
        check_state(self.matrix, self.tol)
        object.__setattr__(self, "matrix", frozen(self.matrix))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def pure(cls, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def basis(cls, dim: int, index: int) -> "DensityMatrix":
        rho = np.zeros((dim, dim), dtype=complex)
        rho[index, index] = 1.0
        return cls(rho)


@dataclass(frozen=True)
class BlockOperator:
    """Operator on H_0 (x) H laid out as a (N+1)x(N+1) grid of system blocks."""

    matrix: np.ndarray
    block_dim: int

    def __post_init__(self):
        m = as_square(self.matrix, "block operator")
        if self.block_dim < 1 or m.shape[0] % self.block_dim:
            raise DimensionError(
                f"size {m.shape[0]} is not a multiple of block_dim {self.block_dim}"
            )
        object.__setattr__(self, "matrix", frozen(m))

    @property
    def sub_dim(self) -> int:
        return self.matrix.shape[0] // self.block_dim

    def block(self, i: int, j: int) -> np.ndarray:
        d = self.sub_dim
        if not (0 <= i < self.block_dim and 0 <= j < self.block_dim):
            raise IndexError(f"block ({i}, {j}) out of range for block_dim {self.block_dim}")
        return self.matrix[i * d:(i + 1) * d, j * d:(j + 1) * d].copy()

    @classmethod
    def from_blocks(cls, blocks) -> "BlockOperator":
        rows = [[np.asarray(b, dtype=complex) for b in row] for row in blocks]
        nb = len(rows)
        if any(len(row) != nb for row in rows):
            raise DimensionError("block grid must be square")
        shapes = {b.shape for row in rows for b in row}
        if len(shapes) != 1:
            raise DimensionError(f"blocks have mismatched shapes: {sorted(shapes)}")
        (shape,) = shapes
        if shape[0] != shape[1]:
            raise DimensionError("blocks must be square")
        return cls(np.block(rows), nb)

    def dagger(self) -> "BlockOperator":
        return BlockOperator(dagger(self.matrix), self.block_dim)

    def __matmul__(self, other: "BlockOperator") -> "BlockOperator":
        if self.block_dim != other.block_dim or self.matrix.shape != other.matrix.shape:
            raise DimensionError("block operators have different layouts")
        return BlockOperator(self.matrix @ other.matrix, self.block_dim)


def tensor_product(a, b) -> BlockOperator:
    """a (x) b with ``a`` on H_0 and ``b`` on H; block (i, j) equals b_ij * a."""
    a = as_square(a, "system operator")
    b = as_square(b, "field operator")
    return BlockOperator(np.kron(b, a), b.shape[0])


def partial_trace_h0(w: BlockOperator) -> np.ndarray:
    """Reduce a joint operator to H_0 by summing its diagonal blocks."""
    if not isinstance(w, BlockOperator):
        raise DimensionError("partial_trace_h0 expects a BlockOperator")
    d = w.sub_dim
    m = w.matrix.reshape(w.block_dim, d, w.block_dim, d)
    return np.einsum("iaib->ab", m)


def identity_block(block_dim: int, sub_dim: int) -> BlockOperator:
    return BlockOperator(np.eye(block_dim * sub_dim, dtype=complex), block_dim)


def unitarity_residual(u: np.ndarray) -> float:
    u = np.asarray(u)
    return float(np.max(np.abs(u @ dagger(u) - np.eye(u.shape[0]))))


def random_state(rng: np.random.Generator, dim: int) -> np.ndarray:
    """c |psi><psi| + (1 - c) I/d with Gaussian psi and c ~ U[0, 1]."""
    psi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    psi /= np.linalg.norm(psi)
    c = rng.random()
    return c * np.outer(psi, psi.conj()) + (1.0 - c) * np.eye(dim) / dim


def random_states(rng: np.random.Generator, dim: int, count: int) -> list[np.ndarray]:
    return [random_state(rng, dim) for _ in range(count)]


def matrix_to_json(m) -> dict:
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    return {
        "rows": int(m.shape[0]),
        "cols": int(m.shape[1]),
        "re": [float(x) for x in m.real.ravel()],
        "im": [float(x) for x in m.imag.ravel()],
    }


def matrix_from_json(obj) -> np.ndarray:
    """Inverse of :func:`matrix_to_json`; plain nested lists of reals are also accepted."""
    if isinstance(obj, dict):
        rows, cols = int(obj["rows"]), int(obj["cols"])
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj.get("im", np.zeros(rows * cols)), dtype=float)
        if re.size != rows * cols or im.size != rows * cols:
            raise DimensionError(
                f"matrix JSON has {re.size}/{im.size} entries, expected {rows * cols}"
            )
        return (re + 1j * im).reshape(rows, cols)
    m = np.asarray(obj, dtype=complex)
    if m.ndim != 2:
        raise DimensionError("matrix JSON must be an object or a nested list")
    return m
