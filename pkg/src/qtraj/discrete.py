"""Discrete quantum trajectories: the reduced measurement chain on H_0.

After each interaction the field is measured; outcome i occurs with
probability ``p^i(rho) = Tr[U (rho x beta) U^* (I x P_i)]`` and the system
jumps to the reduced conditional state.  With ``beta = |x_b><x_b|`` only the
b-th block column of U enters:

    E_0[(I x P_i) U (rho x beta) U^* (I x P_i)] = sum_kl p^i_kl U_kb rho U_lb^*
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError, ValidationError
from .interaction import UnitaryFamily, extract_blocks
from .limits import superoperator
from .linalg import (
    DEFAULT_TOLERANCES,
    BlockOperator,
    DensityMatrix,
    ToleranceProfile,
    dagger,
    partial_trace_h0,
    unitarity_residual,
)
from .observable import SpectralObservable
from .rng import DISCRETE_STREAM, path_rng

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiscreteStep:
    outcome_index: int
    post_state: DensityMatrix
    probability: float
    reachable: bool = True


def _as_state(rho, tol: ToleranceProfile) -> DensityMatrix:
    return rho if isinstance(rho, DensityMatrix) else DensityMatrix(np.asarray(rho), tol)


def renormalize(post: np.ndarray) -> tuple[np.ndarray, float]:
    """Hermitize and trace-normalize a batch of states; also return the correction size."""
    herm = 0.5 * (post + dagger(post))
    tr = np.real(np.einsum("...ii->...", herm))
    fixed = herm / np.asarray(tr)[..., None, None]
    correction = float(np.max(np.abs(fixed - post), initial=0.0))
    return fixed, correction


def dual_route_numerators(rho: np.ndarray, u: BlockOperator, obs: SpectralObservable,
                          beta_index: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unnormalized branch states by both routes, plus the outcome probabilities.

    Returns ``(partial_trace, block_form, probabilities)``: the first from
    Tr_field[(I x P_i) U (rho x beta) U^* (I x P_i)], the second from the
    block column of U; both of shape (p+1, d, d).
    """
    r = np.asarray(rho, dtype=complex)
    d, nb = r.shape[0], u.block_dim
    beta = np.zeros((nb, nb), dtype=complex)
    beta[beta_index, beta_index] = 1.0
    joint = u.matrix @ np.kron(beta, r) @ dagger(u.matrix)
    column = extract_blocks(u, beta_index)
    partial, block, probs = [], [], []
    for p_i, c_i in zip(obs.projectors, obs.coefficients):
        proj = np.kron(p_i, np.eye(d))
        partial.append(partial_trace_h0(BlockOperator(proj @ joint @ proj, nb)))
        probs.append(float(np.real(np.trace(joint @ proj))))
        block.append(sum(c_i[k, l] * column[k] @ r @ dagger(column[l]) for k in range(nb) for l in range(nb)))
    return np.array(partial), np.array(block), np.array(probs)


def transition(rho, u: BlockOperator, obs: SpectralObservable, beta_index: int = 0,
               tol: ToleranceProfile = DEFAULT_TOLERANCES) -> list[DiscreteStep]:
    """All p+1 branches of one interaction-plus-measurement step.

    Branch states are computed from the joint operator and the partial trace,
    and again from the block column of U; the two must agree.
    """
    state = _as_state(rho, tol)
    if u.sub_dim != state.dim or obs.field_dim != u.block_dim:
        raise ValidationError("state, unitary and observable dimensions disagree")
    res = unitarity_residual(u.matrix)
    if res > tol.unitary:
        raise ValidationError(f"interaction unitary is not unitary (residual {res:.3e})", res)
    partial, block, probs = dual_route_numerators(state.matrix, u, obs, beta_index)

    steps = []
    for i, (unnorm, prob) in enumerate(zip(partial, probs)):
        gap = float(np.max(np.abs(unnorm - block[i])))
        if gap > tol.dual_route:
            raise ConsistencyError(f"partial-trace and block forms differ by {gap:.3e} (outcome {i})")
        if prob <= tol.probability_floor:
            steps.append(DiscreteStep(i, state, max(prob, 0.0), reachable=False))
            continue
        post, corr = renormalize(unnorm / prob)
        if corr > tol.renormalization:
            raise ConsistencyError(f"post-measurement state needed a correction of {corr:.3e}")
        steps.append(DiscreteStep(i, DensityMatrix(post, tol), prob))
    total = float(np.sum(probs))
    if abs(total - 1.0) > 1e-8:
        raise ConsistencyError(f"outcome probabilities sum to {total!r}")
    return steps


def choose_outcome(probabilities: np.ndarray, uniforms: np.ndarray, floor: float) -> np.ndarray:
    """Inverse-CDF choice over the ordered outcomes; branches at or below ``floor`` are skipped.

    ``probabilities`` has shape (p+1, paths) and ``uniforms`` shape (paths,).
    """
    probs = np.where(probabilities > floor, probabilities, 0.0)
    cdf = np.cumsum(probs, axis=0)
    target = uniforms * cdf[-1]
    idx = np.sum(cdf <= target[None, :], axis=0)
    # target == cdf[-1] only through rounding: fall back to the last reachable branch
    last = probs.shape[0] - 1 - np.argmax(probs[::-1] > 0.0, axis=0)
    return np.minimum(idx, last)


class ChainKernel:
    """Vectorised transition of the reduced chain for a fixed U(n).

    Evaluates all branch numerators for a batch of states from the block
    column of U, which is the route ``transition`` cross-checks.
    """

    def __init__(self, u: BlockOperator, obs: SpectralObservable, beta_index: int = 0,
                 tol: ToleranceProfile = DEFAULT_TOLERANCES):
        if obs.field_dim != u.block_dim:
            raise ValidationError("observable and unitary act on different field dimensions")
        self.obs = obs
        self.tol = tol
        self.dim = u.sub_dim
        col = np.stack(extract_blocks(u, beta_index))  # (N+1, d, d)
        self._col = col
        p = obs.coefficients  # (p+1, N+1, N+1)
        # numerator_i(rho) = sum_k U_k rho B_ik^*,  B_ik = sum_l conj(p^i_kl) U_l
        b_dag = dagger(np.einsum("ikl,lab->ikab", p.conj(), col))
        d = self.dim
        # all branch maps stacked into one (p+1) d^2 x d^2 superoperator
        self._super = np.concatenate([
            superoperator(lambda x, bd=bd: np.einsum("kab,bc,kcd->ad", col, x, bd), d) for bd in b_dag
        ])
        self._branches = p.shape[0]

    def numerators(self, rho: np.ndarray) -> np.ndarray:
        """Unnormalized branch states, shape (p+1, batch, d, d)."""
        rho = np.asarray(rho, dtype=complex)
        d, m = self.dim, rho.shape[0]
        out = rho.reshape(m, d * d) @ self._super.T
        return out.reshape(m, self._branches, d, d).transpose(1, 0, 2, 3)

    def branches(self, rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        num = self.numerators(rho)
        probs = np.real(np.einsum("...ii->...", num))
        safe = np.where(probs > self.tol.probability_floor, probs, 1.0)
        return num / safe[..., None, None], probs

    def step(self, rho: np.ndarray, uniforms: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
        num = self.numerators(rho)
        probs = np.real(np.einsum("...ii->...", num))
        total = probs.sum(axis=0)
        if np.max(np.abs(total - 1.0)) > 1e-8:
            raise ConsistencyError(f"outcome probabilities sum to {total[np.argmax(np.abs(total - 1))]!r}")
        outcome = choose_outcome(probs, uniforms, self.tol.probability_floor)
        rows = np.arange(rho.shape[0])
        post, corr = renormalize(num[outcome, rows] / probs[outcome, rows][:, None, None])
        if corr > self.tol.renormalization:
            raise ConsistencyError(f"post-measurement state needed a correction of {corr:.3e}")
        return post, outcome, corr

    def generator(self, f, rho: np.ndarray, n: int) -> np.ndarray:
        """n * sum_i (f(L_i(rho)) - f(rho)) p^i(rho) for a batch of states."""
        post, probs = self.branches(rho)
        base = f(rho)
        out = np.zeros(rho.shape[0])
        for i in range(post.shape[0]):
            reach = probs[i] > self.tol.probability_floor
            if np.any(reach):
                out[reach] += (f(post[i][reach]) - base[reach]) * probs[i][reach]
        return n * out


@dataclass
class PathRecord:
    times: np.ndarray
    states: np.ndarray
    outcomes: np.ndarray
    seed: int
    index: int


@dataclass
class TrajectoryEnsemble:
    """Sampled paths recorded on a common grid of step indices.

    ``states[j, r]`` is path j at time ``steps[r] * step_size``; the process is
    piecewise constant between steps.
    """

    kind: str
    step_size: float
    steps: np.ndarray
    states: np.ndarray
    seed: int
    path_indices: np.ndarray
    outcomes: np.ndarray | None = None
    counts: np.ndarray | None = None
    intensity: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def time_grid(self) -> np.ndarray:
        return self.steps * self.step_size

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    def index_at(self, t: float) -> int:
        k = int(np.floor(t / self.step_size + 1e-9))
        hits = np.nonzero(self.steps == k)[0]
        if len(hits) == 0:
            raise ValueError(f"time {t} (step {k}) is not on the recorded grid")
        return int(hits[0])

    def states_at(self, t: float) -> np.ndarray:
        return self.states[:, self.index_at(t)]

    def subset(self, rows) -> "TrajectoryEnsemble":
        rows = np.asarray(rows)
        pick = lambda a: None if a is None else a[rows]
        return TrajectoryEnsemble(self.kind, self.step_size, self.steps, self.states[rows], self.seed,
                                  self.path_indices[rows], pick(self.outcomes), pick(self.counts),
                                  pick(self.intensity), dict(self.meta))


def record_steps(total_steps: int, record_every: int = 1, record_times=None, step_size: float = 1.0) -> np.ndarray:
    if record_times is not None:
        ks = {int(np.floor(t / step_size + 1e-9)) for t in record_times}
        ks |= {0, total_steps}
        return np.array(sorted(k for k in ks if 0 <= k <= total_steps))
    ks = set(range(0, total_steps + 1, max(1, int(record_every))))
    ks.add(total_steps)
    return np.array(sorted(ks))


def _steps_for(n: int, horizon: float) -> int:
    steps = int(np.floor(n * horizon + 1e-9))
    if steps < 1:
        raise ValueError(f"floor(n * horizon) = {steps}; need at least one step")
    return steps


def sample_path(rho0, family: UnitaryFamily, obs: SpectralObservable, n: int, horizon: float,
                seed: int, path_index: int = 0, beta_index: int = 0,
                tol: ToleranceProfile = DEFAULT_TOLERANCES) -> PathRecord:
    """One trajectory of floor(n * horizon) steps, each through :func:`transition`."""
    steps = _steps_for(n, horizon)
    u = family(n)
    rng = path_rng(seed, path_index, DISCRETE_STREAM)
    uniforms = rng.random(steps)
    state = _as_state(rho0, tol)
    states = [state.matrix]
    outcomes = np.empty(steps, dtype=np.int16)
    for k in range(steps):
        branch = transition(state, u, obs, beta_index, tol)
        probs = np.array([[b.probability] for b in branch])
        i = int(choose_outcome(probs, uniforms[k:k + 1], tol.probability_floor)[0])
        outcomes[k] = i
        state = branch[i].post_state
        states.append(state.matrix)
    return PathRecord(np.arange(steps + 1) / n, np.array(states), outcomes, seed, path_index)


def sample_ensemble(rho0, family: UnitaryFamily, obs: SpectralObservable, n: int, horizon: float,
                    paths: int, seed: int, record_every: int = 1, record_times=None,
                    beta_index: int = 0, batch_size: int = 4096, keep_outcomes: bool = True,
                    path_offset: int = 0, tol: ToleranceProfile = DEFAULT_TOLERANCES) -> TrajectoryEnsemble:
    """Sample ``paths`` independent trajectories with the vectorised kernel.

    Path j consumes exactly the uniforms :func:`sample_path` would draw for
    path index ``path_offset + j``, so both routes produce the same outcomes.
    """
    if paths < 1:
        raise ValueError("need at least one path")
    steps = _steps_for(n, horizon)
    rec = record_steps(steps, record_every, record_times, 1.0 / n)
    rec_pos = {int(k): r for r, k in enumerate(rec)}
    kernel = ChainKernel(family(n), obs, beta_index, tol)
    rho0 = _as_state(rho0, tol).matrix
    d = rho0.shape[0]
    states = np.empty((paths, len(rec), d, d), dtype=complex)
    outcomes = np.empty((paths, steps), dtype=np.int16) if keep_outcomes else None
    counts = np.zeros((paths, obs.p + 1), dtype=np.int64)
    worst = 0.0
    for start in range(0, paths, batch_size):
        idx = np.arange(start, min(paths, start + batch_size))
        uni = np.stack([path_rng(seed, path_offset + j, DISCRETE_STREAM).random(steps) for j in idx])
        rho = np.broadcast_to(rho0, (len(idx), d, d)).copy()
        states[idx, 0] = rho
        for k in range(steps):
            rho, out, corr = kernel.step(rho, uni[:, k])
            worst = max(worst, corr)
            if keep_outcomes:
                outcomes[idx, k] = out
            np.add.at(counts, (idx, out), 1)
            r = rec_pos.get(k + 1)
            if r is not None:
                states[idx, r] = rho
    log.debug("largest renormalization correction %.3e", worst)
    return TrajectoryEnsemble("discrete", 1.0 / n, rec, states, seed,
                              np.arange(path_offset, path_offset + paths), outcomes, counts,
                              meta={"n": n, "horizon": horizon, "max_renormalization": worst})


def empirical_law(ensemble: TrajectoryEnsemble, t: float, statistic) -> tuple[float, float]:
    """Mean and standard error of ``statistic(rho(t))`` over the paths."""
    if ensemble.n_paths == 0:
        raise ValueError("empty ensemble")
    values = evaluate_statistic(statistic, ensemble.states_at(t))
    m = len(values)
    se = float(np.std(values, ddof=1) / np.sqrt(m)) if m > 1 else 0.0
    return float(np.mean(values)), se


def evaluate_statistic(statistic, states: np.ndarray) -> np.ndarray:
    batch = getattr(statistic, "batch", None)
    if batch is not None:
        return np.asarray(batch(states), dtype=float)
    return np.array([float(statistic(s)) for s in states])


def discrete_generator(rho, f, family: UnitaryFamily, obs: SpectralObservable, n: int,
                       beta_index: int = 0, tol: ToleranceProfile = DEFAULT_TOLERANCES) -> float:
    """A_n f(rho) = n sum_i (f(L_i(rho)) - f(rho)) p^i(rho), unreachable branches skipped."""
    state = _as_state(rho, tol)
    base = float(f(state.matrix))
    total = 0.0
    for b in transition(state, family(n), obs, beta_index, tol):
        if b.reachable:
            total += (float(f(b.post_state.matrix)) - base) * b.probability
    return n * total


def martingale_residuals(rho0, family: UnitaryFamily, obs: SpectralObservable, n: int, f,
                         paths: int, seed: int, horizon: float = 1.0,
                         tol: ToleranceProfile = DEFAULT_TOLERANCES) -> np.ndarray:
    """Per-path f(rho_k) - f(rho_0) - sum_{j<k} A_n f(rho_j) / n at k = floor(n * horizon)."""
    ens = sample_ensemble(rho0, family, obs, n, horizon, paths, seed, record_every=1,
                          keep_outcomes=False, tol=tol)
    kernel = ChainKernel(family(n), obs, tol=tol)
    fb = _batched(f)
    comp = np.zeros(paths)
    for r in range(ens.states.shape[1] - 1):
        comp += kernel.generator(fb, ens.states[:, r], n) / n
    return fb(ens.states[:, -1]) - fb(ens.states[:, 0]) - comp


def moment_constants(ensemble: TrajectoryEnsemble, lags) -> dict[int, float]:
    """n * E||rho_l - rho_r||_F^2 / (l - r) for every recorded lag, maximised over start points."""
    n = 1.0 / ensemble.step_size
    pos = {int(k): r for r, k in enumerate(ensemble.steps)}
    out = {}
    for lag in lags:
        best = 0.0
        for k, r in pos.items():
            if k + lag in pos:
                diff = ensemble.states[:, pos[k + lag]] - ensemble.states[:, r]
                msq = float(np.mean(np.sum(np.abs(diff) ** 2, axis=(-2, -1))))
                best = max(best, n * msq / lag)
        out[int(lag)] = best
    return out


def _batched(f):
    batch = getattr(f, "batch", None)
    if batch is not None:
        return batch
    return lambda states: np.array([float(f(s)) for s in states])
