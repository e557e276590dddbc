"""Truncated jump-diffusion Belavkin equations.

Between jumps the state follows Euler-Maruyama for

    d rho = [L(rho) - sum_{i in I} (g~_i(rho) - rho) Re v_i(rho)] dt
            + sum_{i in J u {0}} h_i(rho) dW_i

with every coefficient evaluated at the truncated state phi(rho).  Jumps of
channel i in I come from thinning a rate-K Poisson process: at each candidate
time a uniform xi on [0, K] is drawn and the jump rho -> g~_i(phi(rho-)) is
accepted when xi <= Re v_i(phi(rho-)).

Random stream of one path, in order of consumption:

1. for each jump channel (ascending): a Poisson(K * horizon) count, then that
   many uniforms scaled to [0, horizon] (sorted afterwards);
2. one block of uniforms walked chronologically: each Euler sub-step takes one
   uniform per noise channel (ascending, mapped to a normal by the inverse
   CDF), each candidate time takes one acceptance uniform.  Candidate times
   split the dt interval they fall in into sub-steps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .discrete import TrajectoryEnsemble, record_steps
from .errors import ConsistencyError
from .limits import LimitMaps
from .linalg import DEFAULT_TOLERANCES, dagger
from .rng import SDE_STREAM, path_rng, uniform_to_normal

log = logging.getLogger(__name__)


def intensity_bound(maps: LimitMaps) -> float:
    """Certified sup of |Re v_i| over operators with all real coordinates in [-k, k].

    v_i(rho) = Tr[Q_i rho] with Q_i = sum_kl p^i_kl Ll^* Lk, and
    ||rho||_F <= sqrt(2) k d on the truncated box.
    """
    d, k = maps.dim, maps.k_trunc
    lk = maps.coeffs.stacked
    worst = 0.0
    for i in maps.jump_set:
        p = maps.obs.coefficients[i][1:, 1:]
        q = np.einsum("kl,lba,kbc->ac", p, lk.conj(), lk)  # sum_kl p_kl Ll^* Lk
        worst = max(worst, float(np.linalg.norm(q)))
    return float(np.sqrt(2.0) * k * d * worst)


@dataclass(frozen=True)
class SdeConfig:
    dt: float
    horizon: float
    k_trunc: float = 2.0
    seed: int = 0
    paths: int = 1
    intensity_bound: float | None = None
    record_every: int = 1
    record_times: tuple | None = None

    def __post_init__(self):
        if self.dt <= 0 or self.horizon <= 0:
            raise ValueError("dt and horizon must be positive")
        if self.dt > self.horizon:
            raise ValueError("dt must not exceed the horizon")
        if self.k_trunc <= 1:
            raise ValueError("k_trunc must exceed 1")
        if self.paths < 1:
            raise ValueError("need at least one path")
        steps = self.horizon / self.dt
        if abs(steps - round(steps)) > 1e-6:
            raise ValueError("horizon must be an integer multiple of dt")

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))


def drift(maps: LimitMaps, rho) -> np.ndarray:
    """L(phi rho) - sum_{i in I} (g~_i(phi rho) - phi rho) Re v_i(phi rho).

    Channels with Re v_i below the floor are skipped.
    """
    x = maps.phi(rho)
    out = maps.lindblad(x)
    for i in maps.jump_set:
        num = maps.jump_numerator(i, x)  # = g~_i * Re v_i
        rv = np.real(np.trace(num, axis1=-2, axis2=-1))
        comp = num - rv[..., None, None] * x
        out = out - np.where((rv > maps.tol.intensity_floor)[..., None, None], comp, 0.0)
    return out


def drift_literal(maps: LimitMaps, rho) -> np.ndarray:
    """L(phi rho) - sum_{i in I} g~_i(phi rho) Re v_i(phi rho), the jump target times intensity.

    Only consistent with jumps that *add* g~_i to the state; kept for
    comparison with :func:`drift`.
    """
    x = maps.phi(rho)
    out = maps.lindblad(x)
    for i in maps.jump_set:
        num = maps.jump_numerator(i, x)
        rv = np.real(np.trace(num, axis1=-2, axis2=-1))
        out = out - np.where((rv > maps.tol.intensity_floor)[..., None, None], num, 0.0)
    return out


def diffusion(maps: LimitMaps, rho, gaussians) -> np.ndarray:
    """sum_{i in J u {0}} h_i(phi rho) z_i for standard normals z of shape (..., channels)."""
    x = maps.phi(rho)
    z = np.asarray(gaussians, dtype=float)
    out = np.zeros_like(x)
    for c, i in enumerate(maps.noise_channels):
        out = out + maps.h(i, x) * z[..., c, None, None]
    return out


def euler_step(maps: LimitMaps, rho, dt: float, gaussians) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    return rho + drift(maps, rho) * dt + diffusion(maps, rho, gaussians) * np.sqrt(dt)


@dataclass
class SdePath:
    times: np.ndarray
    states: np.ndarray
    jump_log: list
    counts: np.ndarray
    intensity: np.ndarray
    max_abs_coordinate: float
    seed: int
    index: int


@dataclass
class _Schedule:
    """Candidate jump times of one path and its chronological uniform block."""

    times: np.ndarray
    channels: np.ndarray
    uniforms: np.ndarray


def _schedule(maps: LimitMaps, cfg: SdeConfig, k_bound: float, path_index: int) -> _Schedule:
    rng = path_rng(cfg.seed, path_index, SDE_STREAM)
    times, chans = [], []
    for i in maps.jump_set:
        count = rng.poisson(k_bound * cfg.horizon) if k_bound > 0 else 0
        times.append(rng.random(count) * cfg.horizon)
        chans.append(np.full(count, i, dtype=np.int64))
    times = np.concatenate(times) if times else np.zeros(0)
    chans = np.concatenate(chans) if chans else np.zeros(0, dtype=np.int64)
    order = np.argsort(times, kind="stable")
    times, chans = times[order], chans[order]
    c = len(maps.noise_channels)
    need = cfg.steps * c + len(times) * (c + 1)
    return _Schedule(times, chans, rng.random(need))


class _Batch:
    """Vectorised integration of a batch of paths sharing one configuration."""

    def __init__(self, maps: LimitMaps, cfg: SdeConfig, k_bound: float, indices, keep_log: bool):
        self.maps, self.cfg, self.k_bound = maps, cfg, k_bound
        self.indices = np.asarray(indices)
        self.keep_log = keep_log
        self.scheds = [_schedule(maps, cfg, k_bound, int(j)) for j in self.indices]
        b = len(self.indices)
        width = max(len(s.uniforms) for s in self.scheds)
        self.u = np.zeros((b, max(width, 1)))
        for r, s in enumerate(self.scheds):
            self.u[r, :len(s.uniforms)] = s.uniforms
        self.ptr = np.zeros(b, dtype=np.int64)
        self.c = len(maps.noise_channels)
        self.jump_pos = {ch: q for q, ch in enumerate(maps.jump_set)}
        self.counts = np.zeros((b, len(maps.jump_set)), dtype=np.int64)
        self.intensity = np.zeros((b, len(maps.jump_set)))
        self.max_abs = np.zeros(b)
        self.logs = [[] for _ in range(b)]
        # candidate events grouped by dt interval
        dt = cfg.dt
        ev_rows, ev_int, ev_time, ev_chan = [], [], [], []
        for r, s in enumerate(self.scheds):
            ints = np.minimum(np.floor(s.times / dt).astype(np.int64), cfg.steps - 1)
            ev_rows.append(np.full(len(s.times), r))
            ev_int.append(ints)
            ev_time.append(s.times)
            ev_chan.append(s.channels)
        rows = np.concatenate(ev_rows) if ev_rows else np.zeros(0, dtype=np.int64)
        ints = np.concatenate(ev_int) if ev_int else np.zeros(0, dtype=np.int64)
        self.events: dict[int, list] = {}
        if len(rows):
            tms = np.concatenate(ev_time)
            chs = np.concatenate(ev_chan)
            order = np.lexsort((tms, rows, ints))
            rows, ints, tms, chs = rows[order], ints[order], tms[order], chs[order]
            rank = np.zeros(len(rows), dtype=np.int64)
            for e in range(1, len(rows)):
                if ints[e] == ints[e - 1] and rows[e] == rows[e - 1]:
                    rank[e] = rank[e - 1] + 1
            for e in range(len(rows)):
                self.events.setdefault(int(ints[e]), []).append((int(rank[e]), int(rows[e]), float(tms[e]), int(chs[e])))

    def _take(self, rows: np.ndarray, count: int) -> np.ndarray:
        cols = self.ptr[rows][:, None] + np.arange(count)[None, :]
        vals = self.u[rows[:, None], cols]
        self.ptr[rows] += count
        return vals

    def _substep(self, rho: np.ndarray, rows: np.ndarray, tau: np.ndarray) -> None:
        maps = self.maps
        x = rho[rows]
        z = uniform_to_normal(self._take(rows, self.c)) if self.c else np.zeros((len(rows), 0))
        self.max_abs[rows] = np.maximum(
            self.max_abs[rows], np.max(np.maximum(np.abs(x.real), np.abs(x.imag)), axis=(-2, -1)))
        if maps.jump_set:
            xt = maps.phi(x)
            for ch, q in self.jump_pos.items():
                rv = maps.v(ch, xt)
                self.intensity[rows, q] += np.maximum(rv, 0.0) * tau
        step = drift(maps, x) * tau[:, None, None]
        if self.c:
            step = step + diffusion(maps, x, z) * np.sqrt(tau)[:, None, None]
        rho[rows] = x + step

    def _candidates(self, rho: np.ndarray, t_cur: np.ndarray, events: list) -> None:
        maps = self.maps
        events.sort()
        for rank in sorted({e[0] for e in events}):
            group = [e for e in events if e[0] == rank]
            rows = np.array([e[1] for e in group])
            tms = np.array([e[2] for e in group])
            chans = np.array([e[3] for e in group])
            self._substep(rho, rows, np.maximum(tms - t_cur[rows], 0.0))
            t_cur[rows] = tms
            xi = self.k_bound * self._take(rows, 1)[:, 0]
            for r, t, ch, x in zip(rows, tms, chans, xi):
                pre = maps.phi(rho[r])
                rv = float(maps.v(int(ch), pre))
                if 0.0 < x <= rv:
                    if rv <= maps.tol.intensity_floor:
                        raise ConsistencyError("accepted a jump with intensity below the floor")
                    post = maps.g_tilde(int(ch), pre)
                    if self.keep_log:
                        self.logs[r].append((float(t), int(ch), float(x / self.k_bound), rho[r].copy(), post.copy()))
                    rho[r] = post
                    self.counts[r, self.jump_pos[int(ch)]] += 1

    def run(self, rho0: np.ndarray, rec: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        b, d = len(self.indices), rho0.shape[0]
        rho = np.broadcast_to(rho0, (b, d, d)).astype(complex)
        rec_pos = {int(k): r for r, k in enumerate(rec)}
        out = np.empty((b, len(rec), d, d), dtype=complex)
        out[:, 0] = rho
        all_rows = np.arange(b)
        t_cur = np.zeros(b)
        for j in range(cfg.steps):
            events = self.events.get(j)
            if events:
                self._candidates(rho, t_cur, events)
            t_next = (j + 1) * cfg.dt
            self._substep(rho, all_rows, np.maximum(t_next - t_cur, 0.0))
            t_cur[:] = t_next
            r = rec_pos.get(j + 1)
            if r is not None:
                out[:, r] = rho
        for r, s in enumerate(self.scheds):
            if self.ptr[r] != len(s.uniforms):
                raise ConsistencyError(f"path {self.indices[r]} consumed {self.ptr[r]} of {len(s.uniforms)} uniforms")
        return out


def integrate_path(maps: LimitMaps, rho0, cfg: SdeConfig, path_index: int = 0) -> SdePath:
    """One path with every Euler step recorded and the full jump log."""
    k_bound = cfg.intensity_bound if cfg.intensity_bound is not None else intensity_bound(maps)
    rec = record_steps(cfg.steps, cfg.record_every, cfg.record_times, cfg.dt)
    batch = _Batch(maps, cfg, k_bound, [path_index], keep_log=True)
    states = batch.run(np.asarray(rho0, dtype=complex), rec)
    return SdePath(rec * cfg.dt, states[0], batch.logs[0], batch.counts[0], batch.intensity[0],
                   float(batch.max_abs[0]), cfg.seed, path_index)


def integrate_ensemble(maps: LimitMaps, rho0, cfg: SdeConfig, paths: int | None = None,
                       batch_size: int | None = None, path_offset: int = 0,
                       keep_log: bool = False) -> TrajectoryEnsemble:
    """Independent paths ``path_offset .. path_offset + paths - 1`` on their own substreams."""
    paths = cfg.paths if paths is None else int(paths)
    if paths < 1:
        raise ValueError("need at least one path")
    k_bound = cfg.intensity_bound if cfg.intensity_bound is not None else intensity_bound(maps)
    rec = record_steps(cfg.steps, cfg.record_every, cfg.record_times, cfg.dt)
    rho0 = np.asarray(rho0, dtype=complex)
    d = rho0.shape[0]
    if batch_size is None:
        per_path = cfg.steps * max(1, len(maps.noise_channels)) + 1
        batch_size = int(max(64, min(4096, 2e7 // per_path)))
    states = np.empty((paths, len(rec), d, d), dtype=complex)
    counts = np.zeros((paths, len(maps.jump_set)), dtype=np.int64)
    intensity = np.zeros((paths, len(maps.jump_set)))
    max_abs = np.zeros(paths)
    logs = []
    for start in range(0, paths, batch_size):
        idx = np.arange(start, min(paths, start + batch_size))
        batch = _Batch(maps, cfg, k_bound, idx + path_offset, keep_log)
        states[idx] = batch.run(rho0, rec)
        counts[idx] = batch.counts
        intensity[idx] = batch.intensity
        max_abs[idx] = batch.max_abs
        if keep_log:
            logs.extend(batch.logs)
    meta = {"dt": cfg.dt, "horizon": cfg.horizon, "k_trunc": cfg.k_trunc, "intensity_bound": k_bound,
            "jump_channels": list(maps.jump_set), "noise_channels": list(maps.noise_channels),
            "max_abs_coordinate": max_abs}
    if keep_log:
        meta["jump_log"] = logs
    return TrajectoryEnsemble("continuous", cfg.dt, rec, states, cfg.seed,
                              np.arange(path_offset, path_offset + paths), None, counts, intensity, meta)


def check_intensity_bound(maps: LimitMaps, k_bound: float, samples: int = 10_000, seed: int = 0) -> float:
    """Largest |Re v_i| over random points of the truncated box; must not exceed the bound."""
    rng = np.random.default_rng(seed)
    d, k = maps.dim, maps.k_trunc
    pts = rng.uniform(-k, k, (samples, d, d)) + 1j * rng.uniform(-k, k, (samples, d, d))
    worst = 0.0
    for i in maps.jump_set:
        worst = max(worst, float(np.max(np.abs(maps.v(i, pts)))))
    if worst > k_bound:
        raise ConsistencyError(f"intensity {worst:.3e} exceeds the bound {k_bound:.3e}")
    return worst


def min_eigenvalues(states: np.ndarray) -> np.ndarray:
    herm = 0.5 * (states + dagger(states))
    return np.linalg.eigvalsh(herm)[..., 0]
