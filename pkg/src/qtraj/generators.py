"""Limit generators, the master-equation oracle and discrete-vs-limit comparisons."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg
from scipy import stats

from .discrete import ChainKernel, TrajectoryEnsemble, evaluate_statistic
from .errors import ConfigError
from .interaction import UnitaryFamily
from .limits import LimitCoefficients, LimitMaps, from_coordinates, lindblad_map, to_coordinates
from .linalg import random_state
from .observable import SpectralObservable
from .rng import aux_rng


def _lin(b: np.ndarray, x) -> np.ndarray:
    """Re Tr[b x] over the leading axes of x."""
    return np.real(np.einsum("ab,...ba->...", b, x))


@dataclass(frozen=True)
class TestFunction:
    """Polynomial test function of Re Tr[B rho] with closed-form derivatives.

    kind is ``linear`` (Re Tr[B rho]), ``quadratic`` ((Re Tr[B rho])^2) or
    ``product`` (Re Tr[B1 rho] Re Tr[B2 rho]).
    """

    __test__ = False  # not a pytest class

    kind: str
    b: tuple
    name: str = ""

    def __post_init__(self):
        need = {"linear": 1, "quadratic": 1, "product": 2}
        if self.kind not in need:
            raise ValueError(f"unknown test function kind {self.kind!r}")
        bs = tuple(np.asarray(x, dtype=complex) for x in self.b)
        if len(bs) != need[self.kind]:
            raise ValueError(f"{self.kind} test function takes {need[self.kind]} matrices")
        object.__setattr__(self, "b", bs)

    @classmethod
    def linear(cls, b, name: str = "") -> "TestFunction":
        return cls("linear", (b,), name)

    @classmethod
    def quadratic(cls, b, name: str = "") -> "TestFunction":
        return cls("quadratic", (b,), name)

    @classmethod
    def product(cls, b1, b2, name: str = "") -> "TestFunction":
        return cls("product", (b1, b2), name)

    def __call__(self, rho):
        return self.batch(rho)

    def batch(self, rho):
        if self.kind == "linear":
            return _lin(self.b[0], rho)
        if self.kind == "quadratic":
            return _lin(self.b[0], rho) ** 2
        return _lin(self.b[0], rho) * _lin(self.b[1], rho)

    def df(self, rho, mu):
        if self.kind == "linear":
            return _lin(self.b[0], mu)
        if self.kind == "quadratic":
            return 2.0 * _lin(self.b[0], rho) * _lin(self.b[0], mu)
        b1, b2 = self.b
        return _lin(b1, mu) * _lin(b2, rho) + _lin(b1, rho) * _lin(b2, mu)

    def d2f(self, rho, mu, nu):
        if self.kind == "linear":
            return np.zeros(np.shape(_lin(self.b[0], mu)))
        if self.kind == "quadratic":
            return 2.0 * _lin(self.b[0], mu) * _lin(self.b[0], nu)
        b1, b2 = self.b
        return _lin(b1, mu) * _lin(b2, nu) + _lin(b1, nu) * _lin(b2, mu)


def entry_statistics(dim: int) -> list[TestFunction]:
    """First and second moments of Re (and, off the diagonal, Im) of every upper-triangular entry."""
    out = []
    for a in range(dim):
        for c in range(a, dim):
            e = np.zeros((dim, dim), dtype=complex)
            e[c, a] = 1.0  # Re Tr[E_ca rho] = Re rho_ac
            parts = [("re", e)] if c == a else [("re", e), ("im", -1j * e)]
            for tag, b in parts:
                out.append(TestFunction.linear(b, f"{tag}_rho{a}{c}"))
                out.append(TestFunction.quadratic(b, f"{tag}_rho{a}{c}_sq"))
    return out


def statistics_by_name(dim: int, names) -> list[TestFunction]:
    table = {f.name: f for f in entry_statistics(dim)}
    missing = [x for x in names if x not in table]
    if missing:
        raise KeyError(f"unknown statistics {missing}; known: {sorted(table)}")
    return [table[x] for x in names]


def evaluate_limit_generator(maps: LimitMaps, f: TestFunction, rho) -> np.ndarray:
    """A^J f(rho): drift, diffusion and compensated-jump parts of the limit generator.

    Accepts a single state or a batch; jump channels with v_i <= floor
    contribute nothing.
    """
    rho = np.asarray(rho, dtype=complex)
    out = np.asarray(f.df(rho, maps.lindblad(rho)), dtype=float)
    for i in maps.noise_channels:
        hi = maps.h(i, rho)
        out = out + 0.5 * f.d2f(rho, hi, hi)
    for i in maps.jump_set:
        num = maps.jump_numerator(i, rho)
        v = np.real(np.trace(num, axis1=-2, axis2=-1))
        ok = v > maps.tol.intensity_floor
        if not np.any(ok):
            continue
        gi = num / np.where(ok, v, 1.0)[..., None, None] - rho
        jump = v * (f(rho + gi) - f(rho) - f.df(rho, gi))
        out = out + np.where(ok, jump, 0.0)
    return out


@dataclass
class GeneratorReport:
    """Sampled sup-gap sup_rho |A_n f(rho) - A^J f(rho)| per n and its fitted log-log slope."""

    n_list: list
    functions: list
    gaps: dict
    slopes: dict
    threshold: float
    passed: bool
    n_states: int
    note: str = "sup is a sampled sup over the state sample"

    def to_dict(self) -> dict:
        return asdict(self)


def fit_slope(ns, gaps) -> float:
    ns, gaps = np.asarray(ns, dtype=float), np.asarray(gaps, dtype=float)
    if np.all(gaps < 1e-300):
        return float("-inf")
    return float(np.polyfit(np.log(ns), np.log(np.maximum(gaps, 1e-300)), 1)[0])


def sample_states(seed: int, dim: int, count: int) -> np.ndarray:
    rng = aux_rng(seed, 7)
    return np.array([random_state(rng, dim) for _ in range(count)])


def generator_gap(family: UnitaryFamily, obs: SpectralObservable, maps: LimitMaps, functions,
                  n_list, state_sample: int = 50, seed: int = 0, threshold: float = -0.4,
                  states=None) -> GeneratorReport:
    """Compare A_n and A^J on a random state sample for each n.

    Passes when every function's fitted slope is at most ``threshold`` or its
    gap is already below 1e-9 at every n.
    """
    if isinstance(functions, TestFunction):
        functions = [functions]
    if states is None:
        states = sample_states(seed, maps.dim, state_sample)
    states = np.asarray(states)
    limits = [evaluate_limit_generator(maps, f, states) for f in functions]
    gaps = {f.name or f"f{j}": [] for j, f in enumerate(functions)}
    for n in n_list:
        kernel = ChainKernel(family(int(n)), obs, tol=maps.tol)
        for j, f in enumerate(functions):
            an = kernel.generator(f.batch, states, int(n))
            gaps[f.name or f"f{j}"].append(float(np.max(np.abs(an - limits[j]))))
    slopes, ok = {}, True
    for name, g in gaps.items():
        slopes[name] = fit_slope(n_list, g)
        if not (slopes[name] <= threshold or max(g) < 1e-9):
            ok = False
    return GeneratorReport([int(n) for n in n_list], list(gaps), gaps, slopes, threshold, ok, len(states))


def lindblad_superoperator(coeffs: LimitCoefficients) -> np.ndarray:
    """Real matrix of L acting on the real coordinates of an operator."""
    d = coeffs.dim
    size = 2 * d * d
    cols = []
    for j in range(size):
        e = np.zeros(size)
        e[j] = 1.0
        cols.append(to_coordinates(lindblad_map(coeffs, from_coordinates(e, d))))
    return np.array(cols).T


def master_solution(coeffs: LimitCoefficients, rho0, t: float) -> np.ndarray:
    """exp(t L) rho0, the solution of d mu = L(mu) dt."""
    if t < 0:
        raise ValueError("t must be non-negative")
    s = lindblad_superoperator(coeffs)
    x = scipy.linalg.expm(t * s) @ to_coordinates(np.asarray(rho0, dtype=complex))
    return from_coordinates(x, coeffs.dim)


def finite_difference_check(f: TestFunction, rho, directions, steps=(1e-4, 1e-5),
                            rel_tol: float = 1e-6) -> dict:
    """Central differences of f along each direction (and pair of directions) vs Df, D^2f."""
    rho = np.asarray(rho, dtype=complex)
    rows, worst = [], 0.0
    for a, mu in enumerate(directions):
        for nu in directions[a:]:
            exact_d1 = float(f.df(rho, mu))
            exact_d2 = float(f.d2f(rho, mu, nu))
            sym = abs(float(f.d2f(rho, mu, nu)) - float(f.d2f(rho, nu, mu)))
            for h in steps:
                d1 = (float(f(rho + h * mu)) - float(f(rho - h * mu))) / (2 * h)
                d2 = (float(f(rho + h * mu + h * nu)) - float(f(rho + h * mu - h * nu))
                      - float(f(rho - h * mu + h * nu)) + float(f(rho - h * mu - h * nu))) / (4 * h * h)
                e1 = abs(d1 - exact_d1) / max(1.0, abs(exact_d1))
                e2 = abs(d2 - exact_d2) / max(1.0, abs(exact_d2))
                worst = max(worst, e1, e2)
                rows.append({"step": h, "df_exact": exact_d1, "df_numeric": d1, "d2f_exact": exact_d2,
                             "d2f_numeric": d2, "d2f_symmetry": sym})
    return {"rows": rows, "max_relative_error": worst, "passed": worst <= rel_tol}


def ks_distance(x, y) -> float:
    return float(stats.ks_2samp(np.asarray(x), np.asarray(y), method="asymp").statistic)


def ks_bootstrap_threshold(values, n_other: int, seed: int, splits: int = 200,
                           quantile: float = 0.99) -> float:
    """KS pass threshold from random same-law splits of ``values``.

    The split distances are rescaled from the split sample sizes to a
    comparison of ``len(values)`` against ``n_other`` samples.
    """
    values = np.asarray(values)
    m = len(values)
    h1 = m // 2
    h2 = m - h1
    rng = aux_rng(seed, 11)
    dists = []
    for _ in range(splits):
        perm = rng.permutation(m)
        dists.append(ks_distance(values[perm[:h1]], values[perm[h1:]]))
    scale = np.sqrt((m + n_other) / (m * n_other)) / np.sqrt((h1 + h2) / (h1 * h2))
    return float(np.quantile(dists, quantile) * scale)


@dataclass
class ConvergenceReport:
    checks: list = field(default_factory=list)
    passed: bool = True

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": self.checks}

    def render(self) -> str:
        lines = []
        for c in self.checks:
            flag = "PASS" if c["passed"] else "FAIL"
            lines.append(f"[{flag}] t={c['t']:g} {c['statistic']}: gaps={_fmt(c['gaps'])} "
                         f"budget={c['budget']:.3e} ks={c['ks']:.3e}/{c['ks_threshold']:.3e}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def _fmt(xs) -> str:
    return "[" + ", ".join(f"{x:.2e}" for x in xs) + "]"


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    m = len(values)
    return float(np.mean(values)), (float(np.std(values, ddof=1) / np.sqrt(m)) if m > 1 else 0.0)


def convergence_test(discrete_ensembles: dict, sde_ensemble: TrajectoryEnsemble, times, statistics,
                     sde_companion: TrajectoryEnsemble | None = None, seed: int = 0,
                     sigmas: float = 4.0, ks_statistics=None) -> ConvergenceReport:
    """Finite-time comparison of discrete ensembles (keyed by n) against an SDE ensemble.

    For every (t, f): the gap |E_n f - E_sde f| per n and whether it decreases
    in n; agreement at the largest n within ``sigmas`` combined standard
    errors plus the measured discretization biases (discrete: Richardson over
    the two largest n; SDE: the difference to ``sde_companion``, a run with step
    r * dt, divided by |r - 1|, as for a weak first-order scheme); and the
    KS distance of f(rho_t) at the largest n against a same-law bootstrap
    threshold from the SDE ensemble.
    """
    ns = sorted(discrete_ensembles)
    dims = {discrete_ensembles[n].states.shape[-1] for n in ns} | {sde_ensemble.states.shape[-1]}
    if len(dims) != 1:
        raise ConfigError("ensembles were produced for different system dimensions")
    ks_names = None if ks_statistics is None else set(ks_statistics)
    report = ConvergenceReport()
    for t in times:
        sde_states = sde_ensemble.states_at(t)
        for f in statistics:
            name = getattr(f, "name", "") or repr(f)
            s_vals = evaluate_statistic(f, sde_states)
            s_mean, s_se = _mean_se(s_vals)
            means, ses, gaps = [], [], []
            for n in ns:
                vals = evaluate_statistic(f, discrete_ensembles[n].states_at(t))
                m, se = _mean_se(vals)
                means.append(m)
                ses.append(se)
                gaps.append(abs(m - s_mean))
            monotone = all(b < a or (a == 0.0 and b == 0.0) for a, b in zip(gaps, gaps[1:]))
            disc_bias = 0.0
            if len(ns) >= 2:
                a, b = ns[-2], ns[-1]
                disc_bias = abs(means[-2] - means[-1]) * a / (b - a)
            sde_bias = 0.0
            if sde_companion is not None:
                ratio = sde_companion.step_size / sde_ensemble.step_size
                c_mean, _ = _mean_se(evaluate_statistic(f, sde_companion.states_at(t)))
                sde_bias = abs(s_mean - c_mean) / abs(ratio - 1.0)
            budget = sigmas * float(np.hypot(ses[-1], s_se)) + disc_bias + sde_bias
            agree = gaps[-1] <= budget
            d_vals = evaluate_statistic(f, discrete_ensembles[ns[-1]].states_at(t))
            ks = ks_distance(d_vals, s_vals)
            ks_thr = ks_bootstrap_threshold(s_vals, len(d_vals), seed)
            ks_ok = ks <= ks_thr or ks == 0.0
            use_ks = ks_names is None or name in ks_names
            ok = monotone and agree and (ks_ok or not use_ks)
            report.checks.append({
                "t": float(t), "statistic": name, "n": [int(n) for n in ns], "discrete_mean": means,
                "discrete_se": ses, "sde_mean": s_mean, "sde_se": s_se, "gaps": gaps,
                "monotone": monotone, "discrete_bias": disc_bias, "sde_bias": sde_bias,
                "budget": budget, "agree": agree, "ks": ks, "ks_threshold": ks_thr,
                "ks_passed": ks_ok, "ks_checked": use_ks, "passed": ok,
            })
            report.passed &= ok
    return report
