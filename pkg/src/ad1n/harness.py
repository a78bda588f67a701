"""Seeded Monte Carlo experiment runner behind the CLI.

An experiment simulates ``replications`` independent paths per horizon,
estimates the drift vector on each, applies the regime's normalization to
the errors and compares the resulting sample against the regime's limit
theory:

subcritical    mean within 3 MC standard errors of zero per coordinate,
               empirical covariance within 20% relative Frobenius distance
               of the sandwich covariance, per-coordinate |skewness| < 0.3
               and |excess kurtosis| < 0.5 (plus per-coordinate KS
               statistics against the sandwich-implied normal marginals,
               reported, not thresholded);
critical       two-sample KS distance below 0.15 between the normalized
               (a, b) errors and draws of the simulated limit functional;
supercritical  median |b_hat - b| decreasing in the horizon and below 0.05
               at the largest one, interquartile range of a_hat - a not
               contracting (ratio within [0.5, 2]), and the exponentially
               scaled Y tail stabilized in at least 95% of paths.

Replication r of horizon index h owns the Philox substream
(seed, h*replications + r); limit-functional draw j owns substream
(seed, len(horizons)*replications + j).  Workers write into per-index
slots, so the merged output is identical for any thread count and reruns
with the same configuration are byte-identical.

Config files are flat ``key = value`` text; '#' starts a comment.  Vectors
are comma lists; matrices are semicolon-separated rows of comma lists.
Keys: n, a, b, m, kappa, theta, rho, y0, x0, regime, horizons, delta or
gamma (step rule delta(T) = T^-gamma), replications, seed, flavor,
fine_delta, limit_draws, horizon (single-path commands).
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .asymptotics import critical_limit_functional, normalizer
from .errors import Ad1nError, ConfigError, RegimeMismatchError
from .estimate import estimate_path
from .model import Classification, ModelParams, Regime, classify, stack_tau, tau_length
from .moments import asymptotic_covariance
from .simulate import simulate_critical_limit, simulate_path, substream

# acceptance thresholds
MEAN_SE_FACTOR = 3.0
FROBENIUS_REL_TOL = 0.20
SKEWNESS_TOL = 0.3
KURTOSIS_TOL = 0.5
CRITICAL_KS_TOL = 0.15
SUPER_B_MEDIAN_TOL = 0.05
SUPER_IQR_RATIO = (0.5, 2.0)
SUPER_STAB_MIN = 0.95
ABORT_RATE_MAX = 0.01
STAB_TAIL_FRACTION = 0.1
STAB_REL_TOL = 0.01


def skewness(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    c = x - x.mean()
    s = math.sqrt(float(np.mean(c * c)))
    return float(np.mean(c**3) / s**3)


def excess_kurtosis(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    c = x - x.mean()
    s2 = float(np.mean(c * c))
    return float(np.mean(c**4) / (s2 * s2) - 3.0)


def ks_two_sample(x: np.ndarray, y: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup |F_x - F_y|."""
    x = np.sort(np.asarray(x, dtype=float))
    y = np.sort(np.asarray(y, dtype=float))
    grid = np.concatenate([x, y])
    fx = np.searchsorted(x, grid, side="right") / x.size
    fy = np.searchsorted(y, grid, side="right") / y.size
    return float(np.max(np.abs(fx - fy)))


def ks_vs_normal(x: np.ndarray, sigma: float) -> float:
    """One-sample KS statistic of x against the N(0, sigma^2) cdf."""
    from scipy.stats import norm

    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    cdf = norm.cdf(x / sigma)
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(0, n) / n
    return float(max(np.max(upper), np.max(lower)))


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return f"{float(v):.17g}"


@dataclass
class ExperimentConfig:
    params: ModelParams
    regime: Regime
    horizons: list
    replications: int
    seed: int
    flavor: str = "discrete"
    delta: Optional[float] = None
    gamma: Optional[float] = None
    fine_delta: float = 1e-3
    limit_draws: Optional[int] = None

    def delta_for(self, T: float) -> float:
        if self.delta is not None:
            return self.delta
        return float(T) ** (-self.gamma)

    def validate(self) -> Classification:
        if (self.delta is None) == (self.gamma is None):
            raise ConfigError("exactly one of delta / gamma must be set")
        if self.flavor not in ("continuous", "discrete", "exact"):
            raise ConfigError(f"unknown flavor {self.flavor!r}")
        if self.replications < 1 or not self.horizons:
            raise ConfigError("need at least one horizon and one replication")
        cls = classify(self.params)
        if cls.regime != self.regime:
            raise RegimeMismatchError(
                f"declared regime {self.regime.value}, classified {cls.regime.value}"
            )
        return cls

    def validate_for_limit_theorem(self) -> Classification:
        """Stricter validation for runs that compare against limit laws.

        The gap study deliberately runs step rules that violate these
        conditions, so they are not part of plain :meth:`validate`.
        """
        cls = self.validate()
        if self.gamma is not None:
            if self.regime == Regime.SUBCRITICAL and self.gamma <= 1.0:
                raise ConfigError(
                    "subcritical limit-theorem runs need gamma > 1 (T*delta -> 0)"
                )
            if self.regime == Regime.SUPERCRITICAL:
                # no power rule can satisfy N*delta^{3/2} -> 0 together with
                # t_N / log(N*delta^{3/2}) -> 0; require an explicit step
                raise ConfigError("supercritical runs require an explicit delta")
        if self.regime == Regime.SUPERCRITICAL:
            # the supercritical limit law needs lam_max(theta) < b < 0 and
            # the sign condition mt_i * kt_i <= 0 in diagonalizing coords
            from .moments import TildeFrame

            lam_max = float(cls.eig_theta[-1])
            if not (lam_max < self.params.b < 0):
                raise ConfigError(
                    "supercritical runs need lam_max(theta) < b < 0"
                )
            frame = TildeFrame.from_params(self.params)
            if np.any(frame.m_t * frame.kappa_t > 1e-12):
                raise ConfigError(
                    "supercritical runs need elementwise nonpositive products "
                    "of the transformed level and coupling vectors"
                )
        return cls

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.params.digest().encode())
        payload = (
            self.regime.value,
            tuple(float(T) for T in self.horizons),
            self.replications,
            self.seed,
            self.flavor,
            self.delta,
            self.gamma,
            self.fine_delta,
            self.limit_draws,
        )
        h.update(repr(payload).encode())
        return h.hexdigest()


@dataclass
class Row:
    kind: str  # "estimate" or "limit_draw"
    horizon: Optional[float]
    rep: int
    aborted: bool
    stabilized: bool
    tau: Optional[np.ndarray]
    err: Optional[np.ndarray]


@dataclass
class ExperimentReport:
    config_digest: str
    regime: str
    flavor: str
    seed: int
    replications: int
    horizons: list
    deltas: list
    truth: np.ndarray
    rows: list
    per_horizon: list
    checks: dict
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def csv_text(self) -> str:
        L = self.truth.shape[0]
        header = (
            ["kind", "horizon", "rep", "aborted", "stabilized"]
            + [f"tau_{i}" for i in range(L)]
            + [f"err_{i}" for i in range(L)]
        )
        lines = [",".join(header)]
        nanrow = [float("nan")] * L
        for r in self.rows:
            tau = nanrow if r.tau is None else r.tau
            err = nanrow if r.err is None else r.err
            vals = (
                [r.kind, _fmt(r.horizon), str(r.rep), _fmt(r.aborted), _fmt(r.stabilized)]
                + [_fmt(v) for v in tau]
                + [_fmt(v) for v in err]
            )
            lines.append(",".join(vals))
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        csv_hash = hashlib.sha256(self.csv_text().encode()).hexdigest()
        return {
            "package_version": __version__,
            "config_digest": self.config_digest,
            "regime": self.regime,
            "flavor": self.flavor,
            "seed": self.seed,
            "replications": self.replications,
            "horizons": [float(T) for T in self.horizons],
            "deltas": [float(d) for d in self.deltas],
            "truth_tau": [float(v) for v in self.truth],
            "per_horizon": self.per_horizon,
            "checks": {k: bool(v) for k, v in self.checks.items()},
            "passed": self.passed,
            "csv_sha256": csv_hash,
            **self.extra,
        }


def _map_indexed(fn, n_items: int, threads: int):
    """Run fn(i) for i in range(n_items), results merged in index order."""
    if threads == 1 or n_items <= 1:
        return [fn(i) for i in range(n_items)]
    workers = threads if threads > 0 else (os.cpu_count() or 1)
    out = [None] * n_items
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(fn, i): i for i in range(n_items)}
        for fut in concurrent.futures.as_completed(futures):
            out[futures[fut]] = fut.result()
    return out


def _y_tail_stabilized(path, b: float) -> bool:
    k0 = int(math.floor((1.0 - STAB_TAIL_FRACTION) * path.n_steps))
    w = np.exp(b * path.times[k0:]) * path.Y[k0:]
    return bool(abs(w[-1] - w[0]) / max(abs(w[-1]), 1e-300) <= STAB_REL_TOL)


def run_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    """Simulate, estimate and compare against the regime's limit theory.

    Deterministic given the configuration (including the master seed),
    independently of ``threads``.
    """
    cls = config.validate_for_limit_theorem()
    params = config.params
    truth = stack_tau(params)
    L = tau_length(params.n)
    M = config.replications
    b = float(params.b)
    rows: list[Row] = []
    per_horizon = []
    checks: dict[str, bool] = {}
    deltas = [config.delta_for(T) for T in config.horizons]
    is_super = config.regime == Regime.SUPERCRITICAL

    limit_sample = None
    if config.regime == Regime.CRITICAL:
        n_draws = config.limit_draws or M
        base = len(config.horizons) * M

        def one_draw(j):
            s = simulate_critical_limit(
                params, seed=substream(config.seed, base + j), fine_delta=config.fine_delta
            )
            return critical_limit_functional(s, params.a, params.m).limit_draw()

        limit_sample = np.array(_map_indexed(one_draw, n_draws, threads))

    sandwich = None
    if config.regime == Regime.SUBCRITICAL:
        sandwich = asymptotic_covariance(params).sandwich

    for h_idx, T in enumerate(config.horizons):
        delta = deltas[h_idx]
        norm = normalizer(cls, T, params)

        def one_rep(r, _T=T, _delta=delta, _h=h_idx, _norm=norm):
            try:
                path = simulate_path(
                    params, _T, _delta, seed=substream(config.seed, _h * M + r)
                )
                est = estimate_path(path, config.flavor)
                stab = _y_tail_stabilized(path, b) if is_super else True
                return est.tau_hat, _norm.apply(est.tau_hat - truth), stab, False
            except Ad1nError:
                return None, None, False, True

        results = _map_indexed(one_rep, M, threads)
        errs = []
        for r, (tau, err, stab, aborted) in enumerate(results):
            rows.append(Row("estimate", float(T), r, aborted, stab, tau, err))
            if not aborted:
                errs.append((err, stab, tau))
        E = np.array([e for e, _, _ in errs])
        n_ok = len(errs)
        n_abort = M - n_ok
        summary = {
            "horizon": float(T),
            "delta": float(delta),
            "aborted": n_abort,
            "abort_rate": n_abort / M,
        }
        if config.regime == Regime.SUBCRITICAL and n_ok > 1:
            mean = E.mean(axis=0)
            se = E.std(axis=0, ddof=1) / math.sqrt(n_ok)
            emp_cov = np.cov(E.T)
            frob_gap = float(
                np.linalg.norm(emp_cov - sandwich, "fro") / np.linalg.norm(sandwich, "fro")
            )
            skews = [skewness(E[:, i]) for i in range(L)]
            kurts = [excess_kurtosis(E[:, i]) for i in range(L)]
            ks = [
                ks_vs_normal(E[:, i], math.sqrt(sandwich[i, i])) for i in range(L)
            ]
            summary.update(
                mean_norm_err=[float(v) for v in mean],
                se_norm_err=[float(v) for v in se],
                emp_cov=[[float(v) for v in row] for row in emp_cov],
                sandwich=[[float(v) for v in row] for row in sandwich],
                frobenius_rel_gap=frob_gap,
                skewness=skews,
                excess_kurtosis=kurts,
                ks_vs_sandwich_normal=ks,
            )
            tag = f"T={T:g}"
            checks[f"mean_within_3se[{tag}]"] = bool(
                np.all(np.abs(mean) <= MEAN_SE_FACTOR * se)
            )
            checks[f"cov_frobenius<={FROBENIUS_REL_TOL:g}[{tag}]"] = frob_gap <= FROBENIUS_REL_TOL
            checks[f"skewness<{SKEWNESS_TOL:g}[{tag}]"] = bool(
                np.all(np.abs(skews) < SKEWNESS_TOL)
            )
            checks[f"kurtosis<{KURTOSIS_TOL:g}[{tag}]"] = bool(
                np.all(np.abs(kurts) < KURTOSIS_TOL)
            )
        elif config.regime == Regime.CRITICAL and n_ok > 1:
            ks = [
                ks_two_sample(E[:, i], limit_sample[:, i]) for i in range(L)
            ]
            summary.update(ks_vs_limit=[float(v) for v in ks])
            tag = f"T={T:g}"
            checks[f"ks_a<{CRITICAL_KS_TOL:g}[{tag}]"] = ks[0] < CRITICAL_KS_TOL
            checks[f"ks_Tb<{CRITICAL_KS_TOL:g}[{tag}]"] = ks[1] < CRITICAL_KS_TOL
        elif is_super and n_ok > 1:
            taus = np.array([t for _, _, t in errs])
            b_err = np.abs(taus[:, 1] - truth[1])
            # the raw a error diverges like e^{|b|T/2}/T (a_hat is not even
            # weakly consistent); its normalized version T e^{bT/2}(a - a^)
            # converges, so the non-contraction check uses E[:, 0]
            q75, q25 = np.percentile(E[:, 0], [75, 25])
            stab_rate = float(np.mean([s for _, s, _ in errs]))
            summary.update(
                median_abs_b_err=float(np.median(b_err)),
                iqr_a_err=float(q75 - q25),
                stabilization_rate=stab_rate,
            )
        per_horizon.append(summary)
        checks[f"abort_rate<{ABORT_RATE_MAX:g}[T={T:g}]"] = (n_abort / M) < ABORT_RATE_MAX

    if is_super and len(per_horizon) > 1:
        med = [s["median_abs_b_err"] for s in per_horizon]
        iqr = [s["iqr_a_err"] for s in per_horizon]
        checks["median_b_err_decreasing"] = all(
            med[i + 1] < med[i] for i in range(len(med) - 1)
        )
        checks[f"median_b_err_final<{SUPER_B_MEDIAN_TOL:g}"] = med[-1] < SUPER_B_MEDIAN_TOL
        ratio = iqr[-1] / iqr[0]
        checks["iqr_a_not_contracting"] = SUPER_IQR_RATIO[0] <= ratio <= SUPER_IQR_RATIO[1]
        checks[f"stabilization>={SUPER_STAB_MIN:g}"] = (
            per_horizon[-1]["stabilization_rate"] >= SUPER_STAB_MIN
        )

    if limit_sample is not None:
        for j in range(limit_sample.shape[0]):
            rows.append(Row("limit_draw", None, j, False, True, None, limit_sample[j]))

    return ExperimentReport(
        config_digest=config.digest(),
        regime=config.regime.value,
        flavor=config.flavor,
        seed=config.seed,
        replications=M,
        horizons=list(config.horizons),
        deltas=deltas,
        truth=truth,
        rows=rows,
        per_horizon=per_horizon,
        checks=checks,
    )


@dataclass
class GapReport:
    config_digest: str
    seed: int
    gamma: float
    horizons: list
    deltas: list
    medians: list
    ratios: list  # consecutive median ratios median[i+1]/median[i]
    decreasing: bool  # strictly decreasing medians
    rows: list  # (horizon, rep, aborted, gap)

    def csv_text(self) -> str:
        lines = ["horizon,rep,aborted,gap"]
        for T, r, aborted, gap in self.rows:
            lines.append(f"{_fmt(T)},{r},{_fmt(aborted)},{_fmt(gap)}")
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "package_version": __version__,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "gamma": self.gamma,
            "horizons": [float(T) for T in self.horizons],
            "deltas": [float(d) for d in self.deltas],
            "median_gap": [float(v) for v in self.medians],
            "median_ratios": [float(v) for v in self.ratios],
            "decreasing": self.decreasing,
            "csv_sha256": hashlib.sha256(self.csv_text().encode()).hexdigest(),
        }


def discrete_vs_continuous_gap(config: ExperimentConfig, threads: int = 1) -> GapReport:
    """Median sqrt(t_N) * max-abs gap between the discrete estimate and the
    exact-conditional (one-step inverse) estimate on the same paths."""
    if config.gamma is None:
        raise ConfigError("gap experiment needs the step rule delta(T) = T^-gamma")
    config.validate()
    params = config.params
    M = config.replications
    rows = []
    medians = []
    deltas = [config.delta_for(T) for T in config.horizons]
    for h_idx, T in enumerate(config.horizons):
        delta = deltas[h_idx]

        def one_rep(r, _T=T, _delta=delta, _h=h_idx):
            try:
                path = simulate_path(
                    params, _T, _delta, seed=substream(config.seed, _h * M + r)
                )
                disc = estimate_path(path, "discrete")
                exact = estimate_path(path, "exact")
                t_n = path.n_steps * path.delta
                return (
                    math.sqrt(t_n) * float(np.max(np.abs(disc.tau_hat - exact.tau_hat))),
                    False,
                )
            except Ad1nError:
                return float("nan"), True

        results = _map_indexed(one_rep, M, threads)
        gaps = [g for g, aborted in results if not aborted]
        for r, (g, aborted) in enumerate(results):
            rows.append((float(T), r, aborted, g))
        medians.append(float(np.median(gaps)))
    ratios = [medians[i + 1] / medians[i] for i in range(len(medians) - 1)]
    decreasing = all(r < 1.0 for r in ratios)
    return GapReport(
        config_digest=config.digest(),
        seed=config.seed,
        gamma=float(config.gamma),
        horizons=list(config.horizons),
        deltas=deltas,
        medians=medians,
        ratios=ratios,
        decreasing=decreasing,
        rows=rows,
    )


# ---------------------------------------------------------------------------
# config file parsing

_MODEL_KEYS = ("n", "a", "b", "m", "kappa", "theta", "rho", "y0", "x0")


def _parse_vector(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",") if v.strip() != ""])


def _parse_matrix(text: str) -> np.ndarray:
    rows = [r for r in text.split(";") if r.strip() != ""]
    return np.array([[float(v) for v in r.split(",")] for r in rows])


def parse_config_text(text: str) -> dict:
    """Flat key = value lines into a raw string dict."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def params_from_config(raw: dict) -> ModelParams:
    missing = [k for k in ("n", "a", "b", "m", "kappa", "theta", "rho") if k not in raw]
    if missing:
        raise ConfigError(f"config lacks model keys: {', '.join(missing)}")
    n = int(raw["n"])
    return ModelParams(
        n=n,
        a=float(raw["a"]),
        b=float(raw["b"]),
        m=_parse_vector(raw["m"]),
        kappa=_parse_vector(raw["kappa"]),
        theta=_parse_matrix(raw["theta"]),
        rho=_parse_matrix(raw["rho"]),
        y0=float(raw.get("y0", 1.0)),
        x0=_parse_vector(raw["x0"]) if "x0" in raw else 0.0,
    )


def experiment_config_from_text(text: str) -> ExperimentConfig:
    raw = parse_config_text(text)
    params = params_from_config(raw)
    if "regime" not in raw:
        raise ConfigError("config lacks a declared regime")
    try:
        regime = Regime(raw["regime"].lower())
    except ValueError as exc:
        raise ConfigError(f"unknown regime {raw['regime']!r}") from exc
    if "horizons" not in raw:
        raise ConfigError("config lacks horizons")
    return ExperimentConfig(
        params=params,
        regime=regime,
        horizons=[float(v) for v in _parse_vector(raw["horizons"])],
        replications=int(raw.get("replications", 100)),
        seed=int(raw.get("seed", 0)),
        flavor=raw.get("flavor", "discrete"),
        delta=float(raw["delta"]) if "delta" in raw else None,
        gamma=float(raw["gamma"]) if "gamma" in raw else None,
        fine_delta=float(raw.get("fine_delta", 1e-3)),
        limit_draws=int(raw["limit_draws"]) if "limit_draws" in raw else None,
    )


def load_experiment_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return experiment_config_from_text(fh.read())


def write_report(report, out_dir: str, stem: str = "experiment") -> dict:
    """Write the per-replication CSV and the JSON summary; returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    json_path = os.path.join(out_dir, f"{stem}.json")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(report.csv_text())
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"csv": csv_path, "json": json_path}
