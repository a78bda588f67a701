import json

import numpy as np
import pytest
import scipy.stats

from ad1n import (
    ExperimentConfig,
    Regime,
    discrete_vs_continuous_gap,
    experiment_config_from_text,
    run_experiment,
    write_report,
)
from ad1n.errors import ConfigError, RegimeMismatchError
from ad1n.harness import (
    excess_kurtosis,
    ks_two_sample,
    ks_vs_normal,
    parse_config_text,
    skewness,
)

SUB_CFG = """
# reference subcritical point
n = 1
a = 2.0
b = 1.0
m = 1.0
kappa = 0.5
theta = 2.0
rho = 1,0; 0.2,0.9
y0 = 2.0
x0 = 0.25
regime = subcritical
horizons = 40
delta = 0.02
replications = 24
seed = 4242
flavor = exact
"""


class TestStatsHelpers:
    def test_ks_two_sample_matches_scipy(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            x = rng.normal(size=130)
            y = rng.normal(loc=0.3, size=90)
            assert ks_two_sample(x, y) == pytest.approx(
                scipy.stats.ks_2samp(x, y).statistic, abs=1e-12
            )

    def test_ks_vs_normal_matches_scipy(self):
        rng = np.random.default_rng(1)
        x = rng.normal(scale=2.0, size=200)
        got = ks_vs_normal(x, 2.0)
        want = scipy.stats.kstest(x, "norm", args=(0.0, 2.0)).statistic
        assert got == pytest.approx(want, abs=1e-12)

    def test_moment_shape_stats_match_scipy(self):
        rng = np.random.default_rng(2)
        x = rng.gamma(3.0, size=500)
        assert skewness(x) == pytest.approx(scipy.stats.skew(x), abs=1e-12)
        assert excess_kurtosis(x) == pytest.approx(
            scipy.stats.kurtosis(x), abs=1e-12
        )


class TestConfigParsing:
    def test_full_round_trip(self):
        cfg = experiment_config_from_text(SUB_CFG)
        assert cfg.params.n == 1
        assert cfg.params.a == 2.0
        assert cfg.regime == Regime.SUBCRITICAL
        assert cfg.horizons == [40.0]
        assert cfg.delta == 0.02
        assert cfg.replications == 24
        assert cfg.flavor == "exact"
        cfg.validate()

    def test_matrix_parsing(self):
        raw = parse_config_text("rho = 1,0,0; 0.2,0.8,0; -0.1,0.2,0.7")
        assert raw["rho"] == "1,0,0; 0.2,0.8,0; -0.1,0.2,0.7"

    def test_comments_and_blank_lines(self):
        raw = parse_config_text("# full comment\n\na = 1.0  # trailing\n")
        assert raw == {"a": "1.0"}

    def test_missing_model_key(self):
        with pytest.raises(ConfigError):
            experiment_config_from_text("n = 1\na = 1.0\nregime = subcritical\n")

    def test_delta_xor_gamma(self):
        both = SUB_CFG + "gamma = 1.1\n"
        cfg = experiment_config_from_text(both)
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_unknown_regime(self):
        with pytest.raises(ConfigError):
            experiment_config_from_text(SUB_CFG.replace("subcritical", "weird"))

    def test_regime_mismatch(self):
        cfg = experiment_config_from_text(SUB_CFG.replace("regime = subcritical",
                                                          "regime = critical"))
        with pytest.raises(RegimeMismatchError):
            cfg.validate()

    def test_supercritical_power_rule_rejected(self):
        text = """
n = 1
a = 1.0
b = -0.5
m = 0.5
kappa = -0.2
theta = -1.0
rho = 1,0; 0.2,0.9
regime = supercritical
horizons = 10
gamma = 2.5
replications = 4
seed = 1
"""
        cfg = experiment_config_from_text(text)
        with pytest.raises(ConfigError):
            cfg.validate_for_limit_theorem()

    def test_subcritical_small_gamma_rejected_for_clt(self):
        cfg = experiment_config_from_text(
            SUB_CFG.replace("delta = 0.02", "gamma = 0.5")
        )
        with pytest.raises(ConfigError):
            cfg.validate_for_limit_theorem()

    def test_supercritical_sign_hypothesis_enforced(self):
        text = """
n = 1
a = 1.0
b = -0.5
m = 0.5
kappa = 0.2
theta = -1.0
rho = 1,0; 0.2,0.9
regime = supercritical
horizons = 10
delta = 0.01
replications = 4
seed = 1
"""
        # m * kappa > 0 violates the sign condition of the limit law
        cfg = experiment_config_from_text(text)
        with pytest.raises(ConfigError):
            cfg.validate_for_limit_theorem()
        ok = experiment_config_from_text(text.replace("kappa = 0.2",
                                                      "kappa = -0.2"))
        ok.validate_for_limit_theorem()

    def test_supercritical_b_ordering_enforced(self):
        text = """
n = 1
a = 1.0
b = -2.0
m = 0.5
kappa = -0.2
theta = -1.0
rho = 1,0; 0.2,0.9
regime = supercritical
horizons = 10
delta = 0.01
replications = 4
seed = 1
"""
        cfg = experiment_config_from_text(text)
        with pytest.raises(ConfigError):
            cfg.validate_for_limit_theorem()


class TestRunExperiment:
    def test_single_replication_row_and_no_covariance(self):
        cfg = experiment_config_from_text(SUB_CFG.replace("replications = 24",
                                                          "replications = 1"))
        rep = run_experiment(cfg)
        est_rows = [r for r in rep.rows if r.kind == "estimate"]
        assert len(est_rows) == 1
        assert "emp_cov" not in rep.per_horizon[0]

    def test_byte_identical_reruns(self):
        cfg = experiment_config_from_text(SUB_CFG)
        rep1 = run_experiment(cfg, threads=1)
        rep2 = run_experiment(cfg, threads=1)
        assert rep1.csv_text() == rep2.csv_text()
        assert json.dumps(rep1.summary(), sort_keys=True) == json.dumps(
            rep2.summary(), sort_keys=True
        )

    def test_thread_count_does_not_change_output(self):
        cfg = experiment_config_from_text(SUB_CFG)
        rep1 = run_experiment(cfg, threads=1)
        rep4 = run_experiment(cfg, threads=4)
        assert rep1.csv_text() == rep4.csv_text()

    def test_summary_recomputable_from_csv(self):
        cfg = experiment_config_from_text(SUB_CFG)
        rep = run_experiment(cfg)
        lines = rep.csv_text().strip().splitlines()
        header = lines[0].split(",")
        err_cols = [i for i, h in enumerate(header) if h.startswith("err_")]
        E = np.array([
            [float(row.split(",")[i]) for i in err_cols]
            for row in lines[1:]
            if row.startswith("estimate")
        ])
        assert np.allclose(E.mean(axis=0), rep.per_horizon[0]["mean_norm_err"],
                           atol=1e-12)

    def test_report_files(self, tmp_path):
        cfg = experiment_config_from_text(SUB_CFG)
        rep = run_experiment(cfg)
        paths = write_report(rep, str(tmp_path), stem="experiment")
        with open(paths["json"]) as fh:
            summary = json.load(fh)
        assert summary["config_digest"] == cfg.digest()
        with open(paths["csv"]) as fh:
            assert fh.read() == rep.csv_text()

    def test_critical_run_includes_limit_rows(self):
        text = """
n = 1
a = 2.0
b = 0.0
m = 1.0
kappa = 0.0
theta = 0.0
rho = 1,0; 0.2,0.9
y0 = 1.0
x0 = 0.0
regime = critical
horizons = 30
delta = 0.05
replications = 12
seed = 99
flavor = discrete
limit_draws = 10
"""
        rep = run_experiment(experiment_config_from_text(text))
        kinds = {r.kind for r in rep.rows}
        assert kinds == {"estimate", "limit_draw"}
        assert sum(r.kind == "limit_draw" for r in rep.rows) == 10
        assert "ks_vs_limit" in rep.per_horizon[0]


class TestGapExperiment:
    def test_identical_flavors_give_zero(self):
        # when both sides use the same flavor the gap vanishes identically
        from ad1n import estimate_path, simulate_path, substream

        cfg = experiment_config_from_text(SUB_CFG)
        path = simulate_path(cfg.params, 25.0, 0.05, seed=substream(1, 0))
        d1 = estimate_path(path, "discrete")
        d2 = estimate_path(path, "discrete")
        assert np.max(np.abs(d1.tau_hat - d2.tau_hat)) == 0.0

    def test_gap_requires_gamma(self):
        cfg = experiment_config_from_text(SUB_CFG)
        with pytest.raises(ConfigError):
            discrete_vs_continuous_gap(cfg)

    def test_gap_report_fields(self):
        cfg = experiment_config_from_text(
            SUB_CFG.replace("delta = 0.02", "gamma = 1.1")
            .replace("horizons = 40", "horizons = 16,32")
            .replace("replications = 24", "replications = 20")
        )
        rep = discrete_vs_continuous_gap(cfg)
        assert len(rep.medians) == 2
        assert len(rep.ratios) == 1
        assert rep.csv_text().startswith("horizon,rep,aborted,gap")
