"""Metropolis and exact tree samplers, Ward estimation, diagnostics."""

import math
import warnings

import numpy as np
import pytest
from scipy import stats

from vrjplab.density import DensityModel, UField, log_density
from vrjplab.graphs import build_box_2d, cycle_graph, path_graph, star_graph
from vrjplab.sampling import (EdgeIncrementTable, McmcConfig, SiteChain,
                              edge_increment_table, effective_sample_size,
                              sample_field_mcmc, sample_field_tree_exact, split_rhat,
                              ward_estimate, write_samples_csv)


def test_config_validation():
    with pytest.raises(ValueError):
        McmcConfig(proposal_scale=0.0)
    with pytest.raises(ValueError):
        McmcConfig(n_samples=0)
    with pytest.raises(ValueError):
        McmcConfig(burn_in=-1)
    assert McmcConfig(burn_in=0).burn_in == 0


def test_ess_behaviour():
    rng = np.random.default_rng(0)
    iid = rng.standard_normal(4000)
    assert effective_sample_size(iid) > 2000
    slow = np.cumsum(rng.standard_normal(4000)) * 0.02 + rng.standard_normal(4000) * 1e-3
    assert effective_sample_size(slow) < 400
    assert effective_sample_size(iid) <= 4000
    assert effective_sample_size(np.ones(50)) == 50  # constant series: capped at n


def test_split_rhat_behaviour():
    rng = np.random.default_rng(1)
    same = rng.standard_normal((4, 500))
    assert abs(split_rhat(same) - 1.0) < 0.05
    shifted = same + np.arange(4)[:, None] * 2.0
    assert split_rhat(shifted) > 1.2


def test_incremental_ratio_equals_log_density_difference():
    # detailed balance rests on this identity: the chain's acceptance ratio
    # must equal the exact density ratio of the single-site move
    for removed in (None, (1, 0)):
        g = build_box_2d(1, 1.3)
        m = DensityModel(g, removed_vertex=removed)
        chain = SiteChain(m)
        rng = np.random.default_rng(3)
        for _ in range(120):
            site = int(rng.choice(m.free_u))
            delta = float(rng.normal() * 0.8)
            before = UField(g, chain.u[m.free_u])
            lr = chain.log_ratio(site, delta)
            after_vals = chain.u.copy()
            after_vals[site] += delta
            lr_full = log_density(m, UField(g, after_vals[m.free_u])) - log_density(m, before)
            assert lr == pytest.approx(lr_full, abs=1e-9)
            if rng.random() < 0.5:
                chain.apply(site, delta)


def test_mcmc_single_edge_matches_quadrature():
    g = path_graph(2, 1.0)
    m = DensityModel(g)
    tab = edge_increment_table(1.0)
    mean_ref, var_ref = tab.moment(1), tab.moment(2) - tab.moment(1) ** 2
    cfg = McmcConfig(proposal_scale=1.5, burn_in=300, thinning=2, n_samples=4000,
                     n_chains=2, seed=11)
    samples, diag = sample_field_mcmc(m, cfg)
    vals = np.array([s.values[0] for s in samples])
    se_mean = math.sqrt(var_ref / diag.ess.min())
    assert abs(vals.mean() - mean_ref) < 3 * se_mean
    assert abs(vals.var() - var_ref) < 0.1
    assert 0.15 <= diag.acceptance_rate <= 0.6
    assert diag.split_rhat.max() < 1.05


def test_vanishing_proposals_accept_everything():
    g = path_graph(2, 1.0)
    m = DensityModel(g)
    cfg = McmcConfig(proposal_scale=1e-9, burn_in=0, thinning=1, n_samples=200,
                     n_chains=1, seed=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, diag = sample_field_mcmc(m, cfg)
    assert diag.acceptance_rate > 0.999


def test_acceptance_warning_recorded():
    g = path_graph(2, 1.0)
    m = DensityModel(g)
    cfg = McmcConfig(proposal_scale=40.0, burn_in=0, thinning=1, n_samples=300,
                     n_chains=1, seed=0)
    with pytest.warns(UserWarning, match="acceptance"):
        _, diag = sample_field_mcmc(m, cfg)
    assert any("acceptance" in w for w in diag.warnings)


def test_mcmc_determinism():
    g = cycle_graph(3, 1.0)
    m = DensityModel(g)
    cfg = McmcConfig(burn_in=50, thinning=1, n_samples=100, n_chains=2, seed=21)
    s1, _ = sample_field_mcmc(m, cfg)
    s2, _ = sample_field_mcmc(m, cfg)
    assert all(np.array_equal(a.values, b.values) for a, b in zip(s1, s2))


def test_edge_table_truncation_certificate():
    tab = EdgeIncrementTable(0.5)
    assert tab.cdf[0] == 0.0 and tab.cdf[-1] == pytest.approx(1.0)
    assert np.all(np.diff(tab.cdf) >= 0)
    with pytest.raises(ValueError, match="truncation|certify"):
        EdgeIncrementTable(1e-12)


def test_tree_sampler_matches_quadrature_moments():
    g = path_graph(2, 1.0)
    m = DensityModel(g)
    rng = np.random.default_rng(4)
    draws = np.array([sample_field_tree_exact(m, rng).values[0] for _ in range(4000)])
    tab = edge_increment_table(1.0)
    mean_ref, var_ref = tab.moment(1), tab.moment(2) - tab.moment(1) ** 2
    assert abs(draws.mean() - mean_ref) < 3 * math.sqrt(var_ref / draws.size)
    m4 = tab.moment(4)
    se_var = math.sqrt((m4 - var_ref ** 2) / draws.size)
    assert abs(draws.var() - var_ref) < 4 * se_var


def test_tree_sampler_rejects_cycles():
    g = cycle_graph(3, 1.0)
    with pytest.raises(ValueError, match="tree"):
        sample_field_tree_exact(DensityModel(g), np.random.default_rng(0))


def test_tree_sampler_ward_identity_star():
    g = star_graph(5, 1.0)
    m = DensityModel(g)
    rng = np.random.default_rng(5)
    samples = [sample_field_tree_exact(m, rng) for _ in range(5000)]
    for leaf in (1, 3, 5):
        est = ward_estimate(samples, leaf)
        assert abs(est.mean - 1.0) <= 3 * est.std_error


def test_tree_increments_uncorrelated_on_path():
    g = path_graph(4, 1.0)
    m = DensityModel(g)
    rng = np.random.default_rng(6)
    n = 4000
    inc = np.empty((n, 2))
    for i in range(n):
        u = sample_field_tree_exact(m, rng).full()
        inc[i] = (u[1] - u[0], u[3] - u[2])
    corr = np.corrcoef(inc.T)[0, 1]
    assert abs(corr) < 3.0 / math.sqrt(n)


def test_mcmc_matches_tree_sampler_three_path():
    g = path_graph(3, 1.0)
    m = DensityModel(g)
    cfg = McmcConfig(proposal_scale=1.5, burn_in=300, thinning=8, n_samples=3000,
                     n_chains=1, seed=7)
    mcmc, _ = sample_field_mcmc(m, cfg)
    rng = np.random.default_rng(8)
    exact = [sample_field_tree_exact(m, rng) for _ in range(3000)]
    for v in (1, 2):
        a = np.array([s.value(v) for s in mcmc])
        b = np.array([s.value(v) for s in exact])
        assert stats.ks_2samp(a, b).pvalue > 0.01


def test_ward_estimate_degenerate():
    g = path_graph(2, 1.0)
    est = ward_estimate([UField.zeros(g)], 1)
    assert est.mean == 1.0 and est.std_error == 0.0 and not est.reliable


def test_ward_estimate_adjusts_for_autocorrelation():
    g = path_graph(2, 1.0)
    rng = np.random.default_rng(9)
    vals = np.repeat(rng.normal(0, 0.5, 200), 10)  # blocky, strongly correlated
    samples = [UField(g, [v]) for v in vals]
    est = ward_estimate(samples, 1)
    naive = np.exp(vals).std(ddof=1) / math.sqrt(len(vals))
    assert est.std_error > 2 * naive
    assert est.ess < len(vals) / 4


def test_write_samples_csv(tmp_path):
    g = path_graph(3, 1.0)
    samples = [UField(g, [0.1 * i, -0.1 * i]) for i in range(4)]
    path = tmp_path / "samples.csv"
    write_samples_csv(samples, path, chain_length=2)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "chain,iter,vertex,u"
    assert len(lines) == 1 + 4 * 3
    assert lines[1].startswith("0,0,")
    assert lines[-1].startswith("1,1,")


def test_mcmc_ward_identity_five_by_five_box():
    g = build_box_2d(2, 1.0)
    m = DensityModel(g)
    cfg = McmcConfig(proposal_scale=1.5, burn_in=400, thinning=4, n_samples=3000,
                     n_chains=2, seed=14)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")   # short chains trip the split-Rhat alarm
        samples, _ = sample_field_mcmc(m, cfg)
    est = ward_estimate(samples, (0, 1), chain_length=1500)
    assert abs(est.mean - 1.0) <= 3 * est.std_error


def test_diagnostics_json_serializable():
    import json
    g = path_graph(2, 1.0)
    m = DensityModel(g)
    cfg = McmcConfig(burn_in=40, thinning=1, n_samples=60, n_chains=2, seed=1)
    _, diag = sample_field_mcmc(m, cfg)
    doc = json.loads(json.dumps(diag.to_json_dict()))
    assert set(doc) == {"acceptance_rate", "ess", "split_rhat", "n_samples",
                        "n_chains", "proposal_scale", "warnings"}
    assert doc["n_samples"] == 60
