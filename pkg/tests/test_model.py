"""Closed-form statistics against the brute-force PMF oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from photonmem.model import (
    EfficiencyChain,
    ModelParams,
    WriteNoiseLine,
    cauchy_schwarz_parameter,
    conditional_read_mean,
    escape_efficiency,
    excitation_probability,
    g2_conditional_auto,
    g2_cross,
    g2_excitation_conditional,
    g2_unconditional,
    joint_pgf_eval,
    joint_pmf,
    mean_counts,
    p0_from_counts,
    retrieval_efficiency_model,
)

K = np.arange(81.0)


def table_moments(params, n_max=80):
    """Factorial moments straight from the truncated PMF table."""
    p = joint_pmf(params, n_max)
    k = np.arange(n_max + 1.0)
    mean_w = p.sum(axis=1) @ k
    mean_r = p.sum(axis=0) @ k
    cross = k @ p @ k
    return p, mean_w, mean_r, cross


def conditional_from_table(params, n_max=80):
    """E(R|W=1) and E(R(R-1)|W=1) from the table row W=1."""
    p = joint_pmf(params, n_max)
    k = np.arange(n_max + 1.0)
    row = p[1]
    norm = row.sum()
    return (row @ k) / norm, (row @ (k * (k - 1.0))) / norm


# ---------------------------------------------------------------------------
# joint PGF


def test_pgf_normalized_at_unity():
    params = ModelParams(0.4, 0.1, 0.2, 0.3, 0.7, g2_bb=1.5)
    assert joint_pgf_eval(params, 1.0, 1.0) == pytest.approx(1.0, abs=1e-15)


def test_pgf_vacuum():
    params = ModelParams(0.0, 0.0, 0.0, 0.5, 0.5)
    assert joint_pgf_eval(params, 0.0, 0.0) == 1.0


def test_pgf_heralding_probability_geometric():
    # P(W=0) of a lossless noiseless pair source: brute-force sum over the
    # geometric pair distribution as the independent check
    mu = 0.5
    params = ModelParams(mu, 0.0, 0.0, 1.0, 1.0)
    got = joint_pgf_eval(params, 0.0, 1.0)
    n = np.arange(200)
    brute = float(((mu**n) / (1 + mu) ** (n + 1.0))[:1].sum())
    assert got == pytest.approx(2.0 / 3.0, rel=1e-12)
    assert got == pytest.approx(brute, rel=1e-12)


def test_pgf_matches_table_on_grid():
    params = ModelParams(0.3, 0.05, 0.02, 0.4, 0.6, g2_aa=1.4, g2_bb=1.8)
    p = joint_pmf(params, 80)
    for s in (0.0, 0.3, 1.0):
        for t in (0.0, 0.7, 1.0):
            table = float((p * np.power(s, K)[:, None] * np.power(t, K)[None, :]).sum())
            assert joint_pgf_eval(params, s, t) == pytest.approx(table, abs=1e-12)


def test_pgf_domain_error():
    params = ModelParams(0.5, 0.0, 0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        joint_pgf_eval(params, 1.2, 0.5)
    with pytest.raises(ValueError):
        joint_pgf_eval(params, 0.5, -0.1)


# ---------------------------------------------------------------------------
# PMF table


def test_pmf_vacuum():
    p = joint_pmf(ModelParams(0.0, 0.0, 0.0, 0.5, 0.5), 3)
    assert p[0, 0] == pytest.approx(1.0)
    assert p.sum() == pytest.approx(1.0)
    assert np.all(p >= 0)


def test_pmf_lossless_pairing():
    # perfect pair correlation: P(n, n) = 2^-(n+1) at mu = 1
    p = joint_pmf(ModelParams(1.0, 0.0, 0.0, 1.0, 1.0), 30)
    for n in range(10):
        assert p[n, n] == pytest.approx(0.5 ** (n + 1), rel=1e-12)
    off = p - np.diag(np.diag(p))
    assert np.abs(off).max() < 1e-15


@pytest.mark.parametrize(
    "params",
    [
        ModelParams(1.0, 1.0, 1.0, 0.9, 0.9),
        ModelParams(1.0, 0.8, 0.8, 0.9, 0.9, g2_aa=2.0, g2_bb=2.0),
        ModelParams(0.5, 0.3, 0.7, 0.5, 0.2, g2_bb=1.5),
        ModelParams(0.02, 1e-4, 5e-3, 0.029, 0.06, g2_bb=1.8),
    ],
)
def test_pmf_normalization_tail(params):
    p = joint_pmf(params, 40)
    assert np.all(p >= 0)
    # sums to 1 minus the truncation tail; tail can round to exactly zero
    assert -1e-14 < 1.0 - p.sum() < 1e-12


def test_pmf_tail_at_thermal_corner():
    # with mu = lambda = 1 and fully thermal noise the true distribution
    # carries ~8e-12 of probability beyond 40 counts; a few more rows
    # bring the truncation below 1e-12
    params = ModelParams(1.0, 1.0, 1.0, 0.9, 0.9, g2_aa=2.0, g2_bb=2.0)
    assert 1.0 - joint_pmf(params, 40).sum() == pytest.approx(8.16e-12, rel=0.05)
    assert 1.0 - joint_pmf(params, 44).sum() < 1e-12


def test_pmf_requires_positive_nmax():
    with pytest.raises(ValueError):
        joint_pmf(ModelParams(0.1, 0.0, 0.0, 0.5, 0.5), 0)


# ---------------------------------------------------------------------------
# means and cross-correlation


def test_mean_counts_noise_only():
    assert mean_counts(ModelParams(0.0, 0.001, 0.002, 0.5, 0.5)) == (0.001, 0.002)


def test_mean_counts_write_efficiency_regime():
    n_w, _ = mean_counts(ModelParams(0.1, 0.0, 0.0, 0.029, 0.06))
    assert n_w == pytest.approx(0.0029, rel=1e-12)


def test_mean_counts_matches_table():
    params = ModelParams(0.05, 0.0, 0.01, 0.029, 0.06)
    _, mean_w, mean_r, _ = table_moments(params, 60)
    assert mean_counts(params) == pytest.approx((mean_w, mean_r), rel=1e-12)
    assert mean_r == pytest.approx(0.013, rel=1e-12)


def test_g2_cross_noiseless_is_two_plus_inverse_mu():
    assert g2_cross(ModelParams(1.0, 0.0, 0.0, 0.3, 0.8)) == pytest.approx(3.0, rel=1e-12)
    assert g2_cross(ModelParams(1e6, 0.0, 0.0, 0.5, 0.5)) == pytest.approx(2.0, rel=1e-5)


def test_g2_cross_paper_regime_is_about_ten():
    value = g2_cross(ModelParams(0.02, 1e-4, 5e-3, 0.029, 0.06, g2_bb=1.8))
    assert value == pytest.approx(9.419354838709676, rel=1e-12)
    assert 8.0 < value < 12.0


def test_g2_cross_eta_invariance_without_noise():
    base = g2_cross(ModelParams(0.37, 0.0, 0.0, 1.0, 1.0))
    for ex, ey in [(0.029, 0.06), (0.5, 0.9), (1e-3, 1.0)]:
        assert g2_cross(ModelParams(0.37, 0.0, 0.0, ex, ey)) == base


def test_g2_cross_matches_table():
    params = ModelParams(0.2, 0.05, 0.01, 0.5, 0.5, g2_aa=1.3, g2_bb=1.9)
    _, mean_w, mean_r, cross = table_moments(params)
    assert g2_cross(params) == pytest.approx(cross / (mean_w * mean_r), rel=1e-10)


def test_g2_cross_undefined_for_dead_channel():
    with pytest.raises(ValueError):
        g2_cross(ModelParams(0.0, 0.0, 0.1, 0.5, 0.5))


@settings(max_examples=60, deadline=None)
@given(
    mu=st.floats(1e-3, 1.0),
    la=st.floats(0, 1.0),
    lb=st.floats(0, 1.0),
    extra=st.floats(1e-6, 0.5),
)
def test_g2_cross_nonincreasing_in_noise(mu, la, lb, extra):
    base = ModelParams(mu, la, lb, 0.3, 0.4)
    assert g2_cross(base) >= 1.0
    assert g2_cross(base.replace(lambda_a=la + extra)) <= g2_cross(base) + 1e-12
    assert g2_cross(base.replace(lambda_b=lb + extra)) <= g2_cross(base) + 1e-12


# ---------------------------------------------------------------------------
# conditional statistics


def test_conditional_mean_lossless_herald():
    assert conditional_read_mean(ModelParams(1.0, 0.0, 0.0, 1.0, 1.0)) == pytest.approx(1.0)


def test_conditional_mean_pure_noise_heralds():
    assert conditional_read_mean(ModelParams(0.0, 0.01, 0.0, 0.5, 0.5)) == 0.0


def test_conditional_mean_degenerate():
    with pytest.raises(ValueError):
        conditional_read_mean(ModelParams(0.0, 0.0, 0.0, 0.5, 0.5))


def test_conditional_mean_against_oracle():
    params = ModelParams(0.05, 0.0005, 0.0, 0.029, 1.0)
    mean_c, _ = conditional_from_table(params)
    got = conditional_read_mean(params)
    # frozen from the truncated-PMF oracle
    assert got == pytest.approx(0.8278287010433957, rel=1e-12)
    assert got == pytest.approx(mean_c, rel=1e-9)


def test_g2_conditional_perfect_herald_antibunches():
    assert g2_conditional_auto(ModelParams(0.5, 0.0, 0.0, 1.0, 0.7)) == 0.0


def test_g2_conditional_calibrated_against_oracle():
    params = ModelParams(0.03, 1e-4, 5e-3, 0.029, 0.06, g2_bb=1.8)
    mean_c, fact2 = conditional_from_table(params)
    got = g2_conditional_auto(params)
    # frozen from the truncated-PMF oracle
    assert got == pytest.approx(0.2614894675808329, rel=1e-12)
    assert got == pytest.approx(fact2 / mean_c**2, rel=1e-9)


def test_g2_conditional_uninformative_herald_goes_thermal():
    params = ModelParams(0.2, 80.0, 0.0, 0.3, 0.5)
    mean_c, fact2 = conditional_from_table(params, n_max=300)
    got = g2_conditional_auto(params)
    assert got == pytest.approx(2.0, abs=1e-3)
    assert got == pytest.approx(fact2 / mean_c**2, rel=1e-8)


def test_g2_conditional_explicit_form_matches_general_route():
    rng = np.random.default_rng(11)
    for _ in range(50):
        mu, la = rng.uniform(1e-3, 1.0), rng.uniform(0, 1.0)
        ex = rng.uniform(1e-2, 1.0)
        params = ModelParams(mu, la, 0.0, ex, 1.0)
        mean_c, fact2 = conditional_from_table(params, n_max=100)
        assert g2_excitation_conditional(mu, ex, la) == pytest.approx(
            fact2 / max(mean_c, 1e-300) ** 2, rel=1e-8, abs=1e-12
        )


def test_retrieval_efficiency_model():
    assert retrieval_efficiency_model(ModelParams(1.0, 0.0, 0.0, 1.0, 0.06)) == pytest.approx(0.06)
    assert retrieval_efficiency_model(ModelParams(0.0, 0.01, 0.0, 0.5, 0.5)) == 0.0


# ---------------------------------------------------------------------------
# unconditional g2 and Cauchy-Schwarz


def test_g2_unconditional_limits():
    assert g2_unconditional(1.0, 0.0, 1.0) == pytest.approx(2.0)
    assert g2_unconditional(0.0, 1.0, 1.0) == pytest.approx(1.0)
    assert g2_unconditional(0.5, 0.5, 2.0) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        g2_unconditional(0.0, 0.0, 1.0)


def test_g2_unconditional_matches_table_marginal():
    params = ModelParams(0.3, 0.08, 0.05, 0.5, 0.4, g2_aa=1.6, g2_bb=1.2)
    p, mean_w, mean_r, _ = table_moments(params)
    k = np.arange(81.0)
    fact2_w = p.sum(axis=1) @ (k * (k - 1.0))
    fact2_r = p.sum(axis=0) @ (k * (k - 1.0))
    got_w = g2_unconditional(params.eta_x * params.mu, params.lambda_a, params.g2_aa)
    got_r = g2_unconditional(params.eta_y * params.mu, params.lambda_b, params.g2_bb)
    assert got_w == pytest.approx(fact2_w / mean_w**2, rel=1e-9)
    assert got_r == pytest.approx(fact2_r / mean_r**2, rel=1e-9)


def test_cauchy_schwarz_parameter():
    assert cauchy_schwarz_parameter(2.0, 2.0, 2.0) == pytest.approx(1.0)
    assert cauchy_schwarz_parameter(3.0, 2.0, 2.0) == pytest.approx(9.0 / 4.0)
    with pytest.raises(ValueError):
        cauchy_schwarz_parameter(2.0, 0.0, 2.0)


@settings(max_examples=60, deadline=None)
@given(g=st.floats(1e-3, 50.0))
def test_cauchy_schwarz_nonclassical_iff_g2_above_two(g):
    assert (cauchy_schwarz_parameter(g, 2.0, 2.0) > 1.0) == (g > 2.0)


# ---------------------------------------------------------------------------
# excitation probability and escape efficiency


def test_excitation_probability():
    assert excitation_probability(1.0) == pytest.approx(0.5)
    assert excitation_probability(0.0) == 0.0


def test_p0_from_counts_matches_exact_at_low_mu():
    approx = p0_from_counts(0.00058, 0.029)
    assert approx == pytest.approx(0.02, rel=1e-12)
    exact = excitation_probability(0.0204)
    assert approx == pytest.approx(exact, rel=2.5e-2)


def test_p0_from_counts_warns_when_noise_dominates():
    with pytest.warns(UserWarning):
        p0_from_counts(0.001, 0.029, lambda_a=0.0005)


def test_escape_efficiency():
    assert escape_efficiency(1.0, 0.3) == pytest.approx(1.0)
    assert escape_efficiency(0.7, 0.0) == pytest.approx(0.7)
    # chain consistent with a 45% escape efficiency
    t = (-0.2 + math.sqrt(0.04 + 4 * 0.36 * 0.45)) / (2 * 0.36)
    assert escape_efficiency(t, 0.8) == pytest.approx(0.45, abs=1e-12)
    with pytest.raises(ValueError):
        escape_efficiency(1.0, 1.0)


def test_efficiency_chain_factorisation():
    t = (-0.2 + math.sqrt(0.04 + 4 * 0.36 * 0.45)) / (2 * 0.36)
    chain = EfficiencyChain(t_cell=t, r_mirror=0.8, eta_d=0.19, eta_r_star=0.70)
    assert chain.eta_esc == pytest.approx(0.45, abs=1e-12)
    assert chain.eta_y == pytest.approx(0.19 * 0.45 * 0.70, rel=1e-12)


# ---------------------------------------------------------------------------
# parameter plumbing


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(-0.1, 0.0, 0.0, 0.5, 0.5)
    with pytest.raises(ValueError):
        ModelParams(0.1, 0.0, 0.0, 1.5, 0.5)
    with pytest.raises(ValueError):
        ModelParams(0.1, 0.0, 0.0, 0.5, 0.5, g2_bb=-1.0)


def test_params_config_round_trip():
    params = ModelParams(0.02, 1e-4, 5e-3, 0.029, 0.06, g2_aa=1.0, g2_bb=1.8)
    text = params.to_config_text()
    assert ModelParams.from_config_text(text) == params


def test_params_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        ModelParams.from_config_text("mu = 0.1\nbogus = 2\n")
    with pytest.raises(ValueError):
        ModelParams.from_config_text("mu = 0.1\n")


def test_write_noise_line():
    line = WriteNoiseLine(offset=5e-5, slope=0.05)
    assert line(0.0) == pytest.approx(5e-5)
    assert line(1e-3) == pytest.approx(1e-4)
    with pytest.raises(ValueError):
        WriteNoiseLine(-1e-3, 0.0)


# ---------------------------------------------------------------------------
# oracle equivalence over random parameter draws (small version of the
# acceptance sweep)


def test_oracle_equivalence_random_draws():
    rng = np.random.default_rng(2024)
    for _ in range(60):
        params = ModelParams(
            mu=rng.uniform(1e-3, 1.0),
            lambda_a=rng.uniform(0.0, 1.0),
            lambda_b=rng.uniform(0.0, 1.0),
            eta_x=rng.uniform(1e-2, 1.0),
            eta_y=rng.uniform(1e-2, 1.0),
            g2_aa=rng.uniform(1.0, 2.0),
            g2_bb=rng.uniform(1.0, 2.5),
        )
        p, mean_w, mean_r, cross = table_moments(params, 80)
        assert mean_counts(params) == pytest.approx((mean_w, mean_r), rel=1e-8)
        assert g2_cross(params) == pytest.approx(cross / (mean_w * mean_r), rel=1e-8)
        y_view = params.replace(eta_y=1.0, lambda_b=0.0)
        mean_c, _ = conditional_from_table(y_view, 100)
        assert conditional_read_mean(params) == pytest.approx(mean_c, rel=1e-8)
        mean_r1, fact2 = conditional_from_table(params, 100)
        assert g2_conditional_auto(params) == pytest.approx(
            fact2 / mean_r1**2, rel=1e-8, abs=1e-10
        )
