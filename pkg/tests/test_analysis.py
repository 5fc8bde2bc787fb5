import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from spikebench.analysis import (
    BOUND_CONVENTION,
    E_SOP_JOULES,
    BoundInputs,
    compression_ratio,
    components_for_threshold,
    compute_bounds,
    design_rule_T,
    effective_dimension,
    energy_estimate,
    estimate_lipschitz,
    fit_scaling_law,
    input_dependent_bound,
    lower_bound_spikes,
    pca_spectrum,
    randomized_svd_values,
)
from spikebench.attention import float_attention_oracle
from spikebench.core import make_rng
from spikebench.errors import DegenerateInputError, DomainError

# reference error-vs-spikes curve
REFERENCE_POINTS = [(1e3, 1.02), (2e3, 0.73), (5e3, 0.47), (1e4, 0.32),
               (2e4, 0.23), (5e4, 0.14), (1e5, 0.10), (2e5, 0.07)]


# --- bounds --------------------------------------------------------------------

def test_lower_bound_examples():
    assert lower_bound_spikes(BoundInputs(1.0, 1, 1, 1 - 1e-12)) == 1
    assert lower_bound_spikes(BoundInputs(1.0, 16, 32, 0.1)) == 51_200
    assert lower_bound_spikes(BoundInputs(1.0, 1, 512, 0.1)) == 51_200


@pytest.mark.parametrize("eps", [0.0, 1.0, -0.1, 1.5])
def test_bound_eps_domain(eps):
    with pytest.raises(DomainError, match="eps"):
        BoundInputs(1.0, 4, 4, eps)


def test_bound_other_domains():
    with pytest.raises(DomainError):
        BoundInputs(0.0, 4, 4, 0.1)
    with pytest.raises(DomainError):
        BoundInputs(1.0, 0, 4, 0.1)
    with pytest.raises(DomainError):
        BoundInputs(1.0, 2, 2, 0.1, d_eff=5)
    with pytest.raises(DomainError):
        input_dependent_bound(BoundInputs(1.0, 2, 2, 0.1))


@settings(max_examples=60)
@given(st.floats(0.1, 30), st.integers(1, 64), st.integers(1, 64), st.floats(0.01, 0.9))
def test_halving_eps_quadruples(lf, n, d, eps):
    a = lower_bound_spikes(BoundInputs(lf, n, d, eps))
    b = lower_bound_spikes(BoundInputs(lf, n, d, eps / 2))
    exact = lf**2 * n * d / eps**2
    assert b == pytest.approx(4 * exact, abs=1.0 + 1e-9 * b)
    assert abs(b - 4 * a) <= 4


@settings(max_examples=60)
@given(st.floats(0.1, 30), st.integers(1, 64), st.integers(1, 64), st.floats(0.01, 0.9), st.floats(0.01, 1.0))
def test_input_dependent_ordering(lf, n, d, eps, frac):
    d_eff = max(1e-3, frac * n * d)
    inp = BoundInputs(lf, n, d, eps, d_eff)
    assert input_dependent_bound(inp) <= lower_bound_spikes(inp)


def test_input_dependent_collapse_and_ratio():
    inp = BoundInputs(2.0, 16, 32, 0.05, d_eff=512)
    assert input_dependent_bound(inp) == lower_bound_spikes(inp)
    inp = BoundInputs(1.0, 16, 32, 0.125, d_eff=8)
    assert input_dependent_bound(inp) / lower_bound_spikes(inp) == 8 / 512


def test_compression_ratios():
    assert compression_ratio(3072, 47) == 3072 / 47
    assert round(compression_ratio(3072, 47)) == 65
    assert compression_ratio(150_528, 89) == 150_528 / 89
    assert round(compression_ratio(150_528, 89)) == 1691


def test_energy():
    assert E_SOP_JOULES == 0.2e-12
    assert energy_estimate(0) == 0.0
    assert energy_estimate(1e6) == pytest.approx(0.2e-6, rel=1e-15)
    assert energy_estimate(2e9) == pytest.approx(0.4e-3, rel=1e-15)
    assert energy_estimate(3e6, 1e-12) == 3 * energy_estimate(1e6, 1e-12)
    with pytest.raises(DomainError):
        energy_estimate(-1)
    with pytest.raises(DomainError):
        energy_estimate(1, -1e-12)


def test_design_rule():
    assert design_rule_T(1, 1 - 1e-12, C=1) == 1
    assert design_rule_T(47, 0.1) == math.ceil(2.3 * 47 / 0.01)
    with pytest.raises(DomainError):
        design_rule_T(0.5, 0.1)
    with pytest.raises(DomainError):
        design_rule_T(4, 0.1, C=0)


@settings(max_examples=40)
@given(st.floats(1, 100), st.floats(0.01, 0.9), st.floats(0.1, 5), st.floats(1.0, 2.0))
def test_design_rule_monotone(d_eff, eps, C, k):
    base = design_rule_T(d_eff, eps, C)
    assert design_rule_T(d_eff * k, eps, C) >= base
    assert design_rule_T(d_eff, eps, C * k) >= base
    assert design_rule_T(d_eff, min(0.99, eps * k), C) <= base


def test_compute_bounds_report():
    rep = compute_bounds(BoundInputs(1.0, 16, 32, 0.1, d_eff=47))
    assert rep.worst_case_spikes == 51_200
    assert rep.input_dependent_spikes == 4700
    assert rep.energy_joules == rep.worst_case_spikes * E_SOP_JOULES
    assert rep.input_dependent_energy_joules == 4700 * E_SOP_JOULES
    assert rep.recommended_T == design_rule_T(47, 0.1)
    assert rep.constant_C == 2.3 and rep.constant_C_ci == (1.9, 2.7)
    d = rep.to_dict()
    assert d["convention"] == BOUND_CONVENTION and d["units"]["energy_joules"] == "J"


# --- effective dimension ----------------------------------------------------------

@pytest.mark.parametrize("k", [3, 5, 20])
def test_effdim_rank_k_exact(k):
    data = oracles.rank_k_data(400, 64, k, seed=k)
    rep = effective_dimension(data, threshold=1 - 1e-6, seed=1)
    assert rep.d_eff_samples == [k] * 5 and rep.d_eff_std == 0.0 and rep.d_eff_full == k


def test_effdim_rank5_with_noise():
    data = oracles.rank_k_data(1000, 64, 5, seed=0, noise=math.sqrt(5 / 64 / 100))
    rep = effective_dimension(data, seed=0)
    assert rep.d_eff_samples == [5] * 5
    assert oracles.d_eff_svd(data, 0.95) == 5


def test_effdim_matches_svd_oracle():
    rng = np.random.default_rng(5)
    data = rng.standard_normal((300, 40)) * np.linspace(3, 0.1, 40)
    for th in (0.5, 0.8, 0.95, 0.99):
        rep = effective_dimension(data, threshold=th, subsamples=1, fraction=1.0)
        assert rep.d_eff_full == oracles.d_eff_svd(data, th)


def test_effdim_spectrum_invariants():
    data = np.random.default_rng(1).standard_normal((50, 80))  # wide: Gram path
    sp, total, method = pca_spectrum(data)
    assert method == "exact"
    assert np.all(np.diff(sp) <= 1e-10)
    assert sp.sum() == pytest.approx(total, rel=1e-10)
    rep = effective_dimension(data)
    assert 1 <= rep.d_eff_mean <= rep.ambient_dim


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_effdim_threshold_monotone(seed):
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((60, 12)) * rng.uniform(0.1, 3, 12)
    prev = 0
    for th in (0.5, 0.7, 0.9, 0.95, 0.99):
        k = effective_dimension(data, threshold=th, subsamples=2, seed=seed).d_eff_mean
        assert k >= prev
        prev = k


def test_effdim_inclusive_threshold():
    assert components_for_threshold(np.array([1.0, 1.0, 1.0, 1.0]), 4.0, 0.5) == 2


def test_effdim_constant_data_degenerate():
    with pytest.raises(DegenerateInputError):
        effective_dimension(np.ones((10, 3)))


def test_effdim_domain():
    with pytest.raises(DomainError):
        effective_dimension(np.ones((1, 3)))
    with pytest.raises(DomainError):
        effective_dimension(np.eye(3), threshold=1.5)
    with pytest.raises(DomainError):
        effective_dimension(np.eye(3), fraction=0)


def test_effdim_reproducible():
    data = np.random.default_rng(2).standard_normal((100, 10))
    a = effective_dimension(data, seed=4).to_dict()
    b = effective_dimension(data, seed=4).to_dict()
    assert a == b


def test_randomized_svd_accuracy_on_low_rank():
    data = oracles.rank_k_data(300, 200, 7, seed=3)
    s = randomized_svd_values(data - data.mean(0), 7, make_rng(0))
    exact = np.linalg.svd(data - data.mean(0), compute_uv=False)[:7]
    assert np.allclose(s, exact, rtol=1e-8)


def test_effdim_randomized_path(monkeypatch):
    import spikebench.analysis as an

    monkeypatch.setattr(an, "EXACT_PCA_MAX_FEATURES", 32)
    data = oracles.rank_k_data(200, 100, 6, seed=9)
    rep = effective_dimension(data, threshold=1 - 1e-6, seed=0)
    assert rep.method == "randomized" and rep.d_eff_samples == [6] * 5


# --- Lipschitz --------------------------------------------------------------------

def _cube(shape):
    return lambda rng: rng.random(shape)


def test_lipschitz_linear_maps():
    assert estimate_lipschitz(lambda x: 3 * x, _cube((2, 3)), 5) == pytest.approx(3.0)
    ident = estimate_lipschitz(lambda x: x, _cube(4), 50)
    assert ident == pytest.approx(1.0)


def test_lipschitz_never_exceeds_true_constant():
    A = np.random.default_rng(0).normal(size=(3, 3))
    L = np.linalg.norm(A, 2)
    est = estimate_lipschitz(lambda x: A @ x, _cube(3), 500)
    assert est <= L * (1 + 1e-12)


def test_lipschitz_nested_seeds_nondecreasing():
    f = lambda x: np.tanh(3 * x)  # noqa: E731
    vals = [estimate_lipschitz(f, _cube(3), p, seed=2) for p in (1, 10, 100)]
    assert vals == sorted(vals)


def test_lipschitz_coincident_pairs():
    with pytest.raises(DegenerateInputError):
        estimate_lipschitz(lambda x: x, lambda rng: np.zeros(2), 10)
    with pytest.raises(DomainError):
        estimate_lipschitz(lambda x: x, _cube(2), 0)


def test_lipschitz_attention_stable_across_seeds():
    vals = [estimate_lipschitz(float_attention_oracle, _cube((4, 8)), 10_000, seed=s) for s in range(10)]
    assert all(math.isfinite(v) and v > 0 for v in vals)
    assert max(vals) <= 1.1 * np.median(vals) and min(vals) >= 0.9 * np.median(vals)


# --- scaling law -------------------------------------------------------------------

def test_fit_exact_power_law():
    pts = [(N, N ** -0.5) for N in np.geomspace(1e2, 1e6, 8)]
    f = fit_scaling_law(pts)
    assert f.slope == pytest.approx(-0.5, abs=1e-12)
    assert f.r_squared == pytest.approx(1.0, abs=1e-12)
    assert f.n_points == 8
    assert f.predict(1e4) == pytest.approx(1e-2)


def test_fit_two_points():
    assert fit_scaling_law([(10, 3.0), (100, 0.1)]).r_squared == 1.0


def test_fit_matches_closed_form_oracle():
    rng = np.random.default_rng(0)
    pts = [(x, x ** -0.7 * rng.uniform(0.8, 1.2)) for x in np.geomspace(10, 1e5, 12)]
    f = fit_scaling_law(pts)
    s, i, r2 = oracles.ols_loglog(pts)
    assert (f.slope, f.intercept, f.r_squared) == pytest.approx((s, i, r2), abs=1e-10)


@pytest.mark.parametrize("slope", [-0.25, -0.5, -1.0])
def test_fit_recovers_planted_slopes(slope):
    Ns = np.geomspace(1e2, 1e6, 10)
    assert fit_scaling_law([(N, 2 * N**slope) for N in Ns]).slope == pytest.approx(slope, abs=1e-12)
    rng = np.random.default_rng(int(-slope * 100))
    noisy = [(N, 2 * N**slope * (1 + 0.05 * rng.standard_normal())) for N in Ns]
    assert abs(fit_scaling_law(noisy).slope - slope) <= 0.05


def test_fit_reference_points():
    f = fit_scaling_law(REFERENCE_POINTS)
    assert abs(f.slope + 0.50) <= 0.03 and f.r_squared >= 0.99


@pytest.mark.parametrize("pts", [[(1, 1)], [(1, 0), (2, 1)], [(-1, 1), (2, 1)], [(5, 1), (5, 2)]])
def test_fit_domain(pts):
    with pytest.raises(DomainError):
        fit_scaling_law(pts)
