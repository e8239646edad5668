"""Decomposition identity tests.

Everything in this module certifies *exact* float-level identities on
finite samples: the fit-error split, the third-order expansion of the
residual-kernel bump, the reconstruction of the density estimate from
its expansion sums, and the agreement of scalar (exact-summation) and
vector (sparse-matrix) paths.  No asymptotics are involved; tolerances
are a few units of float roundoff.
"""

import csv
import math

import numpy as np
import pytest

from resdens.data import Dataset, trim_region
from resdens.decomposition import (
    auxiliary_stats,
    bias_component,
    bias_mean,
    bias_split,
    conditional_error_moment,
    conditional_expansion_sums,
    decomposition_terms,
    dump_diagnostics,
    expansion_sums,
    frozen_design,
    noise_component,
    remainder_integral,
    taylor_terms,
)
from resdens.density import kde
from resdens.errors import AllTrimmed, ConfigError, DegenerateDenominator
from resdens.kernels import univariate_kernel
from resdens.simulate import default_dgp, error_stream, generate_sample
from resdens.smoothing import fit_residuals

B0 = 0.15
N = 150
SEED = 17


@pytest.fixture(scope="module")
def case():
    dgp = default_dgp()
    data = generate_sample(dgp, N, seed=SEED)
    fit = fit_residuals(data, B0, dgp.trim)
    terms = decomposition_terms(data, B0, dgp.trim)
    return dgp, data, fit, terms


def test_scalar_and_vector_paths_agree(case):
    dgp, data, fit, terms = case
    for i in range(data.n):
        if terms.kept[i]:
            assert bias_component(data, B0, i, dgp.trim) == pytest.approx(
                terms.beta[i], abs=1e-13
            )
            assert noise_component(data, B0, i, dgp.trim) == pytest.approx(
                terms.sigma[i], abs=1e-13
            )
        elif not dgp.trim.contains(data.X[i]):
            assert bias_component(data, B0, i, dgp.trim) == 0.0
            assert terms.beta[i] == 0.0 and terms.sigma[i] == 0.0


def test_fit_error_split_identity(case):
    _, data, fit, terms = case
    target = np.where(fit.kept, fit.m_hat - data.true_m, 0.0)
    assert np.max(np.abs(terms.fit_error - target)) < 1e-12
    assert terms.sup_abs_bias == np.abs(terms.beta[terms.kept]).max()
    assert np.array_equal(terms.kept, fit.kept)
    assert terms.g_hat == pytest.approx(fit.g_hat, abs=1e-15)


@pytest.mark.parametrize("e,b1", [(0.0, 0.3), (0.25, 0.08), (-0.4, 0.5)])
def test_taylor_expansion_is_an_identity(case, e, b1):
    _, data, fit, _ = case
    q = univariate_kernel()
    checked = 0
    for i in np.flatnonzero(fit.kept):
        tt = taylor_terms(data, fit, e, b1, i)
        lhs = q.eval(0, (fit.residual[i] - e) / b1)
        rhs = (
            q.eval(0, tt.center)
            - (tt.shift / b1) * q.eval(1, tt.center)
            + tt.curvature / (2.0 * b1**2)
            - tt.remainder / (2.0 * b1**3)
        )
        assert lhs == pytest.approx(rhs, abs=2e-10)
        checked += 1
    assert checked > 50


def test_taylor_terms_zero_off_kept(case):
    _, data, fit, _ = case
    i = int(np.flatnonzero(~fit.kept)[0])
    tt = taylor_terms(data, fit, 0.1, 0.2, i)
    assert not tt.kept
    assert tt.shift == tt.curvature == tt.remainder == 0.0


def test_remainder_integral_matches_dense_riemann():
    q = univariate_kernel()
    rule = np.linspace(0.0, 1.0, 2_000_001)
    mid = (rule[:-1] + rule[1:]) / 2.0
    for a, h in [(0.3, 2.0), (-0.9, -1.7), (0.0, 0.4), (1.2, 0.5), (0.5, 3.1)]:
        exact = remainder_integral(q, a, h)
        riemann = np.mean((1.0 - mid) ** 2 * q.eval(3, a - mid * h))
        assert exact == pytest.approx(riemann, abs=5e-8)


def test_remainder_integral_zero_shift_limit():
    q = univariate_kernel()
    for a in (-0.8, 0.0, 0.33, 0.99):
        assert remainder_integral(q, a, 0.0) == pytest.approx(
            q.eval(3, a) / 3.0, rel=1e-12, abs=1e-12
        )


@pytest.mark.parametrize("e,b1", [(0.0, 0.3), (0.25, 0.08), (0.7, 0.6)])
def test_expansion_sums_reconstruct_the_density(case, e, b1):
    _, data, fit, terms = case
    sums = expansion_sums(data, fit, terms, e, b1)
    direct = kde(fit.residual[fit.kept], b1, grid=np.array([e])).values[0]
    assert sums.reconstruct() == pytest.approx(direct, rel=1e-11, abs=1e-13)
    assert sums.n_kept == fit.n_kept


def test_bias_mean_closed_form_for_quadratic_uniform():
    """Quadratic surface + flat design: the population bias numerator is
    exactly b0^2 * (second moment of the regression kernel) = b0^2 / 44
    in one dimension and twice that in two."""
    dgp = default_dgp()
    for b0 in (0.2, 0.05):
        assert bias_mean(dgp, b0, [0.5]) == pytest.approx(b0**2 / 44.0, rel=1e-9)
    dgp2 = default_dgp(d=2)
    assert bias_mean(dgp2, 0.1, [0.5, 0.4]) == pytest.approx(0.01 / 22.0, rel=1e-9)


def test_bias_mean_checks_point_dimension():
    with pytest.raises(ConfigError):
        bias_mean(default_dgp(), 0.1, [0.5, 0.5])


def test_bias_split_reassembles_beta(case):
    dgp, data, fit, terms = case
    n = data.n
    for i in np.flatnonzero(terms.kept)[:10]:
        split = bias_split(data, dgp, B0, int(i))
        rebuilt = ((n - 1) / n) * (split.mean + split.fluctuation) / terms.g_hat[i]
        assert rebuilt == pytest.approx(terms.beta[i], rel=1e-10, abs=1e-14)


def test_auxiliary_stats_against_brute_loops():
    dgp = default_dgp()
    data = generate_sample(dgp, 40, seed=5)
    b0 = 0.3
    aux = auxiliary_stats(data, b0, dgp.trim)
    from resdens.kernels import product_kernel

    k0 = product_kernel(dim=1)
    scale = data.n * b0
    for i in range(data.n):
        w = [
            k0.eval((data.X[j] - data.X[i]) / b0)
            for j in range(data.n)
            if j != i
        ]
        w = [v for v in w if v != 0.0]
        assert aux.g_hat[i] == pytest.approx(math.fsum(w) / scale, rel=1e-12, abs=1e-15)
        assert aux.g_tilde[i] == pytest.approx(
            math.fsum(v * v for v in w) / scale, rel=1e-12, abs=1e-15
        )
        assert aux.g_quartic[i] == pytest.approx(
            math.fsum(v**4 for v in w) / scale, rel=1e-12, abs=1e-15
        )
        cross = math.fsum(
            u * v for a_, u in enumerate(w) for b_, v in enumerate(w) if a_ != b_
        )
        assert aux.g_cross[i] == pytest.approx(cross / scale**2, rel=1e-10, abs=1e-13)
    assert aux.scale == scale and aux.n == data.n


def test_auxiliary_summaries_match_their_definitions(case):
    dgp, data, _, terms = case
    aux = auxiliary_stats(data, B0, dgp.trim)
    kept = aux.kept
    expected = float(np.sum(aux.g_tilde[kept] / aux.g_hat[kept] ** 2)) / aux.n
    assert aux.ratio_average(2) == pytest.approx(expected, rel=1e-14)
    beta = terms.beta
    stat = (
        beta[kept] ** 2
        + np.abs(beta[kept]) / (aux.scale * aux.g_hat[kept])
        + aux.g_tilde[kept] / (aux.scale * aux.g_hat[kept] ** 2)
    )
    assert aux.envelope_statistic(beta) == pytest.approx(float(stat.max()), rel=1e-14)


# --- conditional Monte Carlo matches the direct per-replication path --------


def replication_dataset(dgp, design, seed, r):
    eps = dgp.f.sample(error_stream(seed, r), design.n)
    return Dataset(X=design.X, Y=design.m + eps, true_m=design.m, true_eps=eps)


def test_frozen_design_matches_direct_decomposition():
    dgp = default_dgp()
    design = frozen_design(dgp, N, B0, seed=SEED)
    data0 = generate_sample(dgp, N, seed=SEED, replication=0)
    assert np.array_equal(design.X, data0.X)
    terms0 = decomposition_terms(data0, B0, dgp.trim)
    assert np.array_equal(design.kept, terms0.kept)
    assert np.max(np.abs(design.beta - terms0.beta)) < 1e-14


def test_conditional_moment_matches_per_replication_decomposition():
    dgp = default_dgp()
    design = frozen_design(dgp, N, B0, seed=SEED)
    R = 4
    manual = np.zeros((design.n, R))
    for r in range(R):
        data_r = replication_dataset(dgp, design, SEED, r)
        manual[:, r] = decomposition_terms(data_r, B0, dgp.trim).fit_error
    est = conditional_error_moment(design, dgp, order=2, replications=R, seed=SEED)
    expected = np.mean(manual**2, axis=1)
    expected[~design.kept] = 0.0
    assert est.per_point == pytest.approx(expected, rel=1e-10, abs=1e-15)
    assert est.sup == pytest.approx(float(expected[design.kept].max()), rel=1e-12)
    assert est.order == 2 and est.replications == R


def test_conditional_moment_rejects_odd_orders():
    dgp = default_dgp()
    design = frozen_design(dgp, 60, B0, seed=3)
    for order in (0, 3, -2):
        with pytest.raises(ConfigError):
            conditional_error_moment(design, dgp, order, replications=2, seed=3)


def test_conditional_expansion_sums_match_direct_path():
    dgp = default_dgp()
    design = frozen_design(dgp, N, B0, seed=SEED)
    e, b1, R = 0.25, 0.3, 3
    paths = conditional_expansion_sums(design, dgp, e, b1, replications=R, seed=SEED)
    for r in range(R):
        data_r = replication_dataset(dgp, design, SEED, r)
        fit_r = fit_residuals(data_r, B0, dgp.trim)
        terms_r = decomposition_terms(data_r, B0, dgp.trim)
        sums_r = expansion_sums(data_r, fit_r, terms_r, e, b1)
        assert paths.s_beta[r] == pytest.approx(sums_r.s_beta, rel=1e-10, abs=1e-12)
        assert paths.s_sigma[r] == pytest.approx(sums_r.s_sigma, rel=1e-10, abs=1e-12)
        assert paths.s_zeta[r] == pytest.approx(sums_r.s_zeta, rel=1e-10, abs=1e-12)
        # the remainder sum uses a fixed composite rule, not the exact
        # kink-split: agreement is to the rule's ~1e-6 relative error
        assert paths.s_r[r] == pytest.approx(sums_r.s_r, rel=5e-3, abs=1e-8)
    assert paths.n_kept == int(np.count_nonzero(design.kept))


def test_conditional_expansion_sums_chunking_is_invisible():
    dgp = default_dgp()
    design = frozen_design(dgp, 80, B0, seed=7)
    kw = dict(e=0.1, b1=0.25, replications=5, seed=7)
    small = conditional_expansion_sums(design, dgp, chunk=2, **kw)
    large = conditional_expansion_sums(design, dgp, chunk=64, **kw)
    again = conditional_expansion_sums(design, dgp, chunk=64, **kw)
    for name in ("s_beta", "s_sigma", "s_zeta", "s_r"):
        # identical calls are bit-identical; chunk size may reorder the
        # reduction, so across chunkings equality holds to roundoff
        assert np.array_equal(getattr(large, name), getattr(again, name))
        assert getattr(small, name) == pytest.approx(
            getattr(large, name), rel=1e-12, abs=1e-15
        )


# --- degenerate inputs -------------------------------------------------------


def isolated_inside_trim():
    X = np.array([[0.5], [0.8]])
    m = X[:, 0] ** 2
    eps = np.array([0.1, -0.1])
    return Dataset(X=X, Y=m + eps, true_m=m, true_eps=eps)


def test_scalar_components_raise_on_no_neighbors():
    data = isolated_inside_trim()
    trim = trim_region([0.1], [0.9])
    with pytest.raises(DegenerateDenominator):
        bias_component(data, 0.01, 0, trim)
    with pytest.raises(DegenerateDenominator):
        noise_component(data, 0.01, 0, trim)


def test_vector_path_raises_all_trimmed():
    data = isolated_inside_trim()
    with pytest.raises(AllTrimmed):
        decomposition_terms(data, 0.01, trim_region([0.1], [0.9]))


def test_requires_simulation_truth():
    plain = Dataset(X=np.array([[0.4], [0.5]]), Y=np.array([1.0, 2.0]))
    with pytest.raises(ConfigError):
        decomposition_terms(plain, 0.3, trim_region([0.1], [0.9]))


# --- diagnostics export ------------------------------------------------------


def read_diag(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def test_dump_diagnostics_roundtrip(tmp_path, case):
    dgp, data, fit, terms = case
    path = tmp_path / "diag.csv"
    dump_diagnostics(path, data, B0, dgp.trim, e=0.25, b1=0.3)
    rows = read_diag(path)
    assert len(rows) == data.n
    assert set(rows[0]) == {
        "i", "kept", "beta", "sigma", "g_hat", "g_tilde", "curvature", "remainder"
    }
    i = int(np.flatnonzero(fit.kept)[0])
    assert float(rows[i]["beta"]) == terms.beta[i]
    assert int(rows[i]["kept"]) == 1
    tt = taylor_terms(data, fit, 0.25, 0.3, i)
    assert float(rows[i]["curvature"]) == tt.curvature
    assert float(rows[i]["remainder"]) == tt.remainder


def test_dump_diagnostics_without_taylor_columns(tmp_path, case):
    dgp, data, _, _ = case
    path = tmp_path / "diag0.csv"
    dump_diagnostics(path, data, B0, dgp.trim)
    rows = read_diag(path)
    assert set(rows[0]) == {"i", "kept", "beta", "sigma", "g_hat", "g_tilde"}
