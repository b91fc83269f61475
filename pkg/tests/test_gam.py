"""Penalized additive fitting against dense linear-algebra oracles."""

import numpy as np
import pytest
from scipy.linalg import block_diag

from streamgamm.basis import SmoothSpec
from streamgamm.errors import DataError
from streamgamm.gam import (
    GamFit,
    fit_penalized,
    select_lambdas,
    smooth_se,
    stepwise_select,
)
from streamgamm.ingest import GRID_STEP_S, AlignedFrame


def _frame(response, covariates, valid=None):
    n = response.size
    grid = 1_600_000_000 + GRID_STEP_S * np.arange(n, dtype=np.int64)
    if valid is None:
        valid = np.ones(n, dtype=bool)
    return AlignedFrame(
        grid=grid,
        response=response,
        covariates=covariates,
        valid=valid,
        gaps=[],
        time_origin=int(grid[0]),
    )


def _dense_oracle(frame, specs, lambdas):
    """Fit the same penalized least-squares problem by brute force.

    Rebuilds the full design (intercept plus every basis block), adds the
    block-diagonal penalty, and solves the normal equations with plain
    numpy.  Returns fitted values, coefficient vector, rss, and per-term
    edf from the trace of the influence blocks.
    """
    from streamgamm.basis import tprs_basis

    valid = frame.valid
    y = frame.response[valid]
    n = y.size
    blocks, penalties, widths = [], [], []
    for s in specs:
        b = tprs_basis(frame.covariates[s.covariate][valid], s)
        blocks.append(b.design_block)
        penalties.append(lambdas[s.covariate] * b.penalty)
        widths.append(b.n_coef)
    design = np.hstack([np.ones((n, 1))] + blocks)
    pen = block_diag(np.zeros((1, 1)), *penalties)
    a = design.T @ design + pen
    coef = np.linalg.solve(a, design.T @ y)
    fitted = design @ coef
    rss = float(np.sum((y - fitted) ** 2))
    influence = np.linalg.solve(a, design.T @ design)
    edfs = {}
    offset = 1
    for s, w in zip(specs, widths):
        edfs[s.covariate] = float(np.trace(influence[offset : offset + w, offset : offset + w]))
        offset += w
    return fitted, coef, rss, edfs


def test_penalized_fit_matches_dense_normal_equations():
    rng = np.random.default_rng(101)
    for trial in range(5):
        n = int(rng.integers(80, 201))
        x1 = rng.normal(size=n)
        x2 = rng.uniform(-2.0, 2.0, size=n)
        y = 3.0 + np.sin(x1) + 0.5 * x2**2 + rng.normal(0.0, 0.3, size=n)
        frame = _frame(y, {"x1": x1, "x2": x2})
        specs = [SmoothSpec("x1", basis_dim=6), SmoothSpec("x2", basis_dim=5)]
        lam = {"x1": float(rng.uniform(0.1, 10.0)), "x2": float(rng.uniform(0.1, 10.0))}
        fit = fit_penalized(frame, specs, lam)
        fitted, coef, rss, edfs = _dense_oracle(frame, specs, lam)

        np.testing.assert_allclose(fit.fitted, fitted, rtol=0, atol=1e-8)
        assert fit.rss == pytest.approx(rss, rel=1e-8)
        assert fit.intercept == pytest.approx(float(coef[0]), abs=1e-8)
        got = np.concatenate([t.coefs for t in fit.terms])
        np.testing.assert_allclose(got, coef[1:], atol=1e-8)
        for t in fit.terms:
            assert t.edf == pytest.approx(edfs[t.name], abs=1e-8)
        assert fit.total_edf == pytest.approx(1.0 + sum(edfs.values()), abs=1e-8)


def test_coef_covariance_matches_dense_inverse():
    rng = np.random.default_rng(103)
    n = 150
    x = rng.normal(size=n)
    y = np.cos(x) + rng.normal(0.0, 0.2, size=n)
    frame = _frame(y, {"x": x})
    spec = SmoothSpec("x", basis_dim=7)
    fit = fit_penalized(frame, [spec], 2.0)

    from streamgamm.basis import tprs_basis

    b = tprs_basis(x, spec)
    a = b.design_block.T @ b.design_block + 2.0 * b.penalty
    want = fit.sigma2 * np.linalg.inv(a)
    np.testing.assert_allclose(fit.coef_covariance[1:, 1:], want, rtol=1e-8, atol=1e-12)
    assert fit.coef_covariance[0, 0] == pytest.approx(fit.sigma2 / n, rel=1e-12)


def test_penalized_normal_equation_identity():
    # First-order conditions: X'(y - fitted) equals the penalty gradient
    # at the solution, and residuals sum to zero through the intercept.
    rng = np.random.default_rng(107)
    n = 120
    x = rng.normal(size=n)
    y = np.sin(2.0 * x) + rng.normal(0.0, 0.2, size=n)
    frame = _frame(y, {"x": x})
    fit = fit_penalized(frame, [SmoothSpec("x", basis_dim=8)], 1.5)
    t = fit.terms[0]
    resid = fit.residuals
    lhs = t.basis.design_block.T @ resid
    rhs = 1.5 * (t.basis.penalty @ t.coefs)
    np.testing.assert_allclose(lhs, rhs, atol=1e-8)
    assert float(resid.sum()) == pytest.approx(0.0, abs=1e-8)


def test_aic_and_deviance_identities():
    rng = np.random.default_rng(109)
    n = 200
    x = rng.normal(size=n)
    y = np.tanh(x) + rng.normal(0.0, 0.4, size=n)
    frame = _frame(y, {"x": x})
    fit = fit_penalized(frame, ["x"], 1.0)
    assert fit.sigma2 == pytest.approx(fit.rss / fit.n, rel=1e-12)
    assert fit.aic == pytest.approx(
        fit.n * np.log(fit.rss / fit.n) + 2.0 * fit.total_edf, rel=1e-12
    )
    assert fit.deviance_explained == pytest.approx(1.0 - fit.rss / fit.tss, rel=1e-12)
    assert 0.0 <= fit.deviance_explained <= 1.0


def test_huge_lambda_collapses_to_straight_line():
    rng = np.random.default_rng(113)
    n = 300
    x = rng.uniform(-3.0, 3.0, size=n)
    y = np.sin(2.0 * x) + rng.normal(0.0, 0.1, size=n)
    frame = _frame(y, {"x": x})
    fit = fit_penalized(frame, ["x"], 1e12)
    # Only the unpenalized linear direction survives.
    assert fit.terms[0].edf == pytest.approx(1.0, abs=1e-3)
    grid = np.linspace(x.min(), x.max(), 50)
    _, est, _ = smooth_se(fit, "x", x_grid=grid)
    second_diff = np.diff(est, n=2)
    np.testing.assert_allclose(second_diff, 0.0, atol=1e-6)


def test_zero_lambda_uses_all_degrees_of_freedom():
    rng = np.random.default_rng(127)
    n = 250
    x = rng.normal(size=n)
    y = np.sin(x) + rng.normal(0.0, 0.3, size=n)
    frame = _frame(y, {"x": x})
    spec = SmoothSpec("x", basis_dim=7)
    free = fit_penalized(frame, [spec], 0.0)
    assert free.terms[0].edf == pytest.approx(spec.basis_dim - 1, abs=1e-6)
    for lam in (0.5, 5.0, 50.0):
        assert fit_penalized(frame, [spec], lam).rss >= free.rss


def test_shift_of_covariate_leaves_fit_unchanged():
    # Standardization absorbs location shifts, so the fit is identical.
    rng = np.random.default_rng(131)
    n = 180
    x = rng.normal(size=n)
    y = np.sin(x) + rng.normal(0.0, 0.2, size=n)
    f0 = fit_penalized(_frame(y, {"x": x}), ["x"], 3.0)
    f1 = fit_penalized(_frame(y, {"x": x + 250.0}), ["x"], 3.0)
    np.testing.assert_allclose(f1.fitted, f0.fitted, atol=1e-9)
    assert f1.rss == pytest.approx(f0.rss, rel=1e-12)
    assert f1.terms[0].edf == pytest.approx(f0.terms[0].edf, abs=1e-9)


def test_gcv_selection_certificate():
    # The returned smoothing vector must score at least as well as every
    # probe the optimizer evaluated on the way.
    rng = np.random.default_rng(137)
    n = 400
    x1 = rng.normal(size=n)
    x2 = rng.normal(size=n)
    y = np.sin(1.5 * x1) + 0.3 * x2 + rng.normal(0.0, 0.3, size=n)
    frame = _frame(y, {"x1": x1, "x2": x2})
    lam, fit = select_lambdas(frame, ["x1", "x2"])
    assert set(lam) == {"x1", "x2"}
    assert all(v >= 0.0 for v in lam.values())
    assert fit.gcv_probes, "selector must record its probes"
    best_probe = min(score for _, score in fit.gcv_probes)
    assert fit.gcv <= best_probe * (1.0 + 1e-9)
    assert fit.converged


def test_gcv_tracks_signal_roughness():
    # A wiggly signal needs more degrees of freedom than a linear one.
    rng = np.random.default_rng(139)
    n = 500
    x = rng.uniform(-3.0, 3.0, size=n)
    wiggly = np.sin(3.0 * x) + rng.normal(0.0, 0.2, size=n)
    linear = 0.8 * x + rng.normal(0.0, 0.2, size=n)
    _, f_wiggly = select_lambdas(_frame(wiggly, {"x": x}), [SmoothSpec("x", basis_dim=10)])
    _, f_linear = select_lambdas(_frame(linear, {"x": x}), [SmoothSpec("x", basis_dim=10)])
    assert f_wiggly.terms[0].edf > f_linear.terms[0].edf + 2.0
    # GCV is allowed to keep a little slack beyond the linear truth, but
    # nowhere near the roughness it grants the wiggly signal.
    assert f_linear.terms[0].edf < 3.0
    assert f_wiggly.terms[0].edf > 6.0


def test_stepwise_keeps_signal_drops_noise():
    rng = np.random.default_rng(149)
    n = 2000
    x1 = rng.normal(size=n)
    z1 = rng.normal(size=n)
    z2 = rng.normal(size=n)
    y = 2.0 + np.sin(1.5 * x1) + rng.normal(0.0, 0.3, size=n)
    frame = _frame(y, {"x1": x1, "z1": z1, "z2": z2})
    fit = stepwise_select(frame, ["x1", "z1", "z2"])
    assert fit.term_names == ["x1"]


def test_stepwise_on_pure_noise_keeps_intercept_only():
    rng = np.random.default_rng(151)
    n = 1500
    frame = _frame(
        rng.normal(0.0, 1.0, size=n),
        {"a": rng.normal(size=n), "b": rng.normal(size=n)},
    )
    fit = stepwise_select(frame, ["a", "b"])
    assert fit.term_names == []
    assert isinstance(fit, GamFit)
    np.testing.assert_allclose(fit.fitted, np.full(n, fit.intercept), atol=1e-12)
    assert fit.total_edf == pytest.approx(1.0)


def test_masked_rows_are_excluded_from_fit():
    rng = np.random.default_rng(157)
    n = 300
    x = rng.normal(size=n)
    y = np.sin(x) + rng.normal(0.0, 0.2, size=n)
    valid = np.ones(n, dtype=bool)
    valid[::5] = False
    y_spoiled = y.copy()
    y_spoiled[~valid] = 1e6  # junk on masked rows must not matter
    fit = fit_penalized(_frame(y_spoiled, {"x": x}, valid=valid), ["x"], 1.0)
    ref = fit_penalized(_frame(y[valid], {"x": x[valid]}), ["x"], 1.0)
    assert fit.n == ref.n == int(valid.sum())
    np.testing.assert_allclose(fit.fitted, ref.fitted, atol=1e-10)


def test_smooth_se_grid_and_errors():
    rng = np.random.default_rng(163)
    n = 200
    x = rng.normal(size=n)
    y = np.sin(x) + rng.normal(0.0, 0.2, size=n)
    fit = fit_penalized(_frame(y, {"x": x}), ["x"], 1.0)
    grid, est, se = smooth_se(fit, "x")
    assert grid.size == est.size == se.size == 200
    assert np.all(se > 0.0)
    custom = np.linspace(-1.0, 1.0, 17)
    grid2, est2, se2 = smooth_se(fit, "x", x_grid=custom)
    np.testing.assert_array_equal(grid2, custom)
    assert est2.size == se2.size == 17
    with pytest.raises(KeyError):
        smooth_se(fit, "missing")


def test_fit_input_validation():
    rng = np.random.default_rng(167)
    x = rng.normal(size=50)
    y = rng.normal(size=50)
    frame = _frame(y, {"x": x})
    with pytest.raises(DataError):
        fit_penalized(frame, ["x", "x"], 1.0)
    with pytest.raises(DataError):
        fit_penalized(frame, ["x"], -1.0)
    with pytest.raises(DataError):
        stepwise_select(frame, [])
    tiny = _frame(y[:6], {"x": x[:6]})
    with pytest.raises(DataError):
        fit_penalized(tiny, [SmoothSpec("x", basis_dim=6)], 1.0)
