import numpy as np
import pytest

from gradmatch.exceptions import NumericalError, ValidationError
from gradmatch.experiments import fhn_series
from gradmatch.operator_kernels import OperatorKernel
from gradmatch.pipeline import FitReport, GradientMatchingODE, grid_search
from gradmatch.simulate import trajectory_error
from gradmatch.vector_field import fit_ridge

SMALL = dict(n_anchors=30, gamma_grid=(0.5, 1.0), ridge_grid=(0.1, 1.0))


@pytest.fixture(scope="module")
def ridge_fit(fhn_noisy):
    return GradientMatchingODE(**SMALL).fit(fhn_noisy)


def test_ridge_fit_report(ridge_fit, fhn_noisy):
    rep = ridge_fit.report_
    assert rep.mode == "ridge" and rep.n_values == 82
    assert rep.trajectory_mse == pytest.approx(rep.trajectory_error / 82)
    assert ridge_fit.grid_scores_.shape == (2, 2)
    assert rep.trajectory_error == pytest.approx(ridge_fit.grid_scores_.min())
    assert len(rep.smoother_gammas) == 2 and len(rep.smoother_ridges) == 2
    assert all(np.isfinite([rep.smoothing_error, rep.gm_error, rep.trajectory_error]))
    text = rep.to_text()
    assert "trajectory_mse = " in text and "lambda1" not in text


def test_grid_search_picks_minimum(ridge_fit, fhn_noisy):
    sm = ridge_fit.smoothers_[0]
    best = min(((g, lam) for g in SMALL["gamma_grid"] for lam in SMALL["ridge_grid"]),
               key=lambda pt: trajectory_error(
                   fit_ridge(sm, ridge_fit.taus_, OperatorKernel("decomposable", pt[0], np.eye(2)), pt[1]),
                   sm, fhn_noisy))
    assert (ridge_fit.gamma_, ridge_fit.ridge_) == best


def test_grid_search_threads_and_failures(ridge_fit, fhn_noisy):
    sm = ridge_fit.smoothers_[0]

    def fit_one(g, lam):
        if g > 0.7:
            raise NumericalError("synthetic failure")
        return fit_ridge(sm, ridge_fit.taus_, OperatorKernel("decomposable", g, np.eye(2)), lam)

    one = grid_search(fit_one, [sm], [fhn_noisy], (0.5, 1.0), (0.1, 1.0))
    two = grid_search(fit_one, [sm], [fhn_noisy], (0.5, 1.0), (0.1, 1.0), n_jobs=2)
    assert one[0] == two[0] and one[0][0] == 0.5
    np.testing.assert_array_equal(one[1], two[1])
    assert np.isinf(one[1][2:]).all()
    with pytest.raises(NumericalError):
        grid_search(lambda g, lam: fit_one(1.0, lam), [sm], [fhn_noisy], (1.0,), (0.1,))
    with pytest.raises(ValidationError):
        grid_search(fit_one, [sm], [fhn_noisy], (), (0.1,))


def test_predict(ridge_fit, fhn_noisy):
    traj = ridge_fit.predict(fhn_noisy.times)
    assert traj.shape == (41, 2)
    np.testing.assert_allclose(traj[0], ridge_fit.smoothers_[0].predict(fhn_noisy.times[:1])[0])
    np.testing.assert_array_equal(ridge_fit.predict([0.0, 1.0], x0=[0.5, 0.5])[0], [0.5, 0.5])


def test_deterministic(fhn_noisy, ridge_fit):
    again = GradientMatchingODE(**SMALL).fit(fhn_noisy.times, fhn_noisy.values)
    np.testing.assert_array_equal(again.model_.coeffs, ridge_fit.model_.coeffs)


def test_sparse_mode(fhn_noisy):
    est = GradientMatchingODE(mode="sparse", lambda1=0.05, alpha=0.5, **SMALL).fit(fhn_noisy)
    rep = est.report_
    assert rep.lambda1 == 0.05 and rep.alpha == 0.5
    assert 0 < rep.zero_coeff_fraction <= 1
    assert rep.zero_coeff_fraction == pytest.approx(np.mean(est.model_.coeffs == 0))


def test_learn_c_mode(fhn_noisy):
    est = GradientMatchingODE(mode="learn-C", outer_iters=2, inner_iters=5, **SMALL).fit(fhn_noisy)
    C = np.array(est.report_.structure).reshape(2, 2)
    np.testing.assert_allclose(C, C.T)
    assert np.linalg.eigvalsh(C).min() >= -1e-12
    np.testing.assert_allclose(est.model_.kernel.structure.C, C)


def test_transformable_and_hadamard(fhn_noisy):
    for family in ("transformable", "hadamard"):
        est = GradientMatchingODE(kernel=family, **SMALL).fit(fhn_noisy)
        assert est.model_.kernel.family == family
        assert np.isfinite(est.report_.trajectory_error)
    with pytest.raises(ValidationError):
        GradientMatchingODE(kernel="transformable", C=np.eye(2), **SMALL).fit(fhn_noisy)


def test_multi_mode():
    series = [n for _, n in fhn_series(2, seed=3)]
    est = GradientMatchingODE(mode="multi", **SMALL).fit(series)
    assert est.report_.n_values == 164 and est.report_.sim_weight == 0.1
    assert len(est.smoothers_) == 2


def test_mode_validation(fhn_noisy):
    with pytest.raises(ValidationError):
        GradientMatchingODE(mode="multi").fit(fhn_noisy)
    with pytest.raises(ValidationError):
        GradientMatchingODE(mode="ridge").fit([fhn_noisy, fhn_noisy])
    with pytest.raises(ValidationError):
        GradientMatchingODE(mode="boosting").fit(fhn_noisy)
    with pytest.raises(ValidationError):
        GradientMatchingODE(kernel="laplace").fit(fhn_noisy)
    with pytest.raises(ValidationError):
        GradientMatchingODE(C=np.eye(3), **SMALL).fit(fhn_noisy)
    with pytest.raises(ValidationError):
        GradientMatchingODE(mode="learn-C", kernel="hadamard").fit(fhn_noisy)
    with pytest.raises(ValidationError):
        GradientMatchingODE().fit([])


def test_estimator_api():
    est = GradientMatchingODE(n_anchors=7)
    assert est.get_params()["n_anchors"] == 7
    assert est.set_params(mode="sparse").mode == "sparse"
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        est.predict([0.0, 1.0])


def test_report_dict_round_trip():
    rep = FitReport("ridge", 1.0, 0.1, 1.0, 2.0, 4.0, 8)
    d = rep.as_dict()
    assert d["trajectory_mse"] == 0.5 and "structure" not in d
