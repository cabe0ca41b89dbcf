"""SMO solver checked against a convex-QP oracle, plus estimator plumbing."""

import json
import warnings

import numpy as np
import pytest
from sklearn.base import clone

import affectreg.svr as svr_mod
from affectreg.errors import DataFormatError, ValidationError
from affectreg.svr import (
    DEFAULT_TOL,
    GridSpec,
    KernelConfig,
    Standardizer,
    SvrHyperParams,
    SvrRegressor,
    dual_objective,
    grid_search,
    load_model,
    model_from_dict,
    model_to_dict,
    predict,
    save_model,
    train_svr,
)

from oracles import qp_dual_solution


def linear_hyper(c=1.0, epsilon=0.1):
    return SvrHyperParams(c, epsilon, KernelConfig("linear"))


def rbf_hyper(c=1.0, epsilon=0.1, gamma=0.5):
    return SvrHyperParams(c, epsilon, KernelConfig("rbf", gamma))


def random_instance(rng, n=None, d=None):
    n = n or int(rng.integers(8, 40))
    d = d or int(rng.integers(1, 4))
    X = rng.normal(size=(n, d))
    w = rng.normal(size=d)
    y = X @ w + rng.normal(scale=0.3, size=n)
    return X, y


def full_beta(model, X):
    """Reassemble the dense coefficient vector from a trained model.

    Support rows are exact copies of standardized training rows, so an
    exact row match recovers each coefficient's original index.
    """
    Xs = (X - model.mean) / model.scale
    beta = np.zeros(X.shape[0])
    for row, coef in zip(model.support_vectors, model.dual_coefs):
        hits = np.flatnonzero((Xs == row).all(axis=1))
        assert hits.size == 1, "ambiguous support row"
        beta[hits[0]] = coef
    return beta


# ---------------------------------------------------------------- kernels


class TestKernels:
    def test_linear_matrix(self):
        rng = np.random.default_rng(1)
        A, B = rng.normal(size=(4, 3)), rng.normal(size=(5, 3))
        assert np.allclose(KernelConfig("linear").matrix(A, B), A @ B.T)

    def test_rbf_matches_pairwise_loop(self):
        rng = np.random.default_rng(2)
        A, B = rng.normal(size=(6, 2)), rng.normal(size=(4, 2))
        k = KernelConfig("rbf", gamma=0.7)
        got = k.matrix(A, B)
        for i in range(6):
            for j in range(4):
                want = np.exp(-0.7 * np.sum((A[i] - B[j]) ** 2))
                assert got[i, j] == pytest.approx(want, rel=1e-12)

    def test_kernel_validation(self):
        with pytest.raises(ValidationError):
            KernelConfig("poly")
        with pytest.raises(ValidationError):
            KernelConfig("rbf")  # gamma required
        with pytest.raises(ValidationError):
            KernelConfig("rbf", gamma=-1.0)
        with pytest.raises(ValidationError):
            KernelConfig("linear", gamma=0.5)

    def test_hyper_validation(self):
        with pytest.raises(ValidationError):
            SvrHyperParams(0.0, 0.1)
        with pytest.raises(ValidationError):
            SvrHyperParams(1.0, -0.1)
        SvrHyperParams(1.0, 0.0)  # zero tube is legal


# ---------------------------------------------------------------- standardizer


class TestStandardizer:
    def test_constant_column_passes_through_centered(self):
        out = Standardizer().fit_transform(np.array([[1.0], [1.0], [1.0]]))
        assert out.tolist() == [[0.0], [0.0], [0.0]]

    def test_two_point_column(self):
        s = Standardizer().fit(np.array([[0.0], [2.0]]))
        assert s.mean_.tolist() == [1.0]
        assert s.scale_.tolist() == [1.0]
        assert s.transform(np.array([[0.0], [2.0]])).ravel().tolist() == [-1.0, 1.0]

    def test_random_matrix_moments(self):
        rng = np.random.default_rng(3)
        X = rng.normal(3.0, 2.5, size=(200, 4))
        out = Standardizer().fit_transform(X)
        assert np.allclose(out.mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(out.std(axis=0), 1.0, atol=1e-12)

    def test_needs_two_rows(self):
        with pytest.raises(ValidationError):
            Standardizer().fit(np.zeros((1, 3)))

    def test_column_count_checked(self):
        s = Standardizer().fit(np.zeros((3, 2)))
        with pytest.raises(ValidationError):
            s.transform(np.zeros((3, 5)))

    def test_sklearn_clone(self):
        assert isinstance(clone(Standardizer()), Standardizer)


# ---------------------------------------------------------------- solver


class TestSmoSolution:
    def test_dual_feasibility(self):
        rng = np.random.default_rng(10)
        for k in range(15):
            X, y = random_instance(rng)
            hyper = linear_hyper(c=0.5) if k % 2 else rbf_hyper(c=2.0, gamma=0.3)
            model = train_svr(X, y, hyper)
            beta = full_beta(model, X)
            n = y.size
            assert abs(beta.sum()) <= 1e-8 * hyper.c * n
            assert np.all(np.abs(beta) <= hyper.c + 1e-12)

    def test_kkt_residuals_at_free_support_vectors(self):
        rng = np.random.default_rng(11)
        tol = 1e-6
        seen_free = 0
        for _ in range(10):
            X, y = random_instance(rng, n=30)
            hyper = linear_hyper(c=5.0, epsilon=0.1)
            model = train_svr(X, y, hyper, tol=tol)
            beta = full_beta(model, X)
            resid = y - predict(model, X)
            free = (np.abs(beta) > 0) & (np.abs(beta) < hyper.c - 1e-9)
            seen_free += int(free.sum())
            for i in np.flatnonzero(free):
                assert abs(resid[i]) == pytest.approx(hyper.epsilon, abs=tol * 10)
                assert np.sign(resid[i]) == np.sign(beta[i])
            # non-support points must sit inside the tube
            inside = beta == 0
            assert np.all(np.abs(resid[inside]) <= hyper.epsilon + tol * 10)
        assert seen_free > 5  # the property must actually have been exercised

    def test_objective_trace_never_increases(self):
        rng = np.random.default_rng(12)
        for _ in range(5):
            X, y = random_instance(rng, n=25)
            _, trace = train_svr(X, y, linear_hyper(c=2.0), record_objective=True)
            diffs = np.diff(np.asarray(trace))
            assert np.all(diffs <= 1e-9)
            assert trace[-1] < trace[0]  # solver made progress

    def test_matches_qp_oracle_on_small_instances(self):
        rng = np.random.default_rng(13)
        for k in range(30):
            n = int(rng.integers(2, 7))
            d = int(rng.integers(1, 3))
            X = rng.normal(size=(n, d))
            y = rng.normal(size=n)
            c = float(rng.uniform(0.1, 10.0))
            epsilon = float(rng.uniform(0.0, 0.5))
            kernel = KernelConfig("linear") if k % 3 else KernelConfig("rbf", 0.8)
            hyper = SvrHyperParams(c, epsilon, kernel)
            model = train_svr(X, y, hyper, tol=1e-8)
            beta = full_beta(model, X)
            Xs = Standardizer().fit_transform(X)
            K = kernel.matrix(Xs, Xs)
            got = dual_objective(K, y, beta, epsilon)
            _, want = qp_dual_solution(K, y, c, epsilon)
            assert got == pytest.approx(want, abs=1e-6)

    def test_everything_inside_a_wide_tube_yields_zero_model(self):
        rng = np.random.default_rng(14)
        y = rng.uniform(-0.3, 0.3, 20)
        X = rng.normal(size=(20, 2))
        epsilon = float(y.max() - y.min()) * 1.01
        model = train_svr(X, y, linear_hyper(c=10.0, epsilon=epsilon))
        assert model.n_support == 0
        pred = predict(model, X)
        assert np.all(pred == model.bias)
        assert np.all(np.abs(y - pred) <= epsilon)

    def test_linear_targets_fit_within_tube(self):
        rng = np.random.default_rng(15)
        X = rng.normal(size=(30, 3))
        y = X @ np.array([0.5, -1.0, 0.2])
        model = train_svr(X, y, linear_hyper(c=100.0, epsilon=0.1), tol=1e-5)
        assert np.all(np.abs(y - predict(model, X)) <= 0.1 + 1e-4)
        assert model.n_support <= 15  # flat fit needs few boundary points

    def test_budget_exhaustion_warns_and_flags(self):
        rng = np.random.default_rng(16)
        X, y = random_instance(rng, n=60)
        with pytest.warns(RuntimeWarning, match="budget"):
            model = train_svr(X, y, linear_hyper(c=100.0, epsilon=0.0), tol=1e-12, max_passes=1)
        assert not model.converged
        assert model.termination == "max_passes"
        assert model.n_updates == 60  # one sweep's worth of pair updates

    def test_converged_flag_and_termination(self):
        rng = np.random.default_rng(17)
        X, y = random_instance(rng, n=15)
        model = train_svr(X, y, linear_hyper())
        assert model.converged
        assert model.termination == "converged"

    def test_subsample_is_seeded_and_caps_rows(self):
        rng = np.random.default_rng(18)
        X, y = random_instance(rng, n=80)
        a = train_svr(X, y, linear_hyper(), subsample=20, subsample_seed=5)
        b = train_svr(X, y, linear_hyper(), subsample=20, subsample_seed=5)
        assert np.array_equal(a.support_vectors, b.support_vectors)
        assert np.array_equal(a.dual_coefs, b.dual_coefs)
        assert a.n_support <= 20
        c = train_svr(X, y, linear_hyper(), subsample=20, subsample_seed=6)
        assert not np.array_equal(a.support_vectors, c.support_vectors)

    def test_input_validation(self):
        with pytest.raises(ValidationError):
            train_svr(np.array([[np.nan], [1.0]]), [0.0, 1.0], linear_hyper())
        with pytest.raises(ValidationError):
            train_svr(np.zeros((3, 1)), [0.0, 1.0], linear_hyper())
        with pytest.raises(ValidationError):
            train_svr(np.zeros((3, 1)), np.zeros(3), linear_hyper(), max_passes=0)
        with pytest.raises(ValidationError):
            train_svr(np.zeros((3, 1)), np.zeros(3), linear_hyper(), subsample=1)


# ---------------------------------------------------------------- predict


class TestPredict:
    def test_matches_double_loop_kernel_sum(self):
        rng = np.random.default_rng(20)
        for hyper in (linear_hyper(c=2.0), rbf_hyper(c=2.0, gamma=0.4)):
            X, y = random_instance(rng, n=25, d=3)
            model = train_svr(X, y, hyper)
            Xq = rng.normal(size=(7, 3))
            got = predict(model, Xq)
            for j in range(7):
                xs = (Xq[j] - model.mean) / model.scale
                acc = model.bias
                for sv, coef in zip(model.support_vectors, model.dual_coefs):
                    if hyper.kernel.name == "linear":
                        acc += coef * float(sv @ xs)
                    else:
                        acc += coef * np.exp(-hyper.kernel.gamma * np.sum((sv - xs) ** 2))
                assert got[j] == pytest.approx(acc, abs=1e-10)

    def test_duplicate_rows_get_identical_outputs(self):
        rng = np.random.default_rng(21)
        X, y = random_instance(rng, n=20, d=2)
        model = train_svr(X, y, linear_hyper())
        q = rng.normal(size=2)
        out = predict(model, np.vstack([q, q]))
        assert out[0] == out[1]

    def test_pure_function(self):
        rng = np.random.default_rng(22)
        X, y = random_instance(rng, n=20, d=2)
        model = train_svr(X, y, linear_hyper())
        Xq = rng.normal(size=(5, 2))
        assert np.array_equal(predict(model, Xq), predict(model, Xq))

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(23)
        X, y = random_instance(rng, n=10, d=3)
        model = train_svr(X, y, linear_hyper())
        with pytest.raises(ValidationError, match="columns"):
            predict(model, np.zeros((2, 4)))


# ---------------------------------------------------------------- grid search


class TestGridSearch:
    @pytest.fixture()
    def data(self):
        rng = np.random.default_rng(30)
        X, y = random_instance(rng, n=40, d=2)
        Xd, yd = random_instance(rng, n=30, d=2)
        return (X, y), (Xd, yd)

    def test_singleton_grid(self, data):
        grid = GridSpec(c_values=(1.0,), epsilon_values=(0.1,))
        best, table = grid_search(grid, *data)
        assert best == grid.cells()[0]
        assert len(table) == 1 and table[0].error is None

    def test_table_keeps_grid_order(self, data):
        grid = GridSpec(c_values=(0.1, 1.0), epsilon_values=(0.01, 0.1))
        _, table = grid_search(grid, *data)
        assert [cell.hyper for cell in table] == grid.cells()

    def test_tie_breaks_prefer_small_c_then_small_epsilon(self, data):
        (X, y), (Xd, _) = data
        # constant dev gold makes every cell score a degenerate 0.0
        dev = (Xd, np.full(Xd.shape[0], 0.25))
        grid = GridSpec(c_values=(10.0, 1.0), epsilon_values=(0.1, 0.001))
        best, table = grid_search(grid, (X, y), dev)
        assert {cell.score for cell in table} == {0.0}
        assert best.c == 1.0 and best.epsilon == 0.001

    def test_failed_cells_are_recorded_and_skipped(self, data, monkeypatch):
        real = svr_mod.train_svr

        def sabotage(X, y, hyper, **kwargs):
            if hyper.c == 5.0:
                raise RuntimeError("boom")
            return real(X, y, hyper, **kwargs)

        monkeypatch.setattr(svr_mod, "train_svr", sabotage)
        grid = GridSpec(c_values=(5.0, 1.0), epsilon_values=(0.1,))
        best, table = grid_search(grid, *data)
        assert table[0].error == "RuntimeError: boom"
        assert table[0].score is None
        assert best.c == 1.0

    def test_all_cells_failing_raises(self, data, monkeypatch):
        def boom(*args, **kwargs):
            raise RuntimeError("x")

        monkeypatch.setattr(svr_mod, "train_svr", boom)
        with pytest.raises(ValidationError, match="every grid cell"):
            grid_search(GridSpec(c_values=(1.0,), epsilon_values=(0.1,)), *data)

    def test_parallel_equals_sequential(self, data):
        grid = GridSpec(c_values=(0.1, 1.0), epsilon_values=(0.01, 0.1))
        best1, table1 = grid_search(grid, *data, n_jobs=1)
        best2, table2 = grid_search(grid, *data, n_jobs=2)
        assert best1 == best2
        assert [c.score for c in table1] == [c.score for c in table2]

    def test_mae_objective(self, data):
        grid = GridSpec(c_values=(0.1, 1.0), epsilon_values=(0.01,))
        best, table = grid_search(grid, *data, objective="mae")
        scores = {cell.hyper: cell.score for cell in table}
        assert scores[best] == max(scores.values())

    def test_grid_validation(self):
        with pytest.raises(ValidationError):
            GridSpec(c_values=())
        with pytest.raises(ValidationError):
            GridSpec(c_values=(-1.0,))
        with pytest.raises(ValidationError):
            GridSpec(epsilon_values=(-0.1,))


# ---------------------------------------------------------------- estimator API


class TestSvrRegressor:
    def test_fit_predict_matches_functional_api(self):
        rng = np.random.default_rng(40)
        X, y = random_instance(rng, n=25, d=2)
        est = SvrRegressor(c=2.0, epsilon=0.05).fit(X, y)
        model = train_svr(X, y, linear_hyper(c=2.0, epsilon=0.05))
        assert np.array_equal(est.predict(X), predict(model, X))
        assert est.intercept_ == model.bias
        assert est.converged_ and est.n_features_in_ == 2

    def test_get_set_params_and_clone(self):
        est = SvrRegressor(c=3.0, kernel="rbf", gamma=0.2)
        params = est.get_params()
        assert params["c"] == 3.0 and params["kernel"] == "rbf"
        est2 = clone(est).set_params(c=4.0)
        assert est2.get_params()["c"] == 4.0
        assert est.c == 3.0  # clone must not share state

    def test_predict_before_fit(self):
        with pytest.raises(ValidationError, match="before fit"):
            SvrRegressor().predict(np.zeros((2, 2)))

    def test_rbf_round_trip_through_params(self):
        rng = np.random.default_rng(41)
        X, y = random_instance(rng, n=20, d=2)
        est = SvrRegressor(kernel="rbf", gamma=0.5, epsilon=0.01).fit(X, y)
        assert est.model_.hyper.kernel.name == "rbf"


# ---------------------------------------------------------------- serialization


class TestSerialization:
    def _models(self, count=6):
        rng = np.random.default_rng(50)
        out = []
        for k in range(count):
            X, y = random_instance(rng, n=int(rng.integers(8, 20)))
            hyper = rbf_hyper(gamma=0.3) if k % 2 else linear_hyper(c=3.0)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                out.append(train_svr(X, y, hyper, max_passes=50))
        return out

    def test_round_trip_is_bit_exact(self, tmp_path):
        for k, model in enumerate(self._models()):
            path = tmp_path / f"m{k}.json"
            save_model(model, path)
            loaded = load_model(path)
            assert np.array_equal(loaded.support_vectors, model.support_vectors)
            assert np.array_equal(loaded.dual_coefs, model.dual_coefs)
            assert np.array_equal(loaded.mean, model.mean)
            assert np.array_equal(loaded.scale, model.scale)
            assert loaded.bias == model.bias
            assert loaded.hyper == model.hyper
            # a second write of the reloaded model reproduces the same bytes
            again = tmp_path / f"m{k}b.json"
            save_model(loaded, again)
            assert again.read_bytes() == path.read_bytes()

    def test_zero_support_model_round_trips(self, tmp_path):
        rng = np.random.default_rng(51)
        X = rng.normal(size=(10, 2))
        y = rng.uniform(-0.1, 0.1, 10)
        model = train_svr(X, y, linear_hyper(epsilon=1.0))
        assert model.n_support == 0
        save_model(model, tmp_path / "z.json")
        loaded = load_model(tmp_path / "z.json")
        assert loaded.n_support == 0
        assert np.array_equal(predict(loaded, X), predict(model, X))

    def test_format_and_version_checked(self, tmp_path):
        model = self._models(count=1)[0]
        record = model_to_dict(model)
        bad = dict(record, format="something-else")
        with pytest.raises(DataFormatError, match="format"):
            model_from_dict(bad)
        bad = dict(record, version=99)
        with pytest.raises(DataFormatError, match="version"):
            model_from_dict(bad)

    def test_malformed_files(self, tmp_path):
        p = tmp_path / "x.json"
        p.write_text("{not json", encoding="ascii")
        with pytest.raises(DataFormatError, match="unreadable"):
            load_model(p)
        p.write_text("[1, 2]", encoding="ascii")
        with pytest.raises(DataFormatError, match="object"):
            load_model(p)
        record = model_to_dict(self._models(count=1)[0])
        del record["bias"]
        p.write_text(json.dumps(record), encoding="ascii")
        with pytest.raises(DataFormatError, match="malformed"):
            load_model(p)


def test_dual_objective_helper_is_the_documented_expression():
    rng = np.random.default_rng(60)
    A = rng.normal(size=(6, 2))
    K = A @ A.T
    y = rng.normal(size=6)
    beta = rng.normal(size=6)
    want = 0.5 * beta @ K @ beta + 0.2 * np.abs(beta).sum() - y @ beta
    assert dual_objective(K, y, beta, 0.2) == pytest.approx(want, rel=1e-12)
