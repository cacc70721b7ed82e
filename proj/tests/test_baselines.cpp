#include <doctest.h>

#include "oracles.hpp"
#include "vargplvm/errors.hpp"
#include "vargplvm/gp_regression.hpp"
#include "vargplvm/synthetic.hpp"

#include <cmath>

using namespace vargplvm;

TEST_CASE("gp log marginal matches the Gaussian density and its gradient") {
    std::mt19937_64 rng(11);
    const MatrixXd x = oracle::random_normal(rng, 12, 2);
    const MatrixXd y = oracle::random_normal(rng, 12, 3);
    Kernel k = Kernel::sum({Kernel::rbf_ard(1.3, (VectorXd(2) << 0.7, 0.4).finished()), Kernel::white(0.2),
                            Kernel::bias(0.3)});
    VectorXd g;
    const double value = gp_log_marginal(k, x, y, &g);
    const MatrixXd c = k.matrix(x);
    double expected = 0.0;
    for (Index j = 0; j < 3; ++j) expected += oracle::gaussian_logpdf(y.col(j), c);
    CHECK(value == doctest::Approx(expected).epsilon(1e-10));

    const VectorXd lp = k.log_params();
    const VectorXd fd = oracle::fd_gradient(
        [&](const VectorXd& v) {
            Kernel kk = k;
            kk.set_log_params(v);
            return gp_log_marginal(kk, x, y, nullptr);
        },
        lp, 1e-5);
    for (Index i = 0; i < lp.size(); ++i) CHECK(g(i) == doctest::Approx(fd(i)).epsilon(1e-6));
}

TEST_CASE("gp regression interpolates and reports noise") {
    std::mt19937_64 rng(12);
    const MatrixXd x = oracle::random_normal(rng, 10, 1);
    const MatrixXd y = x.array().sin().matrix();
    const Kernel k = Kernel::sum({Kernel::rbf_ard(1.0, VectorXd::Constant(1, 1.0)), Kernel::white(1e-8)});
    const GpRegression gp = GpRegression::with_kernel(x, y, k);
    CHECK((gp.predict_mean(x) - y).cwiseAbs().maxCoeff() < 1e-4);
    CHECK(gp.noise_variance() == doctest::Approx(1e-8));
    const VectorXd v0 = gp.predict_variance(x, false);
    const VectorXd v1 = gp.predict_variance(x, true);
    CHECK(v0.maxCoeff() < 1e-6);
    CHECK(((v1 - v0).array() - 1e-8).abs().maxCoeff() < 1e-14);
    // far from the data the prior comes back
    const MatrixXd far = MatrixXd::Constant(1, 1, 50.0);
    CHECK(gp.predict_variance(far, false)(0) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(gp.predict_mean(far).cwiseAbs().maxCoeff() < 1e-6 + std::abs(y.mean()));
}

TEST_CASE("gp regression fitting does not lower the marginal likelihood") {
    std::mt19937_64 rng(13);
    const RegressionData d = gp_regression_data(rng, 40, 3, 2);
    GpRegression::Options o;
    o.optimise = false;
    const GpRegression start = GpRegression::fit(d.z, d.y, o);
    const GpRegression fitted = GpRegression::fit(d.z, d.y);
    CHECK(fitted.log_marginal() >= start.log_marginal());
    CHECK_THROWS_AS(GpRegression::fit(d.z, d.y.topRows(5)), ArgumentError);
}

TEST_CASE("Mackey-Glass series is bounded, aperiodic and reproducible") {
    const VectorXd s = mackey_glass(500);
    CHECK(s.allFinite());
    CHECK(s.minCoeff() > 0.2);
    CHECK(s.maxCoeff() < 1.5);
    CHECK(s.maxCoeff() - s.minCoeff() > 0.5);
    CHECK((mackey_glass(500) - s).cwiseAbs().maxCoeff() == 0.0);
    // sampling every 2 time units picks every other sample
    MackeyGlassOptions o;
    o.sample_interval = 2.0;
    const VectorXd t = mackey_glass(100, o);
    for (Index i = 0; i < 100; ++i) CHECK(t(i) == s(2 * i));
    CHECK_THROWS_AS(mackey_glass(0), ArgumentError);
}

TEST_CASE("synthetic generators have the advertised shapes") {
    std::mt19937_64 rng(14);
    const RegressionData d = gp_regression_data(rng, 50, 6, 4);
    CHECK(d.z.rows() == 50);
    CHECK(d.z.cols() == 6);
    CHECK(d.y.cols() == 4);
    CHECK(d.y.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);
    CHECK((d.z.colwise().squaredNorm() / 50.0).array().maxCoeff() == doctest::Approx(1.0));

    const LabelledData c = latent_clusters(rng, 30, 7);
    CHECK(c.y.rows() == 30);
    CHECK(c.y.cols() == 7);
    CHECK(c.labels.size() == 30);
    CHECK(c.labels[4] == 1);
    const LabelledData m = gp_manifold(rng, 20, 3);
    CHECK(m.latent.cols() == 2);
    CHECK(m.labels.empty());
}
