#include <doctest.h>

#include "model_factory.hpp"
#include "oracles.hpp"
#include "vargplvm/errors.hpp"
#include "vargplvm/predict.hpp"
#include "vargplvm/training.hpp"

#include <cmath>

using namespace vargplvm;

namespace {

MatrixXd smooth_outputs(const MatrixXd& x, const MatrixXd& a) { return (x * a).array().sin().matrix() + 0.5 * x * a; }

Model trained_toy(std::uint64_t seed, Index n = 30, Index p = 5) {
    std::mt19937_64 rng(seed);
    const MatrixXd x = oracle::random_normal(rng, n, 2);
    const MatrixXd a = oracle::random_normal(rng, 2, p);
    const MatrixXd y = smooth_outputs(x, a) + 0.05 * oracle::random_normal(rng, n, p);
    TrainConfig cfg;
    cfg.latent_dim = 2;
    cfg.num_inducing = 8;
    cfg.fixed_beta_iters = 20;
    cfg.main_iters = {80};
    cfg.seed = seed;
    Model model = initialize(y, cfg);
    train(model, cfg);
    return model;
}

std::vector<Index> range(Index a, Index b) {
    std::vector<Index> out;
    for (Index i = a; i < b; ++i) out.push_back(i);
    return out;
}

MatrixXd take_cols(const MatrixXd& y, const std::vector<Index>& cols) {
    MatrixXd out(y.rows(), Index(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) out.col(k) = y.col(cols[k]);
    return out;
}

}  // namespace

TEST_CASE("zero input variance reproduces the projected-process predictive distribution") {
    std::mt19937_64 rng(21);
    Model model = testing_models::random_model(Variant::Standard, rng, 12, 2, 5, 3, 0);
    const Predictor pred(model);

    const MatrixXd xs = oracle::random_normal(rng, 4, 2);
    TestQ q{xs, MatrixXd::Zero(4, 2)};
    const PredictiveMoments mom = pred.moments(q, false);

    // explicit projected-process formulas with inverses
    const double var = model.kernel_f.param("variance");
    const VectorXd w = model.kernel_f.params().tail(2);
    MatrixXd kuu = oracle::rbf(model.inducing, model.inducing, var, w);
    kuu.diagonal().array() += 1e-8 * var;  // the model's fixed inducing regulariser
    const MatrixXd ksu = oracle::rbf(xs, model.inducing, var, w);
    const PsiStats psi = psi_statistics(model.kernel_f, model.q.mean, model.q.var, model.inducing);
    const MatrixXd sigma = (kuu + model.beta * psi.psi2).inverse();
    const MatrixXd b = model.beta * sigma * psi.psi1.transpose() * model.centred_y();
    const MatrixXd mean = ksu * b;
    const MatrixXd reduce = kuu.inverse() - sigma;
    for (Index i = 0; i < 4; ++i) {
        const double v = var - ksu.row(i).dot(reduce * ksu.row(i).transpose());
        for (Index k = 0; k < 3; ++k) {
            CHECK(mom.mean(i, k) == doctest::Approx(mean(i, k)).epsilon(1e-9));
            CHECK(mom.variance(i, k) == doctest::Approx(v).epsilon(1e-7));
        }
    }
}

TEST_CASE("noise toggle adds exactly the noise variance") {
    std::mt19937_64 rng(22);
    Model model = testing_models::random_model(Variant::Standard, rng, 12, 2, 5, 3, 1);
    const Predictor pred(model);
    TestQ q{oracle::random_normal(rng, 3, 2), oracle::random_matrix(rng, 3, 2, 0.1, 0.5)};
    const PredictiveMoments a = pred.moments(q, false);
    const PredictiveMoments b = pred.moments(q, true);
    CHECK_FALSE(a.noise_included);
    CHECK(b.noise_included);
    CHECK((a.mean - b.mean).norm() == 0.0);
    CHECK(((b.variance - a.variance).array() - 1.0 / model.beta).abs().maxCoeff() < 1e-12);
    CHECK((a.variance.array() >= 0.0).all());
}

TEST_CASE("inflating the input variance inflates the predictive variance") {
    const Model model = trained_toy(23);
    const Predictor pred(model);
    const LatentMarginals lm = latent_marginals(model);
    TestQ q{lm.mean.topRows(5), MatrixXd::Constant(5, 2, 0.05)};
    TestQ wide{q.mean, 10.0 * q.var};
    const PredictiveMoments a = pred.moments(q, true);
    const PredictiveMoments b = pred.moments(wide, true);
    CHECK((b.variance.array() > a.variance.array()).all());
}

TEST_CASE("zero training outputs predict zero") {
    std::mt19937_64 rng(24);
    Model model = testing_models::random_model(Variant::Standard, rng, 10, 2, 4, 3, 0);
    model.outputs = {OutputBlock{{}, OutputData::from_y(MatrixXd::Zero(10, 3))}};
    const Predictor pred(model);
    CHECK(pred.weights().norm() == 0.0);
    const PredictiveMoments m = pred.moments(TestQ{oracle::random_normal(rng, 3, 2), MatrixXd::Ones(3, 2)}, true);
    CHECK(m.mean.norm() == 0.0);
}

TEST_CASE("near-delta test input at a training point interpolates that row") {
    std::mt19937_64 rng(25);
    const Index n = 15;
    const MatrixXd x = oracle::random_normal(rng, n, 2);
    const MatrixXd y = smooth_outputs(x, oracle::random_normal(rng, 2, 4));
    Model model;
    model.kernel_f = Kernel::rbf_ard(2.0, VectorXd::Constant(2, 0.5));
    model.q = FactorizedQ(x, MatrixXd::Constant(n, 2, 1e-10));
    model.inducing = x;
    model.beta = 1e6;
    model.outputs = {OutputBlock{{}, OutputData::from_y(y)}};
    model.output_offset = VectorXd::Zero(4);
    const Predictor pred(model);
    for (Index i : {0, 7, 14}) {
        const PredictiveMoments m = pred.moments(TestQ{x.row(i), MatrixXd::Constant(1, 2, 1e-10)}, false);
        CHECK((m.mean.row(0) - y.row(i)).norm() < 1e-2 * y.row(i).norm());
    }
}

TEST_CASE("factorised test bound matches the explicitly augmented model") {
    std::mt19937_64 rng(26);
    for (int flavour = 0; flavour < 4; ++flavour) {
        for (Variant v : {Variant::Standard, Variant::UncertainInput}) {
            const Index n = 10, q = 2, p = 4, ns = 3;
            Model model = testing_models::random_model(v, rng, n, q, 5, p, flavour);
            const std::vector<Index> observed{0, 2};
            const std::vector<Index> unobserved{1, 3};
            const MatrixXd ys = oracle::random_normal(rng, ns, 2);
            const TestQ qs{oracle::random_normal(rng, ns, q), oracle::random_matrix(rng, ns, q, 0.1, 1.0)};

            // brute force: all rows in one model, training q held as is
            Model aug = model;
            MatrixXd mean(n + ns, q), var(n + ns, q);
            mean << model.q.mean, qs.mean;
            var << model.q.var, qs.var;
            aug.variant = Variant::Standard;
            aug.prior = LatentPrior::standard();
            aug.q = FactorizedQ(mean, var);
            const MatrixXd& y = model.centred_y();
            MatrixXd yo(n + ns, 2);
            yo << take_cols(y, observed), ys;
            aug.outputs = {OutputBlock{range(0, n), OutputData::from_y(take_cols(y, unobserved))},
                           OutputBlock{{}, OutputData::from_y(yo)}};
            const BoundValue full = evaluate_bound(aug, false);
            const BoundValue trained = evaluate_bound(model, false);
            // the brute-force model uses a standard prior for q(X); swap in the
            // trained model's own KL for the training rows
            const double expected = full.fhat - kl_factorized(FactorizedQ(qs.mean, qs.var)) - trained.kl;
            const double cached = test_bound(model, ys, observed, qs);
            CHECK(cached == doctest::Approx(expected).epsilon(1e-10));
        }
    }
}

TEST_CASE("training terms of the test bound cancel with no test rows") {
    std::mt19937_64 rng(27);
    Model model = testing_models::random_model(Variant::Standard, rng, 10, 2, 5, 4, 1);
    const TestQ empty{MatrixXd(0, 2), MatrixXd(0, 2)};
    CHECK(test_bound(model, MatrixXd(0, 2), {1, 3}, empty) == doctest::Approx(lower_bound(model)).epsilon(1e-12));
    CHECK(log_density(model, MatrixXd(0, 4)) == 0.0);
}

TEST_CASE("reconstruction optimises the test bound from the nearest neighbour") {
    const Model model = trained_toy(28);
    const MatrixXd y = model.centred_y().rowwise() + model.output_offset.transpose();
    const std::vector<Index> observed{0, 1, 2};
    const MatrixXd ys = y.topRows(4).leftCols(3) + 0.05 * MatrixXd::Ones(4, 3);
    const Reconstruction r = reconstruct(model, ys, observed);
    CHECK(r.fit.unobserved == std::vector<Index>{3, 4});
    CHECK(r.moments.mean.rows() == 4);
    CHECK(r.moments.mean.cols() == 2);
    CHECK((r.moments.variance.array() >= 0.0).all());
    CHECK(r.fit.bound == doctest::Approx(test_bound(model, ys, observed, r.fit.q)).epsilon(1e-10));
    // the neighbour's marginals are the starting point, so the optimum is no worse
    const LatentMarginals lm = latent_marginals(model);
    const TestQ start{lm.mean.topRows(4), lm.var.topRows(4)};
    CHECK(r.fit.bound >= test_bound(model, ys, observed, start) - 1e-9);
    // the reconstruction lands near the held-back values
    const double err = (r.moments.mean - y.topRows(4).rightCols(2)).norm() / y.topRows(4).rightCols(2).norm();
    CHECK(err < 0.5);

    CHECK_THROWS_AS(reconstruct(model, y.topRows(2), range(0, 5)), ArgumentError);
    CHECK_THROWS_AS(reconstruct(model, ys, {0, 1}), ArgumentError);
    CHECK_THROWS_AS(reconstruct(model, ys, {}), ArgumentError);
}

TEST_CASE("log density prefers a training row over a corrupted copy") {
    const Model model = trained_toy(29);
    const MatrixXd y = model.centred_y().rowwise() + model.output_offset.transpose();
    std::mt19937_64 rng(1);
    int wins = 0;
    for (Index i = 0; i < 5; ++i) {
        const MatrixXd clean = y.row(i);
        const MatrixXd noisy = clean + 3.0 * oracle::random_normal(rng, 1, y.cols());
        if (log_density(model, clean) > log_density(model, noisy)) ++wins;
    }
    CHECK(wins == 5);
    const VectorXd rows = log_density_rows(model, y.topRows(3));
    CHECK(rows.size() == 3);
    CHECK(rows(1) == doctest::Approx(log_density(model, y.row(1))).epsilon(1e-12));
}

TEST_CASE("forecast at training timestamps reproduces q(X)") {
    std::mt19937_64 rng(30);
    for (int flavour : {0, 1}) {
        const Index n = 12;
        Model model = testing_models::random_model(Variant::Dynamical, rng, n, 2, 4, 3, flavour);
        const LatentMarginals lm = latent_marginals(model);
        // whole second sequence at once
        const TestQ all = forecast_latents(model, model.prior.t.bottomRows(6), 1);
        CHECK((all.mean - lm.mean.bottomRows(6)).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((all.var - lm.var.bottomRows(6)).cwiseAbs().maxCoeff() < 1e-10);
        // a single timestamp of the first sequence
        const TestQ one = forecast_latents(model, model.prior.t.row(2), 0);
        CHECK((one.mean - lm.mean.row(2)).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((one.var - lm.var.row(2)).cwiseAbs().maxCoeff() < 1e-10);

        // far away: back to the prior
        const TestQ far = forecast_latents(model, MatrixXd::Constant(1, 1, 1e6), 1);
        const double prior_var = model.prior.kernel_x.diagonal(MatrixXd::Constant(1, 1, 1e6))(0);
        CHECK(far.mean.cwiseAbs().maxCoeff() < 1e-12);
        CHECK((far.var.array() - prior_var).abs().maxCoeff() < 1e-12);
        CHECK((one.var.array() <= far.var.array()).all());

        const Forecast f = forecast(model, MatrixXd::Constant(2, 1, 0.4), 1, true);
        CHECK(f.moments.mean.rows() == 2);
        CHECK((f.moments.variance.array() > 0.0).all());
    }
    Model standard = testing_models::random_model(Variant::Standard, rng, 8, 2, 4, 3, 0);
    CHECK_THROWS_AS(forecast_latents(standard, MatrixXd::Zero(1, 1)), CapabilityError);
}

TEST_CASE("dynamical reconstruction re-optimises the coupled sequence") {
    std::mt19937_64 rng(31);
    const Index n = 20;
    MatrixXd t(n, 1);
    for (Index i = 0; i < n; ++i) t(i, 0) = double(i);
    MatrixXd y(n, 4);
    for (Index i = 0; i < n; ++i) {
        const double s = 0.4 * double(i);
        y.row(i) << std::sin(s), std::cos(s), std::sin(2 * s), 0.5 * std::cos(s);
    }
    y += 0.02 * oracle::random_normal(rng, n, 4);
    TrainConfig cfg;
    cfg.variant = Variant::Dynamical;
    cfg.latent_dim = 2;
    cfg.num_inducing = 6;
    cfg.fixed_beta_iters = 20;
    cfg.main_iters = {60};
    Model model = initialize(y, cfg, LatentPrior::temporal(Kernel(), t));
    train(model, cfg);

    MatrixXd ts(2, 1);
    ts << 20.0, 21.0;
    MatrixXd obs(2, 2);
    for (Index i = 0; i < 2; ++i) {
        const double s = 0.4 * (20.0 + double(i));
        obs.row(i) << std::sin(s), std::cos(s);
    }
    TestOptions opts;
    opts.max_iterations = 60;
    const Reconstruction coupled = reconstruct(model, obs, {0, 1}, opts, ts);
    CHECK(coupled.moments.mean.rows() == 2);
    CHECK(coupled.moments.mean.allFinite());
    CHECK((coupled.moments.variance.array() >= 0.0).all());
    opts.factorised_dynamical = true;
    const Reconstruction split = reconstruct(model, obs, {0, 1}, opts, ts);
    CHECK(split.moments.mean.allFinite());
    CHECK(std::isfinite(log_density(model, y.bottomRows(1), opts, MatrixXd::Constant(1, 1, 20.0))));
    CHECK_THROWS_AS(reconstruct(model, obs, {0, 1}, opts), ArgumentError);
}

TEST_CASE("autoregressive windows") {
    MatrixXd y(5, 1);
    y << 1, 2, 3, 4, 5;
    const AutoregressiveData d = autoregress_dataset(y, 2);
    MatrixXd z(3, 2);
    z << 1, 2, 2, 3, 3, 4;
    CHECK(d.z == z);
    CHECK(d.target == y.bottomRows(3));
    CHECK(autoregress_dataset(y, 4).z.rows() == 1);
    CHECK_THROWS_AS(autoregress_dataset(y, 5), ArgumentError);
    CHECK_THROWS_AS(autoregress_dataset(y, 0), ArgumentError);

    MatrixXd y2(6, 2);
    for (Index i = 0; i < 6; ++i) y2.row(i) << double(i), -double(i);
    const AutoregressiveData d2 = autoregress_dataset(y2, 3);
    CHECK(d2.z.cols() == 6);
    for (Index i = 0; i + 1 < d2.z.rows(); ++i) CHECK(d2.z.row(i + 1).head(4) == d2.z.row(i).tail(4));
    CHECK(d2.z.row(0) == (VectorXd(6) << 0, 0, 1, -1, 2, -2).finished().transpose());
}

TEST_CASE("one iterative step is a plain uncertain-input prediction") {
    std::mt19937_64 rng(32);
    Model model = testing_models::random_model(Variant::UncertainInput, rng, 12, 3, 4, 1, 0);
    const MatrixXd window = oracle::random_normal(rng, 3, 1);
    const IterativePrediction it = iterative_predict(model, window, 1);
    const PredictiveMoments m = Predictor(model).moments(TestQ{window.transpose(), MatrixXd::Zero(1, 3)}, true);
    CHECK(it.mean(0, 0) == doctest::Approx(m.mean(0, 0)).epsilon(1e-14));
    CHECK(it.variance(0, 0) == doctest::Approx(m.variance(0, 0)).epsilon(1e-14));
    const IterativePrediction five = iterative_predict(model, window, 5);
    CHECK(five.mean.rows() == 5);
    CHECK(five.mean(0, 0) == it.mean(0, 0));
    CHECK_THROWS_AS(iterative_predict(model, window, 0), ArgumentError);
    CHECK_THROWS_AS(iterative_predict(model, oracle::random_normal(rng, 2, 1), 1), ArgumentError);
}
