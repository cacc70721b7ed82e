#include <doctest.h>

#include "oracles.hpp"
#include "vargplvm/errors.hpp"
#include "vargplvm/training.hpp"

#include <cmath>

using namespace vargplvm;

namespace {

// Smooth nonlinear map of a 2-d latent space into p outputs plus noise.
MatrixXd toy_outputs(std::mt19937_64& rng, Index n, Index p, MatrixXd* latent = nullptr) {
    const MatrixXd x = oracle::random_normal(rng, n, 2);
    const MatrixXd a = oracle::random_normal(rng, 2, p);
    MatrixXd y = (x * a).array().sin().matrix() + 0.3 * (x * a);
    y += 0.05 * oracle::random_normal(rng, n, p);
    if (latent) *latent = x;
    return y;
}

bool bitwise_equal(const MatrixXd& a, const MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.latent_dim = 2;
    cfg.num_inducing = 6;
    cfg.fixed_beta_iters = 15;
    cfg.main_iters = {40};
    cfg.seed = 7;
    return cfg;
}

}  // namespace

TEST_CASE("pca scores recover a rank-one signal") {
    std::mt19937_64 rng(1);
    const VectorXd a = oracle::random_normal(rng, 30, 1);
    const VectorXd b = oracle::random_normal(rng, 5, 1);
    const MatrixXd y = a * b.transpose() + 1e-6 * oracle::random_normal(rng, 30, 5);
    const MatrixXd s = pca_scores(y, 1);
    const VectorXd ac = a.array() - a.mean();
    const double corr = std::abs(ac.dot(s.col(0))) / (ac.norm() * s.col(0).norm());
    CHECK(corr > 1.0 - 1e-8);
    CHECK(std::abs(s.col(0).mean()) < 1e-10);
    CHECK(std::abs(s.col(0).squaredNorm() / 30.0 - 1.0) < 1e-10);
    CHECK_THROWS_AS(pca_scores(y, 6), ArgumentError);
}

TEST_CASE("initialisation follows the documented recipe") {
    std::mt19937_64 rng(2);
    const MatrixXd y = toy_outputs(rng, 25, 4);
    TrainConfig cfg = small_config();
    const Model model = initialize(y, cfg);
    CHECK(model.n() == 25);
    CHECK(model.latent_dim() == 2);
    CHECK(model.num_inducing() == 6);
    CHECK((model.q.var.array() == 0.5).all());
    CHECK((model.output_offset - VectorXd(y.colwise().mean().transpose())).norm() < 1e-12);
    const MatrixXd yc = y.rowwise() - y.colwise().mean();
    const double var = yc.array().square().mean();
    CHECK(model.beta == doctest::Approx(100.0 / var));
    CHECK(model.kernel_f.param("variance") == doctest::Approx(var));
    for (int j = 0; j < 2; ++j) {
        const double w = model.kernel_f.param("ard_weight[" + std::to_string(j) + "]");
        CHECK(std::abs(w - 0.5) <= 0.005 + 1e-15);
    }
    // every inducing input is one of the latent means
    for (Index k = 0; k < model.num_inducing(); ++k) {
        double best = 1e300;
        for (Index i = 0; i < model.n(); ++i) best = std::min(best, (model.q.mean.row(i) - model.inducing.row(k)).norm());
        CHECK(best == 0.0);
    }
    CHECK(std::isfinite(lower_bound(model)));
}

TEST_CASE("more inducing points than data points are padded with perturbed copies") {
    std::mt19937_64 rng(3);
    const MatrixXd y = toy_outputs(rng, 5, 3);
    TrainConfig cfg = small_config();
    cfg.num_inducing = 8;
    const Model model = initialize(y, cfg);
    CHECK(model.num_inducing() == 8);
    CHECK(std::isfinite(lower_bound(model)));
}

TEST_CASE("initialisation is deterministic for a seed") {
    std::mt19937_64 rng(4);
    const MatrixXd y = toy_outputs(rng, 20, 4);
    TrainConfig cfg = small_config();
    const Model a = initialize(y, cfg);
    const Model b = initialize(y, cfg);
    CHECK(bitwise_equal(a.inducing, b.inducing));
    CHECK(bitwise_equal(a.kernel_f.params(), b.kernel_f.params()));
    cfg.seed = 8;
    const Model c = initialize(y, cfg);
    CHECK_FALSE(bitwise_equal(a.kernel_f.params(), c.kernel_f.params()));
}

TEST_CASE("dynamical initialisation reproduces the principal components as marginal means") {
    std::mt19937_64 rng(5);
    const Index n = 30;
    const MatrixXd y = toy_outputs(rng, n, 4);
    MatrixXd t(n, 1);
    for (Index i = 0; i < n; ++i) t(i, 0) = double(i % 15);
    TrainConfig cfg = small_config();
    cfg.variant = Variant::Dynamical;
    const Model model = initialize(y, cfg, LatentPrior::temporal(Kernel(), t, {0, 15}));
    CHECK(model.prior.kernel_x.num_params() > 0);
    const LatentMarginals lm = latent_marginals(model);
    const MatrixXd m = pca_scores(y, 2);
    CHECK((lm.mean - m).norm() < 1e-6 * m.norm());
    CHECK((model.dyn.lambda.array() == 2.0).all());
}

TEST_CASE("uncertain-input initialisation starts at the prior means") {
    std::mt19937_64 rng(6);
    const MatrixXd y = toy_outputs(rng, 20, 3);
    const MatrixXd z = oracle::random_normal(rng, 20, 3);
    TrainConfig cfg = small_config();
    cfg.variant = Variant::UncertainInput;
    const Model model = initialize(y, cfg, LatentPrior::uncertain(z, VectorXd::Constant(3, 0.5)));
    CHECK(bitwise_equal(model.q.mean, z));
    CHECK(model.latent_dim() == 3);
    CHECK_THROWS_AS(initialize(y, cfg), ArgumentError);
}

TEST_CASE("inflating the initial latent variances lowers the starting bound") {
    std::mt19937_64 rng(7);
    const MatrixXd y = toy_outputs(rng, 30, 5);
    TrainConfig cfg = small_config();
    cfg.init_variance = 0.01;
    const double tight = lower_bound(initialize(y, cfg));
    cfg.init_variance = 1.0;
    const double loose = lower_bound(initialize(y, cfg));
    CHECK(loose < tight);
}

TEST_CASE("training trace is monotone and the bound improves") {
    for (Variant v : {Variant::Standard, Variant::Dynamical}) {
        std::mt19937_64 rng(8);
        const Index n = 24;
        const MatrixXd y = toy_outputs(rng, n, 5);
        TrainConfig cfg = small_config();
        cfg.variant = v;
        MatrixXd t(n, 1);
        for (Index i = 0; i < n; ++i) t(i, 0) = 0.5 * double(i);
        Model model = initialize(y, cfg, v == Variant::Dynamical ? LatentPrior::temporal(Kernel(), t) : LatentPrior::standard());
        const TrainResult r = train(model, cfg);
        REQUIRE(r.trace.size() > 2);
        CHECK(r.trace.front().iteration == 0);
        for (std::size_t i = 1; i < r.trace.size(); ++i) {
            CHECK(r.trace[i].iteration > r.trace[i - 1].iteration);
            CHECK(r.trace[i].bound >= r.trace[i - 1].bound - 1e-8 * std::abs(r.trace[i - 1].bound));
        }
        CHECK(r.final_bound > r.initial_bound);
        CHECK(r.final_bound == doctest::Approx(r.trace.back().bound).epsilon(1e-9));
        CHECK(model.trace.size() == r.trace.size());
    }
}

TEST_CASE("beta stays put during the warm-up stage") {
    std::mt19937_64 rng(9);
    const MatrixXd y = toy_outputs(rng, 20, 4);
    TrainConfig cfg = small_config();
    cfg.main_iters = {};
    Model model = initialize(y, cfg);
    const double beta0 = model.beta;
    const TrainResult r = train(model, cfg);
    CHECK(model.beta == beta0);
    for (const auto& row : r.trace) CHECK(row.beta == beta0);
    CHECK_FALSE(model.fix_beta);
}

TEST_CASE("zero iterations leave the model untouched") {
    std::mt19937_64 rng(10);
    const MatrixXd y = toy_outputs(rng, 20, 4);
    TrainConfig cfg = small_config();
    cfg.fixed_beta_iters = 0;
    cfg.main_iters = {0};
    Model model = initialize(y, cfg);
    const Model before = model;
    const TrainResult r = train(model, cfg);
    CHECK(r.trace.size() == 1);
    CHECK(bitwise_equal(model.q.mean, before.q.mean));
    CHECK(bitwise_equal(model.q.var, before.q.var));
    CHECK(bitwise_equal(model.inducing, before.inducing));
    CHECK(model.beta == before.beta);
    CHECK(r.final_bound == r.initial_bound);
}

TEST_CASE("training is reproducible") {
    std::mt19937_64 rng(11);
    const MatrixXd y = toy_outputs(rng, 20, 4);
    TrainConfig cfg = small_config();
    Model a = initialize(y, cfg);
    Model b = initialize(y, cfg);
    train(a, cfg);
    train(b, cfg);
    CHECK(bitwise_equal(a.q.mean, b.q.mean));
    CHECK(bitwise_equal(a.inducing, b.inducing));
    CHECK(a.beta == b.beta);
}

TEST_CASE("fixed quantities are bit-identical after training") {
    std::mt19937_64 rng(12);
    const MatrixXd y = toy_outputs(rng, 20, 4);
    TrainConfig cfg = small_config();
    cfg.fix_inducing = true;
    Model model = initialize(y, cfg);
    model.fix_beta = true;
    model.kernel_f.set_fixed("variance", true);
    model.q.fixed(3, 1) = true;
    const Model before = model;
    train(model, cfg);
    CHECK(bitwise_equal(model.inducing, before.inducing));
    CHECK(model.beta == before.beta);
    CHECK(model.kernel_f.param("variance") == before.kernel_f.param("variance"));
    CHECK(model.q.mean(3, 1) == before.q.mean(3, 1));
    CHECK(model.q.var(3, 1) == before.q.var(3, 1));
    CHECK(model.q.mean(2, 1) != before.q.mean(2, 1));
}

TEST_CASE("ard report ranks dimensions") {
    std::mt19937_64 rng(13);
    const MatrixXd y = toy_outputs(rng, 20, 4);
    TrainConfig cfg = small_config();
    cfg.latent_dim = 3;
    Model model = initialize(y, cfg);
    VectorXd p = model.kernel_f.params();
    p.tail(3) << 0.5, 2.0, 0.001;
    model.kernel_f.set_params(p);
    const ArdReport r = ard_report(model);
    REQUIRE(r.entries.size() == 3);
    CHECK(r.entries[0].dimension == 1);
    CHECK(r.entries[0].normalised == 1.0);
    CHECK(r.entries[1].dimension == 0);
    CHECK(r.entries[2].dimension == 2);
    CHECK(r.effective_dim == 2);
    CHECK(ard_report(model, 1e-4).effective_dim == 3);

    model.kernel_f = Kernel::matern32(1.0, 1.0);
    CHECK_THROWS_AS(ard_report(model), CapabilityError);
}
