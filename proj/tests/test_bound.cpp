#include <doctest.h>

#include "model_factory.hpp"
#include "oracles.hpp"
#include "vargplvm/errors.hpp"
#include "vargplvm/model.hpp"

#include <cmath>

using namespace vargplvm;

namespace {

// Per-output collapsed bound written with explicit inverses and determinants,
// summed over columns of y.
double fhat_per_column(const MatrixXd& psi1, const MatrixXd& psi2, double psi0, const MatrixXd& kuu, double beta,
                       const MatrixXd& y) {
    const Index n = psi1.rows();
    const MatrixXd a = beta * psi2 + kuu;
    const MatrixXd w = beta * MatrixXd::Identity(n, n) - beta * beta * psi1 * a.inverse() * psi1.transpose();
    double total = 0.0;
    for (Index j = 0; j < y.cols(); ++j) {
        const VectorXd yj = y.col(j);
        total += 0.5 * double(n) * std::log(beta) + 0.5 * std::log(kuu.determinant()) -
                 0.5 * double(n) * std::log(2.0 * M_PI) - 0.5 * std::log(a.determinant()) - 0.5 * yj.dot(w * yj) -
                 0.5 * beta * psi0 + 0.5 * beta * (kuu.inverse() * psi2).trace();
    }
    return total;
}

// Exact GP log marginal sum_j log N(y_j | 0, K + sigma^2 I) with an RBF kernel.
double exact_gp_log_marginal(const MatrixXd& x, const MatrixXd& y, double var, const VectorXd& w, double beta) {
    const MatrixXd c = oracle::rbf(x, x, var, w) + MatrixXd::Identity(x.rows(), x.rows()) / beta;
    double total = 0.0;
    for (Index j = 0; j < y.cols(); ++j) total += oracle::gaussian_logpdf(y.col(j), c);
    return total;
}

}  // namespace

TEST_CASE("YY^T form equals the per-column form") {
    std::mt19937_64 rng(1);
    for (int rep = 0; rep < 5; ++rep) {
        const Index n = 8, q = 2, m = 4, p = 3;
        const MatrixXd mu = oracle::random_normal(rng, n, q);
        const MatrixXd s = oracle::random_matrix(rng, n, q, 0.1, 1.0);
        const MatrixXd u = oracle::random_normal(rng, m, q);
        const Kernel k = Kernel::rbf_ard(1.4, VectorXd::Constant(q, 0.8));
        const PsiStats psi = psi_statistics(k, mu, s, u);
        const MatrixXd kuu = k.matrix(u);
        const MatrixXd y = oracle::random_normal(rng, n, p);
        const double beta = 5.0;
        const double expected = fhat_per_column(psi.psi1, psi.psi2, psi.psi0, kuu, beta, y);
        CHECK(oracle::rel_err(fhat(psi, kuu, OutputData::from_y(y), beta), expected) < 1e-10);

        // zero outputs keep only the data-independent terms
        const MatrixXd zero = MatrixXd::Zero(n, p);
        CHECK(oracle::rel_err(fhat(psi, kuu, OutputData::from_y(zero), beta),
                              fhat_per_column(psi.psi1, psi.psi2, psi.psi0, kuu, beta, zero)) < 1e-10);
    }
}

TEST_CASE("raw outputs and gram factor give the same bound") {
    std::mt19937_64 rng(2);
    const Index n = 6, q = 2, m = 3;
    const MatrixXd mu = oracle::random_normal(rng, n, q);
    const MatrixXd s = oracle::random_matrix(rng, n, q, 0.1, 1.0);
    const MatrixXd u = oracle::random_normal(rng, m, q);
    const Kernel k = Kernel::rbf_ard(0.9, VectorXd::Constant(q, 1.1));
    const PsiStats psi = psi_statistics(k, mu, s, u);
    const MatrixXd kuu = k.matrix(u);
    for (Index p : {2, 15}) {
        const MatrixXd y = oracle::random_normal(rng, n, p);
        const double raw = fhat(psi, kuu, OutputData::from_y(y), 3.0);
        const double gram = fhat(psi, kuu, OutputData::from_gram(y * y.transpose(), p), 3.0);
        CHECK(oracle::rel_err(raw, gram) < 1e-12);
        CHECK(oracle::rel_err(raw, fhat_per_column(psi.psi1, psi.psi2, psi.psi0, kuu, 3.0, y)) < 1e-10);
        // orthogonal rotation of the output columns
        const MatrixXd qr = Eigen::HouseholderQR<MatrixXd>(oracle::random_normal(rng, p, p)).householderQ();
        CHECK(oracle::rel_err(fhat(psi, kuu, OutputData::from_y(y * qr), 3.0), raw) < 1e-12);
    }
}

TEST_CASE("collapse to the exact GP marginal likelihood") {
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 5; ++rep) {
        const Index n = 15, q = 2, p = 2;
        const MatrixXd x = oracle::random_normal(rng, n, q);
        const VectorXd w = oracle::random_matrix(rng, q, 1, 0.3, 1.0);
        const double var = 1.3, beta = 20.0;
        const MatrixXd y = oracle::random_normal(rng, n, p);
        const Kernel k = Kernel::rbf_ard(var, w);
        const PsiStats psi = psi_statistics(k, x, MatrixXd::Constant(n, q, 1e-12), x);
        const double f = fhat(psi, k.matrix(x), OutputData::from_y(y), beta);
        CHECK(oracle::rel_err(f, exact_gp_log_marginal(x, y, var, w, beta)) < 1e-4);
    }
}

TEST_CASE("collapse gradient w.r.t. the mapping kernel matches the exact GP") {
    std::mt19937_64 rng(4);
    const Index n = 12, q = 2, p = 2;
    const MatrixXd x = oracle::random_normal(rng, n, q);
    const VectorXd w = oracle::random_matrix(rng, q, 1, 0.3, 1.0);
    const double var = 1.1, beta = 15.0;
    Model model;
    model.kernel_f = Kernel::rbf_ard(var, w);
    model.q = FactorizedQ(x, MatrixXd::Constant(n, q, 1e-12));
    model.inducing = x;
    model.beta = beta;
    const MatrixXd y = oracle::random_normal(rng, n, p);
    model.outputs = {OutputBlock{{}, OutputData::from_y(y)}};
    model.output_offset = VectorXd::Zero(p);
    model.fix_inducing = true;
    const BoundValue bv = evaluate_bound(model, true);
    const GradientSchema schema = gradient_schema(model);
    const Index off = schema.at("kernel_f").offset;

    // exact GP: d/dlog theta = 0.5 sum_j tr((a a^T - C^-1) dC)
    const MatrixXd c = oracle::rbf(x, x, var, w) + MatrixXd::Identity(n, n) / beta;
    const MatrixXd ci = c.inverse();
    const MatrixXd k = oracle::rbf(x, x, var, w);
    std::vector<MatrixXd> dk;
    dk.push_back(k);
    for (Index j = 0; j < q; ++j) {
        MatrixXd d(n, n);
        for (Index a = 0; a < n; ++a)
            for (Index b = 0; b < n; ++b) d(a, b) = -0.5 * w(j) * std::pow(x(a, j) - x(b, j), 2) * k(a, b);
        dk.push_back(d);
    }
    for (std::size_t t = 0; t < dk.size(); ++t) {
        double g = 0.0;
        for (Index j = 0; j < p; ++j) {
            const VectorXd a = ci * y.col(j);
            g += 0.5 * ((a * a.transpose() - ci) * dk[t]).trace();
        }
        CHECK(oracle::rel_err(bv.gradient(off + Index(t)), g) < 1e-3);
    }
}

TEST_CASE("bound gradients match finite differences for every variant") {
    std::mt19937_64 rng(5);
    for (Variant v : {Variant::Standard, Variant::Dynamical, Variant::UncertainInput}) {
        for (int flavour = 0; flavour < 4; ++flavour) {
            Model model = testing_models::random_model(v, rng, 10, 2, 4, 3, flavour);
            const BoundValue bv = evaluate_bound(model, true);
            CHECK(oracle::rel_err(bv.value, lower_bound(model)) == 0.0);
            const VectorXd x0 = pack_parameters(model);
            int bad = 0;
            for (Index i = 0; i < x0.size(); ++i) {
                auto f = [&](double xi) {
                    Model mm = model;
                    VectorXd x = x0;
                    x(i) = xi;
                    unpack_parameters(mm, x);
                    return lower_bound(mm);
                };
                const double fd = oracle::richardson_derivative(f, x0(i), 1e-4);
                const double a = bv.gradient(i);
                if (std::abs(a - fd) > 1e-8 && oracle::rel_err(a, fd) > 1e-5) {
                    ++bad;
                    MESSAGE("variant " << to_string(v) << " flavour " << flavour << " coord " << i << ": " << a << " vs " << fd);
                }
            }
            CHECK(bad == 0);
        }
    }
}

TEST_CASE("fixed parameters get exactly zero gradient") {
    std::mt19937_64 rng(6);
    Model model = testing_models::random_model(Variant::Standard, rng, 8, 2, 3, 2, 1);
    model.q.fixed(2, 1) = true;
    model.kernel_f.set_fixed(0, true);
    model.fix_beta = true;
    model.fix_inducing = true;
    const VectorXd g = bound_gradients(model);
    const GradientSchema s = gradient_schema(model);
    CHECK(g(s.at("latent_mean").offset + 2 * 2 + 1) == 0.0);
    CHECK(g(s.at("latent_log_var").offset + 2 * 2 + 1) == 0.0);
    CHECK(g(s.at("kernel_f").offset) == 0.0);
    CHECK(g(s.at("log_beta").offset) == 0.0);
    CHECK(g.segment(s.at("inducing").offset, s.at("inducing").size).norm() == 0.0);
    CHECK(g(s.at("latent_mean").offset) != 0.0);
}

TEST_CASE("bound is invariant to data-point order in the factorised variant") {
    std::mt19937_64 rng(7);
    Model model = testing_models::random_model(Variant::Standard, rng, 9, 2, 3, 2, 0);
    Model perm = model;
    std::vector<Index> order{3, 0, 8, 1, 5, 2, 7, 4, 6};
    MatrixXd y = model.centred_y();
    for (Index i = 0; i < 9; ++i) {
        perm.q.mean.row(i) = model.q.mean.row(order[i]);
        perm.q.var.row(i) = model.q.var.row(order[i]);
        y.row(i) = model.centred_y().row(order[i]);
    }
    perm.outputs = {OutputBlock{{}, OutputData::from_y(y)}};
    CHECK(oracle::rel_err(lower_bound(perm), lower_bound(model)) < 1e-12);
}

TEST_CASE("multi-block outputs equal separate sums") {
    std::mt19937_64 rng(8);
    Model model = testing_models::random_model(Variant::Standard, rng, 6, 2, 3, 4, 0);
    const MatrixXd y = model.centred_y();
    Model split = model;
    split.outputs = {OutputBlock{{0, 2, 4}, OutputData::from_y(MatrixXd(y(std::vector<Index>{0, 2, 4}, Eigen::all)))},
                     OutputBlock{{}, OutputData::from_y(y.rightCols(2))}};
    const double expected =
        fhat(psi_statistics(model.kernel_f, model.q.mean(std::vector<Index>{0, 2, 4}, Eigen::all),
                            model.q.var(std::vector<Index>{0, 2, 4}, Eigen::all), model.inducing),
             regularised_kuu(model.kernel_f.matrix(model.inducing)),
             OutputData::from_y(MatrixXd(y(std::vector<Index>{0, 2, 4}, Eigen::all))),
             model.beta) +
        fhat(psi_statistics(model.kernel_f, model.q.mean, model.q.var, model.inducing),
             regularised_kuu(model.kernel_f.matrix(model.inducing)), OutputData::from_y(y.rightCols(2)), model.beta) -
        kl_factorized(model.q);
    CHECK(oracle::rel_err(lower_bound(split), expected) < 1e-12);

    // gradients through row subsets
    const BoundValue bv = evaluate_bound(split, true);
    const VectorXd x0 = pack_parameters(split);
    for (Index i = 0; i < x0.size(); ++i) {
        auto f = [&](double xi) {
            Model mm = split;
            VectorXd x = x0;
            x(i) = xi;
            unpack_parameters(mm, x);
            return lower_bound(mm);
        };
        const double fd = oracle::richardson_derivative(f, x0(i), 1e-4);
        CHECK(std::abs(bv.gradient(i) - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("schema and packing round trip") {
    std::mt19937_64 rng(9);
    for (Variant v : {Variant::Standard, Variant::Dynamical, Variant::UncertainInput}) {
        Model model = testing_models::random_model(v, rng, 6, 2, 3, 2, 1);
        const VectorXd x = pack_parameters(model);
        Model other = model;
        unpack_parameters(other, x);
        CHECK((pack_parameters(other) - x).cwiseAbs().maxCoeff() < 1e-14);
        const GradientSchema s = gradient_schema(model);
        CHECK(s.size == x.size());
        CHECK(s.sections.back().name == "log_beta");
    }
    Model model = testing_models::random_model(Variant::Standard, rng, 6, 2, 3, 2, 0);
    CHECK_THROWS_AS(unpack_parameters(model, VectorXd::Zero(3)), ArgumentError);
    model.beta = -1.0;
    CHECK_THROWS_AS(model.validate(), StateError);
}
