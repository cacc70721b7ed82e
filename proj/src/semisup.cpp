#include "vargplvm/semisup.hpp"

#include "vargplvm/errors.hpp"
#include "vargplvm/gp_regression.hpp"
#include "vargplvm/synthetic.hpp"
#include "vargplvm/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace vargplvm {

std::vector<Index> PartialInputs::complete_rows() const {
    std::vector<Index> out;
    for (Index i = 0; i < observed.rows(); ++i) {
        if (observed.row(i).all()) out.push_back(i);
    }
    return out;
}

std::vector<Index> PartialInputs::partial_rows() const {
    std::vector<Index> out;
    for (Index i = 0; i < observed.rows(); ++i) {
        if (!observed.row(i).all()) out.push_back(i);
    }
    return out;
}

Standardiser Standardiser::fit(const MatrixXd& a) {
    return fit(a, BoolMatrix::Constant(a.rows(), a.cols(), true));
}

Standardiser Standardiser::fit(const MatrixXd& a, const BoolMatrix& observed) {
    Standardiser s;
    s.mean = VectorXd::Zero(a.cols());
    s.scale = VectorXd::Ones(a.cols());
    for (Index j = 0; j < a.cols(); ++j) {
        double sum = 0.0, sq = 0.0;
        Index count = 0;
        for (Index i = 0; i < a.rows(); ++i) {
            if (!observed(i, j)) continue;
            sum += a(i, j);
            ++count;
        }
        if (count == 0) continue;
        s.mean(j) = sum / double(count);
        for (Index i = 0; i < a.rows(); ++i) {
            if (observed(i, j)) sq += (a(i, j) - s.mean(j)) * (a(i, j) - s.mean(j));
        }
        const double sd = std::sqrt(sq / double(count));
        if (count > 1 && sd > 0.0) s.scale(j) = sd;
    }
    return s;
}

MatrixXd Standardiser::apply(const MatrixXd& a) const {
    return (a.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

MatrixXd Standardiser::invert(const MatrixXd& a) const {
    return (a.array().rowwise() * scale.transpose().array()).matrix().rowwise() + mean.transpose();
}

namespace {

MatrixXd take_rows(const MatrixXd& a, const std::vector<Index>& rows) {
    MatrixXd out(Index(rows.size()), a.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(r) = a.row(rows[r]);
    return out;
}

Kernel default_kernel(const std::string& expr, Index q) {
    Kernel k = parse_kernel_expression(expr, q);
    VectorXd p = k.params();
    const auto names = k.param_names();
    for (Index i = 0; i < p.size(); ++i) {
        if (names[i].find("ard_weight") != std::string::npos) p(i) = 1.0 / double(q);
    }
    k.set_params(p);
    return k;
}

// A model whose latent space is the (standardised) input space.
Model input_model(const MatrixXd& mean, const MatrixXd& var, const BoolMatrix& fixed, const MatrixXd& y,
                  const Kernel& kernel, Index num_inducing, double beta, std::mt19937_64& rng) {
    Model m;
    m.variant = Variant::Standard;
    m.prior = LatentPrior::standard();
    m.q = FactorizedQ(mean, var);
    m.q.fixed = fixed;
    m.kernel_f = kernel;
    m.beta = beta;
    m.outputs = {OutputBlock{{}, OutputData::from_y(y)}};
    m.output_offset = VectorXd::Zero(y.cols());
    const Index n = mean.rows();
    std::vector<Index> order(n);
    std::iota(order.begin(), order.end(), Index(0));
    std::shuffle(order.begin(), order.end(), rng);
    std::normal_distribution<double> g(0.0, 0.1);
    m.inducing.resize(num_inducing, mean.cols());
    for (Index k = 0; k < num_inducing; ++k) {
        m.inducing.row(k) = mean.row(order[k % n]);
        if (k >= n) {
            for (Index j = 0; j < mean.cols(); ++j) m.inducing(k, j) += g(rng);
        }
    }
    m.validate();
    return m;
}

void fit(Model& model, const SemisupConfig& config) {
    TrainConfig tc;
    tc.fixed_beta_iters = config.fixed_beta_iters;
    tc.main_iters = {config.iters};
    train(model, tc);
}

}  // namespace

PredictiveMoments SemisupModel::predict(const MatrixXd& z_star, bool include_noise) const {
    if (z_star.cols() != z_std.mean.size()) throw ArgumentError("test inputs have the wrong number of columns");
    if (!z_star.allFinite()) throw ArgumentError("test inputs must be fully observed");
    const TestQ q{z_std.apply(z_star), MatrixXd::Zero(z_star.rows(), z_star.cols())};
    PredictiveMoments m = Predictor(model).moments(q, include_noise);
    m.mean = y_std.invert(m.mean);
    m.variance = m.variance.array().rowwise() * y_std.scale.transpose().array().square();
    return m;
}

SemisupModel semi_supervised_train(const PartialInputs& inputs, const MatrixXd& y, const SemisupConfig& config) {
    if (!(config.epsilon > 0.0)) throw ArgumentError("clamped-cell variance must be positive");
    const Index n = inputs.z.rows();
    const Index q = inputs.z.cols();
    if (inputs.observed.rows() != n || inputs.observed.cols() != q) throw ArgumentError("input mask has the wrong shape");
    if (y.rows() != n) throw ArgumentError("inputs and outputs have different numbers of rows");
    if (!y.allFinite()) throw ArgumentError("outputs must be fully observed");
    if (config.num_inducing < 1) throw ArgumentError("number of inducing points must be at least 1");
    const double eps = config.epsilon;

    SemisupModel out;
    out.z_std = Standardiser::fit(inputs.z, inputs.observed);
    out.y_std = Standardiser::fit(y);
    MatrixXd zs = out.z_std.apply(inputs.z);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < q; ++j)
            if (!inputs.observed(i, j)) zs(i, j) = 0.0;
    const MatrixXd ys = out.y_std.apply(y);

    const std::vector<Index> complete = inputs.complete_rows();
    const std::vector<Index> partial = inputs.partial_rows();
    std::mt19937_64 rng(config.seed);
    Kernel kernel = default_kernel(config.kernel, q);
    double beta = 100.0;
    MatrixXd inducing;

    // Step A: complete rows, inputs clamped
    Model first;
    if (!complete.empty()) {
        const Index nc = Index(complete.size());
        first = input_model(take_rows(zs, complete), MatrixXd::Constant(nc, q, eps),
                            BoolMatrix::Constant(nc, q, true), take_rows(ys, complete), kernel, config.num_inducing,
                            beta, rng);
        fit(first, config);
        if (partial.empty()) {
            out.model = std::move(first);
            return out;
        }
        kernel = first.kernel_f;
        beta = first.beta;
        inducing = first.inducing;
    } else {
        out.warnings.push_back("no fully observed rows: missing inputs start from the prior");
    }

    // Step B: latent inference for the missing cells of every partial row
    MatrixXd mean = zs;
    MatrixXd var = MatrixXd::Constant(n, q, eps);
    BoolMatrix fixed = inputs.observed;
    std::normal_distribution<double> g(0.0, 0.1);
    for (Index i : partial) {
        if (complete.empty()) {
            for (Index j = 0; j < q; ++j) {
                if (inputs.observed(i, j)) continue;
                mean(i, j) = g(rng);
                var(i, j) = 1.0;
            }
            continue;
        }
        TestOptions opts = config.test;
        opts.clamp_mask = inputs.observed.row(i);
        opts.clamp_mean = zs.row(i);
        opts.clamp_var = MatrixXd::Constant(1, q, eps);
        std::vector<Index> cols(y.cols());
        std::iota(cols.begin(), cols.end(), Index(0));
        const TestFit f = fit_test_latents(first, ys.row(i), cols, opts);
        for (Index j = 0; j < q; ++j) {
            if (inputs.observed(i, j)) continue;
            mean(i, j) = f.q.mean(0, j);
            var(i, j) = std::clamp(f.q.var(0, j), eps, 1.0);
        }
    }

    // Step C: everything, observed cells still clamped
    Model full = input_model(mean, var, fixed, ys, kernel, config.num_inducing, beta, rng);
    if (inducing.size() > 0) full.inducing = inducing;
    fit(full, config);
    out.model = std::move(full);
    return out;
}

std::vector<BenchmarkRow> semisup_benchmark(const SemisupBenchmarkConfig& config) {
    if (config.seeds < 1) throw ArgumentError("benchmark needs at least one seed");
    if (config.n_observed < 2 || config.n_test < 1) throw ArgumentError("benchmark sizes are too small");
    for (double f : config.missing_fractions) {
        if (f < 0.0 || f > 1.0) throw ArgumentError("missing fractions must lie in [0, 1]");
    }
    const Index no = config.n_observed, nu = config.n_partial, nt = config.n_test;
    const Index q = config.input_dim, p = config.output_dim;
    // (fraction index, method) -> per-seed MSE
    std::map<std::pair<std::size_t, std::string>, std::vector<double>> results;

    for (int s = 0; s < config.seeds; ++s) {
        std::mt19937_64 rng(config.seed + std::uint64_t(s));
        const RegressionData data = gp_regression_data(rng, no + nu + nt, q, p, config.noise);
        const MatrixXd z_train = data.z.topRows(no + nu);
        const MatrixXd y_train = data.y.topRows(no + nu);
        const MatrixXd z_test = data.z.bottomRows(nt);
        const MatrixXd y_test = data.y.bottomRows(nt);
        const Standardiser ys = Standardiser::fit(y_train);
        auto mse = [&](const MatrixXd& pred) {
            return (ys.apply(pred) - ys.apply(y_test)).squaredNorm() / double(nt * p);
        };

        const MatrixXd zo = data.z.topRows(no);
        const MatrixXd yo = data.y.topRows(no);
        const GpRegression gp = GpRegression::fit(zo, yo);
        const double gp_mse = mse(gp.predict_mean(z_test));
        MatrixXd nn(nt, p);
        for (Index i = 0; i < nt; ++i) {
            Index best = 0;
            (zo.rowwise() - z_test.row(i)).rowwise().squaredNorm().minCoeff(&best);
            nn.row(i) = yo.row(best);
        }
        const double nn_mse = mse(nn);
        const double mean_mse = mse(MatrixXd(y_train.colwise().mean().replicate(nt, 1)));

        for (std::size_t fi = 0; fi < config.missing_fractions.size(); ++fi) {
            PartialInputs inputs{z_train, BoolMatrix::Constant(no + nu, q, true)};
            std::vector<Index> cells(nu * q);
            std::iota(cells.begin(), cells.end(), Index(0));
            std::shuffle(cells.begin(), cells.end(), rng);
            const Index missing = Index(std::lround(config.missing_fractions[fi] * double(nu * q)));
            for (Index k = 0; k < missing; ++k) inputs.observed(no + cells[k] / q, cells[k] % q) = false;
            SemisupConfig mc = config.model;
            mc.seed = config.seed + std::uint64_t(s);
            const SemisupModel model = semi_supervised_train(inputs, y_train, mc);
            results[{fi, "semisup"}].push_back(mse(model.predict(z_test, false).mean));
            results[{fi, "gp"}].push_back(gp_mse);
            results[{fi, "nn"}].push_back(nn_mse);
            results[{fi, "mean"}].push_back(mean_mse);
        }
    }

    std::vector<BenchmarkRow> rows;
    for (std::size_t fi = 0; fi < config.missing_fractions.size(); ++fi) {
        for (const char* method : {"semisup", "gp", "nn", "mean"}) {
            const std::vector<double>& v = results[{fi, method}];
            const double mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
            double sq = 0.0;
            for (double x : v) sq += (x - mean) * (x - mean);
            const double sd = v.size() > 1 ? std::sqrt(sq / double(v.size() - 1)) : 0.0;
            rows.push_back({config.missing_fractions[fi], method, mean, sd / std::sqrt(double(v.size()))});
        }
    }
    return rows;
}

}  // namespace vargplvm
