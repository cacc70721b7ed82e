#include "vargplvm/training.hpp"

#include "vargplvm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace vargplvm {

namespace {

struct KernelDefaults {
    double variance = 1.0;
    double weight = 1.0;       // ARD weight (inverse squared lengthscale)
    double lengthscale = 1.0;  // Matern / periodic
    double noise = 1e-3;       // white and bias
    double jitter = 0.0;       // relative ARD weight jitter
};

Kernel with_defaults(const Kernel& k, Index dim, const KernelDefaults& d, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    auto weights = [&](double base) {
        VectorXd w(dim);
        for (Index j = 0; j < dim; ++j) w(j) = base * (1.0 + d.jitter * unit(rng));
        return w;
    };
    switch (k.family()) {
        case KernelFamily::RbfArd: return Kernel::rbf_ard(d.variance, weights(d.weight));
        case KernelFamily::LinearArd: return Kernel::linear_ard(weights(d.variance / double(dim)));
        case KernelFamily::Matern32: return Kernel::matern32(d.variance, d.lengthscale);
        case KernelFamily::PeriodicRbf: return Kernel::periodic(d.variance, 1.0, 2.5 * d.lengthscale);
        case KernelFamily::White: return Kernel::white(d.noise);
        case KernelFamily::Bias: return Kernel::bias(d.noise);
        case KernelFamily::Sum: {
            std::vector<Kernel> children;
            for (const Kernel& c : k.children()) children.push_back(with_defaults(c, dim, d, rng));
            return Kernel::sum(std::move(children));
        }
    }
    throw ArgumentError("unknown kernel family");
}

const Kernel* find_ard_leaf(const Kernel& k) {
    if (k.family() == KernelFamily::RbfArd || k.family() == KernelFamily::LinearArd) return &k;
    for (const Kernel& c : k.children()) {
        if (const Kernel* found = find_ard_leaf(c)) return found;
    }
    return nullptr;
}

std::string snapshot(const Model& model) {
    std::ostringstream os;
    os << "beta=" << model.beta << " kernel_f=[";
    const VectorXd p = model.kernel_f.params();
    const auto names = model.kernel_f.param_names();
    for (Index i = 0; i < p.size(); ++i) os << (i ? ", " : "") << names[i] << '=' << p(i);
    os << ']';
    return os.str();
}

}  // namespace

MatrixXd pca_scores(const MatrixXd& y, Index q) {
    const Index n = y.rows();
    if (q < 1) throw ArgumentError("latent dimension must be at least 1");
    if (q > std::min(n, y.cols())) {
        throw ArgumentError("latent dimension " + std::to_string(q) + " exceeds min(n, p) = " +
                            std::to_string(std::min(n, y.cols())));
    }
    const MatrixXd yc = y.rowwise() - y.colwise().mean();
    Eigen::BDCSVD<MatrixXd> svd(yc, Eigen::ComputeThinU);
    MatrixXd scores = svd.matrixU().leftCols(q);
    for (Index j = 0; j < q; ++j) {
        // fix the sign so the largest entry is positive
        Index imax = 0;
        scores.col(j).cwiseAbs().maxCoeff(&imax);
        if (scores(imax, j) < 0.0) scores.col(j) *= -1.0;
        const double mean = scores.col(j).mean();
        const double sd = std::sqrt((scores.col(j).array() - mean).square().mean());
        if (sd > 0.0) scores.col(j) = (scores.col(j).array() - mean) / sd;
    }
    return scores;
}

Model initialize(const MatrixXd& y, const TrainConfig& config, const LatentPrior& prior) {
    const Index n = y.rows();
    const Index p = y.cols();
    if (n < 2 || p < 1) throw ArgumentError("training data needs at least two rows and one column");
    if (!y.allFinite()) throw ArgumentError("training data must be finite (no missing values)");
    if (config.num_inducing < 1) throw ArgumentError("number of inducing points must be at least 1");
    if (!(config.init_variance > 0.0)) throw ArgumentError("initial latent variance must be positive");

    Model model;
    model.variant = config.variant;
    model.output_offset = config.center_outputs ? VectorXd(y.colwise().mean().transpose()) : VectorXd::Zero(p);
    const MatrixXd yc = y.rowwise() - model.output_offset.transpose();
    double var = yc.array().square().mean();
    if (config.center_outputs) var = (yc.rowwise() - yc.colwise().mean()).array().square().mean();
    if (!(var > 0.0)) var = 1.0;

    MatrixXd m_init;
    switch (config.variant) {
        case Variant::Standard:
            model.prior = LatentPrior::standard();
            m_init = pca_scores(yc, config.latent_dim);
            break;
        case Variant::Dynamical:
            if (prior.kind != PriorKind::Temporal) throw ArgumentError("dynamical variant needs timestamps");
            model.prior = prior;
            m_init = pca_scores(yc, config.latent_dim);
            break;
        case Variant::UncertainInput:
            if (prior.kind != PriorKind::UncertainInput) throw ArgumentError("uncertain-input variant needs prior means");
            if (prior.z.rows() != n) throw ArgumentError("uncertain-input prior means must have one row per data point");
            model.prior = prior;
            m_init = prior.z;
            break;
    }
    const Index q = m_init.cols();
    std::mt19937_64 rng(config.seed);

    // observed inputs keep their own scale; PCA scores have unit variance
    double input_var = 1.0;
    if (config.variant == Variant::UncertainInput) {
        input_var = (m_init.rowwise() - m_init.colwise().mean()).array().square().mean();
        if (!(input_var > 0.0)) input_var = 1.0;
    }
    KernelDefaults fd;
    fd.variance = var;
    fd.weight = 1.0 / (double(q) * input_var);
    fd.lengthscale = std::sqrt(double(q) * input_var);
    fd.noise = 1e-3 * var;
    fd.jitter = 0.01;
    model.kernel_f = with_defaults(parse_kernel_expression(config.kernel, q), q, fd, rng);

    const Index m = config.num_inducing;
    std::vector<Index> order(n);
    std::iota(order.begin(), order.end(), Index(0));
    std::shuffle(order.begin(), order.end(), rng);
    model.inducing.resize(m, q);
    std::normal_distribution<double> gauss(0.0, 0.1);
    for (Index k = 0; k < m; ++k) {
        model.inducing.row(k) = m_init.row(order[k % n]);
        if (k >= n) {
            for (Index j = 0; j < q; ++j) model.inducing(k, j) += gauss(rng);
        }
    }

    model.beta = 100.0 / var;
    model.outputs = {OutputBlock{{}, OutputData::from_y(yc)}};
    model.fix_inducing = config.fix_inducing;

    if (config.variant == Variant::Dynamical) {
        const Index d = model.prior.t.cols();
        if (model.prior.kernel_x.num_params() == 0) {
            double range = model.prior.t.maxCoeff() - model.prior.t.minCoeff();
            if (!(range > 0.0)) range = 1.0;
            KernelDefaults xd;
            xd.variance = 1.0;
            xd.lengthscale = range / 10.0;
            xd.weight = 1.0 / (xd.lengthscale * xd.lengthscale);
            xd.noise = 1e-2;
            model.prior.kernel_x = with_defaults(parse_kernel_expression(config.kernel_x, d), d, xd, rng);
        }
        model.prior.sequence_starts = normalise_starts(model.prior.sequence_starts, n);
        const MatrixXd kx = temporal_covariance(model.prior.kernel_x, model.prior.t, model.prior.sequence_starts);
        model.dyn.mu_bar = Cholesky(kx).solve(m_init);
        model.dyn.lambda = MatrixXd::Constant(n, q, 1.0 / config.init_variance);
    } else {
        model.q = FactorizedQ(m_init, MatrixXd::Constant(n, q, config.init_variance));
    }
    model.validate();
    return model;
}

OptimiserResult optimise_model(Model& model, const OptimiserOptions& options, std::vector<TraceRow>* trace) {
    model.validate();
    const Model reference = model;
    const VectorXd x_full = pack_parameters(model);
    const std::vector<bool> free = free_parameters(model);
    std::vector<Index> index;
    for (std::size_t i = 0; i < free.size(); ++i) {
        if (free[i]) index.push_back(Index(i));
    }
    const Index beta_at = gradient_schema(model).at("log_beta").offset;
    Index beta_free = -1;
    for (std::size_t k = 0; k < index.size(); ++k) {
        if (index[k] == beta_at) beta_free = Index(k);
    }

    VectorXd x0(index.size());
    for (std::size_t k = 0; k < index.size(); ++k) x0(k) = x_full(index[k]);

    Model work = model;
    auto load = [&](Model& target, const VectorXd& xf) {
        VectorXd x = x_full;
        for (std::size_t k = 0; k < index.size(); ++k) x(index[k]) = xf(k);
        unpack_parameters(target, x);
        copy_fixed_values(target, reference);
    };
    Objective objective = [&](const VectorXd& xf, VectorXd* gradient) {
        load(work, xf);
        const BoundValue b = evaluate_bound(work, gradient != nullptr);
        if (gradient) {
            gradient->resize(xf.size());
            for (std::size_t k = 0; k < index.size(); ++k) (*gradient)(k) = b.gradient(index[k]);
        }
        return b.value;
    };
    const int base = trace && !trace->empty() ? trace->back().iteration : 0;
    IterationObserver observer;
    if (trace) {
        observer = [&](int iteration, double value, const VectorXd& x) {
            const double beta = beta_free >= 0 ? std::exp(x(beta_free)) : reference.beta;
            trace->push_back({base + iteration, value, beta});
        };
    }

    OptimiserResult result;
    try {
        result = maximise(objective, x0, options, observer);
    } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " (" + snapshot(model) + ")");
    }
    load(model, result.x);
    return result;
}

TrainResult train(Model& model, const TrainConfig& config) {
    model.validate();
    TrainResult out;
    const BoundValue initial = evaluate_bound(model, false);
    if (!std::isfinite(initial.value)) throw NumericalError("bound is not finite at initialisation (" + snapshot(model) + ")");
    out.initial_bound = initial.value;
    out.trace.push_back({0, initial.value, model.beta});

    OptimiserOptions options;
    options.function_tolerance = config.function_tolerance;
    options.gradient_tolerance = config.gradient_tolerance;

    if (config.fixed_beta_iters > 0) {
        const bool saved = model.fix_beta;
        model.fix_beta = true;
        options.max_iterations = config.fixed_beta_iters;
        try {
            optimise_model(model, options, &out.trace);
        } catch (...) {
            model.fix_beta = saved;
            throw;
        }
        model.fix_beta = saved;
    }
    for (int iters : config.main_iters) {
        if (iters <= 0) continue;
        options.max_iterations = iters;
        optimise_model(model, options, &out.trace);
    }
    out.final_bound = lower_bound(model);
    model.trace.insert(model.trace.end(), out.trace.begin(), out.trace.end());
    return out;
}

ArdReport ard_report(const Model& model, double threshold) {
    const Kernel* leaf = find_ard_leaf(model.kernel_f);
    if (!leaf) throw CapabilityError("ARD report needs an rbfard or linard mapping kernel");
    const VectorXd params = leaf->params();
    const Index q = model.latent_dim();
    const VectorXd w = params.tail(q);
    const double wmax = w.maxCoeff();
    ArdReport report;
    report.threshold = threshold;
    for (Index j = 0; j < q; ++j) {
        report.entries.push_back({j, w(j), wmax > 0.0 ? w(j) / wmax : 0.0});
    }
    std::stable_sort(report.entries.begin(), report.entries.end(),
                     [](const ArdEntry& a, const ArdEntry& b) { return a.weight > b.weight; });
    for (const auto& e : report.entries) {
        if (e.normalised >= threshold) ++report.effective_dim;
    }
    return report;
}

}  // namespace vargplvm
