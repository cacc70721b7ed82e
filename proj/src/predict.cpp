#include "vargplvm/predict.hpp"

#include "vargplvm/errors.hpp"
#include "vargplvm/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace vargplvm {

namespace {

MatrixXd take_cols(const MatrixXd& a, const std::vector<Index>& cols) {
    MatrixXd out(a.rows(), Index(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) out.col(k) = a.col(cols[k]);
    return out;
}

VectorXd take(const VectorXd& a, const std::vector<Index>& idx) {
    VectorXd out(Index(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out(k) = a(idx[k]);
    return out;
}

std::vector<Index> all_columns(Index p) {
    std::vector<Index> c(p);
    for (Index j = 0; j < p; ++j) c[j] = j;
    return c;
}

std::vector<Index> complement(const std::vector<Index>& cols, Index p) {
    std::vector<bool> seen(p, false);
    for (Index c : cols) {
        if (c < 0 || c >= p) throw ArgumentError("observed column index out of range");
        if (seen[c]) throw ArgumentError("observed column listed twice");
        seen[c] = true;
    }
    std::vector<Index> out;
    for (Index j = 0; j < p; ++j) {
        if (!seen[j]) out.push_back(j);
    }
    return out;
}

const MatrixXd& training_outputs(const Model& model) {
    if (model.outputs.size() != 1) throw StateError("prediction needs a model with a single output block");
    return model.centred_y();
}

struct SequenceRange {
    Index begin = 0;
    Index end = 0;
    Index index = 0;
};

SequenceRange sequence_range(const Model& model, Index sequence) {
    const std::vector<Index> starts = normalise_starts(model.prior.sequence_starts, model.n());
    const Index count = Index(starts.size());
    if (sequence < 0) sequence = count - 1;
    if (sequence >= count) throw ArgumentError("sequence index out of range");
    return {starts[sequence], sequence + 1 < count ? starts[sequence + 1] : model.n(), sequence};
}

// Indices of the `k` training rows nearest to each test row, closest first,
// by Euclidean distance over the observed columns after scaling every column
// to unit variance.
std::vector<std::vector<Index>> nearest_rows(const MatrixXd& y_train_obs, const MatrixXd& y_test_obs, Index k = 1) {
    const Index n = y_train_obs.rows();
    k = std::min(k, n);
    VectorXd scale(y_train_obs.cols());
    for (Index j = 0; j < scale.size(); ++j) {
        const double mean = y_train_obs.col(j).mean();
        const double sd = std::sqrt((y_train_obs.col(j).array() - mean).square().mean());
        scale(j) = sd > 0.0 ? 1.0 / sd : 1.0;
    }
    const MatrixXd a = y_train_obs * scale.asDiagonal();
    const MatrixXd b = y_test_obs * scale.asDiagonal();
    std::vector<std::vector<Index>> out(b.rows());
    std::vector<Index> order(n);
    for (Index i = 0; i < b.rows(); ++i) {
        const VectorXd d = (a.rowwise() - b.row(i)).rowwise().squaredNorm();
        std::iota(order.begin(), order.end(), Index(0));
        std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) { return d(x) < d(y); });
        out[i].assign(order.begin(), order.begin() + k);
    }
    return out;
}

void fix_all(Kernel& k) {
    for (Index i = 0; i < k.num_params(); ++i) k.set_fixed(i, true);
}

// Test-time bound when q(X, X*) = q(X) q(X*) with q(X) held at its trained
// value: only the observed-column bound of the augmented data and KL(q(X*))
// change with q(X*); the training statistics are computed once.
class FactorisedTestBound {
public:
    FactorisedTestBound(const Model& model, const LatentMarginals& marg, const MatrixXd& y_star_obs,
                        const std::vector<Index>& observed, const std::vector<Index>& unobserved,
                        MatrixXd prior_mean, MatrixXd prior_var)
        : model_(model), y_star_(y_star_obs), prior_mean_(std::move(prior_mean)), prior_var_(std::move(prior_var)) {
        const MatrixXd& y = training_outputs(model);
        const PsiStats psi = psi_statistics(model.kernel_f, marg.mean, marg.var, model.inducing);
        kuu_ = regularised_kuu(model.kernel_f.matrix(model.inducing));
        n_ = double(model.n());
        p_o_ = double(observed.size());
        psi0_ = psi.psi0;
        psi2_ = psi.psi2;
        const MatrixXd y_o = take_cols(y, observed);
        phi_ = psi.psi1.transpose() * y_o;
        trace_yy_ = y_o.squaredNorm();
        const BoundValue trained = evaluate_bound(model, false);
        training_bound_ = trained.value;
        double fhat_u = 0.0;
        if (!unobserved.empty()) {
            const MatrixXd y_u = take_cols(y, unobserved);
            fhat_u = fhat_terms(n_, double(unobserved.size()), psi0_, psi2_, psi.psi1.transpose() * y_u,
                                y_u.squaredNorm(), kuu_, model.beta, false)
                         .value;
        }
        fhat_o_train_ = fhat_terms(n_, p_o_, psi0_, psi2_, phi_, trace_yy_, kuu_, model.beta, false).value;
        constant_ = fhat_u - trained.kl;
    }

    double training_bound() const { return training_bound_; }
    double fhat_observed_training() const { return fhat_o_train_; }
    double constant() const { return constant_; }

    double value(const MatrixXd& mean, const MatrixXd& var, MatrixXd* g_mean, MatrixXd* g_var) const {
        const bool grad = g_mean != nullptr;
        const PsiStats ps = psi_statistics(model_.kernel_f, mean, var, model_.inducing);
        const FhatTerms t = fhat_terms(n_ + double(mean.rows()), p_o_, psi0_ + ps.psi0, psi2_ + ps.psi2,
                                       phi_ + ps.psi1.transpose() * y_star_, trace_yy_ + y_star_.squaredNorm(), kuu_,
                                       model_.beta, grad);
        const double kl = kl_diagonal(mean, var, prior_mean_, prior_var_);
        if (grad) {
            const MatrixXd g1 = y_star_ * t.g_phi.transpose();
            const PsiGradients pg = psi_contract(model_.kernel_f, mean, var, model_.inducing, t.g_psi0, g1, t.g_psi2);
            MatrixXd dm, dv;
            kl_diagonal_gradient(mean, var, prior_mean_, prior_var_, dm, dv);
            *g_mean = pg.d_mean - dm;
            *g_var = pg.d_var - dv;
        }
        return constant_ + t.value - kl;
    }

private:
    const Model& model_;
    MatrixXd y_star_;
    MatrixXd prior_mean_;
    MatrixXd prior_var_;
    MatrixXd kuu_;
    double n_ = 0.0;
    double p_o_ = 0.0;
    double psi0_ = 0.0;
    MatrixXd psi2_;
    MatrixXd phi_;
    double trace_yy_ = 0.0;
    double training_bound_ = 0.0;
    double fhat_o_train_ = 0.0;
    double constant_ = 0.0;
};

OptimiserOptions optimiser_options(const TestOptions& o) {
    OptimiserOptions opts;
    opts.max_iterations = o.max_iterations;
    opts.function_tolerance = o.function_tolerance;
    opts.gradient_tolerance = o.gradient_tolerance;
    return opts;
}

TestFit fit_factorised(const Model& model, const LatentMarginals& marg, const MatrixXd& y_star,
                       const std::vector<Index>& observed, const std::vector<Index>& unobserved,
                       const TestOptions& options, MatrixXd prior_mean, MatrixXd prior_var) {
    const Index ns = y_star.rows();
    const Index q = model.latent_dim();
    const FactorisedTestBound bound(model, marg, y_star, observed, unobserved, std::move(prior_mean),
                                    std::move(prior_var));
    TestFit fit;
    fit.observed = observed;
    fit.unobserved = unobserved;
    fit.training_bound = bound.training_bound();

    const Index restarts = std::max(1, options.restarts);
    const auto neighbours = nearest_rows(take_cols(training_outputs(model), observed), y_star, restarts);
    const bool clamped = options.clamp_mask.size() > 0;
    if (clamped && (options.clamp_mask.rows() != ns || options.clamp_mask.cols() != q ||
                    options.clamp_mean.rows() != ns || options.clamp_mean.cols() != q ||
                    options.clamp_var.rows() != ns || options.clamp_var.cols() != q)) {
        throw ArgumentError("clamped test cells must be given as n* x q matrices");
    }
    // full layout: means row-major, then log variances row-major
    VectorXd full(2 * ns * q);
    std::vector<Index> free;
    for (Index i = 0; i < ns; ++i) {
        for (Index j = 0; j < q; ++j) {
            const bool fixed = clamped && options.clamp_mask(i, j);
            full(i * q + j) = fixed ? options.clamp_mean(i, j) : marg.mean(neighbours[i][0], j);
            full(ns * q + i * q + j) = std::log(fixed ? options.clamp_var(i, j) : marg.var(neighbours[i][0], j));
            if (!fixed) free.push_back(i * q + j);
        }
    }
    const std::size_t half = free.size();
    for (std::size_t k = 0; k < half; ++k) free.push_back(ns * q + free[k]);
    VectorXd x0(free.size());
    for (std::size_t k = 0; k < free.size(); ++k) x0(k) = full(free[k]);

    auto unpack = [&](const VectorXd& x, MatrixXd& mean, MatrixXd& var) {
        VectorXd all = full;
        for (std::size_t k = 0; k < free.size(); ++k) all(free[k]) = x(k);
        mean.resize(ns, q);
        var.resize(ns, q);
        for (Index i = 0; i < ns; ++i) {
            for (Index j = 0; j < q; ++j) {
                mean(i, j) = all(i * q + j);
                var(i, j) = std::exp(all(ns * q + i * q + j));
                if (clamped && options.clamp_mask(i, j)) var(i, j) = options.clamp_var(i, j);
            }
        }
    };
    Objective objective = [&](const VectorXd& x, VectorXd* g) {
        MatrixXd mean, var, gm, gv;
        unpack(x, mean, var);
        const double v = bound.value(mean, var, g ? &gm : nullptr, g ? &gv : nullptr);
        if (!std::isfinite(v)) throw NumericalError("test bound is not finite");
        if (g) {
            g->resize(x.size());
            for (std::size_t k = 0; k < free.size(); ++k) {
                const Index f = free[k];
                if (f < ns * q) {
                    (*g)(k) = gm(f / q, f % q);
                } else {
                    const Index c = f - ns * q;
                    (*g)(k) = gv(c / q, c % q) * var(c / q, c % q);
                }
            }
        }
        return v;
    };
    IterationObserver observer = [&](int it, double value, const VectorXd&) {
        fit.trace.push_back({it, value, model.beta});
    };
    // restart r starts every row from its r-th nearest neighbour; the best
    // final bound wins
    OptimiserResult best;
    best.value = -std::numeric_limits<double>::infinity();
    for (Index r = 0; r < Index(neighbours.empty() ? 1 : neighbours[0].size()); ++r) {
        VectorXd start = x0;
        if (r > 0) {
            for (std::size_t k = 0; k < free.size(); ++k) {
                const Index f = free[k];
                const Index cell = f < ns * q ? f : f - ns * q;
                const Index src = neighbours[cell / q][r];
                start(k) = f < ns * q ? marg.mean(src, cell % q) : std::log(marg.var(src, cell % q));
            }
        }
        std::vector<TraceRow> saved = std::move(fit.trace);
        fit.trace.clear();
        OptimiserResult res = maximise(objective, start, optimiser_options(options), observer);
        if (res.value > best.value) {
            best = std::move(res);
        } else {
            fit.trace = std::move(saved);
        }
    }
    unpack(best.x, fit.q.mean, fit.q.var);
    fit.bound = best.value;
    fit.iterations = best.iterations;
    return fit;
}

// The dynamical test phase: test rows join a training sequence and the whole
// coupled q(X, X*) is re-optimised with every model hyperparameter fixed.
TestFit fit_coupled(const Model& model, const LatentMarginals& marg, const MatrixXd& y_star,
                    const std::vector<Index>& observed, const std::vector<Index>& unobserved,
                    const TestOptions& options, const MatrixXd& t_star, Index sequence) {
    const Index n = model.n();
    const Index ns = y_star.rows();
    const Index q = model.latent_dim();
    const SequenceRange seq = sequence_range(model, sequence);
    const Index at = seq.end;  // test rows are inserted here
    auto row_of = [&](Index r) { return r < at ? r : r + ns; };

    Model aug;
    aug.variant = Variant::Dynamical;
    aug.kernel_f = model.kernel_f;
    fix_all(aug.kernel_f);
    aug.inducing = model.inducing;
    aug.beta = model.beta;
    aug.fix_beta = true;
    aug.fix_inducing = true;
    aug.output_offset = model.output_offset;

    MatrixXd t(n + ns, model.prior.t.cols());
    for (Index r = 0; r < n; ++r) t.row(row_of(r)) = model.prior.t.row(r);
    t.middleRows(at, ns) = t_star;
    std::vector<Index> starts = normalise_starts(model.prior.sequence_starts, n);
    for (auto& s : starts) {
        if (s > seq.begin) s += ns;
    }
    Kernel kx = model.prior.kernel_x;
    fix_all(kx);
    aug.prior = LatentPrior::temporal(kx, t, starts);

    const MatrixXd& y = training_outputs(model);
    if (!unobserved.empty()) {
        std::vector<Index> rows(n);
        for (Index r = 0; r < n; ++r) rows[r] = row_of(r);
        aug.outputs.push_back({rows, OutputData::from_y(take_cols(y, unobserved))});
    }
    MatrixXd y_o(n + ns, Index(observed.size()));
    const MatrixXd y_train_o = take_cols(y, observed);
    for (Index r = 0; r < n; ++r) y_o.row(row_of(r)) = y_train_o.row(r);
    y_o.middleRows(at, ns) = y_star;
    aug.outputs.push_back({{}, OutputData::from_y(y_o)});

    const std::vector<Index> nn = [&] {
        std::vector<Index> first;
        for (const auto& v : nearest_rows(y_train_o, y_star)) first.push_back(v[0]);
        return first;
    }();
    MatrixXd m0(n + ns, q);
    MatrixXd lambda(n + ns, q);
    for (Index r = 0; r < n; ++r) {
        m0.row(row_of(r)) = marg.mean.row(r);
        lambda.row(row_of(r)) = model.dyn.lambda.row(r);
    }
    for (Index i = 0; i < ns; ++i) {
        m0.row(at + i) = marg.mean.row(nn[i]);
        lambda.row(at + i) = model.dyn.lambda.row(nn[i]);
    }
    const MatrixXd kx_aug = temporal_covariance(kx, t, starts);
    aug.dyn.mu_bar = Cholesky(kx_aug).solve(m0);
    aug.dyn.lambda = lambda;
    aug.validate();

    TestFit fit;
    fit.observed = observed;
    fit.unobserved = unobserved;
    fit.training_bound = lower_bound(model);
    const OptimiserResult r = optimise_model(aug, optimiser_options(options), &fit.trace);
    const LatentMarginals lm = latent_marginals(aug);
    fit.q.mean = lm.mean.middleRows(at, ns);
    fit.q.var = lm.var.middleRows(at, ns);
    fit.bound = r.value;
    fit.iterations = r.iterations;
    return fit;
}

}  // namespace

Predictor::Predictor(const Model& model) : model_(model) {
    model.validate();
    marg_ = latent_marginals(model);
    const PsiStats psi = psi_statistics(model.kernel_f, marg_.mean, marg_.var, model.inducing);
    kuu_ = regularised_kuu(model.kernel_f.matrix(model.inducing));
    post_ = posterior_cache(kuu_, psi.psi2, model.beta);
    b_ = model.beta * post_.sigma * psi.psi1.transpose() * training_outputs(model);
}

PredictiveMoments Predictor::moments(const TestQ& q, const std::vector<Index>& cols, bool include_noise) const {
    const Index ns = q.mean.rows();
    if (q.mean.cols() != model_.latent_dim() || q.var.rows() != ns || q.var.cols() != q.mean.cols()) {
        throw ArgumentError("test latent distribution has the wrong shape");
    }
    if ((q.var.array() < 0.0).any()) throw ArgumentError("test latent variances must be non-negative");
    PredictiveMoments out;
    out.cols = cols;
    out.noise_included = include_noise;
    out.mean.resize(ns, Index(cols.size()));
    out.variance.resize(ns, Index(cols.size()));
    if (ns == 0) return out;

    const MatrixXd b = take_cols(b_, cols);
    const VectorXd offset = take(model_.output_offset, cols);
    const PsiStats ps = psi_statistics(model_.kernel_f, q.mean, q.var, model_.inducing, true);
    const MatrixXd t_minus_sigma = post_.kuu_inv - post_.sigma;
    const double noise = include_noise ? 1.0 / model_.beta : 0.0;
    for (Index i = 0; i < ns; ++i) {
        const VectorXd psi1 = ps.psi1.row(i).transpose();
        const MatrixXd psi2 = psi2_term(model_.kernel_f, q.mean.row(i).transpose(), q.var.row(i).transpose(),
                                        model_.inducing);
        out.mean.row(i) = (b.transpose() * psi1 + offset).transpose();
        const MatrixXd centred = psi2 - psi1 * psi1.transpose();
        const double shared = ps.psi0_terms(i) - (t_minus_sigma.cwiseProduct(psi2)).sum();
        for (Index k = 0; k < b.cols(); ++k) {
            const double v = b.col(k).dot(centred * b.col(k)) + shared;
            out.variance(i, k) = std::max(v, 0.0) + noise;
        }
    }
    return out;
}

PredictiveMoments Predictor::moments(const TestQ& q, bool include_noise) const {
    return moments(q, all_columns(model_.p()), include_noise);
}

TestFit fit_test_latents(const Model& model, const MatrixXd& y_observed, const std::vector<Index>& observed,
                         const TestOptions& options, const MatrixXd& t_star, Index sequence) {
    model.validate();
    const Index p = model.p();
    if (observed.empty()) throw ArgumentError("at least one output column must be observed");
    const std::vector<Index> unobserved = complement(observed, p);
    if (y_observed.cols() != Index(observed.size())) {
        throw ArgumentError("test data has " + std::to_string(y_observed.cols()) + " columns, expected " +
                            std::to_string(observed.size()));
    }
    if (!y_observed.allFinite()) throw ArgumentError("observed test values must be finite");
    const Index ns = y_observed.rows();
    const MatrixXd y_star = y_observed.rowwise() - take(model.output_offset, observed).transpose();
    const LatentMarginals marg = latent_marginals(model);
    const Index q = model.latent_dim();

    if (model.variant == Variant::Dynamical) {
        if (t_star.rows() != ns || t_star.cols() != model.prior.t.cols()) {
            throw ArgumentError("dynamical prediction needs one timestamp row per test row");
        }
        if (options.factorised_dynamical) {
            const TestQ prior = forecast_latents(model, t_star, sequence);
            return fit_factorised(model, marg, y_star, observed, unobserved, options, prior.mean,
                                  prior.var.cwiseMax(1e-12));
        }
        if (options.clamp_mask.size() > 0) throw CapabilityError("clamped test cells need a factorised test phase");
        return fit_coupled(model, marg, y_star, observed, unobserved, options, t_star, sequence);
    }
    return fit_factorised(model, marg, y_star, observed, unobserved, options, MatrixXd::Zero(ns, q),
                          MatrixXd::Ones(ns, q));
}

double test_bound(const Model& model, const MatrixXd& y_observed, const std::vector<Index>& observed,
                  const TestQ& q_star) {
    if (model.variant == Variant::Dynamical) throw CapabilityError("test_bound needs a factorised model");
    model.validate();
    const std::vector<Index> unobserved = complement(observed, model.p());
    const MatrixXd y_star = y_observed.rowwise() - take(model.output_offset, observed).transpose();
    const Index ns = y_star.rows();
    const FactorisedTestBound bound(model, latent_marginals(model), y_star, observed, unobserved,
                                    MatrixXd::Zero(ns, model.latent_dim()), MatrixXd::Ones(ns, model.latent_dim()));
    return bound.value(q_star.mean, q_star.var, nullptr, nullptr);
}

Reconstruction reconstruct(const Model& model, const MatrixXd& y_observed, const std::vector<Index>& observed,
                           const TestOptions& options, const MatrixXd& t_star, Index sequence) {
    if (complement(observed, model.p()).empty()) {
        throw ArgumentError("every output column is observed; nothing to reconstruct (use the density command)");
    }
    Reconstruction out;
    out.fit = fit_test_latents(model, y_observed, observed, options, t_star, sequence);
    out.moments = Predictor(model).moments(out.fit.q, out.fit.unobserved, options.include_noise);
    return out;
}

double log_density(const Model& model, const MatrixXd& y_star, const TestOptions& options, const MatrixXd& t_star,
                   Index sequence) {
    if (y_star.rows() == 0) return 0.0;
    if (y_star.cols() != model.p()) throw ArgumentError("test data must have one column per output");
    const TestFit fit = fit_test_latents(model, y_star, all_columns(model.p()), options, t_star, sequence);
    return fit.bound - fit.training_bound;
}

VectorXd log_density_rows(const Model& model, const MatrixXd& y_star, const TestOptions& options) {
    if (model.variant == Variant::Dynamical) {
        throw CapabilityError("per-row densities need timestamps for a dynamical model; use log_density");
    }
    VectorXd out(y_star.rows());
    for (Index i = 0; i < y_star.rows(); ++i) out(i) = log_density(model, y_star.row(i), options);
    return out;
}

TestQ forecast_latents(const Model& model, const MatrixXd& t_star, Index sequence) {
    if (model.variant != Variant::Dynamical || model.prior.kind != PriorKind::Temporal) {
        throw CapabilityError("forecasting needs a dynamical model");
    }
    model.validate();
    if (t_star.cols() != model.prior.t.cols()) throw ArgumentError("timestamps have the wrong number of columns");
    const SequenceRange seq = sequence_range(model, sequence);
    const Index len = seq.end - seq.begin;
    const Kernel& kx = model.prior.kernel_x;
    const MatrixXd kxx = temporal_covariance(kx, model.prior.t, model.prior.sequence_starts);
    const DynamicalMarginals dm = dynamical_transform(model.dyn.mu_bar, model.dyn.lambda, kxx);

    const MatrixXd ts = model.prior.t.middleRows(seq.begin, len);
    MatrixXd ksn = kx.matrix(t_star, ts);
    if (!identical_points(t_star, ts)) {
        // a test time that coincides with a training time refers to the same
        // latent value, so the white part of the covariance applies there too
        const double white = white_variance(kx);
        if (white > 0.0) {
            for (Index i = 0; i < t_star.rows(); ++i)
                for (Index k = 0; k < len; ++k)
                    if ((t_star.row(i).array() == ts.row(k).array()).all()) ksn(i, k) += white;
        }
    }
    const VectorXd kss = kx.diagonal(t_star);

    TestQ out;
    const Index q = model.latent_dim();
    out.mean = ksn * model.dyn.mu_bar.middleRows(seq.begin, len);
    out.var.resize(t_star.rows(), q);
    for (Index j = 0; j < q; ++j) {
        const MatrixXd bhat = dm.bhat[j].block(seq.begin, seq.begin, len, len);
        const VectorXd reduction = (ksn * bhat).cwiseProduct(ksn).rowwise().sum();
        out.var.col(j) = (kss - reduction).cwiseMax(0.0);
    }
    return out;
}

Forecast forecast(const Model& model, const MatrixXd& t_star, Index sequence, bool include_noise) {
    Forecast out;
    out.q = forecast_latents(model, t_star, sequence);
    out.moments = Predictor(model).moments(out.q, include_noise);
    return out;
}

AutoregressiveData autoregress_dataset(const MatrixXd& y, Index tau) {
    const Index n = y.rows();
    const Index p = y.cols();
    if (tau < 1) throw ArgumentError("window size must be at least 1");
    if (n <= tau) throw ArgumentError("series of length " + std::to_string(n) + " is too short for window " +
                                      std::to_string(tau));
    AutoregressiveData out;
    out.z.resize(n - tau, tau * p);
    out.target = y.bottomRows(n - tau);
    for (Index i = 0; i < n - tau; ++i) {
        for (Index k = 0; k < tau; ++k) out.z.block(i, k * p, 1, p) = y.row(i + k);
    }
    return out;
}

Model train_autoregressive(const MatrixXd& series, Index tau, TrainConfig config, double relative_input_variance) {
    if (!(relative_input_variance > 0.0)) throw ArgumentError("relative input variance must be positive");
    const AutoregressiveData d = autoregress_dataset(series, tau);
    VectorXd s = (d.z.rowwise() - d.z.colwise().mean()).array().square().colwise().mean().transpose();
    for (Index j = 0; j < s.size(); ++j) {
        if (!(s(j) > 0.0)) s(j) = 1.0;
    }
    s *= relative_input_variance;
    config.variant = Variant::UncertainInput;
    config.latent_dim = d.z.cols();
    config.init_variance = s.mean();
    Model model = initialize(d.target, config, LatentPrior::uncertain(d.z, s));
    train(model, config);
    return model;
}

IterativePrediction iterative_predict(const Model& model, const MatrixXd& window, int steps, bool propagate_variance) {
    if (steps < 1) throw ArgumentError("number of prediction steps must be at least 1");
    const Index tau = window.rows();
    const Index p = window.cols();
    if (p != model.p() || tau * p != model.latent_dim()) {
        throw ArgumentError("window shape does not match the model's input width");
    }
    const Predictor predictor(model);
    TestQ q;
    q.mean.resize(1, tau * p);
    for (Index k = 0; k < tau; ++k) q.mean.block(0, k * p, 1, p) = window.row(k);
    q.var = MatrixXd::Zero(1, tau * p);

    IterativePrediction out;
    out.mean.resize(steps, p);
    out.variance.resize(steps, p);
    const Index keep = (tau - 1) * p;
    for (int s = 0; s < steps; ++s) {
        const PredictiveMoments m = predictor.moments(q, true);
        out.mean.row(s) = m.mean.row(0);
        out.variance.row(s) = m.variance.row(0);
        MatrixXd mean(1, tau * p), var(1, tau * p);
        mean.leftCols(keep) = q.mean.rightCols(keep);
        var.leftCols(keep) = q.var.rightCols(keep);
        mean.rightCols(p) = m.mean;
        var.rightCols(p) = propagate_variance ? m.variance : MatrixXd::Zero(1, p);
        q.mean = mean;
        q.var = var;
    }
    return out;
}

}  // namespace vargplvm
