#include "vargplvm/variational.hpp"

#include "vargplvm/errors.hpp"

#include <algorithm>
#include <cmath>

namespace vargplvm {

FactorizedQ::FactorizedQ(MatrixXd mean_, MatrixXd var_)
    : mean(std::move(mean_)), var(std::move(var_)), fixed(BoolMatrix::Constant(mean.rows(), mean.cols(), false)) {
    validate();
}

void FactorizedQ::validate() const {
    if (mean.rows() != var.rows() || mean.cols() != var.cols()) throw ArgumentError("q(X): mean/variance shape mismatch");
    if (fixed.rows() != mean.rows() || fixed.cols() != mean.cols()) throw ArgumentError("q(X): fixed-mask shape mismatch");
    if (!(var.array() > 0.0).all() || !var.allFinite()) throw StateError("q(X): variances must be positive and finite");
}

void DynamicalQ::validate() const {
    if (mu_bar.rows() != lambda.rows() || mu_bar.cols() != lambda.cols()) {
        throw ArgumentError("dynamical q(X): mu_bar/lambda shape mismatch");
    }
    if (!(lambda.array() > 0.0).all() || !lambda.allFinite()) throw StateError("dynamical q(X): lambda must be positive");
}

DynamicalMarginals dynamical_transform(const MatrixXd& mu_bar, const MatrixXd& lambda, const MatrixXd& kx) {
    const Index n = mu_bar.rows();
    const Index q = mu_bar.cols();
    if (kx.rows() != n || kx.cols() != n) throw ArgumentError("dynamical_transform: Kx has the wrong size");
    if (lambda.rows() != n || lambda.cols() != q) throw ArgumentError("dynamical_transform: lambda has the wrong shape");
    DynamicalMarginals out;
    out.mean = kx * mu_bar;
    out.var.resize(n, q);
    out.logdet_btilde.resize(q);
    const MatrixXd eye = MatrixXd::Identity(n, n);
    for (Index j = 0; j < q; ++j) {
        const VectorXd sq = lambda.col(j).array().sqrt();
        const MatrixXd bt = eye + sq.asDiagonal() * kx * sq.asDiagonal();
        Eigen::LLT<MatrixXd> llt(bt);
        if (llt.info() != Eigen::Success) throw NumericalError("dynamical_transform: I + L^1/2 Kx L^1/2 is not positive definite");
        const MatrixXd& lower = llt.matrixLLT();
        const MatrixXd ls = lower.triangularView<Eigen::Lower>().solve(MatrixXd(sq.asDiagonal()));
        const MatrixXd v = ls * kx;
        MatrixXd s = kx - v.transpose() * v;
        s = symmetrised(s);
        out.var.col(j) = s.diagonal();
        out.cov.push_back(std::move(s));
        out.bhat.push_back(symmetrised(ls.transpose() * ls));
        out.logdet_btilde(j) = 2.0 * lower.diagonal().array().log().sum();
    }
    return out;
}

std::string to_string(PriorKind kind) {
    switch (kind) {
        case PriorKind::StandardNormal: return "standard";
        case PriorKind::Temporal: return "temporal";
        case PriorKind::UncertainInput: return "uncertain";
    }
    return "unknown";
}

PriorKind prior_kind_from_string(const std::string& name) {
    for (auto k : {PriorKind::StandardNormal, PriorKind::Temporal, PriorKind::UncertainInput}) {
        if (to_string(k) == name) return k;
    }
    throw ArgumentError("unknown prior kind '" + name + "'");
}

LatentPrior LatentPrior::standard() { return {}; }

LatentPrior LatentPrior::temporal(Kernel kernel_x, MatrixXd t, std::vector<Index> starts) {
    LatentPrior p;
    p.kind = PriorKind::Temporal;
    p.kernel_x = std::move(kernel_x);
    p.t = std::move(t);
    p.sequence_starts = normalise_starts(starts, p.t.rows());
    return p;
}

LatentPrior LatentPrior::uncertain(MatrixXd z, VectorXd z_var) {
    LatentPrior p;
    p.kind = PriorKind::UncertainInput;
    p.z = std::move(z);
    p.z_var = std::move(z_var);
    p.validate(p.z.rows());
    return p;
}

void LatentPrior::validate(Index n) const {
    if (kind == PriorKind::Temporal) {
        if (t.rows() != n) throw ArgumentError("temporal prior: need one timestamp row per data point");
        kernel_x.validate();
        normalise_starts(sequence_starts, n);
    } else if (kind == PriorKind::UncertainInput) {
        if (z.rows() != n) throw ArgumentError("uncertain-input prior: need one mean row per data point");
        if (z_var.size() != z.cols()) throw ArgumentError("uncertain-input prior: Sigma_z must have one entry per column");
        if (!(z_var.array() > 0.0).all()) throw StateError("uncertain-input prior: Sigma_z must be positive");
    }
}

std::vector<Index> normalise_starts(const std::vector<Index>& starts, Index n) {
    std::vector<Index> out = starts;
    if (out.empty() || out.front() != 0) out.insert(out.begin(), 0);
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i] <= out[i - 1]) throw ArgumentError("sequence starts must be strictly increasing");
    }
    if (n > 0 && out.back() >= n) throw ArgumentError("sequence start beyond the last data point");
    return out;
}

MatrixXd temporal_covariance(const Kernel& kernel_x, const MatrixXd& t, const std::vector<Index>& starts) {
    const Index n = t.rows();
    const auto s = normalise_starts(starts, n);
    MatrixXd kx = MatrixXd::Zero(n, n);
    for (std::size_t b = 0; b < s.size(); ++b) {
        const Index begin = s[b];
        const Index end = b + 1 < s.size() ? s[b + 1] : n;
        const MatrixXd tb = t.middleRows(begin, end - begin);
        kx.block(begin, begin, end - begin, end - begin) = kernel_x.matrix(tb, tb);
    }
    return kx;
}

MatrixXd block_mask(Index n, const std::vector<Index>& starts) {
    const auto s = normalise_starts(starts, n);
    MatrixXd mask = MatrixXd::Zero(n, n);
    for (std::size_t b = 0; b < s.size(); ++b) {
        const Index begin = s[b];
        const Index end = b + 1 < s.size() ? s[b + 1] : n;
        mask.block(begin, begin, end - begin, end - begin).setOnes();
    }
    return mask;
}

double kl_factorized(const FactorizedQ& q) {
    return 0.5 * (q.mean.array().square() + q.var.array() - q.var.array().log()).sum() - 0.5 * double(q.n() * q.q());
}

double kl_diagonal(const MatrixXd& mean, const MatrixXd& var, const MatrixXd& prior_mean, const MatrixXd& prior_var) {
    const auto ratio = var.array() / prior_var.array();
    return 0.5 * (ratio + (mean - prior_mean).array().square() / prior_var.array() - 1.0 - ratio.log()).sum();
}

void kl_diagonal_gradient(const MatrixXd& mean, const MatrixXd& var, const MatrixXd& prior_mean,
                          const MatrixXd& prior_var, MatrixXd& d_mean, MatrixXd& d_var) {
    d_mean = ((mean - prior_mean).array() / prior_var.array()).matrix();
    d_var = (0.5 * (prior_var.array().inverse() - var.array().inverse())).matrix();
}

double kl_dynamical(const DynamicalQ& q, const MatrixXd& kx, const DynamicalMarginals& marg) {
    double kl = 0.0;
    for (Index j = 0; j < q.q(); ++j) {
        const VectorXd& mb = q.mu_bar.col(j);
        kl += 0.5 * (-(marg.bhat[j].cwiseProduct(kx)).sum() + mb.dot(kx * mb) + marg.logdet_btilde(j));
    }
    return kl;
}

double kl_dynamical(const DynamicalQ& q, const MatrixXd& kx) {
    return kl_dynamical(q, kx, dynamical_transform(q.mu_bar, q.lambda, kx));
}

DynamicalGradient dynamical_chain(const DynamicalQ& q, const MatrixXd& kx, const DynamicalMarginals& marg,
                                  const MatrixXd& g_mean, const MatrixXd& g_var) {
    const Index n = q.n();
    DynamicalGradient out;
    out.d_mu_bar = kx * (g_mean - q.mu_bar);
    out.d_log_lambda.resize(n, q.q());
    out.d_kx = g_mean * q.mu_bar.transpose();
    const MatrixXd eye = MatrixXd::Identity(n, n);
    for (Index j = 0; j < q.q(); ++j) {
        const MatrixXd& s = marg.cov[j];
        const MatrixXd& bh = marg.bhat[j];
        const VectorXd w = g_var.col(j) + 0.5 * q.lambda.col(j);
        out.d_log_lambda.col(j) = -q.lambda.col(j).cwiseProduct(s.cwiseProduct(s) * w);
        const MatrixXd bk = bh * kx;
        const MatrixXd a = eye - bk;  // (I - Bhat Kx)
        const VectorXd& mb = q.mu_bar.col(j);
        out.d_kx += -0.5 * (bk * bh + mb * mb.transpose()) + a * g_var.col(j).asDiagonal() * a.transpose();
    }
    return out;
}

}  // namespace vargplvm
