#include "vargplvm/bound.hpp"

#include "vargplvm/errors.hpp"

#include <cmath>
#include <numbers>

namespace vargplvm {

namespace {

MatrixXd gram_factor(const MatrixXd& gram) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrised(gram));
    if (es.info() != Eigen::Success) throw NumericalError("output gram: eigendecomposition failed");
    const VectorXd& d = es.eigenvalues();
    const double tol = 1e-14 * std::max(1.0, d.cwiseAbs().maxCoeff()) * double(gram.rows());
    std::vector<Index> keep;
    for (Index i = d.size() - 1; i >= 0; --i) {
        if (d(i) > tol) keep.push_back(i);
    }
    MatrixXd f(gram.rows(), keep.size());
    for (std::size_t c = 0; c < keep.size(); ++c) f.col(c) = es.eigenvectors().col(keep[c]) * std::sqrt(d(keep[c]));
    return f;
}

}  // namespace

OutputData OutputData::from_y(const MatrixXd& y, bool keep_raw) {
    if (!y.allFinite()) throw ArgumentError("outputs contain non-finite values");
    OutputData out;
    out.p = y.cols();
    out.trace_yy = y.squaredNorm();
    if (y.cols() <= y.rows()) {
        out.factor = y;
    } else {
        out.factor = gram_factor(y * y.transpose());
    }
    if (keep_raw) out.y = y;
    return out;
}

OutputData OutputData::from_gram(const MatrixXd& gram, Index p) {
    if (gram.rows() != gram.cols()) throw ArgumentError("output gram must be square");
    if (p < 1) throw ArgumentError("output gram: column count must be positive");
    OutputData out;
    out.p = p;
    out.trace_yy = gram.trace();
    out.factor = gram_factor(gram);
    return out;
}

FhatTerms fhat_terms(double n, double p, double psi0, const MatrixXd& psi2, const MatrixXd& phi, double trace_yy,
                     const MatrixXd& kuu, double beta, bool gradients) {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw StateError("noise precision beta must be positive");
    const Index m = kuu.rows();
    const Cholesky lm(kuu);
    const MatrixXd li_psi2 = lm.solve_lower(psi2);
    const MatrixXd c = symmetrised(lm.solve_lower(MatrixXd(li_psi2.transpose())));
    const MatrixXd at = MatrixXd::Identity(m, m) + beta * c;
    const Cholesky la(at);
    const MatrixXd li_phi = lm.solve_lower(phi);
    const MatrixXd v = la.solve_lower(li_phi);

    FhatTerms out;
    const double quad = v.squaredNorm();
    out.value = 0.5 * p * n * (std::log(beta) - std::log(2.0 * std::numbers::pi)) - 0.5 * p * la.log_det() -
                0.5 * beta * trace_yy + 0.5 * beta * beta * quad - 0.5 * p * beta * psi0 + 0.5 * p * beta * c.trace();
    if (!std::isfinite(out.value)) throw NumericalError("collapsed bound is not finite");
    if (!gradients) return out;

    const MatrixXd li = lm.solve_lower(MatrixXd(MatrixXd::Identity(m, m)));
    const MatrixXd t = symmetrised(li.transpose() * li);
    const MatrixXd sigma = symmetrised(li.transpose() * la.inverse() * li);
    // Sigma Phi = Lm^-T La^-T v
    const MatrixXd sphi = lm.lower().transpose().triangularView<Eigen::Upper>().solve(
        la.lower().transpose().triangularView<Eigen::Upper>().solve(v));
    const MatrixXd sps = symmetrised(sphi * sphi.transpose());  // Sigma P Sigma
    const MatrixXd t_minus_s = t - sigma;

    out.g_psi0 = -0.5 * p * beta;
    out.g_phi = beta * beta * sphi;
    out.g_psi2 = 0.5 * p * beta * t_minus_s - 0.5 * beta * beta * beta * sps;
    out.g_kuu = 0.5 * p * t_minus_s - 0.5 * beta * beta * sps - 0.5 * p * beta * symmetrised(t * psi2 * t);
    out.g_beta = 0.5 * p * n / beta - 0.5 * p * sigma.cwiseProduct(psi2).sum() - 0.5 * trace_yy + beta * quad -
                 0.5 * beta * beta * sphi.cwiseProduct(psi2 * sphi).sum() - 0.5 * p * psi0 +
                 0.5 * p * t.cwiseProduct(psi2).sum();
    return out;
}

MatrixXd regularised_kuu(const MatrixXd& kuu) {
    MatrixXd out = kuu;
    if (kuu.rows() > 0) out.diagonal().array() += kInducingRegulariser * kuu.diagonal().mean();
    return out;
}

MatrixXd regularised_kuu_gradient(const MatrixXd& g) {
    MatrixXd out = g;
    if (g.rows() > 0) out.diagonal().array() += kInducingRegulariser * g.trace() / double(g.rows());
    return out;
}

double fhat(const PsiStats& psi, const MatrixXd& kuu, const OutputData& output, double beta) {
    if (psi.psi1.rows() != output.n()) throw ArgumentError("fhat: Psi1 rows do not match the outputs");
    const MatrixXd phi = psi.psi1.transpose() * output.factor;
    return fhat_terms(double(output.n()), double(output.p), psi.psi0, psi.psi2, phi, output.trace_yy, kuu, beta, false)
        .value;
}

PosteriorCache posterior_cache(const MatrixXd& kuu, const MatrixXd& psi2, double beta) {
    const Index m = kuu.rows();
    const Cholesky lm(kuu);
    const MatrixXd li = lm.solve_lower(MatrixXd(MatrixXd::Identity(m, m)));
    const MatrixXd c = symmetrised(li * psi2 * li.transpose());
    const Cholesky la(MatrixXd(MatrixXd::Identity(m, m) + beta * c));
    PosteriorCache out;
    out.kuu_inv = symmetrised(li.transpose() * li);
    out.sigma = symmetrised(li.transpose() * la.inverse() * li);
    return out;
}

}  // namespace vargplvm
