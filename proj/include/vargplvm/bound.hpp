#pragma once

#include "vargplvm/psi_stats.hpp"

namespace vargplvm {

// Outputs as seen by the bound: only Y Y^T enters, held through a factor F
// with F F^T = Y Y^T. When p <= n the factor is Y itself; otherwise it is
// taken from the eigendecomposition of the n x n gram, so the bound never
// touches more than n columns.
struct OutputData {
    Index p = 0;
    MatrixXd factor;       // n x r
    double trace_yy = 0.0;
    MatrixXd y;            // raw outputs, empty if only the gram was supplied

    static OutputData from_y(const MatrixXd& y, bool keep_raw = true);
    static OutputData from_gram(const MatrixXd& gram, Index p);

    Index n() const { return factor.rows(); }
    bool has_raw() const { return y.rows() == n() && y.cols() == p; }
    MatrixXd gram() const { return factor * factor.transpose(); }
};

// The collapsed bound Fhat summed over p outputs, written in terms of
// sufficient statistics: psi0, psi2, Phi = Psi1^T F and tr(Y Y^T).
//
//   Fhat = p n/2 (log beta - log 2 pi) - p/2 log|I + beta C| - beta/2 tr(YY^T)
//        + beta^2/2 tr(Phi^T Sigma Phi) - p beta/2 psi0 + p beta/2 tr(C)
//
// with C = Lm^-1 Psi2 Lm^-T, Kuu = Lm Lm^T and Sigma = (Kuu + beta Psi2)^-1.
struct FhatTerms {
    double value = 0.0;
    // Partials, filled when requested. g_beta is w.r.t. beta itself.
    double g_psi0 = 0.0;
    MatrixXd g_phi;   // m x r
    MatrixXd g_psi2;  // m x m
    MatrixXd g_kuu;   // m x m
    double g_beta = 0.0;
};

FhatTerms fhat_terms(double n, double p, double psi0, const MatrixXd& psi2, const MatrixXd& phi, double trace_yy,
                     const MatrixXd& kuu, double beta, bool gradients);

// Kuu as used by the bound: k(Xu, Xu) + delta I with delta a fixed fraction of
// the mean diagonal. Inducing points that drift close together (or short ARD
// weights) otherwise make the bound numerically noisy long before the
// Cholesky fails. The second function turns a gradient w.r.t. the regularised
// matrix into one w.r.t. k(Xu, Xu), delta included.
inline constexpr double kInducingRegulariser = 1e-8;
MatrixXd regularised_kuu(const MatrixXd& kuu);
MatrixXd regularised_kuu_gradient(const MatrixXd& g);

// Convenience wrapper over fhat_terms for one block of outputs.
double fhat(const PsiStats& psi, const MatrixXd& kuu, const OutputData& output, double beta);

// Pieces of the collapsed posterior over inducing outputs that prediction
// needs: Sigma = (Kuu + beta Psi2)^-1 and Kuu^-1.
struct PosteriorCache {
    MatrixXd sigma;
    MatrixXd kuu_inv;
};
PosteriorCache posterior_cache(const MatrixXd& kuu, const MatrixXd& psi2, double beta);

}  // namespace vargplvm
