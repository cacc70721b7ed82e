#pragma once

#include "vargplvm/kernel.hpp"

#include <vector>

namespace vargplvm {

// q(X) = prod_i N(mean_i, diag(var_i)). `fixed` marks cells whose mean and
// variance are clamped during optimisation.
struct FactorizedQ {
    MatrixXd mean;  // n x q
    MatrixXd var;   // n x q, > 0
    BoolMatrix fixed;  // n x q

    FactorizedQ() = default;
    FactorizedQ(MatrixXd mean_, MatrixXd var_);
    Index n() const { return mean.rows(); }
    Index q() const { return mean.cols(); }
    void validate() const;
};

// Reparametrised q(X) of the dynamical variant: for latent dimension j,
// S_j = (Kx^-1 + diag(lambda_j))^-1 and mu_j = Kx mu_bar_j.
struct DynamicalQ {
    MatrixXd mu_bar;  // n x q
    MatrixXd lambda;  // n x q, > 0
    Index n() const { return mu_bar.rows(); }
    Index q() const { return mu_bar.cols(); }
    void validate() const;
};

// Result of the reparametrisation: marginal means and variances plus what the
// KL and the chain rule need.
struct DynamicalMarginals {
    MatrixXd mean;                // n x q
    MatrixXd var;                 // n x q, diag(S_j) in column j
    std::vector<MatrixXd> cov;    // S_j
    std::vector<MatrixXd> bhat;   // (Lambda_j^-1 + Kx)^-1
    VectorXd logdet_btilde;       // log|I + Lambda^1/2 Kx Lambda^1/2| per j
};

// Stable form S_j = Kx - Kx L^1/2 Bt^-1 L^1/2 Kx with Bt = I + L^1/2 Kx L^1/2.
DynamicalMarginals dynamical_transform(const MatrixXd& mu_bar, const MatrixXd& lambda, const MatrixXd& kx);

enum class PriorKind { StandardNormal, Temporal, UncertainInput };

std::string to_string(PriorKind kind);
PriorKind prior_kind_from_string(const std::string& name);

struct LatentPrior {
    PriorKind kind = PriorKind::StandardNormal;
    // Temporal
    Kernel kernel_x;
    MatrixXd t;                           // n x d observed inputs (timestamps)
    std::vector<Index> sequence_starts;   // first row of each sequence; {0} or empty = one sequence
    // UncertainInput
    MatrixXd z;                           // n x q prior means
    VectorXd z_var;                       // q diagonal of Sigma_z

    static LatentPrior standard();
    static LatentPrior temporal(Kernel kernel_x, MatrixXd t, std::vector<Index> starts = {});
    static LatentPrior uncertain(MatrixXd z, VectorXd z_var);
    void validate(Index n) const;
};

// Normalised list of sequence starts for n rows (always begins with 0).
std::vector<Index> normalise_starts(const std::vector<Index>& starts, Index n);

// Block-diagonal k_x(t, t) with one block per sequence.
MatrixXd temporal_covariance(const Kernel& kernel_x, const MatrixXd& t, const std::vector<Index>& starts);

// 1 inside diagonal blocks, 0 elsewhere.
MatrixXd block_mask(Index n, const std::vector<Index>& starts);

// KL(q || N(0, I)) for factorised q.
double kl_factorized(const FactorizedQ& q);

// sum_i KL(N(mean_i, diag var_i) || N(prior_mean_i, diag prior_var_i)); all n x q.
double kl_diagonal(const MatrixXd& mean, const MatrixXd& var, const MatrixXd& prior_mean, const MatrixXd& prior_var);

// Gradients of kl_diagonal w.r.t. mean and var.
void kl_diagonal_gradient(const MatrixXd& mean, const MatrixXd& var, const MatrixXd& prior_mean,
                          const MatrixXd& prior_var, MatrixXd& d_mean, MatrixXd& d_var);

// sum_j KL(N(mu_j, S_j) || N(0, Kx)).
double kl_dynamical(const DynamicalQ& q, const MatrixXd& kx);
double kl_dynamical(const DynamicalQ& q, const MatrixXd& kx, const DynamicalMarginals& marg);

// Given g_mean = dFhat/dmean and g_var = dFhat/dvar of the marginals, the
// gradient of (Fhat - KL) w.r.t. mu_bar, log lambda and Kx (elementwise).
struct DynamicalGradient {
    MatrixXd d_mu_bar;
    MatrixXd d_log_lambda;
    MatrixXd d_kx;
};
DynamicalGradient dynamical_chain(const DynamicalQ& q, const MatrixXd& kx, const DynamicalMarginals& marg,
                                  const MatrixXd& g_mean, const MatrixXd& g_var);

}  // namespace vargplvm
