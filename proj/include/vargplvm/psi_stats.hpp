#pragma once

#include "vargplvm/kernel.hpp"

namespace vargplvm {

// Kernel expectations under q(X) = prod_i N(mu_i, diag(s_i)).
struct PsiStats {
    double psi0 = 0.0;  // sum_i <k(x_i, x_i)>
    MatrixXd psi1;      // n x m, <k(x_i, u_k)>
    MatrixXd psi2;      // m x m, sum_i <k(u, x_i) k(x_i, u)>
    VectorXd psi0_terms;  // per-point psi0 (filled on request)
};

// Partial derivatives of L = g0 * psi0 + sum(G1 .* psi1) + sum(G2 .* psi2)
// with respect to everything Psi depends on. d_var is w.r.t. the variance
// itself (not its log); d_theta is w.r.t. the log kernel parameters in the
// kernel's flattened order.
struct PsiGradients {
    MatrixXd d_mean;  // n x q
    MatrixXd d_var;   // n x q
    MatrixXd d_inducing;  // m x q
    VectorXd d_theta;
};

// True if analytic Psi statistics exist for this kernel: RbfArd or LinearArd,
// optionally summed with any number of White and Bias terms (or only White and
// Bias terms).
bool psi_supported(const Kernel& kernel);

// Analytic statistics. mean and var are n x q, inducing m x q. Throws
// CapabilityError for unsupported kernels.
PsiStats psi_statistics(const Kernel& kernel, const MatrixXd& mean, const MatrixXd& var,
                        const MatrixXd& inducing, bool keep_terms = false);

// Per-point contribution of row i to psi2.
MatrixXd psi2_term(const Kernel& kernel, const VectorXd& mean, const VectorXd& var, const MatrixXd& inducing);

// Contracts the derivatives of (psi0, psi1, psi2) with the weights (g0, G1, G2).
PsiGradients psi_contract(const Kernel& kernel, const MatrixXd& mean, const MatrixXd& var,
                          const MatrixXd& inducing, double g0, const MatrixXd& g1, const MatrixXd& g2);

// Tensor-product Gauss-Hermite evaluation of the same expectations; works for
// any kernel. Requires q <= 3 and nodes >= 20.
PsiStats psi_quadrature(const Kernel& kernel, const MatrixXd& mean, const MatrixXd& var,
                        const MatrixXd& inducing, int nodes = 50);

// Nodes and weights for integrals of f(t) exp(-t^2) (Golub-Welsch).
void gauss_hermite(int nodes, VectorXd& points, VectorXd& weights);

}  // namespace vargplvm
