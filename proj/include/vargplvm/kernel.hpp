#pragma once

#include "vargplvm/linalg.hpp"

#include <string>
#include <vector>

namespace vargplvm {

enum class KernelFamily { RbfArd, LinearArd, Matern32, PeriodicRbf, White, Bias, Sum };

// Scale in which parameter gradients are reported. The optimiser works with
// log-parameters, so Log includes the chain factor d(param)/d(log param).
enum class ParamScale { Natural, Log };

std::string to_string(KernelFamily family);
KernelFamily family_from_string(const std::string& name);

struct KernelParam {
    std::string name;
    double value = 1.0;
    bool fixed = false;
};

// A covariance function: one of the leaf families or a sum of kernels.
//
//   RbfArd      variance * exp(-0.5 * sum_j w_j (x_j - x'_j)^2)
//   LinearArd   sum_j w_j x_j x'_j
//   Matern32    variance * (1 + sqrt(3) r / l) exp(-sqrt(3) r / l), r = |x - x'|
//   PeriodicRbf variance * exp(-0.5 * sum_j sin^2(2 pi (x_j - x'_j) / T) / l)
//   White       variance * delta; only on the diagonal of k(X, X)
//   Bias        variance (constant)
//
// Parameters are flattened depth-first. Leaf names are "variance",
// "ard_weight[j]", "lengthscale", "period"; children of a sum are prefixed
// with "k<i>.".
class Kernel {
public:
    Kernel() = default;

    static Kernel rbf_ard(double variance, const VectorXd& weights);
    static Kernel linear_ard(const VectorXd& weights);
    static Kernel matern32(double variance, double lengthscale);
    static Kernel periodic(double variance, double lengthscale, double period);
    static Kernel white(double variance);
    static Kernel bias(double variance);
    static Kernel sum(std::vector<Kernel> children);

    KernelFamily family() const { return family_; }
    const std::vector<Kernel>& children() const { return children_; }
    // Required number of input columns, or -1 if any width is accepted.
    Index input_dim() const;

    Index num_params() const;
    std::vector<std::string> param_names() const;
    Index param_index(const std::string& name) const;
    double param(const std::string& name) const;

    VectorXd params() const;
    void set_params(const VectorXd& values);
    VectorXd log_params() const;
    void set_log_params(const VectorXd& values);

    std::vector<bool> fixed_mask() const;
    void set_fixed(Index index, bool fixed);
    void set_fixed(const std::string& name, bool fixed);

    // Throws StateError if any parameter is not strictly positive and finite.
    void validate() const;

    // K[i,k] = k(x1_i, x2_k). White contributes only when x1 and x2 are the
    // identical point set.
    MatrixXd matrix(const MatrixXd& x1, const MatrixXd& x2) const;
    MatrixXd matrix(const MatrixXd& x) const { return matrix(x, x); }
    // k(x_i, x_i), White included.
    VectorXd diagonal(const MatrixXd& x) const;

    // Elementwise derivative of matrix(x1, x2) w.r.t. one flattened parameter.
    MatrixXd param_gradient(const MatrixXd& x1, const MatrixXd& x2, Index param,
                            ParamScale scale = ParamScale::Log) const;
    MatrixXd param_gradient(const MatrixXd& x1, const MatrixXd& x2, const std::string& name,
                            ParamScale scale = ParamScale::Log) const;

    // g[p] = sum_ik G_ik dK_ik / d(log param_p), for every flattened parameter
    // (fixed ones included; masking is the caller's business).
    VectorXd gradient_contract(const MatrixXd& x1, const MatrixXd& x2, const MatrixXd& g) const;

    // d/dX sum_ik G_ik k(x_i, x_k) for the symmetric matrix k(X, X).
    MatrixXd input_gradient_contract(const MatrixXd& x, const MatrixXd& g) const;

private:
    Kernel(KernelFamily family, std::vector<KernelParam> params);

    void collect_params(std::vector<const KernelParam*>& out) const;
    void collect_params(std::vector<KernelParam*>& out);
    void collect_names(const std::string& prefix, std::vector<std::string>& out) const;
    void check_inputs(const MatrixXd& x1, const MatrixXd& x2) const;

    MatrixXd leaf_matrix(const MatrixXd& x1, const MatrixXd& x2, bool identical) const;
    MatrixXd leaf_param_gradient(const MatrixXd& x1, const MatrixXd& x2, bool identical,
                                 Index local) const;

    KernelFamily family_ = KernelFamily::Bias;
    std::vector<KernelParam> params_;
    std::vector<Kernel> children_;
};

// True if the two matrices describe the same point set (same object, or the
// same shape and bitwise-equal values).
bool identical_points(const MatrixXd& x1, const MatrixXd& x2);

// Sum of the White variances in the kernel tree. Used where two distinct point
// sets share some points by value (e.g. forecasting at training timestamps).
double white_variance(const Kernel& kernel);

// Parses a "+"-separated kernel expression such as "rbfard+white+bias" into a
// kernel with default parameters for `input_dim` input columns. Recognised
// names: rbfard, linard, matern32, periodic, white, bias.
Kernel parse_kernel_expression(const std::string& expr, Index input_dim);

}  // namespace vargplvm
