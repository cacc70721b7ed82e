#pragma once

#include "vargplvm/kernel.hpp"
#include "vargplvm/linalg.hpp"

#include <string>

namespace vargplvm {

// Exact GP regression with a shared kernel across output columns, used as a
// baseline. Hyperparameters are fitted by maximising the log marginal
// likelihood; the noise is the White part of the kernel.
class GpRegression {
public:
    struct Options {
        std::string kernel = "rbfard+white";
        int max_iterations = 200;
        bool optimise = true;
    };

    GpRegression() = default;
    // Kernel parameters start from data-driven defaults: variance = mean
    // output variance, ARD weight 1 / (d var(x_j)), noise 10% of the variance.
    static GpRegression fit(const MatrixXd& x, const MatrixXd& y, const Options& options);
    static GpRegression fit(const MatrixXd& x, const MatrixXd& y) { return fit(x, y, Options{}); }
    // Conditions on (x, y) with the kernel as given.
    static GpRegression with_kernel(const MatrixXd& x, const MatrixXd& y, Kernel kernel);

    // Sum over output columns of log N(y_j | 0, K).
    double log_marginal() const { return log_marginal_; }
    const Kernel& kernel() const { return kernel_; }
    double noise_variance() const { return white_variance(kernel_); }

    // Predictive mean (n* x p) and per-point variance (n*), the latter with
    // the noise variance when include_noise is set.
    MatrixXd predict_mean(const MatrixXd& x_star) const;
    VectorXd predict_variance(const MatrixXd& x_star, bool include_noise) const;

private:
    void condition();

    Kernel kernel_;
    MatrixXd x_;
    MatrixXd y_;       // centred
    VectorXd offset_;  // column means
    Cholesky chol_;
    MatrixXd alpha_;
    double log_marginal_ = 0.0;
};

// Log marginal likelihood of zero-mean outputs and its gradient w.r.t. the log
// kernel parameters.
double gp_log_marginal(const Kernel& kernel, const MatrixXd& x, const MatrixXd& y, VectorXd* gradient);

}  // namespace vargplvm
