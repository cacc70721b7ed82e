#include "vargplvm/gp_regression.hpp"

#include "vargplvm/errors.hpp"
#include "vargplvm/optimiser.hpp"

#include <cmath>

namespace vargplvm {

namespace {

Kernel default_kernel(const Kernel& k, const MatrixXd& x, double var) {
    const Index d = x.cols();
    switch (k.family()) {
        case KernelFamily::RbfArd:
        case KernelFamily::LinearArd: {
            VectorXd w(d);
            for (Index j = 0; j < d; ++j) {
                const double mean = x.col(j).mean();
                const double vj = (x.col(j).array() - mean).square().mean();
                w(j) = 1.0 / (double(d) * (vj > 0.0 ? vj : 1.0));
            }
            if (k.family() == KernelFamily::RbfArd) return Kernel::rbf_ard(var, w);
            return Kernel::linear_ard(var * w);
        }
        case KernelFamily::Matern32: return Kernel::matern32(var, std::sqrt(double(d)));
        case KernelFamily::PeriodicRbf: return Kernel::periodic(var, 1.0, 1.0);
        case KernelFamily::White: return Kernel::white(0.1 * var);
        case KernelFamily::Bias: return Kernel::bias(0.01 * var);
        case KernelFamily::Sum: {
            std::vector<Kernel> children;
            for (const Kernel& c : k.children()) children.push_back(default_kernel(c, x, var));
            return Kernel::sum(std::move(children));
        }
    }
    throw ArgumentError("unknown kernel family");
}

}  // namespace

double gp_log_marginal(const Kernel& kernel, const MatrixXd& x, const MatrixXd& y, VectorXd* gradient) {
    const Index n = x.rows();
    const double p = double(y.cols());
    const Cholesky chol(kernel.matrix(x));
    const MatrixXd alpha = chol.solve(y);
    const double value = -0.5 * y.cwiseProduct(alpha).sum() - 0.5 * p * chol.log_det() -
                         0.5 * p * double(n) * std::log(2.0 * M_PI);
    if (gradient) {
        const MatrixXd g = 0.5 * (alpha * alpha.transpose() - p * chol.inverse());
        *gradient = kernel.gradient_contract(x, x, g);
    }
    return value;
}

void GpRegression::condition() {
    kernel_.validate();
    chol_ = Cholesky(kernel_.matrix(x_));
    alpha_ = chol_.solve(y_);
    log_marginal_ = gp_log_marginal(kernel_, x_, y_, nullptr);
}

GpRegression GpRegression::with_kernel(const MatrixXd& x, const MatrixXd& y, Kernel kernel) {
    if (x.rows() != y.rows() || x.rows() == 0) throw ArgumentError("GP regression needs matching, non-empty x and y");
    GpRegression gp;
    gp.kernel_ = std::move(kernel);
    gp.x_ = x;
    gp.offset_ = y.colwise().mean().transpose();
    gp.y_ = y.rowwise() - gp.offset_.transpose();
    gp.condition();
    return gp;
}

GpRegression GpRegression::fit(const MatrixXd& x, const MatrixXd& y, const Options& options) {
    if (x.rows() != y.rows() || x.rows() < 2) throw ArgumentError("GP regression needs matching x and y with >= 2 rows");
    const MatrixXd yc = y.rowwise() - y.colwise().mean();
    double var = yc.array().square().mean();
    if (!(var > 0.0)) var = 1.0;
    Kernel kernel = default_kernel(parse_kernel_expression(options.kernel, x.cols()), x, var);
    if (options.optimise && options.max_iterations > 0) {
        Kernel work = kernel;
        Objective objective = [&](const VectorXd& theta, VectorXd* g) {
            work.set_log_params(theta);
            return gp_log_marginal(work, x, yc, g);
        };
        OptimiserOptions opts;
        opts.max_iterations = options.max_iterations;
        const OptimiserResult r = maximise(objective, kernel.log_params(), opts);
        kernel.set_log_params(r.x);
    }
    return with_kernel(x, y, kernel);
}

MatrixXd GpRegression::predict_mean(const MatrixXd& x_star) const {
    return (kernel_.matrix(x_star, x_) * alpha_).rowwise() + offset_.transpose();
}

VectorXd GpRegression::predict_variance(const MatrixXd& x_star, bool include_noise) const {
    const MatrixXd ksn = kernel_.matrix(x_star, x_);
    const MatrixXd v = chol_.solve_lower(ksn.transpose());
    // diagonal() includes the White term; drop it for the latent function
    VectorXd out = kernel_.diagonal(x_star) - v.colwise().squaredNorm().transpose();
    const double noise = noise_variance();
    out.array() -= noise;
    out = out.cwiseMax(0.0);
    if (include_noise) out.array() += noise;
    return out;
}

}  // namespace vargplvm
