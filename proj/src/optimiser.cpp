#include "vargplvm/optimiser.hpp"

#include "vargplvm/errors.hpp"

#include <ceres/ceres.h>

#include <cmath>

namespace vargplvm {

namespace {

class NegatedObjective : public ceres::FirstOrderFunction {
public:
    NegatedObjective(const Objective& f, int n) : f_(f), n_(n) {}

    bool Evaluate(const double* parameters, double* cost, double* gradient) const override {
        const Eigen::Map<const VectorXd> x(parameters, n_);
        VectorXd g;
        double value;
        try {
            value = f_(x, gradient ? &g : nullptr);
        } catch (const NumericalError&) {
            return false;
        } catch (const StateError&) {
            return false;
        }
        if (!std::isfinite(value)) return false;
        *cost = -value;
        if (gradient) {
            if (!g.allFinite()) return false;
            for (int i = 0; i < n_; ++i) gradient[i] = -g(i);
        }
        return true;
    }

    int NumParameters() const override { return n_; }

private:
    const Objective& f_;
    int n_;
};

class Progress : public ceres::IterationCallback {
public:
    Progress(const IterationObserver& observer, const double* x, int n) : observer_(observer), x_(x), n_(n) {}

    ceres::CallbackReturnType operator()(const ceres::IterationSummary& summary) override {
        if (summary.iteration > 0 && summary.step_is_successful && observer_) {
            observer_(summary.iteration, -summary.cost, Eigen::Map<const VectorXd>(x_, n_));
        }
        return ceres::SOLVER_CONTINUE;
    }

private:
    const IterationObserver& observer_;
    const double* x_;
    int n_;
};

}  // namespace

OptimiserResult maximise(const Objective& objective, const VectorXd& x0, const OptimiserOptions& options,
                         const IterationObserver& observer) {
    OptimiserResult result;
    result.x = x0;
    try {
        result.value = objective(x0, nullptr);
    } catch (const StateError& e) {
        throw NumericalError(std::string("objective cannot be evaluated at the starting point: ") + e.what());
    }
    if (!std::isfinite(result.value)) throw NumericalError("objective is not finite at the starting point");
    if (options.max_iterations <= 0 || x0.size() == 0) {
        result.converged = x0.size() == 0;
        result.message = "no iterations requested";
        return result;
    }

    const int n = int(x0.size());
    ceres::GradientProblem problem(new NegatedObjective(objective, n));
    ceres::GradientProblemSolver::Options opts;
    opts.line_search_direction_type = ceres::LBFGS;
    opts.line_search_type = ceres::WOLFE;
    opts.max_lbfgs_rank = options.lbfgs_rank;
    opts.max_num_iterations = options.max_iterations;
    opts.function_tolerance = options.function_tolerance;
    opts.gradient_tolerance = options.gradient_tolerance;
    opts.parameter_tolerance = options.parameter_tolerance;
    opts.logging_type = ceres::SILENT;
    opts.minimizer_progress_to_stdout = false;
    opts.update_state_every_iteration = true;
    Progress progress(observer, result.x.data(), n);
    opts.callbacks.push_back(&progress);

    ceres::GradientProblemSolver::Summary summary;
    ceres::Solve(opts, problem, result.x.data(), &summary);
    if (summary.termination_type == ceres::FAILURE && summary.iterations.size() <= 1) {
        throw NumericalError("optimiser failed: " + summary.message);
    }
    result.value = -summary.final_cost;
    result.iterations = int(summary.iterations.size()) - 1;
    result.converged = summary.termination_type == ceres::CONVERGENCE;
    result.message = summary.message;
    return result;
}

}  // namespace vargplvm
