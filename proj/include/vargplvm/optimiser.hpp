#pragma once

#include "vargplvm/linalg.hpp"

#include <functional>
#include <string>

namespace vargplvm {

// Any first-order method with a line search satisfies the training contract:
// it consumes value/gradient callbacks and only accepts steps that do not
// decrease the objective beyond the line-search tolerance. The shipped
// implementation is limited-memory BFGS with a Wolfe line search.
struct OptimiserOptions {
    int max_iterations = 100;
    double function_tolerance = 1e-10;  // relative change of the objective
    double gradient_tolerance = 1e-10;
    double parameter_tolerance = 1e-12;
    int lbfgs_rank = 20;
};

// Returns the value to maximise and fills `gradient` when non-null. Throwing
// NumericalError or StateError marks the point as infeasible; the line search
// then backs off.
using Objective = std::function<double(const VectorXd& x, VectorXd* gradient)>;

// Called after every accepted step with the iteration number (from 1), the
// objective value and the current point.
using IterationObserver = std::function<void(int iteration, double value, const VectorXd& x)>;

struct OptimiserResult {
    VectorXd x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string message;
};

// Throws NumericalError if the objective cannot be evaluated at x0.
OptimiserResult maximise(const Objective& objective, const VectorXd& x0, const OptimiserOptions& options,
                         const IterationObserver& observer = {});

}  // namespace vargplvm
