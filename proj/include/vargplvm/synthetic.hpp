#pragma once

#include "vargplvm/kernel.hpp"

#include <random>
#include <vector>

namespace vargplvm {

// Delay differential equation
//   dz/dt = -b z(t) + a z(t - delay) / (1 + z(t - delay)^power)
// integrated with RK4 (delayed values linearly interpolated on the step grid)
// from a constant history, sampled every `sample_interval` after a burn-in.
struct MackeyGlassOptions {
    double a = 0.2;
    double b = 0.1;
    double delay = 17.0;
    double power = 10.0;
    double step = 0.1;
    double sample_interval = 1.0;
    double burn_in = 300.0;
    double initial = 1.2;
};
VectorXd mackey_glass(Index n, const MackeyGlassOptions& options = {});

// One draw per output column from N(0, k(x, x)).
MatrixXd sample_gp(std::mt19937_64& rng, const Kernel& kernel, const MatrixXd& x, Index columns);

struct LabelledData {
    MatrixXd latent;           // generating inputs
    MatrixXd y;                // observations
    std::vector<int> labels;   // empty if unlabelled
};

// Three Gaussian clusters in a 2-d latent space mapped through a GP draw to
// p noisy outputs.
LabelledData latent_clusters(std::mt19937_64& rng, Index n, Index p, double noise = 0.05);

// Points spread in a 2-d latent space mapped through one GP draw (one
// "class" of a class-conditional problem). Different calls give different
// mappings.
LabelledData gp_manifold(std::mt19937_64& rng, Index n, Index p, double noise = 0.05);

// Inputs z (n x q) are a GP draw over hidden 2-d coordinates, outputs y
// (n x p) a GP draw over the first min(q, 3) columns of z plus noise; columns
// of both are standardised.
struct RegressionData {
    MatrixXd z;
    MatrixXd y;
};
RegressionData gp_regression_data(std::mt19937_64& rng, Index n, Index q, Index p, double noise = 0.05);

}  // namespace vargplvm
