#pragma once

#include "vargplvm/model.hpp"
#include "vargplvm/optimiser.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace vargplvm {

struct TrainConfig {
    Variant variant = Variant::Standard;
    Index latent_dim = 2;
    Index num_inducing = 10;
    int fixed_beta_iters = 100;
    std::vector<int> main_iters{500};  // one optimiser run per entry
    double init_variance = 0.5;
    std::uint64_t seed = 0;
    bool fix_inducing = false;
    bool center_outputs = true;
    std::string kernel = "rbfard";         // mapping kernel expression
    std::string kernel_x = "rbfard+white";  // temporal kernel expression (dynamical)
    double function_tolerance = 1e-10;
    double gradient_tolerance = 1e-10;
};

// Builds a model ready for training:
//   M     leading principal-component scores of the centred outputs, each
//         column scaled to unit variance (uncertain-input: the prior means Z)
//   S     init_variance everywhere
//   Xu    random subset of the rows of M
//   k_f   ARD weights 1/(q v) with +-1% jitter, v = 1 or, for uncertain
//         inputs, the mean variance of Z; variance = mean output variance
//   beta  100 / mean output variance
// Dynamical: mu_bar solves Kx mu_bar = M and lambda = 1 / init_variance. If
// prior.kernel_x has no parameters it is built from config.kernel_x.
Model initialize(const MatrixXd& y, const TrainConfig& config, const LatentPrior& prior = LatentPrior::standard());

struct TrainResult {
    std::vector<TraceRow> trace;  // iteration 0 is the initial bound
    double initial_bound = 0.0;
    double final_bound = 0.0;
};

// Stage 1 keeps beta fixed for fixed_beta_iters iterations; then one joint
// run per main_iters entry. The trace is also appended to model.trace.
TrainResult train(Model& model, const TrainConfig& config);

// One optimiser run over the free parameters of the model. Rows are appended
// to `trace` (if given), numbered after its last row.
OptimiserResult optimise_model(Model& model, const OptimiserOptions& options, std::vector<TraceRow>* trace = nullptr);

struct ArdEntry {
    Index dimension = 0;
    double weight = 0.0;
    double normalised = 0.0;  // weight / max weight
};

struct ArdReport {
    std::vector<ArdEntry> entries;  // sorted by weight, descending
    double threshold = 0.01;
    Index effective_dim = 0;        // weights with normalised >= threshold
};

// Throws CapabilityError when the mapping kernel has no ARD weights.
ArdReport ard_report(const Model& model, double threshold = 0.01);

// Principal-component scores of the column-centred y, one column per
// component, each scaled to unit variance.
MatrixXd pca_scores(const MatrixXd& y, Index q);

}  // namespace vargplvm
