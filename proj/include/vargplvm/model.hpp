#pragma once

#include "vargplvm/bound.hpp"
#include "vargplvm/variational.hpp"

#include <string>
#include <vector>

namespace vargplvm {

enum class Variant { Standard, Dynamical, UncertainInput };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

// A group of output columns observed on a subset of the rows. Ordinary models
// have a single block covering every row; test-time models with partially
// observed rows use several.
struct OutputBlock {
    std::vector<Index> rows;  // empty means all rows
    OutputData data;
};

struct TraceRow {
    int iteration = 0;
    double bound = 0.0;
    double beta = 0.0;
};

struct Model {
    Variant variant = Variant::Standard;
    Kernel kernel_f;
    LatentPrior prior;
    FactorizedQ q;    // Standard and UncertainInput
    DynamicalQ dyn;   // Dynamical
    MatrixXd inducing;  // m x q
    double beta = 1.0;
    std::vector<OutputBlock> outputs;
    VectorXd output_offset;  // per-column mean removed before training (size p)

    bool fix_beta = false;
    bool fix_inducing = false;
    bool fix_latent = false;  // every variational parameter held fixed

    std::vector<TraceRow> trace;

    Index n() const;
    Index latent_dim() const { return inducing.cols(); }
    Index num_inducing() const { return inducing.rows(); }
    Index p() const { return output_offset.size(); }
    // Raw training outputs (centred), from the first block. Throws StateError
    // if only a gram factor is stored.
    const MatrixXd& centred_y() const;

    void validate() const;
};

// Marginal means and variances of q(X), whatever its parametrisation.
struct LatentMarginals {
    MatrixXd mean;
    MatrixXd var;
    MatrixXd kx;                // dynamical only
    DynamicalMarginals dynamic; // dynamical only
};
LatentMarginals latent_marginals(const Model& model);

// Flat parameter layout shared by the gradient, the optimiser and the model
// file. Sections (in order):
//   standard/uncertain: latent_mean (n*q), latent_log_var (n*q)
//   dynamical:          mu_bar (n*q), log_lambda (n*q)
//   all:                inducing (m*q), kernel_f (log params),
//   dynamical:          kernel_x (log params)
//   all:                log_beta (1)
// Matrices are stored row-major.
struct SchemaSection {
    std::string name;
    Index offset = 0;
    Index size = 0;
};

struct GradientSchema {
    std::vector<SchemaSection> sections;
    Index size = 0;
    const SchemaSection& at(const std::string& name) const;
};

GradientSchema gradient_schema(const Model& model);
VectorXd pack_parameters(const Model& model);
void unpack_parameters(Model& model, const VectorXd& x);
// true for parameters the optimiser may move
std::vector<bool> free_parameters(const Model& model);
// Copies every fixed quantity of `source` into `target` verbatim, so clamped
// values survive a pack/unpack round trip bit for bit.
void copy_fixed_values(Model& target, const Model& source);

struct BoundValue {
    double value = 0.0;
    double fhat = 0.0;
    double kl = 0.0;
    VectorXd gradient;  // over the full schema; fixed entries are exactly 0
};

BoundValue evaluate_bound(const Model& model, bool gradient);
double lower_bound(const Model& model);
VectorXd bound_gradients(const Model& model);

}  // namespace vargplvm
