#pragma once

#include "vargplvm/model.hpp"
#include "vargplvm/predict.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace vargplvm {

// Regression inputs with missing cells. Rows whose cells are all observed form
// the fully observed set; the others are partial (possibly entirely missing).
struct PartialInputs {
    MatrixXd z;           // n x q; values of missing cells are ignored
    BoolMatrix observed;  // n x q

    std::vector<Index> complete_rows() const;
    std::vector<Index> partial_rows() const;
};

struct SemisupConfig {
    double epsilon = 1e-9;  // variance of clamped cells; predicted variances are clipped to [epsilon, 1]
    Index num_inducing = 40;
    int fixed_beta_iters = 50;
    int iters = 300;
    std::uint64_t seed = 0;
    std::string kernel = "rbfard+white";
    // latent inference for partial rows
    TestOptions test = [] {
        TestOptions t;
        t.restarts = 5;
        return t;
    }();
};

// Per-column affine map to zero mean and unit variance.
struct Standardiser {
    VectorXd mean;
    VectorXd scale;
    static Standardiser fit(const MatrixXd& a);
    static Standardiser fit(const MatrixXd& a, const BoolMatrix& observed);
    MatrixXd apply(const MatrixXd& a) const;
    MatrixXd invert(const MatrixXd& a) const;
};

struct SemisupModel {
    Model model;  // latent space = standardised inputs
    Standardiser z_std;
    Standardiser y_std;
    std::vector<std::string> warnings;

    // Outputs at fully observed test inputs (original units).
    PredictiveMoments predict(const MatrixXd& z_star, bool include_noise = true) const;
};

// Trains on the complete rows with inputs clamped, infers the missing input
// cells of the partial rows from their outputs, then retrains on everything
// with every observed cell still clamped.
SemisupModel semi_supervised_train(const PartialInputs& inputs, const MatrixXd& y, const SemisupConfig& config);

struct SemisupBenchmarkConfig {
    Index n_observed = 40;
    Index n_partial = 60;
    Index n_test = 100;
    Index input_dim = 15;
    Index output_dim = 5;
    double noise = 0.05;
    std::vector<double> missing_fractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    int seeds = 4;
    std::uint64_t seed = 0;
    SemisupConfig model;
};

struct BenchmarkRow {
    double missing_fraction = 0.0;
    std::string method;  // semisup, gp, nn, mean
    double mse = 0.0;
    double stderr_ = 0.0;  // standard error over seeds
};

// Synthetic comparison of the semi-supervised model against a GP and a
// nearest-neighbour regressor trained on the complete rows, and the mean
// predictor. MSE is measured on outputs standardised with training statistics.
std::vector<BenchmarkRow> semisup_benchmark(const SemisupBenchmarkConfig& config);

}  // namespace vargplvm
