#pragma once

#include "vargplvm/model.hpp"
#include "vargplvm/optimiser.hpp"
#include "vargplvm/training.hpp"

#include <vector>

namespace vargplvm {

// Predicted outputs for n* test points over a set of output columns. Each
// point gets its own per-column variance; cross-column and cross-point
// covariances are not stored.
struct PredictiveMoments {
    MatrixXd mean;      // n* x |cols|, output offset added back
    MatrixXd variance;  // n* x |cols|, >= 0
    std::vector<Index> cols;
    bool noise_included = false;
};

// Gaussian marginals of q(X*).
struct TestQ {
    MatrixXd mean;  // n* x q
    MatrixXd var;   // n* x q
};

struct TestOptions {
    int max_iterations = 200;
    double function_tolerance = 1e-9;
    double gradient_tolerance = 1e-9;
    // Dynamical models only: treat q(X*) as independent of q(X), with a
    // factorised prior given by the forecast marginals, instead of
    // re-optimising the coupled sequence.
    bool factorised_dynamical = false;
    bool include_noise = true;
    // Factorised models: number of starts, the r-th from each row's r-th
    // nearest training neighbour; the best bound is kept.
    int restarts = 1;
    // Factorised models only: cells of q(X*) held at clamp_mean / clamp_var
    // where clamp_mask is set (all n* x q; empty mask = nothing clamped).
    BoolMatrix clamp_mask;
    MatrixXd clamp_mean;
    MatrixXd clamp_var;
};

// Training-side quantities every prediction needs. Build once per model and
// share between requests; it is read-only afterwards.
class Predictor {
public:
    explicit Predictor(const Model& model);

    const Model& model() const { return model_; }
    const LatentMarginals& marginals() const { return marg_; }
    // B = beta Sigma Psi1^T Y over every output column (m x p, centred outputs).
    const MatrixXd& weights() const { return b_; }

    // Output moments for q(X*) given directly (no optimisation).
    PredictiveMoments moments(const TestQ& q, const std::vector<Index>& cols, bool include_noise) const;
    PredictiveMoments moments(const TestQ& q, bool include_noise) const;

private:
    Model model_;
    LatentMarginals marg_;
    MatrixXd kuu_;
    PosteriorCache post_;
    MatrixXd b_;
};

// Result of fitting q(X*) to partially observed test rows.
struct TestFit {
    TestQ q;
    double bound = 0.0;           // F(q(X, X*)) on the training data plus the observed test cells
    double training_bound = 0.0;  // F(q(X)) of the trained model
    std::vector<Index> observed;
    std::vector<Index> unobserved;
    int iterations = 0;
    std::vector<TraceRow> trace;
};

// Optimises q(X*) for test rows whose columns `observed` are given in
// y_observed (n* x |observed|, original units). Dynamical models need the
// test timestamps (n* x d) and the sequence the test rows extend.
TestFit fit_test_latents(const Model& model, const MatrixXd& y_observed, const std::vector<Index>& observed,
                         const TestOptions& options = {}, const MatrixXd& t_star = {}, Index sequence = -1);

// F(q(X, X*)) of a factorised model for a given q(X*), with q(X) at its
// trained value and the training statistics cached. fit_test_latents
// maximises this over q(X*).
double test_bound(const Model& model, const MatrixXd& y_observed, const std::vector<Index>& observed,
                  const TestQ& q_star);

struct Reconstruction {
    PredictiveMoments moments;  // over the unobserved columns
    TestFit fit;
};

// Predicts the missing columns of partially observed test rows. Throws
// ArgumentError when nothing is missing.
Reconstruction reconstruct(const Model& model, const MatrixXd& y_observed, const std::vector<Index>& observed,
                           const TestOptions& options = {}, const MatrixXd& t_star = {}, Index sequence = -1);

// Approximate log p(Y* | Y) as the difference of two lower bounds; rows are
// treated jointly. Returns 0 for an empty Y*.
double log_density(const Model& model, const MatrixXd& y_star, const TestOptions& options = {},
                   const MatrixXd& t_star = {}, Index sequence = -1);
// One independent log_density per row.
VectorXd log_density_rows(const Model& model, const MatrixXd& y_star, const TestOptions& options = {});

struct Forecast {
    TestQ q;
    PredictiveMoments moments;
};

// Latent and output predictions of a dynamical model at new timestamps of one
// sequence (default: the last), without optimisation.
Forecast forecast(const Model& model, const MatrixXd& t_star, Index sequence = -1, bool include_noise = true);
TestQ forecast_latents(const Model& model, const MatrixXd& t_star, Index sequence = -1);

// Sliding windows over a series: row i of z is [y_i, ..., y_{i+tau-1}]
// concatenated, row i of target is y_{i+tau}.
struct AutoregressiveData {
    MatrixXd z;       // (n - tau) x (tau p)
    MatrixXd target;  // (n - tau) x p
};
AutoregressiveData autoregress_dataset(const MatrixXd& y, Index tau);

// Uncertain-input model on the windows of a series: prior N(z_i, diag(s)) with
// s_j = relative_input_variance * var(z_j), q(X) starting at the windows with
// the mean of s as variance. config.variant and latent_dim are overridden.
Model train_autoregressive(const MatrixXd& series, Index tau, TrainConfig config,
                           double relative_input_variance = 1e-3);

// k-step-ahead prediction from a model trained on autoregress_dataset windows.
// `window` holds the last tau observations (tau x p, oldest first). Each
// prediction is appended to the window, its predictive variance becoming the
// input variance of that coordinate.
struct IterativePrediction {
    MatrixXd mean;      // steps x p
    MatrixXd variance;  // steps x p, noise included
};
IterativePrediction iterative_predict(const Model& model, const MatrixXd& window, int steps,
                                      bool propagate_variance = true);

}  // namespace vargplvm
