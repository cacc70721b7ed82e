#pragma once

#include <Eigen/Dense>

#include <functional>

namespace vargplvm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Cholesky factor of a symmetric positive definite matrix, possibly with a
// diagonal jitter added to make the factorisation succeed.
class Cholesky {
public:
    Cholesky() = default;

    // Factorises `a`. On failure a jitter of 1e-6 * mean(diag) is added and
    // escalated by x10 up to 1e-2 * mean(diag); after that NumericalError.
    explicit Cholesky(const MatrixXd& a);

    const MatrixXd& lower() const { return lower_; }
    double jitter() const { return jitter_; }
    Index size() const { return lower_.rows(); }

    double log_det() const;
    MatrixXd solve(const MatrixXd& b) const;
    VectorXd solve(const VectorXd& b) const;
    // L^{-1} b
    MatrixXd solve_lower(const MatrixXd& b) const;
    MatrixXd inverse() const;

private:
    MatrixXd lower_;
    double jitter_ = 0.0;
};

// Symmetric part (a + a^T) / 2.
inline MatrixXd symmetrised(const MatrixXd& a) { return 0.5 * (a + a.transpose()); }

// Process-wide worker count for per-data-point loops. 1 (the default) keeps a
// single deterministic summation order. Larger values split the points into
// contiguous chunks whose partial sums are reduced in chunk order, which is
// deterministic for a fixed count but not bitwise equal across counts.
void set_num_threads(int threads);
int num_threads();

// Calls body(begin, end, chunk) for `chunks` contiguous ranges of [0, n),
// concurrently when chunks > 1.
void parallel_chunks(Index n, int chunks, const std::function<void(Index, Index, int)>& body);

}  // namespace vargplvm
