#include "vargplvm/linalg.hpp"

#include "vargplvm/errors.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>
#include <vector>

namespace vargplvm {

namespace {

std::atomic<int> g_threads{1};

bool try_factor(const MatrixXd& a, MatrixXd& lower) {
    Eigen::LLT<MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) return false;
    lower = llt.matrixL();
    for (Index i = 0; i < lower.rows(); ++i) {
        if (!(lower(i, i) > 0.0) || !std::isfinite(lower(i, i))) return false;
    }
    return true;
}

}  // namespace

Cholesky::Cholesky(const MatrixXd& a) {
    if (a.rows() != a.cols()) throw ArgumentError("Cholesky: matrix must be square");
    if (!a.allFinite()) throw NumericalError("Cholesky: matrix has non-finite entries");
    if (a.rows() == 0) return;
    if (try_factor(a, lower_)) return;

    const double mean_diag = a.diagonal().mean();
    const double scale = mean_diag > 0.0 ? mean_diag : 1.0;
    for (double factor = 1e-6; factor <= 1e-2 * (1.0 + 1e-9); factor *= 10.0) {
        MatrixXd shifted = a;
        shifted.diagonal().array() += factor * scale;
        if (try_factor(shifted, lower_)) {
            jitter_ = factor * scale;
            return;
        }
    }
    std::ostringstream msg;
    msg << "Cholesky failed after jitter escalation (n=" << a.rows() << ", mean diagonal=" << mean_diag
        << ")";
    throw NumericalError(msg.str());
}

double Cholesky::log_det() const { return 2.0 * lower_.diagonal().array().log().sum(); }

MatrixXd Cholesky::solve(const MatrixXd& b) const {
    MatrixXd x = lower_.triangularView<Eigen::Lower>().solve(b);
    lower_.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
    return x;
}

VectorXd Cholesky::solve(const VectorXd& b) const {
    VectorXd x = lower_.triangularView<Eigen::Lower>().solve(b);
    lower_.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
    return x;
}

MatrixXd Cholesky::solve_lower(const MatrixXd& b) const {
    return lower_.triangularView<Eigen::Lower>().solve(b);
}

MatrixXd Cholesky::inverse() const {
    MatrixXd inv = solve(MatrixXd(MatrixXd::Identity(size(), size())));
    return symmetrised(inv);
}

void set_num_threads(int threads) { g_threads = threads < 1 ? 1 : threads; }

int num_threads() { return g_threads; }

void parallel_chunks(Index n, int chunks, const std::function<void(Index, Index, int)>& body) {
    if (chunks <= 1 || n < 2) {
        body(0, n, 0);
        return;
    }
    const Index step = (n + chunks - 1) / chunks;
    std::vector<std::thread> workers;
    for (int c = 0; c < chunks; ++c) {
        const Index begin = c * step;
        const Index end = std::min(n, begin + step);
        if (begin >= end) {
            body(begin, begin, c);
            continue;
        }
        workers.emplace_back(body, begin, end, c);
    }
    for (auto& w : workers) w.join();
}

}  // namespace vargplvm
