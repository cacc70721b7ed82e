#include "vargplvm/synthetic.hpp"

#include "vargplvm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace vargplvm {

namespace {

MatrixXd standard_normal(std::mt19937_64& rng, Index rows, Index cols) {
    std::normal_distribution<double> g(0.0, 1.0);
    MatrixXd out(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) out(i, j) = g(rng);
    return out;
}

void standardise_columns(MatrixXd& a) {
    for (Index j = 0; j < a.cols(); ++j) {
        const double mean = a.col(j).mean();
        a.col(j).array() -= mean;
        const double sd = std::sqrt(a.col(j).squaredNorm() / double(a.rows()));
        if (sd > 0.0) a.col(j) /= sd;
    }
}

}  // namespace

VectorXd mackey_glass(Index n, const MackeyGlassOptions& o) {
    if (n < 1) throw ArgumentError("series length must be positive");
    if (!(o.step > 0.0) || !(o.delay > 0.0) || !(o.sample_interval >= o.step)) {
        throw ArgumentError("Mackey-Glass: invalid step, delay or sampling interval");
    }
    const long lag = std::lround(o.delay / o.step);
    const long every = std::lround(o.sample_interval / o.step);
    const long burn = std::lround(o.burn_in / o.step);
    auto feedback = [&](double z) { return o.a * z / (1.0 + std::pow(z, o.power)); };

    // history[k] is the state k steps ago, history.back() the oldest needed
    std::deque<double> history(lag + 1, o.initial);
    double z = o.initial;
    VectorXd out(n);
    Index filled = 0;
    for (long step = 0; filled < n; ++step) {
        if (step >= burn && (step - burn) % every == 0) out(filled++) = z;
        const double d0 = history[lag];
        const double d1 = history[lag - 1];
        const double dh = 0.5 * (d0 + d1);
        const double k1 = -o.b * z + feedback(d0);
        const double k2 = -o.b * (z + 0.5 * o.step * k1) + feedback(dh);
        const double k3 = -o.b * (z + 0.5 * o.step * k2) + feedback(dh);
        const double k4 = -o.b * (z + o.step * k3) + feedback(d1);
        z += o.step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        history.push_front(z);
        history.pop_back();
    }
    return out;
}

MatrixXd sample_gp(std::mt19937_64& rng, const Kernel& kernel, const MatrixXd& x, Index columns) {
    const Cholesky chol(kernel.matrix(x));
    return chol.lower() * standard_normal(rng, x.rows(), columns);
}

LabelledData latent_clusters(std::mt19937_64& rng, Index n, Index p, double noise) {
    LabelledData out;
    out.latent.resize(n, 2);
    out.labels.resize(n);
    std::normal_distribution<double> g(0.0, 0.4);
    for (Index i = 0; i < n; ++i) {
        const int c = int(i % 3);
        const double angle = 2.0 * M_PI * double(c) / 3.0;
        out.labels[i] = c;
        out.latent(i, 0) = 1.5 * std::cos(angle) + g(rng);
        out.latent(i, 1) = 1.5 * std::sin(angle) + g(rng);
    }
    const Kernel k = Kernel::rbf_ard(1.0, VectorXd::Constant(2, 0.5));
    out.y = sample_gp(rng, k, out.latent, p) + noise * standard_normal(rng, n, p);
    return out;
}

LabelledData gp_manifold(std::mt19937_64& rng, Index n, Index p, double noise) {
    LabelledData out;
    out.latent = standard_normal(rng, n, 2);
    const Kernel k = Kernel::rbf_ard(1.0, VectorXd::Constant(2, 1.0));
    out.y = sample_gp(rng, k, out.latent, p) + noise * standard_normal(rng, n, p);
    return out;
}

RegressionData gp_regression_data(std::mt19937_64& rng, Index n, Index q, Index p, double noise) {
    RegressionData out;
    const MatrixXd h = standard_normal(rng, n, 2);
    out.z = sample_gp(rng, Kernel::rbf_ard(1.0, VectorXd::Constant(2, 0.5)), h, q);
    standardise_columns(out.z);
    const Index active = std::min<Index>(q, 3);
    out.y = sample_gp(rng, Kernel::rbf_ard(1.0, VectorXd::Constant(active, 0.5)), out.z.leftCols(active), p);
    out.y += noise * standard_normal(rng, n, p);
    standardise_columns(out.y);
    return out;
}

}  // namespace vargplvm
