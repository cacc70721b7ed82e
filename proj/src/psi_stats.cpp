#include "vargplvm/psi_stats.hpp"

#include "vargplvm/errors.hpp"

#include <cmath>
#include <numbers>

namespace vargplvm {

namespace {

// A supported kernel split into its analytic main part and constant terms.
struct Parts {
    const Kernel* main = nullptr;
    Index main_offset = 0;
    std::vector<std::pair<Index, double>> whites;  // (flat index, value)
    std::vector<std::pair<Index, double>> biases;
    double white = 0.0;
    double bias = 0.0;
};

bool decompose(const Kernel& k, Index& offset, Parts& parts) {
    switch (k.family()) {
        case KernelFamily::Sum:
            for (const auto& c : k.children()) {
                if (!decompose(c, offset, parts)) return false;
            }
            return true;
        case KernelFamily::RbfArd:
        case KernelFamily::LinearArd:
            if (parts.main != nullptr) return false;
            parts.main = &k;
            parts.main_offset = offset;
            offset += k.num_params();
            return true;
        case KernelFamily::White:
            parts.whites.emplace_back(offset, k.params()(0));
            parts.white += k.params()(0);
            offset += 1;
            return true;
        case KernelFamily::Bias:
            parts.biases.emplace_back(offset, k.params()(0));
            parts.bias += k.params()(0);
            offset += 1;
            return true;
        default: return false;
    }
}

Parts split(const Kernel& kernel) {
    Parts parts;
    Index offset = 0;
    if (!decompose(kernel, offset, parts)) {
        throw CapabilityError("analytic Psi statistics are only available for rbfard or linard plus white/bias terms, got " +
                              to_string(kernel.family()));
    }
    return parts;
}

void check_shapes(const Kernel& kernel, const MatrixXd& mean, const MatrixXd& var, const MatrixXd& inducing) {
    if (mean.rows() != var.rows() || mean.cols() != var.cols()) {
        throw ArgumentError("Psi statistics: mean and variance shapes differ");
    }
    if (inducing.cols() != mean.cols()) throw ArgumentError("Psi statistics: inducing inputs have the wrong width");
    const Index d = kernel.input_dim();
    if (d >= 0 && d != mean.cols()) throw ArgumentError("Psi statistics: kernel input dimension mismatch");
    if ((var.array() < 0.0).any()) throw ArgumentError("Psi statistics: negative variance");
}

struct RbfView {
    double sf2;
    VectorXd w;
    explicit RbfView(const Kernel& k) {
        const VectorXd p = k.params();
        sf2 = p(0);
        w = p.tail(p.size() - 1);
    }
};

// log of the point-i factor of psi2 for one inducing pair, excluding sf2^2.
inline double rbf_psi2_log(const RbfView& r, const MatrixXd& mean, const MatrixXd& var, const MatrixXd& u,
                           Index i, Index k, Index kk) {
    double acc = 0.0;
    for (Index j = 0; j < mean.cols(); ++j) {
        const double w = r.w(j);
        const double b = 2.0 * w * var(i, j) + 1.0;
        const double delta = u(k, j) - u(kk, j);
        const double e = mean(i, j) - 0.5 * (u(k, j) + u(kk, j));
        acc += -0.5 * std::log(b) - 0.25 * w * delta * delta - w * e * e / b;
    }
    return acc;
}

inline double rbf_psi1(const RbfView& r, const MatrixXd& mean, const MatrixXd& var, const MatrixXd& u, Index i,
                       Index k) {
    double acc = 0.0;
    for (Index j = 0; j < mean.cols(); ++j) {
        const double a = r.w(j) * var(i, j) + 1.0;
        const double d = mean(i, j) - u(k, j);
        acc += -0.5 * std::log(a) - 0.5 * r.w(j) * d * d / a;
    }
    return r.sf2 * std::exp(acc);
}

// Main-part statistics without bias/white.
void main_stats(const Parts& parts, const MatrixXd& mean, const MatrixXd& var, const MatrixXd& u, PsiStats& out,
                bool keep_terms) {
    const Index n = mean.rows();
    const Index m = u.rows();
    out.psi1 = MatrixXd::Zero(n, m);
    out.psi2 = MatrixXd::Zero(m, m);
    out.psi0 = 0.0;
    if (keep_terms) out.psi0_terms = VectorXd::Zero(n);
    if (parts.main == nullptr) return;

    if (parts.main->family() == KernelFamily::LinearArd) {
        const VectorXd c = parts.main->params();
        const MatrixXd uc = u * c.asDiagonal();
        out.psi1 = mean * uc.transpose();
        const VectorXd ssum = var.colwise().sum().transpose();
        out.psi2 = symmetrised(out.psi1.transpose() * out.psi1 + uc * ssum.asDiagonal() * uc.transpose());
        const VectorXd terms = (mean.array().square() + var.array()).matrix() * c;
        out.psi0 = terms.sum();
        if (keep_terms) out.psi0_terms = terms;
        return;
    }

    const RbfView r(*parts.main);
    out.psi0 = double(n) * r.sf2;
    if (keep_terms) out.psi0_terms.setConstant(r.sf2);
    const int chunks = num_threads();
    std::vector<MatrixXd> partial(chunks, MatrixXd::Zero(m, m));
    const double sf4 = r.sf2 * r.sf2;
    parallel_chunks(n, chunks, [&](Index begin, Index end, int c) {
        MatrixXd& acc = partial[c];
        for (Index i = begin; i < end; ++i) {
            for (Index k = 0; k < m; ++k) out.psi1(i, k) = rbf_psi1(r, mean, var, u, i, k);
            for (Index k = 0; k < m; ++k) {
                for (Index kk = k; kk < m; ++kk) {
                    acc(k, kk) += sf4 * std::exp(rbf_psi2_log(r, mean, var, u, i, k, kk));
                }
            }
        }
    });
    for (const auto& p : partial) out.psi2 += p;
    out.psi2.triangularView<Eigen::StrictlyLower>() = out.psi2.transpose().triangularView<Eigen::StrictlyLower>();
}

}  // namespace

bool psi_supported(const Kernel& kernel) {
    Parts parts;
    Index offset = 0;
    return decompose(kernel, offset, parts);
}

PsiStats psi_statistics(const Kernel& kernel, const MatrixXd& mean, const MatrixXd& var, const MatrixXd& inducing,
                        bool keep_terms) {
    check_shapes(kernel, mean, var, inducing);
    const Parts parts = split(kernel);
    PsiStats out;
    main_stats(parts, mean, var, inducing, out, keep_terms);
    const double n = double(mean.rows());
    const double b = parts.bias;
    out.psi0 += n * (parts.bias + parts.white);
    if (keep_terms) out.psi0_terms.array() += parts.bias + parts.white;
    if (b != 0.0) {
        const VectorXd cs = out.psi1.colwise().sum().transpose();
        const Index m = inducing.rows();
        for (Index k = 0; k < m; ++k) {
            for (Index kk = 0; kk < m; ++kk) out.psi2(k, kk) += b * (cs(k) + cs(kk)) + n * b * b;
        }
        out.psi1.array() += b;
    }
    return out;
}

MatrixXd psi2_term(const Kernel& kernel, const VectorXd& mean, const VectorXd& var, const MatrixXd& inducing) {
    const MatrixXd mu = mean.transpose();
    const MatrixXd s = var.transpose();
    return psi_statistics(kernel, mu, s, inducing).psi2;
}

PsiGradients psi_contract(const Kernel& kernel, const MatrixXd& mean, const MatrixXd& var, const MatrixXd& u,
                          double g0, const MatrixXd& g1, const MatrixXd& g2) {
    check_shapes(kernel, mean, var, u);
    const Index n = mean.rows();
    const Index q = mean.cols();
    const Index m = u.rows();
    if (g1.rows() != n || g1.cols() != m || g2.rows() != m || g2.cols() != m) {
        throw ArgumentError("psi_contract: weight shapes do not match the statistics");
    }
    const Parts parts = split(kernel);
    PsiGradients out;
    out.d_mean = MatrixXd::Zero(n, q);
    out.d_var = MatrixXd::Zero(n, q);
    out.d_inducing = MatrixXd::Zero(m, q);
    out.d_theta = VectorXd::Zero(kernel.num_params());

    const MatrixXd gs = symmetrised(g2);
    const double b = parts.bias;
    MatrixXd g1_main = g1;
    PsiStats main;
    if (!parts.biases.empty()) {
        main_stats(parts, mean, var, u, main, false);
        const VectorXd row = 2.0 * b * (gs * VectorXd::Ones(m));
        g1_main.rowwise() += row.transpose();
        const VectorXd cs = main.psi1.colwise().sum().transpose();
        const double db = double(n) * g0 + g1.sum() + 2.0 * cs.dot(gs * VectorXd::Ones(m)) + 2.0 * double(n) * b * gs.sum();
        for (const auto& [idx, value] : parts.biases) out.d_theta(idx) = db * value;
    }
    for (const auto& [idx, value] : parts.whites) out.d_theta(idx) = double(n) * g0 * value;
    if (parts.main == nullptr) return out;

    const Index off = parts.main_offset;
    if (parts.main->family() == KernelFamily::LinearArd) {
        const VectorXd c = parts.main->params();
        const MatrixXd uc = u * c.asDiagonal();
        if (main.psi1.size() == 0) main.psi1 = mean * uc.transpose();
        const VectorXd ssum = var.colwise().sum().transpose();
        VectorXd dc = VectorXd::Zero(q);
        // Psi2 = Psi1' Psi1 + U C diag(ssum) C U'
        const MatrixXd g1_tot = g1_main + 2.0 * main.psi1 * gs;
        const MatrixXd gu = gs * u;
        for (Index j = 0; j < q; ++j) {
            const double quad = u.col(j).dot(gu.col(j));
            out.d_var.col(j).array() += c(j) * c(j) * quad;
            dc(j) += 2.0 * c(j) * ssum(j) * quad;
            out.d_inducing.col(j) += 2.0 * c(j) * c(j) * ssum(j) * gu.col(j);
        }
        // Psi1 = M C U'
        out.d_mean += g1_tot * uc;
        out.d_inducing += g1_tot.transpose() * mean * c.asDiagonal();
        const MatrixXd mgu = mean.transpose() * g1_tot * u;
        dc += mgu.diagonal();
        // psi0 = sum_ij c_j (mu^2 + s)
        out.d_mean += 2.0 * g0 * mean * c.asDiagonal();
        out.d_var.rowwise() += g0 * c.transpose();
        dc += g0 * (mean.array().square() + var.array()).colwise().sum().transpose().matrix();
        out.d_theta.segment(off, q) = dc.cwiseProduct(c);
        return out;
    }

    const RbfView r(*parts.main);
    const int chunks = num_threads();
    std::vector<MatrixXd> du_part(chunks, MatrixXd::Zero(m, q));
    std::vector<VectorXd> dw_part(chunks, VectorXd::Zero(q));
    std::vector<double> dsf_part(chunks, 0.0);
    const double sf4 = r.sf2 * r.sf2;
    parallel_chunks(n, chunks, [&](Index begin, Index end, int ch) {
        MatrixXd& du = du_part[ch];
        VectorXd& dw = dw_part[ch];
        double& dsf = dsf_part[ch];
        for (Index i = begin; i < end; ++i) {
            for (Index k = 0; k < m; ++k) {
                const double v = rbf_psi1(r, mean, var, u, i, k) * g1_main(i, k);
                if (v == 0.0) continue;
                dsf += v / r.sf2;
                for (Index j = 0; j < q; ++j) {
                    const double w = r.w(j);
                    const double a = w * var(i, j) + 1.0;
                    const double d = mean(i, j) - u(k, j);
                    out.d_mean(i, j) += v * (-w * d / a);
                    du(k, j) += v * (w * d / a);
                    out.d_var(i, j) += v * 0.5 * w * (w * d * d / a - 1.0) / a;
                    dw(j) += v * (-0.5 * var(i, j) / a - 0.5 * d * d / (a * a));
                }
            }
            for (Index k = 0; k < m; ++k) {
                for (Index kk = k; kk < m; ++kk) {
                    const double weight = (k == kk) ? gs(k, k) : 2.0 * gs(k, kk);
                    if (weight == 0.0) continue;
                    const double val = weight * sf4 * std::exp(rbf_psi2_log(r, mean, var, u, i, k, kk));
                    dsf += 2.0 * val / r.sf2;
                    for (Index j = 0; j < q; ++j) {
                        const double w = r.w(j);
                        const double s = var(i, j);
                        const double bb = 2.0 * w * s + 1.0;
                        const double delta = u(k, j) - u(kk, j);
                        const double e = mean(i, j) - 0.5 * (u(k, j) + u(kk, j));
                        out.d_mean(i, j) += val * (-2.0 * w * e / bb);
                        out.d_var(i, j) += val * (-w / bb + 2.0 * w * w * e * e / (bb * bb));
                        du(k, j) += val * (-0.5 * w * delta + w * e / bb);
                        du(kk, j) += val * (0.5 * w * delta + w * e / bb);
                        dw(j) += val * (-s / bb - 0.25 * delta * delta - e * e / (bb * bb));
                    }
                }
            }
        }
    });
    double dsf = double(n) * g0;
    VectorXd dw = VectorXd::Zero(q);
    for (int c = 0; c < chunks; ++c) {
        out.d_inducing += du_part[c];
        dw += dw_part[c];
        dsf += dsf_part[c];
    }
    out.d_theta(off) = dsf * r.sf2;
    out.d_theta.segment(off + 1, q) = dw.cwiseProduct(r.w);
    return out;
}

void gauss_hermite(int nodes, VectorXd& points, VectorXd& weights) {
    if (nodes < 1) throw ArgumentError("gauss_hermite: need at least one node");
    MatrixXd jac = MatrixXd::Zero(nodes, nodes);
    for (int k = 1; k < nodes; ++k) {
        jac(k, k - 1) = jac(k - 1, k) = std::sqrt(0.5 * k);
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(jac);
    points = es.eigenvalues();
    weights = std::sqrt(std::numbers::pi) * es.eigenvectors().row(0).transpose().array().square();
}

PsiStats psi_quadrature(const Kernel& kernel, const MatrixXd& mean, const MatrixXd& var, const MatrixXd& inducing,
                        int nodes) {
    check_shapes(kernel, mean, var, inducing);
    const Index q = mean.cols();
    if (q > 3) throw CapabilityError("psi_quadrature: latent dimension above 3 is too expensive");
    if (nodes < 20) throw ArgumentError("psi_quadrature: need at least 20 nodes");
    VectorXd t, wt;
    gauss_hermite(nodes, t, wt);
    wt /= std::sqrt(std::numbers::pi);

    Index total = 1;
    for (Index j = 0; j < q; ++j) total *= nodes;
    const Index n = mean.rows();
    const Index m = inducing.rows();
    PsiStats out;
    out.psi1 = MatrixXd::Zero(n, m);
    out.psi2 = MatrixXd::Zero(m, m);
    out.psi0_terms = VectorXd::Zero(n);
    for (Index i = 0; i < n; ++i) {
        MatrixXd x(total, q);
        VectorXd w(total);
        for (Index g = 0; g < total; ++g) {
            Index rest = g;
            double weight = 1.0;
            for (Index j = 0; j < q; ++j) {
                const Index a = rest % nodes;
                rest /= nodes;
                x(g, j) = mean(i, j) + std::sqrt(2.0 * var(i, j)) * t(a);
                weight *= wt(a);
            }
            w(g) = weight;
        }
        const MatrixXd kxu = kernel.matrix(x, inducing);
        double p0 = 0.0;
        for (Index g = 0; g < total; ++g) {
            const MatrixXd xg = x.row(g);
            p0 += w(g) * kernel.matrix(xg, xg)(0, 0);
        }
        out.psi0_terms(i) = p0;
        out.psi1.row(i) = w.transpose() * kxu;
        out.psi2 += kxu.transpose() * w.asDiagonal() * kxu;
    }
    out.psi0 = out.psi0_terms.sum();
    out.psi2 = symmetrised(out.psi2);
    return out;
}

}  // namespace vargplvm
