#include "vargplvm/kernel.hpp"

#include "vargplvm/errors.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace vargplvm {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;

std::string weight_name(Index j) { return "ard_weight[" + std::to_string(j) + "]"; }

std::vector<KernelParam> ard_params(const VectorXd& weights) {
    std::vector<KernelParam> out;
    for (Index j = 0; j < weights.size(); ++j) out.push_back({weight_name(j), weights(j), false});
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::string to_string(KernelFamily family) {
    switch (family) {
        case KernelFamily::RbfArd: return "rbfard";
        case KernelFamily::LinearArd: return "linard";
        case KernelFamily::Matern32: return "matern32";
        case KernelFamily::PeriodicRbf: return "periodic";
        case KernelFamily::White: return "white";
        case KernelFamily::Bias: return "bias";
        case KernelFamily::Sum: return "sum";
    }
    return "unknown";
}

KernelFamily family_from_string(const std::string& name) {
    for (auto f : {KernelFamily::RbfArd, KernelFamily::LinearArd, KernelFamily::Matern32,
                   KernelFamily::PeriodicRbf, KernelFamily::White, KernelFamily::Bias,
                   KernelFamily::Sum}) {
        if (to_string(f) == name) return f;
    }
    throw ArgumentError("unknown kernel family '" + name + "'");
}

bool identical_points(const MatrixXd& x1, const MatrixXd& x2) {
    if (&x1 == &x2) return true;
    if (x1.rows() != x2.rows() || x1.cols() != x2.cols()) return false;
    return (x1.array() == x2.array()).all();
}

Kernel::Kernel(KernelFamily family, std::vector<KernelParam> params)
    : family_(family), params_(std::move(params)) {}

Kernel Kernel::rbf_ard(double variance, const VectorXd& weights) {
    if (weights.size() < 1) throw ArgumentError("rbf_ard: need at least one ARD weight");
    std::vector<KernelParam> p{{"variance", variance, false}};
    for (auto& w : ard_params(weights)) p.push_back(w);
    Kernel k(KernelFamily::RbfArd, std::move(p));
    k.validate();
    return k;
}

Kernel Kernel::linear_ard(const VectorXd& weights) {
    if (weights.size() < 1) throw ArgumentError("linear_ard: need at least one ARD weight");
    Kernel k(KernelFamily::LinearArd, ard_params(weights));
    k.validate();
    return k;
}

Kernel Kernel::matern32(double variance, double lengthscale) {
    Kernel k(KernelFamily::Matern32, {{"variance", variance, false}, {"lengthscale", lengthscale, false}});
    k.validate();
    return k;
}

Kernel Kernel::periodic(double variance, double lengthscale, double period) {
    Kernel k(KernelFamily::PeriodicRbf, {{"variance", variance, false},
                                         {"lengthscale", lengthscale, false},
                                         {"period", period, false}});
    k.validate();
    return k;
}

Kernel Kernel::white(double variance) {
    Kernel k(KernelFamily::White, {{"variance", variance, false}});
    k.validate();
    return k;
}

Kernel Kernel::bias(double variance) {
    Kernel k(KernelFamily::Bias, {{"variance", variance, false}});
    k.validate();
    return k;
}

Kernel Kernel::sum(std::vector<Kernel> children) {
    if (children.empty()) throw ArgumentError("sum kernel needs at least one child");
    Index dim = -1;
    for (const auto& c : children) {
        const Index d = c.input_dim();
        if (d >= 0) {
            if (dim >= 0 && dim != d) throw ArgumentError("sum kernel: children disagree on input dimension");
            dim = d;
        }
    }
    Kernel k(KernelFamily::Sum, {});
    k.children_ = std::move(children);
    return k;
}

Index Kernel::input_dim() const {
    switch (family_) {
        case KernelFamily::RbfArd: return static_cast<Index>(params_.size()) - 1;
        case KernelFamily::LinearArd: return static_cast<Index>(params_.size());
        case KernelFamily::Sum: {
            for (const auto& c : children_) {
                if (c.input_dim() >= 0) return c.input_dim();
            }
            return -1;
        }
        default: return -1;
    }
}

void Kernel::collect_params(std::vector<const KernelParam*>& out) const {
    if (family_ == KernelFamily::Sum) {
        for (const auto& c : children_) c.collect_params(out);
        return;
    }
    for (const auto& p : params_) out.push_back(&p);
}

void Kernel::collect_params(std::vector<KernelParam*>& out) {
    if (family_ == KernelFamily::Sum) {
        for (auto& c : children_) c.collect_params(out);
        return;
    }
    for (auto& p : params_) out.push_back(&p);
}

void Kernel::collect_names(const std::string& prefix, std::vector<std::string>& out) const {
    if (family_ == KernelFamily::Sum) {
        for (std::size_t i = 0; i < children_.size(); ++i) {
            children_[i].collect_names(prefix + "k" + std::to_string(i) + ".", out);
        }
        return;
    }
    for (const auto& p : params_) out.push_back(prefix + p.name);
}

Index Kernel::num_params() const {
    std::vector<const KernelParam*> all;
    collect_params(all);
    return static_cast<Index>(all.size());
}

std::vector<std::string> Kernel::param_names() const {
    std::vector<std::string> names;
    collect_names("", names);
    return names;
}

Index Kernel::param_index(const std::string& name) const {
    const auto names = param_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<Index>(i);
    }
    throw ArgumentError("unknown kernel parameter '" + name + "'");
}

double Kernel::param(const std::string& name) const { return params()(param_index(name)); }

VectorXd Kernel::params() const {
    std::vector<const KernelParam*> all;
    collect_params(all);
    VectorXd v(all.size());
    for (std::size_t i = 0; i < all.size(); ++i) v(i) = all[i]->value;
    return v;
}

void Kernel::set_params(const VectorXd& values) {
    std::vector<KernelParam*> all;
    collect_params(all);
    if (static_cast<Index>(all.size()) != values.size()) {
        throw ArgumentError("set_params: expected " + std::to_string(all.size()) + " values");
    }
    for (std::size_t i = 0; i < all.size(); ++i) all[i]->value = values(i);
    validate();
}

VectorXd Kernel::log_params() const { return params().array().log(); }

void Kernel::set_log_params(const VectorXd& values) { set_params(values.array().exp()); }

std::vector<bool> Kernel::fixed_mask() const {
    std::vector<const KernelParam*> all;
    collect_params(all);
    std::vector<bool> mask;
    for (auto* p : all) mask.push_back(p->fixed);
    return mask;
}

void Kernel::set_fixed(Index index, bool fixed) {
    std::vector<KernelParam*> all;
    collect_params(all);
    if (index < 0 || index >= static_cast<Index>(all.size())) {
        throw ArgumentError("set_fixed: parameter index out of range");
    }
    all[index]->fixed = fixed;
}

void Kernel::set_fixed(const std::string& name, bool fixed) { set_fixed(param_index(name), fixed); }

void Kernel::validate() const {
    std::vector<const KernelParam*> all;
    collect_params(all);
    for (auto* p : all) {
        if (!(p->value > 0.0) || !std::isfinite(p->value)) {
            std::ostringstream msg;
            msg << "kernel parameter '" << p->name << "' must be strictly positive, got " << p->value;
            throw StateError(msg.str());
        }
    }
}

void Kernel::check_inputs(const MatrixXd& x1, const MatrixXd& x2) const {
    if (x1.cols() != x2.cols()) throw ArgumentError("kernel: input point sets have different widths");
    const Index d = input_dim();
    if (d >= 0 && x1.cols() != d) {
        std::ostringstream msg;
        msg << "kernel: expected " << d << " input columns, got " << x1.cols();
        throw ArgumentError(msg.str());
    }
}

MatrixXd Kernel::leaf_matrix(const MatrixXd& x1, const MatrixXd& x2, bool identical) const {
    const Index n1 = x1.rows();
    const Index n2 = x2.rows();
    MatrixXd k(n1, n2);
    switch (family_) {
        case KernelFamily::RbfArd: {
            const double var = params_[0].value;
            const Index q = x1.cols();
            VectorXd w(q);
            for (Index j = 0; j < q; ++j) w(j) = params_[j + 1].value;
            for (Index i = 0; i < n1; ++i) {
                for (Index c = identical ? i : 0; c < n2; ++c) {
                    double d2 = 0.0;
                    for (Index j = 0; j < q; ++j) {
                        const double d = x1(i, j) - x2(c, j);
                        d2 += w(j) * d * d;
                    }
                    k(i, c) = var * std::exp(-0.5 * d2);
                    if (identical) k(c, i) = k(i, c);
                }
            }
            break;
        }
        case KernelFamily::LinearArd: {
            const Index q = x1.cols();
            for (Index i = 0; i < n1; ++i) {
                for (Index c = identical ? i : 0; c < n2; ++c) {
                    double s = 0.0;
                    for (Index j = 0; j < q; ++j) s += params_[j].value * x1(i, j) * x2(c, j);
                    k(i, c) = s;
                    if (identical) k(c, i) = s;
                }
            }
            break;
        }
        case KernelFamily::Matern32: {
            const double var = params_[0].value;
            const double ell = params_[1].value;
            for (Index i = 0; i < n1; ++i) {
                for (Index c = identical ? i : 0; c < n2; ++c) {
                    const double a = kSqrt3 * (x1.row(i) - x2.row(c)).norm() / ell;
                    k(i, c) = var * (1.0 + a) * std::exp(-a);
                    if (identical) k(c, i) = k(i, c);
                }
            }
            break;
        }
        case KernelFamily::PeriodicRbf: {
            const double var = params_[0].value;
            const double ell = params_[1].value;
            const double period = params_[2].value;
            for (Index i = 0; i < n1; ++i) {
                for (Index c = identical ? i : 0; c < n2; ++c) {
                    double s = 0.0;
                    for (Index j = 0; j < x1.cols(); ++j) {
                        const double sn = std::sin(2.0 * std::numbers::pi * (x1(i, j) - x2(c, j)) / period);
                        s += sn * sn;
                    }
                    k(i, c) = var * std::exp(-0.5 * s / ell);
                    if (identical) k(c, i) = k(i, c);
                }
            }
            break;
        }
        case KernelFamily::White: {
            k.setZero();
            if (identical) k.diagonal().setConstant(params_[0].value);
            break;
        }
        case KernelFamily::Bias: k.setConstant(params_[0].value); break;
        case KernelFamily::Sum: throw StateError("leaf_matrix called on sum kernel");
    }
    return k;
}

MatrixXd Kernel::matrix(const MatrixXd& x1, const MatrixXd& x2) const {
    check_inputs(x1, x2);
    const bool identical = identical_points(x1, x2);
    if (family_ != KernelFamily::Sum) return leaf_matrix(x1, x2, identical);
    MatrixXd k = MatrixXd::Zero(x1.rows(), x2.rows());
    for (const auto& c : children_) k += c.matrix(x1, x2);
    return k;
}

VectorXd Kernel::diagonal(const MatrixXd& x) const {
    check_inputs(x, x);
    VectorXd d(x.rows());
    for (Index i = 0; i < x.rows(); ++i) {
        const MatrixXd xi = x.row(i);
        d(i) = matrix(xi, xi)(0, 0);
    }
    return d;
}

MatrixXd Kernel::leaf_param_gradient(const MatrixXd& x1, const MatrixXd& x2, bool identical,
                                     Index local) const {
    const Index n1 = x1.rows();
    const Index n2 = x2.rows();
    MatrixXd g(n1, n2);
    switch (family_) {
        case KernelFamily::RbfArd: {
            const MatrixXd k = leaf_matrix(x1, x2, identical);
            if (local == 0) return k / params_[0].value;
            const Index j = local - 1;
            for (Index i = 0; i < n1; ++i) {
                for (Index c = 0; c < n2; ++c) {
                    const double d = x1(i, j) - x2(c, j);
                    g(i, c) = -0.5 * d * d * k(i, c);
                }
            }
            return g;
        }
        case KernelFamily::LinearArd: {
            return x1.col(local) * x2.col(local).transpose();
        }
        case KernelFamily::Matern32: {
            const double var = params_[0].value;
            const double ell = params_[1].value;
            for (Index i = 0; i < n1; ++i) {
                for (Index c = 0; c < n2; ++c) {
                    const double a = kSqrt3 * (x1.row(i) - x2.row(c)).norm() / ell;
                    const double e = std::exp(-a);
                    g(i, c) = local == 0 ? (1.0 + a) * e : var * a * a * e / ell;
                }
            }
            return g;
        }
        case KernelFamily::PeriodicRbf: {
            const double var = params_[0].value;
            const double ell = params_[1].value;
            const double period = params_[2].value;
            for (Index i = 0; i < n1; ++i) {
                for (Index c = 0; c < n2; ++c) {
                    double s = 0.0;
                    double dperiod = 0.0;
                    for (Index j = 0; j < x1.cols(); ++j) {
                        const double phi = 2.0 * std::numbers::pi * (x1(i, j) - x2(c, j)) / period;
                        const double sn = std::sin(phi);
                        s += sn * sn;
                        // d(sin^2 phi)/dT = -sin(2 phi) phi / T
                        dperiod += -std::sin(2.0 * phi) * phi / period;
                    }
                    const double kv = var * std::exp(-0.5 * s / ell);
                    if (local == 0) g(i, c) = kv / var;
                    else if (local == 1) g(i, c) = kv * 0.5 * s / (ell * ell);
                    else g(i, c) = kv * (-0.5 / ell) * dperiod;
                }
            }
            return g;
        }
        case KernelFamily::White: {
            g.setZero();
            if (identical) g.diagonal().setOnes();
            return g;
        }
        case KernelFamily::Bias: g.setOnes(); return g;
        case KernelFamily::Sum: break;
    }
    throw StateError("leaf_param_gradient called on sum kernel");
}

MatrixXd Kernel::param_gradient(const MatrixXd& x1, const MatrixXd& x2, Index param,
                                ParamScale scale) const {
    check_inputs(x1, x2);
    if (param < 0 || param >= num_params()) throw ArgumentError("param_gradient: parameter index out of range");
    if (family_ == KernelFamily::Sum) {
        Index offset = 0;
        for (const auto& c : children_) {
            const Index np = c.num_params();
            if (param < offset + np) return c.param_gradient(x1, x2, param - offset, scale);
            offset += np;
        }
    }
    MatrixXd g = leaf_param_gradient(x1, x2, identical_points(x1, x2), param);
    if (scale == ParamScale::Log) g *= params_[param].value;
    return g;
}

MatrixXd Kernel::param_gradient(const MatrixXd& x1, const MatrixXd& x2, const std::string& name,
                                ParamScale scale) const {
    return param_gradient(x1, x2, param_index(name), scale);
}

VectorXd Kernel::gradient_contract(const MatrixXd& x1, const MatrixXd& x2, const MatrixXd& g) const {
    check_inputs(x1, x2);
    if (g.rows() != x1.rows() || g.cols() != x2.rows()) {
        throw ArgumentError("gradient_contract: weight matrix shape mismatch");
    }
    const Index np = num_params();
    VectorXd out(np);
    if (family_ == KernelFamily::Sum) {
        Index offset = 0;
        for (const auto& c : children_) {
            const Index cp = c.num_params();
            out.segment(offset, cp) = c.gradient_contract(x1, x2, g);
            offset += cp;
        }
        return out;
    }
    const bool identical = identical_points(x1, x2);
    if (family_ == KernelFamily::RbfArd) {
        // One kernel evaluation shared across all parameters.
        const MatrixXd k = leaf_matrix(x1, x2, identical);
        const MatrixXd gk = g.cwiseProduct(k);
        out(0) = gk.sum();
        for (Index j = 0; j < x1.cols(); ++j) {
            double acc = 0.0;
            for (Index i = 0; i < x1.rows(); ++i) {
                for (Index c = 0; c < x2.rows(); ++c) {
                    const double d = x1(i, j) - x2(c, j);
                    acc += gk(i, c) * d * d;
                }
            }
            out(j + 1) = -0.5 * params_[j + 1].value * acc;
        }
        return out;
    }
    for (Index p = 0; p < np; ++p) {
        out(p) = g.cwiseProduct(leaf_param_gradient(x1, x2, identical, p)).sum() * params_[p].value;
    }
    return out;
}

MatrixXd Kernel::input_gradient_contract(const MatrixXd& x, const MatrixXd& g) const {
    check_inputs(x, x);
    if (g.rows() != x.rows() || g.cols() != x.rows()) {
        throw ArgumentError("input_gradient_contract: weight matrix shape mismatch");
    }
    MatrixXd out = MatrixXd::Zero(x.rows(), x.cols());
    switch (family_) {
        case KernelFamily::Sum:
            for (const auto& c : children_) out += c.input_gradient_contract(x, g);
            return out;
        case KernelFamily::RbfArd: {
            const MatrixXd k = leaf_matrix(x, x, true);
            const MatrixXd gs = (g + g.transpose()).cwiseProduct(k);
            for (Index i = 0; i < x.rows(); ++i) {
                for (Index c = 0; c < x.rows(); ++c) {
                    for (Index j = 0; j < x.cols(); ++j) {
                        out(i, j) -= gs(i, c) * params_[j + 1].value * (x(i, j) - x(c, j));
                    }
                }
            }
            return out;
        }
        case KernelFamily::LinearArd: {
            VectorXd w(x.cols());
            for (Index j = 0; j < x.cols(); ++j) w(j) = params_[j].value;
            return (g + g.transpose()) * x * w.asDiagonal();
        }
        case KernelFamily::White:
        case KernelFamily::Bias: return out;
        default: break;
    }
    throw CapabilityError("input gradients are not available for the " + to_string(family_) + " kernel");
}

double white_variance(const Kernel& kernel) {
    if (kernel.family() == KernelFamily::White) return kernel.params()(0);
    double total = 0.0;
    for (const auto& c : kernel.children()) total += white_variance(c);
    return total;
}

Kernel parse_kernel_expression(const std::string& expr, Index input_dim) {
    if (input_dim < 1) throw ArgumentError("kernel expression: input dimension must be positive");
    std::vector<Kernel> parts;
    if (trim(expr).empty() || trim(expr).back() == '+') {
        throw ArgumentError("kernel expression '" + expr + "' has an empty term");
    }
    std::stringstream ss(expr);
    std::string token;
    while (std::getline(ss, token, '+')) {
        token = trim(token);
        if (token.empty()) throw ArgumentError("kernel expression '" + expr + "' has an empty term");
        const KernelFamily f = family_from_string(token);
        switch (f) {
            case KernelFamily::RbfArd: parts.push_back(Kernel::rbf_ard(1.0, VectorXd::Ones(input_dim))); break;
            case KernelFamily::LinearArd: parts.push_back(Kernel::linear_ard(VectorXd::Ones(input_dim))); break;
            case KernelFamily::Matern32: parts.push_back(Kernel::matern32(1.0, 1.0)); break;
            case KernelFamily::PeriodicRbf: parts.push_back(Kernel::periodic(1.0, 1.0, 1.0)); break;
            case KernelFamily::White: parts.push_back(Kernel::white(1e-3)); break;
            case KernelFamily::Bias: parts.push_back(Kernel::bias(1e-3)); break;
            case KernelFamily::Sum: throw ArgumentError("kernel expression: 'sum' is implied by '+'");
        }
    }
    if (parts.empty()) throw ArgumentError("kernel expression is empty");
    if (parts.size() == 1) return parts.front();
    return Kernel::sum(std::move(parts));
}

}  // namespace vargplvm
