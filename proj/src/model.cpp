#include "vargplvm/model.hpp"

#include "vargplvm/errors.hpp"

#include <cmath>

namespace vargplvm {

namespace {

MatrixXd take_rows(const MatrixXd& a, const std::vector<Index>& rows) {
    if (rows.empty()) return a;
    MatrixXd out(rows.size(), a.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(r) = a.row(rows[r]);
    return out;
}

void add_rows(MatrixXd& target, const MatrixXd& src, const std::vector<Index>& rows) {
    if (rows.empty()) {
        target += src;
        return;
    }
    for (std::size_t r = 0; r < rows.size(); ++r) target.row(rows[r]) += src.row(r);
}

void put_rowmajor(VectorXd& x, Index offset, const MatrixXd& a) {
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < a.cols(); ++j) x(offset + i * a.cols() + j) = a(i, j);
}

MatrixXd get_rowmajor(const VectorXd& x, Index offset, Index rows, Index cols) {
    MatrixXd a(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) a(i, j) = x(offset + i * cols + j);
    return a;
}

}  // namespace

std::string to_string(Variant v) {
    switch (v) {
        case Variant::Standard: return "static";
        case Variant::Dynamical: return "dynamical";
        case Variant::UncertainInput: return "uncertain-input";
    }
    return "unknown";
}

Variant variant_from_string(const std::string& name) {
    if (name == "static" || name == "standard") return Variant::Standard;
    if (name == "dynamical") return Variant::Dynamical;
    if (name == "uncertain-input" || name == "uncertain") return Variant::UncertainInput;
    throw ArgumentError("unknown variant '" + name + "' (expected static, dynamical or uncertain-input)");
}

Index Model::n() const { return variant == Variant::Dynamical ? dyn.n() : q.n(); }

const MatrixXd& Model::centred_y() const {
    if (outputs.empty() || !outputs.front().rows.empty() || !outputs.front().data.has_raw()) {
        throw StateError("model does not hold raw training outputs");
    }
    return outputs.front().data.y;
}

void Model::validate() const {
    kernel_f.validate();
    const Index nn = n();
    const Index qq = latent_dim();
    if (variant == Variant::Dynamical) {
        dyn.validate();
        if (dyn.q() != qq) throw StateError("model: latent dimension mismatch between q(X) and inducing inputs");
        if (prior.kind != PriorKind::Temporal) throw StateError("model: dynamical variant needs a temporal prior");
    } else {
        q.validate();
        if (q.q() != qq) throw StateError("model: latent dimension mismatch between q(X) and inducing inputs");
        if (variant == Variant::UncertainInput && prior.kind != PriorKind::UncertainInput) {
            throw StateError("model: uncertain-input variant needs an uncertain-input prior");
        }
        if (variant == Variant::UncertainInput && prior.z.cols() != qq) {
            throw StateError("model: uncertain-input prior width differs from the latent dimension");
        }
    }
    prior.validate(nn);
    const Index d = kernel_f.input_dim();
    if (d >= 0 && d != qq) throw StateError("model: mapping kernel dimension differs from the latent dimension");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw StateError("model: beta must be positive");
    if (outputs.empty()) throw StateError("model: no outputs");
    for (const auto& b : outputs) {
        const Index rows = b.rows.empty() ? nn : Index(b.rows.size());
        if (b.data.n() != rows) throw StateError("model: output block row count mismatch");
        for (Index r : b.rows) {
            if (r < 0 || r >= nn) throw StateError("model: output block row out of range");
        }
    }
}

LatentMarginals latent_marginals(const Model& model) {
    LatentMarginals out;
    if (model.variant == Variant::Dynamical) {
        out.kx = temporal_covariance(model.prior.kernel_x, model.prior.t, model.prior.sequence_starts);
        out.dynamic = dynamical_transform(model.dyn.mu_bar, model.dyn.lambda, out.kx);
        out.mean = out.dynamic.mean;
        out.var = out.dynamic.var;
    } else {
        out.mean = model.q.mean;
        out.var = model.q.var;
    }
    return out;
}

const SchemaSection& GradientSchema::at(const std::string& name) const {
    for (const auto& s : sections) {
        if (s.name == name) return s;
    }
    throw ArgumentError("gradient schema has no section '" + name + "'");
}

GradientSchema gradient_schema(const Model& model) {
    GradientSchema s;
    const Index nq = model.n() * model.latent_dim();
    auto add = [&](const std::string& name, Index size) {
        s.sections.push_back({name, s.size, size});
        s.size += size;
    };
    if (model.variant == Variant::Dynamical) {
        add("mu_bar", nq);
        add("log_lambda", nq);
    } else {
        add("latent_mean", nq);
        add("latent_log_var", nq);
    }
    add("inducing", model.inducing.size());
    add("kernel_f", model.kernel_f.num_params());
    if (model.variant == Variant::Dynamical) add("kernel_x", model.prior.kernel_x.num_params());
    add("log_beta", 1);
    return s;
}

VectorXd pack_parameters(const Model& model) {
    const GradientSchema s = gradient_schema(model);
    VectorXd x(s.size);
    if (model.variant == Variant::Dynamical) {
        put_rowmajor(x, s.at("mu_bar").offset, model.dyn.mu_bar);
        put_rowmajor(x, s.at("log_lambda").offset, model.dyn.lambda.array().log().matrix());
        x.segment(s.at("kernel_x").offset, s.at("kernel_x").size) = model.prior.kernel_x.log_params();
    } else {
        put_rowmajor(x, s.at("latent_mean").offset, model.q.mean);
        put_rowmajor(x, s.at("latent_log_var").offset, model.q.var.array().log().matrix());
    }
    put_rowmajor(x, s.at("inducing").offset, model.inducing);
    x.segment(s.at("kernel_f").offset, s.at("kernel_f").size) = model.kernel_f.log_params();
    x(s.at("log_beta").offset) = std::log(model.beta);
    return x;
}

void unpack_parameters(Model& model, const VectorXd& x) {
    const GradientSchema s = gradient_schema(model);
    if (x.size() != s.size) throw ArgumentError("unpack_parameters: vector has the wrong length");
    const Index n = model.n();
    const Index q = model.latent_dim();
    if (model.variant == Variant::Dynamical) {
        model.dyn.mu_bar = get_rowmajor(x, s.at("mu_bar").offset, n, q);
        model.dyn.lambda = get_rowmajor(x, s.at("log_lambda").offset, n, q).array().exp();
        model.prior.kernel_x.set_log_params(x.segment(s.at("kernel_x").offset, s.at("kernel_x").size));
    } else {
        model.q.mean = get_rowmajor(x, s.at("latent_mean").offset, n, q);
        model.q.var = get_rowmajor(x, s.at("latent_log_var").offset, n, q).array().exp();
    }
    model.inducing = get_rowmajor(x, s.at("inducing").offset, model.num_inducing(), q);
    model.kernel_f.set_log_params(x.segment(s.at("kernel_f").offset, s.at("kernel_f").size));
    model.beta = std::exp(x(s.at("log_beta").offset));
}

std::vector<bool> free_parameters(const Model& model) {
    const GradientSchema s = gradient_schema(model);
    std::vector<bool> free(s.size, true);
    const Index n = model.n();
    const Index q = model.latent_dim();
    auto set_range = [&](const SchemaSection& sec, bool value) {
        for (Index i = 0; i < sec.size; ++i) free[sec.offset + i] = value;
    };
    if (model.variant == Variant::Dynamical) {
        set_range(s.at("mu_bar"), !model.fix_latent);
        set_range(s.at("log_lambda"), !model.fix_latent);
        const auto mask = model.prior.kernel_x.fixed_mask();
        for (std::size_t i = 0; i < mask.size(); ++i) free[s.at("kernel_x").offset + i] = !mask[i];
    } else {
        const Index om = s.at("latent_mean").offset;
        const Index ov = s.at("latent_log_var").offset;
        for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < q; ++j) {
                const bool f = !model.fix_latent && !model.q.fixed(i, j);
                free[om + i * q + j] = f;
                free[ov + i * q + j] = f;
            }
        }
    }
    set_range(s.at("inducing"), !model.fix_inducing);
    const auto mask = model.kernel_f.fixed_mask();
    for (std::size_t i = 0; i < mask.size(); ++i) free[s.at("kernel_f").offset + i] = !mask[i];
    free[s.at("log_beta").offset] = !model.fix_beta;
    return free;
}

void copy_fixed_values(Model& target, const Model& source) {
    if (source.fix_beta) target.beta = source.beta;
    if (source.fix_inducing) target.inducing = source.inducing;
    auto restore_kernel = [](Kernel& t, const Kernel& s) {
        const auto mask = s.fixed_mask();
        VectorXd p = t.params();
        const VectorXd sp = s.params();
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (mask[i]) p(i) = sp(i);
        }
        t.set_params(p);
    };
    restore_kernel(target.kernel_f, source.kernel_f);
    if (source.variant == Variant::Dynamical) {
        restore_kernel(target.prior.kernel_x, source.prior.kernel_x);
        if (source.fix_latent) target.dyn = source.dyn;
        return;
    }
    if (source.fix_latent) {
        target.q.mean = source.q.mean;
        target.q.var = source.q.var;
        return;
    }
    for (Index i = 0; i < source.q.n(); ++i) {
        for (Index j = 0; j < source.q.q(); ++j) {
            if (source.q.fixed(i, j)) {
                target.q.mean(i, j) = source.q.mean(i, j);
                target.q.var(i, j) = source.q.var(i, j);
            }
        }
    }
}

BoundValue evaluate_bound(const Model& model, bool gradient) {
    const Index n = model.n();
    const Index q = model.latent_dim();
    const Index m = model.num_inducing();
    const LatentMarginals lm = latent_marginals(model);
    const MatrixXd kuu = regularised_kuu(model.kernel_f.matrix(model.inducing));

    BoundValue out;
    MatrixXd g_mean = MatrixXd::Zero(n, q);
    MatrixXd g_var = MatrixXd::Zero(n, q);
    MatrixXd g_u = MatrixXd::Zero(m, q);
    VectorXd g_theta = VectorXd::Zero(model.kernel_f.num_params());
    MatrixXd g_kuu = MatrixXd::Zero(m, m);
    double g_beta = 0.0;

    for (const auto& block : model.outputs) {
        const MatrixXd mean = take_rows(lm.mean, block.rows);
        const MatrixXd var = take_rows(lm.var, block.rows);
        const PsiStats psi = psi_statistics(model.kernel_f, mean, var, model.inducing);
        const OutputData& data = block.data;
        const MatrixXd phi = psi.psi1.transpose() * data.factor;
        const FhatTerms t = fhat_terms(double(data.n()), double(data.p), psi.psi0, psi.psi2, phi, data.trace_yy, kuu,
                                       model.beta, gradient);
        out.fhat += t.value;
        if (!gradient) continue;
        const MatrixXd g1 = data.factor * t.g_phi.transpose();
        const PsiGradients pg = psi_contract(model.kernel_f, mean, var, model.inducing, t.g_psi0, g1, t.g_psi2);
        add_rows(g_mean, pg.d_mean, block.rows);
        add_rows(g_var, pg.d_var, block.rows);
        g_u += pg.d_inducing;
        g_theta += pg.d_theta;
        g_kuu += t.g_kuu;
        g_beta += t.g_beta;
    }

    // KL and its gradient w.r.t. the marginals (or the dynamical parameters).
    switch (model.variant) {
        case Variant::Standard:
            out.kl = kl_factorized(model.q);
            if (gradient) {
                g_mean -= model.q.mean;
                g_var -= (0.5 * (1.0 - model.q.var.array().inverse())).matrix();
            }
            break;
        case Variant::UncertainInput: {
            const MatrixXd pv = model.prior.z_var.transpose().replicate(n, 1);
            out.kl = kl_diagonal(model.q.mean, model.q.var, model.prior.z, pv);
            if (gradient) {
                MatrixXd dm, dv;
                kl_diagonal_gradient(model.q.mean, model.q.var, model.prior.z, pv, dm, dv);
                g_mean -= dm;
                g_var -= dv;
            }
            break;
        }
        case Variant::Dynamical: out.kl = kl_dynamical(model.dyn, lm.kx, lm.dynamic); break;
    }
    out.value = out.fhat - out.kl;
    if (!std::isfinite(out.value)) throw NumericalError("lower bound is not finite");
    if (!gradient) return out;

    g_kuu = regularised_kuu_gradient(g_kuu);
    g_theta += model.kernel_f.gradient_contract(model.inducing, model.inducing, g_kuu);
    g_u += model.kernel_f.input_gradient_contract(model.inducing, g_kuu);

    const GradientSchema s = gradient_schema(model);
    out.gradient = VectorXd::Zero(s.size);
    if (model.variant == Variant::Dynamical) {
        const DynamicalGradient dg = dynamical_chain(model.dyn, lm.kx, lm.dynamic, g_mean, g_var);
        put_rowmajor(out.gradient, s.at("mu_bar").offset, dg.d_mu_bar);
        put_rowmajor(out.gradient, s.at("log_lambda").offset, dg.d_log_lambda);
        const MatrixXd gk = dg.d_kx.cwiseProduct(block_mask(n, model.prior.sequence_starts));
        out.gradient.segment(s.at("kernel_x").offset, s.at("kernel_x").size) =
            model.prior.kernel_x.gradient_contract(model.prior.t, model.prior.t, gk);
    } else {
        put_rowmajor(out.gradient, s.at("latent_mean").offset, g_mean);
        put_rowmajor(out.gradient, s.at("latent_log_var").offset, g_var.cwiseProduct(model.q.var));
    }
    put_rowmajor(out.gradient, s.at("inducing").offset, g_u);
    out.gradient.segment(s.at("kernel_f").offset, s.at("kernel_f").size) = g_theta;
    out.gradient(s.at("log_beta").offset) = g_beta * model.beta;

    const auto free = free_parameters(model);
    for (Index i = 0; i < s.size; ++i) {
        if (!free[i]) out.gradient(i) = 0.0;
    }
    if (!out.gradient.allFinite()) throw NumericalError("lower-bound gradient is not finite");
    return out;
}

double lower_bound(const Model& model) { return evaluate_bound(model, false).value; }

VectorXd bound_gradients(const Model& model) { return evaluate_bound(model, true).gradient; }

}  // namespace vargplvm
