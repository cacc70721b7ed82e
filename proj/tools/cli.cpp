#include "cli.hpp"

#include "vargplvm/errors.hpp"
#include "vargplvm/io.hpp"
#include "vargplvm/predict.hpp"
#include "vargplvm/semisup.hpp"
#include "vargplvm/training.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace vargplvm::cli {

namespace {

struct Options {
    std::string data, test, model, out, targets, inputs, timestamps, config, forecast_out;
    std::string variant = "static";
    std::string kernel;
    std::string kernel_x = "rbfard+white";
    std::string header = "auto";
    std::string precision = "decimal";
    Index latent_dim = 2;
    Index inducing = 10;
    std::vector<int> iters{500};
    int fixed_beta_iters = 100;
    std::uint64_t seed = 0;
    int threads = 1;
    double init_variance = 0.5;
    double input_variance = 1e-3;
    bool fix_inducing = false;
    std::vector<Index> sequence_starts;
    Index sequence = -1;
    int test_iters = 200;
    int restarts = 1;
    bool factorised = false;
    bool no_noise = false;
    Index tau = 16;
    int steps = 0;
    bool benchmark = false;
    std::vector<double> fractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    int seeds = 4;
    double epsilon = 1e-9;
};

// key=value lines; '#' starts a comment. Keys are long flag names.
std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    int line_no = 0;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw IoError(path + ":" + std::to_string(line_no) + ": expected key=value");
        }
        out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return out;
}

// Config values fill options the command line left unset.
void apply_config(CLI::App& sub, const std::string& path) {
    for (const auto& [key, value] : read_config(path)) {
        CLI::Option* opt = key == "config" ? nullptr : sub.get_option_no_throw("--" + key);
        if (opt == nullptr) throw ArgumentError("config file: unknown key '" + key + "' for command " + sub.get_name());
        if (opt->count() > 0) continue;
        opt->add_result(value);
        opt->run_callback();
    }
}

HeaderMode header_mode(const std::string& s) {
    if (s == "auto") return HeaderMode::Auto;
    if (s == "yes") return HeaderMode::Yes;
    if (s == "no") return HeaderMode::No;
    throw ArgumentError("--header must be auto, yes or no");
}

ArrayEncoding encoding(const std::string& s) {
    if (s == "decimal") return ArrayEncoding::Decimal;
    if (s == "base64") return ArrayEncoding::Base64;
    throw ArgumentError("--precision must be decimal or base64");
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw ArgumentError(std::string(flag) + " is required");
}

MatrixXd read_matrix(const Options& o, const std::string& path, bool allow_missing = false) {
    const CsvTable t = read_csv(path, header_mode(o.header));
    if (t.values.size() == 0) throw IoError("'" + path + "' holds no data");
    if (!allow_missing && !t.observed().all()) throw ArgumentError("'" + path + "' has missing values");
    return t.values;
}

std::vector<std::string> names(const char* prefix, Index count) {
    std::vector<std::string> out;
    for (Index j = 0; j < count; ++j) out.push_back(prefix + std::to_string(j));
    return out;
}

std::vector<std::string> names(const char* prefix, const std::vector<Index>& cols) {
    std::vector<std::string> out;
    for (Index j : cols) out.push_back(prefix + std::to_string(j));
    return out;
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

MatrixXd hstack(const std::vector<const MatrixXd*>& parts) {
    Index cols = 0;
    for (const MatrixXd* p : parts) cols += p->cols();
    MatrixXd out(parts.front()->rows(), cols);
    Index at = 0;
    for (const MatrixXd* p : parts) {
        out.middleCols(at, p->cols()) = *p;
        at += p->cols();
    }
    return out;
}

TrainConfig train_config(const Options& o, const char* default_kernel) {
    TrainConfig c;
    c.variant = variant_from_string(o.variant);
    c.latent_dim = o.latent_dim;
    c.num_inducing = o.inducing;
    c.fixed_beta_iters = o.fixed_beta_iters;
    c.main_iters = o.iters;
    c.init_variance = o.init_variance;
    c.seed = o.seed;
    c.fix_inducing = o.fix_inducing;
    c.kernel = o.kernel.empty() ? default_kernel : o.kernel;
    c.kernel_x = o.kernel_x;
    return c;
}

TestOptions test_options(const Options& o) {
    TestOptions t;
    t.max_iterations = o.test_iters;
    t.restarts = o.restarts;
    t.factorised_dynamical = o.factorised;
    t.include_noise = !o.no_noise;
    return t;
}

std::string prefix_of(const Options& o) {
    if (!o.out.empty()) return o.out;
    const std::string& m = o.model;
    return m.size() > 5 && m.substr(m.size() - 5) == ".json" ? m.substr(0, m.size() - 5) : m;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << text;
    if (!f) throw IoError("write to '" + path + "' failed");
}

// ---- commands ----

void cmd_train(const Options& o, std::ostream& out) {
    require(o.data, "--data");
    require(o.model, "--model");
    const MatrixXd y = read_matrix(o, o.data);
    TrainConfig c = train_config(o, "rbfard");
    LatentPrior prior = LatentPrior::standard();
    if (c.variant == Variant::Dynamical) {
        require(o.timestamps, "--timestamps");
        prior = LatentPrior::temporal(Kernel(), read_matrix(o, o.timestamps), o.sequence_starts);
    } else if (c.variant == Variant::UncertainInput) {
        require(o.inputs, "--inputs");
        const MatrixXd z = read_matrix(o, o.inputs);
        VectorXd s = (z.rowwise() - z.colwise().mean()).array().square().colwise().mean().transpose();
        for (Index j = 0; j < s.size(); ++j) {
            if (!(s(j) > 0.0)) s(j) = 1.0;
        }
        s *= o.input_variance;
        prior = LatentPrior::uncertain(z, s);
        c.init_variance = s.mean();
    }
    Model model = initialize(y, c, prior);
    const TrainResult r = train(model, c);
    save_model(o.model, model, encoding(o.precision));

    const std::string prefix = prefix_of(o);
    MatrixXd trace(Index(r.trace.size()), 3);
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
        trace.row(Index(i)) << r.trace[i].iteration, r.trace[i].bound, r.trace[i].beta;
    }
    write_csv(prefix + ".trace.csv", trace, {"iter", "bound", "beta"});

    std::ostringstream ard;
    try {
        const ArdReport a = ard_report(model);
        ard << "dimension,weight,normalised\n";
        for (const ArdEntry& e : a.entries) ard << e.dimension << ',' << e.weight << ',' << e.normalised << '\n';
        ard << "# effective dimensions (normalised >= " << a.threshold << "): " << a.effective_dim << '\n';
    } catch (const CapabilityError& e) {
        ard << "# " << e.what() << '\n';
    }
    write_text(prefix + ".ard.txt", ard.str());
    out << "bound " << r.initial_bound << " -> " << r.final_bound << " after " << (r.trace.empty() ? 0 : r.trace.back().iteration)
        << " iterations\n";
}

// Splits test rows into observed columns and the values on them; every row
// must miss the same columns.
std::vector<Index> observed_columns(const MatrixXd& test) {
    const BoolMatrix seen = test.array().isFinite();
    std::vector<Index> cols;
    for (Index j = 0; j < test.cols(); ++j) {
        if (seen.col(j).all()) {
            cols.push_back(j);
        } else if (seen.col(j).any()) {
            throw ArgumentError("column " + std::to_string(j) +
                                " is missing in some test rows only; every row must miss the same columns");
        }
    }
    return cols;
}

MatrixXd take_cols(const MatrixXd& a, const std::vector<Index>& cols) {
    MatrixXd out(a.rows(), Index(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) out.col(Index(k)) = a.col(cols[k]);
    return out;
}

MatrixXd test_times(const Options& o, const Model& model) {
    if (model.variant != Variant::Dynamical) return {};
    require(o.timestamps, "--timestamps (test timestamps for a dynamical model)");
    return read_matrix(o, o.timestamps);
}

void cmd_reconstruct(const Options& o, std::ostream& out) {
    require(o.model, "--model");
    require(o.test, "--test");
    require(o.out, "--out");
    const Model model = load_model(o.model);
    const MatrixXd test = read_matrix(o, o.test, true);
    if (test.cols() != model.p()) throw ArgumentError("test file has the wrong number of columns");
    const std::vector<Index> cols = observed_columns(test);
    if (Index(cols.size()) == test.cols()) {
        throw ArgumentError("every test column is observed, nothing to reconstruct (use the density command)");
    }
    const Reconstruction r = reconstruct(model, take_cols(test, cols), cols, test_options(o), test_times(o, model), o.sequence);
    write_csv(o.out, hstack({&r.moments.mean, &r.moments.variance}),
              concat(names("mean_", r.moments.cols), names("var_", r.moments.cols)));
    out << "reconstructed " << r.moments.cols.size() << " columns of " << test.rows() << " rows\n";
}

void cmd_forecast(const Options& o, std::ostream& out) {
    require(o.model, "--model");
    require(o.timestamps, "--timestamps");
    require(o.out, "--out");
    const Model model = load_model(o.model);
    if (model.variant != Variant::Dynamical) throw ArgumentError("forecasting needs a dynamical model");
    const MatrixXd t = read_matrix(o, o.timestamps);
    const Forecast f = forecast(model, t, o.sequence, !o.no_noise);
    write_csv(o.out, hstack({&t, &f.q.mean, &f.q.var, &f.moments.mean, &f.moments.variance}),
              concat(concat(names("t", t.cols()), concat(names("x_mean_", f.q.mean.cols()), names("x_var_", f.q.var.cols()))),
                     concat(names("y_mean_", model.p()), names("y_var_", model.p()))));
    out << "forecast " << t.rows() << " points\n";
}

void cmd_density(const Options& o, std::ostream& out) {
    require(o.model, "--model");
    require(o.test, "--test");
    require(o.out, "--out");
    const Model model = load_model(o.model);
    const MatrixXd test = read_matrix(o, o.test);
    if (test.cols() != model.p()) throw ArgumentError("test file has the wrong number of columns");
    if (model.variant == Variant::Dynamical) {
        const double ld = log_density(model, test, test_options(o), test_times(o, model), o.sequence);
        write_csv(o.out, MatrixXd::Constant(1, 1, ld), {"log_density"});
        out << "joint log density " << ld << '\n';
        return;
    }
    const VectorXd ld = log_density_rows(model, test, test_options(o));
    MatrixXd table(ld.size(), 2);
    for (Index i = 0; i < ld.size(); ++i) table.row(i) << double(i), ld(i);
    write_csv(o.out, table, {"row", "log_density"});
    out << "mean log density " << ld.mean() << " over " << ld.size() << " rows\n";
}

void cmd_autoregress(const Options& o, std::ostream& out) {
    require(o.data, "--data");
    require(o.out, "--out");
    const MatrixXd series = read_matrix(o, o.data);
    const Model model = train_autoregressive(series, o.tau, train_config(o, "rbfard+white"), o.input_variance);
    if (!o.model.empty()) save_model(o.model, model, encoding(o.precision));

    // one-step predictions from the exact training windows
    const AutoregressiveData d = autoregress_dataset(series, o.tau);
    const PredictiveMoments m =
        Predictor(model).moments(TestQ{d.z, MatrixXd::Zero(d.z.rows(), d.z.cols())}, !o.no_noise);
    const Index p = series.cols();
    write_csv(o.out, hstack({&d.target, &m.mean, &m.variance}),
              concat(names("target_", p), concat(names("mean_", p), names("var_", p))));
    out << "fitted " << d.z.rows() << " windows\n";

    if (o.steps > 0) {
        require(o.forecast_out, "--forecast-out");
        const IterativePrediction it = iterative_predict(model, series.bottomRows(o.tau), o.steps);
        MatrixXd step(o.steps, 1);
        for (int k = 0; k < o.steps; ++k) step(k, 0) = k + 1;
        write_csv(o.forecast_out, hstack({&step, &it.mean, &it.variance}),
                  concat({"step"}, concat(names("mean_", p), names("var_", p))));
        out << "predicted " << o.steps << " steps ahead\n";
    }
}

SemisupConfig semisup_config(const Options& o) {
    SemisupConfig c;
    c.epsilon = o.epsilon;
    c.num_inducing = o.inducing;
    c.fixed_beta_iters = o.fixed_beta_iters;
    c.iters = o.iters.empty() ? c.iters : o.iters.front();
    c.seed = o.seed;
    if (!o.kernel.empty()) c.kernel = o.kernel;
    c.test.max_iterations = o.test_iters;
    c.test.restarts = o.restarts;
    return c;
}

void cmd_semisup(const Options& o, const CLI::App& sub, std::ostream& out) {
    require(o.out, "--out");
    Options eff = o;
    // semi-supervised defaults differ from the training ones
    if (sub.get_option("--inducing")->count() == 0) eff.inducing = SemisupConfig{}.num_inducing;
    if (sub.get_option("--iters")->count() == 0) eff.iters = {SemisupConfig{}.iters};
    if (sub.get_option("--fixed-beta-iters")->count() == 0) eff.fixed_beta_iters = SemisupConfig{}.fixed_beta_iters;
    if (sub.get_option("--restarts")->count() == 0) eff.restarts = SemisupConfig{}.test.restarts;

    if (o.benchmark) {
        SemisupBenchmarkConfig b;
        b.missing_fractions = o.fractions;
        b.seeds = o.seeds;
        b.seed = o.seed;
        b.model = semisup_config(eff);
        const std::vector<BenchmarkRow> rows = semisup_benchmark(b);
        std::ostringstream s;
        s << "missing_fraction,method,mse,stderr\n";
        char buf[96];
        for (const BenchmarkRow& r : rows) {
            std::snprintf(buf, sizeof buf, "%.17g,%s,%.17g,%.17g\n", r.missing_fraction, r.method.c_str(), r.mse, r.stderr_);
            s << buf;
        }
        write_text(o.out, s.str());
        out << "benchmark: " << rows.size() << " rows\n";
        return;
    }
    require(o.data, "--data");
    require(o.targets, "--targets");
    require(o.test, "--test");
    const MatrixXd z = read_matrix(o, o.data, true);
    const MatrixXd y = read_matrix(o, o.targets);
    const MatrixXd zt = read_matrix(o, o.test);
    const PartialInputs in{z, z.array().isFinite()};
    const SemisupModel model = semi_supervised_train(in, y, semisup_config(eff));
    for (const std::string& w : model.warnings) out << "warning: " << w << '\n';
    if (!o.model.empty()) save_model(o.model, model.model, encoding(o.precision));
    const PredictiveMoments m = model.predict(zt, !o.no_noise);
    write_csv(o.out, hstack({&m.mean, &m.variance}), concat(names("mean_", y.cols()), names("var_", y.cols())));
    out << "predicted " << zt.rows() << " rows from " << in.complete_rows().size() << " complete and "
        << in.partial_rows().size() << " partial training rows\n";
}

void add_common(CLI::App& sub, Options& o) {
    sub.add_option("--config", o.config, "key=value file; flags given on the command line win");
    sub.add_option("--seed", o.seed, "random seed");
    sub.add_option("--threads", o.threads, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
    sub.add_option("--header", o.header, "CSV header row: auto, yes or no");
    sub.add_option("--out", o.out, "output file (train: prefix for the trace and ARD report)");
}

void add_training(CLI::App& sub, Options& o) {
    sub.add_option("--inducing", o.inducing, "number of inducing points");
    sub.add_option("--iters", o.iters, "optimiser iterations, comma-separated for several runs")->delimiter(',');
    sub.add_option("--fixed-beta-iters", o.fixed_beta_iters, "initial iterations with the noise precision fixed");
    sub.add_option("--kernel", o.kernel, "mapping kernel, e.g. rbfard+white");
    sub.add_option("--precision", o.precision, "array encoding in the model file: decimal or base64");
}

void add_test(CLI::App& sub, Options& o) {
    sub.add_option("--test-iters", o.test_iters, "iterations for fitting test latents");
    sub.add_option("--restarts", o.restarts, "nearest-neighbour starts for test latents");
    sub.add_flag("--no-noise", o.no_noise, "leave the noise variance out of predictive variances");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Variational Bayesian GP-LVM: training and prediction", "vargplvm"};
    app.require_subcommand(1);

    CLI::App* train = app.add_subcommand("train", "train a model on a CSV of outputs");
    add_common(*train, o);
    add_training(*train, o);
    train->add_option("--data", o.data, "training outputs (CSV)");
    train->add_option("--model", o.model, "model file to write");
    train->add_option("--variant", o.variant, "static, dynamical or uncertain-input");
    train->add_option("--latent-dim", o.latent_dim, "latent dimension");
    train->add_option("--timestamps", o.timestamps, "dynamical: timestamps of the training rows (CSV)");
    train->add_option("--sequence-starts", o.sequence_starts, "dynamical: first row of each sequence")->delimiter(',');
    train->add_option("--kernel-x", o.kernel_x, "dynamical: temporal kernel");
    train->add_option("--inputs", o.inputs, "uncertain-input: prior input means (CSV)");
    train->add_option("--input-variance", o.input_variance, "uncertain-input: prior variance relative to the input variance");
    train->add_option("--init-variance", o.init_variance, "initial latent variance");
    train->add_flag("--fix-inducing", o.fix_inducing, "keep the inducing inputs at their initial values");

    CLI::App* rec = app.add_subcommand("reconstruct", "predict the missing columns of test rows");
    add_common(*rec, o);
    add_test(*rec, o);
    rec->add_option("--model", o.model, "trained model file");
    rec->add_option("--test", o.test, "test rows (CSV, empty fields are missing)");
    rec->add_option("--timestamps", o.timestamps, "dynamical: timestamps of the test rows");
    rec->add_option("--sequence", o.sequence, "dynamical: sequence the test rows extend (default last)");
    rec->add_flag("--factorised", o.factorised, "dynamical: fit test latents independently of training latents");

    CLI::App* fc = app.add_subcommand("forecast", "predict a dynamical model at new timestamps");
    add_common(*fc, o);
    fc->add_option("--model", o.model, "trained dynamical model file");
    fc->add_option("--timestamps", o.timestamps, "timestamps to predict at (CSV)");
    fc->add_option("--sequence", o.sequence, "sequence to extend (default last)");
    fc->add_flag("--no-noise", o.no_noise, "leave the noise variance out of predictive variances");

    CLI::App* dens = app.add_subcommand("density", "approximate log density of fully observed test rows");
    add_common(*dens, o);
    add_test(*dens, o);
    dens->add_option("--model", o.model, "trained model file");
    dens->add_option("--test", o.test, "test rows (CSV)");
    dens->add_option("--timestamps", o.timestamps, "dynamical: timestamps of the test rows");
    dens->add_option("--sequence", o.sequence, "dynamical: sequence the test rows extend (default last)");
    dens->add_flag("--factorised", o.factorised, "dynamical: fit test latents independently of training latents");

    CLI::App* ar = app.add_subcommand("autoregress", "uncertain-input autoregression on a series");
    add_common(*ar, o);
    add_training(*ar, o);
    ar->add_option("--data", o.data, "series, one row per time step (CSV)");
    ar->add_option("--model", o.model, "model file to write (optional)");
    ar->add_option("--tau", o.tau, "window length");
    ar->add_option("--steps", o.steps, "iterated predictions past the end of the series");
    ar->add_option("--forecast-out", o.forecast_out, "file for the iterated predictions");
    ar->add_option("--input-variance", o.input_variance, "prior variance of window entries relative to their variance");
    ar->add_flag("--no-noise", o.no_noise, "leave the noise variance out of fitted variances");

    CLI::App* ss = app.add_subcommand("semisup", "semi-supervised regression with missing inputs");
    add_common(*ss, o);
    add_training(*ss, o);
    add_test(*ss, o);
    ss->add_option("--data", o.data, "training inputs (CSV, empty fields are missing)");
    ss->add_option("--targets", o.targets, "training outputs (CSV)");
    ss->add_option("--test", o.test, "fully observed test inputs (CSV)");
    ss->add_option("--model", o.model, "model file to write (optional)");
    ss->add_option("--epsilon", o.epsilon, "variance of clamped input cells");
    ss->add_flag("--benchmark", o.benchmark, "run the synthetic benchmark instead");
    ss->add_option("--fractions", o.fractions, "benchmark: missing fractions")->delimiter(',');
    ss->add_option("--seeds", o.seeds, "benchmark: number of seeds");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kOk : kArgumentError;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        if (!o.config.empty()) apply_config(*sub, o.config);
        header_mode(o.header);
        if (o.threads < 1) throw ArgumentError("--threads must be positive");
        Eigen::setNbThreads(o.threads);
        if (sub == train) cmd_train(o, out);
        if (sub == rec) cmd_reconstruct(o, out);
        if (sub == fc) cmd_forecast(o, out);
        if (sub == dens) cmd_density(o, out);
        if (sub == ar) cmd_autoregress(o, out);
        if (sub == ss) cmd_semisup(o, *ss, out);
        return kOk;
    } catch (const ArgumentError& e) {
        err << "argument error: " << e.what() << '\n';
        return kArgumentError;
    } catch (const CapabilityError& e) {
        err << "unsupported: " << e.what() << '\n';
        return kArgumentError;
    } catch (const CLI::Error& e) {
        err << "argument error: " << e.what() << '\n';
        return kArgumentError;
    } catch (const IoError& e) {
        err << "I/O error: " << e.what() << '\n';
        return kIoError;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << '\n';
        return kNumericalError;
    } catch (const StateError& e) {
        err << "numerical error: " << e.what() << '\n';
        return kNumericalError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kNumericalError;
    }
}

}  // namespace vargplvm::cli
