#include "vargplvm/io.hpp"

#include "vargplvm/errors.hpp"

#include <json.hpp>

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace vargplvm {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

// An empty field is a missing value (NaN). Returns false
// when the field is not a number.
bool parse_number(std::string_view field, double& value) {
    if (field.empty()) {
        value = std::numeric_limits<double>::quiet_NaN();
        return true;
    }
    if (field.front() == '+') field.remove_prefix(1);
    const char* end = field.data() + field.size();
    const auto r = std::from_chars(field.data(), end, value);
    return r.ec == std::errc() && r.ptr == end && std::isfinite(value);
}

// ---- base64 of little-endian float64 ----

const char* kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string encode_base64(const std::vector<double>& values) {
    std::vector<unsigned char> bytes(values.size() * 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &values[i], 8);
        for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (std::size_t i = 0; i < bytes.size(); i += 3) {
        const std::size_t left = bytes.size() - i;
        const std::uint32_t chunk = (std::uint32_t(bytes[i]) << 16) | (left > 1 ? std::uint32_t(bytes[i + 1]) << 8 : 0) |
                                    (left > 2 ? std::uint32_t(bytes[i + 2]) : 0);
        out += kAlphabet[(chunk >> 18) & 63];
        out += kAlphabet[(chunk >> 12) & 63];
        out += left > 1 ? kAlphabet[(chunk >> 6) & 63] : '=';
        out += left > 2 ? kAlphabet[chunk & 63] : '=';
    }
    return out;
}

std::vector<double> decode_base64(const std::string& text) {
    std::array<int, 256> lookup;
    lookup.fill(-1);
    for (int i = 0; i < 64; ++i) lookup[static_cast<unsigned char>(kAlphabet[i])] = i;
    if (text.size() % 4 != 0) throw IoError("model file: base64 array has a bad length");
    std::vector<unsigned char> bytes;
    for (std::size_t i = 0; i < text.size(); i += 4) {
        std::uint32_t chunk = 0;
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = text[i + k];
            int v = 0;
            if (c == '=') {
                ++pad;
            } else {
                v = lookup[static_cast<unsigned char>(c)];
                if (v < 0 || pad > 0) throw IoError("model file: invalid base64 array");
            }
            chunk = (chunk << 6) | std::uint32_t(v);
        }
        bytes.push_back(static_cast<unsigned char>(chunk >> 16));
        if (pad < 2) bytes.push_back(static_cast<unsigned char>(chunk >> 8));
        if (pad < 1) bytes.push_back(static_cast<unsigned char>(chunk));
    }
    if (bytes.size() % 8 != 0) throw IoError("model file: base64 array is not a whole number of float64 values");
    std::vector<double> out(bytes.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= std::uint64_t(bytes[i * 8 + b]) << (8 * b);
        std::memcpy(&out[i], &bits, 8);
    }
    return out;
}

// ---- arrays ----

json array_json(const MatrixXd& a, ArrayEncoding enc) {
    std::vector<double> data(a.size());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < a.cols(); ++j) data[i * a.cols() + j] = a(i, j);
    json out{{"rows", a.rows()}, {"cols", a.cols()}};
    if (enc == ArrayEncoding::Base64) {
        out["data"] = encode_base64(data);
    } else {
        out["data"] = data;
    }
    return out;
}

json bool_json(const BoolMatrix& a) {
    std::vector<int> data(a.size());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < a.cols(); ++j) data[i * a.cols() + j] = a(i, j) ? 1 : 0;
    return json{{"rows", a.rows()}, {"cols", a.cols()}, {"data", data}};
}

const json& field(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw IoError(std::string("model file: missing field '") + key + "'");
    return j.at(key);
}

MatrixXd array_from(const json& j) {
    const Index rows = field(j, "rows").get<Index>();
    const Index cols = field(j, "cols").get<Index>();
    const json& d = field(j, "data");
    const std::vector<double> data = d.is_string() ? decode_base64(d.get<std::string>()) : d.get<std::vector<double>>();
    if (rows < 0 || cols < 0 || Index(data.size()) != rows * cols) {
        throw IoError("model file: array data does not match its shape");
    }
    MatrixXd out(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j2 = 0; j2 < cols; ++j2) out(i, j2) = data[i * cols + j2];
    return out;
}

BoolMatrix bools_from(const json& j) {
    const MatrixXd a = array_from(j);
    return (a.array() != 0.0);
}

VectorXd vector_from(const json& j) {
    const MatrixXd a = array_from(j);
    if (a.cols() != 1 && a.size() != 0) throw IoError("model file: expected a column vector");
    return a.col(0);
}

// ---- kernels ----

json kernel_json(const Kernel& k) {
    if (k.family() == KernelFamily::Sum) {
        json children = json::array();
        for (const Kernel& c : k.children()) children.push_back(kernel_json(c));
        return json{{"family", to_string(k.family())}, {"children", children}};
    }
    json params = json::object();
    json fixed = json::array();
    const auto names = k.param_names();
    const VectorXd values = k.params();
    const auto mask = k.fixed_mask();
    for (std::size_t i = 0; i < names.size(); ++i) {
        params[names[i]] = values(Index(i));
        if (mask[i]) fixed.push_back(names[i]);
    }
    return json{{"family", to_string(k.family())}, {"params", params}, {"fixed", fixed}};
}

Kernel kernel_from(const json& j) {
    const KernelFamily family = family_from_string(field(j, "family").get<std::string>());
    if (family == KernelFamily::Sum) {
        std::vector<Kernel> children;
        for (const json& c : field(j, "children")) children.push_back(kernel_from(c));
        return Kernel::sum(std::move(children));
    }
    const json& params = field(j, "params");
    auto value = [&](const char* name) { return field(params, name).get<double>(); };
    auto weights = [&] {
        Index count = 0;
        while (params.contains("ard_weight[" + std::to_string(count) + "]")) ++count;
        if (count == 0) throw IoError("model file: ARD kernel without weights");
        VectorXd w(count);
        for (Index i = 0; i < count; ++i) w(i) = params.at("ard_weight[" + std::to_string(i) + "]").get<double>();
        return w;
    };
    Kernel k;
    switch (family) {
        case KernelFamily::RbfArd: k = Kernel::rbf_ard(value("variance"), weights()); break;
        case KernelFamily::LinearArd: k = Kernel::linear_ard(weights()); break;
        case KernelFamily::Matern32: k = Kernel::matern32(value("variance"), value("lengthscale")); break;
        case KernelFamily::PeriodicRbf:
            k = Kernel::periodic(value("variance"), value("lengthscale"), value("period"));
            break;
        case KernelFamily::White: k = Kernel::white(value("variance")); break;
        case KernelFamily::Bias: k = Kernel::bias(value("variance")); break;
        case KernelFamily::Sum: break;
    }
    if (Index(params.size()) != k.num_params()) throw IoError("model file: unexpected kernel parameters");
    if (j.contains("fixed")) {
        for (const json& name : j.at("fixed")) k.set_fixed(name.get<std::string>(), true);
    }
    return k;
}

// ---- prior ----

const char* prior_name(PriorKind kind) {
    switch (kind) {
        case PriorKind::StandardNormal: return "standard";
        case PriorKind::Temporal: return "temporal";
        case PriorKind::UncertainInput: return "uncertain";
    }
    return "standard";
}

json prior_json(const LatentPrior& p, ArrayEncoding enc) {
    json out{{"kind", prior_name(p.kind)}};
    if (p.kind == PriorKind::Temporal) {
        out["kernel_x"] = kernel_json(p.kernel_x);
        out["t"] = array_json(p.t, enc);
        out["sequence_starts"] = p.sequence_starts;
    } else if (p.kind == PriorKind::UncertainInput) {
        out["z"] = array_json(p.z, enc);
        out["z_var"] = array_json(p.z_var, enc);
    }
    return out;
}

LatentPrior prior_from(const json& j) {
    const std::string kind = field(j, "kind").get<std::string>();
    if (kind == "standard") return LatentPrior::standard();
    if (kind == "temporal") {
        return LatentPrior::temporal(kernel_from(field(j, "kernel_x")), array_from(field(j, "t")),
                                     field(j, "sequence_starts").get<std::vector<Index>>());
    }
    if (kind == "uncertain") return LatentPrior::uncertain(array_from(field(j, "z")), vector_from(field(j, "z_var")));
    throw IoError("model file: unknown prior kind '" + kind + "'");
}

}  // namespace

// ---- CSV ----

CsvTable parse_csv(std::istream& in, const std::string& source, HeaderMode header) {
    CsvTable table;
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t width = 0;
    long line_no = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split(line);
        if (first) {
            first = false;
            width = fields.size();
            bool numeric = true;
            double v;
            for (auto f : fields) numeric = numeric && parse_number(f, v);
            const bool is_header = header == HeaderMode::Yes || (header == HeaderMode::Auto && !numeric);
            if (is_header) {
                for (auto f : fields) table.header.emplace_back(f);
                continue;
            }
        }
        if (fields.size() != width) {
            throw IoError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) +
                          " fields, found " + std::to_string(fields.size()));
        }
        std::vector<double> row(width);
        for (std::size_t k = 0; k < width; ++k) {
            if (!parse_number(fields[k], row[k])) {
                throw IoError(source + ":" + std::to_string(line_no) + ": field " + std::to_string(k + 1) +
                              " is not a number: '" + std::string(fields[k]) + "'");
            }
        }
        rows.push_back(std::move(row));
    }
    if (in.bad()) throw IoError(source + ": read failed");
    table.values.resize(Index(rows.size()), Index(width));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t k = 0; k < width; ++k) table.values(Index(i), Index(k)) = rows[i][k];
    return table;
}

CsvTable read_csv(const std::string& path, HeaderMode header) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return parse_csv(in, path, header);
}

void write_csv(std::ostream& out, const MatrixXd& values, const std::vector<std::string>& header) {
    if (!header.empty()) {
        if (Index(header.size()) != values.cols()) throw ArgumentError("CSV header does not match the column count");
        for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << header[k];
        out << '\n';
    }
    char buf[32];
    for (Index i = 0; i < values.rows(); ++i) {
        for (Index j = 0; j < values.cols(); ++j) {
            if (j) out << ',';
            if (std::isfinite(values(i, j))) {
                std::snprintf(buf, sizeof buf, "%.17g", values(i, j));
                out << buf;
            }
        }
        out << '\n';
    }
}

void write_csv(const std::string& path, const MatrixXd& values, const std::vector<std::string>& header) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    write_csv(out, values, header);
    if (!out) throw IoError("write to '" + path + "' failed");
}

// ---- model file ----

std::string model_to_json(const Model& model, ArrayEncoding enc) {
    model.validate();
    json j;
    j["format_version"] = kFormatVersion;
    j["precision"] = enc == ArrayEncoding::Base64 ? "base64" : "decimal";
    j["variant"] = to_string(model.variant);
    j["n"] = model.n();
    j["q"] = model.latent_dim();
    j["m"] = model.num_inducing();
    j["p"] = model.p();
    j["kernel_f"] = kernel_json(model.kernel_f);
    j["prior"] = prior_json(model.prior, enc);
    if (model.variant == Variant::Dynamical) {
        j["dyn"] = json{{"mu_bar", array_json(model.dyn.mu_bar, enc)}, {"lambda", array_json(model.dyn.lambda, enc)}};
    } else {
        j["latent"] = json{{"mean", array_json(model.q.mean, enc)},
                           {"var", array_json(model.q.var, enc)},
                           {"fixed", bool_json(model.q.fixed)}};
    }
    j["inducing"] = array_json(model.inducing, enc);
    j["beta"] = model.beta;
    j["output_offset"] = array_json(model.output_offset, enc);
    json blocks = json::array();
    for (const OutputBlock& b : model.outputs) {
        json block{{"rows", b.rows}, {"p", b.data.p}};
        if (b.data.has_raw()) {
            block["y"] = array_json(b.data.y, enc);
        } else {
            block["factor"] = array_json(b.data.factor, enc);
            block["trace_yy"] = b.data.trace_yy;
        }
        blocks.push_back(block);
    }
    j["outputs"] = blocks;
    j["flags"] = json{{"fix_beta", model.fix_beta}, {"fix_inducing", model.fix_inducing}, {"fix_latent", model.fix_latent}};
    json schema = json::array();
    for (const SchemaSection& s : gradient_schema(model).sections) {
        schema.push_back(json{{"name", s.name}, {"offset", s.offset}, {"size", s.size}});
    }
    j["schema"] = schema;
    json trace = json::array();
    for (const TraceRow& r : model.trace) trace.push_back(json{{"iteration", r.iteration}, {"bound", r.bound}, {"beta", r.beta}});
    j["trace"] = trace;
    return j.dump() + "\n";
}

Model model_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw IoError(std::string("model file is not valid JSON: ") + e.what());
    }
    try {
        const int version = field(j, "format_version").get<int>();
        if (version != kFormatVersion) throw IoError("unsupported model format version " + std::to_string(version));
        Model m;
        m.variant = variant_from_string(field(j, "variant").get<std::string>());
        m.kernel_f = kernel_from(field(j, "kernel_f"));
        m.prior = prior_from(field(j, "prior"));
        if (m.variant == Variant::Dynamical) {
            const json& d = field(j, "dyn");
            m.dyn.mu_bar = array_from(field(d, "mu_bar"));
            m.dyn.lambda = array_from(field(d, "lambda"));
        } else {
            const json& l = field(j, "latent");
            m.q = FactorizedQ(array_from(field(l, "mean")), array_from(field(l, "var")));
            m.q.fixed = bools_from(field(l, "fixed"));
        }
        m.inducing = array_from(field(j, "inducing"));
        m.beta = field(j, "beta").get<double>();
        m.output_offset = vector_from(field(j, "output_offset"));
        for (const json& b : field(j, "outputs")) {
            OutputBlock block;
            block.rows = field(b, "rows").get<std::vector<Index>>();
            if (b.contains("y")) {
                block.data = OutputData::from_y(array_from(b.at("y")));
            } else {
                block.data.p = field(b, "p").get<Index>();
                block.data.factor = array_from(field(b, "factor"));
                block.data.trace_yy = field(b, "trace_yy").get<double>();
            }
            m.outputs.push_back(std::move(block));
        }
        const json& flags = field(j, "flags");
        m.fix_beta = field(flags, "fix_beta").get<bool>();
        m.fix_inducing = field(flags, "fix_inducing").get<bool>();
        m.fix_latent = field(flags, "fix_latent").get<bool>();
        for (const json& r : field(j, "trace")) {
            m.trace.push_back({field(r, "iteration").get<int>(), field(r, "bound").get<double>(),
                               field(r, "beta").get<double>()});
        }
        m.validate();
        return m;
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed model file: ") + e.what());
    } catch (const ArgumentError& e) {
        throw IoError(std::string("inconsistent model file: ") + e.what());
    } catch (const StateError& e) {
        throw IoError(std::string("inconsistent model file: ") + e.what());
    }
}

void save_model(const std::string& path, const Model& model, ArrayEncoding encoding) {
    const std::string text = model_to_json(model, encoding);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw IoError("write to '" + path + "' failed");
}

Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return model_from_json(ss.str());
}

}  // namespace vargplvm
