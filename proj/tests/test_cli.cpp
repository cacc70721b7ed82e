#include <doctest.h>

#include "cli.hpp"
#include "vargplvm/io.hpp"
#include "vargplvm/predict.hpp"
#include "vargplvm/semisup.hpp"

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace vargplvm;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = FIXTURE_DIR;

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "vargplvm");
    std::vector<const char*> argv;
    for (const std::string& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(int(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("vargplvm_cli_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string small_data() {
    std::ostringstream s;
    for (int i = 0; i < 10; ++i) {
        const double t = i / 3.0;
        s << std::sin(t) << ',' << std::cos(t) << ',' << std::sin(2 * t) << '\n';
    }
    return s.str();
}

}  // namespace

TEST_CASE("train writes three artifacts and is reproducible") {
    TempDir dir;
    write(dir / "d.csv", small_data());
    const std::vector<std::string> args{"train", "--data", dir / "d.csv", "--model", dir / "m.json", "--latent-dim",
                                        "2", "--inducing", "5", "--iters", "20", "--fixed-beta-iters", "5"};
    const Result r = run(args);
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir / "m.json"));
    CHECK(fs::exists(dir / "m.trace.csv"));
    CHECK(fs::exists(dir / "m.ard.txt"));
    const CsvTable trace = read_csv(dir / "m.trace.csv");
    CHECK(trace.header == std::vector<std::string>{"iter", "bound", "beta"});
    CHECK(trace.values.rows() > 1);

    std::vector<std::string> again = args;
    again[4] = dir / "m2.json";
    REQUIRE(run(again).code == 0);
    CHECK(slurp(dir / "m.json") == slurp(dir / "m2.json"));
}

TEST_CASE("argument, io and parse errors map to exit codes") {
    TempDir dir;
    write(dir / "d.csv", small_data());
    const Result big = run({"train", "--data", dir / "d.csv", "--model", dir / "m.json", "--latent-dim", "4"});
    CHECK(big.code == cli::kArgumentError);
    CHECK(big.err.find("latent dimension") != std::string::npos);

    write(dir / "bad.csv", "1,2,3\n4,5,6\n7,8\n");
    const Result bad = run({"train", "--data", dir / "bad.csv", "--model", dir / "m.json"});
    CHECK(bad.code == cli::kIoError);
    CHECK(bad.err.find(":3:") != std::string::npos);

    CHECK(run({"train", "--data", dir / "missing.csv", "--model", dir / "m.json"}).code == cli::kIoError);
    CHECK(run({"train", "--model", dir / "m.json"}).code == cli::kArgumentError);
    CHECK(run({"frobnicate"}).code == cli::kArgumentError);
    CHECK(run({"train", "--no-such-flag"}).code == cli::kArgumentError);
    CHECK(run({"train", "--variant", "odd", "--data", dir / "d.csv", "--model", dir / "m.json"}).code ==
          cli::kArgumentError);
    CHECK(run({"--help"}).code == 0);
}

TEST_CASE("config file fills unset flags and rejects unknown keys") {
    TempDir dir;
    write(dir / "d.csv", small_data());
    const std::vector<std::string> base{"train", "--data", dir / "d.csv", "--latent-dim", "2", "--inducing", "4"};
    auto with = [&](std::vector<std::string> extra) {
        std::vector<std::string> a = base;
        a.insert(a.end(), extra.begin(), extra.end());
        return run(a);
    };
    write(dir / "c.cfg", "# schedule\niters = 10,5\nfixed-beta-iters=3\nseed=4\n");
    REQUIRE(with({"--config", dir / "c.cfg", "--model", dir / "a.json"}).code == 0);
    REQUIRE(with({"--iters", "10,5", "--fixed-beta-iters", "3", "--seed", "4", "--model", dir / "b.json"}).code == 0);
    CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));

    // the command line wins over the file
    REQUIRE(with({"--config", dir / "c.cfg", "--seed", "9", "--model", dir / "c.json"}).code == 0);
    REQUIRE(with({"--iters", "10,5", "--fixed-beta-iters", "3", "--seed", "9", "--model", dir / "d.json"}).code == 0);
    CHECK(slurp(dir / "c.json") == slurp(dir / "d.json"));
    CHECK(slurp(dir / "c.json") != slurp(dir / "a.json"));

    write(dir / "u.cfg", "seed=1\nlearning_rate=3\n");
    const Result r = with({"--config", dir / "u.cfg", "--model", dir / "e.json"});
    CHECK(r.code == cli::kArgumentError);
    CHECK(r.err.find("learning_rate") != std::string::npos);
    CHECK(with({"--config", dir / "none.cfg", "--model", dir / "e.json"}).code == cli::kIoError);
}

TEST_CASE("reconstruct matches the golden fixture") {
    TempDir dir;
    const Result r = run({"reconstruct", "--model", (kFixtures / "golden_model.json").string(), "--test",
                          (kFixtures / "golden_test.csv").string(), "--out", dir / "r.csv"});
    REQUIRE(r.code == 0);
    const CsvTable got = read_csv(dir / "r.csv");
    const CsvTable want = read_csv((kFixtures / "golden_reconstruct.csv").string());
    CHECK(got.header == want.header);
    REQUIRE(got.values.rows() == want.values.rows());
    REQUIRE(got.values.cols() == want.values.cols());
    CHECK((got.values - want.values).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((got.values.rightCols(2).array() >= 0.0).all());

    const Result full = run({"reconstruct", "--model", (kFixtures / "golden_model.json").string(), "--test",
                             (kFixtures / "golden_train.csv").string(), "--out", dir / "r2.csv"});
    CHECK(full.code == cli::kArgumentError);
    CHECK(full.err.find("density") != std::string::npos);

    write(dir / "mixed.csv", "1,2,,\n1,,3,\n");
    CHECK(run({"reconstruct", "--model", (kFixtures / "golden_model.json").string(), "--test", dir / "mixed.csv",
               "--out", dir / "r3.csv"})
              .code == cli::kArgumentError);
}

TEST_CASE("density writes one value per row") {
    TempDir dir;
    const Result r = run({"density", "--model", (kFixtures / "golden_model.json").string(), "--test",
                          (kFixtures / "golden_train.csv").string(), "--out", dir / "d.csv"});
    REQUIRE(r.code == 0);
    const CsvTable t = read_csv(dir / "d.csv");
    CHECK(t.values.rows() == 15);
    CHECK(t.values.allFinite());
}

TEST_CASE("forecast at the training timestamps returns the variational means") {
    TempDir dir;
    write(dir / "d.csv", small_data());
    std::ostringstream times;
    for (int i = 0; i < 10; ++i) times << i << '\n';
    write(dir / "t.csv", times.str());
    REQUIRE(run({"train", "--data", dir / "d.csv", "--model", dir / "m.json", "--variant", "dynamical",
                 "--timestamps", dir / "t.csv", "--latent-dim", "2", "--inducing", "5", "--iters", "30",
                 "--fixed-beta-iters", "5"})
                .code == 0);
    REQUIRE(run({"forecast", "--model", dir / "m.json", "--timestamps", dir / "t.csv", "--out", dir / "f.csv"}).code ==
            0);
    const CsvTable f = read_csv(dir / "f.csv");
    const LatentMarginals marg = latent_marginals(load_model(dir / "m.json"));
    CHECK(f.header[1] == "x_mean_0");
    CHECK((f.values.middleCols(1, 2) - marg.mean).cwiseAbs().maxCoeff() < 1e-8);

    // forecasting is only defined for dynamical models
    CHECK(run({"forecast", "--model", (kFixtures / "golden_model.json").string(), "--timestamps", dir / "t.csv",
               "--out", dir / "g.csv"})
              .code == cli::kArgumentError);
}

TEST_CASE("autoregress emits one row per window") {
    TempDir dir;
    std::ostringstream s;
    for (int i = 0; i < 30; ++i) s << std::sin(i / 3.0) << '\n';
    write(dir / "s.csv", s.str());
    const Result r = run({"autoregress", "--data", dir / "s.csv", "--tau", "4", "--out", dir / "a.csv", "--inducing",
                          "6", "--iters", "30", "--fixed-beta-iters", "5", "--steps", "3", "--forecast-out",
                          dir / "f.csv"});
    REQUIRE(r.code == 0);
    const CsvTable a = read_csv(dir / "a.csv");
    CHECK(a.values.rows() == 26);
    CHECK(a.header == std::vector<std::string>{"target_0", "mean_0", "var_0"});
    CHECK(read_csv(dir / "f.csv").values.rows() == 3);
}

TEST_CASE("semisup benchmark row matches the library") {
    TempDir dir;
    const Result r = run({"semisup", "--benchmark", "--fractions", "1.0", "--seeds", "1", "--inducing", "8", "--iters",
                          "15", "--fixed-beta-iters", "5", "--test-iters", "20", "--restarts", "1", "--out",
                          dir / "b.csv"});
    REQUIRE(r.code == 0);
    std::ifstream in(dir / "b.csv");
    std::string header, line;
    std::getline(in, header);
    CHECK(header == "missing_fraction,method,mse,stderr");
    std::getline(in, line);

    SemisupBenchmarkConfig c;
    c.missing_fractions = {1.0};
    c.seeds = 1;
    c.model.num_inducing = 8;
    c.model.iters = 15;
    c.model.fixed_beta_iters = 5;
    c.model.test.max_iterations = 20;
    c.model.test.restarts = 1;
    const std::vector<BenchmarkRow> rows = semisup_benchmark(c);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.17g,%s,%.17g,%.17g", rows[0].missing_fraction, rows[0].method.c_str(),
                  rows[0].mse, rows[0].stderr_);
    CHECK(line == buf);
}

TEST_CASE("semisup trains on partial inputs and predicts") {
    TempDir dir;
    std::ostringstream z, y, zt;
    for (int i = 0; i < 16; ++i) {
        const double a = -1.5 + 0.2 * i, b = std::cos(1.7 * i);
        z << a << ',' << ((i % 4 == 3) ? std::string() : std::to_string(b)) << '\n';
        y << std::sin(a) + 0.3 * b << '\n';
    }
    zt << "0.1,0.2\n-0.3,0.5\n";
    write(dir / "z.csv", z.str());
    write(dir / "y.csv", y.str());
    write(dir / "zt.csv", zt.str());
    const Result r = run({"semisup", "--data", dir / "z.csv", "--targets", dir / "y.csv", "--test", dir / "zt.csv",
                          "--out", dir / "p.csv", "--inducing", "8", "--iters", "30", "--fixed-beta-iters", "5"});
    REQUIRE(r.code == 0);
    const CsvTable p = read_csv(dir / "p.csv");
    CHECK(p.values.rows() == 2);
    CHECK(p.header == std::vector<std::string>{"mean_0", "var_0"});
    CHECK((p.values.col(1).array() > 0.0).all());
}
