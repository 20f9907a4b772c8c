#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "secnosql/cli.hpp"

using namespace secnosql;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("secnosql-cli-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
    static inline int counter = 0;
};

struct KeyEnv {
    KeyEnv() { setenv("SECNOSQL_MASTER_KEY", std::string(64, 'c').c_str(), 1); }
    ~KeyEnv() { unsetenv("SECNOSQL_MASTER_KEY"); }
};

int cli(std::vector<std::string> args, std::string* captured_out = nullptr,
        std::string* captured_err = nullptr) {
    std::ostringstream out, err;
    int rc = run_cli(std::move(args), out, err);
    if (captured_out) *captured_out = out.str();
    if (captured_err) *captured_err = err.str();
    return rc;
}

int count_lines(const std::string& path) {
    std::ifstream in(path);
    int n = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++n;
    return n;
}

}  // namespace

TEST_CASE("sweep writes one CSV row per (client, repetition) cell") {
    KeyEnv key;
    TempDir dir;
    std::string csv = dir.file("sweep.csv");
    int rc = cli({"sweep", "--model", "EncM1", "--clients", "1,2,4", "--reps", "2",
                  "--records", "40", "--ops", "120", "--out", csv});
    REQUIRE(rc == kExitOk);
    CHECK(count_lines(csv) == 1 + 6);  // header + 3 clients x 2 reps

    CsvTable t = CsvTable::read_file(csv);
    CHECK(t.column("model") == 0);
    CHECK(t.column("repetition") == 7);
    for (const auto& row : t.rows) {
        CHECK(row[t.column("model")] == "EncM1");
        CHECK(row[t.column("p")] == "1");
        CHECK(row[t.column("errors")] == "0");
    }
}

TEST_CASE("fit recovers a planted polynomial from CSV input") {
    TempDir dir;
    std::string csv = dir.file("planted.csv");
    {
        std::ofstream out(csv);
        out << sweep_csv_header() << "\n";
        for (int p : {1, 2, 4})
            for (int n = 1; n <= 16; ++n) {
                double v = 2.0 + 3.0 * p + 5.0 * n;         // throughput plant
                double r = 100.0 - 1.0 * p + 0.25 * n * n;  // read latency plant
                double w = 7.0;                             // constant write latency
                out << "EncM2," << p << ',' << n << ',' << v << ',' << r << ',' << w
                    << ",0,1,0,0\n";
            }
    }
    std::string coeffs = dir.file("coeffs.json");
    REQUIRE(cli({"fit", "--in", csv, "--out", coeffs}) == kExitOk);

    std::ifstream in(coeffs);
    nlohmann::json j;
    in >> j;
    CHECK(j["throughput"]["c00"].get<double>() == Catch::Approx(2.0).margin(1e-7));
    CHECK(j["throughput"]["c10"].get<double>() == Catch::Approx(3.0).margin(1e-7));
    CHECK(j["throughput"]["c01"].get<double>() == Catch::Approx(5.0).margin(1e-7));
    CHECK(j["throughput"]["c02"].get<double>() == Catch::Approx(0.0).margin(1e-7));
    CHECK(j["read_latency"]["c02"].get<double>() == Catch::Approx(0.25).margin(1e-7));
    CHECK(j["write_latency"]["c00"].get<double>() == Catch::Approx(7.0).margin(1e-7));

    // Report renders one offer per proxy option.
    std::string out_text;
    REQUIRE(cli({"report", "--coeffs", coeffs, "--clients", "128", "--proxies", "1,2,4"},
                &out_text) == kExitOk);
    CHECK(out_text.find("P=1") != std::string::npos);
    CHECK(out_text.find("P=2") != std::string::npos);
    CHECK(out_text.find("P=4") != std::string::npos);

    std::string table_csv = dir.file("sla.csv");
    REQUIRE(cli({"report", "--coeffs", coeffs, "--clients", "128", "--proxies", "1,2,4",
                 "--out", table_csv}) == kExitOk);
    CHECK(count_lines(table_csv) == 1 + 3);
}

TEST_CASE("invalid topologies exit with the config code before starting") {
    KeyEnv key;
    std::string err;
    CHECK(cli({"run", "--model", "EncM1", "--proxies", "2", "--records", "10", "--ops",
               "10"},
              nullptr, &err) == kExitConfig);
    CHECK(err.find("config error") != std::string::npos);

    CHECK(cli({"run", "--model", "NoEnc", "--proxies", "1"}, nullptr, &err) == kExitConfig);
    CHECK(cli({"nonsense-subcommand"}, nullptr, &err) == kExitConfig);
    CHECK(cli({"sweep", "--model", "Enc9"}, nullptr, &err) == kExitConfig);
    CHECK(cli({"fit", "--in", "/nonexistent.csv"}, nullptr, &err) == kExitConfig);
}

TEST_CASE("encrypted models refuse to start without a master key") {
    unsetenv("SECNOSQL_MASTER_KEY");
    std::string err;
    CHECK(cli({"run", "--model", "EncM1", "--records", "10", "--ops", "10"}, nullptr,
              &err) == kExitConfig);
    CHECK(err.find("master key") != std::string::npos);
}

TEST_CASE("load reports insert throughput; NoEnc needs no key") {
    std::string out;
    REQUIRE(cli({"load", "--model", "NoEnc", "--proxies", "0", "--records", "64", "--ops",
                 "1"},
                &out) == kExitOk);
    CHECK(out.find("loaded 64 records") != std::string::npos);
}

TEST_CASE("run prints one table row per client count") {
    KeyEnv key;
    std::string out;
    REQUIRE(cli({"run", "--model", "EncM1", "--records", "30", "--ops", "90", "--clients",
                 "1,2"},
                &out) == kExitOk);
    CHECK(out.find("EncM1") != std::string::npos);
    int rows = 0;
    std::istringstream is(out);
    std::string line;
    while (std::getline(is, line))
        if (line.find("EncM1") != std::string::npos) ++rows;
    CHECK(rows == 2);
}

TEST_CASE("help is printed on request") {
    std::string out;
    CHECK(cli({"--help"}, &out) == kExitOk);
    CHECK(out.find("sweep") != std::string::npos);
    CHECK(out.find("serve-proxy") != std::string::npos);
}
