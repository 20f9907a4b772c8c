#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "secnosql/errors.hpp"
#include "secnosql/service.hpp"
#include "secnosql/topology.hpp"

namespace secnosql {

// A read response that disagrees with the client-side expected-value table
// (or any error during a measured run) invalidates the whole measurement.
class BenchCorrectnessError : public std::runtime_error {
public:
    explicit BenchCorrectnessError(const std::string& msg) : std::runtime_error(msg) {}
};

struct WorkloadSpec {
    uint64_t record_count = 40000;
    uint64_t operation_count = 40000;
    double read_proportion = 0.5;  // writes take the remaining fraction
    enum class Distribution : uint8_t { Zipfian, Uniform };
    Distribution distribution = Distribution::Zipfian;
    uint32_t value_length = 100;
    uint64_t seed = 42;
    std::string table = "usertable";
    std::string key_column = "col_id";
    std::string field_column = "field0";

    void validate() const {
        if (record_count == 0 || operation_count == 0)
            throw ConfigError("record and operation counts must be positive");
        if (read_proportion < 0.0 || read_proportion > 1.0)
            throw ConfigError("read proportion must lie in [0,1]");
        if (value_length < 32)
            throw ConfigError("value length must be at least 32 bytes");
    }
};

struct MetricsSample {
    uint32_t clients = 0;
    uint32_t proxies = 0;
    double throughput_ops = 0.0;
    double read_lat_us = 0.0;
    double write_lat_us = 0.0;
    double read_lat_p99_us = 0.0;
    double write_lat_p99_us = 0.0;
    uint64_t error_count = 0;
};

// Zipfian sampler over ranks 0..N-1 with P(i) = (1/(i+1)^theta) / zeta(N,theta),
// drawn by inverting the exact cumulative distribution, so empirical
// frequencies converge to the analytic pmf with no approximation bias.
class ZipfianGenerator {
public:
    ZipfianGenerator(uint64_t item_count, double theta, uint64_t seed)
        : theta_(theta), rng_(seed) {
        if (item_count == 0)
            throw ConfigError("zipfian item count must be positive");
        if (theta <= 0.0 || theta >= 1.0)
            throw ConfigError("zipfian constant must lie in (0,1)");
        cdf_.reserve(item_count);
        double sum = 0.0;
        for (uint64_t i = 0; i < item_count; ++i) {
            sum += 1.0 / std::pow(static_cast<double>(i + 1), theta);
            cdf_.push_back(sum);
        }
        zeta_ = sum;
        for (auto& c : cdf_) c /= zeta_;
        cdf_.back() = 1.0;  // guard against rounding
    }

    uint64_t next() {
        double u = unit_(rng_);
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        if (it == cdf_.end()) --it;
        return static_cast<uint64_t>(it - cdf_.begin());
    }

    uint64_t item_count() const { return cdf_.size(); }
    double zeta() const { return zeta_; }

    double pmf(uint64_t i) const {
        return 1.0 / std::pow(static_cast<double>(i + 1), theta_) / zeta_;
    }

    static double zeta_sum(uint64_t n, double theta) {
        double sum = 0.0;
        for (uint64_t i = 1; i <= n; ++i)
            sum += 1.0 / std::pow(static_cast<double>(i), theta);
        return sum;
    }

private:
    double theta_;
    double zeta_ = 0.0;
    std::vector<double> cdf_;
    std::mt19937_64 rng_;
    std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

inline constexpr double kZipfianTheta = 0.99;

namespace benchdetail {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline constexpr char kValueAlphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+-";

}  // namespace benchdetail

inline std::string bench_key(uint64_t index) {
    return "user" + std::to_string(index);
}

// Deterministic printable value for (key, version): a parseable version
// header followed by seeded filler. Reads are validated by regenerating
// the value for the version they claim to carry.
inline std::string bench_value(uint64_t seed, uint64_t key_index, uint64_t version,
                               uint32_t length) {
    std::string out = "v" + std::to_string(version) + "|";
    uint64_t state = benchdetail::splitmix64(seed ^ benchdetail::splitmix64(key_index)) ^
                     benchdetail::splitmix64(version);
    while (out.size() < length) {
        state = benchdetail::splitmix64(state);
        uint64_t x = state;
        for (int i = 0; i < 8 && out.size() < length; ++i) {
            out.push_back(benchdetail::kValueAlphabet[x & 63]);
            x >>= 6;
        }
    }
    return out;
}

inline std::optional<uint64_t> bench_value_version(const std::string& value) {
    if (value.empty() || value[0] != 'v') return std::nullopt;
    uint64_t v = 0;
    size_t i = 1;
    for (; i < value.size() && value[i] >= '0' && value[i] <= '9'; ++i)
        v = v * 10 + static_cast<uint64_t>(value[i] - '0');
    if (i == 1 || i >= value.size() || value[i] != '|') return std::nullopt;
    return v;
}

// Per-key ground truth for validating reads under concurrency. Writers to
// one key serialize on its mutex, so committed versions are monotone and a
// read may return any version at or above the one acked before it started.
struct KeyExpectation {
    std::mutex write_mu;
    std::atomic<uint64_t> acked{0};
    std::atomic<uint64_t> next_version{0};
};

class ExpectedValueTable {
public:
    explicit ExpectedValueTable(uint64_t keys) : states_(keys) {
        for (auto& s : states_) s = std::make_unique<KeyExpectation>();
    }

    KeyExpectation& at(uint64_t index) { return *states_[index]; }

private:
    std::vector<std::unique_ptr<KeyExpectation>> states_;
};

// Deterministic per-session operation plan: the sequence of (key, op kind)
// depends only on (spec seed, session index, partition), never on timing.
class SessionPlan {
public:
    SessionPlan(const WorkloadSpec& spec, uint32_t session_index, uint64_t partition_lo,
                uint64_t partition_size)
        : lo_(partition_lo),
          size_(partition_size),
          kind_rng_(benchdetail::splitmix64(spec.seed * 1315423911u + session_index)),
          read_proportion_(spec.read_proportion),
          uniform_(spec.distribution == WorkloadSpec::Distribution::Uniform),
          zipf_(partition_size, kZipfianTheta,
                benchdetail::splitmix64(spec.seed ^ (0xBADC0FFEULL + session_index))) {}

    struct Op {
        uint64_t key_index;
        bool is_read;
    };

    Op next() {
        uint64_t within = uniform_ ? kind_rng_() % size_ : zipf_.next();
        bool is_read = unit_(kind_rng_) < read_proportion_;
        return {lo_ + within, is_read};
    }

private:
    uint64_t lo_;
    uint64_t size_;
    std::mt19937_64 kind_rng_;
    double read_proportion_;
    bool uniform_;
    ZipfianGenerator zipf_;
    std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

struct Partition {
    uint64_t lo;
    uint64_t size;
};

// Keyspace split per proxy so a key's ledger entries live with the proxy
// that writes them; NoEnc keeps one shared partition.
inline Partition partition_for(const WorkloadSpec& spec, uint32_t proxies, uint32_t index) {
    uint32_t parts = proxies == 0 ? 1 : proxies;
    uint32_t i = index % parts;
    uint64_t lo = spec.record_count * i / parts;
    uint64_t hi = spec.record_count * (i + 1) / parts;
    return {lo, hi - lo};
}

inline std::string read_query(const WorkloadSpec& spec, uint64_t key_index) {
    return "SELECT " + spec.field_column + " FROM " + spec.table + " WHERE " +
           spec.key_column + " = '" + bench_key(key_index) + "'";
}

inline std::string write_query(const WorkloadSpec& spec, uint64_t key_index,
                               const std::string& value) {
    return "UPDATE " + spec.table + " SET " + spec.field_column + " = '" + value +
           "' WHERE " + spec.key_column + " = '" + bench_key(key_index) + "'";
}

// Preloads the keyspace at version 0. The schema is created through every
// endpoint so each proxy (or each plaintext coordinator) registers it;
// re-creation of an identical schema is idempotent end to end.
inline void load_phase(const WorkloadSpec& spec, Topology& topo) {
    spec.validate();
    uint32_t parts_needed = topo.config().proxies == 0 ? 1 : topo.config().proxies;
    if (spec.record_count < parts_needed)
        throw ConfigError("record_count must be at least the proxy count");
    uint32_t endpoints = topo.endpoint_count();
    for (uint32_t e = 0; e < endpoints; ++e) {
        auto ep = topo.make_endpoint(e);
        Response r = ep->create_schema(
            SchemaRequest{spec.table, {spec.key_column, spec.field_column}});
        if (!r.is_ok())
            throw BenchCorrectnessError("schema creation failed: " + r.message);
    }

    uint32_t parts = topo.config().proxies == 0 ? 1 : topo.config().proxies;
    std::atomic<bool> failed{false};
    std::string failure;
    std::mutex failure_mu;
    std::vector<std::thread> loaders;
    for (uint32_t j = 0; j < parts; ++j) {
        loaders.emplace_back([&, j] {
            try {
                auto ep = topo.make_endpoint(j);
                Partition part = partition_for(spec, topo.config().proxies, j);
                for (uint64_t k = part.lo; k < part.lo + part.size && !failed; ++k) {
                    std::string value = bench_value(spec.seed, k, 0, spec.value_length);
                    std::string q = "INSERT INTO " + spec.table + " (" + spec.key_column +
                                    ", " + spec.field_column + ") VALUES ('" +
                                    bench_key(k) + "', '" + value + "')";
                    Response r = ep->execute(q);
                    if (!r.is_ok())
                        throw BenchCorrectnessError("load insert failed: " + r.message);
                }
            } catch (const std::exception& e) {
                failed = true;
                std::lock_guard lock(failure_mu);
                if (failure.empty()) failure = e.what();
            }
        });
    }
    for (auto& t : loaders) t.join();
    if (failed) throw BenchCorrectnessError(failure);
}

// Runs `clients` concurrent sessions until operation_count ops complete.
// Reads are checked against the expected-value table; any error or
// mismatch aborts the measurement.
inline MetricsSample run_phase(const WorkloadSpec& spec, Topology& topo, uint32_t clients) {
    spec.validate();
    if (clients == 0)
        throw ConfigError("need at least one client session");
    if (spec.record_count < (topo.config().proxies == 0 ? 1 : topo.config().proxies))
        throw ConfigError("record_count must be at least the proxy count");

    ExpectedValueTable expected(spec.record_count);
    std::atomic<int64_t> budget{static_cast<int64_t>(spec.operation_count)};
    std::atomic<bool> failed{false};
    std::string failure;
    std::mutex failure_mu;

    struct SessionStats {
        uint64_t reads = 0, writes = 0, errors = 0;
        std::vector<double> read_lat_us, write_lat_us;
    };
    std::vector<SessionStats> stats(clients);

    auto fail = [&](const std::string& msg) {
        failed = true;
        std::lock_guard lock(failure_mu);
        if (failure.empty()) failure = msg;
    };

    auto worker = [&](uint32_t s) {
        SessionStats& st = stats[s];
        try {
            auto ep = topo.make_endpoint(s);
            Partition part = partition_for(spec, topo.config().proxies, s);
            SessionPlan plan(spec, s, part.lo, part.size);
            while (!failed && budget.fetch_sub(1) > 0) {
                auto op = plan.next();
                KeyExpectation& key_state = expected.at(op.key_index);
                if (op.is_read) {
                    uint64_t floor = key_state.acked.load();
                    auto t0 = std::chrono::steady_clock::now();
                    Response r = ep->execute(read_query(spec, op.key_index));
                    auto t1 = std::chrono::steady_clock::now();
                    st.read_lat_us.push_back(
                        std::chrono::duration<double, std::micro>(t1 - t0).count());
                    ++st.reads;
                    if (!r.is_ok()) {
                        ++st.errors;
                        fail("read of " + bench_key(op.key_index) + " failed: " + r.message);
                        continue;
                    }
                    if (r.cells.size() != 1 || r.cells[0].first != spec.field_column) {
                        ++st.errors;
                        fail("read of " + bench_key(op.key_index) + " returned wrong cells");
                        continue;
                    }
                    const std::string& value = r.cells[0].second;
                    auto version = bench_value_version(value);
                    if (!version || *version < floor ||
                        value != bench_value(spec.seed, op.key_index, *version,
                                             spec.value_length)) {
                        ++st.errors;
                        fail("value mismatch for " + bench_key(op.key_index));
                    }
                } else {
                    std::lock_guard write_lock(key_state.write_mu);
                    uint64_t v = key_state.next_version.fetch_add(1) + 1;
                    std::string value =
                        bench_value(spec.seed, op.key_index, v, spec.value_length);
                    auto t0 = std::chrono::steady_clock::now();
                    Response r = ep->execute(write_query(spec, op.key_index, value));
                    auto t1 = std::chrono::steady_clock::now();
                    st.write_lat_us.push_back(
                        std::chrono::duration<double, std::micro>(t1 - t0).count());
                    ++st.writes;
                    if (!r.is_ok()) {
                        ++st.errors;
                        fail("write of " + bench_key(op.key_index) + " failed: " + r.message);
                        continue;
                    }
                    key_state.acked.store(v);
                }
            }
        } catch (const std::exception& e) {
            ++st.errors;
            fail(e.what());
        }
    };

    auto t_start = std::chrono::steady_clock::now();
    std::vector<std::thread> sessions;
    sessions.reserve(clients);
    for (uint32_t s = 0; s < clients; ++s) sessions.emplace_back(worker, s);
    for (auto& t : sessions) t.join();
    auto t_end = std::chrono::steady_clock::now();

    if (failed) throw BenchCorrectnessError(failure);

    MetricsSample sample;
    sample.clients = clients;
    sample.proxies = topo.config().proxies;
    uint64_t reads = 0, writes = 0;
    std::vector<double> all_read, all_write;
    for (const auto& st : stats) {
        reads += st.reads;
        writes += st.writes;
        sample.error_count += st.errors;
        all_read.insert(all_read.end(), st.read_lat_us.begin(), st.read_lat_us.end());
        all_write.insert(all_write.end(), st.write_lat_us.begin(), st.write_lat_us.end());
    }
    if (reads + writes != spec.operation_count)
        throw BenchCorrectnessError("operation accounting mismatch");

    auto mean = [](const std::vector<double>& v) {
        if (v.empty()) return 0.0;
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    auto p99 = [](std::vector<double> v) {
        if (v.empty()) return 0.0;
        size_t idx = static_cast<size_t>(std::ceil(0.99 * static_cast<double>(v.size()))) - 1;
        std::nth_element(v.begin(), v.begin() + static_cast<ptrdiff_t>(idx), v.end());
        return v[idx];
    };
    sample.read_lat_us = mean(all_read);
    sample.write_lat_us = mean(all_write);
    sample.read_lat_p99_us = p99(all_read);
    sample.write_lat_p99_us = p99(all_write);
    double elapsed_s =
        std::chrono::duration<double>(t_end - t_start).count();
    sample.throughput_ops = static_cast<double>(spec.operation_count) / elapsed_s;
    return sample;
}

struct SweepRow {
    std::string model;
    uint32_t p = 0;
    uint32_t n = 0;
    MetricsSample sample;
    uint32_t repetition = 0;
};

inline std::string sweep_csv_header() {
    return "model,p,n,throughput_ops,read_lat_us,write_lat_us,errors,repetition,"
           "read_lat_p99_us,write_lat_p99_us";
}

inline std::string sweep_csv_row(const SweepRow& row) {
    std::ostringstream os;
    os << row.model << ',' << row.p << ',' << row.n << ',' << row.sample.throughput_ops
       << ',' << row.sample.read_lat_us << ',' << row.sample.write_lat_us << ','
       << row.sample.error_count << ',' << row.repetition << ','
       << row.sample.read_lat_p99_us << ',' << row.sample.write_lat_p99_us;
    return os.str();
}

// One grid cell: fresh topology, one load, `reps` measured runs.
inline std::vector<SweepRow> sweep_cell(Model model, uint32_t proxies, uint32_t clients,
                                        uint32_t reps, const WorkloadSpec& spec,
                                        TopologyConfig base_cfg) {
    base_cfg.model = model;
    base_cfg.proxies = proxies;
    Topology topo(base_cfg);
    load_phase(spec, topo);
    std::vector<SweepRow> rows;
    for (uint32_t r = 1; r <= reps; ++r) {
        SweepRow row;
        row.model = to_string(model);
        row.p = proxies;
        row.n = clients;
        row.sample = run_phase(spec, topo, clients);
        row.repetition = r;
        rows.push_back(std::move(row));
    }
    return rows;
}

// Grid sweep for one model. p_list matters only for the multi-proxy
// models; measurements run one at a time to avoid cross-contamination.
inline std::vector<SweepRow> sweep(Model model, const std::vector<uint32_t>& n_list,
                                   const std::vector<uint32_t>& p_list, uint32_t reps,
                                   const WorkloadSpec& spec, const TopologyConfig& base_cfg,
                                   std::ostream* csv) {
    std::vector<uint32_t> proxies;
    switch (model) {
        case Model::NoEnc: proxies = {0}; break;
        case Model::EncM1: proxies = {1}; break;
        default:
            proxies = p_list.empty() ? std::vector<uint32_t>{2} : p_list;
            break;
    }
    if (csv) *csv << sweep_csv_header() << '\n';
    std::vector<SweepRow> all;
    for (uint32_t p : proxies) {
        for (uint32_t n : n_list) {
            auto rows = sweep_cell(model, p, n, reps, spec, base_cfg);
            for (const auto& row : rows) {
                if (csv) *csv << sweep_csv_row(row) << '\n';
                all.push_back(row);
            }
            if (csv) csv->flush();
        }
    }
    return all;
}

}  // namespace secnosql
