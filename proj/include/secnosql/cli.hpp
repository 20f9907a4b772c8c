#pragma once

#include <pthread.h>
#include <signal.h>

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "secnosql/bench.hpp"
#include "secnosql/servers.hpp"
#include "secnosql/sla.hpp"
#include "secnosql/topology.hpp"

namespace secnosql {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitCorrectness = 3;

// Minimal CSV table with header-name access; enough for the sweep output.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    static CsvTable read(std::istream& in) {
        CsvTable t;
        std::string line;
        bool first = true;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            std::vector<std::string> fields;
            std::stringstream ss(line);
            std::string field;
            while (std::getline(ss, field, ',')) fields.push_back(field);
            if (first) {
                t.header = std::move(fields);
                first = false;
            } else {
                t.rows.push_back(std::move(fields));
            }
        }
        return t;
    }

    static CsvTable read_file(const std::string& path) {
        std::ifstream in(path);
        if (!in)
            throw ConfigError("cannot open CSV file '" + path + "'");
        return read(in);
    }

    size_t column(const std::string& name) const {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw ConfigError("CSV lacks column '" + name + "'");
    }
};

namespace clidetail {

inline std::vector<Endpoint> parse_endpoints(const std::string& csv) {
    std::vector<Endpoint> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(Endpoint::parse(item));
    if (out.empty())
        throw ConfigError("empty endpoint list");
    return out;
}

inline int wait_for_shutdown() {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    int sig = 0;
    sigwait(&set, &sig);
    return sig;
}

inline void block_shutdown_signals() {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
}

struct CommonFlags {
    std::string config_path;
    std::string model;
    uint32_t nodes = 0;
    uint32_t proxies = 0;
    uint32_t rf = 0;
    uint32_t proxy_delay_us = 0;
    uint32_t store_delay_us = 0;
    bool multi_process = false;
    uint16_t base_port = 0;
    std::string ledger_dir;
    std::string binary;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file; flags override it");
        cmd->add_option("--model", model, "NoEnc|EncM1|EncM2|EncM3");
        cmd->add_option("--nodes", nodes, "storage node count");
        cmd->add_option("--proxies", proxies, "proxy count");
        cmd->add_option("--rf", rf, "replication factor");
        cmd->add_option("--proxy-delay-us", proxy_delay_us,
                        "serialized per-op proxy service time");
        cmd->add_option("--store-delay-us", store_delay_us,
                        "serialized per-op node service time");
        cmd->add_flag("--multi-process", multi_process,
                      "spawn serve-node/serve-proxy children instead of in-process objects");
        cmd->add_option("--base-port", base_port, "first port for multi-process children");
        cmd->add_option("--ledger-dir", ledger_dir, "directory for proxy ledger files");
        cmd->add_option("--binary", binary, "binary to spawn for multi-process children");
    }

    TopologyConfig build(const CLI::App* cmd) const {
        TopologyConfig cfg;
        if (!config_path.empty()) cfg = topology_config_from_file(config_path);
        if (!cfg.master_key) cfg.master_key = master_key_from_env();
        if (cmd->count("--model")) {
            cfg.model = parse_model(model);
            if (!cmd->count("--proxies") && config_path.empty())
                cfg.proxies = default_proxy_count(cfg.model);
        }
        if (cmd->count("--nodes")) cfg.nodes = nodes;
        if (cmd->count("--proxies")) cfg.proxies = proxies;
        if (cmd->count("--rf")) cfg.replication_factor = rf;
        if (cmd->count("--proxy-delay-us")) cfg.proxy_delay_us = proxy_delay_us;
        if (cmd->count("--store-delay-us")) cfg.store_delay_us = store_delay_us;
        if (cmd->count("--multi-process")) cfg.multi_process = multi_process;
        if (cmd->count("--base-port")) cfg.base_port = base_port;
        if (cmd->count("--ledger-dir")) cfg.ledger_dir = ledger_dir;
        if (cmd->count("--binary")) cfg.binary_path = binary;
        if (cfg.model == Model::EncM1 && !cmd->count("--proxies") && config_path.empty())
            cfg.proxies = 1;
        if (cfg.model == Model::NoEnc && !cmd->count("--proxies") && config_path.empty())
            cfg.proxies = 0;
        if (cfg.replication_factor > cfg.nodes && !cmd->count("--rf") && config_path.empty())
            cfg.replication_factor = cfg.nodes;
        return cfg;
    }
};

struct WorkloadFlags {
    uint64_t records = 2000;
    uint64_t ops = 4000;
    double read_prop = 0.5;
    uint32_t value_len = 100;
    uint64_t seed = 42;
    std::string dist = "zipfian";

    void attach(CLI::App* cmd) {
        cmd->add_option("--records", records, "rows preloaded by the load phase");
        cmd->add_option("--ops", ops, "operations per measured run");
        cmd->add_option("--read-prop", read_prop, "read fraction (writes take the rest)");
        cmd->add_option("--value-len", value_len, "value length in bytes");
        cmd->add_option("--seed", seed, "workload seed");
        cmd->add_option("--dist", dist, "zipfian|uniform");
    }

    WorkloadSpec build() const {
        WorkloadSpec spec;
        spec.record_count = records;
        spec.operation_count = ops;
        spec.read_proportion = read_prop;
        spec.value_length = value_len;
        spec.seed = seed;
        if (dist == "zipfian")
            spec.distribution = WorkloadSpec::Distribution::Zipfian;
        else if (dist == "uniform")
            spec.distribution = WorkloadSpec::Distribution::Uniform;
        else
            throw ConfigError("distribution must be 'zipfian' or 'uniform'");
        spec.validate();
        return spec;
    }
};

inline std::vector<FitSample> samples_from_csv(const CsvTable& t, const std::string& metric_col,
                                               const std::string& model_filter) {
    size_t model_c = t.column("model");
    size_t p_c = t.column("p");
    size_t n_c = t.column("n");
    size_t v_c = t.column(metric_col);
    std::vector<FitSample> samples;
    for (const auto& row : t.rows) {
        if (!model_filter.empty() && row[model_c] != model_filter) continue;
        double p = std::stod(row[p_c]);
        // Without an explicit filter, fit the encrypted family (p >= 1);
        // NoEnc rows carry p = 0 and would degenerate the p columns.
        if (model_filter.empty() && p < 1.0) continue;
        samples.push_back({p, std::stod(row[n_c]), std::stod(row[v_c])});
    }
    return samples;
}

}  // namespace clidetail

inline int run_cli(std::vector<std::string> args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    CLI::App app{"encrypted NoSQL proxy, cluster simulator and benchmark harness"};
    app.require_subcommand(1);

    // serve-node
    auto* serve_node = app.add_subcommand("serve-node", "run one storage node");
    uint32_t sn_index = 0;
    uint16_t sn_port = 0;
    std::string sn_nodes;
    uint32_t sn_rf = 4;
    uint32_t sn_delay = 0;
    serve_node->add_option("--index", sn_index, "this node's index")->required();
    serve_node->add_option("--port", sn_port, "listen port")->required();
    serve_node->add_option("--nodes", sn_nodes, "host:port,... for every node, in index order")
        ->required();
    serve_node->add_option("--rf", sn_rf, "replication factor");
    serve_node->add_option("--store-delay-us", sn_delay, "serialized per-op service time");

    // serve-proxy
    auto* serve_proxy = app.add_subcommand("serve-proxy", "run one encrypting proxy");
    uint16_t sp_port = 0;
    std::string sp_nodes;
    std::string sp_policy = "pinned";
    uint32_t sp_pinned = 0;
    uint32_t sp_delay = 0;
    std::string sp_ledger;
    serve_proxy->add_option("--port", sp_port, "listen port")->required();
    serve_proxy->add_option("--nodes", sp_nodes, "host:port,... of the storage nodes")
        ->required();
    serve_proxy->add_option("--policy", sp_policy, "pinned|rotate coordinator policy");
    serve_proxy->add_option("--pinned-node", sp_pinned, "coordinator for the pinned policy");
    serve_proxy->add_option("--proxy-delay-us", sp_delay, "serialized per-op service time");
    serve_proxy->add_option("--ledger", sp_ledger, "append-only ledger file");

    // load
    auto* load = app.add_subcommand("load", "bring a topology up and preload the keyspace");
    clidetail::CommonFlags load_common;
    clidetail::WorkloadFlags load_work;
    load_common.attach(load);
    load_work.attach(load);

    // run
    auto* run = app.add_subcommand("run", "load, then measure one or more client counts");
    clidetail::CommonFlags run_common;
    clidetail::WorkloadFlags run_work;
    std::vector<uint32_t> run_clients{1};
    std::string run_out;
    run_common.attach(run);
    run_work.attach(run);
    run->add_option("--clients", run_clients, "client session counts")->delimiter(',');
    run->add_option("--out", run_out, "write CSV here instead of stdout table only");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "grid measurement for one model");
    clidetail::CommonFlags sweep_common;
    clidetail::WorkloadFlags sweep_work;
    std::vector<uint32_t> sweep_clients{1, 2, 4};
    std::vector<uint32_t> sweep_proxies;
    uint32_t sweep_reps = 1;
    std::string sweep_out;
    sweep_common.attach(sweep_cmd);
    sweep_work.attach(sweep_cmd);
    sweep_cmd->add_option("--clients", sweep_clients, "client counts")->delimiter(',');
    sweep_cmd->add_option("--proxy-list", sweep_proxies,
                          "proxy counts (multi-proxy models only)")
        ->delimiter(',');
    sweep_cmd->add_option("--reps", sweep_reps, "repetitions per grid cell");
    sweep_cmd->add_option("--out", sweep_out, "CSV output path (default stdout)");

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "fit the nine-term surface to sweep CSVs");
    std::vector<std::string> fit_in;
    std::string fit_model;
    std::string fit_out;
    fit_cmd->add_option("--in", fit_in, "sweep CSV file(s)")->required()->delimiter(',');
    fit_cmd->add_option("--model-filter", fit_model,
                        "only use rows of this model (default: all encrypted rows)");
    fit_cmd->add_option("--out", fit_out, "coefficients JSON path (default stdout)");

    // report
    auto* report_cmd = app.add_subcommand("report", "render the SLA offer table");
    std::string report_coeffs;
    uint32_t report_clients = 128;
    std::vector<uint32_t> report_proxies{1, 2, 4};
    std::string report_out;
    report_cmd->add_option("--coeffs", report_coeffs, "coefficients JSON from fit")->required();
    report_cmd->add_option("--clients", report_clients, "client bound for the offers");
    report_cmd->add_option("--proxies", report_proxies, "proxy counts, one offer each")
        ->delimiter(',');
    report_cmd->add_option("--out", report_out, "write table here (.csv renders CSV)");

    std::vector<const char*> argv;
    std::string prog = "secnosql";
    argv.push_back(prog.c_str());
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            out << app.help();
            return kExitOk;
        }
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        if (serve_node->parsed()) {
            clidetail::block_shutdown_signals();
            auto endpoints = clidetail::parse_endpoints(sn_nodes);
            NodeServer server(sn_index, endpoints, sn_rf, sn_port, sn_delay);
            err << "node " << sn_index << " listening on 127.0.0.1:" << server.port() << "\n";
            clidetail::wait_for_shutdown();
            server.stop();
            return kExitOk;
        }

        if (serve_proxy->parsed()) {
            clidetail::block_shutdown_signals();
            auto key = master_key_from_env();
            if (!key)
                throw ConfigError("serve-proxy needs SECNOSQL_MASTER_KEY (64 hex chars)");
            auto endpoints = clidetail::parse_endpoints(sp_nodes);
            ProxyConfig pc;
            if (sp_policy == "pinned")
                pc.policy = CoordinatorPolicy::Pinned;
            else if (sp_policy == "rotate")
                pc.policy = CoordinatorPolicy::Rotate;
            else
                throw ConfigError("policy must be 'pinned' or 'rotate'");
            pc.pinned_node = sp_pinned;
            pc.service_delay_us = sp_delay;
            pc.ledger_path = sp_ledger;
            auto link = std::make_shared<RemoteNodesLink>(endpoints);
            auto proxy = std::make_shared<Proxy>(derive_keys(*key), link, pc);
            ProxyServer server(proxy, sp_port);
            err << "proxy listening on 127.0.0.1:" << server.port() << "\n";
            clidetail::wait_for_shutdown();
            server.stop();
            return kExitOk;
        }

        if (load->parsed()) {
            TopologyConfig cfg = load_common.build(load);
            WorkloadSpec spec = load_work.build();
            Topology topo(cfg);
            auto t0 = std::chrono::steady_clock::now();
            load_phase(spec, topo);
            double secs = std::chrono::duration<double>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
            out << "loaded " << spec.record_count << " records in " << secs << " s ("
                << static_cast<uint64_t>(spec.record_count / std::max(secs, 1e-9))
                << " inserts/sec)\n";
            return kExitOk;
        }

        if (run->parsed()) {
            TopologyConfig cfg = run_common.build(run);
            WorkloadSpec spec = run_work.build();
            Topology topo(cfg);
            load_phase(spec, topo);
            std::optional<std::ofstream> csv;
            if (!run_out.empty()) {
                csv.emplace(run_out);
                if (!*csv) throw ConfigError("cannot write '" + run_out + "'");
                *csv << sweep_csv_header() << '\n';
            }
            out << "model          p     n   ops/sec   read µs   write µs\n";
            for (uint32_t n : run_clients) {
                MetricsSample s = run_phase(spec, topo, n);
                char line[160];
                std::snprintf(line, sizeof line, "%-12s %3u %5u %9.1f %9.1f %10.1f",
                              to_string(cfg.model).c_str(), cfg.proxies, n,
                              s.throughput_ops, s.read_lat_us, s.write_lat_us);
                out << line << "\n";
                if (csv)
                    *csv << sweep_csv_row({to_string(cfg.model), cfg.proxies, n, s, 1}) << '\n';
            }
            return kExitOk;
        }

        if (sweep_cmd->parsed()) {
            TopologyConfig cfg = sweep_common.build(sweep_cmd);
            WorkloadSpec spec = sweep_work.build();
            std::optional<std::ofstream> file;
            std::ostream* csv = &out;
            if (!sweep_out.empty()) {
                file.emplace(sweep_out);
                if (!*file) throw ConfigError("cannot write '" + sweep_out + "'");
                csv = &*file;
            }
            sweep(cfg.model, sweep_clients, sweep_proxies, sweep_reps, spec, cfg, csv);
            if (!sweep_out.empty())
                out << "sweep written to " << sweep_out << "\n";
            return kExitOk;
        }

        if (fit_cmd->parsed()) {
            std::vector<FitSample> tp, rl, wl;
            for (const auto& path : fit_in) {
                CsvTable t = CsvTable::read_file(path);
                auto add = [&](std::vector<FitSample>& dst, const char* col) {
                    auto s = clidetail::samples_from_csv(t, col, fit_model);
                    dst.insert(dst.end(), s.begin(), s.end());
                };
                add(tp, "throughput_ops");
                add(rl, "read_lat_us");
                add(wl, "write_lat_us");
            }
            std::vector<SlaModel> models = {
                fit(SlaMetric::Throughput, tp),
                fit(SlaMetric::ReadLatency, rl),
                fit(SlaMetric::WriteLatency, wl),
            };
            nlohmann::json j = coefficients_to_json(models);
            if (fit_out.empty()) {
                out << j.dump(2) << "\n";
            } else {
                std::ofstream f(fit_out);
                if (!f) throw ConfigError("cannot write '" + fit_out + "'");
                f << j.dump(2) << "\n";
                out << "coefficients written to " << fit_out << "\n";
            }
            return kExitOk;
        }

        if (report_cmd->parsed()) {
            std::ifstream in(report_coeffs);
            if (!in)
                throw ConfigError("cannot open coefficients file '" + report_coeffs + "'");
            nlohmann::json j;
            try {
                in >> j;
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError(std::string("coefficients are not valid JSON: ") + e.what());
            }
            SlaModel tp = coefficients_from_json(j, SlaMetric::Throughput);
            SlaModel rl = coefficients_from_json(j, SlaMetric::ReadLatency);
            SlaModel wl = coefficients_from_json(j, SlaMetric::WriteLatency);
            auto offers = sla_table(tp, rl, wl, report_clients, report_proxies);
            out << render_sla_text(offers);
            if (!report_out.empty()) {
                std::ofstream f(report_out);
                if (!f) throw ConfigError("cannot write '" + report_out + "'");
                if (report_out.size() > 4 &&
                    report_out.substr(report_out.size() - 4) == ".csv")
                    f << render_sla_csv(offers);
                else
                    f << render_sla_text(offers);
            }
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const SlaFitError& e) {
        err << "fit error: " << e.what() << "\n";
        return kExitFailure;
    } catch (const BenchCorrectnessError& e) {
        err << "correctness failure: " << e.what() << "\n";
        return kExitCorrectness;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitConfig;
}

}  // namespace secnosql
