#pragma once

#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "secnosql/plain.hpp"
#include "secnosql/proxy.hpp"
#include "secnosql/servers.hpp"
#include "secnosql/store.hpp"

namespace secnosql {

enum class Model : uint8_t { NoEnc, EncM1, EncM2, EncM3 };

inline std::string to_string(Model m) {
    switch (m) {
        case Model::NoEnc: return "NoEnc";
        case Model::EncM1: return "EncM1";
        case Model::EncM2: return "EncM2";
        case Model::EncM3: return "EncM3";
    }
    return "?";
}

inline Model parse_model(const std::string& s) {
    if (s == "NoEnc") return Model::NoEnc;
    if (s == "EncM1") return Model::EncM1;
    if (s == "EncM2") return Model::EncM2;
    if (s == "EncM3") return Model::EncM3;
    throw ConfigError("unknown model '" + s + "' (expected NoEnc|EncM1|EncM2|EncM3)");
}

inline uint32_t default_proxy_count(Model m) {
    switch (m) {
        case Model::NoEnc: return 0;
        case Model::EncM1: return 1;
        default: return 2;
    }
}

struct TopologyConfig {
    Model model = Model::EncM1;
    uint32_t nodes = 4;
    uint32_t proxies = 1;
    uint32_t replication_factor = 4;
    // Pinned gives each proxy one fixed coordinator node; Rotate cycles a
    // proxy's requests over every node.
    std::optional<CoordinatorPolicy> policy;  // unset = model default
    uint32_t proxy_delay_us = 0;
    uint32_t store_delay_us = 0;
    std::optional<MasterKey> master_key;
    bool multi_process = false;
    uint16_t base_port = 7400;
    std::string ledger_dir;
    std::string binary_path;  // for spawning serve-* children; default: self

    CoordinatorPolicy effective_policy() const {
        if (policy) return *policy;
        return model == Model::EncM3 ? CoordinatorPolicy::Rotate : CoordinatorPolicy::Pinned;
    }

    void validate() const {
        if (nodes == 0)
            throw ConfigError("need at least one node");
        if (replication_factor == 0 || replication_factor > nodes)
            throw ConfigError("replication factor must be in [1, nodes]");
        switch (model) {
            case Model::NoEnc:
                if (proxies != 0)
                    throw ConfigError("NoEnc runs without proxies (clients connect directly)");
                break;
            case Model::EncM1:
                if (proxies != 1)
                    throw ConfigError("EncM1 uses exactly one proxy");
                break;
            case Model::EncM2:
            case Model::EncM3:
                if (proxies < 2)
                    throw ConfigError(to_string(model) + " needs at least two proxies");
                break;
        }
        if (model != Model::NoEnc && !master_key)
            throw ConfigError("encrypted models need a master key (config master_key_hex "
                              "or SECNOSQL_MASTER_KEY)");
    }
};

inline std::optional<MasterKey> master_key_from_env() {
    const char* env = std::getenv("SECNOSQL_MASTER_KEY");
    if (!env || !*env) return std::nullopt;
    return MasterKey::from_hex(env);
}

inline TopologyConfig topology_config_from_json(const nlohmann::json& j) {
    TopologyConfig cfg;
    try {
        if (j.contains("model")) cfg.model = parse_model(j.at("model").get<std::string>());
        cfg.proxies = default_proxy_count(cfg.model);
        if (j.contains("nodes")) cfg.nodes = j.at("nodes").get<uint32_t>();
        if (j.contains("proxies")) cfg.proxies = j.at("proxies").get<uint32_t>();
        if (j.contains("replication_factor"))
            cfg.replication_factor = j.at("replication_factor").get<uint32_t>();
        if (j.contains("coordinator_policy")) {
            std::string p = j.at("coordinator_policy").get<std::string>();
            if (p == "pinned")
                cfg.policy = CoordinatorPolicy::Pinned;
            else if (p == "rotate")
                cfg.policy = CoordinatorPolicy::Rotate;
            else
                throw ConfigError("coordinator_policy must be 'pinned' or 'rotate'");
        }
        if (j.contains("proxy_delay_us")) cfg.proxy_delay_us = j.at("proxy_delay_us").get<uint32_t>();
        if (j.contains("store_delay_us")) cfg.store_delay_us = j.at("store_delay_us").get<uint32_t>();
        if (j.contains("master_key_hex"))
            cfg.master_key = MasterKey::from_hex(j.at("master_key_hex").get<std::string>());
        if (j.contains("multi_process")) cfg.multi_process = j.at("multi_process").get<bool>();
        if (j.contains("base_port")) cfg.base_port = j.at("base_port").get<uint16_t>();
        if (j.contains("ledger_dir")) cfg.ledger_dir = j.at("ledger_dir").get<std::string>();
        if (j.contains("binary_path")) cfg.binary_path = j.at("binary_path").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config: ") + e.what());
    } catch (const CryptoError& e) {
        throw ConfigError(std::string("bad config: ") + e.what());
    }
    if (!cfg.master_key) cfg.master_key = master_key_from_env();
    return cfg;
}

inline TopologyConfig topology_config_from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return topology_config_from_json(j);
}

struct TopologyStatus {
    Model model;
    uint32_t nodes = 0;
    uint32_t proxies = 0;
    CoordinatorPolicy policy = CoordinatorPolicy::Pinned;
    bool multi_process = false;
    bool running = false;
    std::vector<std::string> node_endpoints;   // multi-process only
    std::vector<std::string> proxy_endpoints;  // multi-process only
};

// A running deployment. In-process mode holds the cluster and proxies as
// plain objects; multi-process mode spawns serve-node/serve-proxy children
// and waits for their ports to accept.
class Topology {
public:
    explicit Topology(TopologyConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        if (cfg_.multi_process)
            up_multi_process();
        else
            up_in_process();
        running_ = true;
    }

    ~Topology() { down(); }

    Topology(const Topology&) = delete;
    Topology& operator=(const Topology&) = delete;

    const TopologyConfig& config() const { return cfg_; }

    // Sessions are pinned: session s talks to proxy s mod p (or to node
    // s mod n under NoEnc). Each call builds a fresh handle so remote
    // sessions get their own connections.
    std::unique_ptr<QueryService> make_endpoint(uint32_t session_index) {
        if (!running_)
            throw BackendError("topology is down");
        if (cfg_.multi_process) {
            const auto& eps = cfg_.model == Model::NoEnc ? node_eps_ : proxy_eps_;
            return std::make_unique<RemoteEndpoint>(eps[session_index % eps.size()]);
        }
        if (cfg_.model == Model::NoEnc) {
            return std::make_unique<Handle>(*engines_[session_index % engines_.size()]);
        }
        return std::make_unique<Handle>(*proxies_[session_index % proxies_.size()]);
    }

    uint32_t endpoint_count() const {
        return cfg_.model == Model::NoEnc ? cfg_.nodes : cfg_.proxies;
    }

    TopologyStatus status() const {
        TopologyStatus st;
        st.model = cfg_.model;
        st.nodes = cfg_.nodes;
        st.proxies = cfg_.proxies;
        st.policy = cfg_.effective_policy();
        st.multi_process = cfg_.multi_process;
        st.running = running_;
        for (const auto& ep : node_eps_) st.node_endpoints.push_back(ep.str());
        for (const auto& ep : proxy_eps_) st.proxy_endpoints.push_back(ep.str());
        return st;
    }

    void down() {
        if (!running_) return;
        running_ = false;
        for (pid_t pid : children_) kill(pid, SIGTERM);
        for (pid_t pid : children_) {
            int status = 0;
            waitpid(pid, &status, 0);
        }
        children_.clear();
        proxies_.clear();
        engines_.clear();
        cluster_.reset();
    }

    // In-process introspection for tests and the acceptance suite.
    Cluster* cluster() { return cluster_.get(); }
    Proxy* proxy(uint32_t i) { return proxies_.at(i).get(); }

private:
    struct Handle : QueryService {
        explicit Handle(QueryService& target) : target(&target) {}
        Response create_schema(const SchemaRequest& req) override {
            return target->create_schema(req);
        }
        Response execute(const std::string& q) override { return target->execute(q); }
        QueryService* target;
    };

    void up_in_process() {
        cluster_ = std::make_unique<Cluster>(cfg_.nodes, cfg_.replication_factor);
        cluster_->set_service_delay(cfg_.store_delay_us);
        auto link = std::make_shared<ClusterLink>(*cluster_);
        if (cfg_.model == Model::NoEnc) {
            auto registry = std::make_shared<SchemaRegistry>();
            for (uint32_t i = 0; i < cfg_.nodes; ++i)
                engines_.push_back(
                    std::make_shared<PlainEngine>(link, registry, NodeId{i}));
            return;
        }
        KeySet keys = derive_keys(*cfg_.master_key);
        for (uint32_t j = 0; j < cfg_.proxies; ++j) {
            ProxyConfig pc;
            pc.policy = cfg_.effective_policy();
            pc.pinned_node = j % cfg_.nodes;
            pc.service_delay_us = cfg_.proxy_delay_us;
            if (!cfg_.ledger_dir.empty())
                pc.ledger_path = cfg_.ledger_dir + "/proxy-" + std::to_string(j) + ".ledger";
            proxies_.push_back(std::make_shared<Proxy>(keys, link, pc));
        }
    }

    void up_multi_process() {
        for (uint32_t i = 0; i < cfg_.nodes; ++i)
            node_eps_.push_back({"127.0.0.1", static_cast<uint16_t>(cfg_.base_port + i)});
        for (uint32_t j = 0; j < cfg_.proxies; ++j)
            proxy_eps_.push_back(
                {"127.0.0.1", static_cast<uint16_t>(cfg_.base_port + 200 + j)});

        std::string nodes_arg;
        for (const auto& ep : node_eps_) {
            if (!nodes_arg.empty()) nodes_arg += ",";
            nodes_arg += ep.str();
        }
        std::string bin = cfg_.binary_path.empty() ? self_binary() : cfg_.binary_path;

        try {
            for (uint32_t i = 0; i < cfg_.nodes; ++i)
                spawn(bin, {"serve-node", "--index", std::to_string(i), "--port",
                            std::to_string(node_eps_[i].port), "--nodes", nodes_arg, "--rf",
                            std::to_string(cfg_.replication_factor), "--store-delay-us",
                            std::to_string(cfg_.store_delay_us)});
            for (uint32_t j = 0; j < cfg_.proxies; ++j) {
                std::vector<std::string> args = {
                    "serve-proxy", "--port", std::to_string(proxy_eps_[j].port),
                    "--nodes", nodes_arg,
                    "--policy",
                    cfg_.effective_policy() == CoordinatorPolicy::Rotate ? "rotate" : "pinned",
                    "--pinned-node", std::to_string(j % cfg_.nodes),
                    "--proxy-delay-us", std::to_string(cfg_.proxy_delay_us)};
                if (!cfg_.ledger_dir.empty()) {
                    args.push_back("--ledger");
                    args.push_back(cfg_.ledger_dir + "/proxy-" + std::to_string(j) + ".ledger");
                }
                spawn(bin, args);
            }
            // Ready when every child accepts connections.
            for (const auto& ep : node_eps_)
                connect_with_retry(ep.host, ep.port, std::chrono::milliseconds(5000));
            for (const auto& ep : proxy_eps_)
                connect_with_retry(ep.host, ep.port, std::chrono::milliseconds(5000));
        } catch (...) {
            running_ = true;  // let down() reap what was started
            down();
            throw;
        }
    }

    static std::string self_binary() {
        char buf[4096];
        ssize_t n = readlink("/proc/self/exe", buf, sizeof buf - 1);
        if (n <= 0)
            throw ConfigError("cannot resolve own binary path; set binary_path");
        buf[n] = '\0';
        return buf;
    }

    void spawn(const std::string& bin, const std::vector<std::string>& args) {
        std::vector<std::string> full = {bin};
        full.insert(full.end(), args.begin(), args.end());
        std::vector<char*> argv;
        for (auto& a : full) argv.push_back(a.data());
        argv.push_back(nullptr);

        pid_t pid = fork();
        if (pid < 0)
            throw BackendError("fork failed");
        if (pid == 0) {
            execv(bin.c_str(), argv.data());
            _exit(127);
        }
        children_.push_back(pid);
    }

    TopologyConfig cfg_;
    bool running_ = false;

    std::unique_ptr<Cluster> cluster_;
    std::vector<std::shared_ptr<Proxy>> proxies_;
    std::vector<std::shared_ptr<PlainEngine>> engines_;

    std::vector<Endpoint> node_eps_;
    std::vector<Endpoint> proxy_eps_;
    std::vector<pid_t> children_;
};

}  // namespace secnosql
