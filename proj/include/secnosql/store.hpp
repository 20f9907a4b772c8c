#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "secnosql/bytes.hpp"
#include "secnosql/errors.hpp"

namespace secnosql {

struct NodeId {
    uint32_t index = 0;

    friend bool operator==(const NodeId&, const NodeId&) = default;
};

using Token = uint64_t;

inline uint64_t fnv1a64(std::span<const uint8_t> data) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (uint8_t b : data) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Partitioner: stable across runs, platforms and languages.
inline Token ring_position(std::span<const uint8_t> key) {
    if (key.empty())
        throw BackendError("ring_position on an empty key");
    return fnv1a64(key);
}

inline Token ring_position(std::string_view key) {
    return ring_position(std::span<const uint8_t>(
        reinterpret_cast<const uint8_t*>(key.data()), key.size()));
}

enum class Consistency : uint8_t { One };

// Token ring with one token per node. Placement is primary = successor of
// the key token (wrapping), then the following nodes in ring order.
struct ClusterRing {
    std::vector<Token> node_tokens;  // strictly increasing, index = NodeId
    uint32_t replication_factor = 4;
    Consistency consistency = Consistency::One;

    static ClusterRing uniform(uint32_t node_count, uint32_t replication_factor) {
        if (node_count == 0)
            throw ConfigError("cluster needs at least one node");
        if (replication_factor == 0 || replication_factor > node_count)
            throw ConfigError("replication factor must be in [1, node count]");
        ClusterRing ring;
        ring.replication_factor = replication_factor;
        const Token step = node_count == 1
                               ? 0
                               : static_cast<Token>(~0ULL / node_count);
        for (uint32_t i = 0; i < node_count; ++i)
            ring.node_tokens.push_back(step * i);
        return ring;
    }

    uint32_t node_count() const { return static_cast<uint32_t>(node_tokens.size()); }

    std::vector<NodeId> replicas(Token token) const {
        uint32_t n = node_count();
        uint32_t primary = 0;
        while (primary < n && node_tokens[primary] < token) ++primary;
        if (primary == n) primary = 0;  // wrap past the last token
        std::vector<NodeId> out;
        out.reserve(replication_factor);
        for (uint32_t i = 0; i < replication_factor; ++i)
            out.push_back(NodeId{(primary + i) % n});
        return out;
    }
};

struct StoredRow {
    Bytes key_ct;
    std::map<std::string, Bytes> cells;  // column pseudonym -> ciphertext bytes
};

// One storage node: per-table maps guarded by a reader/writer lock, plus a
// serialized service unit modelling per-node processing capacity.
class StoreNode {
public:
    void set_service_delay(uint32_t micros) { delay_us_ = micros; }

    void create_table(const std::string& table) {
        std::unique_lock lock(mu_);
        tables_.try_emplace(table);
    }

    bool has_table(const std::string& table) const {
        std::shared_lock lock(mu_);
        return tables_.count(table) > 0;
    }

    void put(const std::string& table, const StoredRow& row) {
        charge_service();
        std::unique_lock lock(mu_);
        auto it = tables_.find(table);
        if (it == tables_.end())
            throw BackendError("no such table on node");
        it->second[to_string(row.key_ct)] = row;
    }

    std::optional<StoredRow> get(const std::string& table, const Bytes& key) const {
        charge_service();
        std::shared_lock lock(mu_);
        auto it = tables_.find(table);
        if (it == tables_.end())
            throw BackendError("no such table on node");
        auto rit = it->second.find(to_string(key));
        if (rit == it->second.end()) return std::nullopt;
        return rit->second;
    }

    bool erase(const std::string& table, const Bytes& key) {
        charge_service();
        std::unique_lock lock(mu_);
        auto it = tables_.find(table);
        if (it == tables_.end())
            throw BackendError("no such table on node");
        return it->second.erase(to_string(key)) > 0;
    }

    // Test hook: flips one bit of one stored cell ciphertext in place.
    bool tamper(const std::string& table, const Bytes& key, const std::string& column,
                size_t byte_index, unsigned bit_in_byte) {
        std::unique_lock lock(mu_);
        auto it = tables_.find(table);
        if (it == tables_.end()) return false;
        auto rit = it->second.find(to_string(key));
        if (rit == it->second.end()) return false;
        auto cit = rit->second.cells.find(column);
        if (cit == rit->second.cells.end()) return false;
        if (byte_index >= cit->second.size() || bit_in_byte > 7) return false;
        cit->second[byte_index] ^= static_cast<uint8_t>(1u << bit_in_byte);
        return true;
    }

    // Read-only sweep over everything this node stores (tests scan for
    // plaintext leakage and replica agreement).
    void for_each_row(const std::function<void(const std::string& table,
                                               const StoredRow& row)>& fn) const {
        std::shared_lock lock(mu_);
        for (const auto& [table, rows] : tables_)
            for (const auto& [key, row] : rows) fn(table, row);
    }

private:
    void charge_service() const {
        if (delay_us_ == 0) return;
        std::lock_guard lock(service_mu_);
        std::this_thread::sleep_for(std::chrono::microseconds(delay_us_));
    }

    mutable std::shared_mutex mu_;
    mutable std::mutex service_mu_;
    uint32_t delay_us_ = 0;
    std::unordered_map<std::string, std::unordered_map<std::string, StoredRow>> tables_;
};

enum class StoreOp : uint8_t { CreateTable = 1, Put = 2, Get = 3, Delete = 4 };

// Coordinator-level command; names and values are whatever the caller put
// in (ciphertext under the proxy, plaintext in the NoEnc path).
struct StoreCommand {
    StoreOp op;
    std::string table;
    Bytes key;
    std::vector<std::pair<std::string, Bytes>> cells;
};

struct StoreResult {
    bool found = false;
    StoredRow row;
};

// In-process cluster: every node lives in this object, all replicas are
// always live. Writes go to every replica in placement order and are
// acknowledged under consistency ONE; reads are served by the first
// replica in placement order, so results do not depend on the coordinator.
class Cluster {
public:
    Cluster(uint32_t node_count, uint32_t replication_factor)
        : ring_(ClusterRing::uniform(node_count, replication_factor)) {
        for (uint32_t i = 0; i < node_count; ++i)
            nodes_.push_back(std::make_unique<StoreNode>());
    }

    const ClusterRing& ring() const { return ring_; }
    uint32_t node_count() const { return ring_.node_count(); }
    StoreNode& node(NodeId id) { return *nodes_.at(id.index); }
    const StoreNode& node(NodeId id) const { return *nodes_.at(id.index); }

    void set_service_delay(uint32_t micros) {
        for (auto& n : nodes_) n->set_service_delay(micros);
    }

    // Observation hook for store-bound traffic; tests use it to assert the
    // confidentiality boundary. Called before the command is applied.
    void set_tap(std::function<void(const StoreCommand&, NodeId)> tap) {
        std::lock_guard lock(tap_mu_);
        tap_ = std::move(tap);
    }

    StoreResult route(const StoreCommand& cmd, NodeId coordinator) {
        if (coordinator.index >= node_count())
            throw BackendError("coordinator is not a cluster member");
        {
            std::lock_guard lock(tap_mu_);
            if (tap_) tap_(cmd, coordinator);
        }
        switch (cmd.op) {
            case StoreOp::CreateTable: {
                for (auto& n : nodes_) n->create_table(cmd.table);
                return {};
            }
            case StoreOp::Put: {
                StoredRow row;
                row.key_ct = cmd.key;
                for (const auto& [name, value] : cmd.cells) row.cells[name] = value;
                for (NodeId id : ring_.replicas(ring_position(cmd.key)))
                    node(id).put(cmd.table, row);
                return {};
            }
            case StoreOp::Get: {
                NodeId serving = ring_.replicas(ring_position(cmd.key)).front();
                auto row = node(serving).get(cmd.table, cmd.key);
                StoreResult res;
                if (row) {
                    res.found = true;
                    res.row = std::move(*row);
                }
                return res;
            }
            case StoreOp::Delete: {
                StoreResult res;
                for (NodeId id : ring_.replicas(ring_position(cmd.key)))
                    res.found = node(id).erase(cmd.table, cmd.key) || res.found;
                return res;
            }
        }
        throw BackendError("unknown store operation");
    }

    bool tamper(NodeId id, const std::string& table, const Bytes& key,
                const std::string& column, size_t byte_index, unsigned bit_in_byte) {
        return node(id).tamper(table, key, column, byte_index, bit_in_byte);
    }

private:
    ClusterRing ring_;
    std::vector<std::unique_ptr<StoreNode>> nodes_;
    std::mutex tap_mu_;
    std::function<void(const StoreCommand&, NodeId)> tap_;
};

}  // namespace secnosql
