#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "secnosql/crypto.hpp"
#include "secnosql/errors.hpp"
#include "secnosql/ledger.hpp"
#include "secnosql/query.hpp"
#include "secnosql/service.hpp"
#include "secnosql/store.hpp"

namespace secnosql {

// Canonical row serialization, the exact byte string the record HMAC covers:
//   table_pseudonym | 0x00 | u32 key-len | key_ct |
//   per cell in ascending pseudonym order: u16 name-len | name |
//                                          u32 ct-len | ct
inline Bytes canonical_serialize(const std::string& table_pseudonym, const Bytes& key_ct,
                                 const std::map<std::string, Bytes>& cells) {
    Bytes out;
    put_bytes(out, table_pseudonym);
    put_u8(out, 0x00);
    put_u32(out, static_cast<uint32_t>(key_ct.size()));
    put_bytes(out, key_ct);
    for (const auto& [name, ct] : cells) {
        put_u16(out, static_cast<uint16_t>(name.size()));
        put_bytes(out, name);
        put_u32(out, static_cast<uint32_t>(ct.size()));
        put_bytes(out, ct);
    }
    return out;
}

// Coordinator-scoped access to the cluster, so the proxy works the same
// whether the nodes are in-process or remote.
class StoreLink {
public:
    virtual ~StoreLink() = default;
    virtual uint32_t node_count() const = 0;
    virtual void create_table(const std::string& table, NodeId coordinator) = 0;
    virtual void put(const std::string& table, const Bytes& key,
                     const std::vector<std::pair<std::string, Bytes>>& cells,
                     NodeId coordinator) = 0;
    virtual std::optional<StoredRow> get(const std::string& table, const Bytes& key,
                                         NodeId coordinator) = 0;
    virtual bool erase(const std::string& table, const Bytes& key, NodeId coordinator) = 0;
};

class ClusterLink : public StoreLink {
public:
    explicit ClusterLink(Cluster& cluster) : cluster_(cluster) {}

    uint32_t node_count() const override { return cluster_.node_count(); }

    void create_table(const std::string& table, NodeId coordinator) override {
        cluster_.route({StoreOp::CreateTable, table, {}, {}}, coordinator);
    }

    void put(const std::string& table, const Bytes& key,
             const std::vector<std::pair<std::string, Bytes>>& cells,
             NodeId coordinator) override {
        cluster_.route({StoreOp::Put, table, key, cells}, coordinator);
    }

    std::optional<StoredRow> get(const std::string& table, const Bytes& key,
                                 NodeId coordinator) override {
        StoreResult res = cluster_.route({StoreOp::Get, table, key, {}}, coordinator);
        if (!res.found) return std::nullopt;
        return std::move(res.row);
    }

    bool erase(const std::string& table, const Bytes& key, NodeId coordinator) override {
        return cluster_.route({StoreOp::Delete, table, key, {}}, coordinator).found;
    }

private:
    Cluster& cluster_;
};

enum class CoordinatorPolicy : uint8_t {
    Pinned,  // every request goes through one configured node
    Rotate,  // round-robin over all nodes
};

struct ProxyConfig {
    CoordinatorPolicy policy = CoordinatorPolicy::Pinned;
    uint32_t pinned_node = 0;
    // Serialized per-operation service time; models the proxy's finite
    // processing capacity so saturation is reproducible.
    uint32_t service_delay_us = 0;
    std::string ledger_path;  // empty = in-memory only
};

// The trusted middle tier. Clients speak plaintext queries to it; the
// cluster only ever sees pseudonymous names, DET-encrypted keys and
// RND-encrypted values. Reads are verified against the integrity ledger
// before any plaintext is produced.
class Proxy : public QueryService {
public:
    Proxy(KeySet keys, std::shared_ptr<StoreLink> link, ProxyConfig config = {})
        : keys_(std::move(keys)),
          link_(std::move(link)),
          config_(std::move(config)),
          ledger_(config_.ledger_path),
          coordinator_uses_(link_->node_count()) {
        if (config_.pinned_node >= link_->node_count())
            throw ConfigError("pinned coordinator is not a cluster member");
        for (auto& c : coordinator_uses_) c.store(0);
    }

    Response create_schema(const SchemaRequest& request) override {
        charge_service();
        try {
            if (request.columns.empty())
                throw SchemaError("schema needs at least the key column");
            SchemaDef def;
            def.table = request.table;
            def.key_column = request.columns.front();
            def.value_columns.assign(request.columns.begin() + 1, request.columns.end());
            register_schema(def);
            return Response::ok();
        } catch (const Error& e) {
            return Response::error(e.code(), e.what());
        }
    }

    Response execute(const std::string& query_text) override {
        charge_service();
        try {
            QueryAst ast = parse(query_text);
            switch (ast.op) {
                case QueryOp::CreateTable: {
                    SchemaDef def;
                    def.table = ast.table;
                    def.key_column = ast.columns.front();
                    def.value_columns.assign(ast.columns.begin() + 1, ast.columns.end());
                    register_schema(def);
                    return Response::ok();
                }
                case QueryOp::Insert:
                case QueryOp::Update:
                    return handle_write(ast);
                case QueryOp::Select:
                    return handle_read(ast);
                case QueryOp::Delete:
                    return handle_delete(ast);
            }
            throw BackendError("unreachable query op");
        } catch (const Error& e) {
            return Response::error(e.code(), e.what());
        }
    }

    // How often each node served as coordinator; lets tests check the
    // rotate policy actually spreads connections.
    std::vector<uint64_t> coordinator_use_counts() const {
        std::vector<uint64_t> out;
        out.reserve(coordinator_uses_.size());
        for (const auto& c : coordinator_uses_) out.push_back(c.load());
        return out;
    }

    size_t ledger_size() const { return ledger_.size(); }

private:
    struct SchemaEntry {
        SchemaDef def;
        AnonymizedSchema anon;
    };

    void register_schema(SchemaDef def) {
        def.validate();
        std::unique_lock lock(schema_mu_);
        auto it = schemas_.find(def.table);
        if (it != schemas_.end()) {
            if (it->second.def == def) return;  // idempotent re-create
            throw SchemaError("table '" + def.table + "' already exists with a different schema");
        }
        SchemaEntry entry{def, AnonymizedSchema(def, keys_)};
        link_->create_table(entry.anon.table_pseudonym, next_coordinator());
        schemas_.emplace(def.table, std::move(entry));
    }

    SchemaEntry schema_for(const std::string& table) const {
        std::shared_lock lock(schema_mu_);
        auto it = schemas_.find(table);
        if (it == schemas_.end())
            throw SchemaError("unknown table '" + table + "'");
        return it->second;
    }

    NodeId next_coordinator() {
        NodeId id{config_.policy == CoordinatorPolicy::Pinned
                      ? config_.pinned_node
                      : static_cast<uint32_t>(rotate_counter_.fetch_add(1) %
                                              link_->node_count())};
        coordinator_uses_[id.index].fetch_add(1);
        return id;
    }

    void charge_service() {
        if (config_.service_delay_us == 0) return;
        std::lock_guard lock(service_mu_);
        std::this_thread::sleep_for(std::chrono::microseconds(config_.service_delay_us));
    }

    std::shared_mutex& stripe_for(const std::string& table_pseudonym, const Bytes& key_ct) {
        uint64_t h = fnv1a64(std::span<const uint8_t>(
            reinterpret_cast<const uint8_t*>(table_pseudonym.data()), table_pseudonym.size()));
        h ^= fnv1a64(key_ct);
        return stripes_[h % stripes_.size()];
    }

    // INSERT replaces the whole row; UPDATE merges into the existing row
    // (read-modify-write) so the ledger tag always covers the full row.
    // Missing rows upsert: the merged row is just the new cells.
    Response handle_write(const QueryAst& ast) {
        SchemaEntry entry = schema_for(ast.table);
        EncryptedCommand cmd = translate(ast, entry.def, keys_);
        NodeId coordinator = next_coordinator();

        std::unique_lock lock(stripe_for(cmd.table_pseudonym, cmd.key_ct.bytes));
        std::map<std::string, Bytes> merged;
        if (ast.op == QueryOp::Update) {
            if (auto existing = link_->get(cmd.table_pseudonym, cmd.key_ct.bytes, coordinator))
                merged = std::move(existing->cells);
        }
        for (const auto& [pseudonym, ct] : cmd.cells) merged[pseudonym] = ct.bytes;

        std::vector<std::pair<std::string, Bytes>> cells(merged.begin(), merged.end());
        link_->put(cmd.table_pseudonym, cmd.key_ct.bytes, cells, coordinator);
        // The backend write precedes the ledger update, so a backend
        // failure leaves the ledger unchanged.
        HmacTag tag = record_hmac(
            keys_, canonical_serialize(cmd.table_pseudonym, cmd.key_ct.bytes, merged));
        ledger_.put(cmd.table_pseudonym, cmd.key_ct.bytes, tag);
        return Response::ok();
    }

    Response handle_read(const QueryAst& ast) {
        SchemaEntry entry = schema_for(ast.table);
        EncryptedCommand cmd = translate(ast, entry.def, keys_);
        NodeId coordinator = next_coordinator();

        std::shared_lock lock(stripe_for(cmd.table_pseudonym, cmd.key_ct.bytes));
        auto row = link_->get(cmd.table_pseudonym, cmd.key_ct.bytes, coordinator);
        if (!row) throw NotFoundError();

        HmacTag recomputed = record_hmac(
            keys_, canonical_serialize(cmd.table_pseudonym, cmd.key_ct.bytes, row->cells));
        auto expected = ledger_.lookup(cmd.table_pseudonym, cmd.key_ct.bytes);
        // No plaintext leaves the proxy unless the stored row matches the
        // tag recorded when it was written.
        if (!expected)
            throw IntegrityError("no ledger entry for an existing row");
        if (!(recomputed == *expected))
            throw IntegrityError("record tag mismatch");

        std::vector<std::pair<std::string, Ciphertext>> projected;
        for (const auto& pseudonym : cmd.projection_pseudonyms) {
            auto it = row->cells.find(pseudonym);
            if (it != row->cells.end())
                projected.emplace_back(pseudonym, Ciphertext{Scheme::Rnd, it->second});
        }
        return Response::rows(decrypt_row(projected, entry.def, keys_));
    }

    Response handle_delete(const QueryAst& ast) {
        SchemaEntry entry = schema_for(ast.table);
        EncryptedCommand cmd = translate(ast, entry.def, keys_);
        NodeId coordinator = next_coordinator();

        std::unique_lock lock(stripe_for(cmd.table_pseudonym, cmd.key_ct.bytes));
        bool existed = link_->erase(cmd.table_pseudonym, cmd.key_ct.bytes, coordinator);
        if (!existed) throw NotFoundError();  // idempotent: ledger untouched
        ledger_.erase(cmd.table_pseudonym, cmd.key_ct.bytes);
        return Response::ok();
    }

    KeySet keys_;
    std::shared_ptr<StoreLink> link_;
    ProxyConfig config_;
    IntegrityLedger ledger_;

    mutable std::shared_mutex schema_mu_;
    std::unordered_map<std::string, SchemaEntry> schemas_;

    std::mutex service_mu_;
    std::atomic<uint64_t> rotate_counter_{0};
    std::vector<std::atomic<uint64_t>> coordinator_uses_;
    std::array<std::shared_mutex, 64> stripes_;
};

}  // namespace secnosql
