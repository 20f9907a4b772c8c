#pragma once

#include <memory>
#include <shared_mutex>
#include <string>
#include <unordered_map>

#include "secnosql/proxy.hpp"
#include "secnosql/query.hpp"
#include "secnosql/service.hpp"
#include "secnosql/store.hpp"

namespace secnosql {

// Schema definitions shared by every plaintext coordinator binding of one
// cluster, mirroring how a real cluster shares its schema.
class SchemaRegistry {
public:
    void register_schema(SchemaDef def) {
        def.validate();
        std::unique_lock lock(mu_);
        auto it = defs_.find(def.table);
        if (it != defs_.end()) {
            if (it->second == def) return;
            throw SchemaError("table '" + def.table + "' already exists with a different schema");
        }
        defs_.emplace(def.table, std::move(def));
    }

    bool known(const std::string& table) const {
        std::shared_lock lock(mu_);
        return defs_.count(table) > 0;
    }

    SchemaDef lookup(const std::string& table) const {
        std::shared_lock lock(mu_);
        auto it = defs_.find(table);
        if (it == defs_.end())
            throw SchemaError("unknown table '" + table + "'");
        return it->second;
    }

private:
    mutable std::shared_mutex mu_;
    std::unordered_map<std::string, SchemaDef> defs_;
};

// Direct-to-coordinator execution with no encryption: same grammar, same
// row semantics as the proxy, but names, keys and values hit the store
// as-is. This is the baseline the encrypted models are measured against.
class PlainEngine : public QueryService {
public:
    PlainEngine(std::shared_ptr<StoreLink> link, std::shared_ptr<SchemaRegistry> registry,
                NodeId coordinator)
        : link_(std::move(link)), registry_(std::move(registry)), coordinator_(coordinator) {}

    Response create_schema(const SchemaRequest& request) override {
        try {
            if (request.columns.empty())
                throw SchemaError("schema needs at least the key column");
            SchemaDef def;
            def.table = request.table;
            def.key_column = request.columns.front();
            def.value_columns.assign(request.columns.begin() + 1, request.columns.end());
            register_and_create(std::move(def));
            return Response::ok();
        } catch (const Error& e) {
            return Response::error(e.code(), e.what());
        }
    }

    Response execute(const std::string& query_text) override {
        try {
            QueryAst ast = parse(query_text);
            if (ast.op == QueryOp::CreateTable) {
                SchemaDef def;
                def.table = ast.table;
                def.key_column = ast.columns.front();
                def.value_columns.assign(ast.columns.begin() + 1, ast.columns.end());
                register_and_create(std::move(def));
                return Response::ok();
            }
            SchemaDef schema = registry_->lookup(ast.table);
            ResolvedQuery rq = resolve(ast, schema);
            Bytes key = to_bytes(rq.key_value);
            switch (ast.op) {
                case QueryOp::Insert:
                case QueryOp::Update: {
                    std::map<std::string, Bytes> merged;
                    if (ast.op == QueryOp::Update) {
                        if (auto existing = link_->get(ast.table, key, coordinator_))
                            merged = std::move(existing->cells);
                    }
                    for (const auto& [col, val] : rq.assignments) merged[col] = to_bytes(val);
                    std::vector<std::pair<std::string, Bytes>> cells(merged.begin(),
                                                                     merged.end());
                    link_->put(ast.table, key, cells, coordinator_);
                    return Response::ok();
                }
                case QueryOp::Select: {
                    auto row = link_->get(ast.table, key, coordinator_);
                    if (!row) throw NotFoundError();
                    std::vector<std::pair<std::string, std::string>> out;
                    for (const auto& col : rq.projection) {
                        auto it = row->cells.find(col);
                        if (it != row->cells.end())
                            out.emplace_back(col, to_string(it->second));
                    }
                    return Response::rows(std::move(out));
                }
                case QueryOp::Delete: {
                    if (!link_->erase(ast.table, key, coordinator_)) throw NotFoundError();
                    return Response::ok();
                }
                default:
                    throw BackendError("unreachable query op");
            }
        } catch (const Error& e) {
            return Response::error(e.code(), e.what());
        }
    }

private:
    void register_and_create(SchemaDef def) {
        std::string table = def.table;
        registry_->register_schema(std::move(def));
        link_->create_table(table, coordinator_);
    }

    std::shared_ptr<StoreLink> link_;
    std::shared_ptr<SchemaRegistry> registry_;
    NodeId coordinator_;
};

}  // namespace secnosql
