#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "secnosql/net.hpp"
#include "secnosql/plain.hpp"
#include "secnosql/proxy.hpp"
#include "secnosql/service.hpp"
#include "secnosql/store.hpp"
#include "secnosql/wire.hpp"

namespace secnosql {

struct Endpoint {
    std::string host = "127.0.0.1";
    uint16_t port = 0;

    static Endpoint parse(const std::string& s) {
        auto colon = s.rfind(':');
        if (colon == std::string::npos)
            throw ConfigError("endpoint '" + s + "' is not host:port");
        int port = std::stoi(s.substr(colon + 1));
        if (port <= 0 || port > 0xffff)
            throw ConfigError("endpoint '" + s + "' has an invalid port");
        return {s.substr(0, colon), static_cast<uint16_t>(port)};
    }

    std::string str() const { return host + ":" + std::to_string(port); }
};

// One persistent connection with request/reply framing; reconnects after a
// failure on the next request.
class PeerClient {
public:
    explicit PeerClient(Endpoint ep) : endpoint_(std::move(ep)) {}

    Bytes request(const Bytes& payload) {
        std::lock_guard lock(mu_);
        try {
            if (!sock_ || !sock_->valid())
                sock_ = connect_to(endpoint_.host, endpoint_.port);
            send_frame(*sock_, payload);
            auto reply = recv_frame(*sock_);
            if (!reply) throw BackendError("peer closed connection");
            return *reply;
        } catch (...) {
            sock_.reset();
            throw;
        }
    }

    const Endpoint& endpoint() const { return endpoint_; }

private:
    Endpoint endpoint_;
    std::mutex mu_;
    std::optional<Socket> sock_;
};

// Client-side stand-in for a proxy (or for a node in plaintext direct
// mode). One instance per client session, so responses stay ordered per
// session.
class RemoteEndpoint : public QueryService {
public:
    explicit RemoteEndpoint(Endpoint ep) : peer_(std::move(ep)) {}

    Response create_schema(const SchemaRequest& request) override {
        return round_trip(encode_create_schema(request));
    }

    Response execute(const std::string& query_text) override {
        return round_trip(encode_query(query_text));
    }

private:
    Response round_trip(const Bytes& payload) {
        try {
            return decode_response(peer_.request(payload));
        } catch (const Error& e) {
            return Response::error(e.code(), e.what());
        }
    }

    PeerClient peer_;
};

// StoreLink over remote node servers: each operation is sent to the chosen
// coordinator node, which performs placement and replica fan-out.
class RemoteNodesLink : public StoreLink {
public:
    explicit RemoteNodesLink(const std::vector<Endpoint>& nodes) {
        for (const auto& ep : nodes) peers_.push_back(std::make_unique<PeerClient>(ep));
        if (peers_.empty())
            throw ConfigError("need at least one node endpoint");
    }

    uint32_t node_count() const override { return static_cast<uint32_t>(peers_.size()); }

    void create_table(const std::string& table, NodeId coordinator) override {
        RawRowRequest req{StoreOp::CreateTable, false, table, {}, {}};
        expect_ok(send(req, coordinator), "create table");
    }

    void put(const std::string& table, const Bytes& key,
             const std::vector<std::pair<std::string, Bytes>>& cells,
             NodeId coordinator) override {
        RawRowRequest req{StoreOp::Put, false, table, key, cells};
        expect_ok(send(req, coordinator), "put");
    }

    std::optional<StoredRow> get(const std::string& table, const Bytes& key,
                                 NodeId coordinator) override {
        RawRowRequest req{StoreOp::Get, false, table, key, {}};
        Message msg = decode_payload(send(req, coordinator));
        if (auto* rows = std::get_if<RowsPayload>(&msg)) {
            StoredRow row;
            row.key_ct = key;
            for (auto& [name, value] : rows->cells)
                row.cells[name] = to_bytes(value);
            return row;
        }
        if (auto* err = std::get_if<ErrorPayload>(&msg)) {
            if (err->code == ErrorCode::NotFound) return std::nullopt;
            throw BackendError(err->message);
        }
        throw BackendError("unexpected node reply to get");
    }

    bool erase(const std::string& table, const Bytes& key, NodeId coordinator) override {
        RawRowRequest req{StoreOp::Delete, false, table, key, {}};
        Message msg = decode_payload(send(req, coordinator));
        if (std::holds_alternative<OkPayload>(msg)) return true;
        if (auto* err = std::get_if<ErrorPayload>(&msg)) {
            if (err->code == ErrorCode::NotFound) return false;
            throw BackendError(err->message);
        }
        throw BackendError("unexpected node reply to delete");
    }

private:
    Bytes send(const RawRowRequest& req, NodeId coordinator) {
        if (coordinator.index >= peers_.size())
            throw BackendError("coordinator is not a cluster member");
        return peers_[coordinator.index]->request(encode_raw_row(req));
    }

    static void expect_ok(const Bytes& payload, const char* what) {
        Message msg = decode_payload(payload);
        if (std::holds_alternative<OkPayload>(msg)) return;
        if (auto* err = std::get_if<ErrorPayload>(&msg))
            throw BackendError(std::string(what) + " failed: " + err->message);
        throw BackendError(std::string(what) + " got an unexpected reply");
    }

    std::vector<std::unique_ptr<PeerClient>> peers_;
};

// Serves the client protocol on behalf of one Proxy instance.
class ProxyServer {
public:
    ProxyServer(std::shared_ptr<Proxy> proxy, uint16_t port)
        : proxy_(std::move(proxy)),
          server_(port, [this](const Bytes& payload) { return handle(payload); }) {}

    uint16_t port() const { return server_.port(); }
    void stop() { server_.stop(); }

private:
    Bytes handle(const Bytes& payload) {
        Message msg = decode_payload(payload);
        if (auto* schema = std::get_if<SchemaRequest>(&msg))
            return encode_response(proxy_->create_schema(*schema));
        if (auto* query = std::get_if<QueryRequest>(&msg))
            return encode_response(proxy_->execute(query->text));
        throw ParseError("opcode not accepted by the proxy", 0);
    }

    std::shared_ptr<Proxy> proxy_;
    FrameServer server_;
};

// One storage node process: owns its local shard, answers local-only row
// ops from peers, coordinates placement and replica fan-out for
// coordinator-level ops, and doubles as a plaintext query coordinator for
// direct client access.
class NodeServer {
public:
    NodeServer(uint32_t self_index, const std::vector<Endpoint>& node_endpoints,
               uint32_t replication_factor, uint16_t port, uint32_t service_delay_us = 0)
        : self_(self_index),
          ring_(ClusterRing::uniform(static_cast<uint32_t>(node_endpoints.size()),
                                     replication_factor)),
          registry_(std::make_shared<SchemaRegistry>()) {
        if (self_index >= node_endpoints.size())
            throw ConfigError("node index outside the endpoint list");
        local_.set_service_delay(service_delay_us);
        for (uint32_t i = 0; i < node_endpoints.size(); ++i)
            peers_.push_back(i == self_index
                                 ? nullptr
                                 : std::make_unique<PeerClient>(node_endpoints[i]));
        engine_ = std::make_shared<PlainEngine>(
            std::make_shared<CoordinatorLink>(*this), registry_, NodeId{self_index});
        // Serving starts only once the node is fully wired.
        server_.emplace(port, [this](const Bytes& payload) { return handle(payload); });
    }

    uint16_t port() const { return server_->port(); }
    void stop() { server_->stop(); }

private:
    // Placement + fan-out around this node as coordinator, exposed as a
    // StoreLink so the plaintext engine shares the exact code path.
    class CoordinatorLink : public StoreLink {
    public:
        explicit CoordinatorLink(NodeServer& owner) : owner_(owner) {}

        uint32_t node_count() const override { return owner_.ring_.node_count(); }

        void create_table(const std::string& table, NodeId) override {
            owner_.coordinate_create_table(table);
        }
        void put(const std::string& table, const Bytes& key,
                 const std::vector<std::pair<std::string, Bytes>>& cells, NodeId) override {
            owner_.coordinate_put(table, key, cells);
        }
        std::optional<StoredRow> get(const std::string& table, const Bytes& key,
                                     NodeId) override {
            return owner_.coordinate_get(table, key);
        }
        bool erase(const std::string& table, const Bytes& key, NodeId) override {
            return owner_.coordinate_erase(table, key);
        }

    private:
        NodeServer& owner_;
    };

    Bytes handle(const Bytes& payload) {
        Message msg = decode_payload(payload);
        if (auto* raw = std::get_if<RawRowRequest>(&msg))
            return raw->local_only ? handle_local(*raw) : handle_coordinate(*raw);
        // Plaintext direct access: this node acts as the coordinator.
        if (auto* schema = std::get_if<SchemaRequest>(&msg))
            return encode_response(engine_->create_schema(*schema));
        if (auto* query = std::get_if<QueryRequest>(&msg))
            return encode_response(engine_->execute(query->text));
        throw ParseError("opcode not accepted by a storage node", 0);
    }

    Bytes handle_local(const RawRowRequest& req) {
        switch (req.op) {
            case StoreOp::CreateTable:
                local_.create_table(req.table);
                return encode_ok();
            case StoreOp::Put: {
                StoredRow row;
                row.key_ct = req.key;
                for (const auto& [name, value] : req.cells) row.cells[name] = value;
                local_.put(req.table, row);
                return encode_ok();
            }
            case StoreOp::Get: {
                auto row = local_.get(req.table, req.key);
                if (!row) return encode_error(ErrorCode::NotFound, "no such row");
                RowsPayload rows;
                for (const auto& [name, value] : row->cells)
                    rows.cells.emplace_back(name, to_string(value));
                return encode_rows(rows);
            }
            case StoreOp::Delete:
                if (!local_.erase(req.table, req.key))
                    return encode_error(ErrorCode::NotFound, "no such row");
                return encode_ok();
        }
        throw BackendError("unknown store op");
    }

    Bytes handle_coordinate(const RawRowRequest& req) {
        switch (req.op) {
            case StoreOp::CreateTable:
                coordinate_create_table(req.table);
                return encode_ok();
            case StoreOp::Put:
                coordinate_put(req.table, req.key, req.cells);
                return encode_ok();
            case StoreOp::Get: {
                auto row = coordinate_get(req.table, req.key);
                if (!row) return encode_error(ErrorCode::NotFound, "no such row");
                RowsPayload rows;
                for (const auto& [name, value] : row->cells)
                    rows.cells.emplace_back(name, to_string(value));
                return encode_rows(rows);
            }
            case StoreOp::Delete:
                if (!coordinate_erase(req.table, req.key))
                    return encode_error(ErrorCode::NotFound, "no such row");
                return encode_ok();
        }
        throw BackendError("unknown store op");
    }

    void coordinate_create_table(const std::string& table) {
        for (uint32_t i = 0; i < ring_.node_count(); ++i) {
            if (i == self_) {
                local_.create_table(table);
            } else {
                RawRowRequest req{StoreOp::CreateTable, true, table, {}, {}};
                expect_peer_ok(i, req);
            }
        }
    }

    void coordinate_put(const std::string& table, const Bytes& key,
                        const std::vector<std::pair<std::string, Bytes>>& cells) {
        StoredRow row;
        row.key_ct = key;
        for (const auto& [name, value] : cells) row.cells[name] = value;
        for (NodeId id : ring_.replicas(ring_position(key))) {
            if (id.index == self_) {
                local_.put(table, row);
            } else {
                RawRowRequest req{StoreOp::Put, true, table, key, cells};
                expect_peer_ok(id.index, req);
            }
        }
    }

    std::optional<StoredRow> coordinate_get(const std::string& table, const Bytes& key) {
        NodeId serving = ring_.replicas(ring_position(key)).front();
        if (serving.index == self_) return local_.get(table, key);
        RawRowRequest req{StoreOp::Get, true, table, key, {}};
        Message msg = decode_payload(peers_[serving.index]->request(encode_raw_row(req)));
        if (auto* rows = std::get_if<RowsPayload>(&msg)) {
            StoredRow row;
            row.key_ct = key;
            for (auto& [name, value] : rows->cells) row.cells[name] = to_bytes(value);
            return row;
        }
        if (auto* err = std::get_if<ErrorPayload>(&msg)) {
            if (err->code == ErrorCode::NotFound) return std::nullopt;
            throw BackendError(err->message);
        }
        throw BackendError("unexpected replica reply");
    }

    bool coordinate_erase(const std::string& table, const Bytes& key) {
        bool existed = false;
        for (NodeId id : ring_.replicas(ring_position(key))) {
            if (id.index == self_) {
                existed = local_.erase(table, key) || existed;
            } else {
                RawRowRequest req{StoreOp::Delete, true, table, key, {}};
                Message msg =
                    decode_payload(peers_[id.index]->request(encode_raw_row(req)));
                if (std::holds_alternative<OkPayload>(msg)) existed = true;
            }
        }
        return existed;
    }

    void expect_peer_ok(uint32_t peer, const RawRowRequest& req) {
        Message msg = decode_payload(peers_[peer]->request(encode_raw_row(req)));
        if (std::holds_alternative<OkPayload>(msg)) return;
        if (auto* err = std::get_if<ErrorPayload>(&msg))
            throw BackendError("replica " + std::to_string(peer) + ": " + err->message);
        throw BackendError("unexpected replica reply");
    }

    uint32_t self_;
    ClusterRing ring_;
    StoreNode local_;
    std::vector<std::unique_ptr<PeerClient>> peers_;
    std::shared_ptr<SchemaRegistry> registry_;
    std::shared_ptr<PlainEngine> engine_;
    std::optional<FrameServer> server_;
};

}  // namespace secnosql
