#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "secnosql/bytes.hpp"
#include "secnosql/errors.hpp"
#include "secnosql/store.hpp"

namespace secnosql {

// Frame layout: u32 big-endian payload length, then the payload.
// Payload layout: u8 opcode, then an opcode-specific body. All integers
// are big-endian.
//
// Client <-> proxy opcodes (also accepted by a node in the plaintext
// direct-access mode):
//   0x01 CREATE_SCHEMA  u16 table-len | table | u8 column-count |
//                       per column: u16 len | name      (first column = key)
//   0x02 QUERY          u32 len | UTF-8 query text
//   0x81 OK             empty
//   0x82 ROWS           u16 cell-count | per cell:
//                       u16 name-len | name | u32 value-len | value
//   0x83 ERROR          u8 code | u16 msg-len | msg
//
// Node-internal opcodes (proxy -> node and node -> node replication):
//   0x10 RAW_ROW        u8 store-op | u8 local-only | u16 table-len | table |
//                       u32 key-len | key | u16 cell-count | cells as in ROWS
inline constexpr uint8_t kOpCreateSchema = 0x01;
inline constexpr uint8_t kOpQuery = 0x02;
inline constexpr uint8_t kOpRawRow = 0x10;
inline constexpr uint8_t kOpOk = 0x81;
inline constexpr uint8_t kOpRows = 0x82;
inline constexpr uint8_t kOpError = 0x83;

// Anything larger is treated as a malformed frame, not an allocation request.
inline constexpr uint32_t kMaxFramePayload = 4u * 1024 * 1024;

struct SchemaRequest {
    std::string table;
    std::vector<std::string> columns;  // first is the key column

    friend bool operator==(const SchemaRequest&, const SchemaRequest&) = default;
};

struct QueryRequest {
    std::string text;
};

struct OkPayload {};

struct RowsPayload {
    // Values are binary-safe: plaintext strings client-side, ciphertext
    // bytes when a node answers a raw get.
    std::vector<std::pair<std::string, std::string>> cells;
};

struct ErrorPayload {
    ErrorCode code;
    std::string message;
};

struct RawRowRequest {
    StoreOp op;
    // When set, the receiving node applies the command locally instead of
    // coordinating replica placement (used for node-to-node replication).
    bool local_only = false;
    std::string table;
    Bytes key;
    std::vector<std::pair<std::string, Bytes>> cells;
};

using Message =
    std::variant<SchemaRequest, QueryRequest, OkPayload, RowsPayload, ErrorPayload,
                 RawRowRequest>;

inline Bytes encode_create_schema(const SchemaRequest& req) {
    if (req.table.size() > 0xffff)
        throw ParseError("table name too long", 0);
    if (req.columns.empty() || req.columns.size() > 0xff)
        throw ParseError("column count out of range", 0);
    Bytes out;
    put_u8(out, kOpCreateSchema);
    put_u16(out, static_cast<uint16_t>(req.table.size()));
    put_bytes(out, req.table);
    put_u8(out, static_cast<uint8_t>(req.columns.size()));
    for (const auto& c : req.columns) {
        if (c.size() > 0xffff)
            throw ParseError("column name too long", 0);
        put_u16(out, static_cast<uint16_t>(c.size()));
        put_bytes(out, c);
    }
    return out;
}

inline Bytes encode_query(std::string_view text) {
    Bytes out;
    put_u8(out, kOpQuery);
    put_u32(out, static_cast<uint32_t>(text.size()));
    put_bytes(out, text);
    return out;
}

inline Bytes encode_ok() {
    return Bytes{kOpOk};
}

inline Bytes encode_rows(const RowsPayload& rows) {
    if (rows.cells.size() > 0xffff)
        throw ParseError("too many cells for a ROWS payload", 0);
    Bytes out;
    put_u8(out, kOpRows);
    put_u16(out, static_cast<uint16_t>(rows.cells.size()));
    for (const auto& [name, value] : rows.cells) {
        put_u16(out, static_cast<uint16_t>(name.size()));
        put_bytes(out, name);
        put_u32(out, static_cast<uint32_t>(value.size()));
        put_bytes(out, value);
    }
    return out;
}

inline Bytes encode_error(ErrorCode code, std::string_view message) {
    if (message.size() > 0xffff) message = message.substr(0, 0xffff);
    Bytes out;
    put_u8(out, kOpError);
    put_u8(out, static_cast<uint8_t>(code));
    put_u16(out, static_cast<uint16_t>(message.size()));
    put_bytes(out, message);
    return out;
}

inline Bytes encode_raw_row(const RawRowRequest& req) {
    Bytes out;
    put_u8(out, kOpRawRow);
    put_u8(out, static_cast<uint8_t>(req.op));
    put_u8(out, req.local_only ? 1 : 0);
    put_u16(out, static_cast<uint16_t>(req.table.size()));
    put_bytes(out, req.table);
    put_u32(out, static_cast<uint32_t>(req.key.size()));
    put_bytes(out, req.key);
    put_u16(out, static_cast<uint16_t>(req.cells.size()));
    for (const auto& [name, value] : req.cells) {
        put_u16(out, static_cast<uint16_t>(name.size()));
        put_bytes(out, name);
        put_u32(out, static_cast<uint32_t>(value.size()));
        put_bytes(out, value);
    }
    return out;
}

inline Message decode_payload(std::span<const uint8_t> payload) {
    if (payload.empty())
        throw ParseError("empty frame", 0);
    ByteReader r(payload);
    uint8_t opcode = r.u8();
    try {
        switch (opcode) {
            case kOpCreateSchema: {
                SchemaRequest req;
                req.table = r.take_string(r.u16());
                uint8_t count = r.u8();
                for (uint8_t i = 0; i < count; ++i)
                    req.columns.push_back(r.take_string(r.u16()));
                if (!r.done()) throw ParseError("trailing bytes in frame", payload.size());
                if (req.columns.empty())
                    throw ParseError("CREATE_SCHEMA needs at least the key column", 0);
                return req;
            }
            case kOpQuery: {
                QueryRequest req;
                req.text = r.take_string(r.u32());
                if (!r.done()) throw ParseError("trailing bytes in frame", payload.size());
                return req;
            }
            case kOpOk: {
                if (!r.done()) throw ParseError("trailing bytes in frame", payload.size());
                return OkPayload{};
            }
            case kOpRows: {
                RowsPayload rows;
                uint16_t count = r.u16();
                for (uint16_t i = 0; i < count; ++i) {
                    std::string name = r.take_string(r.u16());
                    std::string value = r.take_string(r.u32());
                    rows.cells.emplace_back(std::move(name), std::move(value));
                }
                if (!r.done()) throw ParseError("trailing bytes in frame", payload.size());
                return rows;
            }
            case kOpError: {
                ErrorPayload err;
                uint8_t code = r.u8();
                if (code < 1 || code > 5)
                    throw ParseError("unknown error code", 1);
                err.code = static_cast<ErrorCode>(code);
                err.message = r.take_string(r.u16());
                if (!r.done()) throw ParseError("trailing bytes in frame", payload.size());
                return err;
            }
            case kOpRawRow: {
                RawRowRequest req;
                uint8_t op = r.u8();
                if (op < 1 || op > 4)
                    throw ParseError("unknown store op", 1);
                req.op = static_cast<StoreOp>(op);
                req.local_only = r.u8() != 0;
                req.table = r.take_string(r.u16());
                req.key = r.take(r.u32());
                uint16_t count = r.u16();
                for (uint16_t i = 0; i < count; ++i) {
                    std::string name = r.take_string(r.u16());
                    Bytes value = r.take(r.u32());
                    req.cells.emplace_back(std::move(name), std::move(value));
                }
                if (!r.done()) throw ParseError("trailing bytes in frame", payload.size());
                return req;
            }
            default:
                throw ParseError("unknown opcode " + std::to_string(opcode), 0);
        }
    } catch (const std::out_of_range&) {
        throw ParseError("truncated frame body", payload.size());
    }
}

// Whole frame including the length prefix; used for golden fixtures and by
// the socket layer.
inline Bytes frame(std::span<const uint8_t> payload) {
    Bytes out;
    put_u32(out, static_cast<uint32_t>(payload.size()));
    put_bytes(out, payload);
    return out;
}

}  // namespace secnosql
