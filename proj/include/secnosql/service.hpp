#pragma once

#include <string>
#include <utility>
#include <vector>

#include "secnosql/errors.hpp"
#include "secnosql/wire.hpp"

namespace secnosql {

// Outcome of one client request, in either the in-process or the remote
// representation of the protocol.
struct Response {
    enum class Kind : uint8_t { Ok, Rows, Err };

    Kind kind = Kind::Ok;
    std::vector<std::pair<std::string, std::string>> cells;
    ErrorCode code = ErrorCode::Backend;
    std::string message;

    static Response ok() { return {}; }

    static Response rows(std::vector<std::pair<std::string, std::string>> cells) {
        Response r;
        r.kind = Kind::Rows;
        r.cells = std::move(cells);
        return r;
    }

    static Response error(ErrorCode code, std::string message) {
        Response r;
        r.kind = Kind::Err;
        r.code = code;
        r.message = std::move(message);
        return r;
    }

    bool is_ok() const { return kind != Kind::Err; }
};

// What a client session talks to: a proxy, a node in plaintext direct mode,
// or a remote stand-in for either.
class QueryService {
public:
    virtual ~QueryService() = default;
    virtual Response create_schema(const SchemaRequest& request) = 0;
    virtual Response execute(const std::string& query_text) = 0;
};

inline Bytes encode_response(const Response& r) {
    switch (r.kind) {
        case Response::Kind::Ok:
            return encode_ok();
        case Response::Kind::Rows:
            return encode_rows(RowsPayload{r.cells});
        case Response::Kind::Err:
            return encode_error(r.code, r.message);
    }
    return encode_error(ErrorCode::Backend, "corrupt response");
}

inline Response decode_response(const Bytes& payload) {
    Message msg = decode_payload(payload);
    if (std::holds_alternative<OkPayload>(msg)) return Response::ok();
    if (auto* rows = std::get_if<RowsPayload>(&msg)) return Response::rows(rows->cells);
    if (auto* err = std::get_if<ErrorPayload>(&msg))
        return Response::error(err->code, err->message);
    throw ParseError("unexpected reply opcode", 0);
}

}  // namespace secnosql
