#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstring>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "secnosql/bytes.hpp"
#include "secnosql/errors.hpp"
#include "secnosql/wire.hpp"

namespace secnosql {

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    ~Socket() { close(); }

    Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
    Socket& operator=(Socket&& other) noexcept {
        if (this != &other) {
            close();
            fd_ = other.fd_;
            other.fd_ = -1;
        }
        return *this;
    }
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;

    bool valid() const { return fd_ >= 0; }
    int fd() const { return fd_; }

    void close() {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

    void shutdown() {
        if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
    }

    void write_all(std::span<const uint8_t> data) {
        size_t off = 0;
        while (off < data.size()) {
            ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw BackendError(std::string("socket write failed: ") + std::strerror(errno));
            }
            off += static_cast<size_t>(n);
        }
    }

    // Returns false on clean EOF before the first byte.
    bool read_exact(std::span<uint8_t> data) {
        size_t off = 0;
        while (off < data.size()) {
            ssize_t n = ::recv(fd_, data.data() + off, data.size() - off, 0);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw BackendError(std::string("socket read failed: ") + std::strerror(errno));
            }
            if (n == 0) {
                if (off == 0) return false;
                throw BackendError("connection closed mid-message");
            }
            off += static_cast<size_t>(n);
        }
        return true;
    }

private:
    int fd_ = -1;
};

inline void send_frame(Socket& sock, std::span<const uint8_t> payload) {
    sock.write_all(frame(payload));
}

// nullopt on clean EOF at a frame boundary. Oversized length prefixes are
// rejected without reading the body; the stream cannot be resynchronized
// afterwards, so callers should close the connection.
inline std::optional<Bytes> recv_frame(Socket& sock) {
    std::array<uint8_t, 4> len_buf;
    if (!sock.read_exact(len_buf)) return std::nullopt;
    uint32_t len = static_cast<uint32_t>(len_buf[0]) << 24 |
                   static_cast<uint32_t>(len_buf[1]) << 16 |
                   static_cast<uint32_t>(len_buf[2]) << 8 | static_cast<uint32_t>(len_buf[3]);
    if (len > kMaxFramePayload)
        throw ParseError("frame length " + std::to_string(len) + " exceeds limit", 0);
    Bytes payload(len);
    if (len > 0 && !sock.read_exact(payload))
        throw BackendError("connection closed mid-frame");
    return payload;
}

inline Socket connect_to(const std::string& host, uint16_t port) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0)
        throw BackendError(std::string("socket() failed: ") + std::strerror(errno));
    Socket sock(fd);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
        throw BackendError("invalid address '" + host + "'");
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
        throw BackendError("connect to " + host + ":" + std::to_string(port) +
                           " failed: " + std::strerror(errno));
    int one = 1;
    setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return sock;
}

inline Socket connect_with_retry(const std::string& host, uint16_t port,
                                 std::chrono::milliseconds budget) {
    auto deadline = std::chrono::steady_clock::now() + budget;
    while (true) {
        try {
            return connect_to(host, port);
        } catch (const BackendError&) {
            if (std::chrono::steady_clock::now() >= deadline) throw;
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
    }
}

class Listener {
public:
    // port 0 binds an ephemeral port; port() reports the actual one.
    explicit Listener(uint16_t port) {
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0)
            throw BackendError(std::string("socket() failed: ") + std::strerror(errno));
        sock_ = Socket(fd);
        int one = 1;
        setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = htons(port);
        if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
            throw ConfigError("bind to port " + std::to_string(port) +
                              " failed: " + std::strerror(errno));
        if (::listen(fd, 64) != 0)
            throw BackendError(std::string("listen failed: ") + std::strerror(errno));
        socklen_t len = sizeof addr;
        getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
    }

    uint16_t port() const { return port_; }

    std::optional<Socket> accept() {
        int fd = ::accept(sock_.fd(), nullptr, nullptr);
        if (fd < 0) return std::nullopt;  // listener closed
        int one = 1;
        setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        return Socket(fd);
    }

    void close() {
        sock_.shutdown();
        sock_.close();
    }

private:
    Socket sock_;
    uint16_t port_ = 0;
};

// Request/reply server: one thread per connection, frames on a connection
// are processed strictly in order, so responses preserve request order per
// session. A handler exception that carries a wire code becomes an ERROR
// reply and the session continues; framing-level damage (oversized length,
// mid-frame EOF) closes only the offending session.
class FrameServer {
public:
    using Handler = std::function<Bytes(const Bytes& payload)>;

    FrameServer(uint16_t port, Handler handler)
        : listener_(port), handler_(std::move(handler)) {
        accept_thread_ = std::thread([this] { accept_loop(); });
    }

    ~FrameServer() { stop(); }

    uint16_t port() const { return listener_.port(); }

    void stop() {
        bool expected = false;
        if (!stopping_.compare_exchange_strong(expected, true)) return;
        listener_.close();
        if (accept_thread_.joinable()) accept_thread_.join();
        {
            std::lock_guard lock(sessions_mu_);
            for (auto& s : sessions_)
                if (s->sock.valid()) s->sock.shutdown();
        }
        for (auto& s : sessions_)
            if (s->thread.joinable()) s->thread.join();
    }

private:
    struct Session {
        Socket sock;
        std::thread thread;
    };

    void accept_loop() {
        while (true) {
            auto sock = listener_.accept();
            if (!sock) return;
            std::lock_guard lock(sessions_mu_);
            if (stopping_) return;
            auto session = std::make_unique<Session>();
            session->sock = std::move(*sock);
            Session* raw = session.get();
            session->thread = std::thread([this, raw] { session_loop(*raw); });
            sessions_.push_back(std::move(session));
        }
    }

    void session_loop(Session& session) {
        while (true) {
            Bytes payload;
            try {
                auto got = recv_frame(session.sock);
                if (!got) return;  // client hung up
                payload = std::move(*got);
            } catch (const ParseError& e) {
                // Unrecoverable framing: report, then drop this session only.
                try {
                    send_frame(session.sock, encode_error(ErrorCode::Parse, e.what()));
                } catch (...) {
                }
                return;
            } catch (const BackendError&) {
                return;
            }
            Bytes reply;
            try {
                reply = handler_(payload);
            } catch (const Error& e) {
                reply = encode_error(e.code(), e.what());
            } catch (const std::exception& e) {
                reply = encode_error(ErrorCode::Backend, e.what());
            }
            try {
                send_frame(session.sock, reply);
            } catch (const BackendError&) {
                return;
            }
        }
    }

    Listener listener_;
    Handler handler_;
    std::atomic<bool> stopping_{false};
    std::mutex sessions_mu_;
    std::vector<std::unique_ptr<Session>> sessions_;
    std::thread accept_thread_;
};

}  // namespace secnosql
