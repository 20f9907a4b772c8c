#pragma once

#include <cstdio>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include "secnosql/bytes.hpp"
#include "secnosql/crypto.hpp"
#include "secnosql/errors.hpp"

namespace secnosql {

// Proxy-side map (table pseudonym, key ciphertext) -> whole-row HMAC tag.
// An entry exists exactly when the row exists in the cluster. Optionally
// backed by an append-only log so a restarted proxy can rebuild its view:
//   u8 op (1 put, 2 delete) | u16 table-len | table | u32 key-len | key |
//   32-byte tag (put only)
// A truncated trailing record (interrupted write) is ignored on replay.
class IntegrityLedger {
public:
    // An empty path keeps the ledger in memory only.
    explicit IntegrityLedger(const std::string& path = "") : path_(path) {
        if (path_.empty()) return;
        replay();
        log_.open(path_, std::ios::binary | std::ios::app);
        if (!log_)
            throw BackendError("cannot open ledger file '" + path_ + "'");
    }

    void put(const std::string& table_pseudonym, const Bytes& key_ct, const HmacTag& tag) {
        std::lock_guard lock(mu_);
        entries_[map_key(table_pseudonym, key_ct)] = tag;
        if (log_.is_open()) {
            append_header(1, table_pseudonym, key_ct);
            log_.write(reinterpret_cast<const char*>(tag.bytes.data()), tag.bytes.size());
            log_.flush();
        }
    }

    void erase(const std::string& table_pseudonym, const Bytes& key_ct) {
        std::lock_guard lock(mu_);
        entries_.erase(map_key(table_pseudonym, key_ct));
        if (log_.is_open()) {
            append_header(2, table_pseudonym, key_ct);
            log_.flush();
        }
    }

    std::optional<HmacTag> lookup(const std::string& table_pseudonym,
                                  const Bytes& key_ct) const {
        std::lock_guard lock(mu_);
        auto it = entries_.find(map_key(table_pseudonym, key_ct));
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    size_t size() const {
        std::lock_guard lock(mu_);
        return entries_.size();
    }

private:
    static std::string map_key(const std::string& table_pseudonym, const Bytes& key_ct) {
        std::string k = table_pseudonym;
        k.push_back('\0');
        k.append(key_ct.begin(), key_ct.end());
        return k;
    }

    void append_header(uint8_t op, const std::string& table, const Bytes& key) {
        Bytes rec;
        put_u8(rec, op);
        put_u16(rec, static_cast<uint16_t>(table.size()));
        put_bytes(rec, table);
        put_u32(rec, static_cast<uint32_t>(key.size()));
        put_bytes(rec, key);
        log_.write(reinterpret_cast<const char*>(rec.data()),
                   static_cast<std::streamsize>(rec.size()));
    }

    void replay() {
        std::ifstream in(path_, std::ios::binary);
        if (!in) return;  // fresh ledger
        Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        ByteReader r(data);
        while (!r.done()) {
            try {
                uint8_t op = r.u8();
                std::string table = r.take_string(r.u16());
                Bytes key = r.take(r.u32());
                if (op == 1) {
                    Bytes tag_bytes = r.take(kHmacLen);
                    HmacTag tag;
                    std::copy(tag_bytes.begin(), tag_bytes.end(), tag.bytes.begin());
                    entries_[map_key(table, key)] = tag;
                } else if (op == 2) {
                    entries_.erase(map_key(table, key));
                } else {
                    break;  // unknown record, stop replaying
                }
            } catch (const std::out_of_range&) {
                break;  // truncated tail
            }
        }
    }

    mutable std::mutex mu_;
    std::unordered_map<std::string, HmacTag> entries_;
    std::string path_;
    std::ofstream log_;
};

}  // namespace secnosql
