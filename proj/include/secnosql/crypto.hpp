#pragma once

#include <openssl/core_names.h>
#include <openssl/evp.h>
#include <openssl/rand.h>

#include <array>
#include <cstring>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include "secnosql/bytes.hpp"
#include "secnosql/errors.hpp"

namespace secnosql {

inline constexpr size_t kAesBlock = 16;
inline constexpr size_t kAesKeyLen = 16;   // AES-128
inline constexpr size_t kMacKeyLen = 32;
inline constexpr size_t kMasterKeyLen = 32;
inline constexpr size_t kHmacLen = 32;     // SHA-256 output

// The single secret provisioned to the trusted proxy. Must never be
// written to logs, stored rows, ledger files, or any other artifact.
struct MasterKey {
    std::array<uint8_t, kMasterKeyLen> bytes{};

    static MasterKey from_raw(std::span<const uint8_t> raw) {
        if (raw.size() != kMasterKeyLen)
            throw CryptoError("master key must be exactly 32 bytes");
        MasterKey mk;
        std::memcpy(mk.bytes.data(), raw.data(), kMasterKeyLen);
        return mk;
    }

    // Accepts the 64-hex-char form used by config files and
    // the SECNOSQL_MASTER_KEY environment variable.
    static MasterKey from_hex(std::string_view hex) {
        if (hex.size() != 2 * kMasterKeyLen)
            throw CryptoError("master key must be 64 hex characters");
        Bytes raw;
        try {
            raw = hex_decode(hex);
        } catch (const std::invalid_argument&) {
            throw CryptoError("master key contains non-hex characters");
        }
        return from_raw(raw);
    }
};

// Working keys derived from the master secret. Domain separation comes
// from the derivation labels, so the four keys are independent.
struct KeySet {
    std::array<uint8_t, kAesKeyLen> det_key{};
    std::array<uint8_t, kAesKeyLen> rnd_key{};
    std::array<uint8_t, kMacKeyLen> mac_key{};
    std::array<uint8_t, kMacKeyLen> meta_key{};
};

enum class Scheme : uint8_t {
    Rnd = 0,  // probabilistic: fresh IV, IV || CBC blocks
    Det = 1,  // deterministic: fixed zero IV, CBC blocks only
};

struct Ciphertext {
    Scheme scheme;
    Bytes bytes;
};

struct HmacTag {
    std::array<uint8_t, kHmacLen> bytes{};

    friend bool operator==(const HmacTag&, const HmacTag&) = default;
};

namespace detail {

struct CipherCtxFree {
    void operator()(EVP_CIPHER_CTX* p) const { EVP_CIPHER_CTX_free(p); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxFree>;

struct MacCtxFree {
    void operator()(EVP_MAC_CTX* p) const { EVP_MAC_CTX_free(p); }
};

inline EVP_MAC* hmac_algorithm() {
    static EVP_MAC* mac = EVP_MAC_fetch(nullptr, "HMAC", nullptr);
    if (!mac) throw CryptoError("HMAC algorithm unavailable");
    return mac;
}

}  // namespace detail

inline std::array<uint8_t, kHmacLen> hmac_sha256(std::span<const uint8_t> key,
                                                 std::span<const uint8_t> data) {
    std::unique_ptr<EVP_MAC_CTX, detail::MacCtxFree> ctx(
        EVP_MAC_CTX_new(detail::hmac_algorithm()));
    if (!ctx) throw CryptoError("EVP_MAC_CTX_new failed");

    char digest[] = "SHA256";
    OSSL_PARAM params[] = {
        OSSL_PARAM_construct_utf8_string(OSSL_MAC_PARAM_DIGEST, digest, 0),
        OSSL_PARAM_construct_end(),
    };
    if (EVP_MAC_init(ctx.get(), key.data(), key.size(), params) != 1)
        throw CryptoError("EVP_MAC_init failed");
    if (!data.empty() && EVP_MAC_update(ctx.get(), data.data(), data.size()) != 1)
        throw CryptoError("EVP_MAC_update failed");

    std::array<uint8_t, kHmacLen> out{};
    size_t outl = 0;
    if (EVP_MAC_final(ctx.get(), out.data(), &outl, out.size()) != 1 || outl != kHmacLen)
        throw CryptoError("EVP_MAC_final failed");
    return out;
}

inline std::array<uint8_t, kHmacLen> hmac_sha256(std::span<const uint8_t> key,
                                                 std::string_view data) {
    return hmac_sha256(key, std::span<const uint8_t>(
                                reinterpret_cast<const uint8_t*>(data.data()), data.size()));
}

// det/rnd keys truncate the 32-byte mac to AES-128 size; mac/meta use it whole.
inline KeySet derive_keys(const MasterKey& master) {
    KeySet ks;
    auto sub = hmac_sha256(master.bytes, std::string_view("det"));
    std::memcpy(ks.det_key.data(), sub.data(), kAesKeyLen);
    sub = hmac_sha256(master.bytes, std::string_view("rnd"));
    std::memcpy(ks.rnd_key.data(), sub.data(), kAesKeyLen);
    ks.mac_key = hmac_sha256(master.bytes, std::string_view("mac"));
    ks.meta_key = hmac_sha256(master.bytes, std::string_view("meta"));
    return ks;
}

namespace detail {

inline Bytes aes128_cbc_encrypt(std::span<const uint8_t, kAesKeyLen> key,
                                std::span<const uint8_t, kAesBlock> iv,
                                std::span<const uint8_t> plaintext) {
    CipherCtx ctx(EVP_CIPHER_CTX_new());
    if (!ctx) throw CryptoError("EVP_CIPHER_CTX_new failed");
    if (EVP_EncryptInit_ex(ctx.get(), EVP_aes_128_cbc(), nullptr, key.data(), iv.data()) != 1)
        throw CryptoError("EVP_EncryptInit failed");

    // PKCS#7 padding is OpenSSL's default; output is always a whole
    // number of blocks with at least one pad byte.
    Bytes out(plaintext.size() + kAesBlock);
    int len1 = 0, len2 = 0;
    if (!plaintext.empty() &&
        EVP_EncryptUpdate(ctx.get(), out.data(), &len1, plaintext.data(),
                          static_cast<int>(plaintext.size())) != 1)
        throw CryptoError("EVP_EncryptUpdate failed");
    if (EVP_EncryptFinal_ex(ctx.get(), out.data() + len1, &len2) != 1)
        throw CryptoError("EVP_EncryptFinal failed");
    out.resize(static_cast<size_t>(len1 + len2));
    return out;
}

inline Bytes aes128_cbc_decrypt(std::span<const uint8_t, kAesKeyLen> key,
                                std::span<const uint8_t, kAesBlock> iv,
                                std::span<const uint8_t> ciphertext) {
    if (ciphertext.empty() || ciphertext.size() % kAesBlock != 0)
        throw CryptoError("ciphertext length is not a positive multiple of the block size");
    CipherCtx ctx(EVP_CIPHER_CTX_new());
    if (!ctx) throw CryptoError("EVP_CIPHER_CTX_new failed");
    if (EVP_DecryptInit_ex(ctx.get(), EVP_aes_128_cbc(), nullptr, key.data(), iv.data()) != 1)
        throw CryptoError("EVP_DecryptInit failed");

    Bytes out(ciphertext.size() + kAesBlock);
    int len1 = 0, len2 = 0;
    if (EVP_DecryptUpdate(ctx.get(), out.data(), &len1, ciphertext.data(),
                          static_cast<int>(ciphertext.size())) != 1)
        throw CryptoError("EVP_DecryptUpdate failed");
    // A padding failure here signals ciphertext corruption.
    if (EVP_DecryptFinal_ex(ctx.get(), out.data() + len1, &len2) != 1)
        throw CryptoError("decryption failed: invalid padding");
    out.resize(static_cast<size_t>(len1 + len2));
    return out;
}

inline constexpr std::array<uint8_t, kAesBlock> kZeroIv{};

}  // namespace detail

// Probabilistic encryption: output = IV || AES-128-CBC(rnd_key, IV, pad(m)).
// Two encryptions of equal plaintexts differ except with negligible probability.
inline Ciphertext rnd_encrypt_with_iv(const KeySet& keys, std::span<const uint8_t> plaintext,
                                      const std::array<uint8_t, kAesBlock>& iv) {
    Bytes out(iv.begin(), iv.end());
    Bytes body = detail::aes128_cbc_encrypt(keys.rnd_key, iv, plaintext);
    out.insert(out.end(), body.begin(), body.end());
    return Ciphertext{Scheme::Rnd, std::move(out)};
}

inline Ciphertext rnd_encrypt(const KeySet& keys, std::span<const uint8_t> plaintext) {
    std::array<uint8_t, kAesBlock> iv;
    if (RAND_bytes(iv.data(), static_cast<int>(iv.size())) != 1)
        throw CryptoError("RAND_bytes failed");
    return rnd_encrypt_with_iv(keys, plaintext, iv);
}

inline Ciphertext rnd_encrypt(const KeySet& keys, std::string_view plaintext) {
    return rnd_encrypt(keys, std::span<const uint8_t>(
                                 reinterpret_cast<const uint8_t*>(plaintext.data()),
                                 plaintext.size()));
}

inline Bytes rnd_decrypt(const KeySet& keys, const Ciphertext& ct) {
    if (ct.scheme != Scheme::Rnd)
        throw CryptoError("rnd_decrypt applied to a non-RND ciphertext");
    if (ct.bytes.size() < 2 * kAesBlock || (ct.bytes.size() - kAesBlock) % kAesBlock != 0)
        throw CryptoError("malformed RND ciphertext length");
    std::array<uint8_t, kAesBlock> iv;
    std::memcpy(iv.data(), ct.bytes.data(), kAesBlock);
    return detail::aes128_cbc_decrypt(
        keys.rnd_key, iv, std::span<const uint8_t>(ct.bytes).subspan(kAesBlock));
}

// Deterministic encryption: AES-128-CBC under a fixed zero IV, no IV prefix.
// Identical plaintexts map to identical ciphertexts, enabling equality
// lookups server-side. Weaker than RND (and than synthetic-IV designs):
// it reveals plaintext equality by construction.
inline Ciphertext det_encrypt(const KeySet& keys, std::span<const uint8_t> plaintext) {
    return Ciphertext{Scheme::Det,
                      detail::aes128_cbc_encrypt(keys.det_key, detail::kZeroIv, plaintext)};
}

inline Ciphertext det_encrypt(const KeySet& keys, std::string_view plaintext) {
    return det_encrypt(keys, std::span<const uint8_t>(
                                 reinterpret_cast<const uint8_t*>(plaintext.data()),
                                 plaintext.size()));
}

inline Bytes det_decrypt(const KeySet& keys, const Ciphertext& ct) {
    if (ct.scheme != Scheme::Det)
        throw CryptoError("det_decrypt applied to a non-DET ciphertext");
    return detail::aes128_cbc_decrypt(keys.det_key, detail::kZeroIv, ct.bytes);
}

// Whole-row authentication tag over the canonical row serialization.
inline HmacTag record_hmac(const KeySet& keys, std::span<const uint8_t> canonical) {
    return HmacTag{hmac_sha256(keys.mac_key, canonical)};
}

enum class NameKind : uint8_t { Table, Column };

// Deterministic pseudonym for a table or column name:
//   't'|'c' followed by 32 lowercase hex chars (first 16 HMAC bytes).
// The kind byte domain-separates table names from column names, so the
// same identifier anonymizes differently in each role.
inline std::string anonymize_name(const KeySet& keys, NameKind kind, std::string_view name) {
    if (name.empty())
        throw SchemaError("cannot anonymize an empty name");
    char prefix = kind == NameKind::Table ? 't' : 'c';
    Bytes input;
    input.reserve(name.size() + 1);
    input.push_back(static_cast<uint8_t>(prefix));
    put_bytes(input, name);
    auto mac = hmac_sha256(keys.meta_key, input);
    return prefix + hex_encode(std::span<const uint8_t>(mac.data(), 16));
}

}  // namespace secnosql
