#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>

#include "reference_crypto.hpp"
#include "secnosql/crypto.hpp"

using namespace secnosql;

namespace {

Bytes random_bytes(std::mt19937_64& rng, size_t n) {
    Bytes out(n);
    for (auto& b : out) b = static_cast<uint8_t>(rng());
    return out;
}

KeySet zero_keys() {
    return KeySet{};  // all-zero members
}

MasterKey master_of(uint8_t fill) {
    MasterKey mk;
    mk.bytes.fill(fill);
    return mk;
}

}  // namespace

TEST_CASE("reference implementations match their published vectors") {
    // AES-128(0,0) single block, FIPS 197 style known answer.
    auto w = refcrypto::aes128_expand_key(refcrypto::Bytes(16, 0).data());
    uint8_t block[16]{};
    uint8_t out[16];
    refcrypto::aes128_encrypt_block(w, block, out);
    CHECK(hex_encode(std::span<const uint8_t>(out, 16)) ==
          "66e94bd4ef8a2c3b884cfa59ca342b2e");

    // SHA-256("abc")
    auto digest = refcrypto::sha256(to_bytes("abc"));
    CHECK(hex_encode(digest) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("derive_keys is deterministic and label-separated") {
    MasterKey mk = master_of(0x5a);
    KeySet a = derive_keys(mk);
    KeySet b = derive_keys(mk);
    CHECK(a.det_key == b.det_key);
    CHECK(a.rnd_key == b.rnd_key);
    CHECK(a.mac_key == b.mac_key);
    CHECK(a.meta_key == b.meta_key);
}

TEST_CASE("derive_keys matches the independent HMAC reference") {
    KeySet ks = derive_keys(master_of(0x00));
    auto expect = refcrypto::hmac_sha256(refcrypto::Bytes(32, 0), to_bytes("det"));
    CHECK(std::equal(ks.det_key.begin(), ks.det_key.end(), expect.begin()));
    auto expect_mac = refcrypto::hmac_sha256(refcrypto::Bytes(32, 0), to_bytes("mac"));
    CHECK(std::equal(ks.mac_key.begin(), ks.mac_key.end(), expect_mac.begin()));
}

TEST_CASE("derived keys are pairwise distinct across random masters") {
    std::mt19937_64 rng(7001);
    for (int trial = 0; trial < 100; ++trial) {
        MasterKey m1 = MasterKey::from_raw(random_bytes(rng, 32));
        MasterKey m2 = MasterKey::from_raw(random_bytes(rng, 32));
        KeySet k1 = derive_keys(m1);
        KeySet k2 = derive_keys(m2);
        std::set<std::string> keys;
        auto add = [&](std::span<const uint8_t> k) { keys.insert(hex_encode(k)); };
        add(k1.det_key); add(k1.rnd_key); add(k1.mac_key); add(k1.meta_key);
        add(k2.det_key); add(k2.rnd_key); add(k2.mac_key); add(k2.meta_key);
        CHECK(keys.size() == 8);
    }
}

TEST_CASE("master key length is enforced") {
    CHECK_THROWS_AS(MasterKey::from_raw(Bytes(31, 0)), CryptoError);
    CHECK_THROWS_AS(MasterKey::from_raw(Bytes(33, 0)), CryptoError);
    CHECK_THROWS_AS(MasterKey::from_hex("abcd"), CryptoError);
    CHECK_THROWS_AS(MasterKey::from_hex(std::string(64, 'g')), CryptoError);
    CHECK_NOTHROW(MasterKey::from_hex(std::string(64, 'a')));
}

TEST_CASE("rnd round-trips all lengths 0..64") {
    KeySet ks = derive_keys(master_of(0x11));
    std::mt19937_64 rng(7002);
    for (size_t len = 0; len <= 64; ++len) {
        Bytes m = random_bytes(rng, len);
        Ciphertext ct = rnd_encrypt(ks, m);
        CHECK(rnd_decrypt(ks, ct) == m);
    }
}

TEST_CASE("rnd is probabilistic, det is deterministic") {
    KeySet ks = derive_keys(master_of(0x22));
    std::string m = "same plaintext";
    Ciphertext c1 = rnd_encrypt(ks, m);
    Ciphertext c2 = rnd_encrypt(ks, m);
    CHECK(c1.bytes != c2.bytes);
    CHECK(det_encrypt(ks, m).bytes == det_encrypt(ks, m).bytes);
}

TEST_CASE("ciphertext lengths follow the block discipline") {
    KeySet ks = derive_keys(master_of(0x33));
    std::mt19937_64 rng(7003);
    for (size_t len : {size_t{0}, size_t{1}, size_t{15}, size_t{16}, size_t{17}, size_t{64},
                       size_t{100}, size_t{4096}}) {
        Bytes m = random_bytes(rng, len);
        size_t blocks = (len + 1 + 15) / 16;  // content plus at least one pad byte
        CHECK(rnd_encrypt(ks, m).bytes.size() == 16 + 16 * blocks);
        CHECK(det_encrypt(ks, m).bytes.size() == 16 * blocks);
    }
}

TEST_CASE("rnd with pinned zero key and IV matches the reference AES-CBC") {
    KeySet ks = zero_keys();
    std::array<uint8_t, 16> iv{};
    Bytes m(16, 0x00);
    Ciphertext ct = rnd_encrypt_with_iv(ks, m, iv);
    Bytes expect = refcrypto::aes128_cbc_encrypt(refcrypto::Bytes(16, 0),
                                                 refcrypto::Bytes(16, 0), m);
    REQUIRE(ct.bytes.size() == 16 + expect.size());
    CHECK(Bytes(ct.bytes.begin() + 16, ct.bytes.end()) == expect);
    CHECK(hex_encode(expect) ==
          "66e94bd4ef8a2c3b884cfa59ca342b2e9434dec2d00fdac765f00c0c11628cd1");
}

TEST_CASE("encryption agrees with the reference on random vectors") {
    KeySet ks = derive_keys(master_of(0x44));
    std::mt19937_64 rng(7004);
    for (int trial = 0; trial < 100; ++trial) {
        Bytes m = random_bytes(rng, rng() % 96);
        Bytes ivb = random_bytes(rng, 16);
        std::array<uint8_t, 16> iv;
        std::copy(ivb.begin(), ivb.end(), iv.begin());

        Ciphertext rnd = rnd_encrypt_with_iv(ks, m, iv);
        Bytes expect_rnd = refcrypto::aes128_cbc_encrypt(
            refcrypto::Bytes(ks.rnd_key.begin(), ks.rnd_key.end()), ivb, m);
        CHECK(Bytes(rnd.bytes.begin() + 16, rnd.bytes.end()) == expect_rnd);

        Ciphertext det = det_encrypt(ks, m);
        Bytes expect_det = refcrypto::aes128_cbc_encrypt(
            refcrypto::Bytes(ks.det_key.begin(), ks.det_key.end()),
            refcrypto::Bytes(16, 0), m);
        CHECK(det.bytes == expect_det);
    }
}

TEST_CASE("rnd_decrypt rejects malformed ciphertexts") {
    KeySet ks = derive_keys(master_of(0x55));
    Ciphertext ct = rnd_encrypt(ks, std::string("abc"));
    CHECK(to_string(rnd_decrypt(ks, ct)) == "abc");

    Ciphertext truncated = ct;
    truncated.bytes.resize(truncated.bytes.size() - 1);
    CHECK_THROWS_AS(rnd_decrypt(ks, truncated), CryptoError);

    Ciphertext iv_only = ct;
    iv_only.bytes.resize(16);
    CHECK_THROWS_AS(rnd_decrypt(ks, iv_only), CryptoError);

    Ciphertext wrong_scheme = det_encrypt(ks, std::string("abc"));
    CHECK_THROWS_AS(rnd_decrypt(ks, wrong_scheme), CryptoError);
}

TEST_CASE("every single-bit flip either fails padding or changes the plaintext") {
    KeySet ks = derive_keys(master_of(0x66));
    Bytes m = to_bytes("exactly sixteen!");  // 16 bytes -> data block + pad block
    std::array<uint8_t, 16> iv{0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08,
                               0x09, 0x0a, 0x0b, 0x0c, 0x0d, 0x0e, 0x0f, 0x10};
    Ciphertext ct = rnd_encrypt_with_iv(ks, m, iv);
    REQUIRE(ct.bytes.size() == 48);
    for (size_t byte = 0; byte < ct.bytes.size(); ++byte) {
        for (unsigned bit = 0; bit < 8; ++bit) {
            Ciphertext flipped = ct;
            flipped.bytes[byte] ^= static_cast<uint8_t>(1u << bit);
            try {
                Bytes got = rnd_decrypt(ks, flipped);
                CHECK(got != m);  // silent corruption must at least change the output
            } catch (const CryptoError&) {
                // padding failure: also acceptable, never a crash
            }
        }
    }
}

TEST_CASE("det is injective over random distinct plaintexts") {
    KeySet ks = derive_keys(master_of(0x77));
    std::mt19937_64 rng(7005);
    for (int trial = 0; trial < 10000; ++trial) {
        Bytes m1 = random_bytes(rng, 1 + rng() % 24);
        Bytes m2 = random_bytes(rng, 1 + rng() % 24);
        if (m1 == m2) continue;
        CHECK(det_encrypt(ks, m1).bytes != det_encrypt(ks, m2).bytes);
    }
}

TEST_CASE("det handles the empty plaintext and rejects bad lengths") {
    KeySet ks = derive_keys(master_of(0x88));
    CHECK(to_string(det_decrypt(ks, det_encrypt(ks, std::string("k1")))) == "k1");

    Ciphertext empty = det_encrypt(ks, std::string(""));
    CHECK(empty.bytes.size() == 16);  // one full padding block
    CHECK(det_decrypt(ks, empty).empty());

    Ciphertext bad = empty;
    bad.bytes.resize(15);
    CHECK_THROWS_AS(det_decrypt(ks, bad), CryptoError);
}

TEST_CASE("record_hmac reproduces RFC 4231 test case 2") {
    KeySet ks{};
    std::string key = "Jefe";
    std::copy(key.begin(), key.end(), ks.mac_key.begin());
    // record_hmac uses the full 32-byte mac key; RFC 4231 keys are shorter,
    // so call the underlying HMAC with the exact key instead.
    auto tag = hmac_sha256(std::span<const uint8_t>(
                               reinterpret_cast<const uint8_t*>(key.data()), key.size()),
                           std::string_view("what do ya want for nothing?"));
    CHECK(hex_encode(tag) ==
          "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843");

    auto ref = refcrypto::hmac_sha256(to_bytes(key),
                                      to_bytes("what do ya want for nothing?"));
    CHECK(std::equal(tag.begin(), tag.end(), ref.begin()));
}

TEST_CASE("record_hmac matches the reference and is input-sensitive") {
    KeySet ks = derive_keys(master_of(0x99));
    std::mt19937_64 rng(7006);
    Bytes canonical = random_bytes(rng, 256);
    HmacTag tag = record_hmac(ks, canonical);
    CHECK(record_hmac(ks, canonical) == tag);

    auto ref = refcrypto::hmac_sha256(
        refcrypto::Bytes(ks.mac_key.begin(), ks.mac_key.end()), canonical);
    CHECK(std::equal(tag.bytes.begin(), tag.bytes.end(), ref.begin()));

    for (int trial = 0; trial < 1000; ++trial) {
        Bytes mutated = canonical;
        size_t pos = rng() % mutated.size();
        uint8_t delta = static_cast<uint8_t>(1 + rng() % 255);
        mutated[pos] ^= delta;
        CHECK_FALSE(record_hmac(ks, mutated) == tag);
    }
}

TEST_CASE("hmac agrees with the reference on random keys and messages") {
    std::mt19937_64 rng(7007);
    for (int trial = 0; trial < 100; ++trial) {
        Bytes key = random_bytes(rng, 1 + rng() % 80);
        Bytes data = random_bytes(rng, rng() % 200);
        auto mine = hmac_sha256(key, data);
        auto ref = refcrypto::hmac_sha256(key, data);
        CHECK(std::equal(mine.begin(), mine.end(), ref.begin()));
    }
}

TEST_CASE("anonymize_name is stable, kind-separated and well-formed") {
    KeySet ks = derive_keys(master_of(0xaa));
    CHECK(anonymize_name(ks, NameKind::Table, "usertable") ==
          anonymize_name(ks, NameKind::Table, "usertable"));
    CHECK(anonymize_name(ks, NameKind::Table, "usertable") !=
          anonymize_name(ks, NameKind::Column, "usertable"));
    CHECK_THROWS_AS(anonymize_name(ks, NameKind::Table, ""), SchemaError);

    std::mt19937_64 rng(7008);
    const std::string alphabet = "abcdefghijklmnopqrstuvwxyz_0123456789";
    for (int trial = 0; trial < 200; ++trial) {
        std::string name(1 + rng() % 24, 'x');
        for (auto& c : name) c = alphabet[rng() % alphabet.size()];
        NameKind kind = rng() % 2 ? NameKind::Table : NameKind::Column;
        std::string ps = anonymize_name(ks, kind, name);
        REQUIRE(ps.size() == 33);
        CHECK(ps[0] == (kind == NameKind::Table ? 't' : 'c'));
        CHECK(ps.find_first_not_of("0123456789abcdef", 1) == std::string::npos);
    }
}

TEST_CASE("round trip holds up to 64 KiB plaintexts") {
    KeySet ks = derive_keys(master_of(0xbb));
    std::mt19937_64 rng(7009);
    for (size_t len : {size_t{1000}, size_t{65535}, size_t{65536}}) {
        Bytes m = random_bytes(rng, len);
        CHECK(rnd_decrypt(ks, rnd_encrypt(ks, m)) == m);
        CHECK(det_decrypt(ks, det_encrypt(ks, m)) == m);
    }
}
