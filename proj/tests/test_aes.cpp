#include <gtest/gtest.h>

#include <random>

#include "aes_reference.hpp"
#include "nucasim/aes.hpp"
#include "nucasim/hex.hpp"

using namespace nucasim;

namespace {
aes::Block rand_block(std::mt19937_64& rng) {
    aes::Block b;
    for (auto& v : b) v = static_cast<uint8_t>(rng());
    return b;
}
}  // namespace

TEST(Aes, Fips197KnownAnswer) {
    auto key = from_hex_fixed<16>("000102030405060708090a0b0c0d0e0f");
    auto pt = from_hex_fixed<16>("00112233445566778899aabbccddeeff");
    auto ct = from_hex_fixed<16>("69c4e0d86a7b0430d8cdb78070b4c55a");

    // The independent oracle agrees with the published vector.
    EXPECT_EQ(aesref::encrypt(key, pt), ct);
    EXPECT_EQ(aesref::decrypt(key, ct), pt);

    auto ks = aes::AesKeySchedule::expand(key);
    EXPECT_EQ(aes::encrypt_block(ks, pt), ct);
    EXPECT_EQ(aes::decrypt_block(ks, ct), pt);
}

TEST(Aes, MatchesReferenceOnRandomInputs) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 300; i++) {
        aes::Block key = rand_block(rng), pt = rand_block(rng);
        auto ks = aes::AesKeySchedule::expand(key);
        aes::Block ct = aes::encrypt_block(ks, pt);
        EXPECT_EQ(ct, aesref::encrypt(key, pt));
        EXPECT_EQ(aes::decrypt_block(ks, ct), pt);
        EXPECT_EQ(aesref::decrypt(key, ct), pt);
    }
}

TEST(Aes, EncryptDecryptRoundTrip) {
    std::mt19937_64 rng(12);
    for (int i = 0; i < 1000; i++) {
        aes::Block key = rand_block(rng), pt = rand_block(rng);
        auto ks = aes::AesKeySchedule::expand(key);
        EXPECT_EQ(aes::decrypt_block(ks, aes::encrypt_block(ks, pt)), pt);
    }
}

TEST(Aes, DistinctKeysGiveDistinctCiphertexts) {
    std::mt19937_64 rng(13);
    aes::Block pt = rand_block(rng);
    std::set<std::string> seen;
    for (int i = 0; i < 1000; i++) {
        auto ks = aes::AesKeySchedule::expand(rand_block(rng));
        seen.insert(to_hex(aes::encrypt_block(ks, pt)));
    }
    EXPECT_EQ(seen.size(), 1000u);
}

TEST(Aes, FinalRoundKeyWordIsTheCipherKeyWord) {
    std::mt19937_64 rng(14);
    for (int i = 0; i < 20; i++) {
        aes::Block key = rand_block(rng);
        auto ks = aes::AesKeySchedule::expand(key);
        for (int w = 0; w < 4; w++) {
            uint32_t expect = aes::getu32(&key[static_cast<size_t>(4 * w)]);
            EXPECT_EQ(ks.last_round_key_word(w), expect);
            EXPECT_EQ(ks.dec[static_cast<size_t>(40 + w)], ks.enc[static_cast<size_t>(w)]);
        }
    }
}

// Each plaintext word must equal the four traced Td4 values packed MSB-first
// XOR the final round-key word; that identity is what key recovery inverts.
TEST(Aes, TraceIndicesExplainThePlaintext) {
    std::mt19937_64 rng(15);
    for (int i = 0; i < 200; i++) {
        aes::Block key = rand_block(rng), ct = rand_block(rng);
        auto ks = aes::AesKeySchedule::expand(key);
        aes::DecryptTrace tr = aes::decrypt_trace(ks, ct);
        EXPECT_EQ(tr.plaintext, aesref::decrypt(key, ct));
        for (int w = 0; w < 4; w++) {
            const auto& idx = tr.last_round[static_cast<size_t>(w)];
            uint32_t packed = aes::pack(aes::kTd4[idx[0]], aes::kTd4[idx[1]],
                                        aes::kTd4[idx[2]], aes::kTd4[idx[3]]);
            uint32_t word = aes::getu32(&tr.plaintext[static_cast<size_t>(4 * w)]);
            EXPECT_EQ(word, packed ^ ks.last_round_key_word(w));
        }
    }
}

TEST(Aes, TablesMatchTheirDefinitions) {
    // Td4 is the inverse S-box; the generated S-box matches the GF oracle.
    for (int x = 0; x < 256; x++) {
        EXPECT_EQ(aes::kSBox[static_cast<size_t>(x)], aesref::sbox(static_cast<uint8_t>(x)));
        EXPECT_EQ(aes::kTd4[aes::kSBox[static_cast<size_t>(x)]], static_cast<uint8_t>(x));
    }
}
