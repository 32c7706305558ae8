#pragma once

#include <array>
#include <cstdint>

namespace nucasim::aes {

// AES-128, T-table form (the fully unrolled OpenSSL-style inverse cipher).
// Round keys are 44 32-bit words; the decryption schedule is the encryption
// schedule with round groups reversed and InvMixColumns applied to the
// middle rounds, so decryption consumes its keys forward.

inline constexpr std::array<uint8_t, 256> kSBox = {
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16};

inline constexpr std::array<uint8_t, 256> kInvSBox = [] {
    std::array<uint8_t, 256> inv{};
    for (int i = 0; i < 256; i++) inv[kSBox[static_cast<size_t>(i)]] = static_cast<uint8_t>(i);
    return inv;
}();

constexpr uint8_t gmul(uint8_t a, uint8_t b) {
    uint8_t p = 0;
    for (int i = 0; i < 8; i++) {
        if (b & 1) p ^= a;
        bool hi = a & 0x80;
        a = static_cast<uint8_t>(a << 1);
        if (hi) a ^= 0x1b;
        b >>= 1;
    }
    return p;
}

constexpr uint32_t pack(uint8_t b0, uint8_t b1, uint8_t b2, uint8_t b3) {
    return (static_cast<uint32_t>(b0) << 24) | (static_cast<uint32_t>(b1) << 16) |
           (static_cast<uint32_t>(b2) << 8) | b3;
}

constexpr uint32_t rotr8(uint32_t w) { return (w >> 8) | (w << 24); }

inline constexpr std::array<std::array<uint32_t, 256>, 4> kTe = [] {
    std::array<std::array<uint32_t, 256>, 4> t{};
    for (int i = 0; i < 256; i++) {
        uint8_t s = kSBox[static_cast<size_t>(i)];
        uint32_t w = pack(gmul(s, 2), s, s, gmul(s, 3));
        for (int k = 0; k < 4; k++) {
            t[static_cast<size_t>(k)][static_cast<size_t>(i)] = w;
            w = rotr8(w);
        }
    }
    return t;
}();

inline constexpr std::array<std::array<uint32_t, 256>, 4> kTd = [] {
    std::array<std::array<uint32_t, 256>, 4> t{};
    for (int i = 0; i < 256; i++) {
        uint8_t s = kInvSBox[static_cast<size_t>(i)];
        uint32_t w = pack(gmul(s, 14), gmul(s, 9), gmul(s, 13), gmul(s, 11));
        for (int k = 0; k < 4; k++) {
            t[static_cast<size_t>(k)][static_cast<size_t>(i)] = w;
            w = rotr8(w);
        }
    }
    return t;
}();

/// The 256-byte final-round table: the inverse S-box, spanning exactly four
/// 64-byte cache lines when line-aligned.
inline constexpr const std::array<uint8_t, 256>& kTd4 = kInvSBox;

using Block = std::array<uint8_t, 16>;

inline uint32_t getu32(const uint8_t* p) {
    return pack(p[0], p[1], p[2], p[3]);
}

inline void putu32(uint8_t* p, uint32_t w) {
    p[0] = static_cast<uint8_t>(w >> 24);
    p[1] = static_cast<uint8_t>(w >> 16);
    p[2] = static_cast<uint8_t>(w >> 8);
    p[3] = static_cast<uint8_t>(w);
}

/// FIPS-197 expansion plus the reversed/InvMixColumns schedule used by the
/// T-table inverse cipher.
struct AesKeySchedule {
    std::array<uint8_t, 16> key{};
    std::array<uint32_t, 44> enc{};   // rounds 0..10, consumed forward by encryption
    std::array<uint32_t, 44> dec{};   // consumed forward by decryption

    static AesKeySchedule expand(const Block& key) {
        AesKeySchedule ks;
        ks.key = key;
        for (int i = 0; i < 4; i++) ks.enc[static_cast<size_t>(i)] = getu32(&key[static_cast<size_t>(4 * i)]);
        uint32_t rcon = 1;
        for (int i = 4; i < 44; i++) {
            uint32_t t = ks.enc[static_cast<size_t>(i - 1)];
            if (i % 4 == 0) {
                t = (t << 8) | (t >> 24);  // RotWord
                t = pack(kSBox[(t >> 24) & 0xff], kSBox[(t >> 16) & 0xff],
                         kSBox[(t >> 8) & 0xff], kSBox[t & 0xff]);
                t ^= static_cast<uint32_t>(rcon) << 24;
                rcon = gmul(static_cast<uint8_t>(rcon), 2);
            }
            ks.enc[static_cast<size_t>(i)] = ks.enc[static_cast<size_t>(i - 4)] ^ t;
        }
        // Reverse round groups, then InvMixColumns on rounds 1..9.
        for (int r = 0; r <= 10; r++)
            for (int w = 0; w < 4; w++)
                ks.dec[static_cast<size_t>(4 * r + w)] = ks.enc[static_cast<size_t>(4 * (10 - r) + w)];
        for (int i = 4; i < 40; i++) {
            uint32_t w = ks.dec[static_cast<size_t>(i)];
            uint8_t a = static_cast<uint8_t>(w >> 24), b = static_cast<uint8_t>(w >> 16),
                    c = static_cast<uint8_t>(w >> 8), d = static_cast<uint8_t>(w);
            ks.dec[static_cast<size_t>(i)] =
                pack(static_cast<uint8_t>(gmul(a, 14) ^ gmul(b, 11) ^ gmul(c, 13) ^ gmul(d, 9)),
                     static_cast<uint8_t>(gmul(a, 9) ^ gmul(b, 14) ^ gmul(c, 11) ^ gmul(d, 13)),
                     static_cast<uint8_t>(gmul(a, 13) ^ gmul(b, 9) ^ gmul(c, 14) ^ gmul(d, 11)),
                     static_cast<uint8_t>(gmul(a, 11) ^ gmul(b, 13) ^ gmul(c, 9) ^ gmul(d, 14)));
        }
        return ks;
    }

    /// Final AddRoundKey word consumed by decryption output word `w`;
    /// equals word `w` of the original cipher key.
    uint32_t last_round_key_word(int w) const { return dec[static_cast<size_t>(40 + w)]; }
};

inline Block encrypt_block(const AesKeySchedule& ks, const Block& in) {
    uint32_t s0 = getu32(&in[0]) ^ ks.enc[0];
    uint32_t s1 = getu32(&in[4]) ^ ks.enc[1];
    uint32_t s2 = getu32(&in[8]) ^ ks.enc[2];
    uint32_t s3 = getu32(&in[12]) ^ ks.enc[3];
    for (int r = 1; r <= 9; r++) {
        const uint32_t* rk = &ks.enc[static_cast<size_t>(4 * r)];
        uint32_t t0 = kTe[0][s0 >> 24] ^ kTe[1][(s1 >> 16) & 0xff] ^ kTe[2][(s2 >> 8) & 0xff] ^
                      kTe[3][s3 & 0xff] ^ rk[0];
        uint32_t t1 = kTe[0][s1 >> 24] ^ kTe[1][(s2 >> 16) & 0xff] ^ kTe[2][(s3 >> 8) & 0xff] ^
                      kTe[3][s0 & 0xff] ^ rk[1];
        uint32_t t2 = kTe[0][s2 >> 24] ^ kTe[1][(s3 >> 16) & 0xff] ^ kTe[2][(s0 >> 8) & 0xff] ^
                      kTe[3][s1 & 0xff] ^ rk[2];
        uint32_t t3 = kTe[0][s3 >> 24] ^ kTe[1][(s0 >> 16) & 0xff] ^ kTe[2][(s1 >> 8) & 0xff] ^
                      kTe[3][s2 & 0xff] ^ rk[3];
        s0 = t0; s1 = t1; s2 = t2; s3 = t3;
    }
    const uint32_t* rk = &ks.enc[40];
    Block out;
    auto last = [&](uint32_t a, uint32_t b, uint32_t c, uint32_t d, uint32_t k) {
        return pack(kSBox[a >> 24], kSBox[(b >> 16) & 0xff], kSBox[(c >> 8) & 0xff],
                    kSBox[d & 0xff]) ^ k;
    };
    putu32(&out[0], last(s0, s1, s2, s3, rk[0]));
    putu32(&out[4], last(s1, s2, s3, s0, rk[1]));
    putu32(&out[8], last(s2, s3, s0, s1, rk[2]));
    putu32(&out[12], last(s3, s0, s1, s2, rk[3]));
    return out;
}

/// One table lookup of the inverse cipher: which table and which index.
struct TableRef {
    uint8_t table = 0;  // 0..3 -> Td0..Td3, 4 -> Td4
    uint8_t index = 0;
};

/// Every table access the unrolled decryption performs, in program order,
/// plus the resulting plaintext. The last round is kept per output word
/// because the attack times exactly one word's four Td4 lookups.
struct DecryptTrace {
    Block plaintext{};
    // main_rounds[r][w][k]: round r+1, output word w, k-th lookup
    std::array<std::array<std::array<TableRef, 4>, 4>, 9> main_rounds{};
    // last_round[w][k]: Td4 index feeding byte k (MSB first) of output word w
    std::array<std::array<uint8_t, 4>, 4> last_round{};
};

inline DecryptTrace decrypt_trace(const AesKeySchedule& ks, const Block& in) {
    DecryptTrace tr;
    uint32_t s[4] = {getu32(&in[0]) ^ ks.dec[0], getu32(&in[4]) ^ ks.dec[1],
                     getu32(&in[8]) ^ ks.dec[2], getu32(&in[12]) ^ ks.dec[3]};
    for (int r = 1; r <= 9; r++) {
        const uint32_t* rk = &ks.dec[static_cast<size_t>(4 * r)];
        uint32_t t[4];
        for (int w = 0; w < 4; w++) {
            uint8_t i0 = static_cast<uint8_t>(s[w] >> 24);
            uint8_t i1 = static_cast<uint8_t>(s[(w + 3) % 4] >> 16);
            uint8_t i2 = static_cast<uint8_t>(s[(w + 2) % 4] >> 8);
            uint8_t i3 = static_cast<uint8_t>(s[(w + 1) % 4]);
            tr.main_rounds[static_cast<size_t>(r - 1)][static_cast<size_t>(w)] = {
                TableRef{0, i0}, TableRef{1, i1}, TableRef{2, i2}, TableRef{3, i3}};
            t[w] = kTd[0][i0] ^ kTd[1][i1] ^ kTd[2][i2] ^ kTd[3][i3] ^ rk[w];
        }
        for (int w = 0; w < 4; w++) s[w] = t[w];
    }
    const uint32_t* rk = &ks.dec[40];
    for (int w = 0; w < 4; w++) {
        uint8_t i0 = static_cast<uint8_t>(s[w] >> 24);
        uint8_t i1 = static_cast<uint8_t>(s[(w + 3) % 4] >> 16);
        uint8_t i2 = static_cast<uint8_t>(s[(w + 2) % 4] >> 8);
        uint8_t i3 = static_cast<uint8_t>(s[(w + 1) % 4]);
        tr.last_round[static_cast<size_t>(w)] = {i0, i1, i2, i3};
        uint32_t word = pack(kTd4[i0], kTd4[i1], kTd4[i2], kTd4[i3]) ^ rk[w];
        putu32(&tr.plaintext[static_cast<size_t>(4 * w)], word);
    }
    return tr;
}

inline Block decrypt_block(const AesKeySchedule& ks, const Block& in) {
    return decrypt_trace(ks, in).plaintext;
}

}  // namespace nucasim::aes
