#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "incant/errors.hpp"
#include "incant/mat.hpp"

namespace incant {

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new()) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1)
            throw std::runtime_error("sha256 init failed");
    }
    ~Sha256() { EVP_MD_CTX_free(ctx_); }
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(const void* data, size_t len) {
        if (EVP_DigestUpdate(ctx_, data, len) != 1)
            throw std::runtime_error("sha256 update failed");
    }

    void update(const std::string& s) { update(s.data(), s.size()); }

    template <typename S>
    void update_mat(const Mat<S>& m) {
        update(&m.rows, sizeof(m.rows));
        update(&m.cols, sizeof(m.cols));
        // hash as doubles so f32/f64 weight bytes hash by value
        for (S x : m.v) {
            double d = static_cast<double>(x);
            update(&d, sizeof(d));
        }
    }

    std::string hex() {
        unsigned char buf[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx_, buf, &len) != 1)
            throw std::runtime_error("sha256 final failed");
        static const char* digits = "0123456789abcdef";
        std::string out;
        out.reserve(2 * len);
        for (unsigned int i = 0; i < len; ++i) {
            out.push_back(digits[buf[i] >> 4]);
            out.push_back(digits[buf[i] & 0xf]);
        }
        return out;
    }

private:
    EVP_MD_CTX* ctx_;
};

inline std::string sha256_hex(const void* data, size_t len) {
    Sha256 h;
    h.update(data, len);
    return h.hex();
}

inline std::string sha256_hex(const std::string& s) { return sha256_hex(s.data(), s.size()); }

inline std::string sha256_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw input_error("cannot open file for hashing: " + path);
    Sha256 h;
    char buf[65536];
    while (f) {
        f.read(buf, sizeof(buf));
        h.update(buf, static_cast<size_t>(f.gcount()));
    }
    return h.hex();
}

}  // namespace incant
