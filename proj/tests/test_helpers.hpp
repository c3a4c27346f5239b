#pragma once

#include "csaseg/attention.hpp"
#include "csaseg/rng.hpp"
#include "csaseg/tensor.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace testutil {

inline csaseg::Tensor random_tensor(std::vector<int64_t> shape, uint64_t seed,
                                    uint64_t stream, float sd = 1.0f) {
    csaseg::Tensor t(std::move(shape));
    csaseg::rng::Stream s{seed, stream, 0};
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = sd * s.next_gaussian();
    return t;
}

inline csaseg::AttentionWeights random_weights(int64_t d, int64_t heads, uint64_t seed) {
    const float sd = 1.0f / std::sqrt(float(d));
    csaseg::AttentionWeights w;
    w.w_q = random_tensor({d, d}, seed, 1, sd);
    w.w_k = random_tensor({d, d}, seed, 2, sd);
    w.w_v = random_tensor({d, d}, seed, 3, sd);
    w.w_o = random_tensor({d, d}, seed, 4, sd);
    w.b_q = random_tensor({d}, seed, 5, 0.01f);
    w.b_k = random_tensor({d}, seed, 6, 0.01f);
    w.b_v = random_tensor({d}, seed, 7, 0.01f);
    w.b_o = random_tensor({d}, seed, 8, 0.01f);
    w.head_count = heads;
    return w;
}

inline double max_abs_diff(const csaseg::Tensor& a, const csaseg::Tensor& b) {
    if (a.shape() != b.shape()) return 1e30;
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, double(std::fabs(a.data()[i] - b.data()[i])));
    return m;
}

inline bool allclose(const csaseg::Tensor& a, const csaseg::Tensor& b, double tol) {
    return max_abs_diff(a, b) <= tol;
}

inline bool bitequal(const csaseg::Tensor& a, const csaseg::Tensor& b) {
    return a.shape() == b.shape() &&
           (a.numel() == 0 ||
            std::memcmp(a.data(), b.data(), size_t(a.numel()) * sizeof(float)) == 0);
}

// fresh scratch directory per test case; removed and recreated on reuse
inline std::filesystem::path temp_dir(const std::string& tag) {
    const auto dir = std::filesystem::temp_directory_path() / ("csaseg_test_" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

inline std::vector<uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::vector<uint8_t>((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
}

} // namespace testutil
