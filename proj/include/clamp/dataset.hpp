#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "clamp/common.hpp"

namespace clamp::data {

// Binary dataset file, all little-endian:
//   magic "CLMP" | format_version u32 | n u64 | d u16 | num_classes u16
// followed by n*d f32 row-major features and n u16 labels. The header is
// exactly 20 bytes, so the file length is 20 + 4*n*d + 2*n.
inline constexpr char kDatasetMagic[4] = {'C', 'L', 'M', 'P'};
inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::size_t kDatasetHeaderBytes = 20;

struct Dataset {
    std::size_t d = 0;
    std::uint16_t num_classes = 0;
    std::vector<float> features;        // n*d
    std::vector<std::uint16_t> labels;  // n

    std::size_t size() const { return labels.size(); }

    std::span<const float> row(std::size_t i) const { return {features.data() + i * d, d}; }

    void validate() const {
        if (d == 0) throw ValidationError("dataset: d must be positive");
        if (features.size() != labels.size() * d)
            throw ValidationError("dataset: feature/label count mismatch");
        for (auto y : labels)
            if (y >= num_classes) throw ValidationError("dataset: label outside num_classes");
    }
};

inline void write_dataset(const std::string& path, const Dataset& ds) {
    ds.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open dataset for writing: " + path);
    out.write(kDatasetMagic, 4);
    const std::uint32_t version = kDatasetVersion;
    const std::uint64_t n = ds.size();
    const std::uint16_t d16 = static_cast<std::uint16_t>(ds.d);
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&n), 8);
    out.write(reinterpret_cast<const char*>(&d16), 2);
    out.write(reinterpret_cast<const char*>(&ds.num_classes), 2);
    out.write(reinterpret_cast<const char*>(ds.features.data()),
              static_cast<std::streamsize>(ds.features.size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(ds.labels.data()),
              static_cast<std::streamsize>(ds.labels.size() * sizeof(std::uint16_t)));
    if (!out) throw IoError("dataset write failed: " + path);
}

inline Dataset read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset for reading: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kDatasetMagic, 4) != 0)
        throw IoError("dataset: bad magic in " + path);
    std::uint32_t version;
    std::uint64_t n;
    std::uint16_t d16, num_classes;
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&n), 8);
    in.read(reinterpret_cast<char*>(&d16), 2);
    in.read(reinterpret_cast<char*>(&num_classes), 2);
    if (!in) throw IoError("dataset: truncated header in " + path);
    if (version != kDatasetVersion)
        throw IoError("dataset: unsupported version " + std::to_string(version));

    Dataset ds;
    ds.d = d16;
    ds.num_classes = num_classes;
    ds.features.resize(static_cast<std::size_t>(n) * d16);
    ds.labels.resize(static_cast<std::size_t>(n));
    in.read(reinterpret_cast<char*>(ds.features.data()),
            static_cast<std::streamsize>(ds.features.size() * sizeof(float)));
    in.read(reinterpret_cast<char*>(ds.labels.data()),
            static_cast<std::streamsize>(ds.labels.size() * sizeof(std::uint16_t)));
    if (!in) throw IoError("dataset: truncated payload in " + path);
    char extra;
    if (in.read(&extra, 1)) throw IoError("dataset: trailing bytes in " + path);
    in.clear();
    ds.validate();
    return ds;
}

// Deterministic synthetic benchmark: isotropic unit-variance Gaussian
// blobs at mutually orthogonal centers scaled by `separation`, so every
// pair of centers is separation*sqrt(2) apart.
inline Dataset gen_blobs(std::size_t classes, std::size_t per_class, std::size_t d,
                         double separation, std::uint64_t seed) {
    if (classes < 2) throw ValidationError("gen_blobs: need >= 2 classes");
    if (classes > d) throw ValidationError("gen_blobs: need d >= classes for orthogonal centers");
    if (per_class < 1) throw ValidationError("gen_blobs: need >= 1 point per class");

    Rng rng(mix_seed(seed, 0x626c6f62ULL));
    std::normal_distribution<double> g(0.0, 1.0);

    // Random orthonormal center directions via Gram-Schmidt.
    std::vector<std::vector<double>> centers;
    while (centers.size() < classes) {
        std::vector<double> v(d);
        for (auto& x : v) x = g(rng);
        for (const auto& c : centers) {
            const double p = dot(v, c);
            for (std::size_t i = 0; i < d; ++i) v[i] -= p * c[i];
        }
        const double nrm = norm2(v);
        if (nrm < 1e-6) continue;
        for (auto& x : v) x /= nrm;
        centers.push_back(std::move(v));
    }

    Dataset ds;
    ds.d = d;
    ds.num_classes = static_cast<std::uint16_t>(classes);
    ds.features.reserve(classes * per_class * d);
    ds.labels.reserve(classes * per_class);
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t p = 0; p < per_class; ++p) {
            for (std::size_t i = 0; i < d; ++i)
                ds.features.push_back(static_cast<float>(separation * centers[c][i] + g(rng)));
            ds.labels.push_back(static_cast<std::uint16_t>(c));
        }
    ds.validate();
    return ds;
}

}  // namespace clamp::data
