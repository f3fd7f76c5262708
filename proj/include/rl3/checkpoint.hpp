#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rl3/seqmodel.hpp"

namespace rl3 {

/// Checkpoint payload: a config header plus named f64 blobs. Written as a
/// versioned binary with a trailing content checksum that load() verifies.
struct Checkpoint {
    static constexpr uint32_t kFormatVersion = 1;

    std::map<std::string, std::string> header;       // config / metadata strings
    std::map<std::string, std::vector<double>> blobs;  // named tensors and state

    void set_header_int(const std::string& key, int64_t v) { header[key] = std::to_string(v); }
    int64_t header_int(const std::string& key) const;
    const std::string& header_str(const std::string& key) const;
    bool has_header(const std::string& key) const { return header.count(key) != 0; }

    /// Stores every tensor of `store` under "<prefix><tensor name>".
    void put_params(const std::string& prefix, const ParamStore& store);
    /// Restores into `store`; throws naming the first missing or
    /// size-mismatched tensor.
    void get_params(const std::string& prefix, ParamStore& store) const;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

}  // namespace rl3
