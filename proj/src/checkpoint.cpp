#include "rl3/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace rl3 {

namespace {

constexpr char kMagic[8] = {'R', 'L', '3', 'C', 'K', 'P', 'T', '\0'};

void write_u32(std::string& buf, uint32_t v) { buf.append(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::string& buf, uint64_t v) { buf.append(reinterpret_cast<const char*>(&v), 8); }
void write_str(std::string& buf, const std::string& s) {
    write_u32(buf, static_cast<uint32_t>(s.size()));
    buf.append(s);
}

class Reader {
public:
    explicit Reader(std::string data) : data_(std::move(data)) {}
    uint32_t u32() { return read<uint32_t>(); }
    uint64_t u64() { return read<uint64_t>(); }
    std::string str() {
        const uint32_t n = u32();
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    void f64s(std::vector<double>& out, size_t n) {
        need(n * 8);
        out.resize(n);
        std::memcpy(out.data(), data_.data() + pos_, n * 8);
        pos_ += n * 8;
    }
    size_t remaining() const { return data_.size() - pos_; }

private:
    template <class T>
    T read() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void need(size_t n) const {
        if (pos_ + n > data_.size()) fail("truncated checkpoint file");
    }
    std::string data_;
    size_t pos_ = 0;
};

}  // namespace

int64_t Checkpoint::header_int(const std::string& key) const {
    return std::stoll(header_str(key));
}

const std::string& Checkpoint::header_str(const std::string& key) const {
    auto it = header.find(key);
    if (it == header.end()) fail("checkpoint header missing key: " + key);
    return it->second;
}

void Checkpoint::put_params(const std::string& prefix, const ParamStore& store) {
    for (const auto& info : store.infos()) {
        const double* p = store.flat().data() + info.offset;
        blobs[prefix + info.name] = std::vector<double>(p, p + info.size);
    }
}

void Checkpoint::get_params(const std::string& prefix, ParamStore& store) const {
    for (const auto& info : store.infos()) {
        auto it = blobs.find(prefix + info.name);
        if (it == blobs.end()) fail("checkpoint missing tensor: " + prefix + info.name);
        if (it->second.size() != info.size)
            fail("checkpoint tensor " + prefix + info.name + " has " +
                 std::to_string(it->second.size()) + " values, expected " +
                 std::to_string(info.size));
        std::memcpy(store.flat().data() + info.offset, it->second.data(), info.size * 8);
    }
}

void Checkpoint::save(const std::string& path) const {
    std::string buf;
    buf.append(kMagic, sizeof(kMagic));
    write_u32(buf, kFormatVersion);
    write_u32(buf, static_cast<uint32_t>(header.size()));
    for (const auto& [k, v] : header) {
        write_str(buf, k);
        write_str(buf, v);
    }
    write_u32(buf, static_cast<uint32_t>(blobs.size()));
    for (const auto& [name, data] : blobs) {
        write_str(buf, name);
        write_u64(buf, data.size());
        buf.append(reinterpret_cast<const char*>(data.data()), data.size() * 8);
    }
    Fnv1a checksum;
    checksum.add_bytes(buf.data(), buf.size());
    write_u64(buf, checksum.value());

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot write checkpoint: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) fail("checkpoint write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open checkpoint: " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (data.size() < sizeof(kMagic) + 12) fail("checkpoint too small: " + path);
    if (std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0)
        fail("not a checkpoint file: " + path);

    uint64_t stored_sum;
    std::memcpy(&stored_sum, data.data() + data.size() - 8, 8);
    Fnv1a checksum;
    checksum.add_bytes(data.data(), data.size() - 8);
    if (checksum.value() != stored_sum) fail("checkpoint checksum mismatch: " + path);

    Reader r(data.substr(sizeof(kMagic), data.size() - sizeof(kMagic) - 8));
    const uint32_t version = r.u32();
    if (version != kFormatVersion)
        fail("unsupported checkpoint format version " + std::to_string(version));

    Checkpoint ck;
    const uint32_t nh = r.u32();
    for (uint32_t i = 0; i < nh; ++i) {
        std::string k = r.str();
        ck.header[k] = r.str();
    }
    const uint32_t nb = r.u32();
    for (uint32_t i = 0; i < nb; ++i) {
        std::string name = r.str();
        const uint64_t n = r.u64();
        r.f64s(ck.blobs[name], n);
    }
    return ck;
}

}  // namespace rl3
