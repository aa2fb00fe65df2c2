#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lad/core/errors.hpp"
#include "lad/core/nn.hpp"
#include "lad/volume.hpp"

// Dataset containers and checkpoint blobs. A dataset directory holds a text
// `manifest` (key=value) plus vol_%04d.raw (little-endian float32) and/or
// msk_%04d.raw (uint8), both D-major then H then W. All writes go through a
// temp file + rename so a crashed run never leaves a torn artifact.

namespace lad::io {

namespace fs = std::filesystem;

inline void atomic_write(const fs::path& path, const std::string& bytes) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open for write: " + tmp.string());
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw IoError("short write: " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path.string());
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

// ----------------------------------------------------------- key=value files

using KvMap = std::map<std::string, std::string>;

inline std::string kv_serialize(const KvMap& kv) {
    std::ostringstream os;
    for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
    return os.str();
}

inline KvMap kv_parse(const std::string& text) {
    KvMap kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError("bad key=value line: " + line);
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

inline KvMap kv_load(const fs::path& path) { return kv_parse(read_file(path)); }
inline void kv_save(const fs::path& path, const KvMap& kv) { atomic_write(path, kv_serialize(kv)); }

inline const std::string& kv_get(const KvMap& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw IoError("missing key '" + key + "'");
    return it->second;
}

// "AxBxC" <-> three ints (axis order D,H,W)
inline std::string shape_str(const std::array<int, 3>& s) {
    return std::to_string(s[0]) + "x" + std::to_string(s[1]) + "x" + std::to_string(s[2]);
}
inline std::array<int, 3> parse_shape(const std::string& s) {
    std::array<int, 3> out{};
    char sep1 = 0, sep2 = 0;
    std::istringstream is(s);
    if (!(is >> out[0] >> sep1 >> out[1] >> sep2 >> out[2]) || sep1 != 'x' || sep2 != 'x')
        throw ConfigError("bad shape '" + s + "', expected DxHxW");
    return out;
}
inline std::string spacing_str(const std::array<double, 3>& s) {
    std::ostringstream os;
    os << s[0] << "x" << s[1] << "x" << s[2];
    return os.str();
}
inline std::array<double, 3> parse_spacing(const std::string& s) {
    std::array<double, 3> out{};
    char sep1 = 0, sep2 = 0;
    std::istringstream is(s);
    if (!(is >> out[0] >> sep1 >> out[1] >> sep2 >> out[2]) || sep1 != 'x' || sep2 != 'x')
        throw ConfigError("bad spacing '" + s + "'");
    return out;
}

// ------------------------------------------------------------------ datasets

inline std::string sample_name(const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%04d.raw", prefix, i);
    return buf;
}

struct DatasetMeta {
    int count = 0;
    std::array<int, 3> shape{};
    std::array<double, 3> spacing{1, 1, 1};
    std::string dtype = "float32";
};

inline DatasetMeta read_manifest(const fs::path& dir) {
    KvMap kv = kv_load(dir / "manifest");
    DatasetMeta m;
    m.count = std::stoi(kv_get(kv, "count"));
    m.shape = parse_shape(kv_get(kv, "shape"));
    m.spacing = parse_spacing(kv_get(kv, "spacing"));
    m.dtype = kv_get(kv, "dtype");
    return m;
}

inline void write_manifest(const fs::path& dir, const DatasetMeta& m) {
    fs::create_directories(dir);
    KvMap kv{{"count", std::to_string(m.count)},
             {"shape", shape_str(m.shape)},
             {"spacing", spacing_str(m.spacing)},
             {"dtype", m.dtype}};
    kv_save(dir / "manifest", kv);
}

inline void write_volume(const fs::path& dir, int index, const Volume& v) {
    std::string bytes(reinterpret_cast<const char*>(v.data.data()), v.data.size() * sizeof(float));
    atomic_write(dir / sample_name("vol", index), bytes);
}

inline void write_mask(const fs::path& dir, int index, const LabelMask& m) {
    std::string bytes(reinterpret_cast<const char*>(m.data.data()), m.data.size());
    atomic_write(dir / sample_name("msk", index), bytes);
}

inline Volume read_volume(const fs::path& dir, int index, const DatasetMeta& meta) {
    std::string bytes = read_file(dir / sample_name("vol", index));
    Volume v(meta.shape[0], meta.shape[1], meta.shape[2]);
    v.spacing = meta.spacing;
    v.id = sample_name("vol", index);
    if (bytes.size() != v.data.size() * sizeof(float))
        throw IoError("volume " + std::to_string(index) + ": size mismatch vs manifest shape");
    std::memcpy(v.data.data(), bytes.data(), bytes.size());
    return v;
}

inline LabelMask read_mask(const fs::path& dir, int index, const DatasetMeta& meta) {
    std::string bytes = read_file(dir / sample_name("msk", index));
    LabelMask m(meta.shape[0], meta.shape[1], meta.shape[2]);
    if (bytes.size() != m.data.size()) throw IoError("mask " + std::to_string(index) + ": size mismatch");
    std::memcpy(m.data.data(), bytes.data(), bytes.size());
    return m;
}

inline bool has_volumes(const fs::path& dir) { return fs::exists(dir / sample_name("vol", 0)); }
inline bool has_masks(const fs::path& dir) { return fs::exists(dir / sample_name("msk", 0)); }

// -------------------------------------------------------------- param blobs

// Binary layout: u32 count, then per tensor: u16 name length, name bytes,
// u8 rank, i32 dims..., f32 data. Loading matches strictly by name and shape.
inline std::string serialize_params(const nn::NamedParams& params) {
    std::ostringstream os(std::ios::binary);
    auto put = [&os](const void* p, size_t n) { os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); };
    std::uint32_t count = static_cast<std::uint32_t>(params.size());
    put(&count, 4);
    for (const auto& [name, p] : params) {
        std::uint16_t len = static_cast<std::uint16_t>(name.size());
        put(&len, 2);
        put(name.data(), name.size());
        std::uint8_t rank = static_cast<std::uint8_t>(p->val.rank());
        put(&rank, 1);
        for (int d : p->val.shape) {
            std::int32_t dd = d;
            put(&dd, 4);
        }
        put(p->val.v.data(), p->val.v.size() * sizeof(float));
    }
    return os.str();
}

inline void deserialize_params(const std::string& bytes, const nn::NamedParams& params) {
    size_t pos = 0;
    auto get = [&](void* p, size_t n) {
        if (pos + n > bytes.size()) throw IoError("param blob truncated");
        std::memcpy(p, bytes.data() + pos, n);
        pos += n;
    };
    std::uint32_t count = 0;
    get(&count, 4);
    if (count != params.size())
        throw IoError("param blob holds " + std::to_string(count) + " tensors, expected " + std::to_string(params.size()));
    for (const auto& [name, p] : params) {
        std::uint16_t len = 0;
        get(&len, 2);
        std::string got(len, '\0');
        get(got.data(), len);
        if (got != name) throw IoError("param blob name mismatch: '" + got + "' vs '" + name + "'");
        std::uint8_t rank = 0;
        get(&rank, 1);
        if (rank != p->val.rank()) throw IoError("param '" + name + "': rank mismatch");
        for (int d : p->val.shape) {
            std::int32_t dd = 0;
            get(&dd, 4);
            if (dd != d) throw IoError("param '" + name + "': shape mismatch");
        }
        get(p->val.v.data(), p->val.v.size() * sizeof(float));
    }
}

inline std::string serialize_adam(const nn::Adam& opt) {
    std::ostringstream os(std::ios::binary);
    auto put = [&os](const void* p, size_t n) { os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); };
    std::int64_t sc = opt.step_count;
    put(&sc, 8);
    std::uint32_t count = static_cast<std::uint32_t>(opt.params.size());
    put(&count, 4);
    for (size_t i = 0; i < opt.params.size(); ++i) {
        put(opt.m[i].v.data(), opt.m[i].v.size() * sizeof(float));
        put(opt.v[i].v.data(), opt.v[i].v.size() * sizeof(float));
    }
    return os.str();
}

inline void deserialize_adam(const std::string& bytes, nn::Adam& opt) {
    size_t pos = 0;
    auto get = [&](void* p, size_t n) {
        if (pos + n > bytes.size()) throw IoError("adam blob truncated");
        std::memcpy(p, bytes.data() + pos, n);
        pos += n;
    };
    std::int64_t sc = 0;
    get(&sc, 8);
    opt.step_count = sc;
    std::uint32_t count = 0;
    get(&count, 4);
    if (count != opt.params.size()) throw IoError("adam blob param count mismatch");
    for (size_t i = 0; i < opt.params.size(); ++i) {
        get(opt.m[i].v.data(), opt.m[i].v.size() * sizeof(float));
        get(opt.v[i].v.data(), opt.v[i].v.size() * sizeof(float));
    }
}

inline std::string rng_state_str(const Rng& rng) {
    std::ostringstream os;
    auto st = rng.state();
    os << std::hex << st[0] << ":" << st[1] << ":" << st[2] << ":" << st[3];
    return os.str();
}

inline Rng rng_from_state_str(const std::string& s) {
    std::array<std::uint64_t, 4> st{};
    char c = 0;
    std::istringstream is(s);
    is >> std::hex >> st[0] >> c >> st[1] >> c >> st[2] >> c >> st[3];
    if (!is) throw IoError("bad rng state string: " + s);
    Rng r(0);
    r.set_state(st);
    return r;
}

}  // namespace lad::io
