#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "crackclf/common.hpp"
#include "crackclf/tensor.hpp"

namespace crackclf {

// Named-tensor archive, the on-disk format for checkpoints and map dumps.
//
//   bytes 0..7    magic "CCLFTENS"
//   bytes 8..11   format version, little-endian u32 (currently 1)
//   bytes 12..15  reserved, zero
//   bytes 16..23  JSON header length, little-endian u64
//   ...           JSON header, then zero padding to an 8-byte boundary
//   ...           payload: tensor data, little-endian, each 8-byte aligned
//
// Header: {"meta": <object>, "tensors": [{"name", "dtype", "shape",
// "offset", "nbytes"}...]} with offsets relative to the payload start.
// Dtypes: f64 (native), f32 (narrowed), u8 (rounded and clamped to 0..255).

constexpr uint32_t kContainerVersion = 1;
inline constexpr char kContainerMagic[8] = {'C', 'C', 'L', 'F', 'T', 'E', 'N', 'S'};

enum class Dtype { F64, F32, U8 };

inline const char* dtype_name(Dtype d) {
    switch (d) {
        case Dtype::F64: return "f64";
        case Dtype::F32: return "f32";
        case Dtype::U8: return "u8";
    }
    throw ContractViolation("unreachable dtype");
}

inline Dtype dtype_from_name(const std::string& s) {
    if (s == "f64") return Dtype::F64;
    if (s == "f32") return Dtype::F32;
    if (s == "u8") return Dtype::U8;
    throw IoError("unknown dtype '" + s + "' in tensor container");
}

inline int64_t dtype_size(Dtype d) {
    switch (d) {
        case Dtype::F64: return 8;
        case Dtype::F32: return 4;
        case Dtype::U8: return 1;
    }
    throw ContractViolation("unreachable dtype");
}

struct NamedTensor {
    std::string name;
    Dtype dtype = Dtype::F64;
    Tensor value;
};

class Container {
  public:
    nlohmann::json meta = nlohmann::json::object();

    void add(const std::string& name, Tensor value, Dtype dtype = Dtype::F64) {
        expect(!name.empty(), "tensor name must not be empty");
        expect(find(name) == nullptr, "duplicate tensor name '" + name + "'");
        tensors_.push_back({name, dtype, std::move(value)});
    }

    const std::vector<NamedTensor>& tensors() const { return tensors_; }

    const Tensor* find(const std::string& name) const {
        for (const auto& t : tensors_)
            if (t.name == name) return &t.value;
        return nullptr;
    }

    const Tensor& at(const std::string& name) const {
        const Tensor* t = find(name);
        if (!t) throw IoError("container has no tensor named '" + name + "'");
        return *t;
    }

    void save(const std::string& path) const {
        nlohmann::json header;
        header["meta"] = meta;
        header["tensors"] = nlohmann::json::array();
        int64_t offset = 0;
        for (const auto& t : tensors_) {
            const int64_t nbytes = t.value.numel() * dtype_size(t.dtype);
            header["tensors"].push_back({{"name", t.name},
                                         {"dtype", dtype_name(t.dtype)},
                                         {"shape", t.value.shape()},
                                         {"offset", offset},
                                         {"nbytes", nbytes}});
            offset = align8(offset + nbytes);
        }
        const std::string json_text = header.dump();

        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot open container for writing: " + path);
        out.write(kContainerMagic, 8);
        write_u32(out, kContainerVersion);
        write_u32(out, 0);
        write_u64(out, static_cast<uint64_t>(json_text.size()));
        out.write(json_text.data(), static_cast<std::streamsize>(json_text.size()));
        pad_to8(out, 24 + static_cast<int64_t>(json_text.size()));

        int64_t written = 0;
        for (const auto& t : tensors_) {
            written += write_payload(out, t);
            const int64_t aligned = align8(written);
            for (; written < aligned; ++written) out.put('\0');
        }
        if (!out) throw IoError("failed writing container: " + path);
    }

    static Container load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open container: " + path);

        char magic[8];
        in.read(magic, 8);
        if (!in || std::memcmp(magic, kContainerMagic, 8) != 0)
            throw IoError(path + " is not a tensor container (bad magic)");
        const uint32_t version = read_u32(in, path);
        if (version != kContainerVersion)
            throw IoError(path + ": unsupported container version " + std::to_string(version));
        read_u32(in, path);  // reserved
        const uint64_t json_len = read_u64(in, path);

        std::string json_text(json_len, '\0');
        in.read(json_text.data(), static_cast<std::streamsize>(json_len));
        if (!in) throw IoError(path + ": truncated container header");
        const int64_t header_end = 24 + static_cast<int64_t>(json_len);
        in.seekg(align8(header_end), std::ios::beg);

        nlohmann::json header;
        try {
            header = nlohmann::json::parse(json_text);
        } catch (const nlohmann::json::exception& e) {
            throw IoError(path + ": malformed container header: " + e.what());
        }

        Container c;
        if (header.contains("meta")) c.meta = header["meta"];
        const int64_t payload_start = align8(header_end);
        for (const auto& entry : header.at("tensors")) {
            NamedTensor t;
            t.name = entry.at("name").get<std::string>();
            t.dtype = dtype_from_name(entry.at("dtype").get<std::string>());
            const auto shape = entry.at("shape").get<std::vector<int64_t>>();
            const int64_t offset = entry.at("offset").get<int64_t>();
            const int64_t nbytes = entry.at("nbytes").get<int64_t>();
            const int64_t numel = Tensor::numel_of(shape);
            if (nbytes != numel * dtype_size(t.dtype))
                throw IoError(path + ": byte count mismatch for tensor '" + t.name + "'");

            in.seekg(payload_start + offset, std::ios::beg);
            t.value = read_payload(in, shape, t.dtype, path, t.name);
            c.tensors_.push_back(std::move(t));
        }
        return c;
    }

  private:
    std::vector<NamedTensor> tensors_;

    static int64_t align8(int64_t n) { return (n + 7) & ~int64_t{7}; }

    static void write_u32(std::ostream& out, uint32_t v) {
        char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
        out.write(b, 4);
    }
    static void write_u64(std::ostream& out, uint64_t v) {
        char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
        out.write(b, 8);
    }
    static uint32_t read_u32(std::istream& in, const std::string& path) {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        if (!in) throw IoError(path + ": truncated container");
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
        return v;
    }
    static uint64_t read_u64(std::istream& in, const std::string& path) {
        unsigned char b[8];
        in.read(reinterpret_cast<char*>(b), 8);
        if (!in) throw IoError(path + ": truncated container");
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
        return v;
    }

    static void pad_to8(std::ostream& out, int64_t pos) {
        for (int64_t p = pos; p < align8(pos); ++p) out.put('\0');
    }

    static int64_t write_payload(std::ostream& out, const NamedTensor& t) {
        const int64_t n = t.value.numel();
        switch (t.dtype) {
            case Dtype::F64: {
                std::vector<char> buf(static_cast<size_t>(n) * 8);
                for (int64_t i = 0; i < n; ++i) {
                    uint64_t bits;
                    const double v = t.value[i];
                    std::memcpy(&bits, &v, 8);
                    for (int b = 0; b < 8; ++b)
                        buf[static_cast<size_t>(i * 8 + b)] = static_cast<char>((bits >> (8 * b)) & 0xff);
                }
                out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
                return n * 8;
            }
            case Dtype::F32: {
                std::vector<char> buf(static_cast<size_t>(n) * 4);
                for (int64_t i = 0; i < n; ++i) {
                    const auto f = static_cast<float>(t.value[i]);
                    uint32_t bits;
                    std::memcpy(&bits, &f, 4);
                    for (int b = 0; b < 4; ++b)
                        buf[static_cast<size_t>(i * 4 + b)] = static_cast<char>((bits >> (8 * b)) & 0xff);
                }
                out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
                return n * 4;
            }
            case Dtype::U8: {
                std::vector<char> buf(static_cast<size_t>(n));
                for (int64_t i = 0; i < n; ++i) {
                    const double v = std::clamp(t.value[i], 0.0, 255.0);
                    buf[static_cast<size_t>(i)] = static_cast<char>(static_cast<uint8_t>(std::lround(v)));
                }
                out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
                return n;
            }
        }
        throw ContractViolation("unreachable dtype");
    }

    static Tensor read_payload(std::istream& in, const std::vector<int64_t>& shape, Dtype dtype,
                               const std::string& path, const std::string& name) {
        Tensor t(shape);
        const int64_t n = t.numel();
        const int64_t nbytes = n * dtype_size(dtype);
        std::vector<unsigned char> buf(static_cast<size_t>(nbytes));
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(nbytes));
        if (!in) throw IoError(path + ": truncated payload for tensor '" + name + "'");
        switch (dtype) {
            case Dtype::F64:
                for (int64_t i = 0; i < n; ++i) {
                    uint64_t bits = 0;
                    for (int b = 0; b < 8; ++b)
                        bits |= static_cast<uint64_t>(buf[static_cast<size_t>(i * 8 + b)]) << (8 * b);
                    double v;
                    std::memcpy(&v, &bits, 8);
                    t[i] = v;
                }
                break;
            case Dtype::F32:
                for (int64_t i = 0; i < n; ++i) {
                    uint32_t bits = 0;
                    for (int b = 0; b < 4; ++b)
                        bits |= static_cast<uint32_t>(buf[static_cast<size_t>(i * 4 + b)]) << (8 * b);
                    float v;
                    std::memcpy(&v, &bits, 4);
                    t[i] = static_cast<double>(v);
                }
                break;
            case Dtype::U8:
                for (int64_t i = 0; i < n; ++i) t[i] = static_cast<double>(buf[static_cast<size_t>(i)]);
                break;
        }
        return t;
    }
};

}  // namespace crackclf
