#pragma once

// On-disk formats: the flat-binary tensor container (manifest.json plus one
// little-endian row-major float32 .bin per tensor, masks as u8 0/1), CSV
// traces, and bit-exact PGM image export.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdslab/core.hpp"

namespace sdslab {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Raw little-endian writers. The container is float32 regardless of the
// double-precision in-memory representation.
// ---------------------------------------------------------------------------
inline void write_f32(const fs::path& path, const std::vector<double>& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for write: " + path.string());
    std::vector<float> buf(data.size());
    for (size_t i = 0; i < data.size(); ++i) buf[i] = static_cast<float>(data[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw IoError("write failed: " + path.string());
}

inline std::vector<double> read_f32(const fs::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open for read: " + path.string());
    auto bytes = static_cast<size_t>(in.tellg());
    if (bytes % sizeof(float) != 0) throw IoError("truncated float32 file: " + path.string());
    in.seekg(0);
    std::vector<float> buf(bytes / sizeof(float));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw IoError("read failed: " + path.string());
    return std::vector<double>(buf.begin(), buf.end());
}

inline void write_u8(const fs::path& path, const std::vector<uint8_t>& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for write: " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

inline std::vector<uint8_t> read_u8(const fs::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open for read: " + path.string());
    auto bytes = static_cast<size_t>(in.tellg());
    in.seekg(0);
    std::vector<uint8_t> buf(bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw IoError("read failed: " + path.string());
    return buf;
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for write: " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for read: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline json load_json(const fs::path& path) {
    return json::parse(read_text(path));
}

inline uint64_t hash_file(const fs::path& path) {
    auto bytes = read_u8(path);
    return fnv1a(bytes.data(), bytes.size());
}

// ---------------------------------------------------------------------------
// Tensor container: named float32 tensors with shapes in manifest.json.
// Shared by corpora and model checkpoints.
// ---------------------------------------------------------------------------
class TensorContainer {
  public:
    void put(const std::string& name, std::vector<int> shape, std::vector<double> data) {
        size_t n = 1;
        for (int d : shape) n *= static_cast<size_t>(d);
        if (n != data.size()) throw IoError("tensor '" + name + "': shape/data mismatch");
        tensors_[name] = {std::move(shape), std::move(data)};
    }

    void put_u8(const std::string& name, std::vector<int> shape, std::vector<uint8_t> data) {
        size_t n = 1;
        for (int d : shape) n *= static_cast<size_t>(d);
        if (n != data.size()) throw IoError("tensor '" + name + "': shape/data mismatch");
        u8_tensors_[name] = {std::move(shape), std::move(data)};
    }

    bool has(const std::string& name) const {
        return tensors_.count(name) || u8_tensors_.count(name);
    }

    const std::vector<double>& data(const std::string& name) const {
        auto it = tensors_.find(name);
        if (it == tensors_.end()) throw IoError("missing tensor: " + name);
        return it->second.data;
    }

    const std::vector<uint8_t>& data_u8(const std::string& name) const {
        auto it = u8_tensors_.find(name);
        if (it == u8_tensors_.end()) throw IoError("missing u8 tensor: " + name);
        return it->second.data;
    }

    const std::vector<int>& shape(const std::string& name) const {
        if (auto it = tensors_.find(name); it != tensors_.end()) return it->second.shape;
        if (auto it = u8_tensors_.find(name); it != u8_tensors_.end()) return it->second.shape;
        throw IoError("missing tensor: " + name);
    }

    json& meta() { return meta_; }
    const json& meta() const { return meta_; }

    // Directory layout: manifest.json + one .bin per tensor (flat; slashes in
    // tensor names are mapped to underscores in the filename).
    static std::string file_of(std::string name) {
        for (char& c : name)
            if (c == '/') c = '_';
        return name + ".bin";
    }

    void save(const fs::path& dir) const {
        fs::create_directories(dir);
        json manifest;
        manifest["meta"] = meta_;
        json tensors = json::object();
        for (const auto& [name, t] : tensors_) {
            tensors[name] = {{"dtype", "f32"}, {"shape", t.shape}, {"file", file_of(name)}};
            write_f32(dir / file_of(name), t.data);
        }
        for (const auto& [name, t] : u8_tensors_) {
            tensors[name] = {{"dtype", "u8"}, {"shape", t.shape}, {"file", file_of(name)}};
            write_u8(dir / file_of(name), t.data);
        }
        manifest["tensors"] = tensors;
        write_json(dir / "manifest.json", manifest);
    }

    static TensorContainer load(const fs::path& dir) {
        TensorContainer c;
        json manifest = load_json(dir / "manifest.json");
        c.meta_ = manifest.value("meta", json::object());
        for (auto& [name, entry] : manifest.at("tensors").items()) {
            std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
            fs::path file = dir / entry.at("file").get<std::string>();
            if (entry.at("dtype") == "u8")
                c.put_u8(name, shape, read_u8(file));
            else
                c.put(name, shape, read_f32(file));
        }
        return c;
    }

  private:
    struct F32Tensor {
        std::vector<int> shape;
        std::vector<double> data;
    };
    struct U8Tensor {
        std::vector<int> shape;
        std::vector<uint8_t> data;
    };
    std::map<std::string, F32Tensor> tensors_;
    std::map<std::string, U8Tensor> u8_tensors_;
    json meta_;
};

// ---------------------------------------------------------------------------
// CSV trace writer: fixed column set, one row per record.
// ---------------------------------------------------------------------------
class CsvWriter {
  public:
    explicit CsvWriter(std::vector<std::string> columns) : columns_(std::move(columns)) {
        std::ostringstream row;
        for (size_t i = 0; i < columns_.size(); ++i) row << (i ? "," : "") << columns_[i];
        rows_.push_back(row.str());
    }

    void add_row(const std::vector<double>& values) {
        if (values.size() != columns_.size()) throw IoError("csv row width mismatch");
        std::ostringstream row;
        row.precision(17);
        for (size_t i = 0; i < values.size(); ++i) row << (i ? "," : "") << values[i];
        rows_.push_back(row.str());
    }

    std::string str() const {
        std::ostringstream out;
        for (const auto& r : rows_) out << r << "\n";
        return out.str();
    }

    void save(const fs::path& path) const { write_text(path, str()); }

    size_t row_count() const { return rows_.size() - 1; }

  private:
    std::vector<std::string> columns_;
    std::vector<std::string> rows_;
};

// Binary 8-bit PGM, values scaled from [0,1]. Deterministic byte output.
inline void write_pgm(const fs::path& path, const Grid& img) {
    std::ostringstream out;
    out << "P5\n" << img.w << " " << img.h << "\n255\n";
    for (double x : img.v) out << static_cast<char>(static_cast<int>(clamp01(x) * 255.0 + 0.5));
    write_text(path, out.str());
}

}  // namespace sdslab
