#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "simgan/core/error.hpp"
#include "simgan/core/tensor.hpp"
#include "simgan/nn/module.hpp"
#include "simgan/nn/sequential.hpp"

namespace simgan::nn {

/// Named tensor container persisted as a flat little-endian binary file.
///
/// Layout: "SGTA" | u32 version | u32 count | count x (u32 name_len | name |
/// i32 n,c,h,w | float32 data).
class TensorArchive {
public:
    static constexpr std::uint32_t version = 1;

    void put(const std::string& name, const Tensor& t) { entries_[name] = t; }

    [[nodiscard]] const Tensor& get(const std::string& name) const
    {
        auto it = entries_.find(name);
        if (it == entries_.end()) {
            throw InvalidInput("archive has no tensor '" + name + "'");
        }
        return it->second;
    }
    [[nodiscard]] bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    [[nodiscard]] std::size_t size() const { return entries_.size(); }
    [[nodiscard]] const std::map<std::string, Tensor>& entries() const { return entries_; }

    /// Stores every state tensor of `m` under `prefix`.
    void put_module(const std::string& prefix, const Module& m)
    {
        auto tensors = state_tensors(m);
        for (std::size_t i = 0; i < tensors.size(); ++i) {
            put(prefix + "." + std::to_string(i), *tensors[i]);
        }
    }

    void load_module(const std::string& prefix, Module& m) const
    {
        auto tensors = state_tensors(m);
        for (std::size_t i = 0; i < tensors.size(); ++i) {
            const Tensor& src = get(prefix + "." + std::to_string(i));
            if (src.shape() != tensors[i]->shape()) {
                throw ConfigError("archive tensor " + prefix + "." + std::to_string(i) + " has shape "
                                  + src.shape().str() + ", model expects " + tensors[i]->shape().str());
            }
            *tensors[i] = src;
        }
    }

    void save(const std::filesystem::path& path) const
    {
        if (path.has_parent_path()) {
            std::filesystem::create_directories(path.parent_path());
        }
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot write " + path.string());
        }
        out.write("SGTA", 4);
        write_u32(out, version);
        write_u32(out, static_cast<std::uint32_t>(entries_.size()));
        for (const auto& [name, t] : entries_) {
            write_u32(out, static_cast<std::uint32_t>(name.size()));
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            const std::int32_t dims[4] = {t.n(), t.c(), t.h(), t.w()};
            out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
            out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
        }
        if (!out) {
            throw std::runtime_error("short write to " + path.string());
        }
    }

    static TensorArchive load(const std::filesystem::path& path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw DependencyError("cannot open checkpoint " + path.string());
        }
        char magic[4];
        in.read(magic, 4);
        if (!in || std::memcmp(magic, "SGTA", 4) != 0) {
            throw InvalidInput(path.string() + " is not a tensor archive");
        }
        if (read_u32(in) != version) {
            throw InvalidInput(path.string() + ": unsupported archive version");
        }
        TensorArchive a;
        const std::uint32_t count = read_u32(in);
        for (std::uint32_t i = 0; i < count; ++i) {
            std::string name(read_u32(in), '\0');
            in.read(name.data(), static_cast<std::streamsize>(name.size()));
            std::int32_t dims[4];
            in.read(reinterpret_cast<char*>(dims), sizeof(dims));
            Tensor t(dims[0], dims[1], dims[2], dims[3]);
            in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
            if (!in) {
                throw InvalidInput(path.string() + ": truncated archive");
            }
            a.entries_.emplace(std::move(name), std::move(t));
        }
        return a;
    }

private:
    static void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
    static std::uint32_t read_u32(std::istream& in)
    {
        std::uint32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 4);
        return v;
    }

    std::map<std::string, Tensor> entries_;
};

} // namespace simgan::nn
