// Copyright 2026 The SAVAE Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <type_traits>

#include "savae/binary_io.hpp"
#include "savae/model.hpp"

namespace savae {

// Checkpoint layout, all integers little-endian:
//   "SAVM" | u32 version | config | u32 array count |
//   per array: name (u32 length + bytes) | u32 rank | u64 dims... | f64 data (row-major)
// config = u32 mode | u64 m | u64 d | u64 k | u32 layer count | u64 widths... |
//          u64 samples_train | u64 samples_eval
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
};

inline void write_checkpoint(std::ostream& out, const ModelParams& params, const ModelConfig& config)
{
    using namespace binary_io;
    check_shapes(params, config);
    out.write("SAVM", 4);
    write_u32(out, kCheckpointVersion);
    write_u32(out, static_cast<std::uint32_t>(config.mode));
    write_u64(out, config.vocab_size);
    write_u64(out, config.latent_dim);
    write_u64(out, config.window);
    write_u32(out, static_cast<std::uint32_t>(config.encoder_layers.size()));
    for (auto width : config.encoder_layers)
        write_u64(out, width);
    write_u64(out, config.samples_train);
    write_u64(out, config.samples_eval);

    std::uint32_t count = 0;
    params.for_each_array([&](const std::string&, const auto&) { ++count; });
    write_u32(out, count);
    params.for_each_array([&](const std::string& name, const auto& array) {
        write_string(out, name);
        constexpr bool is_vector = std::decay_t<decltype(array)>::ColsAtCompileTime == 1;
        write_u32(out, is_vector ? 1 : 2);
        write_u64(out, static_cast<std::uint64_t>(array.rows()));
        if (!is_vector)
            write_u64(out, static_cast<std::uint64_t>(array.cols()));
        for (Index i = 0; i < array.size(); ++i)
            write_f64(out, array.data()[i]);
    });
}

inline Checkpoint read_checkpoint(std::istream& in)
{
    binary_io::Reader reader(in, ErrorKind::CorruptCheckpoint, "checkpoint");
    if (reader.magic(4) != "SAVM")
        reader.fail("bad magic, not a model checkpoint");
    if (const auto version = reader.u32(); version != kCheckpointVersion)
        throw Error(ErrorKind::UnsupportedVersion, "checkpoint version " + std::to_string(version));

    Checkpoint ckpt;
    auto& config = ckpt.config;
    const auto mode = reader.u32();
    if (mode > 1)
        reader.fail("unknown model mode " + std::to_string(mode));
    config.mode = static_cast<ModelMode>(mode);
    config.vocab_size = reader.u64();
    config.latent_dim = reader.u64();
    config.window = reader.u64();
    const auto layers = reader.u32();
    if (layers > 64)
        reader.fail("implausible encoder depth");
    config.encoder_layers.resize(layers);
    for (auto& width : config.encoder_layers)
        width = reader.u64();
    config.samples_train = reader.u64();
    config.samples_eval = reader.u64();
    if (const auto problems = config.violations(); !problems.empty())
        reader.fail("invalid model configuration: " + problems.front());
    if (config.vocab_size > (1u << 24) || config.latent_dim > (1u << 16))
        reader.fail("implausible model dimensions");
    for (auto width : config.encoder_layers)
        if (width > (1u << 16))
            reader.fail("implausible encoder width");

    ckpt.params = ModelParams(ParameterArrays::zeros(config));
    std::uint32_t expected = 0;
    ckpt.params.for_each_array([&](const std::string&, const auto&) { ++expected; });
    if (const auto count = reader.u32(); count != expected)
        reader.fail("expected " + std::to_string(expected) + " arrays, found " + std::to_string(count));

    ckpt.params.for_each_array([&](const std::string& name, auto& array) {
        if (const auto stored = reader.string(4096); stored != name)
            reader.fail("expected array '" + name + "', found '" + stored + "'");
        const auto rank = reader.u32();
        if (rank != 1 && rank != 2)
            reader.fail("array '" + name + "' has rank " + std::to_string(rank));
        const auto rows = reader.u64();
        const auto cols = rank == 2 ? reader.u64() : 1;
        if (rows != static_cast<std::uint64_t>(array.rows()) || cols != static_cast<std::uint64_t>(array.cols()))
            reader.fail("array '" + name + "' shape does not match the configuration");
        for (Index i = 0; i < array.size(); ++i)
            array.data()[i] = reader.f64();
    });
    if (!reader.at_end())
        reader.fail("trailing bytes");
    return ckpt;
}

inline void save_checkpoint(const ModelParams& params, const ModelConfig& config, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(ErrorKind::IoError, "cannot write '" + path.string() + "'");
    write_checkpoint(out, params, config);
    if (!out)
        throw Error(ErrorKind::IoError, "write to '" + path.string() + "' failed");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "'");
    return read_checkpoint(in);
}

/// Loads a checkpoint and rejects one trained in a different mode.
inline Checkpoint load_checkpoint(const std::filesystem::path& path, ModelMode expected_mode)
{
    auto ckpt = load_checkpoint(path);
    if (ckpt.config.mode != expected_mode)
        throw Error(ErrorKind::CorruptCheckpoint, "checkpoint holds a " + std::string(to_string(ckpt.config.mode))
                        + " model, expected " + std::string(to_string(expected_mode)));
    return ckpt;
}

} // namespace savae
