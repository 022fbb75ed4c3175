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

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "savae/error.hpp"

// Little-endian primitives shared by the corpus and checkpoint file formats.
namespace savae::binary_io {

inline void write_u32(std::ostream& out, std::uint32_t value)
{
    char bytes[4];
    for (int i = 0; i < 4; ++i)
        bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
    out.write(bytes, 4);
}

inline void write_u64(std::ostream& out, std::uint64_t value)
{
    char bytes[8];
    for (int i = 0; i < 8; ++i)
        bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
    out.write(bytes, 8);
}

inline void write_f64(std::ostream& out, double value) { write_u64(out, std::bit_cast<std::uint64_t>(value)); }

inline void write_string(std::ostream& out, const std::string& value)
{
    write_u32(out, static_cast<std::uint32_t>(value.size()));
    out.write(value.data(), static_cast<std::streamsize>(value.size()));
}

/// Reader that raises `truncation_kind` whenever the stream ends early.
class Reader {
public:
    Reader(std::istream& in, ErrorKind truncation_kind, std::string what)
        : in_(in)
        , kind_(truncation_kind)
        , what_(std::move(what))
    {
    }

    void read_exact(char* dst, std::size_t count)
    {
        in_.read(dst, static_cast<std::streamsize>(count));
        if (static_cast<std::size_t>(in_.gcount()) != count)
            throw Error(kind_, what_ + ": unexpected end of file");
    }

    std::uint32_t u32()
    {
        unsigned char bytes[4];
        read_exact(reinterpret_cast<char*>(bytes), 4);
        std::uint32_t value = 0;
        for (int i = 3; i >= 0; --i)
            value = (value << 8) | bytes[i];
        return value;
    }

    std::uint64_t u64()
    {
        unsigned char bytes[8];
        read_exact(reinterpret_cast<char*>(bytes), 8);
        std::uint64_t value = 0;
        for (int i = 7; i >= 0; --i)
            value = (value << 8) | bytes[i];
        return value;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    std::string string(std::size_t max_length = 1u << 20)
    {
        const auto length = u32();
        if (length > max_length)
            fail("string length " + std::to_string(length) + " exceeds limit");
        std::string value(length, '\0');
        read_exact(value.data(), length);
        return value;
    }

    std::string magic(std::size_t length)
    {
        std::string value(length, '\0');
        read_exact(value.data(), length);
        return value;
    }

    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

    [[noreturn]] void fail(const std::string& message) const { throw Error(kind_, what_ + ": " + message); }

private:
    std::istream& in_;
    ErrorKind kind_;
    std::string what_;
};

} // namespace savae::binary_io
