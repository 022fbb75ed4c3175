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

#include <stdexcept>
#include <string>
#include <string_view>

namespace savae {

enum class ErrorKind {
    EmptyCorpus,
    EmptyDocument,
    AllDocumentsEmpty,
    IoError,
    ParseError,
    UnsupportedVersion,
    CorruptCheckpoint,
    NonFiniteGradient,
    DegenerateCentroids,
    DegenerateClusters,
    DegenerateLabels,
    UnknownToken,
    InvalidConfig,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::EmptyDocument: return "EmptyDocument";
    case ErrorKind::AllDocumentsEmpty: return "AllDocumentsEmpty";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::DegenerateCentroids: return "DegenerateCentroids";
    case ErrorKind::DegenerateClusters: return "DegenerateClusters";
    case ErrorKind::DegenerateLabels: return "DegenerateLabels";
    case ErrorKind::UnknownToken: return "UnknownToken";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    }
    return "Unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message)
        , kind_(kind)
        , message_(message)
    {
    }

    ErrorKind kind() const noexcept { return kind_; }
    /// The message without the kind prefix.
    const std::string& message() const noexcept { return message_; }

private:
    ErrorKind kind_;
    std::string message_;
};

} // namespace savae
