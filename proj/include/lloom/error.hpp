// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lloom {

enum class ErrorCode {
    BadMagic,
    Truncated,
    CountMismatch,
    LabelOutOfRange,
    EmptyClass,
    ShapeMismatch,
    NonScalarLoss,
    NonFiniteLoss,
    NonFinite,
    EmptyDataset,
    IoError,
    VersionMismatch,
    CorruptManifest,
    UnknownSampleId,
    ClassOutOfRange,
    AlreadyTraining,
    CorruptLog,
    TooFewClasses,
    InvalidArgument,
};

constexpr auto to_string(ErrorCode code) -> std::string_view
{
    switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonScalarLoss: return "NonScalarLoss";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptManifest: return "CorruptManifest";
    case ErrorCode::UnknownSampleId: return "UnknownSampleId";
    case ErrorCode::ClassOutOfRange: return "ClassOutOfRange";
    case ErrorCode::AlreadyTraining: return "AlreadyTraining";
    case ErrorCode::CorruptLog: return "CorruptLog";
    case ErrorCode::TooFewClasses: return "TooFewClasses";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (CLI, HTTP layer) can map it without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message),
          code_(code)
    {}

    [[nodiscard]] auto code() const noexcept -> ErrorCode { return code_; }

private:
    ErrorCode code_;
};

} // namespace lloom
