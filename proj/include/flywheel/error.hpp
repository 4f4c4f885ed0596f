/*
 * Copyright 2026 The Flywheel Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace flywheel {

enum class ErrorCode {
    InvalidQuery,
    InvalidArgument,
    GatewayError,
    NoBackend,
    ScriptedError,
    RemoteError,
    DuplicateId,
    EmptyCorpus,
    StorageError,
    ValidationError,
    UnknownTrace,
    InvalidReason,
    LockHeld,
    EmptyTools,
    UnknownAlias,
    MalformedVerdict,
    EmptyInput,
    BadRatios,
    EmptyDocument,
    SchemaError,
    ParseError,
    UnknownBackend,
    UnknownVariant,
    EmptyTestset,
    EmptyRegressionSet,
    MismatchedTestsets,
    NotRolling,
    ApprovalPending,
    NothingPending,
    CycleInProgress,
    InvalidInterval,
    NotFound,
    AlreadyLabeled,
    Unauthorized,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries a machine-readable code; the
/// HTTP layer and the CLI map codes to status values and exit codes.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// True for the failures a model backend can produce (scripted or remote).
inline bool is_gateway_failure(ErrorCode code) noexcept {
    return code == ErrorCode::GatewayError || code == ErrorCode::ScriptedError ||
           code == ErrorCode::RemoteError || code == ErrorCode::NoBackend;
}

}  // namespace flywheel
