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

#include "flywheel/error.hpp"

namespace flywheel {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidQuery: return "InvalidQuery";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::GatewayError: return "GatewayError";
        case ErrorCode::NoBackend: return "NoBackend";
        case ErrorCode::ScriptedError: return "ScriptedError";
        case ErrorCode::RemoteError: return "RemoteError";
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::EmptyCorpus: return "EmptyCorpus";
        case ErrorCode::StorageError: return "StorageError";
        case ErrorCode::ValidationError: return "ValidationError";
        case ErrorCode::UnknownTrace: return "UnknownTrace";
        case ErrorCode::InvalidReason: return "InvalidReason";
        case ErrorCode::LockHeld: return "LockHeld";
        case ErrorCode::EmptyTools: return "EmptyTools";
        case ErrorCode::UnknownAlias: return "UnknownAlias";
        case ErrorCode::MalformedVerdict: return "MalformedVerdict";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::BadRatios: return "BadRatios";
        case ErrorCode::EmptyDocument: return "EmptyDocument";
        case ErrorCode::SchemaError: return "SchemaError";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::UnknownBackend: return "UnknownBackend";
        case ErrorCode::UnknownVariant: return "UnknownVariant";
        case ErrorCode::EmptyTestset: return "EmptyTestset";
        case ErrorCode::EmptyRegressionSet: return "EmptyRegressionSet";
        case ErrorCode::MismatchedTestsets: return "MismatchedTestsets";
        case ErrorCode::NotRolling: return "NotRolling";
        case ErrorCode::ApprovalPending: return "ApprovalPending";
        case ErrorCode::NothingPending: return "NothingPending";
        case ErrorCode::CycleInProgress: return "CycleInProgress";
        case ErrorCode::InvalidInterval: return "InvalidInterval";
        case ErrorCode::NotFound: return "NotFound";
        case ErrorCode::AlreadyLabeled: return "AlreadyLabeled";
        case ErrorCode::Unauthorized: return "Unauthorized";
    }
    return "Unknown";
}

}  // namespace flywheel
