/*
 * Copyright 2026 The slicefix Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SLICEFIX_ERRORS_H_
#define SLICEFIX_ERRORS_H_

#include <stdexcept>
#include <string>

namespace slicefix {

enum class ErrorCode {
  kInvalidArgument,
  kNotFound,
  kFailedPrecondition,
  kConflict,
  kUnavailable,
  kDataLoss,
  kDivergence,
  kIo,
};

const char* ErrorCodeName(ErrorCode code);

// All library failures are reported through this exception. The code maps
// onto HTTP statuses in the service and exit codes in the CLIs.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline Error InvalidArgumentError(const std::string& m) {
  return Error(ErrorCode::kInvalidArgument, m);
}
inline Error NotFoundError(const std::string& m) {
  return Error(ErrorCode::kNotFound, m);
}
inline Error FailedPreconditionError(const std::string& m) {
  return Error(ErrorCode::kFailedPrecondition, m);
}
inline Error ConflictError(const std::string& m) {
  return Error(ErrorCode::kConflict, m);
}
inline Error UnavailableError(const std::string& m) {
  return Error(ErrorCode::kUnavailable, m);
}
inline Error DataLossError(const std::string& m) {
  return Error(ErrorCode::kDataLoss, m);
}
inline Error DivergenceError(const std::string& m) {
  return Error(ErrorCode::kDivergence, m);
}
inline Error IoError(const std::string& m) { return Error(ErrorCode::kIo, m); }

}  // namespace slicefix

#endif  // SLICEFIX_ERRORS_H_
