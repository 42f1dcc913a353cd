// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef MRCAE_ERRORS_H_
#define MRCAE_ERRORS_H_

#include <stdexcept>
#include <string>

namespace mrcae {

// Shape, channel or option mismatch. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed files (WAV, checkpoint, manifest) and IO failures. CLI exit code 3.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values or failed numeric checks. CLI exit code 4.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reference source with zero energy; the metrics are undefined.
class UndefinedSourceError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace mrcae

#endif  // MRCAE_ERRORS_H_
