#pragma once

#include <stdexcept>
#include <string>

namespace fairsyn {

// Base class for every error raised by the library. CLI maps these to exit
// code 1 (configuration/input) or 2 (runtime) via the config_error flag.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message, bool config_error = false)
      : std::runtime_error(code + ": " + message),
        code_(std::move(code)),
        config_error_(config_error) {}

  const std::string& code() const { return code_; }
  bool is_config_error() const { return config_error_; }

 private:
  std::string code_;
  bool config_error_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error("ConfigError", m, true) {}
};

struct EmptyFileError : Error {
  explicit EmptyFileError(const std::string& m) : Error("EmptyFile", m, true) {}
};

struct MissingColumnError : Error {
  explicit MissingColumnError(const std::string& m) : Error("MissingColumn", m, true) {}
};

struct TypeMismatchError : Error {
  TypeMismatchError(std::size_t row, const std::string& column, const std::string& value)
      : Error("TypeMismatch", "row " + std::to_string(row) + ", column '" + column +
                                  "': unusable value '" + value + "'",
              true),
        row(row),
        column(column) {}
  std::size_t row;
  std::string column;
};

struct AllMissingColumnError : Error {
  explicit AllMissingColumnError(const std::string& m) : Error("AllMissingColumn", m) {}
};

struct SchemaMismatchError : Error {
  explicit SchemaMismatchError(const std::string& m) : Error("SchemaMismatch", m, true) {}
};

struct DegenerateGroupError : Error {
  explicit DegenerateGroupError(const std::string& m) : Error("DegenerateGroup", m) {}
};

struct NuisanceFitError : Error {
  explicit NuisanceFitError(const std::string& m) : Error("NuisanceFitFailure", m) {}
};

struct LengthMismatchError : Error {
  explicit LengthMismatchError(const std::string& m) : Error("LengthMismatch", m) {}
};

struct SingleClassLabelError : Error {
  explicit SingleClassLabelError(const std::string& m) : Error("SingleClassLabel", m) {}
};

struct EmptyStratumError : Error {
  explicit EmptyStratumError(const std::string& m) : Error("EmptyStratum", m) {}
};

struct IntractableSizeError : Error {
  explicit IntractableSizeError(const std::string& m) : Error("IntractableSize", m) {}
};

struct InvalidCptError : Error {
  explicit InvalidCptError(const std::string& m) : Error("InvalidCpt", m, true) {}
};

struct TransportError : Error {
  explicit TransportError(const std::string& m) : Error("TransportError", m) {}
};

struct MalformedResponseError : Error {
  explicit MalformedResponseError(const std::string& m) : Error("MalformedResponse", m) {}
};

struct AbortedByTransportError : Error {
  explicit AbortedByTransportError(const std::string& m) : Error("AbortedByTransport", m) {}
};

struct UnwritableOutputError : Error {
  explicit UnwritableOutputError(const std::string& m) : Error("UnwritableOutput", m) {}
};

}  // namespace fairsyn
