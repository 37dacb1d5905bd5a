#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace vidtwin {

/// Process exit codes shared by every CLI command.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kIo = 3,
  kNumeric = 4,
};

/// Base of all library errors. Each subclass maps onto one CLI exit code.
class Error : public std::runtime_error {
 public:
  Error(const std::string& what, ExitCode code) : std::runtime_error(what), code_(code) {}
  ExitCode exit_code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

#define VIDTWIN_DEFINE_ERROR(Name, Code, Prefix)                       \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(Prefix + what, Code) {} \
  };

VIDTWIN_DEFINE_ERROR(ShapeError, ExitCode::kConfig, std::string("shape error: "))
VIDTWIN_DEFINE_ERROR(ScheduleError, ExitCode::kConfig, std::string("schedule error: "))
VIDTWIN_DEFINE_ERROR(ContractError, ExitCode::kConfig, std::string("contract violation: "))
VIDTWIN_DEFINE_ERROR(IngestionError, ExitCode::kIo, std::string("ingestion error: "))
VIDTWIN_DEFINE_ERROR(IoError, ExitCode::kIo, std::string("i/o error: "))
VIDTWIN_DEFINE_ERROR(FormatError, ExitCode::kIo, std::string("format error: "))
VIDTWIN_DEFINE_ERROR(RangeError, ExitCode::kNumeric, std::string("range error: "))
VIDTWIN_DEFINE_ERROR(NumericError, ExitCode::kNumeric, std::string("numeric error: "))
VIDTWIN_DEFINE_ERROR(StatsError, ExitCode::kNumeric, std::string("stats error: "))
VIDTWIN_DEFINE_ERROR(DomainError, ExitCode::kNumeric, std::string("domain error: "))

#undef VIDTWIN_DEFINE_ERROR

/// Config validation failure carrying every violated constraint, not just the first.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> violations)
      : Error(join(violations), ExitCode::kConfig), violations_(std::move(violations)) {}
  explicit ConfigError(const std::string& violation)
      : ConfigError(std::vector<std::string>{violation}) {}

  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "config error:";
    for (const auto& s : v) out += "\n  - " + s;
    return out;
  }
  std::vector<std::string> violations_;
};

}  // namespace vidtwin
