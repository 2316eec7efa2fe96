#pragma once

#include <stdexcept>
#include <string>

namespace uietl {

// Every library failure derives from Error and carries a short machine-readable
// kind, which the CLI prints as `error: <kind>: <message>`.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define UIETL_DEFINE_ERROR(Name, tag)                                   \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(tag, what) {}        \
  };

UIETL_DEFINE_ERROR(ShapeError, "shape")
UIETL_DEFINE_ERROR(RangeError, "range")
UIETL_DEFINE_ERROR(AlignmentError, "alignment")
UIETL_DEFINE_ERROR(ConfigError, "config")
UIETL_DEFINE_ERROR(IoError, "io")
UIETL_DEFINE_ERROR(LoadError, "load")
UIETL_DEFINE_ERROR(FormatError, "format")
UIETL_DEFINE_ERROR(VersionError, "version")
UIETL_DEFINE_ERROR(DegenerateInputError, "degenerate")
UIETL_DEFINE_ERROR(SizeError, "size")
UIETL_DEFINE_ERROR(GridError, "grid")
UIETL_DEFINE_ERROR(TrainingError, "training")
UIETL_DEFINE_ERROR(CapabilityError, "capability")
UIETL_DEFINE_ERROR(ExtractorError, "extractor")
UIETL_DEFINE_ERROR(MetricError, "metric")

#undef UIETL_DEFINE_ERROR

}  // namespace uietl
