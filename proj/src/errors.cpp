#include "fudd/errors.hpp"

namespace fudd {

std::string_view to_string(ErrorFamily family) {
  switch (family) {
    case ErrorFamily::invalid_argument:
      return "invalid_argument";
    case ErrorFamily::format:
      return "format";
    case ErrorFamily::config:
      return "config";
    case ErrorFamily::validation:
      return "validation";
    case ErrorFamily::backend:
      return "backend";
    case ErrorFamily::cache:
      return "cache";
  }
  return "unknown";
}

}  // namespace fudd
