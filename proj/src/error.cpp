#include "stlda/error.hpp"

namespace stlda {

const char* to_string(ErrorCategory category) {
    switch (category) {
        case ErrorCategory::Io: return "io";
        case ErrorCategory::Parse: return "parse";
        case ErrorCategory::Config: return "config";
        case ErrorCategory::Numeric: return "numeric";
        case ErrorCategory::Format: return "format";
        case ErrorCategory::Data: return "data";
    }
    return "unknown";
}

}  // namespace stlda
