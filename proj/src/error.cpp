#include "mlpgcn/error.hpp"

namespace mlpgcn {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Shape: return "E_SHAPE";
    case ErrorCode::Parameter: return "E_PARAM";
    case ErrorCode::Data: return "E_DATA";
    case ErrorCode::Consistency: return "E_CONSISTENCY";
    case ErrorCode::DegenerateInput: return "E_DEGENERATE";
    case ErrorCode::Config: return "E_CONFIG";
    case ErrorCode::Io: return "E_IO";
  }
  return "E_UNKNOWN";
}

int error_exit_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Shape: return 3;
    case ErrorCode::Parameter: return 4;
    case ErrorCode::Data: return 5;
    case ErrorCode::Consistency: return 6;
    case ErrorCode::DegenerateInput: return 7;
    case ErrorCode::Config: return 8;
    case ErrorCode::Io: return 9;
  }
  return 1;
}

}  // namespace mlpgcn
