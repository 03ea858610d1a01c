#include "shaped_transfer/errors.hpp"

namespace shaped_transfer {

const char* to_string(errc code) {
  switch (code) {
    case errc::input_shape: return "input shape error";
    case errc::invalid_action: return "invalid action";
    case errc::invalid_restriction: return "invalid restriction";
    case errc::training_divergence: return "training divergence";
    case errc::contract: return "contract violation";
    case errc::configuration: return "configuration error";
    case errc::io: return "I/O error";
    case errc::empty_trajectory: return "empty trajectory";
  }
  return "unknown error";
}

}  // namespace shaped_transfer
