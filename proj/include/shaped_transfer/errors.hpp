#pragma once

#include <stdexcept>
#include <string>

namespace shaped_transfer {

enum class errc {
  input_shape,
  invalid_action,
  invalid_restriction,
  training_divergence,
  contract,
  configuration,
  io,
  empty_trajectory,
};

const char* to_string(errc code);

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw error(code, what); }

inline void require(bool condition, errc code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace shaped_transfer
