#pragma once

#include <stdexcept>
#include <string>

namespace dpnse {

// Exit-code classes used by the CLI: input_error/config_error/io_error map to 1,
// numerical_error maps to 2.
struct input_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct dimension_error : input_error {
  using input_error::input_error;
};

struct config_error : input_error {
  using input_error::input_error;
};

struct io_error : input_error {
  using input_error::input_error;
};

struct usage_error : std::logic_error {
  using std::logic_error::logic_error;
};

struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dpnse
