#pragma once

#include <stdexcept>
#include <string>

namespace graphre {

struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// bad arguments, wrong call order, misuse of an API
struct usage_error : error {
  using error::error;
};

// shape/dimension mismatch in tensor math or model wiring
struct dimension_error : usage_error {
  using usage_error::usage_error;
};

// invalid configuration (unknown keys, inconsistent dims, bad values)
struct config_error : usage_error {
  using usage_error::usage_error;
};

// malformed input file
struct parse_error : error {
  using error::error;
};

// structurally valid input that violates dataset constraints
struct integrity_error : error {
  using error::error;
};

// NaN/Inf or other numeric failure at runtime
struct numeric_error : error {
  using error::error;
};

struct io_error : error {
  using error::error;
};

// no feasible parse (e.g. a node with no finite candidate head)
struct decode_error : error {
  using error::error;
};

}  // namespace graphre
