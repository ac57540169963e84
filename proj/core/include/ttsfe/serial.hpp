#pragma once

#include <iosfwd>

#include "ttsfe/tensor.hpp"

namespace ttsfe {

/// Thrown on malformed binary tensor/checkpoint input.
class SerialError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat binary tensor container: magic "UFT1", rank (u32 LE), one u32 LE per
/// dimension, then the row-major payload as f64 LE.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

// Little-endian scalar helpers shared by the checkpoint container.
void write_u32(std::ostream& out, std::uint32_t v);
std::uint32_t read_u32(std::istream& in);
void write_f64(std::ostream& out, double v);
double read_f64(std::istream& in);

}  // namespace ttsfe
