#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "odemri/tensor.hpp"

namespace odemri {

// ODET binary tensor format: magic "ODET", version u32 = 1, dtype u8
// (0 = real f64, 1 = complex f64 planar), ndim u8, dims as u64, then the
// payload as little-endian f64. Complex payload is the full real plane
// followed by the full imaginary plane.

void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

void write_complex(const std::string& path, const ComplexImage& img);
ComplexImage read_complex(const std::string& path);

// Coil stacks are stored as one complex record with dims [C, H, W].
void write_complex_stack(const std::string& path, const std::vector<ComplexImage>& stack);
std::vector<ComplexImage> read_complex_stack(const std::string& path);

// Stream-level records, used by the checkpoint writer to embed tensors.
namespace odet {

struct Record {
  std::uint8_t dtype = 0;
  std::vector<Index> dims;
  std::vector<double> payload;
};

void write_record(std::ostream& out, const Record& rec);
// `context` names the file (or blob) in error messages.
Record read_record(std::istream& in, const std::string& context);

Record to_record(const Tensor& t);
Record to_record(const ComplexImage& img);
Record to_record(const std::vector<ComplexImage>& stack);
Tensor tensor_from(const Record& rec, const std::string& context);
ComplexImage complex_from(const Record& rec, const std::string& context);
std::vector<ComplexImage> stack_from(const Record& rec, const std::string& context);

}  // namespace odet

// 8-bit binary PGM, values clamped to [0, scale_max] then mapped to 0..255.
void write_pgm(const std::string& path, const Tensor& img, double scale_max);

}  // namespace odemri
