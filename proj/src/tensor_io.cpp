#include "odemri/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace odemri {

namespace odet {

namespace {

constexpr char kMagic[4] = {'O', 'D', 'E', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const std::string& context) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated tensor data in " + context);
  return v;
}

Index element_count(const std::vector<Index>& dims, const std::string& context) {
  Index n = 1;
  for (Index d : dims) {
    if (d < 1) throw IoError("non-positive dimension in " + context);
    n *= d;
  }
  return n;
}

}  // namespace

void write_record(std::ostream& out, const Record& rec) {
  out.write(kMagic, sizeof(kMagic));
  write_raw(out, kVersion);
  write_raw(out, rec.dtype);
  write_raw(out, static_cast<std::uint8_t>(rec.dims.size()));
  for (Index d : rec.dims) write_raw(out, static_cast<std::uint64_t>(d));
  out.write(reinterpret_cast<const char*>(rec.payload.data()),
            static_cast<std::streamsize>(rec.payload.size() * sizeof(double)));
}

Record read_record(std::istream& in, const std::string& context) {
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("bad magic, not an ODET tensor: " + context);
  const auto version = read_raw<std::uint32_t>(in, context);
  if (version != kVersion)
    throw IoError("unsupported ODET version " + std::to_string(version) + " in " + context);
  Record rec;
  rec.dtype = read_raw<std::uint8_t>(in, context);
  if (rec.dtype > 1) throw IoError("unknown ODET dtype in " + context);
  const auto ndim = read_raw<std::uint8_t>(in, context);
  if (ndim == 0) throw IoError("zero-dimensional ODET tensor in " + context);
  rec.dims.resize(ndim);
  for (auto& d : rec.dims) d = static_cast<Index>(read_raw<std::uint64_t>(in, context));
  const Index n = element_count(rec.dims, context) * (rec.dtype == 1 ? 2 : 1);
  rec.payload.resize(static_cast<std::size_t>(n));
  in.read(reinterpret_cast<char*>(rec.payload.data()),
          static_cast<std::streamsize>(rec.payload.size() * sizeof(double)));
  if (!in) throw IoError("truncated tensor payload in " + context);
  return rec;
}

Record to_record(const Tensor& t) {
  Record rec;
  rec.dtype = 0;
  rec.dims = t.shape();
  rec.payload.assign(t.data(), t.data() + t.size());
  return rec;
}

Record to_record(const ComplexImage& img) {
  Record rec;
  rec.dtype = 1;
  rec.dims = img.re.shape();
  rec.payload.reserve(static_cast<std::size_t>(2 * img.re.size()));
  rec.payload.assign(img.re.data(), img.re.data() + img.re.size());
  rec.payload.insert(rec.payload.end(), img.im.data(), img.im.data() + img.im.size());
  return rec;
}

Record to_record(const std::vector<ComplexImage>& stack) {
  if (stack.empty()) throw ShapeError("cannot serialize an empty coil stack");
  const Index h = stack.front().height();
  const Index w = stack.front().width();
  Record rec;
  rec.dtype = 1;
  rec.dims = {static_cast<Index>(stack.size()), h, w};
  rec.payload.reserve(static_cast<std::size_t>(2 * stack.size() * h * w));
  for (const auto& img : stack) {
    require_same_shape(img, stack.front(), "coil stack serialization");
    rec.payload.insert(rec.payload.end(), img.re.data(), img.re.data() + img.re.size());
  }
  for (const auto& img : stack)
    rec.payload.insert(rec.payload.end(), img.im.data(), img.im.data() + img.im.size());
  return rec;
}

Tensor tensor_from(const Record& rec, const std::string& context) {
  if (rec.dtype != 0) throw IoError("expected a real tensor in " + context);
  Eigen::ArrayXd values(static_cast<Index>(rec.payload.size()));
  std::copy(rec.payload.begin(), rec.payload.end(), values.data());
  return Tensor(rec.dims, std::move(values));
}

ComplexImage complex_from(const Record& rec, const std::string& context) {
  if (rec.dtype != 1 || rec.dims.size() != 2)
    throw IoError("expected a 2-D complex tensor in " + context);
  const Index n = rec.dims[0] * rec.dims[1];
  Eigen::ArrayXd re(n), im(n);
  std::copy_n(rec.payload.begin(), n, re.data());
  std::copy_n(rec.payload.begin() + n, n, im.data());
  return {Tensor(rec.dims, std::move(re)), Tensor(rec.dims, std::move(im))};
}

std::vector<ComplexImage> stack_from(const Record& rec, const std::string& context) {
  if (rec.dtype != 1 || rec.dims.size() != 3)
    throw IoError("expected a 3-D complex coil stack in " + context);
  const Index coils = rec.dims[0];
  const Index n = rec.dims[1] * rec.dims[2];
  std::vector<ComplexImage> stack;
  stack.reserve(static_cast<std::size_t>(coils));
  for (Index c = 0; c < coils; ++c) {
    Eigen::ArrayXd re(n), im(n);
    std::copy_n(rec.payload.begin() + c * n, n, re.data());
    std::copy_n(rec.payload.begin() + (coils + c) * n, n, im.data());
    stack.emplace_back(Tensor({rec.dims[1], rec.dims[2]}, std::move(re)),
                       Tensor({rec.dims[1], rec.dims[2]}, std::move(im)));
  }
  return stack;
}

}  // namespace odet

namespace {

void write_record_file(const std::string& path, const odet::Record& rec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open file for writing: " + path);
  odet::write_record(out, rec);
  if (!out) throw IoError("write failed: " + path);
}

odet::Record read_record_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing or unreadable file: " + path);
  return odet::read_record(in, path);
}

}  // namespace

void write_tensor(const std::string& path, const Tensor& t) {
  write_record_file(path, odet::to_record(t));
}

Tensor read_tensor(const std::string& path) {
  return odet::tensor_from(read_record_file(path), path);
}

void write_complex(const std::string& path, const ComplexImage& img) {
  write_record_file(path, odet::to_record(img));
}

ComplexImage read_complex(const std::string& path) {
  return odet::complex_from(read_record_file(path), path);
}

void write_complex_stack(const std::string& path, const std::vector<ComplexImage>& stack) {
  write_record_file(path, odet::to_record(stack));
}

std::vector<ComplexImage> read_complex_stack(const std::string& path) {
  return odet::stack_from(read_record_file(path), path);
}

void write_pgm(const std::string& path, const Tensor& img, double scale_max) {
  if (img.ndim() != 2) throw ShapeError("PGM output needs a 2-D tensor");
  if (!(scale_max > 0.0)) throw ShapeError("PGM scale_max must be positive");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out << "P5\n" << img.dim(1) << " " << img.dim(0) << "\n255\n";
  for (Index i = 0; i < img.size(); ++i) {
    const double v = std::clamp(img(i) / scale_max, 0.0, 1.0);
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace odemri
