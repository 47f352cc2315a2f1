#include "tricue/npy.hpp"

#include "tricue/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>

namespace tricue::npy {
namespace {

static_assert(std::endian::native == std::endian::little,
              "NPY payloads are read and written in native little-endian order");

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;

template <class T>
constexpr const char* descr();
template <>
constexpr const char* descr<float>() { return "<f4"; }
template <>
constexpr const char* descr<double>() { return "<f8"; }
template <>
constexpr const char* descr<std::int64_t>() { return "<i8"; }

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << shape[i];
    if (shape.size() == 1 || i + 1 < shape.size()) os << ',';
    if (i + 1 < shape.size()) os << ' ';
  }
  os << ')';
  return os.str();
}

std::size_t element_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

struct Header {
  std::string descr;
  bool fortran_order = false;
  std::vector<std::size_t> shape;
};

Header parse_header(const std::string& text, const std::filesystem::path& path) {
  Header h;
  std::smatch m;
  static const std::regex descr_re(R"('descr'\s*:\s*'([^']+)')");
  static const std::regex fortran_re(R"('fortran_order'\s*:\s*(True|False))");
  static const std::regex shape_re(R"('shape'\s*:\s*\(([^)]*)\))");
  if (!std::regex_search(text, m, descr_re))
    throw FormatError("npy header missing 'descr': " + path.string());
  h.descr = m[1];
  if (!std::regex_search(text, m, fortran_re))
    throw FormatError("npy header missing 'fortran_order': " + path.string());
  h.fortran_order = m[1] == "True";
  if (!std::regex_search(text, m, shape_re))
    throw FormatError("npy header missing 'shape': " + path.string());
  std::string dims = m[1];
  std::stringstream ss(dims);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto first = tok.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(tok.substr(first), &pos);
      if (v < 0) throw std::invalid_argument("negative");
      h.shape.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw FormatError("npy header has malformed shape '" + dims + "': " + path.string());
    }
  }
  return h;
}

}  // namespace

template <class T>
void save(const std::filesystem::path& path, std::span<const T> data,
          const std::vector<std::size_t>& shape) {
  if (element_count(shape) != data.size())
    throw PreconditionError("npy::save: shape does not match data size for " + path.string());

  std::string dict = std::string("{'descr': '") + descr<T>() +
                     "', 'fortran_order': False, 'shape': " + shape_string(shape) + ", }";
  // Total header (magic + version + length + dict + newline) is padded to 64 bytes.
  const std::size_t prefix = kMagicLen + 2 + 2;
  std::size_t total = prefix + dict.size() + 1;
  const std::size_t padded = (total + 63) / 64 * 64;
  dict.append(padded - total, ' ');
  dict.push_back('\n');
  if (dict.size() > 0xFFFF) throw FormatError("npy header too large: " + path.string());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(kMagic, kMagicLen);
  const char version[2] = {1, 0};
  out.write(version, 2);
  const auto len = static_cast<std::uint16_t>(dict.size());
  const char len_bytes[2] = {static_cast<char>(len & 0xFF), static_cast<char>(len >> 8)};
  out.write(len_bytes, 2);
  out.write(dict.data(), static_cast<std::streamsize>(dict.size()));
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size_bytes()));
  if (!out) throw IoError("write failed: " + path.string());
}

template <class T>
Array<T> load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());

  char magic[kMagicLen];
  unsigned char version[2];
  if (!in.read(magic, kMagicLen) || std::memcmp(magic, kMagic, kMagicLen) != 0)
    throw FormatError("not an npy file (bad magic): " + path.string());
  if (!in.read(reinterpret_cast<char*>(version), 2))
    throw FormatError("truncated npy header: " + path.string());

  std::size_t header_len = 0;
  if (version[0] == 1) {
    unsigned char b[2];
    if (!in.read(reinterpret_cast<char*>(b), 2))
      throw FormatError("truncated npy header: " + path.string());
    header_len = b[0] | (std::size_t{b[1]} << 8);
  } else if (version[0] == 2 || version[0] == 3) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
      throw FormatError("truncated npy header: " + path.string());
    header_len = b[0] | (std::size_t{b[1]} << 8) | (std::size_t{b[2]} << 16) |
                 (std::size_t{b[3]} << 24);
  } else {
    throw FormatError("unsupported npy version " + std::to_string(version[0]) + ": " +
                      path.string());
  }

  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len)))
    throw FormatError("truncated npy header: " + path.string());

  const Header h = parse_header(text, path);
  if (h.descr != descr<T>())
    throw FormatError("npy dtype '" + h.descr + "' where '" + descr<T>() +
                      "' was expected: " + path.string());
  if (h.fortran_order)
    throw FormatError("fortran-ordered npy arrays are not supported: " + path.string());

  Array<T> arr;
  arr.shape = h.shape;
  arr.data.resize(element_count(h.shape));
  const auto bytes = static_cast<std::streamsize>(arr.data.size() * sizeof(T));
  if (!in.read(reinterpret_cast<char*>(arr.data.data()), bytes))
    throw FormatError("truncated npy payload: " + path.string());
  return arr;
}

template void save<float>(const std::filesystem::path&, std::span<const float>,
                          const std::vector<std::size_t>&);
template void save<double>(const std::filesystem::path&, std::span<const double>,
                           const std::vector<std::size_t>&);
template void save<std::int64_t>(const std::filesystem::path&, std::span<const std::int64_t>,
                                 const std::vector<std::size_t>&);
template Array<float> load<float>(const std::filesystem::path&);
template Array<double> load<double>(const std::filesystem::path&);
template Array<std::int64_t> load<std::int64_t>(const std::filesystem::path&);

namespace {

template <class Matrix>
void save_matrix_impl(const std::filesystem::path& path, const Matrix& m) {
  using T = typename Matrix::Scalar;
  save<T>(path, std::span<const T>(m.data(), static_cast<std::size_t>(m.size())),
          {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
}

template <class Matrix>
Matrix load_matrix_impl(const std::filesystem::path& path) {
  using T = typename Matrix::Scalar;
  auto arr = load<T>(path);
  if (arr.shape.size() != 2)
    throw FormatError("expected a 2-D array in " + path.string() + ", got " +
                      std::to_string(arr.shape.size()) + "-D");
  Matrix m(static_cast<Index>(arr.shape[0]), static_cast<Index>(arr.shape[1]));
  if (!arr.data.empty()) std::memcpy(m.data(), arr.data.data(), arr.data.size() * sizeof(T));
  return m;
}

}  // namespace

void save_matrix(const std::filesystem::path& path, const RowMatrixF& m) {
  save_matrix_impl(path, m);
}
void save_matrix(const std::filesystem::path& path, const RowMatrixD& m) {
  save_matrix_impl(path, m);
}
RowMatrixF load_matrix_f(const std::filesystem::path& path) {
  return load_matrix_impl<RowMatrixF>(path);
}
RowMatrixD load_matrix_d(const std::filesystem::path& path) {
  return load_matrix_impl<RowMatrixD>(path);
}

}  // namespace tricue::npy
