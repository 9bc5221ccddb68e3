#include "arinar/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "arinar/errors.hpp"

namespace arinar {

namespace {

void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_le(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
      std::swap(buf[i], buf[sizeof(T) - 1 - i]);
    }
  }
  write_bytes(os, buf, sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const char* field) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) {
    throw FormatError(std::string("container: truncated while reading ") +
                      field);
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
      std::swap(buf[i], buf[sizeof(T) - 1 - i]);
    }
  }
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

template <typename T>
void write_array_le(std::ostream& os, const std::vector<T>& v) {
  for (T x : v) write_le(os, x);
}

template <typename T>
void read_array_le(std::istream& is, std::vector<T>& v, std::uint64_t n,
                   const char* field) {
  if (n > (1ull << 33)) {
    throw FormatError(std::string("container: implausible size for ") + field);
  }
  v.resize(static_cast<std::size_t>(n));
  for (auto& x : v) x = read_le<T>(is, field);
}

}  // namespace

std::uint64_t Entry::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

const Entry& Container::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw FormatError("container: missing entry '" + name + "'");
  }
  return it->second;
}

Entry& Container::put(const std::string& name) { return entries_[name]; }

void Container::put_f64(const std::string& name,
                        std::vector<std::uint64_t> dims,
                        std::vector<double> data) {
  Entry& e = entries_[name];
  e = Entry{};
  e.dtype = Dtype::F64;
  e.dims = std::move(dims);
  e.f64 = std::move(data);
}

void Container::put_f32(const std::string& name,
                        std::vector<std::uint64_t> dims,
                        std::vector<float> data) {
  Entry& e = entries_[name];
  e = Entry{};
  e.dtype = Dtype::F32;
  e.dims = std::move(dims);
  e.f32 = std::move(data);
}

void Container::put_i32(const std::string& name,
                        std::vector<std::uint64_t> dims,
                        std::vector<std::int32_t> data) {
  Entry& e = entries_[name];
  e = Entry{};
  e.dtype = Dtype::I32;
  e.dims = std::move(dims);
  e.i32 = std::move(data);
}

void Container::put_bytes(const std::string& name, std::string data) {
  Entry& e = entries_[name];
  e = Entry{};
  e.dtype = Dtype::Bytes;
  e.dims = {data.size()};
  e.bytes = std::move(data);
}

void Container::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("container: cannot open '" + path + "' for writing");

  write_bytes(os, "ARNR", 4);
  write_le<std::uint32_t>(os, kVersion);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(entries_.size()));

  for (const auto& [name, e] : entries_) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw Error("container: entry name too long");
    }
    write_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    write_bytes(os, name.data(), name.size());
    write_le<std::uint8_t>(os, static_cast<std::uint8_t>(e.dtype));
    write_le<std::uint8_t>(os, static_cast<std::uint8_t>(e.dims.size()));
    for (auto d : e.dims) write_le<std::uint64_t>(os, d);
    switch (e.dtype) {
      case Dtype::F32:
        write_array_le(os, e.f32);
        break;
      case Dtype::I32:
        write_array_le(os, e.i32);
        break;
      case Dtype::F64:
        write_array_le(os, e.f64);
        break;
      case Dtype::Bytes:
        write_bytes(os, e.bytes.data(), e.bytes.size());
        break;
    }
  }
  if (!os) throw Error("container: write failed for '" + path + "'");
}

Container Container::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("container: cannot open '" + path + "'");

  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "ARNR", 4) != 0) {
    throw FormatError("container: bad magic (expected ARNR)");
  }
  const auto version = read_le<std::uint32_t>(is, "version");
  if (version != kVersion) {
    throw FormatError("container: unsupported version " +
                      std::to_string(version));
  }
  const auto count = read_le<std::uint32_t>(is, "entry count");

  Container c;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_le<std::uint16_t>(is, "name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) {
      throw FormatError("container: truncated while reading entry name");
    }
    Entry e;
    const auto dtype = read_le<std::uint8_t>(is, "dtype");
    if (dtype > 3) {
      throw FormatError("container: unknown dtype code for '" + name + "'");
    }
    e.dtype = static_cast<Dtype>(dtype);
    const auto rank = read_le<std::uint8_t>(is, "rank");
    for (std::uint8_t r = 0; r < rank; ++r) {
      e.dims.push_back(read_le<std::uint64_t>(is, "dims"));
    }
    const std::uint64_t n = e.element_count();
    switch (e.dtype) {
      case Dtype::F32:
        read_array_le(is, e.f32, n, name.c_str());
        break;
      case Dtype::I32:
        read_array_le(is, e.i32, n, name.c_str());
        break;
      case Dtype::F64:
        read_array_le(is, e.f64, n, name.c_str());
        break;
      case Dtype::Bytes: {
        if (e.dims.size() != 1 || n > (1ull << 33)) {
          throw FormatError("container: bad bytes entry '" + name + "'");
        }
        e.bytes.resize(static_cast<std::size_t>(n));
        if (!is.read(e.bytes.data(),
                     static_cast<std::streamsize>(e.bytes.size()))) {
          throw FormatError("container: truncated bytes entry '" + name + "'");
        }
        break;
      }
    }
    c.entries_[name] = std::move(e);
  }
  return c;
}

}  // namespace arinar
