#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace arinar {

// Flat binary container used for both datasets and checkpoints.
// Layout (all little-endian):
//   magic "ARNR" (4 bytes) | version u32 | entry count u32
//   per entry: name length u16 | UTF-8 name | dtype u8 | rank u8
//              | dims u64 each | raw data
// dtype codes: 0=f32, 1=i32, 2=f64, 3=bytes (rank 1, dim = byte count).
enum class Dtype : std::uint8_t { F32 = 0, I32 = 1, F64 = 2, Bytes = 3 };

struct Entry {
  Dtype dtype = Dtype::F64;
  std::vector<std::uint64_t> dims;
  std::vector<float> f32;
  std::vector<std::int32_t> i32;
  std::vector<double> f64;
  std::string bytes;

  std::uint64_t element_count() const;
};

class Container {
 public:
  static constexpr std::uint32_t kVersion = 1;

  bool has(const std::string& name) const { return entries_.count(name) > 0; }
  const Entry& at(const std::string& name) const;  // FormatError if missing
  Entry& put(const std::string& name);             // insert or overwrite
  const std::map<std::string, Entry>& entries() const { return entries_; }

  void put_f64(const std::string& name, std::vector<std::uint64_t> dims,
               std::vector<double> data);
  void put_f32(const std::string& name, std::vector<std::uint64_t> dims,
               std::vector<float> data);
  void put_i32(const std::string& name, std::vector<std::uint64_t> dims,
               std::vector<std::int32_t> data);
  void put_bytes(const std::string& name, std::string data);

  void save(const std::string& path) const;
  static Container load(const std::string& path);  // FormatError on corruption

 private:
  std::map<std::string, Entry> entries_;
};

}  // namespace arinar
