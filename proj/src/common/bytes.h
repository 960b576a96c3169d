#ifndef MIGRSIM_COMMON_BYTES_H_
#define MIGRSIM_COMMON_BYTES_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace migrsim {

// Appends big-endian fields to a byte vector.
class ByteWriter {
 public:
  explicit ByteWriter(std::vector<uint8_t>& out) : out_(out) {}

  void U8(uint8_t v) { out_.push_back(v); }
  void U16(uint16_t v) { Put(v, 2); }
  void U32(uint32_t v) { Put(v, 4); }
  void U64(uint64_t v) { Put(v, 8); }
  void Bytes(std::span<const uint8_t> b) {
    out_.insert(out_.end(), b.begin(), b.end());
  }

  std::size_t size() const { return out_.size(); }

  // Overwrites a previously written u32 at `offset`.
  void PatchU32(std::size_t offset, uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      out_[offset + i] = static_cast<uint8_t>(v >> (8 * (3 - i)));
    }
  }

 private:
  void Put(uint64_t v, int n) {
    for (int i = n - 1; i >= 0; --i) {
      out_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
  }

  std::vector<uint8_t>& out_;
};

// Reads big-endian fields. Underflow latches a failure flag and yields zeros;
// callers check ok() once after decoding a structure.
class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> data) : data_(data) {}

  uint8_t U8() { return static_cast<uint8_t>(Get(1)); }
  uint16_t U16() { return static_cast<uint16_t>(Get(2)); }
  uint32_t U32() { return static_cast<uint32_t>(Get(4)); }
  uint64_t U64() { return Get(8); }

  std::span<const uint8_t> Bytes(std::size_t n) {
    if (!Need(n)) return {};
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  bool ok() const { return ok_; }
  std::size_t remaining() const { return ok_ ? data_.size() - pos_ : 0; }
  std::size_t position() const { return pos_; }

 private:
  bool Need(std::size_t n) {
    if (!ok_ || data_.size() - pos_ < n) {
      ok_ = false;
      return false;
    }
    return true;
  }

  uint64_t Get(int n) {
    if (!Need(static_cast<std::size_t>(n))) return 0;
    uint64_t v = 0;
    for (int i = 0; i < n; ++i) v = (v << 8) | data_[pos_ + i];
    pos_ += n;
    return v;
  }

  std::span<const uint8_t> data_;
  std::size_t pos_ = 0;
  bool ok_ = true;
};

}  // namespace migrsim

#endif  // MIGRSIM_COMMON_BYTES_H_
