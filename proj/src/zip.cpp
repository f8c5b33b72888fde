#include "talescale/zip.hpp"

#include <zlib.h>

#include <cstdint>
#include <limits>
#include <set>

#include "talescale/errors.hpp"

namespace talescale::zip {

namespace {

constexpr std::uint32_t kLocalSig = 0x04034b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kEndSig = 0x06054b50;
constexpr std::uint16_t kVersion = 20;
constexpr std::uint16_t kUtf8Flag = 0x0800;
constexpr std::uint16_t kDosDate = 0x0021;  // 1980-01-01
constexpr std::uint16_t kDosTime = 0;

void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t crc_of(std::string_view data) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t off = 0;
  while (off < data.size()) {
    const auto n = static_cast<uInt>(
        std::min<std::size_t>(data.size() - off, std::numeric_limits<uInt>::max()));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data.data() + off), n);
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

class Cursor {
 public:
  Cursor(std::string_view buf, std::size_t pos) : buf_(buf), pos_(pos) {}

  std::uint16_t u16() {
    need(2);
    auto v = static_cast<std::uint16_t>(byte(0) | (byte(1) << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | byte(i);
    pos_ += 4;
    return v;
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto v = buf_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  void skip(std::size_t n) { bytes(n); }

 private:
  std::uint32_t byte(std::size_t i) const {
    return static_cast<unsigned char>(buf_[pos_ + i]);
  }
  void need(std::size_t n) const {
    if (pos_ > buf_.size() || buf_.size() - pos_ < n) {
      throw ValidationError("zip archive is truncated");
    }
  }

  std::string_view buf_;
  std::size_t pos_;
};

}  // namespace

std::string write(const std::vector<Entry>& entries) {
  std::string out;
  std::string central;
  for (const auto& e : entries) {
    if (e.name.size() > 0xFFFF || e.data.size() >= 0xFFFFFFFFu ||
        out.size() >= 0xFFFFFFFFu) {
      throw ValidationError("zip entry too large: " + e.name);
    }
    const auto offset = static_cast<std::uint32_t>(out.size());
    const auto crc = crc_of(e.data);
    const auto size = static_cast<std::uint32_t>(e.data.size());
    const auto name_len = static_cast<std::uint16_t>(e.name.size());

    put32(out, kLocalSig);
    put16(out, kVersion);
    put16(out, kUtf8Flag);
    put16(out, 0);  // stored
    put16(out, kDosTime);
    put16(out, kDosDate);
    put32(out, crc);
    put32(out, size);
    put32(out, size);
    put16(out, name_len);
    put16(out, 0);
    out += e.name;
    out += e.data;

    put32(central, kCentralSig);
    put16(central, kVersion);
    put16(central, kVersion);
    put16(central, kUtf8Flag);
    put16(central, 0);
    put16(central, kDosTime);
    put16(central, kDosDate);
    put32(central, crc);
    put32(central, size);
    put32(central, size);
    put16(central, name_len);
    put16(central, 0);  // extra
    put16(central, 0);  // comment
    put16(central, 0);  // disk
    put16(central, 0);  // internal attrs
    put32(central, 0);  // external attrs
    put32(central, offset);
    central += e.name;
  }
  if (entries.size() > 0xFFFF) throw ValidationError("too many zip entries");
  const auto cd_offset = static_cast<std::uint32_t>(out.size());
  out += central;
  put32(out, kEndSig);
  put16(out, 0);
  put16(out, 0);
  put16(out, static_cast<std::uint16_t>(entries.size()));
  put16(out, static_cast<std::uint16_t>(entries.size()));
  put32(out, static_cast<std::uint32_t>(central.size()));
  put32(out, cd_offset);
  put16(out, 0);
  return out;
}

std::vector<Entry> read(std::string_view archive) {
  if (archive.size() < 22) throw ValidationError("not a zip archive");
  // The end record sits in the last 22 + comment bytes.
  std::size_t eocd = std::string_view::npos;
  const std::size_t lowest = archive.size() > 22 + 0xFFFF ? archive.size() - 22 - 0xFFFF : 0;
  for (std::size_t i = archive.size() - 22 + 1; i-- > lowest;) {
    if (Cursor(archive, i).u32() == kEndSig) {
      eocd = i;
      break;
    }
  }
  if (eocd == std::string_view::npos) throw ValidationError("zip end record not found");

  Cursor end(archive, eocd + 4);
  end.skip(4);
  const auto count = end.u16();
  if (end.u16() != count) throw ValidationError("multi-disk zip archives are unsupported");
  end.skip(4);
  const auto cd_offset = end.u32();

  std::vector<Entry> out;
  std::set<std::string> seen;
  Cursor cd(archive, cd_offset);
  for (std::uint16_t i = 0; i < count; ++i) {
    if (cd.u32() != kCentralSig) throw ValidationError("corrupt zip central directory");
    cd.skip(4);
    cd.skip(2);  // flags
    const auto method = cd.u16();
    cd.skip(4);
    const auto crc = cd.u32();
    const auto csize = cd.u32();
    const auto usize = cd.u32();
    const auto name_len = cd.u16();
    const auto extra_len = cd.u16();
    const auto comment_len = cd.u16();
    cd.skip(8);
    const auto local_offset = cd.u32();
    std::string name(cd.bytes(name_len));
    cd.skip(extra_len + comment_len);

    if (method != 0 || csize != usize) {
      throw ValidationError("zip entry '" + name + "' is compressed; only stored entries are supported");
    }
    Cursor local(archive, local_offset);
    if (local.u32() != kLocalSig) {
      throw ValidationError("corrupt zip local header for '" + name + "'");
    }
    local.skip(22);
    const auto lname_len = local.u16();
    const auto lextra_len = local.u16();
    if (local.bytes(lname_len) != name) {
      throw ValidationError("zip local header name mismatch for '" + name + "'");
    }
    local.skip(lextra_len);
    std::string data(local.bytes(csize));
    if (crc_of(data) != crc) {
      throw ChecksumError(name, "checksum mismatch in archive entry '" + name + "'");
    }
    if (!seen.insert(name).second) {
      throw ValidationError("duplicate zip entry '" + name + "'");
    }
    out.push_back(Entry{std::move(name), std::move(data)});
  }
  return out;
}

}  // namespace talescale::zip
