#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace talescale::zip {

struct Entry {
  std::string name;  // UTF-8, '/' separated
  std::string data;
};

// Writes a store-only (uncompressed) zip with every timestamp pinned to the
// DOS epoch. Entries are written in the order given.
std::string write(const std::vector<Entry>& entries);

// Reads a store-only zip written by `write` (or any zip whose entries are
// stored, not deflated). Verifies each entry's CRC-32 and throws
// ChecksumError naming the entry on mismatch, ValidationError on structural
// damage.
std::vector<Entry> read(std::string_view archive);

}  // namespace talescale::zip
