#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "maclearn/nn.hpp"

namespace maclearn {

// Versioned text checkpoint holding one or more networks plus string
// metadata. Parameters are written as hex floats, so round-trips are exact.
struct Checkpoint {
  std::string kind;  // "phi" | "actor" | "evaluator" | ...
  std::map<std::string, std::string> meta;
  std::vector<Mlp> nets;

  std::string meta_at(const std::string& key) const;  // throws IntegrityError if absent
  int meta_int(const std::string& key) const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& text);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Writes via a temp file plus rename, so readers never observe partial files.
void atomic_write_file(const std::string& path, std::string_view contents);
std::string read_file(const std::string& path);

// FNV-1a 64-bit, used for config and artifact fingerprints.
std::uint64_t fnv1a(std::string_view bytes);
std::uint64_t fnv1a_file(const std::string& path);
std::string hash_hex(std::uint64_t h);

}  // namespace maclearn
