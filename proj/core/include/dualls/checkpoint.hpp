#pragma once

#include <filesystem>
#include <string>

#include "dualls/runner.hpp"

namespace dualls {

inline constexpr const char* kCheckpointFormat = "dualls-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::string run_id;
  std::string config_hash;
  RunSnapshot snapshot;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// JSON text. Doubles are written with round-trip precision, so a load
// reproduces every parameter bit for bit.
std::string checkpoint_to_string(const Checkpoint& checkpoint);
// Throws InputError on malformed input or a format/version mismatch.
Checkpoint checkpoint_from_string(const std::string& text);

// Writes to a temporary file and renames it over `path`.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dualls
