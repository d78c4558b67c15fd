#pragma once

#include <filesystem>
#include <string>

#include "tjaidl/trainer.hpp"

namespace tjaidl {

/// Text checkpoint, version 1:
///
///   tjaidl-checkpoint 1
///   meta <key> <value>
///   tensor <name> <ndim> <dim>... <value>...
///   adam <group> <step-count>
///
/// Values are printed with 17 significant digits, so a load/save cycle is
/// bit-exact. Optimizer moments are stored as tensors named
/// "adam.<group>.m.<k>" and "adam.<group>.v.<k>".
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(const std::string& text);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
/// Throws MissingCheckpointError when the file does not exist.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tjaidl
