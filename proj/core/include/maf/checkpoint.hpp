#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "maf/tensor.hpp"

namespace maf {

// Portable binary checkpoint. Layout: the 8-byte magic "MAFCKPT1", then one
// record per tensor until EOF:
//   u64 name length | UTF-8 name | u64 rank | u64 dims[rank] | f64 values
// all integers and floats little-endian.
inline constexpr char kCheckpointMagic[8] = {'M', 'A', 'F', 'C', 'K', 'P', 'T', '1'};

void write_checkpoint(const std::filesystem::path& path,
                      const std::map<std::string, Tensor>& tensors);

std::map<std::string, Tensor> read_checkpoint(const std::filesystem::path& path);

// optimizer state records share the checkpoint with this prefix
inline const std::string kVelocityPrefix = "opt.velocity/";

struct MafModel;  // fwd

}  // namespace maf
