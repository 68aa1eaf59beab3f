#pragma once

#include <string>

#include "dfgp/model.hpp"

namespace dfgp {

/// Binary parameter archive: magic + format version, the run's config echo,
/// the ordered series id list, then one record per tensor as
/// name -> shape -> row-major 64-bit values. Raw IEEE-754 bytes, so a
/// save/load round trip is bit-exact and identical runs produce identical
/// files.
void save_checkpoint(const std::string& path, const ModelParams& params,
                     const std::string& config_echo);

struct Checkpoint {
  ModelParams params;
  std::string config_echo;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace dfgp
