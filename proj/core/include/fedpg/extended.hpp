#pragma once

#include <vector>

#include "fedpg/mdp.hpp"
#include "fedpg/policy.hpp"

namespace fedpg {

// Two-action bit-level MDP over extended states (s, w), |w| < k, with
// discount gamma^(1/k).
struct ExtendedMdp {
  Mdp mdp;
  BitCodec codec;
  int base_states;
};

std::vector<ExtendedMdp> build_extended_mdp(const FrlInstance& padded, const BitCodec& codec);
FrlInstance extended_instance(const FrlInstance& padded, const BitCodec& codec);

}  // namespace fedpg
