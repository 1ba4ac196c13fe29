#include "fedpg/extended.hpp"

#include <cmath>

namespace fedpg {

std::vector<ExtendedMdp> build_extended_mdp(const FrlInstance& padded, const BitCodec& codec) {
  if (padded.n_actions() != codec.n_actions()) {
    throw Error(ErrorCode::CodecMismatch, "instance action count does not match the codec");
  }
  const int ns = padded.n_states();
  const int nodes = codec.n_nodes();
  const int k = codec.k();
  const int nbar = ns * nodes;
  const double gbar = std::pow(padded.gamma(), 1.0 / k);
  const double leaf_scale = std::pow(gbar, -(k - 1));

  Matrix reward = Matrix::Zero(nbar, 2);
  Vector rho = Vector::Zero(nbar);
  for (int s = 0; s < ns; ++s) rho(codec.ext_state(s, 0)) = padded.rho()(s);

  std::vector<ExtendedMdp> out;
  for (const Mdp& m : padded.agents) {
    Matrix kernel = Matrix::Zero(nbar * 2, nbar);
    for (int s = 0; s < ns; ++s) {
      for (int node = 0; node < nodes; ++node) {
        const int d = BitCodec::depth(node);
        const int es = codec.ext_state(s, node);
        for (int bit = 0; bit < 2; ++bit) {
          const int r = es * 2 + bit;
          if (d == k - 1) {
            const int a = ((node - ((1 << d) - 1)) << 1) | bit;
            for (int t = 0; t < ns; ++t) kernel(r, codec.ext_state(t, 0)) = m.p(s, a, t);
            reward(es, bit) = leaf_scale * m.reward(s, a);
          } else {
            kernel(r, codec.ext_state(s, BitCodec::child(node, bit))) = 1.0;
          }
        }
      }
    }
    Mdp e;
    e.n_states = nbar;
    e.n_actions = 2;
    e.gamma = gbar;
    e.kernel = std::move(kernel);
    e.reward = reward;
    e.rho = rho;
    out.push_back({std::move(e), codec, ns});
  }
  return out;
}

FrlInstance extended_instance(const FrlInstance& padded, const BitCodec& codec) {
  std::vector<Mdp> mdps;
  for (auto& e : build_extended_mdp(padded, codec)) mdps.push_back(std::move(e.mdp));
  return new_frl_instance(std::move(mdps));
}

}  // namespace fedpg
