#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "tsad/autodiff.hpp"
#include "tsad/encoder.hpp"
#include "tsad/errors.hpp"

namespace tsad {

enum class LossVariant { symmetric_kl, simple_kl, js };
enum class ViewPairing { both, intra_only, inter_only };

struct LossConfig {
  LossVariant variant = LossVariant::symmetric_kl;
  ViewPairing pairing = ViewPairing::both;
  bool stop_intra = true;  // stop the first view inside the second view's loss
  bool stop_inter = true;  // stop the second view inside the first view's loss
  double epsilon = 1e-8;
};

// One contrastive unit: the maps playing the intra role and the inter role,
// per component. Default pairing is intra vs inter of the same channel;
// single-view ablations pair the same view across consecutive channels.
struct ViewPair {
  std::array<NodeId, 2> first;   // intra role
  std::array<NodeId, 2> second;  // inter role
};

inline std::vector<ViewPair> make_view_pairs(const EncodedWindow& ew, ViewPairing pairing) {
  std::vector<ViewPair> pairs;
  std::size_t channels = ew.intra.size();
  switch (pairing) {
    case ViewPairing::both:
      for (std::size_t c = 0; c < channels; ++c) pairs.push_back({ew.intra[c], ew.inter[c]});
      break;
    case ViewPairing::intra_only:
    case ViewPairing::inter_only: {
      if (channels < 2 || channels % 2 != 0)
        throw ConfigError("single-view pairing needs an even channel count >= 2, got " +
                          std::to_string(channels));
      const auto& maps = pairing == ViewPairing::intra_only ? ew.intra : ew.inter;
      for (std::size_t c = 0; c + 1 < channels; c += 2) pairs.push_back({maps[c], maps[c + 1]});
      break;
    }
  }
  return pairs;
}

// KL(p||q) summed over all entries, with both logs clamped at eps.
template <typename S>
NodeId kl_node(Graph<S>& g, NodeId p, NodeId q, double eps) {
  NodeId lp = g.log_clamped(p, static_cast<S>(eps));
  NodeId lq = g.log_clamped(q, static_cast<S>(eps));
  NodeId diff = g.add({lp, g.scale(lq, S(-1))});
  return g.sum(g.mul(p, diff));
}

template <typename S>
struct LossNodes {
  NodeId total = 0;
  NodeId intra = 0;  // first-role loss, the quantity worth monitoring
  NodeId inter = 0;
  std::size_t pair_count = 0;
};

// First-role loss trains the first view against a frozen second view and vice
// versa; the total is their difference over the pair count. Its forward value
// is identically zero whenever both losses see the same map values, which is
// why the monitored quantity is the first-role loss.
template <typename S>
LossNodes<S> build_loss(Graph<S>& g, const EncodedWindow& ew, const LossConfig& cfg) {
  auto pairs = make_view_pairs(ew, cfg.pairing);

  auto guard_first = [&](NodeId id) { return cfg.stop_intra ? g.stop_gradient(id) : id; };
  auto guard_second = [&](NodeId id) { return cfg.stop_inter ? g.stop_gradient(id) : id; };

  std::vector<NodeId> first_terms, second_terms;
  for (const ViewPair& pair : pairs) {
    for (std::size_t comp = 0; comp < 2; ++comp) {
      NodeId a = pair.first[comp];
      NodeId b = pair.second[comp];
      switch (cfg.variant) {
        case LossVariant::symmetric_kl: {
          NodeId b_stopped = guard_second(b);
          first_terms.push_back(kl_node(g, a, b_stopped, cfg.epsilon));
          first_terms.push_back(kl_node(g, b_stopped, a, cfg.epsilon));
          NodeId a_stopped = guard_first(a);
          second_terms.push_back(kl_node(g, b, a_stopped, cfg.epsilon));
          second_terms.push_back(kl_node(g, a_stopped, b, cfg.epsilon));
          break;
        }
        case LossVariant::simple_kl: {
          first_terms.push_back(kl_node(g, a, guard_second(b), cfg.epsilon));
          second_terms.push_back(kl_node(g, b, guard_first(a), cfg.epsilon));
          break;
        }
        case LossVariant::js: {
          NodeId b_stopped = guard_second(b);
          NodeId m1 = g.scale(g.add({a, b_stopped}), S(0.5));
          first_terms.push_back(g.scale(g.add({kl_node(g, a, m1, cfg.epsilon),
                                               kl_node(g, b_stopped, m1, cfg.epsilon)}),
                                        S(0.5)));
          NodeId a_stopped = guard_first(a);
          NodeId m2 = g.scale(g.add({b, a_stopped}), S(0.5));
          second_terms.push_back(g.scale(g.add({kl_node(g, b, m2, cfg.epsilon),
                                                kl_node(g, a_stopped, m2, cfg.epsilon)}),
                                         S(0.5)));
          break;
        }
      }
    }
  }

  LossNodes<S> out;
  out.pair_count = pairs.size();
  out.intra = g.add(std::move(first_terms));
  out.inter = g.add(std::move(second_terms));
  S inv = static_cast<S>(1.0 / static_cast<double>(out.pair_count));
  out.total = g.scale(g.add({out.intra, g.scale(out.inter, S(-1))}), inv);
  return out;
}

}  // namespace tsad
