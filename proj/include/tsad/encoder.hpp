#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tsad/autodiff.hpp"
#include "tsad/decomposition.hpp"
#include "tsad/errors.hpp"
#include "tsad/matrix.hpp"
#include "tsad/patching.hpp"

namespace tsad {

struct EncoderConfig {
  std::size_t d_model = 128;
  std::size_t heads = 1;
  std::size_t layers = 2;
};

inline void validate_encoder_config(const EncoderConfig& cfg) {
  if (cfg.d_model == 0 || cfg.heads == 0 || cfg.layers == 0)
    throw ConfigError("d_model, heads and layers must be positive");
  if (cfg.d_model % cfg.heads != 0)
    throw ConfigError("d_model must be divisible by heads (d_model " +
                      std::to_string(cfg.d_model) + ", heads " + std::to_string(cfg.heads) + ")");
}

// Query/key projections are shared between trend and cyclical components and
// between the intra and inter views; only the token embeddings are per view.
template <typename S>
struct EncoderParams {
  EncoderConfig cfg;
  struct ChannelKernels {
    Matrix<S> intra;  // (3N) x d_model
    Matrix<S> inter;  // (3P) x d_model
  };
  std::vector<ChannelKernels> channels;
  struct HeadQK {
    Matrix<S> w_q;  // (d_model/h) x (d_model/h)
    Matrix<S> w_k;
  };
  std::vector<std::vector<HeadQK>> layers;  // [layer][head]
};

// Fixed visit order; the optimizer, checkpoint and gradient extraction all
// rely on it being stable.
template <typename S, typename F>
void for_each_parameter(EncoderParams<S>& p, F&& f) {
  for (std::size_t c = 0; c < p.channels.size(); ++c) {
    f("channel" + std::to_string(c) + ".intra_kernel", p.channels[c].intra);
    f("channel" + std::to_string(c) + ".inter_kernel", p.channels[c].inter);
  }
  for (std::size_t l = 0; l < p.layers.size(); ++l)
    for (std::size_t h = 0; h < p.layers[l].size(); ++h) {
      std::string base = "layer" + std::to_string(l) + ".head" + std::to_string(h);
      f(base + ".w_q", p.layers[l][h].w_q);
      f(base + ".w_k", p.layers[l][h].w_k);
    }
}

template <typename S, typename F>
void for_each_parameter(const EncoderParams<S>& p, F&& f) {
  for_each_parameter(const_cast<EncoderParams<S>&>(p),
                     [&](const std::string& name, Matrix<S>& m) {
                       f(name, static_cast<const Matrix<S>&>(m));
                     });
}

template <typename S>
EncoderParams<S> init_encoder(const EncoderConfig& cfg, const PatchConfig& patches,
                              std::uint64_t seed) {
  validate_encoder_config(cfg);
  validate_patch_config(patches);
  EncoderParams<S> p;
  p.cfg = cfg;
  std::mt19937 gen(static_cast<std::uint32_t>(seed));
  auto fill_uniform = [&](Matrix<S>& m, std::size_t fan_in) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : m.data) v = static_cast<S>(dist(gen));
  };
  for (std::size_t patch : patches.patch_sizes) {
    std::size_t count = patches.window / patch;
    typename EncoderParams<S>::ChannelKernels ck;
    ck.intra = Matrix<S>(3 * count, cfg.d_model);
    fill_uniform(ck.intra, 3 * count);
    ck.inter = Matrix<S>(3 * patch, cfg.d_model);
    fill_uniform(ck.inter, 3 * patch);
    p.channels.push_back(std::move(ck));
  }
  std::size_t dh = cfg.d_model / cfg.heads;
  p.layers.resize(cfg.layers);
  for (std::size_t l = 0; l < cfg.layers; ++l)
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      typename EncoderParams<S>::HeadQK qk;
      qk.w_q = Matrix<S>(dh, dh);
      fill_uniform(qk.w_q, dh);
      qk.w_k = Matrix<S>(dh, dh);
      fill_uniform(qk.w_k, dh);
      p.layers[l].push_back(std::move(qk));
    }
  return p;
}

// Leaf ids of the parameters inside one window's graph.
struct EncoderNodeIds {
  struct ChannelIds {
    NodeId intra = 0, inter = 0;
  };
  std::vector<ChannelIds> channels;
  struct QKIds {
    NodeId w_q = 0, w_k = 0;
  };
  std::vector<std::vector<QKIds>> layers;
};

template <typename S>
EncoderNodeIds bind_encoder(Graph<S>& g, const EncoderParams<S>& p) {
  EncoderNodeIds ids;
  for (const auto& ck : p.channels)
    ids.channels.push_back({g.leaf(ck.intra), g.leaf(ck.inter)});
  ids.layers.resize(p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l)
    for (const auto& qk : p.layers[l])
      ids.layers[l].push_back({g.leaf(qk.w_q), g.leaf(qk.w_k)});
  return ids;
}

// Per head: Q = E W_q', K = E W_k' on that head's column slice, then a
// row-softmax of QK'/sqrt(d_model/h). The value-free map IS the
// representation. With one head the single softmax map is returned as is;
// with several the per-head maps are averaged so the result stays a
// row-stochastic tokens x tokens matrix.
template <typename S>
NodeId attention_map_node(Graph<S>& g, NodeId embed,
                          const std::vector<EncoderNodeIds::QKIds>& head_qk,
                          const EncoderConfig& cfg) {
  if (head_qk.size() != cfg.heads)
    throw ConfigError("attention layer carries " + std::to_string(head_qk.size()) +
                      " head projections, config says " + std::to_string(cfg.heads));
  std::size_t dh = cfg.d_model / cfg.heads;
  S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  std::vector<NodeId> heads;
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    NodeId slice = cfg.heads == 1 ? embed : g.slice_cols(embed, h * dh, (h + 1) * dh);
    NodeId q = g.matmul(slice, head_qk[h].w_q, false, true);
    NodeId k = g.matmul(slice, head_qk[h].w_k, false, true);
    heads.push_back(g.softmax_rows(g.scale(g.matmul(q, k, false, true), inv_sqrt)));
  }
  if (heads.size() == 1) return heads[0];
  return g.scale(g.add(std::move(heads)), static_cast<S>(1.0 / static_cast<double>(cfg.heads)));
}

// P x P map -> W x W: tile the map across an N x N grid of blocks, weight 1/N.
template <typename S>
NodeId expand_intra_node(Graph<S>& g, NodeId map, std::size_t count) {
  return g.scale(g.repeat_tile(map, count), static_cast<S>(1.0 / static_cast<double>(count)));
}

// N x N map -> W x W: each entry becomes a constant P x P block, weight 1/P.
template <typename S>
NodeId expand_inter_node(Graph<S>& g, NodeId map, std::size_t patch) {
  return g.scale(g.repeat_interleave(map, patch),
                 static_cast<S>(1.0 / static_cast<double>(patch)));
}

// Expanded W x W maps per channel; component 0 is trend, 1 cyclical.
struct EncodedWindow {
  std::size_t window = 0;
  std::vector<std::array<NodeId, 2>> intra;
  std::vector<std::array<NodeId, 2>> inter;
};

template <typename S>
EncodedWindow encode_into(Graph<S>& g, const EncoderNodeIds& ids, const DecomposedWindow& dw,
                          const PatchConfig& patches, const EncoderConfig& cfg) {
  validate_patch_config(patches);
  validate_encoder_config(cfg);
  if (dw.trend.rows != patches.window)
    throw ConfigError("decomposed window length " + std::to_string(dw.trend.rows) +
                      " does not match configured window " + std::to_string(patches.window));
  std::size_t dims = dw.trend.cols;
  std::size_t layer_count = cfg.layers;
  EncodedWindow ew;
  ew.window = patches.window;
  ew.intra.resize(patches.channels());
  ew.inter.resize(patches.channels());
  S inv_maps = static_cast<S>(1.0 / static_cast<double>(dims * layer_count));
  for (std::size_t c = 0; c < patches.channels(); ++c) {
    std::size_t patch = patches.patch_sizes[c];
    std::size_t count = patches.window / patch;
    for (std::size_t comp = 0; comp < 2; ++comp) {
      const Matrix<double>& component = comp == 0 ? dw.trend : dw.cyclical;
      PatchTokens tok = make_patches(component, patch);
      std::vector<NodeId> maps_intra, maps_inter;
      for (std::size_t v = 0; v < dims; ++v) {
        NodeId e_intra = g.conv1d_circular(g.leaf(matrix_cast<S>(tok.intra[v])),
                                           ids.channels[c].intra);
        NodeId e_inter = g.conv1d_circular(g.leaf(matrix_cast<S>(tok.inter[v])),
                                           ids.channels[c].inter);
        for (std::size_t l = 0; l < layer_count; ++l) {
          maps_intra.push_back(attention_map_node(g, e_intra, ids.layers[l], cfg));
          maps_inter.push_back(attention_map_node(g, e_inter, ids.layers[l], cfg));
        }
      }
      NodeId mean_intra = g.scale(g.add(std::move(maps_intra)), inv_maps);
      NodeId mean_inter = g.scale(g.add(std::move(maps_inter)), inv_maps);
      ew.intra[c][comp] = expand_intra_node(g, mean_intra, count);
      ew.inter[c][comp] = expand_inter_node(g, mean_inter, patch);
    }
  }
  return ew;
}

// Value-level snapshot of the two views, C x 2 expanded W x W maps each.
template <typename S>
struct ViewRepresentation {
  std::size_t window = 0;
  std::vector<std::array<Matrix<S>, 2>> intra;
  std::vector<std::array<Matrix<S>, 2>> inter;
};

template <typename S>
ViewRepresentation<S> encode_window(const DecomposedWindow& dw, const EncoderParams<S>& params,
                                    const PatchConfig& patches) {
  Graph<S> g;
  EncoderNodeIds ids = bind_encoder(g, params);
  EncodedWindow ew = encode_into(g, ids, dw, patches, params.cfg);
  g.forward();
  ViewRepresentation<S> rep;
  rep.window = ew.window;
  rep.intra.resize(ew.intra.size());
  rep.inter.resize(ew.inter.size());
  for (std::size_t c = 0; c < ew.intra.size(); ++c)
    for (std::size_t comp = 0; comp < 2; ++comp) {
      rep.intra[c][comp] = g.value(ew.intra[c][comp]);
      rep.inter[c][comp] = g.value(ew.inter[c][comp]);
    }
  return rep;
}

}  // namespace tsad
