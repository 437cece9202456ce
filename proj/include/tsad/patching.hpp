#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tsad/errors.hpp"
#include "tsad/matrix.hpp"

namespace tsad {

struct PatchConfig {
  std::size_t window = 90;
  std::vector<std::size_t> patch_sizes{3, 5};
  std::size_t channels() const { return patch_sizes.size(); }
};

// Every patch size must divide the window exactly; no padding path exists.
inline void validate_patch_config(const PatchConfig& cfg) {
  if (cfg.window == 0) throw ConfigError("window must be positive");
  if (cfg.patch_sizes.empty()) throw ConfigError("at least one patch size is required");
  for (std::size_t p : cfg.patch_sizes) {
    if (p == 0) throw ConfigError("patch size must be positive");
    if (cfg.window % p != 0)
      throw ConfigError("patch size must divide window (window " + std::to_string(cfg.window) +
                        ", patch " + std::to_string(p) + ")");
  }
}

// Timestamp n*P + p lands in patch n at offset p. Intra tokens walk offsets
// (P tokens of length N), inter tokens walk patches (N tokens of length P);
// the two views are transposes of each other per variable.
struct PatchTokens {
  std::size_t patch = 0;  // P
  std::size_t count = 0;  // N = W / P
  std::vector<Matrix<double>> intra;  // per variable, P x N
  std::vector<Matrix<double>> inter;  // per variable, N x P
};

inline PatchTokens make_patches(const Matrix<double>& component, std::size_t patch) {
  if (patch == 0 || component.rows % patch != 0)
    throw ConfigError("patch size must divide window (window " + std::to_string(component.rows) +
                      ", patch " + std::to_string(patch) + ")");
  PatchTokens tok;
  tok.patch = patch;
  tok.count = component.rows / patch;
  for (std::size_t v = 0; v < component.cols; ++v) {
    Matrix<double> intra(patch, tok.count);
    Matrix<double> inter(tok.count, patch);
    for (std::size_t n = 0; n < tok.count; ++n)
      for (std::size_t p = 0; p < patch; ++p) {
        double x = component(n * patch + p, v);
        intra(p, n) = x;
        inter(n, p) = x;
      }
    tok.intra.push_back(std::move(intra));
    tok.inter.push_back(std::move(inter));
  }
  return tok;
}

}  // namespace tsad
