#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dcomp/condition.hpp"

namespace dcomp {

/// H x W x C pixels in [0, 1], row-major with interleaved channels.
struct ImageBuffer {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<double> pixels;

  static ImageBuffer zeros(int height, int width, int channels = 3) {
    return ImageBuffer{height, width, channels,
                       std::vector<double>(static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
                                           static_cast<std::size_t>(channels))};
  }

  std::size_t offset(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels) +
           static_cast<std::size_t>(c);
  }
  double& at(int y, int x, int c) { return pixels[offset(y, x, c)]; }
  double at(int y, int x, int c) const { return pixels[offset(y, x, c)]; }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;
};

struct PatchShape {
  int height = 4;
  int width = 4;
  int channels = 3;

  int dim() const noexcept { return height * width * channels; }
  friend bool operator==(const PatchShape&, const PatchShape&) = default;
};

/// K patch vectors of dimension patch.dim().
class Codebook {
 public:
  Codebook(PatchShape patch, std::vector<std::vector<double>> entries);

  const PatchShape& patch() const noexcept { return patch_; }
  int size() const noexcept { return static_cast<int>(entries_.size()); }
  int dim() const noexcept { return patch_.dim(); }
  std::span<const double> entry(int j) const { return entries_[static_cast<std::size_t>(j)]; }
  const std::vector<std::vector<double>>& entries() const noexcept { return entries_; }

 private:
  PatchShape patch_;
  std::vector<std::vector<double>> entries_;
};

struct TokenGrid {
  int rows = 0;
  int cols = 0;
  std::vector<Token> tokens;

  friend bool operator==(const TokenGrid&, const TokenGrid&) = default;
};

double squared_distance(std::span<const double> a, std::span<const double> b);

/// arg min_j ||z - e_j||^2, lowest index on ties.
Token quantize_patch(std::span<const double> z, const Codebook& cb);

/// Non-overlapping patches in row-major patch order.
std::vector<std::vector<double>> extract_patches(const ImageBuffer& img, const PatchShape& patch);

TokenGrid encode(const ImageBuffer& img, const Codebook& cb);
/// Writes each token's entry into its patch, clamped to [0, 1].
ImageBuffer decode(const TokenGrid& tokens, const Codebook& cb);

struct KMeansResult {
  Codebook codebook;
  /// Mean squared distance to assigned centers after each iteration's update.
  std::vector<double> objective;
  std::vector<Token> assignment;
};

/// k-means++ seeding followed by `iters` Lloyd iterations. Empty clusters keep
/// their previous center. Deterministic under `seed`.
KMeansResult learn_codebook(std::span<const std::vector<double>> patches, const PatchShape& patch, int k, int iters,
                            std::uint64_t seed);

double mean_squared_error(const ImageBuffer& a, const ImageBuffer& b);

// Binary PPM (P6, maxval 255).
std::string encode_ppm(const ImageBuffer& img);
ImageBuffer decode_ppm(std::string_view bytes);
void write_ppm(const std::filesystem::path& path, const ImageBuffer& img);
ImageBuffer read_ppm(const std::filesystem::path& path);

/// Pixel patch drawn for one token: empty cells are a dark background,
/// objects are a shape mask in the object's palette color.
std::vector<double> render_token(Token t, const TokenScheme& scheme, const PatchShape& patch);
ImageBuffer render_grid(std::span<const Token> grid, const GridShape& shape, const TokenScheme& scheme,
                        const PatchShape& patch);

/// Codebook index nearest to each token's rendered patch.
std::vector<Token> token_alignment(const TokenScheme& scheme, const Codebook& cb);

}  // namespace dcomp
