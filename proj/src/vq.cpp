#include "dcomp/vq.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "dcomp/error.hpp"
#include "dcomp/rng.hpp"

namespace dcomp {

Codebook::Codebook(PatchShape patch, std::vector<std::vector<double>> entries)
    : patch_(patch), entries_(std::move(entries)) {
  if (patch_.height < 1 || patch_.width < 1 || patch_.channels < 1) {
    throw Error(ErrorCode::DimensionMismatch, "patch dimensions must be positive");
  }
  if (entries_.empty()) throw Error(ErrorCode::InvalidArgument, "codebook needs at least one entry");
  for (const auto& e : entries_) {
    if (static_cast<int>(e.size()) != patch_.dim()) throw Error(ErrorCode::DimensionMismatch, "codebook entry size");
    if (std::any_of(e.begin(), e.end(), [](double v) { return !std::isfinite(v); })) {
      throw Error(ErrorCode::InvalidArgument, "codebook entry is not finite");
    }
  }
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    d += t * t;
  }
  return d;
}

Token quantize_patch(std::span<const double> z, const Codebook& cb) {
  if (static_cast<int>(z.size()) != cb.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "patch has " + std::to_string(z.size()) + " values, codebook expects " +
                                                  std::to_string(cb.dim()));
  }
  Token best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int j = 0; j < cb.size(); ++j) {
    const double d = squared_distance(z, cb.entry(j));
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

namespace {

void check_tiling(const ImageBuffer& img, const PatchShape& patch) {
  if (img.channels != patch.channels || img.height % patch.height != 0 || img.width % patch.width != 0) {
    throw Error(ErrorCode::DimensionMismatch, "image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                                                  "x" + std::to_string(img.channels) + " does not tile into " +
                                                  std::to_string(patch.height) + "x" + std::to_string(patch.width) +
                                                  "x" + std::to_string(patch.channels) + " patches");
  }
}

}  // namespace

std::vector<std::vector<double>> extract_patches(const ImageBuffer& img, const PatchShape& patch) {
  check_tiling(img, patch);
  std::vector<std::vector<double>> out;
  const int rows = img.height / patch.height;
  const int cols = img.width / patch.width;
  out.reserve(static_cast<std::size_t>(rows * cols));
  for (int pr = 0; pr < rows; ++pr) {
    for (int pc = 0; pc < cols; ++pc) {
      std::vector<double> v;
      v.reserve(static_cast<std::size_t>(patch.dim()));
      for (int y = 0; y < patch.height; ++y)
        for (int x = 0; x < patch.width; ++x)
          for (int c = 0; c < patch.channels; ++c) v.push_back(img.at(pr * patch.height + y, pc * patch.width + x, c));
      out.push_back(std::move(v));
    }
  }
  return out;
}

TokenGrid encode(const ImageBuffer& img, const Codebook& cb) {
  const auto& patch = cb.patch();
  TokenGrid grid{img.height / std::max(1, patch.height), img.width / std::max(1, patch.width), {}};
  for (const auto& p : extract_patches(img, patch)) grid.tokens.push_back(quantize_patch(p, cb));
  return grid;
}

ImageBuffer decode(const TokenGrid& tokens, const Codebook& cb) {
  const auto& patch = cb.patch();
  if (tokens.rows < 0 || tokens.cols < 0 || static_cast<int>(tokens.tokens.size()) != tokens.rows * tokens.cols) {
    throw Error(ErrorCode::DimensionMismatch, "token grid size does not match rows x cols");
  }
  auto img = ImageBuffer::zeros(tokens.rows * patch.height, tokens.cols * patch.width, patch.channels);
  for (int pr = 0; pr < tokens.rows; ++pr) {
    for (int pc = 0; pc < tokens.cols; ++pc) {
      const Token t = tokens.tokens[static_cast<std::size_t>(pr * tokens.cols + pc)];
      if (t < 0 || t >= cb.size()) {
        throw Error(ErrorCode::TokenOutOfRange, "token " + std::to_string(t) + " outside codebook of " +
                                                    std::to_string(cb.size()));
      }
      const auto e = cb.entry(t);
      std::size_t i = 0;
      for (int y = 0; y < patch.height; ++y)
        for (int x = 0; x < patch.width; ++x)
          for (int c = 0; c < patch.channels; ++c)
            img.at(pr * patch.height + y, pc * patch.width + x, c) = std::clamp(e[i++], 0.0, 1.0);
    }
  }
  return img;
}

KMeansResult learn_codebook(std::span<const std::vector<double>> patches, const PatchShape& patch, int k, int iters,
                            std::uint64_t seed) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "K must be at least 1");
  if (iters < 0) throw Error(ErrorCode::InvalidArgument, "iteration count must be non-negative");
  if (patches.size() < static_cast<std::size_t>(k)) {
    throw Error(ErrorCode::TooFewPatches, std::to_string(patches.size()) + " patches for K = " + std::to_string(k));
  }
  const auto dim = static_cast<std::size_t>(patch.dim());
  for (const auto& p : patches) {
    if (p.size() != dim) throw Error(ErrorCode::DimensionMismatch, "patch vector has wrong dimension");
  }

  Rng rng(seed);
  const std::size_t n = patches.size();

  // k-means++ seeding.
  std::vector<std::vector<double>> centers;
  centers.reserve(static_cast<std::size_t>(k));
  centers.push_back(patches[rng.below(n)]);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  while (centers.size() < static_cast<std::size_t>(k)) {
    for (std::size_t i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], squared_distance(patches[i], centers.back()));
    centers.push_back(patches[rng.categorical(nearest)]);
  }

  std::vector<Token> assignment(n, 0);
  std::vector<double> objective;
  std::vector<double> sums;
  std::vector<std::size_t> counts;
  for (int it = 0; it < iters; ++it) {
    const Codebook current(patch, centers);
    for (std::size_t i = 0; i < n; ++i) assignment[i] = quantize_patch(patches[i], current);

    sums.assign(static_cast<std::size_t>(k) * dim, 0.0);
    counts.assign(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = static_cast<std::size_t>(assignment[i]);
      ++counts[j];
      for (std::size_t d = 0; d < dim; ++d) sums[j * dim + d] += patches[i][d];
    }
    for (std::size_t j = 0; j < static_cast<std::size_t>(k); ++j) {
      if (counts[j] == 0) continue;
      for (std::size_t d = 0; d < dim; ++d) centers[j][d] = sums[j * dim + d] / static_cast<double>(counts[j]);
    }

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += squared_distance(patches[i], centers[static_cast<std::size_t>(assignment[i])]);
    objective.push_back(total / static_cast<double>(n));
  }
  if (iters == 0) {
    const Codebook current(patch, centers);
    for (std::size_t i = 0; i < n; ++i) assignment[i] = quantize_patch(patches[i], current);
  }
  return KMeansResult{Codebook(patch, std::move(centers)), std::move(objective), std::move(assignment)};
}

double mean_squared_error(const ImageBuffer& a, const ImageBuffer& b) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
    throw Error(ErrorCode::DimensionMismatch, "images differ in shape");
  }
  if (a.pixels.empty()) return 0.0;
  return squared_distance(a.pixels, b.pixels) / static_cast<double>(a.pixels.size());
}

// ---------------------------------------------------------------------------
// PPM

std::string encode_ppm(const ImageBuffer& img) {
  if (img.channels != 3 && img.channels != 1) {
    throw Error(ErrorCode::DimensionMismatch, "PPM output needs 1 or 3 channels");
  }
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(img.width * img.height * 3));
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(img.at(y, x, img.channels == 3 ? c : 0), 0.0, 1.0);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
      }
    }
  }
  return out;
}

ImageBuffer decode_ppm(std::string_view bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&] {
    skip_space();
    const std::size_t start = pos;
    long v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > 1'000'000) throw Error(ErrorCode::Format, "PPM header value too large");
    }
    if (pos == start) throw Error(ErrorCode::Format, "malformed PPM header");
    return static_cast<int>(v);
  };

  if (bytes.size() < 2 || bytes.substr(0, 2) != "P6") throw Error(ErrorCode::Format, "not a binary PPM (P6)");
  pos = 2;
  const int width = read_uint();
  const int height = read_uint();
  const int maxval = read_uint();
  if (maxval != 255) throw Error(ErrorCode::Format, "only 8-bit PPM (maxval 255) is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw Error(ErrorCode::Format, "missing whitespace after PPM header");
  }
  ++pos;
  const auto need = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3;
  if (bytes.size() - pos != need) throw Error(ErrorCode::Format, "PPM pixel data has the wrong length");

  auto img = ImageBuffer::zeros(height, width, 3);
  for (std::size_t i = 0; i < need; ++i) img.pixels[i] = static_cast<unsigned char>(bytes[pos + i]) / 255.0;
  return img;
}

void write_ppm(const std::filesystem::path& path, const ImageBuffer& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  const auto bytes = encode_ppm(img);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

ImageBuffer read_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_ppm(ss.str());
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

constexpr double kPalette[][3] = {
    {0.85, 0.15, 0.15}, {0.15, 0.45, 0.90}, {0.20, 0.75, 0.25}, {0.95, 0.80, 0.10},
    {0.70, 0.25, 0.80}, {0.10, 0.80, 0.80}, {0.95, 0.55, 0.10}, {0.90, 0.90, 0.90},
};
constexpr double kBackground = 0.1;

bool shape_mask(int shape, int y, int x, int h, int w) {
  const bool border = y == 0 || x == 0 || y == h - 1 || x == w - 1;
  switch (shape % 4) {
    case 0: return !border;                                  // square
    case 1: return y == h / 2 || x == w / 2;                 // cross
    case 2: return y == x || y == w - 1 - x;                 // x mark
    default: return !border && ((y + x) % 2 == 0);           // checker
  }
}

}  // namespace

std::vector<double> render_token(Token t, const TokenScheme& scheme, const PatchShape& patch) {
  std::vector<double> v(static_cast<std::size_t>(patch.dim()), kBackground);
  if (!scheme.is_object(t)) return v;
  const int shape = scheme.shape_of(t);
  const int color = scheme.color_of(t);
  const auto& rgb = kPalette[color % 8];
  // Colors past the palette get a brightness offset so tokens stay distinct.
  const double shade = 1.0 - 0.3 * static_cast<double>((color / 8) % 3);
  std::size_t i = 0;
  for (int y = 0; y < patch.height; ++y) {
    for (int x = 0; x < patch.width; ++x) {
      const bool on = shape_mask(shape, y, x, patch.height, patch.width);
      for (int c = 0; c < patch.channels; ++c) v[i++] = on ? rgb[c % 3] * shade : kBackground;
    }
  }
  return v;
}

ImageBuffer render_grid(std::span<const Token> grid, const GridShape& shape, const TokenScheme& scheme,
                        const PatchShape& patch) {
  auto img = ImageBuffer::zeros(shape.height * patch.height, shape.width * patch.width, patch.channels);
  for (int r = 0; r < shape.height; ++r) {
    for (int c = 0; c < shape.width; ++c) {
      const auto v = render_token(grid[static_cast<std::size_t>(shape.index(c, r))], scheme, patch);
      std::size_t i = 0;
      for (int y = 0; y < patch.height; ++y)
        for (int x = 0; x < patch.width; ++x)
          for (int ch = 0; ch < patch.channels; ++ch) img.at(r * patch.height + y, c * patch.width + x, ch) = v[i++];
    }
  }
  return img;
}

std::vector<Token> token_alignment(const TokenScheme& scheme, const Codebook& cb) {
  std::vector<Token> out;
  for (Token t = 0; t < scheme.vocab(); ++t) out.push_back(quantize_patch(render_token(t, scheme, cb.patch()), cb));
  return out;
}

}  // namespace dcomp
