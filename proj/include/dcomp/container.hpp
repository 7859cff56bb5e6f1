#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "dcomp/model.hpp"
#include "dcomp/vq.hpp"
#include "dcomp/world.hpp"

namespace dcomp {

/// DCW1 binary container.
///
///   magic    "DCW1"
///   u32      format version (1)
///   u32      artifact kind (1 world, 2 count model, 3 codebook)
///   u32      section count
///   section* char[4] tag, u64 payload length, payload bytes
///
/// All integers and doubles are little-endian. Strings inside payloads are a
/// u32 byte length followed by the bytes.
namespace dcw {

inline constexpr std::string_view kMagic = "DCW1";
inline constexpr std::uint32_t kVersion = 1;

enum class ArtifactKind : std::uint32_t { World = 1, CountModel = 2, Codebook = 3 };

struct Section {
  std::array<char, 4> tag{};
  std::string payload;

  std::string tag_string() const { return std::string(tag.data(), tag.size()); }
};

struct Container {
  ArtifactKind kind = ArtifactKind::World;
  std::vector<Section> sections;

  void add(std::string_view tag, std::string payload);
  /// Throws Format when the section is absent.
  const Section& get(std::string_view tag) const;
  const Section* find(std::string_view tag) const;

  std::string serialize() const;
  static Container parse(std::string_view bytes);
};

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v);
  void str(std::string_view s);
  void raw(std::string_view s) { buf_.append(s); }

  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64();
  std::string str();
  std::string_view bytes(std::size_t n);

  bool done() const noexcept { return pos_ == data_.size(); }
  void expect_done(std::string_view what) const;

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace dcw

std::string serialize_world(const World& world);
std::shared_ptr<World> deserialize_world(std::string_view bytes);

std::string serialize_count_model(const CountModel& model);
CountModel deserialize_count_model(std::string_view bytes);

/// `objective` is the optional k-means history stored alongside the entries.
std::string serialize_codebook(const Codebook& cb, std::span<const double> objective = {});
Codebook deserialize_codebook(std::string_view bytes);

/// Human-readable listing of any DCW1 artifact.
std::string dump_text(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace dcomp
