#include "dcomp/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dcomp/error.hpp"

namespace dcomp {
namespace dcw {

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  buf_.append(s);
}

std::string_view ByteReader::bytes(std::size_t n) {
  if (data_.size() - pos_ < n) throw Error(ErrorCode::Format, "truncated DCW1 payload");
  auto out = data_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::uint8_t ByteReader::u8() { return static_cast<std::uint8_t>(bytes(1)[0]); }

std::uint32_t ByteReader::u32() {
  const auto b = bytes(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[static_cast<std::size_t>(i)])) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  const auto b = bytes(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[static_cast<std::size_t>(i)])) << (8 * i);
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::str() {
  const auto n = u32();
  return std::string(bytes(n));
}

void ByteReader::expect_done(std::string_view what) const {
  if (!done()) throw Error(ErrorCode::Format, "trailing bytes in " + std::string(what) + " section");
}

void Container::add(std::string_view tag, std::string payload) {
  if (tag.size() != 4) throw Error(ErrorCode::Format, "section tags are four bytes");
  Section s;
  std::memcpy(s.tag.data(), tag.data(), 4);
  s.payload = std::move(payload);
  sections.push_back(std::move(s));
}

const Section* Container::find(std::string_view tag) const {
  for (const auto& s : sections)
    if (std::string_view(s.tag.data(), 4) == tag) return &s;
  return nullptr;
}

const Section& Container::get(std::string_view tag) const {
  if (const auto* s = find(tag)) return *s;
  throw Error(ErrorCode::Format, "missing section " + std::string(tag));
}

std::string Container::serialize() const {
  ByteWriter w;
  w.raw(kMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(kind));
  w.u32(static_cast<std::uint32_t>(sections.size()));
  for (const auto& s : sections) {
    w.raw(std::string_view(s.tag.data(), 4));
    w.u64(s.payload.size());
    w.raw(s.payload);
  }
  return w.take();
}

Container Container::parse(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != kMagic) throw Error(ErrorCode::Format, "missing DCW1 magic");
  ByteReader r(bytes.substr(4));
  const auto version = r.u32();
  if (version != kVersion) throw Error(ErrorCode::Format, "unsupported DCW1 version " + std::to_string(version));
  Container c;
  const auto kind = r.u32();
  if (kind < 1 || kind > 3) throw Error(ErrorCode::Format, "unknown artifact kind " + std::to_string(kind));
  c.kind = static_cast<ArtifactKind>(kind);
  const auto n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto tag = r.bytes(4);
    const auto len = r.u64();
    c.add(tag, std::string(r.bytes(static_cast<std::size_t>(len))));
  }
  r.expect_done("container");
  return c;
}

}  // namespace dcw

using dcw::ArtifactKind;
using dcw::ByteReader;
using dcw::ByteWriter;
using dcw::Container;

namespace {

void write_grid_scheme(ByteWriter& w, const GridShape& g, const TokenScheme& s) {
  w.i32(g.width);
  w.i32(g.height);
  w.i32(s.shapes);
  w.i32(s.colors);
}

std::pair<GridShape, TokenScheme> read_grid_scheme(ByteReader& r) {
  GridShape g;
  g.width = r.i32();
  g.height = r.i32();
  TokenScheme s;
  s.shapes = r.i32();
  s.colors = r.i32();
  if (g.width < 1 || g.height < 1 || g.size() > 4096 || s.shapes < 1 || s.colors < 1 || s.vocab() > 255) {
    throw Error(ErrorCode::Format, "grid or token scheme out of range");
  }
  return {g, s};
}

Container parse_kind(std::string_view bytes, ArtifactKind want, std::string_view name) {
  auto c = Container::parse(bytes);
  if (c.kind != want) throw Error(ErrorCode::Format, "artifact is not a " + std::string(name));
  return c;
}

}  // namespace

std::string serialize_world(const World& world) {
  Container c;
  c.kind = ArtifactKind::World;
  ByteWriter head;
  head.str(world.kind_name());
  write_grid_scheme(head, world.grid(), world.scheme());
  if (const auto* scene = dynamic_cast<const SceneWorld*>(&world)) {
    head.i32(scene->config().min_objects);
    head.i32(scene->config().max_objects);
    head.u8(scene->config().relational ? 1 : 0);
    c.add("HEAD", head.take());
  } else if (const auto* fw = dynamic_cast<const FactorizedWorld*>(&world)) {
    c.add("HEAD", head.take());
    ByteWriter tbl;
    tbl.u32(static_cast<std::uint32_t>(fw->length()));
    tbl.u32(static_cast<std::uint32_t>(fw->vocab()));
    for (const auto& t : fw->tables())
      for (double v : t) tbl.f64(v);
    c.add("TBLS", tbl.take());
  } else {
    throw Error(ErrorCode::InvalidArgument, "unsupported world kind " + world.kind_name());
  }
  return c.serialize();
}

std::shared_ptr<World> deserialize_world(std::string_view bytes) {
  const auto c = parse_kind(bytes, ArtifactKind::World, "world");
  ByteReader head(c.get("HEAD").payload);
  const auto kind = head.str();
  const auto [grid, scheme] = read_grid_scheme(head);
  if (kind == "scene") {
    SceneWorldConfig cfg;
    cfg.grid = grid;
    cfg.scheme = scheme;
    cfg.min_objects = head.i32();
    cfg.max_objects = head.i32();
    cfg.relational = head.u8() != 0;
    head.expect_done("HEAD");
    return std::make_shared<SceneWorld>(cfg);
  }
  if (kind == "factorized") {
    head.expect_done("HEAD");
    ByteReader tbl(c.get("TBLS").payload);
    const auto cells = tbl.u32();
    const auto k = tbl.u32();
    if (static_cast<int>(cells) != grid.size() || static_cast<int>(k) != scheme.vocab()) {
      throw Error(ErrorCode::Format, "TBLS dimensions disagree with HEAD");
    }
    std::vector<std::vector<double>> tables(cells, std::vector<double>(k));
    for (auto& t : tables)
      for (double& v : t) v = tbl.f64();
    tbl.expect_done("TBLS");
    return std::make_shared<FactorizedWorld>(grid, scheme, std::move(tables));
  }
  throw Error(ErrorCode::Format, "unknown world kind '" + kind + "'");
}

std::string serialize_count_model(const CountModel& model) {
  const auto& h = model.header();
  Container c;
  c.kind = ArtifactKind::CountModel;
  ByteWriter head;
  write_grid_scheme(head, h.grid, h.scheme);
  head.f64(h.alpha);
  head.f64(h.dropout_prob);
  head.i32(h.window_radius);
  head.u8(static_cast<std::uint8_t>(h.mode));
  head.u64(h.n_samples);
  head.u64(h.seed);
  c.add("HEAD", head.take());

  ByteWriter prompts;
  prompts.u32(static_cast<std::uint32_t>(model.prompts().size()));
  for (const auto& p : model.prompts()) prompts.str(p);
  c.add("PRMT", prompts.take());

  ByteWriter counts;
  const auto entries = model.sorted_entries();
  counts.u32(static_cast<std::uint32_t>(model.vocab()));
  counts.u64(entries.size());
  for (const auto& [key, row] : entries) {
    counts.str(key);
    for (auto v : row) counts.u32(v);
  }
  c.add("CNTS", counts.take());
  return c.serialize();
}

CountModel deserialize_count_model(std::string_view bytes) {
  const auto c = parse_kind(bytes, ArtifactKind::CountModel, "count model");
  ByteReader head(c.get("HEAD").payload);
  CountModel::Header h;
  std::tie(h.grid, h.scheme) = read_grid_scheme(head);
  h.alpha = head.f64();
  h.dropout_prob = head.f64();
  h.window_radius = head.i32();
  const auto mode = head.u8();
  if (mode > 1) throw Error(ErrorCode::Format, "unknown prompt mode");
  h.mode = static_cast<PromptMode>(mode);
  h.n_samples = head.u64();
  h.seed = head.u64();
  head.expect_done("HEAD");

  ByteReader pr(c.get("PRMT").payload);
  std::vector<std::string> prompts(pr.u32());
  for (auto& p : prompts) p = pr.str();
  pr.expect_done("PRMT");

  ByteReader cn(c.get("CNTS").payload);
  const auto k = cn.u32();
  if (static_cast<int>(k) != h.scheme.vocab()) throw Error(ErrorCode::Format, "CNTS width disagrees with HEAD");
  const auto n = cn.u64();
  CountModel::Table table;
  table.reserve(static_cast<std::size_t>(n));
  for (std::uint64_t i = 0; i < n; ++i) {
    auto key = cn.str();
    CountModel::Counts row(k);
    for (auto& v : row) v = cn.u32();
    table.emplace(std::move(key), std::move(row));
  }
  cn.expect_done("CNTS");
  return CountModel(h, std::move(prompts), std::move(table));
}

std::string serialize_codebook(const Codebook& cb, std::span<const double> objective) {
  Container c;
  c.kind = ArtifactKind::Codebook;
  ByteWriter head;
  head.i32(cb.patch().height);
  head.i32(cb.patch().width);
  head.i32(cb.patch().channels);
  head.u32(static_cast<std::uint32_t>(cb.size()));
  c.add("HEAD", head.take());
  ByteWriter entries;
  for (const auto& e : cb.entries())
    for (double v : e) entries.f64(v);
  c.add("ENTR", entries.take());
  if (!objective.empty()) {
    ByteWriter obj;
    obj.u32(static_cast<std::uint32_t>(objective.size()));
    for (double v : objective) obj.f64(v);
    c.add("OBJV", obj.take());
  }
  return c.serialize();
}

Codebook deserialize_codebook(std::string_view bytes) {
  const auto c = parse_kind(bytes, ArtifactKind::Codebook, "codebook");
  ByteReader head(c.get("HEAD").payload);
  PatchShape patch;
  patch.height = head.i32();
  patch.width = head.i32();
  patch.channels = head.i32();
  const auto k = head.u32();
  head.expect_done("HEAD");
  if (patch.height < 1 || patch.width < 1 || patch.channels < 1 || patch.dim() > 1 << 20 || k < 1 || k > 1u << 20) {
    throw Error(ErrorCode::Format, "codebook dimensions out of range");
  }
  ByteReader er(c.get("ENTR").payload);
  std::vector<std::vector<double>> entries(k, std::vector<double>(static_cast<std::size_t>(patch.dim())));
  for (auto& e : entries)
    for (double& v : e) v = er.f64();
  er.expect_done("ENTR");
  return Codebook(patch, std::move(entries));
}

std::string dump_text(std::string_view bytes) {
  const auto c = Container::parse(bytes);
  std::ostringstream out;
  out << std::setprecision(17);
  out << "DCW1 version " << dcw::kVersion << ", kind ";
  switch (c.kind) {
    case ArtifactKind::World: {
      out << "world\n";
      const auto w = deserialize_world(bytes);
      out << "world.kind = " << w->kind_name() << "\n";
      out << "grid = " << w->grid().width << "x" << w->grid().height << "\n";
      out << "scheme = " << w->scheme().shapes << " shapes x " << w->scheme().colors << " colors (K = " << w->vocab() << ")\n";
      out << "support_size = " << w->support_size() << "\n";
      if (const auto* s = dynamic_cast<const SceneWorld*>(w.get())) {
        out << "objects = [" << s->config().min_objects << ", " << s->config().max_objects << "]\n";
        out << "relational = " << (s->config().relational ? "true" : "false") << "\n";
      }
      if (const auto* f = dynamic_cast<const FactorizedWorld*>(w.get())) {
        for (int p = 0; p < f->length(); ++p) {
          out << "cell " << p << ":";
          for (double v : f->table(p)) out << ' ' << v;
          out << "\n";
        }
      }
      break;
    }
    case ArtifactKind::CountModel: {
      out << "count model\n";
      const auto m = deserialize_count_model(bytes);
      const auto& h = m.header();
      out << "grid = " << h.grid.width << "x" << h.grid.height << ", K = " << m.vocab() << "\n";
      out << "alpha = " << h.alpha << "\ndropout_prob = " << h.dropout_prob << "\nwindow_radius = " << h.window_radius
          << "\nmode = " << (h.mode == PromptMode::Single ? "single" : "joint") << "\nn_samples = " << h.n_samples
          << "\nseed = " << h.seed << "\n";
      out << "prompts (" << m.prompts().size() << "):\n";
      for (std::size_t i = 0; i < m.prompts().size(); ++i) out << "  [" << i << "] " << m.prompts()[i] << "\n";
      out << "count rows = " << m.table().size() << "\n";
      for (const auto& [key, row] : m.sorted_entries()) {
        ByteReader r(key);
        const auto pos = r.u32();
        const auto pid = static_cast<std::int64_t>(r.u32()) - 1;
        const auto tag = static_cast<char>(r.u8());
        out << "  pos " << pos << " prompt " << pid;
        if (tag == 'a') {
          out << " (all contexts)";
        } else {
          out << " ctx {";
          for (std::size_t i = 9; i < key.size(); ++i) out << (i > 9 ? "," : "") << static_cast<int>(static_cast<unsigned char>(key[i]));
          out << "}";
        }
        out << ":";
        for (auto v : row) out << ' ' << v;
        out << "\n";
      }
      break;
    }
    case ArtifactKind::Codebook: {
      out << "codebook\n";
      const auto cb = deserialize_codebook(bytes);
      out << "patch = " << cb.patch().height << "x" << cb.patch().width << "x" << cb.patch().channels << "\nK = " << cb.size()
          << "\n";
      for (int j = 0; j < cb.size(); ++j) {
        out << "entry " << j << ":";
        for (double v : cb.entry(j)) out << ' ' << v;
        out << "\n";
      }
      if (const auto* obj = c.find("OBJV")) {
        ByteReader r(obj->payload);
        const auto n = r.u32();
        out << "objective:";
        for (std::uint32_t i = 0; i < n; ++i) out << ' ' << r.f64();
        out << "\n";
      }
      break;
    }
  }
  return out.str();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

}  // namespace dcomp
