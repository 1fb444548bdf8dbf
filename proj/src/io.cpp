#include "adaptvo/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace adaptvo::io {

namespace {

class ByteReader {
 public:
  explicit ByteReader(std::istream& in) : in_(in) {}

  void bytes(void* dst, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError(std::string("truncated ") + what, offset_);
    offset_ += n;
  }

  void magic(const char* expected) {
    std::array<char, 4> got{};
    const std::size_t at = offset_;
    bytes(got.data(), 4, "magic");
    if (std::memcmp(got.data(), expected, 4) != 0)
      throw FormatError(std::string("bad magic, expected ") + expected, at);
  }

  std::uint32_t u32(const char* what) {
    std::array<unsigned char, 4> b{};
    bytes(b.data(), 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }

  std::uint16_t u16(const char* what) {
    std::array<unsigned char, 2> b{};
    bytes(b.data(), 2, what);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }

  std::uint8_t u8(const char* what) {
    unsigned char b = 0;
    bytes(&b, 1, what);
    return b;
  }

  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

  double f64(const char* what) {
    const std::uint64_t lo = u32(what);
    const std::uint64_t hi = u32(what);
    return std::bit_cast<double>(lo | (hi << 32));
  }

  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes", offset_);
  }

  [[nodiscard]] std::size_t offset() const noexcept { return offset_; }

 private:
  std::istream& in_;
  std::size_t offset_ = 0;
};

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

void put_u16(std::ostream& out, std::uint16_t v) {
  const std::array<char, 2> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  out.write(b.data(), 2);
}

void put_f32(std::ostream& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  put_u32(out, static_cast<std::uint32_t>(bits & 0xffffffffu));
  put_u32(out, static_cast<std::uint32_t>(bits >> 32));
}

std::uint32_t dim(int n) { return static_cast<std::uint32_t>(n); }

constexpr std::uint32_t kMaxSide = 1u << 15;

std::pair<int, int> read_dims(ByteReader& r) {
  const std::size_t at = r.offset();
  const std::uint32_t w = r.u32("width");
  const std::uint32_t h = r.u32("height");
  if (w > kMaxSide || h > kMaxSide) throw FormatError("implausible raster size", at);
  return {static_cast<int>(w), static_cast<int>(h)};
}

template <typename R>
void write_f32_raster(std::ostream& out, const char* magic, const R& raster) {
  out.write(magic, 4);
  put_u32(out, dim(raster.width()));
  put_u32(out, dim(raster.height()));
  for (const double v : raster.values()) put_f32(out, v);
}

template <typename R>
R read_f32_raster(std::istream& in, const char* magic) {
  ByteReader r(in);
  r.magic(magic);
  const auto [w, h] = read_dims(r);
  R raster(w, h);
  for (auto& v : raster.values()) v = static_cast<double>(r.f32("raster value"));
  r.expect_end();
  return raster;
}

// Text parsing with line-level offsets.
class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  bool next(std::string& line) {
    line_offset_ = offset_;
    if (!std::getline(in_, line)) return false;
    offset_ += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  [[nodiscard]] std::size_t offset() const noexcept { return line_offset_; }

 private:
  std::istream& in_;
  std::size_t offset_ = 0;
  std::size_t line_offset_ = 0;
};

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

template <typename T>
T parse_number(std::string_view token, std::size_t offset) {
  T value{};
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size())
    throw FormatError("invalid number '" + std::string(token) + "'", offset);
  return value;
}

bool blank(std::string_view line) { return split(line).empty(); }

}  // namespace

std::string format_double(double x) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return {buf.data(), ptr};
}

std::string format_report(double x) {
  std::array<char, 64> buf{};
  const int n = std::snprintf(buf.data(), buf.size(), "%.9g", x);
  return {buf.data(), static_cast<std::size_t>(n)};
}

void write_depth(std::ostream& out, const DepthMap& depth) { write_f32_raster(out, "DPF1", depth); }
DepthMap read_depth(std::istream& in) { return read_f32_raster<DepthMap>(in, "DPF1"); }
void write_mask(std::ostream& out, const MaskMap& mask) { write_f32_raster(out, "MSK1", mask); }
MaskMap read_mask(std::istream& in) { return read_f32_raster<MaskMap>(in, "MSK1"); }

void write_labels(std::ostream& out, const LabelRaster& labels) {
  out.write("SEG1", 4);
  put_u32(out, dim(labels.width()));
  put_u32(out, dim(labels.height()));
  for (const auto v : labels.values()) put_u16(out, v);
}

LabelRaster read_labels(std::istream& in) {
  ByteReader r(in);
  r.magic("SEG1");
  const auto [w, h] = read_dims(r);
  LabelRaster labels(w, h);
  for (auto& v : labels.values()) v = r.u16("label");
  r.expect_end();
  return labels;
}

void write_pgm(std::ostream& out, const Image& image) {
  out << "P5\n" << image.width() << ' ' << image.height() << "\n255\n";
  std::vector<char> bytes(image.size());
  for (std::size_t i = 0; i < image.size(); ++i)
    bytes[i] = static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(image[i], 0.0, 1.0) * 255.0)));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Image read_pgm(std::istream& in) {
  std::size_t offset = 0;
  auto get = [&]() {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw FormatError("truncated PGM header", offset);
    ++offset;
    return static_cast<char>(c);
  };
  if (get() != 'P' || get() != '5') throw FormatError("not a binary PGM", 0);
  auto token = [&]() {
    char c = get();
    while (std::isspace(static_cast<unsigned char>(c)) || c == '#') {
      if (c == '#')
        while (c != '\n') c = get();
      c = get();
    }
    const std::size_t at = offset - 1;
    std::string s;
    while (!std::isspace(static_cast<unsigned char>(c))) {
      s.push_back(c);
      c = get();
    }
    return std::pair{parse_number<int>(s, at), at};
  };
  const auto [w, w_at] = token();
  const auto [h, h_at] = token();
  const auto [maxval, m_at] = token();
  if (w <= 0 || h <= 0 || w > static_cast<int>(kMaxSide) || h > static_cast<int>(kMaxSide))
    throw FormatError("implausible PGM size", w_at);
  if (maxval != 255) throw FormatError("only maxval 255 is supported", m_at);
  Image image(w, h);
  std::vector<char> bytes(image.size());
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size())
    throw FormatError("truncated PGM pixel data", offset + static_cast<std::size_t>(in.gcount()));
  for (std::size_t i = 0; i < bytes.size(); ++i) image[i] = static_cast<unsigned char>(bytes[i]) / 255.0;
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes", offset + bytes.size());
  return image;
}

void write_net(std::ostream& out, const ToyDepthNet& net) {
  out.write("NET1", 4);
  put_u32(out, static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& layer : net.layers()) {
    put_u32(out, dim(layer.outputs()));
    put_u32(out, dim(layer.inputs()));
    put_u32(out, dim(layer.refiner.rank()));
    std::uint8_t flags = kFlagBaseFrozen;
    if (layer.refiner.rank() > 0) flags |= kFlagRefinerTrainable;
    if (layer.activation == Activation::kIdentity) flags |= kFlagIdentityActivation;
    out.put(static_cast<char>(flags));
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) put_f64(out, layer.weight(i, j));
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) put_f64(out, layer.bias(i));
    for (Eigen::Index i = 0; i < layer.refiner.a.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.refiner.a.cols(); ++j) put_f64(out, layer.refiner.a(i, j));
    for (Eigen::Index i = 0; i < layer.refiner.b.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.refiner.b.cols(); ++j) put_f64(out, layer.refiner.b(i, j));
  }
}

ToyDepthNet read_net(std::istream& in) {
  ByteReader r(in);
  r.magic("NET1");
  const std::size_t count_at = r.offset();
  const std::uint32_t count = r.u32("layer count");
  if (count == 0 || count > 64) throw FormatError("implausible layer count", count_at);
  std::vector<DenseLayer> layers;
  for (std::uint32_t l = 0; l < count; ++l) {
    const std::size_t at = r.offset();
    const std::uint32_t d = r.u32("d");
    const std::uint32_t k = r.u32("k");
    const std::uint32_t rank = r.u32("r");
    if (d == 0 || k == 0 || d > 1u << 14 || k > 1u << 14 || rank > std::min(d, k))
      throw FormatError("implausible layer shape", at);
    const std::uint8_t flags = r.u8("flags");
    if ((flags & ~(kFlagBaseFrozen | kFlagRefinerTrainable | kFlagIdentityActivation)) != 0)
      throw FormatError("unknown layer flags", at + 12);
    DenseLayer layer;
    layer.activation = (flags & kFlagIdentityActivation) != 0 ? Activation::kIdentity : Activation::kTanh;
    layer.weight.resize(d, k);
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) layer.weight(i, j) = r.f64("weight");
    layer.bias.resize(d);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = r.f64("bias");
    layer.refiner.a.resize(rank, k);
    for (Eigen::Index i = 0; i < layer.refiner.a.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.refiner.a.cols(); ++j) layer.refiner.a(i, j) = r.f64("refiner A");
    layer.refiner.b.resize(d, rank);
    for (Eigen::Index i = 0; i < layer.refiner.b.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.refiner.b.cols(); ++j) layer.refiner.b(i, j) = r.f64("refiner B");
    layers.push_back(std::move(layer));
  }
  r.expect_end();
  try {
    return ToyDepthNet::from_layers(std::move(layers));
  } catch (const DimensionMismatchError& e) {
    throw FormatError(e.what(), count_at);
  }
}

void write_sparse(std::ostream& out, const SparseDepth& sparse) {
  out << "# frame " << sparse.frame_id << '\n';
  for (const auto& s : sparse.samples) out << s.u << ' ' << s.v << ' ' << format_double(s.depth) << '\n';
}

SparseDepth read_sparse(std::istream& in) {
  LineReader lines(in);
  std::string line;
  SparseDepth sparse;
  bool header = false;
  while (lines.next(line)) {
    if (blank(line)) continue;
    const auto tok = split(line);
    if (tok[0] == "#") {
      if (tok.size() == 3 && tok[1] == "frame") {
        sparse.frame_id = parse_number<int>(tok[2], lines.offset());
        header = true;
      }
      continue;
    }
    if (tok.size() != 3) throw FormatError("expected 'u v depth'", lines.offset());
    sparse.samples.push_back({parse_number<int>(tok[0], lines.offset()), parse_number<int>(tok[1], lines.offset()),
                              parse_number<double>(tok[2], lines.offset())});
  }
  if (!header) throw FormatError("missing '# frame <id>' header", 0);
  return sparse;
}

void write_correspondences(std::ostream& out, const CorrespondenceSet& set) {
  out << "# frames " << set.frame_a << ' ' << set.frame_b << '\n';
  for (const auto& m : set.matches) {
    out << format_double(m.pixel_a.x()) << ' ' << format_double(m.pixel_a.y()) << ' ' << format_double(m.pixel_b.x())
        << ' ' << format_double(m.pixel_b.y()) << '\n';
  }
}

CorrespondenceSet read_correspondences(std::istream& in) {
  LineReader lines(in);
  std::string line;
  CorrespondenceSet set;
  bool header = false;
  while (lines.next(line)) {
    if (blank(line)) continue;
    const auto tok = split(line);
    if (tok[0] == "#") {
      if (tok.size() == 4 && tok[1] == "frames") {
        set.frame_a = parse_number<int>(tok[2], lines.offset());
        set.frame_b = parse_number<int>(tok[3], lines.offset());
        header = true;
      }
      continue;
    }
    if (tok.size() != 4) throw FormatError("expected 'ua va ub vb'", lines.offset());
    Correspondence m;
    m.pixel_a = {parse_number<double>(tok[0], lines.offset()), parse_number<double>(tok[1], lines.offset())};
    m.pixel_b = {parse_number<double>(tok[2], lines.offset()), parse_number<double>(tok[3], lines.offset())};
    set.matches.push_back(m);
  }
  if (!header) throw FormatError("missing '# frames <a> <b>' header", 0);
  return set;
}

void write_tum(std::ostream& out, const Trajectory& trajectory) {
  for (const auto& s : trajectory) {
    const Vec3& t = s.pose.translation();
    const Eigen::Quaterniond q = s.pose.quaternion();
    out << format_double(s.timestamp) << ' ' << format_double(t.x()) << ' ' << format_double(t.y()) << ' '
        << format_double(t.z()) << ' ' << format_double(q.x()) << ' ' << format_double(q.y()) << ' '
        << format_double(q.z()) << ' ' << format_double(q.w()) << '\n';
  }
}

Trajectory read_tum(std::istream& in) {
  LineReader lines(in);
  std::string line;
  Trajectory trajectory;
  while (lines.next(line)) {
    if (blank(line) || split(line)[0].starts_with('#')) continue;
    const auto tok = split(line);
    if (tok.size() != 8) throw FormatError("expected 8 fields per TUM line", lines.offset());
    std::array<double, 8> v{};
    for (std::size_t i = 0; i < 8; ++i) v[i] = parse_number<double>(tok[i], lines.offset());
    const Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (!(q.norm() > 0.5)) throw FormatError("quaternion is not normalized", lines.offset());
    trajectory.push_back({v[0], Pose::from_quaternion(q, Vec3(v[1], v[2], v[3]))});
  }
  return trajectory;
}

void write_loss_header(std::ostream& out) { out << "step,l_p,l_s,l_g,l_d,l_total,n_p,n_g,n_d\n"; }

void write_loss_row(std::ostream& out, int step, const LossBreakdown& loss) {
  out << step << ',' << format_double(loss.l_p) << ',' << format_double(loss.l_s) << ',' << format_double(loss.l_g)
      << ',' << format_double(loss.l_d) << ',' << format_double(loss.l_total) << ',' << loss.n_p << ',' << loss.n_g
      << ',' << loss.n_d << '\n';
}

void write_camera(std::ostream& out, const CameraIntrinsics& K) {
  const nlohmann::json j = {{"fx", K.fx}, {"fy", K.fy}, {"cx", K.cx},
                            {"cy", K.cy}, {"width", K.width}, {"height", K.height}};
  out << j.dump(2) << '\n';
}

CameraIntrinsics read_camera(std::istream& in) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(e.what(), e.byte);
  }
  CameraIntrinsics K;
  try {
    K.fx = j.at("fx").get<double>();
    K.fy = j.at("fy").get<double>();
    K.cx = j.at("cx").get<double>();
    K.cy = j.at("cy").get<double>();
    K.width = j.at("width").get<int>();
    K.height = j.at("height").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(e.what(), 0);
  }
  K.validate();
  return K;
}

void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& writer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  writer(out);
  out.flush();
  if (!out) throw Error("failed writing " + path.string());
}

namespace {

template <typename Fn>
auto load(const std::filesystem::path& path, Fn&& reader) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return reader(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.message(), e.offset());
  }
}

}  // namespace

DepthMap load_depth(const std::filesystem::path& path) { return load(path, read_depth); }
MaskMap load_mask(const std::filesystem::path& path) { return load(path, read_mask); }
LabelRaster load_labels(const std::filesystem::path& path) { return load(path, read_labels); }
Image load_pgm(const std::filesystem::path& path) { return load(path, read_pgm); }
ToyDepthNet load_net(const std::filesystem::path& path) { return load(path, read_net); }
SparseDepth load_sparse(const std::filesystem::path& path) { return load(path, read_sparse); }
CorrespondenceSet load_correspondences(const std::filesystem::path& path) { return load(path, read_correspondences); }
Trajectory load_tum(const std::filesystem::path& path) { return load(path, read_tum); }
CameraIntrinsics load_camera(const std::filesystem::path& path) { return load(path, read_camera); }

std::string frame_stem(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d", id);
  return buf;
}

void write_frame_dir(const std::filesystem::path& dir, const FrameDirectory& fd) {
  std::filesystem::create_directories(dir);
  const auto& stream = fd.stream;
  if (!fd.depths.empty() && fd.depths.size() != stream.frames.size())
    throw DimensionMismatchError("one depth map per frame expected");
  if (stream.matches.size() + 1 != stream.frames.size() && !stream.frames.empty())
    throw DimensionMismatchError("one correspondence set per consecutive frame pair expected");
  write_file(dir / "camera.json", [&](std::ostream& out) { write_camera(out, stream.camera); });
  write_file(dir / "frames.txt", [&](std::ostream& out) {
    for (const auto& f : stream.frames) out << f.id << ' ' << format_double(f.timestamp) << '\n';
  });
  for (std::size_t i = 0; i < stream.frames.size(); ++i) {
    const auto& f = stream.frames[i];
    const std::string stem = "frame_" + frame_stem(f.id);
    write_file(dir / (stem + ".pgm"), [&](std::ostream& out) { write_pgm(out, f.image); });
    write_file(dir / (stem + ".seg"), [&](std::ostream& out) { write_labels(out, f.seg.labels); });
    if (f.seg.instances)
      write_file(dir / (stem + ".inst"), [&](std::ostream& out) { write_labels(out, *f.seg.instances); });
    if (!fd.depths.empty())
      write_file(dir / (stem + ".dpf"), [&](std::ostream& out) { write_depth(out, fd.depths[i]); });
    if (i < stream.matches.size())
      write_file(dir / ("matches_" + frame_stem(f.id) + ".txt"),
                 [&](std::ostream& out) { write_correspondences(out, stream.matches[i]); });
  }
  if (!fd.truth.empty()) write_file(dir / "truth.tum", [&](std::ostream& out) { write_tum(out, fd.truth); });
}

FrameDirectory load_frame_dir(const std::filesystem::path& dir) {
  FrameDirectory fd;
  fd.stream.camera = load_camera(dir / "camera.json");
  {
    std::ifstream in(dir / "frames.txt");
    if (!in) throw Error("cannot open " + (dir / "frames.txt").string());
    LineReader lines(in);
    std::string line;
    while (lines.next(line)) {
      if (blank(line)) continue;
      const auto tok = split(line);
      if (tok.size() != 2) throw FormatError((dir / "frames.txt").string() + ": expected 'id timestamp'", lines.offset());
      StreamFrame f;
      f.id = parse_number<int>(tok[0], lines.offset());
      f.timestamp = parse_number<double>(tok[1], lines.offset());
      fd.stream.frames.push_back(std::move(f));
    }
  }
  if (fd.stream.frames.empty()) throw EmptyInputError("no frames listed in " + (dir / "frames.txt").string());
  bool have_depth = true;
  for (std::size_t i = 0; i < fd.stream.frames.size(); ++i) {
    auto& f = fd.stream.frames[i];
    const std::string stem = "frame_" + frame_stem(f.id);
    f.image = load_pgm(dir / (stem + ".pgm"));
    f.seg.labels = load_labels(dir / (stem + ".seg"));
    if (std::filesystem::exists(dir / (stem + ".inst"))) f.seg.instances = load_labels(dir / (stem + ".inst"));
    const bool depth_here = std::filesystem::exists(dir / (stem + ".dpf"));
    if (depth_here && have_depth) {
      fd.depths.push_back(load_depth(dir / (stem + ".dpf")));
    } else {
      have_depth = false;
      fd.depths.clear();
    }
    if (i + 1 < fd.stream.frames.size())
      fd.stream.matches.push_back(load_correspondences(dir / ("matches_" + frame_stem(f.id) + ".txt")));
  }
  if (std::filesystem::exists(dir / "truth.tum")) fd.truth = load_tum(dir / "truth.tum");
  return fd;
}

}  // namespace adaptvo::io
