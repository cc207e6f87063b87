#include "featloc/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace featloc {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace fs = std::filesystem;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileNotFoundError("file not found: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

namespace {

class Writer {
 public:
  template <class T>
  void put(T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    buf_.append(b, sizeof(T));
  }
  void f32(double v) { put(float(v)); }
  void raw(const std::string& s) { buf_ += s; }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string data, std::string what) : data_(std::move(data)), what_(std::move(what)) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  double f32() { return double(get<float>()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError(what_ + ": truncated file");
  }
  bool at_end() const { return pos_ == data_.size(); }
  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }
  const std::string& data() const { return data_; }

 private:
  std::string data_;
  std::string what_;
  std::size_t pos_ = 0;
};

Quat checked_quaternion(double w, double x, double y, double z, const std::string& where) {
  Quat q(w, x, y, z);
  const double n = q.norm();
  if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-3) throw FormatError(where + ": quaternion is not unit");
  if (std::abs(n - 1.0) > 1e-6) q.normalize();
  return q;
}

GaussianScene make_scene(std::vector<FeatureGaussian> gs, const std::string& where) {
  try {
    return GaussianScene(std::move(gs));
  } catch (const std::invalid_argument& e) {
    throw FormatError(where + ": " + e.what());
  }
}

}  // namespace

void write_scene(const fs::path& path, const GaussianScene& scene) {
  Writer w;
  w.raw("FGS1");
  w.put<std::uint32_t>(kSceneVersion);
  w.put<std::uint64_t>(scene.size());
  w.put<std::uint32_t>(std::uint32_t(scene.feature_dim()));
  for (const auto& g : scene.gaussians()) {
    for (int i = 0; i < 3; ++i) w.f32(g.center[i]);
    w.f32(g.rotation.w());
    w.f32(g.rotation.x());
    w.f32(g.rotation.y());
    w.f32(g.rotation.z());
    for (int i = 0; i < 3; ++i) w.f32(g.scale[i]);
    w.f32(g.opacity);
    for (int i = 0; i < 3; ++i) w.f32(g.color[i]);
    for (Eigen::Index i = 0; i < g.feature.size(); ++i) w.f32(g.feature[i]);
  }
  write_text(path, w.str());
}

GaussianScene read_scene(const fs::path& path) {
  const std::string where = "scene " + path.string();
  Reader r(read_text(path), where);
  if (r.bytes(4) != "FGS1") throw FormatError(where + ": bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kSceneVersion) throw FormatError(where + ": unsupported version " + std::to_string(version));
  const auto count = r.get<std::uint64_t>();
  const auto dim = r.get<std::uint32_t>();
  if (count == 0) throw FormatError(where + ": empty scene");
  const std::uint64_t record = 4ull * (14 + std::uint64_t(dim));
  if (count > (r.data().size() - r.pos()) / record) throw FormatError(where + ": truncated file");
  std::vector<FeatureGaussian> gs(count);
  for (auto& g : gs) {
    for (int i = 0; i < 3; ++i) g.center[i] = r.f32();
    const double qw = r.f32(), qx = r.f32(), qy = r.f32(), qz = r.f32();
    g.rotation = checked_quaternion(qw, qx, qy, qz, where);
    for (int i = 0; i < 3; ++i) g.scale[i] = r.f32();
    g.opacity = r.f32();
    for (int i = 0; i < 3; ++i) g.color[i] = r.f32();
    g.feature.resize(dim);
    for (std::uint32_t i = 0; i < dim; ++i) g.feature[i] = r.f32();
  }
  if (!r.at_end()) throw FormatError(where + ": trailing bytes after last Gaussian");
  return make_scene(std::move(gs), where);
}

void write_ply(const fs::path& path, const GaussianScene& scene) {
  std::ostringstream h;
  h << "ply\nformat binary_little_endian 1.0\ncomment featloc-raw-attributes\n";
  h << "element vertex " << scene.size() << "\n";
  for (const char* n : {"x", "y", "z", "rot_0", "rot_1", "rot_2", "rot_3", "scale_0", "scale_1", "scale_2", "opacity",
                        "red", "green", "blue"})
    h << "property float " << n << "\n";
  for (int i = 0; i < scene.feature_dim(); ++i) h << "property float f_" << i << "\n";
  h << "end_header\n";
  Writer w;
  w.raw(h.str());
  for (const auto& g : scene.gaussians()) {
    for (int i = 0; i < 3; ++i) w.f32(g.center[i]);
    w.f32(g.rotation.w());
    w.f32(g.rotation.x());
    w.f32(g.rotation.y());
    w.f32(g.rotation.z());
    for (int i = 0; i < 3; ++i) w.f32(g.scale[i]);
    w.f32(g.opacity);
    for (int i = 0; i < 3; ++i) w.f32(g.color[i]);
    for (Eigen::Index i = 0; i < g.feature.size(); ++i) w.f32(g.feature[i]);
  }
  write_text(path, w.str());
}

GaussianScene read_ply(const fs::path& path) {
  const std::string where = "ply " + path.string();
  const std::string data = read_text(path);
  const std::size_t end = data.find("end_header\n");
  if (data.rfind("ply\n", 0) != 0 || end == std::string::npos) throw FormatError(where + ": not a PLY file");
  std::istringstream header(data.substr(0, end));
  std::string line;
  bool raw = false, in_vertex = false, binary = false;
  std::uint64_t count = 0;
  struct Prop {
    std::string name;
    std::size_t offset, size;
    bool is_double;
  };
  std::vector<Prop> props;
  std::size_t stride = 0;
  int line_no = 0;
  while (std::getline(header, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") {
      std::string fmt;
      ls >> fmt;
      binary = fmt == "binary_little_endian";
    } else if (kw == "comment") {
      std::string rest;
      ls >> rest;
      raw = raw || rest == "featloc-raw-attributes";
    } else if (kw == "element") {
      std::string name;
      ls >> name;
      in_vertex = name == "vertex";
      if (in_vertex && !(ls >> count)) throw FormatError(where + ": line " + std::to_string(line_no) + ": bad element");
    } else if (kw == "property" && in_vertex) {
      std::string type, name;
      ls >> type >> name;
      std::size_t size;
      if (type == "float" || type == "float32") size = 4;
      else if (type == "double" || type == "float64") size = 8;
      else throw FormatError(where + ": line " + std::to_string(line_no) + ": unsupported property type " + type);
      props.push_back({name, stride, size, size == 8});
      stride += size;
    }
  }
  if (!binary) throw FormatError(where + ": only binary_little_endian PLY is supported");
  std::map<std::string, const Prop*> by_name;
  for (const auto& p : props) by_name[p.name] = &p;
  auto need = [&](const std::string& n) {
    auto it = by_name.find(n);
    if (it == by_name.end()) throw FormatError(where + ": missing property " + n);
    return it->second;
  };
  int dim = 0;
  while (by_name.count("f_" + std::to_string(dim))) ++dim;
  if (count == 0) throw FormatError(where + ": empty scene");
  const std::size_t body = end + std::strlen("end_header\n");
  if ((data.size() - body) / stride < count) throw FormatError(where + ": truncated file");
  auto value = [&](std::uint64_t i, const Prop* p) {
    const char* at = data.data() + body + i * stride + p->offset;
    if (p->is_double) {
      double d;
      std::memcpy(&d, at, 8);
      return d;
    }
    float f;
    std::memcpy(&f, at, 4);
    return double(f);
  };
  const char* color_names[3] = {"red", "green", "blue"};
  std::vector<FeatureGaussian> gs(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    FeatureGaussian& g = gs[i];
    g.center = Vec3(value(i, need("x")), value(i, need("y")), value(i, need("z")));
    double q[4];
    for (int k = 0; k < 4; ++k) q[k] = value(i, need("rot_" + std::to_string(k)));
    g.feature.resize(dim);
    for (int k = 0; k < dim; ++k) g.feature[k] = value(i, need("f_" + std::to_string(k)));
    if (raw) {
      g.rotation = checked_quaternion(q[0], q[1], q[2], q[3], where);
      for (int k = 0; k < 3; ++k) g.scale[k] = value(i, need("scale_" + std::to_string(k)));
      g.opacity = value(i, need("opacity"));
      for (int k = 0; k < 3; ++k) g.color[k] = value(i, need(color_names[k]));
    } else {
      constexpr double kSh0 = 0.28209479177387814;
      const Quat rq(q[0], q[1], q[2], q[3]);
      if (!(rq.norm() > 0.0)) throw FormatError(where + ": zero quaternion");
      g.rotation = rq.normalized();
      for (int k = 0; k < 3; ++k) g.scale[k] = std::exp(value(i, need("scale_" + std::to_string(k))));
      g.opacity = 1.0 / (1.0 + std::exp(-value(i, need("opacity"))));
      for (int k = 0; k < 3; ++k)
        g.color[k] = std::clamp(0.5 + kSh0 * value(i, need("f_dc_" + std::to_string(k))), 0.0, 1.0);
    }
  }
  return make_scene(std::move(gs), where);
}

namespace {

// Splits text into non-empty, non-comment lines with their line numbers.
std::vector<std::pair<int, std::vector<std::string>>> tokenize(const std::string& text) {
  std::vector<std::pair<int, std::vector<std::string>>> out;
  std::istringstream in(text);
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    std::istringstream ls(line);
    std::vector<std::string> toks;
    std::string t;
    while (ls >> t) toks.push_back(t);
    if (toks.empty() || toks[0][0] == '#') continue;
    out.emplace_back(no, std::move(toks));
  }
  return out;
}

double parse_number(const std::string& s, int line, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(what + ": line " + std::to_string(line) + ": bad number '" + s + "'");
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<NamedPose> parse_poses(const std::string& text) {
  std::vector<NamedPose> out;
  for (const auto& [line, t] : tokenize(text)) {
    if (t.size() != 8)
      throw FormatError("poses: line " + std::to_string(line) + ": expected 'name qw qx qy qz tx ty tz'");
    double v[7];
    for (int i = 0; i < 7; ++i) v[i] = parse_number(t[std::size_t(i) + 1], line, "poses");
    NamedPose p;
    p.name = t[0];
    p.pose.rotation = checked_quaternion(v[0], v[1], v[2], v[3], "poses: line " + std::to_string(line));
    p.pose.translation = Vec3(v[4], v[5], v[6]);
    out.push_back(std::move(p));
  }
  return out;
}

void write_poses(const fs::path& path, const std::vector<NamedPose>& poses) {
  std::string s;
  for (const auto& p : poses) {
    const Quat& q = p.pose.rotation;
    const Vec3& t = p.pose.translation;
    s += p.name + " " + fmt(q.w()) + " " + fmt(q.x()) + " " + fmt(q.y()) + " " + fmt(q.z()) + " " + fmt(t.x()) + " " +
         fmt(t.y()) + " " + fmt(t.z()) + "\n";
  }
  write_text(path, s);
}

std::vector<NamedPose> read_poses(const fs::path& path) { return parse_poses(read_text(path)); }

std::vector<NamedIntrinsics> parse_intrinsics(const std::string& text) {
  std::vector<NamedIntrinsics> out;
  for (const auto& [line, t] : tokenize(text)) {
    const std::string where = "intrinsics: line " + std::to_string(line);
    if (t.size() != 7) throw FormatError(where + ": expected 'name fx fy cx cy w h'");
    NamedIntrinsics c;
    c.name = t[0];
    c.intr.fx = parse_number(t[1], line, "intrinsics");
    c.intr.fy = parse_number(t[2], line, "intrinsics");
    c.intr.cx = parse_number(t[3], line, "intrinsics");
    c.intr.cy = parse_number(t[4], line, "intrinsics");
    const double w = parse_number(t[5], line, "intrinsics"), h = parse_number(t[6], line, "intrinsics");
    if (w != std::floor(w) || h != std::floor(h)) throw FormatError(where + ": image size must be integer");
    c.intr.width = int(w);
    c.intr.height = int(h);
    try {
      c.intr.validate();
    } catch (const std::invalid_argument& e) {
      throw FormatError(where + ": " + e.what());
    }
    out.push_back(std::move(c));
  }
  return out;
}

void write_intrinsics(const fs::path& path, const std::vector<NamedIntrinsics>& cams) {
  std::string s;
  for (const auto& c : cams)
    s += c.name + " " + fmt(c.intr.fx) + " " + fmt(c.intr.fy) + " " + fmt(c.intr.cx) + " " + fmt(c.intr.cy) + " " +
         std::to_string(c.intr.width) + " " + std::to_string(c.intr.height) + "\n";
  write_text(path, s);
}

std::vector<NamedIntrinsics> read_intrinsics(const fs::path& path) { return parse_intrinsics(read_text(path)); }

namespace {

void put_grid(Writer& w, int d, int h, int wd, const std::vector<double>& data) {
  w.raw("FMP1");
  w.put<std::uint32_t>(std::uint32_t(d));
  w.put<std::uint32_t>(std::uint32_t(h));
  w.put<std::uint32_t>(std::uint32_t(wd));
  for (double v : data) w.f32(v);
}

FeatureMap get_grid(const fs::path& path) {
  const std::string where = "feature map " + path.string();
  Reader r(read_text(path), where);
  if (r.bytes(4) != "FMP1") throw FormatError(where + ": bad magic");
  const auto d = r.get<std::uint32_t>(), h = r.get<std::uint32_t>(), w = r.get<std::uint32_t>();
  if (d == 0 || h == 0 || w == 0) throw FormatError(where + ": empty map");
  const std::uint64_t n = std::uint64_t(d) * h * w;
  r.need(n * 4);
  FeatureMap fm{int(d), int(h), int(w)};
  for (double& v : fm.data) {
    v = r.f32();
    if (!std::isfinite(v)) throw FormatError(where + ": non-finite value");
  }
  if (!r.at_end()) throw FormatError(where + ": trailing bytes");
  return fm;
}

}  // namespace

void write_featmap(const fs::path& path, const FeatureMap& fm) {
  Writer w;
  put_grid(w, fm.channels, fm.height, fm.width, fm.data);
  write_text(path, w.str());
}

FeatureMap read_featmap(const fs::path& path) { return get_grid(path); }

void write_image(const fs::path& path, const ImageBuffer& img) {
  Writer w;
  put_grid(w, 3, img.height, img.width, img.data);
  write_text(path, w.str());
}

ImageBuffer read_image(const fs::path& path) {
  FeatureMap fm = get_grid(path);
  if (fm.channels != 3) throw FormatError("image " + path.string() + ": expected 3 channels");
  ImageBuffer img(fm.height, fm.width);
  img.data = std::move(fm.data);
  return img;
}

void write_ppm(const fs::path& path, const ImageBuffer& img) {
  std::string s = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) s += char(std::lround(std::clamp(img.at(c, y, x), 0.0, 1.0) * 255.0));
  write_text(path, s);
}

void write_landmarks(const fs::path& path, const std::vector<int>& indices) {
  std::string s;
  for (int i : indices) s += std::to_string(i) + "\n";
  write_text(path, s);
}

std::vector<int> read_landmarks(const fs::path& path) {
  std::vector<int> out;
  for (const auto& [line, t] : tokenize(read_text(path))) {
    if (t.size() != 1) throw FormatError("landmarks: line " + std::to_string(line) + ": expected one index");
    const double v = parse_number(t[0], line, "landmarks");
    if (v < 0 || v != std::floor(v) || v > 2147483647.0)
      throw FormatError("landmarks: line " + std::to_string(line) + ": bad index '" + t[0] + "'");
    out.push_back(int(v));
  }
  return out;
}

void write_detector(const fs::path& path, const DetectorParams& params) {
  params.validate();
  Writer w;
  w.raw("DET1");
  w.put<std::uint32_t>(kDetectorVersion);
  w.put<std::uint32_t>(std::uint32_t(params.feature_dim));
  w.put<std::uint32_t>(std::uint32_t(params.layers.size()));
  for (int c : params.channel_plan()) w.put<std::uint32_t>(std::uint32_t(c));
  for (int k : params.kernel_plan()) w.put<std::uint32_t>(std::uint32_t(k));
  for (const auto& l : params.layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.f32(l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) w.f32(l.bias[r]);
  }
  write_text(path, w.str());
}

DetectorParams read_detector(const fs::path& path) {
  const std::string where = "detector " + path.string();
  Reader r(read_text(path), where);
  if (r.bytes(4) != "DET1") throw FormatError(where + ": bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kDetectorVersion) throw FormatError(where + ": unsupported version " + std::to_string(version));
  DetectorParams p;
  p.feature_dim = int(r.get<std::uint32_t>());
  const auto n_layers = r.get<std::uint32_t>();
  if (n_layers == 0 || n_layers > 64) throw FormatError(where + ": bad layer count");
  std::vector<int> plan;
  for (std::uint32_t i = 0; i <= n_layers; ++i) plan.push_back(int(r.get<std::uint32_t>()));
  if (plan.front() != p.feature_dim) throw FormatError(where + ": channel plan does not start at D");
  std::vector<int> kernels;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    const auto k = r.get<std::uint32_t>();
    if (k == 0 || k % 2 == 0 || k > 15) throw FormatError(where + ": bad kernel size " + std::to_string(k));
    kernels.push_back(int(k));
  }
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    ConvLayer layer;
    layer.in_channels = plan[l];
    layer.out_channels = plan[l + 1];
    if (layer.in_channels <= 0 || layer.out_channels <= 0 || layer.in_channels > 65536 || layer.out_channels > 65536)
      throw FormatError(where + ": bad channel count");
    layer.kernel = kernels[l];
    const int taps = layer.kernel * layer.kernel;
    r.need(std::size_t(layer.out_channels) * (std::size_t(layer.in_channels) * taps + 1) * 4);
    layer.weight.resize(layer.out_channels, layer.in_channels * taps);
    layer.bias.resize(layer.out_channels);
    for (Eigen::Index a = 0; a < layer.weight.rows(); ++a)
      for (Eigen::Index b = 0; b < layer.weight.cols(); ++b) layer.weight(a, b) = r.f32();
    for (Eigen::Index a = 0; a < layer.bias.size(); ++a) layer.bias[a] = r.f32();
    p.layers.push_back(std::move(layer));
  }
  if (!r.at_end()) throw FormatError(where + ": trailing bytes");
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(where + ": " + e.what());
  }
  return p;
}

}  // namespace featloc
