#include "lapcam/signal.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "lapcam/text_io.hpp"

namespace lapcam {

std::vector<double> SignalStream::times() const {
  std::vector<double> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.t);
  return out;
}

std::size_t SignalStream::index_at(double time) const {
  auto it = std::lower_bound(frames.begin(), frames.end(), time - 1e-9,
                             [](const SignalFrame& f, double x) { return f.t < x; });
  return static_cast<std::size_t>(it - frames.begin());
}

namespace {

template <typename T>
void check_shape(const std::optional<Grid<T>>& g, int h, int w, const char* name, std::size_t i) {
  if (g && (g->rows() != h || g->cols() != w)) {
    throw DataError("frame " + std::to_string(i) + ": " + name + " grid is " +
                    std::to_string(g->rows()) + "x" + std::to_string(g->cols()) + ", stream is " +
                    std::to_string(h) + "x" + std::to_string(w));
  }
}

void check_binary(const std::optional<MaskGrid>& g, const char* name, std::size_t i) {
  if (!g) return;
  for (auto b : g->values()) {
    if (b > 1) throw DataError("frame " + std::to_string(i) + ": " + name + " is not binary");
  }
}

}  // namespace

void SignalStream::validate() const {
  if (!(fps > 0.0) || !std::isfinite(fps)) throw DataError("fps must be positive");
  if (height <= 0 || width <= 0) throw DataError("grid size must be positive");
  const double dt = 1.0 / fps;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    if (!std::isfinite(f.t)) throw DataError("frame " + std::to_string(i) + ": non-finite time");
    if (i > 0) {
      const double gap = f.t - frames[i - 1].t;
      if (gap <= 0.0) {
        throw IntegrityError("frame " + std::to_string(i) + ": time " + std::to_string(f.t) +
                             " does not increase");
      }
      if (std::abs(gap - dt) > 0.1 * dt + 1e-12) {
        throw IntegrityError("frame " + std::to_string(i) + ": spacing " + std::to_string(gap) +
                             " deviates from 1/fps by more than 10%");
      }
    }
    check_shape(f.flow, height, width, "flow", i);
    check_shape(f.depth, height, width, "depth", i);
    check_shape(f.intensity, height, width, "intensity", i);
    check_shape(f.low_vis, height, width, "lowvis", i);
    check_shape(f.tool_mask, height, width, "toolmask", i);
    check_shape(f.surg_roi, height, width, "surgroi", i);
    check_binary(f.low_vis, "lowvis", i);
    check_binary(f.tool_mask, "toolmask", i);
    check_binary(f.surg_roi, "surgroi", i);
    if (f.flow) {
      for (const auto& fl : f.flow->values()) {
        if (!std::isfinite(fl.u) || !std::isfinite(fl.v)) {
          throw DataError("frame " + std::to_string(i) + ": non-finite flow");
        }
      }
    }
  }
  check_shape(border_mask, height, width, "border", 0);
  check_binary(border_mask, "border", 0);
}

std::size_t ScalarSeries::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true));
}

void ScalarSeries::check() const {
  require_invariant(t.size() == v.size() && v.size() == valid.size(),
                    "scalar series fields differ in length");
  for (std::size_t i = 1; i < t.size(); ++i) {
    require_invariant(t[i] > t[i - 1], "scalar series time is not strictly increasing");
  }
}

// ---------------------------------------------------------------------------
// Stream file I/O

std::filesystem::path border_sidecar_path(const std::filesystem::path& stream_path) {
  auto p = stream_path;
  p += ".border";
  return p;
}

namespace {

struct Header {
  double fps = 0.0;
  int h = 0;
  int w = 0;
  std::string video;
  std::vector<std::string> columns;
};

Header parse_header(const std::string& line, std::size_t lineno, Header hdr) {
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) {
    if (tok.empty() || tok[0] != '#') continue;
    const auto eq = tok.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = tok.substr(1, eq - 1);
    const std::string val = tok.substr(eq + 1);
    try {
      if (key == "fps") {
        hdr.fps = text::parse_double(val);
      } else if (key == "H") {
        hdr.h = std::stoi(val);
      } else if (key == "W") {
        hdr.w = std::stoi(val);
      } else if (key == "video") {
        hdr.video = val;
      } else if (key == "columns") {
        hdr.columns = text::split(val, ',');
      }
    } catch (const std::exception& e) {
      throw ParseError("bad header field '" + tok + "'", lineno);
    }
  }
  return hdr;
}

class TokenCursor {
 public:
  TokenCursor(std::vector<std::string_view> toks, std::size_t line) : toks_(std::move(toks)), line_(line) {}

  std::string_view next(const char* what) {
    if (pos_ >= toks_.size()) throw ParseError(std::string("row ends before ") + what, line_);
    return toks_[pos_++];
  }
  bool next_is_na() const { return pos_ < toks_.size() && toks_[pos_] == "NA"; }
  bool done() const { return pos_ == toks_.size(); }
  std::size_t line() const { return line_; }

  double real(const char* what) {
    const auto tok = next(what);
    double x = 0.0;
    if (!text::try_parse(tok, x)) throw ParseError(std::string("bad number for ") + what, line_);
    return x;
  }
  float real_f(const char* what) {
    const auto tok = next(what);
    float x = 0.0f;
    if (!text::try_parse(tok, x)) throw ParseError(std::string("bad number for ") + what, line_);
    return x;
  }
  std::uint8_t bit(const char* what) {
    const auto tok = next(what);
    if (tok == "0") return 0;
    if (tok == "1") return 1;
    throw ParseError(std::string("expected 0/1 for ") + what, line_);
  }

 private:
  std::vector<std::string_view> toks_;
  std::size_t pos_ = 0;
  std::size_t line_;
};

std::optional<double> read_opt_scalar(TokenCursor& cur, const char* what) {
  if (cur.next_is_na()) {
    cur.next(what);
    return std::nullopt;
  }
  return cur.real(what);
}

std::optional<RealGrid> read_real_grid(TokenCursor& cur, int h, int w, const char* what) {
  if (cur.next_is_na()) {
    cur.next(what);
    return std::nullopt;
  }
  RealGrid g(h, w);
  for (auto& x : g.values()) x = cur.real_f(what);
  return g;
}

std::optional<MaskGrid> read_mask_grid(TokenCursor& cur, int h, int w, const char* what) {
  if (cur.next_is_na()) {
    cur.next(what);
    return std::nullopt;
  }
  MaskGrid g(h, w);
  for (auto& x : g.values()) x = cur.bit(what);
  return g;
}

std::optional<FlowGrid> read_flow_grid(TokenCursor& cur, int h, int w) {
  if (cur.next_is_na()) {
    cur.next("flow");
    return std::nullopt;
  }
  FlowGrid g(h, w);
  for (auto& x : g.values()) {
    x.u = cur.real_f("flow");
    x.v = cur.real_f("flow");
  }
  return g;
}

}  // namespace

SignalStream load_stream(const std::filesystem::path& path, const StreamSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open stream file " + path.string());

  Header hdr;
  std::string line;
  std::size_t lineno = 0;
  SignalStream stream;
  std::vector<std::string> columns;
  bool header_done = false;

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (header_done) continue;
      hdr = parse_header(line, lineno, hdr);
      continue;
    }
    if (!header_done) {
      header_done = true;
      if (!(hdr.fps > 0.0)) throw ParseError("header lacks a positive #fps", lineno);
      if (hdr.h <= 0 || hdr.w <= 0) throw ParseError("header lacks #H/#W", lineno);
      columns = !schema.columns.empty() ? schema.columns
                : !hdr.columns.empty()  ? hdr.columns
                                        : all_stream_columns();
      if (columns.empty() || columns.front() != "t") {
        throw ParseError("first column must be t", lineno);
      }
      for (const auto& c : columns) {
        const auto& all = all_stream_columns();
        if (std::find(all.begin(), all.end(), c) == all.end()) {
          throw ParseError("unknown column '" + c + "'", lineno);
        }
      }
      stream.fps = hdr.fps;
      stream.height = hdr.h;
      stream.width = hdr.w;
      stream.video_id = hdr.video;
    }

    TokenCursor cur(text::split_view(line, ','), lineno);
    SignalFrame f;
    std::optional<double> tool_u, tool_v;
    for (const auto& c : columns) {
      if (c == "t") {
        f.t = cur.real("t");
      } else if (c == "tool_u") {
        tool_u = read_opt_scalar(cur, "tool_u");
      } else if (c == "tool_v") {
        tool_v = read_opt_scalar(cur, "tool_v");
      } else if (c == "theta") {
        f.grasper_angle = read_opt_scalar(cur, "theta");
      } else if (c == "flow") {
        f.flow = read_flow_grid(cur, hdr.h, hdr.w);
      } else if (c == "depth") {
        f.depth = read_real_grid(cur, hdr.h, hdr.w, "depth");
      } else if (c == "intensity") {
        f.intensity = read_real_grid(cur, hdr.h, hdr.w, "intensity");
      } else if (c == "lowvis") {
        f.low_vis = read_mask_grid(cur, hdr.h, hdr.w, "lowvis");
      } else if (c == "toolmask") {
        f.tool_mask = read_mask_grid(cur, hdr.h, hdr.w, "toolmask");
      } else if (c == "surgroi") {
        f.surg_roi = read_mask_grid(cur, hdr.h, hdr.w, "surgroi");
      }
    }
    if (!cur.done()) throw ParseError("row has trailing fields", lineno);
    if (tool_u.has_value() != tool_v.has_value()) {
      throw ParseError("tool_u and tool_v must be both present or both NA", lineno);
    }
    if (tool_u) f.tool_tip = PixelPoint{*tool_u, *tool_v};
    stream.frames.push_back(std::move(f));
  }
  if (!header_done) {
    if (!(hdr.fps > 0.0) || hdr.h <= 0 || hdr.w <= 0) throw ParseError("missing header", lineno);
    stream.fps = hdr.fps;
    stream.height = hdr.h;
    stream.width = hdr.w;
    stream.video_id = hdr.video;
  }

  const auto border = border_sidecar_path(path);
  if (std::filesystem::exists(border)) {
    std::ifstream bin(border);
    std::string bl;
    std::size_t bno = 0;
    while (std::getline(bin, bl)) {
      ++bno;
      if (!bl.empty() && bl.back() == '\r') bl.pop_back();
      if (bl.empty() || bl[0] == '#') continue;
      TokenCursor cur(text::split_view(bl, ','), bno);
      stream.border_mask = read_mask_grid(cur, stream.height, stream.width, "border");
      if (!cur.done()) throw ParseError("border row has trailing fields", bno);
      break;
    }
  }

  stream.validate();
  return stream;
}

namespace {

void write_mask(std::string& out, const std::optional<MaskGrid>& g) {
  if (!g) {
    out += ",NA";
    return;
  }
  for (auto b : g->values()) {
    out += ',';
    out += static_cast<char>('0' + b);
  }
}

void write_real(std::string& out, const std::optional<RealGrid>& g) {
  if (!g) {
    out += ",NA";
    return;
  }
  for (float x : g->values()) {
    out += ',';
    text::append(out, x);
  }
}

}  // namespace

void save_stream(const SignalStream& stream, const std::filesystem::path& path) {
  stream.validate();
  std::vector<std::string> cols{"t"};
  const auto has = [&](auto pred) {
    return std::any_of(stream.frames.begin(), stream.frames.end(), pred);
  };
  if (has([](const SignalFrame& f) { return f.tool_tip.has_value(); })) {
    cols.emplace_back("tool_u");
    cols.emplace_back("tool_v");
  }
  if (has([](const SignalFrame& f) { return f.grasper_angle.has_value(); })) cols.emplace_back("theta");
  if (has([](const SignalFrame& f) { return f.flow.has_value(); })) cols.emplace_back("flow");
  if (has([](const SignalFrame& f) { return f.depth.has_value(); })) cols.emplace_back("depth");
  if (has([](const SignalFrame& f) { return f.intensity.has_value(); })) cols.emplace_back("intensity");
  if (has([](const SignalFrame& f) { return f.low_vis.has_value(); })) cols.emplace_back("lowvis");
  if (has([](const SignalFrame& f) { return f.tool_mask.has_value(); })) cols.emplace_back("toolmask");
  if (has([](const SignalFrame& f) { return f.surg_roi.has_value(); })) cols.emplace_back("surgroi");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write stream file " + path.string());
  std::string header = "#fps=";
  text::append(header, stream.fps);
  header += " #H=" + std::to_string(stream.height) + " #W=" + std::to_string(stream.width) +
            " #video=" + (stream.video_id.empty() ? std::string("unnamed") : stream.video_id) +
            " #columns=" + text::join(cols, ",") + " #version=" + kFormatVersion + "\n";
  out << header;

  std::string row;
  for (const auto& f : stream.frames) {
    row.clear();
    text::append(row, f.t);
    for (std::size_t c = 1; c < cols.size(); ++c) {
      const auto& name = cols[c];
      if (name == "tool_u" || name == "tool_v") {
        row += ',';
        if (f.tool_tip) {
          text::append(row, name == "tool_u" ? f.tool_tip->u : f.tool_tip->v);
        } else {
          row += "NA";
        }
      } else if (name == "theta") {
        row += ',';
        if (f.grasper_angle) {
          text::append(row, *f.grasper_angle);
        } else {
          row += "NA";
        }
      } else if (name == "flow") {
        if (!f.flow) {
          row += ",NA";
        } else {
          for (const auto& fl : f.flow->values()) {
            row += ',';
            text::append(row, fl.u);
            row += ',';
            text::append(row, fl.v);
          }
        }
      } else if (name == "depth") {
        write_real(row, f.depth);
      } else if (name == "intensity") {
        write_real(row, f.intensity);
      } else if (name == "lowvis") {
        write_mask(row, f.low_vis);
      } else if (name == "toolmask") {
        write_mask(row, f.tool_mask);
      } else if (name == "surgroi") {
        write_mask(row, f.surg_roi);
      }
    }
    row += '\n';
    out << row;
  }

  const auto border = border_sidecar_path(path);
  if (stream.border_mask) {
    std::ofstream bout(border, std::ios::binary);
    std::string b = "# border mask " + std::to_string(stream.height) + "x" +
                    std::to_string(stream.width) + "\n";
    std::string vals;
    write_mask(vals, stream.border_mask);
    b += vals.substr(1);
    b += '\n';
    bout << b;
  } else if (std::filesystem::exists(border)) {
    std::filesystem::remove(border);
  }
}

// ---------------------------------------------------------------------------
// Filters

namespace {

std::vector<std::pair<std::size_t, std::size_t>> valid_runs(const ScalarSeries& s) {
  std::vector<std::pair<std::size_t, std::size_t>> runs;
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    if (!s.valid[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && s.valid[j]) ++j;
    runs.emplace_back(i, j);
    i = j;
  }
  return runs;
}

// Hat matrix of a least-squares polynomial fit over `len` equally spaced
// samples: (P y)_k is the fitted value at sample k.
Eigen::MatrixXd poly_projection(int len, int degree) {
  const int p = std::min(degree, len - 1);
  Eigen::MatrixXd a(len, p + 1);
  const double centre = 0.5 * (len - 1);
  for (int k = 0; k < len; ++k) {
    double x = 1.0;
    for (int j = 0; j <= p; ++j) {
      a(k, j) = x;
      x *= (k - centre);
    }
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(len, p + 1);
  return q * q.transpose();
}

}  // namespace

ScalarSeries savgol_smooth(const ScalarSeries& s, int window, int degree) {
  require_config(window > 0 && window % 2 == 1, "savgol window must be odd and positive");
  require_config(degree >= 0, "savgol degree must be non-negative");
  require_config(window > degree, "savgol window must exceed the polynomial degree");
  s.check();

  ScalarSeries out = s;
  const Eigen::MatrixXd full = poly_projection(window, degree);
  const int half = window / 2;

  for (const auto& [b, e] : valid_runs(s)) {
    const int len = static_cast<int>(e - b);
    const auto at = [&](int k) { return s.v[b + static_cast<std::size_t>(k)]; };
    if (len < window) {
      const Eigen::MatrixXd p = poly_projection(len, degree);
      Eigen::VectorXd y(len);
      for (int k = 0; k < len; ++k) y(k) = at(k);
      const Eigen::VectorXd fit = p * y;
      for (int k = 0; k < len; ++k) out.v[b + k] = fit(k);
      continue;
    }
    Eigen::VectorXd y(window);
    for (int k = 0; k < len; ++k) {
      int start = k - half;
      int row = half;
      if (start < 0) {
        start = 0;
        row = k;
      } else if (start + window > len) {
        start = len - window;
        row = k - start;
      }
      double acc = 0.0;
      for (int j = 0; j < window; ++j) acc += full(row, j) * at(start + j);
      out.v[b + k] = acc;
    }
  }
  return out;
}

namespace {

struct Biquad {
  double b0, b1, b2, a1, a2;
};

Biquad butterworth2(double cutoff_hz, double fps) {
  const double k = std::tan(std::numbers::pi * cutoff_hz / fps);
  const double sq2 = std::numbers::sqrt2;
  const double norm = 1.0 / (1.0 + sq2 * k + k * k);
  Biquad q{};
  q.b0 = k * k * norm;
  q.b1 = 2.0 * q.b0;
  q.b2 = q.b0;
  q.a1 = 2.0 * (k * k - 1.0) * norm;
  q.a2 = (1.0 - sq2 * k + k * k) * norm;
  return q;
}

// Direct form II transposed, state initialised to the steady state of x[0].
void run_biquad(const Biquad& q, std::vector<double>& x) {
  if (x.empty()) return;
  double z1 = (q.b1 - q.a1 + q.b2 - q.a2) * x[0];
  double z2 = (q.b2 - q.a2) * x[0];
  for (double& xi : x) {
    const double in = xi;
    const double y = q.b0 * in + z1;
    z1 = q.b1 * in - q.a1 * y + z2;
    z2 = q.b2 * in - q.a2 * y;
    xi = y;
  }
}

}  // namespace

ScalarSeries lowpass_zero_phase(const ScalarSeries& s, double cutoff_hz, double fps) {
  require_config(fps > 0.0, "fps must be positive");
  require_config(cutoff_hz > 0.0 && cutoff_hz < 0.5 * fps,
                 "low-pass cutoff must lie strictly between 0 and Nyquist");
  s.check();
  const Biquad q = butterworth2(cutoff_hz, fps);
  ScalarSeries out = s;
  // Long enough for the filter transient to settle before real samples.
  const std::size_t want_pad = std::max<std::size_t>(9, static_cast<std::size_t>(std::ceil(3.0 * fps / cutoff_hz)));

  for (const auto& [b, e] : valid_runs(s)) {
    const std::size_t len = e - b;
    if (len < 2) continue;
    const std::size_t pad = std::min(want_pad, len - 1);
    std::vector<double> x;
    x.reserve(len + 2 * pad);
    const double first = s.v[b];
    const double last = s.v[e - 1];
    for (std::size_t k = pad; k >= 1; --k) x.push_back(2.0 * first - s.v[b + k]);
    for (std::size_t k = b; k < e; ++k) x.push_back(s.v[k]);
    for (std::size_t k = 1; k <= pad; ++k) x.push_back(2.0 * last - s.v[e - 1 - k]);
    run_biquad(q, x);
    std::reverse(x.begin(), x.end());
    run_biquad(q, x);
    std::reverse(x.begin(), x.end());
    for (std::size_t k = 0; k < len; ++k) out.v[b + k] = x[pad + k];
  }
  return out;
}

}  // namespace lapcam
