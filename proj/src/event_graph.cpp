#include "lapcam/event_graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "lapcam/text_io.hpp"

namespace lapcam {

void GraphParams::validate() const {
  require_config(delta_t >= 0.0, "delta_t must be non-negative");
  require_config(delta_ovl >= 0.0, "delta_ovl must be non-negative");
  require_config(k_topk >= 1, "k_topk must be at least 1");
  require_config(min_shared >= 1, "min_shared must be at least 1");
}

std::vector<DescriptorMask> AttributedEventGraph::masks() const {
  std::vector<DescriptorMask> m;
  m.reserve(events.size());
  for (const auto& e : events) m.push_back(e.mask);
  return m;
}

void AttributedEventGraph::check() const {
  const auto m = static_cast<Eigen::Index>(events.size());
  require_invariant(A.rows() == m && A.cols() == m && S.rows() == m && S.cols() == m && X.rows() == m,
                    "graph matrices do not match the event registry");
  for (Eigen::Index i = 0; i < m; ++i) {
    require_invariant(A(i, i) == 0.0 && S(i, i) == 0.0, "graph diagonal must be zero");
    int nnz = 0;
    for (Eigen::Index j = 0; j < m; ++j) {
      require_invariant(A(i, j) == A(j, i) && S(i, j) == S(j, i), "graph matrices must be symmetric");
      require_invariant(S(i, j) >= 0.0 && S(i, j) <= 1.0 + 1e-12, "similarity outside [0,1]");
      if (S(i, j) != 0.0) ++nnz;
    }
    require_invariant(nnz <= 2 * params.k_topk, "similarity row exceeds 2k nonzeros");
  }
}

Eigen::MatrixXd temporal_adjacency(const std::vector<EventRecord>& events, double delta_t, double delta_ovl) {
  const auto m = static_cast<Eigen::Index>(events.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      if (i == j) continue;
      const auto& a = events[static_cast<std::size_t>(i)];
      const auto& b = events[static_cast<std::size_t>(j)];
      if (a.video_id != b.video_id) continue;
      const double gap = b.t_s - a.t_e;
      const bool seq = gap >= -1e-9 && gap <= delta_t + 1e-9;
      const double overlap = std::min(a.t_e, b.t_e) - std::max(a.t_s, b.t_s);
      const bool ovl = overlap >= delta_ovl - 1e-9 && overlap > 0.0;
      if (seq || ovl) {
        A(i, j) = 1.0;
        A(j, i) = 1.0;
      }
    }
  }
  return A;
}

double masked_cosine(std::span<const double> x_i, std::span<const double> x_j,
                     std::span<const std::uint8_t> m_i, std::span<const std::uint8_t> m_j, int min_shared) {
  require_config(x_i.size() == x_j.size() && m_i.size() == x_i.size() && m_j.size() == x_j.size(),
                 "masked_cosine operands differ in length");
  int shared = 0;
  double dot = 0.0, ni = 0.0, nj = 0.0;
  for (std::size_t d = 0; d < x_i.size(); ++d) {
    if (!m_i[d] || !m_j[d]) continue;
    ++shared;
    dot += x_i[d] * x_j[d];
    ni += x_i[d] * x_i[d];
    nj += x_j[d] * x_j[d];
  }
  constexpr double kEps = 1e-12;
  if (shared < min_shared || ni < kEps * kEps || nj < kEps * kEps) return 0.0;
  return std::clamp(dot / (std::sqrt(ni) * std::sqrt(nj)), -1.0, 1.0);
}

Eigen::MatrixXd similarity_graph(const Eigen::MatrixXd& X, const std::vector<DescriptorMask>& masks,
                                 int k_topk, int min_shared) {
  const auto m = X.rows();
  require_config(static_cast<Eigen::Index>(masks.size()) == m, "one mask per descriptor row is required");
  require_config(X.cols() == kDescriptorDim, "descriptor rows must have 24 columns");
  require_config(k_topk >= 1, "k_topk must be at least 1");

  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(m, m);
  std::vector<double> xi(kDescriptorDim), xj(kDescriptorDim);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      for (int d = 0; d < kDescriptorDim; ++d) {
        xi[d] = X(i, d);
        xj[d] = X(j, d);
      }
      const double c = masked_cosine(xi, xj, masks[i], masks[j], min_shared);
      dense(i, j) = dense(j, i) = std::max(0.0, c);
    }
  }

  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(m, m);
  std::vector<Eigen::Index> order;
  for (Eigen::Index i = 0; i < m; ++i) {
    order.clear();
    for (Eigen::Index j = 0; j < m; ++j) {
      if (j != i) order.push_back(j);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return dense(i, a) > dense(i, b); });
    const std::size_t keep = std::min<std::size_t>(order.size(), static_cast<std::size_t>(k_topk));
    for (std::size_t r = 0; r < keep; ++r) S(i, order[r]) = dense(i, order[r]);
  }
  const Eigen::MatrixXd St = S.transpose();
  S = S.cwiseMax(St);
  S.diagonal().setZero();
  return S;
}

AttributedEventGraph build_graph(const std::vector<EventRecord>& events, const GraphParams& params) {
  params.validate();
  AttributedEventGraph g;
  g.events = events;
  g.params = params;
  const auto m = static_cast<Eigen::Index>(events.size());
  g.X = Eigen::MatrixXd::Zero(m, kDescriptorDim);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& e = events[static_cast<std::size_t>(i)];
    for (int d = 0; d < kDescriptorDim; ++d) {
      require_invariant(!e.mask[d] || std::isfinite(e.x[d]), "non-finite descriptor value");
      g.X(i, d) = e.mask[d] ? e.x[d] : 0.0;
    }
  }
  g.A = temporal_adjacency(events, params.delta_t, params.delta_ovl);
  g.S = similarity_graph(g.X, g.masks(), params.k_topk, params.min_shared);
  g.check();
  return g;
}

// ---------------------------------------------------------------------------
// Matrix files

void save_dense(const Eigen::MatrixXd& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  std::string buf = "# rows=" + std::to_string(m.rows()) + " cols=" + std::to_string(m.cols()) + "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) buf += ',';
      text::append(buf, m(i, j));
    }
    buf += '\n';
  }
  out << buf;
}

namespace {

std::pair<Eigen::Index, Eigen::Index> read_shape(const std::string& header, std::size_t lineno) {
  Eigen::Index rows = -1, cols = -1;
  for (auto tok : text::split_view(std::string_view(header).substr(1), ' ')) {
    if (tok.rfind("rows=", 0) == 0) rows = text::parse_int(tok.substr(5));
    if (tok.rfind("cols=", 0) == 0) cols = text::parse_int(tok.substr(5));
  }
  if (rows < 0 || cols < 0) throw ParseError("matrix header lacks rows/cols", lineno);
  return {rows, cols};
}

}  // namespace

Eigen::MatrixXd load_dense(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || line.empty() || line[0] != '#') throw ParseError("missing matrix header", 1);
  const auto [rows, cols] = read_shape(line, 1);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    ++lineno;
    if (!std::getline(in, line)) throw ParseError("matrix has too few rows", lineno);
    const auto f = text::split_view(line, ',');
    if (static_cast<Eigen::Index>(f.size()) != cols) throw ParseError("matrix row has wrong width", lineno);
    for (Eigen::Index j = 0; j < cols; ++j) {
      double x = 0.0;
      if (!text::try_parse(f[static_cast<std::size_t>(j)], x)) throw ParseError("bad matrix value", lineno);
      m(i, j) = x;
    }
  }
  return m;
}

void save_coo(const Eigen::MatrixXd& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  std::string buf = "# rows=" + std::to_string(m.rows()) + " cols=" + std::to_string(m.cols()) + " i,j,value\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (m(i, j) == 0.0) continue;
      buf += std::to_string(i) + "," + std::to_string(j) + ",";
      text::append(buf, m(i, j));
      buf += '\n';
    }
  }
  out << buf;
}

Eigen::MatrixXd load_coo(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || line.empty() || line[0] != '#') throw ParseError("missing matrix header", 1);
  const auto [rows, cols] = read_shape(line, 1);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows, cols);
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = text::split_view(line, ',');
    if (f.size() != 3) throw ParseError("coordinate row needs i,j,value", lineno);
    long long i = 0, j = 0;
    double v = 0.0;
    if (!text::try_parse(f[0], i) || !text::try_parse(f[1], j) || !text::try_parse(f[2], v)) {
      throw ParseError("bad coordinate row", lineno);
    }
    if (i < 0 || j < 0 || i >= rows || j >= cols) throw ParseError("coordinate outside the matrix", lineno);
    m(i, j) = v;
  }
  return m;
}

void save_graph(const AttributedEventGraph& g, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_coo(g.A, dir / "A.coo");
  save_dense(g.X, dir / "X.csv");
  save_coo(g.S, dir / "S.coo");
  save_events(g.events, dir / "events.csv");
  nlohmann::json man;
  man["format_version"] = kFormatVersion;
  man["descriptor_dim"] = kDescriptorDim;
  man["events"] = g.events.size();
  man["params"] = {{"delta_t", g.params.delta_t},
                   {"delta_ovl", g.params.delta_ovl},
                   {"k_topk", g.params.k_topk},
                   {"min_shared", g.params.min_shared}};
  man["files"] = {"A.coo", "X.csv", "S.coo", "events.csv"};
  std::ofstream(dir / "manifest.json", std::ios::binary) << man.dump(2) << '\n';
}

AttributedEventGraph load_graph(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("graph manifest missing in " + dir.string());
  nlohmann::json man;
  try {
    man = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad graph manifest: ") + e.what());
  }
  if (man.value("format_version", "") != kFormatVersion) throw DataError("graph format version mismatch");
  AttributedEventGraph g;
  const auto& p = man.at("params");
  g.params.delta_t = p.at("delta_t").get<double>();
  g.params.delta_ovl = p.at("delta_ovl").get<double>();
  g.params.k_topk = p.at("k_topk").get<int>();
  g.params.min_shared = p.at("min_shared").get<int>();
  g.A = load_coo(dir / "A.coo");
  g.X = load_dense(dir / "X.csv");
  g.S = load_coo(dir / "S.coo");
  g.events = load_events(dir / "events.csv");
  try {
    g.check();
  } catch (const InvariantError& e) {
    throw IntegrityError(std::string("graph files inconsistent: ") + e.what());
  }
  return g;
}

}  // namespace lapcam
