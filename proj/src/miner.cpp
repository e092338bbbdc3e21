#include "lapcam/miner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include "lapcam/stats.hpp"

namespace lapcam {

void MinerConfig::validate() const {
  require_config(k >= 2, "K must be at least 2");
  require_config(mu >= 0.0 && mu <= 1.0, "mu must lie in [0,1]");
  require_config(lambda >= 0.0 && lambda <= 1.0, "lambda must lie in [0,1]");
  require_config(alpha > 0.0, "alpha must be positive");
  require_config(self_express.max_iter > 0 && self_express.tol >= 0.0, "bad self-expression settings");
  require_config(wsnmf.inits > 0 && wsnmf.iters > 0 && wsnmf.tol >= 0.0, "bad factorization settings");
  require_config(gaae.dim > 0 && gaae.epochs >= 0 && gaae.lr > 0.0, "bad autoencoder settings");
  require_config(deadband_uv >= 0.0 && deadband_z_coeff >= 0.0, "deadbands must be non-negative");
}

Eigen::MatrixXd boost_graph(const Eigen::MatrixXd& A, const Eigen::MatrixXd& S, double mu) {
  require_config(mu >= 0.0 && mu <= 1.0, "mu must lie in [0,1]");
  require_config(A.rows() == S.rows() && A.cols() == S.cols(), "A and S differ in shape");
  return mu * S + (1.0 - mu) * A;
}

// ---------------------------------------------------------------------------
// Self-expression

double self_express_objective(const Eigen::MatrixXd& X, const Eigen::MatrixXd& C, double alpha) {
  return (X - C * X).squaredNorm() + alpha * C.cwiseAbs().sum();
}

SelfExpressResult self_express(const Eigen::MatrixXd& X, double alpha, const SelfExpressConfig& cfg) {
  require_config(alpha > 0.0, "alpha must be positive");
  if (!X.allFinite()) throw DataError("descriptor matrix contains non-finite values");
  const auto m = X.rows();
  const Eigen::MatrixXd G = X * X.transpose();
  SelfExpressResult res;
  res.C = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd GC = Eigen::MatrixXd::Zero(m, m);  // row i holds G c_i

  const auto objective = [&] {
    double f = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto c = res.C.row(i);
      f += G(i, i) - 2.0 * c.dot(G.row(i)) + c.dot(GC.row(i)) + alpha * c.sum();
    }
    return f;
  };

  res.objective.push_back(objective());
  for (int sweep = 0; sweep < cfg.max_iter; ++sweep) {
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        if (j == i || G(j, j) <= 0.0) continue;
        const double cj = res.C(i, j);
        const double numer = G(i, j) - (GC(i, j) - cj * G(j, j)) - 0.5 * alpha;
        const double next = std::max(0.0, numer / G(j, j));
        const double delta = next - cj;
        if (delta == 0.0) continue;
        res.C(i, j) = next;
        GC.row(i) += delta * G.row(j);
      }
    }
    ++res.sweeps;
    const double prev = res.objective.back();
    const double f = objective();
    res.objective.push_back(f);
    if (std::abs(prev - f) <= cfg.tol * std::max(1.0, std::abs(prev))) break;
  }
  return res;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> refine_graph(const Eigen::MatrixXd& C, const Eigen::MatrixXd& S,
                                                          double lambda) {
  require_config(lambda >= 0.0 && lambda <= 1.0, "lambda must lie in [0,1]");
  require_config(C.rows() == S.rows() && C.cols() == S.cols(), "C and S differ in shape");
  Eigen::MatrixXd Sc = 0.5 * (C + C.transpose());
  Eigen::MatrixXd GR = lambda * Sc + (1.0 - lambda) * S;
  return {std::move(Sc), std::move(GR)};
}

Eigen::MatrixXd confidence_weights(const Eigen::MatrixXd& G_A) {
  const double mx = G_A.size() ? G_A.maxCoeff() : 0.0;
  Eigen::MatrixXd W = mx > 0.0 ? Eigen::MatrixXd((0.5 + 0.5 * (G_A.array() / mx)).matrix())
                               : Eigen::MatrixXd::Constant(G_A.rows(), G_A.cols(), 0.5);
  W.diagonal().setZero();
  return W;
}

// ---------------------------------------------------------------------------
// Weighted symmetric NMF

double wsnmf_objective(const Eigen::MatrixXd& G, const Eigen::MatrixXd& W, const Eigen::MatrixXd& U) {
  return 0.5 * (W.cwiseProduct(G - U * U.transpose())).squaredNorm();
}

namespace {

struct NmfRun {
  Eigen::MatrixXd U;
  std::vector<double> history;
};

NmfRun wsnmf_once(const Eigen::MatrixXd& G, const Eigen::MatrixXd& V, const Eigen::MatrixXd& VG,
                  const Eigen::MatrixXd& W, int k, const WsnmfConfig& cfg, int restart) {
  const auto m = G.rows();
  std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(restart) + 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double mean_g = std::max(G.mean(), 1e-12);
  const double scale = 2.0 * std::sqrt(mean_g / k);
  NmfRun run;
  run.U.resize(m, k);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (int c = 0; c < k; ++c) run.U(i, c) = scale * unif(rng);
  }
  double f = wsnmf_objective(G, W, run.U);
  run.history.push_back(f);
  Eigen::MatrixXd cand(m, k);
  for (int it = 0; it < cfg.iters; ++it) {
    const Eigen::MatrixXd num = VG * run.U;
    const Eigen::MatrixXd den = V.cwiseProduct(run.U * run.U.transpose()) * run.U;
    const Eigen::ArrayXXd ratio = num.array() / (den.array() + 1e-300);
    bool accepted = false;
    double next = f;
    for (double eta = 0.25; eta >= 0.25 / 64.0; eta *= 0.5) {
      cand = (run.U.array() * ratio.pow(eta)).matrix();
      next = wsnmf_objective(G, W, cand);
      if (std::isfinite(next) && next <= f) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    run.U.swap(cand);
    const double prev = f;
    f = next;
    run.history.push_back(f);
    if (prev - f <= cfg.tol * std::max(1.0, prev)) break;
  }
  return run;
}

}  // namespace

WsnmfResult wsnmf(const Eigen::MatrixXd& G, const Eigen::MatrixXd& W, int k, const WsnmfConfig& cfg) {
  const auto m = G.rows();
  require_config(G.cols() == m && W.rows() == m && W.cols() == m, "G and W must be square and equal in shape");
  require_config(k >= 2, "K must be at least 2");
  require_config(k < m, "K must be smaller than the number of events");
  require_config(cfg.inits > 0 && cfg.iters > 0, "bad factorization settings");
  const Eigen::MatrixXd V = W.cwiseProduct(W);
  const Eigen::MatrixXd VG = V.cwiseProduct(G);
  WsnmfResult best;
  for (int r = 0; r < cfg.inits; ++r) {
    auto run = wsnmf_once(G, V, VG, W, k, cfg, r);
    const double f = run.history.back();
    best.restart_final.push_back(f);
    if (r == 0 || f < best.objective) {
      best.objective = f;
      best.U = std::move(run.U);
      best.history = std::move(run.history);
      best.best_restart = r;
    }
  }
  return best;
}

std::vector<int> assign_labels(const Eigen::MatrixXd& U) {
  std::vector<int> labels(static_cast<std::size_t>(U.rows()), 0);
  for (Eigen::Index i = 0; i < U.rows(); ++i) {
    int best = 0;
    for (Eigen::Index c = 1; c < U.cols(); ++c) {
      if (U(i, c) > U(i, best)) best = static_cast<int>(c);
    }
    labels[static_cast<std::size_t>(i)] = best;
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Graph attention autoencoder

GaaeParams gaae_init(int in_dim, const GaaeConfig& cfg) {
  std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 0x51ED);
  std::normal_distribution<double> n(0.0, 1.0);
  GaaeParams p;
  p.P.resize(in_dim, cfg.dim);
  const double s = 1.0 / std::sqrt(static_cast<double>(in_dim));
  for (Eigen::Index i = 0; i < p.P.size(); ++i) p.P.data()[i] = s * n(rng);
  p.a_src.resize(cfg.dim);
  p.a_dst.resize(cfg.dim);
  for (int i = 0; i < cfg.dim; ++i) p.a_src(i) = 0.1 * n(rng);
  for (int i = 0; i < cfg.dim; ++i) p.a_dst(i) = 0.1 * n(rng);
  return p;
}

namespace {

constexpr double kLeak = 0.2;

struct GaaeCache {
  Eigen::MatrixXd H, Mm, Z, G_hat, alpha, u;
  double loss = 0.0;
};

GaaeCache gaae_run(const GaaeParams& p, const Eigen::MatrixXd& G, const Eigen::MatrixXd& X,
                   const Eigen::MatrixXd& W) {
  const auto m = X.rows();
  GaaeCache c;
  c.H = X * p.P;
  const Eigen::VectorXd s = c.H * p.a_src;
  const Eigen::VectorXd t = c.H * p.a_dst;
  c.alpha = Eigen::MatrixXd::Zero(m, m);
  c.u = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < m; ++j) {
      if (j == i || G(i, j) <= 0.0) continue;
      const double u = s(i) + t(j);
      c.u(i, j) = u;
      mx = std::max(mx, u > 0.0 ? u : kLeak * u);
    }
    double z = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (j == i || G(i, j) <= 0.0) continue;
      const double e = c.u(i, j) > 0.0 ? c.u(i, j) : kLeak * c.u(i, j);
      c.alpha(i, j) = G(i, j) * std::exp(e - mx);
      z += c.alpha(i, j);
    }
    if (z > 0.0) c.alpha.row(i) /= z;
  }
  c.Mm = c.alpha * c.H;
  c.Z = c.Mm.array().tanh().matrix();
  const Eigen::MatrixXd Q = c.Z * c.Z.transpose();
  c.G_hat = (1.0 / (1.0 + (-Q.array()).exp())).matrix();
  c.loss = (W.cwiseProduct(G - c.G_hat)).squaredNorm();
  return c;
}

}  // namespace

GaaeForward gaae_forward(const GaaeParams& p, const Eigen::MatrixXd& G, const Eigen::MatrixXd& X,
                         const Eigen::MatrixXd& W) {
  auto c = gaae_run(p, G, X, W);
  return {std::move(c.Z), std::move(c.G_hat), c.loss};
}

double gaae_gradient(const GaaeParams& p, const Eigen::MatrixXd& G, const Eigen::MatrixXd& X,
                     const Eigen::MatrixXd& W, GaaeParams& grad) {
  const auto m = X.rows();
  const auto c = gaae_run(p, G, X, W);
  const Eigen::MatrixXd V = W.cwiseProduct(W);
  // dL/dQ with Q = Z Z^T
  const Eigen::MatrixXd R =
      (-2.0 * V.cwiseProduct(G - c.G_hat)).cwiseProduct(c.G_hat.cwiseProduct((1.0 - c.G_hat.array()).matrix()));
  const Eigen::MatrixXd dZ = (R + R.transpose()) * c.Z;
  const Eigen::MatrixXd dM = dZ.cwiseProduct((1.0 - c.Z.array().square()).matrix());

  Eigen::MatrixXd dH = c.alpha.transpose() * dM;
  const Eigen::MatrixXd dAlpha = dM * c.H.transpose();
  Eigen::VectorXd ds = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd dt = Eigen::VectorXd::Zero(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    double avg = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) avg += c.alpha(i, j) * dAlpha(i, j);
    for (Eigen::Index j = 0; j < m; ++j) {
      if (c.alpha(i, j) == 0.0) continue;
      const double de = c.alpha(i, j) * (dAlpha(i, j) - avg);
      const double du = de * (c.u(i, j) > 0.0 ? 1.0 : kLeak);
      ds(i) += du;
      dt(j) += du;
    }
  }
  grad.a_src = c.H.transpose() * ds;
  grad.a_dst = c.H.transpose() * dt;
  dH += ds * p.a_src.transpose() + dt * p.a_dst.transpose();
  grad.P = X.transpose() * dH;
  return c.loss;
}

GaaeResult gaae_fit(const Eigen::MatrixXd& G, const Eigen::MatrixXd& X, const Eigen::MatrixXd& W,
                    const GaaeConfig& cfg) {
  require_config(G.rows() == X.rows() && G.cols() == G.rows(), "graph and features differ in size");
  require_config(cfg.dim > 0 && cfg.lr > 0.0, "bad autoencoder settings");
  GaaeResult res;
  res.params = gaae_init(static_cast<int>(X.cols()), cfg);
  GaaeParams grad;
  double loss = gaae_gradient(res.params, G, X, W, grad);
  if (!std::isfinite(loss)) throw InvariantError("autoencoder loss is not finite at initialisation");
  res.loss.push_back(loss);
  double lr = cfg.lr;
  bool reduced = false;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    bool accepted = false;
    for (int attempt = 0; attempt < 30; ++attempt) {
      GaaeParams cand;
      cand.P = res.params.P - lr * grad.P;
      cand.a_src = res.params.a_src - lr * grad.a_src;
      cand.a_dst = res.params.a_dst - lr * grad.a_dst;
      const double next = gaae_run(cand, G, X, W).loss;
      if (!std::isfinite(next)) {
        if (reduced) {
          throw InvariantError("autoencoder diverged: loss " + std::to_string(next) + " at epoch " +
                               std::to_string(epoch) + ", lr " + std::to_string(lr));
        }
        reduced = true;
        lr *= 0.5;
        continue;
      }
      if (next <= loss) {
        res.params = std::move(cand);
        loss = gaae_gradient(res.params, G, X, W, grad);
        lr *= 1.2;
        accepted = true;
        break;
      }
      lr *= 0.5;
    }
    res.loss.push_back(loss);
    if (!accepted) break;
  }
  res.Z = gaae_run(res.params, G, X, W).Z;
  return res;
}

// ---------------------------------------------------------------------------
// Prototypes and naming

Direction discretize_direction(double du, double dv, double dz, double db_u, double db_v, double db_z) {
  const auto q = [](double x, double db) { return x > db ? 1 : (x < -db ? -1 : 0); };
  return {q(du, db_u), q(dv, db_v), q(dz, db_z)};
}

const std::vector<std::string>& strategy_taxonomy() {
  static const std::vector<std::string> names = {
      "Stable hold with neutral directions",
      "Depth-dominant controlled approach",
      "Depth-dominant controlled withdrawal",
      "Horizontal-dominant motion tracking",
      "Vertical-dominant motion tracking",
      "Small translation for tool re-centering",
      "Local workspace shift with small composite motion",
      "Global workspace transition with larger motion",
      "Roll-based view leveling",
      "Yaw/pitch-based view reframing",
      "Contamination-triggered withdrawal",
      "Visibility-driven mild retreat and reframing",
  };
  return names;
}

std::string name_cluster(const ClusterSummary& c, const Deadbands& db, double low_inlier_ratio) {
  const auto& n = strategy_taxonomy();
  if (c.vacant) return "vacant";
  if (c.dominant == EventLabel::LensContamination) return n[10];
  if (c.dominant == EventLabel::VisibilityDegradation) return n[11];
  const bool clean = c.inlier_ratio >= low_inlier_ratio;
  if (c.direction == Direction{0, 0, 0}) return clean ? n[0] : n[8];

  const double ru = std::abs(c.action[0]) / std::max(db.u, 1e-12);
  const double rv = std::abs(c.action[1]) / std::max(db.v, 1e-12);
  const double rz = std::abs(c.action[2]) / std::max(db.z, 1e-12);
  if (c.direction[2] != 0 && rz >= std::max(ru, rv)) return c.action[2] < 0.0 ? n[1] : n[2];
  if (!clean) return n[9];
  const double hi = std::max(ru, rv), lo = std::min(ru, rv);
  if (hi >= 2.0 * lo) {
    if (hi < 2.0) return n[5];
    return ru >= rv ? n[3] : n[4];
  }
  return hi > 4.0 ? n[7] : n[6];
}

Deadbands deadbands_for(const std::vector<EventRecord>& raw, const MinerConfig& cfg) {
  std::vector<double> scale, wd;
  for (const auto& e : raw) {
    if (e.provenance.contains("pixel_scale")) scale.push_back(e.provenance["pixel_scale"].get<double>());
    if (e.provenance.contains("working_distance")) wd.push_back(e.provenance["working_distance"].get<double>());
  }
  Deadbands db;
  const double s = scale.empty() ? 1.0 : stats::median(scale);
  db.u = db.v = cfg.deadband_uv * s;
  db.z = cfg.deadband_z_coeff * (wd.empty() ? 100.0 : stats::median(wd));
  return db;
}

std::vector<ClusterSummary> extract_prototypes(const std::vector<EventRecord>& normalized,
                                               const std::vector<EventRecord>& raw,
                                               const std::vector<int>& labels, int k,
                                               const Deadbands& db, double low_inlier_ratio) {
  require_config(normalized.size() == labels.size() && raw.size() == labels.size(),
                 "events and labels differ in length");
  std::vector<ClusterSummary> out(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    auto& cs = out[static_cast<std::size_t>(c)];
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) idx.push_back(i);
    }
    cs.members = static_cast<int>(idx.size());
    if (idx.empty()) {
      cs.name = name_cluster(cs, db, low_inlier_ratio);
      continue;
    }
    cs.vacant = false;
    std::array<int, kNumEventLabels> votes{};
    for (auto i : idx) ++votes[static_cast<std::size_t>(normalized[i].label)];
    const auto top = std::max_element(votes.begin(), votes.end());
    cs.dominant = static_cast<EventLabel>(top - votes.begin());
    cs.dominant_share = static_cast<double>(*top) / static_cast<double>(idx.size());

    std::vector<double> vals;
    for (int d = 0; d < kDescriptorDim; ++d) {
      vals.clear();
      for (auto i : idx) {
        if (normalized[i].mask[d]) vals.push_back(normalized[i].x[d]);
      }
      if (vals.empty() || 2 * vals.size() < idx.size()) continue;
      cs.prototype[d] = stats::median(vals);
      cs.mask[d] = 1;
    }
    for (int a = 0; a < 3; ++a) {
      vals.clear();
      for (auto i : idx) {
        if (raw[i].mask[desc::kAction + a]) vals.push_back(raw[i].x[desc::kAction + a]);
      }
      if (vals.empty()) continue;
      cs.action[a] = stats::median(vals);
      cs.action_known[a] = true;
    }
    vals.clear();
    for (auto i : idx) {
      if (raw[i].provenance.contains("inlier_ratio")) vals.push_back(raw[i].provenance["inlier_ratio"].get<double>());
    }
    cs.inlier_ratio = vals.empty() ? 1.0 : stats::mean(vals);
    cs.direction = discretize_direction(cs.action[0], cs.action[1], cs.action[2], db.u, db.v, db.z);
    cs.name = name_cluster(cs, db, low_inlier_ratio);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Full mining

RefinedGraphs build_refined_graphs(const AttributedEventGraph& g, const MinerConfig& cfg) {
  cfg.validate();
  RefinedGraphs rg;
  rg.G_A = boost_graph(g.A, g.S, cfg.mu);
  rg.C = self_express(g.X, cfg.alpha, cfg.self_express).C;
  std::tie(rg.S_c, rg.G_R) = refine_graph(rg.C, g.S, cfg.lambda);
  if (cfg.unit_weights) {
    rg.W = Eigen::MatrixXd::Ones(g.A.rows(), g.A.cols());
    rg.W.diagonal().setZero();
  } else {
    rg.W = confidence_weights(rg.G_A);
  }
  return rg;
}

StrategyModel mine_with_graphs(const AttributedEventGraph& g, const RefinedGraphs& rg,
                               const std::vector<EventRecord>& raw, const MinerConfig& cfg, bool embed) {
  cfg.validate();
  require_config(raw.size() == g.events.size(), "raw events do not match the graph registry");
  StrategyModel m;
  m.k = cfg.k;
  m.config = cfg;
  WsnmfConfig wc = cfg.wsnmf;
  wc.seed = cfg.seed;
  const auto fit = wsnmf(rg.G_R, rg.W, cfg.k, wc);
  m.U = fit.U;
  m.objective = fit.objective;
  m.labels = assign_labels(m.U);
  m.deadbands = deadbands_for(raw, cfg);
  m.clusters = extract_prototypes(g.events, raw, m.labels, cfg.k, m.deadbands, cfg.low_inlier_ratio);
  for (const auto& e : raw) {
    const auto a = [&](int k) { return e.mask[desc::kAction + k] ? e.x[desc::kAction + k] : 0.0; };
    m.event_directions.push_back(discretize_direction(a(0), a(1), a(2), m.deadbands.u, m.deadbands.v, m.deadbands.z));
  }
  if (embed) {
    GaaeConfig gc = cfg.gaae;
    gc.seed = cfg.seed;
    auto emb = gaae_fit(rg.G_R, g.X, rg.W, gc);
    m.embeddings = emb.Z;
    m.gaae_loss = emb.loss.back();
  }
  return m;
}

StrategyModel mine_strategies(const AttributedEventGraph& g, const std::vector<EventRecord>& raw,
                              const MinerConfig& cfg) {
  return mine_with_graphs(g, build_refined_graphs(g, cfg), raw, cfg, true);
}

// ---------------------------------------------------------------------------
// Model files

namespace {

nlohmann::json config_json(const MinerConfig& c) {
  return {{"k", c.k},
          {"mu", c.mu},
          {"lambda", c.lambda},
          {"alpha", c.alpha},
          {"seed", c.seed},
          {"unit_weights", c.unit_weights},
          {"self_express", {{"max_iter", c.self_express.max_iter}, {"tol", c.self_express.tol}}},
          {"wsnmf", {{"inits", c.wsnmf.inits}, {"iters", c.wsnmf.iters}, {"tol", c.wsnmf.tol}}},
          {"gaae", {{"dim", c.gaae.dim}, {"epochs", c.gaae.epochs}, {"lr", c.gaae.lr}}},
          {"deadband_uv", c.deadband_uv},
          {"deadband_z_coeff", c.deadband_z_coeff},
          {"low_inlier_ratio", c.low_inlier_ratio}};
}

MinerConfig config_from(const nlohmann::json& j) {
  MinerConfig c;
  c.k = j.at("k").get<int>();
  c.mu = j.at("mu").get<double>();
  c.lambda = j.at("lambda").get<double>();
  c.alpha = j.at("alpha").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.unit_weights = j.at("unit_weights").get<bool>();
  c.self_express.max_iter = j.at("self_express").at("max_iter").get<int>();
  c.self_express.tol = j.at("self_express").at("tol").get<double>();
  c.wsnmf.inits = j.at("wsnmf").at("inits").get<int>();
  c.wsnmf.iters = j.at("wsnmf").at("iters").get<int>();
  c.wsnmf.tol = j.at("wsnmf").at("tol").get<double>();
  c.gaae.dim = j.at("gaae").at("dim").get<int>();
  c.gaae.epochs = j.at("gaae").at("epochs").get<int>();
  c.gaae.lr = j.at("gaae").at("lr").get<double>();
  c.deadband_uv = j.at("deadband_uv").get<double>();
  c.deadband_z_coeff = j.at("deadband_z_coeff").get<double>();
  c.low_inlier_ratio = j.at("low_inlier_ratio").get<double>();
  return c;
}

}  // namespace

void save_model(const StrategyModel& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_dense(m.U, dir / "U.csv");
  Eigen::MatrixXd proto(m.k, 2 * kDescriptorDim);
  for (int c = 0; c < m.k; ++c) {
    for (int d = 0; d < kDescriptorDim; ++d) {
      proto(c, d) = m.clusters[static_cast<std::size_t>(c)].prototype[d];
      proto(c, kDescriptorDim + d) = m.clusters[static_cast<std::size_t>(c)].mask[d];
    }
  }
  save_dense(proto, dir / "prototypes.csv");
  save_dense(m.embeddings, dir / "embeddings.csv");

  nlohmann::json man;
  man["format_version"] = kFormatVersion;
  man["k"] = m.k;
  man["config"] = config_json(m.config);
  man["objective"] = m.objective;
  man["gaae_loss"] = m.gaae_loss;
  man["deadbands"] = {m.deadbands.u, m.deadbands.v, m.deadbands.z};
  man["labels"] = m.labels;
  man["event_directions"] = m.event_directions;
  auto& cl = man["clusters"] = nlohmann::json::array();
  for (const auto& c : m.clusters) {
    cl.push_back({{"name", c.name},
                  {"vacant", c.vacant},
                  {"members", c.members},
                  {"dominant", std::string(label_name(c.dominant))},
                  {"dominant_share", c.dominant_share},
                  {"action", c.action},
                  {"action_known", c.action_known},
                  {"inlier_ratio", c.inlier_ratio},
                  {"direction", c.direction}});
  }
  man["files"] = {"U.csv", "prototypes.csv", "embeddings.csv"};
  std::ofstream(dir / "manifest.json", std::ios::binary) << man.dump(2) << '\n';
}

StrategyModel load_model(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("model manifest missing in " + dir.string());
  StrategyModel m;
  try {
    const auto man = nlohmann::json::parse(in);
    if (man.value("format_version", "") != kFormatVersion) throw DataError("model format version mismatch");
    m.k = man.at("k").get<int>();
    m.config = config_from(man.at("config"));
    m.objective = man.at("objective").get<double>();
    m.gaae_loss = man.at("gaae_loss").get<double>();
    const auto db = man.at("deadbands").get<std::array<double, 3>>();
    m.deadbands = {db[0], db[1], db[2]};
    m.labels = man.at("labels").get<std::vector<int>>();
    m.event_directions = man.at("event_directions").get<std::vector<Direction>>();
    for (const auto& c : man.at("clusters")) {
      ClusterSummary cs;
      cs.name = c.at("name").get<std::string>();
      cs.vacant = c.at("vacant").get<bool>();
      cs.members = c.at("members").get<int>();
      cs.dominant = parse_label(c.at("dominant").get<std::string>());
      cs.dominant_share = c.at("dominant_share").get<double>();
      cs.action = c.at("action").get<std::array<double, 3>>();
      cs.action_known = c.at("action_known").get<std::array<bool, 3>>();
      cs.inlier_ratio = c.at("inlier_ratio").get<double>();
      cs.direction = c.at("direction").get<Direction>();
      m.clusters.push_back(std::move(cs));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad model manifest: ") + e.what());
  }
  if (static_cast<int>(m.clusters.size()) != m.k) throw IntegrityError("model cluster count mismatch");
  m.U = load_dense(dir / "U.csv");
  const auto proto = load_dense(dir / "prototypes.csv");
  if (proto.rows() != m.k || proto.cols() != 2 * kDescriptorDim) throw IntegrityError("prototype table has wrong shape");
  for (int c = 0; c < m.k; ++c) {
    for (int d = 0; d < kDescriptorDim; ++d) {
      m.clusters[static_cast<std::size_t>(c)].prototype[d] = proto(c, d);
      m.clusters[static_cast<std::size_t>(c)].mask[d] = static_cast<std::uint8_t>(proto(c, kDescriptorDim + d) != 0.0);
    }
  }
  m.embeddings = load_dense(dir / "embeddings.csv");
  if (m.U.cols() != m.k || static_cast<std::size_t>(m.U.rows()) != m.labels.size()) {
    throw IntegrityError("membership matrix does not match the labels");
  }
  return m;
}

}  // namespace lapcam
