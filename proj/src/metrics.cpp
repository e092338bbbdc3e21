#include "lapcam/metrics.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <tuple>

#include "lapcam/stats.hpp"

namespace lapcam {

LabeledInterval to_interval(const EventRecord& e) {
  LabeledInterval li{e.label, e.t_s, e.t_e, std::nullopt};
  if (e.mask[desc::kAction + 2]) li.dz = e.x[desc::kAction + 2];
  return li;
}

LabeledInterval to_interval(const TruthEvent& t) { return {t.label, t.t_s, t.t_e, t.dz}; }

double tiou(double a_s, double a_e, double b_s, double b_e) {
  const double inter = std::max(0.0, std::min(a_e, b_e) - std::max(a_s, b_s));
  const double uni = std::max(a_e, b_e) - std::min(a_s, b_s);
  return uni > 0.0 ? inter / uni : 0.0;
}

MatchReport match_events(const std::vector<LabeledInterval>& pred,
                         const std::vector<LabeledInterval>& truth, double tiou_min) {
  std::vector<std::tuple<double, std::size_t, std::size_t>> cand;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = 0; j < truth.size(); ++j) {
      if (pred[i].label != truth[j].label) continue;
      const double v = tiou(pred[i].t_s, pred[i].t_e, truth[j].t_s, truth[j].t_e);
      if (v >= tiou_min) cand.emplace_back(v, i, j);
    }
  }
  std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
    return std::get<2>(a) < std::get<2>(b);
  });

  MatchReport rep;
  std::vector<bool> used_p(pred.size(), false), used_t(truth.size(), false);
  double tiou_sum = 0.0;
  double dz_err = 0.0;
  int dz_n = 0;
  for (const auto& [v, i, j] : cand) {
    if (used_p[i] || used_t[j]) continue;
    used_p[i] = used_t[j] = true;
    rep.pairs.emplace_back(i, j);
    tiou_sum += v;
    const auto l = pred[i].label;
    if ((l == EventLabel::DepthAdvance || l == EventLabel::DepthRetreat) && pred[i].dz && truth[j].dz) {
      dz_err += std::abs(*pred[i].dz - *truth[j].dz);
      ++dz_n;
    }
  }
  std::sort(rep.pairs.begin(), rep.pairs.end());
  if (!rep.pairs.empty()) rep.mean_tiou = tiou_sum / static_cast<double>(rep.pairs.size());
  if (dz_n > 0) rep.depth_mae = dz_err / dz_n;

  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto& c = rep.per_class[static_cast<std::size_t>(pred[i].label)];
    rep.present[static_cast<std::size_t>(pred[i].label)] = true;
    used_p[i] ? ++c.tp : ++c.fp;
  }
  for (std::size_t j = 0; j < truth.size(); ++j) {
    rep.present[static_cast<std::size_t>(truth[j].label)] = true;
    if (!used_t[j]) ++rep.per_class[static_cast<std::size_t>(truth[j].label)].fn;
  }
  double f1_sum = 0.0;
  int classes = 0;
  for (std::size_t k = 0; k < rep.per_class.size(); ++k) {
    auto& c = rep.per_class[k];
    c.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / (c.tp + c.fp) : 0.0;
    c.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / (c.tp + c.fn) : 0.0;
    c.f1 = c.precision + c.recall > 0.0 ? 2.0 * c.precision * c.recall / (c.precision + c.recall) : 0.0;
    if (rep.present[k]) {
      f1_sum += c.f1;
      ++classes;
    }
  }
  rep.macro_f1 = classes > 0 ? f1_sum / classes : 0.0;
  return rep;
}

namespace {

std::map<std::pair<int, int>, int> contingency(const std::vector<int>& a, const std::vector<int>& b) {
  require_config(a.size() == b.size(), "label vectors differ in length");
  std::map<std::pair<int, int>, int> table;
  for (std::size_t i = 0; i < a.size(); ++i) ++table[{a[i], b[i]}];
  return table;
}

double entropy(const std::map<int, int>& counts, double n) {
  double h = 0.0;
  for (const auto& [k, c] : counts) {
    const double p = c / n;
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

}  // namespace

double purity(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.empty()) return 0.0;
  const auto table = contingency(pred, truth);
  std::map<int, int> best;
  for (const auto& [key, c] : table) best[key.first] = std::max(best[key.first], c);
  int sum = 0;
  for (const auto& [k, c] : best) sum += c;
  return static_cast<double>(sum) / static_cast<double>(pred.size());
}

double nmi(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.empty()) return 0.0;
  const auto table = contingency(pred, truth);
  const double n = static_cast<double>(pred.size());
  std::map<int, int> ca, cb;
  for (const auto& [key, c] : table) {
    ca[key.first] += c;
    cb[key.second] += c;
  }
  double mi = 0.0;
  for (const auto& [key, c] : table) {
    const double pxy = c / n;
    mi += pxy * std::log(pxy / ((ca[key.first] / n) * (cb[key.second] / n)));
  }
  const double ha = entropy(ca, n);
  const double hb = entropy(cb, n);
  if (ha <= 0.0 || hb <= 0.0) return 0.0;
  return std::clamp(mi / std::sqrt(ha * hb), 0.0, 1.0);
}

VarIntra var_intra(const std::vector<std::vector<double>>& attributes, const std::vector<int>& labels) {
  require_config(attributes.size() == labels.size(), "attributes and labels differ in length");
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
  VarIntra out;
  for (const auto& [k, idx] : members) {
    const std::size_t dim = attributes[idx.front()].size();
    std::vector<double> centre(dim, 0.0);
    for (auto i : idx) {
      for (std::size_t d = 0; d < dim; ++d) centre[d] += attributes[i][d];
    }
    for (auto& c : centre) c /= static_cast<double>(idx.size());
    double acc = 0.0;
    for (auto i : idx) {
      for (std::size_t d = 0; d < dim; ++d) acc += (attributes[i][d] - centre[d]) * (attributes[i][d] - centre[d]);
    }
    out.per_cluster[k] = acc / static_cast<double>(idx.size());
  }
  if (!out.per_cluster.empty()) {
    double s = 0.0;
    for (const auto& [k, v] : out.per_cluster) s += v;
    out.mean = s / static_cast<double>(out.per_cluster.size());
  }
  return out;
}

double centering_error(const std::vector<PixelPoint>& f, const std::vector<PixelPoint>& f_d) {
  require_config(f.size() == f_d.size(), "feature series differ in length");
  if (f.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += std::hypot(f[i].u - f_d[i].u, f[i].v - f_d[i].v);
  return s / static_cast<double>(f.size());
}

double shaking_index(const std::vector<std::vector<PixelPoint>>& tracks) {
  if (tracks.empty()) return 0.0;
  const std::size_t n = tracks.front().size();
  for (const auto& tr : tracks) require_config(tr.size() == n, "feature tracks differ in length");
  if (n < 2) return 0.0;
  double sum = 0.0;
  std::vector<double> disp(tracks.size());
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t k = 0; k < tracks.size(); ++k) {
      disp[k] = std::hypot(tracks[k][t].u - tracks[k][t - 1].u, tracks[k][t].v - tracks[k][t - 1].v);
    }
    sum += stats::median(disp);
  }
  return sum / static_cast<double>(n - 1);
}

double hf_ratio_axis(const std::vector<double>& x, double fps, double cutoff_hz) {
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  const double mu = stats::mean(x);
  std::vector<double> centred(n);
  for (std::size_t i = 0; i < n; ++i) centred[i] = x[i] - mu;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, centred);
  double total = 0.0, high = 0.0;
  for (std::size_t k = 1; k < n; ++k) {
    const double e = std::norm(spec[k]);
    const double fk = static_cast<double>(std::min(k, n - k)) * fps / static_cast<double>(n);
    total += e;
    if (fk >= cutoff_hz) high += e;
  }
  // Energy below rounding level counts as a constant signal.
  if (total <= 1e-20 * static_cast<double>(n)) return 0.0;
  return high / total;
}

std::array<double, 3> hf_ratio(const std::vector<std::array<double, 3>>& traj, double fps, double cutoff_hz) {
  std::array<double, 3> r{};
  for (int a = 0; a < 3; ++a) {
    std::vector<double> x;
    x.reserve(traj.size());
    for (const auto& p : traj) x.push_back(p[a]);
    r[a] = hf_ratio_axis(x, fps, cutoff_hz);
  }
  return r;
}

std::pair<double, double> depth_errors(const std::vector<double>& lambda, const std::vector<double>& lambda_d,
                                       double eps) {
  require_config(lambda.size() == lambda_d.size(), "penetration series differ in length");
  if (lambda.empty()) return {0.0, 0.0};
  double a = 0.0, r = 0.0;
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    const double e = std::abs(lambda[i] - lambda_d[i]);
    a += e;
    r += e / (std::abs(lambda_d[i]) + eps);
  }
  const double n = static_cast<double>(lambda.size());
  return {a / n, r / n};
}

double pose_jitter(const std::vector<std::array<double, 3>>& v, double fps, double cutoff_hz, bool rms) {
  if (v.empty()) return 0.0;
  std::vector<double> t(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<double>(i) / fps;
  std::array<ScalarSeries, 3> low;
  for (int a = 0; a < 3; ++a) {
    ScalarSeries s(t);
    for (std::size_t i = 0; i < v.size(); ++i) s.set(i, v[i][a]);
    low[a] = lowpass_zero_phase(s, cutoff_hz, fps);
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    double sq = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double j = v[i][a] - low[a].v[i];
      sq += j * j;
    }
    acc += rms ? sq : std::sqrt(sq);
  }
  return std::sqrt(acc / static_cast<double>(v.size()));
}

std::optional<double> time_to_target(const std::vector<double>& t, const std::vector<PixelPoint>& f,
                                     PixelPoint target, double tol, double t_start) {
  require_config(t.size() == f.size(), "time and feature series differ in length");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < t_start - 1e-12) continue;
    if (std::hypot(f[i].u - target.u, f[i].v - target.v) <= tol) return t[i] - t_start;
  }
  return std::nullopt;
}

std::optional<double> recovery_time(const std::vector<double>& t, const std::vector<bool>& withdrawing) {
  require_config(t.size() == withdrawing.size(), "time and state series differ in length");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!withdrawing[i]) continue;
    for (std::size_t j = i + 1; j < t.size(); ++j) {
      if (!withdrawing[j]) return t[j] - t[i];
    }
    return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace lapcam
