#include "lapcam/supervision.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <map>
#include <set>

#include "lapcam/text_io.hpp"

namespace lapcam {

std::vector<SupervisedSample> propagate_labels(const std::vector<EventRecord>& events,
                                               const std::vector<int>& labels,
                                               const std::vector<Direction>& directions,
                                               const Eigen::MatrixXd& U, double rate_hz) {
  require_config(rate_hz > 0.0, "sampling rate must be positive");
  require_config(labels.size() == events.size() && directions.size() == events.size(),
                 "labels and directions must align with events");
  require_config(U.rows() == 0 || static_cast<std::size_t>(U.rows()) == events.size(),
                 "membership matrix must align with events");
  const auto strength = [&](std::size_t i) { return U.rows() ? U.row(static_cast<Eigen::Index>(i)).maxCoeff() : 0.0; };

  // (video, grid index) -> owning event
  std::map<std::pair<std::string, long long>, std::size_t> owner;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    const auto n0 = static_cast<long long>(std::ceil(e.t_s * rate_hz - 1e-9));
    for (long long n = n0; static_cast<double>(n) < e.t_e * rate_hz - 1e-9; ++n) {
      const auto key = std::make_pair(e.video_id, n);
      const auto it = owner.find(key);
      if (it == owner.end()) {
        owner.emplace(key, i);
      } else if (strength(i) > strength(it->second)) {
        it->second = i;
      }
    }
  }
  std::vector<SupervisedSample> out;
  out.reserve(owner.size());
  for (const auto& [key, i] : owner) {
    SupervisedSample s;
    s.video_id = key.first;
    s.t = static_cast<double>(key.second) / rate_hz;
    s.s_star = labels[i];
    s.d_star = directions[i];
    s.event_idx = static_cast<int>(i);
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

bool canonical_less(const SupervisedSample& a, const SupervisedSample& b) {
  return std::tie(a.video_id, a.t, a.event_idx) < std::tie(b.video_id, b.t, b.event_idx);
}

}  // namespace

BalanceResult balance(const std::vector<SupervisedSample>& samples, std::uint64_t seed) {
  std::vector<SupervisedSample> sorted = samples;
  std::stable_sort(sorted.begin(), sorted.end(), canonical_less);
  std::vector<SupervisedSample> nonzero, zero;
  for (auto& s : sorted) (s.d_star == Direction{0, 0, 0} ? zero : nonzero).push_back(std::move(s));
  BalanceResult r;
  if (nonzero.empty()) {
    r.warning = "no nonzero-direction samples; balanced set is empty";
    return r;
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(zero.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const std::size_t keep = std::min(zero.size(), nonzero.size());
  for (std::size_t i = 0; i < keep; ++i) {
    const std::size_t span = idx.size() - i;
    const std::size_t j = i + static_cast<std::size_t>(rng() % span);
    std::swap(idx[i], idx[j]);
  }
  r.samples = std::move(nonzero);
  for (std::size_t i = 0; i < keep; ++i) r.samples.push_back(zero[idx[i]]);
  std::stable_sort(r.samples.begin(), r.samples.end(), canonical_less);
  return r;
}

Prediction prototype_predict(const Descriptor& x, const DescriptorMask& mask, const StrategyModel& model,
                             int min_shared) {
  Prediction p;
  int best_shared = -1;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < model.clusters.size(); ++c) {
    const auto& cl = model.clusters[c];
    if (cl.vacant) continue;
    int shared = 0;
    for (int d = 0; d < kDescriptorDim; ++d) shared += mask[d] && cl.mask[d];
    const double dist = 1.0 - masked_cosine(x, cl.prototype, mask, cl.mask, min_shared);
    if (shared > best_shared || (shared == best_shared && dist < best)) {
      best_shared = shared;
      best = dist;
      p.s_hat = static_cast<int>(c);
      p.d_hat = cl.direction;
    }
  }
  if (best_shared < 0) throw DataError("model has no non-vacant clusters");
  return p;
}

PredictedDistribution one_hot(const Prediction& p, int k) {
  PredictedDistribution d;
  for (int a = 0; a < 3; ++a) d.direction[a][static_cast<std::size_t>(p.d_hat[a] + 1)] = 1.0;
  d.strategy.assign(static_cast<std::size_t>(k), 0.0);
  d.strategy.at(static_cast<std::size_t>(p.s_hat)) = 1.0;
  return d;
}

namespace {

constexpr double kProbFloor = 1e-12;

double nll(double p) { return -std::log(std::max(p, kProbFloor)); }

void check_batch(const std::vector<SupervisedSample>& batch, const std::vector<PredictedDistribution>& pred) {
  require_config(batch.size() == pred.size(), "batch and predictions differ in length");
  if (batch.empty()) throw DataError("empty batch");
}

}  // namespace

double direction_loss(const std::vector<SupervisedSample>& batch, const std::vector<PredictedDistribution>& pred) {
  check_batch(batch, pred);
  double sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      const int cls = batch[i].d_star[a];
      require_config(cls >= -1 && cls <= 1, "direction class outside {-1,0,+1}");
      sum += nll(pred[i].direction[a][static_cast<std::size_t>(cls + 1)]);
    }
  }
  return sum / (3.0 * static_cast<double>(batch.size()));
}

double strategy_loss(const std::vector<SupervisedSample>& batch, const std::vector<PredictedDistribution>& pred) {
  check_batch(batch, pred);
  double sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto s = static_cast<std::size_t>(batch[i].s_star);
    require_config(batch[i].s_star >= 0 && s < pred[i].strategy.size(), "strategy label outside the predicted classes");
    sum += nll(pred[i].strategy[s]);
  }
  return sum / static_cast<double>(batch.size());
}

double score_loss(const std::vector<SupervisedSample>& batch, const std::vector<PredictedDistribution>& pred,
                  double lambda_s) {
  require_config(lambda_s >= 0.0, "lambda_s must be non-negative");
  const double ld = direction_loss(batch, pred);
  if (lambda_s == 0.0) return ld;
  return ld + lambda_s * strategy_loss(batch, pred);
}

void save_samples(const std::vector<SupervisedSample>& samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write sample file " + path.string());
  out << "# samples version=" << kFormatVersion << "\n# columns: video_id,t,s_star,du,dv,dz,event_idx\n";
  for (const auto& s : samples) {
    out << s.video_id << ',' << text::format(s.t) << ',' << s.s_star << ',' << s.d_star[0] << ',' << s.d_star[1]
        << ',' << s.d_star[2] << ',' << s.event_idx << '\n';
  }
}

std::vector<SupervisedSample> load_samples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sample file " + path.string());
  std::vector<SupervisedSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto f = text::split_view(line, ',');
    if (f.size() != 7) throw ParseError("sample row needs 7 fields", lineno);
    try {
      SupervisedSample s;
      s.video_id = std::string(text::trim(f[0]));
      s.t = text::parse_double(f[1]);
      s.s_star = static_cast<int>(text::parse_int(f[2]));
      for (int a = 0; a < 3; ++a) {
        s.d_star[a] = static_cast<int>(text::parse_int(f[3 + a]));
        if (s.d_star[a] < -1 || s.d_star[a] > 1) throw DataError("direction outside {-1,0,+1}");
      }
      s.event_idx = static_cast<int>(text::parse_int(f[6]));
      out.push_back(std::move(s));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return out;
}

VideoSplit split_by_video(const std::vector<SupervisedSample>& samples, double train_frac, double val_frac,
                          std::uint64_t seed) {
  require_config(train_frac >= 0.0 && val_frac >= 0.0 && train_frac + val_frac <= 1.0, "bad split fractions");
  std::set<std::string> uniq;
  for (const auto& s : samples) uniq.insert(s.video_id);
  std::vector<std::string> ids(uniq.begin(), uniq.end());
  std::mt19937_64 rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[static_cast<std::size_t>(rng() % i)]);
  const auto n = static_cast<double>(ids.size());
  const auto n_train = static_cast<std::size_t>(std::llround(train_frac * n));
  const auto n_val = std::min(ids.size() - n_train, static_cast<std::size_t>(std::llround(val_frac * n)));
  VideoSplit sp;
  sp.train.assign(ids.begin(), ids.begin() + static_cast<long>(n_train));
  sp.val.assign(ids.begin() + static_cast<long>(n_train), ids.begin() + static_cast<long>(n_train + n_val));
  sp.test.assign(ids.begin() + static_cast<long>(n_train + n_val), ids.end());
  for (auto* v : {&sp.train, &sp.val, &sp.test}) std::sort(v->begin(), v->end());
  return sp;
}

}  // namespace lapcam
