#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "lapcam/metrics.hpp"

using namespace lapcam;

namespace {

LabeledInterval li(EventLabel l, double s, double e) { return {l, s, e, std::nullopt}; }

// Brute-force contingency-table oracles with explicit loops over label sets.
double oracle_purity(const std::vector<int>& p, const std::vector<int>& t) {
  std::set<int> ps(p.begin(), p.end()), ts(t.begin(), t.end());
  double sum = 0;
  for (int a : ps) {
    int best = 0;
    for (int b : ts) {
      int c = 0;
      for (std::size_t i = 0; i < p.size(); ++i) c += p[i] == a && t[i] == b;
      best = std::max(best, c);
    }
    sum += best;
  }
  return sum / p.size();
}

double oracle_nmi(const std::vector<int>& p, const std::vector<int>& t) {
  const double n = p.size();
  std::set<int> ps(p.begin(), p.end()), ts(t.begin(), t.end());
  double mi = 0, hp = 0, ht = 0;
  for (int a : ps) {
    const double na = std::count(p.begin(), p.end(), a);
    hp -= na / n * std::log(na / n);
    for (int b : ts) {
      const double nb = std::count(t.begin(), t.end(), b);
      double c = 0;
      for (std::size_t i = 0; i < p.size(); ++i) c += p[i] == a && t[i] == b;
      if (c > 0) mi += c / n * std::log(n * c / (na * nb));
    }
  }
  for (int b : ts) {
    const double nb = std::count(t.begin(), t.end(), b);
    ht -= nb / n * std::log(nb / n);
  }
  if (hp == 0 || ht == 0) return 0;
  return mi / std::sqrt(hp * ht);
}

std::vector<double> sine(double hz, double fps, int n, double amp = 1.0) {
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = amp * std::sin(2 * M_PI * hz * i / fps);
  return x;
}

}  // namespace

TEST_CASE("tIoU matching") {
  std::vector<LabeledInterval> a{li(EventLabel::Interaction, 0, 2), li(EventLabel::DepthAdvance, 3, 5)};
  auto same = match_events(a, a);
  CHECK(same.macro_f1 == 1.0);
  CHECK(same.mean_tiou == 1.0);
  CHECK(same.per_class[0].precision == 1.0);
  CHECK(same.per_class[0].recall == 1.0);

  CHECK(tiou(0, 2, 1, 3) == doctest::Approx(1.0 / 3.0));
  auto off = match_events({li(EventLabel::Interaction, 0, 2)}, {li(EventLabel::Interaction, 1, 3)});
  CHECK(off.pairs.empty());
  CHECK(off.per_class[0].fp == 1);
  CHECK(off.per_class[0].fn == 1);

  auto wrong = match_events({li(EventLabel::Interaction, 0, 2)}, {li(EventLabel::DepthRetreat, 0, 2)});
  CHECK(wrong.per_class[static_cast<int>(EventLabel::Interaction)].fp == 1);
  CHECK(wrong.per_class[static_cast<int>(EventLabel::DepthRetreat)].fn == 1);
  CHECK(wrong.macro_f1 == 0.0);
}

TEST_CASE("matching swaps precision and recall when roles swap") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 20);
  std::uniform_int_distribution<int> lab(0, 1);
  std::vector<LabeledInterval> p, t;
  for (int i = 0; i < 8; ++i) {
    double s = u(rng);
    p.push_back(li(static_cast<EventLabel>(lab(rng)), s, s + 2));
  }
  for (int i = 0; i < 6; ++i) {
    double s = u(rng);
    t.push_back(li(static_cast<EventLabel>(lab(rng)), s, s + 2));
  }
  auto ab = match_events(p, t);
  auto ba = match_events(t, p);
  for (int k = 0; k < kNumEventLabels; ++k) {
    CHECK(ab.per_class[k].precision == ba.per_class[k].recall);
    CHECK(ab.per_class[k].recall == ba.per_class[k].precision);
    CHECK(ab.per_class[k].f1 == doctest::Approx(ba.per_class[k].f1).epsilon(1e-15));
  }
}

TEST_CASE("matching agrees with an exhaustive small-instance oracle") {
  // With well-separated candidates greedy matching equals the optimum; the
  // oracle enumerates every injective assignment.
  std::vector<LabeledInterval> p{li(EventLabel::Interaction, 0, 2), li(EventLabel::Interaction, 2.1, 4),
                                 li(EventLabel::Interaction, 7, 9)};
  std::vector<LabeledInterval> t{li(EventLabel::Interaction, 0.2, 2.2), li(EventLabel::Interaction, 2.0, 4.1)};
  auto rep = match_events(p, t);
  double best_sum = 0;
  int best_n = 0;
  for (int a = -1; a < 2; ++a) {
    for (int b = -1; b < 2; ++b) {
      if (a >= 0 && a == b) continue;
      double s = 0;
      int n = 0;
      for (auto [pi, tj] : {std::pair{0, a}, std::pair{1, b}}) {
        if (tj < 0) continue;
        const double v = tiou(p[pi].t_s, p[pi].t_e, t[tj].t_s, t[tj].t_e);
        if (v < 0.5) continue;
        s += v;
        ++n;
      }
      if (n > best_n || (n == best_n && s > best_sum)) {
        best_n = n;
        best_sum = s;
      }
    }
  }
  CHECK(static_cast<int>(rep.pairs.size()) == best_n);
  CHECK(rep.mean_tiou == doctest::Approx(best_sum / best_n).epsilon(1e-12));
  const double prec = 2.0 / 3.0, rec = 1.0;
  CHECK(rep.per_class[0].f1 == doctest::Approx(2 * prec * rec / (prec + rec)).epsilon(1e-12));
}

TEST_CASE("depth MAE over matched depth events") {
  std::vector<LabeledInterval> p{{EventLabel::DepthAdvance, 0, 2, -19.0}, {EventLabel::DepthRetreat, 5, 7, 21.5}};
  std::vector<LabeledInterval> t{{EventLabel::DepthAdvance, 0, 2, -20.0}, {EventLabel::DepthRetreat, 5, 7, 20.0}};
  auto rep = match_events(p, t);
  REQUIRE(rep.depth_mae.has_value());
  CHECK(*rep.depth_mae == doctest::Approx(1.25));
}

TEST_CASE("purity and NMI") {
  std::vector<int> a{0, 0, 1, 1, 2, 2};
  CHECK(purity(a, a) == 1.0);
  CHECK(nmi(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<int> one(6, 0), two{0, 0, 0, 1, 1, 1};
  CHECK(purity(one, two) == 0.5);
  CHECK(nmi(one, two) == 0.0);

  std::vector<int> p{0, 0, 1, 1, 1, 2}, t{5, 5, 5, 7, 7, 9};
  CHECK(purity(p, t) == doctest::Approx(oracle_purity(p, t)).epsilon(1e-12));
  CHECK(nmi(p, t) == doctest::Approx(oracle_nmi(p, t)).epsilon(1e-12));

  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> k(0, 3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> x(10), y(10);
    for (int i = 0; i < 10; ++i) {
      x[i] = k(rng);
      y[i] = k(rng);
    }
    CHECK(std::abs(purity(x, y) - oracle_purity(x, y)) <= 1e-9);
    CHECK(std::abs(nmi(x, y) - oracle_nmi(x, y)) <= 1e-9);
    // Relabeling the prediction leaves both unchanged.
    std::vector<int> r(10);
    for (int i = 0; i < 10; ++i) r[i] = 10 - x[i];
    CHECK(purity(r, y) == purity(x, y));
    CHECK(std::abs(nmi(r, y) - nmi(x, y)) <= 1e-12);
  }
}

TEST_CASE("intra-cluster variance") {
  auto v = var_intra({{5, 5}}, {0});
  CHECK(v.per_cluster[0] == 0.0);
  auto two = var_intra({{0, 0}, {2, 0}}, {1, 1});
  CHECK(two.per_cluster[1] == doctest::Approx(1.0));

  std::vector<std::vector<double>> pts{{0, 1}, {2, 3}, {4, -1}, {1, 1}, {7, 2}, {3, 3}};
  std::vector<int> lab{0, 0, 1, 1, 1, 2};
  auto base = var_intra(pts, lab);
  // Oracle: mean pairwise squared distance / 2 equals the variance about the centroid.
  for (int c : {0, 1, 2}) {
    std::vector<std::vector<double>> m;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (lab[i] == c) m.push_back(pts[i]);
    }
    double acc = 0;
    for (const auto& x : m) {
      for (const auto& y : m) acc += (x[0] - y[0]) * (x[0] - y[0]) + (x[1] - y[1]) * (x[1] - y[1]);
    }
    CHECK(std::abs(base.per_cluster[c] - acc / (2.0 * m.size() * m.size())) <= 1e-9);
  }
  auto shifted = pts;
  for (auto& p : shifted) {
    p[0] += 100;
    p[1] -= 7;
  }
  auto moved = var_intra(shifted, lab);
  for (int c : {0, 1, 2}) CHECK(std::abs(moved.per_cluster[c] - base.per_cluster[c]) <= 1e-9);
}

TEST_CASE("centering error") {
  std::vector<PixelPoint> f{{1, 1}, {2, 2}}, fd = f;
  CHECK(centering_error(f, fd) == 0.0);
  std::vector<PixelPoint> off{{4, 5}, {5, 6}};
  CHECK(centering_error(f, off) == doctest::Approx(5.0));
  std::vector<PixelPoint> a, b;
  double oracle = 0;
  for (int i = 0; i < 10; ++i) {
    a.push_back({0.5 * i, 0});
    b.push_back({0, 0.25 * i});
    oracle += std::sqrt(0.25 * i * i + 0.0625 * i * i);
  }
  CHECK(std::abs(centering_error(a, b) - oracle / 10) <= 1e-9);
}

TEST_CASE("shaking index") {
  std::vector<std::vector<PixelPoint>> still(9, std::vector<PixelPoint>(5, {3, 3}));
  CHECK(shaking_index(still) == 0.0);
  std::vector<std::vector<PixelPoint>> moving(9);
  for (auto& tr : moving) {
    for (int n = 0; n < 5; ++n) tr.push_back({static_cast<double>(n), 0});
  }
  CHECK(shaking_index(moving) == doctest::Approx(1.0));
  auto outlier = still;
  for (int n = 0; n < 5; ++n) outlier[4][n] = {10.0 * n, 0};
  CHECK(shaking_index(outlier) == 0.0);
}

TEST_CASE("high-frequency energy ratio") {
  CHECK(hf_ratio_axis(sine(1, 100, 1000), 100) <= 1e-6);
  CHECK(hf_ratio_axis(sine(10, 100, 1000), 100) >= 1 - 1e-6);
  CHECK(hf_ratio_axis(std::vector<double>(100, 3.0), 100) == 0.0);

  // Brute-force DFT oracle on a short mixed signal.
  std::vector<double> x{0.3, -1.2, 2.0, 0.7, -0.4, 1.1, 0.0, -2.2, 0.9, 0.5};
  const double fps = 20;
  const int n = static_cast<int>(x.size());
  double mu = 0;
  for (double v : x) mu += v / n;
  double tot = 0, hi = 0;
  for (int k = 1; k < n; ++k) {
    double re = 0, im = 0;
    for (int t = 0; t < n; ++t) {
      re += (x[t] - mu) * std::cos(2 * M_PI * k * t / n);
      im -= (x[t] - mu) * std::sin(2 * M_PI * k * t / n);
    }
    const double e = re * re + im * im;
    tot += e;
    if (std::min(k, n - k) * fps / n >= 4.0) hi += e;
  }
  CHECK(std::abs(hf_ratio_axis(x, fps) - hi / tot) <= 1e-9);

  // Mean removal: an offset changes nothing.
  auto y = x;
  for (auto& v : y) v += 40;
  CHECK(std::abs(hf_ratio_axis(y, fps) - hf_ratio_axis(x, fps)) <= 1e-9);
}

TEST_CASE("depth errors") {
  std::vector<double> l(5, 0.5);
  auto [a0, r0] = depth_errors(l, l);
  CHECK(a0 == 0.0);
  CHECK(r0 == 0.0);
  auto [a1, r1] = depth_errors(std::vector<double>(5, 0.55), l, 1e-9);
  CHECK(a1 == doctest::Approx(0.05));
  CHECK(r1 == doctest::Approx(0.05 / (0.5 + 1e-9)));

  std::vector<double> lam{0.4, 0.45, 0.5, 0.52, 0.49}, lamd{0.5, 0.5, 0.5, 0.6, 0.6};
  double oa = 0, orel = 0;
  for (int i = 0; i < 5; ++i) {
    oa += std::abs(lam[i] - lamd[i]) / 5;
    orel += std::abs(lam[i] - lamd[i]) / (std::abs(lamd[i]) + 1e-9) / 5;
  }
  auto [a2, r2] = depth_errors(lam, lamd, 1e-9);
  CHECK(std::abs(a2 - oa) <= 1e-9);
  CHECK(std::abs(r2 - orel) <= 1e-9);
}

TEST_CASE("pose jitter") {
  // The square root lifts filter rounding (~1e-15) to ~1e-7.
  CHECK(pose_jitter(std::vector<std::array<double, 3>>(200, {0.1, 0.0, -0.2}), 100) < 1e-6);
  CHECK(pose_jitter(std::vector<std::array<double, 3>>(200, {0.1, 0.0, -0.2}), 100, 2.0, true) < 1e-12);
  CHECK(pose_jitter(std::vector<std::array<double, 3>>(200, {0, 0, 0}), 100) == 0.0);

  // A 20 Hz component far above the 2 Hz cutoff passes almost unchanged into
  // the jitter: sqrt(mean |A sin|) = sqrt(2A/pi).
  const double amp = 0.04;
  std::vector<std::array<double, 3>> v;
  for (int i = 0; i < 1000; ++i) v.push_back({amp * std::sin(2 * M_PI * 20 * i / 100.0), 0, 0});
  CHECK(pose_jitter(v, 100) == doctest::Approx(std::sqrt(2 * amp / M_PI)).epsilon(0.01));
  CHECK(pose_jitter(v, 100, 2.0, true) == doctest::Approx(amp / std::sqrt(2.0)).epsilon(0.01));
}

TEST_CASE("time to target and recovery time") {
  std::vector<double> t{0, 0.1, 0.2, 0.3};
  std::vector<PixelPoint> at(4, {10, 10});
  CHECK(*time_to_target(t, at, {10, 10}, 1.0, 0.0) == 0.0);
  std::vector<PixelPoint> approach{{0, 0}, {5, 5}, {9.5, 9.8}, {10, 10}};
  CHECK(*time_to_target(t, approach, {10, 10}, 1.0, 0.0) == doctest::Approx(0.2));
  std::vector<PixelPoint> never(4, {0, 0});
  CHECK_FALSE(time_to_target(t, never, {10, 10}, 1.0, 0.0).has_value());

  CHECK(*recovery_time(t, {false, true, true, false}) == doctest::Approx(0.2));
  CHECK_FALSE(recovery_time(t, {false, true, true, true}).has_value());
  CHECK_FALSE(recovery_time(t, {false, false, false, false}).has_value());
}
