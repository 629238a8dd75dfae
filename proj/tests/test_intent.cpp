#include <doctest.h>

#include <cmath>
#include <random>

#include "intentgrid/intent.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace intentgrid;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Eigen::VectorXd random_emission(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  Eigen::VectorXd e(n);
  for (int i = 0; i < n; ++i) e[i] = u(rng);
  return e / e.sum();
}

// Emission for a single observation vector, phi computed from a running history.
struct EmissionFeed {
  HmmParams<double> params;
  std::vector<Eigen::VectorXd> history;

  Eigen::VectorXd next(const Eigen::VectorXd& obs) {
    history.push_back(obs);
    const double phi = rationality_phi<double>(history, params.window);
    return emission_row<double>(obs, phi, params);
  }
};

}  // namespace

TEST_CASE("transition matrix for three goals") {
  const HmmParams<double> p;
  const Eigen::MatrixXd t = transition_matrix(p, 3);
  Eigen::MatrixXd want(5, 5);
  want << 0.8, 0, 0, 0.2, 0,
          0, 0.8, 0, 0.2, 0,
          0, 0, 0.8, 0.2, 0,
          0.1, 0.1, 0.1, 0.65, 0.05,
          0, 0, 0, 0.1, 0.9;
  CHECK((t - want).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(p.unknown_to_irrational() == doctest::Approx(0.05));
}

TEST_CASE("transition matrix rows are stochastic for any goal count") {
  const HmmParams<double> p;
  for (int k = 1; k <= 9; ++k) {
    const Eigen::MatrixXd t = transition_matrix(p, k);
    CHECK(t.rows() == k + 2);
    CHECK((t.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(t.minCoeff() >= 0.0);
    for (int g = 0; g < k; ++g) CHECK(t(unknown_state(k), g) == doctest::Approx(0.3 / k));
    CHECK(t(unknown_state(k), irrational_state(k)) == doctest::Approx(0.05));
  }
}

TEST_CASE("desire labels") {
  CHECK(desire_label(0, 3) == "G1");
  CHECK(desire_label(2, 3) == "G3");
  CHECK(desire_label(3, 3) == "G?");
  CHECK(desire_label(4, 3) == "Gx");
  CHECK(desire_label(1, 1) == "G?");
}

TEST_CASE("parameter validation") {
  HmmParams<double> p;
  CHECK_NOTHROW(validate(p));
  p.gamma = 0.8;
  CHECK_THROWS_AS(validate(p), std::invalid_argument);
  p = {};
  p.window = 0;
  CHECK_THROWS_AS(validate(p), std::invalid_argument);
  p = {};
  p.c_unknown = 0;
  CHECK_THROWS_AS(validate(p), std::invalid_argument);
}

TEST_CASE("emission rows") {
  const HmmParams<double> p;
  SUBCASE("perfect observation, rational branch") {
    const Eigen::VectorXd row = emission_row<double>(vec({1, 1, 1}), 1.0, p);
    const double z = 3 * std::tanh(1.0) + std::tanh(0.55);
    CHECK(row[4] == 0.0);
    CHECK(row[0] == doctest::Approx(std::tanh(1.0) / z).epsilon(1e-12));
    CHECK(row[3] == doctest::Approx(std::tanh(0.55) / z).epsilon(1e-12));
  }
  SUBCASE("null observation, irrational branch") {
    const Eigen::VectorXd row = emission_row<double>(vec({0, 0, 0}), 0.0, p);
    CHECK(row.head(3).cwiseAbs().maxCoeff() == 0.0);
    CHECK(row[3] == doctest::Approx(0.1158).epsilon(1e-3));
    CHECK(row[4] == doctest::Approx(0.8842).epsilon(1e-3));
  }
  SUBCASE("threshold is strict") {
    const Eigen::VectorXd at = emission_row<double>(vec({0.5, 0.5, 0.5}), 0.5, p);
    CHECK(at[4] > 0.0);
    const Eigen::VectorXd above = emission_row<double>(vec({0.5, 0.5, 0.5}), 0.5 + 1e-12, p);
    CHECK(above[4] == 0.0);
  }
  SUBCASE("random rows sum to one") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 1000; ++i) {
      const Eigen::VectorXd obs = vec({u(rng), u(rng), u(rng)});
      const Eigen::VectorXd row = emission_row<double>(obs, u(rng), p);
      CHECK(std::abs(row.sum() - 1.0) < 1e-12);
      CHECK(row.minCoeff() >= 0.0);
      CHECK(row[3] > 0.0);
    }
  }
}

TEST_CASE("rationality phi") {
  SUBCASE("single perfect observation") {
    const std::vector<Eigen::VectorXd> h{vec({1, 1, 1})};
    CHECK(rationality_phi<double>(h, 3) == 1.0);
  }
  SUBCASE("mean over the window, max over hypotheses") {
    const std::vector<Eigen::VectorXd> h{vec({0.1, 0.9, 0.2}), vec({0.3, 0.6, 0.1}), vec({0.0, 0.0, 0.0})};
    CHECK(rationality_phi<double>(h, 3) == doctest::Approx(0.5));
  }
  SUBCASE("older entries fall out of the window") {
    const std::vector<Eigen::VectorXd> h{vec({1, 1, 1}), vec({0, 0, 0}), vec({0, 0, 0}), vec({0, 0.3, 0})};
    CHECK(rationality_phi<double>(h, 3) == doctest::Approx(0.1));
  }
  SUBCASE("empty history") {
    CHECK_THROWS_AS(rationality_phi<double>(std::vector<Eigen::VectorXd>{}, 3), std::invalid_argument);
  }
  SUBCASE("random histories against the definition") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 1);
    std::uniform_int_distribution<int> len(1, 8), kk(1, 6), ww(1, 5);
    for (int trial = 0; trial < 500; ++trial) {
      const int k = kk(rng), n = len(rng), w = ww(rng);
      std::vector<Eigen::VectorXd> h;
      for (int i = 0; i < n; ++i) {
        Eigen::VectorXd o(k);
        for (int j = 0; j < k; ++j) o[j] = u(rng);
        h.push_back(o);
      }
      double best = -1;
      for (int j = 0; j < k; ++j) {
        double s = 0;
        int used = 0;
        for (int i = n - 1; i >= 0 && used < w; --i, ++used) s += h[static_cast<std::size_t>(i)][j];
        best = std::max(best, s / used);
      }
      CHECK(rationality_phi<double>(h, w) == doctest::Approx(best).epsilon(1e-12));
    }
  }
}

TEST_CASE("normalized action values") {
  ActionValues q;
  q << 1.0, -3.0, 0.0, 2.0, -1.0, 0.5, 1.0;
  CHECK(normalized_action_value(q, Action::Right) == 1.0);
  CHECK(normalized_action_value(q, Action::Down) == 0.0);
  CHECK(normalized_action_value(q, Action::Stay) == doctest::Approx(0.8));
  ActionValues flat = ActionValues::Constant(4.0);
  flat[2] += 1e-12;
  for (Action a : kAllActions) CHECK(normalized_action_value(flat, a) == 1.0);
}

TEST_CASE("observation vectors on a corridor") {
  const GridMap m(5, 1, std::vector<std::uint8_t>(5, 0), {{4, 0}, {0, 0}});
  const PlannerParams p;
  std::vector<HypothesisModel> hyps;
  std::vector<RewardTable> rewards;
  std::vector<Eigen::VectorXd> oracle_values;
  for (int g = 0; g < 2; ++g) {
    RewardTable r = compute_rewards(m, g, p);
    ValueTable v = value_iteration(m, r, p);
    oracle_values.push_back(oracle::dense_value_iteration(m, r.values, p.gamma, p.eta, p.eps_move).values);
    rewards.push_back(r);
    hyps.emplace_back(m, std::move(r), std::move(v), p.eps_move);
  }
  for (int x = 0; x < 5; ++x) {
    for (int h = 0; h < kHeadingCount; ++h) {
      const Pose pose{x, 0, Heading(h)};
      for (int g = 0; g < 2; ++g) {
        const HypothesisModel& model = hyps[static_cast<std::size_t>(g)];
        CHECK(observe(hyps, pose, model.optimal_action(pose)).values[g] == 1.0);
        CHECK(observe(hyps, pose, model.worst_action(pose)).values[g] == 0.0);

        std::array<double, kActionCount> q{};
        for (int a = 0; a < kActionCount; ++a)
          q[static_cast<std::size_t>(a)] = oracle::dense_q(m, rewards[static_cast<std::size_t>(g)].values,
                                                          oracle_values[static_cast<std::size_t>(g)], p.gamma,
                                                          p.eps_move, x, 0, h, a);
        const double hi = *std::max_element(q.begin(), q.end());
        const double lo = *std::min_element(q.begin(), q.end());
        const double want = hi - lo < 1e-9 ? 1.0 : (q[to_index(Action::Stay)] - lo) / (hi - lo);
        const ObservationVector o = observe(hyps, pose, Action::Stay);
        CHECK(o.values[g] == doctest::Approx(want).epsilon(1e-9));
        CHECK(o.values.minCoeff() >= 0.0);
        CHECK(o.values.maxCoeff() <= 1.0);
      }
    }
  }
}

TEST_CASE("filter starts on the unknown state") {
  DesireFilter<double> f(HmmParams<double>{}, 3);
  CHECK(f.current() == vec({0, 0, 0, 1, 0}));
  CHECK(f.steps() == 0);
  CHECK(f.most_likely_sequence().empty());
}

TEST_CASE("single trellis step flows from the unknown state") {
  const HmmParams<double> p;
  const Eigen::MatrixXd t = transition_matrix(p, 3);
  const Eigen::VectorXd e = vec({0.3, 0.1, 0.2, 0.25, 0.15});
  DesireFilter<double> f(p, 3);
  const Eigen::VectorXd got = f.push(e);
  Eigen::VectorXd want = e.cwiseProduct(t.row(3).transpose());
  want /= want.sum();
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("trellis and backtrace match exhaustive path enumeration") {
  std::mt19937_64 rng(2024);
  const HmmParams<double> p;
  for (int k : {1, 2, 3}) {
    const Eigen::MatrixXd t = transition_matrix(p, k);
    const int n = desire_state_count(k);
    const int max_len = k == 3 ? 6 : 8;
    for (int len = 1; len <= max_len; ++len) {
      std::vector<Eigen::VectorXd> em;
      for (int i = 0; i < len; ++i) em.push_back(random_emission(rng, n));
      const auto ref = oracle::exhaustive_viterbi(t, initial_distribution<double>(k), em);
      const auto est = estimate_desires<double>(p, k, em);
      CHECK(est.sequence == ref.path);
      for (int s = 1; s <= len; ++s)
        CHECK((est.probabilities[static_cast<std::size_t>(s)] - ref.normalized_best[static_cast<std::size_t>(s - 1)])
                  .cwiseAbs()
                  .maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("scaling emissions leaves the estimate unchanged") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  const HmmParams<double> p;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Eigen::VectorXd> em, scaled;
    for (int i = 0; i < 20; ++i) {
      em.push_back(random_emission(rng, 5));
      scaled.push_back(em.back() * scale(rng));
    }
    const auto a = estimate_desires<double>(p, 3, em);
    const auto b = estimate_desires<double>(p, 3, scaled);
    CHECK(a.sequence == b.sequence);
    for (std::size_t s = 0; s < a.probabilities.size(); ++s)
      CHECK((a.probabilities[s] - b.probabilities[s]).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("goal probabilities stay below one") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0, 1);
  for (int run = 0; run < 50; ++run) {
    EmissionFeed feed;
    DesireFilter<double> f(feed.params, 3);
    for (int step = 0; step < 200; ++step) {
      Eigen::VectorXd obs = vec({u(rng), u(rng), u(rng)});
      if (run % 2 == 0) obs[run % 3] = 1.0;
      const Eigen::VectorXd& d = f.push(feed.next(obs));
      CHECK(std::abs(d.sum() - 1.0) < 1e-9);
      CHECK(d.head(3).maxCoeff() <= 1.0 - 1e-9);
    }
  }
}

TEST_CASE("sustained rational evidence for one goal") {
  EmissionFeed feed;
  DesireFilter<double> f(feed.params, 3);
  for (int step = 1; step <= 10; ++step) {
    const Eigen::VectorXd& d = f.push(feed.next(vec({0.2, 1.0, 0.2})));
    if (step == 10) {
      CHECK(d[1] > 0.8);
      CHECK(d[1] == doctest::Approx(0.8511035135739).epsilon(1e-9));
    }
  }
  const auto seq = f.most_likely_sequence();
  CHECK(seq.back() == 1);
}

TEST_CASE("sustained irrational evidence raises Gx monotonically") {
  EmissionFeed feed;
  DesireFilter<double> f(feed.params, 3);
  double last = 0.0, last_gain = std::numeric_limits<double>::infinity();
  for (int step = 1; step <= 40; ++step) {
    const Eigen::VectorXd& d = f.push(feed.next(vec({0.1, 0.3, 0.2})));
    CHECK(d[4] >= last - 1e-15);
    if (step > 3) {
      CHECK(d[4] - last <= last_gain + 1e-15);
      last_gain = d[4] - last;
    }
    last = d[4];
  }
  CHECK(last > 0.9);
  CHECK(last < 1.0);
}

TEST_CASE("long sequences do not underflow") {
  std::mt19937_64 rng(3);
  const HmmParams<double> p;
  for (FilterKind kind : {FilterKind::Viterbi, FilterKind::Forward}) {
    HmmParams<double> q = p;
    q.filter = kind;
    DesireFilter<double> f(q, 3);
    for (int i = 0; i < 100000; ++i) {
      Eigen::VectorXd e = random_emission(rng, 5) * 1e-30;
      f.push(e);
    }
    CHECK(std::isfinite(f.current().sum()));
    CHECK(std::abs(f.current().sum() - 1.0) < 1e-9);
    CHECK(f.trellis().minCoeff() >= 0.0);
    CHECK(f.most_likely_sequence().size() == 100000);
  }
}

TEST_CASE("forward option reports the filtering posterior") {
  std::mt19937_64 rng(41);
  HmmParams<double> p;
  p.filter = FilterKind::Forward;
  const Eigen::MatrixXd t = transition_matrix(p, 3);
  std::vector<Eigen::VectorXd> em;
  for (int i = 0; i < 6; ++i) em.push_back(random_emission(rng, 5));
  const auto est = estimate_desires<double>(p, 3, em);
  // Sum over every path prefix ending in each state.
  for (int len = 1; len <= 6; ++len) {
    Eigen::VectorXd mass = Eigen::VectorXd::Zero(5);
    long long total = 1;
    for (int i = 0; i < len; ++i) total *= 5;
    for (long long code = 0; code < total; ++code) {
      long long c = code;
      int prev = 3;
      double w = 1.0;
      int s = 0;
      for (int i = 0; i < len; ++i) {
        s = static_cast<int>(c % 5);
        c /= 5;
        w *= t(prev, s) * em[static_cast<std::size_t>(i)][s];
        prev = s;
      }
      mass[s] += w;
    }
    mass /= mass.sum();
    CHECK((est.probabilities[static_cast<std::size_t>(len)] - mass).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("filter rejects wrong emission size") {
  DesireFilter<double> f(HmmParams<double>{}, 3);
  CHECK_THROWS_AS(f.push(vec({0.5, 0.5})), std::invalid_argument);
}

TEST_CASE("float scalar instantiation") {
  HmmParams<float> p;
  DesireFilter<float> f(p, 3);
  Eigen::VectorXf obs(3);
  obs << 1.0f, 0.1f, 0.1f;
  const Eigen::VectorXf row = emission_row<float>(obs, 1.0f, p);
  f.push(row);
  CHECK(std::abs(f.current().sum() - 1.0f) < 1e-6f);
}
