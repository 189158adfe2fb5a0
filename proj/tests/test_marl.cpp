#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "hrt/marl.hpp"
#include "hrt/nets.hpp"
#include "hrt/ops.hpp"
#include "hrt/rng.hpp"

using namespace hrt;
using namespace hrt::num;
using namespace hrt::marl;

namespace {

MarlConfig small_config(Algo algo, std::size_t depth = 1) {
  MarlConfig cfg;
  cfg.algo = algo;
  cfg.depth = depth;
  cfg.window = 3;
  cfg.hidden = 6;
  cfg.d_model = 6;
  cfg.heads = 2;
  cfg.d_ff = 6;
  cfg.batch = 4;
  return cfg;
}

Transition random_transition(const std::vector<std::size_t>& obs_dims,
                             const std::vector<std::size_t>& comm_dims, std::size_t k,
                             Rng& rng) {
  Transition t;
  for (std::size_t i = 0; i < obs_dims.size(); ++i) {
    auto vec = [&](std::size_t n) {
      std::vector<double> v(n);
      for (double& x : v) x = rng.uniform(-1.0, 1.0);
      return v;
    };
    t.s.push_back(vec(obs_dims[i]));
    t.s2.push_back(vec(obs_dims[i]));
    std::vector<std::vector<double>> w, w2;
    for (std::size_t j = 0; j < k; ++j) {
      w.push_back(vec(obs_dims[i]));
      w2.push_back(vec(obs_dims[i]));
    }
    t.h.push_back(w);
    t.h2.push_back(w2);
    t.a.push_back(vec(2 + comm_dims[i]));
    t.r.push_back(rng.uniform(-1.0, 1.0));
  }
  return t;
}

std::vector<Tensor*> all_params(AgentLearner& l) {
  std::vector<Tensor*> out;
  collect_params(l.actor, out);
  collect_params(l.actor_target, out);
  collect_params(l.critic, out);
  collect_params(l.critic_target, out);
  return out;
}

std::vector<std::vector<double>> snapshot(const std::vector<Tensor*>& ps) {
  std::vector<std::vector<double>> out;
  for (Tensor* p : ps) out.push_back(p->values);
  return out;
}

void zero_params(std::vector<Tensor*> ps) {
  for (Tensor* p : ps) std::fill(p->values.begin(), p->values.end(), 0.0);
}

}  // namespace

TEST_CASE("observation window zero-pads and keeps oldest-first order") {
  ObservationWindow w(3, 2);
  auto e = w.entries();
  REQUIRE(e.size() == 3);
  for (const auto& row : e) CHECK(row == std::vector<double>(2, 0.0));

  w.push({1.0, 1.5});
  w.push({2.0, 2.5});
  e = w.entries();
  CHECK(e[0] == std::vector<double>(2, 0.0));
  CHECK(e[1] == std::vector<double>{1.0, 1.5});
  CHECK(e[2] == std::vector<double>{2.0, 2.5});

  w.push({3.0, 3.5});
  w.push({4.0, 4.5});
  e = w.entries();
  CHECK(e[0] == std::vector<double>{2.0, 2.5});
  CHECK(e[2] == std::vector<double>{4.0, 4.5});
  CHECK(w.flat() == std::vector<double>{2.0, 2.5, 3.0, 3.5, 4.0, 4.5});

  w.reset();
  CHECK(w.flat() == std::vector<double>(6, 0.0));
  CHECK_THROWS(w.push({1.0}));
}

TEST_CASE("replay buffer is FIFO at capacity and round-trips transitions") {
  ReplayBuffer buf(2);
  Rng rng(3, "buf");
  std::vector<std::size_t> od{2}, cd{0};
  Transition t1 = random_transition(od, cd, 2, rng);
  Transition t2 = random_transition(od, cd, 2, rng);
  Transition t3 = random_transition(od, cd, 2, rng);

  buf.store(t1);
  CHECK(buf.size() == 1);
  Rng srng(4, "sample");
  Batch b = buf.sample(3, srng);
  for (const Transition* p : b) CHECK(p->s == t1.s);  // single element repeated

  buf.store(t2);
  buf.store(t3);  // evicts t1
  CHECK(buf.size() == 2);
  bool saw1 = false, saw2 = false, saw3 = false;
  for (const Transition* p : buf.sample(64, srng)) {
    saw1 |= p->r == t1.r;
    saw2 |= p->r == t2.r;
    saw3 |= p->r == t3.r;
    if (p->r == t2.r) {  // stored bytes intact
      CHECK(p->s == t2.s);
      CHECK(p->h == t2.h);
      CHECK(p->a == t2.a);
      CHECK(p->s2 == t2.s2);
      CHECK(p->h2 == t2.h2);
    }
  }
  CHECK(!saw1);
  CHECK(saw2);
  CHECK(saw3);

  ReplayBuffer empty(8);
  Rng r2(5, "s");
  CHECK_THROWS(empty.sample(1, r2));
}

TEST_CASE("seeded sampling is reproducible") {
  ReplayBuffer buf(16);
  Rng rng(6, "fill");
  std::vector<std::size_t> od{2}, cd{0};
  for (int i = 0; i < 10; ++i) buf.store(random_transition(od, cd, 2, rng));
  Rng a(7, "draw"), b(7, "draw");
  Batch ba = buf.sample(32, a), bb = buf.sample(32, b);
  CHECK(ba == bb);
}

TEST_CASE("uniform sampling passes a chi-square test over 1e5 draws") {
  ReplayBuffer buf(128);
  Rng rng(8, "fill");
  std::vector<std::size_t> od{1}, cd{0};
  for (int i = 0; i < 100; ++i) {
    Transition t = random_transition(od, cd, 1, rng);
    t.r[0] = static_cast<double>(i);  // identity tag
    buf.store(t);
  }
  Rng draw(9, "draw");
  std::vector<std::size_t> counts(100, 0);
  for (int rep = 0; rep < 100; ++rep)
    for (const Transition* p : buf.sample(1000, draw))
      ++counts[static_cast<std::size_t>(p->r[0])];
  double chi2 = 0.0;
  for (std::size_t c : counts) {
    double diff = static_cast<double>(c) - 1000.0;
    chi2 += diff * diff / 1000.0;
  }
  // df = 99; the p = 0.001 critical value is 148.23.
  CHECK(chi2 < 148.23);
}

TEST_CASE("select_action is deterministic without exploration") {
  for (Algo algo : {Algo::maddpg, Algo::rmaddpg, Algo::hrtmaddpg}) {
    Rng init(10, "init");
    Trainer tr(small_config(algo), {4, 5}, {0, 3}, init);
    ObservationWindow w(3, 4);
    w.push({0.1, 0.2, 0.3, 0.4});
    std::vector<double> obs{0.5, -0.5, 0.25, 0.0};
    Rng n1(11, "n"), n2(12, "n");
    CHECK(tr.select_action(0, obs, w, false, n1) == tr.select_action(0, obs, w, false, n2));

    // Communication head is a simplex.
    ObservationWindow w1(3, 5);
    std::vector<double> obs1{0.5, -0.5, 0.25, 0.0, 1.0};
    std::vector<double> a = tr.select_action(1, obs1, w1, false, n1);
    REQUIRE(a.size() == 5);
    double s = a[2] + a[3] + a[4];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t k = 2; k < 5; ++k) CHECK(a[k] >= 0.0);
  }
}

TEST_CASE("zero-weight actor emits zero movement") {
  Rng init(13, "init");
  Trainer tr(small_config(Algo::maddpg), {4}, {0}, init);
  std::vector<Tensor*> ps;
  collect_params(tr.agent(0).actor, ps);
  zero_params(ps);
  ObservationWindow w(3, 4);
  Rng noise(14, "n");
  std::vector<double> a = tr.select_action(0, {1.0, 2.0, 3.0, 4.0}, w, false, noise);
  CHECK(a == std::vector<double>{0.0, 0.0});
}

TEST_CASE("exploration noise has the configured standard deviation") {
  Rng init(15, "init");
  Trainer tr(small_config(Algo::maddpg), {2}, {0}, init);
  std::vector<Tensor*> ps;
  collect_params(tr.agent(0).actor, ps);
  zero_params(ps);  // pre-noise action is exactly 0
  tr.set_noise_progress(0.0);
  CHECK(tr.noise_sigma() == 0.1);

  ObservationWindow w(3, 2);
  Rng noise(16, "n");
  double sum = 0.0, sumsq = 0.0;
  const int draws = 50000;
  for (int i = 0; i < draws; ++i) {
    std::vector<double> a = tr.select_action(0, {0.0, 0.0}, w, true, noise);
    for (double v : a) {
      sum += v;
      sumsq += v * v;
    }
  }
  double n = 2.0 * draws;
  double var = sumsq / n - (sum / n) * (sum / n);
  CHECK(std::sqrt(var) == doctest::Approx(0.1).epsilon(0.05));

  tr.set_noise_progress(1.0);
  CHECK(tr.noise_sigma() == doctest::Approx(0.01).epsilon(1e-12));
  tr.set_noise_progress(0.5);
  CHECK(tr.noise_sigma() == doctest::Approx(0.055).epsilon(1e-12));
}

TEST_CASE("maddpg critic input is exactly concat(s, a)") {
  Rng init(17, "init");
  std::vector<std::size_t> od{3, 4}, cd{0, 0};
  Trainer tr(small_config(Algo::maddpg), od, cd, init);
  Rng rng(18, "t");
  std::vector<Transition> ts;
  for (int i = 0; i < 3; ++i) ts.push_back(random_transition(od, cd, 3, rng));
  Batch batch{&ts[0], &ts[1], &ts[2]};
  Tensor x = tr.encode_critic_input(0, batch, false);
  REQUIRE(x.shape == Shape{3, 3 + 4 + 2 + 2});
  for (std::size_t b = 0; b < 3; ++b) {
    std::vector<double> expect;
    for (const auto& o : batch[b]->s) expect.insert(expect.end(), o.begin(), o.end());
    for (const auto& a : batch[b]->a) expect.insert(expect.end(), a.begin(), a.end());
    for (std::size_t c = 0; c < expect.size(); ++c) CHECK(x.at(b, c) == expect[c]);
  }
}

TEST_CASE("hrtmaddpg critic input matches a manual encoder composition bitwise") {
  Rng init(19, "init");
  std::vector<std::size_t> od{3, 4}, cd{0, 0};
  MarlConfig cfg = small_config(Algo::hrtmaddpg, 1);
  Trainer tr(cfg, od, cd, init);
  Rng rng(20, "t");
  std::vector<Transition> ts;
  for (int i = 0; i < 2; ++i) ts.push_back(random_transition(od, cd, cfg.window, rng));
  Batch batch{&ts[0], &ts[1]};

  Tensor x = tr.encode_critic_input(0, batch, false);
  std::size_t total_obs = 3 + 4, feat = cfg.d_model, total_act = 4;
  REQUIRE(x.shape == Shape{2, total_obs + 2 * feat + total_act});

  // Joint observations, then per-agent pooled encodings, then joint actions.
  for (std::size_t ag = 0; ag < 2; ++ag) {
    const nets::EncoderStack& enc = tr.agent(0).critic.encs[ag];
    std::vector<double> stacked;
    for (const Transition* t : batch)
      for (const auto& row : t->h[ag]) stacked.insert(stacked.end(), row.begin(), row.end());
    Tensor window = tensor_new({2 * cfg.window, od[ag]}, stacked);
    Tensor pooled = nets::hierarchical_encode(enc, window, 2, cfg.window).pooled;
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t c = 0; c < feat; ++c)
        CHECK(x.at(b, total_obs + ag * feat + c) == pooled.at(b, c));
  }
}

TEST_CASE("compute_target arithmetic") {
  std::vector<std::size_t> od{3}, cd{0};
  MarlConfig cfg = small_config(Algo::maddpg);
  cfg.gamma = 0.95;
  Rng init(21, "init");
  Trainer tr(cfg, od, cd, init);

  // Force Q' = 2 everywhere: zero target critic, then bias the output.
  std::vector<Tensor*> ps;
  collect_params(tr.agent(0).critic_target, ps);
  zero_params(ps);
  tr.agent(0).critic_target.mlp.layers.back().b.values[0] = 2.0;

  Rng rng(22, "t");
  Transition t = random_transition(od, cd, cfg.window, rng);
  t.r[0] = 1.0;
  Batch batch{&t};
  std::vector<double> y = tr.compute_target(0, batch);
  REQUIRE(y.size() == 1);
  CHECK(y[0] == 2.9);  // 1 + 0.95 * 2, exactly

  MarlConfig cfg0 = cfg;
  cfg0.gamma = 0.0;
  Rng init2(21, "init");
  Trainer tr0(cfg0, od, cd, init2);
  t.r[0] = -0.625;
  CHECK(tr0.compute_target(0, batch) == std::vector<double>{-0.625});
}

TEST_CASE("critic_update: zero residual means zero loss and no parameter motion") {
  std::vector<std::size_t> od{3}, cd{0};
  MarlConfig cfg = small_config(Algo::maddpg);
  Rng init(23, "init");
  Trainer tr(cfg, od, cd, init);
  std::vector<Tensor*> on, tgt;
  collect_params(tr.agent(0).critic, on);
  collect_params(tr.agent(0).critic_target, tgt);
  zero_params(on);
  zero_params(tgt);  // Q = 0 and Q' = 0

  Rng rng(24, "t");
  std::vector<Transition> ts;
  for (int i = 0; i < 4; ++i) {
    ts.push_back(random_transition(od, cd, cfg.window, rng));
    ts.back().r[0] = 0.0;  // y = 0 = Q
  }
  Batch batch{&ts[0], &ts[1], &ts[2], &ts[3]};
  auto before = snapshot(on);
  CHECK(tr.critic_update(0, batch) == 0.0);
  CHECK(snapshot(on) == before);
}

TEST_CASE("critic_update returns the exact pre-step squared error") {
  std::vector<std::size_t> od{3}, cd{0};
  MarlConfig cfg = small_config(Algo::maddpg);
  cfg.gamma = 0.0;
  Rng init(25, "init");
  Trainer tr(cfg, od, cd, init);
  std::vector<Tensor*> on;
  collect_params(tr.agent(0).critic, on);
  zero_params(on);  // Q = 0

  Rng rng(26, "t");
  Transition t = random_transition(od, cd, cfg.window, rng);
  t.r[0] = 2.0;  // y = 2, loss = (2 - 0)^2
  Batch batch{&t};
  CHECK(tr.critic_update(0, batch) == 4.0);
}

TEST_CASE("critic loss gradient through the encoder matches finite differences") {
  std::vector<std::size_t> od{3, 2}, cd{0, 0};
  MarlConfig cfg = small_config(Algo::hrtmaddpg, 2);
  Rng init(27, "init");
  Trainer tr(cfg, od, cd, init);
  Rng rng(28, "t");
  std::vector<Transition> ts;
  for (int i = 0; i < 3; ++i) ts.push_back(random_transition(od, cd, cfg.window, rng));
  Batch batch{&ts[0], &ts[1], &ts[2]};
  std::vector<double> y = tr.compute_target(0, batch);

  CriticParams& critic = tr.agent(0).critic;

  // The full loss of one critic step, recomputed from public pieces.
  auto loss_with = [&](const CriticParams& c, Tape* tape) {
    std::size_t bsz = batch.size(), k = cfg.window;
    std::vector<Tensor> cols;
    for (std::size_t ag = 0; ag < 2; ++ag) {
      std::vector<double> stacked;
      for (const Transition* t : batch)
        stacked.insert(stacked.end(), t->s[ag].begin(), t->s[ag].end());
      cols.push_back(tensor_new({bsz, od[ag]}, stacked));
    }
    for (std::size_t ag = 0; ag < 2; ++ag) {
      std::vector<double> stacked;
      for (const Transition* t : batch)
        for (const auto& row : t->h[ag]) stacked.insert(stacked.end(), row.begin(), row.end());
      Tensor window = tensor_new({bsz * k, od[ag]}, stacked);
      cols.push_back(nets::hierarchical_encode(c.encs[ag], window, bsz, k).pooled);
    }
    for (std::size_t ag = 0; ag < 2; ++ag) {
      std::vector<double> stacked;
      for (const Transition* t : batch)
        stacked.insert(stacked.end(), t->a[ag].begin(), t->a[ag].end());
      cols.push_back(tensor_new({bsz, 2}, stacked));
    }
    Tensor q = nets::mlp_forward(c.mlp, hcat(cols));
    Tensor yt = tensor_new({bsz, 1}, y);
    Tensor diff = sub(yt, q);
    return scale(num::sum(mul(diff, diff)), 1.0 / static_cast<double>(bsz));
    (void)tape;
  };

  Tape tape;
  CriticParams tracked = track(critic, tape);
  GradientMap grads = tape.backward(loss_with(tracked, &tape));

  std::vector<Tensor*> online, tptrs;
  collect_params(critic, online);
  collect_params(tracked, tptrs);
  Rng pick(29, "pick");
  int checked = 0;
  for (std::size_t p = 0; p < online.size(); ++p) {
    // Two random elements per parameter tensor keep the suite fast.
    for (int rep = 0; rep < 2 && checked < 80; ++rep, ++checked) {
      std::size_t kk = pick.uniform_int(online[p]->size());
      auto it = grads.find(tptrs[p]->node);
      double analytic = it == grads.end() ? 0.0 : it->second.values[kk];
      double save = online[p]->values[kk];
      const double step = 1e-5;
      online[p]->values[kk] = save + step;
      double up = loss_with(critic, nullptr).scalar();
      online[p]->values[kk] = save - step;
      double dn = loss_with(critic, nullptr).scalar();
      online[p]->values[kk] = save;
      double fd = (up - dn) / (2.0 * step);
      double denom = std::max({1e-3, std::fabs(analytic), std::fabs(fd)});
      INFO("param ", p, " element ", kk);
      CHECK(std::fabs(analytic - fd) / denom <= 1e-4);
    }
  }
}

TEST_CASE("actor_update: constant critic gives zero actor gradient") {
  std::vector<std::size_t> od{3}, cd{0};
  MarlConfig cfg = small_config(Algo::maddpg);
  Rng init(30, "init");
  Trainer tr(cfg, od, cd, init);
  std::vector<Tensor*> cps;
  collect_params(tr.agent(0).critic, cps);
  zero_params(cps);
  tr.agent(0).critic.mlp.layers.back().b.values[0] = 3.0;  // Q == 3 regardless of a

  Rng rng(31, "t");
  Transition t = random_transition(od, cd, cfg.window, rng);
  Batch batch{&t};
  std::vector<Tensor*> aps;
  collect_params(tr.agent(0).actor, aps);
  auto before = snapshot(aps);
  double q = tr.actor_update(0, batch);
  CHECK(q == 3.0);
  CHECK(snapshot(aps) == before);
}

TEST_CASE("actor_update climbs the critic") {
  std::vector<std::size_t> od{3}, cd{0};
  MarlConfig cfg = small_config(Algo::maddpg);
  cfg.lr_actor = 1e-3;
  Rng init(32, "init");
  Trainer tr(cfg, od, cd, init);
  Rng rng(33, "t");
  std::vector<Transition> ts;
  for (int i = 0; i < 4; ++i) ts.push_back(random_transition(od, cd, cfg.window, rng));
  Batch batch{&ts[0], &ts[1], &ts[2], &ts[3]};

  double first = tr.actor_update(0, batch), last = first;
  for (int it = 0; it < 40; ++it) last = tr.actor_update(0, batch);
  CHECK(last > first);
}

TEST_CASE("updates touch only their own parameter sets") {
  for (Algo algo : {Algo::maddpg, Algo::rmaddpg, Algo::hrtmaddpg}) {
    std::vector<std::size_t> od{3, 2}, cd{0, 0};
    Rng init(34, "init");
    Trainer tr(small_config(algo), od, cd, init);
    Rng rng(35, "t");
    std::vector<Transition> ts;
    for (int i = 0; i < 4; ++i) ts.push_back(random_transition(od, cd, 3, rng));
    Batch batch{&ts[0], &ts[1], &ts[2], &ts[3]};

    AgentLearner& l = tr.agent(0);
    std::vector<Tensor*> actor, atgt, critic, ctgt;
    collect_params(l.actor, actor);
    collect_params(l.actor_target, atgt);
    collect_params(l.critic, critic);
    collect_params(l.critic_target, ctgt);

    auto a0 = snapshot(actor), at0 = snapshot(atgt), ct0 = snapshot(ctgt);
    tr.critic_update(0, batch);
    CHECK(snapshot(actor) == a0);
    CHECK(snapshot(atgt) == at0);
    CHECK(snapshot(ctgt) == ct0);

    auto c1 = snapshot(critic);
    tr.actor_update(0, batch);
    CHECK(snapshot(critic) == c1);
    CHECK(snapshot(atgt) == at0);
    CHECK(snapshot(ctgt) == ct0);
  }
}

TEST_CASE("soft_update blends targets elementwise") {
  std::vector<std::size_t> od{3}, cd{0};
  Rng init(36, "init");
  Trainer tr(small_config(Algo::maddpg), od, cd, init);
  AgentLearner& l = tr.agent(0);

  SUBCASE("tau = 1 copies online exactly") {
    tr.soft_update(1.0);
    std::vector<Tensor*> on, tgt;
    collect_params(l.actor, on);
    collect_params(l.actor_target, tgt);
    collect_params(l.critic, on);
    collect_params(l.critic_target, tgt);
    for (std::size_t i = 0; i < on.size(); ++i) CHECK(on[i]->values == tgt[i]->values);
  }

  SUBCASE("tau = 0 leaves targets untouched") {
    std::vector<Tensor*> tgt;
    collect_params(l.actor_target, tgt);
    collect_params(l.critic_target, tgt);
    auto before = snapshot(tgt);
    tr.soft_update(0.0);
    CHECK(snapshot(tgt) == before);
  }

  SUBCASE("tau = 0.01 hand value") {
    l.actor.mlp.layers[0].w.values[0] = 1.0;
    l.actor_target.mlp.layers[0].w.values[0] = 0.0;
    tr.soft_update(0.01);
    CHECK(l.actor_target.mlp.layers[0].w.values[0] == 0.01);
  }

  SUBCASE("tau out of range") {
    CHECK_THROWS(tr.soft_update(-0.1));
    CHECK_THROWS(tr.soft_update(1.5));
  }
}

TEST_CASE("a full training step is bit-reproducible") {
  std::vector<std::size_t> od{3, 2}, cd{0, 0};
  MarlConfig cfg = small_config(Algo::hrtmaddpg, 1);
  Rng rng(37, "t");
  std::vector<Transition> ts;
  for (int i = 0; i < 4; ++i) ts.push_back(random_transition(od, cd, cfg.window, rng));
  Batch batch{&ts[0], &ts[1], &ts[2], &ts[3]};

  auto run = [&]() {
    Rng init(38, "init");
    Trainer tr(cfg, od, cd, init);
    for (std::size_t i = 0; i < 2; ++i) {
      tr.critic_update(i, batch);
      tr.actor_update(i, batch);
    }
    tr.soft_update(cfg.tau);
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < 2; ++i)
      for (Tensor* p : all_params(tr.agent(i))) out.push_back(p->values);
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("shared parameters map every agent to one learner") {
  std::vector<std::size_t> od{3, 3}, cd{0, 0};
  MarlConfig cfg = small_config(Algo::maddpg);
  cfg.shared_parameters = true;
  Rng init(39, "init");
  Trainer tr(cfg, od, cd, init);
  CHECK(tr.num_agents() == 2);
  CHECK(tr.num_learners() == 1);
  CHECK(&tr.agent(0) == &tr.agent(1));
}
