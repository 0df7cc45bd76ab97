// Runs every primary acceptance criterion and prints one PASS/FAIL line each.

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "dtaas/common/error.hpp"
#include "dtaas/config/validator.hpp"
#include "dtaas/graph/twin_graph.hpp"
#include "dtaas/incubator/demo.hpp"
#include "dtaas/incubator/emulator.hpp"
#include "dtaas/incubator/estimator.hpp"
#include "dtaas/incubator/planner.hpp"
#include "dtaas/incubator/plant.hpp"
#include "platform_support.hpp"
#include "support.hpp"

using namespace dtaas;
using nlohmann::json;
using lifecycle::Phase;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

template <class... A>
std::string cat(const A&... a) {
  std::ostringstream os;
  (os << ... << a);
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. grammar oracle

/// Acceptance straight from the two productions:
///   {D*, M*, (FT)+} C_dt      elementary form, only complete pairs
///   {(DMFT)*, Dt+} C_dt       hierarchical form, any elementary multiset
/// A ready-made DT stands alone; composing it with anything else has to go
/// through a child DT.
bool grammar_accepts(int d, int m, int pairs, int ready, int children, int dangling) {
  if (ready > 0) return ready == 1 && d == 0 && m == 0 && pairs == 0 && children == 0 && dangling == 0;
  if (children > 0) return true;
  return pairs > 0 && dangling == 0;
}

Outcome grammar_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = test::standard_resolver();
  int cases = 0, disagreements = 0;
  std::string first;
  for (int d = 0; d <= 3; ++d)
    for (int m = 0; m <= 3; ++m)
      for (int p = 0; p <= 3; ++p)
        for (int r = 0; r <= 3; ++r)
          for (int c = 0; c <= 3; ++c)
            for (int x = 0; x <= 3; ++x) {
              config::ConfigDoc doc;
              doc.name = "g";
              for (int i = 1; i <= d; ++i) doc.c_a.data.emplace_back("d" + std::to_string(i));
              for (int i = 1; i <= m; ++i) doc.c_a.models.emplace_back("m" + std::to_string(i));
              for (int i = 1; i <= p; ++i) {
                doc.c_a.ft_pairs.push_back({AssetId("f" + std::to_string(i)), AssetId("t" + std::to_string(i))});
              }
              for (int i = 1; i <= r; ++i) doc.c_a.ready_dts.emplace_back("r" + std::to_string(i));
              for (int i = 0; i < c; ++i) {
                const auto name = "c" + std::to_string(i);
                doc.c_a.child_dts.push_back(name);
                doc.children.push_back(test::leaf_doc(name));
              }
              for (int i = 0; i < x; ++i) {
                // alternate a lone function and a lone tool
                config::FtPair lone;
                if (i % 2 == 0) {
                  lone.function = AssetId("f4");
                } else {
                  lone.tool = AssetId("t4");
                }
                doc.c_a.ft_pairs.push_back(lone);
              }
              const auto report = config::validate_config(doc, res);
              const bool got = !report.has_error_prefix("GRAMMAR");
              const bool want = grammar_accepts(d, m, p, r, c, x);
              ++cases;
              if (got != want) {
                if (disagreements++ == 0) {
                  first = cat(" first at D=", d, " M=", m, " FT=", p, " Dt=", r, " child=", c, " lone=", x);
                }
              }
            }
  const double secs = seconds_since(t0);
  return {cases == 4096 && disagreements == 0 && secs < 10.0,
          cat(cases, " combinations, ", disagreements, " disagreements", first)};
}

// ---------------------------------------------------------------------------
// 2. dependency rule

void collect_levels(config::ConfigDoc& doc, std::vector<config::ConfigDoc*>& out) {
  out.push_back(&doc);
  for (auto& c : doc.children) collect_levels(c, out);
}

Outcome dependency_rule() {
  const auto res = test::standard_resolver();
  test::Gen gen(4242);
  constexpr int kCases = 2000;
  int rejected = 0, base_invalid = 0;
  std::map<std::string, int> by_kind;
  std::string first_miss;
  for (int i = 0; i < kCases; ++i) {
    auto doc = test::random_doc(gen, "dep" + std::to_string(i), 2);
    if (!config::validate_config(doc, res).valid) ++base_invalid;

    std::vector<config::ConfigDoc*> levels;
    collect_levels(doc, levels);
    auto& lv = *levels[static_cast<std::size_t>(gen.range(0, static_cast<std::int64_t>(levels.size()) - 1))];

    // make sure the level has a data or model output to misuse
    std::vector<AssetId> dm = lv.c_a.data;
    dm.insert(dm.end(), lv.c_a.models.begin(), lv.c_a.models.end());
    if (dm.empty()) {
      lv.c_a.data.emplace_back("d" + std::to_string(gen.range(1, 4)));
      dm = lv.c_a.data;
    }
    const auto producer = gen.pick(dm).str() + ".out";

    std::string consumer, kind;
    auto pick = gen.range(0, 5);
    if (pick == 2 && lv.c_a.child_dts.empty()) pick = 0;
    switch (pick) {
      case 0:
        kind = "data/model";
        consumer = gen.pick(dm).str() + ".in";
        break;
      case 1: {
        kind = "ready-dt";
        const AssetId r("r" + std::to_string(gen.range(1, 4)));
        lv.c_a.ready_dts.push_back(r);
        consumer = r.str() + ".in";
        break;
      }
      case 2:
        kind = "child-dt";
        consumer = gen.pick(lv.c_a.child_dts) + ".in";
        break;
      case 3:
      case 4: {
        kind = pick == 3 ? "pt-actuator" : "pt-command";
        lv.c_pt.channels.push_back({"inj", pick == 3 ? config::ChannelRole::Actuator : config::ChannelRole::Command,
                                    "pt." + lv.name + ".inj"});
        if (lv.c_pt.endpoint.empty()) lv.c_pt.endpoint = "pt-" + lv.name;
        consumer = "pt.inj";
        break;
      }
      default:
        kind = "external";
        lv.c_e.endpoints.push_back({"inj", "http://example/inj", config::Direction::Out});
        consumer = "ext.inj";
        break;
    }
    lv.c_a.connections.push_back(config::parse_connection(producer + " -> " + consumer));
    ++by_kind[kind];

    const auto report = config::validate_config(doc, res);
    if (!report.valid && report.has("DEP-01")) {
      ++rejected;
    } else if (first_miss.empty()) {
      first_miss = cat(" first miss: ", producer, " -> ", consumer, " in ", lv.name);
    }
  }
  std::string kinds;
  for (const auto& [k, n] : by_kind) kinds += cat(kinds.empty() ? "" : ", ", k, "=", n);
  return {rejected == kCases && base_invalid == 0,
          cat(rejected, "/", kCases, " rejected with DEP-01 (", kinds, "); ", base_invalid, " invalid bases",
              first_miss)};
}

// ---------------------------------------------------------------------------
// 3. lifecycle state machine

enum class Op { Execute, Save, Restore, Evolve, Analyse, Terminate };

/// Reference transition table for a single leaf instance.
struct Expect {
  std::optional<Errc> error;
  Phase next;
};

Expect reference(Op op, Phase p, bool own_snapshot) {
  const Expect bad{Errc::InvalidTransition, p};
  switch (op) {
    case Op::Execute: return p == Phase::Created ? Expect{std::nullopt, Phase::Executing} : bad;
    case Op::Save: return p == Phase::Executing ? Expect{std::nullopt, p} : bad;
    case Op::Restore:
      if (p != Phase::Terminated) return bad;
      return own_snapshot ? Expect{std::nullopt, Phase::Created} : Expect{Errc::UnknownSnapshot, p};
    case Op::Evolve: return p != Phase::Terminated ? Expect{std::nullopt, p} : bad;
    case Op::Analyse: return p == Phase::Executing ? Expect{std::nullopt, p} : bad;
    case Op::Terminate: return p != Phase::Terminated ? Expect{std::nullopt, Phase::Terminated} : bad;
  }
  return bad;
}

struct TreeNode {
  InstanceId id;
  std::vector<std::size_t> children;  // indices into the forest
};

struct ModelState {
  Phase phase = Phase::Created;
  std::size_t snapshots = 0;
  config::ConfigDoc config;
};

config::ConfigDoc random_tree(test::Gen& g, const test::BasicAssets& a, const std::string& name, int depth) {
  auto doc = test::Stack::leaf(a, name);
  if (depth < 4) {
    const auto n = g.chance(0.55) ? g.range(1, 3) : 0;
    for (std::int64_t i = 0; i < n; ++i) {
      const auto child = name + "." + std::to_string(i);
      doc.c_a.child_dts.push_back(child);
      doc.children.push_back(random_tree(g, a, child, depth + 1));
    }
  }
  return doc;
}

Outcome lifecycle_machine() {
  std::size_t divergences = 0;
  std::string first;
  auto diverge = [&](const std::string& what) {
    if (divergences++ == 0) first = " first: " + what;
  };

  // flat sequences against the table
  constexpr int kSequences = 10000;
  std::size_t ops = 0;
  {
    test::Stack s({1'000'000, 1ll << 40});
    const auto a = s.register_basic();
    test::Gen gen(31337);
    const auto foreign = s.engine.create_dt(test::Stack::leaf(a, "foreign"), "alice").id;
    s.engine.execute_dt(foreign);
    const auto foreign_snap = s.engine.save_dt(foreign);
    s.engine.terminate_dt(foreign);

    for (int seq = 0; seq < kSequences; ++seq) {
      const auto n_inst = gen.range(1, 3);
      std::vector<InstanceId> ids;
      std::vector<std::vector<SnapshotId>> snaps;
      std::vector<Phase> model;
      for (std::int64_t i = 0; i < n_inst; ++i) {
        ids.push_back(s.engine.create_dt(test::Stack::leaf(a, cat("s", seq, "-", i)), "alice").id);
        snaps.emplace_back();
        model.push_back(Phase::Created);
      }
      const auto len = gen.range(1, 12);
      for (std::int64_t step = 0; step < len; ++step) {
        const auto k = static_cast<std::size_t>(gen.range(0, n_inst - 1));
        const auto& id = ids[k];
        const auto op = static_cast<Op>(gen.range(0, 5));
        const bool own = op == Op::Restore && !snaps[k].empty() && gen.chance(0.7);
        const auto want = reference(op, model[k], own);
        std::optional<Errc> got;
        try {
          switch (op) {
            case Op::Execute: s.engine.execute_dt(id); break;
            case Op::Save: snaps[k].push_back(s.engine.save_dt(id)); break;
            case Op::Restore: s.engine.restore_dt(id, own ? gen.pick(snaps[k]) : foreign_snap); break;
            case Op::Evolve: {
              auto next = *s.engine.get(id).config;
              next.c_a.parameters["gain"] = static_cast<double>(step + 2);
              s.engine.evolve_dt(id, next);
              break;
            }
            case Op::Analyse: s.engine.analyse_dt(id); break;
            case Op::Terminate: s.engine.terminate_dt(id); break;
          }
        } catch (const Error& e) {
          got = e.code();
        }
        ++ops;
        if (got != want.error) {
          diverge(cat("seq ", seq, " op ", static_cast<int>(op), " got ", got ? errc_name(*got) : "ok"));
        }
        model[k] = want.next;
        for (std::size_t i = 0; i < ids.size(); ++i) {
          const auto v = s.engine.get(ids[i]);
          if (v.phase != model[i]) diverge(cat("seq ", seq, " phase of ", ids[i].str()));
          if (v.snapshots.size() != snaps[i].size()) diverge(cat("seq ", seq, " snapshots of ", ids[i].str()));
        }
        std::size_t executing = 0;
        for (auto p : model) executing += p == Phase::Executing;
        if (s.exec.active_count() != executing) diverge(cat("seq ", seq, " active workspaces"));
      }
      for (std::size_t i = 0; i < ids.size(); ++i) {
        if (model[i] != Phase::Terminated) s.engine.terminate_dt(ids[i]);
      }
    }
  }

  // hierarchical propagation on random trees
  std::size_t tree_ops = 0, max_nodes = 0;
  {
    test::Stack s({1'000'000, 1ll << 40});
    const auto a = s.register_basic();
    test::Gen gen(777);
    std::vector<TreeNode> forest;
    std::map<InstanceId, ModelState> model;

    auto check_all = [&](const std::string& ctx) {
      std::size_t executing = 0;
      for (const auto& [id, m] : model) {
        const auto v = s.engine.get(id);
        if (v.phase != m.phase) diverge(ctx + " phase of " + id.str());
        if (v.snapshots.size() != m.snapshots) diverge(ctx + " snapshots of " + id.str());
        if (!(*v.config == m.config)) diverge(ctx + " config of " + id.str());
        executing += m.phase == Phase::Executing;
      }
      if (s.exec.active_count() != executing) diverge(ctx + " active workspaces");
    };
    // maps a created tree onto the forest, recording each node's own doc
    std::function<std::size_t(const InstanceId&, const config::ConfigDoc&)> adopt =
        [&](const InstanceId& id, const config::ConfigDoc& doc) {
          const auto v = s.engine.get(id);
          const auto idx = forest.size();
          forest.push_back({id, {}});
          model[id] = {Phase::Created, 0, doc};
          if (v.children.size() != doc.children.size()) diverge("child count of " + id.str());
          for (std::size_t i = 0; i < v.children.size() && i < doc.children.size(); ++i) {
            const auto c = adopt(v.children[i], doc.children[i]);
            forest[idx].children.push_back(c);
          }
          return idx;
        };
    std::function<void(std::size_t, std::vector<std::size_t>&)> subtree = [&](std::size_t i,
                                                                              std::vector<std::size_t>& out) {
      out.push_back(i);
      for (auto c : forest[i].children) subtree(c, out);
    };
    std::function<void(std::size_t, const config::ConfigDoc&)> set_configs = [&](std::size_t i,
                                                                                 const config::ConfigDoc& doc) {
      model[forest[i].id].config = doc;
      for (std::size_t k = 0; k < forest[i].children.size(); ++k) set_configs(forest[i].children[k], doc.children[k]);
    };

    for (int t = 0; t < 60; ++t) {
      const auto doc = random_tree(gen, a, "tree" + std::to_string(t), 1);
      const auto id = s.engine.create_dt(doc, "alice").id;
      const auto before = forest.size();
      adopt(id, doc);
      max_nodes = std::max(max_nodes, forest.size() - before);
      check_all(cat("create tree", t));

      for (int step = 0; step < 30; ++step) {
        const auto x = static_cast<std::size_t>(gen.range(0, static_cast<std::int64_t>(forest.size()) - 1));
        const auto& xid = forest[x].id;
        std::vector<std::size_t> sub;
        subtree(x, sub);
        const auto op = gen.range(0, 4);
        std::optional<Errc> want;
        std::optional<Errc> got;
        const auto px = model[xid].phase;
        switch (op) {
          case 0: {  // execute
            const bool any_terminated = std::any_of(sub.begin(), sub.end(), [&](std::size_t i) {
              return model[forest[i].id].phase == Phase::Terminated;
            });
            if (px != Phase::Created || any_terminated) want = Errc::InvalidTransition;
            try {
              s.engine.execute_dt(xid);
            } catch (const Error& e) {
              got = e.code();
            }
            if (!want) {
              for (auto i : sub) {
                auto& m = model[forest[i].id];
                if (m.phase == Phase::Created) m.phase = Phase::Executing;
              }
            }
            break;
          }
          case 1: {  // save
            const bool all_exec = std::all_of(sub.begin(), sub.end(), [&](std::size_t i) {
              return model[forest[i].id].phase == Phase::Executing;
            });
            if (!all_exec) want = Errc::InvalidTransition;
            try {
              s.engine.save_dt(xid);
            } catch (const Error& e) {
              got = e.code();
            }
            if (!want) {
              for (auto i : sub) ++model[forest[i].id].snapshots;
            }
            break;
          }
          case 2: {  // analyse
            if (px != Phase::Executing) want = Errc::InvalidTransition;
            try {
              s.engine.analyse_dt(xid);
            } catch (const Error& e) {
              got = e.code();
            }
            break;
          }
          case 3: {  // evolve
            if (px == Phase::Terminated) want = Errc::InvalidTransition;
            auto next = model[xid].config;
            next.c_a.parameters["gain"] = static_cast<double>(100 + step);
            try {
              s.engine.evolve_dt(xid, next);
            } catch (const Error& e) {
              got = e.code();
            }
            if (!want) set_configs(x, next);
            break;
          }
          default: {  // terminate
            if (px == Phase::Terminated) want = Errc::InvalidTransition;
            try {
              s.engine.terminate_dt(xid);
            } catch (const Error& e) {
              got = e.code();
            }
            if (!want) {
              for (auto i : sub) model[forest[i].id].phase = Phase::Terminated;
            }
            break;
          }
        }
        ++tree_ops;
        if (got != want) diverge(cat("tree op ", op, " on ", xid.str(), " got ", got ? errc_name(*got) : "ok"));
        check_all(cat("tree op ", op, " on ", xid.str()));
      }
    }
  }

  return {divergences == 0, cat(kSequences, " sequences (", ops, " ops), ", tree_ops, " tree ops on up to ", max_nodes,
                                "-node trees, ", divergences, " divergences", first)};
}

// ---------------------------------------------------------------------------
// 4. mapping completeness

void walk_nodes(const config::ConfigDoc& doc, const std::string& level, std::set<std::string>& out) {
  out.insert("dt:" + level);
  auto asset = [&](const AssetId& id) { out.insert("asset:" + id.str()); };
  for (const auto& id : doc.c_a.data) asset(id);
  for (const auto& id : doc.c_a.models) asset(id);
  for (const auto& id : doc.c_a.ready_dts) asset(id);
  for (const auto& p : doc.c_a.ft_pairs) {
    if (p.function) asset(*p.function);
    if (p.tool) asset(*p.tool);
  }
  for (const auto& [name, value] : doc.c_a.parameters) out.insert("param:" + level + ":" + name);
  for (const auto& ch : doc.c_pt.channels) out.insert("chan:" + level + ":" + ch.name);
  for (const auto& ep : doc.c_e.endpoints) out.insert("ep:" + level + ":" + ep.name);
  for (const auto& c : doc.children) walk_nodes(c, level + "/" + c.name, out);
}

Outcome mapping_completeness() {
  const auto res = test::standard_resolver();
  test::Gen gen(500);
  int equal = 0, invalid = 0, unstable = 0;
  std::size_t nodes = 0;
  std::string first;
  for (int i = 0; i < 500; ++i) {
    const auto doc = test::random_doc(gen, "map" + std::to_string(i), 3);
    if (!config::validate_config(doc, res).valid) {
      ++invalid;
      continue;
    }
    const auto g = graph::map_config(doc, res);
    std::set<std::string> expected;
    walk_nodes(doc, doc.name, expected);
    std::set<std::string> got;
    for (const auto& [id, node] : g.nodes()) got.insert(id);
    nodes += got.size();
    if (got == expected) {
      ++equal;
    } else if (first.empty()) {
      first = " first mismatch in " + doc.name;
    }
    const auto copy = doc;
    const auto c0 = g.canonical();
    if (c0 != g.canonical() || c0 != graph::map_config(doc, res).canonical() ||
        c0 != graph::map_config(copy, res).canonical()) {
      ++unstable;
    }
  }
  return {equal == 500 && invalid == 0 && unstable == 0,
          cat(equal, "/500 node sets equal (", nodes, " nodes), ", invalid, " invalid docs, ", unstable,
              " unstable serializations", first)};
}

// ---------------------------------------------------------------------------
// 5. data-hub durability

std::vector<datahub::SeriesPoint> durability_points(std::uint64_t seed) {
  test::Gen g(seed);
  std::vector<datahub::SeriesPoint> pts;
  pts.reserve(100'000);
  for (int i = 0; i < 100'000; ++i) {
    datahub::SeriesPoint p;
    p.key = "plant." + std::to_string(g.range(0, 49)) + ".v";
    p.ts = g.range(-1'000'000, 1'000'000);
    double v;
    do {
      const auto bits = g.next();
      std::memcpy(&v, &bits, sizeof v);
    } while (!std::isfinite(v));
    p.value = v;
    pts.push_back(std::move(p));
  }
  return pts;
}

Outcome hub_durability() {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr std::uint64_t kSeed = 5150;
  test::TempDir dir;
  const auto root = dir / "hub";

  std::cout.flush();
  const pid_t pid = fork();
  if (pid < 0) return {false, "fork failed"};
  if (pid == 0) {
    ManualClock clock(0);
    datahub::DataHub hub(root, clock);
    test::Gen g(kSeed + 1);
    const auto pts = durability_points(kSeed);
    // mix single appends and batches of random size
    std::size_t i = 0;
    while (i < pts.size()) {
      const auto n = std::min<std::size_t>(pts.size() - i, static_cast<std::size_t>(g.range(1, 64)));
      if (n == 1) {
        hub.append_point(pts[i]);
      } else {
        hub.append_batch({pts.begin() + static_cast<std::ptrdiff_t>(i), pts.begin() + static_cast<std::ptrdiff_t>(i + n)});
      }
      i += n;
    }
    raise(SIGKILL);
    _exit(0);
  }
  int status = 0;
  waitpid(pid, &status, 0);
  const bool killed = WIFSIGNALED(status) && WTERMSIG(status) == SIGKILL;

  // the oracle: stable sort by timestamp keeps insertion order on ties
  auto pts = durability_points(kSeed);
  std::map<std::string, std::vector<datahub::SeriesPoint>> oracle;
  for (const auto& p : pts) oracle[p.key].push_back(p);
  for (auto& [k, v] : oracle) {
    std::stable_sort(v.begin(), v.end(), [](const auto& x, const auto& y) { return x.ts < y.ts; });
  }

  ManualClock clock(0);
  datahub::DataHub hub(root, clock);
  std::size_t compared = 0, mismatched_queries = 0, queries = 0;
  test::Gen g(kSeed + 2);
  auto compare = [&](const std::string& key, std::int64_t a, std::int64_t b) {
    std::vector<datahub::SeriesPoint> want;
    for (const auto& p : oracle[key]) {
      if (p.ts >= a && p.ts <= b) want.push_back(p);
    }
    const auto got = hub.query_range(key, a, b);
    ++queries;
    bool same = got.size() == want.size();
    for (std::size_t i = 0; same && i < got.size(); ++i) {
      same = got[i].key == want[i].key && got[i].ts == want[i].ts &&
             std::memcmp(&got[i].value, &want[i].value, sizeof(double)) == 0;
    }
    compared += got.size();
    if (!same) ++mismatched_queries;
  };
  for (const auto& [key, v] : oracle) {
    compare(key, std::numeric_limits<std::int64_t>::min(), std::numeric_limits<std::int64_t>::max());
    for (int q = 0; q < 20; ++q) {
      auto a = g.range(-1'100'000, 1'100'000), b = g.range(-1'100'000, 1'100'000);
      if (a > b) std::swap(a, b);
      compare(key, a, b);
    }
  }
  const bool keys_ok = hub.series_keys().size() == oracle.size();
  const double secs = seconds_since(t0);
  return {killed && keys_ok && mismatched_queries == 0 && oracle.size() == 50 && secs < 60.0,
          cat(pts.size(), " points over ", oracle.size(), " series, writer ", killed ? "SIGKILLed" : "NOT killed", ", ",
              queries, " queries (", compared, " points) with ", mismatched_queries, " mismatches")};
}

// ---------------------------------------------------------------------------
// 6. incubator physics

Outcome incubator_physics() {
  using namespace incubator;
  test::Gen gen(66);
  double worst_ss = 0.0;
  int non_monotone = 0;
  std::vector<PlantParams> sets = {PlantParams{}};
  for (int i = 0; i < 20; ++i) {
    PlantParams p;
    p.heat_capacity = gen.real(100, 1000);
    p.conductance_closed = gen.real(0.5, 5);
    p.conductance_open = p.conductance_closed * gen.real(2, 6);
    p.heater_power = gen.real(50, 300);
    p.ambient = gen.real(10, 30);
    p.sensor_noise_std = 0.0;
    sets.push_back(p);
  }
  for (const auto& p : sets) {
    const double analytic = p.ambient + p.heater_power / p.conductance_closed;
    IncubatorState s;
    s.t_box = p.ambient;
    s.heater_on = true;
    // 40 time constants
    const auto steps = static_cast<int>(40.0 * p.heat_capacity / p.conductance_closed / 0.1);
    for (int i = 0; i < steps; ++i) s = plant_step(s, p, 100);
    worst_ss = std::max(worst_ss, std::abs(s.t_box - analytic) / std::abs(analytic));

    for (bool lid : {false, true}) {
      IncubatorState d;
      d.t_box = analytic;
      d.heater_on = false;
      d.lid_open = lid;
      double prev = d.t_box;
      for (int i = 0; i < 20000; ++i) {
        d = plant_step(d, p, 100);
        const bool strict = prev - p.ambient > 1e-9;
        if (d.t_box > prev || (strict && d.t_box == prev) || d.t_box < p.ambient) {
          ++non_monotone;
          break;
        }
        prev = d.t_box;
      }
    }
  }

  auto trace = [](std::uint64_t seed) {
    test::TempDir dir;
    ManualClock clock(0);
    datahub::DataHub hub(dir / "hub", clock);
    EmulatorOptions o;
    o.plant.sensor_noise_std = 0.05;
    o.initial.t_box = 25.0;
    o.seed = seed;
    PtEmulator emu(hub, o, 0);
    emu.run(1500);
    emu.set_lid(true);
    emu.run(500);
    emu.set_lid(false);
    emu.run(1000);
    std::vector<double> out;
    for (const auto* ch : {"t_box", "heater", "lid"}) {
      for (const auto& pt : hub.query_range(emu.series(ch), 0, std::numeric_limits<std::int64_t>::max())) {
        out.push_back(static_cast<double>(pt.ts));
        out.push_back(pt.value);
      }
    }
    return out;
  };
  const auto a = trace(9), b = trace(9), c = trace(10);
  const bool identical = a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
  const bool differs = a != c;
  return {worst_ss < 1e-3 && non_monotone == 0 && identical && differs && !a.empty(),
          cat(sets.size(), " plants: worst steady-state error ", worst_ss * 100, "%, ", non_monotone,
              " non-monotone decays; same seed ", identical ? "identical" : "DIFFERENT", " (", a.size() / 2,
              " samples), other seed ", differs ? "differs" : "IDENTICAL")};
}

// ---------------------------------------------------------------------------
// 7. estimator

struct EstimatorRun {
  double rel_error = 0.0;
  std::uint64_t updates = 0;
};

/// Closed loop on the true plant, feeding sensed readings to the sampler
/// and estimator until `want_updates` accepted updates.
EstimatorRun estimate(const incubator::PlantParams& p, const incubator::ControllerParams& c, double t_init,
                      std::size_t stride, std::uint64_t want_updates, std::uint64_t seed) {
  using namespace incubator;
  EstimatorParams ep;
  ep.heat_capacity = p.heat_capacity;
  ep.heater_power = p.heater_power;
  ep.ambient = p.ambient;
  ep.forgetting = 1.0;
  auto e = EstimatorState::initial(ep);
  StrideSampler sampler(stride, p.ambient);
  std::mt19937_64 rng(seed);
  IncubatorState s;
  s.t_box = t_init;
  const std::int64_t dt = 100;
  for (std::uint64_t i = 0; e.updates < want_updates && i < 50'000'000; ++i) {
    const double sensed = sense(s, p, rng);
    s.heater_on = controller_step(sensed, c, s.heater_on);
    if (auto obs = sampler.push(s.t_ms, sensed, s.heater_on)) e = estimator_update(e, ep, *obs);
    s = plant_step(s, p, dt);
  }
  return {std::abs(e.g_hat - p.conductance_closed) / p.conductance_closed, e.updates};
}

Outcome estimator_accuracy() {
  using namespace incubator;
  test::Gen gen(707);
  double worst_clean = 0.0;
  int clean_fail = 0;
  for (int i = 0; i < 50; ++i) {
    PlantParams p;
    p.heat_capacity = gen.real(100, 1000);
    p.conductance_closed = gen.real(0.5, 5);
    p.conductance_open = p.conductance_closed * gen.real(2, 6);
    p.heater_power = gen.real(50, 300);
    p.ambient = gen.real(10, 30);
    p.sensor_noise_std = 0.0;
    ControllerParams c;
    c.setpoint = p.ambient + gen.real(0.3, 0.7) * p.heater_power / p.conductance_closed;
    c.band = gen.real(0.2, 1.0);
    const auto r = estimate(p, c, p.ambient + 1.0, 1, 500, 1);
    worst_clean = std::max(worst_clean, r.rel_error);
    if (!(r.rel_error < 0.01) || r.updates < 500) ++clean_fail;
  }

  double worst_noisy = 0.0;
  int noisy_fail = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    PlantParams p;
    p.sensor_noise_std = 0.1;
    const auto r = estimate(p, ControllerParams{}, 35.0, 50, 2000, seed);
    worst_noisy = std::max(worst_noisy, r.rel_error);
    if (!(r.rel_error < 0.05) || r.updates < 2000) ++noisy_fail;
  }
  return {clean_fail == 0 && noisy_fail == 0,
          cat("noiseless: 50 plants, worst ", worst_clean * 100, "% after 500 updates; noise 0.1: 10 seeds, worst ",
              worst_noisy * 100, "% after 2000 updates (stride 50)")};
}

// ---------------------------------------------------------------------------
// 8. closed loop

/// Lid-open to back-in-band horizon of the reference run (seed 7), in ms.
constexpr std::int64_t kPinnedHorizonMs = 52000;

Outcome closed_loop() {
  const auto t0 = std::chrono::steady_clock::now();
  test::TempDir dir;
  incubator::IncubatorStack stack(dir.path(), 7);
  stack.start();
  incubator::ScenarioOptions o;
  o.ticks = 3000;
  o.lid_open_at_ms = 60000;
  const auto r = stack.run(o);
  const double secs = seconds_since(t0);
  if (!r.detected_at_ms || !r.rule_applied_at_ms || !r.reentered_at_ms) {
    return {false, cat("detected=", r.detected_at_ms.has_value(), " rule=", r.rule_applied_at_ms.has_value(),
                       " reentered=", r.reentered_at_ms.has_value())};
  }
  const auto horizon = *r.reentered_at_ms - *r.lid_open_at_ms;
  const double lo = 0.9 * kPinnedHorizonMs, hi = 1.1 * kPinnedHorizonMs;
  const bool in_band = horizon >= lo && horizon <= hi;
  const bool ordered = *r.detected_at_ms > *r.lid_open_at_ms && *r.rule_applied_at_ms >= *r.detected_at_ms;
  const bool model_open = r.g_hat && *r.g_hat > 5.0;
  return {in_band && ordered && r.error_events == 0 && secs < 120.0,
          cat("lid open at ", *r.lid_open_at_ms, " ms, detected ", *r.detected_at_ms, ", rule applied ",
              *r.rule_applied_at_ms, ", back in band ", *r.reentered_at_ms, "; horizon ", horizon, " ms vs pinned ",
              kPinnedHorizonMs, " +-10%; G_hat ", r.g_hat ? *r.g_hat : -1.0, model_open ? "" : " (closed-lid value)",
              "; ", secs, " s wall")};
}

// ---------------------------------------------------------------------------
// 9. what-if

double param(const config::ConfigDoc& doc, const std::string& name) {
  return std::get<double>(doc.c_a.parameters.at(name));
}

/// Independent Euler simulation of one candidate.
double simulate_mse(double c, double g, double p, double amb, double t0, bool heater, double setpoint, double band,
                    double target, std::int64_t steps, double dt_s) {
  double t = t0;
  double ss = 0.0;
  for (std::int64_t i = 0; i < steps; ++i) {
    if (t < setpoint - band) heater = true;
    if (t > setpoint + band) heater = false;
    t += dt_s / c * ((heater ? p : 0.0) - g * (t - amb));
    ss += (t - target) * (t - target);
  }
  return ss / static_cast<double>(steps);
}

Outcome whatif_ranking() {
  test::TempDir dir;
  incubator::IncubatorStack stack(dir.path(), 11);
  const auto id = stack.start();
  incubator::ScenarioOptions o;
  o.ticks = 1500;
  stack.run(o);

  const auto& doc = *stack.engine().get(id).config;
  const auto owner = stack.engine().get(id).owner;
  const auto heater = stack.hub().latest(stack.emulator().series("heater"));
  const auto usage0 = stack.exec().usage_report(owner);
  const auto active0 = stack.exec().active_count();
  const auto instances0 = stack.engine().list().size();

  const std::int64_t horizon = 300'000;
  const std::vector<incubator::ControllerParams> cands = {{35.0, 0.5}, {35.0, 5.0}};
  const auto result = incubator::run_whatif(stack.engine(), id, cands, horizon);

  const auto usage1 = stack.exec().usage_report(owner);
  const auto tick_ms = doc.c_i.tick_ms;
  const auto steps = (horizon + tick_ms - 1) / tick_ms;
  const double target = param(doc, "setpoint");
  std::vector<std::pair<double, std::size_t>> oracle;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    oracle.emplace_back(simulate_mse(param(doc, "heat_capacity"), result.g_hat, param(doc, "heater_power"),
                                     param(doc, "ambient"), result.t_start, heater && heater->value > 0.5,
                                     cands[i].setpoint, cands[i].band, target, steps, tick_ms / 1000.0),
                        i);
  }
  std::sort(oracle.begin(), oracle.end());

  bool ranking = result.ranked.size() == 2 && result.rejected.empty() && result.target == target;
  double worst_rel = 0.0;
  for (std::size_t k = 0; ranking && k < 2; ++k) {
    ranking = result.ranked[k].index == oracle[k].second;
    worst_rel = std::max(worst_rel, std::abs(result.ranked[k].score - oracle[k].first) / oracle[k].first);
  }
  const bool scores = worst_rel < 1e-9;
  const auto dticks = usage1.ticks - usage0.ticks;
  const auto dprov = usage1.workspaces_provisioned - usage0.workspaces_provisioned;
  const auto drel = usage1.workspaces_released - usage0.workspaces_released;
  const bool ledger = dticks == static_cast<std::uint64_t>(2 * steps) && dprov == 2 && drel == 2 &&
                      stack.exec().active_count() == active0 && stack.engine().list().size() == instances0;
  return {ranking && scores && ledger,
          cat("band 0.5 MSE ", oracle[0].second == 0 ? oracle[0].first : oracle[1].first, ", band 5.0 MSE ",
              oracle[0].second == 1 ? oracle[0].first : oracle[1].first, ", ranking ",
              ranking ? "matches" : "DIFFERS", ", worst score rel. error ", worst_rel, "; ledger: +", dticks,
              " ticks (expected ", 2 * steps, "), +", dprov, " provisioned, +", drel, " released, active ",
              stack.exec().active_count(), "/", active0)};
}

// ---------------------------------------------------------------------------
// 10. HTTP API

struct Http {
  explicit Http(const std::string& addr) : cli("http://" + addr) {}

  std::pair<int, json> send(const std::string& method, const std::string& path, const json& body = nullptr,
                            const std::string& token = test::kDevToken) {
    httplib::Headers h;
    if (!token.empty()) h.emplace("Authorization", "Bearer " + token);
    const auto text = body.is_null() ? std::string() : body.dump();
    httplib::Result r;
    if (method == "GET") {
      r = cli.Get(path, h);
    } else if (method == "POST") {
      r = cli.Post(path, h, text, "application/json");
    } else if (method == "PATCH") {
      r = cli.Patch(path, h, text, "application/json");
    } else if (method == "PUT") {
      r = cli.Put(path, h, text, "application/json");
    } else {
      r = cli.Delete(path, h);
    }
    if (!r) return {0, nullptr};
    return {r->status, json::parse(r->body, nullptr, false)};
  }

  httplib::Client cli;
};

bool allowed_by_matrix(gateway::Role role, gateway::Access access) {
  using gateway::Access;
  switch (role) {
    case gateway::Role::Viewer: return access == Access::Public || access == Access::Read;
    case gateway::Role::Developer: return access != Access::UsageOther && access != Access::Admin;
    case gateway::Role::Admin: return true;
  }
  return false;
}

std::string fill_pattern(const std::string& pattern) {
  std::string out;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] == '{') {
      i = pattern.find('}', i);
      out += "placeholder";
    } else {
      out += pattern[i];
    }
  }
  return out;
}

Outcome http_api() {
  test::ServedFixture f(3);
  Http http(f.addr());
  std::vector<std::string> steps;
  bool ok = true;
  auto expect = [&](const std::string& name, int got, int want) {
    steps.push_back(cat(name, "=", got));
    if (got != want) ok = false;
  };

  auto [st, body] = http.send("POST", "/dts", {{"config_text", std::string(incubator::incubator_config_text())}});
  expect("create", st, 201);
  const auto id = body.is_object() && body.contains("id") ? body["id"].get<std::string>() : std::string("missing");
  const auto base = "/dts/" + id;
  expect("execute", http.send("POST", base + "/execute").first, 200);
  f.platform.step(1500);
  expect("save", http.send("POST", base + "/save").first, 201);
  auto cfg = http.send("GET", base).second.value("config", json::object());
  cfg["c_a"]["parameters"]["band"] = 0.4;
  expect("evolve", http.send("POST", base + "/evolve", {{"config", cfg}}).first, 200);
  auto [wst, wbody] = http.send("POST", base + "/whatif",
                                {{"candidates", {{{"setpoint", 35.0}, {"band", 0.5}}, {{"setpoint", 35.0}, {"band", 5.0}}}},
                                 {"horizon_ms", 300000}});
  expect("whatif", wst, 200);
  if (!wbody.is_object() || !wbody.contains("ranked") || wbody["ranked"].size() != 2) ok = false;
  expect("terminate", http.send("POST", base + "/terminate").first, 200);
  auto [gst, gbody] = http.send("GET", base);
  if (gst != 200 || gbody.value("phase", "") != "Terminated") ok = false;
  steps.push_back(cat("phase=", gbody.value("phase", "?")));

  // error statuses
  expect("no-token", http.send("GET", "/dts", nullptr, "").first, 401);
  expect("bad-token", http.send("GET", "/dts", nullptr, "nope").first, 401);
  expect("viewer-create", http.send("POST", "/dts", json::object(), test::kViewerToken).first, 403);
  auto [ost, obody] = http.send("POST", "/dts", {{"config_text", std::string(incubator::incubator_config_text())}});
  const auto other = obody.is_object() && obody.contains("id") ? obody["id"].get<std::string>() : std::string("missing");
  expect("non-owner", http.send("POST", "/dts/" + other + "/execute", json::object(), test::kBobToken).first, 403);
  expect("unknown-id", http.send("GET", "/dts/dt-9999").first, 404);
  expect("terminate-twice", http.send("POST", base + "/terminate").first, 409);
  auto bad = http.send("GET", "/dts/" + other).second.value("config", json::object());
  bad["c_a"]["parameters"]["band"] = -1.0;
  expect("invalid-evolve", http.send("POST", "/dts/" + other + "/evolve", {{"config", bad}}).first, 422);
  expect("wrong-method", http.send("PUT", "/dts").first, 405);
  expect("health", http.send("GET", "/health", nullptr, "").first, 200);

  // RBAC matrix over every route and role
  const std::vector<std::pair<gateway::Role, std::string>> roles = {{gateway::Role::Viewer, test::kViewerToken},
                                                                    {gateway::Role::Developer, test::kDevToken},
                                                                    {gateway::Role::Admin, test::kAdminToken}};
  std::set<std::pair<int, int>> pairs_seen;
  int rbac_wrong = 0, server_errors = 0, requests = 0;
  std::string first_wrong;
  for (const auto& route : f.gateway.routes()) {
    for (const auto& [role, token] : roles) {
      const auto [status, resp] = http.send(route.method, fill_pattern(route.pattern),
                                            route.method == "GET" || route.method == "DELETE" ? json() : json::object(),
                                            token);
      ++requests;
      const bool want = allowed_by_matrix(role, route.access);
      if ((status != 403) != want) {
        if (rbac_wrong++ == 0) first_wrong = cat(" first: ", route.method, " ", route.pattern, " -> ", status);
      }
      if (status >= 500 || status == 0) ++server_errors;
      pairs_seen.emplace(static_cast<int>(role), static_cast<int>(route.access));
    }
  }
  for (const auto& [role, token] : roles) {
    const auto status = http.send("GET", "/usage?user=someone-else", nullptr, token).first;
    ++requests;
    if ((status != 403) != allowed_by_matrix(role, gateway::Access::UsageOther)) ++rbac_wrong;
    pairs_seen.emplace(static_cast<int>(role), static_cast<int>(gateway::Access::UsageOther));
  }
  const bool matrix = rbac_wrong == 0 && server_errors == 0 && pairs_seen.size() == 15;
  std::string seq;
  for (const auto& s : steps) seq += (seq.empty() ? "" : " ") + s;
  return {ok && matrix, cat(seq, "; RBAC ", pairs_seen.size(), "/15 (role, class) pairs over ", requests,
                            " requests, ", rbac_wrong, " wrong, ", server_errors, " 5xx", first_wrong)};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"grammar oracle equivalence", grammar_equivalence},
      {"dependency rule", dependency_rule},
      {"lifecycle state machine", lifecycle_machine},
      {"mapping completeness", mapping_completeness},
      {"data-hub durability", hub_durability},
      {"incubator physics", incubator_physics},
      {"estimator accuracy", estimator_accuracy},
      {"anomaly and closed loop", closed_loop},
      {"what-if ranking", whatif_ranking},
      {"end-to-end HTTP API", http_api},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    failed += !o.pass;
    std::cout << "C" << (i + 1) << " " << (o.pass ? "PASS" : "FAIL") << " " << criteria[i].first << ": " << o.detail
              << " (" << secs << " s)" << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : cat(failed, " criteria failed")) << std::endl;
  return failed == 0 ? 0 : 1;
}
