#include "dtaas/graph/consistency.hpp"

namespace dtaas::graph {

using nlohmann::json;

namespace {

std::string describe(const Binding& b) {
  std::string out;
  for (const auto& [var, id] : b) {
    if (!out.empty()) out += ",";
    out += id;
  }
  return out;
}

}  // namespace

ConsistencyReport check_consistency(const TwinGraph& g, const std::vector<ConsistencyQuery>& queries) {
  ConsistencyReport report;
  for (const auto& q : queries) {
    ConsistencyResult r{q.id, true, q.severity, q.message, {}};
    const bool want = q.expectation == Expectation::MustMatch;
    if (q.for_each) {
      for (const auto& seed : run_query(g, *q.for_each, {})) {
        const bool matched = !run_query(g, q.query, seed).empty();
        if (matched != want) r.offenders.push_back(describe(seed));
      }
      r.passed = r.offenders.empty();
    } else {
      r.passed = run_query(g, q.query, {}).empty() != want;
    }
    if (!r.passed && r.severity == config::Severity::Error) report.passed = false;
    report.results.push_back(std::move(r));
  }
  return report;
}

const std::vector<ConsistencyQuery>& builtin_consistency_queries() {
  static const std::vector<ConsistencyQuery> queries = [] {
    std::vector<ConsistencyQuery> q;
    q.push_back({"CHAN-01", parse_query(R"(MATCH (c:Channel {role: "sensor"}) RETURN c)"),
                 parse_query("MATCH (c)-[connects]->(f:Function|Tool) RETURN c"), Expectation::MustMatch,
                 config::Severity::Error, "sensor channel feeds no function or tool"});
    q.push_back({"CHAN-02", parse_query(R"(MATCH (c:Channel {role: "command"}) RETURN c)"),
                 parse_query("MATCH (d:DT)-[contains]->(f:Function|Tool)-[connects]->(c) RETURN c"),
                 Expectation::MustMatch, config::Severity::Error,
                 "command channel is not driven from any DT"});
    q.push_back({"ORPHAN-01", parse_query("MATCH (m:Model|Data) RETURN m"),
                 parse_query("MATCH (f:Function|Tool)-[uses]->(m) RETURN m"), Expectation::MustMatch,
                 config::Severity::Warning, "model or data asset is used by no function or tool"});
    return q;
  }();
  return queries;
}

json to_json(const ConsistencyReport& report) {
  json results = json::array();
  for (const auto& r : report.results) {
    results.push_back({{"id", r.id},
                       {"passed", r.passed},
                       {"severity", r.severity == config::Severity::Error ? "error" : "warning"},
                       {"message", r.message},
                       {"offenders", r.offenders}});
  }
  return {{"passed", report.passed}, {"results", std::move(results)}};
}

}  // namespace dtaas::graph
