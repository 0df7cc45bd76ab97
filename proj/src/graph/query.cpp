#include "dtaas/graph/query.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "dtaas/common/error.hpp"

namespace dtaas::graph {

using nlohmann::json;

const NodePattern* GraphQuery::node(std::string_view var) const {
  for (const auto& n : nodes) {
    if (n.var == var) return &n;
  }
  return nullptr;
}

namespace {

enum class Tok { Ident, String, Number, Punct, End };

struct Token {
  Tok kind;
  std::string text;
  std::size_t pos;
};

std::vector<Token> lex(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto fail = [&](const std::string& what) {
    throw Error(Errc::MalformedQuery, what + " at offset " + std::to_string(i));
  };
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const auto start = i;
      while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_')) ++i;
      out.push_back({Tok::Ident, std::string(s.substr(start, i - start)), start});
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      const auto start = i;
      while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '.' ||
                              ((s[i] == '-' || s[i] == '+') && (s[i - 1] == 'e' || s[i - 1] == 'E')))) {
        ++i;
      }
      out.push_back({Tok::Number, std::string(s.substr(start, i - start)), start});
    } else if (c == '"') {
      const auto start = i++;
      std::string text;
      while (i < s.size() && s[i] != '"') {
        if (s[i] == '\\' && i + 1 < s.size()) ++i;
        text += s[i++];
      }
      if (i >= s.size()) fail("unterminated string");
      ++i;
      out.push_back({Tok::String, std::move(text), start});
    } else if (s.substr(i, 2) == "->" || s.substr(i, 2) == "<-") {
      out.push_back({Tok::Punct, std::string(s.substr(i, 2)), i});
      i += 2;
    } else if (std::string_view("()[]{}:,.|=-").find(c) != std::string_view::npos) {
      out.push_back({Tok::Punct, std::string(1, c), i});
      ++i;
    } else {
      fail(std::string("unexpected character '") + c + "'");
    }
  }
  out.push_back({Tok::End, {}, s.size()});
  return out;
}

bool keyword(const Token& t, std::string_view kw) {
  if (t.kind != Tok::Ident || t.text.size() != kw.size()) return false;
  for (std::size_t i = 0; i < kw.size(); ++i) {
    if (std::toupper(static_cast<unsigned char>(t.text[i])) != kw[i]) return false;
  }
  return true;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : toks_(lex(text)) { q_.text = std::string(text); }

  GraphQuery parse() {
    if (!keyword(peek(), "MATCH")) fail("expected MATCH");
    next();
    pattern();
    while (accept(",")) pattern();
    if (keyword(peek(), "WHERE")) {
      next();
      condition();
      while (keyword(peek(), "AND")) {
        next();
        condition();
      }
    }
    if (keyword(peek(), "RETURN")) {
      next();
      do {
        const auto var = ident("variable");
        if (!q_.node(var)) fail("RETURN of unbound variable '" + var + "'");
        q_.returns.push_back(var);
      } while (accept(","));
    } else {
      for (const auto& n : q_.nodes) {
        if (n.var[0] != '_') q_.returns.push_back(n.var);
      }
    }
    if (peek().kind != Tok::End) fail("unexpected '" + peek().text + "'");
    return std::move(q_);
  }

 private:
  const Token& peek() const { return toks_[pos_]; }
  const Token& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
  bool accept(std::string_view punct) {
    if (peek().kind == Tok::Punct && peek().text == punct) {
      next();
      return true;
    }
    return false;
  }
  void expect(std::string_view punct) {
    if (!accept(punct)) fail("expected '" + std::string(punct) + "'");
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(Errc::MalformedQuery, what + " at offset " + std::to_string(peek().pos));
  }
  std::string ident(const char* what) {
    if (peek().kind != Tok::Ident) fail(std::string("expected ") + what);
    return next().text;
  }

  json value() {
    const bool negative = accept("-");
    const auto& t = peek();
    if (t.kind == Tok::Number) {
      next();
      try {
        std::size_t used = 0;
        const double v = std::stod(t.text, &used);
        if (used != t.text.size()) fail("bad number '" + t.text + "'");
        return negative ? -v : v;
      } catch (const std::logic_error&) {
        fail("bad number '" + t.text + "'");
      }
    }
    if (negative) fail("expected number after '-'");
    if (t.kind == Tok::String) return next().text;
    if (keyword(t, "TRUE")) { next(); return true; }
    if (keyword(t, "FALSE")) { next(); return false; }
    fail("expected value");
  }

  NodePattern& declare(const std::string& var) {
    for (auto& n : q_.nodes) {
      if (n.var == var) return n;
    }
    q_.nodes.push_back({var, {}, {}});
    return q_.nodes.back();
  }

  std::string node() {
    expect("(");
    std::string var = peek().kind == Tok::Ident ? next().text : "_" + std::to_string(anon_++);
    std::vector<std::string> labels;
    if (accept(":")) {
      labels.push_back(ident("label"));
      while (accept("|")) labels.push_back(ident("label"));
    }
    std::vector<std::pair<std::string, json>> props;
    if (accept("{")) {
      if (!accept("}")) {
        do {
          auto key = ident("property name");
          expect(":");
          props.emplace_back(std::move(key), value());
        } while (accept(","));
        expect("}");
      }
    }
    expect(")");
    auto& n = declare(var);
    if (!labels.empty()) {
      if (!n.labels.empty() && n.labels != labels) fail("conflicting labels for '" + var + "'");
      n.labels = std::move(labels);
    }
    for (auto& p : props) n.props.push_back(std::move(p));
    return var;
  }

  std::string edge_label() {
    expect("[");
    std::string lbl;
    if (accept(":")) {
      lbl = ident("edge label");
    } else if (peek().kind == Tok::Ident) {
      lbl = next().text;
    }
    expect("]");
    return lbl;
  }

  void pattern() {
    auto left = node();
    while (true) {
      if (accept("-")) {
        auto lbl = edge_label();
        expect("->");
        auto right = node();
        q_.edges.push_back({left, lbl, right});
        left = right;
      } else if (accept("<-")) {
        auto lbl = edge_label();
        expect("-");
        auto right = node();
        q_.edges.push_back({right, lbl, left});
        left = right;
      } else {
        break;
      }
    }
  }

  void condition() {
    const auto var = ident("variable");
    auto* n = const_cast<NodePattern*>(q_.node(var));
    if (!n) fail("WHERE on unbound variable '" + var + "'");
    expect(".");
    auto key = ident("property name");
    expect("=");
    n->props.emplace_back(std::move(key), value());
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  std::size_t anon_ = 0;
  GraphQuery q_;
};

bool node_matches(const Node& n, const NodePattern& p) {
  if (!p.labels.empty() && std::find(p.labels.begin(), p.labels.end(), n.label) == p.labels.end()) return false;
  for (const auto& [k, v] : p.props) {
    auto it = n.props.find(k);
    if (it == n.props.end() || *it != v) return false;
  }
  return true;
}

class Matcher {
 public:
  Matcher(const TwinGraph& g, const GraphQuery& q) : g_(g), q_(q) {}

  std::set<std::vector<std::string>> run(Binding binding) {
    for (const auto& [var, id] : binding) {
      const auto* p = q_.node(var);
      const auto* n = g_.find(id);
      if (p && (!n || !node_matches(*n, *p))) return {};
    }
    solve_edges(0, binding);
    return std::move(rows_);
  }

 private:
  bool bind(Binding& b, const std::string& var, const std::string& id, bool& fresh) {
    auto it = b.find(var);
    if (it != b.end()) {
      fresh = false;
      return it->second == id;
    }
    const auto* n = g_.find(id);
    if (!n || !node_matches(*n, *q_.node(var))) return false;
    b.emplace(var, id);
    fresh = true;
    return true;
  }

  void try_edge(std::size_t i, Binding& b, const Edge& e) {
    const auto& p = q_.edges[i];
    if (!p.label.empty() && e.label != p.label) return;
    bool fresh_src = false, fresh_dst = false;
    if (bind(b, p.src, e.src, fresh_src)) {
      if (bind(b, p.dst, e.dst, fresh_dst)) {
        solve_edges(i + 1, b);
        if (fresh_dst) b.erase(p.dst);
      }
      if (fresh_src) b.erase(p.src);
    }
  }

  void solve_edges(std::size_t i, Binding& b) {
    if (i == q_.edges.size()) {
      solve_nodes(0, b);
      return;
    }
    const auto& p = q_.edges[i];
    const auto src = b.find(p.src);
    const auto dst = b.find(p.dst);
    if (src != b.end()) {
      for (const auto* e : g_.out_edges(src->second)) try_edge(i, b, *e);
    } else if (dst != b.end()) {
      for (const auto* e : g_.in_edges(dst->second)) try_edge(i, b, *e);
    } else {
      for (const auto& e : g_.edges()) try_edge(i, b, e);
    }
  }

  void solve_nodes(std::size_t i, Binding& b) {
    while (i < q_.nodes.size() && b.count(q_.nodes[i].var)) ++i;
    if (i == q_.nodes.size()) {
      std::vector<std::string> row;
      row.reserve(q_.returns.size());
      for (const auto& var : q_.returns) row.push_back(b.at(var));
      rows_.insert(std::move(row));
      return;
    }
    const auto& p = q_.nodes[i];
    for (const auto& [id, n] : g_.nodes()) {
      if (!node_matches(n, p)) continue;
      b.emplace(p.var, id);
      solve_nodes(i + 1, b);
      b.erase(p.var);
    }
  }

  const TwinGraph& g_;
  const GraphQuery& q_;
  std::set<std::vector<std::string>> rows_;
};

}  // namespace

GraphQuery parse_query(std::string_view text) { return Parser(text).parse(); }

std::vector<Binding> run_query(const TwinGraph& g, const GraphQuery& q, const Binding& seed) {
  Binding start;
  for (const auto& [var, id] : seed) {
    if (q.node(var)) start.emplace(var, id);
  }
  std::vector<Binding> out;
  for (const auto& row : Matcher(g, q).run(std::move(start))) {
    Binding b;
    for (std::size_t i = 0; i < row.size(); ++i) b.emplace(q.returns[i], row[i]);
    out.push_back(std::move(b));
  }
  return out;
}

json bindings_to_json(const TwinGraph& g, const std::vector<Binding>& rows) {
  json out = json::array();
  for (const auto& row : rows) {
    json r = json::object();
    for (const auto& [var, id] : row) {
      const auto* n = g.find(id);
      r[var] = {{"id", id}, {"label", n ? n->label : ""}, {"props", n ? n->props : json::object()}};
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace dtaas::graph
