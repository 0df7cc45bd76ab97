#include "dtaas/config/diff.hpp"

#include <charconv>

#include "dtaas/common/error.hpp"
#include "dtaas/config/parser.hpp"
#include "dtaas/config/schema.hpp"

namespace dtaas::config {

using nlohmann::json;

namespace {

struct Step {
  std::string key;  // empty for an index step
  std::size_t index = 0;
  bool is_index() const { return key.empty(); }
};

std::vector<Step> split_path(std::string_view path) {
  std::vector<Step> steps;
  std::size_t i = 0;
  auto fail = [&] { throw Error(Errc::UnknownPath, "malformed path '" + std::string(path) + "'"); };
  if (path.empty()) fail();
  while (i < path.size()) {
    const auto end = path.find_first_of(".[", i);
    const auto key = path.substr(i, end == std::string_view::npos ? std::string_view::npos : end - i);
    if (key.empty()) fail();
    steps.push_back({std::string(key), 0});
    i = end == std::string_view::npos ? path.size() : end;
    while (i < path.size() && path[i] == '[') {
      const auto close = path.find(']', i);
      if (close == std::string_view::npos) fail();
      std::size_t idx = 0;
      auto [ptr, ec] = std::from_chars(path.data() + i + 1, path.data() + close, idx);
      if (ec != std::errc() || ptr != path.data() + close || close == i + 1) fail();
      steps.push_back({{}, idx});
      i = close + 1;
    }
    if (i < path.size()) {
      if (path[i] != '.') fail();
      ++i;
      if (i == path.size()) fail();
    }
  }
  return steps;
}

json* locate(json& root, const std::vector<Step>& steps, std::size_t count) {
  json* node = &root;
  for (std::size_t s = 0; s < count; ++s) {
    const auto& step = steps[s];
    if (step.is_index()) {
      if (!node->is_array() || step.index >= node->size()) return nullptr;
      node = &(*node)[step.index];
    } else {
      if (!node->is_object()) return nullptr;
      auto it = node->find(step.key);
      if (it == node->end()) return nullptr;
      node = &*it;
    }
  }
  return node;
}

void diff_json(const json& a, const json& b, const std::string& path, ChangeSet& out) {
  if (a == b) return;
  if (a.is_object() && b.is_object()) {
    for (const auto& [k, v] : a.items()) {
      auto it = b.find(k);
      if (it == b.end()) {
        out.push_back({join_path(path, k), v, std::nullopt});
      } else {
        diff_json(v, *it, join_path(path, k), out);
      }
    }
    for (const auto& [k, v] : b.items()) {
      if (!a.contains(k)) out.push_back({join_path(path, k), std::nullopt, v});
    }
    return;
  }
  if (a.is_array() && b.is_array() && a.size() == b.size()) {
    for (std::size_t i = 0; i < a.size(); ++i) diff_json(a[i], b[i], index_path(path, i), out);
    return;
  }
  out.push_back({path, a, b});
}

ConfigDoc rebuild(const json& j) {
  try {
    return config_from_json(j);
  } catch (const Error& e) {
    throw Error(Errc::ParseError, std::string("change produces an invalid document: ") + e.what());
  }
}

}  // namespace

ChangeSet diff_config(const ConfigDoc& old_doc, const ConfigDoc& new_doc) {
  if (base_name(old_doc.name) != base_name(new_doc.name)) {
    throw Error(Errc::RootMismatch,
                "root names differ: '" + old_doc.name + "' vs '" + new_doc.name + "'");
  }
  auto a = to_json(old_doc);
  auto b = to_json(new_doc);
  a.erase("name");
  b.erase("name");
  ChangeSet out;
  diff_json(a, b, "", out);
  return out;
}

ConfigDoc apply_changes(const ConfigDoc& doc, const ChangeSet& changes) {
  auto j = to_json(doc);
  for (const auto& c : changes) {
    const auto steps = split_path(c.path);
    json* parent = locate(j, steps, steps.size() - 1);
    if (!parent) throw Error(Errc::UnknownPath, "no such path '" + c.path + "'");
    const auto& last = steps.back();
    if (last.is_index()) {
      if (!parent->is_array() || last.index >= parent->size() || !c.new_value) {
        throw Error(Errc::UnknownPath, "no such path '" + c.path + "'");
      }
      (*parent)[last.index] = *c.new_value;
    } else {
      if (!parent->is_object()) throw Error(Errc::UnknownPath, "no such path '" + c.path + "'");
      if (c.new_value) {
        (*parent)[last.key] = *c.new_value;
      } else if (parent->erase(last.key) == 0) {
        throw Error(Errc::UnknownPath, "no such path '" + c.path + "'");
      }
    }
  }
  auto out = rebuild(j);
  out.name = doc.name;
  return out;
}

bool path_exists(const ConfigDoc& doc, std::string_view path) {
  auto j = to_json(doc);
  std::vector<Step> steps;
  try {
    steps = split_path(path);
  } catch (const Error&) {
    return false;
  }
  return locate(j, steps, steps.size()) != nullptr;
}

ConfigDoc apply_overrides(const ConfigDoc& doc, const Overrides& overrides) {
  auto j = to_json(doc);
  for (const auto& [path, value] : overrides) {
    const auto steps = split_path(path);
    json* node = locate(j, steps, steps.size());
    if (!node) throw Error(Errc::UnknownPath, "no such path '" + path + "'");
    *node = value;
  }
  return rebuild(j);
}

ConfigDoc derive_variant(const ConfigDoc& base, const Overrides& overrides, std::string_view tag) {
  auto out = apply_overrides(base, overrides);
  out.name = std::string(base_name(base.name)) + "~" + std::string(tag);
  return out;
}

json to_json(const ChangeSet& changes) {
  json out = json::array();
  for (const auto& c : changes) {
    json e = {{"path", c.path}};
    if (c.old_value) e["old"] = *c.old_value;
    if (c.new_value) e["new"] = *c.new_value;
    out.push_back(std::move(e));
  }
  return out;
}

ChangeSet changeset_from_json(const json& j) {
  if (!j.is_array()) throw Error(Errc::InvalidArgument, "change set must be a list");
  ChangeSet out;
  for (const auto& e : j) {
    if (!e.is_object() || !e.contains("path") || !e["path"].is_string()) {
      throw Error(Errc::InvalidArgument, "change entry needs a string 'path'");
    }
    Change c{e["path"].get<std::string>(), std::nullopt, std::nullopt};
    if (e.contains("old")) c.old_value = e["old"];
    if (e.contains("new")) c.new_value = e["new"];
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace dtaas::config
