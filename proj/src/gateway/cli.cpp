#include "dtaas/gateway/cli.hpp"

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "dtaas/common/error.hpp"
#include "dtaas/gateway/gateway.hpp"
#include "dtaas/incubator/demo.hpp"

namespace dtaas::gateway {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ApiFailure {
  std::string code;
  std::string message;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ApiFailure{std::string(errc_name(Errc::NotFound)), "cannot read " + path};
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Client {
 public:
  Client(std::string addr, std::string token) : token_(std::move(token)) {
    if (addr.rfind("http://", 0) != 0) addr = "http://" + addr;
    client_ = std::make_unique<httplib::Client>(addr);
    client_->set_connection_timeout(5);
    client_->set_read_timeout(600);
  }

  json call(const std::string& method, const std::string& path, const std::optional<json>& body = std::nullopt) {
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
    const auto payload = body ? body->dump() : std::string();
    httplib::Result res;
    if (method == "GET") {
      res = client_->Get(path, headers);
    } else if (method == "POST") {
      res = client_->Post(path, headers, payload, "application/json");
    } else if (method == "PATCH") {
      res = client_->Patch(path, headers, payload, "application/json");
    } else {
      res = client_->Delete(path, headers);
    }
    if (!res) throw ApiFailure{"UNAVAILABLE", "cannot reach the gateway: " + httplib::to_string(res.error())};
    json j = json::parse(res->body, nullptr, false);
    if (res->status >= 400) {
      if (j.is_object() && j.contains("error")) {
        ApiFailure f{j["error"].value("code", "HTTP_" + std::to_string(res->status)), j["error"].value("message", "")};
        if (j.contains("report")) {
          for (const auto& d : j["report"].value("diagnostics", json::array())) {
            f.message += "\n  " + d.value("severity", std::string()) + " " + d.value("rule", std::string()) + " at " +
                         d.value("path", std::string()) + ": " + d.value("message", std::string());
          }
        }
        throw f;
      }
      throw ApiFailure{"HTTP_" + std::to_string(res->status), res->body};
    }
    return j;
  }

 private:
  std::string token_;
  std::unique_ptr<httplib::Client> client_;
};

std::string encode(const std::string& s) { return httplib::detail::encode_url(s); }

std::atomic<HttpServer*> serving{nullptr};

extern "C" void on_signal(int) {
  if (auto* s = serving.load()) s->stop();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const std::map<std::string, std::string>& env) {
  CLI::App app{"Digital twin platform client", "dtaas"};
  app.require_subcommand(1);
  std::string output = "text";
  app.add_option("--output", output, "Output format")->check(CLI::IsMember({"text", "structured"}));
  auto getenv = [&](const char* key, std::string fallback) {
    auto it = env.find(key);
    return it == env.end() || it->second.empty() ? fallback : it->second;
  };
  std::string addr = getenv("DTAAS_ADDR", "127.0.0.1:8080");
  const std::string token = getenv("DTAAS_TOKEN", "");

  // Each leaf fills `action`; it runs once parsing succeeded.
  std::function<int()> action;
  auto structured = [&] { return output == "structured"; };
  auto emit = [&](const json& j, const std::function<void()>& text) {
    if (structured()) {
      out << j.dump(2) << "\n";
    } else {
      text();
    }
  };
  auto client = [&] { return Client(addr, token); };

  // serve
  auto* serve = app.add_subcommand("serve", "Run the platform and its HTTP gateway");
  std::string platform_cfg = "configs/platform.cfg";
  std::string listen;
  serve->add_option("-c,--config", platform_cfg, "Platform config file");
  serve->add_option("--listen", listen, "host:port, overrides the config");
  serve->callback([&] {
    action = [&] {
      auto cfg = load_platform_config(platform_cfg);
      if (!listen.empty()) {
        const auto colon = listen.rfind(':');
        cfg.host = listen.substr(0, colon);
        cfg.port = std::stoi(listen.substr(colon + 1));
      }
      Platform platform(cfg);
      Gateway gateway(platform);
      HttpServer server(gateway);
      serving = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.run(cfg.host, cfg.port);
      serving = nullptr;
      return 0;
    };
  });

  // assets
  auto* assets = app.add_subcommand("assets", "Manage reusable assets");
  assets->require_subcommand(1);
  std::string file, id, kind, text;
  auto* a_add = assets->add_subcommand("add", "Register an asset from a JSON description");
  a_add->add_option("-f,--file", file, "Asset description")->required();
  a_add->callback([&] {
    action = [&] {
      const auto r = client().call("POST", "/assets", json::parse(read_file(file)));
      emit(r, [&] { out << r.at("id").get<std::string>() << "\n"; });
      return 0;
    };
  });
  auto* a_ls = assets->add_subcommand("ls", "List visible assets");
  a_ls->add_option("--kind", kind, "Data, Model, Function, Tool or ReadyDT");
  a_ls->add_option("--text", text, "Substring of name or metadata");
  a_ls->callback([&] {
    action = [&] {
      std::string path = "/assets?";
      if (!kind.empty()) path += "kind=" + encode(kind) + "&";
      if (!text.empty()) path += "text=" + encode(text) + "&";
      const auto r = client().call("GET", path);
      emit(r, [&] {
        for (const auto& a : r.at("assets")) {
          out << a.at("id").get<std::string>() << "\t" << a.at("kind").get<std::string>() << "\t"
              << a.at("name").get<std::string>() << "\t" << a.at("owner").get<std::string>() << "\t"
              << a.at("visibility").get<std::string>() << "\n";
        }
      });
      return 0;
    };
  });
  auto* a_rm = assets->add_subcommand("rm", "Delete an asset");
  a_rm->add_option("id", id)->required();
  a_rm->callback([&] {
    action = [&] {
      const auto r = client().call("DELETE", "/assets/" + encode(id));
      emit(r, [&] { out << "deleted " << id << "\n"; });
      return 0;
    };
  });
  auto* a_share = assets->add_subcommand("share", "Share an asset with every user");
  a_share->add_option("id", id)->required();
  a_share->callback([&] {
    action = [&] {
      const auto r = client().call("POST", "/assets/" + encode(id) + "/share");
      emit(r, [&] { out << id << " shared\n"; });
      return 0;
    };
  });

  // dt
  auto* dt = app.add_subcommand("dt", "Drive DT instances through their lifecycle");
  dt->require_subcommand(1);
  std::string snapshot, event, rule, mode;
  std::vector<std::string> candidates;
  std::int64_t horizon = 0, from = 0, to = 0;
  auto phase_line = [&](const json& v) {
    out << v.at("id").get<std::string>() << "\t" << v.at("phase").get<std::string>() << "\n";
  };
  auto* d_create = dt->add_subcommand("create", "Create an instance from a configuration file");
  d_create->add_option("-f,--file", file, "Configuration document")->required();
  d_create->callback([&] {
    action = [&] {
      const auto r = client().call("POST", "/dts", json{{"config_text", read_file(file)}});
      emit(r, [&] { out << r.at("id").get<std::string>() << "\n"; });
      return 0;
    };
  });
  auto* d_ls = dt->add_subcommand("ls", "List instances");
  d_ls->callback([&] {
    action = [&] {
      const auto r = client().call("GET", "/dts");
      emit(r, [&] {
        for (const auto& v : r.at("dts")) {
          out << v.at("id").get<std::string>() << "\t" << v.at("name").get<std::string>() << "\t"
              << v.at("phase").get<std::string>() << "\t" << v.at("owner").get<std::string>() << "\n";
        }
      });
      return 0;
    };
  });
  for (const char* verb : {"execute", "save", "terminate"}) {
    auto* sub = dt->add_subcommand(verb, std::string(verb) + " an instance");
    sub->add_option("id", id)->required();
    sub->callback([&, verb = std::string(verb)] {
      action = [&, verb] {
        const auto r = client().call("POST", "/dts/" + encode(id) + "/" + verb);
        emit(r, [&] {
          if (verb == "save") {
            out << r.at("snapshot").get<std::string>() << "\n";
          } else {
            phase_line(r);
          }
        });
        return 0;
      };
    });
  }
  auto* d_restore = dt->add_subcommand("restore", "Restore a terminated instance from a snapshot");
  d_restore->add_option("id", id)->required();
  d_restore->add_option("snapshot", snapshot)->required();
  d_restore->callback([&] {
    action = [&] {
      const auto r = client().call("POST", "/dts/" + encode(id) + "/restore", json{{"snapshot", snapshot}});
      emit(r, [&] { phase_line(r); });
      return 0;
    };
  });
  auto* d_evolve = dt->add_subcommand("evolve", "Reconfigure an instance (new config or rule event)");
  d_evolve->add_option("id", id)->required();
  auto* evolve_file = d_evolve->add_option("-f,--file", file, "New configuration document");
  auto* evolve_event = d_evolve->add_option("--event", event, "Event type that fires the instance's rules");
  d_evolve->add_option("--rule", rule, "Fire only this rule");
  evolve_file->excludes(evolve_event);
  d_evolve->callback([&] {
    action = [&] {
      json body;
      if (!event.empty()) {
        body = {{"event", {{"type", event}}}};
        if (!rule.empty()) body["rule"] = rule;
      } else if (!file.empty()) {
        body = {{"config_text", read_file(file)}};
      } else {
        throw ApiFailure{std::string(errc_name(Errc::InvalidArgument)), "evolve needs --file or --event"};
      }
      const auto r = client().call("POST", "/dts/" + encode(id) + "/evolve", body);
      emit(r, [&] {
        out << (r.at("applied").get<bool>() ? "applied" : "not applied") << ", config version "
            << r.at("config_version").get<std::uint64_t>() << "\n";
        for (const auto& c : r.at("changes")) {
          out << "  " << c.at("path").get<std::string>() << ": " << c.value("old", json()).dump() << " -> "
              << c.value("new", json()).dump() << "\n";
        }
      });
      return 0;
    };
  });
  auto* d_analyse = dt->add_subcommand("analyse", "Run the analysis pipeline");
  d_analyse->add_option("id", id)->required();
  d_analyse->add_option("--mode", mode, "auto, live or historical");
  d_analyse->add_option("--from", from, "Range start (ms)");
  d_analyse->add_option("--to", to, "Range end (ms)");
  d_analyse->callback([&] {
    action = [&] {
      std::string path = "/dts/" + encode(id) + "/analysis?";
      if (!mode.empty()) path += "mode=" + encode(mode) + "&";
      if (d_analyse->count("--from")) path += "from=" + std::to_string(from) + "&";
      if (d_analyse->count("--to")) path += "to=" + std::to_string(to) + "&";
      const auto r = client().call("GET", path);
      emit(r, [&] { out << r.dump() << "\n"; });
      return 0;
    };
  });
  auto* d_whatif = dt->add_subcommand("whatif", "Rank controller candidates by simulation");
  d_whatif->add_option("id", id)->required();
  d_whatif->add_option("--candidate", candidates, "setpoint:band (repeatable)")->required();
  d_whatif->add_option("--horizon-ms", horizon, "Simulated horizon");
  d_whatif->callback([&] {
    action = [&] {
      json cands = json::array();
      for (const auto& c : candidates) {
        const auto colon = c.find(':');
        if (colon == std::string::npos) {
          throw ApiFailure{std::string(errc_name(Errc::InvalidArgument)), "candidate '" + c + "' is not setpoint:band"};
        }
        cands.push_back({{"setpoint", std::stod(c.substr(0, colon))}, {"band", std::stod(c.substr(colon + 1))}});
      }
      json body = {{"candidates", cands}};
      if (horizon > 0) body["horizon_ms"] = horizon;
      const auto r = client().call("POST", "/dts/" + encode(id) + "/whatif", body);
      emit(r, [&] {
        for (const auto& c : r.at("ranked")) {
          out << c.at("rank").get<int>() << "\tsetpoint=" << c.at("params").at("setpoint").get<double>()
              << "\tband=" << c.at("params").at("band").get<double>() << "\tmse=" << c.at("score").get<double>()
              << "\n";
        }
      });
      return 0;
    };
  });

  // data
  auto* data = app.add_subcommand("data", "Read time series");
  data->require_subcommand(1);
  std::string key;
  std::size_t tail_n = 10;
  auto* q = data->add_subcommand("query", "Points of a series in a time range");
  q->add_option("key", key)->required();
  q->add_option("--from", from, "Range start (ms)");
  q->add_option("--to", to, "Range end (ms)");
  auto print_points = [&](const json& pts) {
    for (const auto& p : pts) out << p.at("ts").get<std::int64_t>() << "\t" << p.at("value").get<double>() << "\n";
  };
  q->callback([&] {
    action = [&] {
      std::string path = "/data/series/" + encode(key) + "?";
      if (q->count("--from")) path += "from=" + std::to_string(from) + "&";
      if (q->count("--to")) path += "to=" + std::to_string(to) + "&";
      const auto r = client().call("GET", path);
      emit(r, [&] { print_points(r.at("points")); });
      return 0;
    };
  });
  auto* tail = data->add_subcommand("tail", "Last points of a series");
  tail->add_option("key", key)->required();
  tail->add_option("-n", tail_n, "Number of points");
  tail->callback([&] {
    action = [&] {
      auto r = client().call("GET", "/data/series/" + encode(key));
      auto& pts = r.at("points");
      if (pts.size() > tail_n) pts.erase(pts.begin(), pts.end() - static_cast<std::ptrdiff_t>(tail_n));
      emit(r, [&] { print_points(pts); });
      return 0;
    };
  });

  // demo
  auto* demo = app.add_subcommand("demo", "Built-in demonstrations");
  demo->require_subcommand(1);
  auto* inc = demo->add_subcommand("incubator", "Run the incubator closed loop in-process");
  std::uint64_t ticks = 2000, seed = 42;
  std::int64_t lid_open = -1;
  std::string dir;
  inc->add_option("--ticks", ticks, "Ticks of 100 ms to simulate");
  inc->add_option("--seed", seed, "Emulator noise seed");
  inc->add_option("--lid-open-at-ms", lid_open, "Open the lid at this offset");
  inc->add_option("--dir", dir, "Keep platform state here instead of a temporary directory");
  inc->callback([&] {
    action = [&] {
      const bool temp = dir.empty();
      const fs::path root =
          temp ? fs::temp_directory_path() / ("dtaas-demo-" + std::to_string(::getpid())) : fs::path(dir);
      incubator::ScenarioReport report;
      {
        incubator::IncubatorStack stack(root, seed);
        incubator::ScenarioOptions o;
        o.ticks = ticks;
        if (lid_open >= 0) o.lid_open_at_ms = lid_open;
        report = stack.run(o);
      }
      if (temp) fs::remove_all(root);
      const auto j = incubator::to_json(report);
      emit(j, [&] {
        out << "incubator closed loop: " << report.ticks << " ticks (" << report.ticks / 10 << " s simulated)\n"
            << "  instance        " << report.instance.str() << "\n"
            << "  T_box           " << report.t_box << " degC\n"
            << "  G_hat           " << (report.g_hat ? std::to_string(*report.g_hat) : "n/a") << " W/degC\n"
            << "  controller      setpoint " << report.controller.setpoint << ", band " << report.controller.band << "\n"
            << "  max deviation   " << report.max_deviation << " degC (before any lid event)\n"
            << "  anomaly events  " << report.anomaly_events << "\n";
        if (report.lid_open_at_ms) {
          auto show = [](const std::optional<std::int64_t>& v) { return v ? std::to_string(*v) + " ms" : "-"; };
          out << "  lid opened      " << show(report.lid_open_at_ms) << "\n"
              << "  detected        " << show(report.detected_at_ms) << "\n"
              << "  rule applied    " << show(report.rule_applied_at_ms) << "\n"
              << "  re-planned      " << show(report.replanned_at_ms) << "\n"
              << "  back in band    " << show(report.reentered_at_ms) << "\n";
        }
      });
      return 0;
    };
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  if (!action) return 2;
  try {
    return action();
  } catch (const ApiFailure& f) {
    err << f.code << ": " << f.message << "\n";
  } catch (const Error& e) {
    err << errc_name(e.code()) << ": " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "INTERNAL: " << e.what() << "\n";
  }
  return 1;
}

}  // namespace dtaas::gateway
