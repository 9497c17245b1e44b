#include "ptd/eval_server.hpp"

#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ptd/errors.hpp"

namespace ptd {

using nlohmann::json;

namespace {

json progress_json(const Progress& p) { return {{"position", p.position}, {"total", p.total}}; }

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const json::exception& e) {
      reply(res, 400, {{"error", std::string("bad request body: ") + e.what()}});
    } catch (const ValidationError& e) {
      reply(res, 400, {{"error", e.what()}});
    } catch (const ArgumentError& e) {
      reply(res, 409, {{"error", e.what()}});
    } catch (const AuthorizationError& e) {
      reply(res, 403, {{"error", e.what()}});
    } catch (const LookupError& e) {
      reply(res, 404, {{"error", e.what()}});
    } catch (const std::exception& e) {
      reply(res, 500, {{"error", e.what()}});
    }
  };
}

std::vector<double> parse_quantiles(const std::string& text) {
  std::vector<double> qs;
  std::stringstream in(text);
  for (std::string part; std::getline(in, part, ',');) {
    try {
      std::size_t used = 0;
      qs.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::logic_error&) {
      throw ValidationError("bad quantile '" + part + "'");
    }
  }
  return qs;
}

}  // namespace

struct EvalServer::Impl {
  Impl(EvalService& s, Options o) : service(s), options(std::move(o)) {}
  EvalService& service;
  Options options;
  httplib::Server server;
};

EvalServer::EvalServer(EvalService& service, Options options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {
  auto& svc = impl_->service;
  auto& srv = impl_->server;
  const Options& opts = impl_->options;

  srv.Post("/api/sessions", guarded([&svc, &opts](const httplib::Request& req, httplib::Response& res) {
             if (!opts.admin_token.empty() && req.get_header_value("X-Admin-Token") != opts.admin_token) {
               throw AuthorizationError("admin token required");
             }
             const json body = json::parse(req.body);
             const auto sessions = svc.create(body.at("n_participants").get<std::size_t>(),
                                              body.at("images_per").get<std::size_t>(),
                                              body.value("seed", std::uint64_t{0}));
             json out = json::array();
             for (const auto& s : sessions) {
               out.push_back({{"session_id", s.session_id},
                              {"participant", s.participant},
                              {"n_images", s.image_ids.size()}});
             }
             reply(res, 201, {{"sessions", out}});
           }));

  srv.Get("/api/sessions", guarded([&svc](const httplib::Request&, httplib::Response& res) {
            json out = json::array();
            for (const auto& s : svc.sessions()) {
              out.push_back({{"session_id", s.session_id},
                             {"participant", s.participant},
                             {"progress", progress_json({s.cursor + 1, s.image_ids.size()})}});
            }
            reply(res, 200, {{"sessions", out}});
          }));

  srv.Get(R"(/api/session/([^/]+)/next)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            const NextImage n = svc.next(req.matches[1]);
            json out = {{"complete", n.complete}, {"progress", progress_json(n.progress)}};
            if (!n.complete) {
              out["image_id"] = n.image_id;
              out["image_url"] = n.image_url;
              out["descriptor"] = n.descriptor;
            }
            reply(res, 200, out);
          }));

  srv.Post(R"(/api/session/([^/]+)/rating)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             const json body = json::parse(req.body);
             std::optional<std::string> comment;
             if (body.contains("comment") && !body["comment"].is_null()) {
               comment = body["comment"].get<std::string>();
             }
             const auto ack = svc.submit(req.matches[1], body.at("image_id").get<ImageId>(),
                                         body.at("quality").get<int>(), body.at("representativeness").get<int>(),
                                         std::move(comment));
             reply(res, 200, {{"ok", true}, {"replaced", ack.replaced}, {"progress", progress_json(ack.progress)}});
           }));

  srv.Get("/api/report/stages", guarded([&svc](const httplib::Request&, httplib::Response& res) {
            reply(res, 200, json::parse(stage_table_json(svc.stage_report())));
          }));

  srv.Get("/api/report/curve", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            std::vector<double> qs;
            if (req.has_param("q")) {
              qs = parse_quantiles(req.get_param_value("q"));
            } else {
              for (int i = 1; i <= 10; ++i) qs.push_back(i / 10.0);
            }
            const Curve c = svc.curve(qs);
            json points = json::array();
            for (const auto& p : c.points) {
              points.push_back({{"q", p.q},
                                {"threshold", p.threshold},
                                {"n", p.n},
                                {"mean_representativeness", p.mean_representativeness}});
            }
            reply(res, 200, {{"points", points}, {"empty_quantiles", c.empty_quantiles}});
          }));

  if (!opts.image_root.empty()) srv.set_mount_point("/images", opts.image_root.string());
  if (!opts.static_dir.empty()) srv.set_mount_point("/", opts.static_dir.string());
}

EvalServer::~EvalServer() { stop(); }

int EvalServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw IoError("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void EvalServer::serve() { impl_->server.listen_after_bind(); }

void EvalServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace ptd
