#include "csd/service_http.hpp"

#include "csd/errors.hpp"

namespace csd {

void bind_routes(httplib::Server& server, Service& service) {
  auto dispatch = [&service](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    auto reply = service.handle(req.method, req.path, query, req.body);
    res.status = reply.status;
    res.set_content(reply.body.dump(), "application/json");
  };
  server.Get(".*", dispatch);
  server.Post(".*", dispatch);
}

void serve(Service& service, const std::string& host, int port) {
  httplib::Server server;
  bind_routes(server, service);
  if (!server.listen(host, port)) {
    throw TransportError("cannot listen on " + host + ":" + std::to_string(port), std::nullopt, false);
  }
}

}  // namespace csd
